"""Run configuration and every file format the pipeline reads or writes.

Lengths are meters in all files.  Trajectory CSVs may alternatively declare
centimeters in their header (``t_s,x_cm,y_cm,z_cm``); they are converted on read.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design_space import (HEATMAP_COL_SITES, HEATMAP_ROW_SITES, HEATMAP_SIZE, N_DESIGNS,
                           format_genome, genome_from_index, heatmap_cell, parse_genome,
                           GenomeParseError)
from .evaluation import EvalResult, SweepResult
from .physics import MaterialParams, ParamError, SimParams, Trajectory

TRAJECTORY_HEADER = "t_s,x_m,y_m,z_m"
TRAJECTORY_HEADER_CM = "t_s,x_cm,y_cm,z_cm"
RESULTS_HEADER = "genome_index,genome,fitness_m,final_x_m,final_y_m,heading_rad,aborted"
MANIFEST_META_PREFIX = "run."


def fmt(x: float) -> str:
    """Round-trip float formatting (17 significant digits)."""
    return format(float(x), ".17g")


class FileFormatError(ValueError):
    def __init__(self, path, line: int | None, msg: str):
        self.path = str(path)
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {msg}")


class ConfigError(ValueError):
    def __init__(self, key: str | None, msg: str, line: int | None = None):
        self.key = key
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{key}: {msg}" if key else f"{prefix}{msg}")


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class RunConfig:
    sim: SimParams = field(default_factory=SimParams)
    material: MaterialParams = field(default_factory=MaterialParams)
    workers: int = 1
    batch: int = 50
    output_dir: str = "out"
    highres: bool = False

    @property
    def sample_stride(self) -> int:
        return self.sim.sample_stride

    def as_items(self) -> list[tuple[str, object]]:
        items = list(dataclasses.asdict(self.sim).items())
        items += list(dataclasses.asdict(self.material).items())
        items += [("workers", self.workers), ("batch", self.batch),
                  ("output_dir", self.output_dir), ("highres", self.highres)]
        return items

    def to_text(self) -> str:
        return "".join(f"{k} = {_format_value(v)}\n" for k, v in self.as_items())


_SIM_FIELDS = {f.name: f for f in dataclasses.fields(SimParams)}
_MAT_FIELDS = {f.name: f for f in dataclasses.fields(MaterialParams)}
_RUN_FIELDS = {"workers": int, "batch": int, "output_dir": str, "highres": bool}


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def _field_type(key: str):
    if key in _RUN_FIELDS:
        return _RUN_FIELDS[key]
    f = _SIM_FIELDS.get(key) or _MAT_FIELDS[key]
    return {"int": int, "float": float, "float | None": "optional-float"}[f.type]


def _parse_value(key: str, text: str, line: int | None):
    kind = _field_type(key)
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if kind == "optional-float":
            return None if text.lower() == "none" else float(text)
        if kind is int:
            return int(text)
        if kind is float:
            v = float(text)
            if not math.isfinite(v):
                raise ValueError(text)
            return v
        return text
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {getattr(kind, '__name__', 'number')}", line) from None


def config_from_items(items: dict[str, object], lines: dict[str, int] | None = None,
                      base: RunConfig | None = None) -> RunConfig:
    """Overlay ``items`` (already-typed values) on ``base`` and validate."""
    base = base or RunConfig()
    lines = lines or {}
    sim = {k: v for k, v in items.items() if k in _SIM_FIELDS}
    mat = {k: v for k, v in items.items() if k in _MAT_FIELDS}
    run = {k: v for k, v in items.items() if k in _RUN_FIELDS}
    try:
        sp = base.sim.replace(**sim)
        mp = base.material.replace(**mat)
    except ParamError as exc:
        raise ConfigError(exc.key, exc.constraint, lines.get(exc.key)) from None
    cfg = dataclasses.replace(base, sim=sp, material=mp, **run)
    if cfg.workers < 1:
        raise ConfigError("workers", "must be >= 1", lines.get("workers"))
    if cfg.batch < 1:
        raise ConfigError("batch", "must be >= 1", lines.get("batch"))
    return cfg


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse flat ``key = value`` lines; ``#`` comments and ``run.*`` manifest metadata are ignored."""
    items, lines = {}, {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(None, f"expected 'key = value', got {raw.strip()!r}", n)
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith(MANIFEST_META_PREFIX):
            continue
        if key not in _SIM_FIELDS and key not in _MAT_FIELDS and key not in _RUN_FIELDS:
            raise ConfigError(key, f"unknown key in {raw.strip()!r}", n)
        if key in items:
            raise ConfigError(key, "duplicate key", n)
        items[key] = _parse_value(key, value, n)
        lines[key] = n
    return config_from_items(items, lines, base)


def load_config(path: str | os.PathLike | None = None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config_text(Path(path).read_text())


def parse_override(assignment: str) -> tuple[str, object]:
    if "=" not in assignment:
        raise ConfigError(None, f"override {assignment!r} is not KEY=VALUE")
    key, value = (s.strip() for s in assignment.split("=", 1))
    if key not in _SIM_FIELDS and key not in _MAT_FIELDS and key not in _RUN_FIELDS:
        raise ConfigError(key, "unknown key")
    return key, _parse_value(key, value, None)


# ---------------------------------------------------------------- trajectories

def write_trajectory_csv(path, traj: Trajectory) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for t, (x, y, z) in zip(traj.t, traj.com):
            fh.write(f"{fmt(t)},{fmt(x)},{fmt(y)},{fmt(z)}\n")


def read_trajectory_csv(path) -> Trajectory:
    """Read a trajectory; units come from the header, centimeters are converted to meters."""
    with open(path) as fh:
        rows = fh.read().splitlines()
    if not rows:
        raise FileFormatError(path, 1, "empty file")
    header = rows[0].strip().replace(" ", "")
    if header == TRAJECTORY_HEADER:
        scale = 1.0
    elif header == TRAJECTORY_HEADER_CM:
        scale = 0.01
    else:
        raise FileFormatError(path, 1, f"header must be {TRAJECTORY_HEADER!r} or {TRAJECTORY_HEADER_CM!r}")
    ts, com = [], []
    for n, row in enumerate(rows[1:], start=2):
        if not row.strip():
            continue
        parts = row.split(",")
        if len(parts) != 4:
            raise FileFormatError(path, n, f"expected 4 fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise FileFormatError(path, n, f"non-numeric field in {row!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise FileFormatError(path, n, "non-finite value")
        if ts and vals[0] <= ts[-1]:
            raise FileFormatError(path, n, "time not strictly increasing")
        ts.append(vals[0])
        com.append([v * scale for v in vals[1:]])
    if not ts:
        raise FileFormatError(path, None, "no samples")
    return Trajectory(np.array(ts), np.array(com))


# ---------------------------------------------------------------- sweep results

def write_results_csv(path, sweep: SweepResult) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for r in sweep.results:
            fh.write(",".join([
                str(r.genome_index), format_genome(genome_from_index(r.genome_index)),
                fmt(r.fitness), fmt(r.final_xy[0]), fmt(r.final_xy[1]), fmt(r.heading),
                "1" if r.aborted else "0",
            ]) + "\n")


def read_results_csv(path, fingerprint: str = "") -> SweepResult:
    with open(path) as fh:
        rows = fh.read().splitlines()
    if not rows or rows[0].strip() != RESULTS_HEADER:
        raise FileFormatError(path, 1, f"header must be {RESULTS_HEADER!r}")
    seen: dict[int, EvalResult] = {}
    for n, row in enumerate(rows[1:], start=2):
        if not row.strip():
            continue
        parts = row.split(",")
        if len(parts) != 7:
            raise FileFormatError(path, n, f"expected 7 fields, got {len(parts)}")
        try:
            idx = int(parts[0])
            g = parse_genome(parts[1])
            fit, fx, fy, hd = (float(p) for p in parts[2:6])
            aborted = {"0": False, "1": True}[parts[6].strip()]
        except (ValueError, KeyError, GenomeParseError) as exc:
            raise FileFormatError(path, n, f"bad field: {exc}") from None
        if not 0 <= idx < N_DESIGNS:
            raise FileFormatError(path, n, f"genome index {idx} out of range")
        if g.index != idx:
            raise FileFormatError(path, n, f"genome {parts[1]} does not have index {idx}")
        if idx in seen:
            raise FileFormatError(path, n, f"duplicate genome index {idx}")
        seen[idx] = EvalResult(idx, fit, (fx, fy), hd, aborted)
    if len(seen) != N_DESIGNS:
        raise FileFormatError(path, None, f"expected {N_DESIGNS} result rows, got {len(seen)}")
    return SweepResult([seen[i] for i in range(N_DESIGNS)], fingerprint)


# ---------------------------------------------------------------- heatmap

def heatmap_matrix(fitness: np.ndarray) -> np.ndarray:
    """81x81 array indexed ``[row, col]``; row 0 is the bottom of the plot."""
    fitness = np.asarray(fitness, dtype=float)
    if fitness.shape != (N_DESIGNS,):
        raise ValueError(f"need {N_DESIGNS} fitness values")
    grid = np.full((HEATMAP_SIZE, HEATMAP_SIZE), np.nan)
    for i in range(N_DESIGNS):
        r, c = heatmap_cell(genome_from_index(i))
        grid[r, c] = fitness[i]
    return grid


def gray_levels(grid: np.ndarray) -> np.ndarray:
    """8-bit levels ``round(255 * f / max f)``; an all-zero map stays zero."""
    top = float(np.max(grid))
    if top <= 0:
        return np.zeros(grid.shape, dtype=np.int64)
    return np.floor(255.0 * grid / top + 0.5).astype(np.int64)


def write_heatmap_csv(path, grid: np.ndarray) -> None:
    """One line per heatmap row, top (row 80) first, so the text reads like the image."""
    with open(path, "w", newline="\n") as fh:
        for r in range(grid.shape[0] - 1, -1, -1):
            fh.write(",".join(fmt(v) for v in grid[r]) + "\n")


def read_heatmap_csv(path) -> np.ndarray:
    rows = [line.split(",") for line in Path(path).read_text().splitlines() if line.strip()]
    return np.array(rows, dtype=float)[::-1]


def write_pgm(path, grid: np.ndarray) -> None:
    """Plain-text (P2) 8-bit graymap, top row first."""
    levels = gray_levels(grid)
    h, w = levels.shape
    with open(path, "w", newline="\n") as fh:
        fh.write(f"P2\n# rows: sites {HEATMAP_ROW_SITES}, cols: sites {HEATMAP_COL_SITES}, "
                 "innermost first\n")
        fh.write(f"{w} {h}\n255\n")
        for r in range(h - 1, -1, -1):
            fh.write(" ".join(str(v) for v in levels[r]) + "\n")


def read_pgm(path) -> np.ndarray:
    """Pixel values with image row 0 at the top, as stored."""
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens += line.split("#", 1)[0].split()
    if not tokens or tokens[0] != "P2":
        raise FileFormatError(path, 1, "not a plain P2 graymap")
    w, h, _maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    return np.array(tokens[4:4 + w * h], dtype=np.int64).reshape(h, w)


# ---------------------------------------------------------------- manifest

def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, cfg: RunConfig, meta: dict[str, object]) -> None:
    """Config echo followed by ``run.*`` metadata; the file loads back as a config."""
    with open(path, "w", newline="\n") as fh:
        fh.write(cfg.to_text())
        for k, v in meta.items():
            fh.write(f"{MANIFEST_META_PREFIX}{k} = {_format_value(v)}\n")


def read_manifest_meta(path) -> dict[str, str]:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith(MANIFEST_META_PREFIX) and "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()[len(MANIFEST_META_PREFIX):]] = v.strip()
    return meta
