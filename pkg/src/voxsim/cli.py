"""Command-line entry points: simulate, refine, sweep, heatmap, compare, sweep-friction."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .design_space import GenomeParseError, N_DESIGNS, format_genome, parse_genome
from .evaluation import exhaustive_sweep, fitness, friction_grid_search, heading, reality_gap
from .physics import SimulationUnstable, Trajectory, simulate

log = logging.getLogger("voxsim")


class CLIError(Exception):
    pass


def _config(args) -> io.RunConfig:
    cfg = io.load_config(args.config)
    items = dict(io.parse_override(a) for a in args.set or [])
    for name in ("workers", "batch", "output_dir"):
        v = getattr(args, name, None)
        if v is not None:
            items[name] = v
    if getattr(args, "highres", False):
        items["highres"] = True
    cfg = io.config_from_items(items, base=cfg)
    if getattr(args, "actuation_cycles", None) is not None:
        cfg = dataclasses.replace(cfg, sim=cfg.sim.with_actuation_cycles(args.actuation_cycles))
    return cfg


def _summary(g, traj: Trajectory | None, aborted: bool) -> str:
    if aborted or traj is None:
        return f"genome={format_genome(g)} fitness_m=0 fitness_cm=0 heading_deg=nan aborted=1"
    f = fitness(traj)
    h = heading(traj)
    hd = "nan" if math.isnan(h) else f"{math.degrees(h):.3f}"
    return (f"genome={format_genome(g)} fitness_m={f:.9g} fitness_cm={100 * f:.6g} "
            f"heading_deg={hd} aborted=0")


def cmd_simulate(args) -> int:
    cfg = _config(args)
    g = parse_genome(args.genome)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / f"trajectory_{format_genome(g)}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        traj = simulate(g, cfg.sim, cfg.material, highres=cfg.highres)
    except SimulationUnstable as exc:
        print(_summary(g, None, True))
        print(f"unstable at step {exc.step}", file=sys.stderr)
        return 3
    io.write_trajectory_csv(out, traj)
    print(_summary(g, traj, False))
    return 0


def cmd_refine(args) -> int:
    args.highres = True
    return cmd_simulate(args)


def _emit_heatmap(out_dir: Path, fit: np.ndarray) -> None:
    grid = io.heatmap_matrix(fit)
    io.write_heatmap_csv(out_dir / "heatmap.csv", grid)
    io.write_pgm(out_dir / "heatmap.pgm", grid)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    sweep = exhaustive_sweep(cfg.sim, cfg.material, workers=cfg.workers, batch=cfg.batch,
                             highres=cfg.highres)
    wall = time.perf_counter() - t0
    io.write_results_csv(out / "results.csv", sweep)
    _emit_heatmap(out, sweep.fitness_array())
    subs = sweep.stats.get("substeps", {})
    io.write_manifest(out / "manifest.txt", cfg, {
        "command": "sweep",
        "config_digest": hashlib.sha256(cfg.to_text().encode()).hexdigest(),
        "params_fingerprint": sweep.params_fingerprint,
        "designs": len(sweep),
        "abort_count": sweep.abort_count,
        "substeps": " ".join(f"{k}:{v}" for k, v in subs.items()),
        "results_digest": io.file_digest(out / "results.csv"),
        "wall_time_s": f"{wall:.3f}",
    })
    best = max(sweep.results, key=lambda r: (r.fitness, -r.genome_index))
    print(f"designs={len(sweep)} aborted={sweep.abort_count} best={format_genome(best.genome)} "
          f"best_fitness_m={best.fitness:.9g} wall_s={wall:.1f}")
    return 0


def cmd_heatmap(args) -> int:
    sweep = io.read_results_csv(args.results)
    out = Path(args.out or Path(args.results).parent)
    out.mkdir(parents=True, exist_ok=True)
    _emit_heatmap(out, sweep.fitness_array())
    print(f"heatmap written to {out / 'heatmap.csv'} and {out / 'heatmap.pgm'}")
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    g = parse_genome(args.genome)
    real = io.read_trajectory_csv(args.real)
    try:
        sim = simulate(g, cfg.sim, cfg.material, highres=cfg.highres)
    except SimulationUnstable as exc:
        raise CLIError(f"simulation unstable at step {exc.step}") from None
    gap = reality_gap(sim, real)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_trajectory_csv(out / f"compare_{format_genome(g)}_sim.csv", sim.origin_aligned())
    io.write_trajectory_csv(out / f"compare_{format_genome(g)}_real.csv", real.origin_aligned())
    hg = "nan" if math.isnan(gap.heading_gap) else f"{math.degrees(gap.heading_gap):.6f}"
    ratio = "nan" if gap.flagged else f"{gap.displacement_ratio:.9g}"
    print(f"genome={format_genome(g)} displacement_ratio={ratio} heading_gap_deg={hg} "
          f"final_position_error_cm={100 * gap.final_position_error:.6g}")
    return 0


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from None


def _read_lines(path) -> list[str]:
    return [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()
            if ln.split("#", 1)[0].strip()]


def cmd_sweep_friction(args) -> int:
    cfg = _config(args)
    genomes = [parse_genome(s) for s in _read_lines(args.genomes)]
    try:
        headings = [float(s) for s in _read_lines(args.headings)]
    except ValueError as exc:
        raise CLIError(f"{args.headings}: {exc}") from None
    if len(genomes) != len(headings):
        raise CLIError(f"{len(genomes)} genomes but {len(headings)} headings")
    search = friction_grid_search(genomes, headings, args.mu_s, args.mu_k, cfg.sim, cfg.material,
                                  highres=cfg.highres)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / "friction_grid.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n") as fh:
        fh.write("static_friction,kinetic_friction,match_count,mean_heading_gap_rad,skipped\n")
        for c in search.cells:
            fh.write(f"{io.fmt(c.static_friction)},{io.fmt(c.kinetic_friction)},{c.match_count},"
                     f"{io.fmt(c.mean_heading_gap)},{int(c.skipped)}\n")
    b = search.best
    if b is None:
        print(f"cells={len(search.cells)} best=none (every cell skipped)")
    else:
        print(f"cells={len(search.cells)} best_static_friction={b.static_friction:g} "
              f"best_kinetic_friction={b.kinetic_friction:g} best_match_count={b.match_count}/"
              f"{len(genomes)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, workers=False):
        sp.add_argument("--config", help="flat key = value configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--output-dir", dest="output_dir")
        sp.add_argument("--actuation-cycles", type=float,
                        help="keep the settle phase, then simulate this many actuation cycles")
        if workers:
            sp.add_argument("--workers", type=int)
            sp.add_argument("--batch", type=int)

    s = sub.add_parser("simulate", help="simulate one genome and write its trajectory")
    s.add_argument("genome")
    s.add_argument("--out")
    s.add_argument("--highres", action="store_true")
    common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("refine", help="simulate one genome at 3x3x3 subvoxel resolution")
    s.add_argument("genome")
    s.add_argument("--out")
    common(s)
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("sweep", help=f"evaluate all {N_DESIGNS} designs")
    s.add_argument("--highres", action="store_true")
    common(s, workers=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("heatmap", help="rebuild heatmap files from a results CSV")
    s.add_argument("results")
    s.add_argument("--out")
    s.set_defaults(func=cmd_heatmap)

    s = sub.add_parser("compare", help="sim-to-real gap against a recorded trajectory CSV")
    s.add_argument("genome")
    s.add_argument("real")
    s.add_argument("--highres", action="store_true")
    common(s)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep-friction", help="grid-search friction coefficients against headings")
    s.add_argument("genomes", help="file with one genome string per line")
    s.add_argument("headings", help="file with one reference heading (radians) per line")
    s.add_argument("--mu-s", type=_float_list, required=True)
    s.add_argument("--mu-k", type=_float_list, required=True)
    s.add_argument("--out")
    s.add_argument("--highres", action="store_true")
    common(s)
    s.set_defaults(func=cmd_sweep_friction)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (GenomeParseError, io.ConfigError, io.FileFormatError, CLIError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
