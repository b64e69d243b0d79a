"""Ternary 2x2x2 voxel design space: encoding, enumeration, symmetry and heatmap layout.

Site index convention: ``i = x + 2*y + 4*z`` (x varies fastest).  A genome string
has one character per site, character ``k`` holding the base-3 digit of site ``k``
(0 = empty, 1 = passive, 2 = active).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, NamedTuple

N_SITES = 8
N_DESIGNS = 3**N_SITES  # 6561
HEATMAP_SIZE = 3 ** (N_SITES // 2)  # 81

# (row, col) genome sites, innermost nesting level first.
HEATMAP_ROW_SITES = (0, 2, 4, 6)
HEATMAP_COL_SITES = (1, 3, 5, 7)


class VoxelKind(enum.IntEnum):
    EMPTY = 0
    PASSIVE = 1
    ACTIVE = 2


class LatticeCoord(NamedTuple):
    x: int
    y: int
    z: int

    @property
    def index(self) -> int:
        return self.x + 2 * self.y + 4 * self.z

    @classmethod
    def from_index(cls, i: int) -> "LatticeCoord":
        if not 0 <= i < N_SITES:
            raise ValueError(f"site index {i} outside [0, {N_SITES - 1}]")
        return cls(i & 1, (i >> 1) & 1, (i >> 2) & 1)


COORDS = tuple(LatticeCoord.from_index(i) for i in range(N_SITES))


class GenomeParseError(ValueError):
    def __init__(self, text: str, position: int | None, reason: str):
        self.text = text
        self.position = position
        where = "" if position is None else f" at position {position}"
        super().__init__(f"invalid genome {text!r}{where}: {reason}")


@dataclass(frozen=True)
class DesignGenome:
    sites: tuple[VoxelKind, ...]

    def __post_init__(self):
        if len(self.sites) != N_SITES:
            raise ValueError(f"genome needs {N_SITES} sites, got {len(self.sites)}")
        object.__setattr__(self, "sites", tuple(VoxelKind(s) for s in self.sites))

    def __str__(self) -> str:
        return format_genome(self)

    def __getitem__(self, i: int) -> VoxelKind:
        return self.sites[i]

    def kind_at(self, coord: LatticeCoord) -> VoxelKind:
        return self.sites[coord.index]

    @property
    def index(self) -> int:
        return index_from_genome(self)

    @property
    def n_voxels(self) -> int:
        return sum(1 for s in self.sites if s != VoxelKind.EMPTY)

    @classmethod
    def uniform(cls, kind: VoxelKind) -> "DesignGenome":
        return cls((kind,) * N_SITES)


def genome_from_index(index: int) -> DesignGenome:
    if not 0 <= index < N_DESIGNS:
        raise ValueError(f"genome index {index} outside [0, {N_DESIGNS - 1}]")
    digits = []
    for _ in range(N_SITES):
        index, d = divmod(index, 3)
        digits.append(VoxelKind(d))
    return DesignGenome(tuple(digits))


def index_from_genome(g: DesignGenome) -> int:
    return sum(int(d) * 3**i for i, d in enumerate(g.sites))


def parse_genome(text: str) -> DesignGenome:
    if len(text) != N_SITES:
        raise GenomeParseError(text, None, f"expected {N_SITES} characters, got {len(text)}")
    for pos, ch in enumerate(text):
        if ch not in "012":
            raise GenomeParseError(text, pos, f"character {ch!r} not in {{0,1,2}}")
    return DesignGenome(tuple(VoxelKind(int(ch)) for ch in text))


def format_genome(g: DesignGenome) -> str:
    return "".join(str(int(d)) for d in g.sites)


def enumerate_designs() -> Iterator[DesignGenome]:
    for k in range(N_DESIGNS):
        yield genome_from_index(k)


def _remap(g: DesignGenome, coord_map) -> DesignGenome:
    out = [VoxelKind.EMPTY] * N_SITES
    for c in COORDS:
        out[LatticeCoord(*coord_map(c)).index] = g.sites[c.index]
    return DesignGenome(tuple(out))


def rotate_z(g: DesignGenome) -> DesignGenome:
    """Rotate the workspace 90 degrees about the vertical axis: (x, y, z) -> (1-y, x, z)."""
    return _remap(g, lambda c: (1 - c.y, c.x, c.z))


def reflect_x(g: DesignGenome) -> DesignGenome:
    """Mirror across the vertical mid-plane normal to x."""
    return _remap(g, lambda c: (1 - c.x, c.y, c.z))


def horizontal_symmetries(g: DesignGenome) -> list[DesignGenome]:
    """Images of ``g`` under the 8 elements of the horizontal dihedral group."""
    images = []
    for base in (g, reflect_x(g)):
        cur = base
        for _ in range(4):
            images.append(cur)
            cur = rotate_z(cur)
    return images


def symmetry_orbit(g: DesignGenome) -> frozenset[DesignGenome]:
    return frozenset(horizontal_symmetries(g))


class HeatmapCell(NamedTuple):
    row: int
    col: int


def heatmap_cell(g: DesignGenome) -> HeatmapCell:
    row = sum(int(g.sites[s]) * 3**i for i, s in enumerate(HEATMAP_ROW_SITES))
    col = sum(int(g.sites[s]) * 3**i for i, s in enumerate(HEATMAP_COL_SITES))
    return HeatmapCell(row, col)


def genome_at_cell(cell: HeatmapCell) -> DesignGenome:
    row, col = cell
    if not (0 <= row < HEATMAP_SIZE and 0 <= col < HEATMAP_SIZE):
        raise ValueError(f"cell {cell} outside the {HEATMAP_SIZE}x{HEATMAP_SIZE} grid")
    digits = [VoxelKind.EMPTY] * N_SITES
    for s in HEATMAP_ROW_SITES:
        row, d = divmod(row, 3)
        digits[s] = VoxelKind(d)
    for s in HEATMAP_COL_SITES:
        col, d = divmod(col, 3)
        digits[s] = VoxelKind(d)
    return DesignGenome(tuple(digits))
