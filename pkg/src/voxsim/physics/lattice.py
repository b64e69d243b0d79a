"""Node/beam lattices for a genome, at voxel or subvoxel resolution."""

from __future__ import annotations

import functools
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..design_space import COORDS, DesignGenome, VoxelKind
from . import _kernel as K
from .params import MaterialParams, SimParams

log = logging.getLogger(__name__)

SUBDIV = 3  # subvoxels per voxel edge in high-resolution mode
_AXES = np.eye(3, dtype=np.int64)


def beam_constants(mp: MaterialParams, length: float) -> np.ndarray:
    """Stiffness row ``[EA/L, GJ/L, 12EI/L^3, 6EI/L^2, 2EI/L]`` for a square section of side ``length``."""
    E = mp.youngs_modulus
    A = length**2
    I = length**4 / 12.0
    J = length**4 / 6.0
    out = np.empty(5)
    out[K.K_AXIAL] = E * A / length
    out[K.K_TORSION] = mp.shear_modulus * J / length
    out[K.K_SHEAR] = 12.0 * E * I / length**3
    out[K.K_COUPLE] = 6.0 * E * I / length**2
    out[K.K_BEND] = 2.0 * E * I / length
    return out


def damping_constants(stiff: np.ndarray, zeta: float, m_a: float, m_b: float,
                      i_a: float, i_b: float) -> np.ndarray:
    """Per-mode coefficients ``2*zeta*sqrt(k*mu)`` using the pair's reduced mass / inertia."""
    mu = m_a * m_b / (m_a + m_b)
    mu_i = i_a * i_b / (i_a + i_b)
    out = np.empty(4)
    out[K.C_AXIAL] = 2.0 * zeta * math.sqrt(stiff[K.K_AXIAL] * mu)
    out[K.C_SHEAR] = 2.0 * zeta * math.sqrt(stiff[K.K_SHEAR] * mu)
    out[K.C_TORSION] = 2.0 * zeta * math.sqrt(stiff[K.K_TORSION] * mu_i)
    # relative-rotation bending mode stiffness is EI/L
    out[K.C_BEND] = 2.0 * zeta * math.sqrt(0.5 * stiff[K.K_BEND] * mu_i)
    return out


def element_stiffness(stiff: np.ndarray) -> np.ndarray:
    """12x12 local frame-element stiffness, DOFs ``[u v w rx ry rz]`` per node, x along the beam."""
    a1, a2, b1, b2, b3 = stiff
    k = np.zeros((12, 12))
    k[0, 0] = k[6, 6] = a1
    k[0, 6] = -a1
    k[3, 3] = k[9, 9] = a2
    k[3, 9] = -a2
    # bending in the local x-y plane
    k[1, 1] = k[7, 7] = b1
    k[1, 7] = -b1
    k[1, 5] = k[1, 11] = b2
    k[5, 7] = k[7, 11] = -b2
    k[5, 5] = k[11, 11] = 2 * b3
    k[5, 11] = b3
    # bending in the local x-z plane
    k[2, 2] = k[8, 8] = b1
    k[2, 8] = -b1
    k[2, 4] = k[2, 10] = -b2
    k[4, 8] = k[8, 10] = b2
    k[4, 4] = k[10, 10] = 2 * b3
    k[4, 10] = b3
    return np.triu(k) + np.triu(k, 1).T


def element_damping(damp: np.ndarray, length: float) -> np.ndarray:
    """12x12 local damping matrix, a sum of ``c * g g^T`` over the deformation-rate modes.

    The shear rates exclude the pair's mean spin, so each ``g`` couples a
    transverse velocity to both end rotations.
    """
    def mode(*terms):
        g = np.zeros(12)
        for dof, w in terms:
            g[dof] += w
        return g

    h = 0.5 * length
    modes = [
        (damp[K.C_AXIAL], mode((0, -1), (6, 1))),
        (damp[K.C_SHEAR], mode((1, -1), (7, 1), (5, -h), (11, -h))),
        (damp[K.C_SHEAR], mode((2, -1), (8, 1), (4, h), (10, h))),
        (damp[K.C_TORSION], mode((3, -1), (9, 1))),
        (damp[K.C_BEND], mode((4, -1), (10, 1))),
        (damp[K.C_BEND], mode((5, -1), (11, 1))),
    ]
    return sum(c * np.outer(g, g) for c, g in modes)


def _local_to_world_dofs(ax: int) -> np.ndarray:
    # local component l of node n lives at world dof (ax + l) % 3 (+3 for rotations)
    idx = []
    for node in range(2):
        for block in range(2):
            idx.extend(6 * node + 3 * block + (ax + l) % 3 for l in range(3))
    return np.array(idx)


@dataclass
class LatticeModel:
    """Fixed topology and constants of one simulated body."""

    genome: DesignGenome
    highres: bool
    node_site: np.ndarray  # (n,) genome site of each node
    node_sub: np.ndarray  # (n, 3) integer lattice coordinate at this resolution
    node_kind: np.ndarray  # (n,) VoxelKind values
    edge: float  # node edge length (voxel or subvoxel)
    mass: np.ndarray
    inertia: np.ndarray
    half: np.ndarray
    kc: np.ndarray
    cc: np.ndarray
    ba: np.ndarray
    bb: np.ndarray
    bax: np.ndarray
    brest: np.ndarray
    bact: np.ndarray  # actuation weight: rest = brest * (1 + bact*(mult - 1))
    bk: np.ndarray
    bc: np.ndarray
    surface: np.ndarray  # (n,) bool
    pa: np.ndarray
    pb: np.ndarray
    plen: np.ndarray
    pk: np.ndarray
    pc: np.ndarray
    n_substeps: int = 1

    @property
    def n_nodes(self) -> int:
        return self.mass.shape[0]

    @property
    def n_beams(self) -> int:
        return self.ba.shape[0]

    @property
    def actuated_beams(self) -> np.ndarray:
        return np.flatnonzero(self.bact > 0)


@dataclass
class SimState:
    model: LatticeModel
    pos: np.ndarray
    vel: np.ndarray
    quat: np.ndarray
    angvel: np.ndarray
    colliding: np.ndarray  # (n_pairs,) uint8, 1 while a temporary beam exists
    step_index: int = 0
    timestep: float = 0.000453
    _force: np.ndarray = field(default=None, repr=False)
    _torque: np.ndarray = field(default=None, repr=False)
    _rest: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = self.model.n_nodes
        self._force = np.zeros((n, 3))
        self._torque = np.zeros((n, 3))
        self._rest = self.model.brest.copy()

    @property
    def clock(self) -> float:
        return self.step_index * self.timestep

    @property
    def n_nodes(self) -> int:
        return self.model.n_nodes

    @property
    def permanent_beams(self) -> list[tuple[int, int]]:
        return list(zip(self.model.ba.tolist(), self.model.bb.tolist()))

    @property
    def temporary_beams(self) -> list[tuple[int, int]]:
        on = np.flatnonzero(self.colliding)
        return [(int(self.model.pa[c]), int(self.model.pb[c])) for c in on]

    @property
    def surface_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.model.surface)

    def com(self) -> np.ndarray:
        m = self.model.mass
        if m.size == 0:
            return np.zeros(3)
        return (m[:, None] * self.pos).sum(axis=0) / m.sum()

    def com_velocity(self) -> np.ndarray:
        m = self.model.mass
        if m.size == 0:
            return np.zeros(3)
        return (m[:, None] * self.vel).sum(axis=0) / m.sum()

    def copy(self) -> "SimState":
        return SimState(self.model, self.pos.copy(), self.vel.copy(), self.quat.copy(),
                        self.angvel.copy(), self.colliding.copy(), self.step_index, self.timestep)


def _assemble(genome: DesignGenome, highres: bool, sp: SimParams, mp: MaterialParams) -> LatticeModel:
    L = sp.voxel_edge
    sub = SUBDIV if highres else 1
    edge = L / sub

    sites, subs, kinds, centers = [], [], [], []
    for c in COORDS:
        kind = genome.kind_at(c)
        if kind == VoxelKind.EMPTY:
            continue
        base = np.array([c.x, c.y, c.z]) * L + np.array([0.0, 0.0, 0.5 * L])
        for off in itertools.product(range(sub), repeat=3):
            # (z, y, x) product order reversed so x varies fastest
            ox, oy, oz = off[2], off[1], off[0]
            sites.append(c.index)
            subs.append((c.x * sub + ox, c.y * sub + oy, c.z * sub + oz))
            centers.append(base + (np.array([ox, oy, oz]) - (sub - 1) / 2.0) * edge)
            kinds.append(int(kind))
    n = len(sites)
    node_sub = np.array(subs, dtype=np.int64).reshape(n, 3)
    lookup = {tuple(s): i for i, s in enumerate(subs)}

    m = mp.density * edge**3
    mass = np.full(n, m)
    inertia = np.full(n, m * edge**2 / 6.0)
    half = np.full(n, 0.5 * edge)
    k_contact = mp.contact_stiffness if mp.contact_stiffness is not None else mp.youngs_modulus * edge
    kc = np.full(n, k_contact)
    cc = np.full(n, 2.0 * mp.contact_zeta * math.sqrt(k_contact * m))

    stiff = beam_constants(mp, edge)
    damp = damping_constants(stiff, mp.lattice_zeta, m, m, m * edge**2 / 6.0, m * edge**2 / 6.0)
    ba, bb, bax, bact = [], [], [], []
    for i, s in enumerate(subs):
        for ax in range(3):
            nb = tuple(np.add(s, _AXES[ax]))
            j = lookup.get(nb)
            if j is None:
                continue
            ba.append(i)
            bb.append(j)
            bax.append(ax)
            if highres:
                # only centre-to-face-centre links inside an active block expand
                ci = tuple(np.mod(s, sub))
                cj = tuple(np.mod(nb, sub))
                same = sites[i] == sites[j]
                centre = (1, 1, 1)
                w = 1.0 if (same and kinds[i] == VoxelKind.ACTIVE and centre in (ci, cj)) else 0.0
            else:
                w = 0.5 * ((kinds[i] == VoxelKind.ACTIVE) + (kinds[j] == VoxelKind.ACTIVE))
            bact.append(w)
    nbeam = len(ba)

    degree = np.zeros(n, dtype=np.int64)
    np.add.at(degree, np.array(ba, dtype=np.int64), 1)
    np.add.at(degree, np.array(bb, dtype=np.int64), 1)
    surface = degree < 6 if highres else np.ones(n, dtype=bool)

    adjacent = set(zip(ba, bb))
    surf_idx = np.flatnonzero(surface)
    pa, pb = [], []
    for a_i, i in enumerate(surf_idx):
        for j in surf_idx[a_i + 1:]:
            if (i, j) in adjacent or (j, i) in adjacent:
                continue
            # nodes more than 2 lattice cells apart can only meet after gross deformation,
            # which the lattice beams do not permit
            if np.abs(node_sub[i] - node_sub[j]).max() > 2:
                continue
            pa.append(i)
            pb.append(j)
    npair = len(pa)
    k_col = stiff[K.K_AXIAL]
    c_col = 2.0 * mp.collision_zeta * math.sqrt(k_col * 0.5 * m)

    return LatticeModel(
        genome=genome,
        highres=highres,
        node_site=np.array(sites, dtype=np.int64),
        node_sub=node_sub,
        node_kind=np.array(kinds, dtype=np.int64),
        edge=edge,
        mass=mass,
        inertia=inertia,
        half=half,
        kc=kc,
        cc=cc,
        ba=np.array(ba, dtype=np.int64),
        bb=np.array(bb, dtype=np.int64),
        bax=np.array(bax, dtype=np.int64),
        brest=np.full(nbeam, edge),
        bact=np.array(bact, dtype=np.float64),
        bk=np.tile(stiff, (nbeam, 1)),
        bc=np.tile(damp, (nbeam, 1)),
        surface=surface,
        pa=np.array(pa, dtype=np.int64),
        pb=np.array(pb, dtype=np.int64),
        plen=np.full(npair, edge),
        pk=np.full(npair, k_col),
        pc=np.full(npair, c_col),
    ), np.array(centers, dtype=np.float64).reshape(n, 3)


def _linearized(model: LatticeModel, stretch: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mass-normalized stiffness and damping matrices at the rest pose, plus the mass diagonal.

    Every node gets its ground spring, and every surface node one isotropic
    collision-spring allowance.  Damping lever arms are taken at ``stretch``
    times the rest length (stiffness only drops as a beam lengthens).
    """
    n = model.n_nodes
    kmat = np.zeros((6 * n, 6 * n))
    cmat = np.zeros((6 * n, 6 * n))
    for b in range(model.n_beams):
        idx = _local_to_world_dofs(int(model.bax[b]))
        glob = np.concatenate([6 * model.ba[b] + idx[:6], 6 * model.bb[b] + idx[6:] - 6])
        kmat[np.ix_(glob, glob)] += element_stiffness(model.bk[b])
        cmat[np.ix_(glob, glob)] += element_damping(model.bc[b], stretch * model.brest[b])
    zdof = 6 * np.arange(n) + 2
    kmat[zdof, zdof] += model.kc
    cmat[zdof, zdof] += model.cc
    if model.pa.size:
        k_col = model.pk[0]
        c_col = model.pc[0]
        for node in np.flatnonzero(model.surface):
            t = 6 * node + np.arange(3)
            kmat[t, t] += 2.0 * k_col
            cmat[t, t] += 2.0 * c_col
    mdiag = np.empty(6 * n)
    mdiag[0::6] = mdiag[1::6] = mdiag[2::6] = model.mass
    mdiag[3::6] = mdiag[4::6] = mdiag[5::6] = model.inertia
    s = 1.0 / np.sqrt(mdiag)
    return kmat * np.outer(s, s), cmat * np.outer(s, s), mdiag


def stability_limit(model: LatticeModel, stretch: float = 1.0) -> float:
    """Largest stable semi-implicit Euler step for the linearized, damped lattice.

    A single oscillator with rate ``omega`` and damping rate ``gamma`` is stable
    under this scheme iff ``omega^2 h^2 + 2 gamma h < 4``; feeding it the top
    eigenvalues of the mass-normalized stiffness and damping matrices bounds
    every mode at once.
    """
    if model.n_nodes == 0:
        return math.inf
    kn, cn, _ = _linearized(model, stretch)
    omega2 = np.linalg.eigvalsh(kn)[-1]
    gamma = np.linalg.eigvalsh(cn)[-1]
    return 4.0 / (gamma + math.sqrt(gamma * gamma + 4.0 * omega2))


def substeps_for(model: LatticeModel, sp: SimParams) -> int:
    # any beam may be actuated, so bound at the peak rest-length multiplier
    h_max = sp.stability_safety * stability_limit(model, sp.peak_volume_ratio ** (1.0 / 3.0))
    if not math.isfinite(h_max):
        return 1
    return max(1, math.ceil(sp.timestep / h_max - 1e-12))


@functools.lru_cache(maxsize=1024)
def _cached_substeps(occupancy: tuple[bool, ...], highres: bool, sp: SimParams,
                     mp: MaterialParams) -> int:
    # voxel kinds do not enter stiffness, mass or damping, only occupancy does
    proxy = DesignGenome(tuple(VoxelKind.PASSIVE if o else VoxelKind.EMPTY for o in occupancy))
    model, _ = _assemble(proxy, highres, sp, mp)
    return substeps_for(model, sp)


def _initial_state(model: LatticeModel, centers: np.ndarray, sp: SimParams) -> SimState:
    n = model.n_nodes
    quat = np.zeros((n, 4))
    quat[:, 0] = 1.0
    return SimState(model, centers.copy(), np.zeros((n, 3)), quat, np.zeros((n, 3)),
                    np.zeros(model.pa.shape[0], dtype=np.uint8), 0, sp.timestep)


def build_lattice(g: DesignGenome, sp: SimParams | None = None, mp: MaterialParams | None = None,
                  highres: bool = False) -> SimState:
    """One node per occupied site (27 per site when ``highres``), resting on the ground plane."""
    sp = sp or SimParams()
    mp = mp or MaterialParams()
    model, centers = _assemble(g, highres, sp, mp)
    occupancy = tuple(k != VoxelKind.EMPTY for k in g.sites)
    model.n_substeps = _cached_substeps(occupancy, highres, sp, mp)
    log.debug("genome %s: %d nodes, %d beams, %d substeps", g, model.n_nodes, model.n_beams,
              model.n_substeps)
    return _initial_state(model, centers, sp)


def refine_highres(g: DesignGenome, sp: SimParams | None = None,
                   mp: MaterialParams | None = None) -> SimState:
    """Each occupied voxel as a 3x3x3 block of fused subvoxels."""
    return build_lattice(g, sp, mp, highres=True)
