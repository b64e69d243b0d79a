from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..design_space import DesignGenome
from . import _kernel as K
from .lattice import SimState, build_lattice
from .params import MaterialParams, SimParams


class SimulationUnstable(RuntimeError):
    def __init__(self, genome, step: int):
        self.genome = genome
        self.step = step
        super().__init__(f"non-finite state for genome {genome} at step {step}")


@dataclass(frozen=True)
class Trajectory:
    """Center-of-mass samples from the end of the settle phase onward."""

    t: np.ndarray  # (n,) s
    com: np.ndarray  # (n, 3) m
    sample_stride: int = 20

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        com = np.asarray(self.com, dtype=float).reshape(-1, 3)
        if t.shape[0] != com.shape[0]:
            raise ValueError("t and com lengths differ")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("sample times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "com", com)

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def initial_com(self) -> np.ndarray:
        return self.com[0]

    @property
    def final_com(self) -> np.ndarray:
        return self.com[-1]

    def displacement(self) -> np.ndarray:
        """Horizontal net displacement, final minus initial."""
        return self.com[-1, :2] - self.com[0, :2]

    def translated(self, offset) -> "Trajectory":
        return Trajectory(self.t, self.com + np.asarray(offset, dtype=float), self.sample_stride)

    def origin_aligned(self) -> "Trajectory":
        return self.translated(-self.com[0])


def actuation_volume(t_since_settle: float, sp: SimParams | None = None) -> float:
    """Active-voxel volume relative to rest: a sine wave clamped to expansion only."""
    sp = sp or SimParams()
    return float(K.actuation_ratio(float(t_since_settle), sp.actuation_frequency, sp.peak_volume_ratio))


def rest_length_multiplier(volume_ratio: float) -> float:
    if volume_ratio < 1:
        raise ValueError("volume ratio below rest volume")
    return float(np.cbrt(volume_ratio))


def beam_forces(state: SimState, rest: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-node (force, torque) exerted by the permanent beams alone."""
    m = state.model
    force = np.zeros((m.n_nodes, 3))
    torque = np.zeros((m.n_nodes, 3))
    K.accumulate_beams(state.pos, state.vel, state.quat, state.angvel, m.ba, m.bb, m.bax,
                       m.brest if rest is None else rest, m.brest, m.bk, m.bc, force, torque)
    return force, torque


def ground_contact(state: SimState, applied: np.ndarray | None = None,
                   mp: MaterialParams | None = None, sp: SimParams | None = None) -> np.ndarray:
    """Per-node ground reaction (normal penalty plus Coulomb friction).

    ``applied`` holds the other loads on each node; in stick mode the tangential
    reaction cancels them.  Friction coefficients come from ``mp``; stiffness and
    damping of the penalty spring are those the state was built with.
    """
    mp = mp or MaterialParams()
    sp = sp or SimParams()
    m = state.model
    h = state.timestep / m.n_substeps
    if applied is None:
        applied = np.zeros((m.n_nodes, 3))
    out = np.zeros((m.n_nodes, 3))
    for n in range(m.n_nodes):
        fx, fy, fz, _ = K.contact_force(
            state.pos[n, 2], state.vel[n, 0], state.vel[n, 1], state.vel[n, 2],
            applied[n, 0], applied[n, 1], m.mass[n], m.half[n], m.kc[n], m.cc[n],
            mp.static_friction, mp.kinetic_friction, mp.stick_speed, h)
        out[n] = fx, fy, fz
    return out


def collision_update(state: SimState) -> np.ndarray:
    """Refresh the temporary beam set and return the per-node forces they exert."""
    m = state.model
    force = np.zeros((m.n_nodes, 3))
    K.accumulate_collisions(state.pos, state.vel, m.pa, m.pb, m.plen, m.pk, m.pc,
                            state.colliding, force)
    return force


def _advance(state: SimState, n_steps: int, sp: SimParams, mp: MaterialParams,
             external: np.ndarray | None = None) -> None:
    m = state.model
    if n_steps <= 0:
        return
    if m.n_nodes:
        if external is None:
            external = np.zeros((m.n_nodes, 3))
        else:
            external = np.ascontiguousarray(external, dtype=np.float64).reshape(m.n_nodes, 3)
        bad = K.run_steps(
            state.pos, state.vel, state.quat, state.angvel, m.mass, m.inertia, m.half, m.kc, m.cc,
            m.ba, m.bb, m.bax, m.brest, m.bact, m.bk, m.bc,
            m.pa, m.pb, m.plen, m.pk, m.pc, state.colliding,
            state._force, state._torque, state._rest, external,
            state.step_index, n_steps, m.n_substeps, sp.timestep, sp.settle_steps,
            sp.actuation_frequency, sp.peak_volume_ratio,
            sp.gravity, mp.static_friction, mp.kinetic_friction, mp.stick_speed)
        if bad >= 0:
            state.step_index = bad
            raise SimulationUnstable(m.genome, bad)
    state.step_index += n_steps


def step(state: SimState, sp: SimParams | None = None, mp: MaterialParams | None = None) -> SimState:
    """Advance a copy of ``state`` by one reported timestep."""
    sp = sp or SimParams()
    mp = mp or MaterialParams()
    new = state.copy()
    _advance(new, 1, sp, mp)
    return new


def run(state: SimState, n_steps: int, sp: SimParams | None = None,
        mp: MaterialParams | None = None, external: np.ndarray | None = None) -> SimState:
    """Advance ``state`` in place by ``n_steps`` reported timesteps.

    ``external`` is an optional constant (n_nodes, 3) load, e.g. for probing friction.
    """
    _advance(state, n_steps, sp or SimParams(), mp or MaterialParams(), external)
    return state


def sample_steps(sp: SimParams) -> list[int]:
    """Step indices at which the center of mass is recorded: settle end, every stride, final."""
    ks = list(range(sp.settle_steps, sp.total_steps + 1, sp.sample_stride))
    if ks[-1] != sp.total_steps:
        ks.append(sp.total_steps)
    return ks


def simulate(g: DesignGenome, sp: SimParams | None = None, mp: MaterialParams | None = None,
             highres: bool = False, state: SimState | None = None) -> Trajectory:
    sp = sp or SimParams()
    mp = mp or MaterialParams()
    ks = sample_steps(sp)
    t = np.array([k * sp.timestep for k in ks])
    if g.n_voxels == 0:
        return Trajectory(t, np.zeros((len(ks), 3)), sp.sample_stride)
    if state is None:
        state = build_lattice(g, sp, mp, highres=highres)
    com = np.empty((len(ks), 3))
    for s, k in enumerate(ks):
        _advance(state, k - state.step_index, sp, mp)
        com[s] = state.com()
    return Trajectory(t, com, sp.sample_stride)

