from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass


class ParamError(ValueError):
    """A parameter violates its documented constraint."""

    def __init__(self, key: str, constraint: str):
        self.key = key
        self.constraint = constraint
        super().__init__(f"{key}: {constraint}")


@dataclass(frozen=True)
class MaterialParams:
    youngs_modulus: float = 1e7  # Pa
    poisson_ratio: float = 0.35
    density: float = 1000.0  # kg/m^3
    static_friction: float = 1.0
    kinetic_friction: float = 0.5
    lattice_zeta: float = 1.0
    collision_zeta: float = 0.8
    contact_zeta: float = 1.0
    # None -> axial beam stiffness E*A/L of the node's voxel
    contact_stiffness: float | None = None
    stick_speed: float = 1e-5  # m/s

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.youngs_modulus > 0:
            raise ParamError("youngs_modulus", "must be > 0")
        if not 0 <= self.poisson_ratio < 0.5:
            raise ParamError("poisson_ratio", "must lie in [0, 0.5)")
        if not self.density > 0:
            raise ParamError("density", "must be > 0")
        if not self.kinetic_friction >= 0:
            raise ParamError("kinetic_friction", "must be >= 0")
        if not self.static_friction >= self.kinetic_friction:
            raise ParamError("static_friction", "must be >= kinetic_friction")
        for key in ("lattice_zeta", "collision_zeta", "contact_zeta"):
            z = getattr(self, key)
            if not 0 < z <= 2:
                raise ParamError(key, "must lie in (0, 2]")
        if self.contact_stiffness is not None and not self.contact_stiffness > 0:
            raise ParamError("contact_stiffness", "must be > 0")
        if not self.stick_speed > 0:
            raise ParamError("stick_speed", "must be > 0")

    @property
    def shear_modulus(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    def replace(self, **changes) -> "MaterialParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class SimParams:
    voxel_edge: float = 0.01  # m
    timestep: float = 0.000453  # s
    total_steps: int = 8831
    settle_steps: int = 552
    actuation_frequency: float = 4.0  # Hz
    peak_volume_ratio: float = 1.9
    gravity: float = -9.81  # m/s^2
    stability_safety: float = 0.9
    sample_stride: int = 20

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.voxel_edge > 0:
            raise ParamError("voxel_edge", "must be > 0")
        if not self.timestep > 0:
            raise ParamError("timestep", "must be > 0")
        if not 0 <= self.settle_steps < self.total_steps:
            raise ParamError("settle_steps", "must satisfy 0 <= settle_steps < total_steps")
        if not self.actuation_frequency >= 0:
            raise ParamError("actuation_frequency", "must be >= 0")
        if not self.peak_volume_ratio >= 1:
            raise ParamError("peak_volume_ratio", "must be >= 1")
        if not 0 < self.stability_safety <= 1:
            raise ParamError("stability_safety", "must lie in (0, 1]")
        if not self.sample_stride >= 1:
            raise ParamError("sample_stride", "must be >= 1")

    @property
    def settle_time(self) -> float:
        return self.settle_steps * self.timestep

    @property
    def total_time(self) -> float:
        return self.total_steps * self.timestep

    def replace(self, **changes) -> "SimParams":
        return dataclasses.replace(self, **changes)

    def with_actuation_cycles(self, cycles: float) -> "SimParams":
        """Same settle phase followed by just enough steps to cover ``cycles`` actuation periods."""
        n_act = math.ceil(cycles / (self.actuation_frequency * self.timestep) - 1e-9)
        return self.replace(total_steps=self.settle_steps + n_act)


def desk_scale_params() -> SimParams:
    """Default settle phase plus 4 actuation cycles (about 1.25 s simulated)."""
    return SimParams().with_actuation_cycles(4)
