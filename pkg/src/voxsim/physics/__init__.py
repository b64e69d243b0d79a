"""Point-mass/beam lattice dynamics for voxel robots."""

from .lattice import (LatticeModel, SimState, build_lattice, element_damping,
                      element_stiffness, refine_highres, stability_limit)
from .params import MaterialParams, ParamError, SimParams, desk_scale_params
from .simulate import (SimulationUnstable, Trajectory, actuation_volume, beam_forces,
                       collision_update, ground_contact, rest_length_multiplier, run,
                       sample_steps, simulate, step)

__all__ = [
    "LatticeModel", "SimState", "build_lattice", "element_damping", "element_stiffness", "refine_highres",
    "stability_limit", "MaterialParams", "ParamError", "SimParams", "desk_scale_params",
    "SimulationUnstable", "Trajectory", "actuation_volume", "beam_forces", "collision_update",
    "ground_contact", "rest_length_multiplier", "run", "sample_steps", "simulate", "step",
]
