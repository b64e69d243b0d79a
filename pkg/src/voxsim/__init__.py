"""Voxel soft-robot simulation and exhaustive design-space search."""

__version__ = "0.1.0"
