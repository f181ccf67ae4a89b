"""Planar viscoelastic satellite near 1:1 spin-orbit resonance."""

from .config import ConfigError, RunConfig
from .dynamics import (
    DissipationSpec,
    KineticSpec,
    ModelParams,
    ReducedState,
    Tolerances,
    TrajectoryRecord,
    simulate,
)
from .equilibrium import Equilibrium, Perturbation, Thresholds, find_equilibrium, lasalle_experiment
from .kinematics import chiral_octahedral_group, covering_fiber, inertia_from_body, principal_axes
from .potentials import ElasticCoeffs, GravityParams, ShapeCoords

__all__ = [
    "ConfigError", "RunConfig", "DissipationSpec", "KineticSpec", "ModelParams", "ReducedState",
    "Tolerances", "TrajectoryRecord", "simulate", "Equilibrium", "Perturbation", "Thresholds",
    "find_equilibrium", "lasalle_experiment", "chiral_octahedral_group", "covering_fiber",
    "inertia_from_body", "principal_axes", "ElasticCoeffs", "GravityParams", "ShapeCoords",
]
