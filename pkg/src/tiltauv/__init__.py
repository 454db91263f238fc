"""Simulation and control library for a tilt-thruster underwater vehicle."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    BodyVelocity,
    GimbalLockError,
    LinearModelPair,
    ModelParams,
    Pose,
    Wrench,
)
