"""Slice analysis of planar 3-RPR parallel manipulators at fixed first leg length."""
from .kinematics import (Aspect, JointCoords, SlicePose, SolutionSet, continue_solutions,
                         forward_kinematics, inverse_kinematics)
from .model import Config, ConfigError, ManipulatorGeometry, SliceConfig, load_config, reference_geometry

__version__ = "0.1.0"

__all__ = [
    "Aspect", "Config", "ConfigError", "JointCoords", "ManipulatorGeometry", "SliceConfig",
    "SlicePose", "SolutionSet", "continue_solutions", "forward_kinematics", "inverse_kinematics",
    "load_config", "reference_geometry", "__version__",
]
