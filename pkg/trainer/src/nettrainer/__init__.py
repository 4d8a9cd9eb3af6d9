"""Executable-model side of the network JSON contract: build, train,
evaluate, report."""

from .model import BuildError, build_model
from .profile import TrainProfile, desk_profile
from .train import train_eval

__all__ = ["BuildError", "build_model", "TrainProfile", "desk_profile", "train_eval"]

__version__ = "0.1.0"
