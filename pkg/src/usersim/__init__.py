"""Learned user-feedback simulator for training recommendation policies offline."""

from .data import (
    Dataset,
    ItemCatalog,
    Session,
    State,
    Transition,
    TransitionSet,
    ingest_logs,
    load_dataset,
    next_state,
    save_dataset,
    split_train_test,
    upsample_positive,
)
from .discriminator import Discriminator
from .env import EnvState, SimulatorHandle, make_handle, reset, rollout, step
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    NumericError,
    UserSimError,
)
from .generator import Generator
from .synth import SynthConfig, synth_world
from .training import TrainConfig, TrainResult, train_simulator

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DataError",
    "Dataset",
    "Discriminator",
    "EnvState",
    "Generator",
    "ItemCatalog",
    "NumericError",
    "Session",
    "SimulatorHandle",
    "State",
    "SynthConfig",
    "TrainConfig",
    "TrainResult",
    "Transition",
    "TransitionSet",
    "UserSimError",
    "ingest_logs",
    "load_dataset",
    "make_handle",
    "next_state",
    "reset",
    "rollout",
    "save_dataset",
    "split_train_test",
    "step",
    "synth_world",
    "train_simulator",
    "upsample_positive",
]
