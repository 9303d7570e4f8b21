"""Quantum state tomography with a quantum-aware transformer, from scratch on numpy."""

from . import autodiff, datagen, errors, estimators, loss, model, povm, qcore, train
from .datagen import Dataset, DatasetConfig, build_dataset, load_dataset, save_dataset
from .estimators import lre_estimate
from .model import QatConfig, QatModel, build_model, load_model
from .train import TrainConfig, evaluate, train as train_model

__version__ = "0.1.0"
