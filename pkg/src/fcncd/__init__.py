"""Forced-choice neural cognitive diagnosis."""
from .data import BlockType, RankVector, ResponseDataset, encode_response, load_dataset, save_dataset, validate
from .model import FCNCD, build_variant
from .simulator import SimConfig, generate
from .training import PROFILES, TrainConfig

__version__ = "0.1.0"

__all__ = [
    "BlockType",
    "RankVector",
    "ResponseDataset",
    "encode_response",
    "load_dataset",
    "save_dataset",
    "validate",
    "FCNCD",
    "build_variant",
    "SimConfig",
    "generate",
    "PROFILES",
    "TrainConfig",
]
