from .ask import AskModel, AskSpec
from .base import (
    DomainError,
    HorizonExceededError,
    HypothesisSet,
    NumericalUnderflowError,
    PosteriorSummary,
    SequentialModel,
    StatisticState,
)
from .shift_in_mean import MeanPrior, ShiftInMeanModel, ShiftInMeanSpec, build_default_spec, build_symmetric_spec
from .toy import BinaryToyModel, ToySpec

__all__ = [
    "AskModel",
    "AskSpec",
    "BinaryToyModel",
    "DomainError",
    "HorizonExceededError",
    "HypothesisSet",
    "MeanPrior",
    "NumericalUnderflowError",
    "PosteriorSummary",
    "SequentialModel",
    "ShiftInMeanModel",
    "ShiftInMeanSpec",
    "StatisticState",
    "ToySpec",
    "build_default_spec",
    "build_symmetric_spec",
]
