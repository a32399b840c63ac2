"""Generalized evidential deep learning: Dirichlet algebra, evidential losses
and schedules, uncertainty measures, a small numpy MLP and an evaluation harness."""

from . import data, dirichlet, evidential, metrics, nnet, specfun, training, uncertainty
from .dirichlet import DirichletParams
from .evidential import PRESETS, SubjectiveOpinion, VariantConfig, get_preset
from .training import MetricsReport, RunConfig, evaluate, run, train
from .uncertainty import UncertaintyRecord

__version__ = "0.1.0"

__all__ = [
    "data",
    "dirichlet",
    "evidential",
    "metrics",
    "nnet",
    "specfun",
    "training",
    "uncertainty",
    "DirichletParams",
    "PRESETS",
    "SubjectiveOpinion",
    "VariantConfig",
    "get_preset",
    "MetricsReport",
    "RunConfig",
    "evaluate",
    "run",
    "train",
    "UncertaintyRecord",
]
