"""Informative features for the structure shared by several discrete variables."""

__version__ = "0.1.0"

from .core import (
    Alphabet,
    DiscreteDataset,
    DistributionSet,
    dsbs,
    estimate_distributions,
    from_joint,
    load_csv,
    random_joint,
)
from .errors import CommonStructError
from .mace import MaceConfig, generalized_maximal_correlation, hgr_maximal_correlation, mace_fit, mace_fit_k
from .mhscore import HTrainConfig, mh_score, mh_train
from .spectral import FeatureSet, build_b, build_b_tilde, dense_features, eigendecompose

__all__ = [
    "Alphabet",
    "CommonStructError",
    "DiscreteDataset",
    "DistributionSet",
    "FeatureSet",
    "HTrainConfig",
    "MaceConfig",
    "build_b",
    "build_b_tilde",
    "dense_features",
    "dsbs",
    "eigendecompose",
    "estimate_distributions",
    "from_joint",
    "generalized_maximal_correlation",
    "hgr_maximal_correlation",
    "load_csv",
    "mace_fit",
    "mace_fit_k",
    "mh_score",
    "mh_train",
    "random_joint",
]
