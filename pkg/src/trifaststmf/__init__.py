"""Tropical (max-plus) matrix tri-factorization and its benchmark harness."""

from .baselines import TwoFactorization, fast_stmf, lr_consecutive, rl_consecutive, tri_stmf
from .metrics import MetricsRecord, quartiles, rand_score, rmse
from .network import FourPartition, WeightedNetwork, mu
from .trifactor import FitConfig, TriFactorization, cfl, cfr, compute_middle, tri_fast_stmf
from .tropical import (
    NEG_INF,
    MaskedMatrix,
    b_norm,
    greatest_subsolution_left,
    greatest_subsolution_right,
    greatest_subsolution_sandwich,
    maxplus_matmul,
    minplus_matmul,
)

__all__ = [
    "NEG_INF", "MaskedMatrix", "b_norm", "maxplus_matmul", "minplus_matmul",
    "greatest_subsolution_left", "greatest_subsolution_right", "greatest_subsolution_sandwich",
    "FitConfig", "TriFactorization", "tri_fast_stmf", "cfl", "cfr", "compute_middle",
    "TwoFactorization", "fast_stmf", "lr_consecutive", "rl_consecutive", "tri_stmf",
    "MetricsRecord", "rmse", "rand_score", "quartiles",
    "FourPartition", "WeightedNetwork", "mu",
]
