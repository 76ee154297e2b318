"""Tropical matrix tri-factorization ``R ≈ G1 ⊗ S ⊗ G2`` (triFastSTMF).

The outer loop alternates three phases: CFL improves ``G1`` against the
fixed product ``S ⊗ G2``, CFR improves ``G2`` against ``G1 ⊗ S``, and the
middle factor is recomputed as the greatest subsolution of
``G1 ⊗ S ⊗ G2 ⪯ R``.  Every change is kept only if the b-norm of the
residual on observed entries goes down, so the recorded error trace is
monotone.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .metrics import MetricsRecord, rmse
from .tropical import (
    MaskedMatrix,
    b_norm,
    greatest_subsolution_sandwich,
    maxplus_matmul,
)

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("random_acol", "fixed")


@dataclass
class FitConfig:
    budget_seconds: float = 300.0
    max_outer_iters: int = 1_000_000
    rel_improvement_eps: float = 1e-6
    seed: int = 0
    init: str = "random_acol"
    # (G1, S, G2) for tri-factorizations, (U, V) for two-factor runs
    fixed_factors: Optional[Tuple[np.ndarray, ...]] = None
    acol_sample_count: int = 5

    def __post_init__(self):
        if not self.budget_seconds >= 0:
            raise ValueError("budget_seconds must be non-negative")
        if not self.rel_improvement_eps >= 0:
            raise ValueError("rel_improvement_eps must be non-negative")
        if self.init not in INIT_STRATEGIES:
            raise ValueError(f"init must be one of {INIT_STRATEGIES}")
        if self.init == "fixed" and self.fixed_factors is None:
            raise ValueError("init='fixed' needs fixed_factors")
        if self.acol_sample_count < 1:
            raise ValueError("acol_sample_count must be >= 1")

    def to_dict(self) -> dict:
        return {
            "budget_seconds": self.budget_seconds,
            "max_outer_iters": self.max_outer_iters,
            "rel_improvement_eps": self.rel_improvement_eps,
            "seed": self.seed,
            "init": self.init,
            "acol_sample_count": self.acol_sample_count,
        }


@dataclass
class TriFactorization:
    G1: np.ndarray
    S: np.ndarray
    G2: np.ndarray

    def __post_init__(self):
        self.G1 = np.asarray(self.G1, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        self.G2 = np.asarray(self.G2, dtype=float)
        if self.G1.shape[1] != self.S.shape[0] or self.S.shape[1] != self.G2.shape[0]:
            raise ValueError(
                f"factor shapes do not compose: {self.G1.shape}, "
                f"{self.S.shape}, {self.G2.shape}"
            )

    @property
    def r1(self) -> int:
        return self.S.shape[0]

    @property
    def r2(self) -> int:
        return self.S.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.G1.shape[0], self.G2.shape[1]

    def product(self) -> np.ndarray:
        return maxplus_matmul(maxplus_matmul(self.G1, self.S), self.G2)


@dataclass
class PreprocessRecord:
    transposed: bool
    perm: np.ndarray

    @property
    def inverse(self) -> np.ndarray:
        return np.argsort(self.perm)


def as_masked(R) -> MaskedMatrix:
    if isinstance(R, MaskedMatrix):
        return R
    return MaskedMatrix.from_nan(R)


def _check_data(R: MaskedMatrix) -> None:
    if R.rows == 0 or R.cols == 0:
        raise ValueError("data matrix is empty")
    if not R.observed.any():
        raise ValueError("data matrix has no observed entries")
    if not np.isfinite(R.data[R.observed]).all():
        raise ValueError("observed entries must be finite")


# --------------------------------------------------------------------------
# orientation


def preprocess(R, rng: np.random.Generator) -> Tuple[MaskedMatrix, PreprocessRecord]:
    """Transpose tall matrices (``cols < rows``) and shuffle the rows."""
    R = as_masked(R)
    transposed = R.cols < R.rows
    if transposed:
        R = R.T
    perm = rng.permutation(R.rows)
    return R.take_rows(perm), PreprocessRecord(transposed, perm)


def to_fit_frame(
    G1: np.ndarray, S: np.ndarray, G2: np.ndarray, rec: PreprocessRecord
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map factors of the original ``R`` onto the preprocessed matrix."""
    if rec.transposed:
        G1, S, G2 = G2.T, S.T, G1.T
    return np.array(G1[rec.perm], dtype=float), np.array(S, dtype=float), np.array(G2, dtype=float)


def postprocess(
    G1: np.ndarray, S: np.ndarray, G2: np.ndarray, rec: PreprocessRecord
) -> TriFactorization:
    G1 = np.asarray(G1)[rec.inverse]
    if rec.transposed:
        return TriFactorization(G2.T.copy(), S.T.copy(), G1.T.copy())
    return TriFactorization(G1.copy(), np.array(S), np.array(G2))


# --------------------------------------------------------------------------
# initialization and the middle factor


def _observed_mean(values: np.ndarray, observed: np.ndarray, axis: int) -> np.ndarray:
    counts = observed.sum(axis=axis)
    sums = np.where(observed, values, 0.0).sum(axis=axis)
    out = np.zeros_like(sums, dtype=float)
    np.divide(sums, counts, out=out, where=counts > 0)
    return out


def random_acol_init(
    R, r1: int, r2: int, rng: np.random.Generator, sample_count: int = 5
) -> Tuple[np.ndarray, np.ndarray]:
    """Random Acol start: factor columns/rows are means of random data columns/rows.

    Only observed entries are averaged; an entry with nothing to average is 0.
    """
    R = as_masked(R)
    m, n = R.shape
    G1 = np.empty((m, r1))
    for c in range(r1):
        idx = rng.choice(n, size=min(sample_count, n), replace=False)
        G1[:, c] = _observed_mean(R.data[:, idx], R.observed[:, idx], axis=1)
    G2 = np.empty((r2, n))
    for c in range(r2):
        idx = rng.choice(m, size=min(sample_count, m), replace=False)
        G2[c, :] = _observed_mean(R.data[idx, :], R.observed[idx, :], axis=0)
    return G1, G2


def compute_middle(G1, R, G2, fallback=0.0) -> np.ndarray:
    """Greatest ``S`` with ``G1 ⊗ S ⊗ G2 ⪯ R`` on the observed entries of ``R``.

    Unconstrained entries (nothing observed bounds them) take ``fallback``.
    """
    S = greatest_subsolution_sandwich(G1, G2, as_masked(R))
    bad = ~np.isfinite(S)
    if bad.any():
        fb = np.broadcast_to(np.asarray(fallback, dtype=float), S.shape)
        S[bad] = fb[bad]
    return S


# --------------------------------------------------------------------------
# winners and TD_A


def product_with_winners(U: np.ndarray, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """``U ⊗ V`` and the smallest latent index attaining each maximum."""
    m, r = U.shape
    n = V.shape[1]
    best = np.full((m, n), -math.inf)
    arg = np.zeros((m, n), dtype=np.intp)
    for k in range(r):
        term = U[:, k, None] + V[None, k, :]
        gt = term > best
        best[gt] = term[gt]
        arg[gt] = k
    return best, arg


def winner_index(U, V, i: int, j: int) -> int:
    return int(np.argmax(np.asarray(U)[i, :] + np.asarray(V)[:, j]))


class _WinnerStats:
    """Column errors and winner multiplicities for one fixed ``(U, V)``."""

    def __init__(self, R_data: np.ndarray, observed: np.ndarray, U, V):
        P, arg = product_with_winners(U, V)
        r = U.shape[1]
        resid = np.where(observed, np.abs(np.where(observed, R_data, 0.0) - P), 0.0)
        self.col_errors = resid.sum(axis=0)
        self.arg = arg
        self.observed = observed
        self.r = r
        col_counts = np.empty((observed.shape[1], r), dtype=np.int64)
        for k in range(r):
            col_counts[:, k] = ((arg == k) & observed).sum(axis=0)
        self.col_counts = col_counts

    def row_counts(self, i: int) -> np.ndarray:
        return np.bincount(self.arg[i, self.observed[i]], minlength=self.r)


def td_a(R, U: np.ndarray, V: np.ndarray, i: int):
    """Per-column errors plus winner multisets for row ``i`` and every column.

    Returns ``(errors, row_counts, col_counts)`` where ``row_counts[k]`` is how
    often ``k`` wins over the observed entries of row ``i`` and
    ``col_counts[j, k]`` the same over the observed entries of column ``j``.
    """
    R = as_masked(R)
    stats = _WinnerStats(R.data, R.observed, np.asarray(U, float), np.asarray(V, float))
    return stats.col_errors, stats.row_counts(i), stats.col_counts


# --------------------------------------------------------------------------
# elementary updates
#
# Both work in place on U and V and return the column of U and row of V
# they were given, so a rejected trial can be undone.  ``R_hi`` is the data
# with +inf in unobserved slots, which drops those slots out of every min.


def _f_ulf(R_hi, U, V, i, j, k):
    snap = (U[:, k].copy(), V[k, :].copy())
    U[i, k] = R_hi[i, j] - V[k, j]
    row = (R_hi - U[:, k, None]).min(axis=0)
    keep = np.isfinite(row)
    V[k, keep] = row[keep]
    return snap


def _f_urf(R_hi, U, V, i, j, k):
    snap = (U[:, k].copy(), V[k, :].copy())
    V[k, j] = R_hi[i, j] - U[i, k]
    col = (R_hi - V[k, None, :]).min(axis=1)
    keep = np.isfinite(col)
    U[keep, k] = col[keep]
    return snap


def _rollback(U, V, k, snap):
    U[:, k], V[k, :] = snap


def _high(R: MaskedMatrix) -> np.ndarray:
    return np.where(R.observed, R.data, math.inf)


def _check_update_args(R: MaskedMatrix, i: int, j: int):
    if not R.observed[i, j]:
        raise ValueError(f"R[{i}, {j}] is not observed")


def f_ulf(R, U, V, i, j, k):
    """Left update: make the ``(i, j)`` path through ``k`` exact via ``U[i, k]``,
    then reset ``V[k, :]`` to the greatest row compatible with ``U[:, k]``.

    ``U`` and ``V`` are modified in place.  Returns ``(U, V, snapshot)``.
    """
    R = as_masked(R)
    _check_update_args(R, i, j)
    snap = _f_ulf(_high(R), U, V, i, j, k)
    return U, V, snap


def f_urf(R, U, V, i, j, k):
    """Right update: fix ``V[k, j]`` so the ``(i, j)`` path through ``k`` is
    exact, then reset ``U[:, k]`` to its greatest compatible column."""
    R = as_masked(R)
    _check_update_args(R, i, j)
    snap = _f_urf(_high(R), U, V, i, j, k)
    return U, V, snap


# --------------------------------------------------------------------------
# acceptance bookkeeping


class Progress:
    """Best accepted error and the (elapsed, b-norm) trace of one fit."""

    def __init__(self, start: Optional[float] = None):
        self.start = time.perf_counter() if start is None else start
        self.best = math.inf
        self.trace: List[Tuple[float, float]] = []
        self.accepted = 0

    def record(self, value: float) -> None:
        t = time.perf_counter() - self.start
        if self.trace and t <= self.trace[-1][0]:
            t = math.nextafter(self.trace[-1][0], math.inf)
        self.best = float(value)
        self.trace.append((t, float(value)))
        self.accepted += 1


class _TermCache:
    """Observed entries of ``L ⊗ Rt`` with, per entry, the winning term index,
    its value and the best value among the other terms.

    Lets a trial that changes term ``k`` be scored in O(#observed).  A fully
    observed matrix keeps everything 2-d, which avoids gathers.
    """

    def __init__(self, R: MaskedMatrix):
        self.dense = R.fully_observed
        if self.dense:
            self.targets = R.data
        else:
            self.rows, self.cols = np.nonzero(R.observed)
            self.targets = R.data[self.rows, self.cols]

    def _terms(self, L, Rt, k):
        if self.dense:
            return L[:, k, None] + Rt[None, k, :]
        return L[self.rows, k] + Rt[k, self.cols]

    def rebuild(self, L: np.ndarray, Rt: np.ndarray) -> None:
        shape = self.targets.shape
        best1 = np.full(shape, -math.inf)
        best2 = np.full(shape, -math.inf)
        arg1 = np.zeros(shape, dtype=np.intp)
        for k in range(L.shape[1]):
            term = self._terms(L, Rt, k)
            gt = term > best1
            best2 = np.where(gt, best1, np.maximum(best2, term))
            best1 = np.where(gt, term, best1)
            arg1 = np.where(gt, k, arg1)
        self.best1, self.best2, self.arg1 = best1, best2, arg1
        self._others = {}

    def value(self) -> float:
        return float(np.abs(self.targets - self.best1).sum())

    def value_with_term(self, k: int, L: np.ndarray, Rt: np.ndarray) -> float:
        others = self._others.get(k)
        if others is None:
            others = np.where(self.arg1 == k, self.best2, self.best1)
            self._others[k] = others
        pred = np.maximum(others, self._terms(L, Rt, k))
        return float(np.abs(self.targets - pred).sum())


def _row_passes(
    R: MaskedMatrix,
    U: np.ndarray,
    V: np.ndarray,
    objective: Tuple[Callable[[], np.ndarray], Callable[[], np.ndarray]],
    progress: Progress,
    deadline: float,
    on_accept: Optional[Callable[[float], None]] = None,
) -> None:
    """FastSTMF-core passes over the rows of ``R`` updating ``U``/``V`` in place.

    ``objective`` returns the two factors whose max-plus product is scored;
    they may alias ``U``/``V`` or be fixed matrices.  Stops after a pass with
    no accepted update or when the deadline passes.
    """
    clock = time.perf_counter
    if clock() >= deadline:
        return
    obs = R.observed
    R_hi = _high(R)
    cache = _TermCache(R)
    left, right = objective
    cache.rebuild(left(), right())
    m = R.rows
    while True:
        accepted_in_pass = False
        stats = _WinnerStats(R.data, obs, U, V)
        for i in range(m):
            cand = np.flatnonzero(obs[i])
            if cand.size == 0:
                continue
            order = cand[np.argsort(-stats.col_errors[cand], kind="stable")]
            base = stats.row_counts(i)
            accepted = False
            for j in order:
                k = int(np.argmax(base + stats.col_counts[j]))
                for move in (_f_ulf, _f_urf):
                    if clock() >= deadline:
                        return
                    snap = move(R_hi, U, V, i, j, k)
                    value = cache.value_with_term(k, left(), right())
                    if value < progress.best:
                        progress.record(value)
                        if on_accept is not None:
                            on_accept(value)
                        accepted = True
                        break
                    _rollback(U, V, k, snap)
                if accepted:
                    break
            if accepted:
                accepted_in_pass = True
                cache.rebuild(left(), right())
                stats = _WinnerStats(R.data, obs, U, V)
        if not accepted_in_pass:
            return


def _tri_bnorm(R: MaskedMatrix, G1, S, G2) -> float:
    return b_norm(R, maxplus_matmul(maxplus_matmul(G1, S), G2))


def _seed_progress(progress, R, G1, S, G2):
    if progress is None:
        progress = Progress()
        progress.record(_tri_bnorm(R, G1, S, G2))
    return progress


def cfl(R, G1, S, G2, deadline: float, progress: Optional[Progress] = None) -> np.ndarray:
    """Improve the left factor with ``Q = S ⊗ G2`` as the working right factor.

    Trials are scored on the full tri-product; changes to ``Q`` live only for
    the duration of the call.  Returns the new ``G1``.
    """
    R = as_masked(R)
    progress = _seed_progress(progress, R, G1, S, G2)
    Q_true = maxplus_matmul(S, G2)
    Q = Q_true.copy()
    U = np.array(G1, dtype=float)
    _row_passes(R, U, Q, (lambda: U, lambda: Q_true), progress, deadline)
    return U


def cfr(R, G1, S, G2, deadline: float, progress: Optional[Progress] = None) -> np.ndarray:
    """Improve the right factor with ``Q = G1 ⊗ S`` as the working left factor."""
    R = as_masked(R)
    progress = _seed_progress(progress, R, G1, S, G2)
    Q_true = maxplus_matmul(G1, S)
    Q = Q_true.copy()
    V = np.array(G2, dtype=float)
    _row_passes(R, Q, V, (lambda: Q_true, lambda: V), progress, deadline)
    return V


# --------------------------------------------------------------------------
# driver


def _rank_flags(shape: Sequence[int], ranks: Sequence[int]) -> List[str]:
    lo = min(shape)
    return [f"rank {r} >= min dimension {lo}" for r in ranks if r >= lo]


def tri_fast_stmf(
    R, r1: int, r2: int, config: Optional[FitConfig] = None
) -> Tuple[TriFactorization, MetricsRecord]:
    """Fit ``R ≈ G1 ⊗ S ⊗ G2`` under a wall-clock budget.

    ``R`` is a ``MaskedMatrix`` or an array with NaN for missing entries.
    Unobserved entries never influence the result.
    """
    config = config or FitConfig()
    start = time.perf_counter()
    deadline = start + config.budget_seconds
    if r1 < 1 or r2 < 1:
        raise ValueError("ranks must be positive")
    R = as_masked(R)
    _check_data(R)

    rng = np.random.default_rng(config.seed)
    Rp, rec = preprocess(R, rng)
    if config.init == "fixed":
        G1, S0, G2 = (np.asarray(f, dtype=float) for f in config.fixed_factors)
        if G1.shape != (R.rows, r1) or S0.shape != (r1, r2) or G2.shape != (r2, R.cols):
            raise ValueError("fixed factors do not match R and the ranks")
        G1, S0, G2 = to_fit_frame(G1, S0, G2, rec)
    else:
        fr1, fr2 = (r2, r1) if rec.transposed else (r1, r2)
        G1, G2 = random_acol_init(Rp, fr1, fr2, rng, config.acol_sample_count)
        S0 = np.zeros((fr1, fr2))
    S = compute_middle(G1, Rp, G2, fallback=S0)

    progress = Progress(start)
    progress.record(_tri_bnorm(Rp, G1, S, G2))
    outer = 0
    while (
        outer < config.max_outer_iters
        and time.perf_counter() < deadline
        and progress.best > 0
    ):
        before = progress.best
        G1 = cfl(Rp, G1, S, G2, deadline, progress)
        G2 = cfr(Rp, G1, S, G2, deadline, progress)
        S_new = compute_middle(G1, Rp, G2, fallback=S)
        value = _tri_bnorm(Rp, G1, S_new, G2)
        if value <= progress.best:
            S = S_new
            if value < progress.best:
                progress.record(value)
        outer += 1
        gain = before - progress.best
        if gain <= 0 or gain < config.rel_improvement_eps * before:
            break

    fac = postprocess(G1, S, G2, rec)
    pred = fac.product()
    record = MetricsRecord(
        method="triFastSTMF",
        seed=config.seed,
        rmse_a=rmse(pred, R),
        trace=progress.trace,
        final_bnorm=b_norm(R, pred),
        elapsed=time.perf_counter() - start,
        flags=_rank_flags(R.shape, (r1, r2)),
        extra={"outer_iters": outer, "accepted_updates": progress.accepted - 1,
               "transposed": rec.transposed},
        config=config.to_dict(),
    )
    log.debug("triFastSTMF seed=%s outer=%d bnorm=%.6g", config.seed, outer, record.final_bnorm)
    return fac, record
