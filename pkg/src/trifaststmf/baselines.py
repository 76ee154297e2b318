"""Comparison strategies built from two-factor tropical factorization."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .metrics import MetricsRecord, rmse
from .tropical import (
    b_norm,
    greatest_subsolution_left,
    greatest_subsolution_right,
    maxplus_matmul,
)
from .trifactor import (
    FitConfig,
    Progress,
    TriFactorization,
    _WinnerStats,
    _check_data,
    _high,
    _rank_flags,
    _row_passes,
    _tri_bnorm,
    as_masked,
    compute_middle,
    postprocess,
    preprocess,
    random_acol_init,
    to_fit_frame,
)

TRI_STMF_MODES = ("both_td", "random_td")


@dataclass
class TwoFactorization:
    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        if self.U.shape[1] != self.V.shape[0]:
            raise ValueError(f"factor shapes do not compose: {self.U.shape}, {self.V.shape}")

    @property
    def r(self) -> int:
        return self.U.shape[1]

    def product(self) -> np.ndarray:
        return maxplus_matmul(self.U, self.V)


def _child_seeds(seed: int, count: int):
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(count)]


def fast_stmf(R, r: int, config: Optional[FitConfig] = None):
    """Two-factor tropical fit ``R ≈ U ⊗ V`` with the FastSTMF update core.

    Returns ``(TwoFactorization, MetricsRecord)``.
    """
    config = config or FitConfig()
    start = time.perf_counter()
    deadline = start + config.budget_seconds
    if r < 1:
        raise ValueError("rank must be positive")
    R = as_masked(R)
    _check_data(R)
    rng = np.random.default_rng(config.seed)
    Rp, rec = preprocess(R, rng)
    if config.init == "fixed":
        U, V = (np.asarray(f, dtype=float) for f in config.fixed_factors)
        if U.shape != (R.rows, r) or V.shape != (r, R.cols):
            raise ValueError("fixed factors do not match R and the rank")
        if rec.transposed:
            U, V = V.T, U.T
        U, V = np.array(U[rec.perm]), np.array(V)
    else:
        U, V = random_acol_init(Rp, r, r, rng, config.acol_sample_count)

    progress = Progress(start)
    progress.record(b_norm(Rp, maxplus_matmul(U, V)))
    _row_passes(Rp, U, V, (lambda: U, lambda: V), progress, deadline)

    U = U[rec.inverse]
    fac = TwoFactorization(V.T.copy(), U.T.copy()) if rec.transposed else TwoFactorization(U, V)
    pred = fac.product()
    record = MetricsRecord(
        method="FastSTMF",
        seed=config.seed,
        rmse_a=rmse(pred, R),
        trace=progress.trace,
        final_bnorm=b_norm(R, pred),
        elapsed=time.perf_counter() - start,
        flags=_rank_flags(R.shape, (r,)),
        extra={"accepted_updates": progress.accepted - 1, "transposed": rec.transposed},
        config=config.to_dict(),
    )
    return fac, record


def _consecutive(R, r1, r2, config, left_to_right: bool):
    config = config or FitConfig()
    start = time.perf_counter()
    R = as_masked(R)
    s1, s2 = _child_seeds(config.seed, 2)
    half = config.budget_seconds / 2.0
    fixed1 = fixed2 = None
    if config.init == "fixed":
        G1, S, G2 = (np.asarray(f, dtype=float) for f in config.fixed_factors)
        if left_to_right:
            fixed1, fixed2 = (G1, maxplus_matmul(S, G2)), (S, G2)
        else:
            fixed1, fixed2 = (maxplus_matmul(G1, S), G2), (G1, S)

    cfg1 = dataclasses.replace(config, budget_seconds=half, seed=s1, fixed_factors=fixed1)
    first, rec1 = fast_stmf(R, r1 if left_to_right else r2, cfg1)
    boundary = time.perf_counter() - start

    remaining = max(0.0, config.budget_seconds - boundary)
    cfg2 = dataclasses.replace(config, budget_seconds=remaining, seed=s2, fixed_factors=fixed2)
    # phase two only ever sees a factor matrix
    if left_to_right:
        second, rec2 = fast_stmf(first.V, r2, cfg2)
        fac = TriFactorization(first.U, second.U, second.V)
        method = "lrConsecutive"
    else:
        second, rec2 = fast_stmf(first.U, r1, cfg2)
        fac = TriFactorization(second.U, second.V, first.V)
        method = "rlConsecutive"

    pred = fac.product()
    record = MetricsRecord(
        method=method,
        seed=config.seed,
        rmse_a=rmse(pred, R),
        trace=rec1.trace,
        final_bnorm=b_norm(R, pred),
        elapsed=time.perf_counter() - start,
        phase_traces={
            "phase1": rec1.trace,
            "phase2": [(t + boundary, v) for t, v in rec2.trace],
        },
        flags=_rank_flags(R.shape, (r1, r2)),
        extra={
            "phase_budget_seconds": half,
            "phase_boundary_seconds": boundary,
            "phase1_bnorm": rec1.final_bnorm,
            "phase2_bnorm": rec2.final_bnorm,
        },
        config=config.to_dict(),
    )
    return fac, record


def lr_consecutive(R, r1: int, r2: int, config: Optional[FitConfig] = None):
    """Factor ``R ≈ U ⊗ V`` then ``V ≈ S ⊗ G2``; ``G1 = U``."""
    return _consecutive(R, r1, r2, config, left_to_right=True)


def rl_consecutive(R, r1: int, r2: int, config: Optional[FitConfig] = None):
    """Factor ``R ≈ U ⊗ V`` then ``U ≈ G1 ⊗ S``; ``G2 = V``."""
    return _consecutive(R, r1, r2, config, left_to_right=False)


def _finite_or(new: np.ndarray, old: np.ndarray) -> np.ndarray:
    return np.where(np.isfinite(new), new, old)


def _slow_update(R_hi, Rp, L, Rv, i, j, k, left: bool):
    """ULF/URF on a composite pair with a full greatest-subsolution refresh."""
    L = L.copy()
    Rv = Rv.copy()
    if left:
        L[i, k] = R_hi[i, j] - Rv[k, j]
        Rv = _finite_or(greatest_subsolution_left(L, Rp), Rv)
    else:
        Rv[k, j] = R_hi[i, j] - L[i, k]
        L = _finite_or(greatest_subsolution_right(Rv, Rp), L)
    return L, Rv


def tri_stmf(R, r1: int, r2: int, config: Optional[FitConfig] = None, mode: str = "both_td"):
    """Tri-factorization through two composite two-factor views.

    View ``L`` pairs ``(G1 ⊗ S, G2)`` and view ``R`` pairs ``(G1, S ⊗ G2)``.
    ``both_td`` scores both views and works on the one with the smaller
    error (ties go to ``L``); ``random_td`` draws one view per step.  After an
    update the middle factor is recovered from the touched composite by
    one-sided residuation against the real factor inside it.
    """
    if mode not in TRI_STMF_MODES:
        raise ValueError(f"mode must be one of {TRI_STMF_MODES}")
    config = config or FitConfig()
    start = time.perf_counter()
    deadline = start + config.budget_seconds
    R = as_masked(R)
    _check_data(R)
    rng = np.random.default_rng(config.seed)
    Rp, rec = preprocess(R, rng)
    if config.init == "fixed":
        G1, S0, G2 = (np.asarray(f, dtype=float) for f in config.fixed_factors)
        G1, S0, G2 = to_fit_frame(G1, S0, G2, rec)
    else:
        fr1, fr2 = (r2, r1) if rec.transposed else (r1, r2)
        G1, G2 = random_acol_init(Rp, fr1, fr2, rng, config.acol_sample_count)
        S0 = np.zeros((fr1, fr2))
    S = compute_middle(G1, Rp, G2, fallback=S0)

    progress = Progress(start)
    progress.record(_tri_bnorm(Rp, G1, S, G2))
    R_hi = _high(Rp)
    obs = Rp.observed
    view_counts = {"L": 0, "R": 0}
    evaluations = 0
    steps = 0
    clock = time.perf_counter

    def views():
        return {
            "L": (maxplus_matmul(G1, S), G2),
            "R": (G1, maxplus_matmul(S, G2)),
        }

    timed_out = clock() >= deadline
    while not timed_out:
        accepted_in_pass = False
        for i in range(Rp.rows):
            if clock() >= deadline:
                timed_out = True
                break
            cand = np.flatnonzero(obs[i])
            if cand.size == 0:
                continue
            pairs = views()
            if mode == "both_td":
                sL = _WinnerStats(Rp.data, obs, *pairs["L"])
                sR = _WinnerStats(Rp.data, obs, *pairs["R"])
                evaluations += 2
                if sR.col_errors.sum() < sL.col_errors.sum():
                    name, stats = "R", sR
                else:
                    name, stats = "L", sL
            else:
                name = "L" if rng.integers(2) == 0 else "R"
                stats = _WinnerStats(Rp.data, obs, *pairs[name])
                evaluations += 1
            steps += 1
            view_counts[name] += 1
            L, Rv = pairs[name]
            order = cand[np.argsort(-stats.col_errors[cand], kind="stable")]
            base = stats.row_counts(i)
            accepted = False
            for j in order:
                k = int(np.argmax(base + stats.col_counts[j]))
                for left in (True, False):
                    if clock() >= deadline:
                        timed_out = True
                        break
                    L2, Rv2 = _slow_update(R_hi, Rp, L, Rv, i, j, k, left)
                    if name == "L":
                        nG1, nG2 = G1, Rv2
                        nS = _finite_or(greatest_subsolution_left(G1, L2), S)
                    else:
                        nG1, nG2 = L2, G2
                        nS = _finite_or(greatest_subsolution_right(G2, Rv2), S)
                    value = _tri_bnorm(Rp, nG1, nS, nG2)
                    if value < progress.best:
                        progress.record(value)
                        G1, S, G2 = nG1, nS, nG2
                        accepted = True
                        break
                if accepted or timed_out:
                    break
            if timed_out:
                break
            accepted_in_pass |= accepted
        if not accepted_in_pass:
            break

    fac = postprocess(G1, S, G2, rec)
    pred = fac.product()
    record = MetricsRecord(
        method="triSTMF-BothTD" if mode == "both_td" else "triSTMF-RandomTD",
        seed=config.seed,
        rmse_a=rmse(pred, R),
        trace=progress.trace,
        final_bnorm=b_norm(R, pred),
        elapsed=time.perf_counter() - start,
        flags=_rank_flags(R.shape, (r1, r2)),
        extra={
            "accepted_updates": progress.accepted - 1,
            "steps": steps,
            "view_evaluations": evaluations,
            "view_counts": view_counts,
        },
        config=config.to_dict(),
    )
    return fac, record

