"""Seeded experiment runner: datasets x methods x seeds under wall-clock budgets."""

from __future__ import annotations

import csv
import dataclasses
import functools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import network as nw
from .baselines import fast_stmf, lr_consecutive, rl_consecutive, tri_stmf
from .metrics import MetricsRecord, quartiles, rand_score, rmse
from .tropical import MaskedMatrix, maxplus_matmul, read_matrix_csv
from .trifactor import FitConfig, TriFactorization, tri_fast_stmf

log = logging.getLogger(__name__)

TRI_METHODS = (
    "triFastSTMF",
    "lrConsecutive",
    "rlConsecutive",
    "triSTMF-BothTD",
    "triSTMF-RandomTD",
)
METHODS = TRI_METHODS + ("FastSTMF",)

SUMMARY_COLUMNS = (
    "method", "dataset", "seed", "m", "r1", "r2", "n", "mu",
    "rmse_a", "rmse_p", "final_bnorm", "elapsed",
)


def fit(method: str, R, r1: int, r2: int, config: FitConfig):
    """Dispatch to one factorization method.  ``FastSTMF`` uses rank ``r1``."""
    if method == "triFastSTMF":
        return tri_fast_stmf(R, r1, r2, config)
    if method == "FastSTMF":
        return fast_stmf(R, r1, config)
    if method == "lrConsecutive":
        return lr_consecutive(R, r1, r2, config)
    if method == "rlConsecutive":
        return rl_consecutive(R, r1, r2, config)
    if method == "triSTMF-BothTD":
        return tri_stmf(R, r1, r2, config, "both_td")
    if method == "triSTMF-RandomTD":
        return tri_stmf(R, r1, r2, config, "random_td")
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def synthetic_matrix(rows: int, cols: int, r1: int, r2: int, rng: np.random.Generator):
    """``G1 ⊗ S ⊗ G2`` of uniform [0, 10) factors; returns ``(R, (G1, S, G2))``."""
    G1 = rng.uniform(0.0, 10.0, (rows, r1))
    S = rng.uniform(0.0, 10.0, (r1, r2))
    G2 = rng.uniform(0.0, 10.0, (r2, cols))
    return maxplus_matmul(maxplus_matmul(G1, S), G2), (G1, S, G2)


def holdout_mask(observed: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Random subset of the observed entries, ``round(fraction * count)`` of them."""
    idx = np.flatnonzero(observed)
    take = int(round(fraction * idx.size))
    held = np.zeros(observed.size, dtype=bool)
    held[rng.choice(idx, size=take, replace=False)] = True
    return held.reshape(observed.shape)


@dataclass
class ExperimentConfig:
    method: str
    dataset: Dict[str, Any]
    seed: int = 0
    r1: Optional[int] = None
    r2: Optional[int] = None
    budget_seconds: float = 300.0
    init: str = "random_acol"
    rel_improvement_eps: float = 1e-6
    max_outer_iters: int = 1_000_000
    acol_sample_count: int = 5

    @property
    def dataset_name(self) -> str:
        return str(self.dataset.get("name", self.dataset.get("kind")))

    def fit_config(self, fixed=None) -> FitConfig:
        """FitConfig for this run; ``fixed`` supplies the factors for ``init='fixed'``."""
        return FitConfig(
            budget_seconds=self.budget_seconds,
            max_outer_iters=self.max_outer_iters,
            rel_improvement_eps=self.rel_improvement_eps,
            seed=self.seed,
            init="fixed" if fixed is not None else "random_acol",
            fixed_factors=fixed,
            acol_sample_count=self.acol_sample_count,
        )


# --------------------------------------------------------------------------
# datasets; materialised once per process and shared by all seeds


def _key(spec: Dict[str, Any]) -> str:
    return json.dumps(spec, sort_keys=True)


@functools.lru_cache(maxsize=16)
def _matrix_dataset(key: str):
    spec = json.loads(key)
    rng = np.random.default_rng(spec.get("data_seed", 0))
    truth = None
    if spec["kind"] == "synthetic-matrix":
        data, truth = synthetic_matrix(
            spec.get("rows", 200), spec.get("cols", 100), spec["r1"], spec["r2"], rng
        )
        R = MaskedMatrix.full(data)
    elif spec["kind"] == "matrix-csv":
        R = read_matrix_csv(spec["path"])
    else:
        raise ValueError(f"not a matrix dataset: {spec['kind']}")
    held = holdout_mask(R.observed, spec.get("mask_fraction", 0.0), rng)
    train = MaskedMatrix(R.with_nan(), R.observed & ~held)
    return R, train, held, truth


@functools.lru_cache(maxsize=16)
def _synthetic_network(key: str):
    spec = json.loads(key)
    rng = np.random.default_rng(spec.get("data_seed", 0))
    net, truth, _ = nw.gen_synthetic_tropical_network(*spec.get("sizes", (45, 10, 15, 30)), rng)
    held = _pick_edges(net.edges, spec.get("held_out_fraction", 0.0), rng)
    return net, truth, held


def _pick_edges(edges, fraction, rng):
    take = int(round(fraction * len(edges)))
    idx = np.sort(rng.choice(len(edges), size=take, replace=False))
    return [edges[i] for i in idx]


@functools.lru_cache(maxsize=4)
def _edge_list_samples(key: str):
    spec = json.loads(key)
    if "days" in spec:
        table = nw.ingest_interactions(spec["path"])
        lo, hi = spec["days"]
        net = nw.day_group_network(table, (lo, hi))
    else:
        net = nw.read_edge_list(spec["path"])
    rng = np.random.default_rng(spec.get("data_seed", 0))
    samples = nw.sample_networks(
        net, spec.get("samples", 10), spec.get("max_missing_fraction", 0.2), rng
    )
    return net, samples


# --------------------------------------------------------------------------
# single runs


def _run_matrix(cfg: ExperimentConfig) -> MetricsRecord:
    R, train, held, truth = _matrix_dataset(_key(cfg.dataset))
    r1 = cfg.r1 or cfg.dataset.get("r1")
    r2 = cfg.r2 or cfg.dataset.get("r2")
    fixed = None
    if cfg.init == "fixed":
        if truth is None or cfg.method == "FastSTMF":
            raise ValueError("fixed init needs a tri-factor method on data with known factors")
        fixed = truth
    assert not (train.observed & held).any()
    fac, rec = fit(cfg.method, train, r1, r2, cfg.fit_config(fixed))
    pred = fac.product()
    rec.rmse_p = rmse(pred, R, held) if held.any() else None
    return rec


def _whole_network_errors(pred: Dict, edges: Sequence) -> Tuple[float, int]:
    diffs = []
    skipped = 0
    for u, v, w in edges:
        p = pred.get(nw._pair(u, v))
        if p is None:
            skipped += 1
            continue
        diffs.append(p - w)
    if not diffs:
        return math.nan, skipped
    d = np.asarray(diffs)
    return float(np.sqrt(np.mean(d * d))), skipped


def tropical_bounds(fac: TriFactorization) -> Tuple[float, float]:
    """Interval holding every entry of every max-plus product of the factors'
    blocks when all factor entries are non-negative."""
    lo = fac.G1.min() + fac.S.min() + fac.G2.min()
    hi = fac.G1.max() + fac.S.max() + fac.G2.max()
    return float(lo), float(hi)


def network_run(
    method: str,
    train_net: nw.WeightedNetwork,
    held_out: Sequence,
    partition: nw.FourPartition,
    config: FitConfig,
    rng: np.random.Generator,
    mask_zeros: bool = False,
    fixed_init: bool = True,
):
    """Fit on the ``X-Z`` block of ``train_net`` and score the whole network.

    With ``fixed_init`` the fit starts from the block matrices ``G1, S, G2``
    instead of ``config.init``.

    Returns ``(factors, record, predictions)``.  RMSE-A covers every training
    edge that joins two different roles, RMSE-P every such held-out edge.
    """
    if method not in TRI_METHODS:
        raise ValueError(f"whole-network prediction needs a tri-factor method, not {method}")
    blocks = nw.build_matrices(train_net, partition, rng, held_out, mask_zeros=mask_zeros)
    _, r1, r2, _ = partition.sizes
    if fixed_init:
        config = dataclasses.replace(
            config, init="fixed", fixed_factors=(blocks.G1, blocks.S, blocks.G2)
        )
    fac, rec = fit(method, blocks.R, r1, r2, config)
    pred = nw.predict_whole_network(fac, partition)
    train_pairs = {nw._pair(u, v) for u, v, _ in train_net.edges}
    held_pairs = {nw._pair(u, v) for u, v, _ in held_out}
    assert not (train_pairs & held_pairs), "train and held-out edges overlap"
    rmse_a, skip_a = _whole_network_errors(pred, train_net.edges)
    rmse_p, skip_p = _whole_network_errors(pred, held_out)
    lo, hi = tropical_bounds(fac)
    values = np.fromiter(pred.values(), float)
    rec.extra.update(
        rmse_a_matrix=rec.rmse_a,
        rmse_p_matrix=None,
        train_edges_unscored=skip_a,
        held_out_edges_unscored=skip_p,
        held_out_edges=len(held_out),
        prediction_min=float(values.min()),
        prediction_max=float(values.max()),
        product_bounds=[lo, hi],
    )
    rec.rmse_a = rmse_a
    rec.rmse_p = rmse_p
    rec.partition_sizes = partition.sizes
    rec.mu = nw.mu(partition)
    return fac, rec, pred


def _run_synthetic_network(cfg: ExperimentConfig) -> MetricsRecord:
    spec = cfg.dataset
    net, truth, held = _synthetic_network(_key(spec))
    train = net.without(held)
    rng = np.random.default_rng([cfg.seed, 1])
    strategy = spec.get("partition", "random")
    m, r1, r2, n = truth.sizes
    if strategy == "random":
        part = nw.random_partition(net.node_ids, truth.sizes, rng)
    elif strategy == "partial":
        part = nw.partially_random_partition(truth.X, truth.Z, net.node_ids, r1, r2, rng)
    elif strategy == "true":
        part = truth
    else:
        raise ValueError(f"unknown partition strategy {strategy!r}")
    _, rec, _ = network_run(cfg.method, train, held, part, cfg.fit_config(), rng,
                            fixed_init=cfg.init == "fixed")
    rec.rand_score = rand_score(part, truth)
    return rec


def _run_edge_list(cfg: ExperimentConfig) -> MetricsRecord:
    spec = cfg.dataset
    _, samples = _edge_list_samples(_key(spec))
    sample, held = samples[cfg.seed % len(samples)]
    gamma, part = nw.select_by_gamma(
        sample, spec.get("gamma_grid", [0.5, 0.75, 1.0, 1.25, 1.5, 2.0]),
        spec.get("mu_threshold", 0.7), seed=spec.get("louvain_seed", 0),
    )
    rng = np.random.default_rng([cfg.seed, 2])
    _, rec, _ = network_run(cfg.method, sample, held, part, cfg.fit_config(), rng,
                            mask_zeros=True, fixed_init=cfg.init == "fixed")
    rec.extra["gamma"] = gamma
    rec.extra["sample_index"] = cfg.seed % len(samples)
    return rec


def run_one(cfg: ExperimentConfig) -> MetricsRecord:
    kind = cfg.dataset.get("kind")
    if kind in ("synthetic-matrix", "matrix-csv"):
        rec = _run_matrix(cfg)
    elif kind == "synthetic-network":
        rec = _run_synthetic_network(cfg)
    elif kind == "edge-list-network":
        rec = _run_edge_list(cfg)
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    rec.dataset = cfg.dataset_name
    rec.config = {**asdict(cfg), "fit": rec.config}
    log.info("%s %s seed=%d bnorm=%.6g rmse_a=%.4g", cfg.method, rec.dataset, cfg.seed,
             rec.final_bnorm, rec.rmse_a)
    return rec


# --------------------------------------------------------------------------
# persistence


def summary_row(rec: MetricsRecord) -> Dict[str, Any]:
    m = r1 = r2 = n = None
    if rec.partition_sizes is not None:
        m, r1, r2, n = rec.partition_sizes
    else:
        ds = rec.config.get("dataset", {})
        r1 = rec.config.get("r1") or ds.get("r1")
        r2 = rec.config.get("r2") or ds.get("r2")
    return {
        "method": rec.method, "dataset": rec.dataset, "seed": rec.seed,
        "m": m, "r1": r1, "r2": r2, "n": n, "mu": rec.mu,
        "rmse_a": rec.rmse_a, "rmse_p": rec.rmse_p,
        "final_bnorm": rec.final_bnorm, "elapsed": rec.elapsed,
    }


def _csv_value(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_results(records: Sequence[MetricsRecord], root, experiment: str) -> Path:
    """``<root>/<experiment>/<method>/<seed>.json`` plus ``summary.csv`` and
    ``quartiles.csv``.  With several datasets, files are ``<dataset>-<seed>.json``."""
    base = Path(root) / experiment
    multi = len({r.dataset for r in records}) > 1
    for rec in records:
        d = base / rec.method
        d.mkdir(parents=True, exist_ok=True)
        stem = f"{rec.dataset}-{rec.seed}" if multi else f"{rec.seed}"
        (d / f"{stem}.json").write_text(json.dumps(rec.to_dict(), indent=1) + "\n")
    base.mkdir(parents=True, exist_ok=True)
    with open(base / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for rec in records:
            w.writerow({k: _csv_value(v) for k, v in summary_row(rec).items()})
    with open(base / "quartiles.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "dataset", "metric", "count", "q1", "median", "q3"])
        for (method, dataset), metric, vals in _groups(records):
            q1, med, q3 = quartiles(vals)
            w.writerow([method, dataset, metric, len(vals), repr(q1), repr(med), repr(q3)])
    return base


def _groups(records):
    keys = sorted({(r.method, r.dataset) for r in records}, key=lambda k: (k[1] or "", k[0]))
    for key in keys:
        group = [r for r in records if (r.method, r.dataset) == key]
        for metric in ("final_bnorm", "rmse_a", "rmse_p"):
            vals = [getattr(r, metric) for r in group]
            vals = [v for v in vals if v is not None and not math.isnan(v)]
            if vals:
                yield key, metric, vals


def run_experiment(
    configs: Sequence[ExperimentConfig],
    results_dir=None,
    experiment: str = "experiment",
    jobs: int = 1,
) -> List[MetricsRecord]:
    """Run every config (optionally in ``jobs`` worker processes) and, when
    ``results_dir`` is given, persist the records from the parent process."""
    configs = list(configs)
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run_one, configs))
    else:
        records = [run_one(c) for c in configs]
    if results_dir is not None:
        write_results(records, results_dir, experiment)
    return records


BENCH_KEYS = {
    "experiment", "results_dir", "methods", "datasets", "repetitions", "seeds",
    "r1", "r2", "budget_seconds", "init", "rel_improvement_eps",
    "max_outer_iters", "acol_sample_count", "jobs",
}


def expand_bench(spec: Dict[str, Any]) -> List[ExperimentConfig]:
    """Cartesian product datasets x methods x seeds from a bench JSON object."""
    unknown = set(spec) - BENCH_KEYS
    if unknown:
        raise ValueError(f"unknown bench config keys: {sorted(unknown)}")
    seeds = spec.get("seeds")
    if seeds is None:
        seeds = list(range(spec.get("repetitions", 1)))
    out = []
    for ds in spec["datasets"]:
        for method in spec["methods"]:
            if method not in METHODS:
                raise ValueError(f"unknown method {method!r}")
            for seed in seeds:
                out.append(ExperimentConfig(
                    method=method, dataset=ds, seed=int(seed),
                    r1=ds.get("r1", spec.get("r1")), r2=ds.get("r2", spec.get("r2")),
                    budget_seconds=spec.get("budget_seconds", 300.0),
                    init=ds.get("init", spec.get("init", "random_acol")),
                    rel_improvement_eps=spec.get("rel_improvement_eps", 1e-6),
                    max_outer_iters=spec.get("max_outer_iters", 1_000_000),
                    acol_sample_count=spec.get("acol_sample_count", 5),
                ))
    return out
