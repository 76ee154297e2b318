"""Command-line pipelines: data synthesis, partitioning, fitting, prediction, benchmarks.

Every subcommand accepts ``--config FILE`` holding a JSON object whose keys
are the snake_case names of that subcommand's flags.  Explicit flags win over
the file, the file wins over defaults, and unknown keys are a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import experiment as ex
from . import network as nw
from .metrics import rand_score
from .tropical import MaskedMatrix, read_matrix_csv, write_matrix_csv
from .trifactor import TriFactorization

log = logging.getLogger("trifaststmf")

INIT_ALIASES = {"acol": "random_acol", "random_acol": "random_acol", "fixed": "fixed"}


class UsageError(Exception):
    """Bad flags or config keys; exits with status 2."""


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _out_dir(opts) -> Path:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _int_list(text: str) -> List[int]:
    return [int(t) for t in str(text).split(",")]


def _float_list(text) -> List[float]:
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return [float(t) for t in str(text).split(",")]


def _day_range(text: str):
    lo, _, hi = str(text).partition("-")
    return int(lo), int(hi or lo)


# --------------------------------------------------------------------------
# subcommands


def cmd_synth_matrix(o: Dict[str, Any]) -> None:
    rng = np.random.default_rng(o["seed"])
    data, (G1, S, G2) = ex.synthetic_matrix(o["rows"], o["cols"], o["r1"], o["r2"], rng)
    held = ex.holdout_mask(np.ones(data.shape, bool), o["mask_fraction"], rng)
    out = _out_dir(o)
    write_matrix_csv(out / "R.csv", MaskedMatrix(np.where(held, np.nan, data), ~held))
    write_matrix_csv(out / "R_full.csv", data)
    for name, mat in (("G1", G1), ("S", S), ("G2", G2)):
        write_matrix_csv(out / f"{name}.csv", mat)
    _write_json(out / "config.json", o)


def cmd_synth_network(o: Dict[str, Any]) -> None:
    sizes = _int_list(o["sizes"])
    if len(sizes) != 4:
        raise UsageError("--sizes needs four integers m,r1,r2,n")
    rng = np.random.default_rng(o["seed"])
    net, truth, blocks = nw.gen_synthetic_tropical_network(*sizes, rng)
    held = ex._pick_edges(net.edges, o["held_out_fraction"], rng)
    out = _out_dir(o)
    nw.write_edge_list(out / "edges.txt", net.without(held).edges, "u v weight")
    nw.write_edge_list(out / "held_out.txt", held, "u v weight")
    (out / "truth.json").write_text(truth.to_json() + "\n")
    _write_json(out / "config.json", o)


def _read_partition(path) -> nw.FourPartition:
    return nw.FourPartition.from_json(Path(path).read_text())


def _nodes_for(opts, net: nw.WeightedNetwork) -> List:
    # a truth partition may name nodes whose edges were all held out
    if opts.get("truth"):
        return _read_partition(opts["truth"]).nodes
    return net.node_ids


def cmd_partition(o: Dict[str, Any]) -> None:
    net = nw.read_edge_list(o["in"])
    truth = _read_partition(o["truth"]) if o.get("truth") else None
    rng = np.random.default_rng(o["seed"])
    info: Dict[str, Any] = {"strategy": o["strategy"]}
    if o["strategy"] == "louvain":
        gamma, part = nw.select_by_gamma(net, _float_list(o["gamma_grid"]), o["mu_threshold"], o["seed"])
        info["gamma"] = gamma
    else:
        nodes = _nodes_for(o, net)
        if o.get("sizes"):
            sizes = _int_list(o["sizes"])
        elif truth is not None:
            sizes = list(truth.sizes)
        else:
            raise UsageError("--sizes or --truth is required for random partitions")
        if o["strategy"] == "random":
            part = nw.random_partition(nodes, sizes, rng)
        else:
            if truth is None:
                raise UsageError("--truth is required for --strategy partial")
            part = nw.partially_random_partition(truth.X, truth.Z, nodes, sizes[1], sizes[2], rng)
    info.update(sizes=list(part.sizes), mu=nw.mu(part))
    if truth is not None:
        info["rand_score"] = rand_score(part, truth)
    out = _out_dir(o)
    (out / "partition.json").write_text(part.to_json() + "\n")
    _write_json(out / "info.json", info)


def cmd_build_matrices(o: Dict[str, Any]) -> None:
    part = _read_partition(o["partition"])
    net = nw.read_edge_list(o["in"])
    net = nw.WeightedNetwork(part.nodes, net.edges)
    blocks = nw.build_matrices(net, part, np.random.default_rng(o["seed"]), mask_zeros=o["mask_zeros"])
    out = _out_dir(o)
    write_matrix_csv(out / "R.csv", blocks.R)
    for name in ("G1", "S", "G2"):
        write_matrix_csv(out / f"{name}.csv", getattr(blocks, name))
    _write_json(out / "config.json", o)


def _read_factors(directory, names) -> List[np.ndarray]:
    out = []
    for name in names:
        M = read_matrix_csv(Path(directory) / f"{name}.csv")
        if not M.fully_observed:
            raise ValueError(f"{name}.csv has missing entries")
        out.append(np.array(M.data))
    return out


def cmd_factorize(o: Dict[str, Any]) -> None:
    if o["method"] not in ex.METHODS:
        raise UsageError(f"--method must be one of {', '.join(ex.METHODS)}")
    init = INIT_ALIASES.get(o["init"])
    if init is None:
        raise UsageError("--init must be acol or fixed")
    R = read_matrix_csv(o["in"])
    two = o["method"] == "FastSTMF"
    names = ("U", "V") if two else ("G1", "S", "G2")
    fixed = None
    if init == "fixed":
        if not o.get("factors_in"):
            raise UsageError("--init fixed needs --factors-in")
        fixed = tuple(_read_factors(o["factors_in"], names))
    cfg = ex.ExperimentConfig(
        method=o["method"], dataset={"kind": "matrix-csv", "path": str(o["in"])},
        seed=o["seed"], r1=o["r1"], r2=o["r2"], budget_seconds=o["budget_seconds"],
        init=init, rel_improvement_eps=o["rel_improvement_eps"],
        max_outer_iters=o["max_outer_iters"], acol_sample_count=o["acol_sample_count"],
    )
    fac, rec = ex.fit(o["method"], R, o["r1"], o["r2"], cfg.fit_config(fixed))
    out = _out_dir(o)
    mats = (fac.U, fac.V) if two else (fac.G1, fac.S, fac.G2)
    for name, mat in zip(names, mats):
        write_matrix_csv(out / f"{name}.csv", mat)
    # wall-clock fields go to their own file so result.json is reproducible
    result = rec.to_dict()
    extra = result["extra"]
    timing = {
        "elapsed": result.pop("elapsed"),
        "trace": result["trace"],
        "phase_traces": result.pop("phase_traces"),
        "phase_boundary_seconds": extra.pop("phase_boundary_seconds", None),
    }
    result["trace"] = [v for _, v in rec.trace]
    result["resolved_options"] = o
    _write_json(out / "result.json", result)
    _write_json(out / "timing.json", timing)


def cmd_predict_network(o: Dict[str, Any]) -> None:
    part = _read_partition(o["partition"])
    G1, S, G2 = _read_factors(o["factors"], ("G1", "S", "G2"))
    fac = TriFactorization(G1, S, G2)
    pred = nw.predict_whole_network(fac, part)
    out = _out_dir(o)
    nw.write_edge_list(out / "predictions.txt",
                       [(u, v, w) for (u, v), w in sorted(pred.items(), key=lambda kv: (
                           nw.node_key(kv[0][0]), nw.node_key(kv[0][1])))], "u v predicted")
    lo, hi = ex.tropical_bounds(fac)
    values = np.fromiter(pred.values(), float)
    metrics: Dict[str, Any] = {
        "predicted_pairs": len(pred),
        "prediction_min": float(values.min()),
        "prediction_max": float(values.max()),
        "product_bounds": [lo, hi],
    }
    for key, flag in (("rmse_p", "held_out"), ("rmse_a", "train")):
        if o.get(flag):
            edges = nw.read_edge_list(o[flag]).edges
            value, unscored = ex._whole_network_errors(pred, edges)
            metrics[key] = value
            metrics[f"{flag}_edges_unscored"] = unscored
    _write_json(out / "metrics.json", metrics)


def cmd_bench(o: Dict[str, Any]) -> None:
    spec = json.loads(Path(o["config"]).read_text())
    configs = ex.expand_bench(spec)
    results_dir = o.get("results_dir") or spec.get("results_dir", "results")
    jobs = o["jobs"] if o.get("jobs") is not None else spec.get("jobs", 1)
    ex.run_experiment(configs, results_dir, spec.get("experiment", "experiment"), jobs)


def cmd_ingest_ants(o: Dict[str, Any]) -> None:
    table = nw.ingest_interactions(o["in"])
    if table.empty:
        raise ValueError(f"{o['in']} holds no interactions")
    days = _day_range(o["days"]) if o.get("days") else (int(table["day"].min()), int(table["day"].max()))
    net = nw.day_group_network(table, days)
    out = _out_dir(o)
    nw.write_edge_list(out / "edges.txt", net.edges, f"daily mean weight, days {days[0]}-{days[1]}")
    n = len(net.node_ids)
    stats: Dict[str, Any] = {
        "days": list(days),
        "nodes": n,
        "edges": len(net.edges),
        "density_unordered": net.density(),
        "density_ordered": 2 * len(net.edges) / (n * (n - 1)) if n > 1 else 0.0,
    }
    if o.get("kmeans"):
        sub = table[(table["day"] >= days[0]) & (table["day"] <= days[1])]
        H, pairs, day_cols = nw.pair_day_matrix(sub, net.node_ids)
        centroids, labels, history = nw.kmeans_rows(H, o["kmeans"], np.random.default_rng(o["seed"]))
        write_matrix_csv(out / "centroids.csv", centroids)
        with open(out / "pair_clusters.txt", "w") as fh:
            for (u, v), lab in zip(pairs, labels):
                fh.write(f"{u} {v} {int(lab)}\n")
        stats["kmeans"] = {"k": o["kmeans"], "days": [int(d) for d in day_cols],
                           "objective": history[-1], "iterations": len(history)}
    _write_json(out / "stats.json", stats)


# --------------------------------------------------------------------------
# argument handling


def _add(parser: argparse.ArgumentParser, *names, **kw) -> None:
    parser.add_argument(*names, default=argparse.SUPPRESS, **kw)


Command = Callable[[Dict[str, Any]], None]


def build_parser():
    parser = argparse.ArgumentParser(prog="trifaststmf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    table: Dict[str, tuple] = {}

    def command(name: str, fn: Command, defaults: Dict[str, Any], required=(), help=""):
        p = sub.add_parser(name, help=help, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", default=None, help="JSON object of option values")
        table[name] = (fn, defaults, tuple(required), p)
        return p

    p = command("synth-matrix", cmd_synth_matrix,
                {"rows": 200, "cols": 100, "r1": 25, "r2": 20, "seed": 0, "mask_fraction": 0.0},
                ("out",), "random tropical matrix G1 (x) S (x) G2")
    for flag in ("--rows", "--cols", "--r1", "--r2", "--seed"):
        _add(p, flag, type=int)
    _add(p, "--mask-fraction", type=float)
    _add(p, "--out")

    p = command("synth-network", cmd_synth_network,
                {"sizes": "45,10,15,30", "seed": 0, "held_out_fraction": 0.0},
                ("out",), "synthetic four-partition tropical network")
    _add(p, "--sizes", help="m,r1,r2,n")
    _add(p, "--seed", type=int)
    _add(p, "--held-out-fraction", type=float)
    _add(p, "--out")

    p = command("partition", cmd_partition,
                {"strategy": "louvain", "gamma_grid": "0.5,0.75,1,1.25,1.5,2", "mu_threshold": 0.7,
                 "seed": 0, "sizes": None, "truth": None},
                ("in", "out"), "assign X/Y/W/Z roles to nodes")
    _add(p, "--in")
    _add(p, "--strategy", choices=("random", "partial", "louvain"))
    _add(p, "--gamma-grid")
    _add(p, "--mu-threshold", type=float)
    _add(p, "--sizes", help="m,r1,r2,n")
    _add(p, "--truth", help="reference partition JSON")
    _add(p, "--seed", type=int)
    _add(p, "--out")

    p = command("build-matrices", cmd_build_matrices, {"seed": 0, "mask_zeros": False},
                ("in", "partition", "out"), "block matrices R, G1, S, G2 of a partitioned network")
    _add(p, "--in")
    _add(p, "--partition")
    _add(p, "--seed", type=int)
    _add(p, "--mask-zeros", action="store_true")
    _add(p, "--out")

    p = command("factorize", cmd_factorize,
                {"method": "triFastSTMF", "r1": None, "r2": None, "budget_seconds": 300.0,
                 "init": "acol", "factors_in": None, "seed": 0, "rel_improvement_eps": 1e-6,
                 "max_outer_iters": 1_000_000, "acol_sample_count": 5},
                ("in", "r1", "out"), "fit a tropical factorization to a CSV matrix")
    _add(p, "--in")
    _add(p, "--method")
    _add(p, "--r1", type=int)
    _add(p, "--r2", type=int)
    _add(p, "--budget-seconds", "--budget-secs", dest="budget_seconds", type=float)
    _add(p, "--init")
    _add(p, "--factors-in", help="directory with G1/S/G2.csv (U/V.csv for FastSTMF)")
    _add(p, "--seed", type=int)
    _add(p, "--rel-improvement-eps", type=float)
    _add(p, "--max-outer-iters", type=int)
    _add(p, "--acol-sample-count", type=int)
    _add(p, "--out")

    p = command("predict-network", cmd_predict_network, {"held_out": None, "train": None},
                ("factors", "partition", "out"), "whole-network prediction from tri-factors")
    _add(p, "--factors", help="directory with G1.csv, S.csv, G2.csv")
    _add(p, "--partition")
    _add(p, "--held-out", help="held-out edge list for RMSE-P")
    _add(p, "--train", help="training edge list for RMSE-A")
    _add(p, "--out")

    p = command("bench", cmd_bench, {"jobs": None, "results_dir": None}, ("config",),
                "run a benchmark protocol from a JSON spec")
    # bench's --config is the protocol spec itself
    p.set_defaults(bench=True)
    _add(p, "--jobs", type=int)
    _add(p, "--results-dir")

    p = command("ingest-ants", cmd_ingest_ants, {"days": None, "kmeans": None, "seed": 0},
                ("in", "out"), "daily-average interaction network from a u v weight day file")
    _add(p, "--in")
    _add(p, "--days", help="inclusive range a-b")
    _add(p, "--kmeans", type=int, help="cluster node pairs by their daily weights")
    _add(p, "--seed", type=int)
    _add(p, "--out")
    return parser, table


def resolve(args: argparse.Namespace, defaults: Dict[str, Any], required: Sequence[str]) -> Dict[str, Any]:
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose", "bench")}
    from_file: Dict[str, Any] = {}
    if args.config and not getattr(args, "bench", False):
        from_file = json.loads(Path(args.config).read_text())
        if not isinstance(from_file, dict):
            raise UsageError("--config must hold a JSON object")
        known = set(defaults) | set(required)
        unknown = sorted(set(from_file) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    if getattr(args, "bench", False):
        given["config"] = args.config
    opts = {**defaults, **from_file, **given}
    missing = [k for k in required if opts.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
    return opts


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser, table = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    fn, defaults, required, sub = table[args.command]
    try:
        opts = resolve(args, defaults, required)
        fn(opts)
    except UsageError as exc:
        sub.print_usage(sys.stderr)
        print(f"{sub.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, nw.PartitionError) as exc:
        print(f"{sub.prog}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
