"""Error metrics, partition agreement and the per-run metrics record."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .tropical import MaskedMatrix


@dataclass
class MetricsRecord:
    method: str
    seed: int
    rmse_a: float
    rmse_p: Optional[float] = None
    trace: List[Tuple[float, float]] = field(default_factory=list)
    final_bnorm: Optional[float] = None
    elapsed: Optional[float] = None
    dataset: Optional[str] = None
    partition_sizes: Optional[Tuple[int, int, int, int]] = None
    mu: Optional[int] = None
    rand_score: Optional[float] = None
    phase_traces: Dict[str, List[Tuple[float, float]]] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def initial_bnorm(self) -> Optional[float]:
        return self.trace[0][1] if self.trace else None

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["trace"] = [list(p) for p in self.trace]
        out["phase_traces"] = {
            k: [list(p) for p in v] for k, v in self.phase_traces.items()
        }
        if self.partition_sizes is not None:
            out["partition_sizes"] = list(self.partition_sizes)
        return _json_safe(out)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricsRecord":
        d = dict(d)
        d["trace"] = [tuple(p) for p in d.get("trace", [])]
        d["phase_traces"] = {
            k: [tuple(p) for p in v] for k, v in d.get("phase_traces", {}).items()
        }
        if d.get("partition_sizes") is not None:
            d["partition_sizes"] = tuple(d["partition_sizes"])
        return cls(**d)


def _json_safe(obj):
    # NaN/inf are not valid JSON
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def rmse(pred, truth, mask=None) -> float:
    """Root-mean-square error over ``mask`` (default: observed entries of truth).

    Returns NaN for an empty mask.
    """
    p = pred.data if isinstance(pred, MaskedMatrix) else np.asarray(pred, float)
    if isinstance(truth, MaskedMatrix):
        t = truth.data
        default = truth.observed
    else:
        t = np.asarray(truth, float)
        default = ~np.isnan(t)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    sel = default if mask is None else np.asarray(mask, dtype=bool)
    if sel.shape != t.shape:
        raise ValueError("mask shape does not match")
    if not sel.any():
        return math.nan
    diff = p[sel] - t[sel]
    return float(np.sqrt(np.mean(diff * diff)))


def _labels(p) -> Dict[Any, Any]:
    if hasattr(p, "assignment"):
        return dict(p.assignment)
    if isinstance(p, Mapping):
        return dict(p)
    return dict(enumerate(p))


def rand_score(p1, p2) -> float:
    """Fraction of unordered node pairs on which two clusterings agree.

    Accepts ``FourPartition`` objects, ``{node: label}`` mappings or label
    sequences.  Both must cover the same nodes.
    """
    a, b = _labels(p1), _labels(p2)
    if a.keys() != b.keys():
        raise ValueError("partitions cover different node sets")
    n = len(a)
    if n < 2:
        return 1.0
    total = n * (n - 1) // 2
    joint = Counter((a[v], b[v]) for v in a)
    sa = Counter(a.values())
    sb = Counter(b.values())

    def pairs(c):
        return sum(x * (x - 1) // 2 for x in c.values())

    same_both = pairs(joint)
    agree = total + 2 * same_both - pairs(sa) - pairs(sb)
    return agree / total


def quartiles(values: Sequence[float]) -> Tuple[float, float, float]:
    """(Q1, median, Q3) with linear interpolation between order statistics."""
    if len(values) == 0:
        raise ValueError("no values")
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q1), float(med), float(q3)
