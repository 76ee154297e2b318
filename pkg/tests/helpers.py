"""Shared fixtures-as-functions for the test modules."""

import numpy as np

from trifaststmf.tropical import maxplus_matmul


def tri(G1, S, G2):
    return maxplus_matmul(maxplus_matmul(G1, S), G2)


def exact_instance(rng, m, r1, r2, n, integer=True):
    """``R = G1 ⊗ S ⊗ G2`` from integer or uniform [0, 10) factors."""
    shapes = ((m, r1), (r1, r2), (r2, n))
    if integer:
        G1, S, G2 = (rng.integers(0, 10, s).astype(float) for s in shapes)
    else:
        G1, S, G2 = (rng.uniform(0, 10, s) for s in shapes)
    return tri(G1, S, G2), (G1, S, G2)


def assert_monotone(trace):
    times = [t for t, _ in trace]
    values = [v for _, v in trace]
    assert all(a < b for a, b in zip(times, times[1:]))
    assert all(a >= b for a, b in zip(values, values[1:]))
