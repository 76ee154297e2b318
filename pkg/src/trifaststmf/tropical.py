"""Max-plus / min-plus algebra on dense matrices with observation masks.

Negative infinity is the tropical zero.  Positive infinity only shows up
transiently, as the negation of ``NEG_INF`` inside min-plus reductions, and
as the marker for an empty (fully masked) reduction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

NEG_INF = -math.inf
POS_INF = math.inf


@dataclass(frozen=True)
class MaskedMatrix:
    """Dense matrix plus a same-shape boolean ``observed`` array.

    Unobserved entries are never read by norms, products or solvers; their
    ``data`` value is irrelevant (the reader stores NaN there).
    """

    data: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        observed = np.array(self.observed, dtype=bool)
        if data.ndim != 2:
            raise ValueError(f"expected a 2-d matrix, got shape {data.shape}")
        if data.shape != observed.shape:
            raise ValueError(
                f"data shape {data.shape} != observed shape {observed.shape}"
            )
        data.flags.writeable = False
        observed.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "observed", observed)

    @classmethod
    def full(cls, data) -> "MaskedMatrix":
        data = np.asarray(data, dtype=float)
        return cls(data, np.ones(data.shape, dtype=bool))

    @classmethod
    def from_nan(cls, data) -> "MaskedMatrix":
        """NaN marks a missing entry; ``-inf`` stays an observed tropical zero."""
        data = np.asarray(data, dtype=float)
        return cls(data, ~np.isnan(data))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def fully_observed(self) -> bool:
        return bool(self.observed.all())

    @property
    def T(self) -> "MaskedMatrix":
        return MaskedMatrix(self.data.T, self.observed.T)

    def take_rows(self, index) -> "MaskedMatrix":
        return MaskedMatrix(self.data[index], self.observed[index])

    def with_nan(self) -> np.ndarray:
        """Copy of ``data`` with NaN in every unobserved slot."""
        out = np.array(self.data, dtype=float)
        out[~self.observed] = np.nan
        return out

    def __eq__(self, other):
        if not isinstance(other, MaskedMatrix):
            return NotImplemented
        if self.shape != other.shape:
            return False
        if not np.array_equal(self.observed, other.observed):
            return False
        a = self.data[self.observed]
        b = other.data[other.observed]
        return bool(np.array_equal(a, b))

    __hash__ = None


MatrixLike = Union[MaskedMatrix, np.ndarray]


def _split(x) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    if isinstance(x, MaskedMatrix):
        mask = None if x.fully_observed else x.observed
        return x.data, mask
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {arr.shape}")
    return arr, None


def _dense(x, name: str) -> np.ndarray:
    data, mask = _split(x)
    if mask is not None:
        raise ValueError(f"{name} must be fully observed")
    return data


# --------------------------------------------------------------------------
# scalars


def trop_add(a: float, b: float) -> float:
    """Tropical sum: ``max(a, b)``."""
    return max(a, b)


def trop_mul(a: float, b: float) -> float:
    """Tropical product: ``a + b`` with ``NEG_INF`` absorbing."""
    if a == NEG_INF or b == NEG_INF:
        return NEG_INF
    return a + b


# --------------------------------------------------------------------------
# products


def maxplus_matmul(A: MatrixLike, B: MatrixLike) -> np.ndarray:
    """``(A ⊗ B)_ij = max_k A_ik + B_kj``."""
    a = _dense(A, "A")
    b = _dense(B, "B")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} ⊗ {b.shape}")
    out = np.full((a.shape[0], b.shape[1]), NEG_INF)
    with np.errstate(invalid="ignore"):
        for k in range(a.shape[1]):
            term = a[:, k, None] + b[None, k, :]
            # -inf + inf: the tropical zero wins
            term[np.isnan(term)] = NEG_INF
            np.maximum(out, term, out=out)
    return out


def minplus_matmul(A: MatrixLike, B: MatrixLike) -> np.ndarray:
    """``(A ⊗* B)_ij = min_k A_ik + B_kj`` skipping unobserved operand entries.

    An entry whose every term was skipped comes back as ``POS_INF``.
    """
    a, amask = _split(A)
    b, bmask = _split(B)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} ⊗* {b.shape}")
    if amask is not None:
        a = np.where(amask, a, POS_INF)
    if bmask is not None:
        b = np.where(bmask, b, POS_INF)
    out = np.full((a.shape[0], b.shape[1]), POS_INF)
    with np.errstate(invalid="ignore"):
        for k in range(a.shape[1]):
            term = a[:, k, None] + b[None, k, :]
            # inf + -inf: an absent constraint stays absent
            term[np.isnan(term)] = POS_INF
            np.minimum(out, term, out=out)
    return out


def neg_transpose(A: MatrixLike) -> np.ndarray:
    """``(-A)^T``; ``NEG_INF`` becomes ``POS_INF``."""
    return -_dense(A, "A").T


def tropical_identity(n: int) -> np.ndarray:
    eye = np.full((n, n), NEG_INF)
    np.fill_diagonal(eye, 0.0)
    return eye


# --------------------------------------------------------------------------
# order and norms


def matrix_leq(A: MatrixLike, B: MatrixLike) -> bool:
    """``A ⪯ B`` on entries observed in both."""
    a, amask = _split(A)
    b, bmask = _split(B)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    both = np.ones(a.shape, dtype=bool)
    if amask is not None:
        both &= amask
    if bmask is not None:
        both &= bmask
    return bool(np.all(a[both] <= b[both]))


def b_norm(A: MatrixLike, B: Optional[MatrixLike] = None) -> float:
    """Sum of absolute entries of ``A`` (or of ``A - B``) over observed entries.

    Equal infinities contribute zero.
    """
    a, amask = _split(A)
    both = np.ones(a.shape, dtype=bool) if amask is None else amask.copy()
    if B is None:
        vals = a[both]
        return float(np.abs(vals).sum())
    b, bmask = _split(B)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if bmask is not None:
        both &= bmask
    x, y = a[both], b[both]
    with np.errstate(invalid="ignore"):
        diff = np.abs(x - y)
    diff[x == y] = 0.0
    return float(diff.sum())


# --------------------------------------------------------------------------
# greatest subsolutions


def greatest_subsolution_left(A: MatrixLike, C: MatrixLike) -> np.ndarray:
    """Largest ``X`` with ``A ⊗ X ⪯ C`` on the observed entries of ``C``.

    Closed form ``(-A)^T ⊗* C``.  Unconstrained entries are ``POS_INF``.
    """
    a = _dense(A, "A")
    c, _ = _split(C)
    if a.shape[0] != c.shape[0]:
        raise ValueError(f"row counts differ: A {a.shape}, C {c.shape}")
    return minplus_matmul(neg_transpose(a), C)


def greatest_subsolution_right(B: MatrixLike, C: MatrixLike) -> np.ndarray:
    """Largest ``Z`` with ``Z ⊗ B ⪯ C``, i.e. ``C ⊗* (-B)^T``."""
    b = _dense(B, "B")
    c, _ = _split(C)
    if b.shape[1] != c.shape[1]:
        raise ValueError(f"column counts differ: B {b.shape}, C {c.shape}")
    return minplus_matmul(C, neg_transpose(b))


def greatest_subsolution_sandwich(
    A: MatrixLike, B: MatrixLike, C: MatrixLike
) -> np.ndarray:
    """Largest ``X`` with ``A ⊗ X ⊗ B ⪯ C``: ``(-A)^T ⊗* C ⊗* (-B)^T``."""
    b = _dense(B, "B")
    c, _ = _split(C)
    if b.shape[1] != c.shape[1]:
        raise ValueError(f"column counts differ: B {b.shape}, C {c.shape}")
    left = greatest_subsolution_left(A, C)
    return minplus_matmul(left, neg_transpose(b))


# --------------------------------------------------------------------------
# CSV


def _format_cell(value: float, observed: bool) -> str:
    if not observed:
        return ""
    if value == NEG_INF:
        return "-inf"
    if value == POS_INF:
        return "inf"
    return repr(float(value))


def _parse_cell(text: str) -> float:
    text = text.strip()
    if text == "" or text.lower() == "nan":
        return math.nan
    return float(text)


def write_matrix_csv(path, M: MatrixLike) -> None:
    """One row per line, no header; missing entries are empty fields."""
    if not isinstance(M, MaskedMatrix):
        M = MaskedMatrix.from_nan(M)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row, obs in zip(M.data, M.observed):
            writer.writerow([_format_cell(v, o) for v, o in zip(row, obs)])


def read_matrix_csv(path) -> MaskedMatrix:
    rows = []
    with open(Path(path), newline="") as fh:
        for line in csv.reader(fh):
            if not line:
                continue
            rows.append([_parse_cell(cell) for cell in line])
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows")
    return MaskedMatrix.from_nan(np.array(rows, dtype=float))
