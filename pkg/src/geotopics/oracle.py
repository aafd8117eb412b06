"""Dense reference implementations of every kernel, for tests only.

Everything here densifies and loops; it is the independent arm of each
dual-route check and must stay naive. A hard size guard keeps accidental
use on large instances from eating CI time.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import OracleSizeError
from .tensor import CPModel, SparseTensor3

MAX_CELLS = 1_000_000


def _guard(dims: Sequence[int]) -> None:
    cells = 1
    for d in dims:
        cells *= int(d)
    if cells > MAX_CELLS:
        raise OracleSizeError(
            f"dense oracle refused: {tuple(dims)} has {cells} cells > {MAX_CELLS}"
        )


def to_dense(x: SparseTensor3) -> np.ndarray:
    _guard(x.dims)
    dense = np.zeros(x.dims, dtype=np.float64)
    for (m, n, o), v in zip(x.coords, x.values):
        dense[m, n, o] += v
    return dense


def reconstruct_dense(model: CPModel) -> np.ndarray:
    _guard(model.dims)
    u, l, t = model.factors
    return np.einsum("r,mr,nr,or->mno", model.weights, u, l, t)


def residual_dense(x: SparseTensor3, model: CPModel) -> float:
    """Cell-by-cell squared residual."""
    diff = to_dense(x) - reconstruct_dense(model)
    return float(np.sum(diff * diff))


def objective_dense(x: SparseTensor3, model: CPModel) -> float:
    return residual_dense(x, model)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; row (i * b_rows + j) is a[i] * b[j]."""
    rows_a, rank = a.shape
    rows_b, rank_b = b.shape
    assert rank == rank_b
    return np.einsum("ir,jr->ijr", a, b).reshape(rows_a * rows_b, rank)


def matricize_dense(dense: np.ndarray, mode: int) -> np.ndarray:
    """Unfold a dense 3-way array under the package's index convention."""
    md, nd, od = dense.shape
    if mode == 1:
        return dense.transpose(0, 2, 1).reshape(md, od * nd)
    if mode == 2:
        return dense.transpose(1, 2, 0).reshape(nd, od * md)
    if mode == 3:
        return dense.transpose(2, 1, 0).reshape(od, nd * md)
    raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


def mttkrp_dense(x: SparseTensor3, a: np.ndarray, b: np.ndarray, mode: int) -> np.ndarray:
    """Explicit matricization times explicit Khatri-Rao product."""
    _guard(x.dims)
    return matricize_dense(to_dense(x), mode) @ khatri_rao(a, b)


def gram_hadamard_naive(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-step computation: form both Grams with loops, then multiply."""
    rank = a.shape[1]
    ga = np.zeros((rank, rank))
    gb = np.zeros((rank, rank))
    for r in range(rank):
        for s in range(rank):
            ga[r, s] = float(np.dot(a[:, r], a[:, s]))
            gb[r, s] = float(np.dot(b[:, r], b[:, s]))
    return ga * gb


def flatten_time_dense(x: SparseTensor3) -> np.ndarray:
    """(term x time) marginal, summing over locations."""
    return to_dense(x).sum(axis=1)


def flatten_location_dense(x: SparseTensor3) -> np.ndarray:
    """(term x location) marginal, summing over time."""
    return to_dense(x).sum(axis=2)


def gradient_dense(x: SparseTensor3, model: CPModel, mode: int) -> np.ndarray:
    """Analytic objective gradient wrt one factor matrix, from dense operands.

    For mode k with unfolding Xk, Khatri-Rao product K of the two fixed
    factors and factor F: grad = 2 (F K^T K - Xk K). Weights must be 1
    (the solver-internal convention).
    """
    _guard(x.dims)
    if not np.all(model.weights == 1.0):
        raise ValueError("gradient oracle assumes unit weights")
    u, l, t = model.factors
    fixed = {1: (t, l), 2: (t, u), 3: (l, u)}[mode]
    kr = khatri_rao(*fixed)
    f = model.factors[mode - 1]
    xk = matricize_dense(to_dense(x), mode)
    return 2.0 * (f @ (kr.T @ kr) - xk @ kr)


def gradient_fd(
    x: SparseTensor3, model: CPModel, mode: int, step: float = 1e-4
) -> np.ndarray:
    """Central finite differences of the dense objective wrt one factor matrix."""
    _guard(x.dims)
    f = model.factors[mode - 1]
    out = np.zeros_like(f)
    work = model.copy()
    wf = work.factors[mode - 1]
    for i in range(f.shape[0]):
        for r in range(f.shape[1]):
            orig = wf[i, r]
            wf[i, r] = orig + step
            hi = objective_dense(x, work)
            wf[i, r] = orig - step
            lo = objective_dense(x, work)
            wf[i, r] = orig
            out[i, r] = (hi - lo) / (2.0 * step)
    return out
