"""Coordinate-format sparse tensors and the multilinear kernels behind the solvers.

The tensor of interest is a 3-way nonnegative count tensor over
(term, location, time). Entries are stored COO-style, lexicographically
sorted, with duplicates summed at build time. All kernels stream the
nonzeros; nothing here ever materializes a dense tensor or a matricization.

Kernels are written against index-array + factor-list primitives so the
two-mode matrix case (see :mod:`geotopics.nmf`) reuses the same code paths.
Hot loops deliberately use ``np.einsum``/``np.add.at`` instead of BLAS
calls: the summation order is then fixed, which keeps every result
bit-identical regardless of how many threads the host BLAS would use.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvariantError, ShapeError

Dims3 = tuple[int, int, int]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _validate_coo(coords: np.ndarray, values: np.ndarray, dims: Sequence[int]) -> None:
    """Bounds/value checks shared by tensors and matrices. Errors name the offender."""
    for extent in dims:
        if not (isinstance(extent, (int, np.integer)) and extent > 0):
            raise ValueError(f"dims must be positive integers, got {tuple(dims)}")
    if coords.shape[1] != len(dims):
        raise ShapeError(f"coordinate width {coords.shape[1]} does not match dims {tuple(dims)}")
    if coords.shape[0] == 0:
        return
    for k, extent in enumerate(dims):
        bad = (coords[:, k] < 0) | (coords[:, k] >= extent)
        if bad.any():
            i = int(np.nonzero(bad)[0][0])
            raise IndexError(
                f"entry {tuple(int(c) for c in coords[i])} out of bounds for dims {tuple(dims)}"
            )
    finite = np.isfinite(values)
    if not finite.all():
        i = int(np.nonzero(~finite)[0][0])
        raise ValueError(f"non-finite value at entry {tuple(int(c) for c in coords[i])}")
    neg = values < 0
    if neg.any():
        i = int(np.nonzero(neg)[0][0])
        raise ValueError(
            f"negative value {values[i]} at entry {tuple(int(c) for c in coords[i])}"
        )


def _dedupe_sort(coords: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum duplicate coordinates, drop exact zeros, sort lexicographically.

    Entries inside a duplicate group are summed in ascending value order, so
    the result is bit-identical under any permutation of the input.
    """
    if coords.shape[0] == 0:
        return coords, values
    keys = tuple(coords[:, k] for k in reversed(range(coords.shape[1])))
    order = np.lexsort((values,) + keys)
    coords = coords[order]
    values = values[order]
    change = np.any(coords[1:] != coords[:-1], axis=1)
    starts = np.concatenate(([0], np.nonzero(change)[0] + 1))
    summed = np.add.reduceat(values, starts)
    coords = coords[starts]
    keep = summed > 0
    return coords[keep], summed[keep]


@dataclass(frozen=True)
class SparseTensor3:
    """Immutable 3-way COO tensor with strictly positive, finite entries.

    ``coords`` is an (nnz, 3) int64 array of (term, location, time) indices,
    unique and lexicographically sorted; ``values`` the matching float64
    entries. Use :func:`build_coo` to construct one; the constructor trusts
    its inputs. Safe to share read-only across threads.
    """

    dims: Dims3
    coords: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def mass(self) -> float:
        """Sum of all entries (total retained token occurrences for corpora)."""
        return float(np.sum(self.values))


def build_coo(
    entries: Iterable[tuple[int, int, int, float]], dims: Sequence[int]
) -> SparseTensor3:
    """Build a sparse tensor from (m, n, o, value) tuples.

    Duplicated coordinates are summed, zero results dropped, and the entry
    list sorted, so any permutation of the input yields an identical tensor.
    Out-of-range indices raise ``IndexError``; negative or non-finite values
    raise ``ValueError``.
    """
    rows = list(entries)
    if rows:
        coords = np.asarray([r[:3] for r in rows], dtype=np.int64)
        values = np.asarray([r[3] for r in rows], dtype=np.float64)
    else:
        coords = np.zeros((0, 3), dtype=np.int64)
        values = np.zeros(0, dtype=np.float64)
    return build_coo_arrays(coords, values, dims)


def build_coo_arrays(
    coords: np.ndarray, values: np.ndarray, dims: Sequence[int]
) -> SparseTensor3:
    """Array-based variant of :func:`build_coo` (same validation and semantics)."""
    if len(dims) != 3:
        raise ShapeError(f"expected 3 dims, got {tuple(dims)}")
    coords = np.ascontiguousarray(np.asarray(coords, dtype=np.int64).reshape(-1, 3))
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if coords.shape[0] != values.shape[0]:
        raise ShapeError("coords and values length mismatch")
    _validate_coo(coords, values, dims)
    coords, values = _dedupe_sort(coords, values)
    return SparseTensor3(
        dims=(int(dims[0]), int(dims[1]), int(dims[2])),
        coords=_readonly(coords),
        values=_readonly(values),
    )


# ---------------------------------------------------------------------------
# CP model


@dataclass
class CPModel:
    """Rank-R CP model: component weights plus one nonnegative factor matrix per mode.

    ``factors`` holds the (terms M x R, locations N x R, times O x R)
    matrices. Scaling column r of any factor by c > 0 while scaling
    ``weights[r]`` by 1/c leaves every reconstructed entry unchanged; the
    solvers keep weights at 1 and pattern extraction moves column scales
    into the weights.
    """

    weights: np.ndarray
    factors: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.factors = tuple(np.asarray(f, dtype=np.float64) for f in self.factors)
        if len(self.factors) != 3:
            raise ShapeError("CPModel needs exactly three factor matrices")
        rank = self.weights.shape[0]
        for k, f in enumerate(self.factors):
            if f.ndim != 2 or f.shape[1] != rank:
                raise ShapeError(f"factor {k} has shape {f.shape}, expected (rows, {rank})")
            if not np.isfinite(f).all():
                raise InvariantError(f"factor matrix {k} has a non-finite entry")
            if (f < 0).any():
                raise InvariantError(f"factor matrix {k} has a negative entry")
        if not np.isfinite(self.weights).all() or (self.weights < 0).any():
            raise InvariantError("weights must be finite and nonnegative")

    @property
    def rank(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dims(self) -> Dims3:
        return tuple(int(f.shape[0]) for f in self.factors)  # type: ignore[return-value]

    @property
    def term_factor(self) -> np.ndarray:
        return self.factors[0]

    @property
    def location_factor(self) -> np.ndarray:
        return self.factors[1]

    @property
    def time_factor(self) -> np.ndarray:
        return self.factors[2]

    def copy(self) -> "CPModel":
        return CPModel(self.weights.copy(), tuple(f.copy() for f in self.factors))


# ---------------------------------------------------------------------------
# Mode-generic streaming kernels (shared with the two-mode matrix case)


def factor_gram(f: np.ndarray) -> np.ndarray:
    """F^T F via einsum (BLAS-free, bitwise reproducible)."""
    return np.einsum("ir,is->rs", f, f)


def gram_product(factors: Sequence[np.ndarray | None], skip: int | None = None) -> np.ndarray:
    """Hadamard product of the Gram matrices of all factors except ``skip``."""
    out: np.ndarray | None = None
    for k, f in enumerate(factors):
        if k == skip or f is None:
            continue
        g = factor_gram(f)
        out = g if out is None else out * g
    assert out is not None
    return out


def coo_mttkrp(
    coords: np.ndarray,
    values: np.ndarray,
    factors: Sequence[np.ndarray | None],
    mode: int,
    rows: int,
) -> np.ndarray:
    """Matricized-tensor times Khatri-Rao product, streamed over nonzeros.

    ``factors[mode]`` may be None (only the other factors are read). The
    accumulation order is the sorted entry order, so results are
    deterministic; per-thread partials are unnecessary at desk scale.
    """
    rank = next(f.shape[1] for k, f in enumerate(factors) if k != mode and f is not None)
    out = np.zeros((rows, rank), dtype=np.float64)
    if coords.shape[0] == 0:
        return out
    contrib: np.ndarray | None = None
    for k, f in enumerate(factors):
        if k == mode:
            continue
        rows_k = f[coords[:, k]]
        if contrib is None:
            contrib = rows_k.copy()
        else:
            contrib *= rows_k
    assert contrib is not None
    contrib *= values[:, None]
    np.add.at(out, coords[:, mode], contrib)
    return out


def entry_predictions(
    coords: np.ndarray, factors: Sequence[np.ndarray], weights: np.ndarray | None = None
) -> np.ndarray:
    """Model values at the given coordinates, one float per coordinate row."""
    nnz = coords.shape[0]
    rank = factors[0].shape[1]
    if nnz == 0:
        return np.zeros(0, dtype=np.float64)
    prod = np.ones((nnz, rank), dtype=np.float64)
    for k, f in enumerate(factors):
        prod *= f[coords[:, k]]
    if weights is None:
        return np.einsum("er->e", prod)
    return np.einsum("er,r->e", prod, weights)


def model_sq_norm(factors: Sequence[np.ndarray], weights: np.ndarray | None = None) -> float:
    """||model||_F^2 via the Gram identity; never densifies."""
    g = gram_product(factors)
    if weights is None:
        return float(np.einsum("rs->", g))
    return float(np.einsum("r,rs,s->", weights, g, weights))


def coo_residual_sq(
    coords: np.ndarray,
    values: np.ndarray,
    factors: Sequence[np.ndarray],
    weights: np.ndarray | None = None,
) -> float:
    """||X - model||^2 over all cells: ||X||^2 - 2<X, model> + ||model||^2."""
    frob = float(np.sum(values * values))
    inner = float(np.sum(values * entry_predictions(coords, factors, weights)))
    return max(0.0, frob - 2.0 * inner + model_sq_norm(factors, weights))


# ---------------------------------------------------------------------------
# Public 3-way operations


def frobenius_sq(x: SparseTensor3) -> float:
    """Sum of squared entries; 0 for an empty tensor."""
    return float(np.sum(x.values * x.values))


def reconstruct_entry(model: CPModel, m: int, n: int, o: int) -> float:
    """Model value at cell (m, n, o): sum_r w_r * U[m,r] * L[n,r] * T[o,r]."""
    for idx, extent, name in zip((m, n, o), model.dims, "mno"):
        if not 0 <= idx < extent:
            raise IndexError(f"index {name}={idx} out of range [0, {extent})")
    u, l, t = model.factors
    return float(np.sum(model.weights * u[m] * l[n] * t[o]))


def residual_sq(x: SparseTensor3, model: CPModel) -> float:
    """Exact squared residual over all M*N*O cells, computed sparsely."""
    if model.dims != x.dims:
        raise ShapeError(f"model dims {model.dims} != tensor dims {x.dims}")
    return coo_residual_sq(x.coords, x.values, model.factors, model.weights)


# Khatri-Rao orderings used by the per-mode update rules: the two fixed
# factors of mode 1 are (T, L), of mode 2 (T, U), of mode 3 (L, U).
_MTTKRP_SLOTS = {1: (2, 1), 2: (2, 0), 3: (1, 0)}


def mttkrp(x: SparseTensor3, a: np.ndarray, b: np.ndarray, mode: int) -> np.ndarray:
    """X_mode (A kr B) without materializing either operand.

    ``a`` and ``b`` are the factor matrices of the two modes other than
    ``mode``, ordered as in the update rules: mode 1 takes (T, L), mode 2
    (T, U), mode 3 (L, U). Returns a dense (mode extent x R) table.
    """
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"rank mismatch: A is {a.shape}, B is {b.shape}")
    slot_a, slot_b = _MTTKRP_SLOTS[mode]
    if a.shape[0] != x.dims[slot_a] or b.shape[0] != x.dims[slot_b]:
        raise ShapeError(
            f"mode-{mode} mttkrp on dims {x.dims} needs A with {x.dims[slot_a]} rows "
            f"and B with {x.dims[slot_b]} rows, got {a.shape[0]} and {b.shape[0]}"
        )
    factors: list[np.ndarray | None] = [None, None, None]
    factors[slot_a] = a
    factors[slot_b] = b
    return coo_mttkrp(x.coords, x.values, factors, mode - 1, x.dims[mode - 1])


def gram_hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(A^T A) * (B^T B), the R x R normal-equation matrix of two fixed modes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"rank mismatch: A is {a.shape}, B is {b.shape}")
    return factor_gram(a) * factor_gram(b)


def matricize_index(
    mode: int, m: int, n: int, o: int, dims: Sequence[int]
) -> tuple[int, int]:
    """(row, col) of cell (m, n, o) in the mode-1/2/3 unfolding convention.

    Only tests use this; the kernels never build an unfolding. The column
    orderings match the Khatri-Rao orderings of :func:`mttkrp`.
    """
    md, nd, od = dims
    for idx, extent, name in zip((m, n, o), (md, nd, od), "mno"):
        if not 0 <= idx < extent:
            raise IndexError(f"index {name}={idx} out of range [0, {extent})")
    if mode == 1:
        return m, n + o * nd
    if mode == 2:
        return n, m + o * md
    if mode == 3:
        return o, m + n * md
    raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


# ---------------------------------------------------------------------------
# COO text format: header "M N O NNZ", then one "m n o value" line per entry.


def format_float(v: float) -> str:
    """Shortest decimal that round-trips the float exactly."""
    return repr(float(v))


def write_tensor(x: SparseTensor3, path: str | Path) -> None:
    """Write the COO text form; entries come out sorted."""
    lines = [f"{x.dims[0]} {x.dims[1]} {x.dims[2]} {x.nnz}"]
    for (m, n, o), v in zip(x.coords, x.values):
        lines.append(f"{m} {n} {o} {format_float(v)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_tensor(path: str | Path) -> SparseTensor3:
    """Read the COO text form; entries may appear in any order."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty tensor file")
    head = lines[0].split()
    if len(head) != 4:
        raise ValueError(f"{path}: bad header {lines[0]!r}, expected 'M N O NNZ'")
    m, n, o, nnz = (int(v) for v in head)
    if len(lines) - 1 != nnz:
        raise ValueError(f"{path}: header promises {nnz} entries, found {len(lines) - 1}")
    coords = np.zeros((nnz, 3), dtype=np.int64)
    values = np.zeros(nnz, dtype=np.float64)
    for i, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{i + 2}: bad entry line {ln!r}")
        coords[i] = [int(parts[0]), int(parts[1]), int(parts[2])]
        values[i] = float(parts[3])
    return build_coo_arrays(coords, values, (m, n, o))
