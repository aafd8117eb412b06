"""NMF comparison arm: factorize the (term x time) and (term x location) marginals.

Flattening the tensor along one mode reproduces the matrices a matrix-based
pipeline would have built directly from the corpus, so fitting them with
the same projected coordinate-descent core gives a like-for-like comparison
whose only difference is the data model. What the matrices cannot carry is
the coupling between spatial and temporal patterns; the association tests
in :mod:`geotopics.patterns` make that loss observable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeError
from .solver import SolverConfig, SolverTrace, _draw_factors, run_coordinate_descent
from .tensor import (
    SparseTensor3,
    _dedupe_sort,
    _readonly,
    _validate_coo,
    format_float,
)

Dims2 = tuple[int, int]


@dataclass(frozen=True)
class SparseMatrix:
    """Two-mode analogue of SparseTensor3: sorted, deduplicated COO entries."""

    dims: Dims2
    coords: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def mass(self) -> float:
        return float(np.sum(self.values))


def build_matrix_coo_arrays(
    coords: np.ndarray, values: np.ndarray, dims: Sequence[int]
) -> SparseMatrix:
    if len(dims) != 2:
        raise ShapeError(f"expected 2 dims, got {tuple(dims)}")
    coords = np.ascontiguousarray(np.asarray(coords, dtype=np.int64).reshape(-1, 2))
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if coords.shape[0] != values.shape[0]:
        raise ShapeError("coords and values length mismatch")
    _validate_coo(coords, values, dims)
    coords, values = _dedupe_sort(coords, values)
    return SparseMatrix(
        dims=(int(dims[0]), int(dims[1])),
        coords=_readonly(coords),
        values=_readonly(values),
    )


def build_matrix_coo(
    entries: Iterable[tuple[int, int, float]], dims: Sequence[int]
) -> SparseMatrix:
    rows = list(entries)
    if rows:
        coords = np.asarray([r[:2] for r in rows], dtype=np.int64)
        values = np.asarray([r[2] for r in rows], dtype=np.float64)
    else:
        coords = np.zeros((0, 2), dtype=np.int64)
        values = np.zeros(0, dtype=np.float64)
    return build_matrix_coo_arrays(coords, values, dims)


@dataclass
class NMFModel:
    """Nonnegative factor pair approximating a matrix as W H^T."""

    W: np.ndarray
    H: np.ndarray

    def __post_init__(self) -> None:
        self.W = np.asarray(self.W, dtype=np.float64)
        self.H = np.asarray(self.H, dtype=np.float64)
        if self.W.ndim != 2 or self.H.ndim != 2 or self.W.shape[1] != self.H.shape[1]:
            raise ShapeError(f"W is {self.W.shape}, H is {self.H.shape}: ranks differ")
        for name, f in (("W", self.W), ("H", self.H)):
            if not np.isfinite(f).all() or (f < 0).any():
                raise ValueError(f"{name} must be finite and nonnegative")

    @property
    def rank(self) -> int:
        return int(self.W.shape[1])

    @property
    def dims(self) -> Dims2:
        return int(self.W.shape[0]), int(self.H.shape[0])


def flatten_time(x: SparseTensor3) -> SparseMatrix:
    """(term x time) marginal: entry (m, o) sums X[m, :, o]."""
    return build_matrix_coo_arrays(
        x.coords[:, [0, 2]], x.values, (x.dims[0], x.dims[2])
    )


def flatten_location(x: SparseTensor3) -> SparseMatrix:
    """(term x location) marginal: entry (m, n) sums X[m, n, :]."""
    return build_matrix_coo_arrays(
        x.coords[:, [0, 1]], x.values, (x.dims[0], x.dims[1])
    )


def nmf_factorize(
    mx: SparseMatrix, config: SolverConfig, init: NMFModel | None = None
) -> tuple[NMFModel, SolverTrace]:
    """Fit min ||M - W H^T||^2 with W, H >= 0, by the tensor solver's CCD core.

    Same stopping, determinism, monotonicity, and dead-column behaviour as
    :func:`geotopics.solver.factorize`, restricted to two modes.
    """
    if mx.nnz == 0:
        raise ValueError("cannot factorize an empty matrix")
    rng = np.random.default_rng(config.seed)
    if init is None:
        factors = _draw_factors(mx.dims, config.rank, rng)
    else:
        if init.dims != mx.dims or init.rank != config.rank:
            raise ShapeError(
                f"init model is {init.dims} rank {init.rank}, "
                f"need {mx.dims} rank {config.rank}"
            )
        factors = [init.W.copy(), init.H.copy()]
    trace = run_coordinate_descent(mx.coords, mx.values, factors, config, rng)
    return NMFModel(factors[0], factors[1]), trace


# ---------------------------------------------------------------------------
# Matrix COO text format ("ROWS COLS NNZ" header) and model export.


def write_matrix(mx: SparseMatrix, path: str | Path) -> None:
    lines = [f"{mx.dims[0]} {mx.dims[1]} {mx.nnz}"]
    for (i, j), v in zip(mx.coords, mx.values):
        lines.append(f"{i} {j} {format_float(v)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_matrix(path: str | Path) -> SparseMatrix:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    head = lines[0].split()
    if len(head) != 3:
        raise ValueError(f"{path}: bad header {lines[0]!r}, expected 'ROWS COLS NNZ'")
    rows, cols, nnz = (int(v) for v in head)
    if len(lines) - 1 != nnz:
        raise ValueError(f"{path}: header promises {nnz} entries, found {len(lines) - 1}")
    coords = np.zeros((nnz, 2), dtype=np.int64)
    values = np.zeros(nnz, dtype=np.float64)
    for i, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{i + 2}: bad entry line {ln!r}")
        coords[i] = [int(parts[0]), int(parts[1])]
        values[i] = float(parts[2])
    return build_matrix_coo_arrays(coords, values, (rows, cols))


def write_nmf_model(model: NMFModel, outdir: str | Path, meta: dict | None = None) -> None:
    """Export W.csv, H.csv and meta.json."""
    import json

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, factor in (("W.csv", model.W), ("H.csv", model.H)):
        lines = [",".join(format_float(v) for v in row) for row in factor]
        (outdir / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
    payload = {"dims": list(model.dims), "rank": model.rank}
    payload.update(meta or {})
    (outdir / "meta.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
