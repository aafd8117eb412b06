"""Projected cyclic coordinate descent for nonnegative CP, with selective updates.

One iteration sweeps the factor matrices in mode order (terms, locations,
times). Within a sweep, columns are visited in ascending order and every
element takes the exact projected Newton step for its one-dimensional
subproblem:

    new = max(0, old - (-G[i,r] + (F H)[i,r]) / H[r,r])

where G is the mode's MTTKRP table and H the Hadamard product of the fixed
modes' Gram matrices. Rows within one column are independent given H and G,
so they are updated as a vector; columns within a row are Gauss-Seidel.

The selective ("saturating") strategy skips elements whose last update
moved them by less than a threshold fraction of their matrix's largest
move, on the theory that they have effectively stopped improving the fit.
A periodic full refresh bounds staleness, and the selection rule is
isolated in :func:`select_active` so it can be swapped out.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InvariantError, ShapeError, SolverError
from .tensor import (
    CPModel,
    SparseTensor3,
    coo_mttkrp,
    coo_residual_sq,
    format_float,
    gram_product,
    residual_sq,
)

MODE_NAMES_3 = ("terms", "locations", "times")


@dataclass
class SolverConfig:
    """Knobs for :func:`factorize` (and the two-mode variant in geotopics.nmf)."""

    rank: int
    max_iters: int = 200
    rel_tol: float = 1e-4
    seed: int = 0
    algorithm: str = "ccd"
    sacd_threshold: float = 0.01
    epsilon_guard: float = 1e-12
    refresh_every: int = 10

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol < 0:
            raise ValueError(f"rel_tol must be >= 0, got {self.rel_tol}")
        if self.algorithm not in ("ccd", "sacd"):
            raise ValueError(f"algorithm must be 'ccd' or 'sacd', got {self.algorithm!r}")
        if not 0.0 < self.sacd_threshold < 1.0:
            raise ValueError(f"sacd_threshold must be in (0, 1), got {self.sacd_threshold}")
        if self.epsilon_guard <= 0:
            raise ValueError("epsilon_guard must be positive")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")


@dataclass
class ActiveSet:
    """Per-factor-matrix boolean masks of elements eligible for update."""

    masks: tuple[np.ndarray, ...]

    @classmethod
    def full(cls, shapes: Sequence[tuple[int, int]]) -> "ActiveSet":
        return cls(tuple(np.ones(s, dtype=bool) for s in shapes))

    def is_empty(self) -> bool:
        return all(not m.any() for m in self.masks)

    def fractions(self) -> tuple[float, ...]:
        return tuple(float(np.count_nonzero(m)) / m.size for m in self.masks)


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    rel_change: float
    active_fractions: tuple[float, ...]
    seconds: float


@dataclass
class SolverTrace:
    records: list[IterationRecord] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective if self.records else float("nan")

    def mean_active_fraction(self, after_iteration: int = 0) -> float:
        """Mean of the per-mode active fractions over iterations > after_iteration."""
        rows = [r for r in self.records if r.iteration > after_iteration]
        if not rows:
            rows = self.records
        if not rows:
            return float("nan")
        return float(np.mean([np.mean(r.active_fractions) for r in rows]))


def _draw_factors(
    dims: Sequence[int], rank: int, rng: np.random.Generator
) -> list[np.ndarray]:
    # 1 - U[0,1) lands in (0, 1]: no dead elements at the start.
    return [1.0 - rng.random((int(d), rank)) for d in dims]


def init_factors(dims: Sequence[int], rank: int, seed: int) -> CPModel:
    """Seeded random model: factor entries uniform on (0, 1], weights 1.

    Warns (does not fail) when the rank exceeds every product of two mode
    sizes; CP rank may legitimately exceed individual mode sizes.
    """
    if rank < 1 or any(d < 1 for d in dims):
        raise ValueError(f"dims and rank must be positive, got {tuple(dims)}, {rank}")
    m, n, o = (int(d) for d in dims)
    if rank > min(m * n, n * o, m * o):
        import warnings

        warnings.warn(
            f"rank {rank} exceeds min pairwise dim product of {(m, n, o)}; "
            "components cannot all be independent",
            stacklevel=2,
        )
    factors = _draw_factors((m, n, o), rank, np.random.default_rng(seed))
    return CPModel(np.ones(rank), tuple(factors))


def _sweep_mode(
    coords: np.ndarray,
    values: np.ndarray,
    factors: Sequence[np.ndarray],
    mode: int,
    mask: np.ndarray | None,
    epsilon_guard: float,
) -> tuple[np.ndarray, list[int]]:
    """One coordinate-descent pass over factor ``mode``. Mutates the factor.

    Returns (per-element absolute deltas, columns skipped by the dead-column
    guard). ``mask`` restricts updates to active elements; None means all.
    Row updates inside a column are independent, so an all-True mask and a
    None mask produce bit-identical results.
    """
    fm = factors[mode]
    rank = fm.shape[1]
    grad_table = coo_mttkrp(coords, values, factors, mode, fm.shape[0])
    gram = gram_product(factors, skip=mode)
    deltas = np.zeros_like(fm)
    skipped: list[int] = []
    for r in range(rank):
        denom = gram[r, r]
        if denom < epsilon_guard:
            skipped.append(r)
            continue
        fh = np.einsum("ij,j->i", fm, gram[:, r])
        new_col = fm[:, r] - (fh - grad_table[:, r]) / denom
        np.maximum(new_col, 0.0, out=new_col)
        if not np.isfinite(new_col).all():
            bad = int(np.nonzero(~np.isfinite(new_col))[0][0])
            raise SolverError(
                f"non-finite update for element ({bad}, {r}) of mode {mode}",
                mode=mode,
                element=(bad, r),
            )
        if mask is None:
            deltas[:, r] = np.abs(new_col - fm[:, r])
            fm[:, r] = new_col
        else:
            sel = mask[:, r]
            deltas[sel, r] = np.abs(new_col[sel] - fm[sel, r])
            fm[sel, r] = new_col[sel]
    return deltas, skipped


def ccd_sweep_mode(
    x: SparseTensor3,
    model: CPModel,
    mode: int,
    active: ActiveSet | None = None,
    epsilon_guard: float = 1e-12,
) -> tuple[np.ndarray, list[int]]:
    """Public single-mode sweep; ``mode`` is 1 (terms), 2 (locations) or 3 (times).

    Updates ``model`` in place and returns (deltas, guarded columns).
    """
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    if model.dims != x.dims:
        raise ShapeError(f"model dims {model.dims} != tensor dims {x.dims}")
    mask = active.masks[mode - 1] if active is not None else None
    return _sweep_mode(x.coords, x.values, model.factors, mode - 1, mask, epsilon_guard)


def select_active(
    prev_deltas: Sequence[np.ndarray] | None,
    column_norms: Sequence[np.ndarray] | None,
    config: SolverConfig,
    iteration: int | None = None,
) -> ActiveSet:
    """Elements still worth updating, per the saturation heuristic.

    An element stays active while its last move exceeds ``sacd_threshold``
    times the largest move in its matrix; every ``refresh_every``-th
    iteration reactivates everything. Before the first sweep (``prev_deltas``
    None) the set is full. The result is empty only when every delta was
    exactly zero. ``column_norms`` is accepted for the benefit of
    alternative selection rules; the default rule does not use it.
    """
    if prev_deltas is None:
        raise ValueError("need previous deltas; pass ActiveSet.full for the first sweep")
    if iteration is not None and (iteration - 1) % config.refresh_every == 0:
        return ActiveSet.full([d.shape for d in prev_deltas])
    masks = []
    for d in prev_deltas:
        peak = float(d.max()) if d.size else 0.0
        masks.append(d > config.sacd_threshold * peak)
    return ActiveSet(tuple(masks))


def _column_norms(factors: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [np.sqrt(np.einsum("ir,ir->r", f, f)) for f in factors]


def run_coordinate_descent(
    coords: np.ndarray,
    values: np.ndarray,
    factors: Sequence[np.ndarray],
    config: SolverConfig,
    rng: np.random.Generator,
    on_sweep: Callable[[int, int, Sequence[np.ndarray]], None] | None = None,
) -> SolverTrace:
    """Shared CCD/SaCD driver over K factor matrices. Mutates ``factors``.

    Used with K=3 by :func:`factorize` and K=2 by geotopics.nmf. The
    objective is recomputed from scratch after every full iteration; the
    loop stops on ``rel_tol``, ``max_iters``, or an all-zero active set.
    """
    n_modes = len(factors)
    shapes = [f.shape for f in factors]
    trace = SolverTrace()
    started = time.monotonic()
    prev_obj = coo_residual_sq(coords, values, factors)
    if not np.isfinite(prev_obj):
        raise SolverError("initial objective is not finite", trace=trace)
    deltas: list[np.ndarray] | None = None
    for iteration in range(1, config.max_iters + 1):
        if config.algorithm == "ccd" or deltas is None:
            active = ActiveSet.full(shapes)
        else:
            active = select_active(deltas, _column_norms(factors), config, iteration)
            if active.is_empty():
                trace.events.append(f"iter {iteration}: all deltas zero, stopping")
                trace.converged = True
                break
        deltas = []
        skipped: list[set[int]] = []
        for mode in range(n_modes):
            try:
                d, guard_cols = _sweep_mode(
                    coords, values, factors, mode, active.masks[mode], config.epsilon_guard
                )
            except SolverError as err:
                err.iteration = iteration
                err.trace = trace
                raise
            deltas.append(d)
            skipped.append(set(guard_cols))
            if on_sweep is not None:
                on_sweep(iteration, mode, factors)
        obj = coo_residual_sq(coords, values, factors)
        if not np.isfinite(obj):
            raise SolverError(
                f"objective became non-finite at iteration {iteration}",
                iteration=iteration,
                trace=trace,
            )
        rel_change = abs(prev_obj - obj) / prev_obj if prev_obj > 0 else 0.0
        trace.records.append(
            IterationRecord(
                iteration=iteration,
                objective=obj,
                rel_change=rel_change,
                active_fractions=active.fractions(),
                seconds=time.monotonic() - started,
            )
        )
        if rel_change < config.rel_tol:
            trace.converged = True
            break
        # A component skipped by the guard in every mode is dead: at least two
        # of its columns are zero, so no sweep can revive it. Re-seed it.
        dead = set.intersection(*skipped) if skipped else set()
        for r in sorted(dead):
            for mode in range(n_modes):
                factors[mode][:, r] = 1.0 - rng.random(shapes[mode][0])
            trace.events.append(f"iter {iteration}: reseeded dead component {r}")
        prev_obj = obj
    return trace


def factorize(
    x: SparseTensor3,
    config: SolverConfig,
    init: CPModel | None = None,
    on_sweep: Callable[[int, int, Sequence[np.ndarray]], None] | None = None,
) -> tuple[CPModel, SolverTrace]:
    """Fit a rank-R nonnegative CP model to ``x``.

    Deterministic: (x, config, init) fixes the whole trace. ``init``
    defaults to :func:`init_factors` with the config seed. The returned
    model keeps unit weights; normalize it for interpretation.
    """
    if x.nnz == 0:
        raise ValueError("cannot factorize an empty tensor")
    rng = np.random.default_rng(config.seed)
    if init is None:
        factors = _draw_factors(x.dims, config.rank, rng)
    else:
        if init.dims != x.dims or init.rank != config.rank:
            raise ShapeError(
                f"init model is {init.dims} rank {init.rank}, "
                f"need {x.dims} rank {config.rank}"
            )
        factors = [f.copy() for f in init.factors]
    trace = run_coordinate_descent(x.coords, x.values, factors, config, rng, on_sweep)
    model = CPModel(np.ones(config.rank), tuple(factors))
    return model, trace


def objective(x: SparseTensor3, model: CPModel) -> float:
    """Constrained objective value; re-validates nonnegativity first."""
    for k, f in enumerate(model.factors):
        if (f < 0).any():
            raise InvariantError(f"factor matrix {k} has a negative entry")
    return residual_sq(x, model)


def objective_gradient(x: SparseTensor3, model: CPModel, mode: int) -> np.ndarray:
    """Analytic d(objective)/d(factor) table used by the sweep: 2 (F H - G)."""
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    if model.dims != x.dims:
        raise ShapeError(f"model dims {model.dims} != tensor dims {x.dims}")
    fm = model.factors[mode - 1]
    grad_table = coo_mttkrp(x.coords, x.values, model.factors, mode - 1, fm.shape[0])
    gram = gram_product(model.factors, skip=mode - 1)
    return 2.0 * (np.einsum("ij,jk->ik", fm, gram) - grad_table)


# ---------------------------------------------------------------------------
# Model and trace files: lambda.csv, U.csv/L.csv/T.csv, meta.json, trace.csv.

FACTOR_FILES_3 = ("U.csv", "L.csv", "T.csv")


def _write_matrix_csv(a: np.ndarray, path: Path) -> None:
    lines = [",".join(format_float(v) for v in row) for row in a]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_matrix_csv(path: Path) -> np.ndarray:
    rows = [
        [float(v) for v in ln.split(",")]
        for ln in path.read_text(encoding="utf-8").splitlines()
        if ln.strip()
    ]
    return np.asarray(rows, dtype=np.float64)


def write_model(model: CPModel, outdir: str | Path, meta: dict | None = None) -> None:
    """Export a model directory: lambda.csv, U/L/T.csv and meta.json."""
    import json

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "lambda.csv").write_text(
        "\n".join(format_float(v) for v in model.weights) + "\n", encoding="utf-8"
    )
    for fname, factor in zip(FACTOR_FILES_3, model.factors):
        _write_matrix_csv(factor, outdir / fname)
    payload = {"dims": list(model.dims), "rank": model.rank}
    payload.update(meta or {})
    (outdir / "meta.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_model(indir: str | Path) -> tuple[CPModel, dict]:
    """Read a model directory written by :func:`write_model`."""
    import json

    indir = Path(indir)
    weights = np.asarray(
        [
            float(ln)
            for ln in (indir / "lambda.csv").read_text(encoding="utf-8").splitlines()
            if ln.strip()
        ]
    )
    factors = tuple(_read_matrix_csv(indir / f) for f in FACTOR_FILES_3)
    meta = json.loads((indir / "meta.json").read_text(encoding="utf-8"))
    return CPModel(weights, factors), meta


def write_trace(
    trace: SolverTrace, path: str | Path, include_seconds: bool = False
) -> None:
    """trace.csv: iter,objective,rel_change,active_frac_u,active_frac_l,active_frac_t,seconds.

    Wall seconds are written as 0.0 unless ``include_seconds``: timing is
    real but non-reproducible, and output files are contractually
    byte-identical across reruns.
    """
    header = "iter,objective,rel_change,active_frac_u,active_frac_l,active_frac_t,seconds"
    lines = [header]
    for r in trace.records:
        fracs = list(r.active_fractions) + [1.0] * (3 - len(r.active_fractions))
        seconds = r.seconds if include_seconds else 0.0
        lines.append(
            ",".join(
                [str(r.iteration), format_float(r.objective), format_float(r.rel_change)]
                + [format_float(f) for f in fracs[:3]]
                + [format_float(seconds)]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
