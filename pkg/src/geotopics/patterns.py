"""Turn fitted models into interpretable, associated patterns and comparison metrics.

Each component of a CP model couples one topic (term column) to one spatial
and one temporal pattern through its shared component id; the report
objects here make that coupling explicit and exportable. The module also
provides the recovery metric used by the synthetic benchmarks and the
association-loss comparison that contrasts the tensor model with the pair
of flattened-matrix models.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ShapeError
from .nmf import NMFModel
from .tensor import CPModel


def normalize_components(model: CPModel) -> CPModel:
    """Rescale every factor column to unit l1 mass, folding the scales into the weights.

    Reconstruction is unchanged everywhere. A zero column leaves its
    component weight at 0 and the column untouched.
    """
    weights = model.weights.copy()
    factors = [f.copy() for f in model.factors]
    for r in range(model.rank):
        scale = 1.0
        for f in factors:
            s = float(np.sum(f[:, r]))  # columns are nonnegative, so the sum is the l1 norm
            if s > 0 and s != 1.0:
                f[:, r] /= s
            scale *= s
        weights[r] *= scale
    return CPModel(weights, tuple(factors))


def top_terms(
    model: CPModel, r: int, k: int, vocab: Sequence[str]
) -> list[tuple[str, float]]:
    """The k heaviest terms of component r, ties broken by ascending term string."""
    if not 0 <= r < model.rank:
        raise IndexError(f"component {r} out of range [0, {model.rank})")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    terms = list(vocab)
    col = model.term_factor[:, r]
    if len(terms) != col.shape[0]:
        raise ShapeError(f"vocabulary size {len(terms)} != term mode size {col.shape[0]}")
    order = sorted(range(len(terms)), key=lambda i: (-col[i], terms[i]))
    return [(terms[i], float(col[i])) for i in order[:k]]


def _location_rows(locations) -> list[tuple[str, float, float]]:
    rows = []
    for entry in locations:
        if hasattr(entry, "canonical"):
            rows.append((entry.canonical, float(entry.lat), float(entry.lon)))
        else:
            name, lat, lon = entry
            rows.append((str(name), float(lat), float(lon)))
    return rows


@dataclass
class ComponentReport:
    """One rank-1 component, ready for export and rendering."""

    component_id: int
    weight: float
    degenerate: bool
    topic: list[tuple[str, float]]
    spatial: list[tuple[str, float, float, float]]  # (canonical name, lat, lon, weight)
    temporal: list[tuple[date, float]]  # (bin start date, weight)

    def to_dict(self) -> dict:
        return {
            "component_id": self.component_id,
            "weight": self.weight,
            "degenerate": self.degenerate,
            "topic": [{"term": t, "weight": w} for t, w in self.topic],
            "spatial": [
                {"name": n, "lat": lat, "lon": lon, "weight": w}
                for n, lat, lon, w in self.spatial
            ],
            "temporal": [{"date": d.isoformat(), "weight": w} for d, w in self.temporal],
        }


def component_report(
    model: CPModel, r: int, vocab: Sequence[str], locations, timeaxis, k: int = 10
) -> ComponentReport:
    """Assemble one component's topic, spatial and temporal patterns.

    ``locations`` provides (canonical name, lat, lon) per location index;
    ``timeaxis`` maps bin index to bin start date. The three patterns are
    associated purely by sharing the component id.
    """
    if not 0 <= r < model.rank:
        raise IndexError(f"component {r} out of range [0, {model.rank})")
    m, n, o = model.dims
    loc_rows = _location_rows(locations)
    if len(list(vocab)) != m:
        raise ShapeError(f"vocabulary covers {len(list(vocab))} terms, model has {m}")
    if len(loc_rows) != n:
        raise ShapeError(f"location index covers {len(loc_rows)} locations, model has {n}")
    if timeaxis.bin_count != o:
        raise ShapeError(f"time axis has {timeaxis.bin_count} bins, model has {o}")
    weight = float(model.weights[r])
    degenerate = weight == 0.0 or any(
        not f[:, r].any() for f in model.factors
    )
    spatial = [
        (name, lat, lon, float(model.location_factor[i, r]))
        for i, (name, lat, lon) in enumerate(loc_rows)
    ]
    temporal = [
        (timeaxis.bin_start(i), float(model.time_factor[i, r])) for i in range(o)
    ]
    return ComponentReport(
        component_id=r,
        weight=weight,
        degenerate=degenerate,
        topic=top_terms(model, r, k, vocab),
        spatial=spatial,
        temporal=temporal,
    )


def build_reports(
    model: CPModel, vocab: Sequence[str], locations, timeaxis, k: int = 10
) -> list[ComponentReport]:
    """Normalized reports for all components, in component order."""
    normalized = normalize_components(model)
    return [
        component_report(normalized, r, vocab, locations, timeaxis, k)
        for r in range(normalized.rank)
    ]


def write_report_json(reports: Sequence[ComponentReport], path: str | Path) -> None:
    payload = [rep.to_dict() for rep in reports]
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_topics_csv(reports: Sequence[ComponentReport], path: str | Path) -> None:
    """Flat spreadsheet form: one row per (component, ranked term)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["component_id", "rank", "term", "weight"])
        for rep in reports:
            for pos, (term, weight) in enumerate(rep.topic, start=1):
                writer.writerow([rep.component_id, pos, term, repr(weight)])


# ---------------------------------------------------------------------------
# Recovery and association metrics


def cosine_columns(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity between every column of ``a`` and every column of ``b``.

    Zero-norm columns yield 0 rather than NaN.
    """
    dots = np.einsum("ir,is->rs", a, b)
    norm_a = np.sqrt(np.einsum("ir,ir->r", a, a))
    norm_b = np.sqrt(np.einsum("is,is->s", b, b))
    denom = norm_a[:, None] * norm_b[None, :]
    out = np.zeros_like(dots)
    np.divide(dots, denom, out=out, where=denom > 0)
    return out


def _component_score_matrix(a: CPModel, b: CPModel) -> np.ndarray:
    score = np.ones((a.rank, b.rank))
    for fa, fb in zip(a.factors, b.factors):
        score *= cosine_columns(fa, fb)
    return score


def factor_match_score(a: CPModel, b: CPModel) -> float:
    """Permutation-maximized mean product of per-mode column cosines, in [0, 1].

    Invariant to component order and to weight-compensated column rescaling;
    1.0 means perfect recovery up to those symmetries.
    """
    if a.dims != b.dims or a.rank != b.rank:
        raise ShapeError(
            f"models differ: {a.dims} rank {a.rank} vs {b.dims} rank {b.rank}"
        )
    score = _component_score_matrix(a, b)
    rows, cols = linear_sum_assignment(-score)
    return float(score[rows, cols].mean())


def match_components(a: CPModel, b: CPModel) -> np.ndarray:
    """For each component of ``a``, the index of its assigned component in ``b``."""
    if a.dims != b.dims or a.rank != b.rank:
        raise ShapeError(
            f"models differ: {a.dims} rank {a.rank} vs {b.dims} rank {b.rank}"
        )
    score = _component_score_matrix(a, b)
    rows, cols = linear_sum_assignment(-score)
    out = np.zeros(a.rank, dtype=np.int64)
    out[rows] = cols
    return out


def _greedy_pairing(sim: np.ndarray) -> tuple[dict[int, int], dict[int, float]]:
    """Repeatedly pair the globally most similar (row, col); ties go to low indices.

    Returns the pairing and, per row, the margin between the chosen column
    and the best alternative available at pick time (inf if none remained).
    """
    size = sim.shape[0]
    rows = list(range(size))
    cols = list(range(size))
    pairs: dict[int, int] = {}
    margins: dict[int, float] = {}
    while rows:
        best: tuple[float, int, int] | None = None
        for i in rows:
            for j in cols:
                if best is None or sim[i, j] > best[0]:
                    best = (float(sim[i, j]), i, j)
        assert best is not None
        _, i, j = best
        rest = [float(sim[i, jj]) for jj in cols if jj != j]
        margins[i] = float(sim[i, j]) - max(rest) if rest else float("inf")
        pairs[i] = j
        rows.remove(i)
        cols.remove(j)
    return pairs, margins


@dataclass
class ComponentVerdict:
    component: int
    ntf_component: int
    ntf_location_cos: float
    ntf_time_cos: float
    ntf_coupling: str  # "match" | "mismatch"
    nmf_time_component: int
    nmf_location_component: int
    nmf_expected_location_component: int
    nmf_time_recovery: float
    nmf_location_recovery: float
    nmf_term_cos: float
    nmf_margin: float
    nmf_coupling: str  # "match" | "mismatch" | "ambiguous" | "unrecovered"

    def to_dict(self) -> dict:
        return {
            "component": self.component,
            "ntf": {
                "matched_component": self.ntf_component,
                "location_cos": self.ntf_location_cos,
                "time_cos": self.ntf_time_cos,
                "coupling": self.ntf_coupling,
            },
            "nmf": {
                "time_component": self.nmf_time_component,
                "paired_location_component": self.nmf_location_component,
                "expected_location_component": self.nmf_expected_location_component,
                "time_recovery": self.nmf_time_recovery,
                "location_recovery": self.nmf_location_recovery,
                "term_cos": self.nmf_term_cos,
                "margin": self.nmf_margin,
                "coupling": self.nmf_coupling,
            },
        }


@dataclass
class AssociationReport:
    ntf_fms: float
    verdicts: list[ComponentVerdict]

    @property
    def ntf_all_match(self) -> bool:
        return all(v.ntf_coupling == "match" for v in self.verdicts)

    @property
    def nmf_mismatch_count(self) -> int:
        return sum(1 for v in self.verdicts if v.nmf_coupling != "match")

    def to_dict(self) -> dict:
        return {
            "ntf_fms": self.ntf_fms,
            "ntf_all_match": self.ntf_all_match,
            "nmf_mismatch_count": self.nmf_mismatch_count,
            "components": [v.to_dict() for v in self.verdicts],
        }


def association_loss_report(
    ntf: CPModel,
    nmf_time: NMFModel,
    nmf_loc: NMFModel,
    planted: CPModel,
    ambiguity_margin: float = 0.02,
    recovery_min: float = 0.9,
) -> AssociationReport:
    """Can each arm reproduce the planted (location, time) coupling per topic?

    The tensor arm's components are matched to the planted ones by the
    factor-match assignment; its coupling for a component counts as
    recovered when the matched location and time columns are closest (by
    cosine) to that same planted component in both modes.

    The matrix arm has two unlinked models, so a coupling must be guessed:
    each (term x time) component is paired with the (term x location)
    component whose term column it most resembles, greedily. The verdict is
    "unrecovered" when either arm's own pattern misses the planted one
    (congruence below ``recovery_min``), "ambiguous" when the winning pick
    beat its best alternative by less than ``ambiguity_margin`` (the pairing
    then carries no interpretive weight), else "match" or "mismatch"
    against the planted coupling.
    """
    if planted.rank != ntf.rank or planted.dims != ntf.dims:
        raise ShapeError(
            f"tensor arm is {ntf.dims} rank {ntf.rank}, planted is "
            f"{planted.dims} rank {planted.rank}"
        )
    m, n, o = planted.dims
    if nmf_time.rank != planted.rank or nmf_time.dims != (m, o):
        raise ShapeError(
            f"time arm is {nmf_time.dims} rank {nmf_time.rank}, need {(m, o)} rank {planted.rank}"
        )
    if nmf_loc.rank != planted.rank or nmf_loc.dims != (m, n):
        raise ShapeError(
            f"location arm is {nmf_loc.dims} rank {nmf_loc.rank}, need {(m, n)} rank {planted.rank}"
        )

    fms = factor_match_score(planted, ntf)
    ntf_for_planted = match_components(planted, ntf)
    ntf_loc_cos = cosine_columns(ntf.location_factor, planted.location_factor)
    ntf_time_cos = cosine_columns(ntf.time_factor, planted.time_factor)

    # Match each flattened arm's components to planted components in the one
    # mode that arm actually observes.
    time_cos = cosine_columns(nmf_time.H, planted.time_factor)
    loc_cos = cosine_columns(nmf_loc.H, planted.location_factor)
    t_rows, t_cols = linear_sum_assignment(-time_cos)
    time_for_planted = np.zeros(planted.rank, dtype=np.int64)
    time_for_planted[t_cols] = t_rows
    l_rows, l_cols = linear_sum_assignment(-loc_cos)
    loc_for_planted = np.zeros(planted.rank, dtype=np.int64)
    loc_for_planted[l_cols] = l_rows

    term_sim = cosine_columns(nmf_time.W, nmf_loc.W)
    pairs, margins = _greedy_pairing(term_sim)

    verdicts = []
    for r in range(planted.rank):
        c = int(ntf_for_planted[r])
        loc_row = ntf_loc_cos[c]
        time_row = ntf_time_cos[c]
        ntf_ok = int(np.argmax(loc_row)) == r and int(np.argmax(time_row)) == r
        i = int(time_for_planted[r])
        j_expected = int(loc_for_planted[r])
        j_got = int(pairs[i])
        margin = float(margins[i])
        time_recovery = float(time_cos[i, r])
        loc_recovery = float(loc_cos[j_expected, r])
        if time_recovery < recovery_min or loc_recovery < recovery_min:
            nmf_verdict = "unrecovered"
        elif margin < ambiguity_margin:
            nmf_verdict = "ambiguous"
        elif j_got == j_expected:
            nmf_verdict = "match"
        else:
            nmf_verdict = "mismatch"
        verdicts.append(
            ComponentVerdict(
                component=r,
                ntf_component=c,
                ntf_location_cos=float(loc_row[r]),
                ntf_time_cos=float(time_row[r]),
                ntf_coupling="match" if ntf_ok else "mismatch",
                nmf_time_component=i,
                nmf_location_component=j_got,
                nmf_expected_location_component=j_expected,
                nmf_time_recovery=time_recovery,
                nmf_location_recovery=loc_recovery,
                nmf_term_cos=float(term_sim[i, j_got]),
                nmf_margin=margin,
                nmf_coupling=nmf_verdict,
            )
        )
    return AssociationReport(ntf_fms=fms, verdicts=verdicts)
