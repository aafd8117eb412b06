"""Static chart rendering: temporal lines, spatial scatters, topic bars, HTML index.

Every figure is produced through one rc context that pins the SVG hash
salt, keeps text as text, and strips the creation date, so identical
bundles render to identical bytes under a fixed matplotlib version. The
component -> color mapping is global and shared by every chart.
"""

from __future__ import annotations

import html
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib import cm

from .bundle import Component, ReportBundle

_RC = {
    "svg.hashsalt": "viz-reports",
    "svg.fonttype": "none",
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
}

_MAX_SPATIAL_AREA = 260.0
_MIN_SPATIAL_AREA = 8.0


def component_color(component_id: int):
    return cm.tab10(component_id % 10)


def _save(fig, outdir: Path, stem: str, fmt: str) -> Path:
    path = outdir / f"{stem}.{fmt}"
    metadata = {"Date": None} if fmt == "svg" else None
    fig.savefig(path, format=fmt, metadata=metadata)
    plt.close(fig)
    return path


def render_temporal(bundle: ReportBundle, outdir: str | Path, fmt: str = "svg") -> Path:
    """One line per component over the shared date axis; degenerate ones sit at 0."""
    if bundle.is_empty():
        raise ValueError("cannot render an empty bundle")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        for comp in bundle.components:
            dates = [d for d, _ in comp.temporal]
            weights = [w for _, w in comp.temporal]
            ax.plot(dates, weights, color=component_color(comp.component_id),
                    linewidth=1.4, label=comp.label)
        ax.set_xlabel("date")
        ax.set_ylabel("pattern weight")
        ax.set_title("Temporal patterns")
        ax.legend(loc="upper left", ncols=2)
        fig.autofmt_xdate()
        fig.tight_layout()
        return _save(fig, outdir, "temporal", fmt)


def _spatial_points(comp: Component):
    return [p for p in comp.spatial if p.lat is not None and p.lon is not None]


def render_spatial(bundle: ReportBundle, outdir: str | Path, fmt: str = "svg") -> Path:
    """Combined (lon, lat) scatter, marker area proportional to location weight.

    Components without any usable coordinates are skipped here (with a
    warning); they still appear in every other chart.
    """
    if bundle.is_empty():
        raise ValueError("cannot render an empty bundle")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7.0, 4.8))
        drawn = 0
        for comp in bundle.components:
            points = _spatial_points(comp)
            if not points:
                warnings.warn(
                    f"component {comp.component_id}: no coordinates, skipped in spatial chart",
                    stacklevel=2,
                )
                continue
            drawn += 1
            peak = max(p.weight for p in points)
            sizes = [
                _MIN_SPATIAL_AREA + _MAX_SPATIAL_AREA * (p.weight / peak if peak > 0 else 0.0)
                for p in points
            ]
            ax.scatter(
                [p.lon for p in points],
                [p.lat for p in points],
                s=sizes,
                color=component_color(comp.component_id),
                alpha=0.55,
                edgecolors="none",
                label=comp.label,
            )
        ax.set_xlabel("longitude")
        ax.set_ylabel("latitude")
        ax.set_title("Spatial patterns")
        if drawn:
            ax.legend(loc="best")
        fig.tight_layout()
        return _save(fig, outdir, "spatial", fmt)


def render_topics(bundle: ReportBundle, outdir: str | Path, fmt: str = "svg") -> Path:
    """Horizontal bars of each component's ranked topic terms, heaviest on top."""
    if bundle.is_empty():
        raise ValueError("cannot render an empty bundle")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    n = len(bundle.components)
    ncols = min(3, n)
    nrows = (n + ncols - 1) // ncols
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(
            nrows, ncols, figsize=(3.2 * ncols, 2.4 * nrows), squeeze=False
        )
        for idx, comp in enumerate(bundle.components):
            ax = axes[idx // ncols][idx % ncols]
            terms = [t for t, _ in comp.topic][::-1]
            weights = [w for _, w in comp.topic][::-1]
            ax.barh(terms, weights, color=component_color(comp.component_id))
            ax.set_title(comp.label)
            ax.tick_params(labelsize=7)
        for idx in range(n, nrows * ncols):
            axes[idx // ncols][idx % ncols].axis("off")
        fig.tight_layout()
        return _save(fig, outdir, "topics", fmt)


def _render_component(comp: Component, outdir: Path, fmt: str) -> dict[str, Path | None]:
    color = component_color(comp.component_id)
    out: dict[str, Path | None] = {}
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.6, 1.9))
        dates = [d for d, _ in comp.temporal]
        ax.plot(dates, [w for _, w in comp.temporal], color=color, linewidth=1.4)
        ax.set_title(f"{comp.label}: temporal")
        fig.autofmt_xdate()
        fig.tight_layout()
        out["temporal"] = _save(fig, outdir, f"component_{comp.component_id}_temporal", fmt)

        points = _spatial_points(comp)
        if points:
            fig, ax = plt.subplots(figsize=(4.6, 3.2))
            peak = max(p.weight for p in points)
            sizes = [
                _MIN_SPATIAL_AREA + _MAX_SPATIAL_AREA * (p.weight / peak if peak > 0 else 0.0)
                for p in points
            ]
            ax.scatter([p.lon for p in points], [p.lat for p in points], s=sizes,
                       color=color, alpha=0.6, edgecolors="none")
            ax.set_title(f"{comp.label}: spatial")
            ax.set_xlabel("longitude")
            ax.set_ylabel("latitude")
            fig.tight_layout()
            out["spatial"] = _save(fig, outdir, f"component_{comp.component_id}_spatial", fmt)
        else:
            warnings.warn(
                f"component {comp.component_id}: no coordinates, spatial panel omitted",
                stacklevel=2,
            )
            out["spatial"] = None

        fig, ax = plt.subplots(figsize=(4.6, 2.6))
        terms = [t for t, _ in comp.topic][::-1]
        ax.barh(terms, [w for _, w in comp.topic][::-1], color=color)
        ax.set_title(f"{comp.label}: terms")
        ax.tick_params(labelsize=7)
        fig.tight_layout()
        out["terms"] = _save(fig, outdir, f"component_{comp.component_id}_terms", fmt)
    return out


def _render_convergence(bundle: ReportBundle, outdir: Path, fmt: str) -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.2, 3.0))
        iters = [int(row["iter"]) for row in bundle.trace]
        objective = [float(row["objective"]) for row in bundle.trace]
        ax.plot(iters, objective, color="black", linewidth=1.2)
        ax.set_xlabel("iteration")
        ax.set_ylabel("objective")
        ax.set_yscale("log")
        ax.set_title("Convergence")
        fig.tight_layout()
        return _save(fig, outdir, "convergence", fmt)


def _bench_table_html(bench: list[dict]) -> str:
    cols = ["algorithm", "final_rel_error", "fms", "iterations", "seconds", "mean_active_fraction"]
    head = "".join(f"<th>{html.escape(c)}</th>" for c in cols)
    rows = []
    for row in bench:
        cells = "".join(f"<td>{html.escape(str(row.get(c, '')))}</td>" for c in cols)
        rows.append(f"<tr>{cells}</tr>")
    return f"<table><thead><tr>{head}</tr></thead><tbody>{''.join(rows)}</tbody></table>"


def render_report(bundle: ReportBundle, outdir: str | Path, fmt: str = "svg") -> list[Path]:
    """All images plus a single index.html mirroring the per-topic figure layout."""
    if bundle.is_empty():
        raise ValueError("cannot render an empty bundle")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [
        render_temporal(bundle, outdir, fmt),
        render_spatial(bundle, outdir, fmt),
        render_topics(bundle, outdir, fmt),
    ]
    per_component: dict[int, dict[str, Path | None]] = {}
    for comp in bundle.components:
        files = _render_component(comp, outdir, fmt)
        per_component[comp.component_id] = files
        written.extend(p for p in files.values() if p is not None)

    convergence = None
    if bundle.trace:
        convergence = _render_convergence(bundle, outdir, fmt)
        written.append(convergence)

    parts = [
        "<!DOCTYPE html>",
        '<html><head><meta charset="utf-8"><title>Spatio-temporal topic patterns</title>',
        "<style>body{font-family:sans-serif;margin:2em;}section{margin-bottom:2.5em;}"
        "img{border:1px solid #ddd;margin:4px;}table{border-collapse:collapse;}"
        "td,th{border:1px solid #aaa;padding:4px 8px;font-size:13px;}</style></head><body>",
        "<h1>Spatio-temporal topic patterns</h1>",
        "<section><h2>Overview</h2>",
        f'<img src="temporal.{fmt}" alt="temporal patterns">',
        f'<img src="spatial.{fmt}" alt="spatial patterns">',
        f'<img src="topics.{fmt}" alt="topic terms">',
        "</section>",
    ]
    if convergence is not None:
        parts.append(
            f'<section><h2>Convergence</h2><img src="{convergence.name}" '
            'alt="objective per iteration"></section>'
        )
    if bundle.bench:
        parts.append(f"<section><h2>Benchmark</h2>{_bench_table_html(bundle.bench)}</section>")
    for comp in bundle.components:
        files = per_component[comp.component_id]
        parts.append(f"<section><h2>{html.escape(comp.label)}</h2>")
        top_terms = ", ".join(html.escape(t) for t, _ in comp.topic[:5])
        parts.append(f"<p>weight {comp.weight:.6g}; top terms: {top_terms}</p>")
        if files["spatial"] is not None:
            parts.append(f'<img src="{files["spatial"].name}" alt="spatial">')
        else:
            parts.append("<p><em>no coordinates available for this component</em></p>")
        parts.append(f'<img src="{files["temporal"].name}" alt="temporal">')
        parts.append(f'<img src="{files["terms"].name}" alt="terms">')
        parts.append("</section>")
    parts.append("</body></html>")
    index = outdir / "index.html"
    index.write_text("\n".join(parts) + "\n", encoding="utf-8")
    written.append(index)
    return written
