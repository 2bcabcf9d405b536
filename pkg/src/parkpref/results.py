"""Artifact writers and the run-directory report.

A run directory contains:

  results.csv        per-epoch diagnostics of every training run
  gs_summary.csv     per-fold and overall generalizability per model
  curve_<model>.csv  test-AUPRC-vs-epoch aggregated across agents
  curve_<model>.svg  the same curves rendered (mean line + SD band)
  gs_summary.svg     grouped bar chart of the GS summary
  run_meta.json      config echo, model inventory, run statuses

Every writer formats floats with their shortest round-trip representation
and writes LF newlines, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .metrics import GsSummary
from .models import MODEL_KINDS, build
from .nncore.kernels import get_backend
from .runner import STATUS_FINISHED, ExperimentResult, RunOutcome

RESULTS_CSV = "results.csv"
GS_SUMMARY_CSV = "gs_summary.csv"
RUN_META_JSON = "run_meta.json"
GS_SVG = "gs_summary.svg"

RESULTS_COLUMNS = ("model", "fold", "agent", "epoch", "train_loss",
                   "val_loss", "val_auprc", "test_auprc", "roc_auc")
OVERALL_LABEL = "Overall_Avg"

SPATIAL_MODELS = ("gnn", "cnn2d")
LOCAL_MODELS = ("cnn1d", "mlp")


def _fmt(x: float) -> str:
    return repr(float(x))


def _writer(f):
    return csv.writer(f, lineterminator="\n")


# -- CSV artifacts ----------------------------------------------------------


def write_results_csv(path, outcomes: Sequence[RunOutcome]):
    """Per-epoch rows for every run, in canonical run order."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = _writer(f)
        w.writerow(RESULTS_COLUMNS)
        for o in outcomes:
            for rec in o.history:
                w.writerow([
                    o.key.model, o.key.fold, o.key.agent, rec.epoch,
                    _fmt(rec.train_loss), _fmt(rec.val_loss),
                    _fmt(rec.val_auprc), _fmt(rec.test_auprc),
                    _fmt(rec.roc_auc),
                ])


def write_gs_summary_csv(path, summary: GsSummary,
                         model_order: Sequence[str] = MODEL_KINDS):
    """Per-layout and overall generalizability rows per model."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = _writer(f)
        w.writerow(["model", "test_layout", "gs_auprc"])
        for model in model_order:
            if model not in summary.models():
                continue
            for fold in summary.folds(model):
                w.writerow([model, summary.test_layout(model, fold),
                            _fmt(summary.fold_gs(model, fold))])
            w.writerow([model, OVERALL_LABEL, _fmt(summary.overall_avg(model))])


def curve_points(outcomes: Sequence[RunOutcome], model: str) -> list[tuple]:
    """(test_layout, epoch, mean, sd, n_agents) aggregated across agents.

    At each epoch the mean and population standard deviation run over the
    agents whose training was still going; n_agents records how many.
    """
    by_fold: dict = defaultdict(lambda: defaultdict(list))
    for o in outcomes:
        if o.key.model != model:
            continue
        for rec in o.history:
            by_fold[(o.key.fold, o.test_layout)][rec.epoch].append(
                rec.test_auprc)
    points = []
    for (fold, layout) in sorted(by_fold):
        epochs = by_fold[(fold, layout)]
        for epoch in sorted(epochs):
            vals = np.asarray(epochs[epoch])
            points.append((layout, epoch, float(vals.mean()),
                           float(vals.std()), len(vals)))
    return points


def curve_csv_name(model: str) -> str:
    return f"curve_{model}.csv"


def curve_svg_name(model: str) -> str:
    return f"curve_{model}.svg"


def write_curve_csv(path, outcomes: Sequence[RunOutcome], model: str):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = _writer(f)
        w.writerow(["test_layout", "epoch", "mean_test_auprc",
                    "sd_test_auprc", "n_agents"])
        for layout, epoch, mean, sd, n in curve_points(outcomes, model):
            w.writerow([layout, epoch, _fmt(mean), _fmt(sd), n])


# -- SVG rendering ----------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")

_SVG_W, _SVG_H = 640, 400
_ML, _MR, _MT, _MB = 58, 16, 34, 44  # margins: left right top bottom


def _c(x: float) -> str:
    """SVG coordinate with fixed two-decimal formatting."""
    return f"{x:.2f}"


def _nice_ceiling(value: float) -> float:
    """Smallest 0.1 multiple of a power of ten at or above value."""
    if value <= 0:
        return 1.0
    exp = np.floor(np.log10(value))
    step = 10.0 ** exp / 10.0
    return float(np.ceil(value / step) * step)


class _Canvas:
    """Tiny deterministic SVG builder with one fixed plot area."""

    def __init__(self, title: str, x_label: str, y_label: str,
                 x_max: float, y_max: float, x_min: float = 0.0):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" '
            f'height="{_SVG_H}" viewBox="0 0 {_SVG_W} {_SVG_H}">',
            f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
            f'<text x="{_SVG_W / 2:.0f}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>',
        ]
        self.x_min, self.x_max = x_min, x_max
        self.y_max = y_max
        self._axes(x_label, y_label)

    def x(self, v: float) -> float:
        span = self.x_max - self.x_min
        return _ML + (v - self.x_min) / span * (_SVG_W - _ML - _MR)

    def y(self, v: float) -> float:
        return _SVG_H - _MB - v / self.y_max * (_SVG_H - _MT - _MB)

    def _axes(self, x_label: str, y_label: str):
        x0, y0 = _ML, _SVG_H - _MB
        x1, y1 = _SVG_W - _MR, _MT
        p = self.parts
        p.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" '
                 'stroke="black"/>')
        p.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" '
                 'stroke="black"/>')
        p.append(f'<text x="{(x0 + x1) / 2:.0f}" y="{_SVG_H - 8}" '
                 'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12">{x_label}</text>')
        p.append(f'<text x="14" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" '
                 'font-family="sans-serif" font-size="12" '
                 f'transform="rotate(-90 14 {(y0 + y1) / 2:.0f})">'
                 f'{y_label}</text>')
        for i in range(5):
            v = self.y_max * i / 4
            yy = self.y(v)
            p.append(f'<line x1="{x0 - 4}" y1="{_c(yy)}" x2="{x0}" '
                     f'y2="{_c(yy)}" stroke="black"/>')
            p.append(f'<text x="{x0 - 7}" y="{_c(yy + 4)}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{v:.3g}</text>')

    def x_tick(self, v: float, label: str):
        xx = self.x(v)
        y0 = _SVG_H - _MB
        self.parts.append(f'<line x1="{_c(xx)}" y1="{y0}" x2="{_c(xx)}" '
                          f'y2="{y0 + 4}" stroke="black"/>')
        self.parts.append(f'<text x="{_c(xx)}" y="{y0 + 17}" '
                          'text-anchor="middle" font-family="sans-serif" '
                          f'font-size="11">{label}</text>')

    def band(self, pts_hi, pts_lo, color: str):
        ring = [f"{_c(self.x(px))},{_c(self.y(py))}" for px, py in pts_hi]
        ring += [f"{_c(self.x(px))},{_c(self.y(py))}"
                 for px, py in reversed(pts_lo)]
        self.parts.append(f'<polygon points="{" ".join(ring)}" '
                          f'fill="{color}" fill-opacity="0.18" stroke="none"/>')

    def line(self, pts, color: str):
        coords = " ".join(f"{_c(self.x(px))},{_c(self.y(py))}"
                          for px, py in pts)
        self.parts.append(f'<polyline points="{coords}" fill="none" '
                          f'stroke="{color}" stroke-width="1.5"/>')

    def bar(self, x0: float, width: float, value: float, color: str):
        yv = self.y(value)
        base = _SVG_H - _MB
        self.parts.append(
            f'<rect x="{_c(self.x(x0))}" y="{_c(yv)}" '
            f'width="{_c(self.x(x0 + width) - self.x(x0))}" '
            f'height="{_c(base - yv)}" fill="{color}"/>')

    def legend(self, entries: Sequence[tuple[str, str]]):
        for i, (label, color) in enumerate(entries):
            y = _MT + 6 + 16 * i
            self.parts.append(f'<rect x="{_SVG_W - _MR - 108}" y="{y}" '
                              f'width="12" height="9" fill="{color}"/>')
            self.parts.append(f'<text x="{_SVG_W - _MR - 92}" y="{y + 9}" '
                              'font-family="sans-serif" font-size="11">'
                              f'{label}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def render_curve_svg(outcomes: Sequence[RunOutcome], model: str) -> str:
    """Test AUPRC vs epoch per held-out layout: mean line, SD band."""
    points = curve_points(outcomes, model)
    if not points:
        raise ConfigError(f"no finished runs for model {model!r}")
    max_epoch = max(p[1] for p in points)
    y_max = _nice_ceiling(max(p[2] + p[3] for p in points))
    cv = _Canvas(f"{model}: test AUPRC by epoch (mean +/- SD across agents)",
                 "epoch", "test AUPRC", x_max=max(max_epoch, 2), y_max=y_max,
                 x_min=1.0)
    step = max(1, int(np.ceil(max_epoch / 10)))
    for e in range(step, max_epoch + 1, step):
        cv.x_tick(e, str(e))
    layouts = sorted({p[0] for p in points})
    entries = []
    for i, layout in enumerate(layouts):
        color = _PALETTE[i % len(_PALETTE)]
        series = [(p[1], p[2], p[3]) for p in points if p[0] == layout]
        cv.band([(e, m + s) for e, m, s in series],
                [(e, max(m - s, 0.0)) for e, m, s in series], color)
        cv.line([(e, m) for e, m, _ in series], color)
        entries.append((f"test layout {layout}", color))
    cv.legend(entries)
    return cv.render()


def render_gs_svg(summary: GsSummary,
                  model_order: Sequence[str] = MODEL_KINDS) -> str:
    """Grouped bars: per-layout GS and overall average, per model."""
    models = [m for m in model_order if m in summary.models()]
    if not models:
        raise ConfigError("no finished runs to chart")
    groups = []  # (model, [(label, value), ...])
    for model in models:
        bars = [(f"L{summary.test_layout(model, f)}",
                 summary.fold_gs(model, f)) for f in summary.folds(model)]
        bars.append((OVERALL_LABEL, summary.overall_avg(model)))
        groups.append((model, bars))
    n_bars = max(len(b) for _, b in groups)
    y_max = _nice_ceiling(max(v for _, bars in groups for _, v in bars))
    cv = _Canvas("Generalizability score by held-out layout", "",
                 "GS (AUPRC ratio)", x_max=float(len(groups)), y_max=y_max)
    width = 0.8 / n_bars
    entries = []
    for gi, (model, bars) in enumerate(groups):
        for bi, (label, value) in enumerate(bars):
            color = _PALETTE[bi % len(_PALETTE)]
            cv.bar(gi + 0.1 + bi * width, width, value, color)
            if gi == 0:
                entries.append((label, color))
        cv.x_tick(gi + 0.5, model)
    cv.legend(entries)
    return cv.render()


# -- run meta and the full directory ---------------------------------------


def write_run_meta(path, cfg, result: ExperimentResult):
    """Deterministic machine-readable digest of what ran."""
    meta = {
        "config": cfg.to_dict(),
        "kernel_backend": get_backend(),
        "models": [
            {"kind": spec.kind, "widths": list(spec.widths),
             "param_count": spec.param_count,
             "layers": build(spec.kind).layer_names()}
            for spec in (build(k) for k in MODEL_KINDS)
        ],
        "fold_test_layouts": {str(k): v for k, v
                              in sorted(result.fold_test_layouts.items())},
        "runs": [
            {"model": o.key.model, "fold": o.key.fold, "agent": o.key.agent,
             "status": o.status, "epochs_run": o.epochs_run,
             "best_epoch": o.best_epoch, "error": o.error}
            for o in result.outcomes
        ],
    }
    with open(path, "w", encoding="utf-8", newline="") as f:
        json.dump(meta, f, indent=1)
        f.write("\n")


def write_run_dir(out_dir, cfg, result: ExperimentResult) -> Path:
    """Write every artifact for one experiment run; returns the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = result.summary()
    write_results_csv(out / RESULTS_CSV, result.outcomes)
    write_gs_summary_csv(out / GS_SUMMARY_CSV, summary)
    models_present = {o.key.model for o in result.outcomes
                      if o.status == STATUS_FINISHED}
    for model in MODEL_KINDS:
        if model not in models_present:
            continue
        write_curve_csv(out / curve_csv_name(model), result.outcomes, model)
        with open(out / curve_svg_name(model), "w", encoding="utf-8",
                  newline="") as f:
            f.write(render_curve_svg(result.outcomes, model))
    if summary.records:
        with open(out / GS_SVG, "w", encoding="utf-8", newline="") as f:
            f.write(render_gs_svg(summary))
    write_run_meta(out / RUN_META_JSON, cfg, result)
    return out


# -- report -----------------------------------------------------------------


def _read_gs_summary(run_dir: Path) -> tuple[dict, dict]:
    """gs_summary.csv -> ({model: {layout_label: gs}}, {model: overall})."""
    path = run_dir / GS_SUMMARY_CSV
    if not path.is_file():
        raise ConfigError(f"missing {path}")
    per_layout: dict = defaultdict(dict)
    overall: dict = {}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            if row["test_layout"] == OVERALL_LABEL:
                overall[row["model"]] = float(row["gs_auprc"])
            else:
                per_layout[row["model"]][row["test_layout"]] = float(
                    row["gs_auprc"])
    return dict(per_layout), overall


def render_report(run_dir) -> str:
    """Human-readable summary of a run directory."""
    run_dir = Path(run_dir)
    meta_path = run_dir / RUN_META_JSON
    if not meta_path.is_file():
        raise ConfigError(f"missing {meta_path}")
    with open(meta_path, encoding="utf-8") as f:
        meta = json.load(f)
    per_layout, overall = _read_gs_summary(run_dir)

    lines = [
        "Generalizability report",
        "=======================",
        "Score: held-out-layout test AUPRC divided by the mean validation",
        "AUPRC over the seen layouts; cells are pooled across a run's",
        "samples before computing AUPRC, and each fold averages its agents.",
        "",
        f"Seed: {meta['config']['seed']}   "
        f"kernel backend: {meta['kernel_backend']}",
        "",
    ]

    layout_labels = sorted({lab for m in per_layout.values() for lab in m},
                           key=lambda s: (len(s), s))
    header = ["model"] + [f"L{lab}" for lab in layout_labels] + [OVERALL_LABEL]
    rows = [header]
    model_order = [m["kind"] for m in meta["models"]]
    for model in model_order:
        if model not in overall:
            continue
        row = [model]
        for lab in layout_labels:
            v = per_layout.get(model, {}).get(lab)
            row.append("-" if v is None else f"{v:.4f}")
        row.append(f"{overall[model]:.4f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    for r in rows:
        lines.append("  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip())

    # Headline trend: do both spatial models beat both flat ones overall?
    if all(m in overall for m in SPATIAL_MODELS + LOCAL_MODELS):
        holds = all(overall[s] > overall[l]
                    for s in SPATIAL_MODELS for l in LOCAL_MODELS)
        ordering = sorted(overall, key=lambda m: -overall[m])
        lines.append("")
        lines.append(
            "Spatial-context models (gnn, cnn2d) ahead of flat models "
            f"(cnn1d, mlp) on {OVERALL_LABEL}: {'yes' if holds else 'NO'}"
        )
        lines.append("Observed ordering: "
                     + " > ".join(f"{m} ({overall[m]:.4f})" for m in ordering))

    # Run accounting: finished / diverged / gaps.
    statuses = {(r["model"], r["fold"], r["agent"]): r for r in meta["runs"]}
    diverged = [k for k, r in statuses.items() if r["status"] != STATUS_FINISHED]
    agents = [p["id"] for p in meta["config"]["profiles"]]
    folds = [int(k) for k in meta["fold_test_layouts"]]
    expected = [(m, f, a) for m in model_order for f in sorted(folds)
                for a in agents]
    gaps = [k for k in expected if k not in statuses]
    lines.append("")
    lines.append(f"Runs recorded: {len(statuses)} of {len(expected)} expected")
    for k in diverged:
        lines.append(f"  DIVERGED: {k[0]} fold {k[1]} agent {k[2]}: "
                     f"{statuses[k]['error']}")
    for k in gaps:
        lines.append(f"  GAP (never ran): {k[0]} fold {k[1]} agent {k[2]}")
    if not diverged and not gaps:
        lines.append("  all expected runs finished")
    return "\n".join(lines) + "\n"
