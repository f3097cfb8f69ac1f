"""Validation loop: fold partitioning, cross-validation, error metric, reports.

Cross-validation randomly deals the records of a dataset into k near-equal
folds; each fold serves once as the validation set while the remaining folds
train the parameters, and the mean relative estimation error pools the
per-stream errors of all validation predictions.  A relative error of zero
means a perfect estimator.

The breakdown report decomposes estimated energies by feature category per
stream, serialized as CSV and optionally as an SVG chart with one measured
bar above one stacked estimated bar per stream.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .dataset import BitstreamRecord, Dataset
from .errors import DataValidationError, FitError
from .fitting import feature_linear_system, fit_hl1, fit_hl2, fit_linear_ls
from .models import (
    Category,
    SpecificEnergies,
    category_breakdown,
    predict_feature_model,
    predict_hl1,
    predict_hl2,
)

MODEL_KINDS = ("feature", "hl1", "hl2")


@dataclass(frozen=True)
class FoldPartition:
    """Assignment of M records to k disjoint, near-equal folds."""

    k: int
    assignment: np.ndarray
    seed: int

    def __post_init__(self):
        arr = np.asarray(self.assignment, dtype=int)
        arr.setflags(write=False)
        object.__setattr__(self, "assignment", arr)
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if arr.size < self.k:
            raise ValueError("fewer records than folds")
        sizes = np.bincount(arr, minlength=self.k)
        if arr.min() < 0 or arr.max() >= self.k:
            raise ValueError("fold labels out of range")
        if sizes.max() - sizes.min() > 1:
            raise ValueError("fold sizes differ by more than 1")

    @property
    def size(self) -> int:
        return int(self.assignment.size)

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def fold_sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.k).tolist()


def make_folds(record_count: int, k: int, seed: int) -> FoldPartition:
    """Deal a seeded random permutation round-robin into k folds."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > record_count:
        raise ValueError(f"k ({k}) exceeds the record count ({record_count})")
    perm = np.random.default_rng(seed).permutation(record_count)
    assignment = np.empty(record_count, dtype=int)
    assignment[perm] = np.arange(record_count) % k
    return FoldPartition(k=k, assignment=assignment, seed=seed)


def mean_relative_error(estimates, measured) -> float:
    """Mean of |estimate - measured| / measured; 0 for a perfect estimator."""
    est = np.asarray(estimates, dtype=float)
    meas = np.asarray(measured, dtype=float)
    if est.shape != meas.shape or est.ndim != 1:
        raise ValueError(f"length mismatch: {est.shape} vs {meas.shape}")
    if est.size == 0:
        raise ValueError("empty input")
    if np.any(meas <= 0):
        raise ValueError("measured energies must be positive")
    return float(np.mean(np.abs(est - meas) / meas))


@dataclass
class CVReport:
    """Cross-validation outcome; ``overall_error`` pools all validation errors."""

    model_kind: str
    k: int
    seed: int
    overall_error: float
    fold_errors: list[float | None]
    fold_sizes: list[int]
    fold_params: list[dict | None]
    per_stream: dict[str, float]
    failed_folds: list[int] = field(default_factory=list)

    def to_json(self, indent: int | None = 2) -> str:
        doc = {
            "model": self.model_kind,
            "k": self.k,
            "seed": self.seed,
            "overall_error": self.overall_error,
            "fold_errors": self.fold_errors,
            "fold_sizes": self.fold_sizes,
            "failed_folds": self.failed_folds,
            "fold_params": self.fold_params,
            "per_stream": self.per_stream,
        }
        return json.dumps(doc, indent=indent)


def _fit_fold(model_kind: str, train: list[BitstreamRecord], fit_options: dict):
    """Fit one fold; returns (predict_fn, serializable params dict)."""
    if model_kind == "feature":
        system = feature_linear_system(train)
        coeffs, _ = fit_linear_ls(system, nonneg=fit_options.get("nonneg", False))
        energies = SpecificEnergies(train[0].features.feature_set, coeffs)

        def predict(rec: BitstreamRecord) -> float:
            return predict_feature_model(energies, rec.features)

        return predict, {"specific_energies": energies.as_dict()}
    if model_kind in ("hl1", "hl2"):
        pairs = []
        for rec in train:
            info = rec.highlevel
            if info is None:
                raise FitError(
                    f"record {rec.stream_id!r} lacks high-level metadata "
                    "(width/height/frames/file_size_bytes/intra_frames)"
                )
            pairs.append((info, rec.energy_joules))
        if model_kind == "hl1":
            params, _ = fit_hl1(pairs, fit_options.get("trust_region"))

            def predict(rec: BitstreamRecord) -> float:
                return predict_hl1(params, rec.highlevel)

            return predict, {
                "base_joules": params.base_joules,
                "per_pixel_joules": params.per_pixel_joules,
                "rate_coeff": params.rate_coeff,
                "rate_power": params.rate_power,
            }
        params, _ = fit_hl2(pairs)

        def predict(rec: BitstreamRecord) -> float:
            return predict_hl2(params, rec.highlevel)

        return predict, {
            "intra_bytes_coeff": params.intra_bytes_coeff,
            "intra_coeff": params.intra_coeff,
            "bytes_coeff": params.bytes_coeff,
            "base_coeff": params.base_coeff,
        }
    raise ValueError(f"unknown model kind {model_kind!r}; expected one of {MODEL_KINDS}")


def cross_validate(
    dataset: Dataset,
    model_kind: str,
    k: int = 10,
    seed: int = 42,
    fit_options: dict | None = None,
) -> CVReport:
    """k-fold cross-validation of one model over a dataset.

    Each fold is validated with parameters trained on the other k-1 folds.
    A fold whose fit fails is reported and excluded from the pooled error
    instead of aborting the whole run.  Deterministic per seed.
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}; expected one of {MODEL_KINDS}")
    records = list(dataset)
    if len(records) < k:
        raise ValueError(f"dataset has {len(records)} records, fewer than k={k}")
    for rec in records:
        if rec.energy_joules is None:
            raise DataValidationError(f"record {rec.stream_id!r} has no measured energy")
    options = fit_options or {}
    partition = make_folds(len(records), k, seed)

    fold_errors: list[float | None] = []
    fold_params: list[dict | None] = []
    per_stream: dict[str, float] = {}
    failed: list[int] = []
    for fold in range(k):
        val_idx = partition.fold_indices(fold)
        train = [records[i] for i in range(len(records)) if partition.assignment[i] != fold]
        try:
            predict, params_doc = _fit_fold(model_kind, train, options)
            errors = []
            for i in val_idx:
                rec = records[i]
                estimate = predict(rec)
                errors.append(abs(estimate - rec.energy_joules) / rec.energy_joules)
                per_stream[rec.stream_id] = errors[-1]
            fold_errors.append(float(np.mean(errors)))
            fold_params.append(params_doc)
        except FitError as exc:
            warnings.warn(f"fold {fold} failed: {exc}", stacklevel=2)
            failed.append(fold)
            fold_errors.append(None)
            fold_params.append(None)
    overall = float(np.mean(list(per_stream.values()))) if per_stream else math.nan
    return CVReport(
        model_kind=model_kind,
        k=k,
        seed=seed,
        overall_error=overall,
        fold_errors=fold_errors,
        fold_sizes=partition.fold_sizes(),
        fold_params=fold_params,
        per_stream=per_stream,
        failed_folds=failed,
    )


# ---------------------------------------------------------------------------
# Category breakdown reports

_CATEGORY_ORDER = tuple(Category)


@dataclass(frozen=True)
class BreakdownRow:
    stream_id: str
    measured_joules: float
    estimated_joules: float
    by_category: dict[Category, float]


def breakdown_report(records, energies: SpecificEnergies) -> list[BreakdownRow]:
    """Measured vs estimated energy with per-category decomposition."""
    rows = []
    for rec in records:
        if rec.energy_joules is None:
            raise DataValidationError(f"record {rec.stream_id!r} has no measured energy")
        estimate = predict_feature_model(energies, rec.features)
        rows.append(
            BreakdownRow(
                stream_id=rec.stream_id,
                measured_joules=rec.energy_joules,
                estimated_joules=estimate,
                by_category=category_breakdown(energies, rec.features),
            )
        )
    return rows


def breakdown_csv(rows: list[BreakdownRow]) -> str:
    lines = ["stream_id,E_dec,E_hat," + ",".join(c.value for c in _CATEGORY_ORDER)]
    for row in rows:
        cells = [row.stream_id, repr(row.measured_joules), repr(row.estimated_joules)]
        cells += [repr(row.by_category[c]) for c in _CATEGORY_ORDER]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


_CATEGORY_COLORS = {
    Category.OFFSET: "#7995c4",
    Category.INTRA: "#e6a37d",
    Category.INTER: "#80be8e",
    Category.TRANS: "#d37a7d",
    Category.COEFF: "#a195c6",
    Category.SAO: "#d9cb97",
}
_MEASURED_COLOR = "#36415c"


def _nice_ticks(maximum: float, count: int = 5) -> list[float]:
    if maximum <= 0:
        return [0.0, 1.0]
    raw = maximum / count
    magnitude = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        step = mult * magnitude
        if step * count >= maximum:
            break
    n = int(math.floor(maximum / step)) + 1
    return [i * step for i in range(n + 1)]


def breakdown_svg(rows: list[BreakdownRow], title: str = "Decoding energy by category") -> str:
    """Render one measured bar above one stacked estimated bar per stream."""
    if not rows:
        raise ValueError("no rows to render")
    left, right, top, bottom = 150, 30, 70, 34
    bar_h, pair_gap, group_gap = 15, 3, 16
    plot_w = 560
    group_h = 2 * bar_h + pair_gap
    plot_h = len(rows) * (group_h + group_gap) - group_gap
    width = left + plot_w + right
    height = top + plot_h + bottom
    peak = max(max(r.measured_joules, r.estimated_joules) for r in rows)
    ticks = _nice_ticks(peak * 1.05)
    xmax = ticks[-1]

    def sx(value: float) -> float:
        return left + plot_w * value / xmax

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<text x="{left}" y="18" font-size="13" font-weight="bold">{escape(title)}</text>',
    ]
    # legend
    lx = left
    legend = [("E_dec", _MEASURED_COLOR)] + [
        (c.value, _CATEGORY_COLORS[c]) for c in _CATEGORY_ORDER
    ]
    for label, color in legend:
        parts.append(f'<rect x="{lx}" y="30" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{lx + 14}" y="39">{label}</text>')
        lx += 14 + 7 * len(label) + 18
    # axis
    axis_y = top + plot_h
    for tick in ticks:
        x = sx(tick)
        parts.append(
            f'<line x1="{x:.1f}" y1="{top}" x2="{x:.1f}" y2="{axis_y}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{axis_y + 14}" text-anchor="middle">{tick:g}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{axis_y + 28}" '
        f'text-anchor="middle">Energy [J]</text>'
    )
    y = top
    for row in rows:
        parts.append(
            f'<text x="{left - 8}" y="{y + group_h / 2 + 4:.1f}" '
            f'text-anchor="end">{escape(row.stream_id)}</text>'
        )
        parts.append(
            f'<rect class="bar-measured" x="{left}" y="{y}" '
            f'width="{sx(row.measured_joules) - left:.2f}" height="{bar_h}" '
            f'fill="{_MEASURED_COLOR}"/>'
        )
        seg_x = float(left)
        seg_y = y + bar_h + pair_gap
        for cat in _CATEGORY_ORDER:
            value = row.by_category[cat]
            if value <= 0:
                continue
            seg_w = plot_w * value / xmax
            parts.append(
                f'<rect class="seg-{cat.value}" x="{seg_x:.2f}" y="{seg_y}" '
                f'width="{seg_w:.2f}" height="{bar_h}" fill="{_CATEGORY_COLORS[cat]}"/>'
            )
            seg_x += seg_w
        y += group_h + group_gap
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
