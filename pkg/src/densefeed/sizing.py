"""Resource profiling, cost-model fitting, and budget-constrained batching.

The batcher is a greedy first-fit pass over the input order: samples
accumulate into the current batch while the predicted total cost stays
within the budget. Samples whose predicted cost alone exceeds the budget
are skipped and counted, never emitted. The resource meter is pluggable;
`TrackingAllocator` is a deterministic in-process meter for tests and
synthetic workloads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Protocol, Sequence

import numpy as np

from .errors import DegenerateFitError, MeterConfigError, ValidationError


class ResourceMeter(Protocol):
    """Peak-since-reset resource meter."""

    def reset(self) -> None: ...

    def peak(self) -> float: ...


class TrackingAllocator:
    """In-process allocator that tracks current and peak usage.

    Workloads call :meth:`allocate` / :meth:`release`; the profiler reads
    the peak since the last reset. Stateful, single-threaded.
    """

    def __init__(self):
        self._current = 0.0
        self._peak = 0.0

    def allocate(self, amount: float) -> None:
        if amount < 0:
            raise ValidationError("allocation amount must be non-negative")
        self._current += amount
        self._peak = max(self._peak, self._current)

    def release(self, amount: float) -> None:
        self._current = max(0.0, self._current - amount)

    def release_all(self) -> None:
        self._current = 0.0

    def reset(self) -> None:
        self._peak = self._current

    def peak(self) -> float:
        return self._peak


@dataclass(frozen=True)
class ProfileRecord:
    sample_id: int
    features: np.ndarray | None
    peak_cost: float | None
    failed: bool

    def __post_init__(self):
        if self.failed and self.peak_cost is not None:
            raise ValidationError("failed records carry no peak_cost")
        if not self.failed and (self.peak_cost is None or self.peak_cost < 0):
            raise ValidationError("peak_cost must be a non-negative float")


def collect_peak_alloc(
    samples: Iterable,
    workload: Callable,
    feature_fn: Callable,
    meter: ResourceMeter,
) -> list[ProfileRecord]:
    """Run `workload` per sample under `meter`, recording peak cost and features.

    Workload or feature extraction failures mark the record failed and
    iteration continues with the meter reset.
    """
    if meter is None or not (hasattr(meter, "reset") and hasattr(meter, "peak")):
        raise MeterConfigError("a resource meter with reset()/peak() is required")
    records = []
    for sample_id, sample in enumerate(samples):
        meter.reset()
        try:
            features = np.asarray(feature_fn(sample), dtype=np.float64)
            workload(sample)
            peak = float(meter.peak())
        except Exception:
            records.append(ProfileRecord(sample_id, None, None, True))
            continue
        records.append(ProfileRecord(sample_id, features, peak, False))
    return records


@dataclass(frozen=True)
class CostModel:
    """Affine cost predictor with non-negativity clamp and safety margin."""

    weights: np.ndarray
    intercept: float
    safety_margin: float = 1.1

    def __post_init__(self):
        if self.safety_margin < 1.0:
            raise ValidationError("safety_margin must be >= 1")

    def predict(self, features) -> float:
        raw = float(np.dot(self.weights, np.asarray(features, dtype=np.float64)) + self.intercept)
        return max(0.0, raw) * self.safety_margin

    def predict_many(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        raw = x @ np.asarray(self.weights, dtype=np.float64) + self.intercept
        return np.maximum(raw, 0.0) * self.safety_margin


@dataclass(frozen=True)
class FitReport:
    n_records: int
    n_failed: int
    rmse: float
    max_abs_residual: float


def _collinear_columns(design: np.ndarray) -> list[int]:
    """Greedy scan: feature columns that do not increase design rank.

    Column -1 of `design` is the intercept and is always kept.
    """
    kept = [design[:, -1:]]
    collinear = []
    for j in range(design.shape[1] - 1):
        candidate = np.hstack(kept + [design[:, j : j + 1]])
        if np.linalg.matrix_rank(candidate) > np.linalg.matrix_rank(np.hstack(kept)):
            kept.append(design[:, j : j + 1])
        else:
            collinear.append(j)
    return collinear


def fit_cost_model(
    records: Sequence[ProfileRecord],
    safety_margin: float = 1.1,
) -> tuple[CostModel, FitReport]:
    """Least-squares fit of peak cost on features, excluding failed records."""
    ok = [r for r in records if not r.failed]
    if not ok:
        raise ValidationError("no successful profile records to fit")
    dim = len(ok[0].features)
    if len(ok) < dim + 1:
        raise ValidationError(f"need at least {dim + 1} records for {dim} features, got {len(ok)}")
    x = np.array([r.features for r in ok], dtype=np.float64)
    y = np.array([r.peak_cost for r in ok], dtype=np.float64)
    design = np.hstack([x, np.ones((len(ok), 1))])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise DegenerateFitError(_collinear_columns(design))
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    model = CostModel(weights=coef[:-1], intercept=float(coef[-1]), safety_margin=safety_margin)
    residuals = y - (design @ coef)
    report = FitReport(
        n_records=len(records),
        n_failed=len(records) - len(ok),
        rmse=float(np.sqrt(np.mean(residuals**2))),
        max_abs_residual=float(np.max(np.abs(residuals))) if len(residuals) else 0.0,
    )
    return model, report


@dataclass
class Batch:
    """One emitted mini-batch: ordered sample indices plus accounting."""

    indices: list[int]
    predicted_cost: float
    padding_elements: int | None = None


class SizeAwareBatcher:
    """Iterable over budget-constrained batches; exposes skip statistics.

    Single-consumer: iterate once. `skipped` fills as iteration proceeds.
    """

    def __init__(self, order: Sequence[int], model: CostModel, features, budget: float):
        if budget <= 0:
            raise ValidationError("budget must be > 0")
        self.order = list(order)
        self.model = model
        self.features = features
        self.budget = float(budget)
        self.skipped: list[int] = []

    @property
    def n_skipped(self) -> int:
        return len(self.skipped)

    def __iter__(self) -> Iterator[Batch]:
        current: list[int] = []
        acc = 0.0
        for idx in self.order:
            cost = self.model.predict(self.features[idx])
            if cost > self.budget:
                self.skipped.append(idx)
                continue
            if acc + cost > self.budget:
                yield Batch(indices=current, predicted_cost=acc)
                current, acc = [], 0.0
            current.append(idx)
            acc += cost
        if current:
            yield Batch(indices=current, predicted_cost=acc)


def size_aware_batches(order: Sequence[int], model: CostModel, features, budget: float) -> SizeAwareBatcher:
    """Greedy first-fit batching of `order` under a predicted-cost budget."""
    return SizeAwareBatcher(order, model, features, budget)


def write_profile_csv(records: Sequence[ProfileRecord], path: str | Path) -> None:
    dims = [len(r.features) for r in records if r.features is not None]
    dim = dims[0] if dims else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "failed", "peak_cost"] + [f"f{i}" for i in range(dim)])
        for r in records:
            feats = list(r.features) if r.features is not None else [""] * dim
            cost = "" if r.peak_cost is None else repr(r.peak_cost)
            writer.writerow([r.sample_id, int(r.failed), cost] + list(feats))


def read_profile_csv(path: str | Path) -> list[ProfileRecord]:
    records = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            failed = bool(int(row["failed"]))
            feat_keys = sorted((k for k in row if k.startswith("f") and k[1:].isdigit()),
                               key=lambda k: int(k[1:]))
            feats = None
            if not failed:
                feats = np.array([float(row[k]) for k in feat_keys], dtype=np.float64)
            records.append(ProfileRecord(
                sample_id=int(row["sample_id"]),
                features=feats,
                peak_cost=None if failed else float(row["peak_cost"]),
                failed=failed,
            ))
    return records


def save_cost_model(model: CostModel, path: str | Path, report: FitReport | None = None) -> None:
    payload = {
        "weights": [float(w) for w in model.weights],
        "intercept": model.intercept,
        "safety_margin": model.safety_margin,
    }
    if report is not None:
        payload["fit"] = {
            "n_records": report.n_records,
            "n_failed": report.n_failed,
            "rmse": report.rmse,
            "max_abs_residual": report.max_abs_residual,
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def load_cost_model(path: str | Path) -> CostModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return CostModel(
        weights=np.array(payload["weights"], dtype=np.float64),
        intercept=float(payload["intercept"]),
        safety_margin=float(payload["safety_margin"]),
    )
