"""Supervised datasets: labeled samples from simulated choices,
augmentation over the transform group, leave-one-layout-out folds, and
line-delimited serialization.

A sample is one choice event re-expressed for learning: the full per-cell
feature tensor the agent saw, the activity it was performing, and a
one-hot label grid marking the chosen cell.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .agentsim import ACTIVITY_ORDER, Activity, ChoiceEvent
from .envdyn import DEFAULT_ENV, EnvParams, env_field, sun_state
from .errors import ConfigError, ParkPrefError
from .features import FEATURE_DIM, FeatureTensor, encode_features
from .layout import Layout, Transform, compose, transform_grid
from .seeding import stream

MODEL_INPUT_DIM = FEATURE_DIM + len(ACTIVITY_ORDER)  # 18 + 4 = 22


@dataclass(frozen=True)
class SampleMeta:
    layout_id: int
    agent_id: str
    hour: float
    aug: Transform = Transform.IDENTITY


@dataclass(frozen=True, eq=False)
class Sample:
    """One labeled instance: feature tensor, activity, one-hot label grid."""

    features: FeatureTensor
    activity: Activity
    label: np.ndarray
    meta: SampleMeta

    def __post_init__(self):
        if self.label.shape != self.features.values.shape[:2]:
            raise ValueError(
                f"label shape {self.label.shape} does not match features "
                f"{self.features.values.shape[:2]}"
            )
        if int(round(float(self.label.sum()))) != 1 or not np.isin(self.label, (0.0, 1.0)).all():
            raise ValueError("label grid must be binary with exactly one positive")
        if self.meta.layout_id != self.features.layout_id:
            raise ValueError("meta.layout_id disagrees with features.layout_id")
        if self.meta.hour != self.features.hour:
            raise ValueError("meta.hour disagrees with features.hour")
        self.label.setflags(write=False)

    @property
    def label_index(self) -> int:
        """Flat row-major index of the chosen cell."""
        return int(np.argmax(self.label.reshape(-1)))

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.meta == other.meta
            and self.activity is other.activity
            and np.array_equal(self.label, other.label)
            and self.features.layout_id == other.features.layout_id
            and self.features.hour == other.features.hour
            and np.array_equal(self.features.values, other.features.values)
        )


def model_input(sample: Sample) -> np.ndarray:
    """(rows, cols, 22) model input: features plus broadcast activity one-hot."""
    rows, cols = sample.label.shape
    onehot = np.zeros((rows, cols, len(ACTIVITY_ORDER)))
    onehot[:, :, ACTIVITY_ORDER.index(sample.activity)] = 1.0
    return np.concatenate([sample.features.values, onehot], axis=2)


def sample_from_event(layout: Layout, event: ChoiceEvent,
                      env_params: EnvParams = DEFAULT_ENV,
                      _env_cache: dict | None = None) -> Sample:
    """Re-encode a choice event as a labeled sample.

    Features are encoded against the occupancy stored on the event, i.e.
    exactly what the agent's decision saw.
    """
    if event.layout_id != layout.id:
        raise ValueError(f"event is for layout {event.layout_id}, got layout {layout.id}")
    if _env_cache is not None and event.hour in _env_cache:
        env = _env_cache[event.hour]
    else:
        env = env_field(layout, sun_state(event.hour, env_params), env_params)
        if _env_cache is not None:
            _env_cache[event.hour] = env
    features = encode_features(layout, env, event.occupancy, hour=event.hour)
    label = np.zeros(event.occupancy.shape)
    label.reshape(-1)[event.chosen_cell] = 1.0
    return Sample(
        features=features,
        activity=event.activity,
        label=label,
        meta=SampleMeta(layout_id=layout.id, agent_id=event.agent_id,
                        hour=event.hour, aug=Transform.IDENTITY),
    )


def samples_from_events(layout: Layout, events: Sequence[ChoiceEvent],
                        env_params: EnvParams = DEFAULT_ENV) -> list[Sample]:
    cache: dict = {}
    return [sample_from_event(layout, ev, env_params, _env_cache=cache)
            for ev in events]


def augment(sample: Sample, t: Transform) -> Sample:
    """Transform features and label jointly; the meta tag composes."""
    features = FeatureTensor(
        layout_id=sample.features.layout_id,
        hour=sample.features.hour,
        values=transform_grid(sample.features.values, t),
    )
    return Sample(
        features=features,
        activity=sample.activity,
        label=transform_grid(sample.label, t),
        meta=replace(sample.meta, aug=compose(sample.meta.aug, t)),
    )


def expand_training(samples: Sequence[Sample]) -> list[Sample]:
    """4x augmentation: each sample under every transform, in group order."""
    return [augment(s, t) for s in samples for t in Transform]


@dataclass(frozen=True)
class FoldPlan:
    fold_id: int
    test_layout: int
    train_layouts: tuple[int, ...]
    val_fraction: float

    def __post_init__(self):
        if self.test_layout in self.train_layouts:
            raise ValueError("test layout cannot also be a train layout")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0,1), got {self.val_fraction}")


@dataclass(frozen=True)
class Fold:
    """One leave-one-layout-out split. train is augmented; val/test are not."""

    plan: FoldPlan
    train: tuple[Sample, ...]
    val: tuple[Sample, ...]
    test: tuple[Sample, ...]


def _split_group(n: int, val_fraction: float, rng: np.random.Generator):
    """Indices (train, val) for one stratum; both parts always non-empty."""
    n_val = int(round(n * val_fraction))
    n_val = max(1, min(n - 1, n_val))
    perm = rng.permutation(n)
    val_idx = set(int(i) for i in perm[:n_val])
    train = [i for i in range(n) if i not in val_idx]
    val = [i for i in range(n) if i in val_idx]
    return train, val


def build_folds(samples_by_layout: Mapping[int, Sequence[Sample]],
                val_fraction: float, seed: int) -> list[Fold]:
    """Leave-one-layout-out folds over the given layouts.

    Each layout is held out once (folds ordered by layout id) as an
    unaugmented test set. The remaining layouts' samples are split into
    train/val per (layout, agent) stratum so every stratum contributes to
    validation; only the train portion is then expanded over the
    transform group. Splits draw from a stream keyed by fold id, so folds
    can be built independently and concurrently with identical results.
    """
    layout_ids = sorted(samples_by_layout)
    if len(layout_ids) < 2:
        raise ConfigError("need at least two layouts to build folds")
    for lid in layout_ids:
        if not samples_by_layout[lid]:
            raise ConfigError(f"layout {lid} has no samples")
        for s in samples_by_layout[lid]:
            if s.meta.aug is not Transform.IDENTITY:
                raise ConfigError("build_folds expects unaugmented base samples")

    folds = []
    for fold_id, test_layout in enumerate(layout_ids, start=1):
        train_layouts = tuple(l for l in layout_ids if l != test_layout)
        plan = FoldPlan(fold_id=fold_id, test_layout=test_layout,
                        train_layouts=train_layouts, val_fraction=val_fraction)
        rng = stream(seed, "folds", fold_id)
        train_base: list[Sample] = []
        val: list[Sample] = []
        for lid in train_layouts:
            groups: dict[str, list[Sample]] = {}
            for s in samples_by_layout[lid]:
                groups.setdefault(s.meta.agent_id, []).append(s)
            for agent_id in sorted(groups):
                group = groups[agent_id]
                tr_idx, va_idx = _split_group(len(group), val_fraction, rng)
                train_base.extend(group[i] for i in tr_idx)
                val.extend(group[i] for i in va_idx)
        folds.append(Fold(
            plan=plan,
            train=tuple(expand_training(train_base)),
            val=tuple(val),
            test=tuple(samples_by_layout[test_layout]),
        ))
    return folds


# ---------------------------------------------------------------------------
# Serialization: one JSON record per line, one line per sample.
# ---------------------------------------------------------------------------

class DatasetFormatError(ParkPrefError, ValueError):
    """Malformed dataset file; the message names the offending line."""


def _record_from_sample(sample: Sample) -> dict:
    rows, cols = sample.label.shape
    return {
        "layout_id": sample.meta.layout_id,
        "agent_id": sample.meta.agent_id,
        "hour": float(sample.meta.hour),
        "activity": sample.activity.value,
        "aug": sample.meta.aug.value,
        "rows": rows,
        "cols": cols,
        "F": FEATURE_DIM,
        "features": [float(v) for v in sample.features.values.reshape(-1)],
        "label_index": sample.label_index,
    }


def _sample_from_record(rec: dict, context: str) -> Sample:
    try:
        rows, cols, f_dim = int(rec["rows"]), int(rec["cols"]), int(rec["F"])
        if f_dim != FEATURE_DIM:
            raise DatasetFormatError(f"{context}: F={f_dim}, expected {FEATURE_DIM}")
        values = np.array(rec["features"], dtype=np.float64)
        if values.size != rows * cols * f_dim:
            raise DatasetFormatError(
                f"{context}: {values.size} feature values, expected {rows * cols * f_dim}"
            )
        features = FeatureTensor(
            layout_id=int(rec["layout_id"]),
            hour=float(rec["hour"]),
            values=values.reshape(rows, cols, f_dim),
        )
        label_index = int(rec["label_index"])
        if not 0 <= label_index < rows * cols:
            raise DatasetFormatError(f"{context}: label_index {label_index} out of range")
        label = np.zeros((rows, cols))
        label.reshape(-1)[label_index] = 1.0
        activity = Activity(rec["activity"])
        meta = SampleMeta(
            layout_id=int(rec["layout_id"]),
            agent_id=str(rec["agent_id"]),
            hour=float(rec["hour"]),
            aug=Transform(rec["aug"]),
        )
    except DatasetFormatError:
        raise
    except (KeyError, ValueError, TypeError) as e:
        raise DatasetFormatError(f"{context}: {e}") from e
    return Sample(features=features, activity=activity, label=label, meta=meta)


def write_dataset(path, samples: Sequence[Sample]):
    """Write samples as line-delimited JSON.

    Floats are written with their shortest exact representation, so a
    read/write cycle reproduces the file byte for byte.
    """
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            f.write(json.dumps(_record_from_sample(sample),
                               separators=(",", ":")) + "\n")


def read_dataset(path) -> list[Sample]:
    samples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            context = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"{context}: invalid JSON ({e.msg})") from e
            samples.append(_sample_from_record(rec, context))
    return samples
