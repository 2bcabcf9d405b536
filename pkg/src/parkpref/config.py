"""Experiment configuration: file format, validation, and flag overrides.

A config file is a JSON object mirroring :class:`ExperimentConfig`.  Layout
paths are resolved relative to the config file's own directory so a config
can travel with its layouts.  The packaged canonical experiment (four
layouts, three agent profiles) is loaded with :func:`canonical_config`.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .agentsim import (
    DEFAULT_EVENTS_PER_AGENT,
    DEFAULT_HOURS,
    DEFAULT_TAU,
    Activity,
    AgentProfile,
)
from .errors import ConfigError
from .nncore.train import TrainConfig

CANONICAL_LAYOUT_COUNT = 4
CANONICAL_PROFILE_COUNT = 3
DEFAULT_VAL_FRACTION = 0.2

_TRAIN_KEYS = ("epochs", "learning_rate", "patience", "batch_size",
               "pos_weight", "dtype")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment end to end."""

    layouts: tuple[str, ...]
    profiles: tuple[AgentProfile, ...]
    seed: int
    tau: float = DEFAULT_TAU
    events_per_agent: int = DEFAULT_EVENTS_PER_AGENT
    hours: tuple[float, ...] = DEFAULT_HOURS
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    val_fraction: float = DEFAULT_VAL_FRACTION
    out_dir: Optional[str] = None

    def __post_init__(self):
        if len(self.layouts) != CANONICAL_LAYOUT_COUNT:
            raise ConfigError(
                f"expected {CANONICAL_LAYOUT_COUNT} layout paths, "
                f"got {len(self.layouts)}"
            )
        if len(self.profiles) != CANONICAL_PROFILE_COUNT:
            raise ConfigError(
                f"expected {CANONICAL_PROFILE_COUNT} agent profiles, "
                f"got {len(self.profiles)}"
            )
        ids = [p.id for p in self.profiles]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate profile ids: {ids}")
        if not (0.0 < self.val_fraction < 1.0):
            raise ConfigError(
                f"val_fraction must be in (0, 1), got {self.val_fraction}"
            )
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if self.events_per_agent < 1:
            raise ConfigError(
                f"events_per_agent must be >= 1, got {self.events_per_agent}"
            )
        if not self.hours:
            raise ConfigError("hours must be non-empty")

    def check_paths(self):
        """Raise unless every referenced layout file exists."""
        for path in self.layouts:
            if not Path(path).is_file():
                raise ConfigError(f"layout file not found: {path}")

    def with_overrides(self, *, seed: Optional[int] = None,
                       epochs: Optional[int] = None,
                       learning_rate: Optional[float] = None,
                       patience: Optional[int] = None,
                       out_dir: Optional[str] = None) -> "ExperimentConfig":
        """Apply command-line overrides; None leaves a field unchanged."""
        train = self.train
        updates = {}
        if epochs is not None:
            updates["epochs"] = epochs
        if learning_rate is not None:
            updates["learning_rate"] = learning_rate
        if patience is not None:
            updates["patience"] = patience
        if updates:
            train = dataclasses.replace(train, **updates)
        return dataclasses.replace(
            self,
            seed=self.seed if seed is None else seed,
            train=train,
            out_dir=self.out_dir if out_dir is None else out_dir,
        )

    def to_dict(self) -> dict:
        """JSON-ready echo of the config (absolute layout paths)."""
        return {
            "layouts": list(self.layouts),
            "profiles": [_profile_to_dict(p) for p in self.profiles],
            "seed": self.seed,
            "tau": self.tau,
            "events_per_agent": self.events_per_agent,
            "hours": list(self.hours),
            "train": {k: getattr(self.train, k) for k in _TRAIN_KEYS},
            "val_fraction": self.val_fraction,
            "out_dir": self.out_dir,
        }


def _profile_to_dict(profile: AgentProfile) -> dict:
    return {
        "id": profile.id,
        "weights": dict(profile.weights),
        "activity_mix": {a.value: p for a, p in profile.activity_mix.items()},
        "shade_seeking": profile.shade_seeking,
        "social_affinity": profile.social_affinity,
    }


def _parse_profile(raw: Mapping, where: str) -> AgentProfile:
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{where}: profile must be an object, got {type(raw).__name__}")
    missing = {"id", "weights", "activity_mix"} - set(raw)
    if missing:
        raise ConfigError(f"{where}: profile missing keys {sorted(missing)}")
    mix = {}
    for name, p in raw["activity_mix"].items():
        try:
            act = Activity(name)
        except ValueError:
            known = [a.value for a in Activity]
            raise ConfigError(
                f"{where}: unknown activity {name!r}; known: {known}"
            ) from None
        mix[act] = float(p)
    return AgentProfile(
        id=str(raw["id"]),
        weights={str(k): float(v) for k, v in raw["weights"].items()},
        activity_mix=mix,
        shade_seeking=float(raw.get("shade_seeking", 0.0)),
        social_affinity=float(raw.get("social_affinity", 0.0)),
    )


def _parse_train(raw: Mapping, where: str) -> TrainConfig:
    unknown = set(raw) - set(_TRAIN_KEYS)
    if unknown:
        raise ConfigError(
            f"{where}: unknown train keys {sorted(unknown)}; "
            f"known: {list(_TRAIN_KEYS)}"
        )
    kwargs = {}
    for key in _TRAIN_KEYS:
        if key in raw:
            kwargs[key] = raw[key]
    return TrainConfig(**kwargs)


def parse_config(raw: Mapping, base_dir: Path, where: str = "config") -> ExperimentConfig:
    """Build an ExperimentConfig from a decoded JSON object."""
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{where}: top level must be an object")
    for key in ("layouts", "profiles", "seed"):
        if key not in raw:
            raise ConfigError(f"{where}: missing required key {key!r}")
    layouts = tuple(
        str((base_dir / p).resolve()) if not Path(p).is_absolute() else str(p)
        for p in raw["layouts"]
    )
    profiles = tuple(
        _parse_profile(p, f"{where}: profiles[{i}]")
        for i, p in enumerate(raw["profiles"])
    )
    train = _parse_train(raw.get("train", {}), f"{where}: train")
    try:
        return ExperimentConfig(
            layouts=layouts,
            profiles=profiles,
            seed=int(raw["seed"]),
            tau=float(raw.get("tau", DEFAULT_TAU)),
            events_per_agent=int(raw.get("events_per_agent",
                                         DEFAULT_EVENTS_PER_AGENT)),
            hours=tuple(float(h) for h in raw.get("hours", DEFAULT_HOURS)),
            train=train,
            val_fraction=float(raw.get("val_fraction", DEFAULT_VAL_FRACTION)),
            out_dir=raw.get("out_dir"),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Read a JSON config file; relative layout paths resolve beside it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(raw, path.parent.resolve(), where=str(path))


def canonical_config() -> ExperimentConfig:
    """The packaged four-layout, three-agent experiment."""
    root = resources.files("parkpref").joinpath("data")
    return load_config(Path(str(root)) / "canonical.json")
