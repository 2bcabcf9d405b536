"""Rule-based agent simulation producing ground-truth location choices.

Agents hold linear utility functions over the encoded cell features plus
two named terms (shade seeking over the shadow flag, social affinity over
own-cell + adjacent occupancy). For each scheduled event an agent picks
the utility-maximizing cell among those affording its activity, with
optional Gumbel noise for stochastic-but-preference-consistent choices.

Occupancy is endogenous and event-sequential: an agent occupies its
chosen cell until its own next event, and each decision sees the
occupancy left by all earlier decisions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .envdyn import DEFAULT_ENV, EnvParams, env_field, sun_state
from .errors import ConfigError, UnsatisfiableActivityError
from .features import SCHEMA, FeatureTensor, encode_features
from .layout import ElementKind, Layout
from .seeding import stream


class Activity(Enum):
    WALK = "walk"
    SIT = "sit"
    EAT = "eat"
    PLAY = "play"


ACTIVITY_ORDER = (Activity.WALK, Activity.SIT, Activity.EAT, Activity.PLAY)

# Which feature-schema one-hots mark a cell as usable for each activity.
AFFORDANCE_FEATURES: dict[Activity, tuple[str, ...]] = {
    Activity.WALK: ("terrain_trail", "terrain_running_track"),
    Activity.SIT: ("furniture_bench",),
    Activity.EAT: ("furniture_picnic_table",),
    Activity.PLAY: ("furniture_playground",),
}

# The same map in layout terms, for checking layouts before simulating.
AFFORDANCE_KINDS: dict[Activity, tuple[ElementKind, ...]] = {
    Activity.WALK: (ElementKind.TRAIL, ElementKind.RUNNING_TRACK),
    Activity.SIT: (ElementKind.BENCH,),
    Activity.EAT: (ElementKind.PICNIC_TABLE,),
    Activity.PLAY: (ElementKind.PLAYGROUND,),
}

DEFAULT_TAU = 0.1
DEFAULT_EVENTS_PER_AGENT = 40
DEFAULT_HOURS = (8, 10, 12, 14, 16, 18)


@dataclass(frozen=True)
class AgentProfile:
    """Preference rules of one simulated agent.

    weights maps feature names (see features.SCHEMA) to utility weights;
    missing features contribute zero. shade_seeking adds to the shadow
    feature's weight; social_affinity adds to both occupancy features'
    weights, so a sociable agent is drawn toward cells that are occupied
    or have occupied neighbors and an avoidant agent is pushed away.
    """

    id: str
    weights: Mapping[str, float]
    activity_mix: Mapping[Activity, float]
    shade_seeking: float = 0.0
    social_affinity: float = 0.0

    def __post_init__(self):
        for name in self.weights:
            if name not in SCHEMA:
                raise ConfigError(
                    f"profile {self.id!r}: weight for unknown feature {name!r}"
                )
        if not self.activity_mix:
            raise ConfigError(f"profile {self.id!r}: empty activity_mix")
        for act, p in self.activity_mix.items():
            if not isinstance(act, Activity):
                raise ConfigError(f"profile {self.id!r}: bad activity key {act!r}")
            if p < 0:
                raise ConfigError(f"profile {self.id!r}: negative probability for {act}")
        total = float(sum(self.activity_mix.values()))
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(
                f"profile {self.id!r}: activity_mix sums to {total}, expected 1"
            )

    def effective_weights(self) -> np.ndarray:
        """Dense weight vector over the feature schema, named terms folded in."""
        w = np.zeros(SCHEMA.dim)
        for name, value in self.weights.items():
            w[SCHEMA.index(name)] += float(value)
        w[SCHEMA.index("shadow")] += self.shade_seeking
        w[SCHEMA.index("occupancy_here")] += self.social_affinity
        w[SCHEMA.index("occupancy_adjacent")] += self.social_affinity
        return w


@dataclass(frozen=True)
class ScheduleEntry:
    hour: float
    agent_id: str
    activity: Activity


@dataclass(frozen=True, eq=False)
class ChoiceEvent:
    """One ground-truth decision: which cell an agent picked for an activity."""

    layout_id: int
    agent_id: str
    activity: Activity
    hour: float
    chosen_cell: int
    occupancy: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.occupancy.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, ChoiceEvent):
            return NotImplemented
        return (
            self.layout_id == other.layout_id
            and self.agent_id == other.agent_id
            and self.activity is other.activity
            and self.hour == other.hour
            and self.chosen_cell == other.chosen_cell
            and np.array_equal(self.occupancy, other.occupancy)
        )


def utility(profile: AgentProfile, features: np.ndarray) -> float:
    """Utility of a single cell's feature vector for a profile.

    Linear in the encoded features: sum of weights[k] * x[k], plus
    shade_seeking * shadow, plus social_affinity * (own-cell occupancy +
    adjacent occupancy).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (SCHEMA.dim,):
        raise ValueError(f"feature vector must have shape ({SCHEMA.dim},), got {x.shape}")
    return float(x @ profile.effective_weights())


def utility_grid(profile: AgentProfile, tensor: FeatureTensor) -> np.ndarray:
    """Per-cell utilities for a whole feature tensor, shape (rows, cols)."""
    return tensor.values @ profile.effective_weights()


def affordance_mask(activity: Activity, tensor: FeatureTensor) -> np.ndarray:
    """Boolean (rows, cols) mask of cells that afford the activity."""
    mask = np.zeros(tensor.values.shape[:2], dtype=bool)
    for name in AFFORDANCE_FEATURES[activity]:
        mask |= tensor.values[:, :, SCHEMA.index(name)] == 1.0
    return mask


def check_affordances(layout: Layout):
    """Raise unless every activity has at least one affording cell."""
    for activity, kinds in AFFORDANCE_KINDS.items():
        if not layout.kind_mask(kinds).any():
            raise UnsatisfiableActivityError(
                f"layout {layout.id}: no cell affords {activity.value}"
            )


def choose_cell(profile: AgentProfile, activity: Activity,
                tensor: FeatureTensor, rng: Optional[np.random.Generator] = None,
                tau: float = DEFAULT_TAU,
                occupancy: Optional[np.ndarray] = None) -> ChoiceEvent:
    """Pick the cell for one event.

    Among affording cells the highest-utility cell wins, ties going to the
    lowest flat index. With tau > 0, i.i.d. Gumbel(scale=tau) noise is
    added to each affording cell's utility before the argmax (a softmax
    draw in disguise); tau = 0 draws nothing from rng.

    occupancy, when given, is stored on the event as the agent counts the
    decision was made against; it defaults to an all-zero grid.
    """
    if tau < 0:
        raise ConfigError(f"noise scale tau must be >= 0, got {tau}")
    if tau > 0 and rng is None:
        raise ConfigError("tau > 0 requires an rng")
    rows, cols = tensor.values.shape[:2]
    mask = affordance_mask(activity, tensor)
    n_affording = int(mask.sum())
    if n_affording == 0:
        raise UnsatisfiableActivityError(
            f"layout {tensor.layout_id}: no cell affords {activity.value}"
        )
    util = utility_grid(profile, tensor).reshape(-1)
    flat_mask = mask.reshape(-1)
    if tau > 0:
        # Noise is drawn only for affording cells, in flat-index order, so
        # the stream does not depend on how many cells lack the affordance.
        util = util.copy()
        util[flat_mask] += rng.gumbel(loc=0.0, scale=tau, size=n_affording)
    util = np.where(flat_mask, util, -np.inf)
    chosen = int(np.argmax(util))  # argmax takes the first (lowest) index on ties
    if occupancy is None:
        occupancy = np.zeros((rows, cols), dtype=np.int64)
    return ChoiceEvent(
        layout_id=tensor.layout_id,
        agent_id=profile.id,
        activity=activity,
        hour=tensor.hour,
        chosen_cell=chosen,
        occupancy=np.array(occupancy, dtype=np.int64),
    )


def build_schedule(profiles: Sequence[AgentProfile],
                   rng: np.random.Generator,
                   events_per_agent: int = DEFAULT_EVENTS_PER_AGENT,
                   hours: Sequence[float] = DEFAULT_HOURS) -> list[ScheduleEntry]:
    """Event schedule for one layout.

    Each agent gets events_per_agent events spread as evenly as possible
    over the given hours (earlier hours take the remainder). Within an
    hour, agents are interleaved round-robin in profile order. Each
    event's activity is drawn from that agent's activity_mix.
    """
    if not profiles:
        raise ConfigError("at least one agent profile is required")
    if events_per_agent < 1:
        raise ConfigError("events_per_agent must be >= 1")
    n_hours = len(hours)
    base, extra = divmod(events_per_agent, n_hours)
    per_hour = [base + (1 if i < extra else 0) for i in range(n_hours)]

    entries: list[ScheduleEntry] = []
    for hour, count in zip(hours, per_hour):
        for _ in range(count):
            for profile in profiles:
                acts = list(profile.activity_mix.keys())
                probs = np.array([profile.activity_mix[a] for a in acts])
                idx = int(rng.choice(len(acts), p=probs / probs.sum()))
                entries.append(ScheduleEntry(hour=float(hour), agent_id=profile.id,
                                             activity=acts[idx]))
    return entries


def run_simulation(layout: Layout, profiles: Sequence[AgentProfile],
                   schedule: Sequence[ScheduleEntry], seed: int,
                   tau: float = DEFAULT_TAU,
                   env_params: EnvParams = DEFAULT_ENV) -> list[ChoiceEvent]:
    """Execute a schedule on one layout and return the choice events.

    Events run strictly in schedule order. Before choosing, an agent
    vacates the cell from its previous event; the features it evaluates
    (and the occupancy stored on the event) reflect every earlier
    decision. Deterministic for fixed (layout, profiles, schedule, seed).
    """
    if not schedule:
        raise ConfigError("schedule must be non-empty")
    profiles_by_id = {p.id: p for p in profiles}
    if len(profiles_by_id) != len(profiles):
        raise ConfigError("duplicate agent profile ids")
    check_affordances(layout)

    rows, cols = layout.dims.rows, layout.dims.cols
    rng = stream(seed, layout.id, "choice")
    env_cache = {}
    occupancy = np.zeros((rows, cols), dtype=np.int64)
    agent_cell: dict[str, Optional[int]] = {p.id: None for p in profiles}
    events: list[ChoiceEvent] = []

    for entry in schedule:
        profile = profiles_by_id.get(entry.agent_id)
        if profile is None:
            raise ConfigError(f"schedule references unknown agent {entry.agent_id!r}")
        prev = agent_cell[profile.id]
        if prev is not None:
            occupancy[divmod(prev, cols)] -= 1
        if entry.hour not in env_cache:
            env_cache[entry.hour] = env_field(layout, sun_state(entry.hour, env_params),
                                              env_params)
        tensor = encode_features(layout, env_cache[entry.hour], occupancy,
                                 hour=entry.hour)
        event = choose_cell(profile, entry.activity, tensor, rng=rng, tau=tau,
                            occupancy=occupancy)
        occupancy[divmod(event.chosen_cell, cols)] += 1
        agent_cell[profile.id] = event.chosen_cell
        events.append(event)
    return events


def simulate_layout(layout: Layout, profiles: Sequence[AgentProfile], seed: int,
                    tau: float = DEFAULT_TAU,
                    events_per_agent: int = DEFAULT_EVENTS_PER_AGENT,
                    hours: Sequence[float] = DEFAULT_HOURS,
                    env_params: EnvParams = DEFAULT_ENV) -> list[ChoiceEvent]:
    """Build the default schedule for a layout and run it."""
    schedule = build_schedule(profiles, stream(seed, layout.id, "schedule"),
                              events_per_agent=events_per_agent, hours=hours)
    return run_simulation(layout, profiles, schedule, seed, tau=tau,
                          env_params=env_params)
