"""Assessment indexes for placement proposals.

Each index maps one aspect of a proposed slot to [0, 1], where 1 is the best
attainable fit. The total index is a weighted arithmetic mean over the
components a strategy actually uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import CapabilityVector, Duration, TimeInstant


def machine_index(requirement: CapabilityVector, offered: CapabilityVector) -> float:
    """Fit of a machine to an operation, penalizing over-fulfillment.

    Binary parameters are a hard precondition checked during machine
    filtering and take no part in grading. For each graded parameter the
    relative excess over the requirement is averaged; the index is
    1 / (1 + mean_excess). A machine matching every graded requirement
    exactly scores 1.0.
    """
    if not offered.covers(requirement):
        raise ValueError("machine does not satisfy the requirement")
    req = requirement.graded_map
    if not req:
        return 1.0
    have = offered.graded_map
    excess = [max(0.0, (have[name] - value) / value) for name, value in req.items()]
    return 1.0 / (1.0 + sum(excess) / len(excess))


def robustness_index(gap_usable: Duration, duration: Duration, reserve: Duration) -> float:
    """How much of the wanted disturbance reserve fits behind the operation.

    ``gap_usable`` is the free time from the proposed start to the end of the
    gap (forward) or from the gap start to the proposed end (backward). With
    no reserve wanted the index is 1.0; a gap too small for the operation
    itself is a caller error.
    """
    if gap_usable < duration:
        raise ValueError("gap cannot hold the operation")
    if reserve <= 0:
        return 1.0
    return min(1.0, (gap_usable - duration) / reserve)


def position_index(remainder: Duration, apt: Duration) -> float:
    """Quality of the leftover gap after placement.

    A remainder of zero wastes nothing and a remainder of at least the
    machine's average processing time still fits a typical operation; both
    score 1.0. Anything between is dead time, graded linearly.
    """
    if remainder < 0:
        raise ValueError("remainder must be >= 0")
    if apt <= 0:
        raise ValueError("average processing time must be > 0")
    if remainder == 0 or remainder >= apt:
        return 1.0
    return remainder / apt


def setup_index(own_family: str | None, neighbor_family: str | None,
                idle_between: Duration, apt: Duration) -> float:
    """Chance to inherit a neighbor's setup.

    Only adjacent slots of the same setup family help; the benefit decays
    linearly with the idle time between them, vanishing at one average
    processing time.
    """
    if apt <= 0:
        raise ValueError("average processing time must be > 0")
    if idle_between < 0:
        raise ValueError("idle time must be >= 0")
    if own_family is None or neighbor_family is None or own_family != neighbor_family:
        return 0.0
    return max(0.0, 1.0 - idle_between / apt)


def timeslot_index(start: TimeInstant, end: TimeInstant,
                   release: TimeInstant, due: TimeInstant,
                   backward: bool) -> float:
    """Position of the slot inside the order's release-due window.

    Backward placement prefers ends close to the due date; forward placement
    prefers starts close to the release. A window exactly as long as the
    operation scores 1.0. Slots outside the window are a caller error.
    """
    if start < release or end > due:
        raise ValueError("slot outside the release-due window")
    duration = end - start
    window = due - release
    if window == duration:
        return 1.0
    if backward:
        raw = 1.0 - (due - end) / (window - duration)
    else:
        raw = 1.0 - (start - release) / (window - duration)
    return max(0.0, min(1.0, raw))


COMPONENT_NAMES = ("machine", "robustness", "position", "setup", "timeslot")

#: which components each strategy grades; X-Competition and Wait-X retries
#: reuse the Force mask, Manual placements are not index-graded at all
STRATEGY_COMPONENTS: dict[str, frozenset[str]] = {
    "OPT": frozenset(COMPONENT_NAMES),
    "Force": frozenset({"robustness", "timeslot"}),
    "X-Competition": frozenset({"robustness", "timeslot"}),
    "Wait-X": frozenset({"robustness", "timeslot"}),
}


@dataclass(frozen=True)
class WeightConfig:
    """Relative component weights, plus the switch that drops the robustness
    component from strategies that allow disabling it."""

    machine: float = 1.0
    robustness: float = 1.0
    position: float = 1.0
    setup: float = 1.0
    timeslot: float = 1.0
    robustness_enabled: bool = True

    def __post_init__(self):
        values = [self.weight(name) for name in COMPONENT_NAMES]
        if any(w < 0 for w in values):
            raise ValueError("weights must be >= 0")
        if not any(values):
            raise ValueError("weights must not all be zero")

    def weight(self, name: str) -> float:
        return getattr(self, name)

    def active_components(self, strategy: str) -> frozenset[str]:
        mask = STRATEGY_COMPONENTS.get(strategy, STRATEGY_COMPONENTS["Force"])
        if not self.robustness_enabled and strategy != "OPT":
            mask = mask - {"robustness"}
        if not mask:
            raise ValueError(f"strategy {strategy!r} has no active components")
        return mask


@dataclass(frozen=True)
class IndexVector:
    machine: float | None = None
    robustness: float | None = None
    position: float | None = None
    setup: float | None = None
    timeslot: float | None = None

    def components(self) -> dict[str, float]:
        return {
            name: value
            for name in ("machine", "robustness", "position", "setup", "timeslot")
            if (value := getattr(self, name)) is not None
        }


def total_index(vector: IndexVector, weights: WeightConfig = WeightConfig()) -> float:
    """Weighted arithmetic mean of the graded components.

    Components left at None are outside the active strategy's scope and do
    not dilute the mean.
    """
    parts = vector.components()
    if not parts:
        raise ValueError("no graded components")
    total_weight = sum(weights.weight(name) for name in parts)
    if total_weight <= 0:
        raise ValueError("component weights must sum > 0")
    return sum(weights.weight(name) * value for name, value in parts.items()) / total_weight


def update_apt(current: Duration, completed: Duration, samples: int,
               alpha: float = 0.2) -> Duration:
    """Fold one completed operation into a machine's average processing time.

    Exponential moving average, rounded to whole minutes; the first completed
    operation replaces the configured default outright.
    """
    if completed <= 0:
        raise ValueError("completed duration must be > 0")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    if samples == 0:
        return completed
    return max(1, int(alpha * completed + (1.0 - alpha) * current + 0.5))
