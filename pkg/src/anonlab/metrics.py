"""Anonymity metrics and policy gating.

possinymity -- members online at every round in which the pseudonym
    transmitted (the intersection attacker's candidate set).
indinymity  -- members whose presence matches the owner's at every round
    in which the pseudonym was enabled to transmit.  Suppressed rounds are
    excluded: the slot is forced silent there, so owner presence leaks
    nothing through it.

The gate is owner-blind: it evaluates the worst case over every member
still consistent with the pseudonym's history.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

POSSINYMITY = "possinymity"
INDINYMITY = "indinymity"
TRANSMIT = "transmit"
SUPPRESS = "suppress"


@dataclass(frozen=True)
class AnonymityPolicy:
    metric: str = POSSINYMITY
    floor: int = 1
    max_loss_rate: int | None = None
    window: int = 1
    delay_rounds: bool = False  # withhold the whole round instead of single slots

    def __post_init__(self):
        if self.metric not in (POSSINYMITY, INDINYMITY):
            raise ValueError("unknown metric %r" % self.metric)
        if self.floor < 1:
            raise ValueError("floor must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")


def possinymity(active_rows) -> int:
    """Candidate-set size from a (rounds, members) presence matrix of active rounds."""
    rows = np.asarray(active_rows, dtype=bool)
    if rows.ndim != 2:
        raise ValueError("expected a 2-D presence matrix")
    if rows.shape[0] == 0:
        return int(rows.shape[1])
    return int(_kernels.cumulative_candidates(rows)[-1])


def indinymity(enabled_rows, owner: int) -> int:
    rows = np.asarray(enabled_rows, dtype=bool)
    return _kernels.buddy_count(rows, owner)


@dataclass
class MetricSeries:
    values: dict = field(default_factory=dict)  # pseudonym -> [(round, possinymity, indinymity, decision)]

    def record(self, pseudonym, round_id: int, poss: int, indi: int | None, decision: str) -> None:
        self.values.setdefault(pseudonym, []).append((round_id, poss, indi, decision))

    def rows(self):
        for nym in sorted(self.values):
            for round_id, poss, indi, decision in self.values[nym]:
                yield round_id, nym, poss, indi, decision

    def minimum(self, column: str = POSSINYMITY) -> int | None:
        i = 1 if column == POSSINYMITY else 2
        vals = [v[i] for series in self.values.values() for v in series if v[i] is not None]
        return min(vals) if vals else None

    def suppressions(self) -> list:
        return [(r, nym) for r, nym, _, _, d in self.rows() if d == SUPPRESS]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", "pseudonym", "possinymity", "indinymity", "decision"])
            for r, nym, poss, indi, d in sorted(self.rows()):
                w.writerow([r, nym, poss, "" if indi is None else indi, d])


class PseudonymTracker:
    """Owner-blind control-plane state for one pseudonym."""

    def __init__(self, n_members: int):
        self.n = n_members
        self.candidates = np.ones(n_members, dtype=bool)
        self.active_rows: list[np.ndarray] = []
        self.enabled_rows: list[np.ndarray] = []
        self.history: list[tuple[int, int]] = []  # (round, worst-case metric after round)

    def possinymity(self) -> int:
        return int(self.candidates.sum())

    def indinymity(self, owner: int) -> int:
        if not self.enabled_rows:
            return self.n
        return indinymity(np.vstack(self.enabled_rows), owner)

    def worst_indinymity(self, extra_row: np.ndarray | None = None) -> int:
        rows = self.enabled_rows + ([extra_row] if extra_row is not None else [])
        cands = np.flatnonzero(self.candidates)
        if not rows or cands.size == 0:
            return self.n if not rows else 0
        mat = np.vstack(rows)
        return min(_kernels.buddy_count(mat, int(h)) for h in cands)

    def current(self, metric: str) -> int:
        return self.possinymity() if metric == POSSINYMITY else self.worst_indinymity()

    def value_before(self, round_id: int, window: int, metric: str) -> int:
        """Metric value as of ``window`` rounds before ``round_id``."""
        cutoff = round_id - window
        best = self.n
        for r, v in self.history:
            if r <= cutoff:
                best = v
            else:
                break
        return best

    def record(self, round_id: int, online: np.ndarray, active: bool, enabled: bool, metric: str) -> None:
        online = np.asarray(online, dtype=bool)
        # output that no remaining candidate could have produced is noise, not owner activity
        active = active and bool((self.candidates & online).any())
        if active:
            self.candidates &= online
            self.active_rows.append(online.copy())
        if enabled:
            self.enabled_rows.append(online.copy())
        self.history.append((round_id, self.current(metric)))


def hypothetical_value(policy: AnonymityPolicy, tracker: PseudonymTracker, online: np.ndarray) -> int:
    online = np.asarray(online, dtype=bool)
    if policy.metric == POSSINYMITY:
        after = tracker.candidates & online
        # the owner must be online to transmit; if nobody is, nothing can leak
        return int(after.sum()) if after.any() else tracker.possinymity()
    return tracker.worst_indinymity(online)


def gate_round(policy: AnonymityPolicy | None, tracker: PseudonymTracker, online, round_id: int = 0) -> str:
    """TRANSMIT unless letting this pseudonym act could break the policy."""
    if policy is None:
        return TRANSMIT
    value = hypothetical_value(policy, tracker, online)
    if value < policy.floor:
        return SUPPRESS
    if policy.max_loss_rate is not None:
        base = tracker.value_before(round_id, policy.window, policy.metric)
        if base - value > policy.max_loss_rate:
            return SUPPRESS
    return TRANSMIT
