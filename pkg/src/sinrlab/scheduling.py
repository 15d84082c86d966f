"""User-group selection: uniform random groups and the priority-queue scheduler (PQS)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from scipy.stats import rankdata

from .beamforming import Mode
from .errors import NoEligibleUsers, PopulationTooSmall, ZeroVector
from .geometry import UserPopulation, great_circle_distance


@dataclass(frozen=True)
class TrafficModel:
    c_min: float = 5.0  # Mbps
    c_max: float = 100.0  # Mbps

    def __post_init__(self):
        if not 0 <= self.c_min <= self.c_max:
            raise ValueError("need 0 <= c_min <= c_max")


@dataclass(frozen=True)
class PqsConfig:
    slot_duration: float = 0.01  # s
    scheduling_period: float = 2.0  # s
    max_residual_visibility: int = 50  # slots
    unmet_capacity_factor: float = 2.0
    n_priority_classes: int = 2
    correlation_threshold: float = 0.5
    distance_threshold: float = 30.0  # km

    def __post_init__(self):
        if self.n_priority_classes < 2:
            raise ValueError("need at least two priority classes")
        if not (0 < self.correlation_threshold <= 1 and self.distance_threshold > 0):
            raise ValueError("constraint thresholds must be positive")

    @property
    def n_slots(self) -> int:
        return int(round(self.scheduling_period / self.slot_duration))


@dataclass(frozen=True)
class ScheduledGroup:
    users: tuple[int, ...]
    slot_index: int = 0
    mode: Mode = Mode.CSI

    def __post_init__(self):
        if len(self.users) == 0:
            raise ValueError("a scheduled group needs at least one user")
        if len(set(self.users)) != len(self.users):
            raise ValueError("duplicate user in group")

    def __len__(self):
        return len(self.users)


def random_schedule(seed, population, n_beams: int, min_size: int = 8, slot_index: int = 0,
                    mode: Mode = Mode.CSI) -> ScheduledGroup:
    """Uniform group size in ``{min_size, .., min(n_beams, |population|)}``, members without replacement.

    ``population`` is a user count, a sequence of candidate indices, or a
    :class:`UserPopulation`; ``seed`` may be a ``numpy`` Generator.
    """
    if isinstance(population, UserPopulation):
        candidates = np.arange(len(population))
    elif np.ndim(population) == 0:
        candidates = np.arange(int(population))
    else:
        candidates = np.asarray(population, dtype=int)
    if len(candidates) < min_size:
        raise PopulationTooSmall(f"{len(candidates)} candidates, need at least {min_size}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    size = int(rng.integers(min_size, min(n_beams, len(candidates)) + 1))
    chosen = rng.choice(candidates, size=size, replace=False)
    return ScheduledGroup(tuple(int(i) for i in chosen), slot_index, Mode(mode))


def channel_correlation(h_i, h_j) -> float:
    h_i = np.asarray(h_i)
    h_j = np.asarray(h_j)
    if h_i.shape != h_j.shape:
        raise ValueError(f"vector lengths differ: {h_i.shape} vs {h_j.shape}")
    ni, nj = np.linalg.norm(h_i), np.linalg.norm(h_j)
    if ni == 0 or nj == 0:
        raise ZeroVector("correlation of a zero vector is undefined")
    return float(min(1.0, abs(np.vdot(h_j, h_i)) / (ni * nj)))


def assign_traffic(population: UserPopulation, t: TrafficModel, seed=None) -> np.ndarray:
    """Requested rate (Mbps) growing with the rank of each user's density weight.

    Ties share their mean rank; ``seed`` is accepted for interface symmetry
    and unused since the assignment is deterministic.
    """
    w = np.asarray(population.density_weight, dtype=float)
    if len(w) == 1:
        q = np.array([0.5])
    else:
        q = (rankdata(w, method="average") - 1.0) / (len(w) - 1.0)
    return t.c_min + (t.c_max - t.c_min) * q


def compatible(candidate: int, selected: Sequence[int], mode: Mode, cfg: PqsConfig, *,
               channels=None, lat=None, lon=None) -> bool:
    """Pairwise constraint of ``candidate`` against every already selected user."""
    if not selected:
        return True
    if Mode(mode) is Mode.CSI:
        h = np.asarray(channels)
        sel = h[list(selected)]
        c = np.abs(sel.conj() @ h[candidate])
        c = c / (np.linalg.norm(sel, axis=1) * np.linalg.norm(h[candidate]))
        return bool(np.all(c < cfg.correlation_threshold))
    d = great_circle_distance(lat[candidate], lon[candidate], np.asarray(lat)[list(selected)],
                              np.asarray(lon)[list(selected)])
    return bool(np.all(d > cfg.distance_threshold))


def pairwise_compatible(users, mode: Mode, cfg: PqsConfig, *, channels=None, lat=None, lon=None) -> np.ndarray:
    """Boolean matrix: entry (i, j) tells whether ``users[i]`` and ``users[j]`` may share a slot."""
    users = np.asarray(users, dtype=int)
    if Mode(mode) is Mode.CSI:
        h = np.asarray(channels)[users]
        norms = np.linalg.norm(h, axis=1)
        if np.any(norms == 0):
            raise ZeroVector("correlation of a zero vector is undefined")
        c = np.abs(h.conj() @ h.T) / np.outer(norms, norms)
        return c < cfg.correlation_threshold
    la = np.asarray(lat)[users]
    lo = np.asarray(lon)[users]
    return great_circle_distance(la[:, None], lo[:, None], la[None, :], lo[None, :]) > cfg.distance_threshold


def audit_group(users: Sequence[int], mode: Mode, cfg: PqsConfig, *, channels=None, lat=None, lon=None) -> bool:
    """True when every pair in the group satisfies the constraint of ``mode``."""
    users = list(users)
    for i, a in enumerate(users):
        for b in users[i + 1:]:
            if Mode(mode) is Mode.CSI:
                if channel_correlation(channels[a], channels[b]) >= cfg.correlation_threshold:
                    return False
            elif great_circle_distance(lat[a], lon[a], lat[b], lon[b]) <= cfg.distance_threshold:
                return False
    return True


@dataclass
class PqsState:
    """Per-user scheduler state for one scheduling period; volumes in Mbit."""

    unmet: np.ndarray
    remaining_visibility: np.ndarray  # slots
    served: np.ndarray = None
    requested: np.ndarray = None

    def __post_init__(self):
        self.unmet = np.asarray(self.unmet, dtype=float).copy()
        self.remaining_visibility = np.asarray(self.remaining_visibility, dtype=float).copy()
        if self.served is None:
            self.served = np.zeros_like(self.unmet)
        if self.requested is None:
            self.requested = self.unmet.copy()

    @classmethod
    def from_requests(cls, c_req_mbps, remaining_visibility, cfg: PqsConfig) -> "PqsState":
        return cls(np.asarray(c_req_mbps, dtype=float) * cfg.scheduling_period, remaining_visibility)


class SlotEnvironment(Protocol):
    """What the scheduler needs to know about the radio environment at a slot."""

    lat: np.ndarray
    lon: np.ndarray

    def visible(self, slot: int) -> np.ndarray: ...

    def reported_channels(self, slot: int) -> np.ndarray: ...

    def serve(self, slot: int, group: ScheduledGroup) -> np.ndarray:
        """Achievable rate (bit/s) of each group member."""


def priority_classes(state: PqsState, active: np.ndarray, cfg: PqsConfig) -> np.ndarray:
    """Priority of each user, ``n_priority_classes - 1`` being the most urgent.

    A user is urgent on residual visibility below the threshold and on unmet
    capacity above ``unmet_capacity_factor`` times the mean volume served so
    far to active users; the class is the number of urgent conditions,
    capped at the top class.
    """
    fair_share = state.served[active].mean() if active.any() else 0.0
    urgent = (state.remaining_visibility < cfg.max_residual_visibility).astype(int) \
        + (state.unmet > cfg.unmet_capacity_factor * fair_share).astype(int)
    return np.minimum(urgent, cfg.n_priority_classes - 1)


def pqs_slot(state: PqsState, env: SlotEnvironment, slot: int, cfg: PqsConfig, mode: Mode,
             n_beams: int, rng: np.random.Generator) -> ScheduledGroup | None:
    mode = Mode(mode)
    active = np.asarray(env.visible(slot), dtype=bool) & (state.unmet > 0)
    if not active.any():
        return None
    cls = priority_classes(state, active, cfg)
    channels = env.reported_channels(slot) if mode is Mode.CSI else None
    candidates = np.flatnonzero(active)
    ok = pairwise_compatible(candidates, mode, cfg, channels=channels, lat=env.lat, lon=env.lon)
    pos = np.full(len(active), -1)
    pos[candidates] = np.arange(len(candidates))
    selected: list[int] = []
    for c in range(cfg.n_priority_classes - 1, -1, -1):
        queue = np.flatnonzero(active & (cls == c))
        for user in rng.permutation(queue):
            if len(selected) == n_beams:
                break
            if ok[pos[user], pos[selected]].all():
                selected.append(int(user))
        if len(selected) == n_beams:
            break
    group = ScheduledGroup(tuple(selected), slot, mode)
    rate = np.asarray(env.serve(slot, group), dtype=float)
    idx = np.array(group.users)
    delivered = np.minimum(state.unmet[idx], rate * cfg.slot_duration / 1e6)
    state.unmet[idx] -= delivered
    state.served[idx] += delivered
    return group


def pqs_schedule(state: PqsState, env: SlotEnvironment, cfg: PqsConfig, mode: Mode, n_beams: int,
                 rng: np.random.Generator) -> list[ScheduledGroup]:
    """Run one scheduling period; returns the groups of the slots that served anyone."""
    first = np.asarray(env.visible(0), dtype=bool) & (state.unmet > 0)
    if not first.any():
        raise NoEligibleUsers("no visible user with pending traffic")
    groups = []
    for slot in range(cfg.n_slots):
        g = pqs_slot(state, env, slot, cfg, mode, n_beams, rng)
        if g is not None:
            groups.append(g)
        state.remaining_visibility -= 1
    return groups


def write_schedule_csv(groups: Sequence[ScheduledGroup], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot_index", "user_ids"])
        for g in groups:
            w.writerow([g.slot_index, " ".join(str(u) for u in g.users)])
    return path


def read_schedule_csv(path, mode: Mode = Mode.CSI) -> list[ScheduledGroup]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["slot_index", "user_ids"]:
            raise ValueError(f"unexpected header {header}")
        return [ScheduledGroup(tuple(int(x) for x in ids.split()), int(slot), mode) for slot, ids in r]
