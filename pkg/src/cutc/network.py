"""Road-network data model, travel-time tiers and occupancy bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from cutc import _kernels

# tier speeds in km/h
HEAVY_KMH = 15
MEDIUM_KMH = 30
LIGHT_KMH = 45

DEFAULT_STEP_SECONDS = 5


class NetworkError(ValueError):
    """Raised when a network violates a structural invariant."""


def kmh_to_ms(kmh: float) -> float:
    return kmh / 3.6


def steps_for(length: float, kmh: float, step_seconds: float, factor: int = 1) -> int:
    """Whole steps needed to cover ``factor * length`` meters at ``kmh``.

    Rounded up, minimum one step. Exact rational arithmetic so that e.g.
    125 m at 45 km/h is exactly 10 s, not 10.000000001 s.
    """
    seconds = Fraction(length) * factor * 18 / (5 * Fraction(kmh))
    return max(1, math.ceil(seconds / Fraction(step_seconds)))


def default_thresholds(capacity: int) -> tuple[int, int]:
    """(light_below, heavy_from): light is [0, a), medium [a, b), heavy [b, inf)."""
    return -(-capacity // 3), -(-2 * capacity // 3)


@dataclass(frozen=True)
class Street:
    id: str
    length: float
    capacity: int
    light_below: int
    heavy_from: int
    light_time: int
    medium_time: int
    heavy_time: int
    max_travel_time: int

    def __post_init__(self):
        if not self.length > 0:
            raise NetworkError(f"street {self.id}: length must be > 0, got {self.length}")
        if self.capacity < 1:
            raise NetworkError(f"street {self.id}: capacity must be >= 1, got {self.capacity}")
        if not 1 <= self.light_below <= self.heavy_from <= self.capacity:
            raise NetworkError(
                f"street {self.id}: thresholds must satisfy 1 <= light_below <= heavy_from "
                f"<= capacity, got {self.light_below}, {self.heavy_from}, cap {self.capacity}")
        if not self.heavy_time >= self.medium_time >= self.light_time >= 1:
            raise NetworkError(f"street {self.id}: tier travel times not monotone")
        if self.max_travel_time < self.heavy_time:
            raise NetworkError(
                f"street {self.id}: max_travel_time {self.max_travel_time} < heavy time "
                f"{self.heavy_time}")

    @classmethod
    def build(cls, id: str, length: float, capacity: int, step_seconds: float = DEFAULT_STEP_SECONDS,
              light_below: int | None = None, heavy_from: int | None = None,
              max_travel_time: int | None = None) -> "Street":
        """Derive tier times and thresholds from length and capacity, with overrides."""
        if not length > 0:
            raise NetworkError(f"street {id}: length must be > 0, got {length}")
        if capacity < 1:
            raise NetworkError(f"street {id}: capacity must be >= 1, got {capacity}")
        a, b = default_thresholds(capacity)
        heavy = steps_for(length, HEAVY_KMH, step_seconds)
        return cls(
            id=id, length=length, capacity=capacity,
            light_below=a if light_below is None else light_below,
            heavy_from=b if heavy_from is None else heavy_from,
            light_time=steps_for(length, LIGHT_KMH, step_seconds),
            medium_time=steps_for(length, MEDIUM_KMH, step_seconds),
            heavy_time=heavy,
            max_travel_time=capacity * heavy if max_travel_time is None else max_travel_time,
        )

    def tier(self, occupancy: int) -> str:
        if occupancy < self.light_below:
            return "light"
        if occupancy < self.heavy_from:
            return "medium"
        return "heavy"


def travel_time(street: Street, occupancy: int) -> int:
    """Steps needed to run ``street`` when ``occupancy`` vehicles are on it.

    Anything at or beyond the heavy threshold, including super-capacity
    counts, gets the heavy time.
    """
    if occupancy < 0:
        raise ValueError(f"occupancy must be >= 0, got {occupancy}")
    if occupancy < street.light_below:
        return street.light_time
    if occupancy < street.heavy_from:
        return street.medium_time
    return street.heavy_time


@dataclass(frozen=True)
class Link:
    src: str
    dst: str


@dataclass(frozen=True)
class Roundabout:
    """Shared capacity over a group of (contracted) streets."""
    id: str
    capacity: int
    member_streets: frozenset[str]


@dataclass(frozen=True)
class Ring:
    """A raw, uncontracted roundabout: small arcs forming a directed cycle."""
    id: str
    capacity: int | None
    arcs: tuple[str, ...]


@dataclass
class Network:
    streets: dict[str, Street]
    links: frozenset[tuple[str, str]] = frozenset()
    roundabouts: dict[str, Roundabout] = field(default_factory=dict)
    step_seconds: float = DEFAULT_STEP_SECONDS
    rings: dict[str, Ring] = field(default_factory=dict)

    def __post_init__(self):
        self.links = frozenset(self.links)
        if not self.step_seconds > 0:
            raise NetworkError(f"step_seconds must be > 0, got {self.step_seconds}")
        for a, b in self.links:
            if a not in self.streets or b not in self.streets:
                raise NetworkError(f"link {a} -> {b}: unknown street")
            if a == b:
                raise NetworkError(f"link {a} -> {b}: self-link")
        owner: dict[str, str] = {}
        for group in [*self.roundabouts.values(), *self.rings.values()]:
            members = group.member_streets if isinstance(group, Roundabout) else group.arcs
            for s in members:
                if s not in self.streets:
                    raise NetworkError(f"roundabout {group.id}: unknown street {s}")
                if s in owner:
                    raise NetworkError(
                        f"street {s} belongs to roundabouts {owner[s]} and {group.id}")
                owner[s] = group.id
        succ: dict[str, list[str]] = {s: [] for s in self.streets}
        pred: dict[str, list[str]] = {s: [] for s in self.streets}
        for a, b in sorted(self.links):
            succ[a].append(b)
            pred[b].append(a)
        self._succ = {s: tuple(v) for s, v in succ.items()}
        self._pred = {s: tuple(v) for s, v in pred.items()}
        self._roundabout_of = {s: r for s, r in owner.items() if r in self.roundabouts}

    def successors(self, street: str) -> tuple[str, ...]:
        return self._succ[street]

    def predecessors(self, street: str) -> tuple[str, ...]:
        return self._pred[street]

    def roundabout_of(self, street: str) -> str | None:
        return self._roundabout_of.get(street)

    def route_length(self, streets: Iterable[str]) -> float:
        return sum(self.streets[s].length for s in streets)

    def is_route(self, streets: list[str] | tuple[str, ...]) -> bool:
        if not streets or len(set(streets)) != len(streets):
            return False
        if any(s not in self.streets for s in streets):
            return False
        return all((a, b) in self.links for a, b in zip(streets, streets[1:]))

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (self.streets == other.streets and self.links == other.links
                and self.roundabouts == other.roundabouts and self.rings == other.rings
                and self.step_seconds == other.step_seconds)


class OccupancyLedger:
    """Per-street sorted enter and exit instants.

    ``occupancy(S, T)`` counts enters with ``IN <= T`` minus exits with
    ``OUT <= T``; a vehicle that exits at T no longer counts at T. Instances
    are treated as immutable: :meth:`with_events` returns a new ledger and
    shares untouched street arrays with the original.
    """

    def __init__(self, street_ids: Iterable[str],
                 events: Iterable[tuple[str, int, int]] = ()):
        empty = np.zeros(0, dtype=np.int64)
        self._enters: dict[str, np.ndarray] = {s: empty for s in street_ids}
        self._exits: dict[str, np.ndarray] = dict(self._enters)
        self._add(events)

    @classmethod
    def for_network(cls, network: Network, events: Iterable[tuple[str, int, int]] = ()):
        return cls(network.streets, events)

    def _add(self, events):
        grouped: dict[str, tuple[list[int], list[int]]] = {}
        for street, enter, exit_ in events:
            if street not in self._enters:
                raise KeyError(f"unknown street {street!r}")
            if exit_ <= enter:
                raise ValueError(f"street {street}: exit {exit_} not after enter {enter}")
            ins, outs = grouped.setdefault(street, ([], []))
            ins.append(enter)
            outs.append(exit_)
        for street, (ins, outs) in grouped.items():
            self._enters[street] = np.sort(np.concatenate(
                [self._enters[street], np.asarray(ins, dtype=np.int64)]))
            self._exits[street] = np.sort(np.concatenate(
                [self._exits[street], np.asarray(outs, dtype=np.int64)]))

    def with_events(self, events: Iterable[tuple[str, int, int]]) -> "OccupancyLedger":
        new = OccupancyLedger.__new__(OccupancyLedger)
        new._enters = dict(self._enters)
        new._exits = dict(self._exits)
        new._add(events)
        return new

    def copy(self) -> "OccupancyLedger":
        return self.with_events(())

    def streets(self):
        return self._enters.keys()

    def events(self, street: str) -> tuple[np.ndarray, np.ndarray]:
        return self._enters[street], self._exits[street]

    def occupancy(self, street: str, t: int) -> int:
        if street not in self._enters:
            raise KeyError(f"unknown street {street!r}")
        if t < 0:
            raise ValueError(f"t must be >= 0, got {t}")
        return int(_kernels.occupancy_many(self._enters[street], self._exits[street],
                                           np.array([t], dtype=np.int64))[0])

    def occupancy_many(self, street: str, times) -> np.ndarray:
        if street not in self._enters:
            raise KeyError(f"unknown street {street!r}")
        times = np.asarray(times, dtype=np.int64)
        return _kernels.occupancy_many(self._enters[street], self._exits[street], times)

    def max_time(self) -> int:
        return max((int(v[-1]) for v in self._exits.values() if v.size), default=0)


def occupancy(ledger: OccupancyLedger, street: str, t: int) -> int:
    return ledger.occupancy(street, t)


def roundabout_occupancy(ledger: OccupancyLedger, roundabout: Roundabout | str, t: int,
                         network: Network | None = None) -> int:
    """Sum of member-street occupancies at step ``t``."""
    if isinstance(roundabout, str):
        if network is None or roundabout not in network.roundabouts:
            raise KeyError(f"unknown roundabout {roundabout!r}")
        roundabout = network.roundabouts[roundabout]
    return sum(ledger.occupancy(s, t) for s in sorted(roundabout.member_streets))


def network_from_records(streets: Mapping[str, Street], links, roundabouts=(),
                         step_seconds: float = DEFAULT_STEP_SECONDS, rings=()) -> Network:
    return Network(dict(streets), frozenset(links), {r.id: r for r in roundabouts},
                   step_seconds, {r.id: r for r in rings})
