"""Intersection geometry and signal-phase gating.

Zones are oriented rectangles in the local NED plane (the down component
is ignored; the intersection is treated as planar). Each zone is tagged
ingress or egress and bound to one or more (approach, movement) pairs;
the first listed binding is the zone's primary label for counting.

The phase schedule lists non-overlapping [start, end) intervals with the
set of permitted (approach, movement) pairs. Right turns are permitted
at all times regardless of schedule content (right on red).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Sequence

from .classify import (
    ClassTable,
    DEFAULT_CLASS_TABLE,
    class_table_from_obj,
    class_table_to_obj,
)
from .errors import ConfigInvariantError, SchemaError, TimeOutsideScheduleError
from .geo import GeodeticPoint, NedPoint, atomic_write_text

if TYPE_CHECKING:  # avoids a circular import; counting imports this module
    from .counting import CountingParams


class Approach(Enum):
    NB = "NB"
    SB = "SB"
    EB = "EB"
    WB = "WB"


class Movement(Enum):
    LEFT = "Left"
    THRU = "Thru"
    RIGHT = "Right"
    UTURN = "UTurn"


APPROACHES = tuple(Approach)
MOVEMENTS = tuple(Movement)
APPROACH_INDEX = {a: i for i, a in enumerate(APPROACHES)}
MOVEMENT_INDEX = {m: i for i, m in enumerate(MOVEMENTS)}

Binding = tuple[Approach, Movement]


class ZoneKind(Enum):
    INGRESS = "Ingress"
    EGRESS = "Egress"


@dataclass(frozen=True)
class Zone:
    """Oriented rectangle: half_length along the travel axis at ``yaw``.

    ``yaw`` is measured about down, from north toward east, and points in
    the direction of travel through the zone.
    """

    id: str
    kind: ZoneKind
    center: NedPoint
    half_length: float
    half_width: float
    yaw: float
    bindings: tuple[Binding, ...]

    def __post_init__(self):
        if self.half_length <= 0 or self.half_width <= 0:
            raise ConfigInvariantError(f"zone {self.id!r}: half extents must be > 0")
        if not self.bindings:
            raise ConfigInvariantError(f"zone {self.id!r}: bindings must be non-empty")
        if len(set(self.bindings)) != len(self.bindings):
            raise ConfigInvariantError(f"zone {self.id!r}: duplicate bindings")

    @property
    def primary_binding(self) -> Binding:
        return self.bindings[0]

    @property
    def right_only(self) -> bool:
        return all(m is Movement.RIGHT for _, m in self.bindings)

    @property
    def is_right_surrogate(self) -> bool:
        """Egress zone standing in for a blind right-turn ingress."""
        return (
            self.kind is ZoneKind.EGRESS
            and len(self.bindings) == 1
            and self.bindings[0][1] is Movement.RIGHT
        )


def point_in_zone(p: NedPoint, z: Zone) -> bool:
    """Boundary-inclusive containment in the zone's local axes."""
    dn = p.north - z.center.north
    de = p.east - z.center.east
    c, s = math.cos(z.yaw), math.sin(z.yaw)
    u = dn * c + de * s
    v = -dn * s + de * c
    return abs(u) <= z.half_length and abs(v) <= z.half_width


@dataclass(frozen=True)
class PhaseInterval:
    start: float
    end: float
    permitted: frozenset[Binding]

    def __post_init__(self):
        if not self.end > self.start:
            raise ConfigInvariantError(
                f"phase interval [{self.start}, {self.end}) is empty"
            )


@dataclass(frozen=True)
class PhaseSchedule:
    """Time-sorted, non-overlapping phase intervals plus session bounds."""

    intervals: tuple[PhaseInterval, ...]
    session: tuple[float, float]

    def __post_init__(self):
        if not self.intervals:
            raise ConfigInvariantError("schedule must contain at least one interval")
        prev_end = None
        for iv in self.intervals:
            if prev_end is not None and iv.start < prev_end:
                raise ConfigInvariantError(
                    f"phase intervals overlap at t={iv.start}"
                )
            prev_end = iv.end
        s0, s1 = self.session
        if not (s0 <= self.intervals[0].start and self.intervals[-1].end <= s1):
            raise ConfigInvariantError("schedule intervals fall outside session bounds")

    @classmethod
    def from_intervals(cls, intervals: Iterable[PhaseInterval]) -> "PhaseSchedule":
        ivs = tuple(sorted(intervals, key=lambda iv: iv.start))
        if not ivs:
            raise ConfigInvariantError("schedule must contain at least one interval")
        return cls(ivs, (ivs[0].start, ivs[-1].end))


def permissible(a: Approach, m: Movement, t: float, s: PhaseSchedule) -> bool:
    """Whether (a, m) may move at time t. Right turns always may."""
    s0, s1 = s.session
    if not (s0 <= t < s1):
        raise TimeOutsideScheduleError(t, s.session)
    if m is Movement.RIGHT:
        return True
    for iv in s.intervals:
        if iv.start <= t < iv.end:
            return (a, m) in iv.permitted
    return False


@dataclass(frozen=True)
class IntersectionConfig:
    ned_origin: GeodeticPoint
    zones: tuple[Zone, ...]
    schedule: PhaseSchedule
    params: "CountingParams | None" = None  # None means defaults
    class_table: ClassTable = DEFAULT_CLASS_TABLE

    def __post_init__(self):
        validate_config_structure(self.zones)

    def zone_by_id(self, zone_id: str) -> Zone:
        for z in self.zones:
            if z.id == zone_id:
                return z
        raise KeyError(zone_id)

    @property
    def ingress_zones(self) -> tuple[Zone, ...]:
        return tuple(z for z in self.zones if z.kind is ZoneKind.INGRESS)

    @property
    def right_surrogate_zones(self) -> tuple[Zone, ...]:
        return tuple(z for z in self.zones if z.is_right_surrogate)

    def countable_targets(self) -> tuple[tuple[Zone, Binding], ...]:
        """(zone, binding) pairs the counting pipeline can attribute.

        Ingress zones count as their primary binding; right-surrogate
        egress zones count as their single binding.
        """
        out = [(z, z.primary_binding) for z in self.ingress_zones]
        out.extend((z, z.bindings[0]) for z in self.right_surrogate_zones)
        return tuple(out)


def validate_config_structure(zones: Sequence[Zone]) -> None:
    ids = [z.id for z in zones]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ConfigInvariantError(f"duplicate zone ids: {dupes}")
    ingress_bindings = {b for z in zones if z.kind is ZoneKind.INGRESS for b in z.bindings}
    surrogate_bindings = {
        z.bindings[0]: z.id for z in zones if z.is_right_surrogate
    }
    # Every counted movement needs an ingress zone or a right surrogate,
    # and never both (that would double count).
    for z in zones:
        for b in z.bindings:
            covered_by_ingress = b in ingress_bindings
            covered_by_surrogate = b in surrogate_bindings
            if covered_by_ingress and covered_by_surrogate:
                raise ConfigInvariantError(
                    f"movement {b[0].value}/{b[1].value} has both an ingress "
                    f"zone and egress surrogate {surrogate_bindings[b]!r}"
                )
            if not covered_by_ingress and not covered_by_surrogate:
                raise ConfigInvariantError(
                    f"zone {z.id!r} binds {b[0].value}/{b[1].value} which has "
                    "no ingress zone and no egress surrogate"
                )


def _binding_from_obj(obj) -> Binding:
    try:
        a, m = obj
        return (Approach(a), Movement(m))
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"bad (approach, movement) pair {obj!r}: {exc}") from None


def _binding_to_obj(b: Binding) -> list[str]:
    return [b[0].value, b[1].value]


def _sorted_bindings(bindings: Iterable[Binding]) -> list[Binding]:
    return sorted(bindings, key=lambda b: (APPROACH_INDEX[b[0]], MOVEMENT_INDEX[b[1]]))


def config_from_obj(doc) -> IntersectionConfig:
    """Build a validated config from a decoded JSON document."""
    from .counting import CountingParams

    try:
        origin = doc["ned_origin"]
        ned_origin = GeodeticPoint(origin["lat"], origin["lon"], origin["alt"])
        zones = []
        for zobj in doc["zones"]:
            n, e = zobj["center"]
            zones.append(
                Zone(
                    id=str(zobj["id"]),
                    kind=ZoneKind(zobj["kind"]),
                    center=NedPoint(float(n), float(e), 0.0),
                    half_length=float(zobj["half_length"]),
                    half_width=float(zobj["half_width"]),
                    yaw=float(zobj["yaw"]),
                    bindings=tuple(_binding_from_obj(b) for b in zobj["bindings"]),
                )
            )
        intervals = tuple(
            PhaseInterval(
                start=float(iobj["start"]),
                end=float(iobj["end"]),
                permitted=frozenset(_binding_from_obj(b) for b in iobj["permitted"]),
            )
            for iobj in doc["schedule"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"bad intersection config: {exc}") from None
    schedule = PhaseSchedule.from_intervals(intervals)
    params = None
    if "params" in doc:
        try:
            params = CountingParams(**doc["params"])
        except TypeError as exc:
            raise SchemaError(f"bad counting params: {exc}") from None
    class_table = DEFAULT_CLASS_TABLE
    if "class_table" in doc:
        class_table = class_table_from_obj(doc["class_table"])
    return IntersectionConfig(
        ned_origin=ned_origin,
        zones=tuple(zones),
        schedule=schedule,
        params=params,
        class_table=class_table,
    )


def config_to_obj(cfg: IntersectionConfig) -> dict:
    doc = {
        "ned_origin": {
            "lat": cfg.ned_origin.lat,
            "lon": cfg.ned_origin.lon,
            "alt": cfg.ned_origin.alt,
        },
        "zones": [
            {
                "id": z.id,
                "kind": z.kind.value,
                "center": [z.center.north, z.center.east],
                "half_length": z.half_length,
                "half_width": z.half_width,
                "yaw": z.yaw,
                "bindings": [_binding_to_obj(b) for b in z.bindings],
            }
            for z in cfg.zones
        ],
        "schedule": [
            {
                "start": iv.start,
                "end": iv.end,
                "permitted": [_binding_to_obj(b) for b in _sorted_bindings(iv.permitted)],
            }
            for iv in cfg.schedule.intervals
        ],
    }
    if cfg.params is not None:
        doc["params"] = cfg.params.to_obj()
    if cfg.class_table is not DEFAULT_CLASS_TABLE:
        doc["class_table"] = class_table_to_obj(cfg.class_table)
    return doc


def load_intersection_config(path) -> IntersectionConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"config is not valid JSON: {exc}") from None
    return config_from_obj(doc)


def save_intersection_config(cfg: IntersectionConfig, path) -> None:
    atomic_write_text(path, json.dumps(config_to_obj(cfg), indent=2) + "\n")
