"""Zone triggers, temporal clustering, and count-table assembly.

The pipeline: a merged NED detection stream is reduced to per-zone
trigger series (a trigger = one detection centroid inside a zone at a
time when some binding of the zone is permissible). Each zone's series
is then clustered into vehicles:

* a trigger within ``cluster_gap`` of the cluster's last trigger is the
  same vehicle;
* a gap of at least the zone's minimum headway (2.0 s for right-turn
  zones, 1.2 s otherwise) starts a new vehicle;
* anything in between is absorbed into the current cluster — it extends
  the cluster without being counted, which is what stops slow, long
  vehicles from being counted once per re-trigger;
* a trigger from a *different sensor* within ``dedup_window`` always
  joins the current cluster, so dual coverage of one zone never double
  counts.

Setting ``absorb=False`` disables the third rule (every gap >=
cluster_gap then opens a new cluster); that is the diagnostic "raw
re-trigger" mode and is deliberately prone to overcounting.

One event per cluster, timestamped at the cluster's first trigger; the
representative length is the cluster maximum (the longest box seen is
closest to the true length under partial occlusion).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import MisconfiguredSurrogateError, TimeOutsideScheduleError, UserInputError
from .ingest import FRAME_NED, MergedStream
from .intersection import (
    APPROACH_INDEX,
    MOVEMENT_INDEX,
    Approach,
    IntersectionConfig,
    Movement,
    Zone,
    ZoneKind,
)
from .report import TmcTable, empty_table

DEFAULT_MIN_HEADWAY_RIGHT_S = 2.0
DEFAULT_MIN_HEADWAY_OTHER_S = 1.2
DEFAULT_CLUSTER_GAP_S = 0.6


@dataclass(frozen=True)
class CountingParams:
    """Clustering thresholds; defaults derive from a 1.5 s minimum
    observed headway between vehicles."""

    min_headway_right: float = DEFAULT_MIN_HEADWAY_RIGHT_S
    min_headway_other: float = DEFAULT_MIN_HEADWAY_OTHER_S
    cluster_gap: float = DEFAULT_CLUSTER_GAP_S
    dedup_window: float | None = None  # None -> cluster_gap
    absorb: bool = True

    def __post_init__(self):
        if self.dedup_window is None:
            object.__setattr__(self, "dedup_window", self.cluster_gap)
        if min(self.min_headway_right, self.min_headway_other, self.cluster_gap) <= 0:
            raise UserInputError("counting thresholds must be positive")
        if self.dedup_window <= 0:
            raise UserInputError("dedup_window must be positive")
        if not self.cluster_gap < self.min_headway_other <= self.min_headway_right:
            raise UserInputError(
                "need cluster_gap < min_headway_other <= min_headway_right, got "
                f"{self.cluster_gap}, {self.min_headway_other}, {self.min_headway_right}"
            )

    def min_headway_for(self, zone: Zone) -> float:
        return self.min_headway_right if zone.right_only else self.min_headway_other

    def to_obj(self) -> dict:
        return {
            "min_headway_right": self.min_headway_right,
            "min_headway_other": self.min_headway_other,
            "cluster_gap": self.cluster_gap,
            "dedup_window": self.dedup_window,
            "absorb": self.absorb,
        }


@dataclass(frozen=True)
class ZoneTrigger:
    zone_id: str
    t: float
    detection_length: float
    frame_id: str


@dataclass(frozen=True)
class MovementEvent:
    """One counted vehicle."""

    approach: Approach
    movement: Movement
    t: float
    vehicle_class: int
    representative_length: float


def extract_triggers(
    stream: MergedStream, cfg: IntersectionConfig
) -> dict[str, list[ZoneTrigger]]:
    """Per-zone, time-ordered trigger series from a NED stream.

    A (detection, zone) pair triggers when the centroid is inside the
    zone and at least one of the zone's bindings is permissible at the
    frame time. A contained detection with a timestamp outside the
    schedule's session raises :class:`TimeOutsideScheduleError`.
    """
    if stream.coordinate_frame != FRAME_NED:
        raise ValueError("extract_triggers requires a NED stream")
    zones = cfg.zones
    out: dict[str, list[ZoneTrigger]] = {z.id: [] for z in zones}
    total = sum(len(f.detections) for f in stream.frames)
    if total == 0 or not zones:
        return out

    pn = np.empty(total)
    pe = np.empty(total)
    ts = np.empty(total)
    lengths = np.empty(total)
    frame_ids: list[str] = []
    i = 0
    for frame in stream.frames:
        for d in frame.detections:
            pn[i] = d.x
            pe[i] = d.y
            ts[i] = frame.t
            lengths[i] = d.length
            frame_ids.append(frame.frame_id)
            i += 1

    zn = np.array([z.center.north for z in zones])
    ze = np.array([z.center.east for z in zones])
    zcos = np.cos(np.array([z.yaw for z in zones]))
    zsin = np.sin(np.array([z.yaw for z in zones]))
    zhl = np.array([z.half_length for z in zones])
    zhw = np.array([z.half_width for z in zones])
    hits = _kernels.points_in_zones(pn, pe, zn, ze, zcos, zsin, zhl, zhw)

    schedule = cfg.schedule
    s0, s1 = schedule.session
    contained_any = hits.any(axis=1)
    bad = contained_any & ((ts < s0) | (ts >= s1))
    if np.any(bad):
        raise TimeOutsideScheduleError(float(ts[np.argmax(bad)]), schedule.session)

    starts = np.array([iv.start for iv in schedule.intervals])
    ends = np.array([iv.end for iv in schedule.intervals])
    idx = np.searchsorted(starts, ts, side="right") - 1
    in_interval = (idx >= 0) & (ts < ends[np.clip(idx, 0, None)])
    # Per (zone, interval): does the interval permit any non-right binding?
    zone_has_right = np.array(
        [any(m is Movement.RIGHT for _, m in z.bindings) for z in zones]
    )
    interval_perm = np.zeros((len(zones), len(schedule.intervals)), dtype=bool)
    for zi, z in enumerate(zones):
        non_right = [b for b in z.bindings if b[1] is not Movement.RIGHT]
        for ii, iv in enumerate(schedule.intervals):
            interval_perm[zi, ii] = any(b in iv.permitted for b in non_right)

    safe_idx = np.clip(idx, 0, None)
    permitted = zone_has_right[None, :] | (
        in_interval[:, None] & interval_perm[:, safe_idx].T
    )
    trig = hits & permitted
    for zi, z in enumerate(zones):
        rows = np.nonzero(trig[:, zi])[0]
        out[z.id] = [
            ZoneTrigger(z.id, float(ts[r]), float(lengths[r]), frame_ids[r])
            for r in rows
        ]
    return out


def _cluster_zone(
    triggers: Sequence[ZoneTrigger], min_headway: float, params: CountingParams
) -> list[tuple[float, float]]:
    """Greedy scan of one zone's series -> (first_t, max_length) clusters."""
    clusters: list[tuple[float, float]] = []
    first_t = last_t = max_len = None
    last_fid = None
    for trig in triggers:
        if first_t is None:
            first_t, last_t, max_len, last_fid = trig.t, trig.t, trig.detection_length, trig.frame_id
            continue
        gap = trig.t - last_t
        joins = (
            gap < params.cluster_gap
            or (params.absorb and gap < min_headway)
            or (trig.frame_id != last_fid and gap < params.dedup_window)
        )
        if not joins:
            clusters.append((first_t, max_len))
            first_t, max_len = trig.t, trig.detection_length
        else:
            max_len = max(max_len, trig.detection_length)
        last_t, last_fid = trig.t, trig.frame_id
    if first_t is not None:
        clusters.append((first_t, max_len))
    return clusters


def _events_for_zone(
    zone: Zone,
    binding: tuple[Approach, Movement],
    triggers: Sequence[ZoneTrigger],
    cfg: IntersectionConfig,
    params: CountingParams,
) -> list[MovementEvent]:
    approach, movement = binding
    table = cfg.class_table
    events = []
    for first_t, max_len in _cluster_zone(triggers, params.min_headway_for(zone), params):
        events.append(
            MovementEvent(
                approach=approach,
                movement=movement,
                t=first_t,
                vehicle_class=table.classify(max_len).id,
                representative_length=max_len,
            )
        )
    return events


def _sorted_events(tagged: list[tuple[float, str, MovementEvent]]) -> list[MovementEvent]:
    tagged.sort(key=lambda kv: (kv[0], kv[1]))
    return [e for _, _, e in tagged]


def cluster_triggers(
    series: Mapping[str, Sequence[ZoneTrigger]],
    cfg: IntersectionConfig,
    params: CountingParams | None = None,
) -> list[MovementEvent]:
    """Cluster per-zone series into events labeled with each zone's
    primary binding. Zones are independent; the result is merged by
    (timestamp, zone id) so ordering is deterministic."""
    params = params or cfg.params or CountingParams()
    tagged: list[tuple[float, str, MovementEvent]] = []
    for zone_id, triggers in series.items():
        zone = cfg.zone_by_id(zone_id)
        for ev in _events_for_zone(zone, zone.primary_binding, triggers, cfg, params):
            tagged.append((ev.t, zone_id, ev))
    return _sorted_events(tagged)


def count_rights_from_egress(
    series: Mapping[str, Sequence[ZoneTrigger]],
    cfg: IntersectionConfig,
    params: CountingParams | None = None,
) -> list[MovementEvent]:
    """Count right turns from egress-side surrogate zones.

    Used where the ingress corner is outside sensor coverage. Each zone
    must carry exactly one (approach, Right) binding; anything else is
    ambiguous (thru traffic into the same egress would be counted) and
    raises :class:`MisconfiguredSurrogateError`.
    """
    params = params or cfg.params or CountingParams()
    tagged: list[tuple[float, str, MovementEvent]] = []
    for zone_id, triggers in series.items():
        zone = cfg.zone_by_id(zone_id)
        if not zone.is_right_surrogate:
            raise MisconfiguredSurrogateError(
                f"zone {zone_id!r} is not a single-binding right-turn egress "
                f"surrogate (kind={zone.kind.value}, bindings={len(zone.bindings)})"
            )
        for ev in _events_for_zone(zone, zone.bindings[0], triggers, cfg, params):
            tagged.append((ev.t, zone_id, ev))
    return _sorted_events(tagged)


def count_session(
    stream: MergedStream,
    cfg: IntersectionConfig,
    params: CountingParams | None = None,
) -> tuple[list[MovementEvent], dict]:
    """Full counting pass: triggers -> ingress events + surrogate events.

    Egress zones that are not right surrogates are observational only;
    their triggers are extracted but never counted. Returns the merged,
    time-ordered event list and a metadata dict recording trigger counts
    and any shared Left/UTurn zones (whose events are labeled with the
    primary binding because ingress triggers cannot tell the two apart).
    """
    params = params or cfg.params or CountingParams()
    triggers = extract_triggers(stream, cfg)
    ingress = {z.id: triggers[z.id] for z in cfg.zones if z.kind is ZoneKind.INGRESS}
    surrogates = {z.id: triggers[z.id] for z in cfg.right_surrogate_zones}
    tagged: list[tuple[float, str, MovementEvent]] = []
    for ev in cluster_triggers(ingress, cfg, params):
        tagged.append((ev.t, "", ev))
    for ev in count_rights_from_egress(surrogates, cfg, params):
        tagged.append((ev.t, "", ev))
    events = _sorted_events(tagged)
    shared = [
        z.id
        for z in cfg.ingress_zones
        if {m for _, m in z.bindings} >= {Movement.LEFT, Movement.UTURN}
    ]
    meta = {
        "triggers_per_zone": {zid: len(trigs) for zid, trigs in sorted(triggers.items())},
        "ignored_egress_zones": sorted(
            z.id
            for z in cfg.zones
            if z.kind is ZoneKind.EGRESS and not z.is_right_surrogate
        ),
        "shared_left_uturn_zones": sorted(shared),
        "events": len(events),
    }
    return events, meta


def estimate_tmc(
    events: Sequence[MovementEvent],
    bin_seconds: float = 300.0,
    session: tuple[float, float] = (0.0, 0.0),
    classes: int = 6,
) -> TmcTable:
    """Bin events into a count table. Bins are [start, start + bin);
    an event exactly on a boundary belongs to the later bin."""
    table = empty_table(bin_seconds, session, classes)
    counts = np.array(table.counts)
    t0, t1 = session
    for ev in events:
        if not t0 <= ev.t < t1:
            raise UserInputError(f"event at t={ev.t} outside session [{t0}, {t1})")
        if not 1 <= ev.vehicle_class <= classes:
            raise UserInputError(f"event class {ev.vehicle_class} outside 1..{classes}")
        b = int(math.floor((ev.t - t0) / bin_seconds))
        b = min(b, counts.shape[0] - 1)  # guard the t1-epsilon float edge
        counts[b, APPROACH_INDEX[ev.approach], MOVEMENT_INDEX[ev.movement], ev.vehicle_class - 1] += 1
    return TmcTable(bin_seconds, session, counts)


def events_to_csv(events: Sequence[MovementEvent]) -> str:
    """Event list export: ``t,approach,movement,class,length``."""
    lines = ["t,approach,movement,class,length"]
    for ev in events:
        lines.append(
            f"{ev.t!r},{ev.approach.value},{ev.movement.value},"
            f"{ev.vehicle_class},{ev.representative_length!r}"
        )
    return "\n".join(lines) + "\n"
