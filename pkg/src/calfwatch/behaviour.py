"""Welfare metrics over a prediction timeline.

A timeline is the inference output: non-overlapping 3-second entries, each
carrying an activity state and a behaviour class.  This module aggregates
those entries into hourly buckets, whole-period summaries, and day/night
splits (daytime is 06:00-20:00 local time).

Entries are clipped to the query range and split fractionally at bucket
boundaries, so every classified second lands in exactly one bucket and in
exactly one of day/night.  Buckets are absolute 3600 s intervals anchored at
the local hour boundary of the (truncated) range start.  Proportions are
over classified time: hours the sensor missed simply contribute nothing.
"""

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import NamedTuple
from zoneinfo import ZoneInfo

import numpy as np

from .errors import BadRange
from .signals import BEHAVIOURS
from .timeutil import format_iso, ms_to_datetime

ENTRY_MS = 3000
HOUR_MS = 3_600_000
DAY_START_MS = 6 * HOUR_MS           # 06:00 local
NIGHT_START_MS = 20 * HOUR_MS        # 20:00 local
DAY_MS = 24 * HOUR_MS


class TimelineEntry(NamedTuple):
    start_t: int
    end_t: int
    activity: str
    behaviour: str


@dataclass(eq=False)
class PredictionTimeline:
    """Per-window model labels mapped onto wall-clock time."""

    calf_id: str
    start: np.ndarray                 # int64 ms, sorted, spaced >= 3000
    activity: np.ndarray              # object array of "active"/"inactive"
    behaviour: np.ndarray             # object array of behaviour classes
    model_versions: dict = field(default_factory=dict)

    def __post_init__(self):
        order = np.argsort(self.start, kind="stable")
        self.start = np.asarray(self.start, dtype=np.int64)[order]
        self.activity = np.asarray(self.activity, dtype=object)[order]
        self.behaviour = np.asarray(self.behaviour, dtype=object)[order]
        if len(self.start) > 1 and (np.diff(self.start) < ENTRY_MS).any():
            raise BadRange("timeline entries overlap")

    def __len__(self) -> int:
        return len(self.start)

    @property
    def entries(self) -> list[TimelineEntry]:
        return [TimelineEntry(int(s), int(s) + ENTRY_MS, a, b)
                for s, a, b in zip(self.start, self.activity, self.behaviour)]


@dataclass
class MetricsBucket:
    bucket_start: int                 # ms, hour boundary
    active_s: float = 0.0
    inactive_s: float = 0.0
    behaviour_s: dict = field(default_factory=lambda: {b: 0.0 for b in BEHAVIOURS})

    @property
    def coverage_s(self) -> float:
        return self.active_s + self.inactive_s


def _floor_local_hour(ms: int, tz) -> int:
    local = ms_to_datetime(ms).astimezone(tz)
    floored = local.replace(minute=0, second=0, microsecond=0)
    return int(floored.timestamp() * 1000)


def _resolve_tz(tz):
    if tz is None or tz == "UTC":
        return timezone.utc
    if isinstance(tz, str):
        return ZoneInfo(tz)
    return tz


def _check_range(from_ms, to_ms):
    if from_ms >= to_ms:
        raise BadRange(f"empty range [{from_ms}, {to_ms})")


def hourly_buckets(tl: PredictionTimeline, from_ms: int, to_ms: int,
                   tz="UTC") -> list[MetricsBucket]:
    """One bucket per hour of the range, including zero-coverage hours.

    Entries are clipped to [from, to); an entry straddling an hour boundary
    contributes its seconds to both hours, split exactly.
    """
    _check_range(from_ms, to_ms)
    tz = _resolve_tz(tz)
    anchor = _floor_local_hour(from_ms, tz)
    n_buckets = int(np.ceil((to_ms - anchor) / HOUR_MS))
    buckets = [MetricsBucket(bucket_start=anchor + k * HOUR_MS)
               for k in range(n_buckets)]

    for s, act, beh in zip(tl.start, tl.activity, tl.behaviour):
        a = max(int(s), from_ms)
        e = min(int(s) + ENTRY_MS, to_ms)
        while a < e:
            k = (a - anchor) // HOUR_MS
            seg_end = min(e, anchor + (k + 1) * HOUR_MS)
            seconds = (seg_end - a) / 1000.0
            b = buckets[k]
            if act == "active":
                b.active_s += seconds
            else:
                b.inactive_s += seconds
            b.behaviour_s[beh] = b.behaviour_s.get(beh, 0.0) + seconds
            a = seg_end
    return buckets


def activity_ratio(b: MetricsBucket):
    """(proportion of active time, active:inactive ratio); None on zero
    denominators."""
    cov = b.coverage_s
    proportion = b.active_s / cov if cov > 0 else None
    ratio = b.active_s / b.inactive_s if b.inactive_s > 0 else None
    return proportion, ratio


def behaviour_proportions(b: MetricsBucket):
    """Per-class share of the bucket's classified time; None map if empty."""
    cov = b.coverage_s
    if cov <= 0:
        return {beh: None for beh in b.behaviour_s}
    return {beh: sec / cov for beh, sec in b.behaviour_s.items()}


def period_summary(tl: PredictionTimeline, from_ms: int, to_ms: int) -> MetricsBucket:
    """Totals over the whole range (entries clipped at the edges)."""
    _check_range(from_ms, to_ms)
    total = MetricsBucket(bucket_start=from_ms)
    for s, act, beh in zip(tl.start, tl.activity, tl.behaviour):
        a = max(int(s), from_ms)
        e = min(int(s) + ENTRY_MS, to_ms)
        if a >= e:
            continue
        seconds = (e - a) / 1000.0
        if act == "active":
            total.active_s += seconds
        else:
            total.inactive_s += seconds
        total.behaviour_s[beh] = total.behaviour_s.get(beh, 0.0) + seconds
    return total


def _local_ms_of_day(ms: int, tz) -> int:
    local = ms_to_datetime(ms).astimezone(tz)
    return ((local.hour * 60 + local.minute) * 60 + local.second) * 1000 \
        + local.microsecond // 1000


def day_night_split(tl: PredictionTimeline, from_ms: int, to_ms: int,
                    tz="UTC") -> dict:
    """Active/inactive seconds and proportions for day (06-20 local) and
    night (20-06), entries split exactly at regime boundaries."""
    _check_range(from_ms, to_ms)
    tz = _resolve_tz(tz)
    acc = {"day": MetricsBucket(bucket_start=from_ms),
           "night": MetricsBucket(bucket_start=from_ms)}
    for s, act, beh in zip(tl.start, tl.activity, tl.behaviour):
        a = max(int(s), from_ms)
        e = min(int(s) + ENTRY_MS, to_ms)
        while a < e:
            x = _local_ms_of_day(a, tz)
            regime = "day" if DAY_START_MS <= x < NIGHT_START_MS else "night"
            if x < DAY_START_MS:
                until_change = DAY_START_MS - x
            elif x < NIGHT_START_MS:
                until_change = NIGHT_START_MS - x
            else:
                until_change = DAY_MS - x + DAY_START_MS
            seg_end = min(e, a + until_change)
            seconds = (seg_end - a) / 1000.0
            b = acc[regime]
            if act == "active":
                b.active_s += seconds
            else:
                b.inactive_s += seconds
            b.behaviour_s[beh] = b.behaviour_s.get(beh, 0.0) + seconds
            a = seg_end
    out = {}
    for regime, b in acc.items():
        prop, ratio = activity_ratio(b)
        out[regime] = {
            "active_s": b.active_s,
            "inactive_s": b.inactive_s,
            "coverage_s": b.coverage_s,
            "proportion_active": prop,
            "proportion_inactive": (b.inactive_s / b.coverage_s
                                    if b.coverage_s > 0 else None),
            "ratio_active_inactive": ratio,
        }
    return out


TIMELINE_HEADER = "calf_id,start,end,activity,behaviour"
PREDICTIONS_HEADER = "timestamp,activity,behaviour"


def write_timeline_csv(tl: PredictionTimeline) -> str:
    lines = [TIMELINE_HEADER]
    for s, a, b in zip(tl.start, tl.activity, tl.behaviour):
        lines.append(f"{tl.calf_id},{format_iso(int(s))},"
                     f"{format_iso(int(s) + ENTRY_MS)},{a},{b}")
    return "\n".join(lines) + "\n"


def parse_timeline_csv(text: str) -> PredictionTimeline:
    from .errors import BadHeader, BadRow
    from .timeutil import parse_iso

    lines = text.splitlines()
    if not lines or lines[0].strip() != TIMELINE_HEADER:
        raise BadHeader(f"expected header {TIMELINE_HEADER!r}")
    calf = ""
    start, activity, behaviour = [], [], []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise BadRow(i, f"{len(parts)} fields, expected 5")
        calf = parts[0]
        try:
            start.append(parse_iso(parts[1]))
        except ValueError as exc:
            raise BadRow(i, str(exc)) from exc
        activity.append(parts[3])
        behaviour.append(parts[4])
    return PredictionTimeline(
        calf_id=calf, start=np.array(start, dtype=np.int64),
        activity=np.array(activity, dtype=object),
        behaviour=np.array(behaviour, dtype=object))


def predictions_csv_rows(tl: PredictionTimeline, from_ms: int, to_ms: int,
                         rate_hz: float = 25.0):
    """Expand entries fully inside [from, to) to one row per 25 Hz sample."""
    _check_range(from_ms, to_ms)
    step = round(1000.0 / rate_hz)
    per_entry = ENTRY_MS // step
    yield PREDICTIONS_HEADER
    for s, act, beh in zip(tl.start, tl.activity, tl.behaviour):
        s = int(s)
        if s < from_ms or s + ENTRY_MS > to_ms:
            continue
        for k in range(per_entry):
            yield f"{format_iso(s + k * step)},{act},{beh}"


def bucket_json(b: MetricsBucket) -> dict:
    """The stable wire form of one bucket."""
    prop, ratio = activity_ratio(b)
    return {
        "bucket_start": format_iso(b.bucket_start),
        "proportion_active": prop,
        "ratio_active_inactive": ratio,
        "proportions": behaviour_proportions(b),
        "coverage_s": b.coverage_s,
        "active_s": b.active_s,
        "inactive_s": b.inactive_s,
    }


def metrics_json(tl: PredictionTimeline, from_ms: int, to_ms: int,
                 granularity: str, tz="UTC") -> dict:
    """Metrics in the shared JSON schema for the CLI report and the API."""
    tz_name = tz if isinstance(tz, str) else str(tz)
    base = {
        "calf_id": tl.calf_id,
        "from": format_iso(from_ms),
        "to": format_iso(to_ms),
        "granularity": granularity,
        "timezone": tz_name,
    }
    if granularity == "hour":
        buckets = hourly_buckets(tl, from_ms, to_ms, tz)
        base["buckets"] = [bucket_json(b) for b in buckets]
    elif granularity == "summary":
        base["summary"] = bucket_json(period_summary(tl, from_ms, to_ms))
    elif granularity == "day_night":
        base["day_night"] = day_night_split(tl, from_ms, to_ms, tz)
    else:
        raise BadRange(f"unknown granularity {granularity!r}")
    return base
