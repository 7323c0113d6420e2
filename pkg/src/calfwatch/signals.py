"""Derived acceleration channels and 3-second windowing.

From a regularized 25 Hz recording this module computes the eight working
channels (x, y, z, magnitude, ODBA, VeDBA, pitch, roll), cuts them into
75-sample windows, and aligns windows with an observed-behaviour ethogram.

The static (gravity) component per axis is a centered 75-sample moving mean
whose window shrinks at the edges; the dynamic component is the residual.
ODBA is the L1 norm and VeDBA the L2 norm of the dynamic residual, so
``vedba <= odba <= sqrt(3) * vedba`` holds pointwise.  Pitch and roll come
from the static component, in degrees.
"""

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .cwa import Recording
from .errors import BadHeader, BadRow, TooShort
from .timeutil import format_iso, parse_iso

CHANNEL_NAMES = ("x", "y", "z", "magnitude", "odba", "vedba", "pitch", "roll")

WINDOW_SAMPLES = 75          # 3 s at 25 Hz
TRAIN_STRIDE = 37            # 50% overlap, floor(75 / 2)
INFER_STRIDE = 75            # non-overlapping tiling

BEHAVIOURS = ("lying", "running", "drinking_milk", "other")
ACTIVITY = ("active", "inactive")

# behaviours with a fixed activity; "other" carries the ethogram's own flag
_FIXED_ACTIVITY = {"lying": "inactive", "running": "active", "drinking_milk": "active"}


@dataclass(eq=False)
class DerivedSeries:
    t: np.ndarray                 # int64 ms grid
    channels: np.ndarray          # (8, n) float64, CHANNEL_NAMES order
    rate_hz: float
    gap_mask: np.ndarray          # (n,) bool
    calf_id: str = ""

    def __len__(self) -> int:
        return self.channels.shape[1]

    def channel(self, name: str) -> np.ndarray:
        return self.channels[CHANNEL_NAMES.index(name)]


@dataclass(eq=False)
class Window:
    start_t: int                  # ms of first sample
    values: np.ndarray            # (8, 75) float64
    calf_id: str = ""

    @property
    def end_t(self) -> int:
        return self.start_t + 3000


@dataclass(frozen=True)
class LabeledWindow:
    window: Window
    behaviour: str
    activity: str


@dataclass
class Ethogram:
    """Observed-behaviour intervals for one calf, ordered and non-overlapping."""

    calf_id: str
    start: np.ndarray             # int64 ms
    end: np.ndarray               # int64 ms
    behaviour: list[str]
    activity: list[str]

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=np.int64)
        self.end = np.asarray(self.end, dtype=np.int64)
        if (self.end <= self.start).any():
            raise BadRow(0, "ethogram interval with end <= start")
        if (self.start[1:] < self.end[:-1]).any():
            raise BadRow(0, "overlapping ethogram intervals")

    def __len__(self) -> int:
        return len(self.start)


def _centered_moving_mean(v: np.ndarray, span: int) -> np.ndarray:
    """Running mean over ``span`` samples, centered, shrinking at the edges."""
    n = len(v)
    half = span // 2
    csum = np.concatenate([[0.0], np.cumsum(v)])
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + half + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def derive_channels(rec: Recording) -> DerivedSeries:
    """Compute the eight derived channels from a regularized recording."""
    n = len(rec)
    if n < WINDOW_SAMPLES:
        raise TooShort(f"{n} samples, need at least {WINDOW_SAMPLES}")
    x, y, z = rec.xyz[:, 0], rec.xyz[:, 1], rec.xyz[:, 2]

    xs = _centered_moving_mean(x, WINDOW_SAMPLES)
    ys = _centered_moving_mean(y, WINDOW_SAMPLES)
    zs = _centered_moving_mean(z, WINDOW_SAMPLES)
    dx, dy, dz = x - xs, y - ys, z - zs

    channels = np.empty((8, n), dtype=np.float64)
    channels[0], channels[1], channels[2] = x, y, z
    channels[3] = np.sqrt(x * x + y * y + z * z)
    channels[4] = np.abs(dx) + np.abs(dy) + np.abs(dz)
    channels[5] = np.sqrt(dx * dx + dy * dy + dz * dz)
    channels[6] = np.degrees(np.arctan2(xs, np.hypot(ys, zs)))
    channels[7] = np.degrees(np.arctan2(ys, zs))

    gap = rec.gap_mask if rec.gap_mask is not None else np.zeros(n, dtype=bool)
    return DerivedSeries(t=np.asarray(rec.t, dtype=np.int64), channels=channels,
                         rate_hz=rec.rate_hz, gap_mask=gap)


def segment(ds: DerivedSeries, purpose: str = "training") -> list[Window]:
    """Cut a DerivedSeries into 75-sample windows.

    Training windows overlap 50% (stride 37); inference windows tile the
    series (stride 75) so downstream time accounting is exact.  Windows
    containing any gap-flagged sample are dropped.
    """
    if purpose not in ("training", "inference"):
        raise ValueError(f"unknown purpose {purpose!r}")
    stride = TRAIN_STRIDE if purpose == "training" else INFER_STRIDE
    n = len(ds)
    out = []
    bad = np.concatenate([[0], np.cumsum(ds.gap_mask.astype(np.int64))])
    for start in range(0, n - WINDOW_SAMPLES + 1, stride):
        if bad[start + WINDOW_SAMPLES] - bad[start]:
            continue
        out.append(Window(start_t=int(ds.t[start]),
                          values=ds.channels[:, start:start + WINDOW_SAMPLES],
                          calf_id=ds.calf_id))
    return out


def stack_windows(windows: Iterable[Window]) -> np.ndarray:
    """Stack windows into an (n, 8, 75) array (copies)."""
    ws = list(windows)
    if not ws:
        return np.empty((0, 8, WINDOW_SAMPLES), dtype=np.float64)
    return np.stack([w.values for w in ws]).astype(np.float64, copy=False)


def activity_for(behaviour: str, ethogram_flag: str) -> str:
    return _FIXED_ACTIVITY.get(behaviour, ethogram_flag)


def align_labels(windows: list[Window], eth: Ethogram) -> list[LabeledWindow]:
    """Label windows fully covered by a single ethogram interval.

    A window is kept iff one interval spans its whole 3 s; behaviours outside
    the four model classes collapse to ``other``.  Boundary-straddling
    windows are dropped.
    """
    if not windows:
        return []
    starts = np.array([w.start_t for w in windows], dtype=np.int64)
    idx = np.searchsorted(eth.start, starts, side="right") - 1
    out = []
    for w, i in zip(windows, idx):
        if i < 0 or w.start_t + 3000 > eth.end[i]:
            continue
        raw = eth.behaviour[i]
        behaviour = raw if raw in BEHAVIOURS else "other"
        out.append(LabeledWindow(window=w, behaviour=behaviour,
                                 activity=activity_for(behaviour, eth.activity[i])))
    return out


ETHOGRAM_HEADER = "calf_id,start,end,behaviour,activity"


def write_ethogram_csv(ethograms: Iterable[Ethogram]) -> str:
    lines = [ETHOGRAM_HEADER]
    for eth in ethograms:
        for s, e, b, a in zip(eth.start, eth.end, eth.behaviour, eth.activity):
            lines.append(f"{eth.calf_id},{format_iso(int(s))},{format_iso(int(e))},{b},{a}")
    return "\n".join(lines) + "\n"


def parse_ethogram_csv(text: str) -> dict[str, Ethogram]:
    """Parse the ethogram interchange CSV into per-calf Ethograms."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != ETHOGRAM_HEADER:
        raise BadHeader(f"expected header {ETHOGRAM_HEADER!r}")
    rows: dict[str, list[tuple[int, int, str, str]]] = {}
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise BadRow(i, f"{len(parts)} fields, expected 5")
        calf, start, end, behaviour, activity = (p.strip() for p in parts)
        if activity not in ACTIVITY:
            raise BadRow(i, f"unknown activity flag {activity!r}")
        try:
            rows.setdefault(calf, []).append((parse_iso(start), parse_iso(end), behaviour, activity))
        except ValueError as exc:
            raise BadRow(i, str(exc)) from exc
    out = {}
    for calf, items in rows.items():
        items.sort(key=lambda r: r[0])
        out[calf] = Ethogram(
            calf_id=calf,
            start=np.array([r[0] for r in items], dtype=np.int64),
            end=np.array([r[1] for r in items], dtype=np.int64),
            behaviour=[r[2] for r in items],
            activity=[r[3] for r in items],
        )
    return out
