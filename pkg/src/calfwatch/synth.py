"""Synthetic calf recordings with exactly known behaviour intervals.

Each calf is a Markov-style sequence of behaviour intervals; inside an
interval the signal is rotated gravity for the behaviour's posture, a
sinusoidal body oscillation on the sensor z axis, and Gaussian noise,
sampled at 25 Hz and quantized to the device's 1/256 g grid.  The ethogram
records the exact intervals, so every downstream stage can be verified
without trial data.

The four default profiles are separable but not trivially so: lying is
near-static and tilted, running is a high-amplitude 2.5 Hz oscillation,
drinking milk is a pitched-down posture with a gentle 1 Hz component, and
"other" wanders between mild regimes, some quiet (inactive) and some mobile
(active), which is where most of the residual confusion lives.
"""

from dataclasses import dataclass, replace

import numpy as np

from .cwa import Recording
from .errors import BadConfig, BadProfile
from .signals import Ethogram
from .timeutil import parse_iso

DEFAULT_START = parse_iso("2022-02-01T00:00:00Z")

MIN_DWELL_S = 6.0                     # every interval spans >= 2 windows


@dataclass(frozen=True)
class BehaviourProfile:
    name: str
    orientation: tuple[float, float, float]   # gravity direction, sensor frame
    osc_freq_hz: float
    osc_amp_g: float
    noise_sd_g: float
    dwell_mean_s: float
    dwell_min_s: float = MIN_DWELL_S
    activity: str = "active"
    wander: bool = False              # re-draw mild regimes per interval

    def validated(self) -> "BehaviourProfile":
        if self.osc_amp_g < 0 or self.noise_sd_g < 0:
            raise BadProfile(f"{self.name}: negative amplitude or noise")
        if self.dwell_min_s < MIN_DWELL_S:
            raise BadProfile(f"{self.name}: dwell_min_s {self.dwell_min_s} < {MIN_DWELL_S}")
        if self.dwell_mean_s < self.dwell_min_s:
            raise BadProfile(f"{self.name}: dwell mean below its minimum")
        if abs(np.linalg.norm(self.orientation)) < 1e-9:
            raise BadProfile(f"{self.name}: zero orientation vector")
        if self.activity not in ("active", "inactive"):
            raise BadProfile(f"{self.name}: activity {self.activity!r}")
        return self


DEFAULT_PROFILES = (
    BehaviourProfile("lying", (0.0, 0.6, 0.8), 0.3, 0.02, 0.02,
                     dwell_mean_s=90.0, dwell_min_s=20.0, activity="inactive"),
    BehaviourProfile("running", (0.1, 0.2, 0.97), 2.5, 0.8, 0.1,
                     dwell_mean_s=15.0, dwell_min_s=6.0, activity="active"),
    BehaviourProfile("drinking_milk", (-0.5, 0.1, 0.86), 1.0, 0.15, 0.05,
                     dwell_mean_s=45.0, dwell_min_s=10.0, activity="active"),
    BehaviourProfile("other", (0.0, 0.3, 0.95), 0.8, 0.035, 0.03,
                     dwell_mean_s=25.0, dwell_min_s=6.0, wander=True),
)


@dataclass(eq=False)
class SynthCalf:
    calf_id: str
    recording: Recording
    ethogram: Ethogram
    profiles: tuple[BehaviourProfile, ...]


@dataclass(eq=False)
class HerdDataset:
    calves: list[SynthCalf]
    seed: int

    def __len__(self) -> int:
        return len(self.calves)

    def ethograms(self) -> dict[str, Ethogram]:
        return {c.calf_id: c.ethogram for c in self.calves}


def _interval_params(profile: BehaviourProfile, rng):
    """Concrete signal parameters for one interval of this behaviour."""
    if not profile.wander:
        u = np.asarray(profile.orientation, dtype=np.float64)
        return (u / np.linalg.norm(u), profile.osc_freq_hz, profile.osc_amp_g,
                profile.noise_sd_g, profile.activity)
    u = rng.normal(0.0, 1.0, 3)
    u[2] = abs(u[2]) + 0.5            # keep a broadly upright posture
    u /= np.linalg.norm(u)
    if rng.random() < 0.5:            # quiet regime: standing still
        amp = profile.osc_amp_g * rng.uniform(0.5, 1.5)
        freq = profile.osc_freq_hz * rng.uniform(0.5, 1.5)
        noise = profile.noise_sd_g * rng.uniform(0.8, 1.2)
        activity = "inactive"
    else:                             # mobile regime: grooming, walking, play
        amp = profile.osc_amp_g * rng.uniform(8.0, 14.0)
        freq = profile.osc_freq_hz * rng.uniform(0.6, 2.2)
        noise = profile.noise_sd_g * rng.uniform(1.2, 2.0)
        activity = "active"
    return u, freq, amp, noise, activity


def generate_calf(profiles, duration_s: float, seed, calf_id: str = "calf",
                  start_ms: int = DEFAULT_START) -> tuple[Recording, Ethogram]:
    """One calf's Recording and its exactly matching Ethogram."""
    if duration_s < 60:
        raise BadConfig(f"duration {duration_s} s < 60 s")
    profiles = tuple(p.validated() for p in profiles)
    rng = np.random.default_rng(seed)
    rate = 25
    total_samples = int(round(duration_s * rate))

    starts, ends, names, flags = [], [], [], []
    xyz_parts = []
    pos = 0                           # sample index
    current = int(rng.integers(0, len(profiles)))
    while pos < total_samples:
        profile = profiles[current]
        spread = max(profile.dwell_mean_s - profile.dwell_min_s, 0.0)
        dwell_s = profile.dwell_min_s + (rng.exponential(spread) if spread else 0.0)
        n = min(int(round(dwell_s)) * rate, total_samples - pos)
        u, freq, amp, noise_sd, activity = _interval_params(profile, rng)
        t_local = np.arange(n) / rate
        osc = amp * np.sin(2.0 * np.pi * freq * t_local)
        block = np.tile(u, (n, 1))
        block[:, 2] += osc
        block += rng.normal(0.0, noise_sd, size=(n, 3))
        xyz_parts.append(block)
        starts.append(start_ms + pos * 40)
        ends.append(start_ms + (pos + n) * 40)
        names.append(profile.name)
        flags.append(activity)
        pos += n
        if len(profiles) > 1:
            nxt = int(rng.integers(0, len(profiles) - 1))
            current = nxt if nxt < current else nxt + 1

    raw = np.rint(np.clip(np.vstack(xyz_parts), -7.99, 7.99) * 256.0)
    rec = Recording(
        t=start_ms + 40 * np.arange(total_samples, dtype=np.int64),
        xyz=raw / 256.0,
        rate_hz=25.0,
        device_meta={"session_id": 1, "device_id": 1, "range_g": 8.0},
        source="synth",
        gap_mask=np.zeros(total_samples, dtype=bool),
    )
    eth = Ethogram(calf_id=calf_id, start=np.array(starts, dtype=np.int64),
                   end=np.array(ends, dtype=np.int64), behaviour=names,
                   activity=flags)
    return rec, eth


def _jittered(profile: BehaviourProfile, rng) -> BehaviourProfile:
    """±10% per-calf parameter jitter; orientation re-normalized."""
    u = np.asarray(profile.orientation) * rng.uniform(0.9, 1.1, 3)
    u /= np.linalg.norm(u)
    return replace(
        profile,
        orientation=tuple(u),
        osc_freq_hz=profile.osc_freq_hz * rng.uniform(0.9, 1.1),
        osc_amp_g=profile.osc_amp_g * rng.uniform(0.9, 1.1),
        noise_sd_g=profile.noise_sd_g * rng.uniform(0.9, 1.1),
        dwell_mean_s=profile.dwell_mean_s * rng.uniform(0.9, 1.1),
        dwell_min_s=max(profile.dwell_min_s * rng.uniform(0.9, 1.1), MIN_DWELL_S),
    )


def generate_herd(n_calves: int, duration_s: float, seed: int,
                  profiles=DEFAULT_PROFILES) -> HerdDataset:
    """A herd of distinct calves with per-calf parameter jitter."""
    if n_calves < 10:
        raise BadConfig(f"{n_calves} calves, need at least 10")
    root = np.random.SeedSequence(seed)
    calves = []
    for i, child in enumerate(root.spawn(n_calves)):
        jitter_seq, gen_seq = child.spawn(2)
        jit_rng = np.random.default_rng(jitter_seq)
        calf_profiles = tuple(_jittered(p, jit_rng) for p in profiles)
        calf_id = f"calf_{i + 1:02d}"
        rec, eth = generate_calf(calf_profiles, duration_s, gen_seq,
                                 calf_id=calf_id)
        calves.append(SynthCalf(calf_id=calf_id, recording=rec, ethogram=eth,
                                profiles=calf_profiles))
    return HerdDataset(calves=calves, seed=int(seed))
