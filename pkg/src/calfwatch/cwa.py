"""Decode and encode .cwa neck-collar sensor files, plus a CSV fallback.

The binary layout follows the public OpenMovement CWA container: a 1024-byte
header sector tagged ``MD`` followed by 512-byte data sectors tagged ``AX``.
Each data sector carries a packed RTC timestamp, a fractional-second field, a
timestamp sample offset, a rate code, an axes/packing mode byte, up to 480
bytes of payload and a trailing 16-bit checksum (word sum over the whole
sector must be zero).  Two payload encodings are supported:

* unpacked (mode byte ``0x32``): 3 x signed 16-bit little-endian per sample,
  1 g = 256 units; 80 samples per sector.
* packed (mode byte ``0x30``): one 32-bit word per sample holding three
  10-bit signed mantissas and a shared 2-bit binary exponent
  (``eezzzzzzzzzzyyyyyyyyyyxxxxxxxxxx``); 120 samples per sector.

The writer exists so the parser can be verified by round-trip without any
proprietary sample files; both must agree bit-exactly.
"""

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import NamedTuple
import struct

import numpy as np

from .errors import (
    BadHeader,
    BadRow,
    EmptyRecording,
    MalformedHeader,
    RangeExceeded,
    TooShort,
    UnsupportedMode,
)
from .timeutil import format_iso, parse_iso

SECTOR_SIZE = 512
HEADER_SIZE = 1024
PAYLOAD_OFFSET = 30
PAYLOAD_SIZE = 480

MODE_UNPACKED = 0x32  # 3 axes, 2 bytes per axis
MODE_PACKED = 0x30    # 3 axes, DWORD-packed

SAMPLES_PER_SECTOR = {MODE_UNPACKED: 80, MODE_PACKED: 120}

_DEVICE_EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)


class Sample(NamedTuple):
    t: int      # epoch milliseconds, UTC
    x: float    # g
    y: float
    z: float


@dataclass(eq=False)
class Recording:
    """A regular-rate stream of tri-axial acceleration samples.

    ``t`` is int64 epoch milliseconds; ``xyz`` is an (n, 3) float64 array in
    gravitational units.  ``gap_mask`` is set by :func:`regularize`: True
    marks grid points inside a sensor gap, which downstream windowing must
    skip.
    """

    t: np.ndarray
    xyz: np.ndarray
    rate_hz: float
    device_meta: dict = field(default_factory=dict)
    source: str = "cwa"
    gap_mask: np.ndarray | None = None
    skipped_blocks: int = 0

    def __len__(self) -> int:
        return len(self.t)

    @property
    def samples(self) -> list[Sample]:
        return [Sample(int(t), float(x), float(y), float(z))
                for t, (x, y, z) in zip(self.t, self.xyz)]

    @property
    def range_g(self) -> float:
        return float(self.device_meta.get("range_g", 8.0))


def rate_to_code(rate_hz: float, range_g: float) -> int:
    """Encode sampling rate and range as the one-byte device rate code."""
    for low in range(16):
        if abs(3200.0 / (1 << (15 - low)) - rate_hz) < 1e-9:
            break
    else:
        raise RangeExceeded(f"rate {rate_hz} Hz has no device rate code")
    for top in range(4):
        if (16 >> top) == int(range_g):
            return (top << 6) | low
    raise RangeExceeded(f"range {range_g} g has no device rate code")


def code_to_rate(code: int) -> tuple[float, int]:
    """Decode a device rate code into (rate_hz, range_g)."""
    return 3200.0 / (1 << (15 - (code & 0x0F))), 16 >> (code >> 6)


def _pack_rtc(ms: int) -> tuple[int, int]:
    """Split epoch ms into (packed whole-second RTC word, 16-bit fraction)."""
    whole, frac_ms = divmod(int(ms), 1000)
    dt = datetime.fromtimestamp(whole, tz=timezone.utc)
    if not 2000 <= dt.year <= 2063:
        raise RangeExceeded(f"timestamp {format_iso(ms)} outside the CWA-encodable era")
    packed = ((dt.year - 2000) << 26) | (dt.month << 22) | (dt.day << 17) \
        | (dt.hour << 12) | (dt.minute << 6) | dt.second
    return packed, round(frac_ms * 65536 / 1000)


def _unpack_rtc(packed: int) -> int:
    """Packed whole-second RTC word back to epoch seconds."""
    dt = datetime(
        2000 + ((packed >> 26) & 0x3F), (packed >> 22) & 0x0F, (packed >> 17) & 0x1F,
        (packed >> 12) & 0x1F, (packed >> 6) & 0x3F, packed & 0x3F,
        tzinfo=timezone.utc,
    )
    return int(dt.timestamp())


def _checksum16(block: bytes) -> int:
    words = np.frombuffer(block, dtype="<u2")
    return int(words.sum(dtype=np.uint64) & 0xFFFF)


def _encode_packed(raw: np.ndarray) -> np.ndarray:
    """Raw integer counts (n, 3) to packed DWORDs with a shared exponent."""
    out = np.zeros(len(raw), dtype=np.uint32)
    todo = np.ones(len(raw), dtype=bool)
    for e in range(4):
        m = np.rint(raw / (1 << e)).astype(np.int64)
        ok = todo & (m >= -512).all(axis=1) & (m <= 511).all(axis=1)
        if ok.any():
            mx, my, mz = m[ok, 0], m[ok, 1], m[ok, 2]
            word = (mx & 0x3FF) | ((my & 0x3FF) << 10) | ((mz & 0x3FF) << 20) | (e << 30)
            out[ok] = word.astype(np.uint32)
            todo &= ~ok
    if todo.any():
        raise RangeExceeded("sample not representable in packed mode")
    return out


def _decode_packed(words: np.ndarray) -> np.ndarray:
    exponent = (words >> 30).astype(np.int64)
    raw = np.empty((len(words), 3), dtype=np.int64)
    for axis, shift in enumerate((0, 10, 20)):
        m = ((words >> shift) & 0x3FF).astype(np.int64)
        raw[:, axis] = ((m ^ 0x200) - 0x200) << exponent
    return raw


def write_cwa(rec: Recording, mode: str = "packed") -> bytes:
    """Encode a Recording as a .cwa byte stream.

    ``mode`` selects the payload encoding (``packed`` or ``unpacked``).
    Raises RangeExceeded when a sample cannot be represented in the chosen
    mode.  An empty Recording produces a header sector only.
    """
    if mode not in ("packed", "unpacked"):
        raise ValueError(f"unknown mode {mode!r}")
    mode_byte = MODE_PACKED if mode == "packed" else MODE_UNPACKED
    per_sector = SAMPLES_PER_SECTOR[mode_byte]
    rate = rec.rate_hz
    range_g = rec.range_g
    rate_code = rate_to_code(rate, range_g)
    session_id = int(rec.device_meta.get("session_id", 1))
    device_id = int(rec.device_meta.get("device_id", 1))

    raw = np.rint(np.asarray(rec.xyz, dtype=np.float64) * 256.0).astype(np.int64)
    if mode == "unpacked":
        if len(raw) and (np.abs(raw) > 32767).any():
            raise RangeExceeded("sample outside signed 16-bit range in unpacked mode")
    else:
        if len(raw) and (raw.max(initial=0) > 511 * 8 or raw.min(initial=0) < -512 * 8):
            raise RangeExceeded("sample outside packed 10-bit/exponent range")

    header = bytearray(HEADER_SIZE)
    header[0:2] = b"MD"
    struct.pack_into("<H", header, 2, 1020)
    header[4] = 0x17
    struct.pack_into("<H", header, 5, device_id & 0xFFFF)
    struct.pack_into("<I", header, 7, session_id)
    struct.pack_into("<H", header, 11, 0xFFFF)
    if len(rec.t):
        struct.pack_into("<I", header, 13, _pack_rtc(rec.t[0])[0])
        struct.pack_into("<I", header, 17, _pack_rtc(rec.t[-1])[0])
    header[36] = rate_code

    sectors = [bytes(header)]
    n = len(raw)
    for seq, start in enumerate(range(0, n, per_sector)):
        count = min(per_sector, n - start)
        block = bytearray(SECTOR_SIZE)
        block[0:2] = b"AX"
        struct.pack_into("<H", block, 2, 508)
        packed_rtc, frac16 = _pack_rtc(rec.t[start])
        struct.pack_into("<H", block, 4, 0x8000 | (frac16 >> 1))
        struct.pack_into("<I", block, 6, session_id)
        struct.pack_into("<I", block, 10, seq)
        struct.pack_into("<I", block, 14, packed_rtc)
        # light field zero => accelerometer unit 256 counts per g
        block[24] = rate_code
        block[25] = mode_byte
        # cancel the parser's fractional-timestamp shim so the anchor lands
        # on this sector's first sample
        frac_decoded = (frac16 >> 1) << 1
        offset = -((frac_decoded * int(rate)) >> 16)
        struct.pack_into("<h", block, 26, offset)
        struct.pack_into("<H", block, 28, count)
        chunk = raw[start:start + count]
        if mode == "unpacked":
            payload = chunk.astype("<i2").tobytes()
        else:
            payload = _encode_packed(chunk).astype("<u4").tobytes()
        block[PAYLOAD_OFFSET:PAYLOAD_OFFSET + len(payload)] = payload
        struct.pack_into("<H", block, 510, (-_checksum16(bytes(block[:510]))) & 0xFFFF)
        sectors.append(bytes(block))
    return b"".join(sectors)


def parse_cwa(data: bytes) -> Recording:
    """Decode a .cwa byte stream into a Recording.

    Sectors failing the checksum (or carrying a wrong tag/length) are skipped
    and counted in ``skipped_blocks``.  Per-sector timestamps anchor a linear
    interpolation across each run of consecutive sectors; duplicated or
    non-increasing grid points at sector joins are dropped.
    """
    if len(data) < HEADER_SIZE:
        raise MalformedHeader(f"file is {len(data)} bytes, shorter than the header sector")
    if data[0:2] != b"MD":
        raise MalformedHeader(f"header tag {data[0:2]!r}, expected b'MD'")
    packet_length = struct.unpack_from("<H", data, 2)[0]
    if packet_length < 508:
        raise MalformedHeader(f"header packet length {packet_length}")
    data_offset = ((packet_length + 4 + SECTOR_SIZE - 1) // SECTOR_SIZE) * SECTOR_SIZE

    device_meta = {
        "device_id": struct.unpack_from("<H", data, 5)[0],
        "session_id": struct.unpack_from("<I", data, 7)[0],
        "rate_code": data[36],
    }

    skipped = 0
    rate_hz = None
    # per contiguous run of valid sectors: raw counts, anchor points
    segments: list[tuple[list[np.ndarray], list[tuple[int, float]]]] = []
    current: tuple[list[np.ndarray], list[tuple[int, float]]] | None = None
    seg_count = 0
    prev_seq = None

    for pos in range(data_offset, len(data) - SECTOR_SIZE + 1, SECTOR_SIZE):
        block = data[pos:pos + SECTOR_SIZE]
        if block[0:2] != b"AX" or struct.unpack_from("<H", block, 2)[0] != 508 \
                or _checksum16(block) != 0:
            skipped += 1
            current = None
            continue
        mode_byte = block[25]
        if mode_byte not in SAMPLES_PER_SECTOR:
            raise UnsupportedMode(f"axes/packing mode byte 0x{mode_byte:02x}")
        rate_code = block[24]
        freq, range_g = code_to_rate(rate_code)
        if rate_hz is None:
            rate_hz = freq
            device_meta["rate_code"] = rate_code
            device_meta["range_g"] = range_g
        count = struct.unpack_from("<H", block, 28)[0]
        count = min(count, SAMPLES_PER_SECTOR[mode_byte])
        if count == 0:
            skipped += 1
            current = None
            continue
        seq = struct.unpack_from("<I", block, 10)[0]
        dev_frac = struct.unpack_from("<H", block, 4)[0]
        offset = struct.unpack_from("<h", block, 26)[0]
        t = float(_unpack_rtc(struct.unpack_from("<I", block, 14)[0]))
        if dev_frac & 0x8000:
            frac = (dev_frac & 0x7FFF) << 1
            offset += (frac * int(freq)) >> 16
            t += frac / 65536.0

        if mode_byte == MODE_UNPACKED:
            words = np.frombuffer(block, dtype="<i2", offset=PAYLOAD_OFFSET,
                                  count=3 * count)
            raw = words.reshape(-1, 3).astype(np.int64)
        else:
            dwords = np.frombuffer(block, dtype="<u4", offset=PAYLOAD_OFFSET,
                                   count=count)
            raw = _decode_packed(dwords)

        if current is None or prev_seq is None or seq != prev_seq + 1:
            current = ([], [])
            segments.append(current)
            seg_count = 0
        current[0].append(raw)
        current[1].append((seg_count + offset, t))
        seg_count += count
        prev_seq = seq

    if rate_hz is None or not segments:
        raise EmptyRecording(f"no valid data sectors ({skipped} skipped)")

    t_parts, xyz_parts = [], []
    for raws, anchors in segments:
        raw = np.concatenate(raws)
        idx = np.arange(len(raw), dtype=np.float64)
        a_idx = np.array([a[0] for a in anchors], dtype=np.float64)
        a_t = np.array([a[1] for a in anchors], dtype=np.float64)
        if len(a_idx) > 1 and (np.diff(a_idx) <= 0).any():
            # degenerate anchor ordering: time the whole run off its first anchor
            a_idx, a_t = a_idx[:1], a_t[:1]
        times = np.interp(idx, a_idx, a_t)
        # np.interp clamps outside the anchor span; extrapolate at nominal rate
        before = idx < a_idx[0]
        after = idx > a_idx[-1]
        times[before] = a_t[0] + (idx[before] - a_idx[0]) / rate_hz
        times[after] = a_t[-1] + (idx[after] - a_idx[-1]) / rate_hz
        t_parts.append(np.rint(times * 1000.0).astype(np.int64))
        xyz_parts.append(raw.astype(np.float64) / 256.0)

    t = np.concatenate(t_parts)
    xyz = np.concatenate(xyz_parts)
    keep = np.empty(len(t), dtype=bool)
    keep[0] = True
    keep[1:] = t[1:] > np.maximum.accumulate(t)[:-1]
    return Recording(t=t[keep], xyz=xyz[keep], rate_hz=rate_hz,
                     device_meta=device_meta, source="cwa", skipped_blocks=skipped)


CSV_HEADER = "timestamp,x,y,z"


def write_csv(rec: Recording) -> str:
    """Render a Recording in the CSV interchange form (ISO-8601 UTC, g units)."""
    lines = [CSV_HEADER]
    for t, (x, y, z) in zip(rec.t, rec.xyz):
        lines.append(f"{format_iso(int(t))},{float(x)!r},{float(y)!r},{float(z)!r}")
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> Recording:
    """Parse the CSV interchange form; stops at the first malformed row."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        raise BadHeader(f"expected header {CSV_HEADER!r}")
    t = []
    xyz = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise BadRow(i, f"{len(parts)} fields, expected 4")
        try:
            t.append(parse_iso(parts[0]))
            xyz.append((float(parts[1]), float(parts[2]), float(parts[3])))
        except (ValueError, OverflowError) as exc:
            raise BadRow(i, str(exc)) from exc
    if not t:
        raise EmptyRecording("CSV has no data rows")
    return Recording(t=np.array(t, dtype=np.int64), xyz=np.array(xyz, dtype=np.float64),
                     rate_hz=25.0, source="csv")


def regularize(rec: Recording, target_hz: float = 25.0,
               gap_threshold_s: float = 5.0) -> Recording:
    """Resample a Recording onto a uniform grid by nearest-neighbour selection.

    The grid runs from the first to the last timestamp at ``target_hz``.
    Stretches where consecutive source samples are more than
    ``gap_threshold_s`` apart are marked in ``gap_mask`` instead of being
    bridged; shorter irregularities are absorbed by the nearest-neighbour
    pick.  Already-uniform input comes back unchanged.
    """
    if len(rec) < 2:
        raise TooShort(f"{len(rec)} samples, need at least 2")
    step_ms = 1000.0 / target_hz
    t = np.asarray(rec.t, dtype=np.int64)
    n_grid = int((t[-1] - t[0]) / step_ms + 1e-9) + 1
    grid = t[0] + np.rint(np.arange(n_grid) * step_ms).astype(np.int64)

    right = np.searchsorted(t, grid, side="left")
    left = np.clip(right - 1, 0, len(t) - 1)
    right = np.clip(right, 0, len(t) - 1)
    pick_left = np.abs(grid - t[left]) <= np.abs(t[right] - grid)
    nearest = np.where(pick_left, left, right)

    gap_mask = np.zeros(n_grid, dtype=bool)
    gap_ms = gap_threshold_s * 1000.0
    dt = np.diff(t)
    half = step_ms / 2.0
    for j in np.nonzero(dt > gap_ms)[0]:
        lo, hi = t[j], t[j + 1]
        inside = (grid > lo + half) & (grid < hi - half)
        gap_mask |= inside

    return replace(rec, t=grid, xyz=rec.xyz[nearest], rate_hz=float(target_hz),
                   gap_mask=gap_mask)
