import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calfwatch import cwa
from calfwatch.errors import (
    BadHeader,
    BadRow,
    EmptyRecording,
    MalformedHeader,
    RangeExceeded,
    TooShort,
    UnsupportedMode,
)
from calfwatch.timeutil import format_iso, parse_iso

from conftest import T0, grid_recording


def assert_samples_equal(a, b):
    assert np.array_equal(a.t, b.t)
    assert np.array_equal(a.xyz, b.xyz)


class TestRoundTrip:
    def test_unpacked_exact(self, rng):
        rec = grid_recording(537, rng)
        back = cwa.parse_cwa(cwa.write_cwa(rec, "unpacked"))
        assert_samples_equal(rec, back)
        assert back.rate_hz == 25.0
        assert back.device_meta["session_id"] == 7
        assert back.device_meta["range_g"] == 8
        assert back.skipped_blocks == 0

    def test_packed_within_one_quantization_step(self, rng):
        rec = grid_recording(400, rng)
        back = cwa.parse_cwa(cwa.write_cwa(rec, "packed"))
        assert np.array_equal(rec.t, back.t)
        raw = np.rint(rec.xyz * 256.0)
        # shared exponent: smallest e with all three mantissas in 10 bits
        step = np.ones(len(raw))
        for e in range(4):
            fits = (np.abs(np.rint(raw / (1 << e))) <= 512).all(axis=1)
            step[fits & (step == 1)] = 1 << e
            step[step > 0] = np.maximum(step[step > 0], 1)
        err = np.abs(back.xyz - rec.xyz) * 256.0
        assert (err <= step[:, None] + 1e-9).all()

    def test_small_values_packed_exact(self, rng):
        # |counts| < 512 need no exponent, so packed mode is lossless there
        rec = grid_recording(100)
        rec.xyz[:] = rng.integers(-511, 512, size=rec.xyz.shape) / 256.0
        back = cwa.parse_cwa(cwa.write_cwa(rec, "packed"))
        assert_samples_equal(rec, back)

    def test_fractional_second_start_times_survive(self, rng):
        rec = grid_recording(90, rng, start_ms=T0 + 333)
        back = cwa.parse_cwa(cwa.write_cwa(rec, "unpacked"))
        assert_samples_equal(rec, back)

    def test_multi_block_timestamps(self, rng):
        rec = grid_recording(80 * 5 + 13, rng)
        back = cwa.parse_cwa(cwa.write_cwa(rec, "unpacked"))
        assert_samples_equal(rec, back)

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(min_value=1, max_value=300), seed=st.integers(0, 2**31))
    def test_roundtrip_property(self, n, seed):
        rec = grid_recording(n, np.random.default_rng(seed))
        back = cwa.parse_cwa(cwa.write_cwa(rec, "unpacked"))
        assert_samples_equal(rec, back)


class TestChecksum:
    def test_every_block_sums_to_zero(self, rng):
        blob = cwa.write_cwa(grid_recording(250, rng), "packed")
        for pos in range(cwa.HEADER_SIZE, len(blob), cwa.SECTOR_SIZE):
            assert cwa._checksum16(blob[pos:pos + cwa.SECTOR_SIZE]) == 0

    def test_single_byte_flip_rejects_block(self, rng):
        rec = grid_recording(240, rng)  # 3 unpacked blocks
        blob = cwa.write_cwa(rec, "unpacked")
        for offset in rng.integers(0, cwa.SECTOR_SIZE, size=40):
            corrupted = bytearray(blob)
            pos = cwa.HEADER_SIZE + cwa.SECTOR_SIZE + int(offset)  # middle block
            corrupted[pos] ^= 0xFF if rng.integers(2) else 0x01
            back = cwa.parse_cwa(bytes(corrupted))
            assert back.skipped_blocks == 1
            assert len(back) == 160

    def test_all_blocks_corrupted_is_empty(self, rng):
        blob = bytearray(cwa.write_cwa(grid_recording(200, rng), "unpacked"))
        for pos in range(cwa.HEADER_SIZE, len(blob), cwa.SECTOR_SIZE):
            blob[pos + 100] ^= 0x5A
        with pytest.raises(EmptyRecording):
            cwa.parse_cwa(bytes(blob))


class TestParseErrors:
    def test_short_input(self):
        with pytest.raises(MalformedHeader):
            cwa.parse_cwa(b"MD" + b"\x00" * 100)

    def test_wrong_magic(self, rng):
        blob = bytearray(cwa.write_cwa(grid_recording(10, rng), "unpacked"))
        blob[0:2] = b"XX"
        with pytest.raises(MalformedHeader):
            cwa.parse_cwa(bytes(blob))

    def test_header_only_file(self):
        rec = grid_recording(0)
        blob = cwa.write_cwa(rec, "unpacked")
        assert len(blob) == cwa.HEADER_SIZE
        with pytest.raises(EmptyRecording):
            cwa.parse_cwa(blob)

    def test_unsupported_mode(self, rng):
        blob = bytearray(cwa.write_cwa(grid_recording(10, rng), "unpacked"))
        pos = cwa.HEADER_SIZE
        blob[pos + 25] = 0x34  # 3 axes, 4 bytes/axis: not supported
        # re-seal the checksum so the mode byte is actually reached
        blob[pos + 510:pos + 512] = b"\x00\x00"
        fix = (-cwa._checksum16(bytes(blob[pos:pos + 510])) - 0) & 0xFFFF
        blob[pos + 510:pos + 512] = fix.to_bytes(2, "little")
        with pytest.raises(UnsupportedMode):
            cwa.parse_cwa(bytes(blob))

    def test_range_exceeded_packed(self):
        rec = grid_recording(5)
        rec.xyz[2, 1] = 40.0
        with pytest.raises(RangeExceeded):
            cwa.write_cwa(rec, "packed")


class TestCsv:
    def test_three_rows(self):
        text = (
            "timestamp,x,y,z\n"
            "2022-01-21T08:00:00.000Z,0.5,-0.25,1.0\n"
            "2022-01-21T08:00:00.040Z,0.125,0.0,0.875\n"
            "2022-01-21T08:00:00.080Z,-1.0,0.0625,0.75\n"
        )
        rec = cwa.parse_csv(text)
        assert len(rec) == 3
        assert rec.source == "csv"
        assert rec.t[0] == parse_iso("2022-01-21T08:00:00Z")
        assert rec.xyz[0, 0] == 0.5

    def test_bad_header(self):
        with pytest.raises(BadHeader):
            cwa.parse_csv("time,x,y,z\n2022-01-21T08:00:00Z,0,0,1\n")

    def test_bad_row_reports_line(self):
        text = "timestamp,x,y,z\n2022-01-21T08:00:00Z,oops,0,1\n"
        with pytest.raises(BadRow) as err:
            cwa.parse_csv(text)
        assert err.value.line_number == 2

    def test_csv_roundtrip(self, rng):
        rec = grid_recording(60, rng)
        back = cwa.parse_csv(cwa.write_csv(rec))
        assert_samples_equal(rec, back)


class TestRegularize:
    def test_identity_on_uniform_input(self, rng):
        rec = grid_recording(500, rng)
        out = cwa.regularize(rec, 25.0)
        assert np.array_equal(out.t, rec.t)
        assert np.array_equal(out.xyz, rec.xyz)
        assert not out.gap_mask.any()

    def test_idempotent(self, rng):
        rec = grid_recording(500, rng)
        once = cwa.regularize(rec, 25.0)
        twice = cwa.regularize(once, 25.0)
        assert np.array_equal(once.t, twice.t)
        assert np.array_equal(once.xyz, twice.xyz)

    def test_drifting_rate_sample_count(self):
        # 24.9 Hz for 60 s resampled at 25 Hz
        t = (T0 + np.rint(np.arange(60 * 24.9) * 1000.0 / 24.9)).astype(np.int64)
        xyz = np.zeros((len(t), 3))
        xyz[:, 2] = 1.0
        out = cwa.regularize(cwa.Recording(t=t, xyz=xyz, rate_hz=24.9), 25.0)
        assert abs(len(out) - 25 * 60) <= 1

    def test_gap_is_flagged_and_bridged_segments_remain(self):
        t1 = T0 + 40 * np.arange(250, dtype=np.int64)
        t2 = t1[-1] + 10_000 + 40 * np.arange(250, dtype=np.int64)
        t = np.concatenate([t1, t2])
        xyz = np.zeros((len(t), 3))
        xyz[:, 2] = 1.0
        out = cwa.regularize(cwa.Recording(t=t, xyz=xyz, rate_hz=25.0))
        assert out.gap_mask.any()
        flagged = np.nonzero(out.gap_mask)[0]
        # flagged points form one contiguous run strictly inside the hole
        assert np.array_equal(flagged, np.arange(flagged[0], flagged[-1] + 1))
        assert out.t[flagged[0]] > t1[-1]
        assert out.t[flagged[-1]] < t2[0]

    def test_short_gap_not_flagged(self):
        t1 = T0 + 40 * np.arange(100, dtype=np.int64)
        t2 = t1[-1] + 3000 + 40 * np.arange(100, dtype=np.int64)
        t = np.concatenate([t1, t2])
        xyz = np.ones((len(t), 3)) * 0.5
        out = cwa.regularize(cwa.Recording(t=t, xyz=xyz, rate_hz=25.0))
        assert not out.gap_mask.any()

    def test_too_short(self):
        rec = grid_recording(1)
        with pytest.raises(TooShort):
            cwa.regularize(rec)


def test_format_parse_iso_roundtrip():
    for ms in [0, 1642752000000, 1642752000123, T0 + 999]:
        assert parse_iso(format_iso(ms)) == ms
