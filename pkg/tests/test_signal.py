import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from strainmodal.errors import InvalidCutoff, ParseError, RecordTooShort, ValidationError
from strainmodal.signal import (
    AccelRecord,
    FilterSpec,
    StrainRecord,
    detrend,
    high_pass,
    load_record,
    save_record,
)

from _oracles import sine_fit

FS = 250.0


def _rec(samples, fs=FS):
    samples = np.atleast_2d(samples)
    return StrainRecord(samples, fs, np.arange(samples.shape[0], dtype=float))


class TestRecord:
    def test_rejects_bad_positions(self):
        with pytest.raises(ValidationError):
            StrainRecord(np.zeros((3, 4)), FS, [0.0, 2.0, 1.0])
        with pytest.raises(ValidationError):
            StrainRecord(np.zeros((3, 4)), FS, [0.0, 1.0])

    def test_rejects_nan_and_bad_rate(self):
        x = np.zeros((2, 4))
        x[1, 2] = np.nan
        with pytest.raises(ValidationError):
            StrainRecord(x, FS, [0, 1])
        with pytest.raises(ValidationError):
            StrainRecord(np.zeros((2, 4)), 0.0, [0, 1])

    def test_samples_are_read_only(self):
        rec = _rec(np.ones((2, 5)))
        with pytest.raises(ValueError):
            rec.samples[0, 0] = 3.0

    def test_accel_record_shares_invariants(self):
        rec = AccelRecord(np.ones((4, 10)), 250.0, [8.0, 25.0, 29.5, 42.0])
        assert rec.sensor_positions_m.tolist() == [8.0, 25.0, 29.5, 42.0]


class TestFiles:
    def test_csv_hand_written(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("fs=250\n0,1,2\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n")
        rec = load_record(p, "csv")
        assert rec.samples.shape == (3, 4)
        assert rec.sampling_rate_hz == 250.0
        np.testing.assert_array_equal(rec.samples[1], [2, 5, 8, 11])

    def test_csv_nan_rejected(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("fs=250\n0,1,2\n1,2,3\nnan,5,6\n")
        with pytest.raises(ValidationError):
            load_record(p, "csv")

    def test_csv_malformed(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("rate=250\n0,1\n1,2\n")
        with pytest.raises(ParseError):
            load_record(p, "csv")
        p.write_text("fs=250\n0,1\n1,2,3\n")
        with pytest.raises(ParseError):
            load_record(p, "csv")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_record(tmp_path / "nope.smr")

    def test_binary_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        rec = StrainRecord(rng.standard_normal((5, 333)) * 1e-6, 250.0, np.sort(rng.uniform(0, 50, 5)))
        back = load_record(save_record(rec, tmp_path / "r.smr"), "binary_f64")
        assert back.samples.tobytes() == rec.samples.tobytes()
        assert back.channel_positions_m.tobytes() == rec.channel_positions_m.tobytes()
        assert back.sampling_rate_hz == rec.sampling_rate_hz

    def test_binary_header_layout(self, tmp_path):
        rec = _rec(np.arange(6.0).reshape(2, 3))
        raw = save_record(rec, tmp_path / "r.smr").read_bytes()
        assert raw[:4] == b"SMR1"
        assert np.frombuffer(raw[4:12], "<u4").tolist() == [2, 3]
        assert np.frombuffer(raw[12:20], "<f8")[0] == 250.0
        np.testing.assert_array_equal(np.frombuffer(raw[36:], "<f8"), np.arange(6.0))

    def test_binary_truncated(self, tmp_path):
        p = save_record(_rec(np.ones((2, 10))), tmp_path / "r.smr")
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ParseError):
            load_record(p)

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        rec = _rec(rng.standard_normal((3, 20)))
        back = load_record(save_record(rec, tmp_path / "r.csv", "csv"))
        np.testing.assert_array_equal(back.samples, rec.samples)

    def test_differentiate_flag(self, tmp_path):
        t = np.arange(500) / FS
        rec = _rec(np.vstack([3.0 * t, t**2]))
        back = load_record(save_record(rec, tmp_path / "r.smr"), differentiate=True)
        np.testing.assert_allclose(back.samples[0], 3.0, atol=1e-12)
        np.testing.assert_allclose(back.samples[1, 1:-1], 2 * t[1:-1], atol=1e-12)


class TestHighPass:
    def test_dc_rejection(self):
        out = high_pass(_rec(np.full((2, 2500), 5.0)), FilterSpec(1.0))
        assert np.max(np.abs(out.samples)) < 1e-6

    def test_passband_sine_preserved(self):
        t = np.arange(int(20 * FS)) / FS
        x = np.sin(2 * np.pi * 10.0 * t + 0.3)
        out = high_pass(_rec(x), FilterSpec(1.0, 4, zero_phase=True)).samples[0]
        steady = slice(int(5 * FS), -int(5 * FS))
        amp, ph = sine_fit(t[steady], out[steady], 10.0)
        amp0, ph0 = sine_fit(t[steady], x[steady], 10.0)
        assert abs(amp / amp0 - 1) < 0.01
        assert abs(ph - ph0) < 0.01

    def test_low_component_attenuated(self):
        t = np.arange(int(60 * FS)) / FS
        x = np.sin(2 * np.pi * 0.2 * t) + np.sin(2 * np.pi * 5.0 * t)
        out = high_pass(_rec(x), FilterSpec(1.0, 4)).samples[0]
        steady = slice(int(10 * FS), -int(10 * FS))
        low, _ = sine_fit(t[steady], out[steady], 0.2)
        high, _ = sine_fit(t[steady], out[steady], 5.0)
        assert 20 * np.log10(low / 1.0) <= -20
        assert abs(high - 1.0) < 0.01

    def test_causal_mode_runs(self):
        t = np.arange(2500) / FS
        out = high_pass(_rec(np.sin(2 * np.pi * 10 * t)), FilterSpec(1.0, zero_phase=False))
        assert out.samples.shape == (1, 2500)

    def test_nyquist_violation(self):
        with pytest.raises(InvalidCutoff):
            high_pass(_rec(np.zeros((1, 100))), FilterSpec(125.0))

    def test_too_short(self):
        with pytest.raises(RecordTooShort):
            high_pass(_rec(np.zeros((1, 12))), FilterSpec(1.0, 4))

    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(-10, 10), b=st.floats(-10, 10), seed=st.integers(0, 2**32 - 1))
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal((2, 3, 400))
        f = lambda s: high_pass(_rec(s)).samples
        lhs = f(a * x + b * y)
        rhs = a * f(x) + b * f(y)
        scale = max(np.max(np.abs(rhs)), np.max(np.abs(lhs)), 1e-300)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * scale + 1e-300

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_time_reversal_symmetry(self, seed):
        x = np.random.default_rng(seed).standard_normal((2, 600))
        fwd = high_pass(_rec(x)).samples
        rev = high_pass(_rec(x[:, ::-1])).samples
        np.testing.assert_allclose(rev, fwd[:, ::-1], rtol=0, atol=1e-12 * np.abs(fwd).max())

    def test_channels_independent(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 1000))
        together = high_pass(_rec(x)).samples
        apart = np.vstack([high_pass(_rec(row)).samples for row in x])
        np.testing.assert_array_equal(together, apart)


class TestDetrend:
    def test_line_removed(self):
        np.testing.assert_allclose(detrend(_rec([1.0, 2.0, 3.0, 4.0])).samples, 0, atol=1e-12)

    def test_constant_removed(self):
        np.testing.assert_allclose(detrend(_rec(np.full(10, 7.5))).samples, 0, atol=1e-12)

    def test_matches_least_squares_line(self):
        x = np.random.default_rng(2).standard_normal(500)
        t = np.arange(500)
        line = np.polyval(np.polyfit(t, x, 1), t)
        np.testing.assert_allclose(detrend(_rec(x)).samples[0], x - line, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (3, 50), elements=st.floats(-1e3, 1e3)))
    def test_idempotent(self, x):
        once = detrend(_rec(x))
        twice = detrend(once)
        assert np.max(np.abs(twice.samples - once.samples)) <= 1e-12 * max(1.0, np.abs(x).max())
