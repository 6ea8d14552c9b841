"""Multi-channel record model, file formats and preprocessing.

Samples are stored channels x time-steps.  Strain is dimensionless; callers
working in microstrain should multiply by 1e-6 before handing data in (all
downstream identification is scale invariant, so this only matters for
plotting).
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import InvalidCutoff, ParseError, RecordTooShort, ValidationError

__all__ = [
    "StrainRecord",
    "AccelRecord",
    "FilterSpec",
    "load_record",
    "save_record",
    "high_pass",
    "detrend",
]

BINARY_MAGIC = b"SMR1"


@dataclass(frozen=True)
class StrainRecord:
    """Strain observations: one row per channel, one column per time step."""

    samples: np.ndarray
    sampling_rate_hz: float
    channel_positions_m: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float, ndmin=2)
        positions = np.array(self.channel_positions_m, dtype=float).ravel()
        fs = float(self.sampling_rate_hz)
        if not np.isfinite(fs) or fs <= 0:
            raise ValidationError(f"sampling rate must be positive, got {fs}")
        if samples.ndim != 2:
            raise ValidationError("samples must be a 2-D array (channels x time)")
        if positions.size != samples.shape[0]:
            raise ValidationError(
                f"{positions.size} positions given for {samples.shape[0]} channels"
            )
        if positions.size > 1 and np.any(np.diff(positions) <= 0):
            raise ValidationError("channel positions must be strictly increasing")
        if not np.all(np.isfinite(positions)):
            raise ValidationError("channel positions must be finite")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("samples contain NaN or infinite values")
        samples.setflags(write=False)
        positions.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_positions_m", positions)
        object.__setattr__(self, "sampling_rate_hz", fs)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def positions(self) -> np.ndarray:
        return self.channel_positions_m

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sampling_rate_hz

    def with_samples(self, samples):
        return type(self)(samples, self.sampling_rate_hz, self.channel_positions_m)


@dataclass(frozen=True)
class AccelRecord(StrainRecord):
    """Acceleration (m/s^2) at a handful of deck positions.

    Shares layout and invariants with :class:`StrainRecord`; the only
    difference is what the rows mean.
    """

    @property
    def sensor_positions_m(self) -> np.ndarray:
        return self.channel_positions_m


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float = 1.0
    order: int = 4
    kind: str = "high_pass"
    zero_phase: bool = True

    def __post_init__(self):
        if not self.cutoff_hz > 0:
            raise InvalidCutoff(f"cutoff must be positive, got {self.cutoff_hz}")
        if int(self.order) != self.order or self.order < 1:
            raise ValidationError(f"filter order must be a positive integer, got {self.order}")
        if self.kind != "high_pass":
            raise ValidationError(f"unsupported filter kind {self.kind!r}")


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------


def save_record(record: StrainRecord, path, format: str = "binary_f64") -> Path:
    path = Path(path)
    if format == "binary_f64":
        m, t = record.samples.shape
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC)
            fh.write(struct.pack("<IId", m, t, record.sampling_rate_hz))
            fh.write(np.asarray(record.channel_positions_m, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(record.samples, dtype="<f8").tobytes())
    elif format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"fs={record.sampling_rate_hz!r}"])
            writer.writerow([repr(float(p)) for p in record.channel_positions_m])
            for row in record.samples.T:
                writer.writerow([repr(float(v)) for v in row])
    else:
        raise ValueError(f"unknown record format {format!r}")
    return path


def _read_binary(path: Path):
    raw = path.read_bytes()
    header = 4 + struct.calcsize("<IId")
    if len(raw) < header or raw[:4] != BINARY_MAGIC:
        raise ParseError(f"{path}: not an SMR1 record")
    m, t, fs = struct.unpack_from("<IId", raw, 4)
    expected = header + 8 * (m + m * t)
    if len(raw) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(raw)}")
    positions = np.frombuffer(raw, dtype="<f8", count=m, offset=header)
    samples = np.frombuffer(raw, dtype="<f8", count=m * t, offset=header + 8 * m)
    return samples.reshape(m, t).astype(float), fs, positions.astype(float)


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ParseError(f"{path}: missing header rows")
    head = rows[0][0].strip().replace(" ", "")
    if not head.startswith("fs="):
        raise ParseError(f"{path}: first row must be 'fs=<value>'")
    try:
        fs = float(head[3:])
        positions = np.array([float(c) for c in rows[1]])
        samples = np.array([[float(c) for c in r] for r in rows[2:]], dtype=float)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if samples.size == 0:
        samples = np.zeros((0, positions.size))
    if samples.ndim != 2 or samples.shape[1] != positions.size:
        raise ParseError(f"{path}: every time step needs {positions.size} values")
    return samples.T, fs, positions


def load_record(path, format: str | None = None, *, differentiate: bool = False,
                kind=StrainRecord) -> StrainRecord:
    """Read a record from disk.

    ``format`` is ``"csv"`` or ``"binary_f64"``; when omitted it is inferred
    from the extension (``.csv`` means CSV, anything else binary).  With
    ``differentiate=True`` every channel is replaced by its central-difference
    time derivative (strain to strain rate).
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "binary_f64"
    if format == "csv":
        samples, fs, positions = _read_csv(path)
    elif format == "binary_f64":
        samples, fs, positions = _read_binary(path)
    else:
        raise ValueError(f"unknown record format {format!r}")
    if differentiate:
        if samples.shape[1] < 2:
            raise RecordTooShort("need at least 2 samples to differentiate")
        samples = np.gradient(samples, 1.0 / fs, axis=1)
    return kind(samples, fs, positions)


# --------------------------------------------------------------------------
# preprocessing
# --------------------------------------------------------------------------


def high_pass(record: StrainRecord, spec: FilterSpec = FilterSpec()) -> StrainRecord:
    """Butterworth high-pass filter applied to every channel.

    Zero-phase mode runs the filter forward and backward, and averages that
    with the same operation on the time-reversed signal so the result is
    exactly symmetric under time reversal.  Each channel is reflect-padded by
    ``3 * order`` samples.
    """
    fs = record.sampling_rate_hz
    if spec.cutoff_hz >= fs / 2:
        raise InvalidCutoff(
            f"cutoff {spec.cutoff_hz} Hz is not below Nyquist ({fs / 2} Hz)"
        )
    padlen = 3 * int(spec.order)
    if record.n_samples <= padlen:
        raise RecordTooShort(
            f"record has {record.n_samples} samples, filter needs more than {padlen}"
        )
    sos = sps.butter(int(spec.order), spec.cutoff_hz, btype="highpass", fs=fs, output="sos")
    x = record.samples
    if spec.zero_phase:
        fwd = sps.sosfiltfilt(sos, x, axis=1, padtype="even", padlen=padlen)
        rev = sps.sosfiltfilt(sos, x[:, ::-1], axis=1, padtype="even", padlen=padlen)[:, ::-1]
        y = 0.5 * (fwd + rev)
    else:
        ext = np.pad(x, ((0, 0), (padlen, padlen)), mode="reflect")
        zi = sps.sosfilt_zi(sos)[:, None, :] * ext[None, :, :1]
        y, _ = sps.sosfilt(sos, ext, axis=1, zi=zi)
        y = y[:, padlen:-padlen]
    return record.with_samples(y)


def detrend(record: StrainRecord) -> StrainRecord:
    """Remove the least-squares line from every channel."""
    return record.with_samples(sps.detrend(record.samples, axis=1, type="linear"))
