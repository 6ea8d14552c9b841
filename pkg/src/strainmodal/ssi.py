"""Data-driven stochastic subspace identification.

The record is arranged in a block Hankel matrix whose top half holds "past"
and bottom half "future" outputs.  The future rows are projected onto the row
space of the past rows through an LQ factorization, the projection is
factored by SVD into an extended observability matrix, and ``A``/``C`` follow
from its shift structure.  Modes are read off the eigendecomposition of
``A``.

For long records the Hankel matrix is never materialized: its triangular
factor is accumulated column chunk by column chunk, and only the
``(i*m) x (i*m)`` block that carries the projection is kept.  The
projection's left singular vectors and singular values, which is all
:func:`realize` uses, are identical in both representations.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import (
    DefectiveSystemMatrix,
    NotEnoughStableModes,
    OrderTooHigh,
    RankDeficientPast,
    RecordTooShort,
    StrainModalError,
    SvdFailure,
    ValidationError,
)
from .metrics import mac
from .signal import StrainRecord

logger = logging.getLogger(__name__)

__all__ = [
    "SsiConfig",
    "StateSpaceRealization",
    "ModalEstimate",
    "StabilizationEntry",
    "StabilizationDiagram",
    "build_block_hankel",
    "project_future_onto_past",
    "compact_projection",
    "realize",
    "extract_modes",
    "stabilization_scan",
    "select_modes",
    "normalize_complex_shape",
]

# relative singular-value floor below which the past row space is considered empty
PAST_RANK_RTOL = 1e-10
# relative floor for counting projection rank in realize()
PROJECTION_RANK_RTOL = 1e-12
DEFECTIVE_COND = 1e12
# rounding slack on the damping bounds so an undamped pole is not lost at zeta = -1e-17
_DAMPING_SLACK = 1e-12
_CHUNK_COLUMNS = 8000


@dataclass(frozen=True)
class SsiConfig:
    """Algorithm settings.

    ``block_rows=None`` picks ``ceil(1.5 * fs / f_low / m)`` clamped to
    [10, 60] where ``f_low`` is the lower edge of ``freq_band_hz``.
    ``freq_band_hz[1] = None`` means up to Nyquist.
    """

    block_rows: int | None = None
    order_min: int = 2
    order_max: int = 40
    order_step: int = 2
    freq_band_hz: tuple = (1.0, None)
    damping_bounds: tuple = (0.0, 0.2)
    freq_tol: float = 0.01
    damping_tol: float = 0.05
    mac_min: float = 0.98

    def __post_init__(self):
        if self.order_min < 1 or self.order_max < self.order_min or self.order_step < 1:
            raise ValidationError(
                f"bad order range {self.order_min}..{self.order_max} step {self.order_step}"
            )
        if self.block_rows is not None and self.block_rows < 1:
            raise ValidationError("block_rows must be positive")
        lo, hi = self.freq_band_hz
        if lo < 0 or (hi is not None and hi <= lo):
            raise ValidationError(f"bad frequency band {self.freq_band_hz}")
        if self.damping_bounds[1] < self.damping_bounds[0]:
            raise ValidationError(f"bad damping bounds {self.damping_bounds}")

    @property
    def orders(self) -> list[int]:
        return list(range(self.order_min, self.order_max + 1, self.order_step))

    def resolve_block_rows(self, n_channels: int, fs: float) -> int:
        if self.block_rows is not None:
            return int(self.block_rows)
        f_low = self.freq_band_hz[0] or 1.0
        i = math.ceil(1.5 * fs / f_low / n_channels)
        return int(min(max(i, 10), 60))


@dataclass(frozen=True)
class StateSpaceRealization:
    A: np.ndarray
    C: np.ndarray
    order: int
    sampling_rate_hz: float

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A)))) if self.order else 0.0

    @property
    def is_unstable(self) -> bool:
        return self.spectral_radius > 1.0

    @property
    def odd_order(self) -> bool:
        return self.order % 2 == 1

    def diagnostics(self) -> dict:
        return {
            "order": self.order,
            "odd_order": self.odd_order,
            "spectral_radius": self.spectral_radius,
            "unstable": self.is_unstable,
        }


def normalize_complex_shape(shape) -> np.ndarray:
    """Scale so the largest-magnitude entry becomes exactly ``1 + 0j``."""
    shape = np.asarray(shape, dtype=complex)
    k = int(np.argmax(np.abs(shape)))
    if shape[k] == 0:
        return shape.copy()
    out = shape / shape[k]
    out[k] = 1.0
    return out


@dataclass(frozen=True)
class ModalEstimate:
    frequency_hz: float
    damping_ratio: float
    shape: np.ndarray
    order_found: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shape", normalize_complex_shape(self.shape))


@dataclass(frozen=True)
class StabilizationEntry:
    order: int
    mode: ModalEstimate
    freq_stable: bool = False
    damp_stable: bool = False
    shape_stable: bool = False

    @property
    def stable(self) -> bool:
        return self.freq_stable and self.damp_stable and self.shape_stable


@dataclass
class StabilizationDiagram:
    entries: list[StabilizationEntry]
    failures: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda e: (e.order, e.mode.frequency_hz))

    def at_order(self, order: int) -> list[StabilizationEntry]:
        return [e for e in self.entries if e.order == order]

    @property
    def orders(self) -> list[int]:
        return sorted({e.order for e in self.entries})

    def rows(self):
        for e in self.entries:
            yield (e.order, e.mode.frequency_hz, e.mode.damping_ratio,
                   int(e.freq_stable), int(e.damp_stable), int(e.shape_stable))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["order", "frequency_hz", "damping", "f_stable", "d_stable", "s_stable"])
            for order, f, z, fs_, ds_, ss_ in self.rows():
                w.writerow([order, repr(float(f)), repr(float(z)), fs_, ds_, ss_])
        return path


# --------------------------------------------------------------------------
# Hankel assembly and projection
# --------------------------------------------------------------------------


def _samples(record) -> np.ndarray:
    if isinstance(record, StrainRecord):
        return record.samples
    return np.atleast_2d(np.asarray(record, dtype=float))


def _check_hankel_size(m: int, t: int, i: int) -> int:
    if i < 1:
        raise ValidationError("block rows must be positive")
    if t < 2 * i + 1:
        raise RecordTooShort(f"{t} samples is too short for {i} block rows")
    j = t - 2 * i + 1
    if 2 * i * m > j:
        raise RecordTooShort(
            f"Hankel matrix would have {2 * i * m} rows but only {j} columns"
        )
    return j


def build_block_hankel(record, i: int) -> np.ndarray:
    """``(2*i*m) x j`` block Hankel matrix scaled by ``1/sqrt(j)``.

    Block row ``r`` at column ``c`` holds ``y(r + c)``; the first ``i`` block
    rows are the past, the last ``i`` the future.
    """
    y = _samples(record)
    m, t = y.shape
    j = _check_hankel_size(m, t, i)
    return np.vstack([y[:, r:r + j] for r in range(2 * i)]) / np.sqrt(j)


def _projection_from_factor(L: np.ndarray, i: int, m: int) -> np.ndarray:
    """Return ``L21 @ Pi`` where ``Pi`` projects onto the row space of ``L11``."""
    im = i * m
    L11 = L[:im, :im]
    L21 = L[im:2 * im, :im]
    try:
        _, s, vt = np.linalg.svd(L11)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from None
    if s.size == 0 or s[0] == 0 or not np.isfinite(s[0]):
        raise RankDeficientPast("past block has no numerical rank")
    keep = s > PAST_RANK_RTOL * s[0]
    v = vt[keep].T
    return (L21 @ v) @ v.T


def project_future_onto_past(hankel: np.ndarray, i: int, m: int) -> np.ndarray:
    """Orthogonal projection of the future rows onto the past row space.

    Uses ``H = L Q^T``; the projection equals ``L21 Pi Q1^T`` with ``Pi`` the
    projector onto the row space of ``L11`` (identity when the past block has
    full rank).  Returns the full ``(i*m) x j`` matrix.
    """
    hankel = np.asarray(hankel, dtype=float)
    if hankel.shape[0] != 2 * i * m:
        raise ValidationError(f"expected {2 * i * m} Hankel rows, got {hankel.shape[0]}")
    q, r = np.linalg.qr(hankel.T, mode="reduced")
    compact = _projection_from_factor(r.T, i, m)
    return compact @ q[:, : i * m].T


def _hankel_triangular_factor(y: np.ndarray, i: int, chunk: int = _CHUNK_COLUMNS) -> np.ndarray:
    """Lower triangular ``L`` with ``H = L Q^T`` built without forming ``H``."""
    m, t = y.shape
    j = _check_hankel_size(m, t, i)
    rows = 2 * i * m
    scale = 1.0 / np.sqrt(j)
    r = None
    for c0 in range(0, j, chunk):
        c1 = min(j, c0 + chunk)
        block = np.vstack([y[:, k + c0:k + c1] for k in range(2 * i)]).T * scale
        stacked = block if r is None else np.vstack([r, block])
        r = sla.qr(stacked, mode="r", overwrite_a=True, check_finite=False)[0][:rows]
    if r.shape[0] < rows:
        r = np.vstack([r, np.zeros((rows - r.shape[0], rows))])
    return r.T


def compact_projection(record, i: int) -> np.ndarray:
    """``(i*m) x (i*m)`` matrix with the same column space and singular values
    as :func:`project_future_onto_past` applied to the record's Hankel matrix."""
    y = _samples(record)
    return _projection_from_factor(_hankel_triangular_factor(y, i), i, y.shape[0])


# --------------------------------------------------------------------------
# realization and modal extraction
# --------------------------------------------------------------------------


def _realize_from_svd(u, s, order: int, m: int, fs: float) -> StateSpaceRealization:
    rows = u.shape[0]
    if order < 1:
        raise OrderTooHigh(f"model order must be at least 1, got {order}")
    if rows % m:
        raise ValidationError(f"projection has {rows} rows, not a multiple of {m} channels")
    rank = int(np.sum(s > PROJECTION_RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    if order > rank:
        raise OrderTooHigh(f"order {order} exceeds projection rank {rank}")
    if order > rows - m:
        raise OrderTooHigh(f"order {order} exceeds {rows - m} (one spare block row needed)")
    gamma = u[:, :order] * np.sqrt(s[:order])
    c = gamma[:m].copy()
    a, *_ = np.linalg.lstsq(gamma[:-m], gamma[m:], rcond=None)
    return StateSpaceRealization(a, c, order, float(fs))


def _svd(projection):
    try:
        u, s, _ = np.linalg.svd(np.asarray(projection, dtype=float), full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from None
    return u, s


def realize(projection, order: int, m: int, fs: float) -> StateSpaceRealization:
    """Balanced realization of order ``order`` from a future/past projection."""
    if order < 1:
        raise OrderTooHigh(f"model order must be at least 1, got {order}")
    u, s = _svd(projection)
    return _realize_from_svd(u, s, order, m, fs)


def extract_modes(real: StateSpaceRealization, config: SsiConfig = SsiConfig()) -> list[ModalEstimate]:
    fs = real.sampling_rate_hz
    lam, vecs = np.linalg.eig(real.A)
    if np.linalg.cond(vecs) > DEFECTIVE_COND:
        raise DefectiveSystemMatrix(
            f"eigenvector condition number exceeds {DEFECTIVE_COND:g} at order {real.order}"
        )
    lo, hi = config.freq_band_hz
    hi = fs / 2 if hi is None else hi
    zmin, zmax = config.damping_bounds
    modes = []
    for k in np.flatnonzero(lam.imag > 0):
        lc = fs * np.log(lam[k])
        wn = abs(lc)
        f = wn / (2 * np.pi)
        zeta = -lc.real / wn
        if not (lo <= f <= hi and zmin - _DAMPING_SLACK <= zeta <= zmax + _DAMPING_SLACK and f > 0):
            continue
        modes.append(ModalEstimate(float(f), float(zeta), real.C @ vecs[:, k], real.order))
    modes.sort(key=lambda mo: mo.frequency_hz)
    return modes


# --------------------------------------------------------------------------
# stabilization diagram
# --------------------------------------------------------------------------


def _flag(mode: ModalEstimate, previous: list[ModalEstimate], cfg: SsiConfig) -> StabilizationEntry:
    if not previous:
        return StabilizationEntry(mode.order_found, mode)
    ref = min(previous, key=lambda p: (abs(p.frequency_hz - mode.frequency_hz), p.frequency_hz))
    f_ok = abs(ref.frequency_hz - mode.frequency_hz) / mode.frequency_hz < cfg.freq_tol
    d_ok = abs(ref.damping_ratio - mode.damping_ratio) < cfg.damping_tol
    s_ok = mac(ref.shape, mode.shape) > cfg.mac_min
    return StabilizationEntry(mode.order_found, mode, bool(f_ok), bool(d_ok), bool(s_ok))


def stabilization_scan(record: StrainRecord, config: SsiConfig = SsiConfig()) -> StabilizationDiagram:
    """Identify modes at every order in ``config.orders`` and flag stable ones.

    A mode at order ``n`` is compared with the nearest-frequency mode found at
    order ``n - order_step``.  Per-order failures are kept in
    ``diagram.failures`` rather than raised.
    """
    m, fs = record.n_channels, record.sampling_rate_hz
    i = config.resolve_block_rows(m, fs)
    logger.info("SSI: %d channels, %d samples, %d block rows", m, record.n_samples, i)
    u, s = _svd(compact_projection(record, i))
    by_order, failures = {}, {}
    for order in config.orders:
        try:
            real = _realize_from_svd(u, s, order, m, fs)
            by_order[order] = extract_modes(real, config)
        except StrainModalError as exc:
            failures[order] = f"{type(exc).__name__}: {exc}"
            by_order[order] = None
    entries = []
    for order in config.orders:
        modes = by_order[order]
        if modes is None:
            continue
        previous = by_order.get(order - config.order_step) or []
        entries.extend(_flag(mo, previous, config) for mo in modes)
    return StabilizationDiagram(entries, failures)


def select_modes(diagram: StabilizationDiagram, n_modes: int, *,
                 linkage: float = 0.01, min_cluster_size: int = 3) -> list[ModalEstimate]:
    """Cluster fully stable entries by frequency and return the lowest ones.

    Sorted stable frequencies are chained while consecutive entries differ by
    less than ``linkage`` (relative).  Each cluster yields its median
    frequency and damping and the shape found at its highest model order.
    Clusters with fewer than ``min_cluster_size`` entries are dropped, which
    keeps isolated chance alignments of noise poles out of the result.
    """
    if not diagram.entries:
        raise NotEnoughStableModes("stabilization diagram is empty")
    stable = sorted((e for e in diagram.entries if e.stable),
                    key=lambda e: (e.mode.frequency_hz, e.order))
    clusters: list[list[StabilizationEntry]] = []
    for e in stable:
        if clusters and (e.mode.frequency_hz - clusters[-1][-1].mode.frequency_hz) \
                < linkage * clusters[-1][-1].mode.frequency_hz:
            clusters[-1].append(e)
        else:
            clusters.append([e])
    clusters = [c for c in clusters if len(c) >= min_cluster_size]
    out = []
    for c in clusters[:n_modes]:
        f_med = float(np.median([e.mode.frequency_hz for e in c]))
        z_med = float(np.median([e.mode.damping_ratio for e in c]))
        top = max(e.order for e in c)
        best = min((e for e in c if e.order == top),
                   key=lambda e: abs(e.mode.frequency_hz - f_med))
        out.append(ModalEstimate(f_med, z_med, best.mode.shape, top))
    if len(out) < n_modes:
        exc = NotEnoughStableModes(
            f"found {len(out)} stable mode clusters, {n_modes} requested"
        )
        exc.partial = out
        raise exc
    return out
