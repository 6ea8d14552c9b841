"""Synthetic continuous-beam oracle.

Each mode of a K-span Euler-Bernoulli beam is excited by independent white
noise and integrated exactly (zero-order hold) at the sampling rate.  Strain
channels see ``sum_i SMS_i(x) q_i(t)``, accelerometers
``sum_i DMS_i(x) q_i''(t)``; white measurement noise is added per channel at
a prescribed SNR.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg as sla
from scipy import signal as sps

from .beam import (
    ShapeModel,
    SpanLayout,
    dms_values,
    find_characteristic_roots,
    model_for_root,
    sms_values,
)
from .errors import NyquistViolation, RootsNotFound, ValidationError
from .signal import AccelRecord, StrainRecord

__all__ = [
    "BeamSpec",
    "SimScenario",
    "BeamMode",
    "SimulationResult",
    "solve_modes",
    "calibrate_first_frequency",
    "sdof_discrete",
    "default_layout",
    "default_scenario",
    "simulate",
]


@dataclass(frozen=True)
class BeamSpec:
    layout: SpanLayout
    EI: float
    rho_A: float
    modal_damping: tuple = (0.02,)
    n_modes: int = 3

    def __post_init__(self):
        if not (self.EI > 0 and self.rho_A > 0):
            raise ValidationError("EI and rho_A must be positive")
        if self.n_modes < 1:
            raise ValidationError("need at least one mode")
        damping = tuple(float(z) for z in np.atleast_1d(self.modal_damping))
        if len(damping) == 1:
            damping = damping * self.n_modes
        if len(damping) != self.n_modes:
            raise ValidationError(f"{len(damping)} damping ratios for {self.n_modes} modes")
        if any(not 0 <= z < 0.2 for z in damping):
            raise ValidationError("modal damping must lie in [0, 0.2)")
        object.__setattr__(self, "modal_damping", damping)

    @property
    def stiffness_ratio(self) -> float:
        """EI / rho_A (m^4/s^2)."""
        return self.EI / self.rho_A


@dataclass(frozen=True)
class SimScenario:
    beam: BeamSpec
    duration_s: float = 480.0
    fs_hz: float = 250.0
    channel_spacing_m: float = 1.0
    accel_positions_m: tuple = ()
    snr_db: float = math.inf
    seed: int = 0
    excitation_variance: float = 1.0

    def __post_init__(self):
        if not (self.duration_s > 0 and self.fs_hz > 0 and self.channel_spacing_m > 0):
            raise ValidationError("duration, sampling rate and channel spacing must be positive")
        if not self.excitation_variance > 0:
            raise ValidationError("excitation variance must be positive")
        object.__setattr__(self, "accel_positions_m",
                           tuple(float(p) for p in self.accel_positions_m))
        snr = math.inf if self.snr_db is None else float(self.snr_db)
        object.__setattr__(self, "snr_db", snr)

    @property
    def channel_positions_m(self) -> np.ndarray:
        total = self.beam.layout.total_length_m
        n = int(math.floor(total / self.channel_spacing_m + 1e-9)) + 1
        return np.arange(n) * self.channel_spacing_m

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.fs_hz))


@dataclass(frozen=True)
class BeamMode:
    index: int
    beta: float
    frequency_hz: float
    damping_ratio: float
    model: ShapeModel
    dms_scale: float = 1.0

    def sms(self, positions) -> np.ndarray:
        """Strain shape, unit maximum over a 1 cm grid."""
        return sms_values(self.model, positions)

    def dms(self, positions) -> np.ndarray:
        """Displacement shape, unit maximum over a 1 cm grid."""
        return dms_values(self.model, positions) / self.dms_scale


class SimulationResult(NamedTuple):
    strain: StrainRecord
    accel: AccelRecord | None
    modes: list


def _dense_grid(layout: SpanLayout) -> np.ndarray:
    return np.linspace(0, layout.total_length_m, int(round(layout.total_length_m * 100)) + 1)


@functools.lru_cache(maxsize=32)
def _roots(layout: SpanLayout, n: int) -> tuple[float, ...]:
    lo = 1e-3 * np.pi / layout.total_length_m
    hi = (n + 1) * np.pi / min(layout.span_lengths_m)
    for _ in range(4):
        try:
            return tuple(find_characteristic_roots(layout, (lo, hi), n))
        except RootsNotFound:
            hi *= 2
    return tuple(find_characteristic_roots(layout, (lo, hi), n))


def solve_modes(beam: BeamSpec) -> list[BeamMode]:
    """Exact modes: characteristic roots, frequencies and shape models."""
    grid = _dense_grid(beam.layout)
    out = []
    for i, beta in enumerate(_roots(beam.layout, beam.n_modes), start=1):
        model = model_for_root(beam.layout, beta, i, grid)
        scale = float(np.max(np.abs(dms_values(model, grid))))
        w = dms_values(model, grid)
        scale = scale * np.sign(w[np.argmax(np.abs(w))])
        f = beta**2 * math.sqrt(beam.stiffness_ratio) / (2 * math.pi)
        out.append(BeamMode(i, beta, f, beam.modal_damping[i - 1], model, scale))
    return out


def calibrate_first_frequency(layout: SpanLayout, target_f1_hz: float) -> float:
    """EI / rho_A that puts the first mode at ``target_f1_hz``."""
    if not target_f1_hz > 0:
        raise ValidationError("target frequency must be positive")
    beta1 = _roots(layout, 1)[0]
    return (2 * math.pi * target_f1_hz / beta1**2) ** 2


def sdof_discrete(frequency_hz: float, damping_ratio: float, fs: float):
    """Zero-order-hold discretization of ``q'' + 2 z w q' + w^2 q = u``.

    Returns ``(Ad, Bd)`` for the state ``[q, q']``.
    """
    w = 2 * math.pi * frequency_hz
    A = np.array([[0.0, 1.0], [-w * w, -2 * damping_ratio * w]])
    M = np.zeros((3, 3))
    M[:2, :2] = A
    M[1, 2] = 1.0
    E = sla.expm(M / fs)
    return E[:2, :2], E[:2, 2:]


def default_layout() -> SpanLayout:
    return SpanLayout((16.0, 18.0, 16.0), fiber_offset_m=0.5)


def default_scenario(*, snr_db: float = math.inf, seed: int = 0, target_f1_hz: float = 4.61,
                     duration_s: float = 480.0, n_modes: int = 3) -> SimScenario:
    """Three-span 16/18/16 m beam tuned to ``target_f1_hz``, 250 Hz, 1 m channels."""
    layout = default_layout()
    rho_a = 1.2e4
    beam = BeamSpec(layout, calibrate_first_frequency(layout, target_f1_hz) * rho_a, rho_a,
                    (0.02,), n_modes)
    accel = (8.0, 25.0, 29.5, 42.0)
    return SimScenario(beam, duration_s, 250.0, 1.0, accel, snr_db, seed)


def _modal_response(mode: BeamMode, u: np.ndarray, fs: float):
    """Displacement and acceleration of one modal coordinate."""
    Ad, Bd = sdof_discrete(mode.frequency_hz, mode.damping_ratio, fs)
    num, den = sps.ss2tf(Ad, Bd, np.eye(2), np.zeros((2, 1)))
    q = sps.lfilter(num[0], den, u)
    qd = sps.lfilter(num[1], den, u)
    w = 2 * math.pi * mode.frequency_hz
    qdd = u - 2 * mode.damping_ratio * w * qd - w * w * q
    return q, qdd


def _add_noise(clean: np.ndarray, snr_db: float, rng) -> np.ndarray:
    noise = rng.standard_normal(clean.shape)
    if math.isinf(snr_db):
        return clean
    std = np.sqrt(np.var(clean, axis=1) / 10 ** (snr_db / 10))
    return clean + std[:, None] * noise


def simulate(scenario: SimScenario) -> SimulationResult:
    """Strain and acceleration records plus the exact modes that made them.

    Random draws happen in a fixed order (modal forcing, strain noise,
    acceleration noise), so a seed fully determines the output.  A burn-in of
    five decay time constants of the slowest-decaying mode is simulated and
    discarded so the records start in steady state.
    """
    modes = solve_modes(scenario.beam)
    fs = scenario.fs_hz
    f_max = max(m.frequency_hz for m in modes)
    if fs <= 2 * f_max:
        raise NyquistViolation(
            f"sampling rate {fs} Hz is not above twice the highest mode ({f_max:.3f} Hz)"
        )
    rng = np.random.default_rng(np.uint64(scenario.seed))
    n = scenario.n_samples
    decay = max(5.0 / (max(m.damping_ratio, 1e-3) * 2 * math.pi * m.frequency_hz) for m in modes)
    burn = int(math.ceil(decay * fs))
    forcing = rng.standard_normal((len(modes), burn + n)) * math.sqrt(scenario.excitation_variance)
    q = np.empty((len(modes), n))
    qdd = np.empty((len(modes), n))
    for k, mode in enumerate(modes):
        disp, acc = _modal_response(mode, forcing[k], fs)
        q[k], qdd[k] = disp[burn:], acc[burn:]

    x = scenario.channel_positions_m
    sms = np.column_stack([m.sms(x) for m in modes])
    strain = _add_noise(sms @ q, scenario.snr_db, rng)
    strain_rec = StrainRecord(strain, fs, x)

    accel_rec = None
    if scenario.accel_positions_m:
        xa = np.asarray(scenario.accel_positions_m)
        dms = np.column_stack([m.dms(xa) for m in modes])
        accel_rec = AccelRecord(_add_noise(dms @ qdd, scenario.snr_db, rng), fs, xa)
    return SimulationResult(strain_rec, accel_rec, modes)
