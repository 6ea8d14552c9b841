"""JSON documents exchanged between pipeline stages.

Every document carries ``"schema_version": 1``.  The modes document is shared
by ``identify`` (shapes only), ``fit-shapes`` (adds fitted models and
displacement shapes per route) and the simulator's ground truth.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beam import ShapeModel, SpanLayout
from .errors import ParseError, ValidationError
from .signal import FilterSpec
from .sim import BeamSpec, SimScenario, calibrate_first_frequency
from .ssi import ModalEstimate, SsiConfig

SCHEMA_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else None)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    doc = {"schema_version": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(_jsonable(doc), indent=2) + "\n")
    return path


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"{path}: unsupported schema_version {version!r}")
    return doc


def _float(value):
    if value is None or value == "inf":
        return math.inf
    if value == "-inf":
        return -math.inf
    return float(value)


# --------------------------------------------------------------------------
# modes documents
# --------------------------------------------------------------------------


def mode_to_dict(mode: ModalEstimate, positions, kind: str = "SMS", **extra) -> dict:
    shape = np.asarray(mode.shape, dtype=complex)
    return {
        "frequency_hz": mode.frequency_hz,
        "damping_ratio": mode.damping_ratio,
        "order_found": mode.order_found,
        "shape_kind": kind,
        "positions_m": np.asarray(positions, dtype=float),
        "shape_re": shape.real,
        "shape_im": shape.imag,
        **extra,
    }


def write_modes(path, modes: list[dict], meta: dict | None = None) -> Path:
    return write_json(path, {"modes": modes, "meta": meta or {}})


@dataclass
class ModeEntry:
    """One mode as read back from a modes document."""

    frequency_hz: float
    damping_ratio: float
    positions_m: np.ndarray
    shape: np.ndarray
    shape_kind: str = "SMS"
    shape_model: ShapeModel | None = None
    dms: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def estimate(self) -> ModalEstimate:
        return ModalEstimate(self.frequency_hz, self.damping_ratio, self.shape,
                             int(self.raw.get("order_found", 0)))


def read_modes(path) -> tuple[list[ModeEntry], dict]:
    doc = read_json(path)
    modes = doc.get("modes")
    if not isinstance(modes, list):
        raise ValidationError(f"{path}: missing 'modes' list")
    out = []
    for n, m in enumerate(modes):
        try:
            shape = np.asarray(m["shape_re"], dtype=float) + 1j * np.asarray(
                m.get("shape_im", [0.0] * len(m["shape_re"])), dtype=float)
            positions = np.asarray(m["positions_m"], dtype=float)
            if positions.size != shape.size:
                raise ValidationError(f"{path}: mode {n}: shape/positions length mismatch")
            model = ShapeModel.from_dict(m["shape_model"]) if m.get("shape_model") else None
            dms = {
                route: (np.asarray(v["positions_m"], dtype=float), np.asarray(v["values"], dtype=float))
                for route, v in (m.get("dms") or {}).items()
            }
            out.append(ModeEntry(float(m["frequency_hz"]), float(m.get("damping_ratio", 0.0)),
                                 positions, shape, m.get("shape_kind", "SMS"), model, dms, m))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"{path}: mode {n}: bad or missing field ({exc})") from None
    return out, doc.get("meta", {})


# --------------------------------------------------------------------------
# scenario documents
# --------------------------------------------------------------------------


def scenario_to_dict(scenario: SimScenario) -> dict:
    beam = scenario.beam
    return {
        "beam": {
            "layout": beam.layout.to_dict(),
            "EI": beam.EI,
            "rho_A": beam.rho_A,
            "modal_damping": list(beam.modal_damping),
            "n_modes": beam.n_modes,
        },
        "duration_s": scenario.duration_s,
        "fs_hz": scenario.fs_hz,
        "channel_spacing_m": scenario.channel_spacing_m,
        "accel_positions_m": list(scenario.accel_positions_m),
        "snr_db": scenario.snr_db,
        "seed": scenario.seed,
        "excitation_variance": scenario.excitation_variance,
    }


def scenario_from_dict(doc: dict) -> SimScenario:
    """Build a scenario.  ``beam.EI`` may be replaced by ``beam.target_f1_hz``,
    in which case EI is calibrated for the given ``rho_A``."""
    try:
        b = doc["beam"]
        layout = SpanLayout.from_dict(b["layout"])
        rho_a = float(b.get("rho_A", 1.2e4))
        if "EI" in b:
            ei = float(b["EI"])
        elif "target_f1_hz" in b:
            ei = calibrate_first_frequency(layout, float(b["target_f1_hz"])) * rho_a
        else:
            raise ValidationError("beam needs either 'EI' or 'target_f1_hz'")
        beam = BeamSpec(layout, ei, rho_a, tuple(b.get("modal_damping", [0.02])),
                        int(b.get("n_modes", 3)))
        return SimScenario(
            beam,
            float(doc.get("duration_s", 480.0)),
            float(doc.get("fs_hz", 250.0)),
            float(doc.get("channel_spacing_m", 1.0)),
            tuple(doc.get("accel_positions_m", ())),
            _float(doc.get("snr_db")),
            int(doc.get("seed", 0)),
            float(doc.get("excitation_variance", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad scenario: {exc}") from None


# --------------------------------------------------------------------------
# pipeline configuration
# --------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    filter: FilterSpec = field(default_factory=FilterSpec)
    ssi: SsiConfig = field(default_factory=SsiConfig)
    layout: SpanLayout | None = None
    beta_scan_factor: float | None = None
    n_modes: int = 3
    min_cluster_size: int = 3
    polynomial_degree: int = 4
    io: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValidationError("fitting.n_modes must be at least 1")

    def to_dict(self) -> dict:
        s = self.ssi
        return {
            "filter": {"cutoff_hz": self.filter.cutoff_hz, "order": self.filter.order,
                       "kind": self.filter.kind, "zero_phase": self.filter.zero_phase},
            "ssi": {
                "block_rows": s.block_rows,
                "order_range": [s.order_min, s.order_max, s.order_step],
                "freq_band_hz": list(s.freq_band_hz),
                "damping_bounds": list(s.damping_bounds),
                "stability": {"freq_tol": s.freq_tol, "damping_tol": s.damping_tol,
                              "mac_min": s.mac_min},
                "min_cluster_size": self.min_cluster_size,
            },
            "layout": self.layout.to_dict() if self.layout else None,
            "fitting": {"beta_scan_factor": self.beta_scan_factor, "n_modes": self.n_modes},
            "baselines": {"polynomial_degree": self.polynomial_degree},
            "io": dict(self.io),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        try:
            f = doc.get("filter", {})
            filt = FilterSpec(float(f.get("cutoff_hz", 1.0)), int(f.get("order", 4)),
                              f.get("kind", "high_pass"), bool(f.get("zero_phase", True)))
            s = doc.get("ssi", {})
            stab = s.get("stability", {})
            lo, hi, step = s.get("order_range", [2, 40, 2])
            band = s.get("freq_band_hz", [1.0, None])
            ssi = SsiConfig(
                block_rows=s.get("block_rows"),
                order_min=int(lo), order_max=int(hi), order_step=int(step),
                freq_band_hz=(float(band[0]), None if band[1] is None else float(band[1])),
                damping_bounds=tuple(float(v) for v in s.get("damping_bounds", [0.0, 0.2])),
                freq_tol=float(stab.get("freq_tol", 0.01)),
                damping_tol=float(stab.get("damping_tol", 0.05)),
                mac_min=float(stab.get("mac_min", 0.98)),
            )
            layout = SpanLayout.from_dict(doc["layout"]) if doc.get("layout") else None
            fit = doc.get("fitting", {})
            scan = fit.get("beta_scan_factor")
            return cls(
                filt, ssi, layout,
                None if scan is None else float(scan),
                int(fit.get("n_modes", 3)),
                int(s.get("min_cluster_size", 3)),
                int(doc.get("baselines", {}).get("polynomial_degree", 4)),
                dict(doc.get("io", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"bad pipeline config: {exc}") from None


def load_config(path) -> PipelineConfig:
    return PipelineConfig.from_dict(read_json(path))
