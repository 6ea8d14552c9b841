"""Stage functions behind the command line: identify, fit shapes, compare."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .beam import (
    ModeShapeSamples,
    SpanLayout,
    dms_via_polynomial,
    dms_via_trapezoid,
    eval_dms,
    eval_sms,
    fit_sms,
    normalize_real_shape,
    to_real_shape,
)
from .errors import NotEnoughStableModes, StrainModalError, ValidationError
from .metrics import ModalComparison, improvement, mac, pair_modes
from .schemas import ModeEntry, PipelineConfig, mode_to_dict
from .signal import StrainRecord, detrend, high_pass
from .ssi import ModalEstimate, StabilizationDiagram, select_modes, stabilization_scan

logger = logging.getLogger(__name__)

ROUTES = ("physics", "polynomial", "trapezoid")
BASELINES = ("polynomial", "trapezoid")


@dataclass
class IdentifyResult:
    modes: list[ModalEstimate]
    diagram: StabilizationDiagram
    error: NotEnoughStableModes | None = None


def identify(record: StrainRecord, config: PipelineConfig) -> IdentifyResult:
    """detrend -> high-pass -> stabilization scan -> mode selection."""
    rec = high_pass(detrend(record), config.filter)
    diagram = stabilization_scan(rec, config.ssi)
    try:
        modes = select_modes(diagram, config.n_modes, min_cluster_size=config.min_cluster_size)
        return IdentifyResult(modes, diagram)
    except NotEnoughStableModes as exc:
        return IdentifyResult(getattr(exc, "partial", []), diagram, exc)


def _samples_dict(s: ModeShapeSamples) -> dict:
    return {"positions_m": s.positions_m, "values": s.values}


def fit_mode(entry: ModeEntry, layout: SpanLayout, config: PipelineConfig, mode_index: int) -> dict:
    """Physics fit plus both baselines for one identified strain mode.

    Returns a modes-document entry with ``shape_model``, ``fit`` and a
    ``dms`` block per route; failures are recorded under ``errors``.
    """
    est = entry.estimate()
    out = mode_to_dict(est, entry.positions_m, entry.shape_kind)
    errors = {}
    measured = ModeShapeSamples(entry.positions_m, to_real_shape(entry.shape), "SMS")
    dms = {}
    try:
        fit = fit_sms(measured, layout, mode_index=mode_index, scan_factor=config.beta_scan_factor)
        out["shape_model"] = fit.model.to_dict()
        out["fit"] = {"beta": fit.beta, "objective": fit.objective,
                      "residual_rms": fit.residual_rms, "sigma_min": fit.sigma_min}
        out["sms_fit"] = _samples_dict(eval_sms(fit.model, entry.positions_m))
        dms["physics"] = _samples_dict(eval_dms(fit.model, entry.positions_m))
    except StrainModalError as exc:
        errors["physics"] = f"{type(exc).__name__}: {exc}"
    for route, fn in (("polynomial", lambda: dms_via_polynomial(measured, layout, config.polynomial_degree)),
                      ("trapezoid", lambda: dms_via_trapezoid(measured, layout))):
        try:
            res = fn()
            dms[route] = _samples_dict(res)
            if res.info.get("residual_rms") is not None:
                out.setdefault("diagnostics", {})[route] = {
                    k: v for k, v in res.info.items() if k != "method"}
        except StrainModalError as exc:
            errors[route] = f"{type(exc).__name__}: {exc}"
    out["dms"] = dms
    out["fit_status"] = "ok" if "physics" in dms else "failed"
    if errors:
        out["errors"] = errors
    return out


def fit_shapes(entries: list[ModeEntry], config: PipelineConfig) -> list[dict]:
    if config.layout is None:
        raise ValidationError("config has no 'layout'; fit-shapes needs the span geometry")
    return [fit_mode(e, config.layout, config, k) for k, e in enumerate(entries, start=1)]


# --------------------------------------------------------------------------
# comparison
# --------------------------------------------------------------------------


def _reference_dms(entry: ModeEntry):
    """Callable giving a set's reference displacement shape on any grid."""
    if entry.shape_model is not None:
        return lambda x: eval_dms(entry.shape_model, x).values
    for route in ("truth", "physics", *entry.dms):
        if route in entry.dms:
            pos, vals = entry.dms[route]
            return lambda x, p=pos, v=vals: _resample(p, v, x)
    if entry.shape_kind == "DMS":
        return lambda x: _resample(entry.positions_m, to_real_shape(entry.shape), x)
    return None


def _route_dms(entry: ModeEntry, route: str):
    if route == "physics" and entry.shape_model is not None and "physics" in entry.dms:
        return lambda x: eval_dms(entry.shape_model, x).values
    if route in entry.dms:
        pos, vals = entry.dms[route]
        return lambda x: _resample(pos, vals, x)
    return None


def _resample(positions, values, x):
    x = np.asarray(x, dtype=float)
    if positions.size == x.size and np.allclose(positions, x, atol=1e-9):
        return np.asarray(values, dtype=float)
    return np.interp(x, positions, values)


def _grid(entries_a, entries_b):
    """Common comparison grid: the sparser set's shape positions."""
    pa, pb = entries_a[0].positions_m, entries_b[0].positions_m
    return pa if pa.size <= pb.size else pb


@dataclass
class CompareResult:
    comparison: ModalComparison
    route_macs: dict = field(default_factory=dict)
    improvements: dict = field(default_factory=dict)
    grid: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "comparison": self.comparison.to_dict(),
            "route_mean_mac": self.route_macs,
            "improvement_percent": self.improvements,
            "grid_m": self.grid,
        }


def compare_sets(set_a: list[ModeEntry], set_b: list[ModeEntry]) -> CompareResult:
    """Pair two mode sets and score every displacement route.

    Modes are paired on their stored shapes when both sets share positions
    and shape kind, otherwise on displacement shapes brought to the sparser
    grid (fitted models are evaluated there, sampled shapes interpolated).
    Route scores use whichever set carries several DMS routes against the
    other set's reference shape.
    """
    if not set_a or not set_b:
        raise ValidationError("both mode sets must be non-empty")
    same_grid = (set_a[0].positions_m.size == set_b[0].positions_m.size
                 and np.allclose(set_a[0].positions_m, set_b[0].positions_m)
                 and set_a[0].shape_kind == set_b[0].shape_kind)
    grid = _grid(set_a, set_b)
    if same_grid:
        comparison = pair_modes(set_a, set_b)
    else:
        ref_a = [_reference_dms(e) for e in set_a]
        ref_b = [_reference_dms(e) for e in set_b]
        if any(r is None for r in ref_a + ref_b):
            raise ValidationError(
                "mode sets use different grids or shape kinds and at least one lacks "
                "displacement shapes; run fit-shapes first"
            )
        comparison = pair_modes(set_a, set_b, [r(grid) for r in ref_a], [r(grid) for r in ref_b])

    routes_in = lambda s: [r for r in ROUTES if any(_route_dms(e, r) for e in s)]
    multi, ref, flip = set_a, set_b, False
    if len(routes_in(set_b)) > len(routes_in(set_a)):
        multi, ref, flip = set_b, set_a, True
    route_macs = {}
    for route in routes_in(multi):
        values = []
        for p in comparison.pairs:
            i_multi, i_ref = (p.index_b, p.index_a) if flip else (p.index_a, p.index_b)
            f_route = _route_dms(multi[i_multi], route)
            f_ref = _reference_dms(ref[i_ref])
            if f_route is None or f_ref is None:
                continue
            values.append(mac(f_route(grid), f_ref(grid)))
        if values:
            route_macs[route] = float(np.mean(values))
    improvements = {}
    if "physics" in route_macs:
        for base in BASELINES:
            if base in route_macs and route_macs[base] > 0:
                improvements[f"physics_vs_{base}"] = improvement(route_macs["physics"], route_macs[base])
    return CompareResult(comparison, route_macs, improvements, grid)
