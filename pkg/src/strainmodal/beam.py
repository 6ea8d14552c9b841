"""Multi-span Euler-Bernoulli mode shapes and strain-to-displacement integration.

On span ``k`` with local coordinate ``0 <= l <= l_k`` the displacement mode
shape is the homogeneous beam solution::

    w(l) = C1 sin(b l) + C2 cos(b l) + C3 sinh(b l) + C4 cosh(b l)

and the strain seen by a fiber a distance ``d`` from the neutral axis is
``-d w''(l)``, i.e.::

    strain(l) = -d b^2 (-C1 sin(b l) - C2 cos(b l) + C3 sinh(b l) + C4 cosh(b l))

Support conditions (zero displacement at every support, continuous rotation
and bending moment across interior supports, zero moment at the two
simply-supported ends) give ``4K`` linear equations in the ``4K`` constants.
Nontrivial shapes exist only where that matrix is singular; its null vector
fixes the constants up to scale.  Fitting a measured strain shape is a 1-D
search over ``b`` with the constants taken from the (near) null space.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize_scalar

from .errors import (
    DegenerateShape,
    FitDegenerate,
    IllConditionedFit,
    InsufficientSamples,
    PositionOutOfRange,
    RootsNotFound,
    ValidationError,
)

__all__ = [
    "SpanLayout",
    "ShapeModel",
    "ModeShapeSamples",
    "FitResult",
    "normalize_real_shape",
    "to_real_shape",
    "sms_values",
    "dms_values",
    "eval_sms",
    "eval_dms",
    "assemble_bc_matrix",
    "bc_sigma_min",
    "find_characteristic_roots",
    "constants_for_beta",
    "fit_sms",
    "dms_via_trapezoid",
    "dms_via_polynomial",
]

POSITION_TOL = 1e-9
ROOT_TOL = 1e-9
DEGENERATE_OBJECTIVE = 0.5
VANDERMONDE_COND_MAX = 1e12


@dataclass(frozen=True)
class SpanLayout:
    span_lengths_m: tuple
    fiber_offset_m: float = 0.5
    end_condition: str = "simply_supported"

    def __post_init__(self):
        spans = tuple(float(v) for v in np.atleast_1d(self.span_lengths_m))
        object.__setattr__(self, "span_lengths_m", spans)
        if not spans:
            raise ValidationError("layout needs at least one span")
        if any(not (v > 0 and np.isfinite(v)) for v in spans):
            raise ValidationError(f"span lengths must be positive, got {spans}")
        if not self.fiber_offset_m > 0:
            raise ValidationError("fiber offset d must be positive")
        if self.end_condition != "simply_supported":
            raise ValidationError(f"unsupported end condition {self.end_condition!r}")

    @property
    def n_spans(self) -> int:
        return len(self.span_lengths_m)

    @property
    def supports_m(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.span_lengths_m)])

    @property
    def total_length_m(self) -> float:
        return float(self.supports_m[-1])

    def locate(self, positions):
        """Span index and local coordinate for global positions."""
        x = np.atleast_1d(np.asarray(positions, dtype=float))
        total = self.total_length_m
        if np.any(x < -POSITION_TOL) or np.any(x > total + POSITION_TOL):
            raise PositionOutOfRange(f"positions must lie within [0, {total}] m")
        sup = self.supports_m
        k = np.clip(np.searchsorted(sup, x, side="right") - 1, 0, self.n_spans - 1)
        lengths = np.asarray(self.span_lengths_m)
        local = np.clip(x - sup[k], 0.0, lengths[k])
        return k, local

    def samples_in_span(self, positions, k: int) -> np.ndarray:
        """Boolean mask of positions lying on span ``k`` (supports included)."""
        x = np.asarray(positions, dtype=float)
        lo, hi = self.supports_m[k], self.supports_m[k + 1]
        return (x >= lo - POSITION_TOL) & (x <= hi + POSITION_TOL)

    def to_dict(self) -> dict:
        return {"spans": list(self.span_lengths_m), "d": self.fiber_offset_m,
                "end_condition": self.end_condition}

    @classmethod
    def from_dict(cls, data: dict) -> "SpanLayout":
        return cls(tuple(data["spans"]), float(data["d"]),
                   data.get("end_condition", "simply_supported"))


@dataclass(frozen=True)
class ShapeModel:
    beta_per_span: tuple
    constants: np.ndarray
    layout: SpanLayout
    mode_index: int = 1

    def __post_init__(self):
        betas = tuple(float(b) for b in np.atleast_1d(self.beta_per_span))
        if len(betas) == 1 and self.layout.n_spans > 1:
            betas = betas * self.layout.n_spans
        if len(betas) != self.layout.n_spans or any(b <= 0 for b in betas):
            raise ValidationError("need one positive beta per span")
        consts = np.array(self.constants, dtype=float).reshape(self.layout.n_spans, 4)
        consts.setflags(write=False)
        object.__setattr__(self, "beta_per_span", betas)
        object.__setattr__(self, "constants", consts)

    @property
    def shared_beta(self) -> bool:
        return len(set(self.beta_per_span)) == 1

    def to_dict(self) -> dict:
        return {
            "mode_index": self.mode_index,
            "beta": list(self.beta_per_span),
            "constants": self.constants.tolist(),
            "layout": self.layout.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ShapeModel":
        layout = SpanLayout.from_dict(data["layout"])
        return cls(tuple(data["beta"]), np.array(data["constants"]), layout,
                   int(data.get("mode_index", 1)))


@dataclass(frozen=True)
class ModeShapeSamples:
    positions_m: np.ndarray
    values: np.ndarray
    kind: str = "SMS"
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pos = np.array(self.positions_m, dtype=float).ravel()
        vals = np.asarray(self.values).ravel()
        if pos.size != vals.size:
            raise ValidationError("positions and values differ in length")
        if pos.size > 1 and np.any(np.diff(pos) <= 0):
            raise ValidationError("shape positions must be strictly increasing")
        if self.kind not in ("SMS", "DMS"):
            raise ValidationError(f"kind must be SMS or DMS, got {self.kind!r}")
        object.__setattr__(self, "positions_m", pos)
        object.__setattr__(self, "values", vals)

    def normalized(self) -> "ModeShapeSamples":
        return ModeShapeSamples(self.positions_m, normalize_real_shape(self.values),
                                self.kind, dict(self.info))


@dataclass(frozen=True)
class FitResult:
    model: ShapeModel
    beta: float
    objective: float
    residual_rms: float
    sigma_min: float


def normalize_real_shape(values) -> np.ndarray:
    """Max-abs = 1 with a positive sign at the largest-magnitude entry."""
    v = np.asarray(values, dtype=float)
    if v.size == 0 or not np.any(v):
        raise DegenerateShape("cannot normalize an all-zero shape")
    k = int(np.argmax(np.abs(v)))
    return v / v[k]


def to_real_shape(shape) -> np.ndarray:
    """Rotate a complex shape by the phase that maximizes its real-part norm
    and return the real part."""
    z = np.asarray(shape)
    if not np.iscomplexobj(z):
        return z.astype(float)
    theta = -0.5 * np.angle(np.sum(z * z))
    return np.real(z * np.exp(1j * theta))


# --------------------------------------------------------------------------
# shape evaluation
# --------------------------------------------------------------------------


def _basis(beta, local, derivative: int = 0) -> np.ndarray:
    """Rows of [sin, cos, sinh, cosh] derivatives, shape (n, 4)."""
    bl = beta * local
    s, c, sh, ch = np.sin(bl), np.cos(bl), np.sinh(bl), np.cosh(bl)
    if derivative == 0:
        cols = (s, c, sh, ch)
    elif derivative == 1:
        cols = (beta * c, -beta * s, beta * ch, beta * sh)
    elif derivative == 2:
        cols = (-beta**2 * s, -beta**2 * c, beta**2 * sh, beta**2 * ch)
    else:
        raise ValueError("derivative must be 0, 1 or 2")
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def _evaluate(model: ShapeModel, positions, derivative: int) -> np.ndarray:
    k, local = model.layout.locate(positions)
    betas = np.asarray(model.beta_per_span)[k]
    rows = _basis(betas, local, derivative)
    return np.einsum("ij,ij->i", rows, model.constants[k])


def sms_values(model: ShapeModel, positions) -> np.ndarray:
    """Unnormalized modal strain ``-d w''`` at global positions."""
    return -model.layout.fiber_offset_m * _evaluate(model, positions, 2)


def dms_values(model: ShapeModel, positions) -> np.ndarray:
    """Unnormalized modal displacement ``w`` at global positions."""
    return _evaluate(model, positions, 0)


def eval_sms(model: ShapeModel, positions, normalize: bool = True) -> ModeShapeSamples:
    vals = sms_values(model, positions)
    if normalize:
        vals = normalize_real_shape(vals)
    return ModeShapeSamples(positions, vals, "SMS")


def eval_dms(model: ShapeModel, positions, normalize: bool = True) -> ModeShapeSamples:
    vals = dms_values(model, positions)
    if normalize:
        vals = normalize_real_shape(vals)
    return ModeShapeSamples(positions, vals, "DMS")


# --------------------------------------------------------------------------
# boundary conditions and characteristic roots
# --------------------------------------------------------------------------


def _betas(layout: SpanLayout, beta) -> np.ndarray:
    b = np.atleast_1d(np.asarray(beta, dtype=float))
    if b.size == 1:
        b = np.full(layout.n_spans, b[0])
    if b.size != layout.n_spans or np.any(b <= 0):
        raise ValidationError("need one positive beta per span")
    return b


def assemble_bc_matrix(layout: SpanLayout, beta) -> np.ndarray:
    """``4K x 4K`` support-condition matrix acting on stacked (C1..C4) per span.

    Row blocks: zero displacement at both ends of every span (2K), rotation
    continuity at interior supports (K-1), moment continuity at interior
    supports (K-1), zero moment at the two exterior ends (2).  Rotation rows
    are divided by beta and moment rows by beta**2 so every row is
    dimensionless; this does not change the null space.
    """
    b = _betas(layout, beta)
    K = layout.n_spans
    L = layout.span_lengths_m
    B = np.zeros((4 * K, 4 * K))
    row = 0
    for k in range(K):
        B[row, 4 * k:4 * k + 4] = _basis(b[k], 0.0)
        B[row + 1, 4 * k:4 * k + 4] = _basis(b[k], L[k])
        row += 2
    for k in range(K - 1):
        B[row, 4 * k:4 * k + 4] = _basis(b[k], L[k], 1) / b[k]
        B[row, 4 * k + 4:4 * k + 8] = -_basis(b[k + 1], 0.0, 1) / b[k]
        row += 1
    for k in range(K - 1):
        B[row, 4 * k:4 * k + 4] = _basis(b[k], L[k], 2) / b[k] ** 2
        B[row, 4 * k + 4:4 * k + 8] = -_basis(b[k + 1], 0.0, 2) / b[k] ** 2
        row += 1
    B[row, 0:4] = _basis(b[0], 0.0, 2) / b[0] ** 2
    B[row + 1, 4 * K - 4:4 * K] = _basis(b[-1], L[-1], 2) / b[-1] ** 2
    return B


def _balancing(layout: SpanLayout, b: np.ndarray) -> np.ndarray:
    """Block-diagonal change of variables from (C1, C2, a, e) to (C1..C4).

    ``C3 sinh(bl) + C4 cosh(bl) = a exp(b(l - L)) + e exp(-bl)``, so the
    new hyperbolic columns are bounded by one on every span.
    """
    K = layout.n_spans
    T = np.zeros((4 * K, 4 * K))
    for k in range(K):
        g = np.exp(-b[k] * layout.span_lengths_m[k])
        T[4 * k:4 * k + 4, 4 * k:4 * k + 4] = [[1, 0, 0, 0], [0, 1, 0, 0],
                                               [0, 0, g, -1], [0, 0, g, 1]]
    return T


def _balanced_bc(layout: SpanLayout, b: np.ndarray):
    T = _balancing(layout, b)
    return assemble_bc_matrix(layout, b) @ T, T


def bc_sigma_min(layout: SpanLayout, beta, balanced: bool = False) -> float:
    """Smallest singular value of the support-condition matrix."""
    b = _betas(layout, beta)
    B = _balanced_bc(layout, b)[0] if balanced else assemble_bc_matrix(layout, b)
    return float(np.linalg.svd(B, compute_uv=False)[-1])


def find_characteristic_roots(layout: SpanLayout, beta_range, n_roots: int,
                              n_grid: int = 4000) -> list[float]:
    """First ``n_roots`` shared-beta values where the support matrix is singular.

    The smallest singular value of the balanced matrix is scanned on a
    uniform grid, each interior local minimum is refined by golden-section
    search, and only minima that reach ``ROOT_TOL`` are kept.
    """
    lo, hi = (float(v) for v in beta_range)
    if not (0 < lo < hi):
        raise ValidationError(f"bad beta range {beta_range}")
    n_grid = max(int(n_grid), 2001)
    grid = np.linspace(lo, hi, n_grid)
    sig = np.array([bc_sigma_min(layout, g, balanced=True) for g in grid])
    f = lambda g: bc_sigma_min(layout, g, balanced=True)
    roots = []
    for k in range(1, n_grid - 1):
        if not (sig[k] < sig[k - 1] and sig[k] <= sig[k + 1]):
            continue
        res = minimize_scalar(f, bracket=(grid[k - 1], grid[k], grid[k + 1]),
                              method="golden", options={"xtol": 1e-14})
        if res.fun < ROOT_TOL:
            roots.append(float(res.x))
            if len(roots) == n_roots:
                break
    if len(roots) < n_roots:
        raise RootsNotFound(
            f"found {len(roots)} characteristic roots in [{lo}, {hi}], {n_roots} requested"
        )
    return roots


def _span_null_space(layout: SpanLayout, b: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Block-diagonal basis (balanced variables) with zero support displacement."""
    K = layout.n_spans
    N = np.zeros((4 * K, 2 * K))
    for k in range(K):
        D = np.vstack([_basis(b[k], 0.0), _basis(b[k], layout.span_lengths_m[k])])
        D = D @ T[4 * k:4 * k + 4, 4 * k:4 * k + 4]
        N[4 * k:4 * k + 4, 2 * k:2 * k + 2] = sla.null_space(D)
    return N


def constants_for_beta(layout: SpanLayout, beta) -> np.ndarray:
    """Constants (K x 4) best satisfying the support conditions at ``beta``.

    Zero displacement at every support is imposed exactly; among those shapes
    the one with the smallest rotation/moment residual is returned (unit norm
    in balanced coordinates).  At a characteristic root this is the exact
    null vector.
    """
    b = _betas(layout, beta)
    K = layout.n_spans
    Bh, T = _balanced_bc(layout, b)
    N = _span_null_space(layout, b, T)
    rest = Bh[2 * K:] @ N
    v = np.linalg.svd(rest)[2][-1]
    return (T @ (N @ v)).reshape(K, 4)


def _model(layout, beta, constants, mode_index, positions, reference=None) -> ShapeModel:
    """Scale constants to unit max strain at ``positions``; fix the sign so the
    strain correlates positively with ``reference`` (or is positive at its
    largest entry)."""
    raw = ShapeModel((beta,), constants, layout, mode_index)
    strain = sms_values(raw, positions)
    peak = np.max(np.abs(strain))
    if peak == 0:
        raise DegenerateShape("shape function vanishes at every sample position")
    sign = np.sign(strain @ reference) if reference is not None else np.sign(
        strain[np.argmax(np.abs(strain))])
    sign = sign or 1.0
    return ShapeModel((beta,), constants * (sign / peak), layout, mode_index)


def model_for_root(layout: SpanLayout, beta: float, mode_index: int = 1,
                   positions=None) -> ShapeModel:
    """Exact mode at a characteristic root, normalized on ``positions``
    (default: 1 cm grid)."""
    if positions is None:
        positions = np.linspace(0, layout.total_length_m,
                                int(round(layout.total_length_m * 100)) + 1)
    return _model(layout, beta, constants_for_beta(layout, beta), mode_index, positions)


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


def _check_samples(measured: ModeShapeSamples, layout: SpanLayout, minimum: int):
    layout.locate(measured.positions_m)
    for k in range(layout.n_spans):
        n = int(layout.samples_in_span(measured.positions_m, k).sum())
        if n < minimum:
            raise InsufficientSamples(f"span {k + 1} has {n} samples, need {minimum}")


def fit_sms(measured: ModeShapeSamples, layout: SpanLayout, beta_hint: float | None = None,
            *, mode_index: int = 1, scan_factor: float | None = None,
            n_grid: int = 400) -> FitResult:
    """Fit the physics-guided strain shape to measured strain samples.

    Without ``beta_hint`` the search covers
    ``[0.3, 1.5] * mode_index * pi / L_total * scan_factor`` with
    ``scan_factor`` defaulting to the number of spans (the first modes of a
    K-span beam sit near the single-span fundamental).  With a hint the
    search covers +-20 % around it.  The objective is
    ``1 - correlation**2`` between predicted and measured strain.
    """
    if measured.kind != "SMS":
        raise ValidationError("fit_sms expects strain mode shape samples")
    _check_samples(measured, layout, 8)
    x = measured.positions_m
    y = to_real_shape(measured.values)
    yy = float(y @ y)
    if yy == 0:
        raise FitDegenerate("measured strain shape is identically zero")

    def objective(beta):
        c = constants_for_beta(layout, beta)
        p = sms_values(ShapeModel((beta,), c, layout), x)
        pp = float(p @ p)
        if pp == 0:
            return 1.0
        # equals 1 - corr**2, but keeps precision near a perfect fit
        r = y - (float(p @ y) / pp) * p
        return float(r @ r) / yy

    if beta_hint is not None:
        lo, hi = 0.8 * beta_hint, 1.2 * beta_hint
    else:
        factor = layout.n_spans if scan_factor is None else scan_factor
        base = mode_index * np.pi / layout.total_length_m * factor
        lo, hi = 0.3 * base, 1.5 * base
    grid = np.linspace(lo, hi, max(int(n_grid), 3))
    vals = np.array([objective(g) for g in grid])
    k = int(np.argmin(vals))
    if 0 < k < grid.size - 1:
        res = minimize_scalar(objective, bracket=(grid[k - 1], grid[k], grid[k + 1]),
                              method="golden", options={"xtol": 1e-12})
    else:
        a, b = (grid[0], grid[1]) if k == 0 else (grid[-2], grid[-1])
        res = minimize_scalar(objective, bounds=(a, b), method="bounded",
                              options={"xatol": 1e-12 * b})
    beta, obj = (float(res.x), float(res.fun)) if res.fun <= vals[k] else (float(grid[k]), float(vals[k]))
    if obj > DEGENERATE_OBJECTIVE:
        raise FitDegenerate(f"best objective {obj:.3f} at beta={beta:.5g}: shape function "
                            "cannot explain the measured strain")
    model = _model(layout, beta, constants_for_beta(layout, beta), mode_index, x, reference=y)
    pred = sms_values(model, x)
    target = normalize_real_shape(y)
    alpha = float(pred @ target) / float(pred @ pred)
    residual = float(np.sqrt(np.mean((alpha * pred - target) ** 2)))
    return FitResult(model, beta, obj, residual, bc_sigma_min(layout, beta))


# --------------------------------------------------------------------------
# baseline integrators
# --------------------------------------------------------------------------


def _span_grid(x, e, lo, hi):
    """Add support points (strain linearly extrapolated) when missing."""
    added_lo = abs(x[0] - lo) > POSITION_TOL
    added_hi = abs(x[-1] - hi) > POSITION_TOL
    if added_lo:
        e0 = e[0] + (e[1] - e[0]) * (lo - x[0]) / (x[1] - x[0])
        x, e = np.concatenate([[lo], x]), np.concatenate([[e0], e])
    if added_hi:
        e1 = e[-1] + (e[-1] - e[-2]) * (hi - x[-1]) / (x[-1] - x[-2])
        x, e = np.concatenate([x, [hi]]), np.concatenate([e, [e1]])
    keep = slice(1 if added_lo else 0, -1 if added_hi else None)
    return x, e, keep


def dms_via_trapezoid(measured: ModeShapeSamples, layout: SpanLayout,
                      normalize: bool = True) -> ModeShapeSamples:
    """Baseline: cumulative trapezoidal double integration of curvature.

    Per span, curvature ``-strain/d`` is integrated twice from the left
    support and the linear function that zeroes the displacement at both
    supports is subtracted.
    """
    _check_samples(measured, layout, 3)
    x_all = measured.positions_m
    e_all = to_real_shape(measured.values)
    out = np.zeros_like(x_all)
    sup = layout.supports_m
    for k in range(layout.n_spans):
        sel = np.flatnonzero(layout.samples_in_span(x_all, k))
        x, e, keep = _span_grid(x_all[sel], e_all[sel], sup[k], sup[k + 1])
        kappa = -e / layout.fiber_offset_m
        w = cumulative_trapezoid(cumulative_trapezoid(kappa, x, initial=0.0), x, initial=0.0)
        w -= w[0] + (w[-1] - w[0]) * (x - x[0]) / (x[-1] - x[0])
        out[sel] = w[keep]
    if normalize:
        out = normalize_real_shape(out)
    return ModeShapeSamples(x_all, out, "DMS", {"method": "trapezoid"})


def dms_via_polynomial(measured: ModeShapeSamples, layout: SpanLayout, degree: int = 4,
                       normalize: bool = True) -> ModeShapeSamples:
    """Baseline: per-span polynomial fit of strain, integrated analytically.

    Positions are mapped to [-1, 1] on each span before the least-squares
    fit.  ``info`` carries the relative residual RMS of the strain fit and
    the worst Vandermonde condition number.
    """
    degree = int(degree)
    if degree < 1:
        raise ValidationError("polynomial degree must be at least 1")
    _check_samples(measured, layout, degree + 1)
    P = np.polynomial.polynomial
    x_all = measured.positions_m
    e_all = to_real_shape(measured.values)
    out = np.zeros_like(x_all)
    resid = np.zeros_like(x_all)
    sup = layout.supports_m
    worst_cond = 0.0
    for k in range(layout.n_spans):
        sel = np.flatnonzero(layout.samples_in_span(x_all, k))
        half = layout.span_lengths_m[k] / 2
        u = (x_all[sel] - sup[k]) / half - 1.0
        V = P.polyvander(u, degree)
        cond = float(np.linalg.cond(V))
        worst_cond = max(worst_cond, cond)
        if cond > VANDERMONDE_COND_MAX:
            raise IllConditionedFit(f"span {k + 1}: Vandermonde condition {cond:.3g}")
        coef, *_ = np.linalg.lstsq(V, e_all[sel], rcond=None)
        resid[sel] = V @ coef - e_all[sel]
        # d2w/du2 = half**2 * (-strain / d)
        w = P.polyint(-coef / layout.fiber_offset_m * half**2, 2)
        wm, wp = P.polyval(-1.0, w), P.polyval(1.0, w)
        w = P.polyadd(w, [-(wp + wm) / 2, -(wp - wm) / 2])
        out[sel] = P.polyval(u, w)
    scale = np.sqrt(np.mean(e_all**2))
    info = {
        "method": "polynomial",
        "degree": degree,
        "residual_rms": float(np.sqrt(np.mean(resid**2)) / scale) if scale else 0.0,
        "condition": worst_cond,
    }
    if normalize:
        out = normalize_real_shape(out)
    return ModeShapeSamples(x_all, out, "DMS", info)
