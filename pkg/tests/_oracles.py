"""Independent reference computations shared by the tests."""
import numpy as np


def sine_fit(t, y, freq):
    """Least-squares amplitude and phase of a known-frequency sinusoid."""
    X = np.column_stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t), np.ones_like(t)])
    (a, b, _), *_ = np.linalg.lstsq(X, y, rcond=None)
    return np.hypot(a, b), np.arctan2(b, a)


def strain_formula(spans, d, betas, constants, x):
    """Piecewise strain shape written out term by term with ``math``."""
    import math

    out = []
    for xi in x:
        start, k = 0.0, 0
        while k < len(spans) - 1 and xi >= start + spans[k]:
            start += spans[k]
            k += 1
        l, b = xi - start, betas[k]
        c1, c2, c3, c4 = constants[k]
        out.append(-d * b * b * (-c1 * math.sin(b * l) - c2 * math.cos(b * l)
                                 + c3 * math.sinh(b * l) + c4 * math.cosh(b * l)))
    return np.array(out)


def cubic_strain_displacement(a, d, L, x):
    """Exact zero-end displacement for strain ``a0 + a1 x + a2 x^2 + a3 x^3``
    on ``[0, L]``: integrate curvature ``-strain/d`` twice by hand."""
    a0, a1, a2, a3 = a
    F = lambda s: -(a0 * s**2 / 2 + a1 * s**3 / 6 + a2 * s**4 / 12 + a3 * s**5 / 20) / d
    return F(x) - F(L) * x / L
