"""Modal comparison metrics: MAC, greedy mode pairing, frequency MAD."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivideByZeroBaseline, LengthMismatch, ZeroVector

__all__ = ["mac", "mac_matrix", "ModePair", "ModalComparison", "pair_modes", "improvement"]


def mac(shape_a, shape_b) -> float:
    """Modal assurance criterion ``|a^H b|^2 / ((a^H a)(b^H b))``."""
    a = np.asarray(shape_a).ravel()
    b = np.asarray(shape_b).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"shapes have lengths {a.size} and {b.size}")
    if a.size < 2:
        raise LengthMismatch("MAC needs at least two entries per shape")
    aa = np.vdot(a, a).real
    bb = np.vdot(b, b).real
    if aa == 0 or bb == 0:
        raise ZeroVector("MAC is undefined for a zero shape")
    value = abs(np.vdot(a, b)) ** 2 / (aa * bb)
    return float(min(max(value, 0.0), 1.0))


def mac_matrix(shapes_a, shapes_b) -> np.ndarray:
    return np.array([[mac(a, b) for b in shapes_b] for a in shapes_a])


@dataclass(frozen=True)
class ModePair:
    index_a: int
    index_b: int
    mac: float
    freq_a_hz: float
    freq_b_hz: float

    @property
    def abs_freq_diff_hz(self) -> float:
        return abs(self.freq_a_hz - self.freq_b_hz)


@dataclass
class ModalComparison:
    pairs: list[ModePair]
    unmatched_a: list[int] = field(default_factory=list)
    unmatched_b: list[int] = field(default_factory=list)

    @property
    def mean_mac(self) -> float:
        return float(np.mean([p.mac for p in self.pairs])) if self.pairs else float("nan")

    @property
    def mad_hz(self) -> float:
        if not self.pairs:
            return float("nan")
        return float(np.mean([p.abs_freq_diff_hz for p in self.pairs]))

    def to_dict(self) -> dict:
        return {
            "pairs": [
                {
                    "index_a": p.index_a,
                    "index_b": p.index_b,
                    "mac": p.mac,
                    "freq_a_hz": p.freq_a_hz,
                    "freq_b_hz": p.freq_b_hz,
                    "abs_freq_diff_hz": p.abs_freq_diff_hz,
                }
                for p in self.pairs
            ],
            "unmatched_a": list(self.unmatched_a),
            "unmatched_b": list(self.unmatched_b),
            "mean_mac": self.mean_mac,
            "mad_hz": self.mad_hz,
        }

    def table(self, label_a: str = "a", label_b: str = "b") -> str:
        """Plain-text table: Mode #, freq a, freq b, |diff|, MAC."""
        head = ["Mode #", f"Freq-{label_a} (Hz)", f"Freq-{label_b} (Hz)", "Abs diff (Hz)", "MAC"]
        rows = [
            [str(n + 1), f"{p.freq_a_hz:.3f}", f"{p.freq_b_hz:.3f}",
             f"{p.abs_freq_diff_hz:.3f}", f"{p.mac:.3f}"]
            for n, p in enumerate(self.pairs)
        ]
        rows.append(["mean", "", "", f"{self.mad_hz:.3f}", f"{self.mean_mac:.3f}"])
        widths = [max(len(r[c]) for r in [head, *rows]) for c in range(len(head))]
        fmt = lambda r: "  ".join(v.rjust(w) for v, w in zip(r, widths))
        return "\n".join([fmt(head), "  ".join("-" * w for w in widths), *map(fmt, rows)])


def pair_modes(set_a, set_b, shapes_a=None, shapes_b=None) -> ModalComparison:
    """Greedy one-to-one pairing of two mode sets by descending MAC.

    ``set_a``/``set_b`` are sequences of objects with ``frequency_hz`` and
    ``shape`` attributes.  ``shapes_a``/``shapes_b`` override the shapes used
    for MAC (e.g. when both sets must first be brought onto a common grid).
    Ties in MAC go to the smaller frequency difference, then to lower indices,
    so the result does not depend on input order beyond mode identity.  Pairs
    are returned sorted by the frequency of ``set_a``.
    """
    fa = np.array([float(m.frequency_hz) for m in set_a])
    fb = np.array([float(m.frequency_hz) for m in set_b])
    sa = [m.shape for m in set_a] if shapes_a is None else list(shapes_a)
    sb = [m.shape for m in set_b] if shapes_b is None else list(shapes_b)
    macs = mac_matrix(sa, sb)
    candidates = sorted(
        ((macs[i, j], abs(fa[i] - fb[j]), fa[i], fb[j], i, j)
         for i in range(len(fa)) for j in range(len(fb))),
        key=lambda c: (-c[0], c[1], c[2], c[3]),
    )
    used_a, used_b, pairs = set(), set(), []
    for value, _, _, _, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append(ModePair(i, j, float(value), float(fa[i]), float(fb[j])))
    pairs.sort(key=lambda p: (p.freq_a_hz, p.freq_b_hz))
    return ModalComparison(
        pairs,
        unmatched_a=[i for i in range(len(fa)) if i not in used_a],
        unmatched_b=[j for j in range(len(fb)) if j not in used_b],
    )


def improvement(mac_ours: float, mac_baseline: float) -> float:
    """Relative improvement in percent, ``(ours - baseline) / baseline * 100``."""
    if not mac_baseline > 0:
        raise DivideByZeroBaseline(f"baseline MAC must be positive, got {mac_baseline}")
    return (mac_ours - mac_baseline) / mac_baseline * 100.0
