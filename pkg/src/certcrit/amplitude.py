"""String amplitudes as critical-point sums of reciprocal toric-Hessian
determinants over positive charts, with closed-form oracles for
cross-checking.

The value returned is (-1)^d * sum over the critical set of 1/det(H) where
H is the matrix of second Euler derivatives of the chart potential and d
the chart dimension; the sign exponent reconciles the volume formula with
the worked low-dimensional cases.  The sum is computed with compensated
accumulation because the terms of large models cancel heavily.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .models import ModelSpec
from .program import compiled

__all__ = ["AmplitudeResult", "AmplitudeError", "amplitude", "oracle_amplitude"]


class AmplitudeError(ValueError):
    pass


@dataclass
class AmplitudeResult:
    value: float
    n_points: int
    dim: int                      # sign convention exponent
    imag_residual: float          # |Im(sum)| / |sum|, conjugate-pair check
    determinants: Optional[np.ndarray]
    hypothesis: dict
    unreliable: bool
    notes: list


def _neumaier_sum(values: np.ndarray) -> complex:
    """Compensated summation; the terms cancel across orders of magnitude."""
    def kahan(parts):
        s = 0.0
        c = 0.0
        for v in parts:
            t = s + v
            if abs(s) >= abs(v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
        return s + c

    return complex(kahan(values.real), kahan(values.imag))


def amplitude(model: ModelSpec, data: dict, solutions: Optional[np.ndarray] = None,
              options=None, keep_determinants: bool = False) -> AmplitudeResult:
    """Critical-point sum for a model with a positive chart.

    ``solutions`` (chart coordinates) should be the complete critical set;
    when omitted, the base model is solved and the points are converted
    through the chart.  Zero coordinates or singular Hessians at critical
    points mark the result unreliable instead of aborting.
    """
    if model.chart is None:
        raise AmplitudeError(f"model {model.name} has no positive chart")
    from .inference import data_vector, solve_model

    s_target, _ = data_vector(model, data)
    notes = []
    if solutions is None:
        base = model.base_model or model
        sols = solve_model(base, data, options)
        if not sols.meta.get("complete", True):
            notes.append(f"solution set flagged incomplete: {sols.meta}")
        pts = sols.points
        if model.base_model is not None:
            pts = model.chart.from_base(pts)
    else:
        pts = np.atleast_2d(np.asarray(solutions, dtype=np.complex128))

    d = model.n_vars
    unreliable = False
    if np.any(np.abs(pts) < 1e-13):
        notes.append("critical point with zero chart coordinate")
        unreliable = True
    cp = compiled(model.potential())
    H = cp.toric_hessian(pts, s_target.astype(np.complex128))
    dets = np.linalg.det(H)
    bad = ~np.isfinite(dets) | (np.abs(dets) < 1e-300)
    if bad.any():
        notes.append(f"{int(bad.sum())} singular or non-finite Hessian determinants")
        unreliable = True
        dets = dets[~bad]
    total = _neumaier_sum(1.0 / dets) * (-1) ** d
    mag = abs(total)
    imag_res = abs(total.imag) / mag if mag > 0 else 0.0
    return AmplitudeResult(
        value=total.real,
        n_points=len(pts),
        dim=d,
        imag_residual=imag_res,
        determinants=dets if keep_determinants else None,
        hypothesis=model.chart.hypothesis_report(s_target),
        unreliable=unreliable,
        notes=notes,
    )


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(str(v))


def _safe_recip_product(factors) -> Fraction:
    prod = Fraction(1)
    for f in factors:
        if f == 0:
            raise AmplitudeError("pole: a denominator factor vanishes")
        prod *= f
    return Fraction(1) / prod


def oracle_amplitude(kind: str, s) -> Fraction:
    """Closed-form amplitudes for cross-checking the critical-point sum.

    kinds: "triangle" (full simplex on 3 states), "square" (binary
    independence, counts s00,s01,s10,s11), "associahedron_m6" (six-particle
    planar-tree sum over a completed Mandelstam matrix).
    """
    if kind == "triangle":
        s0, s1, s2 = (_frac(v) for v in s)
        return (_safe_recip_product([s0, s1]) + _safe_recip_product([s0, s2])
                + _safe_recip_product([s1, s2]))
    if kind == "square":
        if isinstance(s, dict):
            s00, s01, s10, s11 = (_frac(s[k]) for k in ("00", "01", "10", "11"))
        else:
            s00, s01, s10, s11 = (_frac(v) for v in s)
        total = s00 + s01 + s10 + s11
        denom = [(s00 + s01), (s10 + s11), (s00 + s10), (s01 + s11)]
        return total * total * _safe_recip_product(denom)
    if kind == "associahedron_m6":
        return _associahedron_m6(s)
    raise AmplitudeError(f"unknown oracle {kind!r}")


def _associahedron_m6(K) -> Fraction:
    """Planar-tree sum for six particles: fourteen trivalent-tree channels."""
    def sij(i, j):
        return _frac(K[i, j])

    def sijk(i, j, k):
        return sij(i, j) + sij(i, k) + sij(j, k)

    s12, s16, s23, s34, s45, s56 = (sij(1, 2), sij(1, 6), sij(2, 3),
                                    sij(3, 4), sij(4, 5), sij(5, 6))
    s123 = sijk(1, 2, 3)
    s234 = sijk(2, 3, 4)
    s345 = sijk(3, 4, 5)
    channels = [
        (s12, s34, s56), (s12, s56, s123), (s23, s56, s123), (s23, s56, s234),
        (s34, s56, s234), (s16, s23, s45), (s12, s34, s345), (s12, s45, s123),
        (s12, s45, s345), (s16, s23, s234), (s16, s34, s234), (s16, s34, s345),
        (s16, s45, s345), (s23, s45, s123),
    ]
    total = Fraction(0)
    for ch in channels:
        total += _safe_recip_product(ch)
    return total
