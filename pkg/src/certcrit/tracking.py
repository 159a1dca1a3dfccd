"""Adaptive predictor-corrector tracking for straight-line parameter homotopies.

The homotopy is s(t) = (1-t) s_start + t s_target.  The predictor is a
classical fourth-order explicit step on the implicit-function ODE
dx/dt = -J_x^{-1} J_s (s_target - s_start); since gradient systems are
linear in the parameters, J_s (s_target - s_start) is exactly F evaluated at
the difference vector, so predictor and corrector share one structured
evaluation.  All paths of a batch advance together with individual t and
step size, which lets the expression programs run vectorized.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .expr import RationalSystem
from .program import CompiledPotential, compiled
from .solutions import SolutionSet, SolutionRegistry

__all__ = ["TrackerOptions", "PathStatus", "PathOutcome", "track_path",
           "parameter_homotopy", "newton_polish"]


class PathStatus(enum.Enum):
    SUCCESS = "success"
    CORRECTOR_FAILURE = "corrector-failure"
    DIVERGED = "diverged"
    SINGULAR = "singular-evaluation"
    STEP_UNDERFLOW = "step-underflow"


@dataclass
class TrackerOptions:
    tol: float = 1e-11                 # corrector tolerance on the scaled residual
    max_corrector_iters: int = 3
    initial_step: float = 0.05
    min_step: float = 1e-12
    step_growth: float = 2.0
    growth_after: int = 4              # consecutive successes before growing
    step_shrink: float = 0.5
    max_steps: int = 10_000
    divergence_bound: float = 1e10
    field: str = "complex"             # "complex" or "real"
    max_step: float = 0.5
    # A step is rejected when the corrector moves farther than this fraction
    # of the predicted displacement; guards against hopping onto nearby paths.
    corrector_trust: float = 0.5

    def __post_init__(self):
        if not 0 < self.min_step < self.initial_step <= 1:
            raise ValueError("need 0 < min_step < initial_step <= 1")
        if not self.step_shrink < 1 < self.step_growth:
            raise ValueError("need shrink < 1 < growth")
        if self.field not in ("complex", "real"):
            raise ValueError("field must be 'complex' or 'real'")


@dataclass
class PathOutcome:
    status: PathStatus
    point: np.ndarray
    residual: float
    steps: int
    t_reached: float


_CODE = {0: None, 1: PathStatus.SUCCESS, 2: PathStatus.CORRECTOR_FAILURE,
         3: PathStatus.DIVERGED, 4: PathStatus.SINGULAR, 5: PathStatus.STEP_UNDERFLOW}


def _compiled_for(system: RationalSystem) -> CompiledPotential:
    if system.potential is None:
        raise ValueError("tracking requires a gradient system built from a potential")
    return compiled(system.potential)


def _solve(J: np.ndarray, F: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(J, F[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.full_like(F, np.inf)
        for i in range(len(F)):
            try:
                out[i] = np.linalg.solve(J[i], F[i])
            except np.linalg.LinAlgError:
                pass
        return out


def _scaled_residual(F: np.ndarray, s: np.ndarray) -> np.ndarray:
    scale = np.maximum(1.0, np.max(np.abs(s), axis=-1))
    with np.errstate(invalid="ignore"):
        r = np.max(np.abs(F), axis=-1) / scale
    return np.where(np.isfinite(r), r, np.inf)


def newton_polish(cp: CompiledPotential, points: np.ndarray, s: np.ndarray,
                  iters: int = 3, tol: float = 1e-13):
    """A few Newton steps on every point; returns (points, residuals, moved).

    ``moved`` is the total scaled displacement, used by callers to reject
    points whose polish wanders off (path-jumping hygiene).
    """
    x = np.atleast_2d(np.array(points, dtype=np.complex128 if np.iscomplexobj(points)
                               or np.iscomplexobj(s) else np.float64))
    moved = np.zeros(len(x))
    res = None
    with np.errstate(all="ignore"):
        for _ in range(iters):
            F, J = cp.fj(x, s)
            res = _scaled_residual(F, s)
            active = res > tol
            if not active.any():
                break
            delta = _solve(J[active], F[active])
            bad = ~np.isfinite(delta).all(axis=1)
            delta[bad] = 0.0
            scale = np.maximum(1.0, np.max(np.abs(x[active]), axis=1))
            moved[active] += np.max(np.abs(delta), axis=1) / scale
            x[active] -= delta
        F = cp.f(x, s)
        res = _scaled_residual(F, s)
    return x, res, moved


def _track_engine(cp: CompiledPotential, starts: np.ndarray, s_start: np.ndarray,
                  s_target: np.ndarray, opts: TrackerOptions):
    dtype = np.float64 if opts.field == "real" else np.complex128
    B = len(starts)
    x = np.array(starts, dtype=dtype)
    s0 = np.asarray(s_start, dtype=dtype)
    s1 = np.asarray(s_target, dtype=dtype)
    ds = s1 - s0
    t = np.zeros(B)
    h = np.full(B, min(opts.initial_step, 1.0))
    code = np.zeros(B, dtype=np.int8)
    steps = np.zeros(B, dtype=np.int64)
    consec = np.zeros(B, dtype=np.int64)
    resid = np.full(B, np.inf)

    if np.allclose(ds, 0):
        F = cp.f(x, np.broadcast_to(s1, (B, len(s1))))
        resid = _scaled_residual(F, s1)
        code[:] = np.where(resid <= opts.tol * 10, 1, 2)
        return x, code, resid, steps, t + (code == 1)

    def rhs(xs, ts):
        S = s0 + ts[:, None] * ds
        F, J = cp.fj2(xs, S, np.broadcast_to(ds, S.shape))
        v = -_solve(J, F)
        return v

    with np.errstate(all="ignore"):
        while True:
            active = np.flatnonzero(code == 0)
            if len(active) == 0:
                break
            xa = x[active]
            ta = t[active]
            ha = np.minimum(np.minimum(h[active], opts.max_step), 1.0 - ta)
            final = ha >= (1.0 - ta) - 1e-15
            tn = np.where(final, 1.0, ta + ha)

            k1 = rhs(xa, ta)
            k2 = rhs(xa + (0.5 * ha)[:, None] * k1, ta + 0.5 * ha)
            k3 = rhs(xa + (0.5 * ha)[:, None] * k2, ta + 0.5 * ha)
            k4 = rhs(xa + ha[:, None] * k3, tn)
            xp = xa + (ha / 6.0)[:, None] * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

            Sn = s0 + tn[:, None] * ds
            xn = xp.copy()
            ok = np.zeros(len(active), dtype=bool)
            res = np.full(len(active), np.inf)
            for _ in range(opts.max_corrector_iters + 1):
                F, J = cp.fj(xn, Sn)
                res = _scaled_residual(F, Sn)
                ok = res <= opts.tol
                pend = ~ok & np.isfinite(res)
                if not pend.any():
                    break
                delta = _solve(J[pend], F[pend])
                delta[~np.isfinite(delta).all(axis=1)] = np.nan
                xn[pend] -= delta
            with np.errstate(invalid="ignore"):
                norms = np.max(np.abs(xn), axis=1)
                pred_dist = np.max(np.abs(xp - xa), axis=1)
                corr_dist = np.max(np.abs(xn - xp), axis=1)
            diverged = np.isfinite(norms) & (norms > opts.divergence_bound)
            trusted = corr_dist <= np.maximum(opts.corrector_trust * pred_dist,
                                              1e3 * opts.tol * np.maximum(1.0, norms))
            ok &= np.isfinite(xn).all(axis=1) & ~diverged & trusted

            gidx = active[ok]
            x[gidx] = xn[ok]
            t[gidx] = tn[ok]
            resid[gidx] = res[ok]
            consec[gidx] += 1
            grow = consec[gidx] >= opts.growth_after
            h[gidx[grow]] = h[gidx[grow]] * opts.step_growth
            consec[gidx[grow]] = 0
            done = tn[ok] >= 1.0
            code[gidx[done]] = 1

            bidx = active[~ok]
            code[bidx[diverged[~ok]]] = 3
            h[bidx] *= opts.step_shrink
            consec[bidx] = 0
            under = h[bidx] < opts.min_step
            if under.any():
                uidx = bidx[under]
                # Distinguish grazing a pole from plain corrector stagnation.
                P = cp.probabilities(x[uidx].astype(dtype))
                sscale = max(1.0, float(np.max(np.abs(s1))))
                near_pole = np.min(np.abs(P), axis=1) < 1e-10 * max(1.0, sscale)
                code[uidx] = np.where(near_pole, 4, 5)

            steps[active] += 1
            over = steps[active] >= opts.max_steps
            still = code[active] == 0
            code[active[over & still]] = 2

    return x, code, resid, steps, t


def track_path(system: RationalSystem, start_point: Sequence, s_start: Sequence,
               s_target: Sequence, options: TrackerOptions | None = None) -> PathOutcome:
    """Track one solution path from s_start to s_target."""
    opts = options or TrackerOptions()
    cp = _compiled_for(system)
    _check_real_mode(system, opts, s_start, s_target)
    start = np.asarray(start_point, dtype=np.float64 if opts.field == "real"
                       else np.complex128).reshape(1, -1)
    F0 = cp.f(start, np.asarray(s_start, dtype=start.dtype))
    r0 = _scaled_residual(F0, np.asarray(s_start))[0]
    if not r0 <= opts.tol * 10:
        raise ValueError(f"start point is not a solution at s_start (residual {r0:.3e})")
    x, code, resid, steps, t = _track_engine(cp, start, np.asarray(s_start),
                                             np.asarray(s_target), opts)
    return PathOutcome(status=_CODE[int(code[0])] or PathStatus.CORRECTOR_FAILURE,
                       point=x[0], residual=float(resid[0]),
                       steps=int(steps[0]), t_reached=float(t[0]))


def _check_real_mode(system: RationalSystem, opts: TrackerOptions, *vectors):
    if opts.field != "real":
        return
    if not system.linear:
        raise ValueError("real-field tracking is only sound for linear models")
    for v in vectors:
        if np.iscomplexobj(np.asarray(v)) and np.any(np.asarray(v).imag != 0):
            raise ValueError("real-field tracking needs real parameter vectors")


def parameter_homotopy(system: RationalSystem, start_solutions: np.ndarray,
                       s_start: Sequence, s_target: Sequence,
                       options: TrackerOptions | None = None) -> SolutionSet:
    """Track every start solution to the target parameters.

    Failures are recorded as data, successes are deduplicated; the endpoint
    multiset is independent of the ordering of the starts.
    """
    opts = options or TrackerOptions()
    cp = _compiled_for(system)
    _check_real_mode(system, opts, s_start, s_target)
    starts = np.atleast_2d(np.asarray(start_solutions))
    s_start = np.asarray(s_start)
    s_target = np.asarray(s_target)
    if len(starts) == 0 or starts.size == 0:
        return SolutionSet(points=np.empty((0, system.n_vars), dtype=np.complex128),
                           parameters=s_target, residuals=np.empty(0),
                           meta={"tracked": 0, "succeeded": 0})

    x, code, resid, steps, t = _track_engine(cp, starts, s_start, s_target, opts)

    good = code == 1
    pts = x[good]
    keep = []
    reg = SolutionRegistry(system.n_vars)
    for i, p in enumerate(pts):
        if reg.add(p) is not None:
            keep.append(i)
    failures = [PathOutcome(status=_CODE[int(c)], point=x[i], residual=float(resid[i]),
                            steps=int(steps[i]), t_reached=float(t[i]))
                for i, c in enumerate(code) if c != 1]
    good_idx = np.flatnonzero(good)[keep]
    return SolutionSet(
        points=x[good_idx],
        parameters=s_target,
        residuals=resid[good_idx],
        provenance=["tracked"] * len(good_idx),
        failures=failures,
        meta={
            "tracked": len(starts),
            "succeeded": int(good.sum()),
            "duplicates_removed": int(good.sum()) - len(good_idx),
            "start_index": np.flatnonzero(good)[keep].tolist(),
            "status_counts": {s.value: int((code == c).sum())
                              for c, s in _CODE.items() if s and (code == c).any()},
        })
