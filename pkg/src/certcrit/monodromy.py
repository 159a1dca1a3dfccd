"""Monodromy solving: populate the fiber of F(x; s*) = 0 over a generic
parameter point by tracking random triangle loops in parameter space.

Each loop visits two fresh random complex parameter points and returns; new
endpoints are Newton-polished at tightened tolerance and points whose polish
wanders are rejected, which keeps path-jumping artifacts from extraneous
components out of the registry.  A declared finite group action saturates
the set with whole orbits at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .expr import RationalSystem
from .program import CompiledPotential, compiled
from .solutions import SolutionRegistry, SolutionSet
from .tracking import TrackerOptions, _scaled_residual, _solve, _track_engine, newton_polish

__all__ = ["MonodromyOptions", "MonodromyError", "monodromy_solve"]

RESIDUAL_TOL = 1e-11
POLISH_TOL = 1e-13


class MonodromyError(RuntimeError):
    pass


def _loop_tracker() -> TrackerOptions:
    # Loop endpoints are Newton-polished on admission, so legs run at a
    # coarser corrector tolerance with a bolder initial step; paths that
    # stall are cut quickly because later loops will retry them anyway.
    return TrackerOptions(tol=1e-8, initial_step=0.1, min_step=1e-8,
                          max_steps=60)


@dataclass
class MonodromyOptions:
    target_count: Optional[int] = None
    stagnation_limit: int = 10         # unproductive loops before stopping
    max_loops: int = 500
    seed: int = 0
    group_action: Optional[object] = None
    tracker: TrackerOptions = field(default_factory=_loop_tracker)
    newton_attempts: int = 200
    initial_seeds: int = 4             # independent seed solutions to gather
    # Sampler returning an exact pair (x0, s0) with F(x0; s0) = 0 on the
    # dominant component; used to seed mixture-type models away from the
    # rank-deficient locus.
    dominant_seeder: Optional[Callable[[np.random.Generator], tuple]] = None
    reject_singular_jacobian: bool = True

    def __post_init__(self):
        if self.stagnation_limit <= 0 or self.max_loops <= 0:
            raise ValueError("loop limits must be positive")


def _random_params(rng: np.random.Generator, n: int) -> np.ndarray:
    """Generic complex parameters in the unit box, bounded away from zero."""
    out = np.empty(n, dtype=np.complex128)
    for i in range(n):
        while True:
            z = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
            if abs(z) >= 0.2:
                out[i] = z
                break
    return out


def _loop_vertex(rng: np.random.Generator, s_star: np.ndarray) -> np.ndarray:
    """Random loop vertex relative to s*: per-coordinate radius and phase.

    Critical points are invariant under global scaling of s, so what matters
    is the relative motion of the coordinates.  Radius regimes alternate
    between tame, phase-only and wild draws; loop-class diversity is what
    eventually reaches orbits hiding behind awkward discriminant geometry.
    """
    n = len(s_star)
    regime = rng.integers(0, 3)
    if regime == 0:
        r = np.exp(rng.uniform(np.log(1 / 3), np.log(3), n))
    elif regime == 1:
        r = np.ones(n)
    else:
        r = np.exp(rng.uniform(np.log(1 / 10), np.log(10), n))
    theta = rng.uniform(0, 2 * np.pi, n)
    return s_star * r * np.exp(1j * theta)


def _jacobian_regular(cp: CompiledPotential, pts: np.ndarray, s: np.ndarray,
                      rcond: float = 1e-10) -> np.ndarray:
    _, J = cp.fj(pts, s)
    ok = np.isfinite(J).all(axis=(1, 2))
    sv = np.linalg.svd(np.where(np.isfinite(J), J, 0.0), compute_uv=False)
    with np.errstate(invalid="ignore", divide="ignore"):
        reg = sv[:, -1] > rcond * np.maximum(sv[:, 0], 1.0)
    return ok & reg


def _dominant_mask(cp: CompiledPotential, pts: np.ndarray,
                   rcond: float = 1e-8) -> np.ndarray:
    """True where the point can be a critical point of a *generic* fiber.

    The coefficient matrix A(x) = (d_j p_i / p_i) must have full rank d on
    the dominant component of the critical-point correspondence; on
    extraneous loci (vanishing mixture weights, coinciding rows) whole
    columns of A vanish.  Path jumping onto such loci is filtered here.
    """
    P, D, _ = cp.core(pts, need_s2=False)
    with np.errstate(all="ignore"):
        G = D / P[:, :, None]
    ok = np.isfinite(G).all(axis=(1, 2))
    sv = np.linalg.svd(np.where(np.isfinite(G), G, 0.0), compute_uv=False)
    with np.errstate(invalid="ignore"):
        full = sv[:, -1] > rcond * np.maximum(sv[:, 0], 1.0)
    return ok & full


def _kernel_pair(cp: CompiledPotential, x0: np.ndarray,
                 rng: np.random.Generator) -> Optional[np.ndarray]:
    """Parameters making x0 an exact critical point, on the dominant component.

    F(x; s) is linear in s with coefficient matrix A(x0) = (d_j p_i / p_i);
    a random vector projected onto ker A(x0) gives an exact pair.  Full rank
    of A excludes the rank-deficient loci of mixture parametrizations.
    """
    P, D, _ = cp.core(x0.reshape(1, -1), need_s2=False)
    if not (np.isfinite(P).all() and np.isfinite(D).all()) or np.any(P == 0):
        return None
    A = (D[0] / P[0][:, None]).T  # (d, n)
    sv = np.linalg.svd(A, compute_uv=False)
    if not np.isfinite(sv).all() or sv[-1] < 1e-8 * max(sv[0], 1.0):
        return None  # off the dominant component (or numerically degenerate)
    n = A.shape[1]
    g = rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)
    s0 = g - np.linalg.pinv(A) @ (A @ g)
    if np.max(np.abs(s0)) < 1e-3:
        return None
    resid = np.max(np.abs(A @ s0)) / max(1.0, np.max(np.abs(s0)))
    if resid > 1e-10:
        return None
    return s0


def _initial_solution(cp: CompiledPotential, s_star: np.ndarray,
                      opts: MonodromyOptions, rng: np.random.Generator) -> np.ndarray:
    d = cp.d
    attempts = []
    if opts.dominant_seeder is not None:
        attempts.append(lambda: opts.dominant_seeder(rng))

    def random_kernel_seed():
        x0 = rng.uniform(-1, 1, d) + 1j * rng.uniform(-1, 1, d)
        s0 = _kernel_pair(cp, x0, rng)
        return (x0, s0) if s0 is not None else None

    attempts.extend([random_kernel_seed] * 20)
    for make in attempts:
        pair = make()
        if pair is None:
            continue
        x0 = np.asarray(pair[0], dtype=np.complex128).reshape(1, -1)
        s0 = np.asarray(pair[1], dtype=np.complex128)
        x0, res, _ = newton_polish(cp, x0, s0, iters=10, tol=POLISH_TOL)
        if res[0] > RESIDUAL_TOL:
            continue
        x, code, res, _, _ = _track_engine(cp, x0, s0, s_star, opts.tracker)
        if code[0] == 1:
            return x[0]
    # Last resort: plain Newton iteration from fresh random complex points.
    for _ in range(opts.newton_attempts):
        x = (rng.uniform(-1, 1, d) + 1j * rng.uniform(-1, 1, d)).reshape(1, -1)
        x, res, _ = newton_polish(cp, x, s_star, iters=40, tol=POLISH_TOL)
        if res[0] <= RESIDUAL_TOL and np.isfinite(x).all():
            if not opts.reject_singular_jacobian or _jacobian_regular(cp, x, s_star)[0]:
                return x[0]
    raise MonodromyError("could not produce an initial solution at s*")


def monodromy_solve(system: RationalSystem, seeds: Optional[np.ndarray] = None,
                    s_star: Optional[np.ndarray] = None,
                    options: MonodromyOptions | None = None) -> tuple[np.ndarray, SolutionSet]:
    """Collect the solution set of F(x; s*) = 0 by random monodromy loops.

    Returns the generic parameter point used (freshly drawn when absent) and
    the solutions found.  Stops at ``target_count`` when given, otherwise
    after ``stagnation_limit`` consecutive loops that add no new orbit.
    """
    opts = options or MonodromyOptions()
    if system.potential is None:
        raise ValueError("monodromy requires a gradient system built from a potential")
    cp = compiled(system.potential)
    rng = np.random.default_rng(opts.seed)
    n = system.n_params
    if s_star is None:
        s_star = _random_params(rng, n)
    else:
        s_star = np.asarray(s_star, dtype=np.complex128)

    registry = SolutionRegistry(system.n_vars)
    group = opts.group_action
    reps: list[np.ndarray] = []  # one tracked representative per group orbit

    def admit(points: np.ndarray) -> int:
        """Polish, validate and insert points with their orbits; returns #new."""
        if len(points) == 0:
            return 0
        pts, res, moved = newton_polish(cp, points, s_star, iters=3, tol=POLISH_TOL)
        keep = (res <= RESIDUAL_TOL) & (moved < 1e-4) & np.isfinite(pts).all(axis=1)
        if opts.reject_singular_jacobian and keep.any():
            keep[keep] &= _jacobian_regular(cp, pts[keep], s_star)
            keep[keep] &= _dominant_mask(cp, pts[keep])
        pts = pts[keep]
        new_reps = [p for p in pts if registry.add(p) is not None]
        if new_reps and group is not None:
            # The system is invariant under the action, so orbit images are
            # solutions too; one batched polish validates them all.
            orbit = group.orbit(np.array(new_reps)).reshape(-1, pts.shape[1])
            orbit, ores, omoved = newton_polish(cp, orbit, s_star, iters=3,
                                                tol=POLISH_TOL)
            okeep = (ores <= RESIDUAL_TOL) & (omoved < 1e-4)
            registry.add_batch(orbit[okeep])
        reps.extend(new_reps)
        return len(new_reps)

    if seeds is not None and len(np.atleast_2d(seeds)) > 0:
        seeds = np.atleast_2d(np.asarray(seeds, dtype=np.complex128))
        res = cp.residuals(seeds, s_star)
        if np.any(res > RESIDUAL_TOL * 10):
            raise MonodromyError("a seed does not satisfy the residual bound at s*")
        admit(seeds)
    tries = 0
    while len(registry) == 0 or (seeds is None and tries < opts.initial_seeds
                                 and (opts.target_count is None
                                      or len(registry) < opts.target_count)):
        tries += 1
        try:
            admit(_initial_solution(cp, s_star, opts, rng).reshape(1, -1))
        except MonodromyError:
            if len(registry) == 0 and tries >= opts.initial_seeds:
                raise
    if len(registry) == 0:
        raise MonodromyError("could not establish an initial solution at s*")

    loops = 0
    stagnant = 0
    warn = None
    careful = TrackerOptions()  # full-accuracy legs for the stagnation endgame
    while True:
        if opts.target_count is not None and len(registry) >= opts.target_count:
            break
        if loops >= opts.max_loops:
            warn = "max-loops"
            break
        if stagnant >= opts.stagnation_limit:
            if opts.target_count is not None:
                warn = "stagnated-below-target"
            break
        loops += 1
        # Once quick loops stop producing, spend the remaining stagnation
        # budget on full-accuracy legs that can pass through tight path
        # near-collisions instead of cutting them off.
        tracker = opts.tracker if stagnant < max(1, opts.stagnation_limit // 2) else careful
        s1 = _loop_vertex(rng, s_star)
        s2 = _loop_vertex(rng, s_star)
        pts = np.array(reps)
        for sa, sb in ((s_star, s1), (s1, s2), (s2, s_star)):
            x, code, _, _, _ = _track_engine(cp, pts, sa, sb, tracker)
            pts = x[code == 1]
            if len(pts) == 0:
                break
        added = admit(pts) if len(pts) else 0
        stagnant = 0 if added > 0 else stagnant + 1

    points = registry.points.copy()
    residuals = cp.residuals(points, s_star)
    solset = SolutionSet(
        points=points,
        parameters=s_star,
        residuals=residuals,
        provenance=["monodromy"] * len(points),
        meta={
            "loops": loops,
            "seed": opts.seed,
            "warning": warn,
            "target_count": opts.target_count,
            "group_order": group.order if group is not None else 1,
        })
    return s_star, solset
