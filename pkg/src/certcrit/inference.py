"""Workflow orchestration: offline start systems, online solves, MLE,
and ML-degree estimation.

The expensive monodromy run happens once per model and is cached; solving
for user data is a single coefficient parameter homotopy from the cached
generic instance, followed by certification against the exact data.  Lost
paths are recovered by monodromy loops seeded with the tracked endpoints.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .certify import CertifySummary, certify_set
from .models import ModelSpec
from .monodromy import MonodromyError, MonodromyOptions, _kernel_pair, monodromy_solve
from .program import CompiledPotential, compiled
from .solutions import SolutionRegistry, SolutionSet
from .tracking import TrackerOptions, newton_polish, parameter_homotopy, track_path

__all__ = ["SolveOptions", "MLEResult", "MLDegreeResult", "StartSystemCache",
           "InferenceError", "model_digest", "solve_model", "mle", "ml_degree",
           "prepare_start_system", "data_vector"]

CACHE_VERSION = 1
RESIDUAL_TOL = 1e-11
TOOL_VERSION = "0.1.0"


class InferenceError(RuntimeError):
    pass


def model_digest(model: ModelSpec) -> str:
    payload = json.dumps(model.descriptor, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def default_cache_dir() -> Path:
    env = os.environ.get("CERTCRIT_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "certcrit"


@dataclass
class SolveOptions:
    cache_dir: Optional[Path] = None
    seed: int = 2024
    certify: bool = True
    real_fast: bool = False
    tracker: TrackerOptions = field(default_factory=TrackerOptions)
    monodromy: Optional[MonodromyOptions] = None
    recover: bool = True             # top-up lost paths with seeded monodromy
    warn_nonpositive: bool = True

    def resolved_cache_dir(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else default_cache_dir()


@dataclass
class StartSystemCache:
    digest: str
    descriptor: dict
    field_kind: str                 # "complex" or "real"
    s_star: np.ndarray
    solutions: np.ndarray
    meta: dict

    def path(self, cache_dir: Path) -> Path:
        return cache_dir / f"{self.digest}.{self.field_kind}.json"


@dataclass
class MLEResult:
    point: np.ndarray
    probabilities: dict
    log_likelihood: float
    domain_critical_points: int
    solutions: Optional[SolutionSet]
    mode: str


@dataclass
class MLDegreeResult:
    certified_lower_bound: int       # certified distinct solutions / group order
    stabilized_estimate: int         # not proven; counts agreed across runs
    orbit_divisor: int
    raw_counts: list
    stabilized: bool
    solution_count: int
    parameters: np.ndarray


# --------------------------------------------------------------------------
# Data handling


def data_vector(model: ModelSpec, data: dict) -> tuple[np.ndarray, list[Fraction]]:
    """Validate a label->count map against the model and order it."""
    want = list(model.states)
    missing = [lbl for lbl in want if lbl not in data]
    extra = [lbl for lbl in data if lbl not in set(want)]
    if missing or extra:
        parts = [f"data labels do not match model {model.name}"]
        if missing:
            parts.append("missing: " + ", ".join(missing))
        if extra:
            parts.append("unexpected: " + ", ".join(extra))
        raise InferenceError("; ".join(parts))
    exact = [data[lbl] if isinstance(data[lbl], Fraction) else Fraction(str(data[lbl]))
             for lbl in want]
    return np.array([float(v) for v in exact]), exact


# --------------------------------------------------------------------------
# Start-system cache


def _format_float(x: float) -> str:
    return f"{x:.17g}"


def save_cache(cache: StartSystemCache, cache_dir: Path) -> Path:
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache.path(cache_dir)
    payload = {
        "format": "certcrit-cache",
        "version": CACHE_VERSION,
        "digest": cache.digest,
        "model": cache.descriptor,
        "field": cache.field_kind,
        "s_star": [[_format_float(z.real), _format_float(z.imag)]
                   for z in np.asarray(cache.s_star, dtype=np.complex128)],
        "solutions": [[[_format_float(z.real), _format_float(z.imag)] for z in row]
                      for row in np.atleast_2d(cache.solutions).astype(np.complex128)],
        "meta": cache.meta,
    }
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload))
    os.replace(tmp, path)  # atomic publish
    return path


def load_cache(model: ModelSpec, field_kind: str, cache_dir: Path) -> Optional[StartSystemCache]:
    digest = model_digest(model)
    path = cache_dir / f"{digest}.{field_kind}.json"
    if not path.exists():
        return None
    payload = json.loads(path.read_text())
    if payload.get("format") != "certcrit-cache" or payload.get("version") != CACHE_VERSION:
        raise InferenceError(f"unsupported cache format in {path}")
    if payload["digest"] != digest or payload["model"] != model.descriptor:
        raise InferenceError(f"cache {path} belongs to a different model")
    s_star = np.array([complex(float(a), float(b)) for a, b in payload["s_star"]])
    sols = np.array([[complex(float(a), float(b)) for a, b in row]
                     for row in payload["solutions"]])
    cache = StartSystemCache(digest=digest, descriptor=payload["model"],
                             field_kind=field_kind, s_star=s_star,
                             solutions=sols, meta=payload.get("meta", {}))
    # Revalidate: every cached solution must still solve F(.; s*).
    cp = compiled(model.potential())
    res = cp.residuals(sols, s_star)
    if np.any(res > RESIDUAL_TOL):
        raise InferenceError(f"cache {path} fails residual revalidation; delete it")
    return cache


def _dominant_seeder(model: ModelSpec, cp: CompiledPotential):
    """Exact critical pair near the model's interior, on the dominant component."""
    if model._interior is None:
        return None

    def seeder(rng: np.random.Generator):
        for _ in range(50):
            x0 = model.interior_point()
            x0 = x0 * (1 + rng.uniform(-0.05, 0.05, len(x0)))
            s0 = _kernel_pair(cp, x0.astype(np.complex128), rng)
            if s0 is not None:
                return x0.astype(np.complex128), s0
        raise MonodromyError("could not seed from the model interior")

    return seeder


def prepare_start_system(model: ModelSpec, options: SolveOptions | None = None,
                         target_count: Optional[int] = None) -> StartSystemCache:
    """Offline step: monodromy at a generic complex point, cached to disk."""
    opts = options or SolveOptions()
    cache_dir = opts.resolved_cache_dir()
    cached = load_cache(model, "complex", cache_dir)
    if cached is not None:
        return cached
    system = model.potential().gradient()
    cp = compiled(model.potential())
    target = target_count if target_count is not None else model.expected_count
    mopts = opts.monodromy or MonodromyOptions(seed=opts.seed)
    mopts = replace(mopts, target_count=target,
                    group_action=mopts.group_action or model.group_action,
                    dominant_seeder=mopts.dominant_seeder or _dominant_seeder(model, cp))
    s_star, sols = monodromy_solve(system, options=mopts)
    if target is not None and len(sols) < target:
        raise InferenceError(
            f"monodromy stagnated at {len(sols)} of {target} expected solutions")
    cache = StartSystemCache(
        digest=model_digest(model), descriptor=model.descriptor,
        field_kind="complex", s_star=s_star, solutions=sols.points,
        meta={"seed": opts.seed, "count": len(sols), "tool_version": TOOL_VERSION,
              "loops": sols.meta.get("loops")})
    save_cache(cache, cache_dir)
    return cache


def _real_start_pair(model: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Positive data with its known interior critical point, exactly.

    For a sum-to-one model the image s0 = p(x0) of an interior point makes
    x0 an exact critical point; the single bounded-region solution can then
    be tracked in real arithmetic to any positive data.
    """
    if not model.linear:
        raise InferenceError("the real fast path needs a linear model")
    x0 = model.interior_point()
    cp = compiled(model.potential())
    s0 = cp.probabilities(x0)[0].real
    if np.any(s0 <= 0):
        raise InferenceError("interior point has nonpositive probabilities")
    return x0, s0


# --------------------------------------------------------------------------
# Online solving


def solve_model(model: ModelSpec, data: dict, options: SolveOptions | None = None) -> SolutionSet:
    """Monodromy cache -> parameter homotopy -> (recovery) -> certification."""
    opts = options or SolveOptions()
    s_target, exact = data_vector(model, data)
    if opts.warn_nonpositive and np.any(s_target <= 0):
        import warnings
        warnings.warn("data has nonpositive entries; counts are expected positive")
    cache = prepare_start_system(model, opts)
    system = model.potential().gradient()
    result = parameter_homotopy(system, cache.solutions, cache.s_star, s_target,
                                options=opts.tracker)
    recovered = 0
    if len(result) < len(cache.solutions) and opts.recover:
        # Some paths were lost: run monodromy loops at the target, seeded
        # with the endpoints that did arrive.
        mopts = MonodromyOptions(seed=opts.seed + 1, target_count=len(cache.solutions),
                                 group_action=model.group_action)
        try:
            _, topped = monodromy_solve(system, seeds=result.points,
                                        s_star=s_target.astype(np.complex128),
                                        options=mopts)
            recovered = len(topped) - len(result)
            result = SolutionSet(
                points=topped.points, parameters=s_target,
                residuals=topped.residuals,
                provenance=["tracked"] * len(result) + ["monodromy-recovered"] * recovered,
                model_digest=model_digest(model),
                failures=result.failures, meta=result.meta)
        except MonodromyError:
            pass

    result.model_digest = model_digest(model)
    result.exact_parameters = exact
    result.meta.update({
        "model": model.descriptor,
        "expected": len(cache.solutions),
        "found": len(result),
        "recovered": recovered,
        "complete": len(result) >= len(cache.solutions),
    })
    if opts.certify:
        result.certification = certify_set(system, exact, result.points)
    return result


def _log_likelihood(cp: CompiledPotential, s: np.ndarray, points: np.ndarray) -> np.ndarray:
    P = cp.core(np.atleast_2d(points.real.astype(float)), need_s2=False)[0].real
    with np.errstate(invalid="ignore", divide="ignore"):
        L = (s * np.log(np.where(P > 0, P, np.nan))).sum(axis=1)
    return L


def mle(model: ModelSpec, data: dict, options: SolveOptions | None = None) -> MLEResult:
    """Maximum likelihood estimate (natural logarithm convention).

    Full mode solves for all critical points and maximizes over the real
    ones in the domain; fast mode tracks only the interior solution in real
    arithmetic, which is sound for linear models with positive data.
    """
    opts = options or SolveOptions()
    s_target, exact = data_vector(model, data)
    cp = compiled(model.potential())

    if opts.real_fast:
        if not model.linear:
            raise InferenceError("real fast mode requires a linear model")
        x0, s0 = _real_start_pair(model)
        tracker = replace(opts.tracker, field="real")
        out = track_path(model.potential().gradient(), x0, s0, s_target, tracker)
        if out.status.value != "success":
            raise InferenceError(f"real tracking failed: {out.status.value}")
        xhat = out.point.real
        P = cp.probabilities(xhat)[0].real
        if not model.in_domain(xhat.reshape(1, -1), P.reshape(1, -1))[0]:
            raise InferenceError("tracked point left the domain (unexpected for positive data)")
        L = float((s_target * np.log(P)).sum())
        probs = {lbl: float(p) for lbl, p in zip(model.states, P)}
        return MLEResult(point=xhat, probabilities=probs, log_likelihood=L,
                         domain_critical_points=1, solutions=None, mode="real-fast")

    sols = solve_model(model, data, opts)
    real = sols.real_mask()
    pts = sols.points[real].real
    if len(pts) == 0:
        raise InferenceError("no real critical points found")
    P = cp.core(pts, need_s2=False)[0].real
    inside = model.in_domain(pts, P)
    if not inside.any():
        raise InferenceError("no real critical point lies in the model domain")
    cand = pts[inside]
    L = _log_likelihood(cp, s_target, cand)
    best = int(np.nanargmax(L))
    xhat = cand[best]
    Pbest = cp.probabilities(xhat)[0].real
    probs = {lbl: float(p) for lbl, p in zip(model.states, Pbest)}
    return MLEResult(point=xhat, probabilities=probs, log_likelihood=float(L[best]),
                     domain_critical_points=int(inside.sum()), solutions=sols,
                     mode="full")


def ml_degree(model: ModelSpec, options: SolveOptions | None = None,
              stability_runs: int = 3, max_runs: int = 8) -> MLDegreeResult:
    """Estimate the ML degree by repeated monodromy until counts stabilize.

    The certified distinct count at the last generic instance is a proven
    lower bound; the stabilized estimate is explicitly not proven to be an
    upper bound.
    """
    opts = options or SolveOptions()
    system = model.potential().gradient()
    cp = compiled(model.potential())
    group = model.group_action
    divisor = group.order if group is not None else 1
    counts = []
    last = None
    run = 0
    while run < max_runs:
        mopts = opts.monodromy or MonodromyOptions()
        mopts = replace(mopts, seed=opts.seed + run, target_count=None,
                        group_action=group,
                        dominant_seeder=mopts.dominant_seeder or _dominant_seeder(model, cp))
        s_star, sols = monodromy_solve(system, options=mopts)
        counts.append(len(sols))
        last = (s_star, sols)
        run += 1
        if len(counts) >= stability_runs and len(set(counts[-stability_runs:])) == 1:
            break
    stabilized = len(counts) >= stability_runs and len(set(counts[-stability_runs:])) == 1
    s_star, sols = last
    # Certify at the generic complex instance: the floats are exact binary
    # rationals, so the distinct count is a proven lower bound.
    summary = certify_set(system, [complex(z) for z in s_star], sols.points)
    count = summary.distinct
    if count % divisor != 0:
        raise InferenceError(
            f"certified count {count} is not divisible by the group order {divisor}; "
            "spurious solutions suspected")
    return MLDegreeResult(
        certified_lower_bound=count // divisor,
        stabilized_estimate=max(counts) // divisor if counts else 0,
        orbit_divisor=divisor,
        raw_counts=counts,
        stabilized=stabilized,
        solution_count=len(sols),
        parameters=s_star,
    )
