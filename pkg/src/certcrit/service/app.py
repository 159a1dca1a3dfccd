"""FastAPI service exposing the solver workflow.

The handlers are plain functions over the pydantic schemas; the HTTP app
and the command-line client both call them, so the CLI stays a thin client
of the same code paths the service runs.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import inference, io, kinematics
from ..amplitude import AmplitudeError
from ..amplitude import amplitude as amplitude_sum
from ..amplitude import oracle_amplitude
from ..certify import certify_set
from ..models import ModelSpec, make_model, positive_chart
from ..solutions import SolutionSet
from . import schemas as S

CACHE_DIR: Optional[Path] = None  # None = inference.default_cache_dir()


def _model(params: S.ModelParams) -> ModelSpec:
    try:
        return make_model(params.family, **params.kwargs())
    except (ValueError, KeyError) as e:
        raise HTTPException(status_code=422, detail=str(e)) from e


def _options(settings: S.SolveSettings, seed_shift: int = 0) -> inference.SolveOptions:
    opts = inference.SolveOptions(cache_dir=CACHE_DIR, seed=settings.seed + seed_shift,
                                  certify=settings.certify,
                                  real_fast=settings.real_fast)
    if settings.tolerance:
        from dataclasses import replace
        opts.tracker = replace(opts.tracker, tol=settings.tolerance)
    return opts


def _data_fractions(data: dict) -> dict:
    return {k: Fraction(str(v)) for k, v in data.items()}


def model_info(params: S.ModelParams) -> S.ModelInfoResponse:
    model = _model(params)
    return S.ModelInfoResponse(
        name=model.name, family=model.family, n_unknowns=model.n_vars,
        n_states=model.n_states, states=list(model.states), linear=model.linear,
        sum_to_one=model.sum_to_one,
        group_order=model.group_action.order if model.group_action else 1,
        expected_count=model.expected_count,
        digest=inference.model_digest(model))


def prepare(req: S.PrepareRequest) -> S.PrepareResponse:
    model = _model(req.model)
    opts = _options(req.settings)
    existing = inference.load_cache(model, "complex", opts.resolved_cache_dir())
    cache = inference.prepare_start_system(model, opts, target_count=req.target_count)
    return S.PrepareResponse(digest=cache.digest, solution_count=len(cache.solutions),
                             loops=cache.meta.get("loops"), cached=existing is not None)


def _solve_response(model: ModelSpec, sols: SolutionSet) -> S.SolveResponse:
    payload = io.solutions_payload(sols, model.descriptor)
    return S.SolveResponse(
        digest=payload["digest"], summary=payload["summary"],
        solutions=[S.SolutionEntry(**e) for e in payload["solutions"]],
        parameters=payload["parameters"], model=model.descriptor,
        complete=bool(sols.meta.get("complete", False)))


def solve(req: S.SolveRequest) -> S.SolveResponse:
    model = _model(req.model)
    opts = _options(req.settings)
    try:
        sols = inference.solve_model(model, _data_fractions(req.data), opts)
    except inference.InferenceError as e:
        raise HTTPException(status_code=422, detail=str(e)) from e
    return _solve_response(model, sols)


def mle(req: S.MLERequest) -> S.MLEResponse:
    model = _model(req.model)
    opts = _options(req.settings)
    try:
        result = inference.mle(model, _data_fractions(req.data), opts)
    except inference.InferenceError as e:
        raise HTTPException(status_code=422, detail=str(e)) from e
    return S.MLEResponse(
        point=[io.fmt17(float(v)) for v in result.point],
        probabilities=result.probabilities,
        log_likelihood=result.log_likelihood,
        domain_critical_points=result.domain_critical_points,
        mode=result.mode)


def ml_degree(req: S.MLDegreeRequest) -> S.MLDegreeResponse:
    model = _model(req.model)
    opts = _options(req.settings)
    try:
        result = inference.ml_degree(model, opts, stability_runs=req.stability_runs)
    except inference.InferenceError as e:
        raise HTTPException(status_code=422, detail=str(e)) from e
    return S.MLDegreeResponse(
        certified_lower_bound=result.certified_lower_bound,
        stabilized_estimate=result.stabilized_estimate,
        orbit_divisor=result.orbit_divisor,
        raw_counts=result.raw_counts,
        stabilized=result.stabilized,
        solution_count=result.solution_count)


def amplitude(req: S.AmplitudeRequest) -> S.AmplitudeResponse:
    model = _model(req.model)
    try:
        chart = positive_chart(model)
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e)) from e
    opts = _options(req.settings)
    data = _data_fractions(req.data)
    try:
        result = amplitude_sum(chart, data, options=opts)
    except (AmplitudeError, inference.InferenceError) as e:
        raise HTTPException(status_code=422, detail=str(e)) from e
    oracle = None
    if req.oracle:
        oracle = _oracle_for(model, data)
    return S.AmplitudeResponse(
        value=io.fmt17(result.value), n_points=result.n_points, dim=result.dim,
        imag_residual=io.fmt17(result.imag_residual), unreliable=result.unreliable,
        hypothesis=result.hypothesis, notes=result.notes,
        oracle=str(oracle) if oracle is not None else None)


def _oracle_for(model: ModelSpec, data: dict):
    if model.family == "simplex" and model.n_states == 3:
        return oracle_amplitude("triangle", [data[s] for s in model.states])
    if model.family == "independence":
        return oracle_amplitude("square", data)
    if model.family == "chy" and model.descriptor.get("m") == 6:
        K = kinematics.complete_k2(data, 6)
        return oracle_amplitude("associahedron_m6", K)
    return None


def kinematics_complete(req: S.KinematicsRequest) -> S.KinematicsResponse:
    try:
        counts = _data_fractions(req.counts)
        if req.kind == "k2":
            full = kinematics.complete_k2(counts, req.m)
        else:
            full = kinematics.complete_k3(counts, req.m)
    except kinematics.KinematicsError as e:
        raise HTTPException(status_code=422, detail=str(e)) from e
    completed = {k: (str(v.numerator) if v.denominator == 1 else str(v))
                 for k, v in full.as_dict().items()}
    return S.KinematicsResponse(kind=req.kind, m=req.m, completed=completed)


def certify_solutions(req: S.CertifyRequest) -> S.CertifyResponse:
    model = _model(req.model)
    payload = req.solutions_payload
    digest = inference.model_digest(model)
    if payload.get("digest") != digest:
        raise HTTPException(status_code=422,
                            detail=f"solutions digest {payload.get('digest')} does not "
                                   f"match model digest {digest}")
    points = np.array([[complex(float(a), float(b)) for a, b in e["point"]]
                       for e in payload["solutions"]])
    params = [Fraction(p) for p in payload["parameters"]]
    summary = certify_set(model.potential().gradient(), params, points)
    return S.CertifyResponse(total=summary.total, certified=summary.certified,
                             distinct=summary.distinct,
                             real_certified=summary.real_certified,
                             real_heuristic=summary.real_heuristic)


def create_app() -> FastAPI:
    app = FastAPI(title="certcrit",
                  description="Certified critical-point solving for statistical "
                              "and scattering models")

    app.get("/models/info", response_model=S.ModelInfoResponse)(
        lambda family, m=None, n=None, d=None, k=None, l=None, seed=0:
        model_info(S.ModelParams(family=family, m=m, n=n, d=d, k=k, l=l, seed=seed)))
    app.post("/prepare", response_model=S.PrepareResponse)(prepare)
    app.post("/solve", response_model=S.SolveResponse)(solve)
    app.post("/mle", response_model=S.MLEResponse)(mle)
    app.post("/mldegree", response_model=S.MLDegreeResponse)(ml_degree)
    app.post("/amplitude", response_model=S.AmplitudeResponse)(amplitude)
    app.post("/kinematics/complete", response_model=S.KinematicsResponse)(kinematics_complete)
    app.post("/certify", response_model=S.CertifyResponse)(certify_solutions)

    @app.get("/health")
    def health():
        return {"status": "ok"}

    return app


app = create_app()
