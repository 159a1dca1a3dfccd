"""Command-line client for the solver service.

Every subcommand builds the same request models the HTTP endpoints consume
and calls the shared handlers in-process, so CLI and service behave
identically.  Exit codes: 0 complete and certified, 2 partial or
uncertified results, 1 error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
from fastapi import HTTPException

from . import io
from .service import app as handlers
from .service import schemas as S

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 2


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_ERROR)


def _model_params(family, m, n, d, k, l, seed) -> S.ModelParams:
    try:
        return S.ModelParams(family=family, m=m, n=n, d=d, k=k, l=l, seed=seed)
    except ValueError as e:
        _fail(str(e))


def _settings(seed, certify, workers, tolerance=None, real_fast=False, long_running=False):
    return S.SolveSettings(seed=seed, certify=certify, workers=workers,
                           tolerance=tolerance, real_fast=real_fast,
                           long_running=long_running)


def _call(fn, request):
    try:
        return fn(request)
    except HTTPException as e:
        _fail(e.detail)
    except Exception as e:  # surface anything unexpected as an error exit
        _fail(f"{type(e).__name__}: {e}")


def _read_data_file(path) -> dict:
    try:
        return {k: str(v) for k, v in io.read_data(path).items()}
    except (io.FormatError, OSError) as e:
        _fail(str(e))


def _emit(payload: dict, out) -> None:
    text = json.dumps(payload, indent=1)
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


def model_options(fn):
    fn = click.option("--family", required=True,
                      type=click.Choice(["chy", "cegm3", "linear", "tensor",
                                         "simplex", "independence"]))(fn)
    fn = click.option("--m", type=int, default=None)(fn)
    fn = click.option("--n", type=int, default=None)(fn)
    fn = click.option("--d", type=int, default=None)(fn)
    fn = click.option("--k", type=int, default=None)(fn)
    fn = click.option("--l", type=int, default=None)(fn)
    fn = click.option("--model-seed", type=int, default=0,
                      help="seed of random model families")(fn)
    return fn


def common_options(fn):
    fn = click.option("--seed", type=int, default=2024)(fn)
    fn = click.option("--workers", type=int, default=1)(fn)
    fn = click.option("--cache-dir", type=click.Path(), default=None)(fn)
    fn = click.option("--tolerance", type=float, default=None)(fn)
    fn = click.option("--out", type=click.Path(), default=None)(fn)
    return fn


def _set_cache(cache_dir) -> None:
    handlers.CACHE_DIR = Path(cache_dir) if cache_dir else None


@click.group()
def main():
    """Certified solving of rational critical-point equations."""


@main.group()
def model():
    """Model inspection."""


@model.command("info")
@model_options
@click.option("--out", type=click.Path(), default=None)
def model_info(family, m, n, d, k, l, model_seed, out):
    """Describe a model: states, unknowns, expected solution count."""
    resp = _call(handlers.model_info, _model_params(family, m, n, d, k, l, model_seed))
    _emit(resp.model_dump(), out)


@main.command()
@model_options
@common_options
@click.option("--target-count", type=int, default=None)
def prepare(family, m, n, d, k, l, model_seed, seed, workers, cache_dir,
            tolerance, out, target_count):
    """Offline step: monodromy to a cached start system."""
    _set_cache(cache_dir)
    req = S.PrepareRequest(model=_model_params(family, m, n, d, k, l, model_seed),
                           settings=_settings(seed, True, workers, tolerance),
                           target_count=target_count)
    resp = _call(handlers.prepare, req)
    _emit(resp.model_dump(), out)


@main.command()
@model_options
@common_options
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--certify/--no-certify", default=True)
def solve(family, m, n, d, k, l, model_seed, seed, workers, cache_dir, tolerance,
          out, data_path, certify):
    """Find and certify all critical points for a data file."""
    _set_cache(cache_dir)
    req = S.SolveRequest(model=_model_params(family, m, n, d, k, l, model_seed),
                         data=_read_data_file(data_path),
                         settings=_settings(seed, certify, workers, tolerance))
    resp = _call(handlers.solve, req)
    _emit(resp.model_dump(), out)
    summary = resp.summary
    complete = resp.complete
    all_cert = (not certify) or summary.get("certified") == summary.get("total")
    sys.exit(EXIT_OK if complete and all_cert else EXIT_PARTIAL)


@main.command()
@model_options
@common_options
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--fast/--full", default=False,
              help="track only the interior solution in real arithmetic")
def mle(family, m, n, d, k, l, model_seed, seed, workers, cache_dir, tolerance,
        out, data_path, fast):
    """Maximum likelihood estimate for a data file."""
    _set_cache(cache_dir)
    req = S.MLERequest(model=_model_params(family, m, n, d, k, l, model_seed),
                       data=_read_data_file(data_path),
                       settings=_settings(seed, True, workers, tolerance, real_fast=fast))
    resp = _call(handlers.mle, req)
    _emit(resp.model_dump(), out)


@main.command()
@model_options
@common_options
@click.option("--stability-runs", type=int, default=3)
def mldegree(family, m, n, d, k, l, model_seed, seed, workers, cache_dir,
             tolerance, out, stability_runs):
    """Estimate the ML degree; the certified count is a proven lower bound."""
    _set_cache(cache_dir)
    req = S.MLDegreeRequest(model=_model_params(family, m, n, d, k, l, model_seed),
                            settings=_settings(seed, True, workers, tolerance),
                            stability_runs=stability_runs)
    resp = _call(handlers.ml_degree, req)
    payload = resp.model_dump()
    payload["note"] = ("stabilized_estimate is experimental; only "
                       "certified_lower_bound is proven")
    _emit(payload, out)
    sys.exit(EXIT_OK if resp.stabilized else EXIT_PARTIAL)


@main.command()
@model_options
@common_options
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--oracle", is_flag=True, default=False,
              help="also evaluate the closed-form oracle when one exists")
def amplitude(family, m, n, d, k, l, model_seed, seed, workers, cache_dir,
              tolerance, out, data_path, oracle):
    """String amplitude: signed sum of reciprocal toric-Hessian determinants."""
    _set_cache(cache_dir)
    req = S.AmplitudeRequest(model=_model_params(family, m, n, d, k, l, model_seed),
                             data=_read_data_file(data_path),
                             settings=_settings(seed, True, workers, tolerance),
                             oracle=oracle)
    resp = _call(handlers.amplitude, req)
    _emit(resp.model_dump(), out)
    sys.exit(EXIT_PARTIAL if resp.unreliable else EXIT_OK)


@main.group()
def kinematics():
    """Mandelstam kinematics utilities."""


@kinematics.command("complete")
@click.option("--kind", type=click.Choice(["k2", "k3"]), required=True)
@click.option("--m", type=int, required=True)
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
def kinematics_complete(kind, m, data_path, out):
    """Complete state counts to a full Mandelstam array (exact arithmetic)."""
    req = S.KinematicsRequest(kind=kind, m=m, counts=_read_data_file(data_path))
    resp = _call(handlers.kinematics_complete, req)
    _emit(resp.model_dump(), out)


@main.command()
@model_options
@click.option("--solutions", "solutions_path", required=True, type=click.Path(exists=True))
@click.option("--cache-dir", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
def certify(family, m, n, d, k, l, model_seed, solutions_path, cache_dir, out):
    """Re-certify a solutions file against its exact parameters."""
    _set_cache(cache_dir)
    try:
        payload = io.read_solutions(solutions_path)
    except (io.FormatError, OSError) as e:
        _fail(str(e))
    payload.pop("points", None)
    req = S.CertifyRequest(model=_model_params(family, m, n, d, k, l, model_seed),
                           solutions_payload=payload)
    resp = _call(handlers.certify_solutions, req)
    _emit(resp.model_dump(), out)
    sys.exit(EXIT_OK if resp.certified == resp.total else EXIT_PARTIAL)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--cache-dir", type=click.Path(), default=None)
def serve(host, port, cache_dir):
    """Run the HTTP service."""
    import uvicorn
    _set_cache(cache_dir)
    uvicorn.run(handlers.app, host=host, port=port)


if __name__ == "__main__":
    main()
