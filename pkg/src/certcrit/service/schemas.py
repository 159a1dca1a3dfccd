"""Pydantic request/response models for the solver service."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator

Number = Union[int, float, str]


class ModelParams(BaseModel):
    """Which model to build; size fields depend on the family."""

    family: Literal["chy", "cegm3", "linear", "tensor", "simplex", "independence"]
    m: Optional[int] = None
    n: Optional[int] = None
    d: Optional[int] = None
    k: Optional[int] = None
    l: Optional[int] = None
    seed: int = 0

    @model_validator(mode="after")
    def _check_sizes(self):
        need = {"chy": ["m"], "cegm3": ["m"], "linear": ["n", "d"],
                "tensor": ["m", "k", "l"], "simplex": ["n"], "independence": []}
        for f in need[self.family]:
            if getattr(self, f) is None:
                raise ValueError(f"family {self.family!r} needs parameter {f!r}")
        return self

    def kwargs(self) -> dict:
        out = {}
        for f in ("m", "n", "d", "k", "l"):
            v = getattr(self, f)
            if v is not None:
                out[f] = v
        if self.family == "linear":
            out["seed"] = self.seed
        return out


class SolveSettings(BaseModel):
    seed: int = 2024
    certify: bool = True
    workers: int = 1
    real_fast: bool = False
    long_running: bool = False
    tolerance: Optional[float] = Field(default=None, description="corrector tolerance override")


class ModelInfoResponse(BaseModel):
    name: str
    family: str
    n_unknowns: int
    n_states: int
    states: list[str]
    linear: bool
    sum_to_one: bool
    group_order: int
    expected_count: Optional[int]
    digest: str


class PrepareRequest(BaseModel):
    model: ModelParams
    settings: SolveSettings = SolveSettings()
    target_count: Optional[int] = None


class PrepareResponse(BaseModel):
    digest: str
    solution_count: int
    loops: Optional[int] = None
    cached: bool


class SolveRequest(BaseModel):
    model: ModelParams
    data: dict[str, Number]
    settings: SolveSettings = SolveSettings()


class SolutionEntry(BaseModel):
    point: list[list[str]]
    residual: str
    provenance: str
    certified: Optional[bool] = None
    real_certified: Optional[bool] = None
    real_heuristic: Optional[bool] = None
    box: Optional[list[list[str]]] = None


class SolveResponse(BaseModel):
    # Field layout matches the on-disk solutions format, so a dumped
    # response is a valid solutions file.
    format: Literal["certcrit-solutions"] = "certcrit-solutions"
    version: int = 1
    digest: str
    summary: dict
    solutions: list[SolutionEntry]
    parameters: list
    model: dict
    complete: bool


class MLERequest(BaseModel):
    model: ModelParams
    data: dict[str, Number]
    settings: SolveSettings = SolveSettings()


class MLEResponse(BaseModel):
    point: list[str]
    probabilities: dict[str, float]
    log_likelihood: float
    domain_critical_points: int
    mode: str


class MLDegreeRequest(BaseModel):
    model: ModelParams
    settings: SolveSettings = SolveSettings()
    stability_runs: int = 3


class MLDegreeResponse(BaseModel):
    certified_lower_bound: int
    stabilized_estimate: int
    orbit_divisor: int
    raw_counts: list[int]
    stabilized: bool
    solution_count: int


class AmplitudeRequest(BaseModel):
    model: ModelParams
    data: dict[str, Number]
    settings: SolveSettings = SolveSettings()
    oracle: bool = False


class AmplitudeResponse(BaseModel):
    value: str
    n_points: int
    dim: int
    imag_residual: str
    unreliable: bool
    hypothesis: dict
    notes: list[str]
    oracle: Optional[str] = None


class KinematicsRequest(BaseModel):
    kind: Literal["k2", "k3"]
    m: int
    counts: dict[str, Number]


class KinematicsResponse(BaseModel):
    kind: str
    m: int
    completed: dict[str, str]


class CertifyRequest(BaseModel):
    model: ModelParams
    solutions_payload: dict


class CertifyResponse(BaseModel):
    total: int
    certified: int
    distinct: int
    real_certified: int
    real_heuristic: int
