"""JSON artifact formats: data files, solutions files, amplitude reports.

All numerics are serialized as decimal strings (17 significant digits for
binary64 values, exact rational strings for data), so round-trips are
bit-identical and certification can re-ingest exact parameter values.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .solutions import SolutionSet

__all__ = ["FormatError", "read_data", "write_data", "write_solutions",
           "read_solutions", "write_amplitude_report", "fmt17"]

SOLUTIONS_VERSION = 1


class FormatError(ValueError):
    pass


def fmt17(x: float) -> str:
    return f"{x:.17g}"


def _fraction_str(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def read_data(path, expected_labels: Optional[list] = None) -> dict:
    """Read a flat label->number map with exact rational values.

    Decimal literals parse through their string form, so 0.1 means one
    tenth, not the nearest binary double.
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(),
                             parse_float=lambda t: Fraction(t),
                             parse_int=lambda t: Fraction(t))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(payload, dict):
        raise FormatError(f"{path}: expected a flat label->number object")
    out = {}
    for k, v in payload.items():
        if isinstance(v, Fraction):
            out[k] = v
        elif isinstance(v, str):
            try:
                out[k] = Fraction(v)
            except (ValueError, ZeroDivisionError) as e:
                raise FormatError(f"{path}: value for {k!r} is not rational: {v!r}") from e
        else:
            raise FormatError(f"{path}: value for {k!r} is not a number")
    if expected_labels is not None:
        want = set(expected_labels)
        missing = sorted(want - set(out))
        extra = sorted(set(out) - want)
        if missing or extra:
            parts = [f"{path}: data labels do not match the model"]
            if missing:
                parts.append("missing: " + ", ".join(missing))
            if extra:
                parts.append("unexpected: " + ", ".join(extra))
            raise FormatError("; ".join(parts))
    return out


def write_data(data: dict, path) -> None:
    payload = {k: _fraction_str(Fraction(v)) for k, v in data.items()}
    Path(path).write_text(json.dumps(payload, indent=1))


def _point_json(row: np.ndarray) -> list:
    return [[fmt17(z.real), fmt17(z.imag)] for z in row]


def _point_from_json(row) -> np.ndarray:
    return np.array([complex(float(a), float(b)) for a, b in row])


def solutions_payload(sols: SolutionSet, model_descriptor: dict | None = None) -> dict:
    """Serializable form of a solution set with certification data."""
    cert = sols.certification
    entries = []
    for i in range(len(sols)):
        entry = {
            "point": _point_json(sols.points[i]),
            "residual": fmt17(float(sols.residuals[i])),
            "provenance": sols.provenance[i],
        }
        if cert is not None and cert.certificates:
            c = cert.certificates[i]
            entry["certified"] = c.certified
            entry["real_certified"] = c.real_certified
            entry["real_heuristic"] = c.real_candidate
            entry["box"] = ([[fmt17(v) for v in coord] for coord in c.box]
                            if c.box is not None else None)
        entries.append(entry)
    payload = {
        "format": "certcrit-solutions",
        "version": SOLUTIONS_VERSION,
        "digest": sols.model_digest,
        "model": model_descriptor or sols.meta.get("model"),
        "parameters": ([_fraction_str(v) for v in sols.exact_parameters]
                       if sols.exact_parameters is not None
                       else [[fmt17(complex(z).real), fmt17(complex(z).imag)]
                             for z in np.asarray(sols.parameters)]),
        "solutions": entries,
        "summary": summary_dict(sols),
    }
    return payload


def summary_dict(sols: SolutionSet) -> dict:
    cert = sols.certification
    out = {
        "total": len(sols),
        "expected": sols.meta.get("expected"),
        "complete": sols.meta.get("complete"),
        "failures": len(sols.failures),
        "real_heuristic": int(sols.real_mask().sum()),
    }
    if cert is not None:
        out.update({
            "certified": cert.certified,
            "distinct": cert.distinct,
            "real_certified": cert.real_certified,
        })
    return out


def write_solutions(sols: SolutionSet, path, model_descriptor: dict | None = None) -> None:
    Path(path).write_text(json.dumps(solutions_payload(sols, model_descriptor)))


def read_solutions(path, expected_digest: Optional[str] = None) -> dict:
    """Load a solutions file; returns the payload with points as arrays."""
    path = Path(path)
    payload = json.loads(path.read_text())
    if payload.get("format") != "certcrit-solutions":
        raise FormatError(f"{path}: not a solutions file")
    if payload.get("version") != SOLUTIONS_VERSION:
        raise FormatError(f"{path}: unsupported version {payload.get('version')!r}")
    if expected_digest is not None and payload.get("digest") != expected_digest:
        raise FormatError(
            f"{path}: model digest mismatch ({payload.get('digest')} != {expected_digest})")
    payload["points"] = np.array([_point_from_json(e["point"])
                                  for e in payload["solutions"]]) \
        if payload["solutions"] else np.empty((0, 0))
    return payload


def write_amplitude_report(result, path, oracle: Optional[Fraction] = None,
                           include_determinants: bool = False) -> None:
    payload = {
        "format": "certcrit-amplitude",
        "version": 1,
        "value": fmt17(result.value),
        "n_points": result.n_points,
        "dim": result.dim,
        "imag_residual": fmt17(result.imag_residual),
        "unreliable": result.unreliable,
        "hypothesis": result.hypothesis,
        "notes": result.notes,
        "oracle": _fraction_str(oracle) if oracle is not None else None,
    }
    if include_determinants and result.determinants is not None:
        payload["determinants"] = [[fmt17(z.real), fmt17(z.imag)]
                                   for z in result.determinants]
    Path(path).write_text(json.dumps(payload))
