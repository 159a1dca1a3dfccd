"""Solution containers and deduplication utilities."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

__all__ = ["SolutionSet", "SolutionRegistry", "scaled_distance", "dedupe_indices"]

DEDUP_TOL = 1e-8


def scaled_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """max_i |a_i - b_i| / max(1, |a_i|, |b_i|), broadcast over leading axes."""
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return np.max(np.abs(a - b) / scale, axis=-1)


def dedupe_indices(points: np.ndarray, tol: float = DEDUP_TOL) -> list[int]:
    """Indices of a duplicate-free subsequence (first occurrence wins)."""
    reg = SolutionRegistry(points.shape[1] if points.ndim == 2 else 1, tol=tol)
    keep = []
    for i, p in enumerate(np.atleast_2d(points)):
        if reg.add(p) is not None:
            keep.append(i)
    return keep


class SolutionRegistry:
    """Growing set of points with approximate-duplicate rejection.

    Membership uses the scaled max-distance with a bucket hash on the first
    coordinate, so insertion stays cheap for six-digit solution counts.
    """

    def __init__(self, dim: int, tol: float = DEDUP_TOL, quantum: float = 1e-3):
        self.dim = dim
        self.tol = tol
        self.quantum = quantum
        self._pts = np.empty((0, dim), dtype=np.complex128)
        self._n = 0
        self._buckets: dict[tuple[int, int], list[int]] = {}

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._pts[: self._n]

    def _key(self, p: np.ndarray) -> tuple[int, int]:
        c = complex(p[0])
        return (int(round(c.real / self.quantum)), int(round(c.imag / self.quantum)))

    def find(self, p: np.ndarray) -> Optional[int]:
        kr, ki = self._key(p)
        for dr in (-1, 0, 1):
            for di in (-1, 0, 1):
                for idx in self._buckets.get((kr + dr, ki + di), ()):
                    if scaled_distance(self._pts[idx], p) <= self.tol:
                        return idx
        return None

    def add(self, p: np.ndarray) -> Optional[int]:
        """Insert if new; returns the new index or None for a duplicate."""
        p = np.asarray(p, dtype=np.complex128)
        if self.find(p) is not None:
            return None
        if self._n == len(self._pts):
            grown = np.empty((max(64, 2 * len(self._pts)), self.dim), dtype=np.complex128)
            grown[: self._n] = self._pts[: self._n]
            self._pts = grown
        idx = self._n
        self._pts[idx] = p
        self._n += 1
        self._buckets.setdefault(self._key(p), []).append(idx)
        return idx

    def add_batch(self, pts: np.ndarray) -> list[int]:
        """Insert many points; returns indices of the genuinely new ones."""
        return [i for p in np.atleast_2d(pts) if (i := self.add(p)) is not None]


@dataclass
class SolutionSet:
    """Solutions of F(x; s) = 0 at one parameter value, with provenance."""

    points: np.ndarray                       # (N, d)
    parameters: np.ndarray                   # (n+1,) values used for solving
    residuals: np.ndarray                    # (N,) scaled residuals
    provenance: list = field(default_factory=list)
    model_digest: Optional[str] = None
    exact_parameters: Optional[list] = None  # Fractions when data is exact
    failures: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    certification: Optional[object] = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points))
        if self.points.size == 0:
            self.points = self.points.reshape(0, self.points.shape[-1] if self.points.ndim > 1 else 0)
        self.residuals = np.asarray(self.residuals, dtype=float)
        if not self.provenance:
            self.provenance = ["unknown"] * len(self.points)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, indices) -> "SolutionSet":
        indices = np.asarray(indices)
        return SolutionSet(
            points=self.points[indices],
            parameters=self.parameters,
            residuals=self.residuals[indices],
            provenance=[self.provenance[i] for i in indices],
            model_digest=self.model_digest,
            exact_parameters=self.exact_parameters,
            failures=list(self.failures),
            meta=dict(self.meta),
            certification=None,
        )

    def real_mask(self, tol: float = 1e-8) -> np.ndarray:
        if len(self.points) == 0:
            return np.zeros(0, dtype=bool)
        if not np.iscomplexobj(self.points):
            return np.ones(len(self.points), dtype=bool)
        return np.max(np.abs(self.points.imag), axis=1) < tol
