"""Exact conversion between state-count vectors and full Mandelstam arrays.

Completions solve the momentum-conservation relations (vanishing row or
slice sums) as a small linear system over the rationals, so one code path
serves every number of particles and all sums vanish exactly.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations
from typing import Mapping

from .models import (cegm_excluded_triples, cegm_states, chy_states,
                     pair_label, triple_label)

__all__ = ["MandelstamK2", "MandelstamK3", "complete_k2", "complete_k3",
           "KinematicsError"]


class KinematicsError(ValueError):
    pass


def _to_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v)
    raise KinematicsError(f"count value {v!r} is not rational")


def _solve_exact(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Gaussian elimination over the rationals with partial pivoting."""
    n = len(A)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if M[r][col] != 0), None)
        if pivot is None:
            raise KinematicsError("singular completion system")
        M[col], M[pivot] = M[pivot], M[col]
        inv = Fraction(1) / M[col][col]
        M[col] = [v * inv for v in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [v - f * w for v, w in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


class MandelstamK2:
    """Symmetric m x m rational matrix with zero diagonal and zero row sums."""

    def __init__(self, m: int, entries: Mapping[tuple, Fraction]):
        self.m = m
        self._e = {tuple(sorted(k)): Fraction(v) for k, v in entries.items()}

    def __getitem__(self, key) -> Fraction:
        i, j = key
        if i == j:
            return Fraction(0)
        return self._e[tuple(sorted((i, j)))]

    def row_sum(self, i: int) -> Fraction:
        return sum(self[i, j] for j in range(1, self.m + 1) if j != i)

    def restrict(self) -> dict:
        """Back to the state-count map over the model states."""
        return {pair_label(i, j, self.m): self[i, j] for i, j in chy_states(self.m)}

    def as_dict(self) -> dict:
        return {pair_label(i, j, self.m): self[i, j]
                for i, j in combinations(range(1, self.m + 1), 2)}


class MandelstamK3:
    """Fully symmetric rank-3 rational array, zero unless indices distinct."""

    def __init__(self, m: int, entries: Mapping[tuple, Fraction]):
        self.m = m
        self._e = {tuple(sorted(k)): Fraction(v) for k, v in entries.items()}

    def __getitem__(self, key) -> Fraction:
        i, j, k = key
        if len({i, j, k}) < 3:
            return Fraction(0)
        return self._e[tuple(sorted((i, j, k)))]

    def slice_sum(self, i: int) -> Fraction:
        total = Fraction(0)
        for j, k in combinations((t for t in range(1, self.m + 1) if t != i), 2):
            total += self[i, j, k]
        return total

    def restrict(self) -> dict:
        return {triple_label(*t, self.m): self[t] for t in cegm_states(self.m)}

    def as_dict(self) -> dict:
        return {triple_label(i, j, k, self.m): self[i, j, k]
                for i, j, k in combinations(range(1, self.m + 1), 3)}


def _validate_labels(counts: Mapping, expected: list[str], what: str) -> None:
    got = set(counts)
    want = set(expected)
    missing = sorted(want - got)
    extra = sorted(got - want)
    if missing or extra:
        parts = [f"{what}: label mismatch"]
        if missing:
            parts.append("missing: " + ", ".join(missing))
        if extra:
            parts.append("unexpected: " + ", ".join(extra))
        raise KinematicsError("; ".join(parts))


def complete_k2(counts: Mapping[str, object], m: int) -> MandelstamK2:
    """Unique zero-row-sum completion of the model-state counts.

    The m remaining invariants (first row and the excluded corner) are
    solved exactly from the m row-sum relations.
    """
    states = chy_states(m)
    _validate_labels(counts, [pair_label(i, j, m) for i, j in states], f"m={m}")
    known = {(i, j): _to_fraction(counts[pair_label(i, j, m)]) for i, j in states}
    unknowns = [(1, j) for j in range(2, m + 1)] + [(2, m)]
    uidx = {p: t for t, p in enumerate(unknowns)}
    A = [[Fraction(0)] * len(unknowns) for _ in range(m)]
    b = [Fraction(0)] * m
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            if j == i:
                continue
            p = tuple(sorted((i, j)))
            if p in uidx:
                A[i - 1][uidx[p]] += 1
            else:
                b[i - 1] -= known[p]
    sol = _solve_exact(A, b)
    entries = dict(known)
    entries.update({p: sol[t] for p, t in uidx.items()})
    out = MandelstamK2(m, entries)
    assert all(out.row_sum(i) == 0 for i in range(1, m + 1))
    return out


def complete_k3(counts: Mapping[str, object], m: int) -> MandelstamK3:
    """Completion of the non-excluded triple invariants to zero slice sums."""
    states = cegm_states(m)
    _validate_labels(counts, [triple_label(*t, m) for t in states], f"m={m}")
    known = {t: _to_fraction(counts[triple_label(*t, m)]) for t in states}
    unknowns = cegm_excluded_triples(m)
    uidx = {t: i for i, t in enumerate(unknowns)}
    A = [[Fraction(0)] * len(unknowns) for _ in range(m)]
    b = [Fraction(0)] * m
    for i in range(1, m + 1):
        for j, k in combinations((t for t in range(1, m + 1) if t != i), 2):
            trip = tuple(sorted((i, j, k)))
            if trip in uidx:
                A[i - 1][uidx[trip]] += 1
            else:
                b[i - 1] -= known[trip]
    sol = _solve_exact(A, b)
    entries = dict(known)
    entries.update({t: sol[i] for t, i in uidx.items()})
    out = MandelstamK3(m, entries)
    assert all(out.slice_sum(i) == 0 for i in range(1, m + 1))
    return out
