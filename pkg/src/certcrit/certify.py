"""A-posteriori certification with interval arithmetic and the Krawczyk test.

For an approximate zero x~ of F(., s), build a box B = x~ + [-r, r] per
coordinate (complex rectangles), and evaluate

    K(B) = x~ - Y F(x~) + (I - Y J(B)) (B - x~)

with Y the inverse of the floating midpoint Jacobian.  K(B) strictly inside
B proves existence and uniqueness of a zero in B for the *exact* parameter
values, which are taken as rationals and enclosed in tight intervals.
Realness is never decided by a small-imaginary-part heuristic alone: the
heuristic only nominates candidates, which must then pass a real Krawczyk
contraction on the real-part box.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .expr import RationalSystem
from .program import IntervalEvaluator, _cached_program
from .scalars import interval_hull

__all__ = ["Certificate", "CertifySummary", "krawczyk_certify", "certify_set"]

REAL_CANDIDATE_TOL = 1e-8


@dataclass
class Certificate:
    certified: bool
    box: Optional[np.ndarray]          # (d, 4): re_lo, re_hi, im_lo, im_hi
    kbox: Optional[np.ndarray]         # Krawczyk image, same layout
    real_certified: bool
    real_candidate: bool
    inflation: float
    reason: Optional[str]
    param_digest: str


@dataclass
class CertifySummary:
    certificates: list
    certified: int
    distinct: int
    real_certified: int
    real_heuristic: int
    total: int
    param_digest: str

    def __repr__(self):
        return (f"CertifySummary(total={self.total}, certified={self.certified}, "
                f"distinct={self.distinct}, real={self.real_certified})")


def _param_digest(params: Sequence) -> str:
    payload = ",".join(str(p) for p in params)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _param_intervals(params: Sequence):
    """Exact enclosures of the parameters; complex values become pairs.

    Returns (real_pairs, imag_pairs_or_None).  Binary floats convert to
    Fractions exactly, so certification is against exact values.
    """
    re_out, im_out = [], []
    any_imag = False
    for p in params:
        if isinstance(p, complex):
            re, im = Fraction(p.real), Fraction(p.imag)
        else:
            re, im = Fraction(p), Fraction(0)
        any_imag |= im != 0
        rev = interval_hull(re)
        imv = interval_hull(im)
        re_out.append((rev.lo, rev.hi))
        im_out.append((imv.lo, imv.hi))
    return re_out, (im_out if any_imag else None)


class _SystemIntervals:
    """Interval evaluation of F and J over complex or real boxes.

    Parameters may be exact complex values: systems are linear in the
    parameters, so F(x; a + i b) = F(x; a) + i F(x; b) and likewise for the
    Jacobian, which two real-parameter passes combine.
    """

    def __init__(self, system: RationalSystem, complex_kind: bool):
        d = system.n_vars
        jac = system.jacobian_expressions()
        roots = list(system.equations) + [jac[i][j] for i in range(d) for j in range(d)]
        self.d = d
        self.param_linear = system.param_linear
        self.evaluator = IntervalEvaluator(_cached_program(roots), complex_kind)

    def run(self, boxes: np.ndarray, re_params, im_params=None):
        vals, singular = self.evaluator.run(boxes, re_params)
        if im_params is not None:
            if not self.param_linear:
                raise ValueError("complex parameters need a parameter-linear system")
            ivals, ising = self.evaluator.run(boxes, im_params)
            # (A_re + i A_im) + i (B_re + i B_im) = (A_re - B_im) + i (A_im + B_re)
            re = _ivn_sub(vals[..., 0:2], ivals[..., 2:4])
            im = _ivn_add(vals[..., 2:4], ivals[..., 0:2])
            vals = np.concatenate([re, im], axis=-1)
            singular = singular | ising
        d = self.d
        F = vals[:d]                       # (d, B, w)
        J = vals[d:].reshape(d, d, vals.shape[1], vals.shape[2])
        return F, J, singular


# Vectorized closed real-interval helpers on (..., 2) arrays [lo, hi].

def _ivn_add(a, b):
    lo = np.nextafter(a[..., 0] + b[..., 0], -np.inf)
    hi = np.nextafter(a[..., 1] + b[..., 1], np.inf)
    return np.stack([lo, hi], axis=-1)


def _ivn_sub(a, b):
    lo = np.nextafter(a[..., 0] - b[..., 1], -np.inf)
    hi = np.nextafter(a[..., 1] - b[..., 0], np.inf)
    return np.stack([lo, hi], axis=-1)


def _ivn_mul(a, b):
    with np.errstate(invalid="ignore"):
        ps = np.stack([a[..., 0] * b[..., 0], a[..., 0] * b[..., 1],
                       a[..., 1] * b[..., 0], a[..., 1] * b[..., 1]], axis=-1)
        lo = np.nextafter(np.min(ps, axis=-1), -np.inf)
        hi = np.nextafter(np.max(ps, axis=-1), np.inf)
    return np.stack([lo, hi], axis=-1)


def _civ_mul(a, b):
    """Complex rectangle product on (..., 4) arrays."""
    are, aim = a[..., 0:2], a[..., 2:4]
    bre, bim = b[..., 0:2], b[..., 2:4]
    re = _ivn_sub(_ivn_mul(are, bre), _ivn_mul(aim, bim))
    im = _ivn_add(_ivn_mul(are, bim), _ivn_mul(aim, bre))
    return np.concatenate([re, im], axis=-1)


def _civ_add(a, b):
    return np.concatenate([_ivn_add(a[..., 0:2], b[..., 0:2]),
                           _ivn_add(a[..., 2:4], b[..., 2:4])], axis=-1)


def _civ_sub(a, b):
    return np.concatenate([_ivn_sub(a[..., 0:2], b[..., 0:2]),
                           _ivn_sub(a[..., 2:4], b[..., 2:4])], axis=-1)


def _civ_from_complex(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128)
    return np.stack([z.real, z.real, z.imag, z.imag], axis=-1)


def _krawczyk_images(F, J, Y, centers, boxes, complex_kind: bool):
    """K(B) = x~ - Y F(x~) + (I - Y J(B)) (B - x~), batched over points.

    F: (d, B, w) intervals at the centers; J: (d, d, B, w) over the boxes;
    Y: (B, d, d) floating approximate Jacobian inverses.
    """
    d = F.shape[0]
    B = F.shape[1]
    if complex_kind:
        Yiv = np.stack([np.stack([_civ_from_complex(Y[:, i, j])
                                  for j in range(d)]) for i in range(d)])  # (d,d,B,4)
        mul, addf, subf = _civ_mul, _civ_add, _civ_sub
        eye = np.zeros((d, d, B, 4))
        for i in range(d):
            eye[i, i, :, 0] = eye[i, i, :, 1] = 1.0
        cent = np.stack([_civ_from_complex(centers[:, i]) for i in range(d)])  # (d,B,4)
        bx = np.transpose(boxes, (1, 0, 2))  # (d,B,4)
    else:
        Yr = Y.real if np.iscomplexobj(Y) else Y
        Yiv = np.stack([np.stack([np.stack([Yr[:, i, j], Yr[:, i, j]], axis=-1)
                                  for j in range(d)]) for i in range(d)])  # (d,d,B,2)
        mul, addf, subf = _ivn_mul, _ivn_add, _ivn_sub
        eye = np.zeros((d, d, B, 2))
        for i in range(d):
            eye[i, i, :, 0] = eye[i, i, :, 1] = 1.0
        c = centers.real
        cent = np.stack([np.stack([c[:, i], c[:, i]], axis=-1) for i in range(d)])
        bx = np.transpose(boxes, (1, 0, 2))

    # M = I - Y J(B)
    M = eye.copy()
    for i in range(d):
        for j in range(d):
            acc = None
            for t in range(d):
                prod = mul(Yiv[i, t], J[t, j])
                acc = prod if acc is None else addf(acc, prod)
            M[i, j] = subf(M[i, j], acc)
    # K_i = x_i - (Y F)_i + sum_j M_ij (B_j - x_j)
    diff = subf(bx, cent)  # (d,B,w)
    K = np.empty_like(cent)
    for i in range(d):
        yf = None
        for t in range(d):
            prod = mul(Yiv[i, t], F[t])
            yf = prod if yf is None else addf(yf, prod)
        acc = subf(cent[i], yf)
        for j in range(d):
            acc = addf(acc, mul(M[i, j], diff[j]))
        K[i] = acc
    return np.transpose(K, (1, 0, 2))  # (B, d, w)


def _strict_inside(K: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        ok = (K[..., 0] > boxes[..., 0]) & (K[..., 1] < boxes[..., 1])
        if K.shape[-1] == 4:
            ok &= (K[..., 2] > boxes[..., 2]) & (K[..., 3] < boxes[..., 3])
    return np.all(ok & np.isfinite(K).all(axis=-1), axis=-1)


def _complex_boxes(centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    B, d = centers.shape
    boxes = np.empty((B, d, 4))
    boxes[..., 0] = centers.real - radii
    boxes[..., 1] = centers.real + radii
    boxes[..., 2] = centers.imag - radii
    boxes[..., 3] = centers.imag + radii
    return boxes


def _certify_batch(sysiv: _SystemIntervals, points: np.ndarray, re_params,
                   im_params, inflation: float):
    """One Krawczyk attempt for every point at a common relative inflation."""
    B, d = points.shape
    radii = inflation * np.maximum(1.0, np.abs(points))
    boxes = _complex_boxes(points, radii)
    point_boxes = _complex_boxes(points, np.zeros_like(radii))
    Fc, Jc, sing_c = sysiv.run(point_boxes, re_params, im_params)
    Jmid = np.empty((B, d, d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            Jmid[:, i, j] = 0.5 * (Jc[i, j, :, 0] + Jc[i, j, :, 1]) \
                + 0.5j * (Jc[i, j, :, 2] + Jc[i, j, :, 3])
    Y, invertible = _safe_inv(Jmid)
    _, JB, _ = sysiv.run(boxes, re_params, im_params)
    K = _krawczyk_images(Fc, JB, Y, points, boxes, complex_kind=True)
    ok = _strict_inside(K, boxes) & invertible & ~sing_c
    return ok, boxes, K


def _safe_inv(Jmid: np.ndarray):
    B, d, _ = Jmid.shape
    Y = np.empty_like(Jmid)
    ok = np.ones(B, dtype=bool)
    finite = np.isfinite(Jmid).all(axis=(1, 2))
    try:
        Y[finite] = np.linalg.inv(Jmid[finite])
        ok &= finite
    except np.linalg.LinAlgError:
        for b in range(B):
            try:
                Y[b] = np.linalg.inv(Jmid[b]) if finite[b] else np.eye(d)
                ok[b] = finite[b]
            except np.linalg.LinAlgError:
                Y[b] = np.eye(d)
                ok[b] = False
    bad = ~np.isfinite(Y).all(axis=(1, 2))
    Y[bad] = np.eye(d)
    ok &= ~bad
    return Y, ok


def _real_certify(sys_real: _SystemIntervals, points: np.ndarray, re_params,
                  inflation: float) -> tuple[np.ndarray, np.ndarray]:
    """Real Krawczyk on the real-part boxes; proves the certified zero real."""
    B, d = points.shape
    x = points.real
    radii = inflation * np.maximum(1.0, np.abs(x))
    boxes = np.stack([x - radii, x + radii], axis=-1)       # (B,d,2)
    pboxes = np.stack([x, x], axis=-1)
    Fc, Jc, sing = sys_real.run(pboxes, re_params)
    Jmid = np.empty((B, d, d))
    for i in range(d):
        for j in range(d):
            Jmid[:, i, j] = 0.5 * (Jc[i, j, :, 0] + Jc[i, j, :, 1])
    Y, invertible = _safe_inv(Jmid.astype(np.complex128))
    _, JB, _ = sys_real.run(boxes, re_params)
    K = _krawczyk_images(Fc, JB, Y.real, x.astype(np.complex128), boxes,
                         complex_kind=False)
    ok = _strict_inside(K, boxes) & invertible & ~sing
    return ok, boxes


def krawczyk_certify(system: RationalSystem, s: Sequence, x_tilde: Sequence,
                     inflation: float = 1e-7) -> Certificate:
    """Certify a single approximate solution against exact rational parameters."""
    summary = certify_set(system, s, np.asarray(x_tilde, dtype=np.complex128).reshape(1, -1),
                          inflation=inflation)
    return summary.certificates[0]


def certify_set(system: RationalSystem, s: Sequence, points: np.ndarray,
                inflation: float = 1e-7) -> CertifySummary:
    """Krawczyk-certify a batch of points; establish distinctness and realness.

    Distinctness counts clusters of overlapping certified boxes once, so it
    never overstates the number of distinct zeros.  Realness requires a real
    Krawczyk contraction, the |Im| heuristic only selects candidates; it is
    only attempted when the parameters are real.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.complex128))
    B, d = points.shape
    digest = _param_digest(s)
    if B == 0:
        return CertifySummary([], 0, 0, 0, 0, 0, digest)
    re_params, im_params = _param_intervals(s)
    sysiv = _SystemIntervals(system, complex_kind=True)

    certified = np.zeros(B, dtype=bool)
    boxes = np.zeros((B, d, 4))
    kboxes = np.zeros((B, d, 4))
    used_inflation = np.full(B, np.nan)
    # Retry ladder: nominal, then wider and narrower boxes.
    ladder = [inflation] + [inflation * 10**k for k in (1, 2, 3)] \
        + [inflation / 10**k for k in (1, 2, 3)]
    pending = np.arange(B)
    for infl in ladder:
        if len(pending) == 0:
            break
        ok, bx, K = _certify_batch(sysiv, points[pending], re_params, im_params, infl)
        hit = pending[ok]
        certified[hit] = True
        boxes[hit] = bx[ok]
        kboxes[hit] = K[ok]
        used_inflation[hit] = infl
        pending = pending[~ok]

    # Realness: candidates by imaginary magnitude, proof by real contraction.
    real_candidate = np.max(np.abs(points.imag), axis=1) < REAL_CANDIDATE_TOL
    real_certified = np.zeros(B, dtype=bool)
    cand = np.flatnonzero(real_candidate & certified) if im_params is None \
        else np.array([], dtype=int)
    if len(cand):
        sys_real = _SystemIntervals(system, complex_kind=False)
        for infl in ladder:
            if len(cand) == 0:
                break
            ok, _ = _real_certify(sys_real, points[cand], re_params, infl)
            real_certified[cand[ok]] = True
            cand = cand[~ok]

    distinct = _count_distinct(boxes, certified)

    certs = []
    for b in range(B):
        certs.append(Certificate(
            certified=bool(certified[b]),
            box=boxes[b] if certified[b] else None,
            kbox=kboxes[b] if certified[b] else None,
            real_certified=bool(real_certified[b]),
            real_candidate=bool(real_candidate[b]),
            inflation=float(used_inflation[b]) if certified[b] else float("nan"),
            reason=None if certified[b] else "no Krawczyk contraction found",
            param_digest=digest,
        ))
    return CertifySummary(
        certificates=certs,
        certified=int(certified.sum()),
        distinct=distinct,
        real_certified=int(real_certified.sum()),
        real_heuristic=int(real_candidate.sum()),
        total=B,
        param_digest=digest,
    )


def _boxes_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all((a[:, 0] <= b[:, 1]) & (b[:, 0] <= a[:, 1])
                       & (a[:, 2] <= b[:, 3]) & (b[:, 2] <= a[:, 3])))


def _count_distinct(boxes: np.ndarray, certified: np.ndarray) -> int:
    """Union-find over overlapping certified boxes; sweep on one axis."""
    idx = np.flatnonzero(certified)
    if len(idx) == 0:
        return 0
    order = idx[np.argsort(boxes[idx, 0, 0])]
    parent = {int(i): int(i) for i in idx}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    max_width = float(np.max(boxes[idx, 0, 1] - boxes[idx, 0, 0]))
    active: list[int] = []
    for i in order:
        i = int(i)
        lo = boxes[i, 0, 0]
        active = [j for j in active if boxes[j, 0, 1] >= lo - max_width]
        for j in active:
            if _boxes_overlap(boxes[i], boxes[j]):
                parent[find(i)] = find(j)
        active.append(i)
    return len({find(int(i)) for i in idx})
