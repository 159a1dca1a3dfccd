"""Compilation of expression DAGs to flat programs, plus the evaluators.

Three evaluation paths share one compiled instruction list:

* a generic scalar walk, used by the public ``evaluate``/``jacobian`` API for
  every scalar kind (real, complex, intervals, duals) with strict
  singular-evaluation errors;
* a numpy batch evaluator over float64/complex128 for path tracking, where a
  vanished denominator poisons only the affected batch entries;
* a numpy batch *interval* evaluator (outward-rounded, one ulp per
  operation) used by the Krawczyk certifier, where division by an interval
  containing zero yields the whole line so that certification fails soundly
  instead of aborting.

Slot allocation reuses registers after their last use, which keeps the
working set small even for systems with thousands of nodes.
"""

from __future__ import annotations

import math
import operator
from fractions import Fraction
from typing import Sequence

import numpy as np

from .expr import (K_CONST, K_NEG, K_PARAM, K_POW, K_PROD, K_RECIP, K_SUM,
                   K_VAR, Expression, Potential, RationalSystem,
                   SingularEvaluationError, differentiate)
from .scalars import ComplexInterval, Dual, Dual2, Interval, interval_hull

__all__ = [
    "Program",
    "compile_program",
    "evaluate",
    "jacobian",
    "toric_hessian",
    "CompiledPotential",
    "IntervalEvaluator",
    "SCALAR_KINDS",
]

OP_CONST, OP_VAR, OP_PARAM, OP_ADD, OP_MUL, OP_NEG, OP_RECIP, OP_POW = range(8)

try:  # the jit interpreter removes per-instruction Python overhead
    import numba as _numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _numba = None


class Program:
    """Topologically ordered instruction list for a set of root expressions."""

    __slots__ = ("instrs", "n_slots", "out_slots", "consts", "n_vars", "n_params")

    def __init__(self, instrs, n_slots, out_slots, consts, n_vars, n_params):
        self.instrs = instrs
        self.n_slots = n_slots
        self.out_slots = out_slots
        self.consts = consts
        self.n_vars = n_vars
        self.n_params = n_params


def compile_program(roots: Sequence[Expression]) -> Program:
    roots = list(roots)
    reachable: dict[int, Expression] = {}
    stack = list(roots)
    while stack:
        e = stack.pop()
        if e.uid in reachable:
            continue
        reachable[e.uid] = e
        stack.extend(e.children)
    order = sorted(reachable.values(), key=lambda e: e.uid)  # uid order is topological
    position = {e.uid: i for i, e in enumerate(order)}

    last_use = {}
    for e in order:
        for c in e.children:
            last_use[c.uid] = position[e.uid]
    for r in roots:
        last_use[r.uid] = len(order) + 1  # outputs stay live

    slot_of: dict[int, int] = {}
    free: list[int] = []
    n_slots = 0
    instrs = []
    consts: list[Fraction] = []
    const_index: dict[Fraction, int] = {}

    for pos, e in enumerate(order):
        args = tuple(slot_of[c.uid] for c in e.children)
        # The output must not alias any operand: n-ary accumulation reads the
        # operands after the first write.  Operand slots are recycled only
        # after the output slot is chosen.
        out = free.pop() if free else n_slots
        if out == n_slots:
            n_slots += 1
        for c in e.children:
            if last_use[c.uid] == pos:
                free.append(slot_of[c.uid])
                last_use[c.uid] = -1  # freed once even with repeated children
        slot_of[e.uid] = out
        k = e.kind
        if k == K_CONST:
            ci = const_index.get(e.data)
            if ci is None:
                ci = len(consts)
                consts.append(e.data)
                const_index[e.data] = ci
            instrs.append((OP_CONST, out, ci))
        elif k == K_VAR:
            instrs.append((OP_VAR, out, e.data))
        elif k == K_PARAM:
            instrs.append((OP_PARAM, out, e.data))
        elif k == K_SUM:
            instrs.append((OP_ADD, out, args))
        elif k == K_PROD:
            instrs.append((OP_MUL, out, args))
        elif k == K_NEG:
            instrs.append((OP_NEG, out, args[0]))
        elif k == K_RECIP:
            instrs.append((OP_RECIP, out, args[0]))
        elif k == K_POW:
            instrs.append((OP_POW, out, args[0], e.data))
        else:
            raise AssertionError(k)

    out_slots = [slot_of[r.uid] for r in roots]
    nv = max((e.vmax for e in order), default=-1) + 1
    npar = max((e.pmax for e in order), default=-1) + 1
    return Program(instrs, n_slots, out_slots, consts, nv, npar)


_program_cache: dict[tuple[int, ...], Program] = {}


def _cached_program(roots: Sequence[Expression]) -> Program:
    key = tuple(r.uid for r in roots)
    prog = _program_cache.get(key)
    if prog is None:
        prog = compile_program(roots)
        _program_cache[key] = prog
    return prog


# --------------------------------------------------------------------------
# Generic scalar evaluation (strict error semantics)


class _Kind:
    __slots__ = ("name", "from_const", "lift", "recip")

    def __init__(self, name, from_const, lift, recip):
        self.name = name
        self.from_const = from_const
        self.lift = lift
        self.recip = recip


def _recip_number(a):
    if a == 0:
        raise SingularEvaluationError("division by zero")
    return 1.0 / a if not isinstance(a, complex) else 1.0 / a


def _lift_num(kind):
    def lift(v):
        if isinstance(v, Fraction):
            return kind(v if kind is float else float(v))
        return kind(v)
    return lift


SCALAR_KINDS = {
    "real": _Kind("real", float, _lift_num(float), _recip_number),
    "complex": _Kind("complex", lambda q: complex(float(q)), _lift_num(complex), _recip_number),
    "real-interval": _Kind("real-interval", interval_hull,
                           lambda v: v if isinstance(v, Interval) else interval_hull(v),
                           lambda a: a.reciprocal()),
    "complex-interval": _Kind("complex-interval", ComplexInterval.from_exact,
                              lambda v: v if isinstance(v, ComplexInterval)
                              else ComplexInterval.from_value(complex(v)) if isinstance(v, complex)
                              else ComplexInterval.from_exact(v),
                              lambda a: a.reciprocal()),
    "dual": _Kind("dual", lambda q: Dual(float(q)),
                  lambda v: v if isinstance(v, Dual) else Dual(complex(v).real if not isinstance(v, complex) else v)
                  if not isinstance(v, Fraction) else Dual(float(v)),
                  lambda a: a.reciprocal()),
    "dual2": _Kind("dual2", lambda q: Dual2(float(q)),
                   lambda v: v if isinstance(v, Dual2) else Dual2(float(v) if isinstance(v, Fraction) else v),
                   lambda a: a.reciprocal()),
}


def run_generic(program: Program, kind: _Kind, x, s):
    consts = [kind.from_const(c) for c in program.consts]
    xs = [kind.lift(v) for v in x]
    ss = [kind.lift(v) for v in s]
    slots = [None] * program.n_slots
    recip_ = kind.recip
    for ins in program.instrs:
        op = ins[0]
        if op == OP_ADD:
            acc = None
            for a in ins[2]:
                acc = slots[a] if acc is None else acc + slots[a]
            slots[ins[1]] = acc
        elif op == OP_MUL:
            acc = None
            for a in ins[2]:
                acc = slots[a] if acc is None else acc * slots[a]
            slots[ins[1]] = acc
        elif op == OP_RECIP:
            slots[ins[1]] = recip_(slots[ins[2]])
        elif op == OP_NEG:
            slots[ins[1]] = -slots[ins[2]]
        elif op == OP_POW:
            slots[ins[1]] = slots[ins[2]] ** ins[3]
        elif op == OP_CONST:
            slots[ins[1]] = consts[ins[2]]
        elif op == OP_VAR:
            slots[ins[1]] = xs[ins[2]]
        elif op == OP_PARAM:
            slots[ins[1]] = ss[ins[2]]
        else:
            raise AssertionError(op)
    return [slots[o] for o in program.out_slots]


def _check_arity(program, x, s, what):
    if len(x) < program.n_vars:
        raise ValueError(f"{what}: point has {len(x)} coordinates, need {program.n_vars}")
    if len(s) < program.n_params:
        raise ValueError(f"{what}: parameter vector has {len(s)} entries, need {program.n_params}")


def _roots_of(system):
    if isinstance(system, RationalSystem):
        return list(system.equations)
    if isinstance(system, Expression):
        return [system]
    return list(system)


def evaluate(system, x, s=(), kind: str = "complex"):
    """Evaluate a system (or expression list) at a point, in the given scalar kind.

    Interval kinds return enclosures; a vanishing denominator (or an interval
    containing zero) raises :class:`SingularEvaluationError`.
    """
    roots = _roots_of(system)
    prog = _cached_program(roots)
    _check_arity(prog, x, s, "evaluate")
    k = SCALAR_KINDS[kind]
    vals = run_generic(prog, k, x, s)
    if isinstance(system, Expression):
        return vals[0]
    if kind in ("real", "complex"):
        return np.asarray(vals, dtype=np.float64 if kind == "real" else np.complex128)
    return vals


def jacobian(system: RationalSystem, x, s=(), kind: str = "complex"):
    """Jacobian matrix dF_i/dx_j of a rational system at a point."""
    jac = system.jacobian_expressions()
    d = system.n_vars
    roots = [jac[i][j] for i in range(d) for j in range(d)]
    prog = _cached_program(roots)
    _check_arity(prog, x, s, "jacobian")
    vals = run_generic(prog, SCALAR_KINDS[kind], x, s)
    if kind in ("real", "complex"):
        arr = np.asarray(vals, dtype=np.float64 if kind == "real" else np.complex128)
        return arr.reshape(d, d)
    return [[vals[i * d + j] for j in range(d)] for i in range(d)]


def toric_hessian(potential: Potential, x, s, kind: str = "complex"):
    """Matrix of second Euler derivatives (x_i d_i)(x_j d_j) L at a point.

    Requires every coordinate nonzero; at a critical point the first-order
    term vanishes and H_ij = x_i x_j d2L/dx_i dx_j.
    """
    x = np.asarray(x, dtype=np.complex128 if kind == "complex" else np.float64)
    if np.any(x == 0):
        raise SingularEvaluationError("toric Hessian needs all coordinates nonzero")
    system = potential.gradient()
    g = evaluate(system, x, s, kind=kind)
    jac = jacobian(system, x, s, kind=kind)
    h = x[:, None] * x[None, :] * jac
    h[np.arange(len(x)), np.arange(len(x))] += x * g
    return h


# --------------------------------------------------------------------------
# Batched floating-point evaluation


if _numba is not None:

    @_numba.njit(cache=True, error_model="numpy", fastmath=False)
    def _run_kernel(ops, outs, extra, args, argptr, consts, xT, sT, buf):
        n_instr = len(ops)
        B = buf.shape[1]
        for i in range(n_instr):
            op = ops[i]
            o = outs[i]
            if op == 3:  # ADD
                a0 = args[argptr[i]]
                a1 = args[argptr[i] + 1]
                for b in range(B):
                    buf[o, b] = buf[a0, b] + buf[a1, b]
                for t in range(argptr[i] + 2, argptr[i + 1]):
                    a = args[t]
                    for b in range(B):
                        buf[o, b] += buf[a, b]
            elif op == 4:  # MUL
                a0 = args[argptr[i]]
                a1 = args[argptr[i] + 1]
                for b in range(B):
                    buf[o, b] = buf[a0, b] * buf[a1, b]
                for t in range(argptr[i] + 2, argptr[i + 1]):
                    a = args[t]
                    for b in range(B):
                        buf[o, b] *= buf[a, b]
            elif op == 6:  # RECIP
                a = args[argptr[i]]
                for b in range(B):
                    buf[o, b] = 1.0 / buf[a, b]
            elif op == 5:  # NEG
                a = args[argptr[i]]
                for b in range(B):
                    buf[o, b] = -buf[a, b]
            elif op == 7:  # POW
                a = args[argptr[i]]
                k = extra[i]
                for b in range(B):
                    v = buf[a, b]
                    acc = v
                    for _ in range(k - 1):
                        acc = acc * v
                    buf[o, b] = acc
            elif op == 0:  # CONST
                c = consts[extra[i]]
                for b in range(B):
                    buf[o, b] = c
            elif op == 1:  # VAR
                v = extra[i]
                for b in range(B):
                    buf[o, b] = xT[v, b]
            else:  # PARAM
                p = extra[i]
                for b in range(B):
                    buf[o, b] = sT[p, b]


class BatchEvaluator:
    """Evaluate a program on a batch of points with numpy arrays.

    Division by zero and overflow poison the affected entries with inf/nan,
    which callers detect through finiteness masks; no exception is raised.
    A jit-compiled interpreter handles the instruction stream when numba is
    available, which matters for the small batches of monodromy loops.
    """

    def __init__(self, program: Program):
        self.program = program
        self._consts_f = np.array([float(c) for c in program.consts])
        self._consts_c = self._consts_f.astype(np.complex128)
        ops, outs, extra, args, argptr = [], [], [], [], [0]
        for ins in program.instrs:
            ops.append(ins[0])
            outs.append(ins[1])
            if ins[0] in (OP_ADD, OP_MUL):
                args.extend(ins[2])
                extra.append(0)
            elif ins[0] in (OP_NEG, OP_RECIP):
                args.append(ins[2])
                extra.append(0)
            elif ins[0] == OP_POW:
                args.append(ins[2])
                extra.append(ins[3])
            else:  # CONST / VAR / PARAM
                extra.append(ins[2])
            argptr.append(len(args))
        self._ops = np.array(ops, dtype=np.int64)
        self._outs = np.array(outs, dtype=np.int64)
        self._extra = np.array(extra, dtype=np.int64)
        self._args = np.array(args, dtype=np.int64)
        self._argptr = np.array(argptr, dtype=np.int64)
        self._out_slots = np.array(program.out_slots, dtype=np.int64)

    def run(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        """x: (B, n_vars); s: (n_params,) or (B, n_params). Returns (n_roots, B)."""
        prog = self.program
        B = x.shape[0]
        s = np.asarray(s)
        dtype = np.result_type(x.dtype, s.dtype) if s.size else np.dtype(x.dtype)
        if dtype not in (np.dtype(np.float64), np.dtype(np.complex128)):
            dtype = np.complex128
        consts = self._consts_c if dtype == np.complex128 else self._consts_f
        xT = np.ascontiguousarray(x.T.astype(dtype, copy=False))
        if s.ndim == 1:
            sT = np.ascontiguousarray(np.broadcast_to(s[:, None], (s.shape[0], B))
                                      .astype(dtype, copy=False)) if s.size else \
                np.empty((0, B), dtype=dtype)
        else:
            sT = np.ascontiguousarray(s.T.astype(dtype, copy=False))
        buf = np.empty((prog.n_slots, B), dtype=dtype)
        if _numba is not None:
            _run_kernel(self._ops, self._outs, self._extra, self._args,
                        self._argptr, consts, xT, sT, buf)
            return buf[self._out_slots].copy()
        return self._run_numpy(buf, consts, xT, s, sT)

    def _run_numpy(self, buf, consts, xT, s, sT):
        prog = self.program
        with np.errstate(all="ignore"):
            for ins in prog.instrs:
                op = ins[0]
                if op == OP_ADD:
                    args = ins[2]
                    out = buf[ins[1]]
                    np.add(buf[args[0]], buf[args[1]], out=out)
                    for a in args[2:]:
                        np.add(out, buf[a], out=out)
                elif op == OP_MUL:
                    args = ins[2]
                    out = buf[ins[1]]
                    np.multiply(buf[args[0]], buf[args[1]], out=out)
                    for a in args[2:]:
                        np.multiply(out, buf[a], out=out)
                elif op == OP_RECIP:
                    np.divide(1.0, buf[ins[2]], out=buf[ins[1]])
                elif op == OP_NEG:
                    np.negative(buf[ins[2]], out=buf[ins[1]])
                elif op == OP_POW:
                    a, k = ins[2], ins[3]
                    if k == 2:
                        np.multiply(buf[a], buf[a], out=buf[ins[1]])
                    else:
                        np.power(buf[a], k, out=buf[ins[1]])
                elif op == OP_CONST:
                    buf[ins[1]][:] = consts[ins[2]]
                elif op == OP_VAR:
                    buf[ins[1]][:] = xT[ins[2]]
                else:
                    buf[ins[1]][:] = sT[ins[2]]
            return buf[prog.out_slots].copy()


# --------------------------------------------------------------------------
# Batched interval evaluation


_NEG_INF = -math.inf
_POS_INF = math.inf


def _widen(lo, hi):
    np.nextafter(lo, _NEG_INF, out=lo)
    np.nextafter(hi, _POS_INF, out=hi)


def _iv_add(al, ah, bl, bh, ol, oh):
    np.add(al, bl, out=ol)
    np.add(ah, bh, out=oh)
    _widen(ol, oh)


def _iv_sub(al, ah, bl, bh, ol, oh, t):
    np.subtract(al, bh, out=t)
    np.subtract(ah, bl, out=oh)
    ol[:] = t
    _widen(ol, oh)


def _iv_neg(al, ah, ol, oh, t):
    np.negative(ah, out=t)
    np.negative(al, out=oh)
    ol[:] = t


def _iv_mul(al, ah, bl, bh, ol, oh, t4):
    np.multiply(al, bl, out=t4[0])
    np.multiply(al, bh, out=t4[1])
    np.multiply(ah, bl, out=t4[2])
    np.multiply(ah, bh, out=t4[3])
    np.minimum(t4[0], t4[1], out=ol)
    np.minimum(ol, t4[2], out=ol)
    np.minimum(ol, t4[3], out=ol)
    np.maximum(t4[0], t4[1], out=oh)
    np.maximum(oh, t4[2], out=oh)
    np.maximum(oh, t4[3], out=oh)
    _widen(ol, oh)


def _iv_sq(al, ah, ol, oh, t4):
    np.abs(al, out=t4[0])
    np.abs(ah, out=t4[1])
    np.maximum(t4[0], t4[1], out=t4[2])
    np.minimum(t4[0], t4[1], out=t4[3])
    zero_in = (al <= 0.0) & (ah >= 0.0)
    np.multiply(t4[3], t4[3], out=ol)
    ol[zero_in] = 0.0
    np.multiply(t4[2], t4[2], out=oh)
    _widen(ol, oh)
    np.maximum(ol, 0.0, out=ol)


def _iv_recip(al, ah, ol, oh, singular_out):
    bad = (al <= 0.0) & (ah >= 0.0)
    with np.errstate(all="ignore"):
        lo = 1.0 / ah
        hi = 1.0 / al
    _widen(lo, hi)
    lo[bad] = _NEG_INF
    hi[bad] = _POS_INF
    ol[:] = lo
    oh[:] = hi
    if singular_out is not None:
        singular_out |= bad


class IntervalEvaluator:
    """Batched interval evaluation of a program, real or complex rectangles.

    Input boxes are arrays of shape (B, n_vars, 2) for real kind and
    (B, n_vars, 4) for complex (re_lo, re_hi, im_lo, im_hi); parameters are
    exact rationals or (lo, hi) pairs shared by the whole batch.  Division by
    an interval containing zero returns the whole line and records the batch
    entries in ``singular_mask``.
    """

    def __init__(self, program: Program, complex_kind: bool):
        self.program = program
        self.complex_kind = complex_kind
        self._consts = [interval_hull(c) for c in program.consts]

    def run(self, boxes: np.ndarray, params) -> tuple[np.ndarray, np.ndarray]:
        """Returns (values (n_roots, B, 2 or 4), singular_mask (B,))."""
        prog = self.program
        B = boxes.shape[0]
        width = 4 if self.complex_kind else 2
        RL = np.empty((prog.n_slots, B))
        RH = np.empty((prog.n_slots, B))
        if self.complex_kind:
            IL = np.empty((prog.n_slots, B))
            IH = np.empty((prog.n_slots, B))
        singular = np.zeros(B, dtype=bool)
        t = [np.empty(B) for _ in range(12)]
        t4a, t4b = t[0:4], t[4:8]
        ta, tb, tc, td = t[8], t[9], t[10], t[11]

        pvals = [self._param_interval(p) for p in params]

        def cmul(orl, orh, oil, oih, arl, arh, ail, aih, brl, brh, bil, bih):
            # out_re = a.re*b.re - a.im*b.im ; out_im = a.re*b.im + a.im*b.re
            _iv_mul(arl, arh, brl, brh, t4b[0], t4b[1], t4a)
            _iv_mul(ail, aih, bil, bih, t4b[2], t4b[3], t4a)
            _iv_sub(t4b[0], t4b[1], t4b[2], t4b[3], ta, tb, tc)
            _iv_mul(arl, arh, bil, bih, t4b[0], t4b[1], t4a)
            _iv_mul(ail, aih, brl, brh, t4b[2], t4b[3], t4a)
            _iv_add(t4b[0], t4b[1], t4b[2], t4b[3], oil, oih)
            orl[:] = ta
            orh[:] = tb

        with np.errstate(all="ignore"):
            for ins in prog.instrs:
                op = ins[0]
                o = ins[1]
                if op == OP_ADD:
                    args = ins[2]
                    a0, a1 = args[0], args[1]
                    _iv_add(RL[a0], RH[a0], RL[a1], RH[a1], RL[o], RH[o])
                    if self.complex_kind:
                        _iv_add(IL[a0], IH[a0], IL[a1], IH[a1], IL[o], IH[o])
                    for a in args[2:]:
                        _iv_add(RL[o], RH[o], RL[a], RH[a], RL[o], RH[o])
                        if self.complex_kind:
                            _iv_add(IL[o], IH[o], IL[a], IH[a], IL[o], IH[o])
                elif op == OP_MUL:
                    args = ins[2]
                    a0 = args[0]
                    crl, crh = RL[a0].copy(), RH[a0].copy()
                    if self.complex_kind:
                        cil, cih = IL[a0].copy(), IH[a0].copy()
                    for a in args[1:]:
                        if self.complex_kind:
                            cmul(crl, crh, cil, cih, crl, crh, cil, cih,
                                 RL[a], RH[a], IL[a], IH[a])
                        else:
                            _iv_mul(crl, crh, RL[a], RH[a], ta, tb, t4a)
                            crl, crh = ta.copy(), tb.copy()
                    RL[o], RH[o] = crl, crh
                    if self.complex_kind:
                        IL[o], IH[o] = cil, cih
                elif op == OP_RECIP:
                    a = ins[2]
                    if self.complex_kind:
                        # 1/z = conj(z)/|z|^2
                        _iv_sq(RL[a], RH[a], t4b[0], t4b[1], t4a)
                        _iv_sq(IL[a], IH[a], t4b[2], t4b[3], t4a)
                        _iv_add(t4b[0], t4b[1], t4b[2], t4b[3], ta, tb)
                        _iv_recip(ta, tb, tc, td, singular)
                        _iv_mul(RL[a], RH[a], tc, td, t4b[0], t4b[1], t4a)
                        _iv_neg(IL[a], IH[a], t4b[2], t4b[3], ta)
                        _iv_mul(t4b[2], t4b[3], tc, td, IL[o], IH[o], t4a)
                        RL[o], RH[o] = t4b[0].copy(), t4b[1].copy()
                    else:
                        _iv_recip(RL[a], RH[a], RL[o], RH[o], singular)
                elif op == OP_NEG:
                    a = ins[2]
                    _iv_neg(RL[a], RH[a], RL[o], RH[o], ta)
                    if self.complex_kind:
                        _iv_neg(IL[a], IH[a], IL[o], IH[o], ta)
                elif op == OP_POW:
                    a, k = ins[2], ins[3]
                    if self.complex_kind:
                        crl, crh = RL[a].copy(), RH[a].copy()
                        cil, cih = IL[a].copy(), IH[a].copy()
                        for _ in range(k - 1):
                            cmul(crl, crh, cil, cih, crl, crh, cil, cih,
                                 RL[a], RH[a], IL[a], IH[a])
                        RL[o], RH[o], IL[o], IH[o] = crl, crh, cil, cih
                    else:
                        if k == 2:
                            _iv_sq(RL[a], RH[a], RL[o], RH[o], t4a)
                        else:
                            crl, crh = RL[a].copy(), RH[a].copy()
                            for _ in range(k - 1):
                                _iv_mul(crl, crh, RL[a], RH[a], ta, tb, t4a)
                                crl, crh = ta.copy(), tb.copy()
                            if k % 2 == 0:
                                np.maximum(crl, 0.0, out=crl)
                            RL[o], RH[o] = crl, crh
                elif op == OP_CONST:
                    c = self._consts[ins[2]]
                    RL[o][:] = c.lo
                    RH[o][:] = c.hi
                    if self.complex_kind:
                        IL[o][:] = 0.0
                        IH[o][:] = 0.0
                elif op == OP_VAR:
                    i = ins[2]
                    RL[o][:] = boxes[:, i, 0]
                    RH[o][:] = boxes[:, i, 1]
                    if self.complex_kind:
                        IL[o][:] = boxes[:, i, 2]
                        IH[o][:] = boxes[:, i, 3]
                elif op == OP_PARAM:
                    lo, hi = pvals[ins[2]]
                    RL[o][:] = lo
                    RH[o][:] = hi
                    if self.complex_kind:
                        IL[o][:] = 0.0
                        IH[o][:] = 0.0
                else:
                    raise AssertionError(op)

        outs = prog.out_slots
        vals = np.empty((len(outs), B, width))
        for i, slot in enumerate(outs):
            vals[i, :, 0] = RL[slot]
            vals[i, :, 1] = RH[slot]
            if self.complex_kind:
                vals[i, :, 2] = IL[slot]
                vals[i, :, 3] = IH[slot]
        return vals, singular

    @staticmethod
    def _param_interval(p) -> tuple[float, float]:
        if isinstance(p, tuple):
            return p
        iv = interval_hull(p)
        return iv.lo, iv.hi


# --------------------------------------------------------------------------
# Structured evaluation of potential gradients


class CompiledPotential:
    """Fast batched F and J for the gradient of a potential.

    F_j = sum_i s_i * (d_j p_i) / p_i and its x-Jacobian are assembled from
    the probability values P, first derivatives D and second derivatives S2,
    all evaluated in one program pass; constant derivative entries (linear
    and bilinear families) are folded out of the program entirely.
    """

    def __init__(self, potential: Potential):
        self.potential = potential
        self.d = potential.n_vars
        self.n = len(potential.terms)
        self.n_params = potential.n_params
        self.sidx = np.array([i for i, _ in potential.terms])
        d, n = self.d, self.n

        p_exprs = [arg for _, arg in potential.terms]
        d_exprs = [[differentiate(p, j) for j in range(d)] for p in p_exprs]
        s_exprs = [[[differentiate(d_exprs[i][j], k) for k in range(d)]
                    for j in range(d)] for i in range(n)]

        self._d_const = np.zeros((n, d))
        self._s2_const = np.zeros((n, d, d))
        dyn: list[Expression] = []
        dyn_index: dict[int, int] = {}

        def register(e: Expression) -> int:
            idx = dyn_index.get(e.uid)
            if idx is None:
                idx = len(dyn)
                dyn.append(e)
                dyn_index[e.uid] = idx
            return idx

        self._p_slots = [register(p) for p in p_exprs]
        self._d_slots = {}
        self._s2_slots = {}
        for i in range(n):
            for j in range(d):
                e = d_exprs[i][j]
                if e.is_constant:
                    self._d_const[i, j] = float(e.data)
                else:
                    self._d_slots[(i, j)] = register(e)
                for k in range(d):
                    e2 = s_exprs[i][j][k]
                    if e2.is_constant:
                        self._s2_const[i, j, k] = float(e2.data)
                    else:
                        self._s2_slots[(i, j, k)] = register(e2)

        self.second_order_constant = not self._s2_slots
        self.second_order_zero = self.second_order_constant and not self._s2_const.any()
        self._program = compile_program(dyn)
        self._batch = BatchEvaluator(self._program)

    # -- core evaluation -------------------------------------------------

    def core(self, x: np.ndarray, need_s2: bool = True):
        """Evaluate P (B,n), D (B,n,d) and S2 (B,n,d,d) or a shared constant."""
        x = np.atleast_2d(np.asarray(x))
        B = x.shape[0]
        rows = self._batch.run(x, np.empty(0))
        dtype = rows.dtype
        P = np.empty((B, self.n), dtype=dtype)
        for i, slot in enumerate(self._p_slots):
            P[:, i] = rows[slot]
        if self._d_slots:
            D = np.empty((B, self.n, self.d), dtype=dtype)
            D[:] = self._d_const
            for (i, j), slot in self._d_slots.items():
                D[:, i, j] = rows[slot]
        else:
            D = np.broadcast_to(self._d_const, (B, self.n, self.d))
        if not need_s2 or self.second_order_zero:
            return P, D, None
        if self.second_order_constant:
            return P, D, self._s2_const
        S2 = np.empty((B, self.n, self.d, self.d), dtype=dtype)
        S2[:] = self._s2_const
        for (i, j, k), slot in self._s2_slots.items():
            S2[:, i, j, k] = rows[slot]
        return P, D, S2

    def _weights(self, s, B, dtype):
        s = np.asarray(s)
        if s.ndim == 1:
            w = s[self.sidx]
            return np.broadcast_to(w, (B, self.n)).astype(dtype, copy=False)
        return s[:, self.sidx].astype(dtype, copy=False)

    def assemble_f(self, P, D, s):
        B = P.shape[0]
        dtype = np.result_type(P.dtype, np.asarray(s).dtype)
        W = self._weights(s, B, dtype)
        G = D / P[:, :, None]
        return np.einsum("bi,bij->bj", W, G)

    def assemble_fj(self, P, D, S2, s):
        B = P.shape[0]
        dtype = np.result_type(P.dtype, np.asarray(s).dtype)
        W = self._weights(s, B, dtype)
        G = D / P[:, :, None]
        F = np.einsum("bi,bij->bj", W, G)
        U = W / P
        if S2 is None:
            J = np.zeros((B, self.d, self.d), dtype=F.dtype)
        elif S2.ndim == 3:  # constant second derivatives shared across the batch
            J = np.tensordot(U, S2, axes=([1], [0]))
        else:
            J = np.einsum("bi,bijk->bjk", U, S2)
        GW = G * W[:, :, None]
        J = J - np.matmul(np.swapaxes(G, 1, 2), GW)
        return F, J

    # -- public workhorses -------------------------------------------------

    def f(self, x, s):
        P, D, _ = self.core(x, need_s2=False)
        return self.assemble_f(P, D, s)

    def fj(self, x, s):
        P, D, S2 = self.core(x, need_s2=True)
        return self.assemble_fj(P, D, S2, s)

    def fj2(self, x, s_for_j, s_for_f):
        """Jacobian at one parameter vector, RHS values at another.

        Gradient systems are linear in s, so F(x, s' - s) is exactly
        J_s @ (s' - s); both come from a single program pass.
        """
        P, D, S2 = self.core(x, need_s2=True)
        _, J = self.assemble_fj(P, D, S2, s_for_j)
        F = self.assemble_f(P, D, s_for_f)
        return F, J

    def probabilities(self, x):
        P, _, _ = self.core(np.atleast_2d(x), need_s2=False)
        return P

    def toric_hessian(self, x, s):
        """Batched matrix of second Euler derivatives at points x (B, d)."""
        x = np.atleast_2d(np.asarray(x))
        F, J = self.fj(x, s)
        H = x[:, :, None] * x[:, None, :] * J
        idx = np.arange(self.d)
        H[:, idx, idx] += x * F
        return H

    def residuals(self, x, s):
        """Scaled sup-norm residuals ||F||_inf / max(1, ||s||_inf)."""
        F = self.f(np.atleast_2d(x), s)
        scale = max(1.0, float(np.max(np.abs(np.asarray(s)))))
        with np.errstate(invalid="ignore"):
            r = np.max(np.abs(F), axis=1) / scale
        r[~np.isfinite(r)] = np.inf
        return r


_compiled_cache: dict[int, CompiledPotential] = {}


def compiled(potential: Potential) -> CompiledPotential:
    cp = _compiled_cache.get(id(potential))
    if cp is None or cp.potential is not potential:
        cp = CompiledPotential(potential)
        _compiled_cache[id(potential)] = cp
    return cp
