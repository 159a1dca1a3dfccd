import numpy as np
import pytest
from fractions import Fraction

from certcrit import expr as ex
from certcrit.program import evaluate, jacobian, toric_hessian
from certcrit.scalars import Dual, Dual2, Interval
from certcrit.models import chy_model


def one_var_potential():
    # s0*log(x) + s1*log(1-x)
    x = ex.variable(0)
    return ex.Potential([(0, x), (1, 1 - x)], n_vars=1, n_params=2, linear=True)


def test_interning_dedup():
    a = ex.add(ex.variable(0), ex.const(1))
    b = ex.add(ex.const(1), ex.variable(0))
    assert a is b
    assert hash(a) == hash(b)
    p = ex.mul(ex.variable(1), a)
    q = ex.mul(a, ex.variable(1))
    assert p is q


def test_constant_folding_and_zero():
    z = ex.mul(ex.const(0), ex.variable(0))
    assert z.is_zero
    s = ex.add(ex.const(2), ex.const(3), ex.variable(0))
    assert any(c.kind == ex.K_CONST and c.data == 5 for c in s.children)
    with pytest.raises(ex.ExpressionError):
        ex.recip(ex.const(0))


def test_gradient_one_var_closed_form():
    sysm = one_var_potential().gradient()
    assert evaluate(sysm, [0.5], [1, 1], kind="real")[0] == pytest.approx(0.0, abs=1e-15)
    # closed form: critical point at s0/(s0+s1)
    assert evaluate(sysm, [0.25], [1, 3], kind="real")[0] == pytest.approx(0.0, abs=1e-14)


def test_gradient_constant_argument_is_zero():
    pot = ex.Potential([(0, ex.const(1))], n_vars=1, n_params=1)
    sysm = pot.gradient()
    assert evaluate(sysm, [0.3], [5], kind="real")[0] == 0.0


def test_zero_probability_rejected():
    with pytest.raises(ex.ExpressionError, match="zero"):
        ex.Potential([(0, ex.const(0))], n_vars=1, n_params=1)


def test_jacobian_one_var():
    sysm = one_var_potential().gradient()
    J = jacobian(sysm, [0.5], [1, 1], kind="real")
    assert J[0, 0] == pytest.approx(-8.0, rel=1e-14)


def test_jacobian_fd_cross_check_chy6():
    model = chy_model(6)
    sysm = model.potential().gradient()
    rng = np.random.default_rng(4)
    x = np.array([0.2, 0.45, 0.8])
    s = rng.uniform(1, 5, 9)
    J = jacobian(sysm, x, s, kind="real")
    h = 1e-6
    for k in range(3):
        dx = np.zeros(3)
        dx[k] = h
        fd = (evaluate(sysm, x + dx, s, kind="real")
              - evaluate(sysm, x - dx, s, kind="real")) / (2 * h)
        assert np.max(np.abs(J[:, k] - fd)) / max(1, np.max(np.abs(J))) < 1e-6


def test_evaluate_interval_contains_point_value():
    sysm = one_var_potential().gradient()
    iv = evaluate(sysm, [Interval(0.49, 0.51)], [1, 1], kind="real-interval")[0]
    assert 0.0 in iv


def test_singular_evaluation_error():
    sysm = one_var_potential().gradient()
    with pytest.raises(ex.SingularEvaluationError):
        evaluate(sysm, [0.0], [1, 1], kind="real")
    with pytest.raises(ex.SingularEvaluationError):
        evaluate(sysm, [Interval(-0.1, 0.1)], [1, 1], kind="real-interval")


def test_dual_directional_derivative():
    sysm = one_var_potential().gradient()
    out = evaluate(sysm, [Dual(0.3, 1.0)], [2, 1], kind="dual")[0]
    # F = 2/x - 1/(1-x); F' = -2/x^2 - 1/(1-x)^2
    assert out.val == pytest.approx(2 / 0.3 - 1 / 0.7, rel=1e-13)
    assert out.eps == pytest.approx(-2 / 0.09 - 1 / 0.49, rel=1e-13)


def test_dual2_second_derivative():
    x = ex.variable(0)
    e = ex.recip(x)  # 1/x: f'' = 2/x^3
    out = evaluate(e, [Dual2(2.0, 1.0, 0.0)], [], kind="dual2")
    assert out.val == pytest.approx(0.5)
    assert out.d1 == pytest.approx(-0.25)
    assert 2 * out.d2 == pytest.approx(2 / 8)


def test_toric_hessian_single_log_is_zero():
    pot = ex.Potential([(0, ex.variable(0))], n_vars=1, n_params=1)
    H = toric_hessian(pot, [2.0], [3.0], kind="real")
    assert abs(H[0, 0]) < 1e-14


def test_toric_hessian_symmetry_random():
    model = chy_model(5)
    pot = model.potential()
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.uniform(0.1, 0.9, 2)
        x.sort()
        s = rng.uniform(1, 10, 5)
        H = toric_hessian(pot, x, s, kind="real")
        assert np.max(np.abs(H - H.T)) <= 1e-12 * max(1.0, np.max(np.abs(H)))


def test_toric_hessian_zero_coordinate_rejected():
    pot = ex.Potential([(0, ex.variable(0))], n_vars=1, n_params=1)
    with pytest.raises(ex.SingularEvaluationError):
        toric_hessian(pot, [0.0], [1.0], kind="real")


def test_gradient_keeps_denominators_unexpanded():
    # every reciprocal child of the gradient must be one of the p_i themselves
    model = chy_model(5)
    sysm = model.potential().gradient()
    probs = {p.uid for p in model.probabilities}
    seen = set()
    stack = list(sysm.equations)
    while stack:
        e = stack.pop()
        if e.uid in seen:
            continue
        seen.add(e.uid)
        if e.kind == ex.K_RECIP:
            assert e.children[0].uid in probs
        stack.extend(e.children)


def test_arity_validation():
    with pytest.raises(ex.ExpressionError):
        ex.Potential([(0, ex.variable(3))], n_vars=2, n_params=1)
    with pytest.raises(ex.ExpressionError):
        ex.Potential([(4, ex.variable(0))], n_vars=1, n_params=2)
