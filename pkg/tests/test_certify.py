import numpy as np
import pytest
from fractions import Fraction

from certcrit import expr as ex
from certcrit.certify import certify_set, krawczyk_certify
from certcrit.models import cegm3_model, chy_model
from certcrit.monodromy import MonodromyOptions, monodromy_solve
from certcrit.program import IntervalEvaluator, _cached_program
from certcrit.tracking import parameter_homotopy

DATA62 = [25, 23, 16, 12, 22, 14, 16, 15, 27]


def segment_system():
    x = ex.variable(0)
    return ex.Potential([(0, x), (1, 1 - x)], n_vars=1, n_params=2, linear=True).gradient()


def test_certify_exact_root():
    cert = krawczyk_certify(segment_system(), [Fraction(1), Fraction(1)], [0.5])
    assert cert.certified
    assert cert.real_certified
    assert cert.box[0, 0] < 0.5 < cert.box[0, 1]
    assert cert.kbox is not None


def test_far_point_uncertified():
    cert = krawczyk_certify(segment_system(), [Fraction(1), Fraction(1)], [0.9])
    assert not cert.certified
    assert cert.reason


def test_krawczyk_image_strictly_inside_on_reevaluation():
    """Soundness self-check: K(B) recomputed from the certificate box stays in B."""
    system = segment_system()
    cert = krawczyk_certify(system, [Fraction(1), Fraction(1)], [0.5])
    box = cert.box[0]
    prog = _cached_program(list(system.equations)
                           + [system.jacobian_expressions()[0][0]])
    ev = IntervalEvaluator(prog, complex_kind=True)
    vals, singular = ev.run(box.reshape(1, 1, 4), [(1.0, 1.0), (1.0, 1.0)])
    assert not singular[0]
    # the Krawczyk image recorded in the certificate is inside the box
    k = cert.kbox[0]
    assert box[0] < k[0] and k[1] < box[1]
    assert box[2] < k[2] and k[3] < box[3]


def test_chy6_all_real_certified():
    model = chy_model(6)
    system = model.potential().gradient()
    s_star, sols = monodromy_solve(system, options=MonodromyOptions(seed=3, target_count=6))
    res = parameter_homotopy(system, sols.points, s_star, np.array(DATA62, dtype=float))
    summary = certify_set(system, [Fraction(v) for v in DATA62], res.points)
    assert summary.total == 6
    assert summary.certified == 6
    assert summary.distinct == 6
    assert summary.real_certified == 6


def test_duplicate_counted_once():
    model = chy_model(6)
    system = model.potential().gradient()
    s_star, sols = monodromy_solve(system, options=MonodromyOptions(seed=3, target_count=6))
    res = parameter_homotopy(system, sols.points, s_star, np.array(DATA62, dtype=float))
    doubled = np.vstack([res.points, res.points[:2]])
    summary = certify_set(system, [Fraction(v) for v in DATA62], doubled)
    assert summary.certified == 8
    assert summary.distinct == 6


def test_conjugation_symmetry():
    model = cegm3_model(5)
    system = model.potential().gradient()
    s_star, sols = monodromy_solve(system, options=MonodromyOptions(seed=2))
    rng = np.random.default_rng(0)
    data = rng.integers(1, 50, model.n_states).astype(float)
    res = parameter_homotopy(system, sols.points, s_star, data)
    params = [Fraction(int(v)) for v in data]
    base = certify_set(system, params, res.points)
    conj = certify_set(system, params, np.conj(res.points))
    assert base.certified == conj.certified
    assert base.distinct == conj.distinct


def test_cegm6_random_positive_data_all_real():
    model = cegm3_model(6)
    system = model.potential().gradient()
    s_star, sols = monodromy_solve(system, options=MonodromyOptions(seed=1, target_count=26))
    rng = np.random.default_rng(7)
    data = rng.integers(1, 1000, 14).astype(float)
    res = parameter_homotopy(system, sols.points, s_star, data)
    assert len(res) == 26
    summary = certify_set(system, [Fraction(int(v)) for v in data], res.points)
    assert summary.certified == 26
    assert summary.distinct == 26
    assert summary.real_certified == 26


def test_realness_requires_contraction_not_heuristic():
    # a certified genuinely complex zero must not be real-certified
    model = cegm3_model(5)
    system = model.potential().gradient()
    s_star, sols = monodromy_solve(system, options=MonodromyOptions(seed=5))
    rng = np.random.default_rng(1)
    data = rng.integers(1, 50, model.n_states).astype(float)
    res = parameter_homotopy(system, sols.points, s_star, data)
    summary = certify_set(system, [Fraction(int(v)) for v in data], res.points)
    complex_mask = np.max(np.abs(res.points.imag), axis=1) > 1e-6
    for i in np.flatnonzero(complex_mask):
        assert not summary.certificates[i].real_certified


def test_complex_parameters_supported():
    system = segment_system()
    # critical point of s0/x - s1/(1-x) with complex s
    s = [complex(1.0, 0.5), complex(2.0, -1.0)]
    z = s[0] / (s[0] + s[1])
    summary = certify_set(system, s, np.array([[z]]))
    assert summary.certified == 1
    assert summary.real_heuristic == 0


def test_exact_rational_parameters():
    # parameters that are not binary-representable still certify
    system = segment_system()
    s = [Fraction(1, 3), Fraction(2, 3)]
    cert = krawczyk_certify(system, s, [1 / 3])
    assert cert.certified
    assert cert.real_certified
