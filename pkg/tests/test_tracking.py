import numpy as np
import pytest

from certcrit import expr as ex
from certcrit.models import chy_model, random_linear_model
from certcrit.monodromy import MonodromyOptions, monodromy_solve
from certcrit.program import compiled
from certcrit.tracking import (PathStatus, TrackerOptions, newton_polish,
                               parameter_homotopy, track_path)

EXAMPLE_2_2_POINTS = np.array([
    (0.240043275929170, 0.508172206739870, 0.777005866817260),
    (0.223437550855307, 0.843543048681696, 0.518706389808326),
    (0.481967726451097, 0.235545240880672, 0.781115679885971),
    (0.618277926209287, 0.851974456945199, 0.155992558374125),
    (0.861996060709608, 0.217605043343923, 0.453238947004789),
    (0.863192417250353, 0.578669456252017, 0.157960116395912),
])
DATA62 = np.array([25, 23, 16, 12, 22, 14, 16, 15, 27], dtype=float)  # lexicographic states


def segment_system():
    x = ex.variable(0)
    pot = ex.Potential([(0, x), (1, 1 - x)], n_vars=1, n_params=2, linear=True)
    return pot.gradient()


def test_track_to_closed_form():
    out = track_path(segment_system(), [0.5], [1, 1], [1, 3])
    assert out.status is PathStatus.SUCCESS
    assert out.point[0] == pytest.approx(0.25, abs=1e-11)
    assert out.t_reached == 1.0
    assert out.residual <= 1e-11


def test_identity_homotopy_is_trivial():
    out = track_path(segment_system(), [0.5], [1, 1], [1, 1])
    assert out.status is PathStatus.SUCCESS
    assert out.steps <= 1
    assert out.point[0] == pytest.approx(0.5)


def test_real_mode_closed_form():
    out = track_path(segment_system(), [0.5], [1.0, 1.0], [3.0, 1.0],
                     TrackerOptions(field="real"))
    assert out.status is PathStatus.SUCCESS
    assert out.point.dtype == np.float64
    assert out.point[0] == pytest.approx(0.75, abs=1e-11)


def test_real_mode_requires_linear_model():
    x = ex.variable(0)
    pot = ex.Potential([(0, ex.ipow(x, 2)), (1, 1 - x)], n_vars=1, n_params=2,
                       linear=False)
    with pytest.raises(ValueError, match="real-field"):
        track_path(pot.gradient(), [2 / 3], [1.0, 1.0], [2.0, 1.0],
                   TrackerOptions(field="real"))


def test_bad_start_rejected():
    with pytest.raises(ValueError, match="not a solution"):
        track_path(segment_system(), [0.9], [1, 1], [1, 3])


def test_divergence_status():
    # target (1, -1): the critical point s0/(s0+s1) escapes to infinity
    out = track_path(segment_system(), [0.5], [1, 1], [1.0, -1.0],
                     TrackerOptions())
    assert out.status in (PathStatus.DIVERGED, PathStatus.STEP_UNDERFLOW,
                          PathStatus.CORRECTOR_FAILURE, PathStatus.SINGULAR)
    assert out.t_reached < 1.0


def test_empty_start_set():
    res = parameter_homotopy(segment_system(), np.empty((0, 1)), [1, 1], [1, 2])
    assert len(res) == 0


def test_chy6_regression_against_published_table(tmp_path):
    model = chy_model(6)
    system = model.potential().gradient()
    s_star, sols = monodromy_solve(system, options=MonodromyOptions(seed=3, target_count=6))
    res = parameter_homotopy(system, sols.points, s_star, DATA62)
    assert len(res) == 6
    assert np.max(res.residuals) <= 1e-11
    for row in EXAMPLE_2_2_POINTS:
        err = min(np.max(np.abs(row - p)) for p in res.points)
        assert err < 1e-8


def test_endpoint_order_invariance():
    model = chy_model(5)
    system = model.potential().gradient()
    s_star, sols = monodromy_solve(system, options=MonodromyOptions(seed=1, target_count=2))
    target = np.array([3.0, 5.0, 2.0, 7.0, 1.0])
    a = parameter_homotopy(system, sols.points, s_star, target)
    b = parameter_homotopy(system, sols.points[::-1], s_star, target)
    for p in a.points:
        assert min(np.max(np.abs(p - q)) for q in b.points) < 1e-8


def test_all_paths_real_for_linear_model_real_mode():
    model = random_linear_model(6, 3, seed=4)
    system = model.potential().gradient()
    cp = compiled(model.potential())
    x0 = model.interior_point()
    s0 = cp.probabilities(x0)[0].real
    out = track_path(system, x0, s0, np.full(7, 1.0), TrackerOptions(field="real"))
    assert out.status is PathStatus.SUCCESS


def test_newton_polish_tightens():
    system = segment_system()
    cp = compiled(system.potential)
    pts = np.array([[0.25 + 1e-6]])
    polished, res, moved = newton_polish(cp, pts, np.array([1.0, 3.0]))
    assert res[0] < 1e-13
    assert polished[0, 0] == pytest.approx(0.25, abs=1e-12)
    assert moved[0] < 1e-5


def test_tracker_options_validation():
    with pytest.raises(ValueError):
        TrackerOptions(initial_step=0.0)
    with pytest.raises(ValueError):
        TrackerOptions(step_growth=0.5)
    with pytest.raises(ValueError):
        TrackerOptions(field="quaternion")
