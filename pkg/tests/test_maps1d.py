import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaos_adjoint.maps1d import (KINDS, Map1D, MapDomainError, SlopeSingularityError, branch_slope,
                                  eval_map, invert_branch, map_slope, param_derivative)

CUSP = Map1D("param_cusp", 0.5)
TENT = Map1D("param_cusp", 1.0)


def test_eval_examples():
    assert eval_map(CUSP, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert eval_map(CUSP, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert eval_map(CUSP, 0.25) == pytest.approx(1 - 0.25 - 0.5 * np.sqrt(0.5), abs=1e-12)
    assert eval_map(CUSP, 0.25) == pytest.approx(0.396447, abs=1e-6)


def test_tent_identity():
    x = np.linspace(0.0, 1.0, 1001)
    np.testing.assert_allclose(eval_map(TENT, x), 1.0 - np.abs(2 * x - 1), atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_unimodal_into_unit_interval(kind):
    xi = 0.5 if kind == "param_cusp" else 0.3
    m = Map1D(kind, xi)
    x = np.linspace(0.0, 1.0, 2001)
    y = eval_map(m, x)
    assert np.all((y >= 0) & (y <= 1))
    assert np.all(np.diff(y[:1001]) > 0)
    assert np.all(np.diff(y[1000:]) < 0)


def test_domain_check():
    with pytest.raises(MapDomainError):
        eval_map(CUSP, 1.5)
    with pytest.raises(ValueError):
        Map1D("quadratic", 0.5)


def test_slope_examples():
    assert map_slope(TENT, 0.25) == pytest.approx(2.0)
    assert map_slope(TENT, 0.75) == pytest.approx(-2.0)
    # hand value: 2 (xi + (1 - xi) / (2 sqrt(u))) with u = 0.5
    expected = 2 * (0.5 + 0.5 / (2 * np.sqrt(0.5)))
    assert map_slope(CUSP, 0.25) == pytest.approx(expected, rel=1e-12)
    h = 1e-6
    fd = (eval_map(CUSP, 0.25 + h) - eval_map(CUSP, 0.25 - h)) / (2 * h)
    assert map_slope(CUSP, 0.25) == pytest.approx(fd, rel=1e-6)
    with pytest.raises(SlopeSingularityError):
        map_slope(CUSP, 0.5)


def test_inversion_examples():
    for branch in ("left", "right"):
        assert invert_branch(CUSP, 1.0, branch) == pytest.approx(0.5)
    assert invert_branch(TENT, 0.5, "left") == pytest.approx(0.25)
    assert invert_branch(CUSP, float(eval_map(CUSP, 0.25)), "left") == pytest.approx(0.25, abs=1e-10)
    with pytest.raises(MapDomainError):
        invert_branch(CUSP, 1.2, "left")


def test_param_derivative_examples():
    assert param_derivative(CUSP, 0.5) == pytest.approx(0.0, abs=1e-15)
    assert param_derivative(CUSP, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert param_derivative(CUSP, 0.25) == pytest.approx(-0.5 + np.sqrt(0.5), abs=1e-12)
    h = 1e-6
    x = np.linspace(0.01, 0.99, 50)
    fd = (eval_map(CUSP.with_xi(0.5 + h), x) - eval_map(CUSP.with_xi(0.5 - h), x)) / (2 * h)
    np.testing.assert_allclose(param_derivative(CUSP, x), fd, atol=1e-8)


@settings(max_examples=200, deadline=None)
@given(kind=st.sampled_from(KINDS), xi=st.floats(0.05, 0.95), x=st.floats(0.0, 1.0),
       branch=st.sampled_from(["left", "right"]))
def test_branch_round_trip(kind, xi, x, branch):
    m = Map1D(kind, xi)
    x = 0.5 * x if branch == "left" else 0.5 + 0.5 * x
    y = float(eval_map(m, x))
    xb = float(invert_branch(m, y, branch))
    # near the peak the slope may be unbounded; compare in y and bound x by the local slope
    assert abs(float(eval_map(m, xb)) - y) < 1e-10
    if abs(x - 0.5) > 1e-3:
        s = abs(float(branch_slope(m, x, branch)))
        assert abs(xb - x) < 1e-9 * max(1.0, 1.0 / s) + 1e-12 / max(s, 1e-12)
