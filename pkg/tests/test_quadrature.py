import numpy as np
import pytest

from rpde.quadrature import EDGE_MIDPOINT, STRANG_FIX_4, collapsed_gauss, monomial_integral


def _integrate(rule, p, q):
    x, y = rule.points.T
    return float(np.sum(rule.weights * x**p * y**q))


def test_monomial_integral():
    assert monomial_integral(0, 0) == 0.5
    assert monomial_integral(1, 0) == pytest.approx(1 / 6)
    assert monomial_integral(1, 1) == pytest.approx(1 / 24)


@pytest.mark.parametrize("rule", [EDGE_MIDPOINT, STRANG_FIX_4, collapsed_gauss(3), collapsed_gauss(6)])
def test_rule_exact_to_degree(rule):
    for p in range(rule.degree + 1):
        for q in range(rule.degree + 1 - p):
            assert _integrate(rule, p, q) == pytest.approx(monomial_integral(p, q), rel=1e-12, abs=1e-15)
    np.testing.assert_allclose(rule.barycentric.sum(axis=1), 1.0)


def test_degrees():
    assert EDGE_MIDPOINT.degree == 2
    assert STRANG_FIX_4.degree == 3
    assert collapsed_gauss(4).degree == 6
    # not exact one degree higher
    assert abs(_integrate(STRANG_FIX_4, 4, 0) - monomial_integral(4, 0)) > 1e-6
