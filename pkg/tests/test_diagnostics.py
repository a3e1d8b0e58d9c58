import numpy as np
import pytest

from rpde.diagnostics import (
    RateStudy,
    constraint_audit,
    cost_study,
    expected_cost_partial_sums,
    histogram,
    mse_study,
    ols_slope,
    truncated_mlmc,
    write_histogram_csv,
    write_rates_csv,
)
from rpde.errors import UnsupportedModelError
from rpde.estimator import BASELINE, PLAIN, LevelDistribution
from rpde.fem import ConstantFunctional, H1SeminormSquared
from rpde.fields import GrfLognormal, ScalarLognormal

H1 = H1SeminormSquared()


def test_ols_exact_lines():
    slope, intercept, se = ols_slope([1, 2, 3], [-4, -8, -12])
    assert slope == pytest.approx(-4.0, abs=1e-14) and intercept == pytest.approx(0.0, abs=1e-13)
    assert se == pytest.approx(0.0, abs=1e-14)
    n = np.arange(2, 7)
    assert ols_slope(n, np.log2(4.0**n))[0] == pytest.approx(2.0, abs=1e-14)
    assert np.isnan(ols_slope([1, 2], [0, 1])[2])
    with pytest.raises(ValueError):
        ols_slope([1], [1])


def test_histogram_cases(tmp_path):
    edges, counts = histogram([1, 2, 3], 3)
    np.testing.assert_array_equal(counts, [1, 1, 1])
    np.testing.assert_allclose(edges, [1, 5 / 3, 7 / 3, 3])
    _, counts = histogram([4.0] * 10, 5)
    assert np.count_nonzero(counts) == 1 and counts.sum() == 10
    _, counts = histogram([1.0, np.nan, np.inf, 2.0], 4)
    assert counts.sum() == 2
    with pytest.raises(ValueError):
        histogram([], 3)
    with pytest.raises(ValueError):
        histogram([np.nan], 3)
    with pytest.raises(ValueError):
        histogram([1.0], 0)

    values = np.random.default_rng(0).lognormal(size=10000)
    edges, counts = histogram(values, 50)
    path = tmp_path / "h.csv"
    write_histogram_csv(path, edges, counts)
    rows = path.read_text().splitlines()
    assert rows[0] == "bin_lo,bin_hi,count" and len(rows) == 51
    assert sum(int(r.split(",")[2]) for r in rows[1:]) == 10000
    np.testing.assert_allclose(np.diff(edges), np.diff(edges)[0])


def test_rates_csv(tmp_path):
    path = tmp_path / "r.csv"
    write_rates_csv(path, RateStudy(levels=[1, 2], mse=[0.5, 0.25]))
    assert path.read_text() == "level,mse,cost\n1,0.5,\n2,0.25,\n"


def test_truncated_mlmc_constant():
    res = truncated_mlmc(ScalarLognormal(), ConstantFunctional(7.0), 1, 5, baseline_mode=BASELINE, baseline_count=5)
    assert res.estimate == 7.0 and res.stderr == 0.0
    res = truncated_mlmc(ScalarLognormal(), ConstantFunctional(7.0), 3, [4, 3, 2], baseline_mode=PLAIN)
    assert res.deltas == [7.0, 0.0, 0.0] and res.estimate == 7.0
    with pytest.raises(ValueError):
        truncated_mlmc(ScalarLognormal(), H1, 3, [4, 3])
    with pytest.raises(ValueError):
        truncated_mlmc(ScalarLognormal(), H1, 0, 4)


def test_truncated_mlmc_level_variances_decrease():
    res = truncated_mlmc(ScalarLognormal(), H1, 4, 60, seed=2, baseline_mode=BASELINE, baseline_count=60, level_offset=1)
    assert all(b < a for a, b in zip(res.variances, res.variances[1:]))
    assert 0.05 < res.estimate < 0.15


def test_mse_study_rate():
    study = mse_study(ScalarLognormal(), [1, 2, 3, 4], replicates=200, seed=3)
    ratio = study.mse[1] / study.mse[3]  # levels 2 and 4
    assert 64 <= ratio <= 1024
    assert -4.6 < study.mse_slope < -3.0
    with pytest.raises(UnsupportedModelError):
        mse_study(GrfLognormal(), [1, 2, 3], replicates=2)
    with pytest.raises(ValueError):
        mse_study(ScalarLognormal(), [1, 2], replicates=2)


def test_cost_study_small():
    study = cost_study(ScalarLognormal(), [2, 3, 4], replicates=3, repeats=3)
    assert len(study.cost) == 3 and all(c > 0 for c in study.cost)
    assert study.cost[2] > study.cost[0]
    assert np.isfinite(study.cost_slope)
    with pytest.raises(ValueError):
        cost_study(ScalarLognormal(), [2, 3, 4], repeats=0)


def test_constraint_audit_and_cost_sums():
    dist = LevelDistribution()
    audit = constraint_audit(ScalarLognormal(), H1, dist, [2, 3, 4, 5], replicates=40, seed=1, level_offset=1)
    assert [a.level for a in audit] == [2, 3, 4, 5]
    assert all(a.satisfied for a in audit)
    terms = [a.variance_term for a in audit]
    assert all(b < a for a, b in zip(terms, terms[1:]))
    sums = expected_cost_partial_sums(audit)
    increments = np.diff(sums)
    assert np.all(increments > 0) and increments[-1] < 0.5 * sums[0]
