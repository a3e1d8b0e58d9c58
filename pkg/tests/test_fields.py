import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from rpde.errors import EmbeddingError, ResourceLimitError
from rpde.estimator import stream
from rpde.fields import (
    GrfLognormal,
    ScalarLognormal,
    embed_covariance,
    gaussian_kernel,
    grid_sampler,
    restrict,
    sample_realization,
)
from rpde.mesh import build_mesh


def test_scalar_w_zero():
    real = ScalarLognormal(fixed_w=0.0).sample(2, np.random.default_rng(0))
    np.testing.assert_array_equal(real.a_vertex, 1.0)
    mesh = build_mesh(2)
    centre = np.flatnonzero((mesh.vertices == [0.5, 0.5]).all(1))[0]
    assert real.f_vertex[centre] == pytest.approx(1.0)
    assert ScalarLognormal(fixed_w=0.0).exact_h1_seminorm_sq(real) == pytest.approx(1 / (8 * np.pi**2))


@given(st.integers(0, 2**31), st.integers(0, 5))
def test_scalar_coefficient_is_constant_and_positive(seed, level):
    real = ScalarLognormal().sample(level, np.random.default_rng(seed))
    assert np.all(real.a_vertex == real.a_vertex[0]) and real.a_vertex[0] > 0
    assert real.a_vertex[0] == pytest.approx(np.exp(real.latent))


def test_scalar_latent_is_standard_normal():
    w = np.array([ScalarLognormal().sample(0, stream(5, j)).latent for j in range(4000)])
    res = stats.anderson(w, dist="norm")
    assert res.statistic < res.critical_values[2]  # 5% level
    assert abs(w.mean()) < 0.06 and abs(w.std() - 1) < 0.05


def test_restrict():
    scalar = ScalarLognormal().sample(3, np.random.default_rng(1))
    assert restrict(scalar, 3) is scalar
    coarse = restrict(scalar, 1)
    assert coarse.level == 1 and coarse.a_vertex.size == 9
    np.testing.assert_array_equal(coarse.a_vertex, scalar.a_vertex[0])
    with pytest.raises(ValueError):
        restrict(scalar, 4)

    grf = GrfLognormal().sample(4, np.random.default_rng(2))
    g3 = restrict(grf, 3)
    f4, f3 = build_mesh(4).vertices, build_mesh(3).vertices
    i4 = np.flatnonzero((f4 == [0.5, 0.5]).all(1))[0]
    i3 = np.flatnonzero((f3 == [0.5, 0.5]).all(1))[0]
    assert g3.a_vertex[i3] == grf.a_vertex[i4]
    np.testing.assert_allclose(g3.latent, np.log(g3.a_vertex), atol=1e-14)


def test_grf_realization():
    model = GrfLognormal()
    real = model.sample(3, stream(0, 1))
    assert real.a_vertex.shape == (81,)
    assert np.all(real.a_vertex > 0)
    np.testing.assert_array_equal(real.f_vertex, 1.0)
    again = model.sample(3, stream(0, 1))
    np.testing.assert_array_equal(real.a_vertex, again.a_vertex)
    assert not np.array_equal(real.a_vertex, model.sample(3, stream(0, 2)).a_vertex)
    assert not model.has_exact_oracle and ScalarLognormal().has_exact_oracle


def test_sample_realization_limit():
    with pytest.raises(ResourceLimitError):
        sample_realization(ScalarLognormal(), 5, np.random.default_rng(0), max_level=4)


def test_kernel_and_embedding():
    assert gaussian_kernel(0.0, 0.03) == 1.0
    eig, clipped = embed_covariance(17, 0.03)
    assert eig.shape == (64, 64) and np.all(eig >= 0) and clipped == 0
    implied = np.fft.ifft2(eig).real
    h = 1 / 16
    for i, j in [(0, 0), (1, 0), (2, 3), (8, 5)]:
        assert implied[i, j] == pytest.approx(gaussian_kernel((i * h) ** 2 + (j * h) ** 2, 0.03), abs=1e-12)


def test_embedding_failure_asks_for_padding():
    with pytest.raises(EmbeddingError, match="pad_factor"):
        embed_covariance(9, 1.0, pad_factor=2)
    with pytest.raises(ValueError):
        GrfLognormal(pad_factor=1)


def test_sampler_shape_and_cache():
    s = grid_sampler(9, 0.03)
    assert s is grid_sampler(9, 0.03)
    assert s.sample(np.random.default_rng(0)).shape == (9, 9)


def test_grf_covariance_at_lag_quarter():
    rng = np.random.default_rng(7)
    s = grid_sampler(5, 0.03)  # spacing 0.25
    x = np.array([s.sample(rng) for _ in range(4000)])
    pooled = np.mean(x[:, :-1, :] * x[:, 1:, :])
    assert pooled == pytest.approx(np.exp(-0.0625 / 0.03), abs=0.03)
    assert np.mean(x**2) == pytest.approx(1.0, abs=0.03)
