import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eigencollide.errors import DomainError, ResourceError
from eigencollide.field import (CovarianceKernel, GridSpec, HurstVector, kernel_eval, sample_field,
                                structure_check)

hurst = st.floats(0.05, 0.95)
coord = st.floats(0.0, 5.0)


def test_hurst_vector_validates():
    with pytest.raises(DomainError):
        HurstVector((0.5, 1.0))
    with pytest.raises(DomainError):
        HurstVector(())
    h = HurstVector((0.25, 0.5))
    assert h.q == 6.0 and h.q >= h.n


def test_grid_budget_and_domain():
    with pytest.raises(ResourceError):
        GridSpec.cube(2, resolution=100)
    with pytest.raises(DomainError):
        GridSpec((-1.0,), (1.0,), (4,))
    g = GridSpec.cube(2, resolution=(3, 4))
    pts = g.points()
    assert pts.shape == (12, 2)
    # row-major: the last axis varies fastest
    assert np.allclose(pts[1], [1.0, 4.0 / 3.0])


def test_kernel_examples():
    bm = CovarianceKernel.isotropic(0.5)
    assert kernel_eval(bm, 0.3, 0.7) == pytest.approx(0.3, abs=1e-15)
    k = CovarianceKernel.isotropic(0.25)
    # 1/2 (1 + sqrt(2) - 1) = 2^-1/2
    assert kernel_eval(k, 1.0, 2.0) == pytest.approx(0.7071067811865476, rel=1e-14)
    with pytest.raises(DomainError):
        kernel_eval(k, -0.1, 1.0)


@given(h=hurst, t=st.lists(coord, min_size=2, max_size=2))
def test_kernel_diagonal_is_norm_power(h, t):
    k = CovarianceKernel.isotropic(h, 2)
    assert kernel_eval(k, t, t) == pytest.approx(np.linalg.norm(t) ** (2 * h), rel=1e-12, abs=1e-300)


@given(h1=hurst, h2=hurst, s=st.lists(coord, min_size=2, max_size=2), t=st.lists(coord, min_size=2, max_size=2))
def test_kernel_symmetry(h1, h2, s, t):
    for k in (CovarianceKernel.isotropic(h1, 2), CovarianceKernel.sheet((h1, h2))):
        assert kernel_eval(k, s, t) == kernel_eval(k, t, s)


@given(h=hurst, s=st.floats(0.0, 3.0), t=st.floats(0.0, 3.0))
def test_increment_variance_scaling_law(h, s, t):
    k = CovarianceKernel.isotropic(h)
    inc = kernel_eval(k, s, s) + kernel_eval(k, t, t) - 2 * kernel_eval(k, s, t)
    assert inc == pytest.approx(abs(s - t) ** (2 * h), rel=1e-12, abs=1e-12)


def test_gram_matrices_are_psd():
    rng = np.random.default_rng(5)
    for i in range(100):
        n = 1 + i % 2
        h = tuple(rng.uniform(0.05, 0.95, size=n))
        k = CovarianceKernel.sheet(h) if i % 3 == 0 else CovarianceKernel.isotropic(h[0], n)
        pts = rng.uniform(0.0, 3.0, size=(int(rng.integers(2, 65)), n))
        g = k.matrix(pts, pts)
        assert np.min(np.linalg.eigvalsh(g)) >= -1e-9 * np.max(np.diag(g))


def test_structure_check_examples():
    grid1 = GridSpec.cube(1, resolution=64)
    rep = structure_check(CovarianceKernel.isotropic(0.3), grid1)
    assert rep.passed
    assert np.allclose(rep.increment_ratios, 1.0, rtol=1e-12, atol=0)
    for h in (0.2, 0.7):
        rep2 = structure_check(CovarianceKernel.isotropic(h, 2), GridSpec.cube(2, resolution=16))
        assert rep2.passed
        assert np.all(rep2.increment_ratios >= 2 ** (h - 1) - 1e-12)
        assert np.all(rep2.increment_ratios <= 1 + 1e-12)
    rep3 = structure_check(CovarianceKernel.sheet((0.3, 0.6)), GridSpec.cube(2, resolution=16))
    assert rep3.passed


def test_brownian_conditional_variance_closed_form():
    k = CovarianceKernel.isotropic(0.5)
    css, ctt, cst = kernel_eval(k, 1, 1), kernel_eval(k, 2, 2), kernel_eval(k, 1, 2)
    assert (ctt - cst ** 2 / css) / abs(2 - 1) == pytest.approx(1.0, abs=1e-15)


def test_structure_check_reports_a1_failure_at_origin():
    rep = structure_check(CovarianceKernel.isotropic(0.4), GridSpec((0.0,), (1.0,), (8,)), pair_budget=400)
    assert not rep.passed
    assert "(A1)" in rep.failure


def test_sample_field_determinism_and_shape():
    k = CovarianceKernel.sheet((0.3, 0.7))
    g = GridSpec.cube(2, resolution=(5, 6))
    a = sample_field(k, g, seed=11)
    b = sample_field(k, g, seed=11)
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == (30,)
    assert not np.array_equal(a.values, sample_field(k, g, seed=12).values)
    with pytest.raises(ValueError):
        a.values[0] = 1.0


def test_brownian_increment_variance_monte_carlo():
    k = CovarianceKernel.isotropic(0.5)
    g = GridSpec.cube(1, resolution=2 ** 10)
    inc = np.array([np.diff(sample_field(k, g, 3, key=(r,)).values[[0, -1]])[0] for r in range(2000)])
    assert abs(inc.var() - 1.0) <= 0.15


def test_fbm_endpoint_correlation_monte_carlo():
    k = CovarianceKernel.isotropic(0.25)
    g = GridSpec.cube(1, resolution=2)
    vals = np.array([sample_field(k, g, 4, key=(r,)).values for r in range(2000)])
    corr = np.corrcoef(vals.T)[0, 1]
    # C(1,2) / sqrt(C(1,1) C(2,2)) = 2^-0.5 / 2^0.25
    assert abs(corr - 0.5946035575013605) <= 0.05


def test_field_csv(tmp_path):
    f = sample_field(CovarianceKernel.isotropic(0.4, 2), GridSpec.cube(2, resolution=3), seed=1)
    f.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "t_1,t_2,value"
    assert len(lines) == 10
    assert float(lines[1].split(",")[-1]) == f.values[0]


def test_conditional_sampler_reproduces_joint_law():
    from eigencollide.field import ConditionalSampler, grid_factor
    k = CovarianceKernel.isotropic(0.3)
    g = GridSpec.cube(1, resolution=9)
    base = g.points()
    new1 = np.array([[1.0625], [1.5625]])
    new2 = np.array([[1.03125], [1.9]])
    allpts = np.concatenate([base, new1, new2])
    rng = np.random.default_rng(0)
    reps = 4000
    z = rng.standard_normal((g.size, reps))
    s = ConditionalSampler(k, base, grid_factor(k, g), z)
    v1 = s.sample(new1, rng.standard_normal((2, reps)))
    v2 = s.sample(new2, rng.standard_normal((2, reps)))
    vals = np.concatenate([grid_factor(k, g) @ z, v1, v2])
    emp = vals @ vals.T / reps
    assert np.max(np.abs(emp - k.matrix(allpts, allpts))) <= 0.12
