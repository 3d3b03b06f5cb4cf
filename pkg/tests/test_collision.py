import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eigencollide.collision import (CRITICAL, SUBCRITICAL, SUPERCRITICAL, CollisionConfig, detect_collision,
                                    estimate_probability, monotonicity_violations, path_gaps, phase_scan,
                                    records_digest, regime, run_replicate, threshold, wilson_interval,
                                    with_hurst)
from eigencollide.errors import ConfigError, DomainError, InconclusiveResolutionError
from eigencollide.field import CovarianceKernel, GridSpec
from eigencollide.matrix import MatrixPath, ProcessConfig, assemble_path, vectorize

EPS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def cfg(beta=1, h=0.3, res=64, d=2, seed=0):
    return ProcessConfig(beta, d, CovarianceKernel.isotropic(h), GridSpec.cube(1, resolution=res), seed=seed)


def fn_path(fn, res=11, beta=1):
    return MatrixPath.from_function(lambda t: vectorize(fn(t[0]), beta), cfg(beta, res=res))


def test_threshold_examples():
    assert threshold(1, 2) == 2
    assert threshold(2, 3) == 8
    assert threshold(1, 4) == 9
    with pytest.raises(DomainError):
        threshold(1, 1)


def test_regime_tags():
    assert regime(4.0, 2.0) == SUPERCRITICAL
    assert regime(4 / 3, 2.0) == SUBCRITICAL
    assert regime(2.0, 2.0) == CRITICAL


def test_wilson_interval_oracle():
    # closed-form Wilson score interval evaluated independently
    lo, hi = wilson_interval(7, 40)
    z = 1.959963984540054
    p, n = 7 / 40, 40
    c = (p + z * z / (2 * n)) / (1 + z * z / n)
    h = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    assert lo == pytest.approx(c - h, rel=1e-14) and hi == pytest.approx(c + h, rel=1e-14)
    assert wilson_interval(0, 10)[0] == 0.0
    assert wilson_interval(10, 10)[1] == 1.0


def test_config_validation():
    with pytest.raises(ConfigError):
        CollisionConfig(cfg(), 2, eps_schedule=(1e-3, 1e-2))
    with pytest.raises(ConfigError):
        CollisionConfig(cfg(), 2, eps_schedule=(1e-2, 0.0))
    with pytest.raises(ConfigError):
        CollisionConfig(cfg(), 2, replicates=0)
    with pytest.raises(DomainError):
        CollisionConfig(cfg(), 3)


def test_constant_path_never_collides():
    p = fn_path(lambda t: np.diag([0.0, 0.5]))
    rec = detect_collision(p, 2, (0.4, 0.1, 1e-3), 4)
    assert rec.flags == (False, False, False)
    assert rec.min_gap == pytest.approx(0.5)


def test_crossing_path_flagged_at_every_eps():
    # eigenvalues +-(t - 1.5) cross at t = 1.5, which lies on an 11-point grid over [1, 2]
    p = fn_path(lambda t: np.diag([t - 1.5, 1.5 - t]))
    rec = detect_collision(p, 2, EPS, 6)
    assert all(rec.flags)
    assert rec.argmin[0] == pytest.approx(1.5, abs=1e-15)
    assert rec.min_gap == 0.0


def test_crossing_off_grid_found_by_refinement():
    p = fn_path(lambda t: np.diag([t - 1.5372, 1.5372 - t]), res=11)
    coarse = detect_collision(p, 2, (0.1, 1e-3), 0)
    fine = detect_collision(p, 2, (0.1, 1e-3), 6)
    assert coarse.flags == (True, False)
    assert fine.flags == (True, True)
    assert abs(fine.argmin[0] - 1.5372) <= 0.1 / 64


def test_huge_eps_flags_trivially():
    c = CollisionConfig(cfg(h=0.7), 2, eps_schedule=(1e6,), replicates=1, refine_depth=2)
    cell = estimate_probability(c)
    assert cell.estimate == 1.0
    assert cell.ci_low <= cell.estimate <= cell.ci_high


def test_two_by_two_closed_form_gap():
    for beta in (1, 2):
        p = assemble_path(ProcessConfig(beta, 2, CovarianceKernel.isotropic(0.4),
                                        GridSpec.cube(1, resolution=256), seed=3))
        m = p.matrices()
        closed = np.sqrt((m[:, 0, 0].real - m[:, 1, 1].real) ** 2 + 4 * np.abs(m[:, 0, 1]) ** 2)
        assert np.max(np.abs(path_gaps(p.entries, beta, 2) - closed)) <= 1e-12
        rec = detect_collision(p, 2, EPS, 0)
        assert abs(rec.grid_min_gap - closed.min()) <= 1e-12


@given(seed=st.integers(0, 10 ** 6), h=st.sampled_from([0.2, 0.4, 0.7]), beta=st.sampled_from([1, 2]))
def test_flag_monotonicity(seed, h, beta):
    c = CollisionConfig(cfg(beta, h, 128, seed=seed), 2, eps_schedule=(0.3, 0.1, 0.03, 0.01), refine_depth=3)
    rec = run_replicate(c, seed % 17)
    for a, b in zip(rec.flags, rec.flags[1:]):
        assert a or not b
    for f, ind in zip(rec.flags, rec.indeterminate):
        assert not (f and ind)


def test_seed_determinism():
    c = CollisionConfig(cfg(1, 0.25, 128), 2, replicates=6, refine_depth=4, master_seed=5)
    a = estimate_probability(c, on_inconclusive="report")
    b = estimate_probability(c, on_inconclusive="report")
    assert a.records == b.records
    assert a.records_digest == b.records_digest


def test_parallel_matches_serial():
    c = CollisionConfig(cfg(1, 0.25, 64), 2, replicates=5, refine_depth=3, master_seed=6)
    a = estimate_probability(c, threads=1, on_inconclusive="report")
    b = estimate_probability(c, threads=2, on_inconclusive="report")
    assert records_digest(a.records) == records_digest(b.records)


def test_weyl_soundness_on_smooth_path():
    # smooth off-grid minimum; the true minimum on the refined cell is found by dense evaluation
    def f(t):
        return np.array([[np.sin(3 * t), 0.05 * (t - 1.41) + 0.002], [0.05 * (t - 1.41) + 0.002, -np.sin(3 * t)]])

    def gap(t):
        e = np.linalg.eigvalsh(f(t))
        return e[1] - e[0]

    p = fn_path(f, res=33)
    rec = detect_collision(p, 2, (0.5, 0.05), 6)
    t0, h = rec.argmin[0], rec.cell_step[0]
    dense = np.linspace(max(1.0, t0 - h), min(2.0, t0 + h), 2001)
    true_min = min(gap(t) for t in dense)
    assert abs(rec.min_gap - true_min) <= 2 * rec.modulus
    assert true_min <= rec.min_gap + 1e-15


def test_inconclusive_raises_and_report_mode():
    c = CollisionConfig(cfg(1, 0.25, 256), 2, replicates=10, refine_depth=2, master_seed=1)
    with pytest.raises(InconclusiveResolutionError) as info:
        estimate_probability(c)
    assert info.value.fraction > 0.05
    cell = estimate_probability(c, on_inconclusive="report")
    assert cell.indeterminate_fraction > 0.05


def test_phase_cell_invariants_and_exports():
    c = CollisionConfig(cfg(1, 0.3, 128), 2, eps_schedule=(0.5, 0.1, 0.02), replicates=12, refine_depth=3)
    cell = estimate_probability(c, on_inconclusive="report")
    for e, lo, hi in zip(cell.estimates, cell.ci_lows, cell.ci_highs):
        assert lo <= e <= hi
    assert cell.regime == SUPERCRITICAL
    assert list(cell.estimates) == sorted(cell.estimates, reverse=True)
    rows = list(cell.csv_rows())
    assert len(rows) == 3 and rows[0][:4] == [1, 2, 2, 1]
    d = cell.to_dict()
    assert d["Q"] == pytest.approx(1 / 0.3) and d["regime"] == SUPERCRITICAL


def test_phase_scan_tags():
    base = CollisionConfig(cfg(1, 0.3, 64), 2, eps_schedule=(0.1, 0.01), replicates=4, refine_depth=2)
    cells = phase_scan(base, [0.2, 0.3, 0.4], [2])
    assert [c.regime for c in cells] == [SUPERCRITICAL] * 3
    cells = phase_scan(with_hurst(base, 0.3), [0.3], [2])
    base3 = CollisionConfig(cfg(1, 0.3, 64, d=3), 2, eps_schedule=(0.1, 0.01), replicates=4, refine_depth=2)
    cells = phase_scan(base3, [0.3], [2, 3])
    assert [c.regime for c in cells] == [SUPERCRITICAL, SUBCRITICAL]
    base_c = CollisionConfig(cfg(2, 0.4, 64), 2, eps_schedule=(0.1, 0.01), replicates=4, refine_depth=2)
    assert phase_scan(base_c, [0.4], [2])[0].regime == SUBCRITICAL
    with pytest.raises(ConfigError):
        phase_scan(base, [], [2])


def test_monotonicity_diagnostic_and_subcritical_decay():
    base = CollisionConfig(cfg(1, 0.3, 128), 2, eps_schedule=(0.3, 0.1, 0.03), replicates=30, refine_depth=3)
    cells = phase_scan(base, [0.2, 0.5, 0.8], [2])
    assert monotonicity_violations(cells) == []
    for c in cells:
        if c.regime == SUBCRITICAL:
            assert all(b <= a for a, b in zip(c.estimates, c.estimates[1:]))
