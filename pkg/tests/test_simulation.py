import math

import numpy as np
import pytest
from scipy import stats

from conftest import cell
from mvopl.core import (
    DiagonalGaussian,
    IsotropicGaussian,
    RngSeed,
    UniformBox,
    ValidationError,
)
from mvopl.estimators import EssMethod, EstimatorKind
from mvopl.simulation import (
    CodConfig,
    CoverageConfig,
    CoverageRow,
    benchmark_reward_probability,
    cod_samples,
    coverage_logging_dataset,
    default_workers,
    poisson_rate,
    make_learning_benchmark,
    min_sample_size_for_coverage,
    poisson_reward,
    run_cod_study,
    run_coverage_study,
    true_value,
)


def test_poisson_reward_examples():
    assert all(poisson_reward((-1,) * 5, RngSeed(s)) == 0 for s in range(50))
    rng = RngSeed(77).generator()
    draws = rng.poisson(0.1 * np.mean([0.5] * 5), 1_000_000)
    assert abs(draws.mean() - 0.05) <= 0.001
    assert poisson_rate([[10.0] * 5])[0] == 1.0


def test_poisson_reward_reproducible():
    a = [poisson_reward((20.0,) * 3, RngSeed(5, i)) for i in range(20)]
    assert a == [poisson_reward((20.0,) * 3, RngSeed(5, i)) for i in range(20)]


def test_true_value_limits():
    assert true_value(IsotropicGaussian((0.5,) * 5, 1e-9), 5) == pytest.approx(0.05, abs=1e-12)
    for s in (0.3, 1.0, 2.0):
        # zero mean: 0.1 s phi(0) with s = sigma / sqrt(d)
        got = true_value(IsotropicGaussian((0.0,) * 4, s * 2.0), 4)
        assert got == pytest.approx(0.1 * s * 0.3989422804014327, rel=1e-12)


def test_true_value_matches_monte_carlo():
    # closed form checked against a 1e6-draw oracle on the clamped rate
    rng = RngSeed(123).generator()
    for sigma in (1.0, 0.5):
        x = rng.normal(0.5, sigma, size=(1_000_000, 5)).mean(axis=1)
        mc = 0.1 * np.maximum(x, 0).mean()
        se = 0.1 * np.maximum(x, 0).std() / 1000
        assert abs(true_value(IsotropicGaussian((0.5,) * 5, sigma), 5) - mc) < 4 * se


def test_true_value_pinned():
    assert true_value(IsotropicGaussian((0.5,) * 5, 1.0), 5) == pytest.approx(0.0529609, abs=2e-7)
    assert true_value(IsotropicGaussian((0.5,) * 5, 0.5), 5) == pytest.approx(0.0500986, abs=2e-7)


def test_true_value_diagonal_and_errors():
    diag = DiagonalGaussian((0.5, 0.5), (0.6, 0.8))
    iso = IsotropicGaussian((0.5, 0.5), math.sqrt(0.5))
    assert true_value(diag, 2) == pytest.approx(true_value(iso, 2), rel=1e-14)
    with pytest.raises(ValidationError):
        true_value(UniformBox((0,), (1,)), 1)
    with pytest.raises(ValidationError):
        true_value(IsotropicGaussian((0.5,), 1.0), 2)


def test_benchmark_surface():
    assert benchmark_reward_probability([0.3, 0.3, 0.3]) == 1.0
    a = np.array([0.3, 0.3, 0.3]) + np.array([1.0, 1.0, 0.0])
    assert benchmark_reward_probability(a) == pytest.approx(math.exp(-1))


def test_benchmark_dataset():
    ds = make_learning_benchmark(RngSeed(3), 1000, 3)
    assert ds.d == 3 and len(ds) == 1000
    assert set(np.unique(ds.rewards)) <= {0.0, 1.0}
    assert ds.logging_policy == IsotropicGaussian((0, 0, 0), 1.0)


def test_coverage_logging_dataset():
    ds = coverage_logging_dataset(RngSeed(3), 2000, 5)
    assert np.all(ds.rewards >= 0) and np.all(ds.rewards == np.round(ds.rewards))


def test_coverage_config_validation():
    with pytest.raises(ValidationError):
        CoverageConfig(1, sample_sizes=(16, 8))
    with pytest.raises(ValidationError):
        CoverageConfig(1, target_sigmas=(0.0,))
    with pytest.raises(ValidationError):
        CoverageConfig(-3)
    with pytest.raises(ValidationError):
        CoverageConfig(1, d=2, logging=IsotropicGaussian((0, 0, 0), 1.0))
    assert CoverageConfig.full_scale(1).sample_sizes[-1] == 2**20


def test_target_equals_logging_coverage():
    config = CoverageConfig(
        99,
        target_mean=0.0,
        target_sigmas=(1.0,),
        sample_sizes=(2**10, 2**11, 2**12),
        replications=500,
    )
    rows = run_coverage_study(config)
    for row in rows:
        assert abs(row.coverage - 0.95) <= 0.02, row


def test_rows_are_sane_and_ordered(desk_rows):
    for row in desk_rows:
        assert 0.0 <= row.coverage <= 1.0
        assert 1.0 <= row.mean_ess <= row.n
        assert row.mean_ci_width >= 0
    config = CoverageConfig(20240501, kinds=("snips",))
    keys = [(r.target_sigma, r.n, r.method) for r in desk_rows]
    expected = [
        (s, n, m) for s in config.target_sigmas for n in config.sample_sizes for m in EssMethod
    ]
    assert keys == expected


def test_corrected_coverage_dominates_rowwise(desk_rows):
    for row in desk_rows:
        clt = cell(desk_rows, row.target_sigma, row.n, "clt")
        assert row.coverage >= clt.coverage
        assert row.mean_ci_width >= clt.mean_ci_width or math.isinf(row.mean_ci_width)


def test_mean_ess_non_increasing_in_sigma(desk_rows):
    sigmas = sorted({r.target_sigma for r in desk_rows}, reverse=True)
    for n in sorted({r.n for r in desk_rows}):
        for m in EssMethod:
            seq = [cell(desk_rows, s, n, m.value).mean_ess for s in sigmas]
            assert all(b <= a for a, b in zip(seq, seq[1:])), (n, m, seq)


def test_coverage_independent_of_workers():
    config = CoverageConfig(
        7, target_sigmas=(0.5, 0.125), sample_sizes=(8, 64), replications=40
    )
    assert run_coverage_study(config, workers=1) == run_coverage_study(config, workers=3)


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv("MVOPL_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("MVOPL_WORKERS", "zero")
    with pytest.raises(ValidationError):
        default_workers()
    monkeypatch.delenv("MVOPL_WORKERS")
    assert default_workers() >= 1


def _rows(method, coverages, sigma=1.0, kind=EstimatorKind.SNIPS):
    return [
        CoverageRow(kind, EssMethod(method), sigma, 2**k, c, 0.1, 1.0)
        for k, c in zip(range(3, 3 + len(coverages)), coverages)
    ]


def test_min_sample_size_all_reached():
    rows = _rows("clt", [0.96, 0.95, 0.97]) + _rows("dinfr", [0.96, 0.95, 0.97])
    out = {r.method: r for r in min_sample_size_for_coverage(rows, 0.95)}
    assert out[EssMethod.DINFR].n_star == 8
    assert out[EssMethod.DINFR].ratio_vs_clt == 1.0


def test_min_sample_size_requires_tail():
    rows = _rows("clt", [0.7, 0.96, 0.8, 0.95, 0.96]) + _rows("dinfr", [0.9, 0.95, 0.96, 0.97, 0.95])
    out = {r.method: r for r in min_sample_size_for_coverage(rows, 0.95)}
    assert out[EssMethod.CLT_ONLY].n_star == 64
    assert out[EssMethod.DINFR].n_star == 16
    assert out[EssMethod.DINFR].ratio_vs_clt == 4.0


def test_min_sample_size_not_reached():
    rows = _rows("clt", [0.8, 0.9, 0.94]) + _rows("dinfr", [0.9, 0.96, 0.97])
    out = {r.method: r for r in min_sample_size_for_coverage(rows, 0.95)}
    assert out[EssMethod.CLT_ONLY].n_star is None
    assert out[EssMethod.DINFR].n_star == 16
    assert out[EssMethod.DINFR].ratio_vs_clt is None


@pytest.fixture(scope="module")
def cod():
    return run_cod_study(CodConfig(2024, dims=(1, 2, 8)))


def test_cod_uniform_d1_distance_is_uniform():
    dist, _ = cod_samples(CodConfig(2024, dims=(1,)), "uniform", 1)
    assert stats.kstest(dist, "uniform").statistic < 0.01


def test_cod_box_fraction_examples(cod):
    mass = {(m.family, m.d, m.epsilon): m for m in cod.mass}
    uni = mass[("uniform", 8, 0.4)]
    assert uni.analytic_fraction == pytest.approx(0.16777, abs=1e-5)
    assert abs(uni.empirical_fraction - 0.16777) <= 0.01
    assert uni.complement_fraction == pytest.approx(0.2**8)
    assert mass[("normal", 8, 0.4)].empirical_fraction > uni.empirical_fraction


def test_cod_monte_carlo_error_bound(cod):
    n = CodConfig(2024).n_samples
    for m in cod.mass:
        f = m.analytic_fraction
        assert abs(m.empirical_fraction - f) <= 3 * math.sqrt(f * (1 - f) / n) + 1e-12, m


def test_cod_cdf_shape(cod):
    for family in ("uniform", "normal"):
        for d in (1, 2, 8):
            rows = [r for r in cod.cdf if r.family == family and r.d == d]
            assert len(rows) == 1000
            assert rows[0].normalised_distance == 0.0 and rows[-1].normalised_distance == 1.5
            values = [r.cdf for r in rows]
            assert all(b >= a for a, b in zip(values, values[1:]))
    # uniform distances concentrate as d grows
    u8 = {round(r.normalised_distance, 6): r.cdf for r in cod.cdf if r.family == "uniform" and r.d == 8}
    u1 = {round(r.normalised_distance, 6): r.cdf for r in cod.cdf if r.family == "uniform" and r.d == 1}
    grid = sorted(u1)
    near = min(grid, key=lambda g: abs(g - 0.3))
    assert u8[near] < u1[near]


def test_cod_workers_and_validation():
    config = CodConfig(5, dims=(1, 3), n_samples=2000, epsilons=(0.1, 0.4))
    # repr compares the nan placeholders too
    assert repr(run_cod_study(config, workers=1)) == repr(run_cod_study(config, workers=2))
    with pytest.raises(ValidationError):
        CodConfig(5, epsilons=(0.6,))
    with pytest.raises(ValidationError):
        CodConfig(5, dims=(0,))


def test_coverage_survives_subnormal_weights():
    # seed 1, replication 9 puts the only nonzero reward on a subnormal weight
    config = CoverageConfig(1, target_sigmas=(0.0625,), sample_sizes=(8, 16, 32), replications=10)
    for row in run_coverage_study(config, workers=1):
        assert 1.0 <= row.mean_ess <= row.n
