"""One test per acceptance criterion; the terminal summary prints a PASS/FAIL line for each."""
import itertools
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from conftest import cell
from mvopl.core import (
    Deterministic,
    IsotropicGaussian,
    KernelConfig,
    LoggedDataset,
    RngSeed,
    UniformBox,
    importance_weights,
    log_density,
    sample,
)
from mvopl.estimators import (
    EssMethod,
    EstimatorKind,
    baseline_shifted_ips,
    corrected_sample_size,
    ess,
    evaluate,
    ips_value,
    ips_variance,
    snips_value,
    snips_variance,
    support_diagnostics,
)
from mvopl.learner import (
    CrmConfig,
    crm_lower_bound,
    finite_difference_gradient,
    learn,
    snips_analytic_gradient,
)
from mvopl.simulation import (
    CodConfig,
    CoverageConfig,
    cod_samples,
    make_learning_benchmark,
    min_sample_size_for_coverage,
    run_cod_study,
    run_coverage_study,
    true_value,
)

CORRECTED = [m for m in EssMethod if m is not EssMethod.CLT_ONLY]
REL = 1e-12


def close(a, b, rel=REL):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)


def test_01_coverage_gap(criterion, acceptance_rows):
    with criterion(1, "coverage gap at sigma=0.125, N=2^6 (CLT < 0.90, DInfR - CLT >= 0.05)"):
        clt = cell(acceptance_rows, 0.125, 64, "clt").coverage
        dinfr = cell(acceptance_rows, 0.125, 64, "dinfr").coverage
        assert clt < 0.90, f"clt={clt}"
        assert dinfr - clt >= 0.05, f"clt={clt} dinfr={dinfr}"


def test_02_coverage_convergence(criterion, acceptance_rows):
    with criterion(2, "coverage within 0.95 +- 0.03 at N=2^12 for sigma in {1, 0.5}"):
        observed = {
            (s, m.value): cell(acceptance_rows, s, 4096, m.value).coverage
            for s in (1.0, 0.5)
            for m in EssMethod
        }
        misses = {k: v for k, v in observed.items() if abs(v - 0.95) > 0.03}
        assert not misses, f"outside band: {misses}"


def test_03_interval_dominance(criterion):
    with criterion(3, "ESS-corrected CI contains the CLT CI on 100 random instances"):
        master = RngSeed(303)
        for i in range(100):
            rng = master.generator(i)
            d = int(rng.integers(1, 6))
            n = int(rng.integers(2, 400))
            logging = IsotropicGaussian(rng.normal(0, 0.5, d), float(rng.uniform(0.5, 2)))
            a = sample(logging, rng, n)
            r = rng.poisson(1.0, n).astype(float) * rng.choice([-1.0, 1.0])
            ds = LoggedDataset(a, r, np.exp(log_density(logging, a)), logging)
            if i % 2:
                target, kernel = Deterministic(rng.normal(0, 1, d)), KernelConfig(
                    rng.uniform(0.05, 1.5, d)
                )
            else:
                target, kernel = IsotropicGaussian(rng.normal(0, 1, d), float(rng.uniform(0.2, 2))), None
            kind = (EstimatorKind.IPS, EstimatorKind.SNIPS)[i % 3 == 0]
            alpha = float(rng.uniform(0.01, 0.3))
            clt = evaluate(ds, target, kernel, kind, EssMethod.CLT_ONLY, alpha)
            for method in CORRECTED:
                rep = evaluate(ds, target, kernel, kind, method, alpha)
                assert rep.ci_low <= clt.ci_low and rep.ci_high >= clt.ci_high, (i, method)


def test_04_sample_size_reduction(criterion, desk_rows):
    with criterion(4, "N*(CLT)/N*(DInfR) >= 4 at level 0.95 for some sigma (desk grid)"):
        reduction = min_sample_size_for_coverage(desk_rows, 0.95)
        dinfr = {r.target_sigma: (r.n_star, r.ratio_vs_clt) for r in reduction
                 if r.method is EssMethod.DINFR}
        ratios = [ratio for _, ratio in dinfr.values() if ratio is not None]
        assert any(ratio >= 4 for ratio in ratios), f"(n_star, ratio) by sigma: {dinfr}"


def test_05_unbiasedness(criterion):
    with criterion(5, "mean IPS at sigma=0.5, N=2^14 within 3 SE of the true value"):
        config = CoverageConfig(
            55, target_sigmas=(0.5,), sample_sizes=(2**14,), replications=500,
            kinds=("ips",), methods=("clt",),
        )
        (row,) = run_coverage_study(config)
        truth = true_value(config.target(0.5), 5)
        assert abs(row.mean_value - truth) <= 3 * row.value_se, (row.mean_value, row.value_se, truth)


def test_06_curse_of_dimensionality(criterion):
    with criterion(6, "CoD: uniform d=8 eps=0.4 fraction, d=1 KS < 0.01, normal > uniform"):
        config = CodConfig(66, dims=(1, 8), n_samples=100_000, epsilons=(0.4,))
        mass = {(m.family, m.d): m for m in run_cod_study(config).mass}
        uni = mass[("uniform", 8)].empirical_fraction
        assert abs(uni - 0.16777) <= 0.01, uni
        dist, _ = cod_samples(config, "uniform", 1)
        ks = stats.kstest(dist, "uniform").statistic
        assert ks < 0.01, ks
        assert mass[("normal", 8)].empirical_fraction > uni


def test_07_gradient(criterion):
    with criterion(7, "analytic SNIPS gradient vs central differences, rel err <= 1e-5, 20 instances"):
        for i in range(20):
            rng = RngSeed(707).generator(i)
            d, n = (1, 3, 5)[i % 3], (10, 100)[i % 2]
            logging = IsotropicGaussian(np.zeros(d), 1.0)
            a = sample(logging, rng, n)
            ds = LoggedDataset(a, rng.uniform(0, 1, n), np.exp(log_density(logging, a)), logging)
            kernel = KernelConfig(rng.uniform(0.8, 1.5, d))
            mu = rng.uniform(-0.5, 0.5, d)
            analytic = snips_analytic_gradient(ds, mu, kernel)
            numeric = finite_difference_gradient(
                lambda m: snips_value(importance_weights(ds, Deterministic(m), kernel), ds.rewards),
                mu, 1e-4,
            )
            err = np.max(np.abs(analytic - numeric)) / np.max(np.abs(analytic))
            assert err <= 1e-5, (i, err)


def test_08_learner_recovery(criterion):
    with criterion(8, "learner within Linf 0.15 and 1% of the grid-oracle optimum (d=3, N=50000)"):
        ds = make_learning_benchmark(RngSeed(11), 50_000, 3)
        config = CrmConfig(KernelConfig.isotropic(0.2, 3))
        result = learn(ds, config)
        axis = np.linspace(-1.0, 1.0, 21)
        best_value, best_point = -np.inf, None
        for point in itertools.product(axis, repeat=3):
            value = crm_lower_bound(ds, point, config)
            if value > best_value:
                best_value, best_point = value, np.array(point)
        gap = np.max(np.abs(result.mu - best_point))
        assert gap <= 0.15, (result.mu, best_point)
        assert result.objective >= best_value - 0.01 * abs(best_value), (result.objective, best_value)


def test_09_algebraic_identities(criterion):
    with criterion(9, "algebraic identity suite at 1e-12 relative"):
        for i in range(200):
            rng = RngSeed(909).generator(i)
            n = int(rng.integers(2, 60))
            w = rng.exponential(1.0, n) * (rng.uniform(size=n) < 0.8)
            w[0] += 0.1
            r = rng.normal(0, 2, n)
            beta = float(rng.normal(0, 3))
            lhs = baseline_shifted_ips(w, r, beta)
            rhs = ips_value(w, r) + beta * (1 - w.mean())
            assert abs(lhs - rhs) <= 1e-12 * (abs(beta) * (1 + w.mean()) + np.mean(np.abs(w * r)) + 1)
            c = 2.0 ** float(rng.integers(-30, 30))
            assert close(snips_value(c * w, r), snips_value(w, r))
            assert ess(w, r, EssMethod.DINF) <= ess(w, r, EssMethod.P2) * (1 + REL)
            assert ess(w, r, EssMethod.DINFR) <= ess(w, r, EssMethod.P2R) * (1 + REL)
            assert corrected_sample_size(n, n) == n and corrected_sample_size(n, 1.0) == 1.0
            ones = np.ones(n)
            assert close(ips_value(ones, r), r.mean()) and close(snips_value(ones, r), r.mean())
            var = np.var(r, ddof=1)
            assert close(ips_variance(ones, r, r.mean(), n), var, 1e-10)
            assert close(snips_variance(ones, r, r.mean(), n), var, 1e-10)


def test_10_support_diagnostic(criterion):
    with criterion(10, "support flag at the box corner (mean weight < 0.5); identical policy clean"):
        box = UniformBox((-0.5,) * 5, (0.5,) * 5)
        a = sample(box, RngSeed(1010), 10_000)
        ds = LoggedDataset(a, np.zeros(len(a)), np.exp(log_density(box, a)), box)
        mean_w, flag = support_diagnostics(
            importance_weights(ds, Deterministic((0.5,) * 5), KernelConfig.isotropic(0.1, 5))
        )
        assert flag and mean_w < 0.5, (mean_w, flag)
        rep = evaluate(ds, box)
        assert rep.mean_weight == 1.0 and not rep.support_flag


def _cli(args, workers, cwd):
    env = dict(os.environ, MVOPL_WORKERS=str(workers))
    proc = subprocess.run(
        [sys.executable, "-m", "mvopl", *args], cwd=cwd, env=env, capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr


def test_11_reproducibility(criterion, tmp_path):
    with criterion(11, "coverage and cod CSVs byte-identical across worker counts"):
        (tmp_path / "cov.json").write_text(
            '{"target_sigmas": [1.0, 0.125], "sample_sizes": [8, 64, 512], "replications": 60}'
        )
        (tmp_path / "cod.json").write_text('{"dims": [1, 4], "n_samples": 20000}')
        for workers in (1, 2):
            _cli(["coverage", "--config", "cov.json", "--seed", "11",
                  "--out", f"cov{workers}.csv"], workers, tmp_path)
            _cli(["cod", "--config", "cod.json", "--seed", "11",
                  "--out-cdf", f"cdf{workers}.csv", "--out-mass", f"mass{workers}.csv"],
                 workers, tmp_path)
        for stem in ("cov", "cdf", "mass"):
            assert (tmp_path / f"{stem}1.csv").read_bytes() == (tmp_path / f"{stem}2.csv").read_bytes()
