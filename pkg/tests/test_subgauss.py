import math

import numpy as np
import pytest
from scipy import integrate, stats

from models.errors import DegeneratePairError, DomainError, EmptyInputError
from models.randkernel import KernelJob
from models.subgauss import (VERDICT_CERTIFIED, CoefficientModel, SeedPath, chernoff_tail,
                             combine_variance_factors, empirical_central_moments, empirical_log_mgf,
                             empirical_tail, exact_tail, fitted_variance_factor, l2_moment_bound, model_variance,
                             moment_bound, sample_coefficient, sample_coefficients, series_variance_factor,
                             three_series_certificate, truncated_moments, two_sided_tail)


class TestCalculus:
    def test_chernoff_examples(self):
        assert chernoff_tail(1.0, 2.0) == pytest.approx(math.exp(-2.0))
        assert chernoff_tail(4.0, 2.0) == pytest.approx(0.60653, abs=1e-5)
        assert chernoff_tail(1.0, 1e-9) == pytest.approx(1.0)

    @pytest.mark.parametrize('nu, t', [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
    def test_chernoff_rejects_nonpositive(self, nu, t):
        with pytest.raises(DomainError):
            chernoff_tail(nu, t)

    def test_two_sided_is_capped(self):
        assert two_sided_tail(1.0, 0.1) == 1.0
        assert two_sided_tail(1.0, 3.0) == pytest.approx(2.0 * math.exp(-4.5))

    def test_combine_variance_factors(self):
        assert combine_variance_factors([1.0]) == 1.0
        assert combine_variance_factors([1.0, 2.0, 3.0]) == 6.0
        assert combine_variance_factors([4.0 ** -l for l in range(60)]) == pytest.approx(4.0 / 3.0)
        with pytest.raises(EmptyInputError):
            combine_variance_factors([])
        with pytest.raises(DomainError):
            combine_variance_factors([1.0, -1.0])

    def test_series_variance_factor(self):
        assert series_variance_factor(1.0) == 8.0
        assert series_variance_factor(0.25) == 2.0
        assert two_sided_tail(series_variance_factor(1.0), 4.0) == pytest.approx(2.0 * math.exp(-1.0))

    @pytest.mark.parametrize('nu, k, expected', [(1.0, 1, 2.0), (1.0, 2, 8.0), (0.5, 3, 6.0)])
    def test_moment_bound(self, nu, k, expected):
        assert moment_bound(nu, k) == expected

    def test_l2_case(self):
        assert l2_moment_bound(1.5) == moment_bound(1.5, 1) == 3.0

    @pytest.mark.parametrize('k', [0, -1, 1.5])
    def test_moment_bound_order(self, k):
        with pytest.raises(DomainError):
            moment_bound(1.0, k)

    def test_fitted_variance_factor(self):
        assert fitted_variance_factor(2.0, 1.0) == 2.0
        assert fitted_variance_factor(2.0, 0.0) == 0.0


class TestModels:
    def test_variance_factors(self):
        assert CoefficientModel.gaussian(nu=2.0).nu == pytest.approx(2.0)
        assert CoefficientModel.rademacher().nu == 1.0
        uniform = CoefficientModel.bounded_uniform(-1.0, 1.0)
        assert uniform.nu == 1.0 and uniform.variance == pytest.approx(1.0 / 3.0)
        assert CoefficientModel.truncated_gaussian(cutoff=0.5).nu == 0.25
        assert CoefficientModel.truncated_gaussian(cutoff=2.0).nu == 1.0
        constant = CoefficientModel.constant()
        assert constant.nu == 0.0 and constant.is_degenerate
        assert model_variance(uniform) == uniform.variance

    def test_truncated_gaussian_variance(self):
        A = 1.5
        expected = integrate.quad(lambda x: x * x * stats.norm.pdf(x), -A, A)[0] / (2 * stats.norm.cdf(A) - 1)
        assert CoefficientModel.truncated_gaussian(cutoff=A).variance == pytest.approx(expected, rel=1e-9)

    def test_rademacher_mean_is_zero(self):
        model = CoefficientModel.rademacher(mu0=0.5)
        assert model.mu0 == 0.0
        assert any('diverges' in note for note in model.notes)

    def test_invalid_parameters(self):
        with pytest.raises(DomainError):
            CoefficientModel.gaussian(nu=0.0)
        with pytest.raises(DomainError):
            CoefficientModel.bounded_uniform(1.0, -1.0)
        with pytest.raises(DomainError):
            CoefficientModel(dist='cauchy')
        with pytest.raises(DomainError):
            CoefficientModel(mean_kind='harmonic')

    def test_from_dict(self):
        assert CoefficientModel.from_dict({'dist': 'gaussian', 'nu': 4.0}).sigma == pytest.approx(2.0)
        uniform = CoefficientModel.from_dict({'dist': 'bounded_uniform', 'a': -2.0, 'b': 2.0})
        assert uniform.nu == 4.0
        assert CoefficientModel.from_dict({'dist': 'rademacher', 'nu': 1.0}).dist == 'rademacher'

    def test_mean_profile(self):
        model = CoefficientModel.gaussian(mu0=1.0)
        assert model.mean_profile_l1 == 6.0
        assert CoefficientModel.gaussian(mu0=1.0, half_line=False).mean_profile_l1 == 9.0
        assert CoefficientModel.constant(mu0=1.0).mean_profile_l1 == math.inf
        assert CoefficientModel.gaussian().mean_profile_l1 == 0.0
        assert model.mean_at(2, -3) == pytest.approx(2.0 ** -5)


class TestSampling:
    def test_rademacher_values(self):
        model = CoefficientModel.rademacher()
        values = {sample_coefficient(model, SeedPath(3, r, 1, 2)) for r in range(100)}
        assert values == {-1.0, 1.0}

    def test_same_path_same_value(self):
        model = CoefficientModel.gaussian()
        path = SeedPath(11, 5, -2, 7)
        assert sample_coefficient(model, path) == sample_coefficient(model, path)
        assert sample_coefficient(model, path) != sample_coefficient(model, SeedPath(11, 5, -2, 8))

    def test_gaussian_law(self):
        draws = sample_coefficients(CoefficientModel.gaussian(), 2024, np.arange(10 ** 6), [0], [0])[:, 0]
        assert abs(draws.mean()) < 4e-3
        assert draws.var() == pytest.approx(1.0, rel=0.01)

    def test_mean_is_added(self):
        model = CoefficientModel.gaussian(mu0=2.0)
        raw = sample_coefficients(model, 1, np.arange(10), [0, 1], [0, 0])
        centered = sample_coefficients(model, 1, np.arange(10), [0, 1], [0, 0], centered=True)
        np.testing.assert_allclose(raw - centered, np.tile([2.0, 1.0], (10, 1)))

    def test_uniform_bounds(self):
        model = CoefficientModel.bounded_uniform(-1.0, 3.0)
        draws = sample_coefficients(model, 1, np.arange(5000), [0], [0], centered=True)
        assert draws.min() > -2.0 and draws.max() < 2.0


class TestTruncation:
    def test_gaussian_unit_truncation(self):
        mean, variance = truncated_moments(CoefficientModel.gaussian(), 1.0)
        assert mean == 0.0
        assert variance == pytest.approx(0.19875, abs=1e-5)

    def test_gaussian_off_center(self):
        center, A = 0.5, 1.0
        density = lambda x: stats.norm.pdf(x - center)
        first = integrate.quad(lambda x: x * density(x), -A, A)[0]
        second = integrate.quad(lambda x: x * x * density(x), -A, A)[0]
        mean, variance = truncated_moments(CoefficientModel.gaussian(), A, center=center)
        assert mean == pytest.approx(first, rel=1e-9)
        assert variance == pytest.approx(second - first ** 2, rel=1e-9)

    def test_rademacher(self):
        assert truncated_moments(CoefficientModel.rademacher(), 1.0) == (0.0, 1.0)
        assert truncated_moments(CoefficientModel.rademacher(), 0.5) == (0.0, 0.0)

    def test_uniform(self):
        mean, variance = truncated_moments(CoefficientModel.bounded_uniform(-1.0, 1.0), 0.5)
        assert mean == pytest.approx(0.0)
        assert variance == pytest.approx(1.0 / 24.0)

    def test_truncated_gaussian_matches_quadrature(self):
        model = CoefficientModel.truncated_gaussian(cutoff=2.0)
        mass = 2 * stats.norm.cdf(2.0) - 1
        expected = integrate.quad(lambda x: x * x * stats.norm.pdf(x), -1.0, 1.0)[0] / mass
        assert truncated_moments(model, 1.0)[1] == pytest.approx(expected, rel=1e-9)

    def test_exact_tails(self):
        assert exact_tail(CoefficientModel.gaussian(), 1.0) == pytest.approx(2 * stats.norm.sf(1.0))
        assert exact_tail(CoefficientModel.bounded_uniform(-1.0, 1.0), 0.5) == pytest.approx(0.5)
        assert exact_tail(CoefficientModel.rademacher(), 1.0) == 0.0
        assert exact_tail(CoefficientModel.truncated_gaussian(cutoff=1.0), 1.5) == 0.0


class TestThreeSeries:
    def test_haar_example_is_certified(self, haar, job, gaussian):
        report = three_series_certificate(gaussian, haar, 0.25, 0.75, 1.0, job)
        assert report.verdict == VERDICT_CERTIFIED
        assert report.series2_partial == 0.0
        assert all(math.isfinite(v) for v in (report.series1_partial, report.series3_partial))
        assert all(t < 1e-8 for t in report.tail_bounds)
        assert report.terms == 21

    def test_series1_vanishes_for_large_levels(self, haar, job, gaussian):
        partials = [three_series_certificate(gaussian, haar, 0.25, 0.75, A, job).series1_partial
                    for A in (0.5, 1.0, 2.0, 1e6)]
        assert partials == sorted(partials, reverse=True)
        assert partials[-1] < 1e-12

    def test_symmetric_models_have_no_drift(self, haar, job):
        model = CoefficientModel.bounded_uniform(-1.0, 1.0)
        report = three_series_certificate(model, haar, 0.125, 0.375, 0.5, job)
        assert report.series2_partial == pytest.approx(0.0, abs=1e-15)

    def test_degenerate_pair(self, haar, job, gaussian):
        with pytest.raises(DegeneratePairError):
            three_series_certificate(gaussian, haar, 0.5, 0.5, 1.0, job)

    def test_report_dict(self, haar, job, gaussian):
        row = three_series_certificate(gaussian, haar, 0.25, 0.75, 1.0, job).to_dict()
        assert {'series1_tail', 'series2_tail', 'series3_tail', 'verdict', 'truncation_A'} <= set(row)


class TestMonteCarlo:
    def test_log_mgf_at_zero(self):
        estimate = empirical_log_mgf(CoefficientModel.gaussian(), 0.0, 1000)
        assert estimate.mean == 0.0 and estimate.std_error == 0.0

    def test_log_mgf_guards(self):
        with pytest.raises(DomainError):
            empirical_log_mgf(CoefficientModel.gaussian(), 0.5, 999)
        with pytest.raises(DomainError):
            empirical_log_mgf(CoefficientModel.gaussian(), 11.0, 1000)

    @pytest.mark.parametrize('lam', [-1.0, -0.5, 0.5, 1.0])
    def test_gaussian_log_mgf(self, lam):
        estimate = empirical_log_mgf(CoefficientModel.gaussian(), lam, 50000, master_seed=3)
        assert abs(estimate.mean - lam * lam / 2.0) <= 4.0 * estimate.std_error

    def test_rademacher_log_mgf(self):
        estimate = empirical_log_mgf(CoefficientModel.rademacher(), 1.0, 50000, master_seed=3)
        assert abs(estimate.mean - math.log(math.cosh(1.0))) <= 4.0 * estimate.std_error
        assert estimate.mean <= 0.5

    def test_tails_below_chernoff(self):
        n = 50000
        for t, estimate in empirical_tail(CoefficientModel.gaussian(), [0.5, 1.0, 2.0], n, master_seed=4):
            p = 2 * stats.norm.sf(t)
            assert abs(estimate.mean - p) <= 4.0 * math.sqrt(p * (1 - p) / n)
            assert estimate.ci_high <= two_sided_tail(1.0, t)

    def test_tails_do_not_depend_on_threads(self):
        model = CoefficientModel.bounded_uniform(-1.0, 1.0)
        serial = empirical_tail(model, [0.25, 0.75], 10000, master_seed=8, chunk_size=1000, threads=1)
        pooled = empirical_tail(model, [0.25, 0.75], 10000, master_seed=8, chunk_size=1000, threads=4)
        assert serial == pooled

    def test_central_moments(self):
        moments = dict(empirical_central_moments([0.25] * 4, 2, 50000, master_seed=6))
        assert abs(moments[1].mean - 1.0) <= 5.0 * moments[1].std_error
        assert abs(moments[2].mean - 3.0) <= 5.0 * moments[2].std_error
        for k, estimate in moments.items():
            assert estimate.mean <= moment_bound(1.0, k)

    def test_central_moments_need_summands(self):
        with pytest.raises(EmptyInputError):
            empirical_central_moments([], 2, 1000)
