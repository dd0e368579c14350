import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from models.dyadic import dyadic_distance
from models.errors import DegeneratePairError, DerivativeUnavailableError, DomainError, HypothesisUnmetError
from models.randkernel import (KernelJob, finite_difference_check, gradient_square_summability,
                               haar_regularity_check, mean_kernel, sample_centered_kernel, sample_kernel,
                               sample_kernel_dx, sample_kernel_dy, sample_kernels, second_moment_identity,
                               square_summability)
from models.subgauss import CoefficientModel, SeedPath
from models.wavelets import WaveletFamily

HAAR = WaveletFamily.haar()
grid_points = st.integers(min_value=0, max_value=(1 << 16) - 1).map(lambda n: n / float(1 << 16))


def path(replicate=0, seed=7):
    return SeedPath(seed, replicate, 0, 0)


class TestKernelJob:
    def test_defaults(self):
        job = KernelJob()
        assert (job.scale_min, job.scale_max, job.tail_tol) == (-20, 20, 1e-10)

    def test_rejects_bad_ranges(self):
        with pytest.raises(DomainError):
            KernelJob(scale_min=3, scale_max=2)
        with pytest.raises(DomainError):
            KernelJob(tail_tol=0.0)

    def test_window(self):
        assert KernelJob.window(0, 0.25, 0.75, 1.0) == (0, 1)
        lo, hi = KernelJob.window(3, 0.0, 1.0, 2.0)
        assert lo > hi


class TestHaarIdentity:
    @pytest.mark.parametrize('x, y, expected', [
        (0.25, 0.75, 4.0 / 3.0),
        (0.125, 0.375, 16.0 / 3.0),
        (0.5, 0.625, 64.0 / 3.0),
    ])
    def test_examples(self, haar, job, x, y, expected):
        value = square_summability(haar, x, y, job)
        assert value.value == pytest.approx(expected, rel=1e-12)
        assert value.tail_bound == 0.0

    @settings(deadline=None)
    @given(grid_points, grid_points)
    def test_identity_on_grid_pairs(self, x, y):
        assume(x != y)
        value = square_summability(HAAR, x, y, KernelJob()).value
        assert value * dyadic_distance(x, y) ** 2 == pytest.approx(4.0 / 3.0, rel=1e-12)

    def test_symmetric(self, haar, job):
        assert square_summability(haar, 0.3125, 0.75, job) == square_summability(haar, 0.75, 0.3125, job)

    def test_degenerate(self, haar, job):
        with pytest.raises(DegeneratePairError):
            square_summability(haar, 0.25, 0.25, job)


class TestMeanKernel:
    def test_zero_mean(self, haar, job, gaussian):
        assert mean_kernel(haar, gaussian, 0.25, 0.75, job).value == 0.0

    def test_geometric_profile_by_hand(self, haar, job):
        model = CoefficientModel.gaussian(nu=1.0, mu0=1.0)
        # I(x, y) = [0, 1/2): -2 * 1/2, then ancestors 1 + 1/4 + 1/16 + ... = 4/3
        value = mean_kernel(haar, model, 0.125, 0.375, job)
        assert value.value == pytest.approx(-1.0 + 1.0 + 0.25 + 0.0625 + 0.0625 / 3.0, abs=1e-12)
        assert value.tail_bound >= 0.0


class TestSampling:
    def test_deterministic(self, haar, job, gaussian):
        first = sample_kernel(haar, gaussian, 0.25, 0.75, job, path(3))
        assert sample_kernel(haar, gaussian, 0.25, 0.75, job, path(3)) == first
        assert sample_kernel(haar, gaussian, 0.25, 0.75, job, path(4)) != first

    def test_symmetric(self, haar, job, gaussian):
        left = sample_kernel(haar, gaussian, 0.125, 0.625, job, path(1)).value
        right = sample_kernel(haar, gaussian, 0.625, 0.125, job, path(1)).value
        assert left == pytest.approx(right, rel=1e-14)

    def test_rademacher_term_magnitudes(self, haar, job):
        plan = haar.terms(0.125, 0.375, job)
        delta = dyadic_distance(0.125, 0.375)
        expected = [2.0 ** -level / delta for level in range(len(plan.values))]
        np.testing.assert_allclose(np.abs(plan.values), expected, rtol=1e-15)
        value = sample_kernel(haar, CoefficientModel.rademacher(), 0.125, 0.375, job, path()).value
        assert abs(value) <= float(np.sum(np.abs(plan.values)))

    def test_finer_scales_do_not_change_haar(self, haar, gaussian):
        narrow = sample_kernel(haar, gaussian, 0.25, 0.75, KernelJob(scale_max=10), path(2))
        wide = sample_kernel(haar, gaussian, 0.25, 0.75, KernelJob(scale_max=20), path(2))
        assert narrow.value == wide.value

    def test_tail_bound_shrinks_with_scale_range(self, haar, gaussian):
        narrow = sample_kernel(haar, gaussian, 0.25, 0.75, KernelJob(scale_min=-10), path())
        wide = sample_kernel(haar, gaussian, 0.25, 0.75, KernelJob(scale_min=-20), path())
        assert wide.tail_bound <= narrow.tail_bound

    @pytest.mark.parametrize('x, y', [(0.25, 0.75), (0.125, 0.8125), (0.0, 0.5)])
    def test_decomposition(self, haar, job, x, y):
        model = CoefficientModel.gaussian(nu=1.0, mu0=0.5)
        for r in range(20):
            total = sample_kernel(haar, model, x, y, job, path(r)).value
            centered = sample_centered_kernel(haar, model, x, y, job, path(r)).value
            mean = mean_kernel(haar, model, x, y, job).value
            assert total == pytest.approx(centered + mean, rel=1e-12, abs=1e-12)

    def test_decomposition_smooth(self, meyer, small_job):
        model = CoefficientModel.gaussian(nu=1.0, mu0=0.5)
        total = sample_kernel(meyer, model, 0.3, 0.8, small_job, path()).value
        centered = sample_centered_kernel(meyer, model, 0.3, 0.8, small_job, path()).value
        mean = mean_kernel(meyer, model, 0.3, 0.8, small_job).value
        assert total == pytest.approx(centered + mean, rel=1e-8, abs=1e-8)

    def test_zero_mean_centered_equals_raw(self, haar, job, gaussian):
        assert (sample_kernel(haar, gaussian, 0.25, 0.75, job, path()).value
                == sample_centered_kernel(haar, gaussian, 0.25, 0.75, job, path()).value)

    def test_batch_matches_single_paths(self, haar, job, gaussian):
        batch = sample_kernels(haar, gaussian, 0.25, 0.75, job, 7, [0, 1, 2])
        for r, value in enumerate(batch):
            assert value == pytest.approx(sample_kernel(haar, gaussian, 0.25, 0.75, job, path(r)).value, rel=1e-12)

    def test_second_moment_matches_independence(self, haar, job, gaussian):
        plan = haar.terms(0.25, 0.75, job)
        n = 20000
        squares = np.square(sample_kernels(haar, gaussian, 0.25, 0.75, job, 11, np.arange(n)))
        exact = second_moment_identity(gaussian, plan)
        assert exact == pytest.approx(4.0 / 3.0, rel=1e-9)
        std_error = squares.std(ddof=1) / np.sqrt(n)
        assert abs(squares.mean() - exact) <= 5.0 * std_error


class TestDerivatives:
    def test_haar_has_none(self, haar, job, gaussian):
        with pytest.raises(DerivativeUnavailableError):
            sample_kernel_dx(haar, gaussian, 0.25, 0.75, job, path())

    def test_finite_difference(self, meyer, small_job, gaussian):
        check = finite_difference_check(meyer, gaussian, 0.3, 0.8, small_job, path(5))
        assert check['relative_error'] <= 1e-4

    @settings(deadline=None, max_examples=100)
    @given(x=st.floats(min_value=0.0, max_value=1.0), distance=st.floats(min_value=0.05, max_value=1.0),
           sign=st.sampled_from([-1.0, 1.0]), replicate=st.integers(min_value=0, max_value=(1 << 32) - 1))
    def test_finite_difference_on_random_pairs_and_paths(self, meyer, x, distance, sign, replicate):
        job = KernelJob(scale_min=-8, scale_max=12)
        check = finite_difference_check(meyer, CoefficientModel.gaussian(nu=1.0), x, x + sign * distance, job,
                                        path(replicate))
        assert check['relative_error'] <= 1e-4

    def test_dy_is_dx_with_the_points_swapped(self, meyer, small_job, gaussian):
        dy = sample_kernel_dy(meyer, gaussian, 0.3, 0.8, small_job, path(2)).value
        dx = sample_kernel_dx(meyer, gaussian, 0.8, 0.3, small_job, path(2)).value
        assert dy == pytest.approx(dx, rel=1e-10, abs=1e-12)

    def test_degenerate_model_gives_zero(self, meyer, small_job):
        model = CoefficientModel.constant(mu0=0.0)
        assert sample_kernel_dx(meyer, model, 0.3, 0.8, small_job, path()).value == 0.0

    def test_gradient_summability_positive(self, meyer, small_job):
        value = gradient_square_summability(meyer, 0.3, 0.8, small_job)
        assert value.value > 0 and value.tail_bound >= 0


class TestHaarRegularity:
    def test_admissible_triple(self, job, gaussian):
        assert haar_regularity_check(gaussian, 0.125, 0.1875, 0.75, job, path())
        assert haar_regularity_check(gaussian, 0.125, 0.1875, 0.75, job, path(), variable='y')

    def test_same_point(self, job, gaussian):
        assert haar_regularity_check(gaussian, 0.125, 0.125, 0.75, job, path())

    def test_hypothesis_unmet(self, job, gaussian):
        with pytest.raises(HypothesisUnmetError, match='hypothesis unmet'):
            haar_regularity_check(gaussian, 0.125, 0.625, 0.75, job, path())

    def test_needs_haar(self, meyer, job, gaussian):
        with pytest.raises(DomainError):
            haar_regularity_check(gaussian, 0.125, 0.1875, 0.75, job, path(), w=meyer)
