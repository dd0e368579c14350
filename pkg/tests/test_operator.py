import copy
import tracemalloc

import numpy as np
import pytest

from models.dyadic import DyadicIndex
from models.errors import DomainError, TableFormatError
from models.operator import (GridFunction, RandomOperator, analyze, apply_T, pointwise_norms,
                             pointwise_second_moment, synthesize, vector_norm_T, weak11_constant, weak11_profile)
from models.randkernel import KernelJob
from models.subgauss import CoefficientModel, SeedPath
from models.wavelets import MeyerTable

DEPTH = 8


@pytest.fixture
def wide_job():
    return KernelJob(scale_min=-6, scale_max=20)


@pytest.fixture
def unit_job():
    """Scales 0 and finer: an orthonormal system on [0, 1)"""
    return KernelJob(scale_min=0, scale_max=20)


@pytest.fixture
def f():
    return GridFunction.random(101, 0, m=0, depth=DEPTH)


class TestGridFunction:
    def test_geometry(self, f):
        assert f.n == 256 and f.depth == DEPTH and f.step == 2.0 ** -DEPTH
        assert f.points[0] == pytest.approx(0.5 * f.step)

    def test_rejects_bad_lengths(self):
        with pytest.raises(DomainError):
            GridFunction(np.zeros(100))
        with pytest.raises(DomainError):
            GridFunction(np.zeros(2), m=3)

    def test_norms(self):
        g = GridFunction(np.ones(16))
        assert g.l2_norm == pytest.approx(1.0)
        assert GridFunction.spike(0.5, 0.25, mass=2.0, depth=6).l1_norm == pytest.approx(2.0)

    def test_text_format(self, tmp_path, f):
        path = str(tmp_path / 'f.csv')
        f.save_text(path)
        with open(path) as handle:
            assert handle.readline().strip() == '# gridfunction version=1 m=0'
        loaded = GridFunction.load_text(path)
        np.testing.assert_array_equal(loaded.samples, f.samples)

    def test_text_format_rejects_foreign_files(self, tmp_path):
        path = tmp_path / 'other.csv'
        path.write_text('x,value\n0.5,1\n')
        with pytest.raises(TableFormatError):
            GridFunction.load_text(str(path))

    def test_binary_format(self, tmp_path, f):
        path = str(tmp_path / 'f.npz')
        f.save_binary(path)
        loaded = GridFunction.load_binary(path)
        assert loaded.m == f.m
        np.testing.assert_array_equal(loaded.samples, f.samples)


class TestHaarAnalysis:
    def test_single_atom(self, haar, wide_job):
        atom = GridFunction.haar_atom(DyadicIndex(1, 0), depth=DEPTH)
        coeffs = analyze(haar, atom, wide_job)
        assert coeffs.get(DyadicIndex(1, 0)) == pytest.approx(1.0, rel=1e-12)
        others = [v for I, v in coeffs.as_map().items() if I != DyadicIndex(1, 0)]
        assert max(abs(v) for v in others) < 1e-12

    def test_constant_has_no_details(self, haar, wide_job):
        coeffs = analyze(haar, GridFunction(np.full(1 << DEPTH, 3.0)), wide_job)
        for j in range(0, DEPTH):
            np.testing.assert_allclose(coeffs.scales[j], 0.0, atol=1e-12)

    def test_parseval(self, haar, wide_job, f):
        coeffs = analyze(haar, f, wide_job)
        total = coeffs.energy() + coeffs.coarse_energy + coeffs.fine_energy
        assert total == pytest.approx(f.l2_norm ** 2, rel=1e-12)

    def test_parseval_with_finite_scale_range(self, haar, f):
        coeffs = analyze(haar, f, KernelJob(scale_min=2, scale_max=5))
        assert sorted(coeffs.scales) == [2, 3, 4, 5]
        total = coeffs.energy() + coeffs.coarse_energy + coeffs.fine_energy
        assert total == pytest.approx(f.l2_norm ** 2, rel=1e-12)

    def test_round_trip(self, haar, wide_job, f):
        centered = GridFunction(f.samples - f.samples.mean())
        back = synthesize(haar, analyze(haar, centered, wide_job), wide_job)
        np.testing.assert_allclose(back.samples, centered.samples, atol=1e-12)

    def test_coefficient_frame(self, haar, unit_job, f):
        frame = analyze(haar, f, unit_job).to_frame()
        assert list(frame.columns) == ['j', 'k', 'value']
        assert len(frame) == (1 << DEPTH) - 1

    def test_grid_mismatch(self, haar, unit_job, f):
        operator = RandomOperator(haar, unit_job, 0, DEPTH + 1)
        with pytest.raises(DomainError):
            operator.analyze(f)


class TestApply:
    def test_deterministic(self, haar, wide_job, gaussian, f):
        first = apply_T(haar, gaussian, f, wide_job, SeedPath(5, 3, 0, 0))
        again = apply_T(haar, gaussian, f, wide_job, SeedPath(5, 3, 0, 0))
        np.testing.assert_array_equal(first.samples, again.samples)

    def test_unit_multipliers_project(self, haar, unit_job, f):
        model = CoefficientModel.constant(mu0=1.0)
        image = apply_T(haar, model, f, unit_job, SeedPath(0, 0, 0, 0))
        np.testing.assert_allclose(image.samples, f.samples - f.samples.mean(), atol=1e-12)

    def test_rademacher_preserves_norm(self, haar, unit_job, f):
        coeffs = analyze(haar, f, unit_job)
        for r in range(5):
            image = apply_T(haar, CoefficientModel.rademacher(), f, unit_job, SeedPath(9, r, 0, 0))
            assert image.l2_norm ** 2 == pytest.approx(coeffs.energy(), rel=1e-12)

    def test_linear(self, haar, wide_job, gaussian, f):
        g = GridFunction.random(202, 0, m=0, depth=DEPTH)
        path = SeedPath(4, 1, 0, 0)
        combined = apply_T(haar, gaussian, GridFunction(f.samples + 2.0 * g.samples), wide_job, path)
        parts = apply_T(haar, gaussian, f, wide_job, path).samples + 2.0 * apply_T(haar, gaussian, g, wide_job,
                                                                                    path).samples
        np.testing.assert_allclose(combined.samples, parts, atol=1e-10)

    def test_pointwise_second_moment(self, haar, wide_job, gaussian, f):
        exact = pointwise_second_moment(haar, gaussian, f, wide_job)
        operator = RandomOperator(haar, wide_job, f.m, f.depth)
        n = 4000
        images = operator.apply_batch(operator.analyze(f), gaussian, 17, np.arange(n, dtype=np.uint64))
        squares = np.square(images)
        for i in np.linspace(0, f.n - 1, 10).astype(int):
            std_error = squares[:, i].std(ddof=1) / np.sqrt(n)
            assert abs(squares[:, i].mean() - exact[i]) <= 5.0 * std_error

    def test_mean_part_of_second_moment(self, haar, unit_job, f):
        model = CoefficientModel.constant(mu0=1.0)
        moment = pointwise_second_moment(haar, model, f, unit_job, centered=False)
        np.testing.assert_allclose(moment, np.square(f.samples - f.samples.mean()), atol=1e-12)


class TestSmoothQuadrature:
    SCALES = (-12, -5, -2, -1, 3, 7)

    @pytest.fixture
    def deep_job(self):
        return KernelJob(scale_min=-12, scale_max=7)

    def test_default_job_fits_in_memory(self, meyer):
        tracemalloc.start()
        try:
            operator = RandomOperator(meyer, KernelJob(), 0, 14)
            _, peak = tracemalloc.get_traced_memory()
        finally:
            tracemalloc.stop()
        assert operator.nbytes < 2 ** 28
        assert peak < 2 ** 28

    def test_analysis_matches_direct_sums(self, meyer, deep_job, f):
        coeffs = RandomOperator(meyer, deep_job, f.m, f.depth).analyze(f)
        for j in self.SCALES:
            ks = coeffs.indices(j)
            for k in (ks[0], ks[len(ks) // 3], ks[len(ks) // 2], ks[-1]):
                direct = f.step * float(np.dot(f.samples, meyer.psi_I(DyadicIndex(j, int(k)), f.points)))
                assert coeffs.get(DyadicIndex(j, int(k))) == pytest.approx(direct, rel=1e-9, abs=1e-12)

    def test_synthesis_matches_direct_sums(self, meyer, deep_job, f):
        operator = RandomOperator(meyer, deep_job, f.m, f.depth)
        coeffs = operator.analyze(f)
        rng = np.random.default_rng(5)
        multipliers = {j: rng.standard_normal((2, len(v))) for j, v in coeffs.scales.items()}
        images = operator.synthesize(coeffs, multipliers)
        squares = operator.square_map(coeffs.scales)

        direct = np.zeros((2, f.n))
        direct_squares = np.zeros(f.n)
        for j, values in coeffs.scales.items():
            for i, k in enumerate(coeffs.indices(j)):
                atom = meyer.psi_I(DyadicIndex(j, int(k)), f.points)
                direct += (multipliers[j][:, i] * values[i])[:, None] * atom[None, :]
                direct_squares += values[i] * np.square(atom)
        np.testing.assert_allclose(images, direct, rtol=1e-9, atol=1e-10)
        np.testing.assert_allclose(squares, direct_squares, rtol=1e-9, atol=1e-10)

    def test_rejects_a_non_dyadic_table(self, meyer):
        table = MeyerTable(start=meyer.table.start, step=meyer.table.step * 3 / 4, psi=meyer.table.psi,
                           dpsi=meyer.table.dpsi, version=meyer.table.version)
        skewed = copy.copy(meyer)
        skewed.table = table
        with pytest.raises(DomainError):
            RandomOperator(skewed, KernelJob(scale_min=-4, scale_max=2), 0, DEPTH)


class TestNorms:
    def test_needs_enough_replicates(self, haar, wide_job, gaussian, f):
        with pytest.raises(DomainError, match='n >= 1000'):
            vector_norm_T(haar, gaussian, f, wide_job, 999)

    def test_zero_function(self, haar, wide_job, gaussian):
        report = vector_norm_T(haar, gaussian, GridFunction.zeros(depth=6), wide_job, 1000)
        assert report.estimate.mean == 0.0 and report.bound == 0.0

    def test_haar_bound(self, haar, unit_job, gaussian, f):
        report = vector_norm_T(haar, gaussian, f, unit_job, 1000, master_seed=3)
        assert report.bound == pytest.approx(np.sqrt(8.0) * f.l2_norm)
        assert report.estimate.mean <= report.bound + 3.0 * report.estimate.half_width
        assert report.squared.ci_low - report.squared.half_width <= report.exact <= (
            report.squared.ci_high + report.squared.half_width)

    def test_smooth_bound(self, meyer, gaussian):
        g = GridFunction.random(7, 0, m=0, depth=7)
        report = vector_norm_T(meyer, gaussian, g, KernelJob(scale_min=-3, scale_max=6), 1000, master_seed=3)
        assert report.estimate.mean <= report.bound + 3.0 * report.estimate.half_width

    def test_point_terms_sum_to_the_projection(self, haar, unit_job, f):
        operator = RandomOperator(haar, unit_job, f.m, f.depth)
        coeffs = operator.analyze(f)
        for i in (0, 77, 200):
            plan = operator.point_terms(coeffs, f.points[i])
            assert plan.values.sum() == pytest.approx(f.samples[i] - f.samples.mean(), abs=1e-12)

    def test_pointwise_norms_of_a_projection(self, haar, unit_job, f):
        norms = pointwise_norms(haar, CoefficientModel.constant(mu0=1.0), f, unit_job, 3)
        np.testing.assert_allclose(norms, np.abs(f.samples - f.samples.mean()), atol=1e-12)

    def test_pointwise_norms_match_the_second_moment(self, haar, wide_job, gaussian, f):
        norms = pointwise_norms(haar, gaussian, f, wide_job, 4000, master_seed=17)
        exact = np.sqrt(pointwise_second_moment(haar, gaussian, f, wide_job))
        np.testing.assert_allclose(norms, exact, rtol=0.1)

    def test_thread_count_does_not_change_estimate(self, haar, wide_job, gaussian, f):
        serial = vector_norm_T(haar, gaussian, f, wide_job, 1000, chunk_size=100, threads=1)
        pooled = vector_norm_T(haar, gaussian, f, wide_job, 1000, chunk_size=100, threads=3)
        assert serial.estimate == pooled.estimate


class TestWeak11:
    def test_scale_invariant_constant(self, haar, wide_job, gaussian):
        spike = GridFunction.spike(0.5, 2.0 ** -6, depth=DEPTH)
        thresholds = np.geomspace(0.1, 100.0, 7)
        base = weak11_profile(haar, gaussian, spike, wide_job, 50, thresholds, master_seed=2)
        scaled = weak11_profile(haar, gaussian, spike.scaled(10.0), wide_job, 50, thresholds * 10.0, master_seed=2)
        assert scaled.attrs['fitted_C'] == pytest.approx(base.attrs['fitted_C'], rel=1e-9)
        np.testing.assert_allclose(scaled['product'], base['product'], rtol=1e-9)
        assert (base['product'] <= base.attrs['fitted_C'] * (1 + 1e-12)).all()

    def test_zero_function(self, haar, wide_job, gaussian):
        profile = weak11_profile(haar, gaussian, GridFunction.zeros(depth=6), wide_job, 10, [0.5, 1.0])
        assert (profile['measure'] == 0.0).all()
        assert profile.attrs['fitted_C'] == 0.0

    def test_constant_from_sorted_norms(self):
        assert weak11_constant(np.array([4.0, 1.0, 2.0]), 0.5, 1.0) == pytest.approx(2.0)
