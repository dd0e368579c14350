"""
Subgaussian coefficient models and their calculus.

Every law here is symmetric about its mean, so a draw is
mean_profile(j, k) + noise with a centered noise obtained from one counter
based uniform through the noise's inverse CDF.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special

from utils.statistics import DEFAULT_CONFIDENCE, McEstimate, chunked_map, ordered_sum

from . import streams
from .errors import DegeneratePairError, DomainError, EmptyInputError

logger = logging.getLogger(__name__)

GAUSSIAN = 'gaussian'
RADEMACHER = 'rademacher'
BOUNDED_UNIFORM = 'bounded_uniform'
TRUNCATED_GAUSSIAN = 'truncated_gaussian'
CONSTANT = 'constant'
DISTRIBUTIONS = (GAUSSIAN, RADEMACHER, BOUNDED_UNIFORM, TRUNCATED_GAUSSIAN, CONSTANT)

GEOMETRIC_PROFILE = 'geometric'
CONSTANT_PROFILE = 'constant'

VERDICT_CERTIFIED = 'certified-convergent'
VERDICT_INCONCLUSIVE = 'inconclusive'

# e^-u <= (2/e)^2 u^-2 for u > 0
SQUARE_TAIL_FACTOR = 32.0 / math.e ** 2


@dataclass(frozen=True)
class SeedPath:
    """Address of one coefficient draw: a_I for I = (j, k) in replicate `replicate`"""

    master_seed: int
    replicate: int
    j: int
    k: int


@dataclass(frozen=True)
class CoefficientModel:
    """
    Law of the independent coefficients a_I.

    dist picks the centered noise; sigma scales the Gaussian, (a, b) give
    the width b - a of the uniform noise and cutoff the truncation level of
    the truncated standard Gaussian. The mean profile is mu0 2^-|j| 2^-|k|
    ('geometric') or mu0 everywhere ('constant').
    """

    dist: str = GAUSSIAN
    sigma: float = 1.0
    a: float = -1.0
    b: float = 1.0
    cutoff: float = 2.0
    mu0: float = 0.0
    mean_kind: str = GEOMETRIC_PROFILE
    half_line: bool = True
    notes: Tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.dist not in DISTRIBUTIONS:
            raise DomainError(f"unknown distribution '{self.dist}'")
        if self.mean_kind not in (GEOMETRIC_PROFILE, CONSTANT_PROFILE):
            raise DomainError(f"unknown mean profile '{self.mean_kind}'")
        if self.dist == GAUSSIAN and self.sigma <= 0:
            raise DomainError("gaussian sigma must be positive")
        if self.dist == BOUNDED_UNIFORM and not self.b > self.a:
            raise DomainError("bounded_uniform needs a < b")
        if self.dist == TRUNCATED_GAUSSIAN and self.cutoff <= 0:
            raise DomainError("truncated_gaussian cutoff must be positive")
        if self.dist == RADEMACHER and self.mu0 != 0.0:
            logger.warning("Rademacher coefficients have mean 0; ignoring mu0=%s", self.mu0)
            object.__setattr__(self, 'mu0', 0.0)
        if self.dist == RADEMACHER:
            object.__setattr__(self, 'notes', self.notes + (
                "sum of E|a_I| diverges for Rademacher coefficients; only centered bounds apply",))

    # constructors

    @classmethod
    def gaussian(cls, nu: float = 1.0, mu0: float = 0.0, **kwargs) -> 'CoefficientModel':
        if nu <= 0:
            raise DomainError("variance factor must be positive")
        return cls(dist=GAUSSIAN, sigma=math.sqrt(nu), mu0=mu0, **kwargs)

    @classmethod
    def rademacher(cls, **kwargs) -> 'CoefficientModel':
        return cls(dist=RADEMACHER, **kwargs)

    @classmethod
    def bounded_uniform(cls, a: float = -1.0, b: float = 1.0, mu0: float = 0.0, **kwargs) -> 'CoefficientModel':
        return cls(dist=BOUNDED_UNIFORM, a=a, b=b, mu0=mu0, **kwargs)

    @classmethod
    def truncated_gaussian(cls, cutoff: float = 2.0, mu0: float = 0.0, **kwargs) -> 'CoefficientModel':
        return cls(dist=TRUNCATED_GAUSSIAN, cutoff=cutoff, mu0=mu0, **kwargs)

    @classmethod
    def constant(cls, mu0: float = 1.0, mean_kind: str = CONSTANT_PROFILE, **kwargs) -> 'CoefficientModel':
        return cls(dist=CONSTANT, mu0=mu0, mean_kind=mean_kind, **kwargs)

    @classmethod
    def from_dict(cls, block: Dict) -> 'CoefficientModel':
        block = dict(block)
        dist = block.pop('dist', GAUSSIAN)
        if dist == GAUSSIAN and 'nu' in block:
            return cls.gaussian(**block)
        block.pop('nu', None)
        return cls(dist=dist, **block)

    # law

    @property
    def nu(self) -> float:
        """Variance factor of the centered noise"""
        if self.dist == GAUSSIAN:
            return self.sigma ** 2
        if self.dist == RADEMACHER:
            return 1.0
        if self.dist == BOUNDED_UNIFORM:
            return (self.b - self.a) ** 2 / 4.0
        if self.dist == TRUNCATED_GAUSSIAN:
            return min(1.0, self.cutoff ** 2)
        return 0.0

    @property
    def variance(self) -> float:
        if self.dist == GAUSSIAN:
            return self.sigma ** 2
        if self.dist == RADEMACHER:
            return 1.0
        if self.dist == BOUNDED_UNIFORM:
            return (self.b - self.a) ** 2 / 12.0
        if self.dist == TRUNCATED_GAUSSIAN:
            A = self.cutoff
            return 1.0 - 2.0 * A * _phi(A) / _mass(A)
        return 0.0

    @property
    def is_symmetric(self) -> bool:
        return True

    @property
    def is_degenerate(self) -> bool:
        return self.dist == CONSTANT

    @property
    def mean_profile_l1(self) -> float:
        """Sum of |E a_I| over the index set, in closed form"""
        if self.mu0 == 0.0:
            return 0.0
        if self.mean_kind == CONSTANT_PROFILE:
            return math.inf
        # sum_j 2^-|j| = 3; sum_k 2^-|k| = 3 on the line, 2 on the half line
        return abs(self.mu0) * 3.0 * (2.0 if self.half_line else 3.0)

    @property
    def mean_sup(self) -> float:
        return abs(self.mu0)

    def mean_at(self, j, k):
        j = np.asarray(j, dtype=float)
        k = np.asarray(k, dtype=float)
        if self.mu0 == 0.0:
            return np.zeros(np.broadcast(j, k).shape)
        if self.mean_kind == CONSTANT_PROFILE:
            return np.full(np.broadcast(j, k).shape, self.mu0)
        return self.mu0 * np.exp2(-np.abs(j) - np.abs(k))

    def noise_from_uniform(self, u, signs=None):
        """Centered noise by inverse CDF of uniforms u in (0, 1)"""
        u = np.asarray(u, dtype=float)
        if self.dist == GAUSSIAN:
            return self.sigma * special.ndtri(u)
        if self.dist == RADEMACHER:
            return signs if signs is not None else np.where(u < 0.5, -1.0, 1.0)
        if self.dist == BOUNDED_UNIFORM:
            return (self.b - self.a) * (u - 0.5)
        if self.dist == TRUNCATED_GAUSSIAN:
            A = self.cutoff
            low = special.ndtr(-A)
            return special.ndtri(low + u * (1.0 - 2.0 * low))
        return np.zeros_like(u)

    def noise(self, master_seed: int, replicate, j, k):
        """Centered draws for broadcast (replicate, j, k)"""
        if self.dist == CONSTANT:
            return np.zeros(np.broadcast(np.asarray(replicate), np.asarray(j), np.asarray(k)).shape)
        if self.dist == RADEMACHER:
            return streams.sign_bits(master_seed, replicate, j, k)
        return self.noise_from_uniform(streams.uniforms(master_seed, replicate, j, k))

    def describe(self) -> Dict:
        return {'dist': self.dist, 'nu': self.nu, 'variance': self.variance, 'mu0': self.mu0,
                'mean_kind': self.mean_kind, 'mean_profile_l1': self.mean_profile_l1,
                'notes': list(self.notes)}


def _phi(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def _mass(A):
    """P{|Z| <= A} for a standard normal Z"""
    return 2.0 * special.ndtr(A) - 1.0


@dataclass
class ThreeSeriesReport:
    truncation_A: float
    series1_partial: float
    series2_partial: float
    series3_partial: float
    tail_bounds: Tuple[float, float, float]
    verdict: str
    terms: int = 0
    tolerance: float = 1e-8

    def to_dict(self) -> Dict:
        return {'truncation_A': self.truncation_A, 'series1_partial': self.series1_partial,
                'series2_partial': self.series2_partial, 'series3_partial': self.series3_partial,
                'series1_tail': self.tail_bounds[0], 'series2_tail': self.tail_bounds[1],
                'series3_tail': self.tail_bounds[2], 'verdict': self.verdict,
                'terms': self.terms, 'tolerance': self.tolerance}


def _check_positive(**values):
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")


def chernoff_tail(nu: float, t: float) -> float:
    """One-sided bound P{X - EX >= t} <= exp(-t^2 / (2 nu))"""
    _check_positive(nu=nu, t=t)
    return math.exp(-t * t / (2.0 * nu))


def two_sided_tail(nu: float, t: float) -> float:
    return min(1.0, 2.0 * chernoff_tail(nu, t))


def combine_variance_factors(nus: Sequence[float]) -> float:
    """Variance factor of an independent sum"""
    nus = list(nus)
    if not nus:
        raise EmptyInputError("combine_variance_factors needs at least one factor")
    for nu in nus:
        _check_positive(nu=nu)
    return float(math.fsum(nus))


def series_variance_factor(nu_total: float) -> float:
    """Certified factor 8 nu of an infinite independent subgaussian series"""
    _check_positive(nu_total=nu_total)
    return 8.0 * nu_total


def moment_bound(nu_total: float, k: int) -> float:
    """k! (2 nu)^k bound on the 2k-th central moment"""
    _check_positive(nu_total=nu_total)
    if int(k) != k or k < 1:
        raise DomainError(f"moment order must be a positive integer, got {k}")
    return math.factorial(int(k)) * (2.0 * nu_total) ** int(k)


def l2_moment_bound(nu_total: float) -> float:
    return moment_bound(nu_total, 1)


def model_variance(model: CoefficientModel) -> float:
    return model.variance


def sample_coefficient(model: CoefficientModel, path: SeedPath) -> float:
    """One draw of a_I, a pure function of the path"""
    noise = model.noise(path.master_seed, np.uint64(path.replicate), path.j, path.k)
    return float(model.mean_at(path.j, path.k) + noise)


def sample_coefficients(model: CoefficientModel, master_seed: int, replicates, j, k,
                        centered: bool = False) -> np.ndarray:
    """Draws for every replicate (rows) and every index (columns)"""
    replicates = np.asarray(replicates, dtype=np.uint64).reshape(-1, 1)
    j = np.asarray(j, dtype=np.int64).reshape(1, -1)
    k = np.asarray(k, dtype=np.int64).reshape(1, -1)
    draws = model.noise(master_seed, replicates, j, k)
    if centered:
        return draws
    return draws + model.mean_at(j, k)


def exact_tail(model: CoefficientModel, t: float) -> float:
    """P{|a - E a| > t}"""
    if t < 0:
        return 1.0
    if model.dist == GAUSSIAN:
        return float(2.0 * special.ndtr(-t / model.sigma))
    if model.dist == RADEMACHER:
        return 1.0 if t < 1.0 else 0.0
    if model.dist == BOUNDED_UNIFORM:
        half = (model.b - model.a) / 2.0
        return max(0.0, 1.0 - t / half)
    if model.dist == TRUNCATED_GAUSSIAN:
        A = model.cutoff
        if t >= A:
            return 0.0
        return float(2.0 * (special.ndtr(A) - special.ndtr(t)) / _mass(A))
    return 0.0


def truncated_moments(model: CoefficientModel, A: float, center: float = 0.0) -> Tuple[float, float]:
    """
    Mean and variance of X 1{|X| <= A} for X = center + noise.

    Closed forms for the Gaussian, Rademacher, uniform and constant laws;
    the truncated Gaussian with a nonzero center falls back to quadrature.
    """
    _check_positive(A=A)
    if model.dist == GAUSSIAN:
        sigma = model.sigma
        alpha, beta = (-A - center) / sigma, (A - center) / sigma
        mass = special.ndtr(beta) - special.ndtr(alpha)
        first = center * mass + sigma * (_phi(alpha) - _phi(beta))
        second = (center ** 2 * mass + 2 * center * sigma * (_phi(alpha) - _phi(beta))
                  + sigma ** 2 * (mass + alpha * _phi(alpha) - beta * _phi(beta)))
    elif model.dist == RADEMACHER:
        values = np.array([center - 1.0, center + 1.0])
        kept = values[np.abs(values) <= A]
        first = float(np.sum(kept)) / 2.0
        second = float(np.sum(kept ** 2)) / 2.0
    elif model.dist == BOUNDED_UNIFORM:
        half = (model.b - model.a) / 2.0
        low, high = max(center - half, -A), min(center + half, A)
        if high <= low:
            first = second = 0.0
        else:
            first = (high ** 2 - low ** 2) / (4.0 * half)
            second = (high ** 3 - low ** 3) / (6.0 * half)
    elif model.dist == TRUNCATED_GAUSSIAN:
        cutoff = model.cutoff
        if center == 0.0:
            m = min(A, cutoff)
            first = 0.0
            second = (_mass(m) - 2.0 * m * _phi(m)) / _mass(cutoff)
        else:
            low, high = max(center - cutoff, -A), min(center + cutoff, A)
            if high <= low:
                first = second = 0.0
            else:
                density = lambda x: _phi(x - center) / _mass(cutoff)
                first = integrate.quad(lambda x: x * density(x), low, high)[0]
                second = integrate.quad(lambda x: x * x * density(x), low, high)[0]
    else:
        first = center if abs(center) <= A else 0.0
        second = first ** 2
    first, second = float(first), float(second)
    return first, max(second - first ** 2, 0.0)


def three_series_certificate(model: CoefficientModel, w, x, y, A: float, trunc,
                             tolerance: float = 1e-8) -> ThreeSeriesReport:
    """
    Kolmogorov three-series partial sums for X_I = (a_I - E a_I) psi_I(x) psi_I(y).

    Per kept term with c = psi_I(x) psi_I(y), the truncation level A for X_I
    is A / |c| for the noise. Remainders over omitted terms are bounded from
    the omitted square mass S: P{|X_I| > A} <= (32/e^2) (nu/A^2)^2 c^4 gives
    series 1 <= (32/e^2)(nu/A^2)^2 S^2, and Var(Y_I) <= Var(a_I) c^2 gives
    series 3 <= Var(a) S. Series 2 vanishes term by term for symmetric laws.
    """
    _check_positive(A=A)
    if float(x) == float(y):
        raise DegeneratePairError(x, y)
    plan = w.terms(x, y, trunc)
    c = plan.values[plan.values != 0.0]

    series1 = series2 = series3 = 0.0
    for value in np.abs(c):
        level = A / value
        series1 += exact_tail(model, level)
        mean, variance = truncated_moments(model, level)
        series2 += value * mean
        series3 += value ** 2 * variance

    omitted = plan.square_tail
    tail1 = SQUARE_TAIL_FACTOR * (model.nu / A ** 2) ** 2 * omitted ** 2
    tail2 = 0.0 if model.is_symmetric else math.sqrt(model.variance) * plan.abs_tail
    tail3 = model.variance * omitted
    tails = (tail1, tail2, tail3)
    verdict = VERDICT_CERTIFIED if all(t < tolerance for t in tails) else VERDICT_INCONCLUSIVE
    return ThreeSeriesReport(truncation_A=float(A), series1_partial=series1, series2_partial=series2,
                             series3_partial=series3, tail_bounds=tails, verdict=verdict,
                             terms=int(len(c)), tolerance=tolerance)


def empirical_log_mgf(model: CoefficientModel, lam: float, n: int, master_seed: int = 0,
                      lambda_max: float = 10.0, chunk_size: int = 100000, threads: int = 1,
                      confidence: float = DEFAULT_CONFIDENCE) -> McEstimate:
    """Monte Carlo estimate of log E exp(lam (X - EX)) from draws at I = (0, 0)"""
    if n < 1000:
        raise DomainError(f"empirical_log_mgf needs n >= 1000, got {n}")
    if abs(lam) > lambda_max:
        raise DomainError(f"|lambda|={abs(lam)} exceeds the configured range {lambda_max}")
    if lam == 0.0:
        return McEstimate(mean=0.0, std_error=0.0, n=n, ci_low=0.0, ci_high=0.0, confidence=confidence)

    def chunk(start, stop):
        values = np.exp(lam * model.noise(master_seed, np.arange(start, stop, dtype=np.uint64), 0, 0))
        return np.array([values.sum(), np.square(values).sum()])

    totals = ordered_sum(chunked_map(chunk, n, chunk_size, threads))
    mgf = McEstimate.from_moments(totals[0], totals[1], n, confidence)
    low = math.log(mgf.ci_low) if mgf.ci_low > 0 else -math.inf
    return McEstimate(mean=math.log(mgf.mean), std_error=mgf.std_error / mgf.mean, n=n,
                      ci_low=low, ci_high=math.log(mgf.ci_high), confidence=confidence)


def empirical_tail(model: CoefficientModel, t_grid: Sequence[float], n: int, master_seed: int = 0,
                   chunk_size: int = 100000, threads: int = 1,
                   confidence: float = DEFAULT_CONFIDENCE) -> List[Tuple[float, McEstimate]]:
    """Two-sided tail proportions P{|X - EX| > t} with Wilson intervals"""
    t_grid = np.asarray(list(t_grid), dtype=float)

    def chunk(start, stop):
        draws = np.abs(model.noise(master_seed, np.arange(start, stop, dtype=np.uint64), 0, 0))
        return (draws[:, None] > t_grid[None, :]).sum(axis=0).astype(float)

    counts = ordered_sum(chunked_map(chunk, n, chunk_size, threads))
    return [(float(t), McEstimate.proportion(int(count), n, confidence)) for t, count in zip(t_grid, counts)]


def empirical_central_moments(nus: Sequence[float], k_max: int, n: int, master_seed: int = 0,
                              chunk_size: int = 100000, threads: int = 1,
                              confidence: float = DEFAULT_CONFIDENCE) -> List[Tuple[int, McEstimate]]:
    """E S^(2k), k = 1..k_max, for S a sum of independent centered Gaussians with factors nus"""
    sigmas = np.sqrt(np.asarray(list(nus), dtype=float))
    if len(sigmas) == 0:
        raise EmptyInputError("empirical_central_moments needs at least one summand")
    orders = np.arange(1, k_max + 1)
    index = np.arange(len(sigmas), dtype=np.int64)

    def chunk(start, stop):
        replicates = np.arange(start, stop, dtype=np.uint64).reshape(-1, 1)
        u = streams.uniforms(master_seed, replicates, index.reshape(1, -1), 0)
        total = (special.ndtri(u) * sigmas).sum(axis=1)
        powers = total[:, None] ** (2 * orders[None, :])
        return np.concatenate([powers.sum(axis=0), np.square(powers).sum(axis=0)])

    totals = ordered_sum(chunked_map(chunk, n, chunk_size, threads))
    return [(int(k), McEstimate.from_moments(totals[i], totals[len(orders) + i], n, confidence))
            for i, k in enumerate(orders)]


def fitted_variance_factor(second_moment: float, square_sum: float) -> float:
    """Empirical factor nu_hat with E|Sigma|^2 = nu_hat * sum c_I^2"""
    if square_sum <= 0:
        return 0.0
    return second_moment / square_sum
