"""
Random wavelet summability kernels K(x, y; w) = sum_I a_I psi_I(x) psi_I(y).

A realisation w is never stored: it is the pair (model, master seed,
replicate), and each coefficient a_I is re-derived from its counter when a
term plan is realised.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

from .dyadic import DEFAULT_GRID_DEPTH, dyadic_distance
from .errors import DomainError, HypothesisUnmetError
from .subgauss import CoefficientModel, SeedPath, sample_coefficients
from .wavelets import HAAR, TermPlan, WaveletFamily

logger = logging.getLogger(__name__)

ANCESTOR_CHAIN = 'ancestor-chain'
DECAY_WINDOW = 'decay-window'


@dataclass(frozen=True)
class KernelJob:
    """Truncation policy: scale range, translation windows and a per-term tolerance"""

    scale_min: int = -20
    scale_max: int = 20
    tail_tol: float = 1e-10
    grid_depth: int = DEFAULT_GRID_DEPTH

    def __post_init__(self):
        if self.scale_min > self.scale_max:
            raise DomainError(f"scale_min={self.scale_min} exceeds scale_max={self.scale_max}")
        if not self.tail_tol > 0:
            raise DomainError(f"tail_tol must be positive, got {self.tail_tol}")
        if self.grid_depth < 1:
            raise DomainError(f"grid_depth must be at least 1, got {self.grid_depth}")

    @staticmethod
    def translation_policy(w: WaveletFamily) -> str:
        return ANCESTOR_CHAIN if w.kind == HAAR else DECAY_WINDOW

    @staticmethod
    def window(j: int, x: float, y: float, radius: float):
        """Translations k at scale j with |2^j x - k| <= radius and |2^j y - k| <= radius"""
        ux, uy = math.ldexp(x, j), math.ldexp(y, j)
        return math.ceil(max(ux, uy) - radius), math.floor(min(ux, uy) + radius)

    def widened(self, coarser: int = 0, finer: int = 0) -> 'KernelJob':
        return KernelJob(self.scale_min - coarser, self.scale_max + finer, self.tail_tol, self.grid_depth)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class KernelValue:
    value: float
    tail_bound: float

    def __post_init__(self):
        if self.tail_bound < 0:
            raise DomainError("tail_bound must be nonnegative")


def realize(plan: TermPlan, model: CoefficientModel, master_seed: int, replicates,
            centered: bool = False) -> np.ndarray:
    """Sum of a_I c_I over the plan for each replicate"""
    replicates = np.atleast_1d(np.asarray(replicates, dtype=np.uint64))
    if plan.size == 0:
        return np.zeros(len(replicates))
    coefficients = sample_coefficients(model, master_seed, replicates, plan.j, plan.k, centered=centered)
    return np.sum(coefficients * plan.values[None, :], axis=-1)


def square_summability(w: WaveletFamily, x, y, job: KernelJob) -> KernelValue:
    """sum |psi_I(x)|^2 |psi_I(y)|^2; exact for Haar after closing the coarse tail"""
    plan = w.terms(x, y, job)
    total = float(np.sum(np.square(plan.values)))
    if plan.exact_tail:
        return KernelValue(total + plan.square_tail, 0.0)
    return KernelValue(total, plan.square_tail)


def gradient_square_summability(w: WaveletFamily, x, y, job: KernelJob, variable: str = 'x') -> KernelValue:
    """sum |I|^-2 |psi'_I(x)|^2 |psi_I(y)|^2 (or with the derivative on y)"""
    plan = w.terms(x, y, job, derivative=variable)
    return KernelValue(float(np.sum(np.square(plan.values))), plan.square_tail)


def second_moment_identity(model: CoefficientModel, plan: TermPlan, centered: bool = True) -> float:
    """Exact E|sum a_I c_I|^2 over the plan from independence"""
    value = model.variance * float(np.sum(np.square(plan.values)))
    if not centered:
        value += float(np.sum(model.mean_at(plan.j, plan.k) * plan.values)) ** 2
    return value


def mean_kernel(w: WaveletFamily, model: CoefficientModel, x, y, job: KernelJob) -> KernelValue:
    """sum E a_I psi_I(x) psi_I(y)"""
    if model.mu0 == 0.0:
        return KernelValue(0.0, 0.0)
    plan = w.terms(x, y, job)
    value = float(np.sum(model.mean_at(plan.j, plan.k) * plan.values))
    return KernelValue(value, model.mean_sup * plan.abs_tail)


def _realized(w, model, x, y, job, path: SeedPath, centered: bool, derivative: Optional[str]) -> KernelValue:
    plan = w.terms(x, y, job, derivative=derivative)
    value = float(realize(plan, model, path.master_seed, [path.replicate], centered=centered)[0])
    return KernelValue(value, 8.0 * model.nu * plan.square_tail)


def sample_kernel(w: WaveletFamily, model: CoefficientModel, x, y, job: KernelJob, path: SeedPath) -> KernelValue:
    """
    One realisation of the truncated series K(x, y; w).

    The realisation is addressed by (path.master_seed, path.replicate); the
    per-term (j, k) counters come from the plan. tail_bound is 8 nu times the
    omitted square mass, the variance factor of the omitted centered part.
    """
    return _realized(w, model, x, y, job, path, centered=False, derivative=None)


def sample_centered_kernel(w, model, x, y, job, path: SeedPath) -> KernelValue:
    return _realized(w, model, x, y, job, path, centered=True, derivative=None)


def sample_kernel_dx(w, model, x, y, job, path: SeedPath, centered: bool = False) -> KernelValue:
    """d/dx of the realised kernel; centered=True gives the derivative of the centered part"""
    return _realized(w, model, x, y, job, path, centered=centered, derivative='x')


def sample_kernel_dy(w, model, x, y, job, path: SeedPath, centered: bool = False) -> KernelValue:
    return _realized(w, model, x, y, job, path, centered=centered, derivative='y')


def sample_kernels(w: WaveletFamily, model: CoefficientModel, x, y, job: KernelJob, master_seed: int,
                   replicates, centered: bool = False, derivative: Optional[str] = None) -> np.ndarray:
    """Realisations for many replicates at once; row r equals the single-path value"""
    plan = w.terms(x, y, job, derivative=derivative)
    return realize(plan, model, master_seed, replicates, centered=centered)


def finite_difference_check(w: WaveletFamily, model: CoefficientModel, x: float, y: float, job: KernelJob,
                            path: SeedPath, step: float = 1e-6) -> Dict[str, float]:
    """
    Compare sample_kernel_dx with a central difference of sample_kernel.

    Both shifted evaluations reuse the index set of the plan at (x, y), so
    the difference quotient sees the same terms on each side.
    """
    plan = w.terms(x, y, job)
    coefficients = sample_coefficients(model, path.master_seed, [path.replicate], plan.j, plan.k)[0]
    forward = float(np.sum(coefficients * w.evaluate_terms(plan.j, plan.k, x + step, y)))
    backward = float(np.sum(coefficients * w.evaluate_terms(plan.j, plan.k, x - step, y)))
    difference = (forward - backward) / (2.0 * step)
    derivative = sample_kernel_dx(w, model, x, y, job, path).value
    scale = max(abs(derivative), abs(difference), np.finfo(float).tiny)
    return {'derivative': derivative, 'finite_difference': difference,
            'relative_error': abs(derivative - difference) / scale}


def haar_regularity_check(model: CoefficientModel, x, x_prime, y, job: KernelJob, path: SeedPath,
                          variable: str = 'x', w: Optional[WaveletFamily] = None) -> bool:
    """
    True iff K(x, y; w) and K(x', y; w) coincide bitwise.

    Requires 2 delta(x', x) <= delta(x, y). With variable='y' the kernel is
    evaluated with the moving point in the second slot, K(y, x) against
    K(y, x').
    """
    w = w or WaveletFamily.haar()
    if w.kind != HAAR:
        raise DomainError("haar_regularity_check needs the Haar family")
    if variable not in ('x', 'y'):
        raise DomainError(f"variable must be 'x' or 'y', got {variable!r}")
    if 2 * dyadic_distance(x_prime, x) > dyadic_distance(x, y):
        raise HypothesisUnmetError("2 delta(x', x) <= delta(x, y) does not hold")

    if variable == 'x':
        first, second = w.terms(x, y, job), w.terms(x_prime, y, job)
    else:
        first, second = w.terms(y, x, job), w.terms(y, x_prime, job)
    if not (np.array_equal(first.j, second.j) and np.array_equal(first.k, second.k)
            and np.array_equal(first.values, second.values)):
        return False
    left = realize(first, model, path.master_seed, [path.replicate])
    right = realize(second, model, path.master_seed, [path.replicate])
    return bool(np.array_equal(left, right))
