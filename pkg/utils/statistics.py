import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats
from sklearn.linear_model import LinearRegression

DEFAULT_CONFIDENCE = 0.99


def normal_quantile(confidence: float) -> float:
    """Two-sided critical value z with P{|Z| <= z} = confidence"""
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    return float(stats.norm.ppf(1.0 - (1.0 - confidence) / 2.0))


def wilson_interval(successes: int, total: int, confidence: float = DEFAULT_CONFIDENCE) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion, clamped to [0, 1]"""
    if total <= 0:
        return (0.0, 1.0)
    z = normal_quantile(confidence)
    p_hat = successes / total
    denominator = 1.0 + z ** 2 / total
    center = (p_hat + z ** 2 / (2 * total)) / denominator
    spread = z * math.sqrt(p_hat * (1.0 - p_hat) / total + z ** 2 / (4 * total ** 2)) / denominator
    return max(0.0, center - spread), min(1.0, center + spread)


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo estimate with a two-sided confidence interval"""

    mean: float
    std_error: float
    n: int
    ci_low: float
    ci_high: float
    confidence: float = DEFAULT_CONFIDENCE

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    @property
    def relative_std_error(self) -> float:
        return self.std_error / abs(self.mean) if self.mean else math.inf

    @classmethod
    def from_moments(cls, total: float, total_sq: float, n: int,
                     confidence: float = DEFAULT_CONFIDENCE) -> 'McEstimate':
        """Normal-approximation interval from running sums of x and x^2"""
        if n <= 0:
            raise ValueError("McEstimate needs at least one replicate")
        mean = total / n
        variance = max(total_sq / n - mean ** 2, 0.0) * n / max(n - 1, 1)
        std_error = math.sqrt(variance / n)
        z = normal_quantile(confidence)
        return cls(mean=mean, std_error=std_error, n=n, ci_low=mean - z * std_error,
                   ci_high=mean + z * std_error, confidence=confidence)

    @classmethod
    def from_samples(cls, values, confidence: float = DEFAULT_CONFIDENCE) -> 'McEstimate':
        values = np.asarray(values, dtype=float)
        return cls.from_moments(float(values.sum()), float(np.square(values).sum()), len(values), confidence)

    @classmethod
    def proportion(cls, successes: int, n: int, confidence: float = DEFAULT_CONFIDENCE) -> 'McEstimate':
        """Proportion with a Wilson interval"""
        p_hat = successes / n if n else 0.0
        low, high = wilson_interval(successes, n, confidence)
        return cls(mean=p_hat, std_error=math.sqrt(p_hat * (1 - p_hat) / n) if n else 0.0,
                   n=n, ci_low=low, ci_high=high, confidence=confidence)

    def widened(self, comparisons: int) -> 'McEstimate':
        """Normal interval at the Bonferroni level for this many simultaneous comparisons"""
        confidence = 1.0 - (1.0 - self.confidence) / max(int(comparisons), 1)
        z = normal_quantile(confidence)
        return McEstimate(mean=self.mean, std_error=self.std_error, n=self.n, ci_low=self.mean - z * self.std_error,
                          ci_high=self.mean + z * self.std_error, confidence=confidence)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def replicate_chunks(n: int, chunk_size: int) -> List[Tuple[int, int]]:
    """Fixed [start, stop) replicate ranges; independent of the thread count"""
    chunk_size = max(1, int(chunk_size))
    return [(start, min(start + chunk_size, n)) for start in range(0, n, chunk_size)]


def chunked_map(func: Callable[[int, int], Any], n: int, chunk_size: int, threads: int = 1) -> List[Any]:
    """Apply func(start, stop) to every replicate chunk; results come back in chunk order"""
    chunks = replicate_chunks(n, chunk_size)
    if threads <= 1 or len(chunks) <= 1:
        return [func(start, stop) for start, stop in chunks]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(lambda bounds: func(*bounds), chunks))


def ordered_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Sum partial results left to right so the reduction order never varies"""
    total = np.array(parts[0], dtype=float, copy=True)
    for part in parts[1:]:
        total = total + part
    return total


def fit_loglog_slope(distances, values) -> Dict[str, float]:
    """Least-squares slope of log(values) against log(distances)"""
    distances = np.asarray(distances, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = (distances > 0) & (values > 0)
    if mask.sum() < 2:
        raise ValueError("a log-log fit needs at least two positive points")
    X = np.log(distances[mask]).reshape(-1, 1)
    y = np.log(values[mask])
    model = LinearRegression().fit(X, y)
    return {'slope': float(model.coef_[0]), 'intercept': float(model.intercept_),
            'r2': float(model.score(X, y)), 'points': int(mask.sum())}


def fitted_constant(distances, values, order: float) -> float:
    """Smallest B with values <= B / distance^order at every point"""
    distances = np.asarray(distances, dtype=float)
    values = np.asarray(values, dtype=float)
    return float(np.max(values * distances ** order))
