"""
The random operator T f = sum_I a_I <f, psi_I> psi_I on grid functions.

Functions are sampled at the midpoints of a uniform grid on [0, 2^m) with
2^(m+J) cells. Haar coefficients come from the exact pyramid; smooth
coefficients from midpoint quadrature against the tabulated wavelet.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

from utils.statistics import DEFAULT_CONFIDENCE, McEstimate, chunked_map, ordered_sum

from . import streams
from .dyadic import DyadicIndex
from .errors import DomainError, TableFormatError
from .subgauss import CoefficientModel, SeedPath, sample_coefficients
from .wavelets import HAAR, TermPlan, WaveletFamily

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
GRID_FORMAT_VERSION = 1
MIN_NORM_REPLICATES = 1000
# transient gathers are cut into blocks of at most this many floats
BLOCK_CELLS = 1 << 22


@dataclass
class GridFunction:
    """Samples of f at the midpoints of 2^(m+J) equal cells of [0, 2^m)"""

    samples: np.ndarray
    m: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        n = len(self.samples)
        if self.samples.ndim != 1 or n < 1 or n & (n - 1):
            raise DomainError(f"grid functions need a power-of-two number of samples, got {n}")
        if self.depth < 0:
            raise DomainError(f"{n} samples cannot cover [0, 2^{self.m})")

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def depth(self) -> int:
        return self.n.bit_length() - 1 - self.m

    @property
    def origin(self) -> float:
        return 0.0

    @property
    def step(self) -> float:
        return math.ldexp(1.0, -self.depth)

    @property
    def points(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.step

    @property
    def l2_norm(self) -> float:
        return math.sqrt(self.step * float(np.sum(np.square(self.samples))))

    @property
    def l1_norm(self) -> float:
        return self.step * float(np.sum(np.abs(self.samples)))

    def scaled(self, factor: float) -> 'GridFunction':
        return GridFunction(factor * self.samples, self.m)

    @classmethod
    def zeros(cls, m: int = 0, depth: int = 14) -> 'GridFunction':
        return cls(np.zeros(1 << (m + depth)), m)

    @classmethod
    def from_callable(cls, func, m: int = 0, depth: int = 14) -> 'GridFunction':
        points = (np.arange(1 << (m + depth)) + 0.5) * math.ldexp(1.0, -depth)
        return cls(np.asarray(func(points), dtype=float), m)

    @classmethod
    def haar_atom(cls, I: DyadicIndex, m: int = 0, depth: int = 14) -> 'GridFunction':
        """psi_I sampled on the grid; exact when I is coarser than the cells"""
        haar = WaveletFamily.haar()
        return cls.from_callable(lambda x: haar.psi_I(I, x), m, depth)

    @classmethod
    def spike(cls, center: float, width: float, mass: float = 1.0, m: int = 0, depth: int = 14) -> 'GridFunction':
        """Box of the given L1 mass on [center - width/2, center + width/2)"""
        if width <= 0:
            raise DomainError("spike width must be positive")
        return cls.from_callable(
            lambda x: np.where(np.abs(x - center) < width / 2, mass / width, 0.0), m, depth)

    @classmethod
    def random(cls, master_seed: int, replicate: int = 0, m: int = 0, depth: int = 14) -> 'GridFunction':
        """Standard Gaussian samples drawn from the counter-based streams"""
        from scipy.special import ndtri
        n = 1 << (m + depth)
        u = streams.uniforms(master_seed, np.uint64(replicate), -1, np.arange(n, dtype=np.int64))
        return cls(ndtri(u), m)

    # serialisation

    def save_text(self, path: str) -> None:
        """Columns x,value after a '# gridfunction version=1 m=<m>' header line"""
        frame = pd.DataFrame({'x': self.points, 'value': self.samples})
        try:
            with open(path, 'w') as handle:
                handle.write(f"# gridfunction version={GRID_FORMAT_VERSION} m={self.m}\n")
                frame.to_csv(handle, index=False, float_format='%.17g')
        except OSError as e:
            raise OSError(f"cannot write grid function {path}: {e}") from e

    @classmethod
    def load_text(cls, path: str) -> 'GridFunction':
        with open(path) as handle:
            header = handle.readline().split()
        meta = dict(item.split('=', 1) for item in header[2:] if '=' in item)
        if header[:2] != ['#', 'gridfunction'] or int(meta.get('version', -1)) != GRID_FORMAT_VERSION:
            raise TableFormatError(f"{path}: not a version {GRID_FORMAT_VERSION} grid function file")
        frame = pd.read_csv(path, comment='#')
        if list(frame.columns) != ['x', 'value']:
            raise TableFormatError(f"{path}: expected columns x,value")
        return cls(frame['value'].to_numpy(dtype=float), int(meta['m']))

    def save_binary(self, path: str) -> None:
        np.savez(path, version=np.int64(GRID_FORMAT_VERSION), m=np.int64(self.m), samples=self.samples)

    @classmethod
    def load_binary(cls, path: str) -> 'GridFunction':
        with np.load(path) as data:
            if 'version' not in data.files or int(data['version']) != GRID_FORMAT_VERSION:
                raise TableFormatError(f"{path}: not a version {GRID_FORMAT_VERSION} grid function file")
            return cls(np.asarray(data['samples'], dtype=float), int(data['m']))


@dataclass
class WaveletCoefficients:
    """
    <f, psi_I> for the kept scales; scales[j][i] belongs to k = offsets[j] + i.

    coarse_energy and fine_energy hold the energy of f outside the kept
    scales, so energy() + coarse_energy + fine_energy = |f|^2 for Haar.
    """

    kind: str
    m: int
    depth: int
    scales: Dict[int, np.ndarray]
    offsets: Dict[int, int]
    coarse_energy: float = 0.0
    fine_energy: float = 0.0

    def indices(self, j: int) -> np.ndarray:
        return self.offsets[j] + np.arange(len(self.scales[j]), dtype=np.int64)

    def get(self, I: DyadicIndex) -> float:
        values = self.scales.get(I.j)
        if values is None:
            return 0.0
        i = I.k - self.offsets[I.j]
        return float(values[i]) if 0 <= i < len(values) else 0.0

    def as_map(self) -> Dict[DyadicIndex, float]:
        return {DyadicIndex(j, int(k)): float(v)
                for j in sorted(self.scales) for k, v in zip(self.indices(j), self.scales[j])}

    def energy(self) -> float:
        return float(sum(np.sum(np.square(v)) for v in self.scales.values()))

    def to_frame(self) -> pd.DataFrame:
        parts = [pd.DataFrame({'j': j, 'k': self.indices(j), 'value': self.scales[j]}) for j in sorted(self.scales)]
        return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=['j', 'k', 'value'])


def _window_rows(row: np.ndarray, starts: np.ndarray, width: int):
    """Yield (slice, rows) with rows[i] = row[starts[i]:starts[i] + width], a block at a time"""
    windows = sliding_window_view(row, width)
    block = max(1, BLOCK_CELLS // width)
    for lo in range(0, len(starts), block):
        sl = slice(lo, lo + block)
        yield sl, windows[starts[sl]]


class _Pieces:
    """Local polynomials of psi and psi^2 per table interval, zero-padded on both sides"""

    def __init__(self, w: WaveletFamily, pad: int, length: int):
        step = w.table.step
        per_unit = int(round(1.0 / step))
        if per_unit < 1 or math.ldexp(1.0, -int(round(math.log2(per_unit)))) != step:
            raise DomainError(f"smooth quadrature needs a dyadic table step, got {step}")
        self.step = step
        self.per_unit = per_unit
        self.bits = int(round(math.log2(per_unit)))
        self.pad = pad
        cubic = w.piece_coefficients()
        kept = min(cubic.shape[1], length - pad)
        base = np.zeros((cubic.shape[0], length))
        base[:, pad:pad + kept] = cubic[:, :kept]
        square = np.zeros((2 * base.shape[0] - 1, length))
        for a in range(base.shape[0]):
            for b in range(base.shape[0]):
                square[a + b] += base[a] * base[b]
        self._powers = {1: base, 2: square}

    def coefficients(self, power: int) -> np.ndarray:
        if power not in self._powers:
            raise DomainError(f"no piecewise form for psi^{power}")
        return self._powers[power]

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in self._powers.values())


class _SmoothScale:
    """
    Quadrature of one scale of a tabulated wavelet against the grid.

    Scales whose table intervals span whole grid cells evaluate the local
    cubics through per-interval moments of the samples. Finer
    scales correlate the samples with the wavelet sampled at grid offsets.
    """

    def __init__(self, w: WaveletFamily, j: int, m: int, depth: int, pieces: Optional[_Pieces] = None):
        self.j = j
        self.n = 1 << (m + depth)
        self.h = math.ldexp(1.0, -depth)
        R = int(math.ceil(w.support_radius))
        self.R = R
        self.k_lo = -R
        self.k_hi = int(math.floor(math.ldexp(1.0, j + m))) + R
        self.amplitude = math.pow(2.0, j / 2)
        self.pieces = pieces if pieces is not None and j + pieces.bits <= depth else None
        if self.pieces is not None:
            self.count = 1 << max(j + m + self.pieces.bits, 0)
            self.cells = self.n // self.count
            x = (np.arange(self.n) + 0.5) * self.h
            self.local = np.ldexp(x, j) - (np.arange(self.n) // self.cells) * self.pieces.step
            self.starts = self.pieces.pad + (R - self.k) * self.pieces.per_unit
        else:
            self.stride = 1 << (depth - j)
            taps = np.arange(2 * R * self.stride)
            self.taps = self.amplitude * w.psi((taps - R * self.stride + 0.5) / self.stride)

    @property
    def k(self) -> np.ndarray:
        return np.arange(self.k_lo, self.k_hi + 1, dtype=np.int64)

    @property
    def nbytes(self) -> int:
        if self.pieces is not None:
            return self.local.nbytes + self.starts.nbytes
        return self.taps.nbytes

    def analyze(self, samples: np.ndarray) -> np.ndarray:
        if self.pieces is not None:
            return self._piecewise_analyze(samples)
        span = 2 * self.R * self.stride
        padded = np.concatenate([np.zeros(span), samples, np.zeros(span)])
        correlation = fftconvolve(padded, self.taps[::-1], mode='valid')
        return self.h * correlation[(self.k - self.k_lo) * self.stride]

    def _piecewise_analyze(self, samples: np.ndarray) -> np.ndarray:
        cubic = self.pieces.coefficients(1)
        out = np.zeros(len(self.starts))
        local = np.ones(self.n)
        for d in range(cubic.shape[0]):
            moments = self.h * (samples * local).reshape(self.count, self.cells).sum(axis=1)
            for sl, rows in _window_rows(cubic[d], self.starts, self.count):
                out[sl] += rows @ moments
            local = local * self.local
        return self.amplitude * out

    def synthesize(self, weights: np.ndarray, power: int = 1) -> np.ndarray:
        """sum_k weights_k psi_I(x)^power on the grid; weights may carry a leading batch axis"""
        if self.pieces is not None:
            return self._piecewise_synthesize(weights, power)
        span = 2 * self.R * self.stride
        taps = self.taps ** power
        batch = weights.shape[:-1]
        flat = weights.reshape(-1, weights.shape[-1])
        out = np.empty((flat.shape[0], self.n))
        block = max(1, BLOCK_CELLS // (flat.shape[1] * self.stride))
        for lo in range(0, flat.shape[0], block):
            part = flat[lo:lo + block]
            upsampled = np.zeros((part.shape[0], part.shape[1] * self.stride))
            upsampled[:, ::self.stride] = part
            full = fftconvolve(upsampled, taps[None, :], axes=-1)
            out[lo:lo + block] = full[:, span:span + self.n]
        return out.reshape(batch + (self.n,))

    def _piecewise_synthesize(self, weights: np.ndarray, power: int) -> np.ndarray:
        poly = self.pieces.coefficients(power)
        out = np.zeros(weights.shape[:-1] + (self.n,))
        local = np.ones(self.n)
        for e in range(poly.shape[0]):
            gathered = np.zeros(weights.shape[:-1] + (self.count,))
            for sl, rows in _window_rows(poly[e], self.starts, self.count):
                gathered += weights[..., sl] @ rows
            out += np.repeat(gathered, self.cells, axis=-1) * local
            local = local * self.local
        return self.amplitude ** power * out


class RandomOperator:
    """Analysis, synthesis and random diagonal multiplication for one wavelet and job"""

    def __init__(self, w: WaveletFamily, job, m: int = 0, depth: int = 14):
        self.w = w
        self.job = job
        self.m = m
        self.depth = depth
        self.scale_max = min(job.scale_max, depth - 1)
        if job.scale_min > self.scale_max:
            raise DomainError(f"no kept scale between {job.scale_min} and {self.scale_max}")
        self._smooth = {}
        self._pieces = None
        if w.kind != HAAR:
            logger.debug(f"Preparing smooth quadrature for scales {job.scale_min}..{self.scale_max}")
            bits = int(round(-math.log2(w.table.step)))
            top = min(self.scale_max, depth - bits)
            if job.scale_min <= top:
                pad = int(math.floor(math.ldexp(1.0, top + m))) * (1 << bits)
                count = 1 << max(top + m + bits, 0)
                R = int(math.ceil(w.support_radius))
                self._pieces = _Pieces(w, pad, pad + 2 * R * (1 << bits) + count)
            self._smooth = {j: _SmoothScale(w, j, m, depth, self._pieces)
                            for j in range(job.scale_min, self.scale_max + 1)}
            logger.debug(f"Smooth quadrature holds {self.nbytes / 2 ** 20:.1f} MiB")

    @property
    def nbytes(self) -> int:
        """Bytes held by the precomputed quadrature"""
        pieces = self._pieces.nbytes if self._pieces is not None else 0
        return pieces + sum(s.nbytes for s in self._smooth.values())

    def _check(self, f: GridFunction):
        if f.m != self.m or f.depth != self.depth:
            raise DomainError(f"grid function on [0, 2^{f.m}) at depth {f.depth} does not match "
                              f"operator grid [0, 2^{self.m}) at depth {self.depth}")

    def analyze(self, f: GridFunction) -> WaveletCoefficients:
        self._check(f)
        if self.w.kind == HAAR:
            return self._haar_analyze(f)
        scales = {j: s.analyze(f.samples) for j, s in self._smooth.items()}
        offsets = {j: s.k_lo for j, s in self._smooth.items()}
        coeffs = WaveletCoefficients(self.w.kind, self.m, self.depth, scales, offsets)
        coeffs.coarse_energy = max(f.l2_norm ** 2 - coeffs.energy(), 0.0)
        return coeffs

    def _haar_analyze(self, f: GridFunction) -> WaveletCoefficients:
        J, m = self.depth, self.m
        c = f.samples * math.pow(2.0, -J / 2)
        details, scaling = {}, {J: c}
        for j in range(J - 1, -m - 1, -1):
            even, odd = c[0::2], c[1::2]
            details[j] = (even - odd) / SQRT2
            c = (even + odd) / SQRT2
            scaling[j] = c
        top = float(c[0])

        lo, hi = self.job.scale_min, self.scale_max
        scales = {j: details[j] for j in range(max(lo, -m), hi + 1)}
        for j in range(lo, -m):
            scales[j] = np.array([math.pow(2.0, (j + m) / 2) * top])
        fine = float(sum(np.sum(np.square(details[j])) for j in range(hi + 1, J)))
        if lo <= -m:
            coarse = top ** 2 * math.ldexp(1.0, lo + m)
        else:
            coarse = float(np.sum(np.square(scaling[lo])))
        offsets = {j: 0 for j in scales}
        return WaveletCoefficients(HAAR, m, J, scales, offsets, coarse_energy=coarse, fine_energy=fine)

    def synthesize(self, coeffs: WaveletCoefficients, multipliers: Optional[Dict[int, np.ndarray]] = None):
        """
        sum_I mult_I <f, psi_I> psi_I on the grid.

        multipliers[j] matches coeffs.scales[j], optionally with a leading
        batch axis; the result has the same batch axis.
        """
        weights = {j: (v if multipliers is None else multipliers[j] * v) for j, v in coeffs.scales.items()}
        if self.w.kind == HAAR:
            samples = self._haar_synthesize(weights)
        else:
            samples = None
            for j, scale in self._smooth.items():
                part = scale.synthesize(weights[j])
                samples = part if samples is None else samples + part
        return samples

    def _haar_synthesize(self, weights: Dict[int, np.ndarray], power: int = 1) -> np.ndarray:
        J, m = self.depth, self.m
        batch = next(iter(weights.values())).shape[:-1]
        if power == 2:
            out = np.zeros(batch + (1 << (m + J),))
            for j, v in weights.items():
                if j >= -m:
                    out += np.repeat(v * math.ldexp(1.0, j), 1 << (J - j), axis=-1)
                else:
                    out += v[..., :1] * math.ldexp(1.0, j)
            return out
        c = np.zeros(batch + (1,))
        for j, v in weights.items():
            if j < -m:
                c = c + v[..., :1] * math.pow(2.0, (j + m) / 2)
        for j in range(-m, J):
            d = weights.get(j)
            nxt = np.empty(batch + (2 * c.shape[-1],))
            if d is None:
                nxt[..., 0::2] = c / SQRT2
                nxt[..., 1::2] = c / SQRT2
            else:
                nxt[..., 0::2] = (c + d) / SQRT2
                nxt[..., 1::2] = (c - d) / SQRT2
            c = nxt
        return c * math.pow(2.0, J / 2)

    def square_map(self, weights: Dict[int, np.ndarray]) -> np.ndarray:
        """sum_I weights_I psi_I(x)^2 on the grid"""
        if self.w.kind == HAAR:
            return self._haar_synthesize(weights, power=2)
        total = np.zeros(1 << (self.m + self.depth))
        for j, scale in self._smooth.items():
            total += scale.synthesize(weights[j], power=2)
        return total

    def multipliers(self, coeffs: WaveletCoefficients, model: CoefficientModel, master_seed: int,
                    replicates, centered: bool = False) -> Dict[int, np.ndarray]:
        """a_I for every kept index, shape (replicates, K_j) per scale"""
        replicates = np.atleast_1d(np.asarray(replicates, dtype=np.uint64))
        out = {}
        for j in coeffs.scales:
            k = coeffs.indices(j)
            out[j] = sample_coefficients(model, master_seed, replicates, np.full(len(k), j), k, centered)
        return out

    def apply_batch(self, coeffs: WaveletCoefficients, model: CoefficientModel, master_seed: int,
                    replicates) -> np.ndarray:
        return self.synthesize(coeffs, self.multipliers(coeffs, model, master_seed, replicates))

    def point_terms(self, coeffs: WaveletCoefficients, x: float) -> TermPlan:
        """Terms <f, psi_I> psi_I(x) of T f(x) at a sample point"""
        js, ks, vals = [], [], []
        for j in sorted(coeffs.scales):
            k = coeffs.indices(j)
            c = coeffs.scales[j] * self.w.psi_I(DyadicIndex(j, 0), x - np.ldexp(k.astype(float), -j))
            keep = c != 0.0
            js.append(np.full(int(keep.sum()), j, dtype=np.int64))
            ks.append(k[keep])
            vals.append(c[keep])
        return TermPlan(j=np.concatenate(js), k=np.concatenate(ks), values=np.concatenate(vals),
                        abs_tail=0.0, square_tail=0.0, exact_tail=True)


def analyze(w: WaveletFamily, f: GridFunction, job) -> WaveletCoefficients:
    return RandomOperator(w, job, f.m, f.depth).analyze(f)


def synthesize(w: WaveletFamily, coeffs: WaveletCoefficients, job) -> GridFunction:
    operator = RandomOperator(w, job, coeffs.m, coeffs.depth)
    return GridFunction(operator.synthesize(coeffs), coeffs.m)


def apply_T(w: WaveletFamily, model: CoefficientModel, f: GridFunction, job, path: SeedPath) -> GridFunction:
    """One realisation of T f, addressed by (path.master_seed, path.replicate)"""
    operator = RandomOperator(w, job, f.m, f.depth)
    coeffs = operator.analyze(f)
    samples = operator.apply_batch(coeffs, model, path.master_seed, [path.replicate])
    return GridFunction(samples[0], f.m)


def pointwise_second_moment(w: WaveletFamily, model: CoefficientModel, f: GridFunction, job,
                            centered: bool = True) -> np.ndarray:
    """Exact E|T f(x) - E T f(x)|^2 on the grid (plus (E T f)^2 when centered is False)"""
    operator = RandomOperator(w, job, f.m, f.depth)
    coeffs = operator.analyze(f)
    weights = {j: model.variance * np.square(v) for j, v in coeffs.scales.items()}
    moment = operator.square_map(weights)
    if not centered and model.mu0 != 0.0:
        means = {j: model.mean_at(j, coeffs.indices(j)) for j in coeffs.scales}
        moment = moment + np.square(operator.synthesize(coeffs, means))
    return moment


@dataclass
class OperatorNormReport:
    estimate: McEstimate
    squared: McEstimate
    exact: float
    bound: float
    l2_norm: float

    def to_dict(self) -> Dict:
        return {'estimate': self.estimate.mean, 'ci_low': self.estimate.ci_low,
                'ci_high': self.estimate.ci_high, 'std_error': self.estimate.std_error,
                'replicates': self.estimate.n, 'exact': self.exact, 'bound': self.bound,
                'l2_norm': self.l2_norm}


def l2_bound_factor(model: CoefficientModel) -> float:
    """Certified constant C with (int E|T f|^2)^(1/2) <= C |f|_2"""
    return math.sqrt(8.0 * model.nu) + model.mean_profile_l1


def vector_norm_T(w: WaveletFamily, model: CoefficientModel, f: GridFunction, job, n: int,
                  master_seed: int = 0, chunk_size: int = 64, threads: int = 1,
                  confidence: float = DEFAULT_CONFIDENCE) -> OperatorNormReport:
    """
    Monte Carlo estimate of (int E|T f(x)|^2 dx)^(1/2).

    Also reports the exact value sum (Var a_I + (E a_I)^2) <f, psi_I>^2 and
    the certified bound (sqrt(8 nu) + sum |E a_I|) |f|_2.
    """
    if n < MIN_NORM_REPLICATES:
        raise DomainError(f"vector_norm_T needs n >= {MIN_NORM_REPLICATES}, got {n}")
    operator = RandomOperator(w, job, f.m, f.depth)
    coeffs = operator.analyze(f)
    bound = l2_bound_factor(model) * f.l2_norm
    exact = float(sum(np.sum((model.variance + np.square(model.mean_at(j, coeffs.indices(j)))) * np.square(v))
                      for j, v in coeffs.scales.items()))

    def chunk(start, stop):
        images = operator.apply_batch(coeffs, model, master_seed, np.arange(start, stop, dtype=np.uint64))
        energies = f.step * np.sum(np.square(images), axis=-1)
        return np.array([energies.sum(), np.square(energies).sum()])

    totals = ordered_sum(chunked_map(chunk, n, chunk_size, threads))
    squared = McEstimate.from_moments(totals[0], totals[1], n, confidence)
    root = math.sqrt(max(squared.mean, 0.0))
    estimate = McEstimate(mean=root,
                          std_error=squared.std_error / (2 * root) if root > 0 else 0.0,
                          n=n, ci_low=math.sqrt(max(squared.ci_low, 0.0)),
                          ci_high=math.sqrt(max(squared.ci_high, 0.0)), confidence=confidence)
    return OperatorNormReport(estimate=estimate, squared=squared, exact=exact, bound=bound, l2_norm=f.l2_norm)


def pointwise_norms(w: WaveletFamily, model: CoefficientModel, f: GridFunction, job, n: int,
                    master_seed: int = 0, chunk_size: int = 64, threads: int = 1) -> np.ndarray:
    """Monte Carlo |T f(x)|_{L2(Omega)} at every grid point"""
    operator = RandomOperator(w, job, f.m, f.depth)
    coeffs = operator.analyze(f)

    def chunk(start, stop):
        images = operator.apply_batch(coeffs, model, master_seed, np.arange(start, stop, dtype=np.uint64))
        return np.sum(np.square(images), axis=0)

    return np.sqrt(ordered_sum(chunked_map(chunk, n, chunk_size, threads)) / n)


def weak11_constant(norms: np.ndarray, step: float, l1_norm: float) -> float:
    """sup over lambda of lambda |{norm >= lambda}| / |f|_1, read off the sorted norms"""
    if l1_norm <= 0:
        return 0.0
    ordered = np.sort(norms)[::-1]
    measures = step * np.arange(1, len(ordered) + 1)
    return float(np.max(ordered * measures)) / l1_norm


def weak11_profile(w: WaveletFamily, model: CoefficientModel, f: GridFunction, job, n: int,
                   thresholds: Sequence[float], master_seed: int = 0, chunk_size: int = 64,
                   threads: int = 1) -> pd.DataFrame:
    """Table of (lambda, |{x : |T f(x)| > lambda}|, lambda * measure / |f|_1) with the fitted constant"""
    norms = pointwise_norms(w, model, f, job, n, master_seed, chunk_size, threads)
    l1 = f.l1_norm
    rows = []
    for lam in thresholds:
        measure = f.step * int(np.count_nonzero(norms > lam))
        rows.append({'lambda': float(lam), 'measure': measure,
                     'product': float(lam) * measure / l1 if l1 > 0 else 0.0})
    profile = pd.DataFrame(rows, columns=['lambda', 'measure', 'product'])
    profile.attrs['fitted_C'] = weak11_constant(norms, f.step, l1)
    profile.attrs['l1_norm'] = l1
    return profile
