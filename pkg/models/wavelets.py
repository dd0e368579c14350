"""
Wavelet families: exact Haar and a tabulated Meyer wavelet.

The Meyer table is synthesised once by inverse FFT of the closed-form
spectrum and stored as an .npz file (see build_meyer_table.py). Evaluation
goes through a piecewise cubic Hermite interpolant of the tabulated psi and
psi'; values beyond the table half-width R are taken as 0 and the neglected
mass is folded into every tail bound through a far-field decay certificate.
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .dyadic import DyadicIndex, as_point, smallest_common
from .errors import (DegeneratePairError, DerivativeUnavailableError, DomainError,
                     TableFormatError)

logger = logging.getLogger(__name__)

TABLE_VERSION = 1
TABLE_KEYS = ('version', 'start', 'step', 'psi', 'dpsi')
DEFAULT_TABLE_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                                  'data', 'meyer_table.npz')

HAAR = 'haar'
MEYER = 'meyer'

# multiplicative slack on sampled suprema and lattice sums
SAMPLING_MARGIN = 1.01
TAIL_MARGIN = 1.05
FINE_SCALE_LIMIT = 200


def meyer_auxiliary(t):
    """Smooth step nu(t) = t^4 (35 - 84t + 70t^2 - 20t^3) on [0, 1]"""
    t = np.clip(t, 0.0, 1.0)
    return t ** 4 * (35.0 - 84.0 * t + 70.0 * t ** 2 - 20.0 * t ** 3)


def meyer_spectrum(xi):
    """Modulus |psi_hat(xi)| of the Meyer wavelet, supported on 2pi/3 <= |xi| <= 8pi/3"""
    a = np.abs(np.asarray(xi, dtype=float))
    out = np.zeros_like(a)
    low = (a >= 2 * np.pi / 3) & (a <= 4 * np.pi / 3)
    high = (a > 4 * np.pi / 3) & (a <= 8 * np.pi / 3)
    out[low] = np.sin(0.5 * np.pi * meyer_auxiliary(3 * a[low] / (2 * np.pi) - 1))
    out[high] = np.cos(0.5 * np.pi * meyer_auxiliary(3 * a[high] / (4 * np.pi) - 1))
    return out


@dataclass(frozen=True)
class MeyerTable:
    """Samples of psi and psi' on start + step * i, symmetric about x = 1/2"""

    start: float
    step: float
    psi: np.ndarray
    dpsi: np.ndarray
    version: int = TABLE_VERSION

    @property
    def radius(self) -> float:
        return -self.start

    @property
    def grid(self) -> np.ndarray:
        return self.start + self.step * np.arange(len(self.psi))

    @classmethod
    def synthesize(cls, radius: int = 128, step: float = 2.0 ** -10, oversample: int = 4) -> 'MeyerTable':
        """Inverse Fourier synthesis of psi and psi' on [-radius, radius]"""
        if radius <= 0 or step <= 0 or oversample < 2:
            raise DomainError("table radius, step and oversample must be positive (oversample >= 2)")
        per_unit = 1.0 / step
        if abs(per_unit - round(per_unit)) > 1e-12:
            raise DomainError(f"table step must divide 1, got {step}")

        period = 2 * radius * oversample
        n = int(round(period / step))
        xi = 2 * np.pi * np.fft.fftfreq(n, d=step)
        x0 = -period / 2
        spectrum = meyer_spectrum(xi) * np.exp(-0.5j * xi) * np.exp(1j * xi * x0)

        psi = np.real(np.fft.ifft(spectrum)) / step
        dpsi = np.real(np.fft.ifft(1j * xi * spectrum)) / step

        first = int(round((-radius - x0) / step))
        last = int(round((radius - x0) / step))
        logger.info(f"Synthesised Meyer table: radius={radius}, step={step}, {last - first + 1} samples")
        return cls(start=-float(radius), step=float(step),
                   psi=psi[first:last + 1].copy(), dpsi=dpsi[first:last + 1].copy())

    def save(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        try:
            np.savez(path, version=np.int64(self.version), start=np.float64(self.start),
                     step=np.float64(self.step), psi=self.psi, dpsi=self.dpsi)
        except OSError as e:
            raise OSError(f"cannot write wavelet table {path}: {e}") from e

    @classmethod
    def load(cls, path: str) -> 'MeyerTable':
        try:
            with np.load(path) as data:
                missing = [key for key in TABLE_KEYS if key not in data.files]
                if missing:
                    raise TableFormatError(f"{path}: missing fields {missing}")
                version = int(data['version'])
                if version != TABLE_VERSION:
                    raise TableFormatError(f"{path}: table version {version}, expected {TABLE_VERSION}")
                psi = np.asarray(data['psi'], dtype=float)
                dpsi = np.asarray(data['dpsi'], dtype=float)
                start, step = float(data['start']), float(data['step'])
        except (ValueError, KeyError) as e:
            if isinstance(e, TableFormatError):
                raise
            raise TableFormatError(f"{path}: unreadable wavelet table ({e})") from e
        if psi.shape != dpsi.shape or psi.ndim != 1 or len(psi) < 4 or step <= 0:
            raise TableFormatError(f"{path}: inconsistent table arrays")
        return cls(start=start, step=step, psi=psi, dpsi=dpsi, version=version)


@dataclass
class TermPlan:
    """
    Kept terms of a truncated kernel series plus certified tails.

    values[i] is the product psi_I(x) psi_I(y) (or its derivative form) for
    I = (j[i], k[i]). abs_tail and square_tail bound the omitted sums of
    |c_I| and c_I^2; when exact_tail is set they are the exact omitted sums.
    """

    j: np.ndarray
    k: np.ndarray
    values: np.ndarray
    abs_tail: float
    square_tail: float
    exact_tail: bool = False
    distance: float = 0.0

    @property
    def size(self) -> int:
        return len(self.values)


class WaveletFamily:
    """Evaluable mother wavelet with decay constants and the rescaling psi_I"""

    def __init__(self, kind: str, table: Optional[MeyerTable] = None, decay_eps: float = 1.0,
                 tail_eps: float = 4.0, ortho_tol: float = 1e-6):
        if kind not in (HAAR, MEYER):
            raise DomainError(f"unknown wavelet kind '{kind}'")
        if kind == MEYER and table is None:
            raise DomainError("a Meyer family needs a table")
        self.kind = kind
        self.table = table
        self.decay_eps = float(decay_eps)
        self.tail_eps = float(tail_eps)
        self.ortho_tol = 0.0 if kind == HAAR else float(ortho_tol)
        self.has_derivative = kind == MEYER

        if kind == HAAR:
            self.support_radius = 1.0
            self.decay_C = 4.0
            self.tail_C = 4.0
            self._tail = {'psi': 4.0}
            self.sup_psi = 1.0
            self.sup_dpsi = 0.0
            self._lattice = {('psi', 1): 1.0, ('psi', 2): 1.0}
        else:
            self._build_interpolants()
            self._fit_constants()
        self.ortho_error = self.check_orthonormality()

    @classmethod
    def haar(cls) -> 'WaveletFamily':
        return cls(HAAR)

    @classmethod
    def meyer(cls, path: Optional[str] = None, radius: int = 128, step: float = 2.0 ** -10,
              tail_eps: float = 4.0, ortho_tol: float = 1e-6) -> 'WaveletFamily':
        """Meyer family from a table file, synthesising the table if the file is absent"""
        path = path or DEFAULT_TABLE_PATH
        table = None
        if os.path.exists(path):
            table = MeyerTable.load(path)
            if table.radius != radius or table.step != step:
                logger.info(f"Table {path} has radius={table.radius}, step={table.step}; "
                            f"rebuilding for radius={radius}, step={step}")
                table = None
        if table is None:
            table = MeyerTable.synthesize(radius=radius, step=step)
        return cls(MEYER, table=table, tail_eps=tail_eps, ortho_tol=ortho_tol)

    # evaluation

    def _build_interpolants(self):
        table = self.table
        self.support_radius = table.radius
        self._spline = CubicHermiteSpline(table.grid, table.psi, table.dpsi, extrapolate=False)
        self._dspline = self._spline.derivative()

    def psi(self, u):
        """Mother wavelet at u (array or scalar)"""
        u = np.asarray(u, dtype=float)
        if self.kind == HAAR:
            return np.where((u >= 0.0) & (u < 0.5), 1.0, np.where((u >= 0.5) & (u < 1.0), -1.0, 0.0))
        inside = np.abs(u) <= self.support_radius
        return np.where(inside, np.nan_to_num(self._spline(np.where(inside, u, 0.0))), 0.0)

    def dpsi(self, u):
        """Derivative of the interpolated mother wavelet"""
        if not self.has_derivative:
            raise DerivativeUnavailableError(self.kind)
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) <= self.support_radius
        return np.where(inside, np.nan_to_num(self._dspline(np.where(inside, u, 0.0))), 0.0)

    def piece_coefficients(self) -> np.ndarray:
        """Local cubics of psi: psi(grid[i] + s) = sum_d A[d, i] s^d for 0 <= s < step"""
        if self.kind == HAAR:
            raise DomainError("the Haar wavelet has no interpolant")
        # PPoly stores the highest power first
        pieces = np.nan_to_num(self._spline.c[::-1]).copy()
        pieces[:, self.table.grid[:-1] >= self.support_radius] = 0.0
        return pieces

    def psi_I(self, I: DyadicIndex, x):
        return math.pow(2.0, I.j / 2) * self.psi(np.ldexp(np.asarray(x, dtype=float), I.j) - I.k)

    def dpsi_I(self, I: DyadicIndex, x):
        return math.pow(2.0, 1.5 * I.j) * self.dpsi(np.ldexp(np.asarray(x, dtype=float), I.j) - I.k)

    # certificates

    def _fit_constants(self):
        table = self.table
        x = np.abs(table.grid)
        envelope = np.maximum(np.abs(table.psi), np.abs(table.dpsi))
        self.decay_C = float(np.max(envelope * (1.0 + x) ** (1.0 + self.decay_eps)))

        far = x >= table.radius / 4
        weight = (1.0 + x[far]) ** (1.0 + self.tail_eps)
        self._tail = {'psi': TAIL_MARGIN * float(np.max(np.abs(table.psi[far]) * weight)),
                      'dpsi': TAIL_MARGIN * float(np.max(np.abs(table.dpsi[far]) * weight))}
        self.tail_C = max(self._tail.values())
        self.sup_psi = SAMPLING_MARGIN * float(np.max(np.abs(table.psi)))
        self.sup_dpsi = SAMPLING_MARGIN * float(np.max(np.abs(table.dpsi)))

        self._lattice = {}
        per_unit = int(round(1.0 / table.step))
        rows = int(round(2 * table.radius))
        for name, samples in (('psi', table.psi), ('dpsi', table.dpsi)):
            folded = np.abs(samples[:rows * per_unit]).reshape(rows, per_unit)
            for p in (1, 2):
                q = p * (1.0 + self.tail_eps)
                beyond = 2.0 * self._tail[name] ** p * table.radius ** (1.0 - q) / (q - 1.0)
                self._lattice[(name, p)] = SAMPLING_MARGIN * float(np.max(np.sum(folded ** p, axis=0))) + beyond
        self.certify()
        logger.info(f"Meyer constants: decay_C={self.decay_C:.4g} (eps={self.decay_eps}), "
                    f"tail_C={self.tail_C:.4g} (eps={self.tail_eps})")

    def certify(self) -> bool:
        """Re-check the decay certificate at every table sample"""
        if self.kind == HAAR:
            return True
        table = self.table
        bound = self.decay_C * (1.0 + np.abs(table.grid)) ** (-1.0 - self.decay_eps)
        tolerance = 1e-12 * self.decay_C
        if np.any(np.abs(table.psi) > bound + tolerance) or np.any(np.abs(table.dpsi) > bound + tolerance):
            raise DomainError("decay certificate violated by the wavelet table")
        return True

    def far_field(self, t: float, name: Optional[str] = None) -> float:
        """Certified bound on |psi| (or |psi'|, or both when name is None) over |u| >= t"""
        if self.kind == HAAR:
            return 1.0 if t < 1.0 else 0.0
        if t >= self.support_radius / 4:
            constant = self._tail[name] if name else self.tail_C
            return constant * (1.0 + t) ** (-1.0 - self.tail_eps)
        sups = {'psi': self.sup_psi, 'dpsi': self.sup_dpsi}
        return sups[name] if name else max(sups.values())

    def lattice_sum(self, name: str, p: int) -> float:
        """Bound on sup_c sum_k |g(c + k)|^p for g = psi or dpsi"""
        return self._lattice[(name, p)]

    def check_orthonormality(self) -> float:
        """Largest deviation of <psi_I, psi_I'> from [I = I'] on a fixed test set"""
        if self.kind == HAAR:
            return 0.0
        table = self.table
        x = table.grid
        base = table.psi
        worst = 0.0
        for j, k in ((0, 0), (0, 1), (0, -1), (1, 0), (1, 1), (1, -1), (-1, 0), (-1, -1), (2, 3)):
            inner = table.step * float(np.dot(base, self.psi_I(DyadicIndex(j, k), x)))
            worst = max(worst, abs(inner - (1.0 if (j, k) == (0, 0) else 0.0)))
        if worst > self.ortho_tol:
            raise DomainError(f"orthonormality check failed: deviation {worst:.3g} > {self.ortho_tol:g}")
        return worst

    # term plans

    def terms(self, x, y, job, derivative: Optional[str] = None) -> TermPlan:
        """Kept terms psi_I(x) psi_I(y) of the truncated series with certified tails"""
        if derivative not in (None, 'x', 'y'):
            raise DomainError(f"derivative must be None, 'x' or 'y', got {derivative!r}")
        if derivative is not None and not self.has_derivative:
            raise DerivativeUnavailableError(self.kind)
        if self.kind == HAAR:
            return self._haar_terms(x, y, job)
        x, y = float(x), float(y)
        if x == y:
            raise DegeneratePairError(x, y)
        return self._smooth_terms(x, y, job, derivative)

    def _haar_terms(self, x, y, job) -> TermPlan:
        """Ancestor chain of I(x, y); every other interval contributes exactly 0"""
        x, y = as_point(x, job.grid_depth), as_point(y, job.grid_depth)
        top = smallest_common(x, y)
        depth = max(x.depth, y.depth)
        a, b = x.at_depth(depth), y.at_depth(depth)

        js, ks, values = [], [], []
        fine_abs = sum(math.ldexp(1.0, j) for j in range(job.scale_max + 1, top.j + 1))
        fine_sq = sum(math.ldexp(1.0, 2 * j) for j in range(job.scale_max + 1, top.j + 1))
        for j in range(min(top.j, job.scale_max), job.scale_min - 1, -1):
            shift = depth - j - 1
            sign_x = 1 if (a >> shift) & 1 == 0 else -1
            sign_y = 1 if (b >> shift) & 1 == 0 else -1
            js.append(j)
            ks.append(a >> (depth - j))
            values.append(sign_x * sign_y * math.ldexp(1.0, j))

        coarse_top = min(top.j, job.scale_min - 1)
        abs_tail = fine_abs + math.ldexp(1.0, coarse_top + 1)
        square_tail = fine_sq + math.ldexp(1.0, 2 * coarse_top) * 4.0 / 3.0
        return TermPlan(j=np.asarray(js, dtype=np.int64), k=np.asarray(ks, dtype=np.int64),
                        values=np.asarray(values, dtype=float), abs_tail=abs_tail,
                        square_tail=square_tail, exact_tail=True, distance=top.length)

    def _factors(self, derivative):
        f = self.dpsi if derivative == 'x' else self.psi
        h = self.dpsi if derivative == 'y' else self.psi
        weight = 2 if derivative else 1
        return f, h, weight

    def evaluate_terms(self, j, k, x: float, y: float, derivative: Optional[str] = None) -> np.ndarray:
        """Term values at fixed indices (j, k), for comparisons at moved points"""
        f, h, weight = self._factors(derivative)
        j = np.asarray(j, dtype=np.int64)
        scale = np.ldexp(1.0, j)
        return scale ** weight * f(scale * x - k) * h(scale * y - k)

    def _smooth_terms(self, x: float, y: float, job, derivative) -> TermPlan:
        f, h, weight = self._factors(derivative)
        R = self.support_radius
        js, ks, vals = [], [], []
        pruned_abs = pruned_sq = 0.0
        for j in range(job.scale_min, job.scale_max + 1):
            scale = math.ldexp(1.0, j)
            ux, uy = scale * x, scale * y
            k_lo, k_hi = job.window(j, x, y, R)
            if k_lo > k_hi:
                continue
            k = np.arange(k_lo, k_hi + 1, dtype=np.int64)
            c = scale ** weight * f(ux - k) * h(uy - k)
            keep = np.abs(c) >= job.tail_tol
            dropped = c[~keep]
            pruned_abs += float(np.sum(np.abs(dropped)))
            pruned_sq += float(np.sum(dropped ** 2))
            js.append(np.full(int(keep.sum()), j, dtype=np.int64))
            ks.append(k[keep])
            vals.append(c[keep])

        names = ('dpsi' if derivative == 'x' else 'psi', 'dpsi' if derivative == 'y' else 'psi')
        abs_tail = pruned_abs + self._omitted_bound(x, y, job, names, weight, 1)
        square_tail = pruned_sq + self._omitted_bound(x, y, job, names, weight, 2)
        concat = lambda parts, dtype: np.concatenate(parts) if parts else np.zeros(0, dtype=dtype)
        return TermPlan(j=concat(js, np.int64), k=concat(ks, np.int64), values=concat(vals, float),
                        abs_tail=abs_tail, square_tail=square_tail, exact_tail=False,
                        distance=abs(x - y))

    def _omitted_bound(self, x: float, y: float, job, names: Tuple[str, str], weight: int, p: int) -> float:
        """
        Certified bound on sum |c_I|^p over all I outside the kept windows.

        A term at scale j is 2^(j s) |f(u)|^p |h(v)|^p with s = p * weight
        and |u - v| = 2^j |x - y|. Omitted terms have max(|u|, |v|) at least
        max(R, 2^j |x - y| / 2), where the far-field certificate applies;
        the other factor is summed over k with the lattice bound.
        """
        s = p * weight
        R = self.support_radius
        dist = abs(x - y)
        sups = {'psi': self.sup_psi, 'dpsi': self.sup_dpsi}
        lam_f, lam_h = self.lattice_sum(names[0], p), self.lattice_sum(names[1], p)
        whole_scale = min(sups[names[0]] ** p * lam_h, sups[names[1]] ** p * lam_f)

        def edge(reach):
            return self.far_field(reach, names[0]) ** p * lam_h + self.far_field(reach, names[1]) ** p * lam_f

        # scales coarser than scale_min
        total = whole_scale * math.ldexp(1.0, s * job.scale_min) / (2.0 ** s - 1.0)

        # window edges inside the scale range
        for j in range(job.scale_min, job.scale_max + 1):
            total += math.ldexp(1.0, s * j) * edge(max(R, math.ldexp(dist, j) / 2))

        # scales finer than scale_max, explicit until the far field takes over
        j = job.scale_max + 1
        while math.ldexp(dist, j) / 2 < R / 4 and j <= job.scale_max + FINE_SCALE_LIMIT:
            total += math.ldexp(1.0, s * j) * min(whole_scale, edge(math.ldexp(dist, j) / 2))
            j += 1
        q = p * (1.0 + self.tail_eps)
        ratio = 2.0 ** (s - q)
        lead = (self._tail[names[0]] ** p * lam_h + self._tail[names[1]] ** p * lam_f) * (dist / 2) ** (-q)
        total += lead * ratio ** j / (1.0 - ratio)
        return total

    def describe(self) -> Dict[str, float]:
        info = {'kind': self.kind, 'decay_C': self.decay_C, 'decay_eps': self.decay_eps,
                'has_derivative': self.has_derivative, 'ortho_error': self.ortho_error}
        if self.kind == MEYER:
            info.update({'tail_C': self.tail_C, 'tail_eps': self.tail_eps,
                         'support_radius': self.support_radius, 'table_step': self.table.step})
        return info


def eval_psi(w: WaveletFamily, x):
    return w.psi(x)


def eval_psi_I(w: WaveletFamily, I: DyadicIndex, x):
    return w.psi_I(I, x)


def eval_dpsi_I(w: WaveletFamily, I: DyadicIndex, x):
    """d/dx psi_I(x) = 2^(3j/2) psi'(2^j x - k)"""
    return w.dpsi_I(I, x)


def summability_size(w: WaveletFamily, x, y, job) -> Tuple[float, float]:
    """Truncated sum of |psi_I(x)||psi_I(y)| and a certified bound on the omitted part"""
    plan = w.terms(x, y, job)
    total = float(np.sum(np.abs(plan.values)))
    if plan.exact_tail:
        return total + plan.abs_tail, 0.0
    return total, plan.abs_tail


def summability_grad(w: WaveletFamily, x, y, job) -> Tuple[float, float]:
    """Truncated sum of |d/dx psi_I(x)||psi_I(y)| with certified tail"""
    plan = w.terms(x, y, job, derivative='x')
    return float(np.sum(np.abs(plan.values))), plan.abs_tail
