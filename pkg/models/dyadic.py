"""
Exact dyadic interval arithmetic on the half line and on the whole line.

Intervals are integer pairs (j, k) standing for [k 2^-j, (k+1) 2^-j).
Points are dyadic rationals numerator * 2^-depth kept in lowest terms, so
every comparison below is decided in integer arithmetic.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Union

from .errors import DegeneratePairError, DomainError

DEFAULT_GRID_DEPTH = 20


@dataclass(frozen=True, order=True)
class DyadicIndex:
    """Dyadic interval I = [k 2^-j, (k+1) 2^-j)"""

    j: int
    k: int

    @property
    def length(self) -> float:
        return math.ldexp(1.0, -self.j)

    @property
    def left(self) -> Fraction:
        return _scaled(self.k, self.j)

    @property
    def right(self) -> Fraction:
        return _scaled(self.k + 1, self.j)

    @property
    def in_half_line(self) -> bool:
        return self.k >= 0

    def parent(self) -> 'DyadicIndex':
        # Python's >> floors, which is the parent rule on negative k too
        return DyadicIndex(self.j - 1, self.k >> 1)

    def children(self) -> List['DyadicIndex']:
        return [DyadicIndex(self.j + 1, 2 * self.k), DyadicIndex(self.j + 1, 2 * self.k + 1)]

    def contains(self, x: 'DyadicPoint') -> bool:
        return contains(self, x)

    def __str__(self) -> str:
        return f"I({self.j},{self.k})"


@dataclass(frozen=True)
class DyadicPoint:
    """Dyadic rational numerator * 2^-depth, numerator odd or zero"""

    numerator: int
    depth: int

    def __post_init__(self):
        n, d = self.numerator, self.depth
        if n == 0:
            d = 0
        else:
            while n % 2 == 0:
                n //= 2
                d -= 1
        object.__setattr__(self, 'numerator', n)
        object.__setattr__(self, 'depth', d)

    @classmethod
    def from_fraction(cls, value: Fraction, max_depth: int = DEFAULT_GRID_DEPTH) -> 'DyadicPoint':
        """Build a point from an exact rational"""
        value = Fraction(value)
        denominator = value.denominator
        depth = denominator.bit_length() - 1
        if denominator != 1 << depth:
            raise DomainError(f"{value} is not a dyadic rational")
        if depth > max_depth:
            raise DomainError(f"{value} is finer than grid depth {max_depth}")
        return cls(value.numerator, depth)

    @classmethod
    def from_float(cls, value: float, max_depth: int = DEFAULT_GRID_DEPTH) -> 'DyadicPoint':
        """Build a point from a float lying exactly on the grid of the given depth"""
        if not math.isfinite(value):
            raise DomainError(f"non-finite point {value}")
        return cls.from_fraction(Fraction(value), max_depth)

    @classmethod
    def on_grid(cls, index: int, depth: int) -> 'DyadicPoint':
        return cls(index, depth)

    def as_fraction(self) -> Fraction:
        return _scaled(self.numerator, self.depth)

    def __float__(self) -> float:
        return math.ldexp(float(self.numerator), -self.depth)

    def at_depth(self, depth: int) -> int:
        """Integer numerator of this point on the grid of the given depth"""
        shift = depth - self.depth
        if shift < 0:
            raise DomainError(f"point {self} is finer than depth {depth}")
        return self.numerator << shift

    def __str__(self) -> str:
        return str(self.as_fraction())


Point = Union[DyadicPoint, float, Fraction, int]


def as_point(x: Point, max_depth: int = DEFAULT_GRID_DEPTH) -> DyadicPoint:
    """Coerce numbers to DyadicPoint, rejecting anything off the grid"""
    if isinstance(x, DyadicPoint):
        return x
    if isinstance(x, float):
        return DyadicPoint.from_float(x, max_depth)
    return DyadicPoint.from_fraction(Fraction(x), max_depth)


def _scaled(n: int, j: int) -> Fraction:
    return Fraction(n, 1 << j) if j >= 0 else Fraction(n << -j)


def contains(I: DyadicIndex, x: Point) -> bool:
    """True iff k 2^-j <= x < (k+1) 2^-j"""
    x = as_point(x)
    depth = max(I.j, x.depth)
    point = x.at_depth(depth)
    left = I.k << (depth - I.j)
    return left <= point < left + (1 << (depth - I.j))


def smallest_common(x: Point, y: Point, half_line: bool = True) -> DyadicIndex:
    """
    Smallest dyadic interval containing both points.

    The two numerators are brought to a common depth; the interval is read
    off the longest common binary prefix, i.e. the shortest right shift
    after which both numerators agree.
    """
    x, y = as_point(x), as_point(y)
    if x == y:
        raise DegeneratePairError(x, y)
    if half_line and (x.numerator < 0 or y.numerator < 0):
        raise DomainError("points must lie in [0, inf) on the half line")
    if min(x.numerator, y.numerator) < 0 <= max(x.numerator, y.numerator):
        raise DomainError("no dyadic interval contains points of opposite sign")

    depth = max(x.depth, y.depth)
    a, b = x.at_depth(depth), y.at_depth(depth)
    shift = (a ^ b).bit_length()
    return DyadicIndex(depth - shift, a >> shift)


def dyadic_distance(x: Point, y: Point) -> float:
    """delta(x, y) = |I(x, y)|, with delta(x, x) = 0"""
    x, y = as_point(x), as_point(y)
    if x == y:
        return 0.0
    return smallest_common(x, y).length


def ancestors(I: DyadicIndex, count: int) -> List[DyadicIndex]:
    """[I, parent(I), ...] with count parents after I"""
    if count < 0:
        raise DomainError(f"ancestor count must be nonnegative, got {count}")
    chain = [I]
    for _ in range(count):
        chain.append(chain[-1].parent())
    return chain


def haar_sign(I: DyadicIndex, x: Point) -> int:
    """+1 on the left half of I, -1 on the right half, 0 outside"""
    x = as_point(x)
    if not contains(I, x):
        return 0
    return 1 if contains(DyadicIndex(I.j + 1, 2 * I.k), x) else -1


def grid_point(index: int, depth: int, max_depth: Optional[int] = None) -> DyadicPoint:
    """The grid point index * 2^-depth"""
    if max_depth is not None and depth > max_depth:
        raise DomainError(f"depth {depth} exceeds grid depth {max_depth}")
    return DyadicPoint(index, depth)
