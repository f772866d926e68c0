"""Multivariate power series truncated at a total-degree cap.

The ring kept here is R[z1..zn] / (total degree > cap).  Addition,
multiplication and scalar ops are exact on the retained coefficients;
everything of higher total degree is dropped.  Square roots are computed
with a division-free Newton iteration and are exact on retained
coefficients up to floating point roundoff.

>>> s = TruncatedSeries.from_terms({(0, 0): 1.0, (1, 0): 2.0}, nvars=2, cap=3)
>>> t = TruncatedSeries.variable(1, nvars=2, cap=3)
>>> (s * t).coefficient((1, 1))
2.0
>>> round((s.sqrt() * s.sqrt()).coefficient((1, 0)), 12)
2.0
"""

from __future__ import annotations

import functools
import math
from typing import Iterable, Iterator, Mapping

import numpy as np
from scipy import signal

from .errors import NonpositiveConstantTerm, ShapeMismatch

# Dense ndarray storage up to this many variables, dict-of-exponents beyond.
DENSE_MAX_VARS = 3


@functools.lru_cache(maxsize=None)
def total_degree_mask(nvars: int, cap: int) -> np.ndarray:
    """Boolean array over exponent tuples, True where the total degree <= cap."""
    grid = np.indices((cap + 1,) * nvars).sum(axis=0)
    mask = grid <= cap
    mask.setflags(write=False)
    return mask


def dense_mul(a: np.ndarray, b: np.ndarray, cap: int) -> np.ndarray:
    """Truncated product of two dense coefficient arrays of shape (cap+1,)*n."""
    full = signal.convolve(a, b, method="direct" if a.size < 4096 else "auto")
    out = full[tuple(slice(0, cap + 1) for _ in range(a.ndim))]
    return np.where(total_degree_mask(a.ndim, cap), out, 0.0)


def _sparse_mul(a: dict, b: dict, cap: int) -> dict:
    out: dict = {}
    adeg = [(i, sum(i), v) for i, v in a.items()]
    bdeg = [(j, sum(j), v) for j, v in b.items()]
    for i, di, va in adeg:
        for j, dj, vb in bdeg:
            if di + dj > cap:
                continue
            k = tuple(x + y for x, y in zip(i, j))
            out[k] = out.get(k, 0.0) + va * vb
    return out


class TruncatedSeries:
    """A power series in `nvars` variables, truncated at total degree `cap`."""

    __slots__ = ("nvars", "cap", "data")

    def __init__(self, nvars: int, cap: int, data):
        if nvars < 1:
            raise ShapeMismatch("need at least one variable")
        if cap < 0:
            raise ShapeMismatch("cap must be nonnegative")
        self.nvars = nvars
        self.cap = cap
        self.data = data  # ndarray when dense, exponent-tuple dict when sparse

    # -- construction -------------------------------------------------

    @classmethod
    def zeros(cls, nvars: int, cap: int) -> "TruncatedSeries":
        if nvars <= DENSE_MAX_VARS:
            return cls(nvars, cap, np.zeros((cap + 1,) * nvars))
        return cls(nvars, cap, {})

    @classmethod
    def constant(cls, value: float, nvars: int, cap: int) -> "TruncatedSeries":
        out = cls.zeros(nvars, cap)
        out._set((0,) * nvars, float(value))
        return out

    @classmethod
    def variable(cls, index: int, nvars: int, cap: int) -> "TruncatedSeries":
        """The monomial z_index; degenerates to 0 when cap == 0."""
        if not 0 <= index < nvars:
            raise ShapeMismatch(f"variable index {index} out of range")
        out = cls.zeros(nvars, cap)
        if cap >= 1:
            idx = [0] * nvars
            idx[index] = 1
            out._set(tuple(idx), 1.0)
        return out

    @classmethod
    def from_terms(cls, terms: Mapping[tuple, float], nvars: int, cap: int) -> "TruncatedSeries":
        out = cls.zeros(nvars, cap)
        for idx, coeff in terms.items():
            if len(idx) != nvars:
                raise ShapeMismatch(f"exponent tuple {idx} has wrong length")
            if sum(idx) <= cap:
                out._set(tuple(idx), out.coefficient(tuple(idx)) + float(coeff))
        return out

    # -- storage helpers ----------------------------------------------

    @property
    def dense(self) -> bool:
        return isinstance(self.data, np.ndarray)

    def _set(self, idx: tuple, value: float) -> None:
        if self.dense:
            self.data[idx] = value
        elif value != 0.0:
            self.data[idx] = value
        else:
            self.data.pop(idx, None)

    def coefficient(self, idx: Iterable[int]) -> float:
        idx = tuple(idx)
        if len(idx) != self.nvars:
            raise ShapeMismatch(f"exponent tuple {idx} has wrong length")
        if sum(idx) > self.cap:
            return 0.0
        if self.dense:
            return float(self.data[idx])
        return self.data.get(idx, 0.0)

    def terms(self) -> Iterator[tuple[tuple, float]]:
        """Yield (exponents, coefficient) for the nonzero retained terms."""
        if self.dense:
            for idx in zip(*np.nonzero(self.data)):
                yield tuple(int(i) for i in idx), float(self.data[idx])
        else:
            yield from ((idx, v) for idx, v in self.data.items() if v != 0.0)

    def to_dense_array(self) -> np.ndarray:
        """Coefficients as an ndarray of shape (cap+1,)*nvars (copy)."""
        if self.dense:
            return self.data.copy()
        out = np.zeros((self.cap + 1,) * self.nvars)
        for idx, v in self.data.items():
            out[idx] = v
        return out

    def _check(self, other: "TruncatedSeries") -> None:
        if self.nvars != other.nvars or self.cap != other.cap:
            raise ShapeMismatch(
                f"operands disagree: ({self.nvars} vars, cap {self.cap}) vs "
                f"({other.nvars} vars, cap {other.cap})"
            )

    # -- ring operations ----------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = TruncatedSeries.constant(other, self.nvars, self.cap)
        self._check(other)
        if self.dense:
            return TruncatedSeries(self.nvars, self.cap, self.data + other.data)
        out = dict(self.data)
        for idx, v in other.data.items():
            out[idx] = out.get(idx, 0.0) + v
        return TruncatedSeries(self.nvars, self.cap, out)

    __radd__ = __add__

    def __neg__(self):
        if self.dense:
            return TruncatedSeries(self.nvars, self.cap, -self.data)
        return TruncatedSeries(self.nvars, self.cap, {i: -v for i, v in self.data.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = TruncatedSeries.constant(other, self.nvars, self.cap)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            if self.dense:
                return TruncatedSeries(self.nvars, self.cap, self.data * float(other))
            return TruncatedSeries(
                self.nvars, self.cap, {i: v * float(other) for i, v in self.data.items()}
            )
        self._check(other)
        if self.dense:
            return TruncatedSeries(self.nvars, self.cap, dense_mul(self.data, other.data, self.cap))
        return TruncatedSeries(self.nvars, self.cap, _sparse_mul(self.data, other.data, self.cap))

    __rmul__ = __mul__

    def sqrt(self) -> "TruncatedSeries":
        """Power-series square root via the division-free Newton iteration.

        Iterates x <- x*(3 - s*x^2)/2 toward 1/sqrt(s), doubling the number
        of correct degrees per step, then returns s*x.  Requires a strictly
        positive constant term.
        """
        c0 = self.coefficient((0,) * self.nvars)
        if c0 <= 0.0:
            raise NonpositiveConstantTerm(f"constant term {c0} is not positive")
        x = TruncatedSeries.constant(1.0 / math.sqrt(c0), self.nvars, self.cap)
        # one extra pass polishes floating point residue after convergence
        for _ in range(max(1, math.ceil(math.log2(self.cap + 1))) + 1):
            x = x * ((3.0 - self * x * x) * 0.5)
        return self * x

    # -- evaluation ----------------------------------------------------

    def evaluate(self, point: Iterable[float]) -> float:
        """Sum of coeff * prod(z_i^e_i) at the given point."""
        point = tuple(point)
        if len(point) != self.nvars:
            raise ShapeMismatch("point has wrong length")
        if self.dense:
            acc = self.data
            for p in reversed(point):
                acc = acc @ np.power(p, np.arange(self.cap + 1))
            return float(acc)
        return float(
            sum(v * math.prod(p**e for p, e in zip(point, idx)) for idx, v in self.data.items())
        )

    def __repr__(self):
        kind = "dense" if self.dense else "sparse"
        return f"TruncatedSeries(nvars={self.nvars}, cap={self.cap}, {kind})"


def sqrt_series(s: TruncatedSeries) -> TruncatedSeries:
    """Functional alias for TruncatedSeries.sqrt."""
    return s.sqrt()
