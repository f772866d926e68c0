"""Finite-dimensional laws of the limiting pure death process.

Conditioned on survival up to a late time t, the population counts at
times t*y rescale to a single-parameter pure death process eta(y) that
starts from infinitely many particles and loses them as y grows.  The
parameter c >= 0 is the compound tail/dispersion parameter of the
underlying life law; c = 0 collapses eta to the two-point {0, infinity}
regime.

Everything here is a closed-form evaluation: fdd probability generating
functions, marginal and joint pmfs (by series extraction), increment
pgfs, and the laws of the entry time T = sup{u : eta(u) = infinity} and
the emptying time T0 = inf{u : eta(u) = 0}.  Infinite mass is reported
as an explicit field, never folded into a truncation bucket.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapTooLarge, ConfigError
from .series import TruncatedSeries

logger = logging.getLogger(__name__)

_PMF_ELEMENT_BUDGET = 1 << 24
_CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class LimitParams:
    """Parameter pack of the limit process."""

    c: float

    def __post_init__(self):
        if not (self.c >= 0.0 and math.isfinite(self.c)):
            raise ConfigError(f"c={self.c!r} must be finite and >= 0")

    @property
    def scale(self) -> float:
        """The recurring normalization 1 + sqrt(1 + c)."""
        return 1.0 + math.sqrt(1.0 + self.c)


class FddQuery:
    """Query points 0 < y_1 < ... < y_k with weights z_i in [0, 1].

    Coordinates with z_i = 1 are removed up front (they do not constrain
    the process; the closed forms assume z_i < 1).  j counts coordinates
    left of 1; y_i = 1 itself belongs to the right side.
    """

    def __init__(self, y, z):
        y = tuple(float(v) for v in y)
        z = tuple(float(v) for v in z)
        if len(y) != len(z):
            raise ConfigError("y and z must have equal length")
        if any(v <= 0.0 for v in y):
            raise ConfigError(f"query points {y} must be positive")
        if any(y[i] >= y[i + 1] for i in range(len(y) - 1)):
            raise ConfigError(f"query points {y} must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for v in z):
            raise ConfigError(f"weights {z} must lie in [0, 1]")
        kept = [(yi, zi) for yi, zi in zip(y, z) if zi != 1.0]
        self.y = tuple(yi for yi, _ in kept)
        self.z = tuple(zi for _, zi in kept)
        self.j = sum(1 for yi in self.y if yi < 1.0)

    @property
    def k(self) -> int:
        return len(self.y)


def prob_finite(p: LimitParams, y: float) -> float:
    """P(eta(y) < infinity)."""
    if y <= 0.0:
        raise ConfigError("y must be positive")
    if y < 1.0:
        return (math.sqrt(1.0 + p.c * y * y) - 1.0) / (p.scale * y)
    return 1.0 - 2.0 / (p.scale * y)


def prob_zero(p: LimitParams, y: float) -> float:
    """P(eta(y) = 0); zero left of 1."""
    if y <= 0.0:
        raise ConfigError("y must be positive")
    return (y - 1.0) / y if y >= 1.0 else 0.0


def eta_marginal_pgf(p: LimitParams, y: float, z: float) -> float:
    """E(z^{eta(y)}) for 0 <= z < 1 (infinite values contribute nothing)."""
    c, A = p.c, p.scale
    if y < 1.0:
        return (math.sqrt(1.0 + c * (1.0 - z) + c * z * y * y) - math.sqrt(1.0 + c * (1.0 - z))) / (A * y)
    return 1.0 - (1.0 + math.sqrt(1.0 + c * (1.0 - z))) / (A * y)


def eta_fdd_pgf(p: LimitParams, q: FddQuery) -> float:
    """E(z_1^{eta(y_1)} ... z_k^{eta(y_k)}) via the branch split at 1."""
    if q.k == 0:
        return 1.0
    c, A = p.c, p.scale
    y1 = q.y[0]
    gammas = [c * (y1 / yi) ** 2 for yi in q.y]
    s_all = 0.0
    s_left = 0.0
    prefix = 1.0
    for i, (zi, gam) in enumerate(zip(q.z, gammas)):
        s_all += prefix * (1.0 - zi) * gam
        if i < q.j:
            s_left += prefix * (1.0 - zi) * gam
        prefix *= zi
    if q.j == 0:
        return 1.0 - (1.0 + math.sqrt(1.0 + s_all)) / (A * y1)
    zprod = math.prod(q.z[: q.j])
    first = math.sqrt(1.0 + s_left + c * zprod * y1 * y1)
    return (first - math.sqrt(1.0 + s_all)) / (A * y1)


# ---------------------------------------------------------------------------
# pmf extraction
# ---------------------------------------------------------------------------


def _sqrt_taylor(alpha: float, beta: float, cap: int) -> np.ndarray:
    """Taylor coefficients of sqrt(alpha - beta*z) via the binomial recurrence."""
    out = np.empty(cap + 1)
    bc = 1.0
    ratio = -beta / alpha
    power = 1.0
    root = math.sqrt(alpha)
    for k in range(cap + 1):
        if k > 0:
            bc *= (1.5 - k) / k
            power *= ratio
        out[k] = root * bc * power
    return out


@dataclass(frozen=True)
class MarginalPmf:
    y: float
    probs: np.ndarray  # P(eta(y) = n), n = 0..K
    finite_remainder: float  # P(K < eta(y) < infinity)
    infinite_mass: float  # P(eta(y) = infinity)


def eta_marginal_pmf(p: LimitParams, y: float, K: int) -> MarginalPmf:
    """Closed-form binomial extraction of P(eta(y) = n) for n <= K."""
    if y <= 0.0:
        raise ConfigError("y must be positive")
    c, A = p.c, p.scale
    if y >= 1.0:
        tail = _sqrt_taylor(1.0 + c, c, K)
        probs = -tail / (A * y)
        probs[0] = 1.0 - (1.0 + tail[0]) / (A * y)
    else:
        probs = (_sqrt_taylor(1.0 + c, c * (1.0 - y * y), K) - _sqrt_taylor(1.0 + c, c, K)) / (A * y)
    pfin = prob_finite(p, y)
    return MarginalPmf(
        y=y,
        probs=probs,
        finite_remainder=pfin - float(probs.sum()),
        infinite_mass=1.0 - pfin,
    )


@dataclass(frozen=True)
class FddPmf:
    y: tuple
    coeffs: np.ndarray  # shape (K+1,)*k, entries beyond total degree K are 0
    finite_remainder: float
    infinite_mass: float
    clamped: int  # coefficients clamped up to 0


def eta_fdd_pmf(p: LimitParams, q: FddQuery, K: int) -> FddPmf:
    """Joint pmf P(eta(y_1) = i_1, ..., eta(y_k) = i_k) up to total degree K.

    The joint pgf is expanded in the truncated-series ring; the square
    roots come from the Newton iteration rather than the univariate
    binomial formula, so the k = 1 case independently cross-checks
    eta_marginal_pmf.
    """
    k = q.k
    if k == 0:
        raise ConfigError("query has no coordinates left")
    if k > 3:
        raise ConfigError("joint extraction is configured for k <= 3")
    if (K + 1) ** k > _PMF_ELEMENT_BUDGET:
        raise CapTooLarge(f"(K+1)^k = {(K + 1) ** k} exceeds the element budget")
    c, A = p.c, p.scale
    y1 = q.y[0]
    gammas = [c * (y1 / yi) ** 2 for yi in q.y]
    one = TruncatedSeries.constant(1.0, k, K)
    zvars = [TruncatedSeries.variable(i, k, K) for i in range(k)]
    s_all = TruncatedSeries.zeros(k, K)
    s_left = TruncatedSeries.zeros(k, K)
    prefix = one
    for i in range(k):
        term = prefix * (one - zvars[i]) * gammas[i]
        s_all = s_all + term
        if i < q.j:
            s_left = s_left + term
        prefix = prefix * zvars[i]
    root_all = (one + s_all).sqrt()
    if q.j == 0:
        pgf = one - (root_all + 1.0) * (1.0 / (A * y1))
    else:
        zprod = one
        for i in range(q.j):
            zprod = zprod * zvars[i]
        root_left = (one + s_left + zprod * (c * y1 * y1)).sqrt()
        pgf = (root_left - root_all) * (1.0 / (A * y1))
    coeffs = pgf.to_dense_array()
    neg = coeffs < 0.0
    clamped = int(neg.sum())
    if clamped:
        worst = float(coeffs[neg].min())
        if worst < -_CLAMP_TOL:
            logger.warning("clamped %d joint pmf coefficients, worst %.3g", clamped, worst)
        coeffs = np.where(neg, 0.0, coeffs)
    pfin = prob_finite(p, y1)  # eta is nonincreasing: finite at y_1 means finite everywhere
    return FddPmf(
        y=q.y,
        coeffs=coeffs,
        finite_remainder=pfin - float(coeffs.sum()),
        infinite_mass=1.0 - pfin,
        clamped=clamped,
    )


# ---------------------------------------------------------------------------
# increments
# ---------------------------------------------------------------------------


def increment_pgf(p: LimitParams, y1: float, y2: float, z: float, conditional: bool = False) -> float:
    """E(z^{eta(y1) - eta(y2)}; eta(y1) < infinity), three branches by
    the position of 1; with conditional=True, divided by P(eta(y1) < inf).

    Returns nan for the conditional version when the conditioning event
    is null (c = 0 with y1 < 1).
    """
    if not 0.0 < y1 < y2:
        raise ConfigError("need 0 < y1 < y2")
    if not 0.0 <= z <= 1.0:
        raise ConfigError("z must lie in [0, 1]")
    c, A = p.c, p.scale
    shared = 1.0 + c * (1.0 - z) * (1.0 - (y1 / y2) ** 2)
    if y2 < 1.0:
        val = (math.sqrt(c * y1 * y1 + shared) - math.sqrt(shared)) / (A * y1)
    elif y1 < 1.0:
        first = 1.0 + c * y1 * y1 + c * (1.0 - z) * (1.0 - y1 * y1)
        val = (math.sqrt(first) - math.sqrt(shared)) / (A * y1)
    else:
        val = 1.0 - (1.0 + math.sqrt(shared)) / (A * y1)
    if not conditional:
        return val
    pfin = prob_finite(p, y1)
    return val / pfin if pfin > 0.0 else math.nan


# ---------------------------------------------------------------------------
# entry and emptying times
# ---------------------------------------------------------------------------


class LawT:
    """Law of T = sup{u : eta(u) = infinity}, the time the process
    stops being infinite.  Continuous with a density jump at y = 1."""

    def __init__(self, p: LimitParams):
        self.c = p.c
        self.scale = p.scale

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        c, A = self.c, self.scale
        safe = np.where(y > 0.0, y, 1.0)
        left = (np.sqrt(1.0 + c * safe**2) - 1.0) / (A * safe)
        right = 1.0 - 2.0 / (A * safe)
        out = np.where(y >= 1.0, right, np.where(y > 0.0, left, 0.0))
        return float(out) if out.ndim == 0 else out

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        c, A = self.c, self.scale
        safe = np.where(y > 0.0, y, 1.0)
        left = (1.0 - 1.0 / np.sqrt(1.0 + c * safe**2)) / (A * safe**2)
        right = 2.0 / (A * safe**2)
        out = np.where(y >= 1.0, right, np.where(y > 0.0, left, c / (2.0 * A)))
        out = np.where(y < 0.0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def density_jump(self) -> float:
        """f(1) - f(1-), computed from the two branch expressions."""
        left_limit = (1.0 - 1.0 / math.sqrt(1.0 + self.c)) / self.scale
        return 2.0 / self.scale - left_limit

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-cdf sampling: closed form right of 1, bisection left of 1."""
        u = rng.random(size)
        a_split = self.cdf(1.0)
        out = np.empty(size)
        hi_mask = u >= a_split
        out[hi_mask] = 2.0 / (self.scale * (1.0 - u[hi_mask]))
        lo_u = u[~hi_mask]
        lo = np.zeros(lo_u.size)
        hi = np.ones(lo_u.size)
        for _ in range(50):  # interval shrinks to 2^-50 < 1e-12
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < lo_u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out[~hi_mask] = 0.5 * (lo + hi)
        return out


class LawT0:
    """Law of T0 = inf{u : eta(u) = 0}; parameter free, supported on [1, inf)."""

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        out = np.where(y >= 1.0, (y - 1.0) / np.where(y != 0.0, y, 1.0), 0.0)
        return float(out) if out.ndim == 0 else out

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        out = np.where(y > 1.0, 1.0 / np.where(y != 0.0, y, 1.0) ** 2, 0.0)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return 1.0 / (1.0 - rng.random(size))


def law_T(p: LimitParams) -> LawT:
    return LawT(p)


def law_T0() -> LawT0:
    return LawT0()


def dichotomy_fraction(c: float) -> float:
    """Limit fraction of survivors with a bounded count:
    P(1 <= eta(1) < infinity) = (sqrt(1+c) - 1)/(sqrt(1+c) + 1)."""
    root = math.sqrt(1.0 + c)
    return (root - 1.0) / (root + 1.0)


def figure1_data(c: float, step: float = 0.01, y_max: float = 4.0) -> np.ndarray:
    """Density table (y, pdf of T, pdf of T0) on a uniform grid hitting 1."""
    if step <= 0.0 or y_max <= step:
        raise ConfigError("need 0 < step < y_max")
    t_law = LawT(LimitParams(c))
    t0_law = LawT0()
    y = np.arange(1, int(round(y_max / step)) + 1) * step
    return np.column_stack([y, t_law.pdf(y), t0_law.pdf(y)])
