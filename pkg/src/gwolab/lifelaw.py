"""Individual life laws for branching populations with overlapping generations.

A model describes a single individual: an integer life length L >= 1 and
birth ages 1 <= tau_1 <= ... <= tau_N <= L, one child per age.  Relative
to its own birth the individual is alive on [0, L-1].  The population
starts from one founder born at time 0; criticality means E(N) = 1, so
the expected population size stays 1 forever while the survival
probability decays.

Summary parameters derived here:

    b   half the offspring variance, Var(N)/2
    a   mean summed birth age, E(tau_1 + ... + tau_N)
    d   quadratic tail coefficient of the life length, lim t^2 P(L > t)
    h   population survival decay constant: t * P(alive at t) -> h,
        the positive root of b h^2 = a h + d
    c   compound parameter 4 b d / a^2 (0 exactly when lives have
        finite-variance tails, i.e. d = 0)
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import polygamma

from .errors import ConfigError, DivergentMoment

_SUM_TOL = 1e-12
_CERT_TOL = 1e-12
_CERT_CAP = 1 << 20  # certified-summation iteration cap for moment series


# ---------------------------------------------------------------------------
# offspring counts
# ---------------------------------------------------------------------------


class OffspringPMF:
    """Probability mass function of the number of children, finite support."""

    def __init__(self, probs: Sequence[float]):
        arr = np.asarray(probs, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ConfigError("offspring pmf must be a nonempty 1-d sequence")
        if np.any(arr < 0.0):
            raise ConfigError("offspring pmf has negative entries")
        if abs(float(arr.sum()) - 1.0) > _SUM_TOL:
            raise ConfigError(f"offspring pmf sums to {arr.sum()!r}, not 1")
        self.probs = arr
        self.max_children = int(arr.size - 1)
        counts = np.arange(arr.size)
        self.mean = float(counts @ arr)
        self.second_moment = float((counts**2) @ arr)
        self._cdf = np.cumsum(arr).tolist()

    @property
    def dispersion(self) -> float:
        """Half the variance of the offspring count (the parameter b)."""
        return 0.5 * (self.second_moment - self.mean**2)

    def pgf(self, x):
        """E(x^N) for scalar or array x."""
        return np.polynomial.polynomial.polyval(x, self.probs)

    def sample_from_uniform(self, u: float) -> int:
        return bisect_right(self._cdf, u)


def phi(offspring: OffspringPMF, z):
    """E((1-z)^N - 1 + N z), the convexity functional of the offspring law.

    Nonnegative on [0, 1]; behaves like dispersion * z^2 as z -> 0 for
    critical laws.
    """
    z_arr = np.asarray(z, dtype=float)
    n = np.arange(offspring.probs.size)
    vals = (1.0 - z_arr[..., None]) ** n - 1.0 + n * z_arr[..., None]
    out = vals @ offspring.probs
    return float(out) if np.isscalar(z) else out


# ---------------------------------------------------------------------------
# life length laws
# ---------------------------------------------------------------------------


class FiniteLife:
    """Life length with finite support on {1, ..., max_life}."""

    def __init__(self, pmf: dict[int, float]):
        if not pmf:
            raise ConfigError("life length pmf is empty")
        items = sorted(pmf.items())
        for life, p in items:
            if not isinstance(life, int) or life < 1:
                raise ConfigError(f"life length {life!r} must be an integer >= 1")
            if p < 0.0:
                raise ConfigError("life length pmf has negative entries")
        total = math.fsum(p for _, p in items)
        if abs(total - 1.0) > _SUM_TOL:
            raise ConfigError(f"life length pmf sums to {total!r}, not 1")
        self.support = tuple(life for life, _ in items)
        self.probs = tuple(p for _, p in items)
        self.max_life = self.support[-1]
        self.mean = math.fsum(life * p for life, p in items)
        self.d = 0.0
        self._cdf = list(np.cumsum(self.probs))

    def survival(self, t: float) -> float:
        """P(L > t)."""
        return math.fsum(p for life, p in zip(self.support, self.probs) if life > t)

    def pmf_array(self, t_max: int) -> np.ndarray:
        out = np.zeros(t_max + 1)
        for life, p in zip(self.support, self.probs):
            if life <= t_max:
                out[life] = p
        return out

    def tail_mean(self, l0: int) -> float:
        """E(L; L > l0)."""
        return math.fsum(life * p for life, p in zip(self.support, self.probs) if life > l0)

    def sample_from_uniform(self, u: float) -> int:
        return self.support[bisect_right(self._cdf, u)] if u < self._cdf[-1] else self.max_life


class QuadraticTailLife:
    """Life length whose survival is exactly d/t^2 beyond a threshold.

    P(L > t) = 1 for t < t_min and d/t^2 for t >= t_min, which forces
    t_min^2 >= d.  The mean is finite (t_min + d * psi_1(t_min), with
    psi_1 the trigamma function) but the second moment diverges whenever
    d > 0.
    """

    def __init__(self, d: float, t_min: int):
        if d < 0.0 or not math.isfinite(d):
            raise ConfigError(f"tail coefficient d={d!r} must be finite and >= 0")
        if not isinstance(t_min, int) or t_min < 1:
            raise ConfigError(f"t_min={t_min!r} must be an integer >= 1")
        if t_min * t_min < d:
            raise ConfigError(f"t_min={t_min} too small for d={d}: need t_min^2 >= d")
        self.d = float(d)
        self.t_min = t_min
        self.max_life = None  # unbounded support
        self.mean = t_min + d * float(polygamma(1, t_min))

    def survival(self, t: float) -> float:
        if t < self.t_min:
            return 1.0
        return self.d / (t * t)

    def pmf(self, life: int) -> float:
        return self.survival(life - 1) - self.survival(life)

    def pmf_array(self, t_max: int) -> np.ndarray:
        t = np.arange(t_max + 1, dtype=float)
        surv = np.where(t < self.t_min, 1.0, self.d / np.maximum(t, 1.0) ** 2)
        out = np.empty(t_max + 1)
        out[0] = 0.0
        out[1:] = surv[:-1] - surv[1:]
        return out

    def tail_mean(self, l0: int) -> float:
        """E(L; L > l0), in closed form for l0 >= t_min."""
        if l0 < self.t_min:
            raise ConfigError("tail_mean needs l0 >= t_min")
        if self.d == 0.0:
            return 0.0
        return (l0 + 1) * self.d / l0**2 + self.d * float(polygamma(1, l0 + 1))

    def sample_from_uniform(self, u: float) -> int:
        """Smallest t with P(L > t) < u; exact inverse-cdf sampling."""
        if self.d == 0.0:
            return self.t_min
        if u <= 0.0:
            u = 2.0**-64  # rng yields [0, 1); keep the sample finite
        return max(self.t_min, int(math.sqrt(self.d / u)) + 1)


LifeLengthLaw = Union[FiniteLife, QuadraticTailLife]


def _as_ages(ages: Sequence[int], life: int | None = None) -> tuple[int, ...]:
    ages = tuple(int(t) for t in ages)
    if any(t < 1 for t in ages):
        raise ConfigError(f"birth ages {ages} must be >= 1")
    if list(ages) != sorted(ages):
        raise ConfigError(f"birth ages {ages} must be nondecreasing")
    if life is not None and ages and ages[-1] > life:
        raise ConfigError(f"last birth age {ages[-1]} exceeds life length {life}")
    return ages


# ---------------------------------------------------------------------------
# full life laws (life length + birth schedule, possibly coupled)
# ---------------------------------------------------------------------------


class Tabulated:
    """Explicit finite list of (probability, birth ages, life length) atoms."""

    def __init__(self, atoms: Sequence[tuple[float, Sequence[int], int]]):
        if not atoms:
            raise ConfigError("tabulated law needs at least one atom")
        parsed = []
        for prob, ages, life in atoms:
            if prob < 0.0:
                raise ConfigError("atom probability is negative")
            life = int(life)
            if life < 1:
                raise ConfigError(f"life length {life} must be >= 1")
            parsed.append((float(prob), _as_ages(ages, life), life))
        total = math.fsum(p for p, _, _ in parsed)
        if abs(total - 1.0) > _SUM_TOL:
            raise ConfigError(f"atom probabilities sum to {total!r}, not 1")
        self.atoms = tuple(parsed)
        self.max_life = max(life for _, _, life in parsed)
        self._cdf = list(np.cumsum([p for p, _, _ in parsed]))

    def sample_atom_from_uniform(self, u: float) -> tuple[float, tuple[int, ...], int]:
        i = bisect_right(self._cdf, u)
        return self.atoms[min(i, len(self.atoms) - 1)]


class BellmanHarris:
    """All children are born at the moment of death; N independent of L."""

    def __init__(self, life: LifeLengthLaw, offspring: OffspringPMF):
        self.life = life
        self.offspring = offspring


class Sevastyanov:
    """Children born at death, offspring law allowed to depend on the life.

    `offspring_by_life(l)` returns the offspring pmf given L = l.  With an
    unbounded life length the moment series are summed term by term, so a
    `moment_tail_bound(l0)` callable must certify that every remainder
    beyond l0 (of E N, E N^2 and E N*L) is below the certification
    tolerance; otherwise summarize raises DivergentMoment.
    """

    def __init__(
        self,
        life: LifeLengthLaw,
        offspring_by_life: Callable[[int], OffspringPMF],
        moment_tail_bound: Callable[[int], float] | None = None,
    ):
        self.life = life
        self.offspring_by_life = offspring_by_life
        self.moment_tail_bound = moment_tail_bound


class DelayedDeath:
    """Fixed birth schedules, death delayed past the last birth.

    An atom (prob, birth_ages) is drawn, then an independent residual R
    from a life length law; the life ends at last_birth_age + R.  Because
    the schedules are bounded, the tail coefficient of the total life
    equals the residual's d.
    """

    def __init__(
        self,
        schedules: Sequence[tuple[float, Sequence[int]]],
        residual: LifeLengthLaw,
    ):
        if not schedules:
            raise ConfigError("delayed-death law needs at least one schedule")
        parsed = []
        for prob, ages in schedules:
            if prob < 0.0:
                raise ConfigError("schedule probability is negative")
            parsed.append((float(prob), _as_ages(ages)))
        total = math.fsum(p for p, _ in parsed)
        if abs(total - 1.0) > _SUM_TOL:
            raise ConfigError(f"schedule probabilities sum to {total!r}, not 1")
        self.schedules = tuple(parsed)
        self.residual = residual
        self._cdf = list(np.cumsum([p for p, _ in parsed]))

    def sample_schedule_from_uniform(self, u: float) -> tuple[float, tuple[int, ...]]:
        i = bisect_right(self._cdf, u)
        return self.schedules[min(i, len(self.schedules) - 1)]


LifeLaw = Union[Tabulated, BellmanHarris, Sevastyanov, DelayedDeath]


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSummary:
    mean_offspring: float
    b: float
    a: float
    d: float
    h: float
    c: float
    critical: bool
    a_finite: bool


def compound_params(a: float, b: float, d: float) -> tuple[float, float]:
    """(h, c) from the raw parameters: b h^2 = a h + d, c = 4 b d / a^2.

    Degenerate corners: b = 0 gives h = inf; a = 0 gives c = inf when
    b*d > 0.  Only critical models with a > 0, b > 0 are meaningful.
    """
    if b <= 0.0:
        return math.inf, 0.0
    h = (a + math.sqrt(a * a + 4.0 * b * d)) / (2.0 * b)
    if a == 0.0:
        return h, (math.inf if d > 0.0 else 0.0)
    return h, 4.0 * b * d / (a * a)


def _sevastyanov_moments(law: Sevastyanov) -> tuple[float, float, float]:
    """(E N, E N^2, E N*L) for a life-dependent offspring rule."""
    life = law.life
    if isinstance(life, FiniteLife):
        en = en2 = amean = 0.0
        for l, p in zip(life.support, life.probs):
            o = law.offspring_by_life(l)
            en += p * o.mean
            en2 += p * o.second_moment
            amean += p * l * o.mean
        return en, en2, amean
    if law.moment_tail_bound is None:
        raise DivergentMoment(
            "offspring rule over an unbounded life length needs a moment_tail_bound"
        )
    en = en2 = amean = 0.0
    l = life.t_min
    checkpoint = max(life.t_min, 16)
    while True:
        while l <= checkpoint:
            p = life.pmf(l)
            if p > 0.0:
                o = law.offspring_by_life(l)
                en += p * o.mean
                en2 += p * o.second_moment
                amean += p * l * o.mean
            l += 1
        rem = float(law.moment_tail_bound(checkpoint))
        if not math.isfinite(rem) or rem < 0.0:
            raise DivergentMoment(f"remainder bound at l={checkpoint} is {rem!r}")
        if rem < _CERT_TOL:
            return en, en2, amean
        if checkpoint >= _CERT_CAP:
            raise DivergentMoment(
                f"moment series not certified: remainder bound {rem:.3g} at l={checkpoint}"
            )
        checkpoint *= 2


def summarize(model: LifeLaw, tol: float = 1e-9) -> ModelSummary:
    """Derive (EN, b, a, d, h, c) and flags from a life law.

    Non-critical models are summarized with critical=False rather than
    rejected.  Raises DivergentMoment when a moment series cannot be
    certified convergent.
    """
    if isinstance(model, Tabulated):
        en = math.fsum(p * len(ages) for p, ages, _ in model.atoms)
        en2 = math.fsum(p * len(ages) ** 2 for p, ages, _ in model.atoms)
        a = math.fsum(p * sum(ages) for p, ages, _ in model.atoms)
        d = 0.0
    elif isinstance(model, BellmanHarris):
        en = model.offspring.mean
        en2 = model.offspring.second_moment
        a = en * model.life.mean
        d = model.life.d
    elif isinstance(model, Sevastyanov):
        en, en2, a = _sevastyanov_moments(model)
        d = model.life.d
    elif isinstance(model, DelayedDeath):
        en = math.fsum(p * len(ages) for p, ages in model.schedules)
        en2 = math.fsum(p * len(ages) ** 2 for p, ages in model.schedules)
        a = math.fsum(p * sum(ages) for p, ages in model.schedules)
        d = model.residual.d
    else:
        raise ConfigError(f"not a life law: {model!r}")
    b = 0.5 * (en2 - en * en)
    h, c = compound_params(a, b, d)
    return ModelSummary(
        mean_offspring=en,
        b=b,
        a=a,
        d=d,
        h=h,
        c=c,
        critical=abs(en - 1.0) <= tol,
        a_finite=True,
    )


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_individual(model: LifeLaw, rng: np.random.Generator) -> tuple[int, tuple[int, ...]]:
    """Draw one individual's (life length, birth ages)."""
    if isinstance(model, Tabulated):
        _, ages, life = model.sample_atom_from_uniform(rng.random())
        return life, ages
    if isinstance(model, BellmanHarris):
        life = model.life.sample_from_uniform(rng.random())
        n = model.offspring.sample_from_uniform(rng.random())
        return life, (life,) * n
    if isinstance(model, Sevastyanov):
        life = model.life.sample_from_uniform(rng.random())
        n = model.offspring_by_life(life).sample_from_uniform(rng.random())
        return life, (life,) * n
    if isinstance(model, DelayedDeath):
        _, ages = model.sample_schedule_from_uniform(rng.random())
        residual = model.residual.sample_from_uniform(rng.random())
        life = (ages[-1] if ages else 0) + residual
        return life, ages
    raise ConfigError(f"not a life law: {model!r}")
