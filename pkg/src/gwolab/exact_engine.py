"""Deterministic dynamic programming for the overlapping-generation
branching process: extinction tables, multi-time pgfs, and
survival-conditioned joint distributions.

One recursion covers everything.  For query times t_1 < ... < t_k with
weights z_i, the founder (life L, children at ages tau_1 <= ... <= tau_N)
satisfies

    P(t_1..t_k) = E[ prod_{i: 0 <= t_i < L} z_i * prod_j P(t_1-tau_j..t_k-tau_j) ]

where a query time that has gone negative simply drops out.  Since every
shift moves all times in lockstep, the memo is one-dimensional: index by
u = time remaining until the last query.  Weights may be scalars or
series variables; the series path reuses the same segment walk with
coefficient arrays in place of floats.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    CapTooLarge,
    ConfigError,
    DivergentMoment,
    UnsupportedModel,
    ZeroConditioningEvent,
)
from .lifelaw import (
    BellmanHarris,
    DelayedDeath,
    LifeLaw,
    ModelSummary,
    Sevastyanov,
    Tabulated,
    summarize,
)
from .series import dense_mul, total_degree_mask

_SERIES_BUDGET = 1 << 23  # floats held by one series DP table


class _Var(NamedTuple):
    """Marker: this weight is series variable number `index`."""

    index: int


class FddSpec:
    """Observation times t_1 < ... < t_k with weights z_i in [0, 1].

    Coordinates with z_i = 1 are dropped up front (a weight of 1 does not
    constrain anything: counts are finite with probability one).  t_obs,
    when present, is the survival-conditioning time.
    """

    def __init__(self, times, z, t_obs: Optional[int] = None):
        times = tuple(int(t) for t in times)
        z = tuple(float(v) for v in z)
        if len(times) != len(z):
            raise ConfigError("times and z must have equal length")
        if not times:
            raise ConfigError("need at least one observation time")
        if any(t < 0 for t in times):
            raise ConfigError(f"times {times} must be >= 0")
        if any(times[i] >= times[i + 1] for i in range(len(times) - 1)):
            raise ConfigError(f"times {times} must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for v in z):
            raise ConfigError(f"weights {z} must lie in [0, 1]")
        if t_obs is not None:
            t_obs = int(t_obs)
            if t_obs < 1:
                raise ConfigError("t_obs must be >= 1")
        kept = [(t, v) for t, v in zip(times, z) if v != 1.0]
        self.times = tuple(t for t, _ in kept)
        self.z = tuple(v for _, v in kept)
        self.t_obs = t_obs

    @property
    def k(self) -> int:
        return len(self.times)


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------


def _life_tables(life, t_max: int):
    """pmf[l] = P(L = l) and surv[u] = P(L > u) for 0 <= l, u <= t_max."""
    pmf = life.pmf_array(t_max)
    surv = np.array([life.survival(u) for u in range(t_max + 1)])
    return pmf, surv


def _activation(times, weights):
    """Per-coordinate activation order for the segment walk.

    Coordinate i contributes once u >= lag_i, with lag_i = t_k - t_i, and
    its threshold at index u is then v_i = u - lag_i.
    """
    t_last = times[-1]
    return [(t_last - t, w) for t, w in zip(times, weights)]


def _scheduled_atoms(model, t_max: int):
    """Normalize Tabulated/DelayedDeath to (prob, ages, survival-of-L)."""
    atoms = []
    if isinstance(model, Tabulated):
        for prob, ages, life in model.atoms:
            atoms.append((prob, ages, _step_survival(life)))
    else:
        residual = model.residual
        for prob, ages in model.schedules:
            last = ages[-1] if ages else 0
            atoms.append((prob, ages, _shifted_survival(residual, last)))
    return atoms


def _step_survival(life: int):
    return lambda u: 1.0 if life > u else 0.0


def _shifted_survival(residual, last: int):
    return lambda u: 1.0 if u <= last else residual.survival(u - last)


def _sevastyanov_rows(model: Sevastyanov, t_max: int):
    """M[l, n] = P(L = l) P(N = n | L = l), padded to a common width.

    The offspring law is only queried on the support of L.
    """
    pmf, surv = _life_tables(model.life, t_max)
    laws = {l: model.offspring_by_life(l) for l in range(1, t_max + 1) if pmf[l] > 0.0}
    width = max((len(law.probs) for law in laws.values()), default=1)
    M = np.zeros((t_max + 1, width))
    for l, law in laws.items():
        M[l, : len(law.probs)] = pmf[l] * np.asarray(law.probs)
    return M, surv, width


# ---------------------------------------------------------------------------
# scalar DP
# ---------------------------------------------------------------------------


def _scalar_dp(model: LifeLaw, times, weights) -> np.ndarray:
    """G[u] for u = 0..t_k; the pgf at the given times is G[t_k]."""
    if isinstance(model, BellmanHarris):
        return _scalar_birth_at_death(model, times, weights, sevastyanov=False)
    if isinstance(model, Sevastyanov):
        return _scalar_birth_at_death(model, times, weights, sevastyanov=True)
    if isinstance(model, (Tabulated, DelayedDeath)):
        return _scalar_scheduled(model, times, weights)
    raise UnsupportedModel(f"no DP path for {type(model).__name__}")


def _horner(coef, x: float) -> float:
    r = 0.0
    for c in reversed(coef):
        r = r * x + c
    return r


def _scalar_birth_at_death(model, times, weights, sevastyanov: bool) -> np.ndarray:
    t_max = times[-1]
    acts = _activation(times, weights)
    if sevastyanov:
        M, surv, width = _sevastyanov_rows(model, t_max)
        M_rev = np.ascontiguousarray(M[::-1])  # M_rev[t_max - l] = M[l]
        exps = np.arange(width)
        Gpow = np.empty((t_max + 1, width))
    else:
        pmf, surv = _life_tables(model.life, t_max)
        pmf_rev = np.ascontiguousarray(pmf[::-1])  # pmf_rev[t_max - l] = pmf[l]
        coef = model.offspring.probs
        PG = np.empty(t_max + 1)
    G = np.empty(t_max + 1)
    for u in range(t_max + 1):
        total = 0.0
        prefix = 1.0
        prev = 0
        for lag, z in acts:
            if u < lag:
                continue
            v = u - lag
            if v > prev and prefix != 0.0:
                if sevastyanov:
                    total += prefix * float(np.sum(M_rev[t_max - v : t_max - prev] * Gpow[u - v : u - prev]))
                else:
                    total += prefix * float(np.dot(pmf_rev[t_max - v : t_max - prev], PG[u - v : u - prev]))
            prefix *= z
            prev = v
        if u > prev and prefix != 0.0:
            if sevastyanov:
                total += prefix * float(np.sum(M_rev[t_max - u : t_max - prev] * Gpow[0 : u - prev]))
            else:
                total += prefix * float(np.dot(pmf_rev[t_max - u : t_max - prev], PG[0 : u - prev]))
        G[u] = total + prefix * surv[u]
        if sevastyanov:
            Gpow[u] = G[u] ** exps
        else:
            PG[u] = _horner(coef, G[u])
    return G


def _scalar_scheduled(model, times, weights) -> np.ndarray:
    t_max = times[-1]
    acts = _activation(times, weights)
    atoms = _scheduled_atoms(model, t_max)
    G = np.empty(t_max + 1)
    for u in range(t_max + 1):
        val = 0.0
        for prob, ages, S in atoms:
            child = 1.0
            for tau in ages:
                if tau > u:
                    break
                child *= G[u - tau]
            alive = 0.0
            prefix = 1.0
            s_prev = 1.0
            for lag, z in acts:
                if u < lag:
                    continue
                s_here = S(u - lag)
                alive += prefix * (s_prev - s_here)
                prefix *= z
                s_prev = s_here
            alive += prefix * s_prev
            val += prob * alive * child
        G[u] = val
    return G


# ---------------------------------------------------------------------------
# series DP (weights may mix scalars and variables)
# ---------------------------------------------------------------------------


def _series_budget_check(t_max: int, nvars: int, cap: int) -> tuple:
    shape = (cap + 1,) * nvars
    if (t_max + 1) * math.prod(shape) > _SERIES_BUDGET:
        raise CapTooLarge(
            f"series table of {(t_max + 1) * math.prod(shape)} coefficients "
            f"exceeds the budget of {_SERIES_BUDGET}"
        )
    return shape

def _shift_monomial(arr: np.ndarray, shifts) -> np.ndarray:
    """Multiply a coefficient array by prod z_i^{shifts[i]} (cap by slicing)."""
    if not any(shifts):
        return arr
    out = np.zeros_like(arr)
    src = tuple(slice(None, -s) if s else slice(None) for s in shifts)
    dst = tuple(slice(s, None) if s else slice(None) for s in shifts)
    out[dst] = arr[src]
    return out


def _add_monomial(arr: np.ndarray, shifts, value: float, cap: int) -> None:
    if sum(shifts) <= cap:
        arr[tuple(shifts)] += value


def _poly_of_series(coef, arr: np.ndarray, cap: int) -> np.ndarray:
    """Horner composition sum_n coef[n] * arr**n in the truncated ring."""
    res = np.zeros_like(arr)
    res.flat[0] = coef[-1]
    for c in coef[-2::-1]:
        res = dense_mul(res, arr, cap)
        res.flat[0] += c
    return res


def _series_dp(model: LifeLaw, times, weights, nvars: int, cap: int) -> np.ndarray:
    """Coefficient array (over z-variables, total degree <= cap) of the pgf."""
    t_max = times[-1]
    shape = _series_budget_check(t_max, nvars, cap)
    mask = total_degree_mask(nvars, cap)
    acts = _activation(times, weights)
    if isinstance(model, BellmanHarris):
        G = _series_birth_at_death(model, times, acts, shape, mask, cap)
    elif isinstance(model, Sevastyanov):
        G = _series_sevastyanov(model, times, acts, shape, mask, cap)
    elif isinstance(model, (Tabulated, DelayedDeath)):
        G = _series_scheduled(model, times, acts, shape, mask, cap)
    else:
        raise UnsupportedModel(f"no DP path for {type(model).__name__}")
    return G[t_max]


def _walk_segments(acts, u):
    """Blocks (lo, hi, scal, var_indices) covering l in (lo, hi], plus the
    full prefix (for the founder-survives term)."""
    segs = []
    scal = 1.0
    vars_seen: tuple = ()
    prev = 0
    for lag, z in acts:
        if u < lag:
            continue
        v = u - lag
        if v > prev:
            segs.append((prev, v, scal, vars_seen))
        if isinstance(z, _Var):
            vars_seen = vars_seen + (z.index,)
        else:
            scal *= z
        prev = v
    if u > prev:
        segs.append((prev, u, scal, vars_seen))
    return segs, scal, vars_seen


def _exponents(nvars, var_indices):
    e = [0] * nvars
    for i in var_indices:
        e[i] += 1
    return e


def _series_birth_at_death(model, times, acts, shape, mask, cap):
    t_max = times[-1]
    pmf, surv = _life_tables(model.life, t_max)
    pmf_rev = np.ascontiguousarray(pmf[::-1])
    coef = model.offspring.probs
    G = np.zeros((t_max + 1, *shape))
    PG = np.zeros((t_max + 1, *shape))
    for u in range(t_max + 1):
        arr = np.zeros(shape)
        segs, scal_m, vars_m = _walk_segments(acts, u)
        for lo, hi, scal, var_idx in segs:
            if scal == 0.0:
                continue
            block = np.tensordot(pmf_rev[t_max - hi : t_max - lo], PG[u - hi : u - lo], axes=(0, 0))
            arr += scal * _shift_monomial(block, _exponents(len(shape), var_idx))
        if scal_m != 0.0:
            _add_monomial(arr, _exponents(len(shape), vars_m), scal_m * surv[u], cap)
        arr *= mask
        G[u] = arr
        PG[u] = _poly_of_series(coef, arr, cap)
    return G


def _series_sevastyanov(model, times, acts, shape, mask, cap):
    # per-(u, l) composition; meant for small horizons only
    t_max = times[-1]
    pmf, surv = _life_tables(model.life, t_max)
    laws = {
        l: np.asarray(model.offspring_by_life(l).probs)
        for l in range(1, t_max + 1)
        if pmf[l] > 0.0
    }
    G = np.zeros((t_max + 1, *shape))
    for u in range(t_max + 1):
        arr = np.zeros(shape)
        segs, scal_m, vars_m = _walk_segments(acts, u)
        for lo, hi, scal, var_idx in segs:
            if scal == 0.0:
                continue
            block = np.zeros(shape)
            for l in range(lo + 1, hi + 1):
                if pmf[l] != 0.0:
                    block += pmf[l] * _poly_of_series(laws[l], G[u - l], cap)
            arr += scal * _shift_monomial(block, _exponents(len(shape), var_idx))
        if scal_m != 0.0:
            _add_monomial(arr, _exponents(len(shape), vars_m), scal_m * surv[u], cap)
        arr *= mask
        G[u] = arr
    return G


def _series_scheduled(model, times, acts, shape, mask, cap):
    t_max = times[-1]
    atoms = _scheduled_atoms(model, t_max)
    nvars = len(shape)
    G = np.zeros((t_max + 1, *shape))
    for u in range(t_max + 1):
        acc = np.zeros(shape)
        for prob, ages, S in atoms:
            child = None
            for tau in ages:
                if tau > u:
                    break
                child = G[u - tau] if child is None else dense_mul(child, G[u - tau], cap)
            alive = np.zeros(shape)
            scal = 1.0
            shifts = [0] * nvars
            s_prev = 1.0
            for lag, z in acts:
                if u < lag:
                    continue
                s_here = S(u - lag)
                if scal != 0.0:
                    _add_monomial(alive, shifts, scal * (s_prev - s_here), cap)
                if isinstance(z, _Var):
                    shifts = list(shifts)
                    shifts[z.index] += 1
                else:
                    scal *= z
                s_prev = s_here
            if scal != 0.0:
                _add_monomial(alive, shifts, scal * s_prev, cap)
            term = alive if child is None else dense_mul(alive, child, cap)
            acc += prob * term
        G[u] = acc * mask
    return G


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtinctionTable:
    """Q(t) = P(Z(t) > 0) for t = 0..t_max, plus the model summary."""

    q: np.ndarray
    summary: Optional[ModelSummary]

    @property
    def tq(self) -> np.ndarray:
        return np.arange(len(self.q)) * self.q

    def to_csv(self, fh) -> None:
        h = self.summary.h if self.summary is not None else math.nan
        writer = csv.writer(fh)
        writer.writerow(["t", "Q", "tQ", "h", "abs_error"])
        for t, (q, tq) in enumerate(zip(self.q, self.tq)):
            writer.writerow([t] + [format(x, ".17g") for x in (q, tq, h, abs(tq - h))])


def extinction_seq(model: LifeLaw, t_max: int) -> ExtinctionTable:
    """Survival probabilities by one DP pass (time-homogeneous, so the
    whole column falls out of a single run at weight 0)."""
    if t_max < 0:
        raise ConfigError("t_max must be >= 0")
    dead = _scalar_dp(model, (t_max,), (0.0,))
    try:
        summary = summarize(model)
    except DivergentMoment:
        summary = None
    return ExtinctionTable(q=1.0 - dead, summary=summary)


def fdd_pgf(model: LifeLaw, spec: FddSpec) -> float:
    """E(z_1^{Z(t_1)} ... z_k^{Z(t_k)})."""
    if spec.k == 0:
        return 1.0
    return float(_scalar_dp(model, spec.times, spec.z)[spec.times[-1]])


def _survival_at(model: LifeLaw, t_obs: int) -> float:
    q = 1.0 - float(_scalar_dp(model, (t_obs,), (0.0,))[t_obs])
    if q <= 0.0:
        raise ZeroConditioningEvent(f"Z({t_obs}) > 0 has probability 0")
    return q


def _with_inserted_zero(times, weights, t_obs):
    """Insert the conditioning coordinate (t_obs, weight 0), keeping times
    sorted; ties may go anywhere since equal times commute."""
    merged = list(zip(times, weights))
    pos = 0
    while pos < len(merged) and merged[pos][0] <= t_obs:
        pos += 1
    merged.insert(pos, (t_obs, 0.0))
    return tuple(t for t, _ in merged), tuple(w for _, w in merged)


def conditional_pgf(model: LifeLaw, spec: FddSpec) -> float:
    """E(prod z_i^{Z(t_i)} | Z(t_obs) > 0).

    Extinction is permanent here (no births after death of the whole
    population), so E(prod z_i^{Z(t_i)}; Z(t_obs) = 0) is exactly the
    same pgf with an extra weight-0 coordinate at t_obs.
    """
    if spec.t_obs is None:
        raise ConfigError("spec needs t_obs for conditioning")
    q = _survival_at(model, spec.t_obs)
    p_plain = fdd_pgf(model, spec)
    times, weights = _with_inserted_zero(spec.times, spec.z, spec.t_obs)
    p_extinct = float(_scalar_dp(model, times, weights)[times[-1]])
    return (p_plain - p_extinct) / q


@dataclass(frozen=True)
class ConditionalPmf:
    times: tuple
    t_obs: int
    probs: np.ndarray  # shape (K+1,)*k, total degree <= K
    overflow: float  # mass beyond total count K


def conditional_pmf(model: LifeLaw, spec: FddSpec, K: int) -> ConditionalPmf:
    """Joint pmf of (Z(t_1), ..., Z(t_k)) given Z(t_obs) > 0, for total
    counts up to K; spec weights are ignored (they become variables)."""
    if spec.t_obs is None:
        raise ConfigError("spec needs t_obs for conditioning")
    if K < 1:
        raise ConfigError("K must be >= 1")
    k = spec.k
    if k == 0:
        raise ConfigError("no coordinates left to extract")
    q = _survival_at(model, spec.t_obs)
    variables = tuple(_Var(i) for i in range(k))
    plain = _series_dp(model, spec.times, variables, k, K)
    times, weights = _with_inserted_zero(spec.times, variables, spec.t_obs)
    extinct = _series_dp(model, times, weights, k, K)
    probs = (plain - extinct) / q
    return ConditionalPmf(
        times=spec.times,
        t_obs=spec.t_obs,
        probs=probs,
        overflow=1.0 - float(probs.sum()),
    )


# ---------------------------------------------------------------------------
# scaled-time convergence toward the compound limit
# ---------------------------------------------------------------------------


def g_factor(y, z) -> float:
    """g = sum z_1...z_{i-1} (1 - z_i) / y_i^2."""
    total = 0.0
    prefix = 1.0
    for yi, zi in zip(y, z):
        total += prefix * (1.0 - zi) / (yi * yi)
        prefix *= zi
    return total


def weighted_survival_limit(summary: ModelSummary, g: float) -> float:
    """The limit of t * (1 - pgf at times t*y): root of b*x^2 = a*x + d*g."""
    if summary.b <= 0.0:
        return math.inf
    a, b, d = summary.a, summary.b, summary.d
    return (a + math.sqrt(a * a + 4.0 * b * d * g)) / (2.0 * b)


@dataclass(frozen=True)
class ConvergenceRow:
    t: int
    q_k: float
    tq_k: float
    target: float
    abs_error: float


def convergence_table(model: LifeLaw, y, z, t_grid) -> list[ConvergenceRow]:
    """Rows of t * Q_k(t) against the closed-form limit, with
    Q_k(t) = 1 - E(prod z_i^{Z(t_i)}) at times t_i = t + round(t*(y_i - 1))."""
    y = tuple(float(v) for v in y)
    z = tuple(float(v) for v in z)
    if not y or y[0] != 1.0:
        raise ConfigError("y must start at 1")
    if any(y[i] >= y[i + 1] for i in range(len(y) - 1)):
        raise ConfigError(f"fractions {y} must be strictly increasing")
    if len(y) != len(z):
        raise ConfigError("y and z must have equal length")
    summary = summarize(model)
    target = weighted_survival_limit(summary, g_factor(y, z))
    rows = []
    for t in t_grid:
        t = int(t)
        if t < 1:
            raise ConfigError("t_grid entries must be >= 1")
        times = tuple(t + int(math.floor(t * (yi - 1.0) + 0.5)) for yi in y)
        q_k = 1.0 - fdd_pgf(model, FddSpec(times, z))
        rows.append(
            ConvergenceRow(
                t=t,
                q_k=q_k,
                tq_k=t * q_k,
                target=target,
                abs_error=abs(t * q_k - target),
            )
        )
    return rows


def convergence_csv(rows, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["t", "Q", "tQ", "h", "abs_error"])
    for r in rows:
        writer.writerow(
            [r.t] + [format(x, ".17g") for x in (r.q_k, r.tq_k, r.target, r.abs_error)]
        )
