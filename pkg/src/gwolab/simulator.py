"""Seeded Monte Carlo simulation of the branching population.

Replicates are driven by counter-based per-replicate streams
(Philox keyed by (seed, replicate index)), so results are bit-identical
for a given config no matter how many worker threads run them.  Each
replicate walks birth times in order with a bucket queue: individuals
born at the same time are exchangeable, so the queue only stores counts.
Memory is O(horizon + live individuals), never a full event timeline.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import BudgetExhausted, ConfigError, DivergentMoment, UnsupportedModel
from .lifelaw import (
    BellmanHarris,
    DelayedDeath,
    LifeLaw,
    Sevastyanov,
    Tabulated,
    summarize,
)
from .limitlaw import dichotomy_fraction

_CHUNK = 1024  # replicates per worker task


@dataclass(frozen=True)
class SimConfig:
    model: LifeLaw
    horizon: int
    query_times: tuple[int, ...]
    replicates: int
    seed: int
    max_individuals: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "query_times", tuple(int(t) for t in self.query_times))
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        qt = self.query_times
        if any(qt[i] >= qt[i + 1] for i in range(len(qt) - 1)):
            raise ConfigError(f"query times {qt} must be strictly increasing")
        if qt and (qt[0] < 0 or qt[-1] > self.horizon):
            raise ConfigError(f"query times {qt} must lie in [0, horizon]")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if self.max_individuals < 1:
            raise ConfigError("max_individuals must be >= 1")


class _UniformStream:
    """Blocked scalar uniforms from one generator; block size does not
    change the consumed sequence, only amortizes the call overhead."""

    __slots__ = ("rng", "buf", "pos")

    def __init__(self, rng: np.random.Generator, block: int = 512):
        self.rng = rng
        self.buf = rng.random(block)
        self.pos = 0

    def take(self) -> float:
        buf = self.buf
        if self.pos == buf.shape[0]:
            buf = self.buf = self.rng.random(buf.shape[0])
            self.pos = 0
        v = buf[self.pos]
        self.pos += 1
        return v


def _make_sampler(model: LifeLaw) -> Callable[[_UniformStream], tuple[int, tuple[int, ...]]]:
    """(life, birth ages) drawer; the inverse-cdf samplers on the
    distribution objects are the single source of randomness semantics."""
    if isinstance(model, BellmanHarris):
        life_inv = model.life.sample_from_uniform
        off_inv = model.offspring.sample_from_uniform

        def draw(u):
            life = life_inv(u.take())
            return life, (life,) * off_inv(u.take())

    elif isinstance(model, Sevastyanov):
        life_inv = model.life.sample_from_uniform
        by_life = model.offspring_by_life
        cache: dict = {}

        def draw(u):
            life = life_inv(u.take())
            law = cache.get(life)
            if law is None:
                law = cache[life] = by_life(life)
            return life, (life,) * law.sample_from_uniform(u.take())

    elif isinstance(model, Tabulated):
        pick = model.sample_atom_from_uniform

        def draw(u):
            _, ages, life = pick(u.take())
            return life, ages

    elif isinstance(model, DelayedDeath):
        pick = model.sample_schedule_from_uniform
        res_inv = model.residual.sample_from_uniform

        def draw(u):
            _, ages = pick(u.take())
            life = (ages[-1] if ages else 0) + res_inv(u.take())
            return life, ages

    else:
        raise UnsupportedModel(f"cannot simulate {type(model).__name__}")
    return draw


def _run_replicate(sampler, horizon: int, qtimes, cap: int, rng) -> tuple[list, bool]:
    """One population path; returns counts at qtimes and the overflow flag.

    On overflow the replicate stops early with partial counts; callers
    must treat flagged rows as unusable for statistics.
    """
    u = _UniformStream(rng)
    k = len(qtimes)
    counts = [0] * k
    pending = [0] * (horizon + 1)
    pending[0] = 1
    deaths = [0] * (horizon + 2)
    alive = 0
    for t in range(horizon + 1):
        alive -= deaths[t]
        births = pending[t]
        if not births:
            continue
        qi0 = bisect_left(qtimes, t)
        for _ in range(births):
            life, ages = sampler(u)
            alive += 1
            if alive > cap:
                return counts, True
            end = t + life  # first time no longer alive
            if end <= horizon + 1:
                deaths[end] += 1
            for qi in range(qi0, k):
                if qtimes[qi] < end:
                    counts[qi] += 1
                else:
                    break
            for a in ages:
                b = t + a
                if b <= horizon:
                    pending[b] += 1
    return counts, False


@dataclass
class SimResult:
    query_times: tuple[int, ...]
    counts: np.ndarray  # (replicates, k) int64
    survived: np.ndarray  # Z(horizon) > 0, per replicate
    overflowed: np.ndarray
    horizon: int
    seed: int
    attempts: Optional[int] = None  # set by rejection sampling

    @property
    def ok(self) -> np.ndarray:
        return ~self.overflowed

    def survival_summary(self) -> dict:
        """P(Z(horizon) > 0) estimate with a binomial 95% interval."""
        n = int(self.ok.sum())
        hits = int(self.survived[self.ok].sum())
        p = hits / n if n else math.nan
        se = math.sqrt(p * (1.0 - p) / n) if n else math.nan
        return {
            "replicates": n,
            "overflowed": int(self.overflowed.sum()),
            "survivors": hits,
            "estimate": p,
            "stderr": se,
            "ci95": (p - 1.96 * se, p + 1.96 * se) if n else (math.nan, math.nan),
        }

    def mean_counts(self) -> dict:
        """Sample mean and stderr of Z(t) for each query time."""
        rows = self.counts[self.ok]
        n = rows.shape[0]
        out = {}
        for i, t in enumerate(self.query_times):
            col = rows[:, i]
            m = float(col.mean()) if n else math.nan
            se = float(col.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
            out[t] = {"estimate": m, "stderr": se}
        return out

    def to_csv(self, fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(["replicate", "survived"] + [f"Z@{t}" for t in self.query_times])
        for rep in range(self.counts.shape[0]):
            writer.writerow(
                [rep, int(self.survived[rep])] + [int(v) for v in self.counts[rep]]
            )

    def summary(self) -> dict:
        return {
            "horizon": self.horizon,
            "seed": self.seed,
            "attempts": self.attempts,
            "survival": self.survival_summary(),
            "mean_counts": {str(t): v for t, v in self.mean_counts().items()},
        }


def _replicate_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, rep], dtype=np.uint64)))


def simulate(config: SimConfig, threads: int = 1) -> SimResult:
    """Run all replicates; bit-identical for any thread count."""
    sampler = _make_sampler(config.model)
    qtimes = list(config.query_times)
    h_idx = bisect_left(qtimes, config.horizon)
    track_extra = h_idx == len(qtimes) or qtimes[h_idx] != config.horizon
    tracked = qtimes + [config.horizon] if track_extra else qtimes
    R, k = config.replicates, len(qtimes)
    counts = np.zeros((R, len(tracked)), dtype=np.int64)
    over = np.zeros(R, dtype=bool)

    def run_block(lo: int, hi: int) -> None:
        for rep in range(lo, hi):
            c, o = _run_replicate(
                sampler, config.horizon, tracked, config.max_individuals, _replicate_rng(config.seed, rep)
            )
            counts[rep] = c
            over[rep] = o

    if threads <= 1:
        run_block(0, R)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda lo: run_block(lo, min(lo + _CHUNK, R)), range(0, R, _CHUNK)))
    z_horizon = counts[:, len(tracked) - 1] if track_extra else counts[:, h_idx]
    survived = (z_horizon > 0) & ~over
    return SimResult(
        query_times=config.query_times,
        counts=counts[:, :k],
        survived=survived,
        overflowed=over,
        horizon=config.horizon,
        seed=config.seed,
    )


def conditional_sample(
    config: SimConfig,
    target_survivors: int,
    max_attempts: int = 1_000_000,
    threads: int = 1,
) -> SimResult:
    """Rejection sampling: keep attempting fresh replicates (their own
    streams, indexed by attempt) until target_survivors have Z(horizon)>0.

    The returned result contains exactly the surviving replicates, in
    attempt order, with `attempts` = index of the last attempt + 1, so
    survivors/attempts estimates Q(horizon).
    """
    if target_survivors < 1:
        raise ConfigError("target_survivors must be >= 1")
    sampler = _make_sampler(config.model)
    qtimes = list(config.query_times)
    h_idx = bisect_left(qtimes, config.horizon)
    track_extra = h_idx == len(qtimes) or qtimes[h_idx] != config.horizon
    tracked = qtimes + [config.horizon] if track_extra else qtimes
    kept_counts: list = []
    kept_over: list = []
    attempts = 0

    def one_attempt(rep: int):
        return _run_replicate(
            sampler, config.horizon, tracked, config.max_individuals, _replicate_rng(config.seed, rep)
        )

    block = max(64, _CHUNK // 4)
    while attempts < max_attempts and len(kept_counts) < target_survivors:
        hi = min(attempts + block, max_attempts)
        reps = range(attempts, hi)
        if threads <= 1:
            results = [one_attempt(r) for r in reps]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one_attempt, reps))
        for offset, (c, o) in enumerate(results):
            alive_at_horizon = c[len(tracked) - 1 if track_extra else h_idx] > 0
            if alive_at_horizon and not o:
                kept_counts.append(c)
                kept_over.append(o)
                if len(kept_counts) == target_survivors:
                    attempts += offset + 1
                    break
        else:
            attempts = hi
            continue
        break
    if len(kept_counts) < target_survivors:
        raise BudgetExhausted(
            f"{len(kept_counts)}/{target_survivors} survivors after {attempts} attempts"
        )
    counts = np.array(kept_counts, dtype=np.int64)
    k = len(qtimes)
    return SimResult(
        query_times=config.query_times,
        counts=counts[:, :k],
        survived=np.ones(len(kept_counts), dtype=bool),
        overflowed=np.array(kept_over, dtype=bool),
        horizon=config.horizon,
        seed=config.seed,
        attempts=attempts,
    )


@dataclass(frozen=True)
class DichotomyStats:
    horizon: int
    cutoff: int
    survivors: int
    small_fraction: float  # survivors with 1 <= Z(horizon) <= cutoff
    large_fraction: float
    reference_limit: Optional[float]  # closed-form limit of the small fraction


def default_cutoff(t: int) -> int:
    return math.ceil(math.sqrt(t))


def dichotomy_stats(
    config: SimConfig,
    cutoff_rule: Callable[[int], int] = default_cutoff,
    threads: int = 1,
) -> DichotomyStats:
    """Split survivors at the horizon into small/large count groups.

    The cutoff rule should grow without bound but slower than t, so the
    small fraction tends to the probability that the limit count at 1 is
    finite and positive.
    """
    cut = int(cutoff_rule(config.horizon))
    if cut < 1:
        raise ConfigError("cutoff must be >= 1")
    if config.horizon in config.query_times:
        run_cfg = config
    else:
        run_cfg = SimConfig(
            model=config.model,
            horizon=config.horizon,
            query_times=config.query_times + (config.horizon,),
            replicates=config.replicates,
            seed=config.seed,
            max_individuals=config.max_individuals,
        )
    result = simulate(run_cfg, threads=threads)
    z = result.counts[:, list(run_cfg.query_times).index(config.horizon)]
    ok = result.ok & (z > 0)
    n = int(ok.sum())
    small = int((z[ok] <= cut).sum())
    try:
        ref = dichotomy_fraction(summarize(config.model).c)
    except DivergentMoment:
        ref = None
    return DichotomyStats(
        horizon=config.horizon,
        cutoff=cut,
        survivors=n,
        small_fraction=small / n if n else math.nan,
        large_fraction=1.0 - small / n if n else math.nan,
        reference_limit=ref,
    )
