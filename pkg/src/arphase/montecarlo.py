"""Simulation oracle for the AR(1) threshold problem.

Paths iterate X_n = lambda X_{n-1} + S_n - T_n with each S_n drawn as a
full trajectory of the absorbing chain.  At the first crossing of b the
elapsed chain time u* = b - lambda X_{n-1} + T_n locates the occupying
phase, which realizes the phase-at-crossing event; the overshoot is
S_n - u* = X_n - b.

Paths are censored at max_steps chosen so rho^max_steps < 1e-12; the
censored contribution to any rho^tau-weighted estimator is below that
bound.  Estimation runs over fixed-size blocks of paths, block i using
the RNG substream spawned as (seed, i), and blocks are always combined
in index order, so results depend only on (parameters, seed, n_paths)
and not on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .gains import GainFunction
from .phasetype import PhaseTypeDist, cdf_vector, sample as ph_sample
from .transforms import AR1Model

BLOCK_SIZE = 8192

CENSOR_TOL = 1e-12


@dataclass(frozen=True)
class PathRecord:
    """Outcome of one simulated path."""

    tau: int                  # steps to crossing; meaningless if censored
    x_tau: float
    overshoot: float
    crossing_phase: int       # 1-based; -1 if censored
    discounted_payoff: float  # rho^tau g(x_tau), 0 if censored
    censored: bool


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int
    censored_fraction: float


def default_max_steps(rho: float) -> int:
    """Smallest n with rho^n < 1e-12."""
    return int(math.ceil(math.log(CENSOR_TOL) / math.log(rho)))


def simulate_crossing(
    model: AR1Model,
    x: float,
    b: float,
    seed: int,
    max_steps: int | None = None,
    gain: GainFunction | None = None,
) -> PathRecord:
    """Simulate one path to crossing (or censoring) with its own RNG stream."""
    if max_steps is None:
        max_steps = default_max_steps(model.rho)
    rng = np.random.default_rng(seed)
    dist = model.inn.s_part
    t_part = model.inn.t_part
    X = x
    for n in range(1, max_steps + 1):
        t = float(t_part.sample(rng))
        chain = ph_sample(dist, rng)
        s = chain.lifetime
        Xn = model.lam * X + s - t
        if Xn >= b:
            u_star = b - model.lam * X + t
            u_star = max(u_star, 0.0)
            assert u_star < s + 1e-12, "crossing time outside chain lifetime"
            elapsed = 0.0
            phase = chain.holding_times[-1][0]
            for ph, dur in chain.holding_times:
                if u_star < elapsed + dur:
                    phase = ph
                    break
                elapsed += dur
            payoff = model.rho ** n * (float(gain(Xn)) if gain is not None else 1.0)
            return PathRecord(
                tau=n,
                x_tau=Xn,
                overshoot=Xn - b,
                crossing_phase=phase,
                discounted_payoff=payoff,
                censored=False,
            )
        X = Xn
    return PathRecord(
        tau=max_steps,
        x_tau=X,
        overshoot=0.0,
        crossing_phase=-1,
        discounted_payoff=0.0,
        censored=True,
    )


def _chain_batch(dist: PhaseTypeDist, rng: np.random.Generator, count: int):
    """Vectorized absorbing-chain draws.

    Returns (lifetimes, round_phases, round_ends): per jump round r,
    round_phases[r][p] is the occupied phase (or -1 once absorbed) and
    round_ends[r][p] the cumulative time at the end of that holding.
    """
    m = dist.m
    rates = -np.diag(dist.Q)
    cum_alpha = np.cumsum(dist.alpha)
    # Per-phase cumulative jump law over (other phases..., absorption).
    kernel = dist.Q / rates[:, None]
    np.fill_diagonal(kernel, 0.0)
    kernel = np.hstack([kernel, (dist.q / rates)[:, None]])
    cum_kernel = np.cumsum(kernel, axis=1)

    phase = np.searchsorted(cum_alpha, rng.random(count), side="right")
    phase = np.minimum(phase, m - 1)
    t = np.zeros(count)
    alive = np.ones(count, dtype=bool)
    round_phases = []
    round_ends = []
    while np.any(alive):
        idx = np.flatnonzero(alive)
        hold = rng.exponential(1.0 / rates[phase[idx]])
        t[idx] += hold
        rp = np.full(count, -1, dtype=np.int64)
        rp[idx] = phase[idx]
        round_phases.append(rp)
        round_ends.append(t.copy())
        u = rng.random(idx.size)
        nxt = (cum_kernel[phase[idx]] < u[:, None]).sum(axis=1)
        absorbed = nxt >= m
        alive[idx[absorbed]] = False
        phase[idx[~absorbed]] = nxt[~absorbed]
    return t, round_phases, round_ends


def _phase_at(round_phases, round_ends, cols: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Occupying phase at elapsed time u for the given chain columns."""
    out = np.full(cols.size, -1, dtype=np.int64)
    pending = np.ones(cols.size, dtype=bool)
    for rp, re in zip(round_phases, round_ends):
        hit = pending & (u < re[cols]) & (rp[cols] >= 0)
        out[hit] = rp[cols[hit]]
        pending &= ~hit
        if not pending.any():
            break
    # u beyond the last recorded end can only happen through rounding at
    # the lifetime boundary; attribute to the last occupied phase.
    if pending.any():
        for rp in reversed(round_phases):
            fix = pending & (rp[cols] >= 0)
            out[fix] = rp[cols[fix]]
            pending &= ~fix
            if not pending.any():
                break
    return out


def _simulate_block(
    model: AR1Model, x0: float, b: float, rng: np.random.Generator,
    count: int, max_steps: int,
):
    """Vectorized simulation of `count` paths; returns per-path arrays."""
    dist = model.inn.s_part
    t_part = model.inn.t_part
    lam = model.lam

    X = np.full(count, float(x0))
    alive = np.ones(count, dtype=bool)
    tau = np.zeros(count, dtype=np.int64)
    x_tau = np.zeros(count)
    overshoot = np.zeros(count)
    phase = np.full(count, -1, dtype=np.int64)

    for step in range(1, max_steps + 1):
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        T = np.asarray(t_part.sample(rng, size=act.size), dtype=float)
        S, round_phases, round_ends = _chain_batch(dist, rng, act.size)
        Xn = lam * X[act] + S - T
        crossed = Xn >= b
        if crossed.any():
            local = np.flatnonzero(crossed)
            gidx = act[local]
            u_star = np.maximum(b - lam * X[gidx] + T[local], 0.0)
            # _phase_at is 0-based; records use 1-based phase labels.
            phase[gidx] = _phase_at(round_phases, round_ends, local, u_star) + 1
            tau[gidx] = step
            x_tau[gidx] = Xn[local]
            overshoot[gidx] = Xn[local] - b
            alive[gidx] = False
        X[act] = Xn
    censored = alive
    return tau, x_tau, overshoot, phase, censored


def simulate_paths(
    model: AR1Model,
    x: float,
    b: float,
    n_paths: int,
    seed: int,
    max_steps: int | None = None,
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
):
    """Simulate n_paths paths; returns (tau, x_tau, overshoot, phase, censored)
    arrays, identical for any worker count."""
    if max_steps is None:
        max_steps = default_max_steps(model.rho)
    n_blocks = (n_paths + block_size - 1) // block_size
    seeds = np.random.SeedSequence(seed).spawn(n_blocks)
    sizes = [
        min(block_size, n_paths - i * block_size) for i in range(n_blocks)
    ]

    def run(i):
        rng = np.random.default_rng(seeds[i])
        return _simulate_block(model, x, b, rng, sizes[i], max_steps)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(i) for i in range(n_blocks)]
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(5))


def _estimate(values: np.ndarray, censored: np.ndarray) -> Estimate:
    n = values.size
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean=mean, stderr=stderr, n=n,
                    censored_fraction=float(censored.mean()))


def estimate_phi(
    model: AR1Model, x: float, b: float, n_paths: int, seed: int,
    max_steps: int | None = None, workers: int = 1,
) -> list[Estimate]:
    """Per-phase estimates of Phi_i(x) = E_x(rho^tau 1_{G_i}); censored paths
    contribute 0 (bias below rho^max_steps)."""
    tau, _, _, phase, censored = simulate_paths(
        model, x, b, n_paths, seed, max_steps, workers
    )
    disc = np.where(censored, 0.0, model.rho ** tau.astype(float))
    out = []
    for i in range(1, model.m + 1):
        vals = np.where(phase == i, disc, 0.0)
        out.append(_estimate(vals, censored))
    return out


def estimate_joint(
    model: AR1Model, x: float, b: float, gain: GainFunction,
    n_paths: int, seed: int, max_steps: int | None = None, workers: int = 1,
) -> Estimate:
    """Estimate of E_x(rho^tau g(X_tau))."""
    tau, x_tau, _, _, censored = simulate_paths(
        model, x, b, n_paths, seed, max_steps, workers
    )
    payoff = np.where(
        censored, 0.0, model.rho ** tau.astype(float) * np.asarray(gain(x_tau))
    )
    return _estimate(payoff, censored)


def ks_statistic(samples: np.ndarray, cdf_callable) -> float:
    """Two-sided Kolmogorov-Smirnov distance to an analytic CDF."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    f = cdf_callable(s)
    grid = np.arange(1, n + 1) / n
    return float(max(np.max(grid - f), np.max(f - (grid - 1.0 / n))))


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sided critical value sqrt(-ln(alpha/2) / (2n))."""
    return math.sqrt(-math.log(alpha / 2.0) / (2.0 * n))


def overshoot_given_phase(
    model: AR1Model, x: float, b: float, n_paths: int, seed: int,
    max_steps: int | None = None, workers: int = 1, min_count: int = 1000,
):
    """Group overshoots by crossing phase and test each group against the
    PH(Q, e_i) CDF.  Returns {phase: (samples, ks_stat, tau_overshoot_corr)}
    and a list of warnings for under-sampled phases."""
    tau, _, overshoot, phase, censored = simulate_paths(
        model, x, b, n_paths, seed, max_steps, workers
    )
    dist = model.inn.s_part
    out = {}
    warnings = []
    for i in range(1, model.m + 1):
        mask = (phase == i) & ~censored
        samples = overshoot[mask]
        if samples.size < min_count:
            warnings.append(
                f"phase {i}: only {samples.size} crossings (< {min_count})"
            )
        e_i = np.zeros(model.m)
        e_i[i - 1] = 1.0
        ks = ks_statistic(samples, lambda s: cdf_vector(dist, s, init=e_i)) \
            if samples.size else float("nan")
        if samples.size > 2:
            corr = float(np.corrcoef(tau[mask].astype(float), samples)[0, 1])
        else:
            corr = float("nan")
        out[i] = (samples, ks, corr)
    return out, warnings
