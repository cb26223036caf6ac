"""Quadrature of expectations against phase-type and innovation densities.

PH densities are exponential polynomials, so panels of Gauss-Legendre
between breakpoints plus a scaled Gauss-Laguerre tail converge fast.
Integrands with kinks or jumps (indicators, piecewise value functions)
must pass the kink locations as breakpoints; each panel then sees a
smooth function.  Node counts are doubled until the estimate moves less
than the requested tolerance.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_laguerre

from .errors import ConvergenceError
from .innovations import Innovation
from .phasetype import PhaseTypeDist


@lru_cache(maxsize=64)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


# The tail integrand is an exponential polynomial after rescaling, so a
# moderate fixed-degree rule is already exact; larger degrees only push
# nodes out to where the classical weights underflow.
_LAGUERRE_CAP = 128


@lru_cache(maxsize=64)
def _laggauss(n: int):
    return roots_laguerre(min(n, _LAGUERRE_CAP))


def _ph_density_weights(dist: PhaseTypeDist, init=None):
    left = dist.alpha if init is None else np.asarray(init, dtype=float)
    w = np.array([left @ P @ dist.q for P in dist.spectral.projectors])
    return w, dist.spectral.mu


def _ph_density_eval(w, mu, s):
    vals = np.exp(-np.multiply.outer(s, mu)) @ w
    return vals.real


def ph_expectation(
    dist: PhaseTypeDist,
    func,
    *,
    init=None,
    breakpoints=(),
    tol: float = 1e-9,
    start_nodes: int = 64,
    max_nodes: int = 2048,
) -> float:
    """E(func(S)) for S ~ PH(Q, init or alpha), func vectorized over arrays.

    `breakpoints` lists interior points where func is not smooth; the
    integral is split there.
    """
    w, mu = _ph_density_weights(dist, init)
    beta = float(np.min(mu.real))
    bps = sorted(float(b) for b in breakpoints if b > 0)

    def estimate(n: int) -> float:
        total = 0.0
        xg, wg = _leggauss(n)
        lo = 0.0
        for hi in bps:
            half = 0.5 * (hi - lo)
            s = lo + half * (xg + 1.0)
            total += half * float(np.sum(wg * func(s) * _ph_density_eval(w, mu, s)))
            lo = hi
        xl, wl = _laggauss(n)
        s = lo + xl / beta
        # integrand / (beta e^{-beta (s-lo)}) evaluated at Laguerre nodes
        total += float(
            np.sum(wl * func(s) * _ph_density_eval(w, mu, s) * np.exp(xl)) / beta
        )
        return total

    prev = estimate(start_nodes)
    n = start_nodes * 2
    while n <= max_nodes:
        cur = estimate(n)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
        n *= 2
    raise ConvergenceError(
        f"ph_expectation did not stabilize below {tol} at {max_nodes} nodes"
    )


def innovation_expectation(
    inn: Innovation,
    func,
    *,
    breakpoints_z=(),
    tol: float = 1e-9,
    start_nodes: int = 64,
    max_nodes: int = 2048,
) -> float:
    """E(func(Z)) for Z = S - T, func vectorized, kinks given in z-coordinates."""
    w, mu = _ph_density_weights(inn.s_part)
    beta = float(np.min(mu.real))
    bps_z = [float(b) for b in breakpoints_z]

    def estimate(n: int) -> float:
        t_nodes, t_weights = inn.t_part.quadrature_nodes(min(n, _LAGUERRE_CAP))
        xg, wg = _leggauss(n)
        xl, wl = _laggauss(n)
        total = 0.0
        for t, wt in zip(t_nodes, t_weights):
            bps = sorted(b + t for b in bps_z if b + t > 0)
            inner = 0.0
            lo = 0.0
            for hi in bps:
                half = 0.5 * (hi - lo)
                s = lo + half * (xg + 1.0)
                inner += half * float(
                    np.sum(wg * func(s - t) * _ph_density_eval(w, mu, s))
                )
                lo = hi
            s = lo + xl / beta
            inner += float(
                np.sum(wl * func(s - t) * _ph_density_eval(w, mu, s) * np.exp(xl))
                / beta
            )
            total += wt * inner
        return total

    prev = estimate(start_nodes)
    n = start_nodes * 2
    while n <= max_nodes:
        cur = estimate(n)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
        n *= 2
    raise ConvergenceError(
        f"innovation_expectation did not stabilize below {tol} at {max_nodes} nodes"
    )
