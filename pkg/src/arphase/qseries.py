"""q-series special functions: q-Pochhammer symbols and the Euler function.

Convention: (a; q)_n = prod_{k=0}^{n-1} (1 - a q^k), the standard
n-factor product, with (a; q)_0 = 1.
"""

from __future__ import annotations

from .errors import ConvergenceError

_MAX_FACTORS = 200_000


def q_pochhammer(a: float, q: float, n: int) -> float:
    """Finite q-Pochhammer symbol (a; q)_n."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if abs(q) >= 1:
        raise ValueError("|q| must be < 1")
    out = 1.0
    term = a
    for _ in range(n):
        out *= 1.0 - term
        term *= q
    return out


def q_pochhammer_inf(a: float, q: float, tol: float = 1e-15) -> float:
    """Infinite product (a; q)_infty, truncated when factors are within tol of 1.

    The Euler function is phi_e(q) = (q; q)_infty.
    """
    if abs(q) >= 1:
        raise ValueError("|q| must be < 1")
    if q != 0 and abs(a) >= 1.0 / abs(q):
        raise ValueError("|a| must be < 1/|q| for a well-behaved product")
    out = 1.0
    term = a
    for _ in range(_MAX_FACTORS):
        if abs(term) < tol * (1.0 - abs(q)):
            # Tail: log prod (1 - a q^k) ~ -sum a q^k, bounded by |term|/(1-|q|).
            return out
        out *= 1.0 - term
        term *= q
    raise ConvergenceError(
        f"(a; q)_inf did not converge within {_MAX_FACTORS} factors (a={a}, q={q})"
    )


def euler_phi(q: float, tol: float = 1e-15) -> float:
    """Euler function phi_e(q) = (q; q)_infty."""
    return q_pochhammer_inf(q, q, tol=tol)
