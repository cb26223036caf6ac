"""Phase-type distribution calculus.

A phase-type law PH(Q, alpha) is the absorption time of a finite-state
continuous-time Markov chain with sub-generator Q and initial row alpha.
All evaluations (cdf, pdf, Laplace transform, matrix functions of Q) go
through a single eigendecomposition of Q that is computed once at
validation time and cached on the distribution object.

Only diagonalizable Q with pairwise distinct eigenvalues are admitted;
repeated or defective spectra are rejected at validation so that every
downstream partial-fraction argument deals with simple poles only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PoleError, ValidationError

# Relative guard below which an evaluation point counts as sitting on a pole.
POLE_GUARD = 1e-12

# Relative gap below which two eigenvalues count as repeated.
EIGENVALUE_GAP = 1e-8

# Tolerance for asserting that a complex-assembled quantity is real.
IMAG_TOL = 1e-9


def as_real(value, *, tol: float = IMAG_TOL, what: str = "value") -> float:
    """Strip an asserted-negligible imaginary part from a complex scalar."""
    value = complex(value)
    scale = max(1.0, abs(value.real))
    if abs(value.imag) > tol * scale:
        raise ValueError(
            f"{what} has non-negligible imaginary part {value.imag:.3e} "
            f"(real part {value.real:.3e})"
        )
    return value.real


def as_real_vector(vec, *, tol: float = IMAG_TOL, what: str = "vector") -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(vec.real), initial=0.0)))
    worst = float(np.max(np.abs(vec.imag), initial=0.0))
    if worst > tol * scale:
        raise ValueError(f"{what} has non-negligible imaginary part {worst:.3e}")
    return vec.real.copy()


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues of -Q (positive real parts) and the spectral projectors.

    The projectors satisfy P_j P_k = 0 for j != k, P_j^2 = P_j,
    sum_j P_j = I and Q = sum_j (-mu_j) P_j, so any scalar function f
    lifts to f(cQ) = sum_j f(-c mu_j) P_j for scalar c.
    """

    mu: np.ndarray          # shape (m,), complex
    projectors: np.ndarray  # shape (m, m, m), complex

    @property
    def m(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class PhaseTypeDist:
    """A validated phase-type distribution PH(Q, alpha) with cached spectrum."""

    Q: np.ndarray
    alpha: np.ndarray
    q: np.ndarray
    spectral: SpectralData

    @property
    def m(self) -> int:
        return self.alpha.shape[0]

    def mean(self) -> float:
        """E(eta) = alpha (-Q)^{-1} 1."""
        ones = np.ones(self.m)
        return float(self.alpha @ np.linalg.solve(-self.Q, ones))

    def moment(self, k: int) -> float:
        """E(eta^k) = k! alpha (-Q)^{-k} 1."""
        vec = np.ones(self.m)
        for _ in range(k):
            vec = np.linalg.solve(-self.Q, vec)
        return float(math.factorial(k) * (self.alpha @ vec))


@dataclass(frozen=True)
class ChainSample:
    """One trajectory of the absorbing chain underlying a PH draw."""

    holding_times: tuple  # sequence of (phase index, duration)
    lifetime: float


def _spectral_decompose(Q: np.ndarray) -> SpectralData:
    eigvals, V = np.linalg.eig(Q)
    mu = -eigvals
    # Deterministic ordering: by real part, then imaginary part.
    order = np.lexsort((mu.imag, mu.real))
    mu = mu[order]
    V = V[:, order]
    try:
        W = np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"defective eigenvector matrix for Q: {exc}") from exc
    m = Q.shape[0]
    projectors = np.empty((m, m, m), dtype=complex)
    for j in range(m):
        projectors[j] = np.outer(V[:, j], W[j, :])
    return SpectralData(mu=mu, projectors=projectors)


def validate(Q, alpha) -> PhaseTypeDist:
    """Check sub-generator structure and build a PhaseTypeDist.

    Rejects non-sub-generator matrices, unnormalized initial vectors and
    any Q whose spectrum contains a repeated eigenvalue or an eigenvalue
    with nonnegative real part.
    """
    Q = np.array(Q, dtype=float)
    alpha = np.array(alpha, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValidationError(f"Q must be square, got shape {Q.shape}")
    m = Q.shape[0]
    if alpha.shape != (m,):
        raise ValidationError(f"alpha must have length {m}, got shape {alpha.shape}")

    off = Q - np.diag(np.diag(Q))
    if np.any(off < 0):
        raise ValidationError("off-diagonal entries of Q must be nonnegative")
    row_sums = Q.sum(axis=1)
    if np.any(row_sums > 1e-12):
        raise ValidationError("every row sum of Q must be <= 0")
    if np.all(row_sums > -1e-12):
        raise ValidationError("at least one row sum of Q must be < 0 (no absorption)")
    if np.any(alpha < 0):
        raise ValidationError("alpha must have nonnegative entries")
    if abs(alpha.sum() - 1.0) > 1e-12:
        raise ValidationError(f"alpha must sum to 1, got {alpha.sum()!r}")

    sd = _spectral_decompose(Q)
    mu = sd.mu
    if np.any(mu.real <= 0):
        bad = mu[np.argmin(mu.real)]
        raise ValidationError(
            f"eigenvalue {-bad} of Q has nonnegative real part; not a valid sub-generator"
        )
    scale = float(np.max(np.abs(mu)))
    for j in range(m):
        for k in range(j + 1, m):
            if abs(mu[j] - mu[k]) < EIGENVALUE_GAP * scale:
                raise ValidationError(
                    f"repeated eigenvalue {-mu[j]} of Q (distance "
                    f"{abs(mu[j] - mu[k]):.3e}); repeated/defective spectra are unsupported"
                )
    # Conditioning check: the projectors must reconstruct Q.
    recon = np.tensordot(-mu, sd.projectors, axes=(0, 0))
    resid = np.max(np.abs(recon - Q)) / max(1.0, np.max(np.abs(Q)))
    if resid > 1e-8:
        raise ValidationError(
            f"spectral reconstruction residual {resid:.3e} exceeds 1e-8; "
            "Q is too ill-conditioned"
        )

    q = -Q @ np.ones(m)
    dist = PhaseTypeDist(Q=Q, alpha=alpha, q=q, spectral=sd)
    for arr in (dist.Q, dist.alpha, dist.q, sd.mu, sd.projectors):
        arr.setflags(write=False)
    return dist


def _alpha_weights(dist: PhaseTypeDist, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Scalars left @ P_j @ right for every projector."""
    return np.array([left @ P @ right for P in dist.spectral.projectors])


def cdf(dist: PhaseTypeDist, s: float) -> float:
    """H_alpha(s) = 1 - alpha e^{Qs} 1; returns 0 for s < 0 by convention."""
    if s < 0:
        return 0.0
    w = _alpha_weights(dist, dist.alpha, np.ones(dist.m))
    value = 1.0 - np.sum(w * np.exp(-dist.spectral.mu * s))
    value = as_real(value, what="cdf")
    return min(1.0, max(0.0, value))


def cdf_vector(dist: PhaseTypeDist, s, init=None) -> np.ndarray:
    """Vectorized CDF over an array of points, optionally for initial row `init`."""
    s = np.asarray(s, dtype=float)
    left = dist.alpha if init is None else np.asarray(init, dtype=float)
    w = _alpha_weights(dist, left, np.ones(dist.m))
    vals = 1.0 - np.exp(-np.multiply.outer(s, dist.spectral.mu)) @ w
    vals = np.where(s < 0, 0.0, vals.real)
    return np.clip(vals, 0.0, 1.0)


def pdf(dist: PhaseTypeDist, s: float) -> float:
    """h_alpha(s) = alpha e^{Qs} q; returns 0 for s < 0 by convention."""
    if s < 0:
        return 0.0
    w = _alpha_weights(dist, dist.alpha, dist.q)
    value = np.sum(w * np.exp(-dist.spectral.mu * s))
    return as_real(value, what="pdf")


def laplace(dist: PhaseTypeDist, s: complex) -> complex:
    """alpha (-sI - Q)^{-1} q in spectral form sum_j alpha P_j q / (mu_j - s).

    For real s below the smallest eigenvalue of -Q this is E(e^{s eta});
    elsewhere it is the analytic continuation of that transform.
    """
    s = complex(s)
    mu = dist.spectral.mu
    for muj in mu:
        if abs(s - muj) < POLE_GUARD * max(1.0, abs(muj)):
            raise PoleError(f"Laplace argument {s} collides with eigenvalue {muj} of -Q")
    w = _alpha_weights(dist, dist.alpha, dist.q)
    return complex(np.sum(w / (mu - s)))


def matrix_function(sd: SpectralData, c: complex, f) -> np.ndarray:
    """f(cQ) = sum_j f(-c mu_j) P_j for a scalar function f."""
    m = sd.m
    out = np.zeros((m, m), dtype=complex)
    for j in range(m):
        try:
            fj = f(-c * sd.mu[j])
        except (PoleError, ZeroDivisionError, FloatingPointError) as exc:
            raise PoleError(
                f"scalar function failed at eigenvalue {-c * sd.mu[j]} of cQ: {exc}"
            ) from exc
        out += fj * sd.projectors[j]
    return out


def sample(dist: PhaseTypeDist, rng: np.random.Generator) -> ChainSample:
    """Simulate the absorbing chain and return the full trajectory."""
    rates = -np.diag(dist.Q)
    m = dist.m
    # Jump kernel rows: transitions to other phases, then absorption.
    kernel = np.zeros((m, m + 1))
    for i in range(m):
        kernel[i, :m] = dist.Q[i] / rates[i]
        kernel[i, i] = 0.0
        kernel[i, m] = dist.q[i] / rates[i]
    cum_alpha = np.cumsum(dist.alpha)
    phase = int(np.searchsorted(cum_alpha, rng.random(), side="right"))
    phase = min(phase, m - 1)
    holds = []
    lifetime = 0.0
    while True:
        dur = rng.exponential(1.0 / rates[phase])
        holds.append((phase + 1, dur))
        lifetime += dur
        nxt = int(np.searchsorted(np.cumsum(kernel[phase]), rng.random(), side="right"))
        if nxt >= m:
            break
        phase = nxt
    return ChainSample(holding_times=tuple(holds), lifetime=lifetime)


def restart_vector(dist: PhaseTypeDist, t: float) -> np.ndarray:
    """Conditional phase occupation pi^t given survival to time t.

    pi^t_i = (alpha e^{Qt})_i / (alpha e^{Qt} 1); PH(Q, pi^t) is the law of
    the residual lifetime eta - t given eta >= t.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    sd = dist.spectral
    row = np.zeros(dist.m, dtype=complex)
    for j in range(sd.m):
        row += np.exp(-sd.mu[j] * t) * (dist.alpha @ sd.projectors[j])
    row = as_real_vector(row, what="restart vector")
    row = np.clip(row, 0.0, None)
    total = row.sum()
    if total <= 0:
        raise ValueError(f"survival probability vanished at t={t}")
    return row / total
