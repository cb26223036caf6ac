"""Innovation model Z = S - T.

S is phase-type distributed and T >= 0 comes from a small closed family
of laws with analytic Laplace transforms, so that the log-Laplace
exponents psi1 (of S), psi2 (of -T) and psi = psi1 + psi2 can be
evaluated at arbitrary complex arguments, including matrix arguments via
the spectral calculus of Q.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import BranchError, PoleError, ValidationError
from .phasetype import PhaseTypeDist, SpectralData, laplace

_VARIANTS = ("zero", "point_mass", "exponential", "gamma_int")


@dataclass(frozen=True)
class NegativePart:
    """The nonnegative subtrahend T of the innovation Z = S - T."""

    variant: str
    d: float = 0.0       # point mass location
    rate: float = 0.0    # exponential / gamma rate
    shape: int = 0       # integer gamma shape

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValidationError(f"unknown negative-part variant {self.variant!r}")
        if self.variant == "point_mass" and self.d < 0:
            raise ValidationError("point mass location must be nonnegative")
        if self.variant == "exponential" and self.rate <= 0:
            raise ValidationError("exponential rate must be positive")
        if self.variant == "gamma_int":
            if self.rate <= 0:
                raise ValidationError("gamma rate must be positive")
            if self.shape < 1 or int(self.shape) != self.shape:
                raise ValidationError("gamma shape must be a positive integer")

    @classmethod
    def zero(cls) -> "NegativePart":
        return cls("zero")

    @classmethod
    def point_mass(cls, d: float) -> "NegativePart":
        return cls("point_mass", d=float(d))

    @classmethod
    def exponential(cls, rate: float) -> "NegativePart":
        return cls("exponential", rate=float(rate))

    @classmethod
    def gamma_int(cls, shape: int, rate: float) -> "NegativePart":
        return cls("gamma_int", rate=float(rate), shape=int(shape))

    def mean(self) -> float:
        if self.variant == "zero":
            return 0.0
        if self.variant == "point_mass":
            return self.d
        if self.variant == "exponential":
            return 1.0 / self.rate
        return self.shape / self.rate

    def log_laplace_neg(self, u: complex) -> complex:
        """psi2(u) = log E(e^{-uT}), analytic on the right half plane."""
        u = complex(u)
        if self.variant == "zero":
            return 0.0 + 0.0j
        if self.variant == "point_mass":
            return -u * self.d
        nu = self.rate
        if abs(nu + u) < 1e-300:
            raise PoleError(f"psi2 undefined at u = {-nu} for rate {nu}")
        if self.variant == "exponential":
            return cmath.log(nu / (nu + u))
        return self.shape * cmath.log(nu / (nu + u))

    def sample(self, rng: np.random.Generator, size=None):
        if self.variant == "zero":
            return 0.0 if size is None else np.zeros(size)
        if self.variant == "point_mass":
            return self.d if size is None else np.full(size, self.d)
        if self.variant == "exponential":
            return rng.exponential(1.0 / self.rate, size=size)
        return rng.gamma(self.shape, 1.0 / self.rate, size=size)

    def quadrature_nodes(self, n: int):
        """Nodes/weights (t_i, w_i) with sum w_i f(t_i) approximating E f(T)."""
        if self.variant == "zero":
            return np.array([0.0]), np.array([1.0])
        if self.variant == "point_mass":
            return np.array([self.d]), np.array([1.0])
        from scipy.special import roots_genlaguerre

        k = 1 if self.variant == "exponential" else self.shape
        x, w = roots_genlaguerre(n, k - 1)
        return x / self.rate, w / math.gamma(k)


@dataclass(frozen=True)
class Innovation:
    """Z = S - T with independent phase-type S and parametric T."""

    s_part: PhaseTypeDist
    t_part: NegativePart

    @property
    def m(self) -> int:
        return self.s_part.m

    def mean(self) -> float:
        return self.s_part.mean() - self.t_part.mean()

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            from .phasetype import sample as ph_sample

            return ph_sample(self.s_part, rng).lifetime - self.t_part.sample(rng)
        from .montecarlo import _chain_batch

        lifetimes, _, _ = _chain_batch(self.s_part, rng, int(size))
        return lifetimes - self.t_part.sample(rng, size=size)


def _checked_log(value: complex, what: str) -> complex:
    value = complex(value)
    if value == 0:
        raise BranchError(f"{what}: transform value is zero")
    if value.real <= 0 and abs(value.imag) <= 1e-14 * max(1.0, abs(value.real)):
        raise BranchError(
            f"{what}: transform value {value} is a nonpositive real; "
            "principal branch is ambiguous"
        )
    return cmath.log(value)


def psi1(inn: Innovation, u: complex) -> complex:
    """Log-Laplace exponent of S: log(alpha (-uI - Q)^{-1} q)."""
    return _checked_log(laplace(inn.s_part, u), "psi1")


def psi2(inn: Innovation, u: complex) -> complex:
    """Log-Laplace exponent of -T per the parametric family."""
    return inn.t_part.log_laplace_neg(u)


def psi(inn: Innovation, u: complex) -> complex:
    """psi(u) = psi1(u) + psi2(u) = log E(e^{uZ}) where that expectation exists."""
    return psi1(inn, u) + psi2(inn, u)


def t_laplace_matrix(inn: Innovation, sd: SpectralData) -> np.ndarray:
    """E(e^{QT}) = sum_j L_T(mu_j) P_j with L_T(mu) = E(e^{-mu T})."""
    out = np.zeros((sd.m, sd.m), dtype=complex)
    for j in range(sd.m):
        out += np.exp(inn.t_part.log_laplace_neg(sd.mu[j])) * sd.projectors[j]
    return out
