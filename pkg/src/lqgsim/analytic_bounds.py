"""Closed-form scale functions, sub-Gaussian heat-kernel envelopes, and
elementary concentration bounds (Poisson tails, an explicit Cramér rate).

Everything here is a deterministic function of its arguments; the numeric
suprema (`phi_kappa_numeric`, `psi_kappa_inverse`) use a geometric scan plus
golden-section refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "DomainError",
    "PreconditionError",
    "NumericalSupError",
    "ScaleSpec",
    "EnvelopeParams",
    "CramerInput",
    "correction_h",
    "phi0_closed",
    "phi_kappa_numeric",
    "psi_kappa_inverse",
    "uhk_envelope",
    "ondiag_lower_envelope",
    "poisson_tail_bound",
    "cramer_rate",
    "cramer_sum_bound",
]


class DomainError(ValueError):
    """Argument outside the function's domain."""


class PreconditionError(ValueError):
    """A required parameter relation does not hold."""


class NumericalSupError(RuntimeError):
    """Supremum refinement failed; carries the last bracket examined."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(f"{message} (last bracket: [{bracket[0]:.6g}, {bracket[1]:.6g}])")
        self.bracket = bracket


def correction_h(r):
    """Logarithmic correction factor log(e + 1/r); equals 1 at r = infinity.

    Non-increasing, valued in [1, inf). Accepts scalars or arrays; r <= 0 is a
    domain error.
    """
    arr = np.asarray(r, dtype=float)
    if np.any(arr <= 0) or np.any(np.isnan(arr)):
        raise DomainError(f"correction_h requires r > 0, got {r!r}")
    out = np.log(np.e + 1.0 / arr)
    return float(out) if np.isscalar(r) or arr.ndim == 0 else out


@dataclass(frozen=True)
class ScaleSpec:
    """Volume/walk exponents plus the time-scale function Psi.

    Psi defaults to the pure power r**beta. A tabulated Psi may be supplied as
    (psi_r, psi_v), strictly increasing positive arrays, and is interpolated
    log-log with power-law extrapolation from the end segments.
    """

    alpha: float
    beta: float
    epsilon_h: float = 1e-2
    psi_r: np.ndarray | None = field(default=None, repr=False)
    psi_v: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.alpha > 0):
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not (self.beta > 1):
            raise DomainError(f"beta must be > 1, got {self.beta}")
        if not (self.epsilon_h > 0):
            raise DomainError(f"epsilon_h must be > 0, got {self.epsilon_h}")
        if (self.psi_r is None) != (self.psi_v is None):
            raise DomainError("psi_r and psi_v must be supplied together")
        if self.psi_r is not None:
            r = np.asarray(self.psi_r, dtype=float)
            v = np.asarray(self.psi_v, dtype=float)
            if r.ndim != 1 or r.shape != v.shape or r.size < 2:
                raise DomainError("tabulated Psi needs two 1-d arrays of equal length >= 2")
            if np.any(r <= 0) or np.any(v <= 0):
                raise DomainError("tabulated Psi must be strictly positive")
            if np.any(np.diff(r) <= 0) or np.any(np.diff(v) <= 0):
                raise DomainError("tabulated Psi must be strictly increasing")
            object.__setattr__(self, "psi_r", r)
            object.__setattr__(self, "psi_v", v)

    @property
    def C_h(self) -> float:
        return 2.0 + math.exp(-1.0) / self.epsilon_h

    def psi(self, r):
        if self.psi_r is None:
            return np.asarray(r, dtype=float) ** self.beta
        return np.exp(np.interp(np.log(r), np.log(self.psi_r), np.log(self.psi_v)))

    def psi_inverse(self, y):
        """Inverse of Psi (exact for the power law, log-log interp otherwise)."""
        y = np.asarray(y, dtype=float)
        if self.psi_r is None:
            return y ** (1.0 / self.beta)
        # np.interp clamps outside the table; extend with the end-segment slopes
        lv = np.log(self.psi_v)
        lr = np.log(self.psi_r)
        out = np.interp(np.log(y), lv, lr)
        lo_slope = (lr[1] - lr[0]) / (lv[1] - lv[0])
        hi_slope = (lr[-1] - lr[-2]) / (lv[-1] - lv[-2])
        ly = np.log(y)
        out = np.where(ly < lv[0], lr[0] + (ly - lv[0]) * lo_slope, out)
        out = np.where(ly > lv[-1], lr[-1] + (ly - lv[-1]) * hi_slope, out)
        return np.exp(out)


@dataclass(frozen=True)
class EnvelopeParams:
    """Polylog correction exponents and free multiplicative constants.

    The constants C1, C2, C3 are reporting metadata (never fitted); kappa_u is
    derived as (2 + beta)(kappa_el + kappa_eu) for the heat-kernel envelopes.
    """

    kappa_du: float = 0.0
    kappa_el: float = 0.0
    kappa_eu: float = 0.0
    kappa_vu: float = 0.0
    C1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0

    def __post_init__(self):
        for name in ("kappa_du", "kappa_el", "kappa_eu", "kappa_vu"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        for name in ("C1", "C2", "C3"):
            if not (getattr(self, name) > 0):
                raise DomainError(f"{name} must be > 0")

    def kappa_u(self, beta: float) -> float:
        return (2.0 + beta) * (self.kappa_el + self.kappa_eu)

    def metadata(self, spec: ScaleSpec) -> dict:
        return {
            "C1": self.C1,
            "C2": self.C2,
            "C3": self.C3,
            "kappa_u": self.kappa_u(spec.beta),
            "epsilon_h": spec.epsilon_h,
            "C_h": spec.C_h,
        }


@dataclass(frozen=True)
class CramerInput:
    """Moment-condition constants for the explicit large-deviation rate."""

    beta_exp: float
    delta: float
    K: float
    M: float
    p: float

    def __post_init__(self):
        for name in ("beta_exp", "delta", "K", "M"):
            if not (getattr(self, name) > 0):
                raise DomainError(f"{name} must be > 0")
        if not (self.p > 1):
            raise DomainError(f"p must be > 1, got {self.p}")


def phi0_closed(r: float, t: float, beta: float) -> float:
    """Closed form c_beta * (r**beta / t)**(1/(beta-1)) of the kappa=0 supremum.

    c_beta = beta**(-beta/(beta-1)) * (beta-1).
    """
    if t <= 0:
        raise DomainError(f"t must be > 0, got {t}")
    if beta <= 1:
        raise DomainError(f"beta must be > 1, got {beta}")
    if r < 0:
        raise DomainError(f"r must be >= 0, got {r}")
    if r == 0:
        return 0.0
    c_beta = beta ** (-beta / (beta - 1.0)) * (beta - 1.0)
    return c_beta * (r**beta / t) ** (1.0 / (beta - 1.0))


_GRID_POINTS = 512
_GRID_DECADES = 8  # grid spans [t*1e-8, t*1e8]
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f: Callable[[float], float], lo: float, hi: float, rel_tol: float = 1e-10):
    """Golden-section maximization of f over log-spaced [lo, hi]."""
    la, lb = math.log(lo), math.log(hi)
    x1 = lb - _GOLDEN * (lb - la)
    x2 = la + _GOLDEN * (lb - la)
    f1, f2 = f(math.exp(x1)), f(math.exp(x2))
    for _ in range(200):
        if not (math.isfinite(f1) or math.isfinite(f2)):
            raise NumericalSupError("objective not finite during refinement", (math.exp(la), math.exp(lb)))
        if lb - la <= rel_tol:  # log-interval width == relative s tolerance
            break
        if f1 >= f2:
            lb, x2, f2 = x2, x1, f1
            x1 = lb - _GOLDEN * (lb - la)
            f1 = f(math.exp(x1))
        else:
            la, x1, f1 = x1, x2, f2
            x2 = la + _GOLDEN * (lb - la)
            f2 = f(math.exp(x2))
    else:
        raise NumericalSupError("refinement did not converge", (math.exp(la), math.exp(lb)))
    return max(f1, f2)


def _sup_on_geometric_grid(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    extend_lo: bool = True,
    extend_hi: bool = True,
) -> float:
    # widen the window when the argmax sits on an extendable endpoint: the
    # optimizer can fall many decades away from t at extreme r/t ratios
    for _ in range(8):
        s_grid = np.geomspace(lo, hi, _GRID_POINTS)
        vals = np.array([f(s) for s in s_grid])
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise NumericalSupError(
                "objective not finite on scan grid",
                (float(s_grid[max(bad - 1, 0)]), float(s_grid[min(bad + 1, len(s_grid) - 1)])),
            )
        i = int(np.argmax(vals))
        if i == 0 and extend_lo:
            lo /= 10.0**_GRID_DECADES
            continue
        if i == len(s_grid) - 1 and extend_hi:
            hi *= 10.0**_GRID_DECADES
            continue
        lo_b = float(s_grid[max(i - 1, 0)])
        hi_b = float(s_grid[min(i + 1, len(s_grid) - 1)])
        if lo_b == hi_b:
            return float(vals[i])
        return max(float(vals[i]), _golden_max(f, lo_b, hi_b))
    raise NumericalSupError("argmax kept escaping the scan window", (lo, hi))


def phi_kappa_numeric(r: float, t: float, kappa: float, spec: ScaleSpec) -> float:
    """Numeric supremum over s of r / Psi^{-1}(s h(s)^kappa) - t / s.

    Zero at r = 0; the supremum is always >= 0 since the objective vanishes as
    s -> infinity.
    """
    if t <= 0:
        raise DomainError(f"t must be > 0, got {t}")
    if r < 0:
        raise DomainError(f"r must be >= 0, got {r}")
    if kappa < 0:
        raise DomainError(f"kappa must be >= 0, got {kappa}")
    if r == 0:
        return 0.0

    def objective(s: float) -> float:
        denom = float(spec.psi_inverse(s * correction_h(s) ** kappa))
        return r / denom - t / s

    scale = 10.0**_GRID_DECADES
    return max(0.0, _sup_on_geometric_grid(objective, t / scale, t * scale))


def psi_kappa_inverse(t: float, kappa: float, spec: ScaleSpec) -> float:
    """sup_{s in (0, t]} Psi^{-1}(s h(s)^kappa) + Psi^{-1}(t).

    Requires epsilon_h * kappa < 1 (otherwise the correction can outgrow the
    inverse and the supremum loses meaning).
    """
    if t <= 0:
        raise DomainError(f"t must be > 0, got {t}")
    if kappa < 0:
        raise DomainError(f"kappa must be >= 0, got {kappa}")
    if spec.epsilon_h * kappa >= 1:
        raise PreconditionError(
            f"epsilon_h * kappa must be < 1, got {spec.epsilon_h} * {kappa} = {spec.epsilon_h * kappa}"
        )

    def objective(s: float) -> float:
        return float(spec.psi_inverse(s * correction_h(s) ** kappa))

    scale = 10.0**_GRID_DECADES
    sup_term = _sup_on_geometric_grid(objective, t / scale, t, extend_hi=False)
    return sup_term + float(spec.psi_inverse(t))


def uhk_envelope(t: float, d: float, spec: ScaleSpec, p: EnvelopeParams) -> float:
    """Off-diagonal upper heat-kernel envelope.

    C1 * t^{-alpha/beta} * log(e + 1/t)^{kappa'_du}
       * exp(-C2 * (d^beta / t)^{1/(beta-1)} * log(e + d/t)^{-kappa_u/(beta-1)})
    with kappa'_du = (kappa_du + kappa_u * alpha/beta) / (1 - epsilon_h * kappa_u).
    """
    if t <= 0:
        raise DomainError(f"t must be > 0, got {t}")
    if d < 0:
        raise DomainError(f"d must be >= 0, got {d}")
    kappa_u = p.kappa_u(spec.beta)
    if spec.epsilon_h * kappa_u >= 1:
        raise PreconditionError(
            f"epsilon_h * kappa_u must be < 1, got {spec.epsilon_h * kappa_u:.6g}"
        )
    a_over_b = spec.alpha / spec.beta
    kappa_prime_du = (p.kappa_du + kappa_u * a_over_b) / (1.0 - spec.epsilon_h * kappa_u)
    ondiag = p.C1 * t**-a_over_b * correction_h(t) ** kappa_prime_du
    if d == 0:
        return float(ondiag)
    exponent = (d**spec.beta / t) ** (1.0 / (spec.beta - 1.0))
    log_corr = correction_h(t / d) ** (-kappa_u / (spec.beta - 1.0))
    return float(ondiag * math.exp(-p.C2 * exponent * log_corr))


def ondiag_lower_envelope(t: float, spec: ScaleSpec, p: EnvelopeParams) -> float:
    """On-diagonal lower envelope C3 * t^{-alpha/beta} * log(e + 1/t)^{-kappa_dl},
    kappa_dl = kappa_vu + kappa_u * alpha/beta."""
    if t <= 0:
        raise DomainError(f"t must be > 0, got {t}")
    kappa_dl = p.kappa_vu + p.kappa_u(spec.beta) * spec.alpha / spec.beta
    return float(p.C3 * t ** (-spec.alpha / spec.beta) * correction_h(t) ** (-kappa_dl))


def poisson_tail_bound(lam: float, a: float) -> float:
    """Chernoff bound exp(lam * (a - a*log(a) - 1)) on Poisson tails.

    Bounds P[Z <= a*lam] for a in (0,1) and P[Z >= a*lam] for a > 1; a = 1 is
    excluded (the exponent vanishes there and the bound is vacuous).
    """
    if lam <= 0:
        raise DomainError(f"lam must be > 0, got {lam}")
    if a <= 0 or a == 1:
        raise DomainError(f"a must lie in (0,1) or (1,inf), got {a}")
    return math.exp(lam * (a - a * math.log(a) - 1.0))


def cramer_rate(c: CramerInput) -> float:
    """Explicit exponential rate lambda for sums of i.i.d. variables satisfying
    E[e^{beta Y+}] <= K, E[(Y-)^p] <= M, E[Y] <= -delta.

    lambda = min(delta * beta^2 / (8K) * exp(-2*beta*a - K), beta) with
    a = (2M/delta)^{1/(p-1)}; the resulting bound is
    P[sum_{j<=n} Y_j >= -delta*n/4] <= exp(-delta*lambda*n/8).
    """
    a = (2.0 * c.M / c.delta) ** (1.0 / (c.p - 1.0))
    lam = c.delta * c.beta_exp**2 / (8.0 * c.K) * math.exp(-2.0 * c.beta_exp * a - c.K)
    return min(lam, c.beta_exp)


def cramer_sum_bound(c: CramerInput, n: int) -> float:
    """The bound exp(-delta * lambda * n / 8) evaluated at sample size n."""
    if n <= 0:
        raise DomainError(f"n must be positive, got {n}")
    return math.exp(-c.delta * cramer_rate(c) * n / 8.0)
