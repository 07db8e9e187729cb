"""Exact bounds on the extreme-VaR functional rho and conversions to VaR.

All bounds here are on ``rho``; extreme VaR (the limit of
VaR_q(S) / VaR_q(X_1)) is ``chi = rho ** xi``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InputError, InvalidXi, OutOfRange

_EDGE_TOL = 1e-12


class Method(str, enum.Enum):
    FRECHET = "frechet"
    CLOSED_FORM_DVARIATE = "closed_form_dvariate"
    TM_LP = "tm_lp"
    MKT_SECTORS = "mkt_sectors"


@dataclass(frozen=True)
class BoundsResult:
    rho_lower: float
    rho_upper: float
    xi: float
    method: Method
    certificate: Any = field(default=None, compare=False, repr=False)
    upper_method: Method | None = None

    def __post_init__(self):
        if self.rho_lower > self.rho_upper * (1 + 1e-12) + 1e-12:
            raise ValueError(f"rho_lower {self.rho_lower} exceeds rho_upper {self.rho_upper}")

    @property
    def chi_lower(self) -> float:
        return chi_from_rho(self.rho_lower, self.xi)

    @property
    def chi_upper(self) -> float:
        return chi_from_rho(self.rho_upper, self.xi)

    def to_json(self) -> dict:
        out = {
            "rho_lower": self.rho_lower,
            "rho_upper": self.rho_upper,
            "chi_lower": self.chi_lower,
            "chi_upper": self.chi_upper,
            "xi": self.xi,
            "method": Method(self.method).value,
        }
        if self.upper_method is not None:
            out["upper_method"] = Method(self.upper_method).value
        return out


def _check_xi(xi, upper=None):
    if not xi > 0:
        raise InvalidXi(f"tail index must be positive, got {xi}")
    if upper is not None and xi > upper:
        raise InvalidXi(f"tail index must be at most {upper}, got {xi}")


def frechet_bounds(weights, xi: float) -> tuple[float, float]:
    """Dependence-free bounds (rho_lower, rho_upper).

    For 0 < xi <= 1 the lower bound is attained under asymptotic
    independence and the upper under complete dependence; for xi > 1 the
    roles swap.
    """
    _check_xi(xi)
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w <= 0):
        raise InputError("weights must be a non-empty vector of positive numbers")
    indep = float(np.sum(w ** (1.0 / xi)))
    comon = float(np.sum(w) ** (1.0 / xi))
    if xi <= 1:
        return indep, comon
    return comon, indep


def _check_dvariate(d, xi, theta):
    if int(d) != d or d < 2:
        raise InputError(f"dimension must be an integer >= 2, got {d}")
    _check_xi(xi, upper=1.0)
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 1 - _EDGE_TOL) or np.any(theta > d + _EDGE_TOL * d):
        raise OutOfRange(f"theta must lie in [1, {d}]")
    return int(d), np.clip(theta, 1.0, float(d))


def lower_bound_L(d: int, xi: float, theta):
    """Sharp lower bound on rho given only the d-variate coefficient theta.

    Piecewise linear in theta, with kinks at theta = d/k.  Accepts a scalar
    or an array of theta values.
    """
    d, t = _check_dvariate(d, xi, theta)
    p = 1.0 / xi - 1.0
    k = np.clip(np.floor(d / t), 1, d - 1)
    lam = (t / d - 1.0 / (k + 1)) / (1.0 / k - 1.0 / (k + 1))
    out = d * (lam * k**p + (1.0 - lam) * (k + 1) ** p)
    return float(out) if out.ndim == 0 else out


def upper_bound_U(d: int, xi: float, theta):
    """Sharp upper bound on rho given only the d-variate coefficient theta."""
    d, t = _check_dvariate(d, xi, theta)
    inner = t**xi + (d - 1) ** (1.0 - xi) * np.power(d - t, xi)
    out = inner ** (1.0 / xi)
    return float(out) if out.ndim == 0 else out


def chi_from_rho(rho, xi: float):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise InputError("rho must be non-negative")
    out = rho**xi
    return float(out) if out.ndim == 0 else out


def var_bound(chi, baseline_var):
    """First-order approximation VaR_q(S) ~ chi * VaR_q(w_1 X_1)."""
    base = np.asarray(baseline_var, dtype=float)
    if np.any(base < 0):
        raise InputError("baseline VaR must be non-negative")
    out = np.asarray(chi, dtype=float) * base
    return float(out) if out.ndim == 0 else out


def frechet_result(d: int, xi: float) -> BoundsResult:
    lo, hi = frechet_bounds(np.ones(d), xi)
    return BoundsResult(lo, hi, xi, Method.FRECHET)


def dvariate_bounds(d: int, xi: float, theta: float) -> BoundsResult:
    """Both closed-form bounds for a balanced portfolio."""
    if d == 1:
        return BoundsResult(1.0, 1.0, xi, Method.CLOSED_FORM_DVARIATE)
    return BoundsResult(
        lower_bound_L(d, xi, theta), upper_bound_U(d, xi, theta), xi, Method.CLOSED_FORM_DVARIATE
    )


def dvariate_curve(d: int, xi: float, n: int = 200) -> np.ndarray:
    """Rows (theta, chi_lower, chi_upper) on an even grid over [1, d]."""
    theta = np.linspace(1.0, float(d), n)
    lo = chi_from_rho(lower_bound_L(d, xi, theta), xi)
    hi = chi_from_rho(upper_bound_U(d, xi, theta), xi)
    return np.column_stack([theta, lo, hi])
