"""Tawn-Molchanov lower bound for balanced portfolios.

For w = 1 the infimum of rho over spectral measures meeting the
constraints is attained on the Tawn-Molchanov support {1_K / |K|}, which
turns the problem into an LP over Möbius weights beta_K:

    minimize  sum_K |K|^(1/xi) beta_K
    s.t.      sum_K 1{K & J != 0} beta_K = c_J   for J in the family,
              beta >= 0.

The module also evaluates arbitrary discrete spectral measures and checks
KKT optimality certificates for the underlying semi-infinite programs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import mpmath
import numpy as np
from scipy.stats import qmc

from . import closed_form
from .core import (
    MobiusWeights,
    SubsetFamily,
    canonical_masks,
    check_consistency,
    full_mask,
    mask_to_indices,
    popcounts,
    subset_key,
)
from .errors import DimensionTooLarge, Infeasible, InconsistentInput, InputError, NumericalFailure
from .lp import LpSolution, StandardLp, Status, solve

DEFAULT_MAX_DIM = 14
HARD_MAX_DIM = 20
SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteSpectralMeasure:
    """Finitely many atoms ``u`` on the unit l1-simplex with masses ``h``."""

    d: int
    u: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        h = np.asarray(self.h, dtype=float).ravel()
        if u.shape != (h.size, self.d):
            raise InputError(f"atoms have shape {u.shape}, expected ({h.size}, {self.d})")
        if np.any(u < -SIMPLEX_TOL) or np.any(np.abs(u.sum(axis=1) - 1.0) > 1e-12 * max(1, self.d)):
            raise InputError("every atom must lie on the unit simplex")
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise InputError("atom masses must be finite and non-negative")
        object.__setattr__(self, "u", np.clip(u, 0.0, None))
        object.__setattr__(self, "h", h)

    def __eq__(self, other):
        return (
            isinstance(other, DiscreteSpectralMeasure)
            and self.d == other.d
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.h, other.h)
        )

    __hash__ = None

    @property
    def total_mass(self) -> float:
        return float(self.h.sum())

    def __len__(self):
        return self.h.size

    @classmethod
    def tawn_molchanov(cls, beta: MobiusWeights, tol: float = 0.0) -> "DiscreteSpectralMeasure":
        """Atoms 1_K / |K| with mass |K| beta_K."""
        support = beta.support(tol)
        d = beta.d
        u = np.zeros((len(support), d))
        h = np.zeros(len(support))
        for i, (K, b) in enumerate(support.items()):
            idx = [j - 1 for j in mask_to_indices(K)]
            u[i, idx] = 1.0 / len(idx)
            h[i] = len(idx) * b
        return cls(d, u, h)

    @classmethod
    def complete_dependence(cls, d: int) -> "DiscreteSpectralMeasure":
        return cls(d, np.full((1, d), 1.0 / d), np.array([float(d)]))

    @classmethod
    def independence(cls, d: int) -> "DiscreteSpectralMeasure":
        return cls(d, np.eye(d), np.ones(d))

    def to_json(self) -> dict:
        return {"d": self.d, "atoms": [{"u": list(map(float, ui)), "h": float(hi)} for ui, hi in zip(self.u, self.h)]}

    @classmethod
    def from_json(cls, obj) -> "DiscreteSpectralMeasure":
        if isinstance(obj, str):
            obj = json.loads(obj)
        atoms = obj["atoms"]
        d = int(obj["d"])
        u = np.array([a["u"] for a in atoms], dtype=float).reshape(len(atoms), d)
        h = np.array([a["h"] for a in atoms], dtype=float)
        return cls(d, u, h)


def max_over(u: np.ndarray, mask: int) -> np.ndarray:
    """max_{j in J} u_j for each row of ``u``."""
    idx = [j - 1 for j in mask_to_indices(mask)]
    return u[:, idx].max(axis=1)


def constraint_matrix(u: np.ndarray, masks: Iterable[int]) -> np.ndarray:
    """a(u) for each row: columns are max_{j in J} u_j over the family."""
    return np.column_stack([max_over(u, m) for m in masks])


def kernel(u: np.ndarray, xi: float, weights=None) -> np.ndarray:
    """b(u) = (sum_j w_j u_j^xi)^(1/xi) for each row of ``u``."""
    w = np.ones(u.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    return (np.power(u, xi) @ w) ** (1.0 / xi)


def evaluate_discrete_measure(H: DiscreteSpectralMeasure, weights, xi: float, family: SubsetFamily | None = None):
    """rho_w of a discrete measure and, given a family, its constraint residuals.

    Returns
    -------
    rho : float
    residuals : dict
        mask -> (sum_k h_k max_{j in J} u_jk) - c_J; empty without a family.
    """
    if weights is None:
        weights = np.ones(H.d)
    rho = float(H.h @ kernel(H.u, xi, weights))
    residuals = {}
    if family is not None:
        if family.d != H.d:
            raise InputError("family and measure dimensions differ")
        for m, c in zip(family.masks, family.values):
            residuals[m] = float(H.h @ max_over(H.u, m)) - float(c)
    return rho, residuals


def tm_columns(d: int) -> np.ndarray:
    return canonical_masks(d)


def _check_dim(d, max_dim):
    cap = min(max_dim, HARD_MAX_DIM)
    if d > cap:
        raise DimensionTooLarge(f"d = {d} needs {2**d - 1} LP columns; cap is d <= {cap}")


def build_tm_lp(family: SubsetFamily, xi: float, max_dim: int = DEFAULT_MAX_DIM) -> StandardLp:
    """Standard-form TM LP; columns are all non-empty K in (popcount, mask) order."""
    d = family.d
    _check_dim(d, max_dim)
    if not 0 < xi <= 1:
        raise InputError(f"xi must lie in (0, 1], got {xi}")
    cols = tm_columns(d)
    sizes = popcounts(d)[cols]
    rows = np.array(family.masks, dtype=np.int64)
    A = ((rows[:, None] & cols[None, :]) != 0).astype(float)
    with np.errstate(over="ignore"):
        c = sizes.astype(float) ** (1.0 / xi)
    if not np.all(np.isfinite(c)):
        raise NumericalFailure(
            f"|K|^(1/xi) overflows double precision at d = {d}, xi = {xi:g}; "
            f"xi must exceed {math.log(d) / math.log(np.finfo(float).max):.3g}"
        )
    return StandardLp(c, A, family.values, labels=tuple(int(k) for k in cols))


@dataclass
class TmResult:
    rho: float
    xi: float
    beta: MobiusWeights
    measure: DiscreteSpectralMeasure
    family: SubsetFamily
    lp: LpSolution = field(repr=False)

    @property
    def chi(self) -> float:
        return self.rho**self.xi

    @property
    def dual(self) -> np.ndarray:
        """Multipliers x_J (one per family member, family order)."""
        return self.lp.duals

    def certificate(self) -> "KktCertificate":
        return KktCertificate(self.family, self.dual.copy(), self.measure, side="lower")


def solve_lower_bound(family: SubsetFamily, xi: float, max_dim: int = DEFAULT_MAX_DIM, check: bool = True) -> TmResult:
    """Minimal rho over all spectral measures meeting the family's constraints.

    Raises
    ------
    InconsistentInput
        If an instantiated consistency inequality fails.
    Infeasible
        If the LP has no solution, meaning no spectral measure fits the targets.
    """
    if check:
        bad = check_consistency(family)
        if bad:
            worst = min(bad, key=lambda v: v.slack)
            raise InconsistentInput(
                f"{len(bad)} consistency inequalities fail (worst at J={subset_key(worst.mask) if worst.mask else '[]'}, "
                f"slack {worst.slack:.3g}); calibrate the coefficients first"
            )
    lp = build_tm_lp(family, xi, max_dim)
    sol = solve(lp)
    if sol.status is Status.INFEASIBLE:
        raise Infeasible(
            "no spectral measure meets these extremal-coefficient targets; "
            "run check_consistency or calibrate the family"
        )
    if sol.status is not Status.OPTIMAL:
        raise NumericalFailure(f"TM LP finished with status {sol.status.value}")
    d = family.d
    beta = np.zeros(1 << d)
    beta[np.array(lp.labels)] = sol.x
    weights = MobiusWeights(d, beta)
    measure = DiscreteSpectralMeasure.tawn_molchanov(weights)
    return TmResult(sol.objective, xi, weights, measure, family, sol)


# -- certificates -----------------------------------------------------------------


@dataclass
class KktCertificate:
    """Primal multipliers x (family order) plus a discrete dual measure.

    ``side="lower"`` certifies the minimum of rho (the semi-infinite
    constraint reads a(u).x <= b(u)); ``side="upper"`` the maximum
    (a(u).x >= b(u)).
    """

    family: SubsetFamily
    x: np.ndarray
    measure: DiscreteSpectralMeasure
    side: str = "lower"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.shape != (len(self.family),):
            raise InputError("certificate vector must have one entry per constraint")
        if self.side not in ("lower", "upper"):
            raise InputError("side must be 'lower' or 'upper'")


@dataclass
class KktReport:
    dual_feasibility: float
    complementary_slackness: float
    primal_feasibility: float
    primal_value: float
    dual_value: float
    worst_point: np.ndarray
    samples: int
    tol: float

    @property
    def certified(self) -> bool:
        return (
            self.dual_feasibility <= self.tol
            and self.complementary_slackness <= self.tol
            and self.primal_feasibility >= -self.tol
        )

    def to_json(self) -> dict:
        return {
            "certified": self.certified,
            "dual_feasibility": self.dual_feasibility,
            "complementary_slackness": self.complementary_slackness,
            "primal_feasibility": self.primal_feasibility,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "samples": self.samples,
        }


def simplex_sample(d: int, n: int, seed: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy points on the unit simplex.

    Scrambled Sobol points are pushed through the exponential spacing map,
    which sends the uniform cube to the uniform simplex.
    """
    if n <= 0:
        return np.zeros((0, d))
    sob = qmc.Sobol(d, scramble=True, seed=seed)
    m = max(0, math.ceil(math.log2(n)))
    pts = sob.random_base2(m)[:n]
    e = -np.log1p(-np.clip(pts, 0.0, 1.0 - 1e-16))
    return e / e.sum(axis=1, keepdims=True)


def tm_support_points(d: int) -> np.ndarray:
    cols = tm_columns(d)
    u = ((cols[:, None] >> np.arange(d)[None, :]) & 1).astype(float)
    return u / u.sum(axis=1, keepdims=True)


def verify_kkt(
    family: SubsetFamily,
    xi: float,
    certificate: KktCertificate,
    primal_feasibility_samples: int = 100_000,
    tol: float = 1e-9,
    seed: int = 0,
) -> KktReport:
    """Check the three KKT conditions of a certificate.

    Dual feasibility and complementary slackness are exact; primal
    feasibility over the simplex is checked on a Sobol sample plus the
    simplex vertices and (for d <= 14) every Tawn-Molchanov support point.
    Residuals are scaled by max(1, |c.x|).
    """
    masks = family.masks
    c = family.values
    x = certificate.x
    H = certificate.measure
    scale = max(1.0, abs(float(c @ x)))

    a_atoms = constraint_matrix(H.u, masks)
    dual_res = float(np.abs(H.h @ a_atoms - c).max()) / scale

    b_atoms = kernel(H.u, xi)
    active = H.h > 0
    slack_atoms = a_atoms @ x - b_atoms
    comp_res = float(np.abs(slack_atoms[active]).max(initial=0.0)) / scale

    pts = [np.eye(family.d), simplex_sample(family.d, primal_feasibility_samples, seed)]
    if family.d <= DEFAULT_MAX_DIM:
        pts.append(tm_support_points(family.d))
    worst_val = np.inf
    worst_pt = None
    for chunk in pts:
        for start in range(0, chunk.shape[0], 20_000):
            u = chunk[start : start + 20_000]
            margin = kernel(u, xi) - constraint_matrix(u, masks) @ x
            if certificate.side == "upper":
                margin = -margin
            i = int(np.argmin(margin))
            if margin[i] < worst_val:
                worst_val = float(margin[i])
                worst_pt = u[i].copy()
    return KktReport(
        dual_feasibility=dual_res,
        complementary_slackness=comp_res,
        primal_feasibility=worst_val / scale,
        primal_value=float(c @ x),
        dual_value=float(H.h @ b_atoms),
        worst_point=worst_pt,
        samples=sum(p.shape[0] for p in pts),
        tol=tol,
    )


def dvariate_lower_certificate(d: int, xi: float, theta: float) -> KktCertificate:
    """Explicit optimal pair for the single d-variate lower bound.

    Multipliers: (k+1)^(1/xi) - k^(1/xi) on singletons and
    (k+1) k^(1/xi) - k (k+1)^(1/xi) on the full set, where
    d/(k+1) <= theta < d/k.  The measure spreads the Möbius weight evenly
    over all subsets of sizes k and k+1.
    """
    if d > DEFAULT_MAX_DIM:
        raise DimensionTooLarge("the explicit measure enumerates subsets; d <= 14 required")
    family = SubsetFamily.single_dvariate(d, theta)
    p = 1.0 / xi
    k = int(min(max(math.floor(d / theta), 1), d - 1))
    lam = (theta / d - 1.0 / (k + 1)) / (1.0 / k - 1.0 / (k + 1))
    x = np.empty(len(family))
    for i, m in enumerate(family.masks):
        if m == full_mask(d):
            x[i] = (k + 1) * k**p - k * (k + 1) ** p
        else:
            x[i] = (k + 1) ** p - k**p
    beta = np.zeros(1 << d)
    sizes = popcounts(d)
    beta[sizes == k] = lam * d / k / math.comb(d, k)
    beta[sizes == k + 1] = (1 - lam) * d / (k + 1) / math.comb(d, k + 1)
    measure = DiscreteSpectralMeasure.tawn_molchanov(MobiusWeights(d, beta))
    return KktCertificate(family, x, measure, side="lower")


def dvariate_upper_certificate(d: int, xi: float, theta: float) -> KktCertificate:
    """Explicit optimal pair for the single d-variate upper bound (theta < d).

    The measure has d atoms, each with theta/d on its own coordinate and
    the rest spread evenly; the multipliers are the tangent line of the
    per-atom value function at theta.
    """
    if not 1 <= theta < d:
        raise InputError("the upper certificate needs 1 <= theta < d")
    family = SubsetFamily.single_dvariate(d, theta)
    cst = (d - 1) ** (1 - xi)

    def per_atom(z):
        return (z**xi + cst * (d - z) ** xi) ** (1 / xi) / d

    inner = theta**xi + cst * (d - theta) ** xi
    deriv = inner ** (1 / xi - 1) * (theta ** (xi - 1) - cst * (d - theta) ** (xi - 1)) / d
    val = per_atom(theta)
    x = np.where(np.array(family.masks) == full_mask(d), d * deriv, val - theta * deriv)
    u = np.full((d, d), (d - theta) / (d * (d - 1)))
    np.fill_diagonal(u, theta / d)
    return KktCertificate(family, x, DiscreteSpectralMeasure(d, u, np.ones(d)), side="upper")


# -- explicit dual for the complete-family problem --------------------------------


def _tm_dual_by_size(d: int, xi: float) -> list[float]:
    # x~_J depends only on |J|: sum_l C(s, l) (-1)^(l+1) (d - s + l)^(1/xi).
    # The alternating sum cancels heavily, so it is evaluated in extended precision.
    with mpmath.workdps(60):
        p = mpmath.mpf(1) / mpmath.mpf(xi)
        out = [0.0]
        for s in range(1, d + 1):
            acc = mpmath.mpf(0)
            for l in range(s + 1):
                acc += mpmath.binomial(s, l) * (-1) ** (l + 1) * mpmath.power(d - s + l, p)
            out.append(float(acc))
    return out


def tm_dual_vector(d: int, xi: float) -> np.ndarray:
    """Optimal multipliers x~_J for the problem constrained on every subset.

    Dense over masks (entry 0 unused).
    """
    if d > 15:
        raise DimensionTooLarge("tm_dual_vector supports d <= 15")
    by_size = _tm_dual_by_size(d, xi)
    out = np.array([by_size[s] for s in popcounts(d)], dtype=float)
    out[0] = 0.0
    return out


def ordered_increment_form(u: np.ndarray, xi: float) -> np.ndarray:
    """sum_j (d+1-j)^(1/xi) (u_(j) - u_(j-1)) with ascending order statistics."""
    u = np.atleast_2d(u)
    d = u.shape[1]
    s = np.sort(u, axis=1)
    inc = np.diff(np.concatenate([np.zeros((s.shape[0], 1)), s], axis=1), axis=1)
    coef = (d + 1 - np.arange(1, d + 1)) ** (1.0 / xi)
    return inc @ coef


def dual_form(u: np.ndarray, xi: float, xtilde: np.ndarray | None = None) -> np.ndarray:
    """sum over all non-empty J of max_{j in J} u_j * x~_J."""
    u = np.atleast_2d(u)
    d = u.shape[1]
    if xtilde is None:
        xtilde = tm_dual_vector(d, xi)
    masks = range(1, 1 << d)
    return constraint_matrix(u, masks) @ xtilde[1:]
