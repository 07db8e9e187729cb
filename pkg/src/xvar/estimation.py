"""From loss samples to model inputs.

Covers CSV ingestion, the self-normalized extremal-coefficient estimator,
generalized Pareto (GP) tail fits with an optional common tail index,
scale-balanced weights, empirical quantiles and return-level tables.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .core import MAX_DIM, SubsetFamily, check_consistency, full_mask, popcount, zeta_subsets
from .errors import (
    DataError,
    DegenerateSample,
    InputError,
    NoExceedances,
    NonConvergence,
    NumericalFailure,
    ParseError,
    QuantileBelowThreshold,
)

log = logging.getLogger(__name__)

DEFAULT_Q0 = 0.98
MIN_EXCEEDANCES = 30
XI_RANGE = (-0.5, 1.0)
TRADING_DAYS = 252


# -- data ------------------------------------------------------------------------


@dataclass
class LossPanel:
    """n x d matrix of losses (negative returns) with column labels."""

    observations: np.ndarray
    labels: list[str] | None = None
    timestamps: list | None = None

    def __post_init__(self):
        X = np.asarray(self.observations, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InputError("a loss panel needs at least one row and one column")
        if not np.all(np.isfinite(X)):
            raise InputError("loss panel contains non-finite entries")
        self.observations = X
        if self.labels is None:
            self.labels = [f"X{j + 1}" for j in range(X.shape[1])]
        if len(self.labels) != X.shape[1]:
            raise InputError("one label per column is required")
        if self.timestamps is not None and len(self.timestamps) != X.shape[0]:
            raise InputError("one timestamp per row is required")

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def d(self) -> int:
        return self.observations.shape[1]

    def scaled(self, weights) -> "LossPanel":
        """Columns multiplied by ``weights``."""
        w = np.asarray(weights, dtype=float)
        return LossPanel(self.observations * w, list(self.labels), self.timestamps)


def _parse_date(text):
    try:
        return date.fromisoformat(text)
    except ValueError:
        return datetime.fromisoformat(text)


def read_loss_csv(path: str | os.PathLike) -> LossPanel:
    """Read a loss CSV: header of asset names, optional leading ``date`` column.

    Rows with an empty or NA field are dropped (and counted in the log);
    any other unparsable field raises ``ParseError`` with its line number.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty", 1) from None
        header = [h.strip() for h in header]
        has_date = bool(header) and header[0].lower() == "date"
        labels = header[1:] if has_date else header
        if not labels:
            raise ParseError("no asset columns in header", 1)
        rows, stamps = [], []
        dropped = 0
        for row in reader:
            line = reader.line_num
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line)
            fields = row[1:] if has_date else row
            if any(f.strip() == "" or f.strip().upper() in ("NA", "NAN") for f in fields):
                dropped += 1
                continue
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                bad = next(f for f in fields if not _is_float(f))
                raise ParseError(f"non-numeric value {bad!r}", line) from None
            if not all(math.isfinite(v) for v in vals):
                dropped += 1
                continue
            if has_date:
                try:
                    stamps.append(_parse_date(row[0].strip()))
                except ValueError:
                    raise ParseError(f"bad ISO-8601 date {row[0]!r}", line) from None
            rows.append(vals)
    if dropped:
        log.info("dropped %d rows with missing values", dropped)
    if not rows:
        raise ParseError("no complete data rows", 2)
    return LossPanel(np.array(rows), labels, stamps if has_date else None)


def _is_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_loss_csv(path, panel: LossPanel, precision: int = 10) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = (["date"] if panel.timestamps is not None else []) + list(panel.labels)
        w.writerow(head)
        for i, row in enumerate(panel.observations):
            vals = [f"{v:.{precision}g}" for v in row]
            if panel.timestamps is not None:
                vals.insert(0, panel.timestamps[i].isoformat())
            w.writerow(vals)


# -- quantiles and weights ---------------------------------------------------------


def empirical_var(series, q: float) -> float:
    """Smallest order statistic whose empirical CDF is at least ``q``."""
    x = np.sort(np.asarray(series, dtype=float).ravel())
    if x.size == 0:
        raise InputError("empty series")
    if not 0 <= q <= 1:
        raise InputError("q must lie in [0, 1]")
    k = math.ceil(q * x.size - 1e-9)
    return float(x[min(max(k, 1), x.size) - 1])


def scale_balanced_weights(sigma) -> np.ndarray:
    """w_j proportional to 1/sigma_j, normalized to sum to one."""
    s = np.asarray(sigma, dtype=float)
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise InputError("scales must be positive and finite")
    inv = 1.0 / s
    return inv / inv.sum()


# -- extremal coefficients -------------------------------------------------------


def default_family_masks(d: int) -> list[int]:
    """Singletons, all pairs and the full set."""
    masks = [1 << j for j in range(d)]
    masks += [(1 << i) | (1 << j) for i in range(d) for j in range(i + 1, d)]
    if d > 2:
        masks.append(full_mask(d))
    return masks


def _as_masks(family, d):
    if family is None:
        return default_family_masks(d)
    out = []
    for item in family:
        if hasattr(item, "mask"):
            out.append(int(item.mask))
        elif isinstance(item, (list, tuple)):
            out.append(sum(1 << (j - 1) for j in item))
        else:
            out.append(int(item))
    return out


def exceedance_masks(X: np.ndarray, thresholds) -> np.ndarray:
    """Per-row bitmask of columns strictly above their threshold."""
    exc = X > np.asarray(thresholds, dtype=float)
    return exc @ (1 << np.arange(X.shape[1], dtype=np.int64))


def estimate_extremal_coeffs(
    panel: LossPanel,
    q0: float = DEFAULT_Q0,
    family: Iterable | None = None,
    per_asset: bool = False,
    reference: int = 0,
) -> SubsetFamily:
    """Self-normalized estimates theta(J) = #{max_J X > x} / #{X_ref > x}.

    The threshold x is the ``q0`` empirical quantile of the reference
    column, shared by every column.  With ``per_asset=True`` each column
    uses its own ``q0`` quantile instead.  Columns are taken as given, so
    scale them first (``panel.scaled``) for a scale-balanced portfolio.

    Because the estimate is the coefficient vector of an empirical
    measure, it always satisfies every consistency inequality; this is
    asserted on each call.
    """
    X = panel.observations
    n, d = X.shape
    if d > MAX_DIM:
        raise InputError(f"d = {d} exceeds {MAX_DIM}")
    if not 0 < q0 < 1:
        raise InputError("q0 must lie in (0, 1)")
    if per_asset:
        thr = np.array([empirical_var(X[:, j], q0) for j in range(d)])
    else:
        thr = np.full(d, empirical_var(X[:, reference], q0))
    rowmask = exceedance_masks(X, thr)
    denom = int(np.count_nonzero(rowmask & (1 << reference)))
    if denom == 0:
        raise NoExceedances(f"no observation of column {reference + 1} exceeds its threshold")
    counts = np.bincount(rowmask, minlength=1 << d).astype(float)
    below = zeta_subsets(counts, d)  # rows whose exceedance set lies inside S
    full = full_mask(d)
    masks = _as_masks(family, d)
    theta = {m: (n - below[full ^ m]) / denom for m in masks}
    out = SubsetFamily(d, theta, strict=False)
    bad = check_consistency(out, tol=1e-12)
    if bad:  # cannot happen for counts of a single sample; guards against regressions
        raise NumericalFailure(f"estimator produced {len(bad)} inconsistent coefficients")
    return out


# -- generalized Pareto fits ----------------------------------------------------------


@dataclass
class GpdFit:
    xi: float
    sigma: float
    se_xi: float
    se_sigma: float
    loglik: float
    n: int

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in ("xi", "sigma", "se_xi", "se_sigma", "loglik", "n")}


def gpd_loglik(y: np.ndarray, xi: float, sigma: float) -> float:
    """GP log-likelihood; -inf outside the support."""
    if sigma <= 0:
        return -np.inf
    z = xi * y / sigma
    if np.any(z <= -1):
        return -np.inf
    if abs(xi) < 1e-12:
        return float(-y.size * np.log(sigma) - y.sum() / sigma)
    return float(-y.size * np.log(sigma) - (1.0 + 1.0 / xi) * np.log1p(z).sum())


def _sigma_hat(y, xi):
    """Maximizer in sigma for fixed xi: root of (1+xi) sum y/(sigma+xi y) = n."""
    n = y.size
    if abs(xi) < 1e-12:
        return float(y.mean())

    def g(s):
        return (1.0 + xi) * np.sum(y / (s + xi * y)) - n

    ymax = float(y.max())
    lo = max(-xi * ymax, 0.0) * (1 + 1e-12) + 1e-300
    if g(lo) <= 0:
        lo = max(-xi * ymax, 0.0) + 1e-12 * ymax
    hi = max(ymax, float(y.mean())) * 2.0 + 1.0
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise NonConvergence("could not bracket the GP scale")
    if g(lo) <= 0:
        return lo
    return optimize.brentq(g, lo, hi, xtol=1e-14 * hi, rtol=1e-14, maxiter=500)


def _profile(y, xi):
    s = _sigma_hat(y, xi)
    return gpd_loglik(y, xi, s), s


def _maximize_profile(fn, lo=XI_RANGE[0], hi=XI_RANGE[1]):
    """Grid scan then bounded Brent refinement of a 1-d profile likelihood."""
    eps = 1e-6
    grid = np.linspace(lo + eps, hi - eps, 41)
    vals = np.array([fn(x) for x in grid])
    if not np.any(np.isfinite(vals)):
        raise NonConvergence("GP profile likelihood is not finite anywhere")
    i = int(np.nanargmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda x: -fn(x), bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    if not res.success:
        raise NonConvergence(f"profile maximization failed: {res.message}")
    x = float(res.x)
    return (x, -float(res.fun)) if -res.fun >= vals[i] else (float(grid[i]), float(vals[i]))


def _observed_information(fn, theta, rel=1e-4):
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    h = rel * np.maximum(np.abs(theta), 1e-2)
    H = np.empty((k, k))
    f0 = fn(theta)
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = h[i]
            ej[j] = h[j]
            if i == j:
                v = (fn(theta + ei) - 2 * f0 + fn(theta - ei)) / h[i] ** 2
            else:
                v = (fn(theta + ei + ej) - fn(theta + ei - ej) - fn(theta - ei + ej) + fn(theta - ei - ej)) / (
                    4 * h[i] * h[j]
                )
            H[i, j] = H[j, i] = -v
    return H


def _standard_errors(info):
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return np.full(info.shape[0], np.nan)
    d = np.diag(cov)
    return np.where(d > 0, np.sqrt(np.abs(d)), np.nan)


def _check_exceedances(y):
    y = np.asarray(y, dtype=float).ravel()
    if y.size < MIN_EXCEEDANCES:
        raise DataError(f"need at least {MIN_EXCEEDANCES} exceedances, got {y.size}")
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise InputError("exceedances must be finite and non-negative")
    if np.ptp(y) == 0:
        raise DegenerateSample("all exceedances are equal")
    return y


def fit_gpd(exceedances) -> GpdFit:
    """Maximum-likelihood GP fit with xi restricted to (-0.5, 1).

    The scale is profiled out exactly (one-dimensional root of its score
    equation); standard errors come from a finite-difference observed
    information matrix.
    """
    y = _check_exceedances(exceedances)
    xi, ll = _maximize_profile(lambda x: _profile(y, x)[0])
    sigma = _sigma_hat(y, xi)
    info = _observed_information(lambda t: gpd_loglik(y, t[0], t[1]), [xi, sigma])
    se = _standard_errors(info)
    return GpdFit(xi, sigma, float(se[0]), float(se[1]), gpd_loglik(y, xi, sigma), int(y.size))


@dataclass
class TailModel:
    """Common-index GP tails: P(X_j > x) ~ p0 (1 + xi (x - u_j) / sigma_j)^(-1/xi)."""

    xi: float
    sigma: np.ndarray
    p0: float
    thresholds: np.ndarray
    labels: list[str] | None = None
    se_xi: float = float("nan")
    se_sigma: np.ndarray | None = None
    loglik: float = float("nan")

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        if np.any(self.sigma <= 0):
            raise InputError("GP scales must be positive")
        if not 0 < self.p0 < 1:
            raise InputError("p0 must lie in (0, 1)")

    @property
    def weights(self) -> np.ndarray:
        return scale_balanced_weights(self.sigma)

    def to_json(self) -> dict:
        out = {
            "xi": self.xi,
            "se_xi": self.se_xi,
            "sigma": self.sigma.tolist(),
            "p0": self.p0,
            "thresholds": self.thresholds.tolist(),
            "weights": self.weights.tolist(),
        }
        if self.se_sigma is not None:
            out["se_sigma"] = list(map(float, self.se_sigma))
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out


def panel_exceedances(panel: LossPanel, q0: float):
    """Per-column (threshold, exceedances over it) at the ``q0`` quantile."""
    out = []
    for j in range(panel.d):
        x = panel.observations[:, j]
        u = empirical_var(x, q0)
        out.append((u, x[x > u] - u))
    return out


def common_xi_fit(panel: LossPanel, q0: float = DEFAULT_Q0) -> TailModel:
    """Joint GP fit with one tail index shared by all columns and free scales."""
    parts = panel_exceedances(panel, q0)
    ys = []
    for j, (_, y) in enumerate(parts):
        if y.size == 0:
            raise NoExceedances(f"column {panel.labels[j]} has no exceedances above its {q0} quantile")
        ys.append(_check_exceedances(y))

    def profile(xi):
        return sum(_profile(y, xi)[0] for y in ys)

    xi, ll = _maximize_profile(profile)
    sigma = np.array([_sigma_hat(y, xi) for y in ys])

    def full_ll(t):
        return sum(gpd_loglik(y, t[0], s) for y, s in zip(ys, t[1:]))

    info = _observed_information(full_ll, np.concatenate([[xi], sigma]))
    se = _standard_errors(info)
    return TailModel(
        xi=xi,
        sigma=sigma,
        p0=1.0 - q0,
        thresholds=np.array([u for u, _ in parts]),
        labels=list(panel.labels),
        se_xi=float(se[0]),
        se_sigma=se[1:],
        loglik=float(ll),
    )


# -- VaR baselines and return levels -------------------------------------------------


def baseline_var_gp(model: TailModel, w1: float, q, asset: int = 0):
    """GP approximation of VaR_q(w_1 X_1): w_1 (sigma_1/xi) ((1-q)/p0)^(-xi).

    Accepts scalar or array ``q``.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q <= 1 - model.p0) or np.any(q >= 1):
        raise QuantileBelowThreshold(f"q must lie in (1 - p0, 1) = ({1 - model.p0:g}, 1)")
    if model.xi <= 0:
        raise InputError("the GP baseline needs a positive tail index")
    s = model.sigma[asset]
    out = w1 * (s / model.xi) * ((1.0 - q) / model.p0) ** (-model.xi)
    return float(out) if out.ndim == 0 else out


def return_level_q(years, trading_days: int = TRADING_DAYS):
    """q = 1 - 1/(trading_days * m)."""
    return 1.0 - 1.0 / (trading_days * np.asarray(years, dtype=float))


def return_level_bounds(
    model: TailModel,
    chi_bounds: dict[str, float],
    years: Sequence[float] = (10, 100, 1000),
    trading_days: int = TRADING_DAYS,
    w1: float | None = None,
) -> list[dict]:
    """One row per horizon m: chi times the GP baseline at q = 1 - 1/(252 m)."""
    if w1 is None:
        w1 = float(model.weights[0])
    rows = []
    for m in years:
        q = float(return_level_q(m, trading_days))
        base = baseline_var_gp(model, w1, q)
        row = {"years": m, "q": q, "baseline": base}
        for name, chi in chi_bounds.items():
            row[name] = float(chi) * base
        rows.append(row)
    return rows


def var_curves(
    chi_bounds: dict[str, float],
    alphas,
    model: TailModel | None = None,
    w1: float | None = None,
    baseline_series=None,
    portfolio_series=None,
) -> dict[str, list]:
    """VaR-bound curves over exceedance probabilities alpha = 1 - q.

    Bounds are computed against the GP baseline (needs ``model``) and/or the
    empirical quantile of ``baseline_series`` (the scaled reference column).
    The empirical portfolio VaR is included when ``portfolio_series`` is given.
    """
    alphas = np.asarray(alphas, dtype=float)
    q = 1.0 - alphas
    out: dict[str, list] = {"alpha": alphas.tolist()}
    if model is not None:
        base = np.atleast_1d(baseline_var_gp(model, model.weights[0] if w1 is None else w1, q))
        out["gp_baseline"] = base.tolist()
        for name, chi in chi_bounds.items():
            out[f"gp_{name}"] = (chi * base).tolist()
    if baseline_series is not None:
        base = np.array([empirical_var(baseline_series, qq) for qq in q])
        out["empirical_baseline"] = base.tolist()
        for name, chi in chi_bounds.items():
            out[f"empirical_{name}"] = (chi * base).tolist()
    if portfolio_series is not None:
        out["empirical_portfolio"] = [empirical_var(portfolio_series, qq) for qq in q]
    return out
