"""Projection of raw extremal-coefficient estimates onto the valid cone.

Valid coefficient vectors are exactly those of the form c = A beta with
beta >= 0 and A[J, K] = 1{J & K != 0}.  Raw estimates are projected by
ridge-regularized non-negative least squares and then re-standardized so
that every singleton coefficient equals one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import MAX_DIM, MobiusWeights, SubsetFamily, canonical_masks, full_mask, popcount
from .errors import DimensionTooLarge, InputError
from .lp import nnls

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1e-6
FULL_COLUMN_MAX_DIM = 14
SINGLETON_WEIGHT = 1e3


@dataclass
class Calibration:
    family: SubsetFamily
    beta: MobiusWeights
    residual: float
    raw: SubsetFamily
    lam: float

    @property
    def max_change(self) -> float:
        return float(np.abs(self.family.values - self.raw.values).max(initial=0.0))

    def __iter__(self):
        # allows ``family, beta, residual = project_to_consistent(...)``
        return iter((self.family, self.beta, self.residual))

    def to_json(self) -> dict:
        out = self.family.to_json()
        out["lambda"] = self.lam
        out["residual"] = self.residual
        out["max_change"] = self.max_change
        return out


def design_columns(family: SubsetFamily) -> np.ndarray:
    """Column masks K for the projection design.

    All non-empty subsets up to d = 14.  Beyond that the columns are the
    singletons, the full set and the constrained subsets themselves, which
    keeps the design linear in the family size.
    """
    d = family.d
    if d <= FULL_COLUMN_MAX_DIM:
        return canonical_masks(d)
    cols = {1 << j for j in range(d)} | {full_mask(d)} | set(family.masks)
    return np.array(sorted(cols, key=lambda m: (popcount(m), m)), dtype=np.int64)


def design_matrix(rows, cols) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    return ((rows[:, None] & cols[None, :]) != 0).astype(float)


def project_to_consistent(raw: SubsetFamily, lam: float = DEFAULT_LAMBDA) -> Calibration:
    """Nearest valid coefficient vector to ``raw`` in ridge-NNLS sense.

    Solves min ||W (t - A beta)||^2 + lam ||beta||^2 over beta >= 0, where
    t equals the raw targets except that singleton targets are one, and W
    up-weights singleton rows.  Singleton Möbius mass is then topped up
    so all fitted marginals equal the largest one, and everything is
    divided by that common value: singletons come out exactly one and the
    output is still exactly A beta.

    Parameters
    ----------
    raw : SubsetFamily
        Estimates, usually built with ``strict=False``.  Must contain every
        singleton.
    lam : float
        Ridge parameter, >= 0.

    Returns
    -------
    Calibration
        Unpacks as ``(family, beta, residual)``; ``residual`` is the
        weighted fit residual before re-standardization.
    """
    d = raw.d
    if d > MAX_DIM:
        raise DimensionTooLarge(f"d = {d} exceeds the supported maximum {MAX_DIM}")
    if lam < 0:
        raise InputError("lambda must be non-negative")
    masks = np.array(raw.masks, dtype=np.int64)
    single = np.array([popcount(int(m)) == 1 for m in masks])
    if single.sum() != d:
        raise InputError("raw family must include every singleton")

    cols = design_columns(raw)
    A = design_matrix(masks, cols)
    target = raw.values.copy()
    target[single] = 1.0
    w = np.where(single, SINGLETON_WEIGHT, 1.0)
    beta_c, _ = nnls(A * w[:, None], target * w, ridge=lam)
    fit = A @ beta_c
    residual = float(np.linalg.norm(w * (target - fit)))

    # Equalize the marginals by topping up singleton mass, then divide by the
    # common value; the result stays exactly of the form A beta.
    marg = fit[single]
    scale = float(marg.max())
    if scale <= 0:
        raise InputError("projection collapsed to zero; raw targets are degenerate")
    single_cols = {int(m): i for i, m in enumerate(cols) if popcount(int(m)) == 1}
    for m, v in zip(masks[single], marg):
        beta_c[single_cols[int(m)]] += scale - v
    beta_c /= scale
    values = design_matrix(masks, cols) @ beta_c
    values[single] = 1.0
    beta = np.zeros(1 << d)
    beta[cols] = beta_c
    out = SubsetFamily(d, zip(masks.tolist(), values), strict=True, tol=1e-7)
    log.debug("calibrated %d coefficients, residual %.3g", len(out), residual)
    return Calibration(out, MobiusWeights(d, beta), residual, raw, lam)
