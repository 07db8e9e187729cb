"""Bounds for the market-plus-sectors model.

The portfolio is a max-linear mixture: with probability weight beta all
coordinates move together (the market), and otherwise the coordinates of
each block J_i follow an independent sector model with its own d_i-variate
extremal coefficient.  For a balanced portfolio

    rho = beta d^(1/xi) + (1 - beta) sum_i B(d_i, xi, theta_i)

where B is the closed-form lower or upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import closed_form
from .core import SubsetFamily, SubsetId, full_mask, mask_to_indices, popcount
from .errors import InputError, OutOfRange
from .tm_lp import DiscreteSpectralMeasure

_TOL = 1e-12


@dataclass(frozen=True)
class SectorPartition:
    d: int
    blocks: tuple[SubsetId, ...]
    beta: float
    sector_thetas: tuple[float, ...]

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, SubsetId) else SubsetId.of(b, self.d) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "sector_thetas", tuple(float(t) for t in self.sector_thetas))
        seen = 0
        for b in blocks:
            if b.mask & seen:
                raise InputError("sector blocks must be pairwise disjoint")
            seen |= b.mask
        if seen != full_mask(self.d):
            raise InputError("sector blocks must cover every asset")
        if len(self.sector_thetas) != len(blocks):
            raise InputError("one sector coefficient per block is required")
        if not 0 <= self.beta < 1:
            raise OutOfRange(f"market share beta must lie in [0, 1), got {self.beta}")
        for b, t in zip(blocks, self.sector_thetas):
            if not 1 - _TOL <= t <= b.size + _TOL:
                raise OutOfRange(f"sector coefficient {t} outside [1, {b.size}] for block {b}")

    @property
    def sizes(self) -> list[int]:
        return [b.size for b in self.blocks]

    @classmethod
    def from_json(cls, obj: dict) -> "SectorPartition":
        blocks = obj["blocks"]
        d = int(obj.get("d", sum(len(b) for b in blocks)))
        return cls(d, tuple(SubsetId.of(b, d) for b in blocks), float(obj["beta"]), tuple(obj["thetas"]))

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "blocks": [b.to_json() for b in self.blocks],
            "beta": self.beta,
            "thetas": list(self.sector_thetas),
        }


def sector_theta_from_portfolio(theta_J: float, beta: float, size: int | None = None) -> float:
    """Sector-level coefficient (theta_J - beta) / (1 - beta)."""
    if not 0 <= beta < 1:
        raise OutOfRange(f"beta must lie in [0, 1), got {beta}")
    t = (theta_J - beta) / (1.0 - beta)
    upper = size if size is not None else np.inf
    if not 1 - 1e-9 <= t <= upper + 1e-9:
        raise OutOfRange(f"implied sector coefficient {t:.6g} outside [1, {upper}]")
    return float(min(max(t, 1.0), upper))


def market_limit(d: int, xi: float) -> float:
    """rho at beta = 1 (complete dependence): d^(1/xi)."""
    return float(d) ** (1.0 / xi)


def _sector_bound(size, xi, theta, side):
    if size == 1:
        return 1.0
    if side == "lower":
        return closed_form.lower_bound_L(size, xi, theta)
    return closed_form.upper_bound_U(size, xi, theta)


def composite_bound(partition: SectorPartition, xi: float, side: str = "lower") -> float:
    """Lower or upper bound on rho for the balanced portfolio."""
    if side not in ("lower", "upper"):
        raise InputError("side must be 'lower' or 'upper'")
    if not 0 < xi <= 1:
        raise InputError(f"xi must lie in (0, 1], got {xi}")
    b = partition.beta
    sectors = sum(
        _sector_bound(s, xi, t, side) for s, t in zip(partition.sizes, partition.sector_thetas)
    )
    return b * market_limit(partition.d, xi) + (1.0 - b) * sectors


def composite_bounds(partition: SectorPartition, xi: float) -> closed_form.BoundsResult:
    return closed_form.BoundsResult(
        composite_bound(partition, xi, "lower"),
        composite_bound(partition, xi, "upper"),
        xi,
        closed_form.Method.MKT_SECTORS,
    )


def forward_coefficients(beta: float, thetas: Sequence[float]) -> tuple[float, list[float]]:
    """Portfolio coefficients implied by (beta, sector thetas).

    Returns (c0, [c_i]) with c0 = theta(D) = beta + (1 - beta) sum theta_i
    and c_i = theta(J_i) = beta + (1 - beta) theta_i.
    """
    t = np.asarray(thetas, dtype=float)
    return float(beta + (1 - beta) * t.sum()), list(beta + (1 - beta) * t)


def solve_beta(c0: float, ci: Sequence[float], sizes: Sequence[int] | None = None) -> tuple[float, list[float]]:
    """Recover (beta, sector thetas) from theta(D) and the per-sector theta(J_i)."""
    c = np.asarray(ci, dtype=float)
    k = c.size
    if k < 2:
        raise InputError("at least two sectors are needed to identify beta")
    beta = (c.sum() - c0) / (k - 1)
    if abs(beta) < 1e-12:
        beta = 0.0
    if not 0 <= beta < 1:
        raise OutOfRange(f"implied market share {beta:.6g} outside [0, 1)")
    if sizes is None:
        sizes = [None] * k
    elif len(sizes) != k:
        raise InputError("one size per sector is required")
    thetas = [sector_theta_from_portfolio(cc, beta, s) for cc, s in zip(c, sizes)]
    return float(beta), thetas


def implied_overall_theta(partition: SectorPartition) -> float:
    return forward_coefficients(partition.beta, partition.sector_thetas)[0]


def embed_measure(sector: DiscreteSpectralMeasure, block: SubsetId, d: int) -> DiscreteSpectralMeasure:
    """Pad a sector measure with zeros on the coordinates outside ``block``."""
    idx = [j - 1 for j in block.indices]
    if sector.d != len(idx):
        raise InputError("sector measure dimension does not match block size")
    u = np.zeros((len(sector), d))
    u[:, idx] = sector.u
    return DiscreteSpectralMeasure(d, u, sector.h.copy())


def composite_measure(
    partition: SectorPartition, sectors: Sequence[DiscreteSpectralMeasure]
) -> DiscreteSpectralMeasure:
    """beta * (market atom) + (1 - beta) * (embedded sector measures)."""
    d = partition.d
    market = DiscreteSpectralMeasure.complete_dependence(d)
    us = [market.u]
    hs = [partition.beta * market.h]
    for block, m in zip(partition.blocks, sectors):
        e = embed_measure(m, block, d)
        us.append(e.u)
        hs.append((1 - partition.beta) * e.h)
    return DiscreteSpectralMeasure(d, np.vstack(us), np.concatenate(hs))
