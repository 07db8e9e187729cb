"""Exact samplers driven by a discrete spectral measure.

Random numbers come from numpy's counter-based Philox generator.  Draws are
split into fixed-size blocks and block ``i`` uses the ``i``-th child of
``SeedSequence(seed)``, so results depend only on (seed, n, H, xi) and not
on how many worker threads produce the blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core import SubsetId
from .errors import InputError
from .tm_lp import DiscreteSpectralMeasure, max_over

BLOCK = 1 << 16
RADIUS_CAP = 1e15


def theta_of_measure(H: DiscreteSpectralMeasure, J) -> float:
    """Extremal coefficient sum_k h_k max_{j in J} u_jk."""
    mask = J.mask if isinstance(J, SubsetId) else int(J)
    if mask <= 0 or mask >> H.d:
        raise InputError(f"subset mask {mask} invalid for d = {H.d}")
    return float(H.h @ max_over(H.u, mask))


def block_generators(seed, n: int, block: int = BLOCK) -> list[tuple[int, int, np.random.Generator]]:
    """(start, stop, generator) per block of draws."""
    nblocks = max(1, -(-n // block))
    children = np.random.SeedSequence(seed).spawn(nblocks)
    out = []
    for i, ss in enumerate(children):
        start = i * block
        stop = min(n, start + block)
        out.append((start, stop, np.random.Generator(np.random.Philox(ss))))
    return out


def _run_blocks(fn, n, d, seed, workers):
    out = np.empty((n, d))
    jobs = block_generators(seed, n)

    def task(job):
        start, stop, rng = job
        out[start:stop] = fn(stop - start, rng)

    if workers is None or workers <= 1:
        for job in jobs:
            task(job)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(task, jobs))
    return out


def _check(H, n):
    if not isinstance(H, DiscreteSpectralMeasure):
        raise InputError("a DiscreteSpectralMeasure is required")
    if n < 0:
        raise InputError("n must be non-negative")
    if H.total_mass <= 0:
        raise InputError("measure has zero mass")


def sample_max_stable(H: DiscreteSpectralMeasure, n: int, seed=0, workers: int | None = None) -> np.ndarray:
    """n draws of Y_j = max_k h_k u_jk / E_k with E_k iid standard exponential.

    The joint CDF is exp(-sum_k h_k max_j u_jk / y_j); margins are unit
    Fréchet when the measure satisfies the marginal constraints.
    """
    _check(H, n)
    scaled = H.h[:, None] * H.u  # (K, d)

    def draw(m, rng):
        E = rng.standard_exponential((m, len(H)))
        Y = np.zeros((m, H.d))
        for k in range(len(H)):
            np.maximum(Y, scaled[k] / E[:, k : k + 1], out=Y)
        return Y

    return _run_blocks(draw, n, H.d, seed, workers)


def sample_rv_portfolio(
    H: DiscreteSpectralMeasure, xi: float, n: int, seed=0, workers: int | None = None
) -> np.ndarray:
    """n draws of X = Z^xi where Z = R u_K H(S+), R ~ Pareto(1), P(K = k) = h_k / H(S+).

    Each Z_j has P(Z_j > z) = sum_k h_k u_jk / z for large z, which is 1/z
    under the marginal constraints, so X_j is regularly varying with tail
    index xi and the extremal coefficients of X are those of H.  Radii are
    capped at 1e15.
    """
    _check(H, n)
    if not 0 < xi <= 1:
        raise InputError(f"xi must lie in (0, 1], got {xi}")
    total = H.total_mass
    p = H.h / total

    def draw(m, rng):
        R = np.minimum(1.0 / (1.0 - rng.random(m)), RADIUS_CAP)
        k = rng.choice(len(H), size=m, p=p)
        Z = (R * total)[:, None] * H.u[k]
        return Z**xi

    return _run_blocks(draw, n, H.d, seed, workers)
