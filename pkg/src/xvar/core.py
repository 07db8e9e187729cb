"""Subset algebra over {1..d} and extremal-coefficient containers.

Subsets are encoded as bitmasks: bit ``j`` set means asset ``j + 1`` is in
the set.  Dense vectors indexed by mask (length ``2**d``, entry 0 reserved
for the empty set) are used wherever a full lattice is needed; the two
lattice transforms below do the heavy lifting for Möbius inversion and for
reconstructing coefficients from Möbius weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import IncompleteInput, InconsistentInput, InputError

TOL = 1e-9
MAX_DIM = 20
# Above this, inclusion-exclusion is replaced by the O(d 2^d) transform.
DIRECT_INVERSION_MAX_DIM = 12


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def popcounts(d: int) -> np.ndarray:
    """Popcount of every mask in ``range(2**d)``."""
    counts = np.zeros(1 << d, dtype=np.int64)
    for j in range(d):
        counts[1 << j : 1 << (j + 1)] = counts[: 1 << j] + 1
    return counts


def full_mask(d: int) -> int:
    return (1 << d) - 1


def canonical_masks(d: int) -> np.ndarray:
    """All non-empty masks ordered by (popcount, mask)."""
    masks = np.arange(1, 1 << d, dtype=np.int64)
    counts = popcounts(d)[1:]
    return masks[np.lexsort((masks, counts))]


def indices_to_mask(indices: Iterable[int], d: int) -> int:
    mask = 0
    for i in indices:
        i = int(i)
        if not 1 <= i <= d:
            raise InputError(f"asset index {i} outside 1..{d}")
        mask |= 1 << (i - 1)
    return mask


def mask_to_indices(mask: int) -> tuple[int, ...]:
    out = []
    j = 0
    while mask:
        if mask & 1:
            out.append(j + 1)
        mask >>= 1
        j += 1
    return tuple(out)


def subset_key(mask: int) -> str:
    """JSON object key for a subset, e.g. ``"[1,3,7]"``."""
    return "[" + ",".join(str(i) for i in mask_to_indices(mask)) + "]"


def parse_subset_key(key, d: int) -> int:
    if isinstance(key, str):
        key = json.loads(key)
    return indices_to_mask(key, d)


@dataclass(frozen=True)
class SubsetId:
    """A non-empty index set J, stored as a bitmask."""

    mask: int
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise InputError("dimension must be at least 1")
        if self.mask <= 0 or self.mask >> self.d:
            raise InputError(f"mask {self.mask} is not a non-empty subset of 1..{self.d}")

    @classmethod
    def of(cls, indices: Iterable[int], d: int) -> "SubsetId":
        return cls(indices_to_mask(indices, d), d)

    @classmethod
    def full(cls, d: int) -> "SubsetId":
        return cls(full_mask(d), d)

    @classmethod
    def singleton(cls, j: int, d: int) -> "SubsetId":
        return cls(1 << (j - 1), d)

    @property
    def size(self) -> int:
        return popcount(self.mask)

    @property
    def indices(self) -> tuple[int, ...]:
        return mask_to_indices(self.mask)

    def sort_key(self):
        return (self.size, self.mask)

    def issubset(self, other: "SubsetId") -> bool:
        return self.mask & ~other.mask == 0

    def intersects(self, other: "SubsetId") -> bool:
        return bool(self.mask & other.mask)

    def to_json(self) -> list[int]:
        return list(self.indices)

    def __str__(self):
        return "{" + ",".join(map(str, self.indices)) + "}"


class ExtremalCoefficients:
    """Full or partial map J -> theta(J).

    Values are stored keyed by mask.  ``complete`` is true iff all
    ``2**d - 1`` non-empty subsets are present.
    """

    def __init__(self, d: int, values: Mapping[int, float]):
        if d < 1:
            raise InputError("dimension must be at least 1")
        self.d = int(d)
        clean = {}
        for key, v in values.items():
            mask = key.mask if isinstance(key, SubsetId) else int(key)
            SubsetId(mask, self.d)
            v = float(v)
            if not math.isfinite(v):
                raise InputError(f"non-finite coefficient for {subset_key(mask)}")
            clean[mask] = v
        self.values = dict(sorted(clean.items(), key=lambda kv: (popcount(kv[0]), kv[0])))

    @property
    def complete(self) -> bool:
        return len(self.values) == (1 << self.d) - 1

    def __getitem__(self, key) -> float:
        mask = key.mask if isinstance(key, SubsetId) else int(key)
        return self.values[mask]

    def __contains__(self, key) -> bool:
        mask = key.mask if isinstance(key, SubsetId) else int(key)
        return mask in self.values

    def __len__(self):
        return len(self.values)

    def dense(self) -> np.ndarray:
        """Vector of length ``2**d`` indexed by mask; requires completeness."""
        if not self.complete:
            raise IncompleteInput(
                f"{len(self.values)} of {(1 << self.d) - 1} subsets present; a complete set is required"
            )
        out = np.zeros(1 << self.d)
        for mask, v in self.values.items():
            out[mask] = v
        return out

    @classmethod
    def from_dense(cls, d: int, theta: np.ndarray) -> "ExtremalCoefficients":
        return cls(d, {m: theta[m] for m in range(1, 1 << d)})

    @classmethod
    def from_function(cls, d: int, fn) -> "ExtremalCoefficients":
        """Build a complete set from ``fn(mask) -> theta``."""
        return cls(d, {m: fn(m) for m in range(1, 1 << d)})

    def to_family(self, strict: bool = True) -> "SubsetFamily":
        return SubsetFamily(self.d, self.values.items(), strict=strict)

    def __repr__(self):
        return f"ExtremalCoefficients(d={self.d}, n={len(self.values)}, complete={self.complete})"


class SubsetFamily:
    """A constraint family: subsets J with target constants c_J.

    With ``strict=True`` (the default) the standardization invariants are
    enforced: every singleton present with c = 1 and each c_J in [1, |J|].
    Raw estimates are built with ``strict=False`` and only need finite,
    non-negative targets and no duplicates.
    """

    def __init__(self, d: int, entries, strict: bool = True, tol: float = TOL):
        if d < 1:
            raise InputError("dimension must be at least 1")
        self.d = int(d)
        if isinstance(entries, Mapping):
            entries = entries.items()
        seen = {}
        for key, c in entries:
            if isinstance(key, SubsetId):
                mask = key.mask
            elif isinstance(key, (list, tuple, str)):
                mask = parse_subset_key(key, self.d)
            else:
                mask = int(key)
            SubsetId(mask, self.d)
            if mask in seen:
                raise InputError(f"duplicate subset {subset_key(mask)}")
            c = float(c)
            if not math.isfinite(c) or c < 0:
                raise InputError(f"target for {subset_key(mask)} must be finite and non-negative")
            seen[mask] = c
        order = sorted(seen, key=lambda m: (popcount(m), m))
        self._masks = tuple(order)
        self._values = tuple(seen[m] for m in order)
        self._index = {m: i for i, m in enumerate(order)}
        self.strict = strict
        if strict:
            self._validate(tol)

    def _validate(self, tol):
        for j in range(self.d):
            m = 1 << j
            if m not in self._index:
                raise InputError(f"singleton {{{j + 1}}} missing from constraint family")
            if abs(self._values[self._index[m]] - 1.0) > tol:
                raise InputError(f"singleton {{{j + 1}}} must have c = 1")
        for m, c in zip(self._masks, self._values):
            if c < 1 - tol or c > popcount(m) + tol:
                raise InputError(f"c{subset_key(m)} = {c} outside [1, {popcount(m)}]")

    # -- construction helpers -------------------------------------------------
    @classmethod
    def single_dvariate(cls, d: int, theta: float) -> "SubsetFamily":
        entries = {1 << j: 1.0 for j in range(d)}
        entries[full_mask(d)] = theta
        return cls(d, entries)

    @classmethod
    def from_pairs(cls, matrix, full: float | None = None, strict: bool = True) -> "SubsetFamily":
        """Singletons plus all pairs from the upper triangle of ``matrix``."""
        matrix = np.asarray(matrix, dtype=float)
        d = matrix.shape[0]
        entries = {1 << j: 1.0 for j in range(d)}
        for i in range(d):
            for j in range(i + 1, d):
                entries[(1 << i) | (1 << j)] = matrix[i, j]
        if full is not None and d > 2:
            entries[full_mask(d)] = full
        return cls(d, entries, strict=strict)

    # -- access -----------------------------------------------------------------
    @property
    def masks(self) -> tuple[int, ...]:
        return self._masks

    @property
    def values(self) -> np.ndarray:
        return np.array(self._values)

    @property
    def subsets(self) -> list[SubsetId]:
        return [SubsetId(m, self.d) for m in self._masks]

    def __len__(self):
        return len(self._masks)

    def __iter__(self) -> Iterator[tuple[SubsetId, float]]:
        for m, c in zip(self._masks, self._values):
            yield SubsetId(m, self.d), c

    def __contains__(self, key) -> bool:
        mask = key.mask if isinstance(key, SubsetId) else int(key)
        return mask in self._index

    def __getitem__(self, key) -> float:
        mask = key.mask if isinstance(key, SubsetId) else int(key)
        return self._values[self._index[mask]]

    def get(self, key, default=None):
        try:
            return self[key]
        except KeyError:
            return default

    def coefficients(self) -> ExtremalCoefficients:
        return ExtremalCoefficients(self.d, dict(zip(self._masks, self._values)))

    def is_single_dvariate(self) -> bool:
        """True when the family is exactly the singletons plus the full set."""
        want = {1 << j for j in range(self.d)} | {full_mask(self.d)}
        return set(self._masks) == want and self.d >= 2

    def with_values(self, values, strict: bool | None = None) -> "SubsetFamily":
        return SubsetFamily(
            self.d, zip(self._masks, values), strict=self.strict if strict is None else strict
        )

    def restrict(self, masks: Iterable[int]) -> "SubsetFamily":
        keep = set(masks)
        return SubsetFamily(
            self.d, [(m, c) for m, c in zip(self._masks, self._values) if m in keep], strict=self.strict
        )

    def to_json(self) -> dict:
        return {"d": self.d, "theta": {subset_key(m): c for m, c in zip(self._masks, self._values)}}

    @classmethod
    def from_json(cls, obj, strict: bool = True) -> "SubsetFamily":
        """Accepts ``{"d": d, "theta": {"[1,2]": c, ...}}``.

        ``d`` may be omitted when it can be read off the largest index.
        """
        theta = obj["theta"]
        d = obj.get("d")
        if d is None:
            d = max(max(json.loads(k) if isinstance(k, str) else k) for k in theta)
        return cls(int(d), [(k, v) for k, v in theta.items()], strict=strict)

    def __repr__(self):
        return f"SubsetFamily(d={self.d}, size={len(self)})"

    def __eq__(self, other):
        return (
            isinstance(other, SubsetFamily)
            and self.d == other.d
            and self._masks == other._masks
            and self._values == other._values
        )


# -- lattice transforms --------------------------------------------------------


def zeta_subsets(f: np.ndarray, d: int) -> np.ndarray:
    """g(S) = sum over T subset of S of f(T), for all masks S."""
    g = np.array(f, dtype=float, copy=True)
    for i in range(d):
        view = g.reshape(-1, 2, 1 << i)
        view[:, 1, :] += view[:, 0, :]
    return g


def mobius_subsets(g: np.ndarray, d: int) -> np.ndarray:
    """Inverse of :func:`zeta_subsets`."""
    f = np.array(g, dtype=float, copy=True)
    for i in range(d):
        view = f.reshape(-1, 2, 1 << i)
        view[:, 1, :] -= view[:, 0, :]
    return f


@dataclass(frozen=True)
class MobiusWeights:
    """Non-negative weights beta_K of a valid coefficient vector.

    ``beta`` is dense over masks (entry 0 unused and zero).
    """

    d: int
    beta: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.beta.shape != (1 << self.d,):
            raise InputError("beta must have length 2**d")

    def __getitem__(self, key) -> float:
        mask = key.mask if isinstance(key, SubsetId) else int(key)
        return float(self.beta[mask])

    def support(self, tol: float = 0.0) -> dict[int, float]:
        return {int(m): float(self.beta[m]) for m in np.flatnonzero(self.beta > tol) if m}

    def theta(self) -> ExtremalCoefficients:
        return ExtremalCoefficients.from_dense(self.d, theta_from_beta(self.beta, self.d))

    def to_json(self, tol: float = 0.0) -> dict:
        return {"d": self.d, "beta": {subset_key(m): b for m, b in self.support(tol).items()}}


def theta_from_beta(beta: np.ndarray, d: int) -> np.ndarray:
    """theta(J) = sum_K 1{K & J != 0} beta_K, dense over masks."""
    beta = np.asarray(beta, dtype=float)
    below = zeta_subsets(beta, d)  # sum over K subset of S
    total = below[-1]
    full = full_mask(d)
    masks = np.arange(1 << d)
    theta = total - below[full ^ masks]
    theta[0] = 0.0
    return theta


def _beta_direct(theta: np.ndarray, d: int) -> np.ndarray:
    # beta_K = sum over L containing K^c of (-1)^{|L \ K^c| + 1} theta(L)
    full = full_mask(d)
    counts = popcounts(d)
    beta = np.zeros(1 << d)
    for K in range(1, 1 << d):
        base = full ^ K
        s = 0.0
        sub = K
        while True:
            L = base | sub
            if L:
                s += theta[L] if (counts[sub] & 1) else -theta[L]
            if sub == 0:
                break
            sub = (sub - 1) & K
        beta[K] = s
    return beta


def _beta_fast(theta: np.ndarray, d: int) -> np.ndarray:
    # With f(S) = theta(D) - theta(S^c) = sum_{K subset S} beta_K.
    full = full_mask(d)
    masks = np.arange(1 << d)
    f = theta[full] - theta[full ^ masks]
    beta = mobius_subsets(f, d)
    beta[0] = 0.0
    return beta


def mobius_invert(
    theta: ExtremalCoefficients, tol: float = TOL, method: str = "auto"
) -> MobiusWeights:
    """Solve sum_K 1{K & J != 0} beta_K = theta(J) for all J.

    Raises
    ------
    IncompleteInput
        If any non-empty subset is missing.
    InconsistentInput
        If some beta_K < -tol, i.e. no spectral measure has these coefficients.
    """
    d = theta.d
    if d > MAX_DIM:
        raise InputError(f"d = {d} exceeds the supported maximum {MAX_DIM}")
    dense = theta.dense()
    if method == "auto":
        method = "direct" if d <= DIRECT_INVERSION_MAX_DIM else "fast"
    beta = _beta_direct(dense, d) if method == "direct" else _beta_fast(dense, d)
    worst = int(np.argmin(beta[1:])) + 1
    if beta[worst] < -tol:
        raise InconsistentInput(
            f"Möbius weight for {subset_key(worst)} is {beta[worst]:.3g} < 0; coefficients are not consistent"
        )
    return MobiusWeights(d, np.clip(beta, 0.0, None))


# -- consistency ----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    """A violated inequality sum_{L >= J} (-1)^{|L\\J|+1} theta(L) >= 0.

    ``mask`` is J (0 for the empty set); ``slack`` is the left-hand side.
    """

    mask: int
    d: int
    slack: float

    @property
    def subset(self) -> tuple[int, ...]:
        return mask_to_indices(self.mask)


def _as_coefficients(theta) -> ExtremalCoefficients:
    if isinstance(theta, SubsetFamily):
        return theta.coefficients()
    return theta


def consistency_slacks(theta) -> dict[int, float]:
    """Left-hand sides of every fully instantiated consistency inequality.

    Keys are J masks over proper subsets of the full set, including 0 (the
    empty set), whose inequality says the full-set Möbius weight is
    non-negative.  An inequality is instantiated only when every non-empty
    superset of J is present.
    """
    coef = _as_coefficients(theta)
    d = coef.d
    full = full_mask(d)
    if coef.complete:
        beta = _beta_fast(coef.dense(), d)
        # slack(J) = beta_{J^c}
        return {J: float(beta[full ^ J]) for J in range(full)}
    values = coef.values
    candidates = [0] + [m for m in values if m != full]
    out = {}
    for J in candidates:
        comp = full ^ J
        s = 0.0
        ok = True
        sub = comp
        while True:
            L = J | sub
            if L:
                v = values.get(L)
                if v is None:
                    ok = False
                    break
                s += v if (popcount(sub) & 1) == 0 else -v
            if sub == 0:
                break
            sub = (sub - 1) & comp
        if ok:
            # the loop sign is (-1)^{|L\J|}; the inequality carries one more factor of -1
            out[J] = -s
    return out


def check_consistency(theta, tol: float = TOL) -> list[Violation]:
    """Return every instantiated consistency inequality violated beyond ``tol``.

    Partial families are checked only on inequalities whose subsets are all
    present; implied inequalities involving unobserved subsets are skipped.
    """
    d = _as_coefficients(theta).d
    return [
        Violation(J, d, s) for J, s in sorted(consistency_slacks(theta).items()) if s < -tol
    ]


def monotonicity_check(theta, tol: float = TOL) -> list[tuple[SubsetId, SubsetId]]:
    """All pairs (J, K), J a proper subset of K, both present, with theta(J) > theta(K) + tol."""
    coef = _as_coefficients(theta)
    masks = np.fromiter(coef.values.keys(), dtype=np.int64, count=len(coef))
    vals = np.fromiter(coef.values.values(), dtype=float, count=len(coef))
    out = []
    block = 2048
    for start in range(0, len(masks), block):
        mj = masks[start : start + block, None]
        vj = vals[start : start + block, None]
        sub = ((mj & masks[None, :]) == mj) & (mj != masks[None, :])
        bad = sub & (vj > vals[None, :] + tol)
        for i, k in zip(*np.nonzero(bad)):
            out.append((SubsetId(int(mj[i, 0]), coef.d), SubsetId(int(masks[k]), coef.d)))
    return out
