"""Dense linear-programming and NNLS engines.

``solve`` handles standard-form problems

    minimize c.x  subject to  A x = b,  x >= 0

with a two-phase revised simplex method.  Problems here are short and
wide (a few dozen rows, up to ~2**d columns), so the basis inverse is
kept dense and refactorized periodically.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NonConvergence, NumericalFailure

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-12
MAX_COLUMNS = 1 << 20
DEGENERATE_SWITCH = 100
REFACTOR_EVERY = 50


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class StandardLp:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    labels: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float)
        if A.shape != (b.size, c.size):
            raise InputError(f"shape mismatch: A {A.shape}, b {b.shape}, c {c.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise InputError("LP data must be finite")
        if c.size > MAX_COLUMNS:
            raise InputError(f"{c.size} columns exceeds the dense limit {MAX_COLUMNS}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def shape(self):
        return self.A.shape


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    objective: float = float("nan")
    basis: tuple[int, ...] = ()
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Simplex:
    """Revised simplex on a scaled copy of the problem.

    Pricing is Dantzig's most-negative reduced cost until
    ``DEGENERATE_SWITCH`` consecutive degenerate pivots, after which Bland's
    smallest-index rule is used for the remainder of the phase.
    """

    def __init__(self, A, b, max_iter):
        self.A = A
        self.absA = np.abs(A)
        self.b = b
        self.m, self.n = A.shape
        self.max_iter = max_iter
        self.iterations = 0

    def _refactor(self, basis):
        B = self.A[:, basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis during refactorization") from exc
        if not np.all(np.isfinite(Binv)):
            raise NumericalFailure("singular basis during refactorization")
        return Binv

    def run(self, cost, basis, allowed):
        """Optimize ``cost`` from a feasible ``basis``; returns (basis, Binv, status)."""
        A, b = self.A, self.b
        basis = list(basis)
        Binv = self._refactor(basis)
        xB = Binv @ b
        degenerate_run = 0
        bland = False
        since_refactor = 0
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalFailure(f"simplex iteration limit {self.max_iter} reached")
            y = cost[basis] @ Binv
            red = cost - y @ A
            red[basis] = 0.0
            red[~allowed] = 0.0
            # per-column relative test: costs may span hundreds of orders of magnitude
            scale = np.abs(cost) + np.abs(y) @ self.absA
            candidates = np.flatnonzero(red < -OPT_TOL * np.maximum(scale, np.finfo(float).tiny))
            if candidates.size == 0:
                return basis, Binv, Status.OPTIMAL
            if bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmin(red[candidates])])
            col = Binv @ A[:, q]
            pos = np.flatnonzero(col > PIVOT_TOL)
            if pos.size == 0:
                return basis, Binv, Status.UNBOUNDED
            ratios = np.maximum(xB[pos], 0.0) / col[pos]
            tmin = ratios.min()
            ties = pos[ratios <= tmin + FEAS_TOL * max(1.0, tmin)]
            if bland:
                r = int(min(ties, key=lambda i: basis[i]))
            else:
                r = int(ties[np.argmax(np.abs(col[ties]))])
            piv = col[r]
            if abs(piv) < PIVOT_TOL:
                raise NumericalFailure(f"pivot magnitude {abs(piv):.2e} below {PIVOT_TOL}")
            step = max(xB[r], 0.0) / piv
            if step <= FEAS_TOL:
                degenerate_run += 1
                if degenerate_run >= DEGENERATE_SWITCH and not bland:
                    log.debug("switching to Bland's rule after %d degenerate pivots", degenerate_run)
                    bland = True
            else:
                degenerate_run = 0
            # eta update of the basis inverse
            xB = xB - step * col
            xB[r] = step
            row = Binv[r] / piv
            Binv = Binv - np.outer(col, row)
            Binv[r] = row
            basis[r] = q
            self.iterations += 1
            since_refactor += 1
            if since_refactor >= REFACTOR_EVERY:
                Binv = self._refactor(basis)
                xB = Binv @ b
                since_refactor = 0


def solve(lp: StandardLp, max_iter: int | None = None) -> LpSolution:
    """Solve a standard-form LP with the two-phase revised simplex method.

    Redundant equality rows are detected at the end of phase one and
    dropped; their dual values are reported as zero.

    Raises
    ------
    NumericalFailure
        If a pivot below 1e-12 cannot be avoided, the basis becomes singular,
        or the iteration limit is hit.
    """
    c0, A0, b0 = lp.c, lp.A, lp.b
    m, n = A0.shape
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    if m == 0:
        if np.any(c0 < -OPT_TOL):
            return LpSolution(Status.UNBOUNDED)
        return LpSolution(Status.OPTIMAL, np.zeros(n), 0.0, (), np.zeros(0), c0.copy())

    sign = np.where(b0 < 0, -1.0, 1.0)
    A = A0 * sign[:, None]
    b = b0 * sign
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    A = A / scale
    c = c0 / scale

    # phase one on [A | I]
    Aph = np.hstack([A, np.eye(m)])
    engine = _Simplex(Aph, b, max_iter)
    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    allowed = np.ones(n + m, dtype=bool)
    basis, Binv, status = engine.run(cost1, list(range(n, n + m)), allowed)
    xB = Binv @ b
    infeas = float(cost1[basis] @ xB)
    if infeas > FEAS_TOL * max(1.0, float(np.abs(b).max())):
        return LpSolution(Status.INFEASIBLE, iterations=engine.iterations)

    # drive artificials out of the basis; rows where that is impossible are redundant
    keep_rows = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] < n:
            continue
        row = Binv[r] @ A
        row[[j for j in basis if j < n]] = 0.0
        nz = np.flatnonzero(np.abs(row) > 1e-7)
        nz = [j for j in nz if j not in basis]
        if nz:
            q = int(max(nz, key=lambda j: abs(row[j])))
            col = Binv @ Aph[:, q]
            piv = col[r]
            rowv = Binv[r] / piv
            Binv = Binv - np.outer(col, rowv)
            Binv[r] = rowv
            basis[r] = q
        else:
            keep_rows[r] = False
    if not keep_rows.all():
        log.debug("dropping %d redundant equality rows", int((~keep_rows).sum()))
        rows = np.flatnonzero(keep_rows)
        basis = [basis[r] for r in rows]
        A_red, b_red = A[rows], b[rows]
    else:
        rows = np.arange(m)
        A_red, b_red = A, b

    engine2 = _Simplex(A_red, b_red, max_iter)
    engine2.iterations = engine.iterations
    allowed2 = np.ones(n, dtype=bool)
    basis, Binv, status = engine2.run(c, basis, allowed2)
    if status is Status.UNBOUNDED:
        return LpSolution(Status.UNBOUNDED, iterations=engine2.iterations)

    xB = Binv @ b_red
    x_scaled = np.zeros(n)
    x_scaled[basis] = np.maximum(xB, 0.0)
    x = x_scaled / scale
    y_red = c[basis] @ Binv
    y = np.zeros(m)
    y[rows] = y_red
    y *= sign
    reduced = c0 - y @ A0
    resid = np.abs(A0 @ x - b0).max()
    if resid > 1e-7 * max(1.0, float(np.abs(b0).max())):
        raise NumericalFailure(f"primal residual {resid:.2e} after optimization")
    return LpSolution(
        Status.OPTIMAL,
        x=x,
        objective=float(c0 @ x),
        basis=tuple(sorted(int(j) for j in basis)),
        duals=y,
        reduced_costs=reduced,
        iterations=engine2.iterations,
    )


def nnls(design, target, ridge: float = 0.0, tol: float = 1e-10, max_iter: int | None = None):
    """Lawson-Hanson active-set solver for

        minimize ||target - design @ beta||^2 + ridge * ||beta||^2,  beta >= 0.

    The ridge term is handled by augmenting the system with sqrt(ridge) * I.

    Returns
    -------
    beta : ndarray
    residual : float
        ``||target - design @ beta||`` (without the ridge term).

    Raises
    ------
    NonConvergence
        After ``50 * n`` outer iterations.
    """
    A = np.atleast_2d(np.asarray(design, dtype=float))
    b = np.asarray(target, dtype=float)
    if ridge < 0:
        raise InputError("ridge must be non-negative")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise InputError("design and target must be finite")
    m, n = A.shape
    if ridge > 0:
        A_aug = np.vstack([A, np.sqrt(ridge) * np.eye(n)])
        b_aug = np.concatenate([b, np.zeros(n)])
    else:
        A_aug, b_aug = A, b
    if max_iter is None:
        max_iter = 50 * n

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A_aug.T @ (b_aug - A_aug @ x)
    # machine-precision scale of the gradient A^T r; an absolute tolerance
    # would stop early once rows carry large weights
    eps_scale = 10 * max(A_aug.shape) * np.finfo(float).eps
    wtol = max(eps_scale * np.abs(A_aug).sum(axis=0).max() * max(1.0, np.abs(b_aug).max()), 1e-3 * tol)
    it = 0
    while True:
        active_w = np.where(~passive, w, -np.inf)
        j = int(np.argmax(active_w))
        if active_w[j] <= wtol:
            break
        it += 1
        if it > max_iter:
            raise NonConvergence(f"NNLS did not converge in {max_iter} iterations")
        passive[j] = True
        while True:
            idx = np.flatnonzero(passive)
            z = np.zeros(n)
            z[idx] = np.linalg.lstsq(A_aug[:, idx], b_aug, rcond=None)[0]
            if np.all(z[idx] > 0):
                x = z
                break
            neg = idx[z[idx] <= 0]
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
            if not passive.any():
                break
        w = A_aug.T @ (b_aug - A_aug @ x)
    return x, float(np.linalg.norm(b - A @ x))


def nnls_kkt_residual(design, target, beta, ridge: float = 0.0) -> float:
    """Max violation of the NNLS optimality conditions at ``beta``."""
    A = np.atleast_2d(np.asarray(design, dtype=float))
    b = np.asarray(target, dtype=float)
    grad = A.T @ (b - A @ beta) - ridge * beta  # negative half-gradient
    on = beta > 0
    return float(max(np.abs(grad[on]).max(initial=0.0), grad[~on].max(initial=0.0), 0.0))
