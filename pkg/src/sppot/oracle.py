"""Independent verification solvers.

Projected gradient descent on the entropic convex programs (with Euclidean
alternating projections onto the transport constraints) and an exact LP
reference for tiny instances. Deliberately slow and simple; these exist to
cross-check the scaling solvers, not to compete with them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .ot_core import weighted_kl_value, xlogx


class OracleFailure(RuntimeError):
    """PGD did not reach its tolerance; treat the check as inconclusive."""


@dataclass(frozen=True)
class OracleConfig:
    step_size: float = 0.05  # maximum (initial) step; backtracking shrinks it
    max_iter: int = 50_000
    tol: float = 1e-6
    proj_rounds: int = 2_000
    proj_tol: float = 1e-14
    delta: float = 1e-12

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")


@dataclass
class OracleResult:
    plan: np.ndarray
    objective: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)


def project_rows_to_sum(Q, row_sums, delta):
    """Per-row Euclidean projection onto {x >= delta, sum(x) = s_i}."""
    out = np.empty_like(Q)
    for i in range(Q.shape[0]):
        out[i] = _project_capped_simplex(Q[i], row_sums[i], delta, equality=True)
    return out


def _project_capped_simplex(v, s, lo, equality):
    """Project v onto {x >= lo, sum x = s} (or <= s when equality=False)."""
    n = v.size
    if not equality and np.sum(np.maximum(v, lo)) <= s:
        return np.maximum(v, lo)
    w = v - lo
    budget = s - n * lo
    if budget <= 0:
        return np.full(n, lo)
    u = np.sort(w)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, n + 1)
    cond = u - (css - budget) / ks > 0
    k = int(np.max(ks[cond]))
    tau = (css[k - 1] - budget) / k
    return np.maximum(w - tau, 0.0) + lo


def _project_rows_capped(Y, caps, lo):
    """Row-wise projection onto {x >= lo, sum(x) <= cap_i}, vectorized."""
    n, k = Y.shape
    clipped = np.maximum(Y, lo)
    needs_eq = clipped.sum(axis=1) > caps
    out = clipped
    if np.any(needs_eq):
        W = Y[needs_eq] - lo
        budget = np.asarray(caps, dtype=float)[needs_eq] - k * lo
        budget = np.maximum(budget, 0.0)
        U = np.sort(W, axis=1)[:, ::-1]
        css = np.cumsum(U, axis=1)
        ks = np.arange(1, k + 1)
        cond = U - (css - budget[:, None]) / ks > 0
        kk = cond.sum(axis=1)  # cond is monotone: True prefix
        tau = (css[np.arange(len(kk)), kk - 1] - budget) / kk
        out[needs_eq] = np.maximum(W - tau[:, None], 0.0) + lo
    return out


def _project_cap_mass(Y, caps, mass, lo):
    """Exact projection onto {Q >= lo, row sums <= caps, total mass = mass}.

    Dualizing the single mass constraint leaves independent per-row capped
    projections of Y - tau; the attained total is continuous and
    nonincreasing in tau, so tau is found by bisection.
    """
    n, k = Y.shape
    if n * k * lo > mass or float(np.sum(caps)) < mass - 1e-12:
        raise ValueError("mass constraint infeasible for the given caps")

    def total(tau):
        return float(_project_rows_capped(Y - tau, caps, lo).sum())

    span = float(np.max(np.abs(Y))) + abs(mass) + 1.0
    t_lo, t_hi = -span, span
    while total(t_lo) < mass:
        t_lo *= 2.0
    while total(t_hi) > mass:
        t_hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (t_lo + t_hi)
        if total(mid) > mass:
            t_lo = mid
        else:
            t_hi = mid
        if t_hi - t_lo < 1e-15 * span:
            break
    Q = _project_rows_capped(Y - 0.5 * (t_lo + t_hi), caps, lo)
    # absorb the residual rounding on unclamped entries
    free = (Q > lo) & (Q < caps[:, None])
    n_free = int(free.sum())
    if n_free:
        Q[free] += (mass - Q.sum()) / n_free
    return Q


def _project_feasible(Q, row_eq, row_cap, col_eq, total_mass, cfg):
    """Exact Euclidean projection onto the intersection of the requested
    constraint sets. The row-cap + total-mass pair (the partial-transport
    feasible set) has a direct dual solution; other combinations use
    Dykstra's cyclic scheme (plain alternating projections find a feasible
    point, not the nearest one, which biases gradient steps)."""
    n, k = Q.shape
    if row_cap is not None and total_mass is not None and row_eq is None and col_eq is None:
        return _project_cap_mass(Q, row_cap, total_mass, cfg.delta)
    sets = []
    if row_eq is not None:
        sets.append(("row_eq", row_eq))
    if row_cap is not None:
        sets.append(("row_cap", row_cap))
    if col_eq is not None:
        sets.append(("col_eq", col_eq))
    if total_mass is not None:
        sets.append(("mass", total_mass))
    if not sets:
        return np.maximum(Q, cfg.delta)
    corrections = [np.zeros_like(Q) for _ in sets]
    for _ in range(cfg.proj_rounds):
        Q_prev_round = Q.copy()
        for idx, (kind, target) in enumerate(sets):
            Y = Q + corrections[idx]
            if kind == "row_eq":
                Q = project_rows_to_sum(Y, target, cfg.delta)
            elif kind == "row_cap":
                Q = np.empty_like(Y)
                for i in range(n):
                    Q[i] = _project_capped_simplex(Y[i], target[i], cfg.delta, equality=False)
            elif kind == "col_eq":
                Q = project_rows_to_sum(Y.T, target, cfg.delta).T
            else:
                # affine set {sum Q = target}: projection is a uniform shift;
                # nonnegativity is carried by the row/column sets
                Q = Y + (target - Y.sum()) / (n * k)
            corrections[idx] = Y - Q
        if float(np.max(np.abs(Q - Q_prev_round))) <= cfg.proj_tol:
            break
    return Q


def oracle_objective(Q, cost, epsilon, col_kl=None, slack_entropy=None) -> float:
    """Same convention as the production objective: <Q,C> + KL penalty - eps H.

    `slack_entropy`, when set to the row-cap vector, adds the (negated)
    entropy of the row slacks cap - row_sum; this matches the virtual-column
    formulation where the dropped column also carries entropy.
    """
    val = float(np.sum(Q * cost))
    if col_kl is not None:
        target, lam = col_kl
        val += weighted_kl_value(Q.sum(axis=0), target, np.full_like(target, lam))
    val += epsilon * float(np.sum(xlogx(Q)))
    if slack_entropy is not None:
        val += epsilon * float(np.sum(xlogx(slack_entropy - Q.sum(axis=1))))
    return val


def pgd_entropic(
    cost: np.ndarray,
    epsilon: float,
    *,
    row_eq: np.ndarray | None = None,
    row_cap: np.ndarray | None = None,
    col_eq: np.ndarray | None = None,
    col_kl: tuple | None = None,
    total_mass: float | None = None,
    slack_entropy: bool = False,
    init: np.ndarray | None = None,
    cfg: OracleConfig | None = None,
    track_objective: bool = False,
) -> OracleResult:
    """Projected gradient descent with backtracking on the entropic objective.

    Constraint options: hard row sums (`row_eq`), row caps (`row_cap`),
    hard column sums (`col_eq`), a soft column KL penalty
    (`col_kl = (target, lam)`), and a total-mass equality. With
    `slack_entropy`, the row slacks cap - row_sum also carry an entropy
    term, matching the virtual-column solver's implicit objective.

    The step length is found by backtracking from `cfg.step_size` until the
    quadratic sufficient-decrease condition holds; a fixed step cannot work
    here because the entropy gradient is unbounded near zero entries.
    Raises OracleFailure if the gradient-mapping norm never reaches tol.
    """
    if slack_entropy and row_cap is None:
        raise ValueError("slack_entropy requires row_cap")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0 for a strictly convex objective")
    cfg = cfg or OracleConfig()
    C = np.asarray(cost, dtype=float)
    n, k = C.shape
    if init is None:
        if total_mass is not None:
            Q = np.full((n, k), total_mass / (n * k))
        elif row_eq is not None:
            Q = np.tile((row_eq / k)[:, None], (1, k))
        else:
            Q = np.full((n, k), 1.0 / (n * k))
    else:
        Q = np.asarray(init, dtype=float).copy()
    Q = _project_feasible(Q, row_eq, row_cap, col_eq, total_mass, cfg)

    slack_cap = row_cap if slack_entropy else None

    def objective(Qx):
        return oracle_objective(Qx, C, epsilon, col_kl, slack_cap)

    def gradient(Qx):
        g = C + epsilon * (np.log(np.maximum(Qx, cfg.delta)) + 1.0)
        if col_kl is not None:
            target, lam = col_kl
            col = np.maximum(Qx.sum(axis=0), cfg.delta)
            g = g + lam * (np.log(col / target) + 1.0)[None, :]
        if slack_entropy:
            slack = np.maximum(row_cap - Qx.sum(axis=1), cfg.delta)
            g = g - epsilon * (np.log(slack) + 1.0)[:, None]
        return g

    trace = []
    eta = cfg.step_size
    f_val = objective(Q)
    converged = False
    gap = np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        grad = gradient(Q)
        eta = min(eta * 2.0, cfg.step_size)
        while True:
            Q_new = _project_feasible(Q - eta * grad, row_eq, row_cap, col_eq, total_mass, cfg)
            diff = Q_new - Q
            f_new = objective(Q_new)
            model = f_val + float(np.sum(grad * diff)) + float(np.sum(diff * diff)) / (2.0 * eta)
            if f_new <= model + 1e-15 or eta < 1e-14:
                break
            eta *= 0.5
        gap = float(np.max(np.abs(diff))) / eta
        Q = Q_new
        f_val = f_new
        if track_objective and (it % 50 == 0 or it == 1):
            trace.append(f_val)
        if gap <= cfg.tol:
            converged = True
            break
    if not converged:
        raise OracleFailure(f"PGD gradient mapping {gap:.3e} > tol {cfg.tol:.1e} after {it} iterations")
    return OracleResult(Q, objective(Q), it, converged, trace)


def lp_exact_tiny(
    cost: np.ndarray,
    *,
    row_eq: np.ndarray | None = None,
    row_cap: np.ndarray | None = None,
    col_eq: np.ndarray | None = None,
    col_cap: np.ndarray | None = None,
    total_mass: float | None = None,
) -> OracleResult:
    """Exact (eps = 0) linear-program reference for instances with <= 24 cells."""
    C = np.asarray(cost, dtype=float)
    n, k = C.shape
    if n * k > 24:
        raise ValueError("lp_exact_tiny is restricted to N*K <= 24 variables")
    A_eq, b_eq, A_ub, b_ub = [], [], [], []

    def row_indicator(i):
        z = np.zeros((n, k))
        z[i, :] = 1.0
        return z.ravel()

    def col_indicator(j):
        z = np.zeros((n, k))
        z[:, j] = 1.0
        return z.ravel()

    if row_eq is not None:
        for i in range(n):
            A_eq.append(row_indicator(i))
            b_eq.append(row_eq[i])
    if row_cap is not None:
        for i in range(n):
            A_ub.append(row_indicator(i))
            b_ub.append(row_cap[i])
    if col_eq is not None:
        for j in range(k):
            A_eq.append(col_indicator(j))
            b_eq.append(col_eq[j])
    if col_cap is not None:
        for j in range(k):
            A_ub.append(col_indicator(j))
            b_ub.append(col_cap[j])
    if total_mass is not None:
        A_eq.append(np.ones(n * k))
        b_eq.append(total_mass)

    res = linprog(
        C.ravel(),
        A_eq=np.asarray(A_eq) if A_eq else None,
        b_eq=np.asarray(b_eq) if b_eq else None,
        A_ub=np.asarray(A_ub) if A_ub else None,
        b_ub=np.asarray(b_ub) if b_ub else None,
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise ValueError(f"LP infeasible or failed: {res.message}")
    return OracleResult(res.x.reshape(n, k), float(res.fun), int(res.nit), True)
