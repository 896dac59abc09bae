"""Pure-NumPy scaling kernels (fallback backend).

Two hot loops live here: the stabilized row-equality / column-exponent
scaling recursion (used by the balanced, KL-penalized and virtual-column
solvers) and the generalized scaling baseline that enforces the total-mass
constraint through an extra scalar rescale each sweep.

The compiled backend in `_fast.pyx` mirrors these functions exactly; both
must stay semantically in sync.
"""

import numpy as np

KERNEL_FLOOR = 1e-300


def scaling_weighted_kl(C, alpha, beta, f, epsilon, tol, max_iter, threshold):
    """Stabilized scaling recursion.

    a <- alpha/(M b); b <- w * (beta/(M^T a))^f, with log-domain absorption
    of (a, b) into potentials (u, v) whenever either vector exceeds
    `threshold`. Targets in `beta` must be strictly positive.

    Returns (Q, iterations, converged, b_change_history).
    """
    m, n = C.shape
    M = np.maximum(np.exp(-C / epsilon), KERNEL_FLOOR)
    a = np.ones(m)
    b = np.ones(n)
    u = np.zeros(m)
    v = np.zeros(n)
    w = np.ones(n)
    hard = f == 1.0
    errs = np.empty(max_iter)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        a = alpha / (M @ b)
        b_new = w * (beta / (M.T @ a)) ** f
        err = float(np.max(np.abs(b_new - b)))
        errs[it - 1] = err
        b = b_new
        if err < tol:
            converged = True
            break
        if max(a.max(), b.max()) > threshold:
            u += epsilon * np.log(a)
            v += epsilon * np.log(b)
            w = np.where(hard, 1.0, w * b ** (f - 1.0))
            M = np.exp((u[:, None] - C + v[None, :]) / epsilon)
            a = np.ones(m)
            b = np.ones(n)
    Q = a[:, None] * M * b[None, :]
    return Q, it, converged, errs[:it].copy()


def gsa_total_mass(C, alpha, beta, f, rho, epsilon, tol, max_iter):
    """Generalized scaling baseline with scalar total-mass rescale.

    a <- min(alpha/(s M b), 1); b <- (beta/(s M^T a))^f; s <- rho/(a^T M b).
    Returns (Q, iterations, converged, b_change_history).
    """
    m, n = C.shape
    M = np.maximum(np.exp(-C / epsilon), KERNEL_FLOOR)
    b = np.ones(n)
    s = 1.0
    errs = np.empty(max_iter)
    converged = False
    it = 0
    a = np.ones(m)
    for it in range(1, max_iter + 1):
        a = np.minimum(alpha / (s * (M @ b)), 1.0)
        b_new = (beta / (s * (M.T @ a))) ** f
        s = rho / float(a @ (M @ b_new))
        err = float(np.max(np.abs(b_new - b)))
        errs[it - 1] = err
        b = b_new
        if err < tol:
            converged = True
            break
    Q = s * a[:, None] * M * b[None, :]
    return Q, it, converged, errs[:it].copy()
