"""Small dense numerical solvers shared by the transceiver optimizers:
log-barrier Newton methods for the min-max epigraph and diagonal
covariance programs, projected gradient descent on a ball, and
positive-definite linear-algebra helpers.

Everything here is deterministic: fixed iteration schedules, no random
restarts, so optimizer traces replay bit-for-bit.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

BARRIER_MULTIPLIER = 20.0
NEWTON_TOL = 1e-12
MAX_NEWTON_STEPS = 60


class SolverError(Exception):
    pass


def pd_logdet(matrix):
    """log-determinant of a positive-definite (Hermitian) matrix."""
    try:
        chol = np.linalg.cholesky(np.asarray(matrix))
    except np.linalg.LinAlgError as exc:
        raise SolverError("matrix is not positive definite") from exc
    return 2.0 * float(np.sum(np.log(np.abs(np.diag(chol)))))


def generalized_max_eigvec(numerator, denominator):
    """Dominant generalized eigenvector maximizing x^H A x / x^H B x."""
    try:
        _, vecs = scipy.linalg.eigh(np.asarray(numerator), np.asarray(denominator))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SolverError("generalized eigenproblem failed (non-PD input?)") from exc
    return vecs[:, -1]


def _newton_direction(hess, grad):
    """Solve H d = -g with a diagonal-loading fallback for indefinite H."""
    ridge = 0.0
    scale = max(float(np.max(np.abs(np.diag(hess)))), 1e-30)
    for _ in range(12):
        try:
            chol = np.linalg.cholesky(
                hess + ridge * scale * np.eye(hess.shape[0])
            )
            return np.linalg.solve(chol.T.conj(), np.linalg.solve(chol, -grad))
        except np.linalg.LinAlgError:
            ridge = 1e-12 if ridge == 0.0 else ridge * 100.0
    raise SolverError("Newton system remained indefinite after regularization")


def epigraph_minmax(tangents, offsets, ellipsoid, kkt_tol=1e-7):
    """Minimize the pointwise maximum of affine functions over an ellipsoid.

    Solves  min_x max_k (a_k^T x + c_k)  subject to  x^T Q' x <= 1  through
    the epigraph form with a primal-dual interior-point method (slacks and
    multipliers are independent variables, so the complementarity products
    stay accurate down to tiny duality gaps).  ``tangents`` is the (K, n)
    matrix of slopes a_k, ``offsets`` the (K,) intercepts, and ``ellipsoid``
    the positive-definite Q'.
    """
    A = np.asarray(tangents, dtype=float)
    c = np.asarray(offsets, dtype=float)
    Q = np.asarray(ellipsoid, dtype=float)
    try:
        return _epigraph_primal_dual(A, c, Q, kkt_tol, shift=1.0)
    except SolverError:
        # one deterministic restart with a different interior initialization
        return _epigraph_primal_dual(A, c, Q, kkt_tol, shift=7.0)


def _epigraph_primal_dual(A, c, Q, kkt_tol, shift):
    K, n = A.shape
    x = np.zeros(n)
    t = float(c.max()) + shift
    lam = np.full(K, 1.0 / (K + 1.0))
    nu = 1.0 / (K + 1.0)
    scale = max(1.0, float(np.max(np.abs(c))))

    def residuals(x, t, lam, nu, mu):
        r = t - (A @ x + c)  # tangent slacks, kept positive
        s = 1.0 - x @ Q @ x
        Qx = Q @ x
        return (
            np.concatenate(
                [
                    A.T @ lam + 2.0 * nu * Qx,
                    [1.0 - lam.sum()],
                    lam * r - mu,
                    [nu * s - mu],
                ]
            ),
            r,
            s,
            Qx,
        )

    size = n + 2 + K
    J = np.zeros((size, size))
    J[n, n + 1: n + 1 + K] = -1.0
    diag_idx = (np.arange(n + 1, n + 1 + K), np.arange(n + 1, n + 1 + K))
    for _ in range(100):
        res, r, s, Qx = residuals(x, t, lam, nu, 0.0)
        gap = (lam @ r + nu * s) / (K + 1)
        dual_inf = float(np.max(np.abs(res[: n + 1])))
        if dual_inf <= kkt_tol * 0.05 * scale and gap <= kkt_tol * 0.05 * scale:
            break
        mu = 0.1 * gap
        res_mu = res.copy()
        res_mu[n + 1: n + 1 + K] -= mu
        res_mu[-1] -= mu

        # Newton system in (x, t, lam, nu)
        J[:n, :n] = 2.0 * nu * Q
        J[:n, n + 1: n + 1 + K] = A.T
        J[:n, -1] = 2.0 * Qx
        J[n + 1: n + 1 + K, :n] = -A * lam[:, None]
        J[n + 1: n + 1 + K, n] = lam
        J[diag_idx] = r
        J[-1, :n] = -2.0 * nu * Qx
        J[-1, -1] = s
        try:
            step = np.linalg.solve(J, -res_mu)
        except np.linalg.LinAlgError as exc:
            raise SolverError("interior-point step failed") from exc

        dx, dt = step[:n], step[n]
        dlam, dnu = step[n + 1: n + 1 + K], step[-1]
        # fraction-to-boundary step limits keep slacks and multipliers positive
        alpha = 1.0
        for vals, deltas in ((lam, dlam), (np.array([nu]), np.array([dnu]))):
            neg = deltas < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-vals[neg] / deltas[neg])) * 0.99)
        for _ in range(60):
            nx, nt = x + alpha * dx, t + alpha * dt
            r_new = nt - (A @ nx + c)
            s_new = 1.0 - nx @ Q @ nx
            if np.all(r_new > 0) and s_new > 0:
                break
            alpha *= 0.5
        else:
            raise SolverError("interior-point line search failed")
        x, t = x + alpha * dx, t + alpha * dt
        lam, nu = lam + alpha * dlam, nu + alpha * dnu

    res, r, s, _ = residuals(x, t, lam, nu, 0.0)
    kkt = max(
        float(np.max(np.abs(res[: n + 1]))),
        float(np.max(lam * r)),
        nu * s,
        float(np.max(-r, initial=0.0)),
        -s if s < 0 else 0.0,
    )
    if kkt > kkt_tol * scale:
        raise SolverError(f"epigraph solver KKT residual {kkt:.2e} above tolerance")
    return x


def barrier_newton_diag(
    weights,
    constraint,
    q_start,
    q_min,
    budget=None,
    q_max=None,
    gap_tol=1e-9,
    constraint_value=None,
):
    """Minimize a linear objective over diagonal covariance entries.

    Solves  min_q  w^T q  subject to  constraint(q) <= 0, q >= q_min, and
    optionally sum(q) <= budget and q <= q_max, by a log-barrier Newton
    path.  ``constraint`` maps q to (value, gradient, Hessian);
    ``constraint_value``, when given, is a cheaper value-only evaluation
    used inside line searches.  The start must be strictly feasible.
    Returns the best feasible point seen, so the true objective never
    increases relative to the start.
    """
    w = np.asarray(weights, dtype=float)
    q = np.array(q_start, dtype=float)
    lo = np.broadcast_to(np.asarray(q_min, dtype=float), q.shape)
    hi = None if q_max is None else np.broadcast_to(np.asarray(q_max, dtype=float), q.shape)
    gval_of = constraint_value or (lambda qv: constraint(qv)[0])

    def strictly_feasible(qv):
        if np.min(qv - lo) <= 0:
            return False
        if budget is not None and budget - qv.sum() <= 0:
            return False
        if hi is not None and np.min(hi - qv) <= 0:
            return False
        return gval_of(qv) < 0

    if not strictly_feasible(q):
        raise SolverError("barrier start is not strictly feasible")

    num_ineq = 1 + q.size + (budget is not None) + (0 if hi is None else q.size)
    best_q, best_val = q.copy(), float(w @ q)
    mu = max(abs(best_val), 1e-12)
    for _ in range(40):
        q = _diag_center(w, constraint, gval_of, q, lo, budget, hi, mu)
        val = float(w @ q)
        if val < best_val:
            best_q, best_val = q.copy(), val
        if mu * num_ineq <= gap_tol * max(1.0, abs(best_val)):
            break
        mu /= BARRIER_MULTIPLIER
    return best_q


def _diag_barrier_value(w, gval_of, q, lo, budget, hi, mu):
    margins = q - lo
    if np.any(margins <= 0):
        return np.inf
    log_terms = float(np.sum(np.log(margins)))
    if budget is not None:
        rem = budget - q.sum()
        if rem <= 0:
            return np.inf
        log_terms += np.log(rem)
    if hi is not None:
        top = hi - q
        if np.any(top <= 0):
            return np.inf
        log_terms += float(np.sum(np.log(top)))
    gval = gval_of(q)
    if gval >= 0:
        return np.inf
    log_terms += np.log(-gval)
    return float(w @ q) - mu * log_terms


def _max_step_to_box(q, step, lo, budget, hi):
    """Largest step staying strictly inside the linear constraints."""
    alpha = 1.0
    falling = step < 0
    if np.any(falling):
        alpha = min(alpha, 0.99 * float(np.min((q - lo)[falling] / -step[falling])))
    if hi is not None:
        rising = step > 0
        if np.any(rising):
            alpha = min(alpha, 0.99 * float(np.min((hi - q)[rising] / step[rising])))
    if budget is not None and step.sum() > 0:
        alpha = min(alpha, 0.99 * (budget - q.sum()) / step.sum())
    return alpha


def _diag_center(w, constraint, gval_of, q, lo, budget, hi, mu):
    obj_scale = max(abs(float(w @ q)), 1.0)
    for _ in range(MAX_NEWTON_STEPS):
        gval, ggrad, ghess = constraint(q)
        margins = q - lo
        grad = w + mu * (ggrad / (-gval) - 1.0 / margins)
        hess = mu * (
            np.outer(ggrad, ggrad) / gval**2
            + ghess / (-gval)
            + np.diag(1.0 / margins**2)
        )
        if budget is not None:
            rem = budget - q.sum()
            grad = grad + mu / rem
            hess = hess + mu / rem**2
        if hi is not None:
            top = hi - q
            grad = grad + mu / top
            hess = hess + mu * np.diag(1.0 / top**2)
        step = _newton_direction(hess, grad)
        if -0.5 * float(grad @ step) < NEWTON_TOL * obj_scale:
            break
        base = _diag_barrier_value(w, gval_of, q, lo, budget, hi, mu)
        slope = float(grad @ step)
        size = _max_step_to_box(q, step, lo, budget, hi)
        accepted = False
        for _ in range(60):
            cand = q + size * step
            val = _diag_barrier_value(w, gval_of, cand, lo, budget, hi, mu)
            if val <= base + 1e-4 * size * slope:
                q, accepted = cand, True
                break
            size *= 0.5
        if not accepted:
            break
    return q


def projected_gradient(objective, radius, x0, tol=1e-6, max_iter=400, retract=None):
    """Monotone projected gradient descent on the centered ball of ``radius``.

    ``objective`` maps x to (value, gradient); for complex x the gradient is
    the real-inner-product gradient, i.e. f(x+d) ~ f(x) + Re<g, d>.  An
    optional ``retract`` map pulls candidates back into an extra constraint
    set that holds at x0 (e.g. a radial scale-back onto an ellipsoid);
    combined with the gradient step it lets iterates slide along that
    boundary instead of stalling on it.
    """
    x = np.array(x0)
    norm = np.linalg.norm(x)
    if norm > radius:
        x = x * (radius / norm)
    if retract is not None:
        x = retract(x)
    f, g = objective(x)
    if not np.isfinite(f) or not np.all(np.isfinite(np.atleast_1d(g).view(float))):
        raise SolverError("objective returned a non-finite value")
    step = 0.1 * radius / max(float(np.linalg.norm(g)), 1e-30)
    for _ in range(max_iter):
        moved = False
        size = step
        for _ in range(80):
            cand = x - size * g
            cnorm = np.linalg.norm(cand)
            if cnorm > radius:
                cand = cand * (radius / cnorm)
            if retract is not None:
                cand = retract(cand)
            delta = cand - x
            dist = float(np.linalg.norm(delta))
            if dist <= tol * max(1.0, float(np.linalg.norm(x))) and size == step:
                return x  # stationary within tolerance
            fc, gc = objective(cand)
            if not np.isfinite(fc):
                raise SolverError("objective returned a non-finite value")
            if fc <= f - 1e-6 * dist * dist / max(size, 1e-30):
                x, f, g = cand, fc, gc
                step = size * 2.0
                moved = True
                break
            size *= 0.5
            if size < 1e-20:
                break
        if not moved:
            return x
    return x
