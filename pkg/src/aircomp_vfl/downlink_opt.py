"""Downlink transceiver design: block-coordinate descent over the transmit
beamformer, the quantization covariance, and the log-det surrogate matrix.

The fronthaul rate constraint is convexified with the trace majorization
log|A| <= log|S| + Tr(S^-1 A) - dim, tight when S equals the transmit
covariance; refreshing S after each sweep restores equality, so points
feasible for the surrogate are always feasible for the true rate budget.
All majorization algebra runs in nats and converts to bits only at the
interface.
"""

from __future__ import annotations

import numpy as np

from .link import LOG2, downlink_capacity_bits, downlink_power
from .solvers import SolverError, barrier_newton_diag, pd_logdet, projected_gradient

QUANT_FLOOR_FACTOR = 1e-12


class DownlinkInfeasibleError(SolverError):
    """Power and rate budgets admit no strictly positive design."""


def logdet_majorant(target, surrogate):
    """Right-hand side of the trace majorization of log|target| at surrogate."""
    S = np.asarray(surrogate)
    T = np.asarray(target)
    try:
        np.linalg.cholesky(T)
    except np.linalg.LinAlgError as exc:
        raise SolverError("majorization target is not positive definite") from exc
    dim = S.shape[0]
    inv_term = float(np.trace(np.linalg.solve(S, T)).real)
    return pd_logdet(S) + inv_term - dim


def sigma_update(beamformer, quant_diag):
    """Surrogate refresh: the exact transmit covariance u u^H + Q."""
    u = np.asarray(beamformer)
    sigma = np.outer(u, u.conj())
    sigma[np.diag_indices_from(sigma)] += np.asarray(quant_diag)
    return sigma


def _block_objective(beamformer, quant_diag, channels, phi2):
    """Quantization leakage weighted by inverse beamformed gains (the
    quantity every block update decreases)."""
    h = np.asarray(channels)
    gains = np.abs(h.conj().T @ np.asarray(beamformer)) ** 2  # (K,)
    if np.any(gains <= 0):
        return np.inf
    leak = np.sum(np.asarray(quant_diag)[:, None] * np.abs(h) ** 2, axis=0)
    return float(np.sum(np.asarray(phi2) * leak / gains))


def true_downlink_objective(beamformer, quant_diag, channels, phi2, noise_power_w):
    """Weighted sum of the per-device effective-noise variances under
    channel-inverting receive scalars."""
    h = np.asarray(channels)
    gains = np.abs(h.conj().T @ np.asarray(beamformer)) ** 2
    if np.any(gains <= 0):
        return np.inf
    leak = np.sum(np.asarray(quant_diag)[:, None] * np.abs(h) ** 2, axis=0)
    return float(np.sum(np.asarray(phi2) * (noise_power_w + leak) / (2.0 * gains)))


def solve_Q_subproblem(beamformer, surrogate, channels, phi2, power_dl, cap_bits,
                       q_start, q_min):
    """Minimize the quantization leakage under the surrogate rate constraint.

    With the beamformer and surrogate fixed the constraint is a sum of
    linear and negative-log terms in the diagonal entries, so the barrier
    Newton path applies directly.
    """
    u = np.asarray(beamformer)
    h = np.asarray(channels)
    unit = power_dl
    budget = (power_dl - float(np.vdot(u, u).real)) / unit
    if budget <= 0:
        raise DownlinkInfeasibleError("beamformer already exhausts the power budget")

    gains = np.abs(h.conj().T @ u) ** 2
    weights = np.sum(
        (np.asarray(phi2) / gains)[None, :] * np.abs(h) ** 2, axis=1
    ).real * unit
    wmax = float(weights.max())
    if wmax > 0:
        weights = weights / wmax

    inv_s = np.linalg.inv(np.asarray(surrogate))
    s_diag = np.diag(inv_s).real * unit
    const = float((u.conj() @ inv_s @ u).real)
    dim = u.shape[0]
    rhs = (
        cap_bits * LOG2
        + dim
        - pd_logdet(surrogate)
        + dim * np.log(unit)
        - const
    )

    def constraint(q):
        val = float(s_diag @ q) - float(np.sum(np.log(q))) - rhs
        grad = s_diag - 1.0 / q
        hess = np.diag(1.0 / q**2)
        return val, grad, hess

    lo = q_min / unit
    # the constraint minimizer, clipped into the box and power budget
    slack_point = np.clip(1.0 / s_diag, lo * 1.01, 0.5 * budget / dim)

    def interior(qv):
        return (
            constraint(qv)[0] < 0 and qv.sum() < budget and np.all(qv > lo)
        )

    start = np.clip(np.asarray(q_start, dtype=float) / unit, lo * 1.01, None)
    if not interior(start):
        # blend toward the constraint minimizer; convexity makes the
        # constraint value decrease along the segment
        for theta in (1e-3, 1e-2, 1e-1, 0.5, 1.0):
            cand = (1.0 - theta) * start + theta * slack_point
            if interior(cand):
                start = cand
                break
        else:
            raise DownlinkInfeasibleError("no strictly feasible quantization point")

    q = barrier_newton_diag(weights, constraint, start, lo, budget=budget)
    return q * unit


def solve_u_subproblem(beamformer_init, quant_diag, channels, phi2, power_dl,
                       tol=1e-6, retract=None, max_beam_power=None,
                       noise_floor_w=0.0):
    """Descend the leakage objective in the beamformer on the power ball.

    Projected gradient with backtracking; the power constraint is enforced
    exactly by projection, and an optional ``retract`` map keeps extra
    constraints (the surrogate rate budget) satisfied along the way.
    ``max_beam_power`` caps the beam energy directly instead of the default
    budget remainder after quantization.  ``noise_floor_w`` adds the channel
    noise to the per-device numerators, turning the objective into the full
    effective-noise weight; used when quantization is disabled and the
    leakage term alone would be degenerate.
    """
    h = np.asarray(channels)
    if not np.any(np.abs(h) > 0):
        raise SolverError("all-zero downlink channels")
    if max_beam_power is not None:
        radius_sq = float(max_beam_power)
    else:
        radius_sq = power_dl - float(np.sum(quant_diag))
    if radius_sq <= 0:
        raise DownlinkInfeasibleError("quantization already exhausts the power budget")
    scale = np.sqrt(power_dl)
    h_scale = float(np.max(np.linalg.norm(h, axis=0)))
    hn = h / h_scale
    leak = np.sum(np.asarray(quant_diag)[:, None] * np.abs(hn) ** 2, axis=0)
    # numerators, constant in u (channel noise rescaled like the leakage)
    gamma = np.asarray(phi2) * (leak + noise_floor_w / h_scale**2)

    def objective(u):
        z = hn.conj().T @ u  # per-device beamformed gains
        dens = np.abs(z) ** 2
        if np.any(dens <= 0):
            return np.inf, np.zeros_like(u)
        val = float(np.sum(gamma / dens))
        grad = -2.0 * (hn * (gamma / dens**2 * z)[None, :]).sum(axis=1)
        return val, grad

    wrapped_retract = None
    if retract is not None:
        wrapped_retract = lambda un: retract(un * scale) / scale

    u0 = np.asarray(beamformer_init, dtype=complex) / scale
    u = projected_gradient(
        objective, np.sqrt(radius_sq) / scale, u0, tol=tol, retract=wrapped_retract
    )
    return u * scale


def _initial_design(channels, power_dl, cap_bits, q_min):
    """Matched-filter beamformer at half power with a rate-tight isotropic
    covariance, shrunk if the power budget cannot carry both."""
    h = np.asarray(channels)
    dim = h.shape[0]
    hbar = h.mean(axis=1)
    if np.linalg.norm(hbar) <= 0:
        hbar = h[:, 0]
    direction = hbar / np.linalg.norm(hbar)

    if cap_bits is None:
        power_u = power_dl - dim * q_min * 2.0
        return direction * np.sqrt(max(power_u, 0.5 * power_dl)), np.full(dim, q_min)

    denom = np.exp2(cap_bits) - 1.0
    power_u = power_dl / 2.0
    if power_u * (1.0 + dim / denom) > power_dl:
        power_u = 0.95 * power_dl / (1.0 + dim / denom)
    q_iso = max(power_u / denom, q_min)
    if power_u + dim * q_iso > power_dl:
        raise DownlinkInfeasibleError(
            "power budget cannot carry the rate-tight quantization level"
        )
    return direction * np.sqrt(power_u), np.full(dim, q_iso)


def optimize_downlink(channels, power_dl, cap_bits, noise_power_w, phi2,
                      tol=1e-6, max_outer=50, init=None, fix_beamformer=False):
    """Alternate quantization, beamforming, and surrogate updates.

    ``cap_bits=None`` disables the fronthaul constraint (covariance pinned
    at the floor).  Returns (beamformer, quant_diag, trace) where the trace
    records the block objective after every update and is non-increasing.
    """
    h = np.asarray(channels)
    dim = h.shape[0]
    q_min = QUANT_FLOOR_FACTOR * (noise_power_w if noise_power_w > 0 else 1.0)
    if power_dl <= dim * q_min:
        raise DownlinkInfeasibleError("power budget below the quantization floor")

    if init is not None:
        u = np.asarray(init[0], dtype=complex)
        q = np.asarray(init[1], dtype=float)
    else:
        u, q = _initial_design(h, power_dl, cap_bits, q_min)

    if cap_bits is None:
        # no fronthaul constraint: covariance sits at the floor and only the
        # channel-noise term of the effective noise is left to shape
        q = np.full(dim, q_min)
        trace = [true_downlink_objective(u, q, h, phi2, noise_power_w)]
        if not fix_beamformer:
            u = solve_u_subproblem(
                u, q, h, phi2, power_dl, tol, noise_floor_w=noise_power_w
            )
            trace.append(true_downlink_objective(u, q, h, phi2, noise_power_w))
        return u, q, np.array(trace)

    sigma = sigma_update(u, q)
    objective = lambda uu, qq: _block_objective(uu, qq, h, phi2)
    trace = [objective(u, q)]
    # every iterate is feasible; remember the one with the least
    # effective-noise weight, since the block objective ignores the
    # channel-noise share
    best = (true_downlink_objective(u, q, h, phi2, noise_power_w),
            u.copy(), q.copy())
    prev = (u.copy(), q.copy(), sigma.copy())
    for _ in range(max_outer):
        q_new = solve_Q_subproblem(u, sigma, h, phi2, power_dl, cap_bits, q, q_min)
        if objective(u, q_new) <= trace[-1]:
            q = q_new
        trace.append(objective(u, q))

        if not fix_beamformer:
            inv_s = np.linalg.inv(sigma)
            rhs = (
                cap_bits * LOG2
                + dim
                - pd_logdet(sigma)
                - float(np.diag(inv_s).real @ q)
                + float(np.sum(np.log(q)))
            )
            if rhs > 0:
                # radial scale-back onto the surrogate rate ellipsoid; with
                # the gradient step this slides the beamformer along the
                # active constraint instead of freezing it there
                def retract(uu, _inv=inv_s, _rhs=rhs):
                    val = float((uu.conj() @ _inv @ uu).real)
                    if val <= _rhs:
                        return uu
                    return uu * np.sqrt(_rhs / val)

                u_new = solve_u_subproblem(
                    u, q, h, phi2, power_dl, tol, retract=retract
                )
                feasible = float(
                    (u_new.conj() @ inv_s @ u_new).real
                ) <= rhs * (1.0 + 1e-10)
                if feasible and objective(u_new, q) <= trace[-1]:
                    u = u_new
        trace.append(objective(u, q))

        current = true_downlink_objective(u, q, h, phi2, noise_power_w)
        if current < best[0]:
            best = (current, u.copy(), q.copy())

        sigma = sigma_update(u, q)
        moved = (
            np.linalg.norm(u - prev[0]) / np.sqrt(power_dl)
            + np.linalg.norm(q - prev[1]) / power_dl
            + np.linalg.norm(sigma - prev[2]) / power_dl
        )
        prev = (u.copy(), q.copy(), sigma.copy())
        if moved < tol:
            break

    u, q = best[1], best[2]
    if downlink_power(u, q) > power_dl * (1.0 + 1e-9):
        raise DownlinkInfeasibleError("exit design violates the power budget")
    if downlink_capacity_bits(u, q) > cap_bits + 1e-6:
        raise DownlinkInfeasibleError("exit design violates the rate budget")
    return u, q, np.array(trace)
