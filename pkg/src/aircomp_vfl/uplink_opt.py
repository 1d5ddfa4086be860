"""Uplink transceiver design: alternating successive-convex-approximation
beamforming and quantization-covariance optimization.

The beamforming stage maximizes the worst-case effective channel gain over
an ellipsoid set by the current noise-plus-quantization covariance; the
quantization stage minimizes the beamformed noise power subject to the
fronthaul rate budget.  Both stages only ever decrease the weighted
effective-noise objective, so the outer loop is monotone.
"""

from __future__ import annotations

import numpy as np

from .link import LOG2, uplink_noise_variance
from .solvers import SolverError, barrier_newton_diag, epigraph_minmax

QUANT_FLOOR_FACTOR = 1e-12  # q_min relative to the channel noise power


class UplinkInfeasibleError(SolverError):
    """No strictly positive quantization covariance meets the rate budget."""


def complex_to_real(vec):
    v = np.asarray(vec)
    return np.concatenate([v.real, v.imag])


def real_to_complex(vec):
    half = vec.shape[0] // 2
    return vec[:half] + 1j * vec[half:]


def _gain_quadratics(channels):
    """Real-domain embeddings of h_k h_k^H so |m^H h_k|^2 = m~^T T_k m~.

    Returns a (K, 2n, 2n) stack.
    """
    n, K = channels.shape
    mats = np.empty((K, 2 * n, 2 * n))
    for k in range(K):
        outer = np.outer(channels[:, k], channels[:, k].conj())
        mats[k, :n, :n] = outer.real
        mats[k, :n, n:] = -outer.imag
        mats[k, n:, :n] = outer.imag
        mats[k, n:, n:] = outer.real
    return mats


def solve_sca_subproblem(tangents, offsets, ellipsoid):
    """One convex inner step: minimize the max tangent over the ellipsoid."""
    return epigraph_minmax(tangents, offsets, ellipsoid)


def sca_beamforming(noise_cov_diag, channels, m_init, tol=1e-6, max_iter=100,
                    return_trace=False):
    """Maximize the minimum beamformed gain under a quadratic power-shape cap.

    Successively linearizes the concave negated gains and solves the min-max
    subproblem over the ellipsoid m^H (noise cov) m <= 1.  Returns the
    beamformer rescaled onto the ellipsoid boundary (the objective is
    scale-invariant, so the relaxation is tight after rescaling); with
    ``return_trace`` also the per-iteration worst-gain values.
    """
    q = np.asarray(noise_cov_diag, dtype=float)
    h = np.asarray(channels)
    if np.any(q <= 0):
        raise SolverError("noise covariance must be strictly positive")
    # whiten by the covariance: the ellipsoid becomes the unit ball and the
    # subproblems stay well conditioned however widely the entries spread
    root_q = np.sqrt(q)
    hw = h / root_q[:, None]
    h_scale = float(np.max(np.linalg.norm(hw, axis=0)))
    if h_scale <= 0:
        raise SolverError("degenerate channels")
    hn = hw / h_scale

    gain_mats = _gain_quadratics(hn)  # (K, 2n, 2n)
    ell = np.eye(2 * h.shape[0])
    m = complex_to_real(np.asarray(m_init) * root_q)
    m = m / np.linalg.norm(m)

    def worst_gain(vec):
        return float(np.min(np.einsum("kij,i,j->k", gain_mats, vec, vec)))

    best = worst_gain(m)
    trace = [best]
    for _ in range(max_iter):
        slopes = gain_mats @ m  # (K, 2n)
        tangents = -2.0 * slopes
        offsets = slopes @ m
        new = solve_sca_subproblem(tangents, offsets, ell)
        cand = worst_gain(new)
        if cand < best * (1.0 - 1e-14) - 1e-300:
            break  # numerically stalled; keep the better iterate
        moved = float(np.linalg.norm(new - m))
        m, best = new, cand
        trace.append(best)
        if moved < tol:
            break
    m = m / np.linalg.norm(m)
    result = real_to_complex(m) / root_q
    if return_trace:
        return result, np.array(trace)
    return result


def _capacity_nats(eigenvalues, iso_q):
    return float(np.sum(np.log1p(eigenvalues / iso_q)))


def isotropic_capacity_quant(channels, power_ul, cap_bits, noise_power_w,
                             q_min=None, q_max=None):
    """Bisect the isotropic quantization level that meets the rate with equality."""
    h = np.asarray(channels)
    dim = h.shape[0]
    unit = noise_power_w if noise_power_w > 0 else 1.0
    sig = (power_ul / unit) * (h @ h.conj().T)
    sig[np.diag_indices_from(sig)] += noise_power_w / unit
    eig = np.maximum(np.linalg.eigvalsh(sig), 0.0)
    lo = QUANT_FLOOR_FACTOR if q_min is None else q_min / unit
    hi = (1e8 * (1.0 + eig.sum() / dim)) if q_max is None else q_max / unit
    target = cap_bits * LOG2
    if _capacity_nats(eig, hi) > target:
        raise UplinkInfeasibleError(
            f"rate budget {cap_bits} bits unreachable below the quantization cap"
        )
    if _capacity_nats(eig, lo) <= target:
        return lo * unit  # budget slack even at the floor
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if _capacity_nats(eig, mid) > target:
            lo = mid
        else:
            hi = mid
    return hi * unit


def optimize_uplink_quantization(beamformer, channels, power_ul, cap_bits,
                                 noise_power_w, q_start=None):
    """Minimize the beamformed quantization noise under the rate budget.

    Diagonal covariance entries are driven down until the fronthaul rate
    constraint activates; entries the beamformer ignores drift up to the
    cap, buying rate slack for the ones that matter.
    """
    if cap_bits <= 0:
        raise UplinkInfeasibleError("rate budget must be positive")
    h = np.asarray(channels)
    m = np.asarray(beamformer)
    dim = h.shape[0]
    unit = noise_power_w if noise_power_w > 0 else 1.0
    A = (power_ul / unit) * (h @ h.conj().T)
    A[np.diag_indices_from(A)] += noise_power_w / unit
    q_lo = QUANT_FLOOR_FACTOR
    q_hi = 1e8 * (1.0 + float(np.trace(A).real) / dim)
    target = cap_bits * LOG2

    def constraint_value(q):
        chol = np.linalg.cholesky(A + np.diag(q.astype(complex)))
        logdet = 2.0 * float(np.sum(np.log(np.abs(np.diag(chol)))))
        return logdet - float(np.sum(np.log(q))) - target

    def constraint(q):
        M = A + np.diag(q.astype(complex))
        sign, logdet = np.linalg.slogdet(M)
        B = np.linalg.inv(M)
        val = float(logdet) - float(np.sum(np.log(q))) - target
        grad = np.diag(B).real - 1.0 / q
        hess = -np.abs(B) ** 2 + np.diag(1.0 / q**2)
        return val, grad, hess

    weights = np.abs(m) ** 2
    wmax = float(weights.max())
    if wmax > 0:
        weights = weights / wmax

    start = None
    if q_start is not None:
        # raising every entry strictly lowers the rate, so a small outward
        # nudge moves a boundary point into the interior
        cand = np.clip(
            np.asarray(q_start, dtype=float) * (1.0 + 1e-3) / unit,
            q_lo * 1.01,
            q_hi * 0.99,
        )
        if constraint(cand)[0] < 0:
            start = cand
    if start is None:
        iso = isotropic_capacity_quant(channels, power_ul, cap_bits, noise_power_w) / unit
        start = np.full(dim, min(max(iso * (1.0 + 1e-3), q_lo * 1.01), q_hi * 0.99))
        if constraint(start)[0] >= 0:
            start = np.minimum(start * 1.5, q_hi * 0.99)
        if constraint(start)[0] >= 0:
            raise UplinkInfeasibleError("could not find a strictly feasible start")

    q = barrier_newton_diag(
        weights, constraint, start, q_lo, q_max=q_hi,
        constraint_value=constraint_value,
    )
    return q * unit


def weakest_device_matched_filter(channels, noise_cov_diag):
    """Whitened matched filter aimed at the device with the least headroom."""
    q = np.asarray(noise_cov_diag, dtype=float)
    h = np.asarray(channels)
    scores = np.sum(np.abs(h) ** 2 / q[:, None], axis=0).real
    m = h[:, int(np.argmin(scores))] / q
    return m / np.sqrt(float(np.sum(q * np.abs(m) ** 2)))


def uplink_objective(beamformer, quant_diag, channels, power_ul, noise_power_w,
                     phi1):
    """Weighted effective-noise objective of the uplink design problem."""
    z = channels.conj().T @ np.asarray(beamformer)
    eta = power_ul * float(np.min(np.abs(z) ** 2))
    if eta <= 0:
        return np.inf
    sigma2 = uplink_noise_variance(beamformer, eta, quant_diag, noise_power_w)
    return float(np.sum(phi1)) * sigma2


def optimize_uplink(channels, power_ul, cap_bits, noise_power_w, phi1,
                    tol=1e-6, max_outer=50, max_inner=100, init=None):
    """Alternate beamforming and quantization design for the uplink.

    ``cap_bits=None`` disables the fronthaul constraint (quantization pinned
    at the floor) and reduces the problem to pure beamforming.  ``init`` may
    carry a (beamformer, quant_diag) warm start.  Returns
    (beamformer, quant_diag, objective trace); the trace is non-increasing.
    """
    h = np.asarray(channels)
    q_floor = QUANT_FLOOR_FACTOR * (noise_power_w if noise_power_w > 0 else 1.0)

    if cap_bits is None:
        q = np.full(h.shape[0], q_floor)
        m0 = weakest_device_matched_filter(h, noise_power_w + q)
        trace = [uplink_objective(m0, q, h, power_ul, noise_power_w, phi1)]
        m = sca_beamforming(noise_power_w + q, h, m0, tol, max_inner)
        trace.append(uplink_objective(m, q, h, power_ul, noise_power_w, phi1))
        return m, q, np.array(trace)

    if init is not None:
        m, q = np.asarray(init[0], dtype=complex), np.asarray(init[1], dtype=float)
    else:
        iso = isotropic_capacity_quant(h, power_ul, cap_bits, noise_power_w)
        q = np.full(h.shape[0], max(iso, q_floor))
        m = weakest_device_matched_filter(h, noise_power_w + q)

    def objective(mm, qq):
        return uplink_objective(mm, qq, h, power_ul, noise_power_w, phi1)

    def direction_distance(a, b):
        # distance between unit beamformers, invariant to a global phase
        overlap = min(abs(np.vdot(a, b)), 1.0)
        return float(np.sqrt(max(2.0 * (1.0 - overlap), 0.0)))

    trace = [objective(m, q)]
    prev_m = m / np.linalg.norm(m)
    prev_q = q.copy()
    for _ in range(max_outer):
        m_new = sca_beamforming(noise_power_w + q, h, m, tol, max_inner)
        if objective(m_new, q) <= trace[-1]:
            m = m_new
        trace.append(objective(m, q))

        q_new = optimize_uplink_quantization(
            m, h, power_ul, cap_bits, noise_power_w, q_start=q
        )
        if objective(m, q_new) <= trace[-1]:
            q = q_new
        trace.append(objective(m, q))

        unit_m = m / np.linalg.norm(m)
        moved = direction_distance(unit_m, prev_m)
        moved += float(np.linalg.norm(q - prev_q)) / max(
            float(np.linalg.norm(prev_q)), 1e-300
        )
        prev_m, prev_q = unit_m, q.copy()
        improvement = (trace[-3] - trace[-1]) / max(abs(trace[-3]), 1e-300)
        if moved < tol or improvement < max(0.1 * tol, 1e-12):
            break
    return m, q, np.array(trace)
