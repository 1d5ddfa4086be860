"""Monte-Carlo and property checks runnable from the command line.

Each check returns (name, passed, detail); the CLI prints one line per
check.  These are quicker variants of the test-suite verifications, meant
for sanity-checking an installation or a modified configuration.
"""

from __future__ import annotations

import numpy as np

from .channel import GeometryConfig, sample_channels, sample_topology
from .data import synthetic_dataset
from .downlink_opt import logdet_majorant, sigma_update
from .gap import effective_noise_moment, sigmoid_link_G, verify_lemma1
from .link import (
    DownlinkDesign,
    UplinkDesign,
    downlink_capacity_bits,
    downlink_noise_variance,
    downlink_receive_scalars,
    downlink_round,
    uplink_noise_variance,
    uplink_round,
    zero_forcing_uplink,
)
from .model import LossSpec, loss_and_G, train_error_free
from .solvers import pd_logdet


def _random_link(seed, num_devices=4, num_servers=2, antennas=2):
    topology = sample_topology(
        num_devices, num_servers, GeometryConfig(radius_m=200.0), seed
    )
    sigma_z2 = 1e-12
    channels = sample_channels(topology, antennas, sigma_z2, seed + 1)
    rng = np.random.default_rng(seed + 2)
    dim = num_servers * antennas
    power_ul = 0.2
    m = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    q_ul = sigma_z2 * rng.uniform(0.5, 2.0, dim)
    eta, b_ul = zero_forcing_uplink(m, channels.uplink, power_ul)
    ul = UplinkDesign(m, q_ul, eta, b_ul)
    u = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    q_dl = rng.uniform(0.5, 2.0, dim) * 1e-3
    dl = DownlinkDesign(u, q_dl, downlink_receive_scalars(u, channels.downlink))
    return channels, ul, dl, sigma_z2


def check_uplink_noise_variance(seed=0, draws=200000, tol=0.02):
    channels, ul, _, sigma_z2 = _random_link(seed)
    L = draws
    signals = np.zeros((L, channels.uplink.shape[1]))
    s_hat, _ = uplink_round(
        signals, ul, channels.uplink, sigma_z2, seed + 3, normalize=False
    )
    target = uplink_noise_variance(ul.beamformer, ul.power_factor, ul.quant_diag, sigma_z2)
    rel = abs(np.var(s_hat) - target) / target
    mean_se = abs(np.mean(s_hat)) / (np.sqrt(target / L))
    ok = rel < tol and mean_se < 4.0
    return (
        "uplink effective-noise variance",
        ok,
        f"relative error {rel:.3%}, mean within {mean_se:.2f} standard errors",
    )


def check_downlink_noise_variance(seed=1, draws=200000, tol=0.02):
    channels, _, dl, sigma_z2 = _random_link(seed)
    g = np.zeros(draws)
    est, _ = downlink_round(
        g, dl, channels.downlink, sigma_z2, seed + 4, normalize=False
    )
    target = downlink_noise_variance(
        dl.receive_scalars, channels.downlink, dl.quant_diag, sigma_z2
    )
    rel = float(np.max(np.abs(est.var(axis=0) - target) / target))
    ok = rel < tol
    return ("downlink effective-noise variance", ok, f"worst relative error {rel:.3%}")


def check_zero_forcing_consistency(seed=2):
    channels, ul, dl, _ = _random_link(seed)
    rng = np.random.default_rng(seed)
    signals = rng.standard_normal((64, channels.uplink.shape[1]))
    s_hat, _ = uplink_round(signals, ul, channels.uplink, 0.0, seed, normalize=False)
    noiseless = UplinkDesign(
        ul.beamformer, np.full_like(ul.quant_diag, 1e-300), ul.power_factor,
        ul.transmit_scalars,
    )
    s_hat, _ = uplink_round(signals, noiseless, channels.uplink, 0.0, seed,
                            normalize=False)
    err = float(np.max(np.abs(s_hat - signals.sum(axis=1))))
    return ("zero-forcing aggregation consistency", err < 1e-9,
            f"max aggregate error {err:.2e}")


def check_appendix_moment(seed=3, draws=100000, tol=0.02):
    dataset = synthetic_dataset(seed, 32, 8, 4, label_noise=0.5)
    rng = np.random.default_rng(seed)
    g_prime = rng.uniform(0.05, 0.25, dataset.num_samples)
    mc, closed = effective_noise_moment(
        dataset, g_prime, 0.3, rng.uniform(0.05, 0.2, 4), draws, rng
    )
    rel = float(np.max(np.abs(mc - closed) / closed))
    return ("gradient-perturbation second moment", rel < tol,
            f"worst relative error {rel:.3%}")


def check_lemma2_majorization(seed=4, pairs=200):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(pairs):
        dim = int(rng.integers(2, 9))
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        b = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        omega = a @ a.conj().T + np.eye(dim) * 0.1
        sigma = b @ b.conj().T + np.eye(dim) * 0.1
        gap = pd_logdet(omega) - logdet_majorant(omega, sigma)
        worst = max(worst, gap)
    eq_gap = abs(pd_logdet(omega) - logdet_majorant(omega, omega))
    ok = worst <= 1e-9 and eq_gap <= 1e-9
    return ("log-det trace majorization", ok,
            f"worst violation {worst:.2e}, equality gap {eq_gap:.2e}")


def check_lemma1_bias(seed=5, draws=100000):
    g_fn = sigmoid_link_G(1.0)
    sigmas = np.array([0.4, 0.2, 0.1, 0.05])
    bias = np.abs(verify_lemma1(g_fn, 1.0, sigmas, draws, seed))
    ratio = bias / sigmas**2
    ok = bias[-1] < bias[0] and ratio.max() < 1.0
    return ("small-noise unbiasedness", ok,
            f"bias shrinks {bias[0]:.2e} -> {bias[-1]:.2e}")


def check_capacity_determinant_lemma(seed=6):
    rng = np.random.default_rng(seed)
    dim = 6
    u = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    q = rng.uniform(0.5, 2.0, dim)
    direct = (
        pd_logdet(np.outer(u, u.conj()) + np.diag(q)) - float(np.sum(np.log(q)))
    ) / np.log(2.0)
    fast = downlink_capacity_bits(u, q)
    err = abs(direct - fast)
    return ("downlink capacity determinant lemma", err < 1e-9,
            f"formula mismatch {err:.2e}")


def check_error_free_descent(seed=7):
    dataset = synthetic_dataset(seed, 200, 16, 4, label_noise=0.5)
    spec = LossSpec(reg_weight=0.05, learning_rate=0.2)
    _, losses = train_error_free(dataset, spec, 50)
    ok = bool(np.all(np.diff(losses) <= 1e-12))
    return ("error-free loss descent", ok,
            f"loss {losses[0]:.4f} -> {losses[-1]:.4f}")


def check_surrogate_equality(seed=8):
    rng = np.random.default_rng(seed)
    dim = 5
    u = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    q = rng.uniform(0.2, 1.0, dim)
    sigma = sigma_update(u, q)
    omega = sigma  # equality case of the majorization
    gap = abs(logdet_majorant(omega, sigma) - pd_logdet(omega))
    return ("surrogate equality after covariance refresh", gap < 1e-9,
            f"gap {gap:.2e}")


ALL_CHECKS = (
    check_uplink_noise_variance,
    check_downlink_noise_variance,
    check_zero_forcing_consistency,
    check_appendix_moment,
    check_lemma2_majorization,
    check_lemma1_bias,
    check_capacity_determinant_lemma,
    check_error_free_descent,
    check_surrogate_equality,
)


def run_verification(printer=print):
    """Run every check; returns True when all pass."""
    all_ok = True
    for check in ALL_CHECKS:
        name, ok, detail = check()
        all_ok &= ok
        printer(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok
