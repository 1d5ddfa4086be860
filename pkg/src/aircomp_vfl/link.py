"""Analog uplink superposition, fronthaul quantization, and downlink broadcast.

All closed-form quantities (effective noise variances, transmit powers,
compression rates) live here next to the Monte-Carlo round simulators that
they describe.  Complex noise CN(0, v) always splits its variance evenly
between real and imaginary parts, which is what produces the 1/2 factors in
the effective-noise formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG2 = np.log(2.0)
ZF_RELATIVE_TOLERANCE = 1e-12


class LinkError(Exception):
    pass


class ZeroForcingError(LinkError):
    """Beamformed gain too close to zero for channel inversion."""


@dataclass(frozen=True)
class UplinkDesign:
    """Receive beamformer, quantization noise levels, and zero-forcing scalars."""

    beamformer: np.ndarray  # m, (N*M,) complex
    quant_diag: np.ndarray  # diagonal of Q_UL, (N*M,) positive
    power_factor: float  # eta
    transmit_scalars: np.ndarray  # b_k, (K,) complex

    def __post_init__(self):
        if np.any(np.asarray(self.quant_diag) <= 0):
            raise ValueError("uplink quantization diagonal must be strictly positive")
        if self.power_factor < 0:
            raise ValueError("power-control factor must be nonnegative")


@dataclass(frozen=True)
class DownlinkDesign:
    """Transmit beamformer, quantization noise levels, and receive scalars."""

    beamformer: np.ndarray  # u, (N*M,) complex
    quant_diag: np.ndarray  # diagonal of Q_DL, (N*M,) positive
    receive_scalars: np.ndarray  # b_k, (K,) complex

    def __post_init__(self):
        if np.any(np.asarray(self.quant_diag) <= 0):
            raise ValueError("downlink quantization diagonal must be strictly positive")


@dataclass(frozen=True)
class SignalBlock:
    """A block of per-slot values plus the normalization metadata that
    round-trips it back to the raw scale."""

    values: np.ndarray  # (L,) or (L, n_streams)
    offsets: np.ndarray
    scales: np.ndarray
    constant: bool = field(default=False)


def normalize_block(values, common_scale=False):
    """Center and scale each stream to zero mean, unit variance.

    With ``common_scale`` every stream shares one scale (the largest stream
    standard deviation) so that a sum of streams can be undone with shared
    metadata; individual streams then have variance at most one.  A block
    with zero variance is passed through unchanged and flagged.
    """
    raw = np.asarray(values, dtype=float)
    cols = raw.reshape(raw.shape[0], -1)
    offsets = cols.mean(axis=0)
    stds = cols.std(axis=0)
    degenerate = stds <= 1e-12 * (1.0 + np.abs(offsets))
    if common_scale:
        scales = np.full_like(stds, stds.max())
    else:
        scales = stds.copy()
    if np.all(degenerate):
        return SignalBlock(raw.copy(), np.zeros_like(offsets), np.ones_like(stds), True)
    scales[scales <= 1e-12 * (1.0 + np.abs(offsets))] = 1.0
    normalized = ((cols - offsets) / scales).reshape(raw.shape)
    return SignalBlock(normalized, offsets, scales, False)


def denormalize_block(block):
    """Invert :func:`normalize_block`, returning the raw values."""
    vals = np.asarray(block.values, dtype=float)
    if block.constant:
        return vals.copy()
    cols = vals.reshape(vals.shape[0], -1)
    return (cols * block.scales + block.offsets).reshape(vals.shape)


def _check_invertible(gains, beamformer, channels):
    floor = ZF_RELATIVE_TOLERANCE * np.linalg.norm(beamformer) * max(
        np.linalg.norm(channels, axis=0).max(), np.finfo(float).tiny
    )
    if np.any(np.abs(gains) <= floor):
        raise ZeroForcingError(
            "beamformed channel gain below the inversion threshold"
        )


def zero_forcing_uplink(beamformer, channels_ul, power_ul):
    """Channel-inverting transmit scalars and the matching power-control factor.

    Each scalar cancels the receive-combined gain m^H h_k; the weakest
    effective channel transmits at full power and everyone else backs off so
    all scaled signals arrive with a common real amplitude.
    """
    if power_ul <= 0:
        raise ValueError("power_ul must be positive")
    z = np.asarray(beamformer).conj() @ np.asarray(channels_ul)  # m^H h_k, (K,)
    _check_invertible(z, beamformer, channels_ul)
    gains = np.abs(z) ** 2
    eta = power_ul * gains.min()
    scalars = np.sqrt(eta) * z.conj() / gains
    return float(eta), scalars


def downlink_receive_scalars(beamformer, channels_dl):
    """Per-device scalars that invert the beamformed downlink gain h_k^H u."""
    z = np.asarray(channels_dl).conj().T @ np.asarray(beamformer)  # h_k^H u, (K,)
    _check_invertible(z, beamformer, channels_dl)
    return z.conj() / np.abs(z) ** 2


def uplink_noise_variance(beamformer, power_factor, quant_diag, noise_power_w):
    """Variance of the effective uplink noise on the aggregate estimate."""
    if power_factor <= 0:
        raise ValueError("power-control factor must be positive")
    m = np.asarray(beamformer)
    quad = noise_power_w * np.vdot(m, m).real + float(
        np.sum(np.asarray(quant_diag) * np.abs(m) ** 2)
    )
    return quad / (2.0 * power_factor)


def downlink_noise_variance(receive_scalars, channels_dl, quant_diag, noise_power_w):
    """Per-device variance of the effective downlink noise, shape (K,)."""
    b2 = np.abs(np.asarray(receive_scalars)) ** 2
    h = np.atleast_2d(channels_dl.T).T  # (N*M, K)
    quad = np.sum(np.asarray(quant_diag)[:, None] * np.abs(h) ** 2, axis=0)
    return 0.5 * b2 * (noise_power_w + quad)


def _logdet_hermitian(matrix):
    sign, logdet = np.linalg.slogdet(matrix)
    if sign.real <= 0 or not np.isfinite(logdet):
        raise LinkError("matrix is not positive definite")
    return float(logdet)


def uplink_capacity_bits(channels_ul, power_ul, quant_diag, noise_power_w):
    """Fronthaul rate of the uplink compression, in bits per channel use.

    Joint form over the concatenated servers: signal covariance at full
    per-device power plus channel noise, against the quantization noise.
    """
    q = np.asarray(quant_diag, dtype=float)
    if np.any(q <= 0):
        raise LinkError("quantization covariance must be strictly positive")
    h = np.asarray(channels_ul)
    cov = power_ul * (h @ h.conj().T)
    cov[np.diag_indices_from(cov)] += noise_power_w + q
    return (_logdet_hermitian(cov) - float(np.sum(np.log(q)))) / LOG2


def downlink_capacity_bits(beamformer, quant_diag):
    """Fronthaul rate of the downlink compression, in bits per channel use.

    Rank-one signal covariance makes the log-det ratio collapse to
    log2(1 + u^H Q^{-1} u).
    """
    q = np.asarray(quant_diag, dtype=float)
    if np.any(q <= 0):
        raise LinkError("quantization covariance must be strictly positive")
    u = np.asarray(beamformer)
    return float(np.log1p(np.sum(np.abs(u) ** 2 / q)) / LOG2)


def downlink_power(beamformer, quant_diag):
    """Total transmit power across edge servers: beam power plus quantization."""
    u = np.asarray(beamformer)
    return float(np.vdot(u, u).real + np.sum(quant_diag))


def _complex_noise(rng, shape, variances):
    """CN(0, v) samples with v per row; variances scalar or (rows,)."""
    v = np.broadcast_to(np.asarray(variances, dtype=float), (shape[0],))
    scale = np.sqrt(v / 2.0)[:, None]
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def uplink_round(signals, design, channels_ul, noise_power_w, rng, normalize=True):
    """Simulate one uplink block and estimate the per-slot aggregates.

    ``signals`` holds one column per device (L slots by K devices).  Returns
    the estimated aggregates (L,) and an info dict with the effective noise
    variance on the de-normalized scale.
    """
    rng = np.random.default_rng(rng)
    S = np.asarray(signals, dtype=float)
    if S.ndim != 2:
        raise ValueError("signals must be (slots, devices)")
    if normalize:
        block = normalize_block(S, common_scale=True)
        tx, scale = block.values, float(block.scales[0])
        offset_total = float(np.sum(block.offsets))
    else:
        tx, scale, offset_total = S, 1.0, 0.0

    m = design.beamformer
    faded = channels_ul @ (design.transmit_scalars[:, None] * tx.T)  # (N*M, L)
    noisy = (
        faded
        + _complex_noise(rng, faded.shape, noise_power_w)
        + _complex_noise(rng, faded.shape, design.quant_diag)
    )
    estimate = (m.conj() @ noisy).real / np.sqrt(design.power_factor)
    sigma2 = uplink_noise_variance(
        m, design.power_factor, design.quant_diag, noise_power_w
    )
    info = {
        "sigma2_ul": sigma2,
        "scale": scale,
        "sigma2_ul_effective": scale**2 * sigma2,
    }
    return scale * estimate + offset_total, info


def downlink_round(values, design, channels_dl, noise_power_w, rng, normalize=True):
    """Simulate one broadcast block; every device estimates the same stream.

    Returns per-device estimates (L, K) and an info dict with per-device
    effective noise variances on the de-normalized scale.
    """
    rng = np.random.default_rng(rng)
    g = np.asarray(values, dtype=float)
    if g.ndim != 1:
        raise ValueError("broadcast values must be a 1-D stream")
    if normalize:
        block = normalize_block(g)
        tx, scale, offset = block.values, float(block.scales[0]), float(block.offsets[0])
    else:
        tx, scale, offset = g, 1.0, 0.0

    h = channels_dl  # (N*M, K)
    L = tx.shape[0]
    beam_gain = h.conj().T @ design.beamformer  # (K,)
    quant = _complex_noise(rng, (h.shape[0], L), design.quant_diag)
    awgn = _complex_noise(rng, (h.shape[1], L), noise_power_w)
    received = beam_gain[:, None] * tx[None, :] + h.conj().T @ quant + awgn
    estimate = (design.receive_scalars[:, None] * received).real  # (K, L)
    sigma2 = downlink_noise_variance(
        design.receive_scalars, h, design.quant_diag, noise_power_w
    )
    info = {
        "sigma2_dl": sigma2,
        "scale": scale,
        "sigma2_dl_effective": scale**2 * sigma2,
    }
    return scale * estimate.T + offset, info
