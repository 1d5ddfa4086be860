"""Network geometry, path loss, small-scale fading, and noise power."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PATH_LOSS_OFFSET_DB = 30.6
PATH_LOSS_SLOPE_DB = 36.7


@dataclass(frozen=True)
class GeometryConfig:
    radius_m: float = 500.0
    server_layout: str = "uniform"  # 'uniform' inside the disc, or 'center'

    def __post_init__(self):
        if self.radius_m <= 0:
            raise ValueError("radius_m must be positive")
        if self.server_layout not in ("uniform", "center"):
            raise ValueError(f"unknown server_layout {self.server_layout!r}")


@dataclass(frozen=True)
class Topology:
    """Device and edge-server positions, in meters, inside a disc."""

    device_positions: np.ndarray  # (K, 2)
    server_positions: np.ndarray  # (N, 2)
    radius_m: float

    @property
    def num_devices(self) -> int:
        return self.device_positions.shape[0]

    @property
    def num_servers(self) -> int:
        return self.server_positions.shape[0]

    def distances(self) -> np.ndarray:
        """Device-to-server distance matrix, shape (K, N)."""
        diff = self.device_positions[:, None, :] - self.server_positions[None, :, :]
        return np.linalg.norm(diff, axis=2)


@dataclass(frozen=True)
class ChannelState:
    """One coherence block of uplink/downlink channels, server-major layout.

    Column k of each matrix is the concatenated channel of device k across
    all N servers; server n occupies rows n*M .. (n+1)*M - 1.
    """

    uplink: np.ndarray  # (N*M, K) complex
    downlink: np.ndarray  # (N*M, K) complex
    noise_power_w: float
    num_servers: int
    antennas_per_server: int

    def __post_init__(self):
        nm = self.num_servers * self.antennas_per_server
        if self.uplink.shape[0] != nm or self.downlink.shape[0] != nm:
            raise ValueError("channel vectors must have N*M rows")
        if not (np.all(np.isfinite(self.uplink.view(float)))
                and np.all(np.isfinite(self.downlink.view(float)))):
            raise ValueError("channel coefficients must be finite")


def path_loss_db(distance_m):
    """Distance-dependent large-scale attenuation in dB."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return PATH_LOSS_OFFSET_DB + PATH_LOSS_SLOPE_DB * np.log10(d)


def path_loss_linear(distance_m):
    """Linear power gain 10^(-PL/10) for the configured path-loss law."""
    return 10.0 ** (-path_loss_db(distance_m) / 10.0)


def noise_power(psd_dbm_per_hz, bandwidth_hz, noise_figure_db):
    """Thermal-noise power in watts over the given bandwidth."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    total_dbm = psd_dbm_per_hz + 10.0 * np.log10(bandwidth_hz) + noise_figure_db
    return 10.0 ** ((total_dbm - 30.0) / 10.0)


def _uniform_disc(rng, count, radius):
    r = radius * np.sqrt(rng.random(count))
    theta = 2.0 * np.pi * rng.random(count)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def sample_topology(num_devices, num_servers, geometry, seed):
    """Place devices (and servers, unless layout is 'center') uniformly in the disc."""
    rng = np.random.default_rng(seed)
    devices = _uniform_disc(rng, num_devices, geometry.radius_m)
    if geometry.server_layout == "center":
        servers = np.zeros((num_servers, 2))
    else:
        servers = _uniform_disc(rng, num_servers, geometry.radius_m)
    return Topology(devices, servers, geometry.radius_m)


def _complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_channels(topology, antennas_per_server, noise_power_w, seed):
    """Draw one quasi-static fading block.

    Each antenna coefficient is sqrt(path-loss gain) times a CN(0, 1) fade;
    uplink and downlink blocks are drawn independently.
    """
    rng = np.random.default_rng(seed)
    K, N, M = topology.num_devices, topology.num_servers, antennas_per_server
    gains = path_loss_linear(topology.distances())  # (K, N)
    amp = np.sqrt(np.repeat(gains.T, M, axis=0))  # (N*M, K), server-major
    uplink = amp * _complex_normal(rng, (N * M, K))
    downlink = amp * _complex_normal(rng, (N * M, K))
    return ChannelState(uplink, downlink, noise_power_w, N, M)
