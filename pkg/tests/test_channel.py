import numpy as np
import pytest

from aircomp_vfl.channel import (
    GeometryConfig,
    Topology,
    noise_power,
    path_loss_db,
    path_loss_linear,
    sample_channels,
    sample_topology,
)


class TestPathLoss:
    def test_unit_distance_is_offset_only(self):
        assert path_loss_db(1.0) == pytest.approx(30.6, abs=1e-12)

    def test_hundred_meters(self):
        # 30.6 + 36.7 * log10(100) = 30.6 + 73.4
        assert path_loss_db(100.0) == pytest.approx(104.0, abs=1e-10)

    def test_ten_meters_calculator_value(self):
        assert path_loss_db(10.0) == pytest.approx(67.3, abs=1e-10)

    def test_nonpositive_distance_rejected(self):
        with pytest.raises(ValueError):
            path_loss_db(0.0)
        with pytest.raises(ValueError):
            path_loss_db(-3.0)


class TestNoisePower:
    def test_reference_settings(self):
        # -169 dBm/Hz over 10 MHz with a 7 dB noise figure: -92 dBm
        watts = noise_power(-169.0, 1e7, 7.0)
        assert watts == pytest.approx(10 ** (-12.2), rel=1e-12)

    def test_unit_bandwidth_identity(self):
        watts = noise_power(-169.0, 1.0, 0.0)
        assert watts == pytest.approx(10 ** ((-169.0 - 30.0) / 10.0), rel=1e-12)

    def test_doubling_bandwidth_adds_three_db(self):
        ratio = noise_power(-169.0, 2e6, 7.0) / noise_power(-169.0, 1e6, 7.0)
        assert 10 * np.log10(ratio) == pytest.approx(10 * np.log10(2.0), abs=1e-12)

    def test_nonpositive_bandwidth_rejected(self):
        with pytest.raises(ValueError):
            noise_power(-169.0, 0.0, 7.0)


class TestTopology:
    def test_same_seed_identical(self):
        geo = GeometryConfig(radius_m=500.0)
        a = sample_topology(10, 4, geo, 42)
        b = sample_topology(10, 4, geo, 42)
        np.testing.assert_array_equal(a.device_positions, b.device_positions)
        np.testing.assert_array_equal(a.server_positions, b.server_positions)

    def test_mean_radius_matches_uniform_disc_moment(self):
        geo = GeometryConfig(radius_m=300.0)
        topo = sample_topology(10**4, 1, geo, 7)
        radii = np.linalg.norm(topo.device_positions, axis=1)
        assert radii.mean() == pytest.approx(2.0 / 3.0 * 300.0, rel=0.02)
        assert radii.max() <= 300.0

    def test_degenerate_radius_rejected(self):
        with pytest.raises(ValueError):
            GeometryConfig(radius_m=0.0)

    def test_center_layout_puts_servers_at_origin(self):
        geo = GeometryConfig(radius_m=100.0, server_layout="center")
        topo = sample_topology(5, 3, geo, 0)
        np.testing.assert_array_equal(topo.server_positions, np.zeros((3, 2)))


class TestChannels:
    @staticmethod
    def fixed_topology(distances):
        device = np.zeros((1, 2))
        servers = np.column_stack([np.asarray(distances), np.zeros(len(distances))])
        return Topology(device, servers, radius_m=1000.0)

    def test_seed_determinism_byte_identical(self):
        topo = sample_topology(6, 3, GeometryConfig(radius_m=200.0), 1)
        a = sample_channels(topo, 2, 1e-12, 99)
        b = sample_channels(topo, 2, 1e-12, 99)
        assert a.uplink.tobytes() == b.uplink.tobytes()
        assert a.downlink.tobytes() == b.downlink.tobytes()

    def test_uplink_downlink_independent(self):
        topo = sample_topology(6, 3, GeometryConfig(radius_m=200.0), 1)
        ch = sample_channels(topo, 2, 1e-12, 5)
        assert not np.allclose(ch.uplink, ch.downlink)

    def test_per_antenna_second_moment_matches_path_loss(self):
        # one device, two servers at distinct distances, many antennas:
        # each server-major block must average to its own path-loss gain
        topo = self.fixed_topology([50.0, 400.0])
        M = 20000
        ch = sample_channels(topo, M, 1e-12, 3)
        gains = path_loss_linear(np.array([50.0, 400.0]))
        block0 = np.mean(np.abs(ch.uplink[:M, 0]) ** 2)
        block1 = np.mean(np.abs(ch.uplink[M:, 0]) ** 2)
        assert block0 == pytest.approx(gains[0], rel=0.02)
        assert block1 == pytest.approx(gains[1], rel=0.02)

    def test_magnitude_decreases_with_distance(self):
        topo = self.fixed_topology([10.0, 400.0])
        ch = sample_channels(topo, 5000, 1e-12, 4)
        near = np.mean(np.abs(ch.uplink[:5000, 0]) ** 2)
        far = np.mean(np.abs(ch.uplink[5000:, 0]) ** 2)
        assert near > far * 100

    def test_layout_has_exactly_nm_rows(self):
        topo = sample_topology(4, 3, GeometryConfig(radius_m=100.0), 2)
        ch = sample_channels(topo, 2, 1e-12, 0)
        assert ch.uplink.shape == (6, 4)
        assert ch.downlink.shape == (6, 4)
