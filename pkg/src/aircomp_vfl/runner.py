"""Experiment orchestration: configs, per-scheme transceiver design, the
simulated communication link driving the estimator, and metric files."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import GeometryConfig, noise_power, sample_channels, sample_topology
from .data import (
    FeaturePartitionedDataset,
    load_fashion_mnist,
    synthetic_dataset,
    train_test_split_dataset,
)
from .downlink_opt import optimize_downlink, solve_u_subproblem
from .estimator import VerticalFLClassifier
from .link import (
    DownlinkDesign,
    UplinkDesign,
    downlink_capacity_bits,
    downlink_noise_variance,
    downlink_power,
    downlink_receive_scalars,
    downlink_round,
    uplink_capacity_bits,
    uplink_noise_variance,
    uplink_round,
    zero_forcing_uplink,
)
from .uplink_opt import (
    QUANT_FLOOR_FACTOR,
    isotropic_capacity_quant,
    optimize_uplink,
    optimize_uplink_quantization,
    sca_beamforming,
)

SCHEMES = ("joint", "baseline1", "baseline2", "baseline3", "error-free", "massive-mimo")

# seed-stream tags so every random draw is a pure function of
# (master seed, trial, round, purpose)
_TAG_TOPOLOGY, _TAG_DATA, _TAG_CHANNEL, _TAG_NOISE_UL, _TAG_NOISE_DL = 1, 2, 3, 4, 5

CSV_HEADER = "t,loss,accuracy,sigma2_ul,mean_sigma2_dl,B_t"


def dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class LinkBudget:
    """Physical-layer constraints shared by every per-round design."""

    power_ul_w: float
    power_dl_w: float
    capacity_bits: float | None  # None disables the fronthaul constraint
    noise_power_w: float

    @property
    def quant_floor(self) -> float:
        return QUANT_FLOOR_FACTOR * self.noise_power_w


_DATASET_KEYS = {
    "synthetic": {"kind", "num_samples", "total_dim", "label_noise", "holdout_fraction"},
    "fashion_mnist": {"kind", "images", "labels", "test_images", "test_labels"},
}

_CONFIG_FIELDS = {
    "num_devices": int,
    "num_servers": int,
    "antennas_per_server": int,
    "capacity_mbps": (float, type(None)),
    "symbol_rate_msym": float,
    "power_ul_dbm": float,
    "power_dl_dbm": float,
    "noise_psd_dbm_hz": float,
    "bandwidth_hz": float,
    "noise_figure_db": float,
    "radius_m": float,
    "server_layout": str,
    "dataset": dict,
    "reg_weight": float,
    "learning_rate": (float, str),
    "num_rounds": int,
    "num_trials": int,
    "master_seed": int,
    "scheme": str,
    "redesign_every_round": bool,
    "normalize_signals": bool,
}


@dataclass(frozen=True)
class ExperimentConfig:
    num_devices: int = 8
    num_servers: int = 4
    antennas_per_server: int = 2
    capacity_mbps: float | None = 80.0
    symbol_rate_msym: float = 10.0
    power_ul_dbm: float = 23.0
    power_dl_dbm: float = 30.0
    noise_psd_dbm_hz: float = -169.0
    bandwidth_hz: float = 1e7
    noise_figure_db: float = 7.0
    radius_m: float = 500.0
    server_layout: str = "uniform"
    dataset: dict = field(
        default_factory=lambda: {
            "kind": "synthetic",
            "num_samples": 500,
            "total_dim": 32,
            "label_noise": 0.5,
            "holdout_fraction": 0.2,
        }
    )
    reg_weight: float = 0.05
    learning_rate: float | str = "auto"
    num_rounds: int = 50
    num_trials: int = 1
    master_seed: int = 0
    scheme: str = "joint"
    redesign_every_round: bool = True
    normalize_signals: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        for name in ("power_ul_dbm", "power_dl_dbm"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.capacity_mbps is not None and self.capacity_mbps <= 0:
            raise ValueError("capacity_mbps must be positive (or null for infinite)")
        if self.symbol_rate_msym <= 0 or self.bandwidth_hz <= 0:
            raise ValueError("symbol rate and bandwidth must be positive")
        if self.num_trials < 1 or self.num_rounds < 0:
            raise ValueError("num_trials must be >= 1 and num_rounds >= 0")
        if self.num_devices < 1 or self.num_servers < 1 or self.antennas_per_server < 1:
            raise ValueError("system sizes must be positive")
        if self.scheme == "massive-mimo":
            if self.capacity_mbps is not None:
                raise ValueError("massive-mimo runs require capacity_mbps = null")
            if self.server_layout != "center":
                raise ValueError("massive-mimo runs require server_layout = 'center'")
        kind = self.dataset.get("kind")
        if kind not in _DATASET_KEYS:
            raise ValueError(f"unknown dataset kind {kind!r}")
        unknown = set(self.dataset) - _DATASET_KEYS[kind]
        if unknown:
            raise ValueError(f"unknown dataset keys: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, raw):
        unknown = set(raw) - set(_CONFIG_FIELDS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        coerced = {}
        for key, value in raw.items():
            expected = _CONFIG_FIELDS[key]
            accepts_float = expected is float or (
                isinstance(expected, tuple) and float in expected
            )
            if accepts_float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            coerced[key] = value
        return cls(**coerced)

    def to_dict(self):
        out = {}
        for key in _CONFIG_FIELDS:
            out[key] = getattr(self, key)
        return out

    @property
    def capacity_bits(self) -> float | None:
        """Fronthaul budget in bits per channel use (Mbps over Msym/s)."""
        if self.capacity_mbps is None:
            return None
        return self.capacity_mbps / self.symbol_rate_msym

    @property
    def noise_power_w(self) -> float:
        return noise_power(self.noise_psd_dbm_hz, self.bandwidth_hz, self.noise_figure_db)

    def budget(self) -> LinkBudget:
        return LinkBudget(
            power_ul_w=dbm_to_watts(self.power_ul_dbm),
            power_dl_w=dbm_to_watts(self.power_dl_dbm),
            capacity_bits=self.capacity_bits,
            noise_power_w=self.noise_power_w,
        )

    def geometry(self) -> GeometryConfig:
        return GeometryConfig(radius_m=self.radius_m, server_layout=self.server_layout)


@dataclass(frozen=True)
class RoundTrace:
    round_index: int
    loss: float
    accuracy: float
    sigma2_ul: float
    mean_sigma2_dl: float
    gap_running: float
    wall_clock_s: float


def _uniform_beamformer(dim):
    return np.ones(dim, dtype=complex) / np.sqrt(dim)


def _baseline1_points(channels, budget):
    """Uniform beamformers with isotropic rate-tight quantization levels."""
    dim = channels.uplink.shape[0]
    m = _uniform_beamformer(dim)
    u = np.ones(dim, dtype=complex) * np.sqrt(budget.power_dl_w / (2.0 * dim))
    floor = budget.quant_floor
    if budget.capacity_bits is None:
        q_ul = np.full(dim, floor)
        q_dl = np.full(dim, floor)
        return m, q_ul, u, q_dl
    lam_ul = isotropic_capacity_quant(
        channels.uplink, budget.power_ul_w, budget.capacity_bits,
        budget.noise_power_w,
    )
    q_ul = np.full(dim, max(lam_ul, floor))
    lam_dl = (budget.power_dl_w / 2.0) / (np.exp2(budget.capacity_bits) - 1.0)
    if dim * lam_dl > budget.power_dl_w / 2.0 + 1e-12 * budget.power_dl_w:
        raise ValueError(
            "baseline power split cannot carry the rate-tight quantization level"
        )
    q_dl = np.full(dim, max(lam_dl, floor))
    return m, q_ul, u, q_dl


def design_for_scheme(scheme, channels, budget, phi2, tol=1e-5, max_outer=50):
    """Per-round transceiver design for one scheme on fixed channels.

    Returns (UplinkDesign, DownlinkDesign, diagnostics).  Optimized schemes
    start their descent from the Baseline-1 point, which makes their design
    objectives dominate it by construction.
    """
    h_ul, h_dl = channels.uplink, channels.downlink
    sigma_z2 = budget.noise_power_w
    m1, q_ul1, u1, q_dl1 = _baseline1_points(channels, budget)
    cap = budget.capacity_bits

    if scheme == "baseline1":
        m, q_ul, u, q_dl = m1, q_ul1, u1, q_dl1
    elif scheme == "baseline2":
        m = sca_beamforming(sigma_z2 + q_ul1, h_ul, m1, tol)
        u = solve_u_subproblem(
            u1, q_dl1, h_dl, phi2, budget.power_dl_w, tol,
            max_beam_power=budget.power_dl_w / 2.0,
            noise_floor_w=sigma_z2 if cap is None else 0.0,
        )
        q_ul, q_dl = q_ul1, q_dl1
    elif scheme == "baseline3":
        m, u = m1, u1
        if cap is None:
            q_ul, q_dl = q_ul1, q_dl1
        else:
            q_ul = optimize_uplink_quantization(
                m, h_ul, budget.power_ul_w, cap, sigma_z2, q_start=q_ul1
            )
            _, q_dl, _ = optimize_downlink(
                h_dl, budget.power_dl_w, cap, sigma_z2, phi2,
                tol, max_outer=max_outer, init=(u1, q_dl1),
                fix_beamformer=True,
            )
    elif scheme in ("joint", "massive-mimo"):
        m, q_ul, _ = optimize_uplink(
            h_ul, budget.power_ul_w, cap, sigma_z2, np.ones(len(phi2)),
            tol, max_outer=max_outer,
            init=None if cap is None else (m1, q_ul1),
        )
        # seed the block descent with the Baseline-2 beamformer: descending
        # from there dominates both uniform-beamformer baselines
        u_seed = solve_u_subproblem(
            u1, q_dl1, h_dl, phi2, budget.power_dl_w, tol,
            max_beam_power=budget.power_dl_w / 2.0,
            noise_floor_w=sigma_z2 if cap is None else 0.0,
        )
        u, q_dl, _ = optimize_downlink(
            h_dl, budget.power_dl_w, cap, sigma_z2, phi2,
            tol, max_outer=max_outer,
            init=None if cap is None else (u_seed, q_dl1),
        )
    else:
        raise ValueError(f"no transceiver design for scheme {scheme!r}")

    eta, b_ul = zero_forcing_uplink(m, h_ul, budget.power_ul_w)
    ul = UplinkDesign(m, q_ul, eta, b_ul)
    dl = DownlinkDesign(u, q_dl, downlink_receive_scalars(u, h_dl))
    diag = {
        "sigma2_ul": uplink_noise_variance(m, eta, q_ul, sigma_z2),
        "sigma2_dl": downlink_noise_variance(dl.receive_scalars, h_dl, q_dl, sigma_z2),
        "ul_capacity_bits": uplink_capacity_bits(
            h_ul, budget.power_ul_w, q_ul, sigma_z2
        ),
        "dl_capacity_bits": downlink_capacity_bits(u, q_dl),
        "dl_power_w": downlink_power(u, q_dl),
    }
    return ul, dl, diag


def baseline_design(channels, scheme, budget, phi2):
    """Baseline transceiver designs by number (1, 2, or 3)."""
    if scheme not in (1, 2, 3):
        raise ValueError("baseline scheme must be 1, 2, or 3")
    ul, dl, _ = design_for_scheme(f"baseline{scheme}", channels, budget, phi2)
    return ul, dl


class CloudRanLink:
    """Per-round channel sampling, transceiver design, and link simulation.

    Couples into the estimator through ``run_round``: transmits the local
    prediction block, applies the server-side derivative function to the
    noisy aggregates, and broadcasts the result back with downlink noise.
    """

    def __init__(self, scheme, budget, topology, antennas_per_server, phi2,
                 master_seed, trial, redesign_every_round=True, normalize=True,
                 design_tol=1e-3, design_max_outer=8):
        if scheme not in ("joint", "baseline1", "baseline2", "baseline3",
                          "massive-mimo"):
            raise ValueError(f"scheme {scheme!r} is not a simulated-link scheme")
        self.scheme = scheme
        self.budget = budget
        self.topology = topology
        self.antennas_per_server = antennas_per_server
        self.phi2 = np.asarray(phi2, dtype=float)
        self.master_seed = master_seed
        self.trial = trial
        self.redesign_every_round = redesign_every_round
        self.normalize = normalize
        self.design_tol = design_tol
        self.design_max_outer = design_max_outer
        self._frozen = None
        self.design_diagnostics = []

    def _seed(self, tag, round_index):
        return np.random.SeedSequence(
            (self.master_seed, self.trial, tag, round_index)
        )

    def _channels_and_designs(self, round_index):
        if not self.redesign_every_round and self._frozen is not None:
            return self._frozen
        draw_round = round_index if self.redesign_every_round else 0
        channels = sample_channels(
            self.topology, self.antennas_per_server, self.budget.noise_power_w,
            self._seed(_TAG_CHANNEL, draw_round),
        )
        ul, dl, diag = design_for_scheme(
            self.scheme, channels, self.budget, self.phi2, self.design_tol,
            self.design_max_outer,
        )
        state = (channels, ul, dl, diag)
        if not self.redesign_every_round:
            self._frozen = state
        return state

    def run_round(self, round_index, signals, g_fn):
        """Carry one round of local predictions up and derivatives back."""
        channels, ul_design, dl_design, diag = self._channels_and_designs(round_index)
        self.design_diagnostics.append(diag)
        S = np.asarray(signals, dtype=float)
        multiclass = S.ndim == 3
        if multiclass:
            L, K, C = S.shape
            flat = S.transpose(0, 2, 1).reshape(L * C, K)
        else:
            flat = S

        s_hat, ul_info = uplink_round(
            flat, ul_design, channels.uplink, self.budget.noise_power_w,
            self._seed(_TAG_NOISE_UL, round_index), normalize=self.normalize,
        )
        agg = s_hat.reshape(L, C) if multiclass else s_hat
        G = np.asarray(g_fn(agg), dtype=float)

        g_hat, dl_info = downlink_round(
            G.reshape(-1), dl_design, channels.downlink,
            self.budget.noise_power_w,
            self._seed(_TAG_NOISE_DL, round_index), normalize=self.normalize,
        )
        if multiclass:
            estimates = g_hat.reshape(L, C, -1).transpose(0, 2, 1)
        else:
            estimates = g_hat
        info = {
            "sigma2_ul_effective": ul_info["sigma2_ul_effective"],
            "sigma2_dl_effective": dl_info["sigma2_dl_effective"],
            "sigma2_ul_design": ul_info["sigma2_ul"],
            "sigma2_dl_design": dl_info["sigma2_dl"],
        }
        return estimates, info


def build_dataset(config):
    """Materialize the configured dataset as (train, test-or-None)."""
    ds = config.dataset
    if ds["kind"] == "synthetic":
        full = synthetic_dataset(
            np.random.SeedSequence((config.master_seed, _TAG_DATA)),
            ds["num_samples"], ds["total_dim"], config.num_devices,
            ds.get("label_noise", 0.0),
        )
        holdout = ds.get("holdout_fraction", 0.2)
        if holdout == 0:
            return full, None
        return train_test_split_dataset(
            full, holdout, np.random.SeedSequence((config.master_seed, _TAG_DATA, 1))
        )
    train = load_fashion_mnist(ds["images"], ds["labels"], config.num_devices)
    test = None
    if ds.get("test_images") and ds.get("test_labels"):
        test = load_fashion_mnist(
            ds["test_images"], ds["test_labels"], config.num_devices
        )
    return train, test


def run_trial(config, trial, train, test):
    """Train one trial and return its RoundTrace rows plus the estimator."""
    start = time.perf_counter()
    link = None
    if config.scheme != "error-free":
        topology = sample_topology(
            config.num_devices, config.num_servers, config.geometry(),
            np.random.SeedSequence((config.master_seed, trial, _TAG_TOPOLOGY)),
        )
        link = CloudRanLink(
            config.scheme, config.budget(), topology, config.antennas_per_server,
            train.block_norms_sq(), config.master_seed, trial,
            config.redesign_every_round, config.normalize_signals,
        )
    clf = VerticalFLClassifier(
        n_devices=config.num_devices,
        reg_weight=config.reg_weight,
        learning_rate=config.learning_rate,
        n_rounds=config.num_rounds,
        link=link,
    )
    eval_set = None
    if test is not None:
        eval_set = (test.full_matrix(), test.labels)
    clf.fit(train.full_matrix(), train.labels, eval_set=eval_set)

    elapsed = time.perf_counter() - start
    per_round = elapsed / max(config.num_rounds, 1)
    rows = []
    for t in range(1, config.num_rounds + 1):
        ledger = clf.gap_ledger_
        rows.append(
            RoundTrace(
                round_index=t,
                loss=float(clf.loss_curve_[t]),
                accuracy=float(clf.accuracy_curve_[t]) if eval_set else float("nan"),
                sigma2_ul=float(ledger.sigma2_ul[t - 1]),
                mean_sigma2_dl=float(np.mean(ledger.sigma2_dl[t - 1])),
                gap_running=float(clf.gap_curve_[t]),
                wall_clock_s=per_round,
            )
        )
    return rows, clf


def _fmt(value):
    return repr(float(value))


def write_trial_csv(path, rows):
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    str(r.round_index),
                    _fmt(r.loss),
                    _fmt(r.accuracy),
                    _fmt(r.sigma2_ul),
                    _fmt(r.mean_sigma2_dl),
                    _fmt(r.gap_running),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _mean_std(values):
    arr = np.asarray(values, dtype=float)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def run_experiment(config, out_dir):
    """Run all trials of one configuration and write metric files.

    Produces ``trial_<i>.csv`` per trial plus ``summary.json`` with
    mean/std statistics of the final round across trials.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = build_dataset(config)
    final_losses, final_accs, final_gaps = [], [], []
    for trial in range(config.num_trials):
        rows, clf = run_trial(config, trial, train, test)
        write_trial_csv(out / f"trial_{trial}.csv", rows)
        final_losses.append(clf.loss_curve_[-1])
        final_gaps.append(clf.gap_curve_[-1])
        if test is not None:
            final_accs.append(clf.accuracy_curve_[-1])
    summary = {
        "config": config.to_dict(),
        "final_loss": _mean_std(final_losses),
        "final_accuracy": _mean_std(final_accs) if final_accs else None,
        "B_T": _mean_std(final_gaps),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def massive_mimo_scenario(config, out_dir, server_counts=(1, 2, 4)):
    """Distributed versus centralized antenna layouts on matched seeds.

    The total antenna count stays fixed: the centralized layout puts all of
    them on one server at the disc center, the distributed layouts spread
    them over N uniformly placed servers.  Quantization is disabled, so the
    comparison isolates the channel-geometry effect.  Device placements are
    paired per trial across layouts.
    """
    total_antennas = config.num_servers * config.antennas_per_server
    for n in server_counts:
        if total_antennas % n != 0:
            raise ValueError(f"{n} servers do not divide {total_antennas} antennas")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def layout_config(num_servers, layout):
        raw = config.to_dict()
        raw.update(
            num_servers=num_servers,
            antennas_per_server=total_antennas // num_servers,
            capacity_mbps=None,
            server_layout=layout,
            scheme="massive-mimo" if layout == "center" else "joint",
        )
        return ExperimentConfig.from_dict(raw)

    central_cfg = layout_config(1, "center")
    train, test = build_dataset(central_cfg)
    results = {"central": []}
    for trial in range(config.num_trials):
        rows, clf = run_trial(central_cfg, trial, train, test)
        results["central"].append(float(clf.loss_curve_[-1]))
    for n in server_counts:
        dist_cfg = layout_config(n, "uniform")
        key = f"distributed_{n}"
        results[key] = []
        for trial in range(config.num_trials):
            rows, clf = run_trial(dist_cfg, trial, train, test)
            results[key].append(float(clf.loss_curve_[-1]))

    central = np.array(results["central"])
    report = {
        "total_antennas": total_antennas,
        "num_trials": config.num_trials,
        "final_losses": results,
        "paired_win_rate": {},
        "mean_loss": {k: float(np.mean(v)) for k, v in results.items()},
    }
    for n in server_counts:
        dist = np.array(results[f"distributed_{n}"])
        report["paired_win_rate"][f"distributed_{n}"] = float(
            np.mean(dist <= central)
        )
    (out / "massive_mimo.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    return report


_SWEEP_PARAMS = {
    "capacity": "capacity_mbps",
    "antennas": "antennas_per_server",
    "servers": "num_servers",
}


def sweep(config, param, values, out_dir):
    """Re-run one configuration while varying a single system parameter."""
    if param not in _SWEEP_PARAMS:
        raise ValueError(f"sweep parameter must be one of {sorted(_SWEEP_PARAMS)}")
    field_name = _SWEEP_PARAMS[param]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        raw = config.to_dict()
        raw[field_name] = value if param == "capacity" else int(value)
        sub_cfg = ExperimentConfig.from_dict(raw)
        label = f"{param}_{value}"
        summary = run_experiment(sub_cfg, out / label)
        rows.append({"value": value, "summary": summary})
    (out / "sweep_summary.json").write_text(
        json.dumps({"param": param, "results": rows}, indent=2, sort_keys=True) + "\n"
    )
    return rows
