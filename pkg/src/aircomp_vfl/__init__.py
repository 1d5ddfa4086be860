"""Vertical federated learning over an over-the-air-computation Cloud-RAN:
training-loop simulation, convergence-gap accounting, and joint
transceiver/quantization design."""

from .channel import (
    ChannelState,
    GeometryConfig,
    Topology,
    noise_power,
    path_loss_db,
    sample_channels,
    sample_topology,
)
from .data import (
    FeaturePartitionedDataset,
    load_fashion_mnist,
    synthetic_dataset,
)
from .downlink_opt import (
    logdet_majorant,
    optimize_downlink,
    sigma_update,
    solve_Q_subproblem,
    solve_u_subproblem,
)
from .estimator import VerticalFLClassifier
from .gap import (
    ConvergenceConstants,
    GapLedger,
    contraction_constants,
    effective_noise_moment,
    optimality_gap,
    phi_terms,
    theorem_bound,
    verify_lemma1,
)
from .link import (
    DownlinkDesign,
    SignalBlock,
    UplinkDesign,
    denormalize_block,
    downlink_capacity_bits,
    downlink_noise_variance,
    downlink_power,
    downlink_receive_scalars,
    downlink_round,
    normalize_block,
    uplink_capacity_bits,
    uplink_noise_variance,
    uplink_round,
    zero_forcing_uplink,
)
from .model import (
    GlobalModel,
    LossSpec,
    aggregate_predictions,
    gd_step,
    global_loss,
    local_predict,
    loss_and_G,
    partial_gradient,
    train_error_free,
)
from .runner import (
    CloudRanLink,
    ExperimentConfig,
    baseline_design,
    design_for_scheme,
    massive_mimo_scenario,
    run_experiment,
    sweep,
)
from .uplink_opt import (
    optimize_uplink,
    optimize_uplink_quantization,
    sca_beamforming,
    solve_sca_subproblem,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelState",
    "CloudRanLink",
    "ConvergenceConstants",
    "DownlinkDesign",
    "ExperimentConfig",
    "FeaturePartitionedDataset",
    "GapLedger",
    "GeometryConfig",
    "GlobalModel",
    "LossSpec",
    "SignalBlock",
    "Topology",
    "UplinkDesign",
    "VerticalFLClassifier",
    "aggregate_predictions",
    "baseline_design",
    "contraction_constants",
    "denormalize_block",
    "design_for_scheme",
    "downlink_capacity_bits",
    "downlink_noise_variance",
    "downlink_power",
    "downlink_receive_scalars",
    "downlink_round",
    "effective_noise_moment",
    "gd_step",
    "global_loss",
    "load_fashion_mnist",
    "local_predict",
    "logdet_majorant",
    "loss_and_G",
    "massive_mimo_scenario",
    "noise_power",
    "normalize_block",
    "optimality_gap",
    "optimize_downlink",
    "optimize_uplink",
    "optimize_uplink_quantization",
    "partial_gradient",
    "path_loss_db",
    "phi_terms",
    "run_experiment",
    "sample_channels",
    "sample_topology",
    "sca_beamforming",
    "sigma_update",
    "solve_Q_subproblem",
    "solve_sca_subproblem",
    "solve_u_subproblem",
    "sweep",
    "synthetic_dataset",
    "theorem_bound",
    "train_error_free",
    "uplink_capacity_bits",
    "uplink_noise_variance",
    "uplink_round",
    "verify_lemma1",
    "zero_forcing_uplink",
]
