"""Convergence-gap accounting: data-dependent weights, the discounted noise
sum B(T), contraction constants, and Monte-Carlo checks of the small-noise
approximations behind them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import loss_and_G


@dataclass(frozen=True)
class ConvergenceConstants:
    """Strong convexity / smoothness pair and the derived contraction rate."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not 0 < self.alpha <= self.beta:
            raise ValueError("need 0 < alpha <= beta")

    @property
    def rho(self) -> float:
        return 1.0 - self.alpha / self.beta

    @property
    def learning_rate(self) -> float:
        return 1.0 / self.beta


@dataclass
class GapLedger:
    """Per-round record of noise variances and gradient-energy weights."""

    sigma2_ul: list = field(default_factory=list)  # scalar per round
    sigma2_dl: list = field(default_factory=list)  # (K,) per round
    phi1: list = field(default_factory=list)  # (K,) per round
    phi2: list = field(default_factory=list)  # (K,) per round

    def add_round(self, sigma2_ul, sigma2_dl, phi1, phi2):
        if sigma2_ul < 0 or np.any(np.asarray(sigma2_dl) < 0):
            raise ValueError("noise variances must be nonnegative")
        self.sigma2_ul.append(float(sigma2_ul))
        self.sigma2_dl.append(np.asarray(sigma2_dl, dtype=float))
        self.phi1.append(np.asarray(phi1, dtype=float))
        self.phi2.append(np.asarray(phi2, dtype=float))

    @property
    def num_rounds(self) -> int:
        return len(self.sigma2_ul)

    def round_term(self, t) -> float:
        """Undiscounted noise contribution of round t, summed over devices."""
        return float(
            np.sum(self.phi1[t] * self.sigma2_ul[t] + self.phi2[t] * self.sigma2_dl[t])
        )


def feature_row_norms(dataset) -> np.ndarray:
    """Squared feature-row norms per sample and device, shape (L, K)."""
    return np.column_stack([np.sum(b * b, axis=1) for b in dataset.blocks])


def phi_terms(dataset, g_prime):
    """Gradient-energy weights for one round.

    ``g_prime`` holds the loss-curvature values at the true aggregates, one
    per sample (binary) or per sample and class stream.  For the linear
    local predictor the local gradient norm equals the feature-row norm, so
    both weights reduce to sums of squared feature norms.
    """
    rn = feature_row_norms(dataset)  # (L, K)
    gp = np.asarray(g_prime, dtype=float)
    if gp.ndim == 1:
        phi1 = (gp**2) @ rn
        phi2 = rn.sum(axis=0)
    else:
        if gp.shape[0] != rn.shape[0]:
            raise ValueError("g_prime rows must match the sample count")
        phi1 = np.einsum("ic,ik->k", gp**2, rn)
        phi2 = gp.shape[1] * rn.sum(axis=0)
    return phi1, phi2


def contraction_constants(dataset, reg_weight):
    """Conservative strong-convexity/smoothness estimates for the regularized
    binary logistic objective on the aggregated linear model."""
    if reg_weight <= 0:
        raise ValueError("reg_weight must be positive")
    if dataset.num_samples == 0:
        raise ValueError("dataset is empty")
    X = dataset.full_matrix()
    L = dataset.num_samples
    gram = X.T @ X if X.shape[1] <= X.shape[0] else X @ X.T
    lam_max = float(np.linalg.eigvalsh(gram)[-1]) if gram.size else 0.0
    beta = lam_max / (4.0 * L) + reg_weight
    return ConvergenceConstants(alpha=reg_weight, beta=beta)


def optimality_gap(ledger, rho, num_rounds):
    """Discounted sum of the per-round noise contributions, B(T)."""
    if num_rounds > ledger.num_rounds:
        raise ValueError("ledger does not cover the requested rounds")
    total = 0.0
    for t in range(num_rounds):
        total += rho ** (num_rounds - t - 1) * ledger.round_term(t)
    return total


def accumulate_gap(running, rho, round_term):
    """One-step recursion B(t+1) = rho * B(t) + round term."""
    return rho * running + round_term


def theorem_bound(initial_gap, constants, gap_value, num_samples, num_rounds):
    """Upper bounds on the expected final suboptimality.

    Returns the main-text bound (noise factor 3) and the tighter constant
    carried through the recursion in the derivation (factor 1).
    """
    if initial_gap < 0 or gap_value < 0:
        raise ValueError("gap inputs must be nonnegative")
    decay = constants.rho**num_rounds * initial_gap
    noise_scale = gap_value / (2.0 * num_samples**2 * constants.beta)
    return decay + 3.0 * noise_scale, decay + noise_scale


def verify_lemma1(g_fn, s_value, sigma_grid, draws, rng=None):
    """Empirical bias of g(s + n) against g(s) for Gaussian n of growing scale.

    Returns an array of biases aligned with ``sigma_grid``; for smooth g the
    bias shrinks like the noise variance, which justifies treating the noisy
    estimate as unbiased in the small-noise regime.
    """
    if draws < 10**4:
        raise ValueError("need at least 1e4 draws for a stable bias estimate")
    rng = np.random.default_rng(rng)
    base = float(np.asarray(g_fn(np.array([s_value]))).ravel()[0])
    noise = rng.standard_normal(draws)
    noise -= noise.mean()  # centered draws: affine links show exactly zero bias
    biases = []
    for sigma in sigma_grid:
        vals = np.asarray(g_fn(s_value + sigma * noise), dtype=float)
        biases.append(float(vals.mean()) - base)
    return np.array(biases)


def sigmoid_link_G(label):
    """The per-sample loss derivative as a function of the aggregate."""

    def g_fn(s):
        _, G, _ = loss_and_G(np.asarray(s, dtype=float), label)
        return G

    return g_fn


def effective_noise_moment(dataset, g_prime, sigma2_ul, sigma2_dl, draws, rng=None):
    """Monte-Carlo second moment of the per-device gradient perturbation.

    Simulates the per-slot uplink/downlink noises entering the averaged
    gradient and returns (per-device MC estimates, closed-form values).
    """
    rng = np.random.default_rng(rng)
    gp = np.asarray(g_prime, dtype=float)
    L = dataset.num_samples
    sigma2_dl = np.broadcast_to(
        np.asarray(sigma2_dl, dtype=float), (dataset.num_devices,)
    )
    phi1, phi2 = phi_terms(dataset, gp)
    closed = (phi1 * sigma2_ul + phi2 * sigma2_dl) / L**2

    estimates = np.zeros(dataset.num_devices)
    n_ul = np.sqrt(sigma2_ul) * rng.standard_normal((draws, L))
    shared = gp[None, :] * n_ul  # (draws, L)
    for k, X_k in enumerate(dataset.blocks):
        n_dl = np.sqrt(sigma2_dl[k]) * rng.standard_normal((draws, L))
        e = (shared + n_dl) @ X_k / L  # (draws, d_k)
        estimates[k] = float(np.mean(np.sum(e * e, axis=1)))
    return estimates, closed
