"""Vertical-FL learning core: local predictions, server-side loss link, and
full-batch gradient descent that trains the feature-partitioned model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LossSpec:
    """Task and optimizer hyperparameters.

    ``task`` is 'binary' (sigmoid link, cross-entropy) or 'multiclass'
    (softmax link, one scalar stream per class).  ``reg_weight`` is the
    coefficient of the squared-norm regularizer 0.5*||w_k||^2 per device.
    """

    task: str = "binary"
    reg_weight: float = 0.0
    learning_rate: float = 0.1

    def __post_init__(self):
        if self.task not in ("binary", "multiclass"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.reg_weight < 0:
            raise ValueError("reg_weight must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class GlobalModel:
    """Per-device submodels; device order fixes the concatenation layout."""

    submodels: list = field()

    @property
    def num_devices(self) -> int:
        return len(self.submodels)

    def concatenated(self) -> np.ndarray:
        return np.concatenate([np.ravel(w) for w in self.submodels])

    def copy(self) -> "GlobalModel":
        return GlobalModel([np.array(w) for w in self.submodels])

    @classmethod
    def zeros(cls, block_dims, num_classes=2):
        if num_classes <= 2:
            return cls([np.zeros(dk) for dk in block_dims])
        return cls([np.zeros((dk, num_classes)) for dk in block_dims])


def sigmoid(s):
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    out[~pos] = es / (1.0 + es)
    return out


def _softplus(s):
    # log(1 + e^s) without overflow for large |s|
    return np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s)))


def local_predict(w_k, x_k):
    """Linear local prediction <w_k, x_k>; x_k may be a row or an (L, d_k) block."""
    w_k = np.asarray(w_k, dtype=float)
    x_k = np.asarray(x_k, dtype=float)
    if x_k.shape[-1] != w_k.shape[0]:
        raise ValueError(
            f"feature dim {x_k.shape[-1]} does not match submodel dim {w_k.shape[0]}"
        )
    return x_k @ w_k


def aggregate_predictions(local_values):
    """Sum the per-device local predictions for one sample (or per-sample axis)."""
    stacked = np.asarray(local_values, dtype=float)
    return stacked.sum(axis=0)


def loss_and_G(s, y):
    """Binary cross-entropy with sigmoid link, evaluated at aggregate s.

    Returns (loss, G, G') where G is the derivative of the per-sample loss
    with respect to s and G' its second derivative.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    loss = _softplus(s) - y * s
    p = sigmoid(s)
    G = p - y
    G_prime = p * sigmoid(-s)
    return loss, G, G_prime


def loss_and_G_multiclass(S, y):
    """Softmax cross-entropy; S has one column of aggregates per class.

    G[:, c] = softmax(S)[:, c] - 1{y=c}; G'[:, c] = p_c (1 - p_c), treating
    each class stream as an independent scalar.
    """
    S = np.asarray(S, dtype=float)
    y = np.asarray(y)
    shifted = S - S.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    p = exp / exp.sum(axis=1, keepdims=True)
    log_norm = np.log(exp.sum(axis=1)) + S.max(axis=1)
    idx = np.arange(S.shape[0])
    loss = log_norm - S[idx, y]
    G = p.copy()
    G[idx, y] -= 1.0
    G_prime = p * (1.0 - p)
    return loss, G, G_prime


def partial_gradient(G_i, x_k):
    """Per-sample partial gradient G_i * x_{i,k} for the linear local predictor."""
    return np.asarray(G_i, dtype=float) * np.asarray(x_k, dtype=float)


def gd_step(w_k, avg_grad, reg_weight, learning_rate):
    """One gradient-descent update with the squared-norm regularizer."""
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    w_k = np.asarray(w_k, dtype=float)
    return w_k - learning_rate * (np.asarray(avg_grad, dtype=float) + reg_weight * w_k)


def regularizer_value(model):
    return 0.5 * sum(float(np.sum(w * w)) for w in model.submodels)


def predict_aggregate(model, dataset):
    """Aggregate local predictions for every sample: shape (L,) or (L, C)."""
    stacked = np.stack(
        [
            local_predict(w_k, X_k)
            for w_k, X_k in zip(model.submodels, dataset.blocks)
        ],
        axis=1,
    )
    return stacked.sum(axis=1)


def global_loss(model, dataset, spec):
    """Empirical risk: mean per-sample loss plus the weighted regularizer."""
    s = predict_aggregate(model, dataset)
    if spec.task == "binary":
        loss, _, _ = loss_and_G(s, dataset.labels)
    else:
        loss, _, _ = loss_and_G_multiclass(s, dataset.labels)
    return float(loss.mean()) + spec.reg_weight * regularizer_value(model)


def gradient_blocks(model, dataset, spec):
    """Per-device averaged loss gradients (without the regularizer term)."""
    s = predict_aggregate(model, dataset)
    if spec.task == "binary":
        _, G, _ = loss_and_G(s, dataset.labels)
    else:
        _, G, _ = loss_and_G_multiclass(s, dataset.labels)
    L = dataset.num_samples
    return [X_k.T @ G / L for X_k in dataset.blocks]


def train_error_free(dataset, spec, num_rounds, init_model=None):
    """Run the perfect-communication training loop for ``num_rounds`` rounds.

    Each round the devices send exact local predictions, the server returns
    the exact per-sample loss derivatives, and every device takes one
    gradient step.  Returns the final model and the per-round loss trace
    (length ``num_rounds + 1``, starting at the initial model).
    """
    if num_rounds < 0:
        raise ValueError("num_rounds must be nonnegative")
    num_classes = dataset.num_classes if spec.task == "multiclass" else 2
    model = (
        init_model.copy()
        if init_model is not None
        else GlobalModel.zeros(dataset.block_dims, num_classes)
    )
    losses = [global_loss(model, dataset, spec)]
    for _ in range(num_rounds):
        grads = gradient_blocks(model, dataset, spec)
        model = GlobalModel(
            [
                gd_step(w_k, g_k, spec.reg_weight, spec.learning_rate)
                for w_k, g_k in zip(model.submodels, grads)
            ]
        )
        losses.append(global_loss(model, dataset, spec))
    return model, np.array(losses)


def solve_optimum(dataset, spec, grad_tol=1e-10, max_iter=200000):
    """Error-free gradient descent run to (near) optimality.

    Used as the ground-truth minimizer for convergence-gap experiments; the
    strongly convex objective (reg_weight > 0) makes the optimum unique.
    Returns (model, optimal loss value).
    """
    if spec.reg_weight <= 0:
        raise ValueError("a positive reg_weight is required for a unique optimum")
    num_classes = dataset.num_classes if spec.task == "multiclass" else 2
    model = GlobalModel.zeros(dataset.block_dims, num_classes)
    for _ in range(max_iter):
        grads = gradient_blocks(model, dataset, spec)
        full = [g_k + spec.reg_weight * w_k for g_k, w_k in zip(grads, model.submodels)]
        gnorm = np.sqrt(sum(float(np.sum(g * g)) for g in full))
        if gnorm < grad_tol:
            break
        model = GlobalModel(
            [
                w_k - spec.learning_rate * f_k
                for w_k, f_k in zip(model.submodels, full)
            ]
        )
    return model, global_loss(model, dataset, spec)
