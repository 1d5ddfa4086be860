"""Scikit-learn estimator for the feature-partitioned training loop.

The classifier trains a regularized logistic model whose features are split
column-wise across devices; every round the per-device predictions travel
through a pluggable communication link (perfect by default, or a simulated
noisy uplink/downlink), and every device applies one gradient step.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .data import FeaturePartitionedDataset
from .gap import GapLedger, accumulate_gap, phi_terms
from .model import (
    GlobalModel,
    gd_step,
    global_loss,
    loss_and_G,
    loss_and_G_multiclass,
    LossSpec,
    sigmoid,
)


class VerticalFLClassifier(BaseEstimator, ClassifierMixin):
    """Gradient-descent logistic classifier over feature-partitioned devices.

    Parameters
    ----------
    n_devices : int
        Number of contiguous, equally sized feature blocks.
    reg_weight : float
        Coefficient of the per-device squared-norm regularizer.
    learning_rate : float or 'auto'
        Step size; 'auto' uses the inverse of the conservative smoothness
        bound of the regularized objective.
    n_rounds : int
        Training rounds (one gradient step per round).
    link : object or None
        None trains with perfect communication.  Otherwise an object with
        ``run_round(round_index, signals, g_fn) -> (estimates, info)`` that
        carries the per-device predictions to the server and the per-sample
        loss derivatives back.
    record_gap : bool
        Track noise variances and gradient-energy weights per round and
        accumulate the discounted gap alongside the loss curve.
    """

    def __init__(self, n_devices=4, reg_weight=0.01, learning_rate="auto",
                 n_rounds=100, link=None, record_gap=True):
        self.n_devices = n_devices
        self.reg_weight = reg_weight
        self.learning_rate = learning_rate
        self.n_rounds = n_rounds
        self.link = link
        self.record_gap = record_gap

    def _resolve_learning_rate(self, dataset):
        if self.learning_rate == "auto":
            X = dataset.full_matrix()
            gram = X.T @ X if X.shape[1] <= X.shape[0] else X @ X.T
            lam_max = float(np.linalg.eigvalsh(gram)[-1])
            beta = lam_max / (4.0 * dataset.num_samples) + self.reg_weight
            return 1.0 / beta, beta
        lr = float(self.learning_rate)
        return lr, 1.0 / lr

    def fit(self, X, y, eval_set=None):
        """Train; ``eval_set=(X_test, y_test)`` records a per-round accuracy curve."""
        X, y = validate_data(self, X, y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise ValueError("need at least two classes")
        if self.n_devices < 1 or X.shape[1] % self.n_devices != 0:
            raise ValueError(
                f"n_devices={self.n_devices} must divide n_features={X.shape[1]}"
            )
        binary = self.classes_.shape[0] == 2
        dataset = FeaturePartitionedDataset.from_matrix(
            X, y_idx, num_devices=self.n_devices
        )
        lr, beta = self._resolve_learning_rate(dataset)
        spec = LossSpec(
            task="binary" if binary else "multiclass",
            reg_weight=self.reg_weight,
            learning_rate=lr,
        )
        rho = 1.0 - self.reg_weight / beta if self.reg_weight > 0 else 1.0

        num_classes = self.classes_.shape[0]
        model = GlobalModel.zeros(dataset.block_dims, num_classes)
        y_int = dataset.labels

        def g_fn(agg):
            if binary:
                _, G, _ = loss_and_G(agg, y_int)
            else:
                _, G, _ = loss_and_G_multiclass(agg, y_int)
            return G

        eval_blocks = eval_labels = None
        if eval_set is not None:
            X_eval = check_array(np.asarray(eval_set[0]))
            eval_labels = np.asarray(eval_set[1])
            edges = np.cumsum([0] + list(dataset.block_dims))
            eval_blocks = [
                X_eval[:, edges[k]:edges[k + 1]] for k in range(dataset.num_devices)
            ]

        def eval_accuracy(current):
            scores = sum(Xk @ wk for Xk, wk in zip(eval_blocks, current.submodels))
            if binary:
                pred = self.classes_[(scores > 0).astype(int)]
            else:
                pred = self.classes_[scores.argmax(axis=1)]
            return float(np.mean(pred == eval_labels))

        ledger = GapLedger()
        losses = [global_loss(model, dataset, spec)]
        accuracies = [eval_accuracy(model)] if eval_set is not None else None
        gap_curve = [0.0]
        running_gap = 0.0
        for t in range(self.n_rounds):
            S = np.stack(
                [Xk @ wk for Xk, wk in zip(dataset.blocks, model.submodels)], axis=1
            )  # (L, K) or (L, K, C)
            agg_true = S.sum(axis=1)
            if self.link is None:
                G = g_fn(agg_true)
                per_device = [G] * dataset.num_devices
                info = {"sigma2_ul_effective": 0.0,
                        "sigma2_dl_effective": np.zeros(dataset.num_devices)}
            else:
                estimates, info = self.link.run_round(t, S, g_fn)
                per_device = [estimates[:, k] if binary else estimates[:, k, :]
                              for k in range(dataset.num_devices)]
            model = GlobalModel(
                [
                    gd_step(wk, Xk.T @ Gk / dataset.num_samples,
                            self.reg_weight, lr)
                    for wk, Xk, Gk in zip(model.submodels, dataset.blocks, per_device)
                ]
            )
            losses.append(global_loss(model, dataset, spec))
            if accuracies is not None:
                accuracies.append(eval_accuracy(model))
            if self.record_gap:
                if binary:
                    _, _, gp = loss_and_G(agg_true, y_int)
                else:
                    _, _, gp = loss_and_G_multiclass(agg_true, y_int)
                phi1, phi2 = phi_terms(dataset, gp)
                ledger.add_round(
                    info["sigma2_ul_effective"], info["sigma2_dl_effective"],
                    phi1, phi2,
                )
                running_gap = accumulate_gap(
                    running_gap, rho, ledger.round_term(t)
                )
                gap_curve.append(running_gap)

        if binary:
            self.coef_ = model.concatenated()
        else:
            self.coef_ = np.concatenate([w.T for w in model.submodels], axis=1)
        self.model_ = model
        self.loss_curve_ = np.array(losses)
        self.accuracy_curve_ = None if accuracies is None else np.array(accuracies)
        self.gap_curve_ = np.array(gap_curve) if self.record_gap else None
        self.gap_ledger_ = ledger if self.record_gap else None
        self.contraction_rate_ = rho
        self.smoothness_ = beta
        self.spec_ = spec
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = check_array(X)
        if self.classes_.shape[0] == 2:
            return X @ self.coef_
        return X @ self.coef_.T

    def predict_proba(self, X):
        scores = self.decision_function(X)
        if self.classes_.shape[0] == 2:
            p = sigmoid(scores)
            return np.column_stack([1.0 - p, p])
        shifted = scores - scores.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        scores = self.decision_function(X)
        if self.classes_.shape[0] == 2:
            return self.classes_[(scores > 0).astype(int)]
        return self.classes_[scores.argmax(axis=1)]
