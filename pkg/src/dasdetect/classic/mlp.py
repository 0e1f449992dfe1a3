"""Feed-forward network: d inputs -> tanh hidden layer -> 2-way softmax."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cnn import cross_entropy, softmax_forward
from ..errors import DataError, DivergenceError
from ..optim import sgd_momentum_step, zeros_like
from .data import Dataset


@dataclass
class MlpModel:
    params: dict  # W1 (d, h), b1 (h,), W2 (h, 2), b2 (2,)
    losses: list = field(default_factory=list)

    @classmethod
    def init(cls, n_inputs: int, hidden: int = 5, seed: int = 0) -> "MlpModel":
        rng = np.random.default_rng(seed)
        lim1, lim2 = 1 / np.sqrt(n_inputs), 1 / np.sqrt(hidden)
        return cls(params={
            "W1": rng.uniform(-lim1, lim1, (n_inputs, hidden)),
            "b1": np.zeros(hidden),
            "W2": rng.uniform(-lim2, lim2, (hidden, 2)),
            "b2": np.zeros(2),
        })

    def forward(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.params["W1"].shape[0]:
            raise DataError(f"expected {self.params['W1'].shape[0]} features, got {X.shape[1]}")
        h = np.tanh(X @ self.params["W1"] + self.params["b1"])
        probs = softmax_forward(h @ self.params["W2"] + self.params["b2"])
        return probs, (X, h)

    def loss_and_grads(self, X, T):
        probs, (X, h) = self.forward(X)
        loss = cross_entropy(probs, T)
        d_logits = probs - T
        d_h = (d_logits @ self.params["W2"].T) * (1 - h * h)
        grads = {
            "W1": X.T @ d_h,
            "b1": d_h.sum(axis=0),
            "W2": h.T @ d_logits,
            "b2": d_logits.sum(axis=0),
        }
        return loss, grads

    def predict_proba(self, X) -> np.ndarray:
        return self.forward(X)[0][:, 1]

    def to_dict(self) -> dict:
        return {k: v.tolist() for k, v in self.params.items()}

    @classmethod
    def from_dict(cls, d) -> "MlpModel":
        return cls(params={k: np.asarray(d[k], dtype=np.float64) for k in ("W1", "b1", "W2", "b2")})


def train_mlp(train: Dataset, hidden: int = 5, epochs: int = 200, lr: float = 0.001,
              momentum: float = 0.9, batch_size: int = 128, seed: int = 0) -> MlpModel:
    """Minibatch backpropagation on the summed cross-entropy.

    Inputs are expected already standardized. Raises DivergenceError if the
    loss stops being finite.
    """
    if not train.both_classes():
        raise DataError("MLP training needs both classes present")
    model = MlpModel.init(train.X.shape[1], hidden, seed)
    velocity = zeros_like(model.params)
    rng = np.random.default_rng(seed + 1)
    T = train.onehot
    n = len(train)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            loss, grads = model.loss_and_grads(train.X[idx], T[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"MLP loss became {loss} at epoch {epoch}")
            sgd_momentum_step(model.params, grads, velocity, lr, momentum)
            total += loss
        model.losses.append(total)
    return model
