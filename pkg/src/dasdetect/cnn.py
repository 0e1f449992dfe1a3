"""Small convolutional network for waterfall patches, written against numpy.

Architecture: conv 5x5 (20 maps, valid, stride 1) -> ReLU -> 2x2 max-pool
-> dense -> softmax over (Other, Excavator). Tensors are ``(batch, channel,
height, width)``.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import BadMagicError, DataError, DivergenceError, TruncatedError, VersionMismatchError
from .optim import sgd_momentum_step, zeros_like

logger = logging.getLogger(__name__)

KERNEL = 5
N_FILTERS = 20
N_CLASSES = 2
PARAM_ORDER = ("W1", "b1", "W2", "b2")


# -- layers -----------------------------------------------------------------

def conv2d_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid cross-correlation, stride 1: (B,C,H,W) -> (B,F,H-k+1,W-k+1)."""
    B, C, H, Wd = x.shape
    F, Cw, k, _ = W.shape
    if C != Cw:
        raise DataError(f"input has {C} channels, filters expect {Cw}")
    if H < k or Wd < k:
        raise DataError(f"input {H}x{Wd} smaller than the {k}x{k} kernel")
    Ho, Wo = H - k + 1, Wd - k + 1
    cols = sliding_window_view(x, (k, k), axis=(2, 3))  # B,C,Ho,Wo,k,k
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * k * k)
    out = cols @ W.reshape(F, -1).T + b
    return out.reshape(B, Ho, Wo, F).transpose(0, 3, 1, 2)


def conv2d_backward(x: np.ndarray, W: np.ndarray, dout: np.ndarray, input_grad: bool = True):
    """Gradients ``(dx, dW, db)``; ``dx`` is None when ``input_grad`` is False."""
    B, C, H, Wd = x.shape
    F, _, k, _ = W.shape
    Ho, Wo = dout.shape[2:]
    cols = sliding_window_view(x, (k, k), axis=(2, 3)).transpose(0, 2, 3, 1, 4, 5).reshape(-1, C * k * k)
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, F)
    dW = (d2.T @ cols).reshape(W.shape)
    db = d2.sum(axis=0)
    dx = None
    if input_grad:
        dx = np.zeros_like(x)
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + Ho, j:j + Wo] += np.einsum("bfhw,fc->bchw", dout, W[:, :, i, j])
    return dx, dW, db


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


def maxpool2_forward(x: np.ndarray):
    """2x2 stride-2 max; returns output and the in-block argmax (first wins)."""
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise DataError(f"max-pool needs even height and width, got {H}x{W}")
    blocks = x.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // 2, W // 2, 4)
    arg = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0], arg


def maxpool2_backward(arg: np.ndarray, dout: np.ndarray) -> np.ndarray:
    B, C, h, w = dout.shape
    blocks = np.zeros((B, C, h, w, 4))
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    return blocks.reshape(B, C, h, w, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, 2 * h, 2 * w)


def softmax_forward(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Summed negative log-likelihood ``-sum_i sum_j t_ij ln y_ij``."""
    return float(-np.sum(targets * np.log(np.maximum(probs, 1e-15))))


# -- model ------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    lr: float = 0.001
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or not 0 <= self.momentum < 1 or self.batch_size < 1 or self.epochs < 1:
            raise DataError(f"invalid training config {self}")


@dataclass
class ConvNet:
    input_shape: tuple
    params: dict
    velocity: dict
    history: list = field(default_factory=list)  # per-epoch (loss, train accuracy)

    @classmethod
    def init(cls, input_shape=(32, 60), n_filters: int = N_FILTERS, kernel: int = KERNEL,
             seed: int = 0) -> "ConvNet":
        H, W = input_shape
        ho, wo = H - kernel + 1, W - kernel + 1
        if ho % 2 or wo % 2:
            raise DataError(f"conv output {ho}x{wo} is not poolable")
        dense_in = n_filters * (ho // 2) * (wo // 2)
        rng = np.random.default_rng(seed)
        lim1 = 1 / np.sqrt(kernel * kernel)
        lim2 = 1 / np.sqrt(dense_in)
        params = {
            "W1": rng.uniform(-lim1, lim1, (n_filters, 1, kernel, kernel)),
            "b1": np.zeros(n_filters),
            "W2": rng.uniform(-lim2, lim2, (dense_in, N_CLASSES)),
            "b2": np.zeros(N_CLASSES),
        }
        return cls(input_shape=(H, W), params=params, velocity=zeros_like(params))

    @classmethod
    def zeros(cls, input_shape=(32, 60), n_filters: int = N_FILTERS) -> "ConvNet":
        net = cls.init(input_shape, n_filters)
        for v in net.params.values():
            v[...] = 0.0
        return net

    def _as_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None]
        if x.shape[2:] != tuple(self.input_shape) or x.shape[1] != 1:
            raise DataError(f"expected input (B,1,{self.input_shape[0]},{self.input_shape[1]}), got {x.shape}")
        return x

    def forward(self, x):
        """Class probabilities ``(B, 2)`` and the cache needed by backward."""
        x = self._as_batch(x)
        p = self.params
        z1 = conv2d_forward(x, p["W1"], p["b1"])
        a1 = relu_forward(z1)
        pooled, arg = maxpool2_forward(a1)
        flat = pooled.reshape(len(x), -1)
        probs = softmax_forward(flat @ p["W2"] + p["b2"])
        return probs, (x, z1, arg, pooled.shape, flat)

    def backward(self, cache, probs, targets) -> dict:
        x, z1, arg, pooled_shape, flat = cache
        p = self.params
        d_logits = probs - targets
        d_flat = d_logits @ p["W2"].T
        d_a1 = maxpool2_backward(arg, d_flat.reshape(pooled_shape))
        d_z1 = relu_backward(z1, d_a1)
        _, dW1, db1 = conv2d_backward(x, p["W1"], d_z1, input_grad=False)
        return {"W1": dW1, "b1": db1, "W2": flat.T @ d_logits, "b2": d_logits.sum(axis=0)}

    def loss_and_grads(self, x, targets):
        probs, cache = self.forward(x)
        return cross_entropy(probs, targets), self.backward(cache, probs, targets)

    def predict_proba(self, x, batch_size: int = 256) -> np.ndarray:
        x = self._as_batch(x)
        return np.concatenate([self.forward(x[i:i + batch_size])[0][:, 1]
                               for i in range(0, len(x), batch_size)]) if len(x) else np.zeros(0)


def _stack(patches):
    X = np.stack([getattr(p, "pixels", p) for p in patches]).astype(np.float64)
    return X


def _targets(labels) -> np.ndarray:
    y = np.asarray([1 if (lab == 1 or lab == "Excavator") else 0 for lab in labels], dtype=np.int64)
    return y


def train_cnn(patches, config: TrainConfig | None = None, labels=None, net: ConvNet | None = None) -> ConvNet:
    """Minibatch SGD with momentum on the summed cross-entropy.

    ``patches`` is a sequence of WaterfallPatch (labels taken from them) or
    an array ``(N, H, W)`` paired with ``labels``. Stops early only at an
    epoch boundary with 100% training accuracy.
    """
    config = config or TrainConfig()
    X = _stack(patches)
    y = _targets(labels if labels is not None else [p.label for p in patches])
    if len(np.unique(y)) < 2:
        raise DataError("CNN training needs both classes present")
    T = np.eye(N_CLASSES)[y]
    net = net or ConvNet.init(X.shape[1:], seed=config.seed)
    rng = np.random.default_rng(config.seed + 1)
    for epoch in range(config.epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for lo in range(0, len(X), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grads = net.loss_and_grads(X[idx][:, None], T[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"CNN loss became {loss} at epoch {epoch}, batch starting {lo}")
            sgd_momentum_step(net.params, grads, net.velocity, config.lr, config.momentum)
            total += loss
        acc = float(np.mean((net.predict_proba(X) > 0.5) == y))
        net.history.append((total, acc))
        logger.info("epoch %d loss %.4f train acc %.4f", epoch + 1, total, acc)
        if acc == 1.0:
            break
    return net


def predict_image(model: ConvNet, patch) -> tuple:
    """``(label, P(Excavator))`` for one 2-D patch."""
    p = float(model.predict_proba(getattr(patch, "pixels", patch))[0])
    return ("Excavator" if p > 0.5 else "Other"), p


# -- checkpoint -------------------------------------------------------------

MAGIC = b"CNN1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIII")  # magic, version, H, W, filters, kernel, classes, dense_in


def encode_checkpoint(net: ConvNet) -> bytes:
    F, _, k, _ = net.params["W1"].shape
    dense_in = net.params["W2"].shape[0]
    H, W = net.input_shape
    parts = [_HEADER.pack(MAGIC, VERSION, H, W, F, k, N_CLASSES, dense_in)]
    for store in (net.params, net.velocity):
        for name in PARAM_ORDER:
            parts.append(np.ascontiguousarray(store[name], dtype="<f8").tobytes())
    return b"".join(parts)


def decode_checkpoint(blob: bytes) -> ConvNet:
    if len(blob) >= 4 and blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < _HEADER.size:
        raise TruncatedError("checkpoint header truncated")
    _, version, H, W, F, k, classes, dense_in = _HEADER.unpack_from(blob)
    if version != VERSION:
        raise VersionMismatchError(f"unsupported CNN1 version {version}")
    shapes = {"W1": (F, 1, k, k), "b1": (F,), "W2": (dense_in, classes), "b2": (classes,)}
    need = 2 * 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(blob) - _HEADER.size < need:
        raise TruncatedError(f"checkpoint payload needs {need} bytes, has {len(blob) - _HEADER.size}")
    off = _HEADER.size
    stores = []
    for _ in range(2):
        store = {}
        for name in PARAM_ORDER:
            n = int(np.prod(shapes[name]))
            store[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(shapes[name])
            off += 8 * n
        stores.append(store)
    return ConvNet(input_shape=(H, W), params=stores[0], velocity=stores[1])


def save_checkpoint(net: ConvNet, path) -> int:
    blob = encode_checkpoint(net)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def load_checkpoint(path) -> ConvNet:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
