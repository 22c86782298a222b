"""Small convolutional regression network, written from scratch on numpy.

Architecture (fixed family, sizes configurable): one 3x3 same-padding
convolution with ReLU, flatten, two ReLU dense layers, and a sigmoid output
head of one unit per target parameter. Everything runs in float64 and the
backward pass is hand-derived, which keeps the gradient checkable against
central finite differences to high precision.

Training minimizes mean absolute error on targets scaled to [0, 1] with
RMSprop (accumulator rho, denominator sqrt(s) + eps). Batches are reshuffled
every epoch from a dedicated substream, an 80/20 train/validation split is
drawn up front, and the weights returned are those of the best validation
epoch.
Given the same data, config, and seed, training is bit-reproducible on one
platform.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, LayoutError, NumericalError
from .rng import substream

__all__ = [
    "NetworkConfig",
    "TrainConfig",
    "ChiNetwork",
    "EpochStats",
    "TrainResult",
    "train_network",
    "mae_loss",
    "gradient_check",
]


@dataclass(frozen=True)
class NetworkConfig:
    """Layer sizes; the default matches the estimation architecture."""

    in_channels: int = 3
    height: int = 8
    width: int = 8
    conv_filters: int = 16
    kernel_size: int = 3
    dense_units: tuple[int, ...] = (64, 32)
    out_dim: int = 4
    init_seed: int = 0

    def __post_init__(self) -> None:
        if self.kernel_size % 2 != 1:
            raise ConfigError("kernel_size must be odd for same padding")
        for name in ("in_channels", "height", "width", "conv_filters", "out_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 128
    learning_rate: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not (0.0 < self.val_fraction < 1.0):
            raise ConfigError("val_fraction must lie in (0, 1)")


def _init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class _Conv2DSame:
    """3x3 (or any odd k) convolution, stride 1, zero padding, no activation."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, k: int):
        fan_in = c_in * k * k
        self.k = k
        self.params = {
            "W": _init_uniform(rng, (c_out, c_in, k, k), fan_in),
            "b": _init_uniform(rng, (c_out,), fan_in),
        }
        self.grads = {n: np.zeros_like(p) for n, p in self.params.items()}
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        B, C, H, Wd = x.shape
        k = self.k
        pad = (k - 1) // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        cols = np.empty((B, C, k, k, H, Wd))
        for di in range(k):
            for dj in range(k):
                cols[:, :, di, dj] = xp[:, :, di : di + H, dj : dj + Wd]
        cols2 = cols.reshape(B, C * k * k, H * Wd)
        W2 = self.params["W"].reshape(self.params["W"].shape[0], -1)
        out = np.einsum("fk,bkp->bfp", W2, cols2) + self.params["b"][None, :, None]
        self._cache = (x.shape, cols2)
        return out.reshape(B, -1, H, Wd)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        (B, C, H, Wd), cols2 = self._cache
        k = self.k
        pad = (k - 1) // 2
        F = dout.shape[1]
        dout2 = dout.reshape(B, F, H * Wd)
        self.grads["W"][...] = np.einsum("bfp,bkp->fk", dout2, cols2).reshape(self.params["W"].shape)
        self.grads["b"][...] = dout2.sum(axis=(0, 2))
        W2 = self.params["W"].reshape(F, -1)
        dcols2 = np.einsum("fk,bfp->bkp", W2, dout2)
        dcols = dcols2.reshape(B, C, k, k, H, Wd)
        dxp = np.zeros((B, C, H + 2 * pad, Wd + 2 * pad))
        for di in range(k):
            for dj in range(k):
                dxp[:, :, di : di + H, dj : dj + Wd] += dcols[:, :, di, dj]
        return dxp[:, :, pad : pad + H, pad : pad + Wd]


class _ReLU:
    params: dict = {}
    grads: dict = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0.0
        return x * self._mask

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout * self._mask


class _Flatten:
    params: dict = {}
    grads: dict = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout.reshape(self._shape)


class _Dense:
    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int):
        self.params = {
            "W": _init_uniform(rng, (n_in, n_out), n_in),
            "b": _init_uniform(rng, (n_out,), n_in),
        }
        self.grads = {n: np.zeros_like(p) for n, p in self.params.items()}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        self.grads["W"][...] = self._x.T @ dout
        self.grads["b"][...] = dout.sum(axis=0)
        return dout @ self.params["W"].T


class _Sigmoid:
    params: dict = {}
    grads: dict = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = 0.5 * (1.0 + np.tanh(0.5 * x))  # stable sigmoid
        return self._y

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout * self._y * (1.0 - self._y)


class ChiNetwork:
    """Conv -> ReLU -> Flatten -> Dense/ReLU stack -> Dense -> sigmoid.

    Outputs live in (0, 1) per coordinate; callers own the affine map to the
    physical parameter box.
    """

    def __init__(self, config: NetworkConfig):
        self.config = config
        rng = substream(config.init_seed, 101)
        k = config.kernel_size
        layers: list = [
            _Conv2DSame(rng, config.in_channels, config.conv_filters, k),
            _ReLU(),
            _Flatten(),
        ]
        n_in = config.conv_filters * config.height * config.width
        for units in config.dense_units:
            layers.append(_Dense(rng, n_in, units))
            layers.append(_ReLU())
            n_in = units
        layers.append(_Dense(rng, n_in, config.out_dim))
        layers.append(_Sigmoid())
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        expected = (self.config.in_channels, self.config.height, self.config.width)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise LayoutError(f"input must be (B, {expected[0]}, {expected[1]}, {expected[2]}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("network input must be finite (impute NaN cells first)")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dout: np.ndarray) -> None:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)

    def parameters(self):
        for li, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                yield f"layer{li}.{name}", p, layer.grads[name]

    def n_parameters(self) -> int:
        return sum(p.size for _, p, _ in self.parameters())

    def get_weights(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p, _ in self.parameters()}

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        for name, p, _ in self.parameters():
            if name not in weights:
                raise ConfigError(f"missing weight tensor {name}")
            w = np.asarray(weights[name], dtype=float)
            if w.shape != p.shape:
                raise ConfigError(f"user weight {name} has shape {w.shape}, expected {p.shape}")
            p[...] = w

    # persistence -----------------------------------------------------------

    def to_json(self) -> str:
        obj = {
            "format_version": 1,
            "config": {**asdict(self.config), "dense_units": list(self.config.dense_units)},
            "weights": {name: p.tolist() for name, p, _ in self.parameters()},
        }
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ChiNetwork":
        obj = json.loads(text)
        if obj.get("format_version") != 1:
            raise ConfigError(f"unsupported network format {obj.get('format_version')!r}")
        cfg_d = dict(obj["config"])
        cfg_d["dense_units"] = tuple(cfg_d["dense_units"])
        net = cls(NetworkConfig(**cfg_d))
        net.set_weights({k: np.asarray(v, dtype=float) for k, v in obj["weights"].items()})
        return net


def mae_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error over all entries and its subgradient wrt pred."""
    diff = pred - target
    loss = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size
    return loss, grad


class _RMSprop:
    def __init__(self, net: ChiNetwork, cfg: TrainConfig):
        self.cfg = cfg
        self.state = {name: np.zeros_like(p) for name, p, _ in net.parameters()}

    def step(self, net: ChiNetwork) -> None:
        c = self.cfg
        for name, p, g in net.parameters():
            s = self.state[name]
            s *= c.rho
            s += (1.0 - c.rho) * g * g
            p -= c.learning_rate * g / (np.sqrt(s) + c.eps)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_mae: float
    val_mae: float


@dataclass
class TrainResult:
    history: list[EpochStats]
    best_epoch: int
    best_val_mae: float
    n_train: int
    n_val: int

    def history_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_mae", "val_mae"])
            for h in self.history:
                w.writerow([h.epoch, repr(h.train_mae), repr(h.val_mae)])


def train_network(
    net: ChiNetwork, inputs: np.ndarray, targets: np.ndarray, cfg: TrainConfig
) -> TrainResult:
    """Train in place; weights end at the best-validation epoch.

    targets must already be scaled to [0, 1]. Non-finite losses abort with the
    batch index in the message.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    K = inputs.shape[0]
    if targets.shape != (K, net.config.out_dim):
        raise LayoutError(f"targets must be (K, {net.config.out_dim}), got {targets.shape}")
    if not np.all(np.isfinite(inputs)) or not np.all(np.isfinite(targets)):
        raise DomainError("training data must be finite")
    if np.any(targets < 0.0) or np.any(targets > 1.0):
        raise DomainError("targets must be scaled to [0, 1] before training")
    n_val = int(round(K * cfg.val_fraction))
    if n_val < 1 or K - n_val < 1:
        raise ConfigError(f"K={K} leaves an empty split at val_fraction={cfg.val_fraction}")

    perm = substream(cfg.seed, 1).permutation(K)
    train_idx, val_idx = perm[: K - n_val], perm[K - n_val :]
    x_val, y_val = inputs[val_idx], targets[val_idx]

    opt = _RMSprop(net, cfg)
    history: list[EpochStats] = []
    best = (np.inf, -1, None)
    for epoch in range(cfg.epochs):
        order = substream(cfg.seed, 2, epoch).permutation(train_idx.size)
        epoch_idx = train_idx[order]
        losses = []
        for bi, start in enumerate(range(0, epoch_idx.size, cfg.batch_size)):
            sel = epoch_idx[start : start + cfg.batch_size]
            pred = net.forward(inputs[sel])
            loss, dpred = mae_loss(pred, targets[sel])
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {bi}")
            losses.append(loss)
            net.backward(dpred)
            opt.step(net)
        val_pred = net.forward(x_val)
        val_mae = float(np.mean(np.abs(val_pred - y_val)))
        history.append(EpochStats(epoch=epoch, train_mae=float(np.mean(losses)), val_mae=val_mae))
        if val_mae < best[0]:
            best = (val_mae, epoch, net.get_weights())
    net.set_weights(best[2])
    return TrainResult(
        history=history,
        best_epoch=best[1],
        best_val_mae=best[0],
        n_train=int(train_idx.size),
        n_val=int(n_val),
    )


def gradient_check(net: ChiNetwork, x: np.ndarray, y: np.ndarray, h: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    Perturbs every weight; meant for toy configurations. Relative error uses
    max(|numeric|, |analytic|, 1e-8) in the denominator.
    """
    pred = net.forward(x)
    _, dpred = mae_loss(pred, y)
    net.backward(dpred)
    analytic = {name: g.copy() for name, _, g in net.parameters()}
    worst = 0.0
    for name, p, _ in net.parameters():
        flat = p.reshape(-1)
        ga = analytic[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            lp, _ = mae_loss(net.forward(x), y)
            flat[idx] = orig - h
            lm, _ = mae_loss(net.forward(x), y)
            flat[idx] = orig
            num = (lp - lm) / (2.0 * h)
            denom = max(abs(num), abs(ga[idx]), 1e-8)
            worst = max(worst, abs(num - ga[idx]) / denom)
    return worst
