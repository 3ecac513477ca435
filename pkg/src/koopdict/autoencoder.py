"""Dense autoencoder trained by plain backpropagation.

No framework: layers are numpy matrices, the forward pass is the
recursion  x_next = g(b + W x),  gradients are reverse-mode by hand, and
the optimizer is minibatch SGD (or Adam for the deeper nets).  Everything
is driven by a single seeded generator so a (spec, config, data) triple
reproduces the parameter trajectory bit for bit.

The bottleneck activation is the latent vector: ``encode`` runs the
recursion up to the bottleneck layer, ``decode`` runs the remainder, and
``forward`` is their composition on the same code path.
"""
from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "TrainingDivergedError",
    "LayerSpec",
    "MlpParams",
    "MlpAutoencoder",
    "TrainConfig",
    "TrainReport",
    "init_params",
    "mse_loss",
    "backprop_gradients",
    "train",
    "accuracy",
    "save_model",
    "load_model",
]

_MAGIC = b"KDAE\x01"


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _apply_activation(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def _activation_derivative(kind: str, activated: np.ndarray) -> np.ndarray:
    """Derivative of the activation expressed through its own output."""
    if kind == "sigmoid":
        return activated * (1.0 - activated)
    if kind == "relu":
        return (activated > 0).astype(activated.dtype)
    if kind == "linear":
        return np.ones_like(activated)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class LayerSpec:
    """Layer sizes plus which layer is the bottleneck.

    ``sizes`` runs input to output and must be symmetric in its endpoints
    (same input and output width).  ``activation`` applies at every
    non-input layer; ``output_activation`` may override the last layer
    ("same" keeps the hidden activation).
    """

    sizes: tuple[int, ...]
    latent_index: int
    activation: str = "sigmoid"
    output_activation: str = "same"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("need at least input, latent and output layers")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if sizes[0] != sizes[-1]:
            raise ValueError(f"input and output sizes differ: {sizes[0]} vs {sizes[-1]}")
        if not 0 < self.latent_index < len(sizes) - 1:
            raise ValueError(f"latent index {self.latent_index} must be strictly interior")
        if sizes[self.latent_index] >= sizes[0]:
            raise ValueError(
                f"latent size {sizes[self.latent_index]} must be smaller than input {sizes[0]}"
            )
        if self.activation not in ("sigmoid", "relu"):
            raise ValueError(f"activation must be 'sigmoid' or 'relu', got {self.activation!r}")
        if self.output_activation not in ("same", "linear", "sigmoid"):
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def input_size(self) -> int:
        return self.sizes[0]

    @property
    def latent_size(self) -> int:
        return self.sizes[self.latent_index]

    @property
    def n_weight_layers(self) -> int:
        return len(self.sizes) - 1

    def layer_activation(self, layer: int) -> str:
        """Activation applied when producing layer ``layer + 1``."""
        if layer == self.n_weight_layers - 1 and self.output_activation != "same":
            return self.output_activation
        return self.activation

    def with_width_scale(self, scale: float) -> "LayerSpec":
        """Shrink hidden layers by ``scale``, never below the narrowest
        original hidden width and never touching input, output or latent."""
        if scale <= 0:
            raise ValueError(f"width scale must be positive, got {scale}")
        if scale == 1.0:
            return self
        hidden = [
            s
            for i, s in enumerate(self.sizes)
            if 0 < i < len(self.sizes) - 1 and i != self.latent_index
        ]
        floor = min(hidden) if hidden else 1
        sizes = []
        for i, s in enumerate(self.sizes):
            if 0 < i < len(self.sizes) - 1 and i != self.latent_index:
                sizes.append(max(int(round(s * scale)), min(s, floor), 1))
            else:
                sizes.append(s)
        return LayerSpec(tuple(sizes), self.latent_index, self.activation, self.output_activation)


@dataclass(frozen=True)
class MlpParams:
    """Weight matrices (out x in) and bias vectors, one pair per layer."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"inconsistent layer shapes {w.shape} / {b.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("parameters must be finite")

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def matches(self, spec: LayerSpec) -> bool:
        if len(self.weights) != spec.n_weight_layers:
            return False
        return all(
            w.shape == (spec.sizes[i + 1], spec.sizes[i]) for i, w in enumerate(self.weights)
        )


def init_params(spec: LayerSpec, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    weights = []
    biases = []
    for fan_in, fan_out in zip(spec.sizes[:-1], spec.sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(weights), tuple(biases))


@dataclass(frozen=True)
class MlpAutoencoder:
    """A layer spec bound to concrete parameters."""

    spec: LayerSpec
    params: MlpParams
    seed: int | None = None

    def __post_init__(self):
        if not self.params.matches(self.spec):
            raise ValueError("parameter shapes do not match the layer spec")

    def _run_layers(self, x: np.ndarray, start: int, stop: int) -> tuple[np.ndarray, list[np.ndarray]]:
        a = np.asarray(x, dtype=float)
        squeeze = a.ndim == 1
        if squeeze:
            a = a[None, :]
        if a.shape[1] != self.spec.sizes[start]:
            raise ValueError(
                f"input width {a.shape[1]} does not match layer width {self.spec.sizes[start]}"
            )
        activations = [a]
        for layer in range(start, stop):
            z = a @ self.params.weights[layer].T + self.params.biases[layer]
            a = _apply_activation(self.spec.layer_activation(layer), z)
            if not np.isfinite(a).all():
                raise FloatingPointError(f"non-finite activation after layer {layer}")
            activations.append(a)
        if squeeze:
            activations = [arr[0] for arr in activations]
            a = activations[-1]
        return a, activations

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Run the whole net; returns the output and every layer activation
        (input included), which is all backprop needs."""
        return self._run_layers(x, 0, self.spec.n_weight_layers)

    def encode(self, x: np.ndarray) -> np.ndarray:
        out, _ = self._run_layers(x, 0, self.spec.latent_index)
        return out

    def decode(self, z: np.ndarray) -> np.ndarray:
        out, _ = self._run_layers(z, self.spec.latent_index, self.spec.n_weight_layers)
        return out


def mse_loss(model: MlpAutoencoder, batch: np.ndarray) -> float:
    """Mean over samples of the squared reconstruction norm."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    out, _ = model.forward(batch)
    diff = out - batch
    return float(np.mean(np.sum(diff * diff, axis=1)))


def backprop_gradients(
    model: MlpAutoencoder, batch: np.ndarray
) -> tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...], float]:
    """Exact gradients of :func:`mse_loss` for every weight and bias.

    Returns (weight grads, bias grads, batch loss); the loss rides along
    for free since the forward activations are needed anyway.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    n = batch.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    _, acts = model.forward(batch)
    spec = model.spec
    diff = acts[-1] - batch
    loss = float(np.mean(np.sum(diff * diff, axis=1)))

    delta = (2.0 / n) * diff * _activation_derivative(
        spec.layer_activation(spec.n_weight_layers - 1), acts[-1]
    )
    grad_w: list[np.ndarray] = [None] * spec.n_weight_layers  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * spec.n_weight_layers  # type: ignore[list-item]
    for layer in range(spec.n_weight_layers - 1, -1, -1):
        grad_w[layer] = delta.T @ acts[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.params.weights[layer]) * _activation_derivative(
                spec.layer_activation(layer - 1), acts[layer]
            )
    return tuple(grad_w), tuple(grad_b), loss


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 42
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


@dataclass
class TrainReport:
    """Per-epoch average training loss plus the wrap-up numbers."""

    losses: np.ndarray
    final_accuracy: float
    wall_time_s: float


class _Adam:
    def __init__(self, params: MlpParams, lr: float):
        self.lr = lr
        self.beta1 = 0.9
        self.beta2 = 0.999
        self.eps = 1e-8
        self.t = 0
        self.m = [np.zeros_like(w) for w in params.weights] + [
            np.zeros_like(b) for b in params.biases
        ]
        self.v = [np.zeros_like(x) for x in self.m]

    def step(self, values: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for i, (x, g) in enumerate(zip(values, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            x -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(
    spec: LayerSpec, data: np.ndarray, cfg: TrainConfig
) -> tuple[MlpAutoencoder, TrainReport]:
    """Fit the autoencoder to ``data`` (rows are samples, already scaled
    to [0, 1]).  Deterministic under a fixed seed; aborts with the epoch
    index if the loss diverges."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != spec.input_size:
        raise ValueError(
            f"data shape {data.shape} does not match input size {spec.input_size}"
        )
    if data.size and (data.min() < -1e-9 or data.max() > 1.0 + 1e-9):
        raise ValueError(
            "training data must be pre-scaled to [0, 1]; run minmax_scale first"
        )
    n = data.shape[0]
    if n == 0:
        raise ValueError("no training samples")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(spec, rng)
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    adam = _Adam(params, cfg.learning_rate) if cfg.optimizer == "adam" else None

    start = time.perf_counter()
    losses = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        try:
            model = MlpAutoencoder(
                spec, MlpParams(tuple(weights), tuple(biases)), seed=cfg.seed
            )
        except ValueError:
            raise TrainingDivergedError(epoch) from None
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            try:
                grad_w, grad_b, batch_loss = backprop_gradients(model, data[idx])
            except FloatingPointError:
                raise TrainingDivergedError(epoch) from None
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(epoch)
            epoch_loss += batch_loss * idx.size
            if adam is not None:
                adam.step(weights + biases, list(grad_w) + list(grad_b))
            else:
                for w, g in zip(weights, grad_w):
                    w -= cfg.learning_rate * g
                for b, g in zip(biases, grad_b):
                    b -= cfg.learning_rate * g
        losses[epoch] = epoch_loss / n
        if not np.isfinite(losses[epoch]):
            raise TrainingDivergedError(epoch)

    final = MlpAutoencoder(
        spec,
        MlpParams(tuple(w.copy() for w in weights), tuple(b.copy() for b in biases)),
        seed=cfg.seed,
    )
    report = TrainReport(
        losses=losses,
        final_accuracy=accuracy(final, data) if n > 1 else float("nan"),
        wall_time_s=time.perf_counter() - start,
    )
    return final, report


def accuracy(model: MlpAutoencoder, data: np.ndarray) -> float:
    """1 - MSE / Var: 1 for perfect reconstruction, 0 for a net that only
    reproduces the data mean, negative below that."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    centered = data - data.mean(axis=0)
    var = float(np.mean(np.sum(centered * centered, axis=1)))
    if var <= 0.0:
        raise ValueError("data variance is zero; accuracy is undefined")
    return 1.0 - mse_loss(model, data) / var


def save_model(path, model: MlpAutoencoder) -> None:
    """Serialize to a flat self-describing file: a JSON header (sizes,
    activations, seed) then the raw float64 little-endian weight and bias
    entries in layer order, each matrix row-major."""
    header = {
        "sizes": list(model.spec.sizes),
        "latent_index": model.spec.latent_index,
        "activation": model.spec.activation,
        "output_activation": model.spec.output_activation,
        "seed": model.seed,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for w, b in zip(model.params.weights, model.params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> MlpAutoencoder:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a saved autoencoder (bad magic)")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        spec = LayerSpec(
            tuple(header["sizes"]),
            header["latent_index"],
            header["activation"],
            header["output_activation"],
        )
        weights = []
        biases = []
        for fan_in, fan_out in zip(spec.sizes[:-1], spec.sizes[1:]):
            w = np.frombuffer(fh.read(8 * fan_out * fan_in), dtype="<f8").reshape(fan_out, fan_in)
            b = np.frombuffer(fh.read(8 * fan_out), dtype="<f8")
            if w.size != fan_out * fan_in or b.size != fan_out:
                raise ValueError(f"{path}: truncated parameter block")
            weights.append(w.astype(float))
            biases.append(b.astype(float))
        trailing = fh.read(1)
        if trailing:
            raise ValueError(f"{path}: trailing bytes after parameters")
    return MlpAutoencoder(spec, MlpParams(tuple(weights), tuple(biases)), seed=header["seed"])
