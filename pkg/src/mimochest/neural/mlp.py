"""Fully connected tanh network with an exact reverse-mode parameter Jacobian.

Flat parameter layout: for each layer in order, the matrix ``[W | b]`` of shape
``(n_out, n_in + 1)`` in row-major order (each row is a neuron's input weights
followed by its bias).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _jsonio

__all__ = [
    "ARCHITECTURES",
    "MlpModel",
    "forward",
    "jacobian",
    "pack_taps",
    "unpack_taps",
]

ARCHITECTURES = {
    "dnn1": (8, 16, 16, 16, 8),
    "dnn2": (8, 32, 32, 32, 8),
}
N_TAPS = 4
N_FEATURES = 2 * N_TAPS


@dataclass
class MlpModel:
    layer_sizes: tuple
    weights: list
    biases: list
    in_mean: np.ndarray = None
    in_scale: np.ndarray = None
    out_mean: np.ndarray = None
    out_scale: np.ndarray = None
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ValueError("a network needs at least an input and an output layer")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias vector per layer expected")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[l + 1], self.layer_sizes[l])
            if np.shape(w) != shape or np.shape(b) != (shape[0],):
                raise ValueError(f"layer {l}: weights {np.shape(w)} / bias {np.shape(b)}, expected {shape}")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        n_in, n_out = self.layer_sizes[0], self.layer_sizes[-1]
        self.in_mean = np.zeros(n_in) if self.in_mean is None else np.asarray(self.in_mean, float)
        self.in_scale = np.ones(n_in) if self.in_scale is None else np.asarray(self.in_scale, float)
        self.out_mean = np.zeros(n_out) if self.out_mean is None else np.asarray(self.out_mean, float)
        self.out_scale = np.ones(n_out) if self.out_scale is None else np.asarray(self.out_scale, float)

    @classmethod
    def initialize(cls, layer_sizes, rng) -> "MlpModel":
        """Glorot-uniform weights, zero biases."""
        if isinstance(layer_sizes, str):
            layer_sizes = ARCHITECTURES[layer_sizes]
        weights, biases = [], []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / (n_in + n_out))
            weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
            biases.append(np.zeros(n_out))
        return cls(tuple(layer_sizes), weights, biases)

    @classmethod
    def zeros(cls, layer_sizes) -> "MlpModel":
        if isinstance(layer_sizes, str):
            layer_sizes = ARCHITECTURES[layer_sizes]
        return cls(
            tuple(layer_sizes),
            [np.zeros((o, i)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])],
            [np.zeros(o) for o in layer_sizes[1:]],
        )

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def layer_param_counts(self):
        return [o * (i + 1) for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:])]

    @property
    def n_params(self) -> int:
        return sum(self.layer_param_counts())

    def get_params(self) -> np.ndarray:
        return np.concatenate(
            [np.hstack((w, b[:, None])).ravel() for w, b in zip(self.weights, self.biases)]
        )

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        pos = 0
        for l, n in enumerate(self.layer_param_counts()):
            wb = theta[pos : pos + n].reshape(self.layer_sizes[l + 1], self.layer_sizes[l] + 1)
            self.weights[l] = wb[:, :-1].copy()
            self.biases[l] = wb[:, -1].copy()
            pos += n

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.in_mean.copy(),
            self.in_scale.copy(),
            self.out_mean.copy(),
            self.out_scale.copy(),
            dict(self.report),
        )

    def predict(self, x) -> np.ndarray:
        """Standardize, run the network, map back to target units."""
        x = np.asarray(x, dtype=float)
        z = forward(self, (x - self.in_mean) / self.in_scale)
        return z * self.out_scale + self.out_mean

    def to_dict(self) -> dict:
        return {
            "kind": "mlp_model",
            "layer_sizes": list(self.layer_sizes),
            "activation": ["tanh"] * (self.n_layers - 1) + ["linear"],
            "weights": [_jsonio.encode_array(w) for w in self.weights],
            "biases": [_jsonio.encode_array(b) for b in self.biases],
            "normalization": {
                "in_mean": self.in_mean.tolist(),
                "in_scale": self.in_scale.tolist(),
                "out_mean": self.out_mean.tolist(),
                "out_scale": self.out_scale.tolist(),
            },
            "report": self.report,
        }

    @classmethod
    def from_dict(cls, d) -> "MlpModel":
        if d.get("kind") != "mlp_model":
            raise ValueError("not an MLP model record")
        norm = d["normalization"]
        return cls(
            tuple(d["layer_sizes"]),
            [_jsonio.decode_array(w) for w in d["weights"]],
            [_jsonio.decode_array(b) for b in d["biases"]],
            np.asarray(norm["in_mean"], float),
            np.asarray(norm["in_scale"], float),
            np.asarray(norm["out_mean"], float),
            np.asarray(norm["out_scale"], float),
            d.get("report", {}),
        )

    def save(self, path):
        _jsonio.dump(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "MlpModel":
        return cls.from_dict(_jsonio.load(path))


def _check_input(model: MlpModel, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.layer_sizes[0]:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {model.layer_sizes[0]}")
    return x


def _forward_all(model: MlpModel, x):
    acts = [x]
    a = x
    last = model.n_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        a = z if l == last else np.tanh(z)
        acts.append(a)
    return acts


def forward(model: MlpModel, x) -> np.ndarray:
    """Network output for ``x`` of shape (..., n_in); tanh hidden layers, linear output."""
    x = _check_input(model, x)
    return _forward_all(model, x)[-1]


def backprop_deltas(model: MlpModel, acts):
    """Sensitivities d y_o / d z_l for every layer; entry l has shape (R, n_out, n_l)."""
    r = acts[0].shape[0]
    n_out = model.layer_sizes[-1]
    delta = np.broadcast_to(np.eye(n_out), (r, n_out, n_out))
    deltas = [None] * model.n_layers
    deltas[-1] = delta
    for l in range(model.n_layers - 1, 0, -1):
        a = acts[l]  # tanh output feeding layer l
        delta = (delta @ model.weights[l]) * (1.0 - a * a)[:, None, :]
        deltas[l - 1] = delta
    return deltas


def jacobian(model: MlpModel, x) -> np.ndarray:
    """d output / d parameters.  ``x`` of shape (n_in,) gives (n_out, P);
    a batch (R, n_in) gives (R, n_out, P)."""
    x = _check_input(model, x)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    acts = _forward_all(model, xb)
    deltas = backprop_deltas(model, acts)
    blocks = []
    for l in range(model.n_layers):
        a_aug = np.hstack((acts[l], np.ones((xb.shape[0], 1))))
        # (R, n_out, n_l, n_{l-1}+1)
        blk = deltas[l][:, :, :, None] * a_aug[:, None, None, :]
        blocks.append(blk.reshape(xb.shape[0], model.layer_sizes[-1], -1))
    jac = np.concatenate(blocks, axis=2)
    return jac[0] if single else jac


def pack_taps(h) -> np.ndarray:
    """Complex taps (..., 4) -> interleaved reals (..., 8): [Re h0, Im h0, Re h1, ...]."""
    h = np.asarray(h, dtype=complex)
    if h.shape[-1] != N_TAPS:
        raise ValueError(f"expected {N_TAPS} taps, got {h.shape[-1]}")
    out = np.empty(h.shape[:-1] + (N_FEATURES,))
    out[..., 0::2] = h.real
    out[..., 1::2] = h.imag
    return out


def unpack_taps(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} values, got {v.shape[-1]}")
    return v[..., 0::2] + 1j * v[..., 1::2]
