"""Feed-forward networks with a flat parameter vector and hand-written backprop.

Parameter layout inside the flat vector is layer-major; for each layer the
weight matrix (shape ``out x in``, row-major) comes first, then the bias.
Hidden layers use tanh, the output layer is linear.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError

_MAGIC = b"FPN1"


def param_count(layer_sizes: Sequence[int]) -> int:
    return sum(n_out * n_in + n_out for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]))


class FlatParamNet:
    """MLP whose weights and biases live in one contiguous float64 vector.

    ``self.params`` is the single source of truth; per-layer ``(W, b)`` are
    views into it, so mutating ``params`` in place changes the network.
    """

    def __init__(
        self,
        layer_sizes: Sequence[int],
        rng: np.random.Generator | None = None,
        output_scale: float = 1.0,
    ):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise InputError(f"layer sizes must be >= 2 positive integers, got {layer_sizes!r}")
        self.layer_sizes = sizes
        self.params = np.zeros(param_count(sizes), dtype=np.float64)
        self._bind_views()
        if rng is not None:
            self.initialize(rng, output_scale)

    def _bind_views(self) -> None:
        self.layers: list[tuple[np.ndarray, np.ndarray]] = []
        offset = 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = self.params[offset:offset + n_out * n_in].reshape(n_out, n_in)
            offset += n_out * n_in
            b = self.params[offset:offset + n_out]
            offset += n_out
            self.layers.append((W, b))

    def initialize(self, rng: np.random.Generator, output_scale: float = 1.0) -> None:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; last layer scaled by ``output_scale``."""
        for idx, (W, b) in enumerate(self.layers):
            bound = 1.0 / np.sqrt(W.shape[1])
            W[...] = rng.uniform(-bound, bound, size=W.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
            if idx == len(self.layers) - 1:
                W *= output_scale
                b *= output_scale

    @property
    def num_params(self) -> int:
        return self.params.size

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def get_flat(self) -> np.ndarray:
        return self.params.copy()

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.params.shape:
            raise InputError(f"expected flat vector of length {self.params.size}, got shape {flat.shape}")
        self.params[...] = flat

    def copy(self) -> "FlatParamNet":
        net = FlatParamNet(self.layer_sizes)
        net.params[...] = self.params
        return net

    def _as_batch(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise InputError(f"expected input of width {self.input_dim}, got shape {x.shape}")
        return x, single

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batched forward pass; returns the output and the per-layer inputs for :meth:`backward_cached`."""
        h, _ = self._as_batch(x)
        acts = [h]
        last = len(self.layers) - 1
        for idx, (W, b) in enumerate(self.layers):
            h = h @ W.T + b
            if idx < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def forward(self, x: np.ndarray) -> np.ndarray:
        x, single = self._as_batch(x)
        out, _ = self.forward_cached(x)
        return out[0] if single else out

    def backward_cached(self, acts: list[np.ndarray], cotangent: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(output * cotangent)`` w.r.t. the flat parameters."""
        dz = np.asarray(cotangent, dtype=np.float64)
        if dz.ndim == 1:
            dz = dz[None, :]
        if dz.shape != acts[-1].shape:
            raise InputError(f"cotangent shape {dz.shape} does not match output shape {acts[-1].shape}")
        grad = np.empty_like(self.params)
        offset = self.params.size
        for idx in range(len(self.layers) - 1, -1, -1):
            W, b = self.layers[idx]
            a_prev = acts[idx]
            n_out, n_in = W.shape
            offset -= n_out
            grad[offset:offset + n_out] = dz.sum(axis=0)
            offset -= n_out * n_in
            grad[offset:offset + n_out * n_in] = (dz.T @ a_prev).ravel()
            if idx > 0:
                # acts[idx] is tanh output of the previous layer
                dz = (dz @ W) * (1.0 - a_prev * a_prev)
        return grad

    def backward(self, x: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        _, acts = self.forward_cached(x)
        return self.backward_cached(acts, cotangent)


# ---------------------------------------------------------------------------
# Checkpoints


def save_params(path: str | Path, layer_sizes: Sequence[int], flat: np.ndarray) -> None:
    """Binary checkpoint: magic, layer count, sizes (uint32), P (uint64), then P little-endian float64.

    ``flat`` may be longer than the network's own parameter count (a policy
    head appends its log-std block); P records the full length.
    """
    flat = np.ascontiguousarray(flat, dtype="<f8")
    header = _MAGIC + struct.pack("<I", len(layer_sizes))
    header += struct.pack(f"<{len(layer_sizes)}I", *layer_sizes)
    header += struct.pack("<Q", flat.size)
    Path(path).write_bytes(header + flat.tobytes())


def load_params(path: str | Path) -> tuple[list[int], np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise InputError(f"{path}: not a flat-parameter checkpoint")
    (n_layers,) = struct.unpack_from("<I", data, 4)
    sizes = list(struct.unpack_from(f"<{n_layers}I", data, 8))
    off = 8 + 4 * n_layers
    (count,) = struct.unpack_from("<Q", data, off)
    off += 8
    flat = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(np.float64)
    if count < param_count(sizes):
        raise InputError(f"{path}: {count} parameters is fewer than the layer sizes require")
    return sizes, flat


def params_to_json(layer_sizes: Sequence[int], flat: np.ndarray) -> str:
    # repr of a Python float round-trips exactly
    return json.dumps({"layer_sizes": list(layer_sizes), "count": int(len(flat)),
                       "params": [float(v) for v in flat]})


def params_from_json(text: str) -> tuple[list[int], np.ndarray]:
    obj = json.loads(text)
    flat = np.asarray(obj["params"], dtype=np.float64)
    if flat.size != obj["count"]:
        raise InputError("parameter count does not match header")
    return list(obj["layer_sizes"]), flat


class Adam:
    """Adaptive-moment optimizer acting in place on a flat parameter vector (minimizes)."""

    def __init__(self, size: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
