"""Feed-forward fully connected networks: definition, generation, evaluation.

A network with ``depth`` activation layers is stored as ``depth + 1`` affine
layers (W, b); the activation applies to all but the last, whose output is the
network output.  Node values form a single flat variable index space used by
the constraint and clique machinery:

* layer 0 holds the inputs (indices ``0 .. n_u-1``),
* hidden layer ``i`` (1-based) holds the post-activation values of the i-th
  activation layer, at indices ``offset(i) .. offset(i)+n_i-1`` with
  ``offset(i) = n_u + n_1 + ... + n_{i-1}``.

Outputs are not variables; the final affine map is substituted wherever the
output appears.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np


class ModelFormatError(ValueError):
    """Raised for malformed model files: bad JSON, shapes, or activation."""


def relu(x):
    return np.maximum(x, 0.0)


def relu_deriv(x):
    return (np.asarray(x) > 0).astype(float)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def sigmoid_deriv(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh_deriv(x):
    return 1.0 / np.cosh(np.asarray(x, dtype=float)) ** 2


ACTIVATIONS: Dict[str, Tuple[Callable, Callable]] = {
    "relu": (relu, relu_deriv),
    "sigmoid": (sigmoid, sigmoid_deriv),
    "tanh": (np.tanh, tanh_deriv),
}


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``lo <= x <= hi`` (elementwise)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box endpoints must be 1-D vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi elementwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __len__(self) -> int:
        return self.lo.shape[0]

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))


@dataclass(frozen=True)
class PolytopeSpec:
    """Output polytope given by faces ``c^T y <= d`` (d may be left open)."""

    faces: Tuple[Tuple[np.ndarray, Optional[float]], ...]

    def __post_init__(self):
        if not self.faces:
            raise ValueError("polytope needs at least one face")
        norm = []
        for c, d in self.faces:
            c = np.atleast_1d(np.asarray(c, dtype=float))
            if not np.any(c != 0):
                raise ValueError("face normal must be nonzero")
            c.setflags(write=False)
            norm.append((c, None if d is None else float(d)))
        object.__setattr__(self, "faces", tuple(norm))

    @staticmethod
    def axis_faces(n_y: int) -> "PolytopeSpec":
        """The 2*n_y faces +/- e_k, bounding each output above and below."""
        faces = []
        for k in range(n_y):
            for s in (1.0, -1.0):
                c = np.zeros(n_y)
                c[k] = s
                faces.append((c, None))
        return PolytopeSpec(tuple(faces))


@dataclass(frozen=True)
class NetworkModel:
    """Immutable layered network; safe to share read-only across workers."""

    layers: Tuple[Tuple[np.ndarray, np.ndarray], ...]
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ModelFormatError(f"unknown activation {self.activation!r}")
        if len(self.layers) < 1:
            raise ModelFormatError("model needs at least the affine output layer")
        norm = []
        for k, (W, b) in enumerate(self.layers):
            W = np.asarray(W, dtype=float)
            b = np.asarray(b, dtype=float)
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ModelFormatError(f"layer {k}: W must be 2-D and b match its rows")
            if k > 0 and W.shape[1] != norm[k - 1][0].shape[0]:
                raise ModelFormatError(
                    f"layer {k}: expected {norm[k - 1][0].shape[0]} columns, got {W.shape[1]}"
                )
            W.setflags(write=False)
            b.setflags(write=False)
            norm.append((W, b))
        object.__setattr__(self, "layers", tuple(norm))

    # -- shape queries -------------------------------------------------

    @property
    def depth(self) -> int:
        """Number of activation layers."""
        return len(self.layers) - 1

    @property
    def n_u(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def n_y(self) -> int:
        return self.layers[-1][0].shape[0]

    def layer_size(self, i: int) -> int:
        """Nodes in variable layer i (0 = inputs, 1..depth = hidden)."""
        if i == 0:
            return self.n_u
        return self.layers[i - 1][0].shape[0]

    def var_offset(self, i: int) -> int:
        return sum(self.layer_size(k) for k in range(i))

    @property
    def n_vars(self) -> int:
        return self.var_offset(self.depth) + self.layer_size(self.depth)

    def var_index(self, layer: int, node: int) -> int:
        return self.var_offset(layer) + node

    def layer_vars(self, i: int) -> Tuple[int, ...]:
        off = self.var_offset(i)
        return tuple(range(off, off + self.layer_size(i)))


# -- evaluation ----------------------------------------------------------


def forward(model: NetworkModel, u: Sequence[float]) -> np.ndarray:
    """Exact evaluation of the network at a single input vector."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (model.n_u,):
        raise ValueError(f"expected input of length {model.n_u}, got shape {u.shape}")
    act = ACTIVATIONS[model.activation][0]
    x = u
    for W, b in model.layers[:-1]:
        x = act(W @ x + b)
    W, b = model.layers[-1]
    return W @ x + b


def forward_batch(model: NetworkModel, U: np.ndarray) -> np.ndarray:
    """Evaluate many inputs at once; ``U`` has shape (N, n_u)."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] != model.n_u:
        raise ValueError(f"expected (N, {model.n_u}) inputs, got shape {U.shape}")
    act = ACTIVATIONS[model.activation][0]
    X = U
    for W, b in model.layers[:-1]:
        X = act(X @ W.T + b)
    W, b = model.layers[-1]
    return X @ W.T + b


def forward_trace(model: NetworkModel, u: Sequence[float]) -> np.ndarray:
    """All node values [inputs, hidden layer 1, ..., hidden layer depth]."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    act = ACTIVATIONS[model.activation][0]
    parts = [u]
    x = u
    for W, b in model.layers[:-1]:
        x = act(W @ x + b)
        parts.append(x)
    return np.concatenate(parts)


def forward_trace_batch(model: NetworkModel, U: np.ndarray) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    act = ACTIVATIONS[model.activation][0]
    parts = [U]
    X = U
    for W, b in model.layers[:-1]:
        X = act(X @ W.T + b)
        parts.append(X)
    return np.concatenate(parts, axis=1)


# -- deterministic Gaussian generator -------------------------------------

_MASK64 = (1 << 64) - 1


class _SplitMix64:
    """64-bit counter-based generator (SplitMix64), portable across languages.

    state_{n+1} = state_n + 0x9E3779B97F4A7C15 (mod 2^64); the output is the
    mixed state.  Uniforms in (0, 1] are ((x >> 11) + 1) * 2^-53.
    """

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        return ((self.next_u64() >> 11) + 1) * 2.0 ** -53


def gaussian_stream(seed: int, count: int) -> np.ndarray:
    """Standard normals via Box-Muller on SplitMix64 uniforms.

    Pairs are produced from consecutive uniforms (u1, u2) as
    sqrt(-2 ln u1) * (cos, sin)(2 pi u2); the trailing half of an odd request
    is discarded.  Fully deterministic in the seed.
    """
    rng = _SplitMix64(seed)
    out = np.empty(count)
    i = 0
    while i < count:
        u1 = rng.next_unit()
        u2 = rng.next_unit()
        r = math.sqrt(-2.0 * math.log(u1))
        out[i] = r * math.cos(2.0 * math.pi * u2)
        i += 1
        if i < count:
            out[i] = r * math.sin(2.0 * math.pi * u2)
            i += 1
    return out


def random_model(
    n_u: int,
    n_y: int,
    layers: int,
    nodes_per_layer: int,
    activation: str,
    seed: int,
) -> NetworkModel:
    """Network with i.i.d. standard Gaussian weights and biases.

    Entries are drawn in file order: for each layer, W row-major then b.
    The same seed always yields a bit-identical model.
    """
    if min(n_u, n_y, layers, nodes_per_layer) < 1:
        raise ValueError("all counts must be >= 1")
    sizes = [n_u] + [nodes_per_layer] * layers + [n_y]
    total = sum(sizes[k + 1] * sizes[k] + sizes[k + 1] for k in range(len(sizes) - 1))
    draws = gaussian_stream(seed, total)
    pos = 0
    layer_params = []
    for k in range(len(sizes) - 1):
        rows, cols = sizes[k + 1], sizes[k]
        W = draws[pos : pos + rows * cols].reshape(rows, cols)
        pos += rows * cols
        b = draws[pos : pos + rows]
        pos += rows
        layer_params.append((W, b))
    return NetworkModel(tuple(layer_params), activation)


# -- JSON schema -----------------------------------------------------------


def model_to_dict(model: NetworkModel) -> dict:
    return {
        "activation": model.activation,
        "layers": [
            {"W": W.tolist(), "b": b.tolist()} for W, b in model.layers
        ],
    }


def save_model(model: NetworkModel, path: str) -> None:
    """Write the JSON model schema (row-major matrices, decimal doubles)."""
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def model_from_dict(data: dict) -> NetworkModel:
    try:
        activation = data["activation"]
        raw_layers = data["layers"]
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"missing field in model file: {exc}") from exc
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ModelFormatError("'layers' must be a nonempty list")
    layers = []
    for k, entry in enumerate(raw_layers):
        try:
            W = np.asarray(entry["W"], dtype=float)
            b = np.asarray(entry["b"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"layer {k}: {exc}") from exc
        layers.append((W, b))
    return NetworkModel(tuple(layers), activation)


def load_model(path: str) -> NetworkModel:
    """Load and validate a model file; raises ModelFormatError on any defect."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"cannot parse {path}: {exc}") from exc
    return model_from_dict(data)


def model_fingerprint(model: NetworkModel) -> str:
    """Stable hex digest of the full parameter set."""
    import hashlib

    payload = json.dumps(model_to_dict(model), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]
