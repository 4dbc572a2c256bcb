"""Dense-network numerics: small tanh MLPs with explicit forward/backward
passes, Adam, and a finite-difference gradient oracle.

Everything is float64 and purely functional: ops return new arrays, never
mutate their inputs. All function approximators in the framework (policies,
Q functions, value functions, discriminators) are instances of this one MLP
family: a chain of fully-connected layers with tanh hidden activations and an
identity or tanh output head.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

HIDDEN_ACTIVATION = "tanh"  # fixed for the whole MLP family
OUTPUT_ACTIVATIONS = ("identity", "tanh")

# Checkpoint file layout (version 1):
#   magic   8 bytes  b"RAILMLP\x00"
#   version u32 LE
#   outact  u32 LE   0 = identity, 1 = tanh
#   nsizes  u32 LE   number of entries in layer_sizes
#   sizes   nsizes * u32 LE
#   payload per layer: weights row-major f64 LE, then biases f64 LE
_CKPT_MAGIC = b"RAILMLP\x00"
_CKPT_VERSION = 1


class ShapeError(ValueError):
    """Array dimensions do not match the network's layer sizes."""


class ContractError(RuntimeError):
    """A call violated an API contract (e.g. stale forward cache)."""


class NonFiniteError(FloatingPointError):
    """A value that must be finite was NaN or infinite."""


class CheckpointError(ValueError):
    """Checkpoint file is corrupt or from an incompatible version."""


@dataclass
class MlpParams:
    """Weights and biases of a fully-connected tanh network.

    weights[i] has shape (layer_sizes[i+1], layer_sizes[i]); biases[i] has
    shape (layer_sizes[i+1],).
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output_activation: str = "identity"

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def validate(self) -> None:
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ShapeError(f"invalid layer_sizes {self.layer_sizes}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ShapeError(f"unknown output activation {self.output_activation!r}")
        if len(self.weights) != self.n_layers or len(self.biases) != self.n_layers:
            raise ShapeError("weights/biases do not cover every layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != want:
                raise ShapeError(f"layer {i}: weight shape {w.shape}, expected {want}")
            if b.shape != (self.layer_sizes[i + 1],):
                raise ShapeError(
                    f"layer {i}: bias shape {b.shape}, expected ({self.layer_sizes[i + 1]},)"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NonFiniteError(f"layer {i}: non-finite parameters")

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.output_activation,
        )


@dataclass
class MlpGrads:
    """Parameter-shaped gradient container (same layout as MlpParams)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def scale(self, c: float) -> "MlpGrads":
        return MlpGrads([c * w for w in self.weights], [c * b for b in self.biases])

    def add(self, other: "MlpGrads") -> "MlpGrads":
        return MlpGrads(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def is_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights) and all(
            np.isfinite(b).all() for b in self.biases
        )

    @staticmethod
    def zeros_like(params: MlpParams) -> "MlpGrads":
        return MlpGrads(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )


@dataclass
class ForwardCache:
    """Per-layer pre-activations/activations from one forward call.

    Holds a reference to the exact MlpParams object it was produced with so a
    mismatched backward call can be rejected.
    """

    params: MlpParams
    inputs: np.ndarray              # (B, n_in)
    pre_activations: list[np.ndarray]   # z per layer, (B, n_l)
    activations: list[np.ndarray]       # post-activation per layer, (B, n_l)

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]

    @property
    def outputs(self) -> np.ndarray:
        return self.activations[-1]


def init_mlp(
    layer_sizes: tuple[int, ...] | list[int],
    rng: np.random.Generator,
    output_activation: str = "identity",
) -> MlpParams:
    """Fresh network: weights uniform in +-1/sqrt(fan_in), biases zero."""
    sizes = tuple(int(s) for s in layer_sizes)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    params = MlpParams(sizes, weights, biases, output_activation)
    params.validate()
    return params


def mlp_forward(params: MlpParams, inputs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Batched forward pass. inputs: (B, n_in). Returns (outputs, cache)."""
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.shape[0] == 0:
        raise ShapeError("empty batch")
    if x.shape[1] != params.n_in:
        raise ShapeError(
            f"input dim {x.shape[1]} does not match layer 0 input size {params.n_in}"
        )
    pre, act = [], []
    a = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        if a.shape[1] != w.shape[1]:
            raise ShapeError(
                f"layer {i}: got {a.shape[1]} features, weight expects {w.shape[1]}"
            )
        z = a @ w.T + b
        pre.append(z)
        if i < last:
            a = np.tanh(z)
        elif params.output_activation == "tanh":
            a = np.tanh(z)
        else:
            a = z
        act.append(a)
    return a, ForwardCache(params, x, pre, act)


def mlp_backward(
    params: MlpParams, cache: ForwardCache, output_grads: np.ndarray
) -> tuple[MlpGrads, np.ndarray]:
    """Exact gradients of sum(outputs * output_grads) w.r.t. params and inputs.

    cache must come from a forward call with this exact params object.
    """
    if cache.params is not params:
        raise ContractError("forward cache does not belong to these parameters")
    g_y = np.atleast_2d(np.asarray(output_grads, dtype=np.float64))
    if g_y.shape != cache.outputs.shape:
        raise ShapeError(
            f"output_grads shape {g_y.shape} does not match outputs {cache.outputs.shape}"
        )
    n = params.n_layers
    g_w: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    g_b: list[np.ndarray] = [None] * n  # type: ignore[list-item]

    if params.output_activation == "tanh":
        delta = g_y * (1.0 - cache.activations[-1] ** 2)
    else:
        delta = g_y
    for i in range(n - 1, -1, -1):
        a_prev = cache.inputs if i == 0 else cache.activations[i - 1]
        g_w[i] = delta.T @ a_prev
        g_b[i] = delta.sum(axis=0)
        g_prev = delta @ params.weights[i]
        if i > 0:
            delta = g_prev * (1.0 - cache.activations[i - 1] ** 2)
    return MlpGrads(g_w, g_b), g_prev


def mlp_input_grads(params: MlpParams, cache: ForwardCache) -> np.ndarray:
    """Per-sample gradient of the (scalar) output w.r.t. the input.

    Only defined for single-output identity-head networks; returns (B, n_in).
    """
    if params.n_out != 1 or params.output_activation != "identity":
        raise ContractError("input gradients need a scalar identity output head")
    ones = np.ones_like(cache.outputs)
    _, g_x = mlp_backward(params, cache, ones)
    return g_x


@dataclass
class AdamState:
    """First/second moment accumulators and hyperparameters for Adam."""

    first_moment: MlpGrads
    second_moment: MlpGrads
    learning_rate: float
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @staticmethod
    def for_params(params: MlpParams, learning_rate: float) -> "AdamState":
        if not learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {learning_rate}")
        return AdamState(
            MlpGrads.zeros_like(params), MlpGrads.zeros_like(params), learning_rate
        )


def adam_step(
    params: MlpParams, grads: MlpGrads, state: AdamState
) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update. Rejects non-finite gradients."""
    if not grads.is_finite():
        bad = [
            i
            for i, (w, b) in enumerate(zip(grads.weights, grads.biases))
            if not (np.isfinite(w).all() and np.isfinite(b).all())
        ]
        raise NonFiniteError(f"non-finite gradients in layer(s) {bad}; update rejected")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t

    def upd(p: np.ndarray, g: np.ndarray, m: np.ndarray, v: np.ndarray):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * g * g
        p_new = p - state.learning_rate * (m_new / c1) / (np.sqrt(v_new / c2) + state.epsilon)
        return p_new, m_new, v_new

    new_w, new_b = [], []
    m_w, m_b, v_w, v_b = [], [], [], []
    for i in range(params.n_layers):
        p, m, v = upd(params.weights[i], grads.weights[i], state.first_moment.weights[i], state.second_moment.weights[i])
        new_w.append(p)
        m_w.append(m)
        v_w.append(v)
        p, m, v = upd(params.biases[i], grads.biases[i], state.first_moment.biases[i], state.second_moment.biases[i])
        new_b.append(p)
        m_b.append(m)
        v_b.append(v)
    new_params = MlpParams(params.layer_sizes, new_w, new_b, params.output_activation)
    new_state = AdamState(
        MlpGrads(m_w, m_b),
        MlpGrads(v_w, v_b),
        state.learning_rate,
        t,
        b1,
        b2,
        state.epsilon,
    )
    return new_params, new_state


def finite_diff_grad(f, params: MlpParams, step: float) -> MlpGrads:
    """Central-difference estimate of d f(params) / d params.

    f maps MlpParams to a scalar. Slow by construction; this is the test
    oracle against which the analytic backward pass is checked.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    grads = MlpGrads.zeros_like(params)

    def probe(arrays: list[np.ndarray], g_arrays: list[np.ndarray], kind: str):
        for li, arr in enumerate(arrays):
            flat = arr.reshape(-1)
            g_flat = g_arrays[li].reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                hi = f(params)
                flat[j] = orig - step
                lo = f(params)
                flat[j] = orig
                if not (np.isfinite(hi) and np.isfinite(lo)):
                    raise NonFiniteError(
                        f"f non-finite probing {kind} layer {li} index {j}"
                    )
                g_flat[j] = (hi - lo) / (2.0 * step)

    probe(params.weights, grads.weights, "weight")
    probe(params.biases, grads.biases, "bias")
    return grads


def mlp_to_bytes(params: MlpParams) -> bytes:
    """Serialize to the version-1 checkpoint layout (see top of file)."""
    params.validate()
    out_code = OUTPUT_ACTIVATIONS.index(params.output_activation)
    parts = [
        _CKPT_MAGIC,
        struct.pack("<III", _CKPT_VERSION, out_code, len(params.layer_sizes)),
        struct.pack(f"<{len(params.layer_sizes)}I", *params.layer_sizes),
    ]
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def save_mlp(params: MlpParams, path) -> None:
    """Write a version-1 checkpoint (layout documented at the top of this file)."""
    with open(path, "wb") as fh:
        fh.write(mlp_to_bytes(params))


def mlp_from_bytes(blob: bytes) -> MlpParams:
    if blob[: len(_CKPT_MAGIC)] != _CKPT_MAGIC:
        raise CheckpointError("bad magic; not an MLP checkpoint")
    off = len(_CKPT_MAGIC)
    try:
        version, out_code, n_sizes = struct.unpack_from("<III", blob, off)
        off += 12
        sizes = struct.unpack_from(f"<{n_sizes}I", blob, off)
        off += 4 * n_sizes
    except struct.error as exc:
        raise CheckpointError(f"truncated header: {exc}") from None
    if version != _CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if out_code >= len(OUTPUT_ACTIVATIONS) or n_sizes < 2:
        raise CheckpointError("corrupt header")
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        n_bytes = 8 * n_out * n_in
        if off + n_bytes + 8 * n_out > len(blob):
            raise CheckpointError("truncated payload")
        weights.append(
            np.frombuffer(blob, dtype="<f8", count=n_out * n_in, offset=off)
            .reshape(n_out, n_in)
            .astype(np.float64)
        )
        off += n_bytes
        biases.append(
            np.frombuffer(blob, dtype="<f8", count=n_out, offset=off).astype(np.float64)
        )
        off += 8 * n_out
    if off != len(blob):
        raise CheckpointError("trailing bytes after payload")
    params = MlpParams(tuple(int(s) for s in sizes), weights, biases, OUTPUT_ACTIVATIONS[out_code])
    params.validate()
    return params


def load_mlp(path) -> MlpParams:
    """Read a checkpoint written by save_mlp. Rejects truncation and version skew."""
    with open(path, "rb") as fh:
        return mlp_from_bytes(fh.read())
