"""Dense ReLU networks with hand-written reverse-mode gradients.

Everything is float64 and seeded, so a (seed, config, data) triple
pins every parameter bitwise.  The subgradient of ReLU at 0 is taken
to be 0.  No autodiff framework is involved: gradients here are
audited against finite differences in the test suite.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"DNOP"
CHECKPOINT_VERSION = 1


class DivergenceError(Exception):
    """Training loss blew up past the divergence guard."""


@dataclass
class Mlp:
    """Plain feed-forward net: ReLU on hidden layers, identity output.

    weights[l] has shape (layer_dims[l+1], layer_dims[l]); biases[l]
    has length layer_dims[l+1].
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_dims),
                   [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings.  learning_rate is the initial step size;
    it decays by lr_decay every decay_every epochs (set lr_decay = 1
    for a constant rate).  Constant-rate Adam stalls an order of
    magnitude above the error level the boundary comparisons need, so
    the default anneals."""

    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 4096
    seed: int = 7
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stability: float = 1e-8
    lr_decay: float = 0.5
    decay_every: int = 75

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.eps_stability <= 0.0:
            raise ValueError("eps_stability must be > 0")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.decay_every < 1:
            raise ValueError("decay_every must be >= 1")

    def rate_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay ** (epoch // self.decay_every)


@dataclass(frozen=True)
class NetworkClassSpec:
    """Size/magnitude budget a network is audited against.

    depth_L counts affine layers (hidden + output), width_p bounds the
    widest hidden layer, sparsity_K the total nonzero parameters,
    weight_bound_kappa every |weight| and |bias|, output_bound_R the
    output magnitude over the declared domain.
    """

    d_in: int
    d_out: int
    depth_L: int
    width_p: int
    sparsity_K: int
    weight_bound_kappa: float
    output_bound_R: float


def mlp_init(layer_dims: list[int], seed: int) -> Mlp:
    """He-scaled normal weights (variance 2 / fan_in), zero biases."""
    if len(layer_dims) < 2 or any(d <= 0 for d in layer_dims):
        raise ValueError(f"need >= 2 positive dims, got {layer_dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.standard_normal((fan_out, fan_in)) * scale)
        biases.append(np.zeros(fan_out))
    return Mlp(list(layer_dims), weights, biases)


def mlp_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate the network; accepts a single vector or a (batch, d_in) array."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != net.layer_dims[0]:
        raise ValueError(
            f"input width {a.shape[1]} != expected {net.layer_dims[0]}")
    for l in range(net.n_layers - 1):
        a = np.maximum(a @ net.weights[l].T + net.biases[l], 0.0)
    a = a @ net.weights[-1].T + net.biases[-1]
    return a[0] if single else a


def _forward_cached(net: Mlp, x: np.ndarray) -> list[np.ndarray]:
    """Forward pass keeping every post-activation (index 0 = input)."""
    acts = [x]
    a = x
    for l in range(net.n_layers - 1):
        a = np.maximum(a @ net.weights[l].T + net.biases[l], 0.0)
        acts.append(a)
    acts.append(a @ net.weights[-1].T + net.biases[-1])
    return acts


def grads_from_output_grad(net: Mlp, acts: list[np.ndarray],
                           d_out: np.ndarray) -> list[np.ndarray]:
    """Backpropagate an upstream gradient d loss / d output.

    acts comes from _forward_cached.  Returns [dW0, db0, dW1, db1, ...]
    in layer order; the summation over the batch is a fixed-order
    matrix product, so results are deterministic.
    """
    grads: list[np.ndarray] = [None] * (2 * net.n_layers)
    delta = d_out
    for l in range(net.n_layers - 1, -1, -1):
        grads[2 * l] = delta.T @ acts[l]
        grads[2 * l + 1] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ net.weights[l]) * (acts[l] > 0.0)
    return grads


def mlp_backward(net: Mlp, batch_inputs: np.ndarray,
                 batch_targets: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean-squared-error loss over the batch and its exact gradients."""
    x = np.atleast_2d(np.asarray(batch_inputs, dtype=float))
    y = np.atleast_2d(np.asarray(batch_targets, dtype=float))
    if x.shape[0] != y.shape[0]:
        raise ValueError("batch_inputs and batch_targets disagree on size")
    acts = _forward_cached(net, x)
    resid = acts[-1] - y
    loss = float((resid**2).sum() / x.shape[0])
    d_out = 2.0 * resid / x.shape[0]
    return loss, grads_from_output_grad(net, acts, d_out)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, net: Mlp) -> "AdamState":
        return cls([np.zeros_like(p) for p in net.parameters()],
                   [np.zeros_like(p) for p in net.parameters()], 0)


def adam_step(net: Mlp, grads: list[np.ndarray], state: AdamState,
              config: TrainConfig,
              lr: float | None = None) -> tuple[Mlp, AdamState]:
    """One bias-corrected adaptive-moment update, applied in place.

    lr overrides config.learning_rate (used by schedules); everything
    else comes from the config.
    """
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    step_size = config.learning_rate if lr is None else lr
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    for p, g, m, v in zip(net.parameters(), grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= step_size * (m / corr1) / (
            np.sqrt(v / corr2) + config.eps_stability)
    return net, state


@dataclass(frozen=True)
class AuditReport:
    depth: int
    max_hidden_width: int
    nonzero_params: int
    max_param: float
    max_output: float
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def audit_class(net: Mlp, spec: NetworkClassSpec,
                domain_sample: np.ndarray | None = None) -> AuditReport:
    """Measure the network against a NetworkClassSpec, field by field."""
    depth = net.n_layers
    hidden = net.layer_dims[1:-1]
    max_width = max(hidden) if hidden else 0
    nonzero = sum(int(np.count_nonzero(p)) for p in net.parameters())
    max_param = max(float(np.abs(p).max()) if p.size else 0.0
                    for p in net.parameters())
    if domain_sample is not None and len(domain_sample):
        max_output = float(np.abs(mlp_forward(net, np.atleast_2d(
            np.asarray(domain_sample, dtype=float)))).max())
    else:
        max_output = 0.0
    checks = {
        "depth": depth <= spec.depth_L,
        "width": max_width <= spec.width_p,
        "sparsity": nonzero <= spec.sparsity_K,
        "kappa": max_param <= spec.weight_bound_kappa,
        "output_bound": max_output <= spec.output_bound_R,
        "io_dims": (net.layer_dims[0] == spec.d_in
                    and net.layer_dims[-1] == spec.d_out),
    }
    return AuditReport(depth, max_width, nonzero, max_param, max_output,
                       checks)


# --- checkpoint format ------------------------------------------------------

def mlp_to_bytes(net: Mlp) -> bytes:
    """Magic, version, layer count, dims, then all weights then biases."""
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<I", CHECKPOINT_VERSION)
    out += struct.pack("<I", len(net.layer_dims))
    out += struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims)
    for w in net.weights:
        out += w.astype("<f8").tobytes(order="C")
    for b in net.biases:
        out += b.astype("<f8").tobytes(order="C")
    return bytes(out)


def mlp_from_bytes(blob: bytes, offset: int = 0) -> tuple[Mlp, int]:
    """Parse a network blob; returns (net, next offset)."""
    if blob[offset:offset + 4] != CHECKPOINT_MAGIC:
        raise ValueError("bad checkpoint magic")
    offset += 4
    (version,) = struct.unpack_from("<I", blob, offset)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset += 4
    (n_dims,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    dims = list(struct.unpack_from(f"<{n_dims}I", blob, offset))
    offset += 4 * n_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        count = fan_in * fan_out
        w = np.frombuffer(blob, dtype="<f8", count=count,
                          offset=offset).reshape(fan_out, fan_in).copy()
        offset += 8 * count
        weights.append(w)
    for fan_out in dims[1:]:
        b = np.frombuffer(blob, dtype="<f8", count=fan_out,
                          offset=offset).copy()
        offset += 8 * fan_out
        biases.append(b)
    return Mlp(dims, weights, biases), offset


def save_mlp(net: Mlp, path) -> None:
    with open(path, "wb") as fh:
        fh.write(mlp_to_bytes(net))


def load_mlp(path) -> Mlp:
    with open(path, "rb") as fh:
        net, _ = mlp_from_bytes(fh.read())
    return net
