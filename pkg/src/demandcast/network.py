"""Feed-forward regression networks: plain (MLP) and cascade-forward (CFMLP).

Both schemes lower onto one internal representation, a ``Wiring``: an ordered
list of computed layers, each naming its source layers (0 is the raw input,
k >= 1 the k-th computed layer).  MLP layers read only the previous layer;
CFMLP layers read the input and every earlier layer.  Hidden layers are tanh,
the final layer is linear.

Parameter layout (frozen, checkpoint-portable): computed layers in depth
order; within a layer, one row-major weight block per source in source order
(input first, then shallower layers), followed by the bias vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

SCHEMES = ("MLP", "CFMLP")

TANH = "tanh"
LINEAR = "linear"


class EvaluationError(ValueError):
    """Raised when a network is fed non-finite input."""


@dataclass(frozen=True)
class Topology:
    """Architecture of a classical network: scheme, layer sizes, activations.

    Hidden activation is tanh and the output is linear; one or two hidden
    layers are supported.
    """

    scheme: str
    input_dim: int
    hidden_sizes: tuple[int, ...]
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if len(self.hidden_sizes) not in (1, 2):
            raise ValueError("hidden layer count must be 1 or 2")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("every hidden size must be >= 1")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim,) + self.hidden_sizes + (self.output_dim,)


@dataclass(frozen=True)
class LayerSpec:
    """One computed layer: width, which earlier layers feed it, activation."""

    size: int
    sources: tuple[int, ...]
    activation: str


@dataclass(frozen=True)
class Wiring:
    """A concrete feed-forward graph with a frozen flat-parameter layout."""

    input_dim: int
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        for k, layer in enumerate(self.layers, start=1):
            if layer.size < 1:
                raise ValueError("layer size must be >= 1")
            if layer.activation not in (TANH, LINEAR):
                raise ValueError(f"unknown activation {layer.activation!r}")
            if not layer.sources:
                raise ValueError("layer must have at least one source")
            if any(not 0 <= s < k for s in layer.sources):
                raise ValueError(f"layer {k} has a source outside 0..{k - 1}")
            if len(set(layer.sources)) != len(layer.sources):
                raise ValueError(f"layer {k} lists a source twice")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(l.size for l in self.layers)

    @cached_property
    def layout(self) -> tuple[tuple[tuple[int, int, int, int], ...], ...]:
        """Per layer: ((source, offset, rows, cols), ...) then the bias block.

        The bias is encoded as a pseudo-block with source -1 and cols 0.
        """
        widths = self.widths
        out = []
        offset = 0
        for layer in self.layers:
            blocks = []
            for src in layer.sources:
                cols = widths[src]
                blocks.append((src, offset, layer.size, cols))
                offset += layer.size * cols
            blocks.append((-1, offset, layer.size, 0))
            offset += layer.size
            out.append(tuple(blocks))
        return tuple(out)

    @cached_property
    def param_count(self) -> int:
        widths = self.widths
        total = 0
        for layer in self.layers:
            fan_in = sum(widths[s] for s in layer.sources)
            total += layer.size * fan_in + layer.size
        return total

    @cached_property
    def receivers(self) -> tuple[tuple[tuple[int, int, int, int], ...], ...]:
        """For each node index 0..K-1, the weight blocks of later layers reading it."""
        table: list[list[tuple[int, int, int, int]]] = [[] for _ in range(len(self.layers) + 1)]
        for k, blocks in enumerate(self.layout, start=1):
            for src, offset, rows, cols in blocks:
                if src >= 0:
                    table[src].append((k, offset, rows, cols))
        return tuple(tuple(row) for row in table)

    def __getstate__(self):
        return {"input_dim": self.input_dim, "layers": self.layers}

    def __setstate__(self, state):
        object.__setattr__(self, "input_dim", state["input_dim"])
        object.__setattr__(self, "layers", state["layers"])


def wiring_for(topology: Topology) -> Wiring:
    """Lower a classical topology onto the internal graph representation."""
    sizes = topology.layer_sizes
    layers = []
    for k in range(1, len(sizes)):
        if topology.scheme == "CFMLP":
            sources = tuple(range(k))
        else:
            sources = (k - 1,)
        activation = LINEAR if k == len(sizes) - 1 else TANH
        layers.append(LayerSpec(size=sizes[k], sources=sources, activation=activation))
    return Wiring(input_dim=topology.input_dim, layers=tuple(layers))


def param_count(topology: Topology) -> int:
    return wiring_for(topology).param_count


@dataclass(frozen=True)
class Network:
    """A wiring plus its flat parameter vector.  Immutable; cheap to copy."""

    wiring: Wiring
    theta: np.ndarray
    topology: Topology | None = None

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.wiring.param_count,):
            raise ValueError(
                f"theta has {theta.shape}, wiring needs ({self.wiring.param_count},)"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta contains non-finite entries")
        theta = theta.copy()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def input_dim(self) -> int:
        return self.wiring.input_dim

    @property
    def output_dim(self) -> int:
        return self.wiring.layers[-1].size

    def with_theta(self, theta: np.ndarray) -> "Network":
        return replace(self, theta=theta)


@dataclass(frozen=True)
class ForwardTrace:
    """Per-layer pre-activations and activations for a single input vector."""

    x: np.ndarray
    pre_activations: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...]


def init_theta(wiring: Wiring, seed: int) -> np.ndarray:
    """Glorot-uniform weights per receiving layer, zero biases, seeded."""
    rng = np.random.default_rng(seed)
    widths = wiring.widths
    theta = np.zeros(wiring.param_count)
    for layer, blocks in zip(wiring.layers, wiring.layout):
        fan_in = sum(widths[s] for s in layer.sources)
        r = np.sqrt(6.0 / (fan_in + layer.size))
        for src, offset, rows, cols in blocks:
            if src < 0:
                continue  # bias stays zero
            theta[offset : offset + rows * cols] = rng.uniform(-r, r, rows * cols)
    return theta


def init_weights(topology: Topology, seed: int) -> Network:
    wiring = wiring_for(topology)
    return Network(wiring=wiring, theta=init_theta(wiring, seed), topology=topology)


def unpack_theta(wiring: Wiring, theta: np.ndarray):
    """Structured view of theta: per layer, ({source: W}, bias)."""
    theta = np.asarray(theta, dtype=float)
    out = []
    for blocks in wiring.layout:
        weights = {}
        bias = None
        for src, offset, rows, cols in blocks:
            if src < 0:
                bias = theta[offset : offset + rows].copy()
            else:
                weights[src] = theta[offset : offset + rows * cols].reshape(rows, cols).copy()
        out.append((weights, bias))
    return out


def pack_theta(wiring: Wiring, structured) -> np.ndarray:
    """Inverse of unpack_theta; round-trips exactly."""
    theta = np.empty(wiring.param_count)
    for (weights, bias), blocks in zip(structured, wiring.layout):
        for src, offset, rows, cols in blocks:
            if src < 0:
                theta[offset : offset + rows] = np.asarray(bias, dtype=float)
            else:
                w = np.asarray(weights[src], dtype=float)
                if w.shape != (rows, cols):
                    raise ValueError(f"block for source {src} has shape {w.shape}, want {(rows, cols)}")
                theta[offset : offset + rows * cols] = w.ravel()
    return theta


def _forward_all(wiring: Wiring, theta: np.ndarray, X: np.ndarray):
    """Batch forward pass; returns (pre-activation list, activation list).

    Index 0 of the activation list is the input matrix itself.
    """
    acts: list[np.ndarray] = [X]
    pres: list[np.ndarray] = []
    for layer, blocks in zip(wiring.layers, wiring.layout):
        z = None
        for src, offset, rows, cols in blocks:
            if src < 0:
                bias = theta[offset : offset + rows]
                z = bias.copy() if z is None else z + bias
            else:
                w = theta[offset : offset + rows * cols].reshape(rows, cols)
                term = acts[src] @ w.T
                z = term if z is None else z + term
        pres.append(z)
        acts.append(np.tanh(z) if layer.activation == TANH else z)
    return pres, acts


def forward_batch(net: Network, X: np.ndarray) -> np.ndarray:
    """Evaluate a batch of input rows; returns an (N, output_dim) matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != net.input_dim:
        raise ValueError(f"input has {X.shape[1]} columns, network takes {net.input_dim}")
    if not np.all(np.isfinite(X)):
        raise EvaluationError("non-finite input")
    _, acts = _forward_all(net.wiring, net.theta, X)
    return acts[-1]


def forward(net: Network, x) -> tuple[float, ForwardTrace]:
    """Evaluate one input vector; returns the scalar output and its trace."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != net.input_dim:
        raise ValueError(f"input has length {x.shape[0]}, network takes {net.input_dim}")
    if not np.all(np.isfinite(x)):
        raise EvaluationError("non-finite input")
    pres, acts = _forward_all(net.wiring, net.theta, x[None, :])
    trace = ForwardTrace(
        x=x,
        pre_activations=tuple(p[0] for p in pres),
        activations=tuple(a[0] for a in acts[1:]),
    )
    y = acts[-1][0]
    return (float(y[0]) if net.output_dim == 1 else y), trace


def _propagate_back(wiring: Wiring, theta: np.ndarray, acts, seed: np.ndarray):
    """Backpropagate a (N, out) seed on the output activation.

    Returns per-layer matrices G[k] = d(seeded scalar)/d(z_k), k = 1..K.
    """
    K = len(wiring.layers)
    G: list = [None] * (K + 1)
    if wiring.layers[-1].activation == TANH:
        seed = seed * (1.0 - acts[K] ** 2)
    G[K] = seed
    receivers = wiring.receivers
    for k in range(K - 1, 0, -1):
        dA = None
        for m, offset, rows, cols in receivers[k]:
            w = theta[offset : offset + rows * cols].reshape(rows, cols)
            term = G[m] @ w
            dA = term if dA is None else dA + term
        if dA is None:
            G[k] = np.zeros_like(acts[k])
            continue
        if wiring.layers[k - 1].activation == TANH:
            dA = dA * (1.0 - acts[k] ** 2)
        G[k] = dA
    return G


def _assemble_gradient(wiring: Wiring, acts, G) -> np.ndarray:
    grad = np.empty(wiring.param_count)
    for k, blocks in enumerate(wiring.layout, start=1):
        g = G[k]
        for src, offset, rows, cols in blocks:
            if src < 0:
                grad[offset : offset + rows] = g.sum(axis=0)
            else:
                grad[offset : offset + rows * cols] = (g.T @ acts[src]).ravel()
    return grad


def _as_batch(net_or_wiring, batch):
    """Accept either (X, Y) arrays or a list of (x, y) pairs."""
    if isinstance(batch, tuple) and len(batch) == 2 and not isinstance(batch[0], (int, float)):
        X, Y = batch
    else:
        xs, ys = zip(*batch)
        X, Y = np.array(xs, dtype=float), np.array(ys, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"batch has {X.shape[0]} inputs but {Y.shape[0]} targets")
    if X.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise EvaluationError("non-finite batch")
    return X, Y


def loss_and_gradient(wiring: Wiring, theta: np.ndarray, X: np.ndarray, Y: np.ndarray):
    """Half sum-of-squares loss and its exact gradient over a batch."""
    _, acts = _forward_all(wiring, theta, X)
    resid = Y - acts[-1]
    loss = 0.5 * float(np.sum(resid * resid))
    G = _propagate_back(wiring, theta, acts, acts[-1] - Y)
    return loss, _assemble_gradient(wiring, acts, G)


def gradient(net: Network, batch) -> tuple[float, np.ndarray]:
    """Loss = 0.5 * sum of squared residuals; gradient by reverse accumulation."""
    X, Y = _as_batch(net, batch)
    if Y.shape[1] != net.output_dim:
        raise ValueError(f"targets have {Y.shape[1]} columns, network emits {net.output_dim}")
    return loss_and_gradient(net.wiring, net.theta, X, Y)


def residuals_and_jacobian(wiring: Wiring, theta: np.ndarray, X: np.ndarray, Y: np.ndarray):
    """Residual vector r = y - y_hat (sample-major) and its Jacobian dr/dtheta."""
    _, acts = _forward_all(wiring, theta, X)
    n = X.shape[0]
    out_dim = wiring.layers[-1].size
    resid = (Y - acts[-1]).reshape(n * out_dim)
    jac = np.empty((n * out_dim, wiring.param_count))
    for d in range(out_dim):
        seed = np.zeros((n, out_dim))
        seed[:, d] = 1.0
        S = _propagate_back(wiring, theta, acts, seed)
        rows = slice(d, n * out_dim, out_dim) if out_dim > 1 else slice(None)
        for k, blocks in enumerate(wiring.layout, start=1):
            s = S[k]
            for src, offset, nrow, ncol in blocks:
                if src < 0:
                    jac[rows, offset : offset + nrow] = -s
                else:
                    block = np.einsum("np,nq->npq", s, acts[src]).reshape(n, nrow * ncol)
                    jac[rows, offset : offset + nrow * ncol] = -block
    return resid, jac


def jacobian(net: Network, batch) -> np.ndarray:
    """Per-sample residual Jacobian: row i holds d(y_i - y_hat_i)/dtheta."""
    X, Y = _as_batch(net, batch)
    if Y.shape[1] != net.output_dim:
        raise ValueError(f"targets have {Y.shape[1]} columns, network emits {net.output_dim}")
    _, jac = residuals_and_jacobian(net.wiring, net.theta, X, Y)
    return jac


# --- plain-text checkpoints -------------------------------------------------

CHECKPOINT_FORMAT = "demandcast-network/1"


def format_float(v: float) -> str:
    """17 significant digits: enough for a bit-exact float64 round trip."""
    return f"{float(v):.17g}"


def _topology_dict(t: Topology) -> dict:
    return {
        "scheme": t.scheme,
        "input_dim": t.input_dim,
        "hidden_sizes": list(t.hidden_sizes),
        "output_dim": t.output_dim,
    }


def _topology_from_dict(d: dict) -> Topology:
    return Topology(
        scheme=d["scheme"],
        input_dim=int(d["input_dim"]),
        hidden_sizes=tuple(int(h) for h in d["hidden_sizes"]),
        output_dim=int(d["output_dim"]),
    )


def checkpoint_dict(net: Network) -> dict:
    if net.topology is None:
        raise ValueError("only topology-backed networks are checkpointable")
    return {
        "format": CHECKPOINT_FORMAT,
        "topology": _topology_dict(net.topology),
        "theta": [format_float(v) for v in net.theta],
    }


def network_from_checkpoint(d: dict) -> Network:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a network checkpoint: format={d.get('format')!r}")
    topology = _topology_from_dict(d["topology"])
    theta = np.array([float(v) for v in d["theta"]], dtype=float)
    return Network(wiring=wiring_for(topology), theta=theta, topology=topology)


def save_checkpoint(net: Network, path) -> None:
    with open(path, "w") as fh:
        json.dump(checkpoint_dict(net), fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> Network:
    with open(path) as fh:
        return network_from_checkpoint(json.load(fh))
