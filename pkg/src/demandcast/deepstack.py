"""Deep models: stacked autoencoder encoders feeding a classical front network.

Pre-training is greedy and unsupervised: each autoencoder learns to
reconstruct its own input (raw features for the first layer, the previous
layer's codes after that), then the front MLP/CFMLP is trained on the last
layer's codes against the demand target.  Fine-tuning unrolls the encoders
and the front into one composite feed-forward network and backpropagates the
supervised loss through every parameter.

Decoders exist only during autoencoder training; prediction and fine-tuning
use the encoders alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .network import (
    LayerSpec,
    LINEAR,
    Network,
    TANH,
    Topology,
    Wiring,
    checkpoint_dict,
    format_float,
    forward_batch,
    init_theta,
    network_from_checkpoint,
    unpack_theta,
)
from .optimizers import NetworkObjective, TrainConfig, TrainReport, minimize

MAX_CODE_DIM = 15


@dataclass(frozen=True)
class AutoencoderLayer:
    """One trained encode/decode pair; only the encoder is used downstream."""

    w_enc: np.ndarray
    b_enc: np.ndarray
    w_dec: np.ndarray
    b_dec: np.ndarray
    activation: str = TANH

    def __post_init__(self):
        for name in ("w_enc", "b_enc", "w_dec", "b_dec"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.w_enc.ndim != 2 or self.w_dec.ndim != 2:
            raise ValueError("encoder/decoder weights must be matrices")
        k, kp = self.in_dim, self.code_dim
        if not 1 <= kp <= MAX_CODE_DIM:
            raise ValueError(f"code_dim must be in 1..{MAX_CODE_DIM}, got {kp}")
        if self.w_dec.shape != (k, kp) or self.b_enc.shape != (kp,) or self.b_dec.shape != (k,):
            raise ValueError("inconsistent encoder/decoder shapes")
        if self.activation not in (TANH, LINEAR):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.w_enc.shape[1]

    @property
    def code_dim(self) -> int:
        return self.w_enc.shape[0]

    def encode(self, x: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(x, dtype=float)) @ self.w_enc.T + self.b_enc
        return np.tanh(z) if self.activation == TANH else z

    def decode(self, codes: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(codes, dtype=float)) @ self.w_dec.T + self.b_dec

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(x))


def _autoencoder_wiring(in_dim: int, code_dim: int, activation: str) -> Wiring:
    return Wiring(
        input_dim=in_dim,
        layers=(
            LayerSpec(size=code_dim, sources=(0,), activation=activation),
            LayerSpec(size=in_dim, sources=(1,), activation=LINEAR),
        ),
    )


def _layer_from_theta(wiring: Wiring, theta: np.ndarray, activation: str) -> AutoencoderLayer:
    (enc_w, enc_b), (dec_w, dec_b) = [
        (blocks[src], bias) for (blocks, bias), src in zip(unpack_theta(wiring, theta), (0, 1))
    ]
    return AutoencoderLayer(enc_w, enc_b, dec_w, dec_b, activation=activation)


def train_autoencoder(
    inputs, code_dim: int, config: TrainConfig, seed: int, activation: str = TANH
) -> AutoencoderLayer:
    """Train one autoencoder to reconstruct its inputs (half-SSE objective)."""
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("inputs must be nonempty")
    wiring = _autoencoder_wiring(X.shape[1], code_dim, activation)
    theta0 = init_theta(wiring, seed)
    theta, _ = minimize(NetworkObjective(wiring, X, X), theta0, config)
    return _layer_from_theta(wiring, theta, activation)


def encode_stack(stack, x: np.ndarray) -> np.ndarray:
    out = np.atleast_2d(np.asarray(x, dtype=float))
    for layer in stack:
        out = layer.encode(out)
    return out


def pretrain_stack(
    inputs, code_dims, config: TrainConfig, seed: int, activation: str = TANH
) -> tuple[AutoencoderLayer, ...]:
    """Greedy layer-wise pre-training: layer j sees the codes of layers < j."""
    code_dims = tuple(int(k) for k in code_dims)
    if len(code_dims) not in (1, 2):
        raise ValueError("stack depth must be 1 or 2")
    current = np.atleast_2d(np.asarray(inputs, dtype=float))
    stack: list[AutoencoderLayer] = []
    for j, k in enumerate(code_dims):
        layer = train_autoencoder(current, k, config, seed + j + 1, activation=activation)
        stack.append(layer)
        current = layer.encode(current)
    return tuple(stack)


def pretrain_front(
    stack, train_pairs, front_topology: Topology, config: TrainConfig, seed: int
) -> tuple[Network, TrainReport]:
    """Supervised training of the front block on the extracted codes."""
    from .network import _as_batch, init_weights
    from .optimizers import train as train_network

    if front_topology.input_dim != stack[-1].code_dim:
        raise ValueError(
            f"front input_dim {front_topology.input_dim} != last code_dim {stack[-1].code_dim}"
        )
    X, Y = _as_batch(None, train_pairs)
    codes = encode_stack(stack, X)
    net = init_weights(front_topology, seed)
    return train_network(net, (codes, Y), config)


@dataclass(frozen=True)
class DeepModel:
    """Encoder stack plus front network; immutable once built."""

    stack: tuple[AutoencoderLayer, ...]
    front: Network
    fine_tuned: bool = False

    def __post_init__(self):
        if not 1 <= len(self.stack) <= 2:
            raise ValueError("stack must hold 1 or 2 autoencoder layers")
        for a, b in zip(self.stack, self.stack[1:]):
            if b.in_dim != a.code_dim:
                raise ValueError(
                    f"stack dimension chain broken: {a.code_dim} -> {b.in_dim}"
                )
        if self.front.input_dim != self.stack[-1].code_dim:
            raise ValueError(
                f"front input_dim {self.front.input_dim} != last code_dim "
                f"{self.stack[-1].code_dim}"
            )

    @property
    def input_dim(self) -> int:
        return self.stack[0].in_dim


def unroll(model: DeepModel) -> Network:
    """Compose encoders and front into one network with identical outputs."""
    offset = len(model.stack)
    layers = [
        LayerSpec(size=ae.code_dim, sources=(j,), activation=ae.activation)
        for j, ae in enumerate(model.stack)
    ]
    for spec in model.front.wiring.layers:
        layers.append(
            LayerSpec(
                size=spec.size,
                sources=tuple(s + offset for s in spec.sources),
                activation=spec.activation,
            )
        )
    wiring = Wiring(input_dim=model.input_dim, layers=tuple(layers))
    pieces = [np.concatenate([ae.w_enc.ravel(), ae.b_enc]) for ae in model.stack]
    pieces.append(model.front.theta)
    return Network(wiring=wiring, theta=np.concatenate(pieces))


def _split_composite(model: DeepModel, theta: np.ndarray) -> DeepModel:
    """Write composite parameters back into encoder layers and the front."""
    pos = 0
    new_stack = []
    for ae in model.stack:
        n_w = ae.code_dim * ae.in_dim
        w = theta[pos : pos + n_w].reshape(ae.code_dim, ae.in_dim)
        b = theta[pos + n_w : pos + n_w + ae.code_dim]
        pos += n_w + ae.code_dim
        new_stack.append(replace(ae, w_enc=w, b_enc=b))
    front = model.front.with_theta(theta[pos:])
    return DeepModel(stack=tuple(new_stack), front=front, fine_tuned=model.fine_tuned)


def fine_tune(
    model: DeepModel, train_pairs, config: TrainConfig, epochs: int | None = None
) -> tuple[DeepModel, TrainReport | None]:
    """Backpropagate the supervised loss through every parameter.

    ``epochs`` overrides the config budget; zero epochs only sets the flag.
    If the optimizer fails to improve on the pre-trained loss the pre-trained
    weights are kept, so fine-tuning never increases the training-set loss.
    """
    from .network import _as_batch

    if epochs is not None and epochs < 0:
        raise ValueError("epochs must be >= 0")
    if epochs == 0:
        return replace(model, fine_tuned=True), None
    composite = unroll(model)
    X, Y = _as_batch(composite, train_pairs)
    obj = NetworkObjective(composite.wiring, X, Y)
    cfg = config if epochs is None else replace(config, max_epochs=epochs)
    before = obj.loss(composite.theta)
    theta, report = minimize(obj, composite.theta, cfg)
    if not (np.all(np.isfinite(theta)) and obj.loss(theta) <= before):
        return replace(model, fine_tuned=True), report
    tuned = _split_composite(model, np.asarray(theta, dtype=float))
    return replace(tuned, fine_tuned=True), report


def predict(model: DeepModel, x) -> np.ndarray | float:
    """Forecast: encode through the stack, then evaluate the front block."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = forward_batch(model.front, encode_stack(model.stack, x))
    if model.front.output_dim == 1:
        out = out[:, 0]
    return float(out[0]) if single else out


# --- checkpoints --------------------------------------------------------------

DEEP_CHECKPOINT_FORMAT = "demandcast-deep/1"


def _layer_dict(ae: AutoencoderLayer) -> dict:
    return {
        "in_dim": ae.in_dim,
        "code_dim": ae.code_dim,
        "activation": ae.activation,
        "w_enc": [format_float(v) for v in ae.w_enc.ravel()],
        "b_enc": [format_float(v) for v in ae.b_enc],
        "w_dec": [format_float(v) for v in ae.w_dec.ravel()],
        "b_dec": [format_float(v) for v in ae.b_dec],
    }


def _layer_from_dict(d: dict) -> AutoencoderLayer:
    k, kp = int(d["in_dim"]), int(d["code_dim"])
    return AutoencoderLayer(
        w_enc=np.array([float(v) for v in d["w_enc"]]).reshape(kp, k),
        b_enc=np.array([float(v) for v in d["b_enc"]]),
        w_dec=np.array([float(v) for v in d["w_dec"]]).reshape(k, kp),
        b_dec=np.array([float(v) for v in d["b_dec"]]),
        activation=d.get("activation", TANH),
    )


def deep_checkpoint_dict(model: DeepModel) -> dict:
    return {
        "format": DEEP_CHECKPOINT_FORMAT,
        "stack": [_layer_dict(ae) for ae in model.stack],
        "front": checkpoint_dict(model.front),
        "fine_tuned": model.fine_tuned,
    }


def deep_model_from_checkpoint(d: dict) -> DeepModel:
    if d.get("format") != DEEP_CHECKPOINT_FORMAT:
        raise ValueError(f"not a deep-model checkpoint: format={d.get('format')!r}")
    return DeepModel(
        stack=tuple(_layer_from_dict(x) for x in d["stack"]),
        front=network_from_checkpoint(d["front"]),
        fine_tuned=bool(d["fine_tuned"]),
    )


def save_deep_checkpoint(model: DeepModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(deep_checkpoint_dict(model), fh, indent=1)
        fh.write("\n")


def load_deep_checkpoint(path) -> DeepModel:
    with open(path) as fh:
        return deep_model_from_checkpoint(json.load(fh))
