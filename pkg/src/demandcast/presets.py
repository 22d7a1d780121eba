"""Model specifications, including the eight best-found named presets.

The classical presets carry the best hidden-layer sizes and training
algorithm found per architecture; each deep preset stacks one autoencoder
layer of the best-found width under the matching classical block and trains
with the same algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass

from .network import SCHEMES
from .optimizers import ALGORITHMS


@dataclass(frozen=True)
class ModelSpec:
    """What to fit per window: architecture, optimizer, optional deep stack."""

    name: str
    scheme: str = "MLP"
    hidden_sizes: tuple[int, ...] = (4,)
    algorithm: str = "LM"
    code_dims: tuple[int, ...] = ()
    fine_tune: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "code_dims", tuple(int(k) for k in self.code_dims))
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if len(self.hidden_sizes) not in (1, 2):
            raise ValueError("hidden layer count must be 1 or 2")
        if self.code_dims and len(self.code_dims) not in (1, 2):
            raise ValueError("autoencoder stack depth must be 1 or 2")

    @property
    def is_deep(self) -> bool:
        return bool(self.code_dims)


PRESETS: dict[str, ModelSpec] = {
    spec.name: spec
    for spec in (
        ModelSpec("mlp1", "MLP", (4,), "LMbr"),
        ModelSpec("mlp2", "MLP", (5, 2), "RBP"),
        ModelSpec("cfmlp1", "CFMLP", (5,), "LM"),
        ModelSpec("cfmlp2", "CFMLP", (2, 9), "CGpr"),
        ModelSpec("deep-mlp1", "MLP", (4,), "LMbr", code_dims=(2,)),
        ModelSpec("deep-mlp2", "MLP", (5, 2), "RBP", code_dims=(8,)),
        ModelSpec("deep-cfmlp1", "CFMLP", (5,), "LM", code_dims=(10,)),
        ModelSpec("deep-cfmlp2", "CFMLP", (2, 9), "CGpr", code_dims=(4,)),
    )
}

# Classical model -> its autoencoder-deepened counterpart (report ordering).
DEEP_COUNTERPARTS = {
    "mlp1": "deep-mlp1",
    "mlp2": "deep-mlp2",
    "cfmlp1": "deep-cfmlp1",
    "cfmlp2": "deep-cfmlp2",
}
