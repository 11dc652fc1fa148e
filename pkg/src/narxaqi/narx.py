"""NARX network: exogenous inputs plus lagged target, tanh hidden layers, linear output.

Flat weight layout, per layer k (input layer excluded): the M_k x M_{k-1}
weight matrix in row-major order (unit i, then source j), followed by the
M_k biases. Layers are concatenated input side first.

Affine maps are evaluated as explicit elementwise products reduced along a
fixed axis instead of BLAS matmuls, so a row gives bit-identical results
whether it is evaluated alone or inside a batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import NormalizationParams, SupervisedFrame
from .errors import ConfigurationError
from .util import atomic_write_text

ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class NarxTopology:
    input_dim: int
    hidden: tuple[int, ...] = (10,)
    d: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be positive")
        if self.d < 1:
            raise ValueError("output delay d must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    output_dim = 1

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, 1)

    @property
    def n_params(self) -> int:
        s = self.sizes
        return sum((s[k - 1] + 1) * s[k] for k in range(1, len(s)))

    def unpack(self, w: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split a flat weight vector into per-layer (W, b) views."""
        if w.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} weights, got {w.shape}")
        layers, pos = [], 0
        s = self.sizes
        for k in range(1, len(s)):
            n_in, n_out = s[k - 1], s[k]
            W = w[pos:pos + n_in * n_out].reshape(n_out, n_in)
            pos += n_in * n_out
            b = w[pos:pos + n_out]
            pos += n_out
            layers.append((W, b))
        return layers


@dataclass(frozen=True)
class NarxNetwork:
    topology: NarxTopology
    w: np.ndarray
    norm: NormalizationParams
    feature_names: tuple[str, ...] = ()
    target_name: str = "y"

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != (self.topology.n_params,):
            raise ValueError(f"weight vector has shape {w.shape}, topology needs "
                             f"({self.topology.n_params},)")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "w", w)
        if self.feature_names and len(self.feature_names) != self.topology.input_dim:
            raise ValueError("feature_names length must equal input_dim")

    def with_weights(self, w: np.ndarray) -> "NarxNetwork":
        return replace(self, w=np.array(w, dtype=float))


def init_weights(topology: NarxTopology, seed: int,
                 norm: Optional[NormalizationParams] = None,
                 feature_names: Sequence[str] = (), target_name: str = "y") -> NarxNetwork:
    """Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, zero biases."""
    rng = np.random.default_rng(seed)
    parts = []
    s = topology.sizes
    for k in range(1, len(s)):
        bound = 1.0 / np.sqrt(s[k - 1])
        parts.append(rng.uniform(-bound, bound, size=s[k] * s[k - 1]))
        parts.append(np.zeros(s[k]))
    if norm is None:
        norm = NormalizationParams.identity(topology.input_dim)
    return NarxNetwork(topology, np.concatenate(parts), norm, tuple(feature_names), target_name)


def _affine(W: np.ndarray, b: np.ndarray, o: np.ndarray) -> np.ndarray:
    return (o[:, None, :] * W[None, :, :]).sum(axis=2) + b


def _act(name: str, x: np.ndarray) -> np.ndarray:
    return np.tanh(x) if name == "tanh" else x


def act_derivative(name: str, out: np.ndarray) -> np.ndarray:
    """Activation derivative expressed through the unit output."""
    return 1.0 - out * out if name == "tanh" else np.ones_like(out)


@dataclass
class ForwardCache:
    """Per-layer pre-activations ``nets[k]`` and outputs ``outs[k]``.

    ``outs[0]`` is the input batch; ``nets``/``outs`` entries k >= 1 belong to
    layer k (the last one is the output layer).
    """

    nets: list = field(default_factory=list)
    outs: list = field(default_factory=list)


def forward_batch(topology: NarxTopology, w: np.ndarray, X: np.ndarray
                  ) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass on an N x F batch in normalized space."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != topology.input_dim:
        raise ValueError(f"input batch must be N x {topology.input_dim}, got {X.shape}")
    cache = ForwardCache(nets=[None], outs=[X])
    layers = topology.unpack(w)
    o = X
    for k, (W, b) in enumerate(layers, start=1):
        net = _affine(W, b, o)
        o = net if k == len(layers) else _act(topology.activation, net)
        cache.nets.append(net)
        cache.outs.append(o)
    return o[:, 0], cache


def forward(net: NarxNetwork, x) -> tuple[float, ForwardCache]:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.topology.input_dim,):
        raise ValueError(f"input must have dimension {net.topology.input_dim}, got {x.shape}")
    y, cache = forward_batch(net.topology, net.w, x[None, :])
    return float(y[0]), cache


def _check_features(net: NarxNetwork, frame: SupervisedFrame) -> None:
    if net.feature_names and tuple(frame.feature_names) != tuple(net.feature_names):
        raise ConfigurationError(
            f"frame features {frame.feature_names} do not match model {net.feature_names}"
        )
    if frame.inputs.ndim == 2 and len(frame) and frame.inputs.shape[1] != net.topology.input_dim:
        raise ConfigurationError("frame width does not match network input_dim")


def normalized_inputs(net: NarxNetwork, frame: SupervisedFrame) -> np.ndarray:
    _check_features(net, frame)
    return net.norm.inputs.apply(frame.inputs)


def normalized_targets(net: NarxNetwork, frame: SupervisedFrame) -> np.ndarray:
    return net.norm.target.apply(frame.targets)


def predict_series(net: NarxNetwork, frame: SupervisedFrame) -> np.ndarray:
    """Open-loop predictions in original units (lagged inputs are recorded values)."""
    _check_features(net, frame)
    if len(frame) == 0:
        return np.empty(0)
    y, _ = forward_batch(net.topology, net.w, normalized_inputs(net, frame))
    return net.norm.target.invert(y)


def model_to_dict(net: NarxNetwork) -> dict:
    t = net.topology
    return {
        "model": "narx",
        "topology": {"input_dim": t.input_dim, "hidden": list(t.hidden), "d": t.d,
                     "activation": t.activation},
        "feature_names": list(net.feature_names),
        "target_name": net.target_name,
        "normalization": net.norm.to_dict(),
        "weights": net.w.tolist(),
    }


def model_from_dict(data: dict) -> NarxNetwork:
    if data.get("model") != "narx":
        raise ConfigurationError("not a NARX model file")
    t = data["topology"]
    topo = NarxTopology(t["input_dim"], tuple(t["hidden"]), t.get("d", 1), t.get("activation", "tanh"))
    return NarxNetwork(topo, np.asarray(data["weights"], dtype=float),
                       NormalizationParams.from_dict(data["normalization"]),
                       tuple(data.get("feature_names", ())), data.get("target_name", "y"))


def save_model(net: NarxNetwork, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(net), indent=1) + "\n")


def load_model(path: str | Path) -> NarxNetwork:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
