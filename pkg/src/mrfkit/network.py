"""Fully connected network mapping signal fingerprints to (T1, T2).

The default topology is 25 -> 300 -> 300 -> 2 with tanh on both hidden
layers and a sigmoid output. Because the output activation lands in
(0, 1), targets are trained in a scaled space and decoded back to
milliseconds by an :class:`OutputScaler` stored with the model.

Two evaluation paths exist on purpose: training and gradient checks run
in float64 (see :mod:`mrfkit.training`), while :func:`forward` and
:func:`reconstruct_map` evaluate in float32, the customary inference
precision, which is well inside the accuracy envelope of the estimates
and considerably faster on wide batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .epg import TissueParams
from .maps import ImageStack, ParamMap, ZERO_DIGEST

ACTIVATIONS = ("tanh", "sigmoid", "linear")
INPUT_NORMALIZATIONS = ("none", "unit_norm")

_MODEL_HEADER = "mrfkit-model-v1"


@dataclass(frozen=True)
class OutputScaler:
    """Maps network outputs in [0, 1] to milliseconds and back."""

    t1_max_ms: float
    t2_max_ms: float

    def __post_init__(self):
        if self.t1_max_ms <= 0.0 or self.t2_max_ms <= 0.0:
            raise ValueError("scaler maxima must be > 0")

    def encode(self, params_ms: np.ndarray) -> np.ndarray:
        """Milliseconds -> [0, 1] targets. Rejects values outside range."""
        params_ms = np.asarray(params_ms, dtype=np.float64)
        scaled = params_ms / np.array([self.t1_max_ms, self.t2_max_ms])
        if np.any(scaled < 0.0) or np.any(scaled > 1.0):
            raise ValueError("targets must lie within [0, max] for both parameters")
        return scaled

    def decode(self, outputs: np.ndarray) -> np.ndarray:
        """[0, 1] network outputs -> milliseconds."""
        return np.asarray(outputs) * np.array(
            [self.t1_max_ms, self.t2_max_ms], dtype=np.asarray(outputs).dtype
        )


@dataclass
class Layer:
    """One dense layer: ``weights`` is (out, in), ``biases`` is (out,)."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (out, in) with matching biases")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Mlp:
    """Network weights plus everything needed to apply them standalone."""

    layers: list[Layer]
    scaler: OutputScaler
    input_normalization: str = "none"
    train_digest: str = ""
    schedule_digest: bytes = ZERO_DIGEST

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weights.shape[1] != prev.weights.shape[0]:
                raise ValueError("adjacent layer dimensions do not chain")
        if self.input_normalization not in INPUT_NORMALIZATIONS:
            raise ValueError(
                f"unknown input normalization {self.input_normalization!r}"
            )
        if len(self.schedule_digest) != 32:
            raise ValueError("schedule_digest must be 32 bytes")

    @property
    def input_dim(self) -> int:
        return int(self.layers[0].weights.shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.layers[-1].weights.shape[0])


def initialize_network(
    rng: np.random.Generator,
    input_dim: int = 25,
    hidden: tuple[int, ...] = (300, 300),
    scaler: OutputScaler = OutputScaler(5000.0, 2000.0),
    input_normalization: str = "none",
) -> Mlp:
    """Fresh network with uniform fan-scaled weights and zero biases.

    Hidden layers use tanh; the two-node output layer uses sigmoid.
    """
    dims = (input_dim, *hidden, 2)
    activations = ["tanh"] * len(hidden) + ["sigmoid"]
    layers = []
    for i, act in enumerate(activations):
        fan_in, fan_out = dims[i], dims[i + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(
            Layer(
                weights=rng.uniform(-limit, limit, size=(fan_out, fan_in)),
                biases=np.zeros(fan_out),
                activation=act,
            )
        )
    return Mlp(layers=layers, scaler=scaler, input_normalization=input_normalization)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z)
    if activation == "sigmoid":
        # Split by sign so the exponent never overflows.
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot unit-normalize a zero fingerprint")
    return x / norms


def forward_many(net: Mlp, signals: np.ndarray) -> np.ndarray:
    """Apply the network to a batch of fingerprints.

    ``signals`` is (n, input_dim) in raw magnitudes; returns (n, 2)
    decoded (T1, T2) in milliseconds. Evaluates in float32.
    """
    x = np.asarray(signals, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.input_dim:
        raise ValueError(
            f"fingerprint length {x.shape[1]} does not match input_dim {net.input_dim}"
        )
    if net.input_normalization == "unit_norm":
        x = _normalize_rows(x)
    a = x.astype(np.float32)
    for layer in net.layers:
        z = a @ layer.weights.T.astype(np.float32) + layer.biases.astype(np.float32)
        a = _activate(z, layer.activation)
    out = net.scaler.decode(a.astype(np.float64))
    return out[0] if single else out


def forward(net: Mlp, fingerprint: np.ndarray) -> TissueParams:
    """Estimate (T1, T2) in milliseconds for one fingerprint."""
    t1, t2 = forward_many(net, np.asarray(fingerprint))
    return TissueParams(t1_ms=float(t1), t2_ms=float(t2))


def loss(predicted, target, scaler: OutputScaler) -> float:
    """Mean squared reconstruction error in the scaled target space.

    Averages squared error over all samples and both output components;
    zero exactly when the lists agree. Inputs may be (n, 2) arrays in
    milliseconds or sequences of :class:`TissueParams`.
    """
    p = _as_param_array(predicted)
    t = _as_param_array(target)
    if p.shape != t.shape:
        raise ValueError("predicted and target lengths differ")
    if p.shape[0] == 0:
        raise ValueError("need at least one sample")
    diff = scaler.encode(p) - scaler.encode(t)
    return float(np.mean(diff * diff))


def _as_param_array(values) -> np.ndarray:
    if isinstance(values, np.ndarray):
        arr = np.atleast_2d(np.asarray(values, dtype=np.float64))
    else:
        arr = np.array(
            [[v.t1_ms, v.t2_ms] if isinstance(v, TissueParams) else tuple(v) for v in values],
            dtype=np.float64,
        ).reshape(-1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected (n, 2) parameter values")
    return arr


def reconstruct_map(net: Mlp, stack, mask=None) -> ParamMap:
    """Voxelwise network reconstruction of an image stack.

    Accepts an :class:`ImageStack` or a raw (n_frames, height, width)
    array plus mask. Masked-out voxels come back as zeros with mask
    False.
    """
    if isinstance(stack, ImageStack):
        data, mask = stack.data, stack.mask
    else:
        data = np.asarray(stack, dtype=np.float64)
        if mask is None:
            raise ValueError("mask is required when passing a bare array")
        mask = np.asarray(mask, dtype=bool)
    if data.ndim != 3 or mask.shape != data.shape[1:]:
        raise ValueError("stack must be (n_frames, height, width) with matching mask")
    if data.shape[0] != net.input_dim:
        raise ValueError(
            f"stack has {data.shape[0]} frames but the network expects {net.input_dim}"
        )
    h, w = mask.shape
    t1 = np.zeros((h, w))
    t2 = np.zeros((h, w))
    if mask.any():
        estimates = forward_many(net, data[:, mask].T)
        t1[mask] = estimates[:, 0]
        t2[mask] = estimates[:, 1]
    return ParamMap(t1_map=t1, t2_map=t2, mask=mask.copy())


def save_model(net: Mlp, path) -> None:
    """Write the self-describing text model format.

    Header lines carry the topology, activations, scaler, input
    normalization and provenance digests; each layer follows as
    base-16-encoded little-endian float64 blocks (weights row-major
    out-by-in, then biases).
    """
    lines = [_MODEL_HEADER]
    lines.append(f"input_dim={net.input_dim}")
    lines.append(f"output_dim={net.output_dim}")
    lines.append(f"n_layers={len(net.layers)}")
    shapes = ",".join(f"{l.weights.shape[0]}x{l.weights.shape[1]}" for l in net.layers)
    lines.append(f"layer_shapes={shapes}")
    lines.append(f"activations={','.join(l.activation for l in net.layers)}")
    lines.append(f"t1_max_ms={net.scaler.t1_max_ms!r}")
    lines.append(f"t2_max_ms={net.scaler.t2_max_ms!r}")
    lines.append(f"input_normalization={net.input_normalization}")
    lines.append(f"train_digest={net.train_digest}")
    lines.append(f"schedule_digest={net.schedule_digest.hex()}")
    for i, layer in enumerate(net.layers):
        lines.append(f"layer{i}_weights={layer.weights.astype('<f8').tobytes().hex()}")
        lines.append(f"layer{i}_biases={layer.biases.astype('<f8').tobytes().hex()}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_model(path) -> Mlp:
    """Read a model written by :func:`save_model`."""
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
        if first != _MODEL_HEADER:
            raise ValueError(f"not a model file (header {first!r})")
        fields: dict[str, str] = {}
        for raw in f:
            line = raw.strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"model file: bad line {line!r}")
            key, value = line.split("=", 1)
            fields[key] = value
    try:
        n_layers = int(fields["n_layers"])
        shapes = [
            tuple(int(d) for d in s.split("x"))
            for s in fields["layer_shapes"].split(",")
        ]
        activations = fields["activations"].split(",")
        scaler = OutputScaler(
            t1_max_ms=float(fields["t1_max_ms"]), t2_max_ms=float(fields["t2_max_ms"])
        )
    except KeyError as exc:
        raise ValueError(f"model file: missing field {exc}") from exc
    if len(shapes) != n_layers or len(activations) != n_layers:
        raise ValueError("model file: layer count mismatch")
    layers = []
    for i, ((out_dim, in_dim), act) in enumerate(zip(shapes, activations)):
        w = np.frombuffer(bytes.fromhex(fields[f"layer{i}_weights"]), dtype="<f8")
        b = np.frombuffer(bytes.fromhex(fields[f"layer{i}_biases"]), dtype="<f8")
        if w.size != out_dim * in_dim or b.size != out_dim:
            raise ValueError(f"model file: layer {i} block size mismatch")
        layers.append(
            Layer(
                weights=w.reshape(out_dim, in_dim).copy(),
                biases=b.copy(),
                activation=act,
            )
        )
    return Mlp(
        layers=layers,
        scaler=scaler,
        input_normalization=fields.get("input_normalization", "none"),
        train_digest=fields.get("train_digest", ""),
        schedule_digest=bytes.fromhex(fields.get("schedule_digest", "00" * 32)),
    )
