"""Network training: backpropagation, the Adam optimizer, and the
dictionary-driven training loop.

Training runs entirely in float64 so that analytic gradients can be
validated against central finite differences to tight tolerances.
Every source of randomness (weight initialization, per-epoch noise
draws, batch shuffling) flows from the single seed in
:class:`TrainConfig`, making runs bit-reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .dictionary import Dictionary, absolute_noise, scaled_noise
from .network import Mlp, OutputScaler, _activate, _normalize_rows, initialize_network


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``noise_sigma`` is the per-epoch corruption level applied to the
    training atoms (fraction of each atom's maximum magnitude, redrawn
    every epoch). ``input_normalization`` is recorded in the trained
    model so inference presents signals the same way; the ``unit_norm``
    default projects every fingerprint onto the unit sphere, which
    conditions the signal-to-parameter mapping far better than raw
    magnitudes (and is the only sensible convention for scanner data,
    whose overall scale is arbitrary).
    """

    learning_rate: float = 0.001
    epochs: int = 1000
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    noise_sigma: float = 0.02
    noise_mode: str = "atom_max"
    seed: int = 0
    input_normalization: str = "unit_norm"

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.adam_beta1 < 1.0 or not 0.0 <= self.adam_beta2 < 1.0:
            raise ValueError("adam betas must lie in [0, 1)")
        if self.adam_eps <= 0.0:
            raise ValueError("adam_eps must be > 0")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")
        if self.noise_mode not in ("atom_max", "absolute"):
            raise ValueError("noise_mode must be 'atom_max' or 'absolute'")
        if self.input_normalization not in ("none", "unit_norm"):
            raise ValueError("input_normalization must be 'none' or 'unit_norm'")


def clamp_batch(config: TrainConfig, n_samples: int) -> TrainConfig:
    """Copy of ``config`` with the batch size capped at the set size."""
    return replace(config, batch_size=min(config.batch_size, n_samples))


def config_digest(config: TrainConfig) -> str:
    """Hex digest identifying a training configuration."""
    text = ";".join(
        f"{name}={getattr(config, name)!r}"
        for name in (
            "learning_rate",
            "epochs",
            "batch_size",
            "adam_beta1",
            "adam_beta2",
            "adam_eps",
            "noise_sigma",
            "noise_mode",
            "seed",
            "input_normalization",
        )
    )
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _forward_pass(net: Mlp, x: np.ndarray) -> list[np.ndarray]:
    """Float64 forward keeping every layer's activation (index 0 = input)."""
    activations = [x]
    a = x
    for layer in net.layers:
        z = a @ layer.weights.T + layer.biases
        a = _activate(z, layer.activation)
        activations.append(a)
    return activations


def _activation_derivative(a: np.ndarray, activation: str) -> np.ndarray:
    # Derivatives written in terms of the activation output.
    if activation == "tanh":
        return 1.0 - a * a
    if activation == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(a)


def loss_and_gradients(net: Mlp, x: np.ndarray, targets_scaled: np.ndarray):
    """Mean squared error in target space plus gradients for every layer.

    Returns ``(loss, grads)`` where ``grads`` is a list of
    ``(d_weights, d_biases)`` pairs aligned with ``net.layers``. The
    loss averages squared error over all samples and output components.
    """
    n, k = targets_scaled.shape
    activations = _forward_pass(net, x)
    out = activations[-1]
    diff = out - targets_scaled
    loss = float(np.mean(diff * diff))

    grads = [None] * len(net.layers)
    upstream = (2.0 / (n * k)) * diff
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        delta = upstream * _activation_derivative(activations[i + 1], layer.activation)
        grads[i] = (delta.T @ activations[i], delta.sum(axis=0))
        if i > 0:
            upstream = delta @ layer.weights
    return loss, grads


class AdamState:
    """First/second moment accumulators for one set of parameter arrays."""

    def __init__(self, net: Mlp):
        self.m = [
            (np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in net.layers
        ]
        self.v = [
            (np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in net.layers
        ]
        self.t = 0


def adam_step(net: Mlp, grads, state: AdamState, config: TrainConfig) -> None:
    """One bias-corrected Adam update, in place on the network weights."""
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for layer, (gw, gb), (mw, mb), (vw, vb) in zip(
        net.layers, grads, state.m, state.v
    ):
        for param, g, m, v in ((layer.weights, gw, mw, vw), (layer.biases, gb, mb, vb)):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            param -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.adam_eps)


def train(
    dictionary: Dictionary,
    config: TrainConfig,
    scaler: OutputScaler | None = None,
) -> tuple[Mlp, np.ndarray]:
    """Train a fresh network on a fingerprint dictionary.

    Every epoch redraws the corruption noise on the atoms, reshuffles,
    and sweeps minibatches with Adam. Returns the trained network and
    the per-epoch loss trace (running mean of minibatch losses).

    The default scaler uses 5000/2000 ms maxima; pass a custom one if
    the dictionary grid extends beyond that.
    """
    n = dictionary.n_entries
    if n == 0:
        raise ValueError("dictionary is empty")
    if config.batch_size > n:
        raise ValueError(
            f"batch_size {config.batch_size} exceeds the {n}-entry training set"
        )
    if scaler is None:
        scaler = OutputScaler(5000.0, 2000.0)

    targets = scaler.encode(np.column_stack([dictionary.t1_ms, dictionary.t2_ms]))

    rng = np.random.default_rng(config.seed)
    net = initialize_network(
        rng,
        input_dim=dictionary.n_frames,
        scaler=scaler,
        input_normalization=config.input_normalization,
    )
    net.schedule_digest = dictionary.schedule_digest
    net.train_digest = config_digest(config)

    atoms = dictionary.atoms
    state = AdamState(net)
    trace = np.empty(config.epochs)
    draw_noise = scaled_noise if config.noise_mode == "atom_max" else absolute_noise
    for epoch in range(config.epochs):
        if config.noise_sigma > 0.0:
            x_epoch = atoms + draw_noise(rng, atoms, config.noise_sigma)
        else:
            x_epoch = atoms
        if config.input_normalization == "unit_norm":
            x_epoch = _normalize_rows(x_epoch)
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = perm[start : start + config.batch_size]
            batch_loss, grads = loss_and_gradients(net, x_epoch[batch], targets[batch])
            adam_step(net, grads, state, config)
            total += batch_loss * batch.size
        trace[epoch] = total / n
        if not np.isfinite(trace[epoch]):
            raise TrainingDivergedError(
                f"training loss became non-finite at epoch {epoch} "
                f"(value {trace[epoch]!r}); try a lower learning rate"
            )
    return net, trace
