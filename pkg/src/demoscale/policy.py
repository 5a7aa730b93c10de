"""Gaussian MLP policy: two networks map a state to per-dimension mean and
log standard deviation. Forward and backward passes are written directly in
numpy; gradients are exact backpropagation, checked against finite
differences in the test suite."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

CHECKPOINT_VERSION = 1
LOGSTD_BOUNDS = (-5.0, 2.0)


class MLP:
    """Fully connected net, tanh hidden activations, linear output."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValidationError("an MLP needs at least input and output sizes")
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns the output and the per-layer activations for backprop."""
        activations = [x]
        h = x
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if layer != last:
                h = np.tanh(h)
            activations.append(h)
        return h, activations

    def backward(
        self, activations: list[np.ndarray], grad_output: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Gradients of a scalar loss w.r.t. every weight and bias.

        ``grad_output`` is dLoss/dOutput evaluated at the forward pass that
        produced ``activations``.
        """
        grad_w = [np.zeros_like(w) for w in self.weights]
        grad_b = [np.zeros_like(b) for b in self.biases]
        delta = grad_output
        for layer in reversed(range(len(self.weights))):
            if layer != len(self.weights) - 1:
                delta = delta * (1.0 - activations[layer + 1] ** 2)  # tanh'
            grad_w[layer] = activations[layer].T @ delta
            grad_b[layer] = delta.sum(axis=0)
            delta = delta @ self.weights[layer].T
        return grad_w, grad_b

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for p in self.parameters():
            p[...] = flat[offset : offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != flat.size:
            raise ValidationError("flat parameter vector has the wrong length")


@dataclass
class Normalizer:
    """Per-dimension affine state normalization fitted on the training set."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, states: np.ndarray) -> "Normalizer":
        std = states.std(axis=0)
        std[std < 1e-8] = 1.0
        return cls(mean=states.mean(axis=0), std=std)

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def __call__(self, state: np.ndarray) -> np.ndarray:
        return (state - self.mean) / self.std


@dataclass
class GaussianPolicy:
    """Action distribution N(mu(s), sigma(s)^2), one MLP per parameter block.

    Both networks operate in normalized coordinates: states are whitened
    with ``state_normalizer`` and the networks' outputs describe the action
    in ``action_normalizer`` units. Normalizing actions keeps the target
    scale O(1), which bounds how wildly the nets can extrapolate outside
    the training distribution (raw joint deltas are hundredths of radians,
    far below an MLP's natural output range).
    """

    mean_net: MLP
    logstd_net: MLP
    state_normalizer: Normalizer
    action_normalizer: Normalizer
    logstd_bounds: tuple[float, float] = LOGSTD_BOUNDS

    @classmethod
    def create(
        cls,
        state_dim: int,
        action_dim: int,
        hidden: tuple[int, ...] = (64, 64),
        rng: np.random.Generator | None = None,
    ) -> "GaussianPolicy":
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = [state_dim, *hidden, action_dim]
        return cls(
            mean_net=MLP(sizes, rng),
            logstd_net=MLP(sizes, rng),
            state_normalizer=Normalizer.identity(state_dim),
            action_normalizer=Normalizer.identity(action_dim),
        )

    @property
    def state_dim(self) -> int:
        return self.mean_net.sizes[0]

    @property
    def action_dim(self) -> int:
        return self.mean_net.sizes[-1]

    def normalized_distribution(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and log-std in normalized action units (training space)."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        x = self.state_normalizer(states)
        mu, _ = self.mean_net.forward(x)
        logstd, _ = self.logstd_net.forward(x)
        return mu, np.clip(logstd, *self.logstd_bounds)

    def distribution(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and standard deviation in raw action units."""
        mu, logstd = self.normalized_distribution(states)
        raw_mu = mu * self.action_normalizer.std + self.action_normalizer.mean
        raw_sigma = np.exp(logstd) * self.action_normalizer.std
        return raw_mu, raw_sigma

    def act(
        self,
        state: np.ndarray,
        mode: str = "mean",
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        mu, sigma = self.distribution(state)
        if mode == "mean":
            return mu[0]
        if mode == "sample":
            if rng is None:
                raise ValidationError("sample mode needs an RNG")
            return mu[0] + sigma[0] * rng.standard_normal(self.action_dim)
        raise ValidationError(f"unknown action mode {mode!r}")


# ---------------------------------------------------------------------------
# Checkpoints: a single JSON document with a versioned header, the topology,
# the normalization constants, and the raw parameters at full precision.
# ---------------------------------------------------------------------------

def save_policy(policy: GaussianPolicy, path: str | Path) -> None:
    document = {
        "format": "demoscale-policy",
        "version": CHECKPOINT_VERSION,
        "topology": policy.mean_net.sizes,
        "logstd_bounds": list(policy.logstd_bounds),
        "state_norm_mean": policy.state_normalizer.mean.tolist(),
        "state_norm_std": policy.state_normalizer.std.tolist(),
        "action_norm_mean": policy.action_normalizer.mean.tolist(),
        "action_norm_std": policy.action_normalizer.std.tolist(),
        "mean_params": policy.mean_net.get_flat().tolist(),
        "logstd_params": policy.logstd_net.get_flat().tolist(),
    }
    Path(path).write_text(json.dumps(document, indent=1) + "\n", encoding="utf-8")


def load_policy(path: str | Path) -> GaussianPolicy:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"policy checkpoint is not valid JSON: {exc}") from None
    if document.get("format") != "demoscale-policy":
        raise FormatError("not a policy checkpoint (missing format marker)")
    if document.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {document.get('version')!r}")
    sizes = list(document["topology"])
    policy = GaussianPolicy(
        mean_net=MLP(sizes, np.random.default_rng(0)),
        logstd_net=MLP(sizes, np.random.default_rng(0)),
        state_normalizer=Normalizer(
            mean=np.array(document["state_norm_mean"], dtype=float),
            std=np.array(document["state_norm_std"], dtype=float),
        ),
        action_normalizer=Normalizer(
            mean=np.array(document["action_norm_mean"], dtype=float),
            std=np.array(document["action_norm_std"], dtype=float),
        ),
        logstd_bounds=tuple(document["logstd_bounds"]),
    )
    policy.mean_net.set_flat(np.array(document["mean_params"], dtype=float))
    policy.logstd_net.set_flat(np.array(document["logstd_params"], dtype=float))
    return policy
