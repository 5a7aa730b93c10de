"""Behavioral cloning: Gaussian negative log-likelihood training of the
policy on demonstration state-action pairs, plus rollout evaluation with
the task-completion-error metric."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError
from .policy import GaussianPolicy, MLP, Normalizer
from .simenv import ArmModel, TaskSpec, Trace, initial_state, step, tce, trace_from_states
from .trajectory import Dataset, state_action_pairs

NLL_CONST_PER_DIM = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 400
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    weight_decay: float = 1e-4  # decoupled L2; tames extrapolation off the data
    state_noise: float = 0.02  # radians; train-time state jitter teaching recovery
    nll_grad_damping: float = 1.0  # sigma^(2*value) gradient scaling, 0 = raw NLL
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0
    include_gripper: bool = False
    loss: str = "nll"  # "nll" | "mse" (mse trains the mean net only)
    optimizer: str = "adam"  # "adam" | "sgd"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be at least 1")
        if self.weight_decay < 0 or self.state_noise < 0:
            raise ConfigError("weight_decay and state_noise must be non-negative")
        if not 0 <= self.nll_grad_damping <= 1:
            raise ConfigError("nll_grad_damping must lie in [0, 1]")
        if self.loss not in ("nll", "mse"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


def nll_loss(
    policy: GaussianPolicy, states: np.ndarray, actions: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean Gaussian negative log-likelihood over a batch, with gradients.

    Per pair the loss is sum over action dimensions of
    ``log sigma + (a - mu)^2 / (2 sigma^2)`` plus the usual constant,
    evaluated in the policy's normalized action coordinates (the raw-unit
    likelihood differs only by a dataset constant). Returns (loss,
    mean-net gradients, logstd-net gradients), each gradient list ordered
    like ``MLP.parameters()``.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    if not np.all(np.isfinite(states)) or not np.all(np.isfinite(actions)):
        raise ValidationError("states and actions must be finite")
    if states.shape[0] != actions.shape[0]:
        raise ValidationError("states and actions must pair up")
    batch = states.shape[0]

    x = policy.state_normalizer(states)
    targets = policy.action_normalizer(actions)
    mu, mean_acts = policy.mean_net.forward(x)
    raw_logstd, logstd_acts = policy.logstd_net.forward(x)
    lo, hi = policy.logstd_bounds
    logstd = np.clip(raw_logstd, lo, hi)
    sigma_sq = np.exp(2.0 * logstd)

    residual = targets - mu
    loss = float(
        np.mean(np.sum(logstd + residual**2 / (2.0 * sigma_sq) + NLL_CONST_PER_DIM, axis=1))
    )

    grad_mu = -residual / sigma_sq / batch
    grad_logstd = (1.0 - residual**2 / sigma_sq) / batch
    grad_logstd = grad_logstd * ((raw_logstd > lo) & (raw_logstd < hi))  # clamp subgradient
    mean_w, mean_b = policy.mean_net.backward(mean_acts, grad_mu)
    logstd_w, logstd_b = policy.logstd_net.backward(logstd_acts, grad_logstd)
    return loss, mean_w + mean_b, logstd_w + logstd_b


def _damped_nll_grads(
    policy: GaussianPolicy, states: np.ndarray, actions: np.ndarray, damping: float
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """NLL with per-state gradients scaled by sigma^(2 * damping).

    Raw likelihood gradients divide the mean residual by sigma^2, so states
    the model already fits tightly dominate every batch and destabilize the
    mean network. Scaling by sigma^(2 * damping) (treated as a constant)
    removes that amplification at damping = 1, where the mean trains on the
    plain residual while the log-std keeps its likelihood fixed point
    (sigma chasing the local residual). The reported loss stays the exact
    mean NLL.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    batch = states.shape[0]
    x = policy.state_normalizer(states)
    targets = policy.action_normalizer(actions)
    mu, mean_acts = policy.mean_net.forward(x)
    raw_logstd, logstd_acts = policy.logstd_net.forward(x)
    lo, hi = policy.logstd_bounds
    logstd = np.clip(raw_logstd, lo, hi)
    sigma_sq = np.exp(2.0 * logstd)

    residual = targets - mu
    loss = float(
        np.mean(np.sum(logstd + residual**2 / (2.0 * sigma_sq) + NLL_CONST_PER_DIM, axis=1))
    )
    scale = sigma_sq**damping
    grad_mu = scale * (-residual / sigma_sq) / batch
    grad_logstd = scale * (1.0 - residual**2 / sigma_sq) / batch
    grad_logstd = grad_logstd * ((raw_logstd > lo) & (raw_logstd < hi))
    mean_w, mean_b = policy.mean_net.backward(mean_acts, grad_mu)
    logstd_w, logstd_b = policy.logstd_net.backward(logstd_acts, grad_logstd)
    return loss, mean_w + mean_b, logstd_w + logstd_b


def mse_loss(
    policy: GaussianPolicy, states: np.ndarray, actions: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean squared error on the mean net; the log-std net gets zero gradient."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    batch = states.shape[0]
    x = policy.state_normalizer(states)
    targets = policy.action_normalizer(actions)
    mu, mean_acts = policy.mean_net.forward(x)
    residual = mu - targets
    loss = float(np.mean(np.sum(residual**2, axis=1)))
    mean_w, mean_b = policy.mean_net.backward(mean_acts, 2.0 * residual / batch)
    zeros = [np.zeros_like(p) for p in policy.logstd_net.parameters()]
    return loss, mean_w + mean_b, zeros


class AdamOptimizer:
    """Adaptive moment estimation with decoupled weight decay."""

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float,
        beta1: float,
        beta2: float,
        eps: float,
        weight_decay: float = 0.0,
    ):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def update(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g**2
            p -= self.lr * ((m / correction1) / (np.sqrt(v / correction2) + self.eps)
                            + self.weight_decay * p)


class SGDOptimizer:
    def __init__(self, params: list[np.ndarray], lr: float):
        self.params = params
        self.lr = lr

    def update(self, grads: list[np.ndarray]) -> None:
        for p, g in zip(self.params, grads):
            p -= self.lr * g


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    pair_count: int = 0


def dataset_pairs(dataset: Dataset, include_gripper: bool) -> tuple[np.ndarray, np.ndarray]:
    """Stack every demonstration's state-action pairs into training arrays."""
    if len(dataset) == 0:
        raise ValidationError("cannot train on an empty dataset")
    states, actions = [], []
    for demo in dataset:
        for s, a in state_action_pairs(demo, include_gripper=include_gripper):
            states.append(s)
            actions.append(a)
    return np.array(states), np.array(actions)


def train(dataset: Dataset, config: TrainConfig | None = None) -> tuple[GaussianPolicy, TrainReport]:
    """Minibatch-optimize the policy over all pairs from all demonstrations.

    Each batch's states are perturbed with Gaussian ``state_noise`` while
    the target actions stay clean: the policy learns to steer back onto
    the demonstrated flow from slightly-off states, which is what keeps
    closed-loop rollouts from compounding their own prediction errors.
    """
    config = config or TrainConfig()
    states, actions = dataset_pairs(dataset, config.include_gripper)
    rng = np.random.default_rng(config.seed)
    policy = GaussianPolicy.create(
        state_dim=states.shape[1],
        action_dim=actions.shape[1],
        hidden=config.hidden,
        rng=rng,
    )
    policy.state_normalizer = Normalizer.fit(states)
    policy.action_normalizer = Normalizer.fit(actions)

    if config.loss == "mse":
        loss_fn = mse_loss
    elif config.nll_grad_damping > 0:
        damping = config.nll_grad_damping

        def loss_fn(pol, s, a):
            return _damped_nll_grads(pol, s, a, damping)
    else:
        loss_fn = nll_loss
    params = policy.mean_net.parameters() + policy.logstd_net.parameters()
    if config.optimizer == "adam":
        optimizer = AdamOptimizer(
            params, config.learning_rate, config.adam_beta1, config.adam_beta2,
            config.adam_epsilon, config.weight_decay,
        )
    else:
        optimizer = SGDOptimizer(params, config.learning_rate)

    report = TrainReport(pair_count=states.shape[0])
    count = states.shape[0]
    for _ in range(config.epochs):
        order = rng.permutation(count)
        epoch_loss = 0.0
        for start in range(0, count, config.batch_size):
            batch = order[start : start + config.batch_size]
            batch_states = states[batch]
            if config.state_noise > 0:
                batch_states = batch_states + rng.normal(
                    0.0, config.state_noise, size=batch_states.shape
                )
            loss, mean_grads, logstd_grads = loss_fn(policy, batch_states, actions[batch])
            optimizer.update(mean_grads + logstd_grads)
            epoch_loss += loss * batch.size
        epoch_loss /= count
        if not math.isfinite(epoch_loss):
            raise ValidationError("training loss became non-finite; lower the learning rate")
        report.epoch_losses.append(epoch_loss)
    return policy, report


def rollout(
    policy,
    task: TaskSpec,
    arm: ArmModel,
    horizon: int,
    mode: str = "mean",
    seed: int | None = None,
) -> tuple[Trace, float]:
    """Execute the policy from the task's start state for ``horizon`` steps.

    ``policy`` needs only an ``act(state, mode, rng)`` method, so scripted
    stand-ins can be rolled out the same way as trained policies. Returns
    the trace and its task completion error.
    """
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    rng = np.random.default_rng(seed) if mode == "sample" else None
    state = initial_state(task, arm)
    states = [state]
    for _ in range(horizon):
        obs = state.joints
        if task.uses_gripper:
            obs = np.append(obs, float(state.gripper))
        action = policy.act(obs, mode=mode, rng=rng)
        state = step(state, action, arm, task)
        states.append(state)
    trace = trace_from_states(states, arm)
    return trace, tce(trace, task)


@dataclass
class EvalReport:
    mean_tce: float
    std_tce: float
    tces: list[float]


def evaluate(
    policy,
    task: TaskSpec,
    arm: ArmModel,
    horizon: int,
    trials: int = 10,
    seed: int = 0,
) -> EvalReport:
    """Run sample-mode rollouts with per-trial sub-seeds; report mean and sd."""
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    tces = []
    for trial in range(trials):
        trial_seed = int(np.random.SeedSequence((seed, trial)).generate_state(1, np.uint64)[0])
        _, err = rollout(policy, task, arm, horizon, mode="sample", seed=trial_seed)
        tces.append(err)
    values = np.array(tces)
    return EvalReport(mean_tce=float(values.mean()), std_tce=float(values.std()), tces=tces)
