import math

import numpy as np
import pytest

from demoscale.bc import (
    EvalReport,
    TrainConfig,
    dataset_pairs,
    evaluate,
    mse_loss,
    nll_loss,
    rollout,
    train,
)
from demoscale.errors import ConfigError, ValidationError
from demoscale.policy import GaussianPolicy, load_policy, save_policy
from demoscale.simenv import initial_state, tce, trace_from_states
from demoscale.trajectory import Dataset, Demonstration, state_action_pairs


def small_policy(state_dim=3, action_dim=3, hidden=(4,), seed=0):
    return GaussianPolicy.create(state_dim, action_dim, hidden=hidden,
                                 rng=np.random.default_rng(seed))


def flat_gradients(policy, states, actions, loss_fn=nll_loss):
    _, mean_grads, logstd_grads = loss_fn(policy, states, actions)
    return np.concatenate([g.ravel() for g in mean_grads + logstd_grads])


def finite_difference_gradients(policy, states, actions, h=1e-5, loss_fn=nll_loss):
    """Central differences over every parameter: the independent oracle."""
    flats = [policy.mean_net.get_flat(), policy.logstd_net.get_flat()]
    nets = [policy.mean_net, policy.logstd_net]
    grads = []
    for net, flat in zip(nets, flats):
        grad = np.zeros_like(flat)
        for i in range(flat.size):
            bumped = flat.copy()
            bumped[i] += h
            net.set_flat(bumped)
            up, *_ = loss_fn(policy, states, actions)
            bumped[i] -= 2 * h
            net.set_flat(bumped)
            down, *_ = loss_fn(policy, states, actions)
            grad[i] = (up - down) / (2 * h)
        net.set_flat(flat)
        grads.append(grad)
    return np.concatenate(grads)


def relative_error(a, b):
    return np.abs(a - b) / np.maximum(1e-6, np.maximum(np.abs(a), np.abs(b)))


class TestNllLoss:
    def test_loss_at_mode_is_constant(self):
        policy = small_policy()
        # Force mu = action and sigma = 1 by zeroing both nets' parameters.
        policy.mean_net.set_flat(np.zeros(policy.mean_net.get_flat().size))
        policy.logstd_net.set_flat(np.zeros(policy.logstd_net.get_flat().size))
        state = np.zeros(3)
        action = np.zeros(3)
        loss, *_ = nll_loss(policy, state, action)
        assert loss == pytest.approx(3 * 0.5 * math.log(2 * math.pi))

    def test_quadratic_term_scales_quadratically(self):
        policy = small_policy()
        policy.mean_net.set_flat(np.zeros(policy.mean_net.get_flat().size))
        policy.logstd_net.set_flat(np.zeros(policy.logstd_net.get_flat().size))
        const = 3 * 0.5 * math.log(2 * math.pi)
        state = np.zeros(3)
        small, *_ = nll_loss(policy, state, np.array([0.1, 0.0, 0.0]))
        large, *_ = nll_loss(policy, state, np.array([0.2, 0.0, 0.0]))
        assert (large - const) == pytest.approx(4 * (small - const), rel=1e-9)

    def test_rejects_non_finite(self):
        policy = small_policy()
        with pytest.raises(ValidationError):
            nll_loss(policy, np.array([np.nan, 0.0, 0.0]), np.zeros(3))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(5)
        policy = small_policy()
        assert policy.mean_net.param_count <= 200
        for _ in range(20):
            states = rng.normal(size=(1, 3))
            actions = rng.normal(size=(1, 3)) * 0.3
            analytic = flat_gradients(policy, states, actions)
            numeric = finite_difference_gradients(policy, states, actions)
            assert relative_error(analytic, numeric).max() <= 1e-4

    def test_batched_gradients_match_finite_differences(self):
        rng = np.random.default_rng(6)
        policy = small_policy()
        states = rng.normal(size=(7, 3))
        actions = rng.normal(size=(7, 3)) * 0.3
        analytic = flat_gradients(policy, states, actions)
        numeric = finite_difference_gradients(policy, states, actions)
        assert relative_error(analytic, numeric).max() <= 1e-4

    def test_mse_gradients_match_finite_differences(self):
        rng = np.random.default_rng(7)
        policy = small_policy()
        states = rng.normal(size=(4, 3))
        actions = rng.normal(size=(4, 3)) * 0.3
        analytic = flat_gradients(policy, states, actions, loss_fn=mse_loss)
        numeric = finite_difference_gradients(policy, states, actions, loss_fn=mse_loss)
        assert relative_error(analytic, numeric).max() <= 1e-4

    def test_full_batch_order_invariance(self):
        rng = np.random.default_rng(8)
        policy = small_policy()
        states = rng.normal(size=(10, 3))
        actions = rng.normal(size=(10, 3)) * 0.2
        loss_a, ga, gb = nll_loss(policy, states, actions)
        perm = rng.permutation(10)
        loss_b, ha, hb = nll_loss(policy, states[perm], actions[perm])
        assert loss_a == pytest.approx(loss_b, rel=1e-12)
        for g, h in zip(ga + gb, ha + hb):
            assert g == pytest.approx(h, rel=1e-9, abs=1e-12)


def point_dataset(state, action, repeats=8):
    joints = np.vstack([state + i * action for i in range(repeats)])
    return Dataset(
        demonstrations=[
            Demonstration(
                positions=joints[:, :2].copy(),
                headings=np.zeros(repeats),
                joints=joints,
                grippers=np.ones(repeats, dtype=int),
                demo_id="point",
                source="generated",
                seed=0,
            )
        ],
        role="scaled",
    )


class TestTrain:
    def test_converges_on_repeated_pair(self):
        # One repeated transition: mu(s) must land on the action.
        action = np.array([0.02, -0.01, 0.015])
        dataset = point_dataset(np.array([0.3, 0.2, 0.1]), np.zeros(3))
        # overwrite joints so every step repeats the same transition
        demo = dataset.demonstrations[0]
        demo.joints = np.vstack([[0.3, 0.2, 0.1] if i % 2 == 0 else
                                 [0.32, 0.19, 0.115] for i in range(8)])
        config = TrainConfig(epochs=200, batch_size=8, learning_rate=5e-3, hidden=(16,),
                             seed=1, state_noise=0.0, weight_decay=0.0)
        policy, report = train(dataset, config)
        states, actions = dataset_pairs(dataset, include_gripper=False)
        mu, _ = policy.distribution(states)
        assert np.max(np.abs(mu - actions)) <= 1e-2
        assert report.epoch_losses[-1] <= report.epoch_losses[0]

    def test_fixed_seed_gives_identical_parameters(self, reach_demo):
        dataset = Dataset(demonstrations=[reach_demo], role="seed")
        config = TrainConfig(epochs=3, seed=11)
        a, _ = train(dataset, config)
        b, _ = train(dataset, config)
        assert np.array_equal(a.mean_net.get_flat(), b.mean_net.get_flat())
        assert np.array_equal(a.logstd_net.get_flat(), b.logstd_net.get_flat())

    def test_loss_trace_finite(self, reach_demo):
        dataset = Dataset(demonstrations=[reach_demo], role="seed")
        _, report = train(dataset, TrainConfig(epochs=5, seed=2))
        assert all(math.isfinite(v) for v in report.epoch_losses)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValidationError):
            train(Dataset(demonstrations=[], role="scaled"), TrainConfig(epochs=1))

    def test_mse_switch_trains(self, reach_demo):
        dataset = Dataset(demonstrations=[reach_demo], role="seed")
        _, report = train(dataset, TrainConfig(epochs=3, loss="mse", seed=3))
        assert report.epoch_losses[-1] <= report.epoch_losses[0]

    def test_sgd_switch_trains(self, reach_demo):
        dataset = Dataset(demonstrations=[reach_demo], role="seed")
        _, report = train(dataset, TrainConfig(epochs=3, optimizer="sgd",
                                               learning_rate=1e-4, seed=3))
        assert all(math.isfinite(v) for v in report.epoch_losses)


class ReplayPolicy:
    """Plays back a demonstration's recorded actions index by index."""

    def __init__(self, demo, include_gripper):
        self.actions = [a for _, a in state_action_pairs(demo, include_gripper)]
        self.cursor = 0

    def act(self, state, mode="mean", rng=None):
        action = self.actions[min(self.cursor, len(self.actions) - 1)]
        if self.cursor >= len(self.actions):
            action = np.zeros_like(action)
        self.cursor += 1
        return action


class ZeroPolicy:
    def __init__(self, dim):
        self.dim = dim

    def act(self, state, mode="mean", rng=None):
        return np.zeros(self.dim)


class TestRollout:
    def test_replay_policy_scores_near_zero(self, reach_demo, reach_task, arm):
        policy = ReplayPolicy(reach_demo, include_gripper=False)
        _, err = rollout(policy, reach_task, arm, horizon=len(reach_demo) + 10)
        assert err <= 1e-2

    def test_zero_policy_matches_static_trace(self, reach_task, arm):
        _, err = rollout(ZeroPolicy(3), reach_task, arm, horizon=20)
        state = initial_state(reach_task, arm)
        static = trace_from_states([state], arm)
        assert err == pytest.approx(tce(static, reach_task))

    def test_mean_mode_deterministic(self, reach_task, arm, reach_demo):
        dataset = Dataset(demonstrations=[reach_demo], role="seed")
        policy, _ = train(dataset, TrainConfig(epochs=2, seed=5))
        trace_a, err_a = rollout(policy, reach_task, arm, horizon=30, mode="mean")
        trace_b, err_b = rollout(policy, reach_task, arm, horizon=30, mode="mean")
        assert err_a == err_b
        assert np.array_equal(trace_a.joints, trace_b.joints)

    def test_sample_mode_stays_in_tube_at_sigma_floor(self, reach_task, arm):
        # Zero-mean policy with sigma at the clamp floor: sampling injects
        # a per-step noise of at most a few sigma, so the trace stays inside
        # a 3 * sigma * horizon tube around the (static) mean-mode trace.
        policy = small_policy(state_dim=3, action_dim=3, hidden=(4,))
        policy.mean_net.set_flat(np.zeros(policy.mean_net.get_flat().size))
        policy.logstd_net.set_flat(np.zeros(policy.logstd_net.get_flat().size) - 100)
        horizon = 40
        mean_trace, _ = rollout(policy, reach_task, arm, horizon=horizon, mode="mean")
        sample_trace, _ = rollout(policy, reach_task, arm, horizon=horizon, mode="sample", seed=3)
        sigma_floor = math.exp(policy.logstd_bounds[0])
        bound = 3 * sigma_floor * horizon * np.sum(arm.link_lengths)
        gap = np.linalg.norm(sample_trace.ee_positions - mean_trace.ee_positions, axis=1).max()
        assert 0 < gap <= bound

    def test_invalid_horizon_rejected(self, reach_task, arm):
        with pytest.raises(ConfigError):
            rollout(ZeroPolicy(3), reach_task, arm, horizon=0)


class TestEvaluate:
    def test_single_trial_sd_zero(self, reach_task, arm):
        report = evaluate(ZeroPolicy(3), reach_task, arm, horizon=5, trials=1, seed=0)
        assert report.std_tce == 0.0

    def test_fixed_seed_reproducible(self, reach_task, arm, reach_demo):
        dataset = Dataset(demonstrations=[reach_demo], role="seed")
        policy, _ = train(dataset, TrainConfig(epochs=2, seed=5))
        a = evaluate(policy, reach_task, arm, horizon=25, trials=4, seed=9)
        b = evaluate(policy, reach_task, arm, horizon=25, trials=4, seed=9)
        assert a == b

    def test_replay_policy_family_scores_well(self, reach_demo, reach_task, arm):
        class PeriodicReplay:
            """Replays the oracle actions afresh each trial of a known horizon."""

            def __init__(self, demo, horizon):
                self.actions = [a for _, a in state_action_pairs(demo, False)]
                self.horizon = horizon
                self.calls = 0

            def act(self, state, mode="mean", rng=None):
                cursor = self.calls % self.horizon
                self.calls += 1
                if cursor < len(self.actions):
                    return self.actions[cursor]
                return np.zeros_like(self.actions[0])

        # evaluate() runs sample-mode rollouts; the replay ignores the rng,
        # so all trials replay the oracle and the spread collapses.
        horizon = len(reach_demo) - 1
        report = evaluate(PeriodicReplay(reach_demo, horizon), reach_task, arm,
                          horizon=horizon, trials=3, seed=1)
        assert report.mean_tce <= 1e-2
        assert report.std_tce <= 1e-2


class TestCheckpoint:
    def test_round_trip_identical(self, tmp_path, reach_demo):
        dataset = Dataset(demonstrations=[reach_demo], role="seed")
        policy, _ = train(dataset, TrainConfig(epochs=2, seed=6))
        path = tmp_path / "policy.json"
        save_policy(policy, path)
        loaded = load_policy(path)
        assert np.array_equal(loaded.mean_net.get_flat(), policy.mean_net.get_flat())
        assert np.array_equal(loaded.logstd_net.get_flat(), policy.logstd_net.get_flat())
        assert np.array_equal(loaded.state_normalizer.mean, policy.state_normalizer.mean)
        assert np.array_equal(loaded.action_normalizer.std, policy.action_normalizer.std)
        states = np.random.default_rng(0).normal(size=(5, 3))
        mu_a, sd_a = policy.distribution(states)
        mu_b, sd_b = loaded.distribution(states)
        assert np.array_equal(mu_a, mu_b) and np.array_equal(sd_a, sd_b)
