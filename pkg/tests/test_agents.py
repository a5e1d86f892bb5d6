import math

import numpy as np
import pytest

from faaslab.agents import (DqnConfig, TrainConfig, Transition,
                            action_to_compound, aggregate, compound_to_action,
                            compute_advantages, dqn_train, evaluate_targets,
                            greedy_index, select_action, train, worker_loop)
from faaslab.cluster import Application, FunctionProfile
from faaslab.env import ACTION_SIZES, EnvConfig, ScalingAction, ServerlessEnv
from faaslab.errors import ConfigError
from faaslab.metrics import ChannelBounds, RewardBounds
from faaslab.nnet import NetworkSpec, ParameterStore, init_params
from faaslab.workload import TraceSeries, WorkloadSpec

BOUNDS = RewardBounds(rfrt=ChannelBounds(1.0, 11.0), rfr=ChannelBounds(0.0, 1.0),
                      cost=ChannelBounds(0.0, 0.01))


def tiny_profile():
    return FunctionProfile(function_id=0, req_cpu=0.25, req_mem=256.0,
                           standard_response_time=1.0, cold_start_seconds=2.0,
                           initial_pod_cpu=0.5, initial_pod_mem=1024.0)


def tiny_workload(rate=2, duration=30):
    app = Application(app_id=0, function_sequence=(0,))
    return WorkloadSpec(duration=duration, applications=(app,),
                        entry_traces={0: TraceSeries("c", (rate,) * duration)})


def tiny_env(desk_vms, seed=0, beta=1.0):
    cfg = EnvConfig(decision_interval=10.0, observe_delay=10.0,
                    episode_duration=30.0, beta=beta)
    return ServerlessEnv(desk_vms, {0: tiny_profile()}, cfg, bounds=BOUNDS,
                         seed=seed)


class TestSelectAction:
    def test_seeded_sampling_reproducible(self):
        spec = NetworkSpec(input_dim=4, hidden=(6,), head_sizes=ACTION_SIZES, seed=1)
        params = init_params(spec)
        state = np.full(4, 0.5)
        a = select_action(spec, params, state, "sample", np.random.default_rng(12))
        b = select_action(spec, params, state, "sample", np.random.default_rng(12))
        assert a == b

    def test_greedy_picks_dominant_probability(self):
        spec = NetworkSpec(input_dim=1, hidden=(), head_sizes=(5,))
        params = [np.zeros((1, 5)), np.zeros(5)]
        params[1][3] = 10.0
        probs_spec = NetworkSpec(input_dim=1, hidden=(), head_sizes=(5, 5, 5))
        p = [np.zeros((1, 5)), np.array([0.0, 0.0, 0.0, 10.0, 0.0]),
             np.zeros((1, 5)), np.zeros(5), np.zeros((1, 5)), np.zeros(5)]
        action = select_action(probs_spec, p, np.array([1.0]), "greedy")
        assert action.a1 == 3
        assert action.a2 == 0 and action.a3 == 0

    def test_empirical_frequencies_match_policy(self):
        spec = NetworkSpec(input_dim=3, hidden=(5,), head_sizes=(4, 3, 5), seed=2)
        params = init_params(spec)
        state = np.array([0.2, 0.9, 0.4])
        from faaslab.nnet import forward_actor
        expected = [h[0] for h in forward_actor(spec, params, state)]
        rng = np.random.default_rng(99)
        n = 100_000
        counts = [np.zeros(4), np.zeros(3), np.zeros(5)]
        for _ in range(n):
            a = select_action(spec, params, state, "sample", rng)
            for d, idx in enumerate(a.as_tuple()):
                counts[d][idx] += 1
        for dim in range(3):
            freq = counts[dim] / n
            sigma = np.sqrt(expected[dim] * (1 - expected[dim]) / n)
            assert np.all(np.abs(freq - expected[dim]) <= 3 * sigma + 1e-9)


class TestAdvantages:
    def _transitions(self, rewards, terminal_last=True, dim=4):
        out = []
        for i, r in enumerate(rewards):
            out.append(Transition(state=np.full(dim, 0.1 * i),
                                  action=ScalingAction(0, 0, 0), reward=r,
                                  next_state=np.full(dim, 0.1 * (i + 1)),
                                  terminal=terminal_last and i == len(rewards) - 1))
        return out

    def test_zero_critic_gives_rewards(self):
        spec = NetworkSpec(input_dim=4, hidden=(5,), head_sizes=(1,))
        params = [np.zeros_like(p) for p in init_params(spec)]
        adv, targets = compute_advantages(self._transitions([-0.5, -0.2]), spec,
                                          params, gamma=0.6)
        assert np.allclose(adv, [-0.5, -0.2])
        assert np.allclose(targets, [-0.5, -0.2])

    def test_terminal_cuts_bootstrap(self):
        spec = NetworkSpec(input_dim=4, hidden=(5,), head_sizes=(1,), seed=3)
        params = init_params(spec)
        trans = self._transitions([-0.3])
        from faaslab.nnet import forward_critic
        v = forward_critic(spec, params, trans[0].state[None, :])[0]
        adv, targets = compute_advantages(trans, spec, params, gamma=0.9)
        assert adv[0] == pytest.approx(-0.3 - v)
        assert targets[0] == pytest.approx(-0.3)

    def test_gamma_zero_is_myopic(self):
        spec = NetworkSpec(input_dim=4, hidden=(5,), head_sizes=(1,), seed=4)
        params = init_params(spec)
        trans = self._transitions([-0.4, -0.1], terminal_last=False)
        from faaslab.nnet import forward_critic
        states = np.stack([t.state for t in trans])
        v = forward_critic(spec, params, states)
        adv, _ = compute_advantages(trans, spec, params, gamma=0.0)
        assert np.allclose(adv, np.array([-0.4, -0.1]) - v)

    def test_empty_segment_rejected(self):
        spec = NetworkSpec(input_dim=4, hidden=(5,), head_sizes=(1,))
        with pytest.raises(ConfigError):
            compute_advantages([], spec, init_params(spec), 0.6)


class TestWorkerLoop:
    def test_update_per_episode_when_f_equals_t(self, desk_vms):
        cfg = TrainConfig(workers=1, episodes=3, update_freq=3, seed=5,
                          hidden=(16, 16))
        env = tiny_env(desk_vms, seed=5)
        spec_a = NetworkSpec(env.state_dim, cfg.hidden, ACTION_SIZES, cfg.seed)
        spec_c = NetworkSpec(env.state_dim, cfg.hidden, (1,), cfg.seed + 1)
        ga, gc = ParameterStore(spec_a), ParameterStore(spec_c)
        stats = worker_loop(0, env, [tiny_workload()], spec_a, spec_c, ga, gc, cfg)
        # T = 3 steps per episode equals f, so exactly one flush per episode
        assert [s.updates for s in stats] == [1, 2, 3]
        assert ga.version == gc.version == 3

    def test_deterministic_single_worker_reproducible(self, desk_vms):
        def run():
            cfg = TrainConfig(workers=1, episodes=4, update_freq=2, seed=6,
                              sync_mode="deterministic", hidden=(16, 16))
            envs = [tiny_env(desk_vms, seed=6)]
            return train(envs, [tiny_workload()], cfg)

        a, b = run(), run()
        assert [(s.worker, s.episode, s.reward) for s in a.stats] == \
               [(s.worker, s.episode, s.reward) for s in b.stats]
        for pa, pb in zip(a.actor.params, b.actor.params):
            assert np.array_equal(pa, pb)
        for pa, pb in zip(a.critic.params, b.critic.params):
            assert np.array_equal(pa, pb)

    def test_async_version_equals_total_updates(self, desk_vms):
        cfg = TrainConfig(workers=3, episodes=2, update_freq=2, seed=7,
                          sync_mode="async", hidden=(16, 16))
        envs = [tiny_env(desk_vms, seed=7 + w) for w in range(3)]
        result = train(envs, [tiny_workload()], cfg)
        assert len(result.stats) == 6
        assert result.actor.version == sum(result.worker_updates)
        assert result.critic.version == sum(result.worker_updates)

    def test_worker_count_must_match_envs(self, desk_vms):
        cfg = TrainConfig(workers=2, episodes=1)
        with pytest.raises(ConfigError):
            train([tiny_env(desk_vms)], [tiny_workload()], cfg)

    def test_resume_keeps_version_monotone(self, desk_vms):
        cfg = TrainConfig(workers=1, episodes=2, update_freq=3, seed=8,
                          hidden=(16, 16))
        envs = [tiny_env(desk_vms, seed=8)]
        first = train(envs, [tiny_workload()], cfg)
        v1 = first.actor.version
        second = train([tiny_env(desk_vms, seed=9)], [tiny_workload()], cfg,
                       actor_store=first.actor, critic_store=first.critic)
        assert second.actor.version > v1


class TestDqn:
    def test_compound_encoding(self):
        assert compound_to_action(0) == ScalingAction(0, 0, 0)
        assert compound_to_action(63) == ScalingAction(10, 10, 10)
        assert compound_to_action(action_to_compound(1, 2, 3)) == \
               ScalingAction(3, 7, 10)
        seen = {compound_to_action(i) for i in range(64)}
        assert len(seen) == 64
        with pytest.raises(ConfigError):
            compound_to_action(64)

    def test_greedy_invariant_under_affine_rescale(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            values = rng.normal(size=64)
            assert greedy_index(values) == greedy_index(2.5 * values + 3.0)

    def test_buffer_respects_capacity(self, desk_vms):
        cfg = DqnConfig(episodes=4, buffer_capacity=8, batch_size=4, seed=12,
                        hidden=(8, 8), target_refresh=5)
        env = tiny_env(desk_vms, seed=12)
        result = dqn_train(env, [tiny_workload()], cfg)
        assert len(result.buffer) <= 8
        assert len(result.stats) == 4
        assert result.store.version > 0

    def test_training_reproducible(self, desk_vms):
        def run():
            cfg = DqnConfig(episodes=2, buffer_capacity=32, batch_size=4,
                            seed=13, hidden=(8, 8))
            return dqn_train(tiny_env(desk_vms, seed=13), [tiny_workload()], cfg)

        a, b = run(), run()
        assert [s.reward for s in a.stats] == [s.reward for s in b.stats]
        for pa, pb in zip(a.store.params, b.store.params):
            assert np.array_equal(pa, pb)


class TestEvaluate:
    def test_baseline_deterministic_and_no_checkpoint_needed(self, desk_vms):
        sets = {"mid": [tiny_workload(rate=6)]}
        kwargs = dict(vms=desk_vms, profiles={0: tiny_profile()},
                      env_config=EnvConfig(episode_duration=30.0))
        a = evaluate_targets(["kube_cpu"], sets, **kwargs)
        b = evaluate_targets(["kube_cpu"], sets, **kwargs)
        assert a == b
        assert a[0].target == "kube_cpu"

    def test_unknown_target_rejected(self, desk_vms):
        with pytest.raises(ConfigError, match="unknown target"):
            evaluate_targets(["sorcery"], {"mid": [tiny_workload()]}, desk_vms,
                             {0: tiny_profile()})

    def test_checkpoint_roundtrip_evaluation(self, desk_vms, tmp_path):
        from faaslab.agents.evaluate import _greedy_episode
        from faaslab.nnet import ParameterStore

        cfg = TrainConfig(workers=1, episodes=1, update_freq=3, seed=14,
                          hidden=(16, 16))
        envs = [tiny_env(desk_vms, seed=14)]
        result = train(envs, [tiny_workload()], cfg)
        path = tmp_path / "actor.npz"
        result.actor.save(path)
        loaded = ParameterStore.load(path)
        args = (desk_vms, {0: tiny_profile()}, tiny_workload(rate=4),
                EnvConfig(episode_duration=30.0))
        from faaslab.cluster import SimConfig
        live = _greedy_episode(result.actor, *args, SimConfig(), BOUNDS)
        disk = _greedy_episode(loaded, *args, SimConfig(), BOUNDS)
        assert live == disk  # the checkpoint reproduces evaluation metrics

        sets = {"mid": [tiny_workload(rate=4)]}
        rows = evaluate_targets([str(path)], sets, desk_vms, {0: tiny_profile()},
                                EnvConfig(episode_duration=30.0), bounds=BOUNDS)
        rows2 = evaluate_targets([str(path)], sets, desk_vms, {0: tiny_profile()},
                                 EnvConfig(episode_duration=30.0), bounds=BOUNDS)
        assert rows == rows2

    def test_parallel_merge_matches_sequential(self, desk_vms):
        sets = {"mid": [tiny_workload(rate=4), tiny_workload(rate=6)],
                "low": [tiny_workload(rate=2)]}
        kwargs = dict(vms=desk_vms, profiles={0: tiny_profile()},
                      env_config=EnvConfig(episode_duration=30.0))
        seq = evaluate_targets(["knative", "openfaas"], sets, parallel=1, **kwargs)
        par = evaluate_targets(["knative", "openfaas"], sets, parallel=4, **kwargs)
        assert seq == par

    def test_aggregate_skips_undefined_rart(self):
        from faaslab.agents import EvalRow
        rows = [EvalRow("x", "mid", 0, math.nan, 0.5, 0.1),
                EvalRow("x", "mid", 1, 2.0, 0.1, 0.3)]
        agg = aggregate(rows)
        assert agg[0]["rart"] == pytest.approx(2.0)
        assert agg[0]["rfr"] == pytest.approx(0.3)
