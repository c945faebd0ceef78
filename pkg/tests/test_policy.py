"""Message pipeline: generation, gating, coordinator variants, actions, critic."""

import numpy as np
import pytest

from commgate.nn import Mlp, MlpSpec, ShapeError, finite_diff_check
from commgate.policy import (AgentNets, AgentSpec, AttentionCoordinator,
                             FullyConnectedCoordinator, MeanCoordinator,
                             SharedNets, Team, act, coordinate, critic_q,
                             exploration_noise, gate, generate_message,
                             make_coordinator)

RNG = lambda s=0: np.random.default_rng(s)


def set_layers(mlp, weights):
    """Overwrite every (W, b) pair of an Mlp."""
    assert len(weights) == len(mlp.store.layers)
    for lay, (W, b) in zip(mlp.store.layers, weights):
        lay.W[...] = W
        lay.b[...] = b


def zero_layers(mlp):
    for lay in mlp.store.layers:
        lay.W.fill(0.0)
        lay.b.fill(0.0)


def make_agent(obs_dim=3, action_dim=2, d_m=2, d_M=2, hidden=(4,), seed=0):
    return AgentNets(AgentSpec(obs_dim, action_dim), d_m, d_M, hidden, RNG(seed))


def set_gate_bias(nets, bias):
    """Force the gating head to a constant pre-sigmoid logit."""
    zero_layers(nets.gating)
    nets.gating.store.layers[-1].b[...] = bias


class TestGenerateMessage:
    def test_deterministic(self):
        nets = make_agent()
        o = np.array([0.1, -0.4, 0.7])
        m1 = generate_message(nets, o)
        m2 = generate_message(nets, o)
        assert np.array_equal(m1, m2)

    def test_zero_weights_zero_payload(self):
        nets = make_agent()
        zero_layers(nets.msggen)
        m = generate_message(nets, np.array([1.0, 2.0, 3.0]))
        assert np.array_equal(m, np.zeros(2))

    def test_tanh_range(self):
        nets = make_agent(seed=3)
        m = generate_message(nets, np.array([5.0, -5.0, 2.0]))
        assert m.shape == (2,)
        assert np.all(np.abs(m) < 1.0)

    def test_dimension_mismatch(self):
        nets = make_agent()
        with pytest.raises(ShapeError):
            generate_message(nets, np.zeros(7))


class TestGate:
    def test_open_gate_passes_payload(self):
        nets = make_agent()
        set_gate_bias(nets, np.log(0.7 / 0.3))  # sigmoid -> 0.7
        payload = np.array([0.3, -0.2])
        gs = gate(nets, np.zeros(3), payload)
        assert gs.p == pytest.approx(0.7)
        assert gs.g == 1
        assert np.array_equal(gs.gated, payload)

    def test_boundary_half_closes(self):
        nets = make_agent()
        set_gate_bias(nets, 0.0)  # sigmoid(0) = 0.5 exactly
        gs = gate(nets, np.zeros(3), np.array([1.0, 1.0]))
        assert gs.p == 0.5
        assert gs.g == 0  # strict inequality p > 0.5
        assert np.array_equal(gs.gated, np.zeros(2))

    def test_forced_zero_overrides(self):
        nets = make_agent()
        set_gate_bias(nets, 10.0)  # p ~ 1
        gs = gate(nets, np.zeros(3), np.array([0.5, 0.5]), forced=0)
        assert gs.p > 0.99  # probability still computed and recorded
        assert gs.g == 0
        assert np.array_equal(gs.gated, np.zeros(2))

    def test_forced_one_overrides(self):
        nets = make_agent()
        set_gate_bias(nets, -10.0)  # p ~ 0
        payload = np.array([0.5, -0.5])
        gs = gate(nets, np.zeros(3), payload, forced=1)
        assert gs.g == 1
        assert np.array_equal(gs.gated, payload)

    def test_gate_algebra(self):
        nets = make_agent(seed=7)
        rng = RNG(1)
        for _ in range(20):
            o = rng.normal(size=3)
            payload = rng.normal(size=2)
            gs = gate(nets, o, payload)
            assert np.array_equal(gs.gated, payload * int(gs.p > 0.5))


class TestCoordinators:
    def test_mean_identity_example(self):
        # two agents, identity MLP: each agent sees the other's message
        coord = MeanCoordinator(2, 2, 2, (), RNG(0))
        set_layers(coord.mlp, [(np.eye(2), np.zeros(2))])
        msgs = np.array([[[1.0, 0.0], [3.0, 2.0]]])
        Ms, _ = coord.forward(msgs)
        assert np.allclose(Ms[0, 0], [3.0, 2.0])
        assert np.allclose(Ms[0, 1], [1.0, 0.0])

    def test_mean_excludes_self_three_agents(self):
        coord = MeanCoordinator(3, 2, 2, (), RNG(0))
        set_layers(coord.mlp, [(np.eye(2), np.zeros(2))])
        msgs = np.array([[[2.0, 0.0], [4.0, 2.0], [0.0, 4.0]]])
        Ms, _ = coord.forward(msgs)
        assert np.allclose(Ms[0, 0], [2.0, 3.0])  # mean of agents 1, 2

    def test_attention_identical_messages_uniform_weights(self):
        coord = AttentionCoordinator(4, 3, 3, (5,), RNG(2))
        msgs = np.tile(np.array([0.4, -0.2, 0.9]), (1, 4, 1))
        alpha = coord.attention_weights(msgs)
        expected = (np.ones((4, 4)) - np.eye(4)) / 3.0
        assert np.allclose(alpha[0], expected, atol=1e-12)

    def test_attention_weights_simplex(self):
        coord = AttentionCoordinator(5, 3, 2, (4,), RNG(3))
        msgs = RNG(4).normal(size=(2, 5, 3))
        alpha = coord.attention_weights(msgs)
        assert np.all(alpha >= 0)
        assert np.all(np.abs(alpha.sum(axis=2) - 1.0) < 1e-12)
        assert np.all(np.abs(np.diagonal(alpha, axis1=1, axis2=2)) == 0)

    @pytest.mark.parametrize("variant", ["fully-connected", "mean", "attention"])
    def test_zero_inputs_zero_bias_nets(self, variant):
        coord = make_coordinator(variant, 3, 2, 2, (4,), RNG(1))
        for store in coord.stores:
            for lay in store.layers:
                lay.b.fill(0.0)
        Ms, _ = coord.forward(np.zeros((1, 3, 2)))
        assert np.allclose(Ms, 0.0)

    @pytest.mark.parametrize("variant", ["fully-connected", "mean", "attention"])
    def test_backward_matches_finite_differences(self, variant):
        coord = make_coordinator(variant, 3, 2, 2, (4,), RNG(5))
        msgs = RNG(6).normal(size=(2, 3, 2))
        up = RNG(7).normal(size=(2, 3, 2))

        def loss_fn():
            for store in coord.stores:
                store.zero_grad()
            Ms, tape = coord.forward(msgs)
            coord.backward(tape, up)
            return float((Ms * up).sum())

        report = finite_diff_check(list(coord.stores), loss_fn)
        assert report.max_rel_error < 1e-4

    def test_wrong_agent_count_rejected(self):
        specs = [AgentSpec(3, 1)] * 3
        shared = SharedNets(specs, "fully-connected", 2, 2, (4,), RNG(0))
        with pytest.raises(ShapeError):
            coordinate(shared, [np.zeros(2)] * 2)

    def test_unknown_variant(self):
        with pytest.raises(ValueError, match="fully-connected"):
            make_coordinator("bogus", 3, 2, 2, (4,), RNG(0))


class TestZeroPaddingEquivalence:
    @pytest.mark.parametrize("variant", ["fully-connected", "mean", "attention"])
    def test_pruned_equals_zero_vector(self, variant):
        """A pruned slot and an explicit zero vector are the same code path."""
        specs = [AgentSpec(3, 1)] * 3
        shared = SharedNets(specs, variant, 2, 2, (4,), RNG(8))
        msgs = [np.array([0.5, -0.1]), np.array([0.2, 0.9]),
                np.array([-0.7, 0.3])]
        pruned = [msgs[0], np.zeros(2), msgs[2]]  # agent 1 "did not send"
        gs = gate(make_agent(seed=9), np.zeros(3), msgs[1], forced=0)
        via_gate = [msgs[0], gs.gated, msgs[2]]
        Ms_a = coordinate(shared, pruned)
        Ms_b = coordinate(shared, via_gate)
        for a, b in zip(Ms_a, Ms_b):
            assert np.array_equal(a, b)


class TestActAndCritic:
    def test_action_bounded(self):
        nets = make_agent(seed=11)
        a = act(nets, np.array([3.0, -2.0, 1.0]), np.array([0.5, 0.5]))
        assert a.shape == (2,)
        assert np.all((a > 0.0) & (a < 1.0))

    def test_act_deterministic(self):
        nets = make_agent(seed=12)
        o, M = np.array([0.1, 0.2, 0.3]), np.array([0.4, 0.5])
        assert np.array_equal(act(nets, o, M), act(nets, o, M))

    def test_critic_finite_and_deterministic(self):
        specs = [AgentSpec(3, 2), AgentSpec(4, 1)]
        shared = SharedNets(specs, "fully-connected", 2, 2, (4,), RNG(13))
        obs = [np.array([0.1, 0.2, 0.3]), np.array([1.0, -1.0, 0.5, 0.0])]
        acts = [np.array([0.4, 0.6]), np.array([0.2])]
        q1 = critic_q(shared, obs, acts)
        assert np.isfinite(q1)
        assert critic_q(shared, obs, acts) == q1

    def test_critic_rejects_incomplete_input(self):
        specs = [AgentSpec(3, 1)] * 2
        shared = SharedNets(specs, "fully-connected", 2, 2, (4,), RNG(0))
        with pytest.raises(ShapeError):
            critic_q(shared, [np.zeros(3)], [np.zeros(1), np.zeros(1)])

    def test_critic_action_gradient_finite_diff(self):
        specs = [AgentSpec(2, 2)]
        shared = SharedNets(specs, "fully-connected", 2, 2, (4,), RNG(14))
        obs = np.array([0.3, -0.1])
        a = np.array([0.5, 0.7])
        x = np.concatenate([obs, a])
        _, tape = shared.critic.forward(x)
        dx = shared.critic.backward(tape, np.ones(1))
        eps = 1e-5
        for j in range(2):
            ap, am = a.copy(), a.copy()
            ap[j] += eps
            am[j] -= eps
            num = (critic_q(shared, [obs], [ap])
                   - critic_q(shared, [obs], [am])) / (2 * eps)
            analytic = dx[2 + j]
            assert abs(analytic - num) / max(1e-8, abs(num)) < 1e-4


class TestExplorationNoise:
    def test_zero_scale_identity(self):
        a = np.array([0.3, 0.8])
        out = exploration_noise(a, 0.0, RNG(0))
        assert np.array_equal(out, a)

    def test_large_scale_clipped(self):
        out = exploration_noise(np.full(50, 0.5), 100.0, RNG(1))
        assert np.all((out > 0.0) & (out < 1.0))

    def test_reproducible(self):
        a = np.array([0.5, 0.5])
        assert np.array_equal(exploration_noise(a, 0.2, RNG(7)),
                              exploration_noise(a, 0.2, RNG(7)))

    def test_negative_scale_rejected(self):
        with pytest.raises(ValueError):
            exploration_noise(np.array([0.5]), -0.1, RNG(0))


class TestTeam:
    def test_heterogeneous_agents(self):
        team = Team([AgentSpec(3, 1), AgentSpec(5, 2)], RNG(0),
                    d_m=2, d_M=2, hidden=(4,))
        assert team.agents[0].actor.spec.in_dim == 5
        assert team.agents[1].actor.spec.in_dim == 7

    def test_targets_start_equal(self):
        team = Team([AgentSpec(3, 1)] * 2, RNG(1), d_m=2, d_M=2, hidden=(4,))
        for name, store in team.all_stores().items():
            if not name.startswith("main/") or "gating" in name:
                continue
            twin = team.all_stores()["target/" + name.split("/", 1)[1]]
            for (_, P, _), (_, T, _) in zip(store.param_arrays(),
                                            twin.param_arrays()):
                assert np.array_equal(P, T)
