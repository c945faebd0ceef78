"""The agent team: message generators, gating heads, coordinator variants,
actors and the shared centralized critic.

Execution pipeline per step: each agent encodes its observation into a local
message, a binary gate decides whether the message is sent (a pruned slot is
a zero vector on the coordinator's input), the shared coordinator produces a
per-agent global message, and each actor maps (observation, global message)
to a bounded continuous action. The shared critic scores the joint
observation/action. All pieces keep explicit tapes so the trainer can chain
gradients critic -> actor -> coordinator -> generator.
"""

from dataclasses import dataclass

import numpy as np

from .nn import Mlp, MlpSpec, ParamStore, ShapeError, copy_to_target

COORDINATOR_VARIANTS = ("fully-connected", "mean", "attention")


@dataclass(frozen=True)
class AgentSpec:
    obs_dim: int
    action_dim: int


@dataclass
class GateState:
    """Gate probability, binary decision, and the gated message payload."""

    p: float
    g: int
    payload: np.ndarray
    gated: np.ndarray


class AgentNets:
    """Per-agent networks: actor, message generator, gating head."""

    def __init__(self, spec: AgentSpec, d_m, d_M, hidden, rng, agent_id=0):
        self.spec = spec
        self.agent_id = agent_id
        h = tuple(hidden)
        self.msggen = Mlp.create(
            MlpSpec((spec.obs_dim, *h, d_m), "tanh", "tanh"),
            rng, name=f"agent{agent_id}.msggen")
        self.actor = Mlp.create(
            MlpSpec((spec.obs_dim + d_M, *h, spec.action_dim), "tanh", "bounded"),
            rng, name=f"agent{agent_id}.actor")
        self.gating = Mlp.create(
            MlpSpec((spec.obs_dim, *h, 1), "tanh", "sigmoid"),
            rng, name=f"agent{agent_id}.gating")


def generate_message(nets: AgentNets, o_i):
    """Local message from the agent's own observation."""
    m, _ = nets.msggen.forward(np.asarray(o_i, dtype=np.float64))
    return m


def gate(nets: AgentNets, o_i, payload, forced=None):
    """Gate decision for one message.

    The probability is always computed and recorded; `forced` (0 or 1)
    overrides the binary decision, which is how pre-training keeps every
    channel open and how Q-difference probing silences a single agent.
    """
    p_vec, _ = nets.gating.forward(np.asarray(o_i, dtype=np.float64))
    p = float(p_vec[0])
    g = int(p > 0.5) if forced is None else int(forced)
    payload = np.asarray(payload, dtype=np.float64)
    gated = payload if g == 1 else np.zeros_like(payload)
    return GateState(p=p, g=g, payload=payload, gated=gated.copy())


class FullyConnectedCoordinator:
    """One shared MLP over the concatenation of all messages, sliced per agent."""

    variant = "fully-connected"

    def __init__(self, n_agents, d_m, d_M, hidden, rng):
        self.n_agents = n_agents
        self.d_m = d_m
        self.d_M = d_M
        self.mlp = Mlp.create(
            MlpSpec((n_agents * d_m, *hidden, n_agents * d_M), "tanh", "identity"),
            rng, name="coordinator.mlp")

    @property
    def stores(self):
        return [self.mlp.store]

    def forward(self, msgs):
        B, N, d_m = msgs.shape
        Y, tape = self.mlp.forward(msgs.reshape(B, N * d_m))
        return Y.reshape(B, N, self.d_M), tape

    def backward(self, tape, dMs):
        B, N, _ = dMs.shape
        dX = self.mlp.backward(tape, dMs.reshape(B, N * self.d_M))
        return dX.reshape(B, N, self.d_m)


class MeanCoordinator:
    """Shared MLP over the mean of the other agents' messages."""

    variant = "mean"

    def __init__(self, n_agents, d_m, d_M, hidden, rng, include_self=False):
        if n_agents < 2 and not include_self:
            raise ValueError("mean coordinator needs >= 2 agents when excluding self")
        self.n_agents = n_agents
        self.d_m = d_m
        self.d_M = d_M
        self.include_self = include_self
        self.mlp = Mlp.create(
            MlpSpec((d_m, *hidden, d_M), "tanh", "identity"),
            rng, name="coordinator.mlp")

    @property
    def stores(self):
        return [self.mlp.store]

    def forward(self, msgs):
        B, N, d_m = msgs.shape
        total = msgs.sum(axis=1, keepdims=True)
        if self.include_self:
            means = np.broadcast_to(total / N, msgs.shape)
        else:
            means = (total - msgs) / (N - 1)
        Y, tape = self.mlp.forward(np.ascontiguousarray(means.reshape(B * N, d_m)))
        return Y.reshape(B, N, self.d_M), tape

    def backward(self, tape, dMs):
        B, N, _ = dMs.shape
        dmean = self.mlp.backward(tape, dMs.reshape(B * N, self.d_M))
        dmean = dmean.reshape(B, N, self.d_m)
        total = dmean.sum(axis=1, keepdims=True)
        if self.include_self:
            return np.broadcast_to(total / N, dmean.shape).copy()
        return (total - dmean) / (N - 1)


class AttentionCoordinator:
    """Scaled dot-product attention over the other agents' messages.

    Learned query/key projections; scores <q_i, k_j>/sqrt(d_m); softmax over
    j != i; the weighted sum feeds a shared MLP.
    """

    variant = "attention"

    def __init__(self, n_agents, d_m, d_M, hidden, rng, d_k=None):
        if n_agents < 2:
            raise ValueError("attention coordinator needs >= 2 agents")
        self.n_agents = n_agents
        self.d_m = d_m
        self.d_M = d_M
        self.d_k = d_k or d_m
        self.query = Mlp.create(MlpSpec((d_m, self.d_k), "tanh", "identity"),
                                rng, name="coordinator.query")
        self.key = Mlp.create(MlpSpec((d_m, self.d_k), "tanh", "identity"),
                              rng, name="coordinator.key")
        self.mlp = Mlp.create(MlpSpec((d_m, *hidden, d_M), "tanh", "identity"),
                              rng, name="coordinator.mlp")
        self._scale = 1.0 / np.sqrt(d_m)

    @property
    def stores(self):
        return [self.query.store, self.key.store, self.mlp.store]

    def forward(self, msgs):
        B, N, d_m = msgs.shape
        flat = np.ascontiguousarray(msgs.reshape(B * N, d_m))
        Qf, q_tape = self.query.forward(flat)
        Kf, k_tape = self.key.forward(flat)
        Q = Qf.reshape(B, N, self.d_k)
        K = Kf.reshape(B, N, self.d_k)
        scores = np.einsum("bik,bjk->bij", Q, K) * self._scale
        eye = np.eye(N, dtype=bool)
        scores[:, eye] = -np.inf  # no self-attention
        scores -= scores.max(axis=2, keepdims=True)
        expS = np.exp(scores)
        alpha = expS / expS.sum(axis=2, keepdims=True)
        ctx = np.einsum("bij,bjd->bid", alpha, msgs)
        Y, m_tape = self.mlp.forward(np.ascontiguousarray(ctx.reshape(B * N, d_m)))
        tape = (q_tape, k_tape, m_tape, alpha, Q, K, msgs)
        return Y.reshape(B, N, self.d_M), tape

    def attention_weights(self, msgs):
        """Row-stochastic attention matrix (diagonal forced to zero)."""
        _, tape = self.forward(msgs)
        return tape[3]

    def backward(self, tape, dMs):
        q_tape, k_tape, m_tape, alpha, Q, K, msgs = tape
        B, N, _ = dMs.shape
        dctx = self.mlp.backward(m_tape, dMs.reshape(B * N, self.d_M))
        dctx = dctx.reshape(B, N, self.d_m)
        # through the value side of the weighted sum
        dmsgs = np.einsum("bij,bid->bjd", alpha, dctx)
        dalpha = np.einsum("bid,bjd->bij", dctx, msgs)
        # softmax rows (masked diagonal has alpha == 0, so it drops out)
        dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=2, keepdims=True))
        dscores *= self._scale
        dQ = np.einsum("bij,bjk->bik", dscores, K)
        dK = np.einsum("bij,bik->bjk", dscores, Q)
        dmsgs += self.query.backward(q_tape, dQ.reshape(B * N, self.d_k)
                                     ).reshape(B, N, self.d_m)
        dmsgs += self.key.backward(k_tape, dK.reshape(B * N, self.d_k)
                                   ).reshape(B, N, self.d_m)
        return dmsgs


def make_coordinator(variant, n_agents, d_m, d_M, hidden, rng, **kw):
    if variant == "fully-connected":
        return FullyConnectedCoordinator(n_agents, d_m, d_M, hidden, rng)
    if variant == "mean":
        return MeanCoordinator(n_agents, d_m, d_M, hidden, rng, **kw)
    if variant == "attention":
        return AttentionCoordinator(n_agents, d_m, d_M, hidden, rng, **kw)
    raise ValueError(f"unknown coordinator variant {variant!r}; "
                     f"expected one of {COORDINATOR_VARIANTS}")


class SharedNets:
    """Coordinator and centralized critic, one instance for the whole team."""

    def __init__(self, agent_specs, variant, d_m, d_M, hidden, rng):
        n = len(agent_specs)
        self.agent_specs = list(agent_specs)
        self.coordinator = make_coordinator(variant, n, d_m, d_M, hidden, rng)
        joint = sum(s.obs_dim for s in agent_specs) + \
            sum(s.action_dim for s in agent_specs)
        self.critic = Mlp.create(MlpSpec((joint, *hidden, 1), "tanh", "identity"),
                                 rng, name="critic")


def coordinate(shared: SharedNets, gated_messages):
    """Global messages from the full list of (possibly zeroed) local messages."""
    n = len(shared.agent_specs)
    if len(gated_messages) != n:
        raise ShapeError(f"expected {n} messages, got {len(gated_messages)}")
    msgs = np.stack([np.asarray(m, dtype=np.float64) for m in gated_messages])
    Ms, _ = shared.coordinator.forward(msgs[None, :, :])
    return [Ms[0, i] for i in range(n)]


def act(nets: AgentNets, o_i, M_i):
    """Action from local observation plus the agent's global message."""
    x = np.concatenate([np.asarray(o_i, dtype=np.float64),
                        np.asarray(M_i, dtype=np.float64)])
    a, _ = nets.actor.forward(x)
    return a


def critic_q(shared: SharedNets, observations, actions):
    """Centralized Q over the complete joint observation and action."""
    n = len(shared.agent_specs)
    if len(observations) != n or len(actions) != n:
        raise ShapeError(
            f"critic needs all {n} observations and actions, got "
            f"{len(observations)} / {len(actions)}")
    x = np.concatenate([np.asarray(v, dtype=np.float64)
                        for v in (*observations, *actions)])
    q, _ = shared.critic.forward(x)
    return float(q[0])


ACTION_CLIP = 1e-6  # keep noisy actions strictly inside (0, 1)


def exploration_noise(action, scale, rng):
    """Additive Gaussian exploration, clipped back into the action range."""
    if scale < 0:
        raise ValueError("noise scale must be >= 0")
    a = np.asarray(action, dtype=np.float64)
    if scale == 0:
        return a.copy()
    return np.clip(a + rng.normal(scale=scale, size=a.shape),
                   ACTION_CLIP, 1.0 - ACTION_CLIP)


class Team:
    """All networks for one run: per-agent nets, shared nets, target copies."""

    def __init__(self, agent_specs, rng, variant="fully-connected",
                 d_m=16, d_M=16, hidden=(32,), coordinator_kw=None):
        kw = coordinator_kw or {}
        self.agent_specs = [AgentSpec(*s) if isinstance(s, tuple) else s
                            for s in agent_specs]
        self.variant = variant
        self.d_m = d_m
        self.d_M = d_M
        self.hidden = tuple(hidden)
        self.agents = [AgentNets(s, d_m, d_M, hidden, rng, agent_id=i)
                       for i, s in enumerate(self.agent_specs)]
        self.shared = SharedNets(self.agent_specs, variant, d_m, d_M, hidden, rng)
        self.target_agents = [AgentNets(s, d_m, d_M, hidden, rng, agent_id=i)
                              for i, s in enumerate(self.agent_specs)]
        self.target_shared = SharedNets(self.agent_specs, variant, d_m, d_M,
                                        hidden, rng)
        self.phase1_done = False
        self.copy_targets()

    @property
    def n_agents(self):
        return len(self.agents)

    def copy_targets(self):
        """Hard copy of every trained network into its target twin."""
        for src, dst in zip(self.agents, self.target_agents):
            copy_to_target(src.actor.store, dst.actor.store)
            copy_to_target(src.msggen.store, dst.msggen.store)
        for src, dst in zip(self.shared.coordinator.stores,
                            self.target_shared.coordinator.stores):
            copy_to_target(src, dst)
        copy_to_target(self.shared.critic.store, self.target_shared.critic.store)

    def all_stores(self):
        """Named map of every ParamStore, for checkpointing."""
        out = {}
        for prefix, agents, shared in (
                ("main", self.agents, self.shared),
                ("target", self.target_agents, self.target_shared)):
            for nets in agents:
                out[f"{prefix}/{nets.actor.store.name}"] = nets.actor.store
                out[f"{prefix}/{nets.msggen.store.name}"] = nets.msggen.store
                out[f"{prefix}/{nets.gating.store.name}"] = nets.gating.store
            for store in shared.coordinator.stores:
                out[f"{prefix}/{store.name}"] = store
            out[f"{prefix}/{shared.critic.store.name}"] = shared.critic.store
        return out

    def channel_stores(self):
        """Parameters of the communication channel (generators + coordinator)."""
        return [a.msggen.store for a in self.agents] + \
            list(self.shared.coordinator.stores)
