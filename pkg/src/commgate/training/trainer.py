"""Off-policy training for the communicating team.

Phase 1 trains critic, actors and the communication channel with every gate
forced open. Phase 2 freezes those and trains the gating heads on an
auxiliary binary task: the label says whether the Q-advantage of agent i's
communicated action over its silent action clears the current threshold.
Agents are probed round-robin; other agents stay communicating while one is
probed.
"""

from dataclasses import dataclass, field

import numpy as np

from ..nn import optimizer_step
from ..policy import Team, exploration_noise
from .config import TrainConfig
from .replay import Experience, ReplayBuffer
from .thresholds import ThresholdState, auxiliary_label


class PhaseOrderError(RuntimeError):
    """Gating training requested before phase 1 produced usable Q-values."""


@dataclass
class PipelineCache:
    obs: list                 # per-agent (B, o_dim)
    msgs: np.ndarray          # (B, N, d_m) raw messages
    mask: np.ndarray          # (B, N) gate values
    gated: np.ndarray         # (B, N, d_m)
    msg_tapes: list
    coord_tape: object
    Ms: np.ndarray            # (B, N, d_M)
    actions: list             # per-agent (B, a_dim)
    act_tapes: list


def forward_pipeline(team: Team, obs, gate_mask=None, use_target=False):
    """Messages -> gate mask -> coordinator -> actions, batched, with tapes.

    gate_mask: (B, N) of {0, 1}; None means every gate open.
    """
    agents = team.target_agents if use_target else team.agents
    shared = team.target_shared if use_target else team.shared
    obs = [np.atleast_2d(np.asarray(o, dtype=np.float64)) for o in obs]
    B = obs[0].shape[0]
    N = team.n_agents
    if gate_mask is None:
        gate_mask = np.ones((B, N))
    msgs_list, msg_tapes = [], []
    for i, nets in enumerate(agents):
        m, tp = nets.msggen.forward(obs[i])
        msgs_list.append(m)
        msg_tapes.append(tp)
    msgs = np.stack(msgs_list, axis=1)
    gated = msgs * gate_mask[:, :, None]
    Ms, coord_tape = shared.coordinator.forward(gated)
    actions, act_tapes = [], []
    for i, nets in enumerate(agents):
        x = np.concatenate([obs[i], Ms[:, i, :]], axis=1)
        a, tp = nets.actor.forward(x)
        actions.append(a)
        act_tapes.append(tp)
    return PipelineCache(obs, msgs, gate_mask, gated, msg_tapes, coord_tape,
                         Ms, actions, act_tapes)


def critic_forward(shared, obs, actions):
    """Batched centralized Q; returns ((B,1) values, tape)."""
    X = np.concatenate(list(obs) + list(actions), axis=1)
    return shared.critic.forward(X)


def zero_all_grads(team: Team):
    for store in team.all_stores().values():
        store.zero_grad()


def td_target(team: Team, reward, next_obs, done, gamma, gate_value=1.0):
    """y = r + gamma * Q_target(o', a') with target actors communicating;
    the bootstrap term is dropped on terminal transitions."""
    next_obs = [np.atleast_2d(np.asarray(o, dtype=np.float64)) for o in next_obs]
    B = next_obs[0].shape[0]
    mask = np.full((B, team.n_agents), gate_value)
    pipe = forward_pipeline(team, next_obs, gate_mask=mask, use_target=True)
    qn, _ = critic_forward(team.target_shared, next_obs, pipe.actions)
    reward = np.asarray(reward, dtype=np.float64).reshape(B)
    done = np.asarray(done, dtype=np.float64).reshape(B)
    return reward + gamma * (1.0 - done) * qn[:, 0]


def critic_update(team: Team, batch, cfg: TrainConfig, gate_value=1.0):
    """One TD step on the shared critic; returns the pre-step loss."""
    y = td_target(team, batch["reward"], batch["next_obs"], batch["done"],
                  cfg.gamma, gate_value)
    zero_all_grads(team)
    B = len(y)
    q, tape = critic_forward(team.shared, batch["obs"], batch["actions"])
    delta = q[:, 0] - y
    loss = float(np.mean(delta ** 2))
    team.shared.critic.backward(tape, (2.0 * delta / B)[:, None])
    optimizer_step(team.shared.critic.store, cfg.lr_critic)
    return loss


def _dq_dactions(team: Team, pipe: PipelineCache, scale):
    """Backward through the critic only; returns per-agent dQ/da * scale."""
    B = pipe.obs[0].shape[0]
    q, tape = critic_forward(team.shared, pipe.obs, pipe.actions)
    up = np.full((B, 1), scale)
    dX = team.shared.critic.backward(tape, up)
    off = sum(o.shape[1] for o in pipe.obs)
    grads = []
    for i, a in enumerate(pipe.actions):
        grads.append(dX[:, off:off + a.shape[1]])
        off += a.shape[1]
    return grads


def actor_update(team: Team, batch, cfg: TrainConfig, gate_value=1.0):
    """Ascent on E[Q] w.r.t. each actor; critic and channel are not stepped."""
    zero_all_grads(team)
    B = batch["obs"][0].shape[0]
    mask = np.full((B, team.n_agents), gate_value)
    pipe = forward_pipeline(team, batch["obs"], gate_mask=mask)
    dacts = _dq_dactions(team, pipe, -1.0 / B)  # minimize -mean(Q)
    for nets, tape, da in zip(team.agents, pipe.act_tapes, dacts):
        nets.actor.backward(tape, da)  # input grads (dM_i) handled by channel
    for nets in team.agents:
        optimizer_step(nets.actor.store, cfg.lr_actor)


def channel_update(team: Team, batch, cfg: TrainConfig, gate_value=1.0):
    """Chain-rule step on message generators + coordinator, averaged over the
    probed agent index."""
    zero_all_grads(team)
    B = batch["obs"][0].shape[0]
    N = team.n_agents
    mask = np.full((B, N), gate_value)
    pipe = forward_pipeline(team, batch["obs"], gate_mask=mask)
    dacts = _dq_dactions(team, pipe, -1.0 / B)
    dMs = np.empty_like(pipe.Ms)
    for i, (nets, tape, da) in enumerate(zip(team.agents, pipe.act_tapes, dacts)):
        dx = nets.actor.backward(tape, da)
        dMs[:, i, :] = dx[:, pipe.obs[i].shape[1]:]
    dMs /= N  # expectation over the probed agent
    dgated = team.shared.coordinator.backward(pipe.coord_tape, dMs)
    dmsgs = dgated * pipe.mask[:, :, None]
    for i, (nets, tape) in enumerate(zip(team.agents, pipe.msg_tapes)):
        nets.msggen.backward(tape, dmsgs[:, i, :])
    for store in team.channel_stores():
        optimizer_step(store, cfg.lr_channel)


def delta_q(team: Team, obs, agent_i):
    """Q-advantage of agent i acting with its message sent vs pruned.

    Other agents keep their communicating actions in both terms; only agent
    i's uplink is silenced for the second term.
    """
    obs = [np.atleast_2d(np.asarray(o, dtype=np.float64)) for o in obs]
    N = team.n_agents
    full = forward_pipeline(team, obs, gate_mask=np.ones((1, N)))
    mask_i = np.ones((1, N))
    mask_i[0, agent_i] = 0.0
    silenced = forward_pipeline(team, obs, gate_mask=mask_i)
    acts_c = full.actions
    acts_i = [a.copy() for a in acts_c]
    acts_i[agent_i] = silenced.actions[agent_i]
    qc, _ = critic_forward(team.shared, obs, acts_c)
    qi, _ = critic_forward(team.shared, obs, acts_i)
    return float(qc[0, 0] - qi[0, 0])


GATE_PROB_CLIP = 1e-7


def gating_update(nets, obs_batch, labels, cfg: TrainConfig):
    """Binary cross-entropy step on one agent's gating head; returns loss."""
    nets.gating.store.zero_grad()
    obs_batch = np.atleast_2d(np.asarray(obs_batch, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    B = obs_batch.shape[0]
    p_raw, tape = nets.gating.forward(obs_batch)
    p = np.clip(p_raw[:, 0], GATE_PROB_CLIP, 1.0 - GATE_PROB_CLIP)
    loss = float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    dp = (-(y / p) + (1.0 - y) / (1.0 - p)) / B
    nets.gating.backward(tape, dp[:, None])
    optimizer_step(nets.gating.store, cfg.lr_gating)
    return loss


def gate_decisions(team: Team, obs):
    """Binary gates from the current gating heads for one joint observation."""
    gates = []
    for nets, o in zip(team.agents, obs):
        p, _ = nets.gating.forward(np.asarray(o, dtype=np.float64))
        gates.append(int(p[0] > 0.5))
    return gates


def _explore_scale(cfg, episode):
    decay_eps = max(1, int(cfg.explore_decay_frac * cfg.episodes))
    frac = min(1.0, episode / decay_eps)
    return cfg.explore_scale + (cfg.explore_final - cfg.explore_scale) * frac


def rollout_actions(team: Team, obs, gate_value=1.0):
    """Deterministic joint action for one step (B = 1)."""
    mask = np.full((1, team.n_agents), gate_value)
    pipe = forward_pipeline(team, [o[None, :] for o in obs], gate_mask=mask)
    return [a[0] for a in pipe.actions]


def train_phase1(env, team: Team, cfg: TrainConfig, gate_value=1.0,
                 progress=None):
    """DDPG-style loop with all gates forced; returns per-episode log rows."""
    rng = np.random.default_rng(cfg.seed)
    buf = ReplayBuffer(cfg.replay_capacity, seed=int(rng.integers(2 ** 31)))
    log = []
    train_steps = 0
    env_steps = 0
    for ep in range(cfg.episodes):
        obs = env.reset()
        scale = _explore_scale(cfg, ep)
        ep_reward = 0.0
        collisions = 0
        steps = 0
        done = False
        while not done:
            actions = rollout_actions(team, obs, gate_value)
            noisy = [exploration_noise(a, scale, rng) for a in actions]
            next_obs, reward, done, info = env.step(noisy)
            buf.push(Experience(obs, noisy, reward, next_obs, done))
            obs = next_obs
            ep_reward += reward
            collisions += info.get("collisions", 0)
            steps += 1
            env_steps += 1
            if len(buf) >= cfg.warmup and env_steps % cfg.update_every == 0:
                batch = buf.sample_batch(cfg.batch_size)
                critic_update(team, batch, cfg, gate_value)
                actor_update(team, batch, cfg, gate_value)
                channel_update(team, batch, cfg, gate_value)
                train_steps += 1
                if train_steps % cfg.target_period == 0:
                    team.copy_targets()
        n = team.n_agents
        sent = int(gate_value) * n * steps
        log.append({
            "episode": ep,
            "reward": ep_reward,
            "length": steps,
            "collisions": collisions,
            "messages_sent": sent,
            "messages_possible": n * steps,
            "pruned_fraction": 1.0 - sent / (n * steps),
        })
        if progress:
            progress(log[-1])
    team.phase1_done = True
    return log


def train_phase2_gating(env, team: Team, cfg: TrainConfig, threshold=None,
                        progress=None):
    """Round-robin gating training; returns log rows with a pruned-fraction
    trace. Requires a completed phase 1 (labels are meaningless otherwise)."""
    if not team.phase1_done:
        raise PhaseOrderError(
            "phase-2 gating training requires completed phase-1 training")
    if threshold is None:
        threshold = ThresholdState(
            cfg.threshold_mode, t_m=cfg.t_m, beta=cfg.beta,
            window_size=cfg.threshold_window, initial=cfg.constant_threshold)
    rng = np.random.default_rng(cfg.seed + 1)
    n = team.n_agents
    datasets = [{"obs": [], "labels": []} for _ in range(n)]
    log = []
    probe_steps = 0
    for ep in range(cfg.phase2_episodes):
        obs = env.reset()
        done = False
        losses = []
        gate_open = 0
        decisions = 0
        pos_labels = 0
        labels_made = 0
        while not done:
            # pruned-fraction trace from the current gating heads
            gates = gate_decisions(team, obs)
            gate_open += sum(gates)
            decisions += n
            # labels are built with every gate open; only the probed agent
            # is silenced inside delta_q
            i = probe_steps % n
            dq = delta_q(team, obs, i)
            threshold.observe(dq)
            y = auxiliary_label(dq, threshold.T)
            pos_labels += y
            labels_made += 1
            ds = datasets[i]
            ds["obs"].append(obs[i])
            ds["labels"].append(y)
            if len(ds["obs"]) > cfg.gating_dataset_cap:
                del ds["obs"][0], ds["labels"][0]
            probe_steps += 1
            if probe_steps % cfg.gating_update_every == 0:
                for j in range(n):
                    dsj = datasets[j]
                    if len(dsj["obs"]) == 0:
                        continue
                    idx = rng.integers(0, len(dsj["obs"]),
                                       size=min(cfg.gating_batch, len(dsj["obs"])))
                    ob = np.stack([dsj["obs"][k] for k in idx])
                    lb = np.array([dsj["labels"][k] for k in idx])
                    losses.append(gating_update(team.agents[j], ob, lb, cfg))
            # act with communication, light exploration to diversify states
            actions = rollout_actions(team, obs, gate_value=1.0)
            noisy = [exploration_noise(a, cfg.phase2_explore, rng)
                     for a in actions]
            obs, _, done, _ = env.step(noisy)
        log.append({
            "episode": ep,
            "pruned_fraction": 1.0 - gate_open / max(1, decisions),
            "gating_loss": float(np.mean(losses)) if losses else float("nan"),
            "threshold": threshold.T,
            "label_pos_fraction": pos_labels / max(1, labels_made),
        })
        if progress:
            progress(log[-1])
    return log


def evaluate(env, team: Team, episodes, use_gates=False, gate_value=1.0,
             record_messages=False):
    """Greedy rollouts; returns per-episode rows and, when asked, the
    (position, gate) events needed for message heatmaps."""
    log = []
    events = []
    n = team.n_agents
    for ep in range(episodes):
        obs = env.reset()
        done = False
        ep_reward = 0.0
        collisions = 0
        steps = 0
        sent = 0
        while not done:
            if use_gates:
                gates = gate_decisions(team, obs)
            else:
                gates = [int(gate_value)] * n
            mask = np.array(gates, dtype=np.float64)[None, :]
            pipe = forward_pipeline(team, [o[None, :] for o in obs],
                                    gate_mask=mask)
            actions = [a[0] for a in pipe.actions]
            if record_messages:
                positions = getattr(env, "agent_positions", lambda: None)()
                if positions is not None:
                    for g, pos in zip(gates, positions):
                        if pos is not None:
                            events.append((pos[0], pos[1], g))
            obs, reward, done, info = env.step(actions)
            ep_reward += reward
            collisions += info.get("collisions", 0)
            sent += sum(gates)
            steps += 1
        log.append({
            "episode": ep,
            "reward": ep_reward,
            "length": steps,
            "collisions": collisions,
            "messages_sent": sent,
            "messages_possible": n * steps,
            "pruned_fraction": 1.0 - sent / (n * steps),
        })
    return (log, events) if record_messages else log
