"""Shared environment contract: reset() -> per-agent observations;
step(joint action) -> (observations, shared reward, done, info)."""


class EpisodeOver(RuntimeError):
    """step() called after the episode terminated."""


class Env:
    """Minimal contract every simulator implements."""

    n_agents = 0
    obs_dims = ()       # per-agent observation dimension
    action_dims = ()    # per-agent action dimension
    horizon = 0

    def reset(self):
        raise NotImplementedError

    def step(self, actions):
        raise NotImplementedError

    def agent_positions(self):
        """2D positions for heatmaps, or None when the task has no plane."""
        return None

    @property
    def agent_specs(self):
        return list(zip(self.obs_dims, self.action_dims))


class NoCommBaselineWrapper(Env):
    """Dynamics-transparent wrapper marking a run as communication-free.

    The trainer reads `comm_enabled` and forces every gate to zero; the
    wrapped environment behaves identically step for step.
    """

    comm_enabled = False

    def __init__(self, env):
        self.env = env

    def reset(self):
        return self.env.reset()

    def step(self, actions):
        return self.env.step(actions)

    def agent_positions(self):
        return self.env.agent_positions()

    # Env's class-level defaults would shadow __getattr__; delegate explicitly
    @property
    def n_agents(self):
        return self.env.n_agents

    @property
    def obs_dims(self):
        return self.env.obs_dims

    @property
    def action_dims(self):
        return self.env.action_dims

    @property
    def horizon(self):
        return self.env.horizon

    def __getattr__(self, name):
        return getattr(self.env, name)


def no_comm_baseline_wrap(env):
    return NoCommBaselineWrapper(env)
