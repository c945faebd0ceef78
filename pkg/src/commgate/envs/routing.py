"""Packet-routing simulator at flow-rate granularity.

Each edge router splits its aggregated demand over its candidate paths; the
split comes from a per-demand softmax over the router's action vector, so
any real-valued action yields a valid split. The shared reward is
1 - MLU, where MLU is the maximum link utilization over the whole network.
"""

import numpy as np

from .base import EpisodeOver, Env
from .topology import Topology, mlu

HISTORY_LEN = 10


def _softmax(x, temperature=1.0):
    z = np.asarray(x, dtype=np.float64) * temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


class RoutingEnv(Env):
    """Routers cooperating to minimize the network's maximum link utilization."""

    def __init__(self, topology: Topology, seed=0, horizon=50,
                 obs_noise=0.0, softmax_temperature=1.0):
        self.topo = topology
        self.routers = list(topology.routers)
        self.n_agents = len(self.routers)
        self.horizon = horizon
        self.obs_noise = obs_noise
        self.softmax_temperature = softmax_temperature
        self.rng = np.random.default_rng(seed)
        self.link_order = list(topology.links)

        self._demands = [topology.demands_of(r) for r in self.routers]
        # routers without demands still act through a single ignored slot
        self.action_dims = tuple(
            max(1, sum(len(d.paths) for d in ds)) for ds in self._demands)
        self._direct = []
        for r in self.routers:
            self._direct.append([lk for lk in self.link_order if r in lk])
        self.obs_dims = tuple(
            len(ds) + HISTORY_LEN * len(direct) + 1 + adim
            for ds, direct, adim in zip(self._demands, self._direct,
                                        self.action_dims))
        self.done = True
        self.t = 0

    def reset(self):
        self._volumes = {}
        for d in self.topo.demands:
            bott = self.topo.bottleneck(d)
            self._volumes[id(d)] = self.rng.uniform(d.vol_min, d.vol_max) * bott
        self._history = {lk: [0.0] * HISTORY_LEN for lk in self.link_order}
        self._last_util = {lk: 0.0 for lk in self.link_order}
        self._last_action = [np.zeros(adim) for adim in self.action_dims]
        self.t = 0
        self.done = False
        return self._observations()

    def _observations(self):
        obs = []
        for i in range(self.n_agents):
            parts = [np.array([self._volumes[id(d)] for d in self._demands[i]])]
            hist = np.array([self._history[lk] for lk in self._direct[i]])
            if self.obs_noise > 0:
                hist = hist + self.rng.normal(scale=self.obs_noise,
                                              size=hist.shape)
            parts.append(hist.reshape(-1))
            direct_last = [self._last_util[lk] for lk in self._direct[i]]
            parts.append(np.array([np.mean(direct_last) if direct_last else 0.0]))
            parts.append(self._last_action[i])
            obs.append(np.concatenate(parts))
        return obs

    def split_fractions(self, actions):
        """Per-demand routed fractions from raw action vectors."""
        fractions = {}
        for i, ds in enumerate(self._demands):
            a = np.asarray(actions[i], dtype=np.float64).reshape(-1)
            if a.shape[0] != self.action_dims[i]:
                raise ValueError(
                    f"router {self.routers[i]}: action length {a.shape[0]} != "
                    f"{self.action_dims[i]} candidate paths")
            off = 0
            for d in ds:
                seg = a[off:off + len(d.paths)]
                fractions[id(d)] = _softmax(seg, self.softmax_temperature)
                off += len(d.paths)
        return fractions

    def link_flows(self, fractions):
        flows = {lk: 0.0 for lk in self.link_order}
        for d in self.topo.demands:
            vol = self._volumes[id(d)]
            for path, frac in zip(d.paths, fractions[id(d)]):
                for lk in path:
                    flows[lk] += vol * frac
        return flows

    def step(self, actions):
        if self.done:
            raise EpisodeOver("step() after the episode ended")
        if len(actions) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} actions")
        fractions = self.split_fractions(actions)
        flows = self.link_flows(fractions)
        max_util = mlu(flows, self.topo)
        reward = 1.0 - max_util
        for lk in self.link_order:
            util = flows[lk] / self.topo.links[lk]
            self._history[lk].pop(0)
            self._history[lk].append(util)
            self._last_util[lk] = util
        self._last_action = [np.asarray(a, dtype=np.float64).reshape(-1).copy()
                             for a in actions]
        self.t += 1
        self.done = self.t >= self.horizon
        info = {"mlu": max_util, "link_flows": flows,
                "fractions": {k: v.copy() for k, v in fractions.items()}}
        return self._observations(), reward, self.done, info
