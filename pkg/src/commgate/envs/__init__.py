from importlib import resources

from .base import Env, EpisodeOver, NoCommBaselineWrapper, no_comm_baseline_wrap
from .routing import RoutingEnv
from .topology import Demand, Topology, TopologyError, load_topology, mlu, \
    parse_topology
from .traffic import CarState, TrafficConfig, TrafficEnv

ENV_NAMES = ("traffic4", "traffic8", "traffic16",
             "routing-simple", "routing-moderate")


def bundled_topology(name):
    fname = {"simple": "simple_routing.topo",
             "moderate": "moderate_routing.topo"}[name]
    text = resources.files("commgate.envs").joinpath(f"data/{fname}").read_text()
    return parse_topology(text, name=fname)


def make_env(name, seed=0, **kw):
    if name.startswith("traffic"):
        return TrafficEnv(n_cars=int(name[len("traffic"):]), seed=seed, **kw)
    if name.startswith("routing-"):
        topo = bundled_topology(name[len("routing-"):])
        return RoutingEnv(topo, seed=seed, **kw)
    raise ValueError(f"unknown environment {name!r}; expected one of {ENV_NAMES}")
