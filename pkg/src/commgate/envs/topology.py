"""Topology file parsing for the packet-routing simulator.

Structured text with three sections:

    [routers]
    A B C            # names, whitespace separated, one or more lines

    [links]
    A B 1.0          # directed link from A to B with capacity 1.0

    [demands]
    A C 0.4 0.8 A-C A-B-C
                     # source, sink, volume range (fractions of the demand's
                     # bottleneck capacity), then one or more dash-separated
                     # candidate paths

'#' starts a comment. Unknown nodes/links are rejected with the offending
line number.
"""

from dataclasses import dataclass, field

import numpy as np


class TopologyError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass
class Demand:
    src: str
    dst: str
    vol_min: float        # relative to the demand's bottleneck capacity
    vol_max: float
    paths: list           # each path: list of (u, v) directed links


@dataclass
class Topology:
    routers: list = field(default_factory=list)
    links: dict = field(default_factory=dict)   # (u, v) -> capacity
    demands: list = field(default_factory=list)

    def bottleneck(self, demand: Demand):
        """Smallest capacity over all links used by the demand's paths."""
        return min(self.links[lk] for path in demand.paths for lk in path)

    def demands_of(self, router):
        return [d for d in self.demands if d.src == router]


def parse_topology(text, name="<topology>"):
    topo = Topology()
    section = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line not in ("[routers]", "[links]", "[demands]"):
                raise TopologyError(f"unknown section {line!r}", lineno)
            section = line[1:-1]
            seen.add(section)
            continue
        if section == "routers":
            for tok in line.split():
                if tok in topo.routers:
                    raise TopologyError(f"duplicate router {tok!r}", lineno)
                topo.routers.append(tok)
        elif section == "links":
            parts = line.split()
            if len(parts) != 3:
                raise TopologyError("link line needs: FROM TO CAPACITY", lineno)
            u, v, cap = parts
            for node in (u, v):
                if node not in topo.routers:
                    raise TopologyError(f"unknown router {node!r}", lineno)
            try:
                cap = float(cap)
            except ValueError:
                raise TopologyError(f"bad capacity {cap!r}", lineno) from None
            if cap <= 0:
                raise TopologyError(f"capacity must be > 0, got {cap}", lineno)
            if (u, v) in topo.links:
                raise TopologyError(f"duplicate link {u}->{v}", lineno)
            topo.links[(u, v)] = cap
        elif section == "demands":
            parts = line.split()
            if len(parts) < 5:
                raise TopologyError(
                    "demand line needs: SRC DST VOLMIN VOLMAX PATH...", lineno)
            src, dst, lo, hi, *path_specs = parts
            for node in (src, dst):
                if node not in topo.routers:
                    raise TopologyError(f"unknown router {node!r}", lineno)
            try:
                lo, hi = float(lo), float(hi)
            except ValueError:
                raise TopologyError("bad volume range", lineno) from None
            if not 0 < lo <= hi:
                raise TopologyError(f"need 0 < VOLMIN <= VOLMAX, got {lo}, {hi}",
                                    lineno)
            paths = []
            for spec in path_specs:
                nodes = spec.split("-")
                if nodes[0] != src or nodes[-1] != dst:
                    raise TopologyError(
                        f"path {spec!r} does not connect {src} to {dst}", lineno)
                path = []
                for u, v in zip(nodes[:-1], nodes[1:]):
                    if u not in topo.routers or v not in topo.routers:
                        raise TopologyError(
                            f"path {spec!r} uses unknown router", lineno)
                    if (u, v) not in topo.links:
                        raise TopologyError(
                            f"path {spec!r} uses missing link {u}->{v}", lineno)
                    path.append((u, v))
                paths.append(path)
            topo.demands.append(Demand(src, dst, lo, hi, paths))
        else:
            raise TopologyError("content before any section", lineno)
    for want in ("routers", "links", "demands"):
        if want not in seen:
            raise TopologyError(f"missing [{want}] section in {name}")
    if not topo.demands:
        raise TopologyError(f"no demands defined in {name}")
    return topo


def load_topology(path):
    with open(path) as fh:
        return parse_topology(fh.read(), name=str(path))


def mlu(link_flows, topology: Topology):
    """Maximum link utilization: max over links of flow / capacity."""
    worst = 0.0
    for lk, flow in link_flows.items():
        if flow < 0:
            raise ValueError(f"negative flow on {lk}")
        worst = max(worst, flow / topology.links[lk])
    return worst
