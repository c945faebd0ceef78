"""Traffic-junction simulator.

Cars drive straight routes on a unit plane: two perpendicular roads crossing
at (0.5, 0.5), one lane per direction with a small lateral offset so only
genuine crossings and rear-ends can collide. The shared reward per step is

    r(t) = sum_i(-0.1 * age_i) + (-10.0) * collisions + 30.0 * exits

over cars still in the simulation at the start of the step. A collision
penalizes the reward but does not alter the motion. Episodes end when every
car has exited or after 100 steps.
"""

from dataclasses import dataclass

import numpy as np

from .base import EpisodeOver, Env

N_ARMS = 4
R_TIME = -0.1
R_COLL = -10.0
R_EXIT = 30.0
LANE_OFFSET = 0.015


@dataclass
class TrafficConfig:
    n_cars: int = 4
    horizon: int = 100
    v_max: float = 0.05
    collision_radius: float = 0.025
    spawn_spacing: float = 0.08
    spawn_jitter: float = 0.02
    spawn_offset: float = 0.0        # approach length: cars enter at this
                                     # route position instead of the arm end
    staggered_spawns: bool = False   # all cars spawn at t=0 by default
    random_spawn_delay: int = 0      # entry time uniform in [0, delay]

    def __post_init__(self):
        if self.n_cars not in (4, 8, 16):
            raise ValueError(f"n_cars must be one of 4, 8, 16; got {self.n_cars}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0 < self.v_max <= 1:
            raise ValueError("v_max must be in (0, 1]")
        if self.collision_radius <= 0:
            raise ValueError("collision_radius must be > 0")
        if self.spawn_spacing < 2 * self.collision_radius + self.spawn_jitter:
            raise ValueError("spawn spacing too small to guarantee separation")
        if self.spawn_offset < 0:
            raise ValueError("spawn_offset must be >= 0")
        slots = (self.n_cars + N_ARMS - 1) // N_ARMS
        last = self.spawn_offset + (slots - 1) * self.spawn_spacing \
            + self.spawn_jitter
        if last >= 0.5 - self.collision_radius:
            raise ValueError("spawn region would overlap the junction")
        if self.random_spawn_delay < 0:
            raise ValueError("random_spawn_delay must be >= 0")
        if self.random_spawn_delay and self.staggered_spawns:
            raise ValueError("choose either staggered or random spawn times")


@dataclass
class CarState:
    route: int            # arm index 0..3
    position: float       # progress along the route, exits at >= 1
    age: int = 0          # steps since spawn
    exited: bool = False
    spawn_time: int = 0   # step at which the car enters the simulation


def route_xy(route, position):
    """2D location of a route parameter; lanes are offset per direction."""
    p = position
    if route == 0:    # eastbound
        return (p, 0.5 - LANE_OFFSET)
    if route == 1:    # northbound
        return (0.5 + LANE_OFFSET, p)
    if route == 2:    # westbound
        return (1.0 - p, 0.5 + LANE_OFFSET)
    if route == 3:    # southbound
        return (0.5 - LANE_OFFSET, 1.0 - p)
    raise ValueError(f"unknown route {route}")


def count_collisions(cars, radius, now=None):
    """Pairs of present (spawned, non-exited) cars overlapping within radius."""
    pts = [(route_xy(c.route, c.position), k) for k, c in enumerate(cars)
           if not c.exited and (now is None or c.spawn_time <= now)]
    hits = 0
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            (xa, ya), _ = pts[a]
            (xb, yb), _ = pts[b]
            if (xa - xb) ** 2 + (ya - yb) ** 2 < radius ** 2:
                hits += 1
    return hits


class TrafficEnv(Env):
    """Cooperative driving through one junction; shared reward."""

    def __init__(self, n_cars=4, seed=0, config=None, **cfg_kw):
        if config is not None and cfg_kw:
            raise ValueError("pass either a config or keyword overrides")
        self.cfg = config or TrafficConfig(n_cars=n_cars, **cfg_kw)
        if config is not None and n_cars != self.cfg.n_cars:
            raise ValueError("n_cars disagrees with config")
        self.n_agents = self.cfg.n_cars
        self.obs_dims = tuple([1 + N_ARMS] * self.n_agents)
        self.action_dims = tuple([1] * self.n_agents)
        self.horizon = self.cfg.horizon
        self.rng = np.random.default_rng(seed)
        self.cars = None
        self.t = 0
        self.done = True

    def reset(self):
        cfg = self.cfg
        self.cars = []
        for i in range(self.n_agents):
            arm = i % N_ARMS
            slot = i // N_ARMS
            pos = cfg.spawn_offset + slot * cfg.spawn_spacing + \
                self.rng.uniform(0.0, cfg.spawn_jitter)
            spawn_time = slot * 10 if cfg.staggered_spawns else 0
            if cfg.staggered_spawns:
                pos -= slot * cfg.spawn_spacing  # staggered cars start at the entry
            elif cfg.random_spawn_delay:
                # random entry times decouple a car's own position from the
                # global clock, so other cars' progress is unobservable locally
                spawn_time = int(self.rng.integers(0,
                                                   cfg.random_spawn_delay + 1))
            self.cars.append(CarState(route=arm, position=pos,
                                      spawn_time=spawn_time))
        self.t = 0
        self.done = False
        return self._observations()

    def _observations(self):
        obs = []
        for car in self.cars:
            onehot = np.zeros(N_ARMS)
            onehot[car.route] = 1.0
            obs.append(np.concatenate([[min(car.position, 1.0)], onehot]))
        return obs

    def step(self, actions):
        if self.done:
            raise EpisodeOver("step() after the episode ended")
        if len(actions) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} actions")
        cfg = self.cfg
        clamped = 0
        time_penalty = 0.0
        exits = 0
        for car, a in zip(self.cars, actions):
            if car.exited or car.spawn_time > self.t:
                continue
            a = float(np.asarray(a).reshape(-1)[0])
            if not 0.0 <= a <= 1.0:
                a = min(max(a, 0.0), 1.0)
                clamped += 1
            car.age += 1
            time_penalty += R_TIME * car.age
            car.position += a * cfg.v_max
            if car.position >= 1.0:
                car.exited = True
                exits += 1
        collisions = count_collisions(self.cars, cfg.collision_radius, now=self.t)
        reward = time_penalty + R_COLL * collisions + R_EXIT * exits
        self.t += 1
        self.done = all(c.exited for c in self.cars) or self.t >= cfg.horizon
        info = {
            "collisions": collisions,
            "exits": exits,
            "clamped_actions": clamped,
            "time_penalty": time_penalty,
            "active": sum(not c.exited for c in self.cars),
        }
        return self._observations(), reward, self.done, info

    def car_states(self):
        """Copies of the raw car states, for independent reward recounting."""
        return [CarState(c.route, c.position, c.age, c.exited, c.spawn_time)
                for c in self.cars]

    def agent_positions(self):
        return [None if c.exited or c.spawn_time > self.t
                else route_xy(c.route, c.position) for c in self.cars]
