"""Benchmark generators: Object World, Binary World, a reduced Highway, and a linear-reward grid."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from dgpirl.mdp import TabularMdp, occupancy

# up, down, left, right, stay
GRID_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))


@dataclass(frozen=True, eq=False)
class WorldInstance:
    mdp: TabularMdp
    features: np.ndarray
    true_reward: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.array(self.features, dtype=float)
        r = np.array(self.true_reward, dtype=float)
        if x.ndim != 2 or x.shape[0] != self.mdp.n_states or not np.all(np.isfinite(x)):
            raise ValueError("features must be a finite (n_states, m0) matrix")
        if r.shape != (self.mdp.n_states,) or not np.all(np.isfinite(r)):
            raise ValueError("true reward must be a finite vector over states")
        x.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "true_reward", r)

    @property
    def name(self) -> str:
        return self.meta.get("generator", "world")

    def to_dict(self) -> dict:
        return {
            "mdp": self.mdp.to_dict(),
            "features": self.features.tolist(),
            "true_reward": self.true_reward.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldInstance":
        return cls(TabularMdp.from_dict(d["mdp"]), d["features"], d["true_reward"], d["meta"])


def grid_transitions(grid: int, wind: float) -> np.ndarray:
    """Five-action gridworld dynamics.

    The chosen move happens with probability ``1 - wind``; otherwise one of
    the five moves is drawn uniformly.  Moves off the edge leave the agent in
    place.
    """
    n = grid * grid
    dest = np.empty((n, len(GRID_MOVES)), dtype=np.int64)
    for row, col in itertools.product(range(grid), range(grid)):
        for a, (dr, dc) in enumerate(GRID_MOVES):
            rr, cc = row + dr, col + dc
            if not (0 <= rr < grid and 0 <= cc < grid):
                rr, cc = row, col
            dest[row * grid + col, a] = rr * grid + cc
    p = np.zeros((n, len(GRID_MOVES), n))
    n_moves = len(GRID_MOVES)
    for s in range(n):
        for a in range(n_moves):
            p[s, a, dest[s, a]] += 1.0 - wind
            for b in range(n_moves):
                p[s, a, dest[s, b]] += wind / n_moves
    return p


def _cells(grid: int) -> np.ndarray:
    return np.array(list(itertools.product(range(grid), range(grid))))


def object_world_reward(d_red, d_blue) -> np.ndarray:
    """+1 within 1 of red and 3 of blue, -1 within 3 of blue only, else 0."""
    d_red, d_blue = np.asarray(d_red), np.asarray(d_blue)
    near_blue = d_blue <= 3
    return np.where(near_blue & (d_red <= 1), 1.0, np.where(near_blue, -1.0, 0.0))


def gen_object_world(
    grid: int = 16,
    n_outer_colors: int = 2,
    dot_density: float = 0.1,
    wind: float = 0.3,
    seed=0,
    discount: float = 0.9,
) -> WorldInstance:
    """Random dots of red, blue and distractor colours on an ``grid x grid`` board.

    Features are Manhattan distances to the nearest dot of each colour
    (red, blue, then distractors); a colour with no dot gets ``2 * grid``.
    """
    if grid < 4 or not 0.0 < dot_density < 1.0:
        raise ValueError("need grid >= 4 and dot_density in (0, 1)")
    rng = np.random.default_rng(seed)
    n_colors = 2 + n_outer_colors
    for _ in range(10):
        has_dot = rng.random((grid, grid)) < dot_density
        color = rng.integers(n_colors, size=(grid, grid))
        if np.any(has_dot & (color == 0)) and np.any(has_dot & (color == 1)):
            break
    else:
        raise RuntimeError("could not place both a red and a blue dot in 10 attempts")
    cells = _cells(grid)
    features = np.full((grid * grid, n_colors), 2.0 * grid)
    dots = []
    for c in range(n_colors):
        where = np.argwhere(has_dot & (color == c))
        dots.extend([int(r), int(k), c] for r, k in where)
        if len(where):
            features[:, c] = np.abs(cells[:, None, :] - where[None, :, :]).sum(axis=2).min(axis=1)
    reward = object_world_reward(features[:, 0], features[:, 1])
    meta = {
        "generator": "object_world",
        "grid": grid,
        "seed": _seed_meta(seed),
        "n_outer_colors": n_outer_colors,
        "dot_density": dot_density,
        "wind": wind,
        "distance": "manhattan",
        "dots": dots,
    }
    return WorldInstance(TabularMdp(grid_transitions(grid, wind), discount), features, reward, meta)


BORDER_VALUE = 0.5


def binary_world_reward(features) -> np.ndarray:
    """+1 for exactly four blue cells in the window, -1 for five.  Off-grid cells are not blue."""
    blues = (np.asarray(features) == 1.0).sum(axis=1)
    return np.where(blues == 4, 1.0, np.where(blues == 5, -1.0, 0.0))


def gen_binary_world(grid: int = 12, seed=0, wind: float = 0.3, discount: float = 0.9) -> WorldInstance:
    """Each cell blue (1) or red (0) with probability 1/2; features are the 3x3 window.

    Window cells are read row-major; cells off the board read ``0.5``.
    """
    if grid < 3:
        raise ValueError("need grid >= 3")
    rng = np.random.default_rng(seed)
    blue = (rng.random((grid, grid)) < 0.5).astype(float)
    padded = np.full((grid + 2, grid + 2), BORDER_VALUE)
    padded[1:-1, 1:-1] = blue
    features = np.array(
        [padded[r : r + 3, c : c + 3].ravel() for r, c in itertools.product(range(grid), range(grid))]
    )
    meta = {
        "generator": "binary_world",
        "grid": grid,
        "seed": _seed_meta(seed),
        "wind": wind,
        "border_value": BORDER_VALUE,
        "blue": blue.astype(int).tolist(),
    }
    return WorldInstance(
        TabularMdp(grid_transitions(grid, wind), discount), features, binary_world_reward(features), meta
    )


def gen_linear_world(
    grid: int = 4, n_features: int = 4, wind: float = 0.3, seed=0, discount: float = 0.9
) -> WorldInstance:
    """Gridworld whose reward is exactly linear in its features.

    The last feature is a constant 1; weights are scaled so rewards span [0, 1].
    """
    rng = np.random.default_rng(seed)
    n = grid * grid
    x = np.hstack([rng.random((n, n_features - 1)), np.ones((n, 1))])
    w = rng.normal(size=n_features - 1)
    raw = x[:, :-1] @ w
    span = raw.max() - raw.min()
    w = np.append(w, -raw.min()) / span
    meta = {
        "generator": "linear_world",
        "grid": grid,
        "seed": _seed_meta(seed),
        "wind": wind,
        "weights": w.tolist(),
    }
    return WorldInstance(TabularMdp(grid_transitions(grid, wind), discount), x, x @ w, meta)


# --- highway -----------------------------------------------------------------

HIGHWAY_ACTIONS = ("left", "right", "faster", "slower", "keep")
VEHICLE_TYPES = (
    ("civilian", "car"),
    ("civilian", "motorcycle"),
    ("police", "car"),
    ("police", "motorcycle"),
)
LANE_GROUPS = ("same", "left", "right", "any")
SPEEDS = (1, 2, 3)


def highway_state(lane: int, cell: int, speed: int, length: int) -> int:
    return (lane * length + cell) * len(SPEEDS) + (speed - 1)


def highway_speed_bonus(speed) -> np.ndarray:
    return np.asarray(speed, dtype=float) / 3.0


def gen_highway(
    lanes: int = 3,
    length: int = 32,
    n_vehicles: int = 12,
    seed=0,
    police_prob: float = 0.25,
    penalty: float = 2.0,
    wind: float = 0.1,
    discount: float = 0.9,
) -> WorldInstance:
    """Reduced highway in the frame moving with traffic.

    Traffic holds still in this frame and the road wraps around.  The robot
    car advances ``speed - 1`` cells per step.  Actions change lane or speed
    by one; with probability ``wind`` the car keeps its lane and speed
    instead.  Reward is ``speed / 3``, minus ``penalty`` when driving at
    speed 3 within 2 cells of any police vehicle.
    """
    if lanes != 3:
        raise ValueError("the highway has three lanes")
    if length < 8:
        raise ValueError("need length >= 8")
    if n_vehicles > lanes * length:
        raise ValueError("too many vehicles for the road")
    rng = np.random.default_rng(seed)
    # distinct cells, so placements never collide
    slots = rng.choice(lanes * length, size=n_vehicles, replace=False)
    police = rng.random(n_vehicles) < police_prob
    moto = rng.random(n_vehicles) < 0.5
    vehicles = [
        {"lane": int(s // length), "cell": int(s % length), "type": int(2 * p + m)}
        for s, p, m in zip(slots, police, moto)
    ]

    n = lanes * length * len(SPEEDS)
    p = np.zeros((n, len(HIGHWAY_ACTIONS), n))
    for lane, cell, speed in itertools.product(range(lanes), range(length), SPEEDS):
        s = highway_state(lane, cell, speed, length)
        for a, name in enumerate(HIGHWAY_ACTIONS):
            for act, prob in ((name, 1.0 - wind), ("keep", wind)):
                nl, ns = lane, speed
                if act == "left":
                    nl = max(lane - 1, 0)
                elif act == "right":
                    nl = min(lane + 1, lanes - 1)
                elif act == "faster":
                    ns = min(speed + 1, SPEEDS[-1])
                elif act == "slower":
                    ns = max(speed - 1, SPEEDS[0])
                nc = (cell + ns - 1) % length
                p[s, a, highway_state(nl, nc, ns, length)] += prob

    cap = length // 2
    lane_of = np.array([v["lane"] for v in vehicles], dtype=np.int64)
    cell_of = np.array([v["cell"] for v in vehicles], dtype=np.int64)
    type_of = np.array([v["type"] for v in vehicles], dtype=np.int64)
    feats = np.zeros((n, 6 + len(VEHICLE_TYPES) * len(LANE_GROUPS) * 2))
    reward = np.zeros(n)
    near_police = np.zeros(n, dtype=bool)
    for lane, cell, speed in itertools.product(range(lanes), range(length), SPEEDS):
        s = highway_state(lane, cell, speed, length)
        feats[s, speed - 1] = 1.0
        feats[s, 3 + lane] = 1.0
        ahead = (cell_of - cell) % length
        behind = (cell - cell_of) % length
        groups = {
            "same": lane_of == lane,
            "left": lane_of == lane - 1,
            "right": lane_of == lane + 1,
            "any": np.ones_like(lane_of, dtype=bool),
        }
        col = 6
        for t in range(len(VEHICLE_TYPES)):
            for g in LANE_GROUPS:
                sel = groups[g] & (type_of == t)
                for dist in (ahead, behind):
                    feats[s, col] = min(int(dist[sel].min()), cap) / cap if sel.any() else 1.0
                    col += 1
        is_police = type_of >= 2
        near = bool(np.any(is_police & (np.minimum(ahead, behind) <= 2)))
        near_police[s] = near
        reward[s] = highway_speed_bonus(speed) - (penalty if near and speed == 3 else 0.0)
    meta = {
        "generator": "highway",
        "lanes": lanes,
        "length": length,
        "seed": _seed_meta(seed),
        "wind": wind,
        "penalty": penalty,
        "vehicles": vehicles,
        "speeding_states": np.flatnonzero(near_police & (np.arange(n) % 3 == 2)).tolist(),
    }
    return WorldInstance(TabularMdp(p, discount), feats, reward, meta)


def speeding_probability(world: WorldInstance, policy) -> float:
    """Occupancy mass the policy puts on speeding-near-police states."""
    if world.name != "highway":
        raise ValueError("speeding probability is defined for highway worlds only")
    d = occupancy(world.mdp, policy)
    return float(d[world.meta["speeding_states"]].sum() / d.sum())


GENERATORS = {
    "object_world": gen_object_world,
    "binary_world": gen_binary_world,
    "highway": gen_highway,
    "linear_world": gen_linear_world,
}


def generate(name: str, seed, **params) -> WorldInstance:
    if name not in GENERATORS:
        raise KeyError(f"unknown world generator {name!r}; choose from {sorted(GENERATORS)}")
    return GENERATORS[name](seed=seed, **params)


def _seed_meta(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else str(seed)
