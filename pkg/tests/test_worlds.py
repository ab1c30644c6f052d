import itertools

import numpy as np
import pytest

from dgpirl.mdp import TabularMdp
from dgpirl.worlds import (
    BORDER_VALUE,
    GENERATORS,
    SPEEDS,
    WorldInstance,
    binary_world_reward,
    gen_binary_world,
    gen_highway,
    gen_object_world,
    generate,
    grid_transitions,
    highway_speed_bonus,
    highway_state,
    object_world_reward,
    speeding_probability,
)

SMALL = {
    "object_world": {"grid": 8},
    "binary_world": {"grid": 6},
    "highway": {"length": 12, "n_vehicles": 6},
    "linear_world": {},
}


class TestGridTransitions:
    def test_rows_are_distributions(self):
        t = grid_transitions(5, 0.3)
        np.testing.assert_allclose(t.sum(axis=2), 1.0, atol=1e-12)

    def test_intended_move_probability(self):
        t = grid_transitions(5, 0.3)
        centre = 2 * 5 + 2
        down = centre + 5
        # intended move plus its share of the uniform wind
        assert t[centre, 1, down] == pytest.approx(0.7 + 0.3 / 5)

    def test_edge_moves_stay(self):
        t = grid_transitions(4, 0.0)
        assert t[0, 0, 0] == 1.0  # up from the top-left corner
        assert t[0, 2, 0] == 1.0  # left from the top-left corner


class TestObjectWorld:
    def test_reward_rules(self):
        assert object_world_reward(1, 3) == 1.0
        assert object_world_reward(5, 2) == -1.0
        assert object_world_reward(0, 4) == 0.0
        assert object_world_reward(1, 4) == 0.0

    def test_features_are_manhattan_distances(self):
        w = gen_object_world(grid=8, seed=3)
        cells = list(itertools.product(range(8), range(8)))
        red = [(r, c) for r, c, col in w.meta["dots"] if col == 0]
        for s in (0, 17, 63):
            expect = min(abs(cells[s][0] - r) + abs(cells[s][1] - c) for r, c in red)
            assert w.features[s, 0] == expect

    def test_identical_distance_pairs_share_reward(self):
        w = gen_object_world(grid=12, seed=4)
        seen = {}
        for (dr, db), r in zip(w.features[:, :2], w.true_reward):
            assert seen.setdefault((dr, db), r) == r

    def test_feature_width(self):
        assert gen_object_world(grid=8, n_outer_colors=3, seed=0).features.shape == (64, 5)

    def test_degenerate_layout_errors(self):
        with pytest.raises(RuntimeError):
            gen_object_world(grid=4, dot_density=1e-9, seed=0)


class TestBinaryWorld:
    def test_reward_thresholds(self):
        window = lambda k: np.array([[1.0] * k + [0.0] * (9 - k)])  # noqa: E731
        assert binary_world_reward(window(4))[0] == 1.0
        assert binary_world_reward(window(5))[0] == -1.0
        assert binary_world_reward(window(9))[0] == 0.0

    def test_border_counts_as_not_blue(self):
        f = np.array([[BORDER_VALUE] * 5 + [1.0] * 4])
        assert binary_world_reward(f)[0] == 1.0

    def test_reward_is_function_of_features(self):
        w = gen_binary_world(grid=12, seed=5)
        table = {}
        for f, r in zip(map(tuple, w.features), w.true_reward):
            assert table.setdefault(f, r) == r

    def test_window_layout(self):
        w = gen_binary_world(grid=5, seed=6)
        blue = np.array(w.meta["blue"])
        s = 2 * 5 + 2
        np.testing.assert_array_equal(w.features[s], blue[1:4, 1:4].ravel())
        corner = w.features[0]
        assert corner[0] == BORDER_VALUE and corner[4] == blue[0, 0]


class TestHighway:
    def world(self, **kw):
        return gen_highway(length=12, n_vehicles=6, seed=7, **kw)

    def test_penalty_near_police(self):
        w = gen_highway(length=12, n_vehicles=8, seed=1, police_prob=1.0)
        v = w.meta["vehicles"][0]
        cell = (v["cell"] + 1) % 12
        s = highway_state(v["lane"], cell, 3, 12)
        assert w.true_reward[s] == pytest.approx(highway_speed_bonus(3) - w.meta["penalty"])
        assert s in w.meta["speeding_states"]

    def test_slow_speed_never_penalised(self):
        w = gen_highway(length=12, n_vehicles=8, seed=2, police_prob=1.0)
        slow = np.arange(w.mdp.n_states) % 3 == 0
        np.testing.assert_allclose(w.true_reward[slow], highway_speed_bonus(1))

    def test_no_police_reward_increases_with_speed(self):
        w = self.world(police_prob=0.0)
        for lane, cell in itertools.product(range(3), range(12)):
            r = [w.true_reward[highway_state(lane, cell, s, 12)] for s in SPEEDS]
            assert r[0] < r[1] < r[2]

    def test_vehicles_never_collide(self):
        for seed in range(10):
            w = gen_highway(length=8, n_vehicles=20, seed=seed)
            cells = {(v["lane"], v["cell"]) for v in w.meta["vehicles"]}
            assert len(cells) == 20

    def test_speeding_probability_bounds(self):
        w = self.world()
        n, a = w.mdp.n_states, w.mdp.n_actions
        uniform = np.full((n, a), 1.0 / a)
        p = speeding_probability(w, uniform)
        assert 0.0 <= p <= 1.0
        slower = np.zeros((n, a))
        slower[:, 3] = 1.0
        assert speeding_probability(w, slower) <= p + 1e-12

    def test_speeding_needs_highway(self):
        w = gen_object_world(grid=8, seed=0)
        with pytest.raises(ValueError):
            speeding_probability(w, np.full((64, 5), 0.2))


@pytest.mark.parametrize("name", sorted(GENERATORS))
def test_generators_reproducible(name):
    a = generate(name, 11, **SMALL[name])
    b = generate(name, 11, **SMALL[name])
    assert a.features.tobytes() == b.features.tobytes()
    assert a.true_reward.tobytes() == b.true_reward.tobytes()
    assert a.mdp.transitions.tobytes() == b.mdp.transitions.tobytes()
    c = generate(name, 12, **SMALL[name])
    assert a.features.tobytes() != c.features.tobytes()


@pytest.mark.parametrize("name", sorted(GENERATORS))
@pytest.mark.parametrize("seed", range(3))
def test_generated_mdps_are_valid(name, seed):
    w = generate(name, seed, **SMALL[name])
    TabularMdp(w.mdp.transitions, w.mdp.discount, w.mdp.initial_dist)
    assert w.features.shape[0] == w.mdp.n_states
    assert w.name == name


@pytest.mark.parametrize("name", sorted(GENERATORS))
def test_world_round_trip(name):
    w = generate(name, 1, **SMALL[name])
    back = WorldInstance.from_dict(w.to_dict())
    np.testing.assert_array_equal(back.features, w.features)
    np.testing.assert_array_equal(back.true_reward, w.true_reward)
    np.testing.assert_array_equal(back.mdp.transitions, w.mdp.transitions)
    assert back.meta == w.meta


def test_unknown_generator():
    with pytest.raises(KeyError):
        generate("maze", 0)
