import numpy as np
import pytest

from clutternav import critic as cr
from clutternav import sim
from clutternav.constants import FEATURE_DIM, N_MAX
from clutternav.errors import (
    InsufficientDataError,
    MaskedActionError,
    NoValidRowsError,
)
from clutternav.features import StateMatrix

from conftest import action_value_net, linear_net, make_state


class TestForward:
    def test_zero_weights_output_is_bias(self, rng):
        state = make_state(rng, 5)
        params = cr.CriticParams(
            w1=np.zeros((cr.INPUT_WIDTH, 4)), b1=np.zeros(4),
            w2=np.zeros((4, 3)), b2=np.zeros(3),
            w3=np.zeros((3, 1)), b3=np.array([2.5]),
        )
        for row in state.valid_rows():
            assert cr.q_forward(params, state, int(row)) == 2.5

    def test_bit_identical_repeat(self, rng):
        params = cr.init_critic(3)
        state = make_state(rng, 9)
        action = int(state.valid_rows()[0])
        assert cr.q_forward(params, state, action) == cr.q_forward(params, state, action)

    def test_action_channel_matches_manual_affine(self, rng):
        # All-zero state: Q differs across actions only via the one-hot
        # column of the first layer; recompute by hand.
        params = cr.init_critic(11)
        rows = np.zeros((N_MAX, FEATURE_DIM))
        mask = np.zeros(N_MAX, dtype=bool)
        mask[[2, 8]] = True
        state = StateMatrix(rows=rows, mask=mask, id_map={2: 2, 8: 8})

        def manual(action):
            z1 = params.w1[cr.STATE_WIDTH + action] + params.b1
            h1 = np.logaddexp(0.0, z1)
            z2 = h1 @ params.w2 + params.b2
            h2 = np.logaddexp(0.0, z2)
            return float(h2 @ params.w3[:, 0] + params.b3[0])

        qa = cr.q_forward(params, state, 2)
        qb = cr.q_forward(params, state, 8)
        assert qa != qb
        assert qa == pytest.approx(manual(2), abs=1e-12)
        assert qb == pytest.approx(manual(8), abs=1e-12)

    def test_masked_action_rejected(self, rng):
        state = make_state(rng, 3)
        masked = next(i for i in range(N_MAX) if not state.mask[i])
        params = cr.init_critic(0)
        with pytest.raises(MaskedActionError):
            cr.q_forward(params, state, masked)
        with pytest.raises(MaskedActionError):
            cr.q_forward(params, state, N_MAX + 3)


class TestQAll:
    def test_single_valid_row(self, rng):
        params = cr.init_critic(1)
        state = make_state(rng, 1)
        out = cr.q_all(params, state)
        assert out.shape == (1,)
        assert out[0] == cr.q_forward(params, state, int(state.valid_rows()[0]))

    def test_exact_elementwise_match(self, rng):
        params = cr.init_critic(2)
        state = make_state(rng, 3)
        out = cr.q_all(params, state)
        expect = [cr.q_forward(params, state, int(r)) for r in state.valid_rows()]
        assert np.array_equal(out, np.array(expect))

    def test_masked_rows_excluded_from_argmax(self):
        # Best row by value is masked out; greedy must pick among valid.
        params = action_value_net({1: 5.0, 2: 1.0, 3: 2.0})
        rows = np.zeros((N_MAX, FEATURE_DIM))
        mask = np.zeros(N_MAX, dtype=bool)
        mask[[2, 3]] = True
        state = StateMatrix(rows=rows, mask=mask, id_map={2: 2, 3: 3})
        assert len(cr.q_all(params, state)) == 2
        assert cr.greedy_action(params, state) == 3

    def test_greedy_tie_breaks_to_lowest_id(self):
        params = action_value_net({4: 1.0, 7: 1.0})
        rows = np.zeros((N_MAX, FEATURE_DIM))
        mask = np.zeros(N_MAX, dtype=bool)
        mask[[4, 7]] = True
        # Row 7 maps to the smaller object id.
        state = StateMatrix(rows=rows, mask=mask, id_map={4: 20, 7: 10})
        assert cr.greedy_action(params, state) == 7

    def test_no_valid_rows(self):
        params = cr.init_critic(0)
        state = StateMatrix(
            rows=np.zeros((N_MAX, FEATURE_DIM)),
            mask=np.zeros(N_MAX, dtype=bool),
            id_map={},
        )
        with pytest.raises(NoValidRowsError):
            cr.q_all(params, state)


class TestInputGradient:
    def test_linear_critic_gradient_is_weights(self, rng):
        w = rng.normal(size=cr.INPUT_WIDTH)
        params = linear_net(w)
        state = make_state(rng, 6)
        action = int(state.valid_rows()[2])
        grad = cr.input_gradient(params, state, action)
        assert np.allclose(grad, w[: cr.STATE_WIDTH].reshape(N_MAX, FEATURE_DIM), atol=1e-12)

    def test_matches_central_differences(self, rng):
        h = 1e-5
        for _ in range(3):
            params = cr.init_critic(rng.integers(2**32))
            state = make_state(rng, int(rng.integers(1, 31)))
            action = int(rng.choice(state.valid_rows()))
            grad = cr.input_gradient(params, state, action)
            fd = np.zeros_like(grad)
            for i in range(N_MAX):
                for j in range(FEATURE_DIM):
                    up = state.rows.copy()
                    up[i, j] += h
                    dn = state.rows.copy()
                    dn[i, j] -= h
                    fd[i, j] = (
                        cr.q_forward(params, StateMatrix(up, state.mask, state.id_map), action)
                        - cr.q_forward(params, StateMatrix(dn, state.mask, state.id_map), action)
                    ) / (2 * h)
            rel = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-10)
            assert rel.max() < 1e-5

    def test_relu_dead_units_zero_gradient(self, rng):
        params = cr.init_critic(4, activation="relu")
        params.b1[:] = -100.0  # every first-layer unit off everywhere nearby
        state = make_state(rng, 5)
        grad = cr.input_gradient(params, state, int(state.valid_rows()[0]))
        assert np.all(grad == 0.0)

    def test_action_channel_not_included(self, rng):
        params = cr.init_critic(5)
        state = make_state(rng, 4)
        grad = cr.input_gradient(params, state, int(state.valid_rows()[0]))
        assert grad.shape == (N_MAX, FEATURE_DIM)


class TestReward:
    def test_no_disturbance(self):
        assert cr.reward(0, 0.0, 0.1) == 0.0

    def test_arithmetic(self):
        assert cr.reward(2, 0.5, 0.1) == pytest.approx(-2.05, abs=1e-15)

    def test_paper_weight(self):
        assert cr.reward(0, 1.0, 0.1) == pytest.approx(-0.1, abs=1e-15)

    def test_never_positive(self, rng):
        for _ in range(100):
            o_d = int(rng.integers(0, 10))
            d = float(rng.uniform(0, 2))
            r = cr.reward(o_d, d)
            assert r <= 0.0
            assert (r == 0.0) == (o_d == 0 and d == 0.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            cr.reward(-1, 0.0)
        with pytest.raises(ValueError):
            cr.reward(0, -0.5)


class TestReplayBuffer:
    def dummy(self, k):
        state = StateMatrix(
            rows=np.zeros((N_MAX, FEATURE_DIM)),
            mask=np.zeros(N_MAX, dtype=bool),
            id_map={},
        )
        return cr.Transition(state, k, float(k), state, True)

    def test_fifo_eviction(self):
        buf = cr.ReplayBuffer(capacity=1000, seed=0)
        for k in range(1500):
            buf.push(self.dummy(k))
        assert len(buf) == 1000
        actions = {t.action for t in buf._items}
        assert actions == set(range(500, 1500))

    def test_sampling_deterministic(self):
        a = cr.ReplayBuffer(capacity=10, seed=3)
        b = cr.ReplayBuffer(capacity=10, seed=3)
        for k in range(10):
            a.push(self.dummy(k))
            b.push(self.dummy(k))
        sa = [t.action for t in a.sample(32)]
        sb = [t.action for t in b.sample(32)]
        assert sa == sb

    def test_sampling_uniform(self):
        buf = cr.ReplayBuffer(capacity=10, seed=1)
        for k in range(10):
            buf.push(self.dummy(k))
        counts = np.zeros(10)
        for t in buf.sample(20000):
            counts[t.action] += 1
        # 5 sigma around 2000 per bin
        assert np.all(np.abs(counts - 2000) < 5 * np.sqrt(2000 * 0.9))


class TestCollect:
    def small_factory(self, seed):
        return sim.spawn_layered_clutter(seed, n_objects=6, layers=2)

    def test_actions_valid_and_counted(self):
        buf = cr.collect_demonstrations(self.small_factory, None, 60, 1.0, seed=0)
        assert len(buf) == 60
        for t in buf._items:
            assert t.state.mask[t.action]
            assert t.reward <= 0.0

    def test_greedy_deterministic(self):
        params = cr.init_critic(7)
        runs = []
        for _ in range(2):
            buf = cr.collect_demonstrations(self.small_factory, params, 24, 0.0, seed=5)
            runs.append([t.action for t in buf._items])
        assert runs[0] == runs[1]

    def test_terminal_flag_on_last_removal(self):
        buf = cr.collect_demonstrations(self.small_factory, None, 12, 1.0, seed=2)
        transitions = list(buf._items)
        # First episode has exactly 6 transitions; the 6th is terminal.
        assert [t.done for t in transitions[:6]] == [False] * 5 + [True]
        assert transitions[5].next_state.n_valid() == 0


class TestTdTarget:
    def transition(self, done, next_rows=(1, 2)):
        state = make_state(np.random.default_rng(0), 3)
        rows = np.zeros((N_MAX, FEATURE_DIM))
        mask = np.zeros(N_MAX, dtype=bool)
        for r in next_rows:
            mask[r] = True
        nxt = StateMatrix(rows=rows, mask=mask, id_map={r: r for r in next_rows})
        return cr.Transition(state, int(state.valid_rows()[0]), -1.0, nxt, done)

    def test_terminal(self):
        params = cr.init_critic(0)
        assert cr.td_target(self.transition(True), params, 0.9) == -1.0

    def test_myopic(self):
        params = cr.init_critic(0)
        assert cr.td_target(self.transition(False), params, 0.0) == -1.0

    def test_bootstrap_arithmetic(self):
        params = action_value_net({1: -2.0, 2: -3.0})
        y = cr.td_target(self.transition(False), params, 0.9)
        assert y == pytest.approx(-2.8, abs=1e-12)

    def test_empty_next_state_is_terminal(self):
        params = cr.init_critic(0)
        t = self.transition(False, next_rows=())
        assert cr.td_target(t, params, 0.9) == -1.0


class TestTrain:
    def test_fixed_point_regression(self, rng):
        state = make_state(rng, 4)
        action = int(state.valid_rows()[0])
        t = cr.Transition(state, action, -1.5, state, True)
        buf = cr.ReplayBuffer(capacity=8, seed=0)
        for _ in range(8):
            buf.push(t)
        cfg = cr.TrainConfig(steps=1500, batch=8, learning_rate=3e-3, seed=1)
        result = cr.train_critic(buf, cfg)
        assert cr.q_forward(result.params, state, action) == pytest.approx(-1.5, abs=1e-2)

    def test_deterministic_params(self):
        buf = cr.collect_demonstrations(
            lambda s: sim.spawn_layered_clutter(s, 6, 2), None, 100, 1.0, seed=0
        )
        cfg = cr.TrainConfig(steps=60, batch=16, seed=9)
        a = cr.train_critic(buf, cfg)
        b = cr.train_critic(buf, cfg)
        for ka, kb in zip(a.params.arrays().values(), b.params.arrays().values()):
            assert np.array_equal(ka, kb)
        assert np.array_equal(a.losses, b.losses)

    def test_insufficient_data(self):
        buf = cr.ReplayBuffer(capacity=10, seed=0)
        with pytest.raises(InsufficientDataError):
            cr.train_critic(buf, cr.TrainConfig(steps=1, batch=4))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            cr.TrainConfig(gamma_d=1.0)
        with pytest.raises(ValueError):
            cr.TrainConfig(epsilon=1.5)


class TestCheckpoint:
    def test_round_trip_identical_outputs(self, rng, tmp_path):
        params = cr.init_critic(21)
        state = make_state(rng, 8)
        path = tmp_path / "critic.json"
        cr.save_checkpoint(params, path)
        loaded = cr.load_checkpoint(path)
        assert loaded.activation == params.activation
        assert np.array_equal(cr.q_all(loaded, state), cr.q_all(params, state))

    def test_shape_validation(self, tmp_path):
        import json

        params = cr.init_critic(0)
        path = tmp_path / "critic.json"
        cr.save_checkpoint(params, path)
        payload = json.loads(path.read_text())
        payload["weights"]["b2"] = payload["weights"]["b2"][:-1]
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError):
            cr.load_checkpoint(path)

    def test_hash_validation(self, tmp_path):
        import json

        params = cr.init_critic(0)
        path = tmp_path / "critic.json"
        cr.save_checkpoint(params, path)
        payload = json.loads(path.read_text())
        payload["hidden"] = [8, 4]
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError):
            cr.load_checkpoint(path)
