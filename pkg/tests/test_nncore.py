import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smartsel.errors import DimensionError, FormatError
from smartsel.nncore import (
    ParamStore,
    RngState,
    TrainConfig,
    dense_forward,
    derive_seed,
    grad_check,
    init_lstm,
    lstm_step,
    sgd_momentum_step,
    sigmoid,
    softmax,
)


class TestDenseForward:
    def test_zero_input_passes_bias(self):
        w = np.arange(6.0).reshape(2, 3)
        out = dense_forward(np.zeros((1, 2)), w, np.array([[1.0, 2.0, 3.0]]))
        npt.assert_array_equal(out, [[1.0, 2.0, 3.0]])

    def test_basis_vector_selects_row(self):
        w = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        out = dense_forward(np.array([[1.0, 0.0]]), w, np.zeros((1, 3)))
        npt.assert_array_equal(out, [[1.0, 2.0, 3.0]])

    def test_hand_arithmetic(self):
        # [1,2] @ [[1,1],[1,-1]] = [3,-1]; +0.5 bias each -> [3.5,-0.5]
        out = dense_forward(
            np.array([[1.0, 2.0]]),
            np.array([[1.0, 1.0], [1.0, -1.0]]),
            np.array([[0.5, 0.5]]),
        )
        npt.assert_allclose(out, [[3.5, -0.5]])

    def test_shape_mismatch_names_both_operands(self):
        with pytest.raises(DimensionError, match=r"x.*w"):
            dense_forward(np.ones((1, 3)), np.ones((2, 4)), np.zeros((1, 4)))
        with pytest.raises(DimensionError, match="bias"):
            dense_forward(np.ones((1, 2)), np.ones((2, 4)), np.zeros((1, 3)))


class TestSigmoid:
    def test_symmetry_point(self):
        npt.assert_array_equal(sigmoid(np.array([0.0])), [0.5])

    def test_saturation_stays_inside_open_interval(self):
        high = sigmoid(np.array([40.0]))[0]
        assert abs(high - 1.0) < 1e-12
        assert high < 1.0
        low = sigmoid(np.array([-40.0]))[0]
        assert low > 0.0
        # extreme inputs must not overflow or produce NaN
        out = sigmoid(np.array([-1e6, 1e6]))
        assert np.all(np.isfinite(out))
        assert 0.0 < out[0] < out[1] < 1.0

    def test_closed_form_ln3(self):
        npt.assert_allclose(sigmoid(np.array([math.log(3.0)])), [0.75], atol=1e-15)

    @given(st.floats(-8, 8), st.floats(1e-4, 8))
    def test_strictly_monotone_away_from_saturation(self, x, gap):
        lo, hi = sigmoid(np.array([x, x + gap]))
        assert lo < hi

    @given(st.floats(-500, 500), st.floats(0, 500))
    def test_weakly_monotone_everywhere(self, x, gap):
        lo, hi = sigmoid(np.array([x, x + gap]))
        assert lo <= hi


class TestSoftmax:
    @given(st.floats(-700, 700))
    def test_constant_vector_is_uniform(self, c):
        npt.assert_allclose(softmax(np.array([c, c, c])), np.ones(3) / 3, atol=1e-15)

    def test_large_logit_is_stable(self):
        out = softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(out))
        npt.assert_allclose(out, [1.0, 0.0], atol=1e-12)

    def test_exact_ratios(self):
        out = softmax(np.log(np.array([1.0, 2.0, 3.0])))
        npt.assert_allclose(out, [1 / 6, 2 / 6, 3 / 6], atol=1e-12)

    # Dyadic grids keep v + shift exact in float64, so the mathematical
    # shift invariance is observable bit-for-bit at the argmax level.
    @given(
        st.lists(st.integers(-50 * 1024, 50 * 1024), min_size=1, max_size=8),
        st.integers(-100 * 1024, 100 * 1024),
    )
    def test_sums_to_one_and_shift_invariant(self, grid_values, grid_shift):
        v = np.array(grid_values) / 1024.0
        shift = grid_shift / 1024.0
        out = softmax(v)
        assert abs(out.sum() - 1.0) < 1e-12
        assert np.all(out >= 0)
        shifted = softmax(v + shift)
        npt.assert_allclose(out, shifted, atol=1e-12)
        assert np.argmax(out) == np.argmax(shifted)

    def test_empty_vector_rejected(self):
        with pytest.raises(ValueError):
            softmax(np.array([]))


def _reference_lstm(x, h_prev, m_prev, wx, wh, b):
    """Independent cell oracle, written directly from the gate equations."""
    hidden = wh.shape[0]
    z = x @ wx + h_prev @ wh + b
    sig = lambda t: 1.0 / (1.0 + np.exp(-t))
    i = sig(z[:, 0 * hidden : 1 * hidden])
    f = sig(z[:, 1 * hidden : 2 * hidden])
    g = np.tanh(z[:, 2 * hidden : 3 * hidden])
    o = sig(z[:, 3 * hidden : 4 * hidden])
    m = f * m_prev + i * g
    return o * np.tanh(m), m


class TestLstmStep:
    def test_all_zero_weights_and_inputs(self):
        store = ParamStore()
        store.add("lstm.wx", np.zeros((3, 8)))
        store.add("lstm.wh", np.zeros((2, 8)))
        store.add("lstm.b", np.zeros((1, 8)))
        h, m = lstm_step(np.zeros((1, 3)), np.zeros((1, 2)), np.zeros((1, 2)), store)
        npt.assert_array_equal(h, np.zeros((1, 2)))
        npt.assert_array_equal(m, np.zeros((1, 2)))

    def test_hidden_state_bounded(self):
        rng = np.random.default_rng(3)
        store = ParamStore()
        init_lstm(store, "lstm", 4, 6, rng)
        h = np.zeros((1, 6))
        m = np.zeros((1, 6))
        for _ in range(50):
            h, m = lstm_step(rng.normal(scale=5.0, size=(1, 4)), h, m, store)
            assert np.all(np.abs(h) < 1.0)

    def test_matches_independent_cell(self):
        rng = np.random.default_rng(11)
        store = ParamStore()
        wx = store.add("lstm.wx", rng.normal(size=(2, 8)))
        wh = store.add("lstm.wh", rng.normal(size=(2, 8)))
        b = store.add("lstm.b", rng.normal(size=(1, 8)))
        x = rng.normal(size=(1, 2))
        h_prev = rng.normal(size=(1, 2))
        m_prev = rng.normal(size=(1, 2))
        h, m = lstm_step(x, h_prev, m_prev, store)
        h_ref, m_ref = _reference_lstm(x, h_prev, m_prev, wx, wh, b)
        npt.assert_allclose(h, h_ref, atol=1e-12)
        npt.assert_allclose(m, m_ref, atol=1e-12)

    def test_shape_mismatch(self):
        store = ParamStore()
        init_lstm(store, "lstm", 3, 2, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            lstm_step(np.zeros((1, 4)), np.zeros((1, 2)), np.zeros((1, 2)), store)


class TestGradCheck:
    def test_quadratic_loss(self):
        store = ParamStore()
        theta = store.add("theta", np.array([[0.3, -1.2], [2.0, 0.7]]))
        store.grads["theta"][...] = 2.0 * theta

        err = grad_check(lambda: float((theta**2).sum()), store, eps=1e-5)
        assert err < 1e-8

    def test_constant_loss(self):
        store = ParamStore()
        store.add("theta", np.array([[1.0, 2.0]]))
        err = grad_check(lambda: 5.0, store, eps=1e-5)
        assert err == 0.0


class TestSgdMomentum:
    def test_plain_sgd(self):
        store = ParamStore()
        theta = store.add("w", np.array([[1.0, 2.0]]))
        store.grads["w"][...] = [[0.5, -0.5]]
        sgd_momentum_step(store, lr=1.0, momentum=0.0)
        npt.assert_allclose(theta, [[0.5, 2.5]])
        npt.assert_array_equal(store.grads["w"], [[0.0, 0.0]])

    def test_zero_grad_no_motion(self):
        store = ParamStore()
        theta = store.add("w", np.array([[1.0, 2.0]]))
        before = theta.copy()
        sgd_momentum_step(store, lr=0.1, momentum=0.9)
        npt.assert_array_equal(theta, before)

    def test_two_steps_momentum_unroll(self):
        # v1 = g, v2 = 0.9 g + g; total displacement lr * (g + 1.9 g)
        store = ParamStore()
        theta = store.add("w", np.array([[10.0]]))
        lr, g = 0.1, 2.0
        for _ in range(2):
            store.grads["w"][...] = g
            sgd_momentum_step(store, lr=lr, momentum=0.9)
        npt.assert_allclose(theta, [[10.0 - lr * (g + 1.9 * g)]])

    def test_rejects_bad_hyperparams(self):
        store = ParamStore()
        store.add("w", np.zeros((1, 1)))
        with pytest.raises(ValueError):
            sgd_momentum_step(store, lr=0.0, momentum=0.5)
        with pytest.raises(ValueError):
            sgd_momentum_step(store, lr=0.1, momentum=1.0)


class TestParamStore:
    def _store(self):
        rng = np.random.default_rng(5)
        store = ParamStore()
        store.add("a.w", rng.normal(size=(3, 4)))
        store.add("a.b", rng.normal(size=(1, 4)))
        store.add("z", rng.normal(size=(2, 2)))
        return store

    def test_round_trip_bit_exact(self, tmp_path):
        store = self._store()
        path = tmp_path / "model.params"
        store.save(path)
        loaded = ParamStore.load(path)
        assert loaded.to_bytes() == store.to_bytes()
        for name in store.names():
            npt.assert_array_equal(loaded[name], store[name])

    def test_duplicate_name_rejected(self):
        store = self._store()
        with pytest.raises(ValueError, match="duplicate"):
            store.add("a.w", np.zeros((1, 1)))

    def test_truncations_raise_format_error(self):
        blob = self._store().to_bytes()
        rng = np.random.default_rng(0)
        for cut in rng.integers(0, len(blob), size=60):
            with pytest.raises(FormatError):
                ParamStore.from_bytes(blob[: int(cut)])

    def test_bad_magic(self):
        blob = b"XXXXXXXX" + self._store().to_bytes()[8:]
        with pytest.raises(FormatError) as exc:
            ParamStore.from_bytes(blob)
        assert exc.value.byte_offset == 0

    def test_trailing_bytes_rejected(self):
        with pytest.raises(FormatError, match="trailing"):
            ParamStore.from_bytes(self._store().to_bytes() + b"\x00")

    def test_grad_shape_mismatch(self):
        store = self._store()
        with pytest.raises(DimensionError):
            store.accumulate_grad("z", np.zeros((3, 3)))


class TestDeterminism:
    def test_identical_seed_identical_params_after_training_steps(self):
        def run():
            rng = RngState(123).generator()
            store = ParamStore()
            store.add("w", rng.normal(size=(4, 4)))
            for step in range(20):
                grad_rng = RngState(derive_seed(123, "grad", step)).generator()
                store.grads["w"][...] = grad_rng.normal(size=(4, 4))
                sgd_momentum_step(store, lr=0.05, momentum=0.9)
            return store.to_bytes()

        assert run() == run()

    def test_rng_state_reproducible(self):
        a = RngState(7).generator().normal(size=8)
        b = RngState(7).generator().normal(size=8)
        npt.assert_array_equal(a, b)
        c = RngState(7).child("x", 1).generator().normal(size=8)
        assert not np.array_equal(a, c)

    def test_derive_seed_stable_and_distinct(self):
        assert derive_seed("a", 1) == derive_seed("a", 1)
        assert derive_seed("a", 1) != derive_seed("a", 2)
        assert derive_seed("ab") != derive_seed("a", "b")


class TestTrainConfig:
    def test_lr_schedule_decays_every_25_epochs(self):
        cfg = TrainConfig(epochs=100, lr=1e-4)
        assert cfg.lr_at(0) == 1e-4
        assert cfg.lr_at(24) == 1e-4
        npt.assert_allclose(cfg.lr_at(25), 1e-5)
        npt.assert_allclose(cfg.lr_at(50), 1e-6)

    def test_schedule_disabled(self):
        cfg = TrainConfig(epochs=10, lr=0.5, lr_decay_every=0)
        assert cfg.lr_at(99) == 0.5
