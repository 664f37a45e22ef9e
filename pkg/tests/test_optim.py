"""Schedule closed forms and AdamW update arithmetic."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ssgraph.tensor as T
from ssgraph.errors import ConfigError, NumericError
from ssgraph.nn import ParamSet
from ssgraph.optim import (AdamWState, ScheduleConfig, adamw_step,
                           learning_rate_at, tau_at)
from ssgraph.tensor import Tensor, backward


def sched(eta=1e-3, total=10_000, warmup=1_000, tau=0.99):
    return ScheduleConfig(eta_base=eta, n_total=total, n_warmup=warmup, tau_base=tau)


class TestLearningRate:
    def test_anchor_points(self):
        cfg = sched()
        assert learning_rate_at(0, cfg) == 0.0
        assert abs(learning_rate_at(cfg.n_warmup, cfg) - cfg.eta_base) < 1e-15
        mid = (cfg.n_warmup + cfg.n_total) // 2
        assert abs(learning_rate_at(mid, cfg) - 0.5 * cfg.eta_base) < 1e-12
        assert abs(learning_rate_at(cfg.n_total, cfg)) < 1e-18

    def test_warmup_is_linear(self):
        cfg = sched()
        np.testing.assert_allclose(learning_rate_at(250, cfg), 0.25 * cfg.eta_base)

    def test_continuity_at_warmup_boundary(self):
        cfg = sched()
        w = cfg.n_warmup
        cosine_branch = cfg.eta_base * (1 + np.cos(0.0)) * 0.5
        assert abs(learning_rate_at(w, cfg) - cosine_branch) < 1e-15

    def test_clamps_to_zero_after_n_total(self):
        assert learning_rate_at(10_001, sched()) == 0.0

    def test_zero_warmup_starts_at_base(self):
        cfg = sched(warmup=0)
        assert abs(learning_rate_at(0, cfg) - cfg.eta_base) < 1e-15

    def test_invalid_configs_rejected(self):
        with pytest.raises(ConfigError):
            ScheduleConfig(eta_base=0.0).validate()
        with pytest.raises(ConfigError):
            ScheduleConfig(n_warmup=20, n_total=10).validate()
        with pytest.raises(ConfigError):
            learning_rate_at(-1, sched())


class TestTau:
    def test_anchor_points(self):
        cfg = sched()
        assert abs(tau_at(0, cfg) - cfg.tau_base) < 1e-15
        assert tau_at(cfg.n_total, cfg) == 1.0
        assert abs(tau_at(cfg.n_total // 2, cfg) - (1 + cfg.tau_base) / 2) < 1e-12

    @given(st.integers(1, 5_000), st.floats(0.0, 1.0))
    @settings(max_examples=40, deadline=None)
    def test_monotone_nondecreasing(self, total, tau_base):
        cfg = sched(total=total, warmup=0, tau=tau_base)
        values = [tau_at(i, cfg) for i in range(total + 1)]
        assert all(b >= a - 1e-15 for a, b in zip(values, values[1:]))
        assert values[-1] == 1.0


def one_param(value):
    params = ParamSet()
    params.add("w", np.asarray(value, dtype=np.float64))
    return params


class TestAdamW:
    def test_zero_gradient_no_decay_is_identity(self):
        params = one_param([1.0, -2.0])
        state = AdamWState(params)
        adamw_step(params, state, lr=0.1, weight_decay=0.0)
        np.testing.assert_array_equal(params["w"].data, [1.0, -2.0])

    def test_single_step_closed_form(self):
        # bias-corrected first step: delta = -lr * g / (|g| + eps)
        g = np.array([0.5, -3.0, 1e-12])
        params = one_param([0.0, 0.0, 0.0])
        params["w"].grad = g.copy()
        state = AdamWState(params)
        adamw_step(params, state, lr=0.01, weight_decay=0.0)
        expected = -0.01 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(params["w"].data, expected, rtol=1e-12)

    def test_decoupled_decay_scaling(self):
        params = one_param([2.0])
        state = AdamWState(params)
        adamw_step(params, state, lr=0.01, weight_decay=1e-5)
        np.testing.assert_allclose(params["w"].data, [2.0 * (1.0 - 1e-7)], rtol=1e-15)

    def test_norm_and_slope_parameters_skip_decay(self):
        params = ParamSet()
        params.add("layer0.norm_scale", np.array([1.0]))
        params.add("layer0.prelu", np.array([0.25]))
        params.add("layer0.weight", np.array([1.0]))
        state = AdamWState(params)
        adamw_step(params, state, lr=0.5, weight_decay=0.1)
        np.testing.assert_array_equal(params["layer0.norm_scale"].data, [1.0])
        np.testing.assert_array_equal(params["layer0.prelu"].data, [0.25])
        assert params["layer0.weight"].data[0] == pytest.approx(1.0 - 0.05)

    def test_nonfinite_gradient_aborts_before_mutation(self):
        params = one_param([1.0, 1.0])
        params["w"].grad = np.array([np.nan, 0.0])
        state = AdamWState(params)
        with pytest.raises(NumericError):
            adamw_step(params, state, lr=0.1, weight_decay=0.0)
        np.testing.assert_array_equal(params["w"].data, [1.0, 1.0])
        assert state.t == 0

    def test_gradients_cleared_after_step(self):
        params = one_param([1.0])
        params["w"].grad = np.array([1.0])
        adamw_step(params, AdamWState(params), lr=0.01, weight_decay=0.0)
        assert params["w"].grad is None

    def test_quadratic_bowl_converges(self):
        # smoke property: scheduled AdamW reaches the minimum of sum (x - c)^2
        target = np.array([0.3, -1.2, 2.5, 0.0])
        params = one_param(np.zeros(4))
        state = AdamWState(params)
        cfg = sched(eta=0.05, total=5_000, warmup=100)
        c = Tensor(target)
        for i in range(cfg.n_total):
            diff = T.sub(params["w"], c)
            loss = T.tsum(T.square(diff))
            backward(loss)
            adamw_step(params, state, learning_rate_at(i, cfg), 0.0)
        assert np.abs(params["w"].data - target).max() < 1e-6
