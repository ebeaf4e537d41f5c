import numpy as np
import pytest

from riverflow.nn.optim import ADAM_EPS, Adam, GradientDescent, make_optimizer


class TestAdam:
    def test_first_step_closed_form(self):
        # from zero moments: m_hat = g, v_hat = g^2, step = -lr g / (|g| + eps)
        lr = 0.001
        opt = Adam(learning_rate=lr, decay=0.0)
        g = np.array([0.3, -2.0, 0.0001])
        p = np.zeros(3)
        opt.step([p], [g.copy()], t=0)
        expected = -lr * g / (np.abs(g) + ADAM_EPS)
        assert np.max(np.abs(p - expected)) < 1e-15

    def test_zero_gradient_fixed_point(self):
        opt = Adam(0.01)
        p = np.array([1.0, -2.0])
        opt.step([p], [np.zeros(2)], t=0)
        assert np.array_equal(p, [1.0, -2.0])

    def test_decay_schedule(self):
        opt = Adam(0.1, decay=0.5)
        assert opt.lr_at(0) == 0.1
        assert opt.lr_at(2) == pytest.approx(0.1 / 2.0)

    def test_moments_accumulate_deterministically(self):
        opt1, opt2 = Adam(0.01), Adam(0.01)
        p1, p2 = np.ones(4), np.ones(4)
        rng = np.random.default_rng(0)
        for t in range(5):
            g = rng.normal(size=4)
            opt1.step([p1], [g], t)
            opt2.step([p2], [g], t)
        assert np.array_equal(p1, p2)


class TestGradientDescent:
    def test_exact_quadratic_step(self):
        # f(w) = w^2 / 2, grad = w; lr 1 from w=1 lands on the minimum
        opt = GradientDescent(learning_rate=1.0, decay=0.0)
        w = np.array([1.0])
        opt.step([w], [w.copy()], t=0)
        assert w[0] == 0.0

    def test_decay_applies_after_first_step(self):
        opt = GradientDescent(learning_rate=1.0, decay=1.0)
        w = np.array([4.0])
        opt.step([w], [np.array([1.0])], t=0)  # lr = 1
        assert w[0] == 3.0
        opt.step([w], [np.array([1.0])], t=1)  # lr = 1/2
        assert w[0] == 2.5


class TestFactory:
    def test_kinds(self):
        assert isinstance(make_optimizer("adam", 0.001, 0.001), Adam)
        assert isinstance(make_optimizer("sgd", 0.001, 0.001), GradientDescent)
        assert isinstance(make_optimizer("gd", 0.001, 0.001), GradientDescent)
        with pytest.raises(ValueError):
            make_optimizer("rmsprop", 0.001, 0.0)

    def test_positive_learning_rate_required(self):
        with pytest.raises(ValueError):
            Adam(0.0)
