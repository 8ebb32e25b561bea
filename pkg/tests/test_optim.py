"""ParamStore, gradient descent and the finite-difference harness."""

import numpy as np
import pytest

from ielkit.errors import NumericsError
from ielkit.grids import ParamStore
from ielkit.optim import finite_diff_grad_check, sgd_step


def quadratic_loss(store):
    """1/2 ||p||^2 with its analytic gradient written into the store."""
    total = 0.0
    for _, p in store.trainable_items():
        total += 0.5 * float((p.value**2).sum())
        p.grad += p.value
    return total


class TestParamStore:
    def test_grad_shape_matches_value(self):
        s = ParamStore()
        p = s.add("w", np.ones((2, 3)))
        assert p.grad.shape == (2, 3)
        assert np.all(p.grad == 0)

    def test_duplicate_name_rejected(self):
        s = ParamStore()
        s.add("w", 1.0)
        with pytest.raises(ValueError):
            s.add("w", 2.0)

    def test_zero_grads(self):
        s = ParamStore()
        p = s.add("w", np.ones(4))
        p.grad += 3.0
        s.zero_grads()
        assert np.all(p.grad == 0)

    def test_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        s = ParamStore()
        s.add("enc.w", rng.normal(size=(2, 3, 3, 3)))
        s.add("enc.b", rng.normal(size=2))
        s.add("alpha", rng.normal())
        path = tmp_path / "model.bin"
        s.save(path)
        loaded = ParamStore.load(path)
        assert loaded.names() == s.names()
        for name in s.names():
            assert np.array_equal(loaded[name].value, s[name].value)
        # identical bytes when saved again
        path2 = tmp_path / "model2.bin"
        loaded.save(path2)
        assert path.read_bytes() == path2.read_bytes()


class TestSgdStep:
    def test_zero_lr_keeps_values(self):
        s = ParamStore()
        p = s.add("w", np.array([1.0, 2.0]))
        p.grad += np.array([5.0, -3.0])
        sgd_step(s, 0.0)
        assert np.array_equal(p.value, [1.0, 2.0])
        assert np.all(p.grad == 0)

    def test_single_scalar(self):
        s = ParamStore()
        p = s.add("v", 1.0)
        p.grad += 2.0
        sgd_step(s, 0.5)
        assert p.value == 0.0

    def test_geometric_contraction(self):
        # 10 steps on 1/2 (v-3)^2 with lr 0.3 contract the error by
        # (1 - 0.3)^10 ~ 0.028 per unit of initial distance
        s = ParamStore()
        p = s.add("v", 2.0)
        for _ in range(10):
            p.grad += p.value - 3.0
            sgd_step(s, 0.3)
        assert abs(p.value - 3.0) < 0.03
        assert abs(p.value - 3.0) == pytest.approx(0.7**10, rel=1e-10)

    def test_non_finite_gradient_rejected(self):
        s = ParamStore()
        p = s.add("v", 1.0)
        p.grad += np.nan
        with pytest.raises(NumericsError):
            sgd_step(s, 0.1)
        assert p.value == 1.0

    def test_frozen_entries_untouched(self):
        s = ParamStore()
        p = s.add("frozen", 1.0, trainable=False)
        p.grad += 10.0
        sgd_step(s, 1.0)
        assert p.value == 1.0


class TestFiniteDiffGradCheck:
    def test_quadratic_passes_tightly(self):
        rng = np.random.default_rng(1)
        s = ParamStore()
        s.add("a", rng.normal(size=(3, 2)))
        s.add("b", rng.normal(size=4))
        report = finite_diff_grad_check(lambda: quadratic_loss(s), s, epsilon=1e-5)
        assert report.passed
        assert max(report.per_param.values()) < 1e-8

    def test_independent_parameter_both_zero(self):
        s = ParamStore()
        s.add("used", np.array([2.0]))
        s.add("unused", np.array([7.0]))

        def loss():
            p = s["used"]
            p.grad += p.value
            return 0.5 * float((p.value**2).sum())

        report = finite_diff_grad_check(lambda: loss(), s)
        assert report.passed
        assert report.per_param["unused"] == 0.0

    def test_non_finite_loss_aborts(self):
        s = ParamStore()
        s.add("v", 1.0)
        with pytest.raises(NumericsError):
            finite_diff_grad_check(lambda: float("nan"), s)

    def test_wrong_gradient_fails(self):
        s = ParamStore()
        s.add("v", np.array([1.5]))

        def loss():
            p = s["v"]
            p.grad += 2.0 * p.value  # deliberately wrong (true grad is value)
            return 0.5 * float((p.value**2).sum())

        report = finite_diff_grad_check(lambda: loss(), s)
        assert not report.passed

    def test_report_table(self):
        s = ParamStore()
        s.add("v", np.array([1.0]))
        report = finite_diff_grad_check(lambda: quadratic_loss(s), s)
        table = report.format_table()
        assert "v" in table and "PASS" in table
