"""Built-in observables and the expression compiler."""
from __future__ import annotations

import numpy as np
import pytest

from koopdict.observables import (
    ExpressionError,
    builtin_observables,
    compile_expression,
    get_observable,
)


class TestBuiltins:
    def test_gauss3_values(self):
        obs = get_observable("gauss3")
        assert obs.arity == 2
        assert obs(np.zeros(2)) == pytest.approx(3.0)
        z = np.array([1.0, 2.0])
        assert obs(z) == pytest.approx(3.0 * np.exp(-5.0 / 10.0))

    def test_sumsq_values(self):
        obs = get_observable("sumsq")
        assert obs(np.array([3.0, 4.0])) == pytest.approx(25.0)

    def test_gauss6_values(self):
        obs = get_observable("gauss6")
        assert obs.arity == 6
        assert obs(np.zeros(6)) == pytest.approx(3.0)
        z = np.ones(6)
        assert obs(z) == pytest.approx(3.0 * np.exp(-0.6))

    def test_arity_enforced_on_call(self):
        obs = get_observable("gauss6")
        with pytest.raises(ValueError, match="6 coordinates"):
            obs(np.zeros(2))

    def test_batched_evaluation(self, rng):
        obs = get_observable("gauss3")
        pts = rng.normal(size=(4, 7, 2))
        out = obs(pts)
        assert out.shape == (4, 7)
        assert out[1, 2] == pytest.approx(obs(pts[1, 2]))

    def test_library_is_closed(self):
        assert set(builtin_observables()) == {"gauss3", "sumsq", "gauss6"}


class TestExpressions:
    def test_equivalent_to_gauss3(self, rng):
        expr = compile_expression("3 * exp(-(z1^2 + z2^2) / 10)")
        ref = get_observable("gauss3")
        pts = rng.normal(size=(20, 2))
        assert np.allclose(expr(pts), ref(pts), rtol=1e-14)

    def test_caret_means_power(self):
        expr = compile_expression("z1 ^ 3")
        assert expr(np.array([2.0])) == pytest.approx(8.0)

    def test_arity_inference_and_widening(self):
        expr = compile_expression("z2 + 1")
        assert expr.arity == 2
        widened = compile_expression("z2 + 1", arity=4)
        assert widened.arity == 4
        assert widened(np.array([0.0, 5.0, 0.0, 0.0])) == pytest.approx(6.0)

    def test_narrowing_rejected(self):
        with pytest.raises(ExpressionError, match="z3"):
            compile_expression("z3", arity=2)

    def test_constant_with_declared_arity_broadcasts(self):
        expr = compile_expression("2 + 1", arity=2)
        out = expr(np.zeros((5, 2)))
        assert out.shape == (5,)
        assert (out == 3.0).all()

    def test_unary_minus_and_division(self):
        expr = compile_expression("-z1 / 4")
        assert expr(np.array([8.0])) == pytest.approx(-2.0)

    def test_variables_without_index_rejected(self):
        with pytest.raises(ExpressionError, match="z1, z2"):
            compile_expression("z * 2")
        with pytest.raises(ExpressionError):
            compile_expression("x1 + 1")

    @pytest.mark.parametrize(
        "bad",
        [
            "__import__('os')",
            "z1.real",
            "exp(z1, z2)",
            "sin(z1)",
            "z1 if z1 else 0",
            "[1, 2]",
            "z1 // 2",
            "z1 % 2",
            "z1 == z2",
            "'text'",
            "lambda: 1",
            "z0 + 1",
        ],
    )
    def test_grammar_is_a_whitelist(self, bad):
        with pytest.raises(ExpressionError):
            compile_expression(bad)

    def test_syntax_error_reported(self):
        with pytest.raises(ExpressionError, match="parse"):
            compile_expression("z1 + ")

    def test_no_variables_rejected(self):
        with pytest.raises(ExpressionError, match="at least one"):
            compile_expression("3 + 4")

    def test_expression_via_get_observable(self):
        obs = get_observable("z1^2 + z2^2")
        ref = get_observable("sumsq")
        pts = np.array([[1.0, 2.0], [0.5, -0.5]])
        assert np.allclose(obs(pts), ref(pts))
