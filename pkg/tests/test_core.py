"""Core abstractions: validation, modules, prediction functions, losses."""

import numpy as np
import pytest

from imitation_privacy import (
    EPS_DENOM,
    SCALED_L2,
    SQUARED,
    ZERO_ONE,
    DegenerateDenominatorError,
    DimensionMismatchError,
    InformationSet,
    Learner,
    Module,
    QueryBudget,
    as_data_matrix,
    as_label_vector,
    evaluate,
    fit_module,
    loss,
    pair_losses,
)
from imitation_privacy.core import constant_fn, linear_fn
from imitation_privacy.rng import child_rng

from oracles import exhaustive_stump, mgs_projection


class TestValidation:
    def test_data_matrix_shape(self):
        X = as_data_matrix([[1.0, 2.0], [3.0, 4.0]])
        assert X.shape == (2, 2) and X.dtype == float

    def test_data_matrix_rejects_1d(self):
        with pytest.raises(DimensionMismatchError):
            as_data_matrix([1.0, 2.0])

    def test_data_matrix_rejects_empty_and_nonfinite(self):
        with pytest.raises(DimensionMismatchError):
            as_data_matrix(np.zeros((0, 2)))
        with pytest.raises(DimensionMismatchError):
            as_data_matrix(np.zeros((3, 0)))
        with pytest.raises(ValueError):
            as_data_matrix([[np.nan, 1.0]])

    def test_label_vector_checks(self):
        y = as_label_vector([1, 2, 3], n_rows=3)
        assert y.tolist() == [1.0, 2.0, 3.0]
        with pytest.raises(DimensionMismatchError):
            as_label_vector([1, 2], n_rows=3)
        with pytest.raises(ValueError):
            as_label_vector([0.5, 1.2], kind="probability")
        with pytest.raises(ValueError):
            as_label_vector([1.0, np.inf])

    def test_module_intrinsic_label_length(self):
        X = np.ones((4, 2))
        Module(Learner.make("ols"), X, intrinsic_label=np.ones(4))
        with pytest.raises(DimensionMismatchError):
            Module(Learner.make("ols"), X, intrinsic_label=np.ones(3))

    def test_query_budget(self):
        b = QueryBudget(k1=5)
        assert b.k2 is None
        with pytest.raises(ValueError):
            QueryBudget(k1=-1)
        with pytest.raises(ValueError):
            QueryBudget(k1=0, k2=-2)


class TestFitModule:
    def test_ols_ones_column_constant(self):
        # constant labels over a ones feature recover coefficient 2
        module = Module(Learner.make("ols"), np.ones((4, 1)))
        fn = fit_module(module, [2.0, 2.0, 2.0, 2.0])
        assert fn([1.0]) == pytest.approx(2.0, abs=1e-12)
        assert fn([3.0]) == pytest.approx(6.0, abs=1e-12)

    def test_ols_orthonormal_projection_identity(self):
        q, _ = np.linalg.qr(child_rng(0, "core").normal(size=(6, 3)))
        module = Module(Learner.make("ols"), q)
        fn = fit_module(module, q[:, 0])
        coeffs = np.array([fn(e) for e in np.eye(3)])
        assert np.allclose(coeffs, [1.0, 0.0, 0.0], atol=1e-10)

    def test_stump_on_documented_instance(self):
        X = np.array([[7.0], [1.0], [10.0], [5.0], [18.0], [9.0]])
        y = np.zeros(6)
        y[2] = 1.0
        module = Module(Learner.make("tree", max_depth=1), X)
        fitted = evaluate(fit_module(module, y), X)
        sse, _, _, oracle_fit = exhaustive_stump(X, y)
        assert np.allclose(fitted, oracle_fit, atol=1e-12)
        assert fitted.tolist() == [0.0, 0.0, 0.5, 0.0, 0.5, 0.0]

    def test_determinism_bit_identical(self):
        rng = child_rng(1, "determinism")
        X = rng.normal(size=(20, 3))
        y = rng.normal(size=20)
        module = Module(Learner.make("ols"), X)
        a = evaluate(fit_module(module, y, seed=7), X)
        b = evaluate(fit_module(module, y, seed=7), X)
        assert np.array_equal(a, b)
        fn1 = fit_module(module, y, seed=7)
        fn2 = fit_module(module, y, seed=7)
        assert fn1.provenance == fn2.provenance

    def test_dimension_mismatch(self):
        module = Module(Learner.make("ols"), np.ones((4, 2)))
        with pytest.raises(DimensionMismatchError):
            fit_module(module, np.ones(5))


class TestEvaluate:
    def test_zero_function(self):
        fn = constant_fn(0.0, 3)
        X = child_rng(2, "eval").normal(size=(5, 3))
        assert evaluate(fn, X).tolist() == [0.0] * 5

    def test_linear_hand_arithmetic(self):
        fn = linear_fn([1.0, 1.0])
        out = evaluate(fn, [[1.0, 2.0], [3.0, 4.0]])
        assert out.tolist() == [3.0, 7.0]

    def test_ols_training_fit_is_projection(self):
        # fitted values on training rows equal the MGS projection of y
        rng = child_rng(3, "projection")
        X = rng.normal(size=(12, 4))
        y = rng.normal(size=12)
        module = Module(Learner.make("ols"), X)
        fitted = evaluate(fit_module(module, y), X)
        assert np.allclose(fitted, mgs_projection(X, y), atol=1e-10)

    def test_dimension_mismatch(self):
        fn = linear_fn([1.0, 2.0])
        with pytest.raises(DimensionMismatchError):
            evaluate(fn, np.ones((3, 3)))


class TestLoss:
    def test_scaled_l2_zero_at_equal(self):
        assert loss(SCALED_L2, 3.0, 3.0) == 0.0

    def test_scaled_l2_trivial_imitation_value(self):
        assert loss(SCALED_L2, 0.0, 5.0) == 1.0

    def test_zero_one(self):
        assert loss(ZERO_ONE, 1.0, 2.0) == 1.0
        assert loss(ZERO_ONE, 2.0, 2.0) == 0.0

    def test_squared(self):
        assert loss(SQUARED, 1.0, 4.0) == 9.0

    def test_degenerate_denominator_carries_operands(self):
        with pytest.raises(DegenerateDenominatorError) as exc:
            loss(SCALED_L2, 1.0, 0.0)
        assert exc.value.a == 1.0 and exc.value.b == 0.0

    @pytest.mark.parametrize("kind", [SCALED_L2, ZERO_ONE, SQUARED])
    def test_nonnegative_and_zero_iff_equal(self, kind):
        rng = child_rng(4, "loss", kind.kind)
        for _ in range(200):
            a, b = rng.normal(size=2) * 3
            if kind is SCALED_L2 and abs(b) <= EPS_DENOM:
                continue
            val = loss(kind, a, b)
            assert val >= 0.0
            assert (val == 0.0) == (a == b)

    def test_scaled_l2_trivial_identity_property(self):
        rng = child_rng(5, "trivial")
        for _ in range(100):
            b = rng.normal() * 10
            if abs(b) > EPS_DENOM:
                assert loss(SCALED_L2, 0.0, b) == 1.0

    def test_pair_losses_skip_mask(self):
        a = np.array([1.0, 2.0, 3.0])
        b = np.array([2.0, 0.0, 3.0])
        losses, keep = pair_losses(SCALED_L2, a, b)
        assert keep.tolist() == [True, False, True]
        assert losses[0] == 0.25 and losses[2] == 0.0


class TestInformationSet:
    def test_query_response_lengths_must_match(self):
        with pytest.raises(ValueError):
            InformationSet(queries=(1,), responses=())

    def test_side_info_tags_closed(self):
        InformationSet(side_info=(("model-class", "ols"),))
        with pytest.raises(ValueError):
            InformationSet(side_info=(("favorite-color", "blue"),))

    def test_side_lookup(self):
        info = InformationSet(side_info=(("noise-level", 0.1),))
        assert info.side("noise-level") == 0.1
        with pytest.raises(KeyError):
            info.side("covariance")
