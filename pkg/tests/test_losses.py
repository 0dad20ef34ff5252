"""Loss values against hand calculations and gradients against differences."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import fd_grad, rel_err, stepwise_cond_net
from seqlabel.errors import ShapeError
from seqlabel.losses import (
    base_bce_loss,
    bce_loss_batch,
    compute_masks,
    constraint_loss,
    constraint_loss_on_net,
    seq_nll_batch,
    supervised_loss,
)
from seqlabel.model import BaseSeqModel, SeqOnlyModel, base_predict, joint_logprob_seq
from seqlabel.nnet import DenseNet, make_dropout_mask


def random_model(rng, n=3, m=4):
    base = DenseNet.init([m, 5, n], rng)
    cond = DenseNet.init([3 * n, 6, 1], rng)
    return BaseSeqModel(base, cond)


class TestBaseBce:
    def test_hand_value(self):
        loss, _ = base_bce_loss([0.8, 0.25], [True, False])
        assert_allclose(loss, -(math.log(0.8) + math.log(0.75)) / 2, rtol=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        p = rng.uniform(0.05, 0.95, size=6)
        t = rng.random(6) < 0.5

        def f(q):
            return base_bce_loss(q, t)[0]

        _, grad = base_bce_loss(p, t)
        assert rel_err(grad, fd_grad(f, p)) < 1e-6

    def test_perfect_saturated_prediction_is_finite_with_zero_grad(self):
        loss, grad = base_bce_loss([1.0, 0.0], [True, False])
        assert np.isfinite(loss) and loss < 1e-6
        assert np.all(grad == 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            base_bce_loss([0.5], [True, False])

    def test_net_batch_gradcheck(self, rng):
        net = DenseNet.init([3, 5, 2], rng)
        X = rng.random((4, 3))
        Y = rng.random((4, 2)) < 0.5

        def f(params):
            return bce_loss_batch(DenseNet(net.layer_sizes, params), X, Y)[0]

        _, grads = bce_loss_batch(net, X, Y)
        assert rel_err(grads, fd_grad(f, net.params)) < 1e-5


class TestSupervisedLoss:
    def test_equals_negative_joint_logprob(self, rng):
        model = random_model(rng)
        for _ in range(5):
            pa = base_predict(model, rng.random(4))
            v = rng.random(3) < 0.5
            loss, _ = supervised_loss(model, pa, v)
            assert_allclose(loss, -joint_logprob_seq(model, pa, v), rtol=1e-12)

    def test_batch_is_mean_of_singles(self, rng):
        model = random_model(rng)
        ctx = rng.random((6, 3))
        V = rng.random((6, 3)) < 0.5
        batch_loss, batch_grads = seq_nll_batch(model.cond, 3, ctx, V)
        singles = [supervised_loss(model, ctx[i], V[i]) for i in range(6)]
        assert_allclose(batch_loss, np.mean([l for l, _ in singles]), rtol=1e-12)
        assert_allclose(batch_grads, np.mean([g for _, g in singles], axis=0), rtol=1e-9)

    def test_gradcheck(self, rng):
        model = random_model(rng)
        pa = base_predict(model, rng.random(4))
        v = np.array([True, False, True])

        def f(params):
            m2 = BaseSeqModel(model.base, DenseNet(model.cond.layer_sizes, params))
            return supervised_loss(m2, pa, v)[0]

        _, grads = supervised_loss(model, pa, v)
        assert rel_err(grads, fd_grad(f, model.cond.params)) < 1e-5

    def test_gradcheck_with_fixed_dropout_mask(self, rng):
        model = random_model(rng)
        pa = base_predict(model, rng.random(4))
        v = np.array([False, True, True])
        mask = make_dropout_mask(rng, 3, 6, 0.5)

        def f(params):
            net = DenseNet(model.cond.layer_sizes, params)
            return seq_nll_batch(net, 3, pa[None], v[None], mask)[0]

        _, grads = seq_nll_batch(model.cond, 3, pa[None], v[None], mask)
        assert rel_err(grads, fd_grad(f, model.cond.params)) < 1e-5


class TestComputeMasks:
    def test_three_label_worked_example(self):
        valid = [(False, False, False), (True, True, False)]
        invalid = [(False, False, True), (True, False, True)]
        masks = compute_masks(valid, invalid)
        # first: only its final step is distinguishably wrong
        # second: wrong from its second step onward
        assert masks.tolist() == [[False, False, True], [False, True, True]]

    def test_no_valid_valuations_flags_everything(self):
        masks = compute_masks([], [(True, False)])
        assert masks.tolist() == [[True, True]]

    def test_empty_invalid(self):
        assert compute_masks([(True,)], []).size == 0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            compute_masks([(True, False)], [(True,)])


class TestConstraintLoss:
    def test_three_term_hand_value(self):
        # per-step conditionals 0.2, 0.3, 0.4; the same sets as the mask test
        model = SeqOnlyModel(stepwise_cond_net(3, [0.2, 0.3, 0.4], ctx_dim=1), 3)
        valid = [(False, False, False), (True, True, False)]
        invalid = [(False, False, True), (True, False, True)]
        loss, _ = constraint_loss(model, np.zeros(1), valid, invalid)
        # masked terms: log c3 for the first; log(1 - c2) + log c3 for the second
        expected = math.log(0.4) + (math.log(1.0 - 0.3) + math.log(0.4))
        assert_allclose(loss, expected, rtol=1e-9)

    def test_empty_invalid_is_zero(self, rng):
        model = random_model(rng)
        loss, grads = constraint_loss(model, rng.random(3), [(True, True, True)], [])
        assert loss == 0.0
        assert not grads.any()

    def test_gradcheck(self, rng):
        model = random_model(rng)
        pa = base_predict(model, rng.random(4))
        valid = [(False, False, False)]
        invalid = [(True, False, True), (False, True, False)]

        def f(params):
            m2 = BaseSeqModel(model.base, DenseNet(model.cond.layer_sizes, params))
            return constraint_loss(m2, pa, valid, invalid)[0]

        _, grads = constraint_loss(model, pa, valid, invalid)
        assert rel_err(grads, fd_grad(f, model.cond.params)) < 1e-5

    def test_minimizing_suppresses_flagged_steps(self, rng):
        """Gradient descent on the loss lowers the invalid valuation's probability."""
        rng2 = np.random.default_rng(3)
        cond = DenseNet.init([3 * 2, 4, 1], rng2)
        model = SeqOnlyModel(cond, 2, label_order=np.array([0, 1]))
        ctx = np.zeros(2)
        invalid = [(True, False)]
        before = math.exp(joint_logprob_seq(model, ctx, invalid[0]))
        masks = compute_masks([(True, True)], invalid)
        for _ in range(50):
            _, grads = constraint_loss_on_net(model.cond, 2, ctx, invalid, masks)
            model.cond.params -= 0.1 * grads
        after = math.exp(joint_logprob_seq(model, ctx, invalid[0]))
        assert after < before

    def test_value_weighted_net_sees_prefix(self):
        """Masked steps depend on the prefix when the net reads value channels."""
        net = stepwise_cond_net(2, [0.5, 0.5], ctx_dim=1, value_weights=[2.0, 0.0])
        model = SeqOnlyModel(net, 2)
        # after True the second conditional is sigmoid(2) instead of 0.5
        c_after_true = 1.0 / (1.0 + math.exp(-2.0))
        loss, _ = constraint_loss(model, np.zeros(1), [(False, False)], [(True, False)])
        expected = math.log(0.5) + math.log(1.0 - c_after_true)
        assert_allclose(loss, expected, rtol=1e-9)
