import numpy as np
from django.test import SimpleTestCase

from core import functional as F
from core.exceptions import ShapeError
from core.gradcheck import away_from_kinks, gradcheck
from core.tensor import Tensor


def direct_conv2d(x, w, stride, padding, groups):
    """Textbook nested-loop cross-correlation."""
    n, c, h, wd = x.shape
    o, cg, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, oh, ow))
    per_group = o // groups
    for b in range(n):
        for oc in range(o):
            g = oc // per_group
            for i in range(oh):
                for j in range(ow):
                    patch = xp[b, g * cg:(g + 1) * cg, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[b, oc, i, j] = (patch * w[oc]).sum()
    return out


class Conv2dTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_matches_direct_convolution(self):
        x = self.rng.normal(size=(2, 4, 7, 6))
        for stride, padding, groups in [(1, 1, 1), (2, 1, 1), (1, 0, 2), (2, 1, 4)]:
            with self.subTest(stride=stride, padding=padding, groups=groups):
                w = self.rng.normal(size=(4, 4 // groups, 3, 3))
                out = F.conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding, groups=groups)
                np.testing.assert_allclose(out.data, direct_conv2d(x, w, stride, padding, groups), atol=1e-10)

    def test_gradients(self):
        x = self.rng.normal(size=(2, 2, 5, 4))
        w = self.rng.normal(size=(3, 2, 3, 3))
        b = self.rng.normal(size=(3,))
        fn = lambda x, w, b: F.conv2d(x, w, b, stride=(2, 1), padding=1)  # noqa: E731
        self.assertTrue(gradcheck(fn, [x, w, b]).passed)

    def test_depthwise_gradients(self):
        x = self.rng.normal(size=(1, 3, 4, 4))
        w = self.rng.normal(size=(3, 1, 3, 3))
        fn = lambda x, w: F.conv2d(x, w, padding=1, groups=3)  # noqa: E731
        self.assertTrue(gradcheck(fn, [x, w]).passed)

    def test_rejects_bad_shapes(self):
        with self.assertRaises(ShapeError):
            F.conv2d(Tensor(np.ones((1, 3, 4, 4))), Tensor(np.ones((2, 2, 3, 3))))
        with self.assertRaises(ShapeError):
            F.conv2d(Tensor(np.ones((1, 2, 2, 2))), Tensor(np.ones((2, 2, 5, 5))))
        with self.assertRaises(ShapeError):
            F.conv2d(Tensor(np.ones((1, 3, 4, 4))), Tensor(np.ones((3, 1, 3, 3))), groups=2)


class BatchNormTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(2)
        self.x = self.rng.normal(2.0, 3.0, size=(4, 3, 2, 5))

    def test_training_output_is_normalised(self):
        out = F.batch_norm(Tensor(self.x), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.data.std(axis=(0, 2, 3)), 1.0, atol=1e-5)

    def test_running_statistics_update(self):
        mean, var = np.zeros(3), np.ones(3)
        F.batch_norm(Tensor(self.x), Tensor(np.ones(3)), Tensor(np.zeros(3)), mean, var, momentum=0.5)
        np.testing.assert_allclose(mean, 0.5 * self.x.mean(axis=(0, 2, 3)))
        m = 4 * 2 * 5
        np.testing.assert_allclose(var, 0.5 + 0.5 * self.x.var(axis=(0, 2, 3)) * m / (m - 1))

    def test_eval_uses_running_statistics(self):
        mean, var = np.full(3, 2.0), np.full(3, 4.0)
        out = F.batch_norm(Tensor(self.x), Tensor(np.ones(3)), Tensor(np.zeros(3)), mean, var, training=False)
        np.testing.assert_allclose(out.data, (self.x - 2.0) / np.sqrt(4.0 + F.BN_EPS))

    def test_gradients(self):
        gamma = self.rng.normal(size=3)
        beta = self.rng.normal(size=3)
        self.assertTrue(gradcheck(lambda x, g, b: F.batch_norm(x, g, b), [self.x, gamma, beta]).passed)


class ActivationAndHeadTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(3)

    def test_relu_gradients(self):
        x = away_from_kinks(self.rng.normal(size=(2, 3, 2, 2)), 0.01)
        self.assertTrue(gradcheck(F.relu, [x]).passed)

    def test_linear_and_pool_gradients(self):
        self.assertTrue(gradcheck(F.linear, [self.rng.normal(size=(4, 3)), self.rng.normal(size=(2, 3)),
                                             self.rng.normal(size=2)]).passed)
        self.assertTrue(gradcheck(F.global_avg_pool, [self.rng.normal(size=(2, 3, 4, 5))]).passed)

    def test_softmax_is_shift_invariant_and_stable(self):
        z = np.array([[1000.0, 1001.0, 1002.0]])
        np.testing.assert_allclose(F.softmax_array(z), F.softmax_array(z - 1000.0))
        np.testing.assert_allclose(np.exp(F.log_softmax_array(z)).sum(), 1.0)

    def test_tempered_softmax_gradients(self):
        z = self.rng.normal(size=(3, 5))
        for tau in (1.0, 2.0, 7.5):
            with self.subTest(tau=tau):
                self.assertTrue(gradcheck(lambda z: F.softmax_t(z, tau), [z]).passed)
                self.assertTrue(gradcheck(lambda z: F.log_softmax_t(z, tau), [z]).passed)

    def test_temperature_must_be_positive(self):
        with self.assertRaises(ValueError):
            F.softmax_array(np.zeros((1, 3)), tau=0.0)
