import numpy as np
from django.test import SimpleTestCase

from core.exceptions import OptimizerStateError
from core.optim import Adam, AdamState, WarmupCosineSchedule, optimizer_step
from core.tensor import Tensor, backward, mul, sum_all


class AdamTests(SimpleTestCase):
    def test_minimises_a_quadratic(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        optimizer = Adam([x], lr=0.05)
        values = [1.0]
        for _ in range(10):
            optimizer.zero_grad()
            backward(sum_all(mul(x, x)))
            optimizer.step()
            values.append(float(x.data[0]))
        self.assertTrue(all(b < a for a, b in zip(values, values[1:])))
        self.assertGreater(values[-1], 0.45)
        self.assertLess(values[-1], 0.6)

    def test_first_step_moves_by_the_learning_rate(self):
        p = np.array([0.5, -0.5])
        state = [AdamState.like(p)]
        optimizer_step([p], [np.array([3.0, -0.01])], state, lr=0.1)
        np.testing.assert_allclose(p, [0.4, -0.4], rtol=1e-5)
        self.assertEqual(state[0].step, 1)

    def test_mismatched_state_is_refused(self):
        with self.assertRaises(OptimizerStateError):
            optimizer_step([np.zeros(2)], [np.zeros(2)], [], lr=0.1)
        with self.assertRaises(OptimizerStateError):
            optimizer_step([np.zeros(2)], [np.zeros(3)], [AdamState.like(np.zeros(2))], lr=0.1)


class ScheduleTests(SimpleTestCase):
    def test_warmup_then_cosine(self):
        schedule = WarmupCosineSchedule(base_lr=1.0, warmup_steps=4, total_steps=14)
        self.assertAlmostEqual(schedule(0), 0.25)
        self.assertAlmostEqual(schedule(3), 1.0)
        self.assertAlmostEqual(schedule(4), 1.0)
        self.assertAlmostEqual(schedule(9), 0.5)
        self.assertAlmostEqual(schedule(14), 0.0)
        self.assertAlmostEqual(schedule(100), 0.0)

    def test_without_warmup(self):
        schedule = WarmupCosineSchedule(base_lr=0.1, warmup_steps=0, total_steps=10)
        self.assertAlmostEqual(schedule(0), 0.1)

    def test_optimizer_reports_scheduled_rate(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        optimizer = Adam([x], lr=1.0, schedule=WarmupCosineSchedule(1.0, 2, 10))
        backward(sum_all(mul(x, x)))
        self.assertAlmostEqual(optimizer.step(), 0.5)
        self.assertAlmostEqual(optimizer.current_lr(), 1.0)
