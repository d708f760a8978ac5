"""Central finite-difference oracle for taped ops."""
from dataclasses import dataclass

import numpy as np

from core.tensor import Tensor, backward, mul, no_grad, sum_all


@dataclass
class GradcheckResult:
    max_rel_error: float
    per_input: list

    @property
    def passed(self):
        return self.max_rel_error < 1e-4


def relative_error(analytic, numeric):
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def away_from_kinks(array, margin):
    """Push entries within `margin` of zero out of the kink of piecewise ops."""
    out = array.copy()
    close = np.abs(out) < margin
    out[close] = np.where(out[close] >= 0, margin, -margin) * 2
    return out


def gradcheck(fn, arrays, h=1e-3, seed=0, wrt=None):
    """Compare autodiff gradients of `fn` with central differences.

    `fn` maps Tensors to a Tensor; it is reduced to a scalar through a fixed
    random projection. Both passes run in float64. `wrt` selects which inputs
    are checked (default: all).
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    wrt = range(len(arrays)) if wrt is None else wrt
    rng = np.random.default_rng(seed)

    with no_grad():
        reference = fn(*[Tensor(a) for a in arrays])
    projection = rng.uniform(-1.0, 1.0, size=reference.shape)

    def objective(values):
        with no_grad():
            out = fn(*[Tensor(v) for v in values])
        return float((out.data * projection).sum())

    inputs = [Tensor(a, requires_grad=(k in wrt)) for k, a in enumerate(arrays)]
    loss = sum_all(mul(fn(*inputs), Tensor(projection)))
    backward(loss)

    errors = []
    for k in wrt:
        numeric = np.zeros_like(arrays[k])
        flat = numeric.reshape(-1)
        for idx in range(arrays[k].size):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[k].reshape(-1)[idx] += h
            minus[k].reshape(-1)[idx] -= h
            flat[idx] = (objective(plus) - objective(minus)) / (2 * h)
        errors.append(relative_error(inputs[k].grad, numeric))
    return GradcheckResult(max(errors) if errors else 0.0, errors)
