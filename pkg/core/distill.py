"""
Logit-level knowledge distillation.

    loss = lambda * CE(softmax(z_S), y) + (1 - lambda) * tau^2 * KL(p_T || p_S)

with p_T = softmax(z_T / tau) and p_S = softmax(z_S / tau). Both terms are
averaged over the batch. Teacher logits are constants.
"""
import logging
from dataclasses import dataclass

import numpy as np

from core.exceptions import BackwardError, LabelError, ShapeError
from core.functional import log_softmax_array, log_softmax_t, softmax_array
from core.tensor import Tensor, add, backward, mul, scale, sub, sum_all

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistillConfig:
    lambda_: float = 0.02
    tau: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lambda_}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


def one_hot(labels, n_classes, dtype=np.float32):
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        raise LabelError(f"labels must be a 1-d integer array, got {labels.dtype} {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"labels must lie in [0, {n_classes}), got range [{labels.min()}, {labels.max()}]")
    out = np.zeros((labels.size, n_classes), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out


def _check_logits(z, name):
    if z.ndim != 2 or z.shape[0] == 0:
        raise ShapeError(f"{name} logits must be [N,K] with N > 0, got {list(z.shape)}")


def cross_entropy(logits, labels):
    _check_logits(logits, "student")
    n, k = logits.shape
    if len(labels) != n:
        raise ShapeError(f"{len(labels)} labels for a batch of {n}")
    targets = Tensor(one_hot(labels, k, logits.dtype))
    return scale(sum_all(mul(log_softmax_t(logits, 1.0), targets)), -1.0 / n)


def teacher_array(teacher_logits, like):
    if isinstance(teacher_logits, Tensor):
        if teacher_logits.requires_grad:
            raise BackwardError("teacher logits must be detached from the tape")
        teacher_logits = teacher_logits.data
    return np.asarray(teacher_logits, dtype=like.dtype)


def softened_kl(student_logits, teacher_logits, tau):
    """tau^2 * batch-mean KL(softmax(z_T/tau) || softmax(z_S/tau))."""
    z_t = teacher_array(teacher_logits, student_logits)
    _check_logits(student_logits, "student")
    if z_t.shape != student_logits.shape:
        raise ShapeError(f"teacher logits {list(z_t.shape)} do not match student {list(student_logits.shape)}")
    p_t = Tensor(softmax_array(z_t, tau))
    log_p_t = Tensor(log_softmax_array(z_t, tau))
    pointwise = mul(p_t, sub(log_p_t, log_softmax_t(student_logits, tau)))
    return scale(sum_all(pointwise), tau * tau / student_logits.shape[0])


def kd_loss(student_logits, teacher_logits, labels, cfg):
    ce = cross_entropy(student_logits, labels)
    kl = softened_kl(student_logits, teacher_logits, cfg.tau)
    return add(scale(ce, cfg.lambda_), scale(kl, 1.0 - cfg.lambda_))


@dataclass(frozen=True)
class TauScaleReport:
    taus: tuple
    gradients: tuple
    limit: np.ndarray
    rel_errors: tuple
    tolerance: float = 0.05

    @property
    def converged(self):
        return self.rel_errors[-1] < self.tolerance


def high_temperature_limit(z_s, z_t):
    z_s, z_t = np.asarray(z_s, np.float64), np.asarray(z_t, np.float64)
    k = z_s.shape[-1]
    centered_s = z_s - z_s.mean(axis=-1, keepdims=True)
    centered_t = z_t - z_t.mean(axis=-1, keepdims=True)
    return (centered_s - centered_t) / k


def tau_scaled_gradient(z_s, z_t, tau):
    """Per-row gradient of tau^2 * KL_tau with respect to z_S, through the tape.

    softened_kl averages over the batch, so the batch size is multiplied back.
    """
    student = Tensor(np.atleast_2d(np.asarray(z_s, np.float64)), requires_grad=True)
    teacher = np.atleast_2d(np.asarray(z_t, np.float64))
    backward(softened_kl(student, teacher, tau))
    return (student.grad * student.shape[0]).reshape(np.shape(z_s))


def tau_gradient_scale_check(z_s, z_t, tau_list=(1.0, 2.0, 10.0, 100.0), tolerance=0.05):
    """Checks that tau^2 keeps soft-target gradients O(1) as tau grows.

    The largest tau is compared against the closed-form limit.
    """
    taus = tuple(sorted(float(t) for t in tau_list))
    if not taus or taus[0] < 1.0:
        raise ValueError(f"tau values must be >= 1, got {tau_list}")
    limit = high_temperature_limit(z_s, z_t)
    norm = max(np.linalg.norm(limit), 1e-12)
    gradients, errors = [], []
    for tau in taus:
        g = tau_scaled_gradient(z_s, z_t, tau)
        gradients.append(g)
        errors.append(float(np.linalg.norm(g - limit) / norm))
    report = TauScaleReport(taus, tuple(gradients), limit, tuple(errors), tolerance)
    logger.debug("tau scale check: errors %s", dict(zip(taus, errors)))
    return report
