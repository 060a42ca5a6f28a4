"""
Noise-robust classification loss: cross-entropy plus a penalty on the
agreement between the current prediction and an exponential moving average of
the sample's past predictions, and the fixed-point diagnostic that goes with it.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import autodiff as ad
from .exceptions import ContractViolation

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
INNER_CEILING = 1.0 - 1e-7


def check_distributions(probs: np.ndarray, op: str, tol: float = 1e-6) -> None:
    if probs.ndim != 2 or np.any(probs < -tol) or np.any(np.abs(probs.sum(axis=1) - 1.0) > tol):
        raise ContractViolation(f"{op}: rows must be probability distributions, got shape {probs.shape}")


def _check_labels(labels: np.ndarray, n: int, k: int, op: str) -> None:
    if labels.shape != (n,):
        raise ContractViolation(f"{op}: {labels.shape} labels for {n} rows")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ContractViolation(f"{op}: labels must lie in 0..{k - 1}")


def cross_entropy(probs: ad.Tensor, labels) -> ad.Tensor:
    """Mean of -log p(label) over rows."""
    labels = np.asarray(labels, dtype=np.int64)
    _check_labels(labels, probs.shape[0], probs.shape[1], "cross_entropy")
    if labels.size == 0:
        raise ContractViolation("cross_entropy: empty batch")
    return ad.scalar_mul(ad.mean(ad.log(ad.clip(ad.pick(probs, labels), PROB_FLOOR, 1.0))), -1.0)


@dataclass
class EmaTracker:
    num_samples: int
    num_classes: int
    momentum: float = 0.7
    table: np.ndarray = field(default=None)
    initialized: np.ndarray = field(default=None)
    frozen: bool = False

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ContractViolation(f"ema: momentum must lie in [0, 1), got {self.momentum}")
        if self.table is None:
            self.table = np.zeros((self.num_samples, self.num_classes))
        if self.initialized is None:
            self.initialized = np.zeros(self.num_samples, dtype=bool)

    def rows(self, sample_ids):
        """Consistent copy of (rows, initialised mask) for the given samples."""
        sample_ids = np.asarray(sample_ids, dtype=np.int64)
        return self.table[sample_ids].copy(), self.initialized[sample_ids].copy()


def update_ema(tracker: EmaTracker, sample_ids, probs) -> EmaTracker:
    """p_hat <- beta * p_hat + (1 - beta) * probs; a first observation is copied as is."""
    if tracker.frozen:
        return tracker
    sample_ids = np.asarray(sample_ids, dtype=np.int64)
    probs = np.array(probs.data if isinstance(probs, ad.Tensor) else probs, dtype=np.float64, ndmin=2)
    check_distributions(probs, "update_ema")
    if probs.shape != (sample_ids.size, tracker.num_classes):
        raise ContractViolation(f"update_ema: {probs.shape} rows for {sample_ids.size} samples")
    fresh = ~tracker.initialized[sample_ids]
    beta = tracker.momentum
    blended = beta * tracker.table[sample_ids] + (1.0 - beta) * probs
    tracker.table[sample_ids] = np.where(fresh[:, None], probs, blended)
    tracker.initialized[sample_ids] = True
    return tracker


def cls_loss(probs: ad.Tensor, labels, ema_rows=None, lam: float = 0.7, ema_mask=None) -> ad.Tensor:
    """
    CE(probs, labels) + lam * mean(log(1 - <probs_i, ema_i>)).

    Rows whose EMA entry is not initialised yet (``ema_mask`` false)
    contribute nothing to the regulariser; the mean still divides by the
    batch size. ``lam == 0`` returns the cross-entropy term untouched.
    """
    ce = cross_entropy(probs, labels)
    if lam == 0 or ema_rows is None:
        return ce
    ema_rows = np.asarray(ema_rows, dtype=np.float64)
    if ema_rows.shape != probs.shape:
        raise ContractViolation(f"cls_loss: EMA rows {ema_rows.shape} do not match predictions {probs.shape}")
    n = probs.shape[0]
    mask = np.ones(n) if ema_mask is None else np.asarray(ema_mask, dtype=np.float64)
    inner = ad.clip(ad.rowwise_inner(probs, ad.Tensor(ema_rows)), 0.0, INNER_CEILING)
    penalty = ad.log(ad.sub(ad.Tensor(np.ones(n)), inner))
    regulariser = ad.scalar_mul(ad.sum_all(ad.hadamard(penalty, ad.Tensor(mask))), 1.0 / n)
    return ad.add(ce, ad.scalar_mul(regulariser, lam))


def fixed_point_residual(p: float, noisy_label: float, true_label: float, lam: float) -> float:
    """|p - y~ / (y~ + lam * y * (1 - p))| for the probability of the true class."""
    if not 0.0 < p <= 1.0:
        raise ContractViolation(f"fixed_point_residual: p must lie in (0, 1], got {p}")
    denominator = noisy_label + lam * true_label * (1.0 - p)
    if denominator == 0:
        raise ContractViolation("fixed_point_residual: undefined for y~ = 0 with a vanishing penalty")
    return abs(p - noisy_label / denominator)


def stationary_probability(lam: float, num_classes: int = 2, logit_bound: float = 20.0) -> float:
    """
    Minimise the one-sample loss over the true-class logit (other logits at 0)
    with a one-hot EMA target, and return the stationary true-class probability.
    """
    ema = np.zeros((1, num_classes))
    ema[0, 0] = 1.0

    def objective(z):
        logits = np.zeros((1, num_classes))
        logits[0, 0] = z
        with ad.no_grad():
            probs = ad.softmax(ad.Tensor(logits))
            return cls_loss(probs, [0], ema, lam).item()

    result = minimize_scalar(objective, bounds=(-logit_bound, logit_bound), method="bounded",
                             options={"xatol": 1e-10})
    logits = np.zeros(num_classes)
    logits[0] = result.x
    shifted = np.exp(logits - logits.max())
    return float(shifted[0] / shifted.sum())
