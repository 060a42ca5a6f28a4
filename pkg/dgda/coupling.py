"""
Cross-branch teacher/student coupling on the target domain.

The frozen branch (teacher) supplies class distributions for target
utterances; rows whose top probability clears the confidence threshold are
kept, and the other branch (student) is trained on source cross-entropy plus
KL(teacher || student) over the kept rows. The two branches swap roles within
every iteration: PathNN learns from HGNN first, then HGNN from PathNN.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import ContractViolation
from .robust import PROB_FLOOR, check_distributions, cross_entropy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PseudoLabelBatch:
    indices: np.ndarray
    labels: np.ndarray
    confidences: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.size)


def generate_pseudo_labels(probs, zeta: float) -> PseudoLabelBatch:
    probs = np.asarray(probs.data if isinstance(probs, ad.Tensor) else probs, dtype=np.float64)
    check_distributions(probs, "generate_pseudo_labels")
    confidences = probs.max(axis=1)
    # argmax returns the lowest class id on ties
    labels = probs.argmax(axis=1)
    kept = np.flatnonzero(confidences > zeta)
    return PseudoLabelBatch(indices=kept, labels=labels[kept], confidences=confidences[kept])


def kl_categorical(q, p) -> float:
    """KL(q || p) with p floored at 1e-12; zero-probability entries of q contribute 0."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape or q.ndim != 1:
        raise ContractViolation(f"kl_categorical: shape mismatch {q.shape} vs {p.shape}")
    check_distributions(q[None, :], "kl_categorical")
    check_distributions(p[None, :], "kl_categorical")
    support = q > 0
    return float(np.sum(q[support] * (np.log(q[support]) - np.log(np.maximum(p[support], PROB_FLOOR)))))


def _negative_entropy(q: np.ndarray) -> float:
    safe = np.where(q > 0, q, 1.0)
    return float(np.sum(q * np.log(safe)))


def kl_to_student(teacher_rows: np.ndarray, student_rows: ad.Tensor) -> ad.Tensor:
    """Mean over rows of KL(teacher_row || student_row), differentiable in the student."""
    m = teacher_rows.shape[0]
    cross = ad.sum_all(ad.rowwise_inner(ad.Tensor(teacher_rows),
                                        ad.log(ad.clip(student_rows, PROB_FLOOR, 1.0))))
    return ad.scalar_mul(ad.sub(ad.Tensor(_negative_entropy(teacher_rows)), cross), 1.0 / m)


def coupling_loss(student_probs_src: ad.Tensor, src_labels, student_probs_tgt: ad.Tensor,
                  teacher_probs_tgt, zeta: float, hard: bool = False) -> ad.Tensor:
    if isinstance(teacher_probs_tgt, ad.Tensor):
        if teacher_probs_tgt.requires_grad:
            raise ContractViolation("coupling_loss: teacher probabilities must be detached")
        teacher_probs_tgt = teacher_probs_tgt.data
    teacher = np.asarray(teacher_probs_tgt, dtype=np.float64)
    if teacher.shape != student_probs_tgt.shape:
        raise ContractViolation(
            f"coupling_loss: teacher {teacher.shape} and student {student_probs_tgt.shape} rows differ"
        )
    source_term = cross_entropy(student_probs_src, src_labels)
    pseudo = generate_pseudo_labels(teacher, zeta)
    if len(pseudo) == 0:
        return source_term
    rows = np.eye(teacher.shape[1])[pseudo.labels] if hard else teacher[pseudo.indices]
    target_term = kl_to_student(rows, ad.take_rows(student_probs_tgt, pseudo.indices))
    return ad.add(source_term, target_term)


def elbo_surrogate(q_rows, p_rows, source_log_likelihood: float) -> float:
    """
    E_q[log p(y_t) + log p(y_s) - log q(y_t)] averaged over rows, evaluated
    directly as an expectation; equals -mean KL(q || p) + log p(y_s).
    """
    q_rows = np.atleast_2d(np.asarray(q_rows, dtype=np.float64))
    p_rows = np.atleast_2d(np.asarray(p_rows, dtype=np.float64))
    total = 0.0
    for q, p in zip(q_rows, p_rows):
        support = q > 0
        total += float(np.sum(q[support] * (np.log(np.maximum(p[support], PROB_FLOOR))
                                            + source_log_likelihood - np.log(q[support]))))
    return total / q_rows.shape[0]


@dataclass
class CouplingOptimizers:
    hgnn: ad.Adam
    pathnn: ad.Adam


@dataclass
class CouplingLosses:
    loss_pathnn_student: float
    loss_hgnn_student: float

    @property
    def total(self) -> float:
        return self.loss_pathnn_student + self.loss_hgnn_student


def alternate_branch_update(batch, model, optimizers: CouplingOptimizers, zeta: float,
                            hard: bool = False, weight: float = 1.0) -> CouplingLosses:
    """
    Step A trains PathNN against a frozen HGNN teacher, step B trains HGNN
    against the (just updated) PathNN teacher.

    ``model.branch_probabilities(domain_batch, branch)`` must return the
    per-utterance class distribution of one branch, and ``batch`` must carry
    ``source``, ``target`` and ``source_labels``.
    """
    losses = []
    for student, teacher, optimizer in (("pathnn", "hgnn", optimizers.pathnn),
                                        ("hgnn", "pathnn", optimizers.hgnn)):
        with ad.no_grad():
            teacher_probs = model.branch_probabilities(batch.target, teacher)
        loss = coupling_loss(
            model.branch_probabilities(batch.source, student),
            batch.source_labels,
            model.branch_probabilities(batch.target, student),
            teacher_probs,
            zeta,
            hard,
        )
        losses.append(loss.item())
        optimizer.step(ad.scalar_mul(loss, weight))
    logger.debug("coupling step: L1=%.6f L2=%.6f", *losses)
    return CouplingLosses(loss_pathnn_student=losses[0], loss_hgnn_student=losses[1])
