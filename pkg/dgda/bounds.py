"""
Empirical Wasserstein-1 by exact assignment, and plug-in evaluation of the
target-risk and generalisation bounds. The evaluators are formula calculators:
every input (risks, Lipschitz product, the unobservable omega terms, the
Rademacher complexity) is supplied by the caller.
"""
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .exceptions import ContractViolation

logger = logging.getLogger(__name__)

MAX_MATCHING_SIZE = 512


def _as_samples(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def wasserstein1_exact(x, y) -> float:
    """(1/n) min over permutations of sum ||x_i - y_pi(i)||_2."""
    x, y = _as_samples(x), _as_samples(y)
    if x.shape[0] != y.shape[0]:
        raise ContractViolation(
            f"wasserstein1_exact: unequal sample counts {x.shape[0]} and {y.shape[0]}; subsample first"
        )
    if x.shape[1] != y.shape[1]:
        raise ContractViolation(f"wasserstein1_exact: dimension mismatch {x.shape[1]} vs {y.shape[1]}")
    n = x.shape[0]
    if n == 0 or n > MAX_MATCHING_SIZE:
        raise ContractViolation(f"wasserstein1_exact: need 1..{MAX_MATCHING_SIZE} samples, got {n}")
    cost = cdist(x, y, metric="euclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / n)


def subsample_equal(x, y, seed: int, max_size: int = MAX_MATCHING_SIZE):
    """Seeded subsamples of equal size min(len(x), len(y), max_size)."""
    x, y = _as_samples(x), _as_samples(y)
    rng = np.random.default_rng(seed)
    n = min(x.shape[0], y.shape[0], max_size)
    pick_x = np.sort(rng.choice(x.shape[0], size=n, replace=False))
    pick_y = np.sort(rng.choice(y.shape[0], size=n, replace=False))
    return x[pick_x], y[pick_y]


@dataclass
class BoundReport:
    empirical_source_risk: float
    empirical_target_risk: float
    source_count: int
    target_count: int
    pdim: int
    delta: float
    lipschitz_product: float
    w1: float
    omega: float
    omega_prime: float
    terms: dict = field(default_factory=dict)
    total: float = 0.0
    loose_terms: dict = field(default_factory=dict)
    loose_total: float = 0.0
    target_count_exceeds_source: bool = False

    def as_record(self) -> dict:
        return asdict(self)

    def as_key_value(self) -> str:
        lines = []
        for key, value in self.as_record().items():
            if isinstance(value, dict):
                lines.extend(f"{key}.{name}={amount!r}" for name, amount in value.items())
            else:
                lines.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
        return "\n".join(lines) + "\n"


def complexity_term(source_count: int, pdim: int, delta: float) -> float:
    inner = (4.0 * pdim / source_count) * math.log(math.e * source_count / pdim) \
        + (1.0 / source_count) * math.log(1.0 / delta)
    if inner < 0:
        raise ContractViolation(
            f"theorem1_bound: complexity term undefined for N_S={source_count}, d={pdim}"
        )
    return math.sqrt(inner)


def theorem1_bound(empirical_source_risk: float, empirical_target_risk: float, source_count: int,
                   target_count: int, pdim: int, delta: float, lipschitz_product: float, w1: float,
                   omega: float, omega_prime: float = None) -> BoundReport:
    """
    Tight line: weighted target risk + weighted (source risk + complexity)
    + weighted (2 C_f C_g W1 + omega). Loose line: source risk + complexity
    + 2 C_f C_g W1 + omega'. ``omega_prime`` defaults to ``omega``.
    """
    if not 0.0 < delta < 1.0:
        raise ContractViolation(f"theorem1_bound: delta must lie in (0, 1), got {delta}")
    if source_count < 1 or target_count < 1:
        raise ContractViolation("theorem1_bound: sample counts must be >= 1")
    if pdim < 1:
        raise ContractViolation(f"theorem1_bound: pseudo-dimension must be >= 1, got {pdim}")
    for name, value in (("source risk", empirical_source_risk), ("target risk", empirical_target_risk),
                        ("Lipschitz product", lipschitz_product), ("W1", w1), ("omega", omega)):
        if value < 0:
            raise ContractViolation(f"theorem1_bound: {name} must be >= 0, got {value}")
    omega_prime = omega if omega_prime is None else omega_prime

    total_count = source_count + target_count
    target_weight = target_count / total_count
    source_weight = source_count / total_count
    complexity = complexity_term(source_count, pdim, delta)
    transport = 2.0 * lipschitz_product * w1

    terms = {
        "target_risk": target_weight * empirical_target_risk,
        "source_risk": source_weight * empirical_source_risk,
        "complexity": source_weight * complexity,
        "transport": source_weight * transport,
        "omega": source_weight * omega,
    }
    loose_terms = {
        "source_risk": empirical_source_risk,
        "complexity": complexity,
        "transport": transport,
        "omega_prime": omega_prime,
    }
    report = BoundReport(
        empirical_source_risk=empirical_source_risk,
        empirical_target_risk=empirical_target_risk,
        source_count=source_count,
        target_count=target_count,
        pdim=pdim,
        delta=delta,
        lipschitz_product=lipschitz_product,
        w1=w1,
        omega=omega,
        omega_prime=omega_prime,
        terms=terms,
        total=sum(terms.values()),
        loose_terms=loose_terms,
        loose_total=sum(loose_terms.values()),
        target_count_exceeds_source=target_count > source_count,
    )
    if report.target_count_exceeds_source:
        logger.warning("theorem1_bound: N_T'=%d exceeds N_S=%d", target_count, source_count)
    return report


def theorem3_terms(rademacher: float, lam: float, n: int, delta: float, noise: float, eps: float,
                   margin: float) -> dict:
    """Additive terms of the generalisation bound; the O(.) constant is taken as 1."""
    if lam <= 0:
        raise ContractViolation(f"theorem3_bound: lambda must be > 0, got {lam}")
    if margin <= 0:
        raise ContractViolation(f"theorem3_bound: margin must be > 0, got {margin}")
    if not 0.0 < delta < 1.0:
        raise ContractViolation(f"theorem3_bound: delta must lie in (0, 1), got {delta}")
    if n < 1:
        raise ContractViolation(f"theorem3_bound: n must be >= 1, got {n}")
    return {
        "complexity": 2.0 * rademacher / math.sqrt(lam),
        "confidence": math.sqrt(math.log(1.0 / delta) / (2.0 * n)),
        "noise": (noise + eps) / margin,
    }


def theorem3_bound(rademacher: float, lam: float, n: int, delta: float, noise: float, eps: float,
                   margin: float) -> float:
    return sum(theorem3_terms(rademacher, lam, n, delta, noise, eps, margin).values())
