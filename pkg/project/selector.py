import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, TextIO, Union

import numpy as np

from project.errors import SelectionError
from project.job_model import JobSpec

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-30

SIMPLEX_TOLERANCE = 1e-12


@dataclass(frozen=True)
class WeightVector:
    """Strictly positive weights over the policy pool summing to 1."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > SIMPLEX_TOLERANCE:
            raise ValueError("weights must be positive and sum to 1")
        object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return len(self.w)


@dataclass(frozen=True)
class UtilityVector:
    """Normalized utilities in [0, 1], one per policy."""

    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.ndim != 1 or np.any(u < 0) or np.any(u > 1):
            raise ValueError("utilities must be a vector in [0, 1]")
        object.__setattr__(self, "u", u)


@dataclass
class SelectionRun:
    """
    History of an online selection run. Row k of `weights` is the vector used for job k (before its update).
    """

    K: int
    eta: float
    weights: List[np.ndarray] = field(default_factory=list)
    utilities: List[np.ndarray] = field(default_factory=list)
    chosen: List[int] = field(default_factory=list)
    final_weights: Optional[np.ndarray] = None

    @property
    def expected_utilities(self) -> np.ndarray:
        return np.array([float(w @ u) for w, u in zip(self.weights, self.utilities)])

    def leader(self) -> int:
        """Index of the largest final weight."""
        final = self.final_weights if self.final_weights is not None else self.weights[-1]
        return int(np.argmax(final))


def default_eta(K: int, M: int) -> float:
    return math.sqrt(2.0 * math.log(M) / K)


def regret_bound(K: int, M: int) -> float:
    return math.sqrt(2.0 * K * math.log(M))


def init_weights(M: int) -> WeightVector:
    if M < 1:
        raise ValueError("policy pool must be nonempty")
    return WeightVector(np.full(M, 1.0 / M))


def normalize_utility(raw: float, u_min: float, u_max: float) -> float:
    """
    Maps raw utility affinely onto [0, 1] after clamping into [u_min, u_max].
    """
    if u_min >= u_max:
        raise ValueError("u_min must be below u_max")
    clamped = min(max(raw, u_min), u_max)
    return (clamped - u_min) / (u_max - u_min)


def utility_bounds(job: JobSpec, od_price: float) -> tuple:
    """Full-horizon maximal on-demand spend with zero value, and the full value at zero cost."""
    return -job.deadline * job.n_max * od_price, job.value


def update_weights(w: WeightVector, u: UtilityVector, eta: float) -> WeightVector:
    """
    Exponentiated-gradient step w_i·exp(eta·u_i) / Σ w_j·exp(eta·u_j). The largest utility is subtracted
    inside the exponent, which leaves the result unchanged but keeps exp from overflowing.
    """
    if len(w.w) != len(u.u):
        raise ValueError("weight and utility vectors differ in length")
    if eta < 0:
        raise ValueError("learning rate must be nonnegative")
    scaled = w.w * np.exp(eta * (u.u - u.u.max()))
    scaled /= scaled.sum()
    scaled = np.maximum(scaled, WEIGHT_FLOOR)
    return WeightVector(scaled / scaled.sum())


def select_policy(w: WeightVector, rng: Union[int, np.random.Generator]) -> int:
    """Samples index m with probability w_m."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return int(rng.choice(len(w.w), p=w.w))


Scorer = Callable[[int, JobSpec, int], float]


def run_selection(
    pool_size: int,
    jobs: Sequence[JobSpec],
    scorer: Scorer,
    eta: Optional[float] = None,
    seed: int = 0,
    on_iteration: Optional[Callable[[int], None]] = None,
) -> SelectionRun:
    """
    Online policy selection with full-information feedback.

    For every job k, `scorer(k, job, m)` returns the normalized utility policy m would have earned; all
    pool_size policies are scored before the weights move. The executed policy is sampled from the current
    weights by a generator seeded once with `seed`.

    Args:
        pool_size (int): M.
        jobs (Sequence[JobSpec]): the K jobs, in arrival order.
        scorer (Scorer): normalized utility in [0, 1] of policy m on job k.
        eta (Optional[float]): learning rate; defaults to sqrt(2 ln M / K).
        seed (int): seed of the sampling generator.
        on_iteration: called with k before job k is scored (used to switch environments between phases).

    Returns:
        SelectionRun: weights, utilities and chosen index per iteration.

    Raises:
        SelectionError: a policy simulation raised; carries (k, m).
    """
    K = len(jobs)
    if K < 1:
        raise ValueError("need at least one job")
    w = init_weights(pool_size)
    eta = default_eta(K, pool_size) if eta is None else eta
    run = SelectionRun(K=K, eta=eta)
    rng = np.random.default_rng(seed)
    for k, job in enumerate(jobs):
        if on_iteration is not None:
            on_iteration(k)
        chosen = select_policy(w, rng)
        scores = np.empty(pool_size)
        for m in range(pool_size):
            try:
                scores[m] = scorer(k, job, m)
            except Exception as e:
                raise SelectionError(k, m, e) from e
        u = UtilityVector(scores)
        run.weights.append(w.w)
        run.utilities.append(u.u)
        run.chosen.append(chosen)
        w = update_weights(w, u, eta)
        if k % 100 == 0:
            logger.debug("selection iteration %d: leader %d (w=%.4f)", k, int(np.argmax(w.w)), w.w.max())
    run.final_weights = w.w
    return run


def regret(run: SelectionRun) -> float:
    """Best fixed policy's cumulative utility minus the selector's cumulative expected utility."""
    if not run.utilities:
        return 0.0
    totals = np.sum(run.utilities, axis=0)
    return float(totals.max() - run.expected_utilities.sum())


def export_history(run: SelectionRun, sink: TextIO) -> None:
    """Writes one JSON object per iteration: k, chosen, eta, weights, utilities."""
    for k, (w, u, chosen) in enumerate(zip(run.weights, run.utilities, run.chosen)):
        record = {
            "k": k,
            "chosen": chosen,
            "eta": run.eta,
            "weights": [float(x) for x in w],
            "utilities": [float(x) for x in u],
        }
        sink.write(json.dumps(record) + "\n")
