"""Privacy accounting and two reference learners for encrypted thresholds.

Batch learners share one calling convention::

    h = learner.learn(samples, oracle, d, rng)

where ``samples`` is a sequence of :class:`~leaklab.concepts.LabeledExample`,
``oracle`` an :class:`~leaklab.fre_oracle.EvalOracle` and ``h`` maps an
``(ciphertext, params)`` example to 0 or 1.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from leaklab._parallel import trial_rng
from leaklab.concepts import EncThresholdConcept, Hypothesis, LabeledExample, generalization_error, sample_sorted_dataset
from leaklab.fre_oracle import EvalOracle, ParamsTag
from leaklab.leakage import Comparison, DistanceFunctionKind, KindLike

SIG_DIGITS = 12


class PreconditionError(ValueError):
    pass


class UnsupportedLeakageError(ValueError):
    pass


def round_sig(x: float, digits: int = SIG_DIGITS) -> float:
    return float(f"{x:.{digits}g}")


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float

    def __post_init__(self) -> None:
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0 <= self.delta <= 1:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")

    def to_dict(self) -> Dict[str, float]:
        return {"epsilon": round_sig(self.epsilon), "delta": round_sig(self.delta)}


@dataclass(frozen=True)
class LearnerSpec:
    name: str
    privacy: Optional[PrivacyParams]
    sample_budget: int
    alpha: float = 0.25
    beta: float = 0.25


def group_delta_factor(epsilon: float, k: int) -> float:
    """``(e^{k eps} - 1) / (e^eps - 1)``, with its limit ``k`` at ``eps = 0``."""
    if epsilon == 0:
        return float(k)
    return math.expm1(k * epsilon) / math.expm1(epsilon)


def group_privacy(p: PrivacyParams, k: int) -> PrivacyParams:
    """Guarantee for datasets differing in ``k`` records.

    A delta of 1 or more says nothing, so the result is capped at 1.
    """
    if k < 1:
        raise PreconditionError(f"group size must be >= 1, got {k}")
    delta = p.delta * group_delta_factor(p.epsilon, k) if p.delta else 0.0
    return PrivacyParams(k * p.epsilon, min(1.0, delta))


def compose(p1: PrivacyParams, p2: PrivacyParams) -> PrivacyParams:
    return PrivacyParams(p1.epsilon + p2.epsilon, min(1.0, p1.delta + p2.delta))


def subsample_amplify(p: PrivacyParams, m: int, n: int) -> PrivacyParams:
    """Amplification for running on ``m`` of ``n`` records drawn without replacement."""
    if p.epsilon > 1:
        raise PreconditionError(f"amplification needs epsilon <= 1, got {p.epsilon}")
    if m < 1:
        raise PreconditionError(f"subsample size must be >= 1, got {m}")
    if n < 2 * m:
        raise PreconditionError(f"amplification needs n >= 2m, got n={n}, m={m}")
    return PrivacyParams(math.expm1(p.epsilon) * m / n, p.delta * m / n)


# ---------------------------------------------------------------------------
# learners


class BatchLearner(Protocol):
    spec: LearnerSpec

    def learn(self, samples: Sequence[LabeledExample], oracle: EvalOracle, d: int, rng: np.random.Generator) -> Hypothesis: ...


def _common_params(samples: Sequence[LabeledExample]) -> Optional[ParamsTag]:
    return samples[0].params if samples else None


def _cmp(oracle: EvalOracle, params: ParamsTag, a: Any, b: Any) -> Optional[Comparison]:
    out = oracle.eval(params, a, b, b)
    return None if out is None else out.c01


class _AtMost:
    """``x -> 1`` iff ``x`` is a valid example with plaintext at most that of ``anchor``."""

    def __init__(self, oracle: EvalOracle, params: ParamsTag, anchor: Any) -> None:
        self.oracle = oracle
        self.params = params
        self.anchor = anchor

    def __call__(self, c: Any, params: Any = None) -> int:
        if params is None:
            c, params = c
        if params != self.params:
            return 0
        order = _cmp(self.oracle, self.params, c, self.anchor)
        return int(order is not None and order is not Comparison.GREATER)


def _zero(c: Any, params: Any = None) -> int:
    return 0


class LargestPositiveLearner:
    """Non-private: keep the largest positive example and predict 1 at or below it."""

    name = "largest_positive"

    def __init__(self, n: int = 0) -> None:
        self.spec = LearnerSpec(self.name, None, n)

    def learn(self, samples: Sequence[LabeledExample], oracle: EvalOracle, d: int = 0, rng: Any = None) -> Hypothesis:
        params = _common_params(samples)
        best = None
        for s in samples:
            if s.label != 1 or s.params != params:
                continue
            if best is None or _cmp(oracle, params, s.ciphertext, best) is Comparison.GREATER:
                best = s.ciphertext
        if best is None:
            return _zero
        return _AtMost(oracle, params, best)


def largest_positive_learner(n: int = 0) -> LargestPositiveLearner:
    return LargestPositiveLearner(n)


@dataclass
class IntervalChoice:
    """Output of one exponential-mechanism draw, for inspection in tests."""

    index: int
    probabilities: np.ndarray
    lengths: np.ndarray
    utilities: np.ndarray


class ExpMechThresholdLearner:
    """Exponential mechanism over the ``n + 1`` gaps between sorted training points.

    Gap ``j`` (``0 <= j <= n``) stands for every threshold that labels the
    first ``j`` sorted points positive. Its base measure is the number of
    such thresholds, read off exact-distance leakage for interior gaps; the
    two outer gaps share the remaining ``2^d + 1 - (m_n - m_1)`` evenly
    because their split is not observable. The utility is minus the number
    of training mistakes, which has sensitivity 1.
    """

    name = "expmech"

    def __init__(self, epsilon: float, kind: KindLike = DistanceFunctionKind.EXACT, n: int = 0) -> None:
        if kind is not DistanceFunctionKind.EXACT:
            raise UnsupportedLeakageError(f"the exponential-mechanism learner needs exact distances, got {kind}")
        if not epsilon > 0:
            raise ValueError("epsilon must be > 0")
        self.epsilon = float(epsilon)
        self.kind = kind
        self.spec = LearnerSpec(self.name, PrivacyParams(self.epsilon, 0.0), n)
        self.last: Optional[IntervalChoice] = None

    def _sorted(self, samples: Sequence[LabeledExample], oracle: EvalOracle, params: ParamsTag) -> List[LabeledExample]:
        def order(a: LabeledExample, b: LabeledExample) -> int:
            c = _cmp(oracle, params, a.ciphertext, b.ciphertext)
            if c is None:
                raise ValueError("training ciphertext rejected by the evaluator")
            return int(c)

        return sorted(samples, key=functools.cmp_to_key(order))

    def selection(self, samples: Sequence[LabeledExample], oracle: EvalOracle, d: int) -> Tuple[List[LabeledExample], np.ndarray, np.ndarray, np.ndarray]:
        """Sorted samples, gap lengths, utilities and selection probabilities."""
        params = _common_params(samples)
        samples = [s for s in samples if s.params == params]
        if not samples:
            raise ValueError("no training examples")
        ordered = self._sorted(samples, oracle, params)
        n = len(ordered)
        gaps = np.zeros(n + 1, dtype=np.float64)
        for j in range(1, n):
            g = oracle.exact_distance(params, ordered[j].ciphertext, ordered[j - 1].ciphertext)
            if g is None:
                raise ValueError("exact distance unavailable")
            gaps[j] = g
        residual = (1 << d) + 1 - gaps[1:n].sum()
        gaps[0] = gaps[n] = residual / 2
        labels = np.array([s.label for s in ordered], dtype=np.int64)
        # errors(j) = positives after position j + negatives among the first j
        pos_after = np.concatenate(([labels.sum()], labels.sum() - np.cumsum(labels)))
        neg_before = np.concatenate(([0], np.cumsum(1 - labels)))
        utility = -(pos_after + neg_before).astype(np.float64)
        with np.errstate(divide="ignore"):
            logw = np.log(gaps) + self.epsilon * utility / 2
        logw -= logw.max()
        w = np.exp(logw)
        return ordered, gaps, utility, w / w.sum()

    def learn(self, samples: Sequence[LabeledExample], oracle: EvalOracle, d: int, rng: np.random.Generator) -> Hypothesis:
        ordered, gaps, utility, probs = self.selection(samples, oracle, d)
        j = int(rng.choice(len(probs), p=probs))
        self.last = IntervalChoice(j, probs, gaps, utility)
        if j == 0:
            return _zero
        return _AtMost(oracle, ordered[0].params, ordered[j - 1].ciphertext)


def exp_mech_threshold_learner(epsilon: float, kind: KindLike = DistanceFunctionKind.EXACT) -> ExpMechThresholdLearner:
    return ExpMechThresholdLearner(epsilon, kind)


# ---------------------------------------------------------------------------
# accuracy


@dataclass(frozen=True)
class AccuracyCurve:
    errors: Tuple[float, ...]  # sorted ascending

    def fraction_within(self, alpha: float) -> float:
        """Empirical ``Pr[error <= alpha]``."""
        return float(np.searchsorted(self.errors, alpha, side="right")) / len(self.errors)

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.errors, q))

    @property
    def median(self) -> float:
        return self.quantile(0.5)

    def cdf(self) -> List[Tuple[float, float]]:
        """Step points ``(error, Pr[E <= error])``."""
        n = len(self.errors)
        out: List[Tuple[float, float]] = []
        for i, e in enumerate(self.errors):
            if out and out[-1][0] == e:
                out[-1] = (e, (i + 1) / n)
            else:
                out.append((e, (i + 1) / n))
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trials": len(self.errors),
            "median": round_sig(self.median),
            "max": round_sig(self.errors[-1]),
            "within_quarter": round_sig(self.fraction_within(0.25)),
            "cdf": [[round_sig(e), round_sig(p)] for e, p in self.cdf()],
        }


def accuracy_harness(
    learner: Union[BatchLearner, Callable[..., Hypothesis]],
    concept: EncThresholdConcept,
    n: int,
    trials: int,
    seed: int,
    mc_samples: int = 2000,
) -> AccuracyCurve:
    """Train on ``trials`` fresh datasets of size ``n`` and estimate each hypothesis' error.

    ``learner`` is either a batch learner or a bare ``learn``-style callable.
    """
    learn = getattr(learner, "learn", learner)
    oracle = concept.registry.view()
    errs = []
    for k in range(trials):
        rng = trial_rng(seed, k)
        data = sample_sorted_dataset(concept.registry, concept.sk, concept.params, concept.t, n, rng)
        h = learn(list(data.examples), oracle, concept.d, rng)
        errs.append(generalization_error(concept.registry, concept.sk, concept.t, h, mc_samples, rng))
    return AccuracyCurve(tuple(sorted(errs)))
