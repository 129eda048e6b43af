"""Turning an accurate threshold learner into a static-security distinguisher.

The adversary samples a sorted dataset, picks an index ``i``, removes a small
set ``R_i`` of points (always including ``m_i``) so that the leakage can no
longer locate points inside ``(m_{i-1}, m_{i+1})``, and then challenges on two
pairs: one inside a single bucket, the other straddling ``m_i``. A learner
trained on the remaining points separates the buckets only if its hypothesis
changes value inside the interval.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Dict, IO, List, Optional, Sequence, Tuple, Union

import numpy as np

from leaklab.concepts import LabeledExample
from leaklab.dp_toolkit import BatchLearner, group_delta_factor
from leaklab.fre_oracle import (
    ChallengeSubmission,
    CiphertextHandle,
    EvalOracle,
    GameResult,
    ParamsTag,
    run_security_game,
)
from leaklab.leakage import DistanceFunctionKind, KindLike, bit_length_array, check_bit_width, magnitude_array

PAIR_RETRIES = 32


def kappa(n: int) -> int:
    """Removal budget ``ceil(50 log2(n)^2)``."""
    return math.ceil(50 * math.log2(n) ** 2)


def guard_band(n: int, d: int) -> float:
    """``G = 4 log2(n) 2^d / n``."""
    return 4 * math.log2(n) * (1 << d) / n


# ---------------------------------------------------------------------------
# buckets


@dataclass(frozen=True)
class BucketStructure:
    """Sorted samples ``m_1..m_n`` with sentinels ``m_0 = 0`` and ``m_{n+1} = 2^d``.

    ``bucket(i)`` is ``[m_i, m_{i+1})`` for ``0 <= i <= n``; indices 1..n-1 are interior.
    """

    points: Tuple[int, ...]
    d: int

    @property
    def n(self) -> int:
        return len(self.points)

    def m(self, i: int) -> int:
        """1-based access with sentinels."""
        if i == 0:
            return 0
        if i == self.n + 1:
            return 1 << self.d
        return self.points[i - 1]

    def bucket(self, i: int) -> Tuple[int, int]:
        if not 0 <= i <= self.n:
            raise IndexError(f"bucket index {i} outside [0, {self.n}]")
        return self.m(i), self.m(i + 1)

    def interior(self) -> List[Tuple[int, int]]:
        return [self.bucket(i) for i in range(1, self.n)]

    def lengths(self, sentinels: bool = True) -> np.ndarray:
        full = np.diff(np.concatenate(([0], np.asarray(self.points, dtype=np.int64), [1 << self.d])))
        return full if sentinels else full[1:-1]


def build_buckets(points: Sequence[int], d: int) -> BucketStructure:
    d = check_bit_width(d)
    pts = tuple(int(p) for p in points)
    if any(a > b for a, b in zip(pts, pts[1:])):
        raise ValueError("plaintexts must be sorted in nondecreasing order")
    if pts and not (1 <= pts[0] and pts[-1] <= 1 << d):
        raise ValueError(f"plaintexts must lie in [1, 2^{d}]")
    return BucketStructure(pts, d)


# ---------------------------------------------------------------------------
# removal sets


@dataclass(frozen=True)
class RemovalSet:
    """0-based sample indices dropped from the context around index ``i`` (1-based)."""

    i: int
    indices: Tuple[int, ...]
    construction: str
    budget: int

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def aborted(self) -> bool:
        return self.size > self.budget


def in_removal_band(delta: np.ndarray, d: int, g: float) -> np.ndarray:
    """``|delta|`` lies within ``g`` of some ``2^z``, ``0 <= z < d``."""
    a = np.abs(np.asarray(delta, dtype=np.int64))
    # only the powers of two just below and just above |delta| can be nearest
    z = np.clip(bit_length_array(a) - 1, 0, d - 1)
    lo = np.left_shift(np.int64(1), z)
    hi = np.left_shift(np.int64(1), np.minimum(z + 1, d - 1))
    return (np.abs(a - lo) <= g) | (np.abs(a - hi) <= g)


def removal_set_Ai(S: BucketStructure, i: int, n: Optional[int] = None, d: Optional[int] = None, g: Optional[float] = None) -> RemovalSet:
    """``R_i = A_i ∩ S``: points whose distance to ``m_i`` is within ``G`` of a power of two."""
    n = S.n if n is None else n
    d = S.d if d is None else d
    if not 1 <= i <= S.n:
        raise IndexError(f"index {i} outside [1, {S.n}]")
    g = guard_band(n, d) if g is None else g
    pts = np.asarray(S.points, dtype=np.int64)
    hit = in_removal_band(pts - S.m(i), d, g)
    hit[i - 1] = True
    return RemovalSet(i, tuple(int(j) for j in np.flatnonzero(hit)), "Ai", kappa(n) if n >= 2 else 0)


def interval_bounds(S: BucketStructure, i: int) -> Tuple[int, int]:
    """Smallest and largest integers strictly inside ``(m_{i-1}, m_{i+1})``."""
    return S.m(i - 1) + 1, S.m(i + 1) - 1


def _mag(kind: KindLike):
    return lambda a, b: int(magnitude_array(kind, np.int64(a), np.int64(b)))


def _mags(kind: KindLike, a, b) -> np.ndarray:
    return magnitude_array(kind, np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))


def _pair_bits_constant(kind: KindLike, c: int, lo: int, hi: int) -> bool:
    """The bit of ``(c, z1, z2)`` does not depend on the pair ``z1 < z2`` inside ``[lo, hi]``."""
    mag = _mag(kind)
    one, wide = mag(1, 0), mag(hi, lo)
    if c < lo:
        # |d(c, z1)| < |d(z1, z2)|: never true for adjacent z's, possible iff true for (lo, hi)
        return not mag(lo, c) < wide
    # |d(z1, z2)| < |d(z2, c)|: both outcomes reachable iff (lo, lo+1) gives 1 and (lo, hi) gives 0
    return not (one < mag(c, lo + 1) and not wide < mag(c, hi))


def _single_bits_constant(kind: KindLike, c: int, others: np.ndarray, lo: int, hi: int) -> bool:
    """Every bit of ``(c, c2, z)`` is constant as ``z`` runs over either challenge slot.

    Magnitudes are nondecreasing in the gap, so each such bit is monotone in
    ``z`` and it is enough to compare the two ends of the slot's range.
    """
    others = others[others != c]
    if others.size == 0:
        return True

    def m(a, b):
        return _mags(kind, a, b)

    lo_pt = np.minimum(c, others)
    hi_pt = np.maximum(c, others)
    v = m(hi_pt, lo_pt)
    both_below = hi_pt < lo
    both_above = lo_pt > hi
    mixed = ~both_below & ~both_above
    for a, b in ((lo, hi - 1), (lo + 1, hi)):
        varies = both_below & (m(a, hi_pt) <= v) & (v < m(b, hi_pt))
        varies |= both_above & (m(lo_pt, b) < v) & (v <= m(lo_pt, a))
        varies |= mixed & ((m(a, lo_pt) < m(hi_pt, a)) != (m(b, lo_pt) < m(hi_pt, b)))
        if varies.any():
            return False
    return True


def removal_set_direct(S: BucketStructure, i: int, probe_budget: int = 4, kind: KindLike = DistanceFunctionKind.FLOOR_LOG) -> RemovalSet:
    """Drop the points the leakage could use to locate a pair inside the interval.

    First pass: keep a context point ``m`` only when its distance magnitude
    to every point of the open interval is the same (checked at the two
    extreme interior points, which suffices by monotonicity) and the
    closeness bit of ``(m, z1, z2)`` is the same for the widest and the
    narrowest pair. ``m_i`` and every other point inside the interval are
    dropped.

    Second pass (built-in kinds only): a dropped outside point whose distance
    magnitude varies across the interval is harmless unless some kept point
    turns that variation into a different closeness bit. Dropped points are
    offered back greedily, farthest first, and re-admitted when every triple
    they form with the kept points stays constant. The result is still valid
    for every challenge pair and no single dropped point can be restored.
    """
    if probe_budget < 4:
        raise ValueError("probe_budget must be >= 4")
    if not 2 <= i <= S.n - 1:
        raise IndexError(f"index {i} outside [2, {S.n - 1}]")
    lo, hi = interval_bounds(S, i)
    pts = np.asarray(S.points, dtype=np.int64)
    n = S.n
    if hi < lo:
        return RemovalSet(i, tuple(range(n)), "direct", kappa(n))
    below = pts < lo
    near = np.where(below, lo, hi)
    far = np.where(below, hi, lo)
    d_near = magnitude_array(kind, pts, near)
    d_far = magnitude_array(kind, pts, far)
    bad = d_near != d_far
    # closeness bit of the sorted triple (m, z1, z2) or (z1, z2, m) for the
    # widest pair (lo, hi) and the narrowest pair (1 apart, next to m)
    wide = magnitude_array(kind, np.int64(hi), np.int64(lo))
    tight = magnitude_array(kind, np.int64(1), np.int64(0))
    bit_wide = np.where(below, d_near < wide, wide < d_near)
    bit_tight = np.where(below, d_near < tight, tight < d_near)
    bad |= bit_wide != bit_tight
    inside = (pts >= lo) & (pts <= hi)
    bad |= inside
    bad[i - 1] = True
    if isinstance(kind, DistanceFunctionKind) and hi > lo:
        retry = [j for j in np.flatnonzero(bad & ~inside) if _pair_bits_constant(kind, int(pts[j]), lo, hi)]
        retry.sort(key=lambda j: -max(lo - int(pts[j]), int(pts[j]) - hi))
        for j in retry:
            if _single_bits_constant(kind, int(pts[j]), pts[~bad], lo, hi):
                bad[j] = False
    return RemovalSet(i, tuple(int(j) for j in np.flatnonzero(bad)), "direct", kappa(n))


# ---------------------------------------------------------------------------
# challenge construction


@dataclass(frozen=True)
class ChallengePlan:
    i: int
    left_pair: Tuple[int, int]
    right_pair: Tuple[int, int]
    context: Tuple[int, ...]  # sorted P_i
    left_bucket: int  # i-1 or i

    def sequences(self) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        return tuple(sorted(self.context + self.left_pair)), tuple(sorted(self.context + self.right_pair))

    def submission(self) -> ChallengeSubmission:
        left, right = self.sequences()
        return ChallengeSubmission(left, right)

    def challenge_positions(self) -> Tuple[int, int]:
        """0-based positions of the two challenge points in either sorted sequence."""
        below = sum(1 for m in self.context if m < self.right_pair[0])
        return below, below + 1

    def check(self, S: BucketStructure) -> None:
        """Bucket-membership invariants; raises ``AssertionError`` on violation."""
        a, b = S.bucket(self.i - 1)
        c, e = S.bucket(self.i)
        lo, hi = interval_bounds(S, self.i)
        l0, l1 = self.left_pair
        r0, r1 = self.right_pair
        assert l0 < l1
        assert all(lo <= z <= hi for z in self.left_pair + self.right_pair)
        if self.left_bucket == self.i - 1:
            assert a <= l0 and l1 < b
        else:
            assert c <= l0 and l1 < e
        assert a <= r0 < b and c <= r1 < e


def plan_challenge(
    S: BucketStructure,
    i: int,
    removal: RemovalSet,
    rng: np.random.Generator,
    retries: int = PAIR_RETRIES,
) -> Optional[ChallengePlan]:
    """Sample the two pairs; ``None`` when no feasible pair turns up within ``retries``."""
    lo, hi = interval_bounds(S, i)
    mi = S.m(i)
    # B_{i-1} without its left end, and B_i (whose right end is excluded anyway)
    b_prev = (lo, mi - 1)
    b_cur = (mi, hi)
    if b_prev[1] < b_prev[0] or b_cur[1] < b_cur[0]:
        return None
    removed = set(removal.indices)
    context = tuple(m for k, m in enumerate(S.points) if k not in removed)
    for _ in range(retries):
        j = i - 1 if rng.integers(2) == 0 else i
        blo, bhi = b_prev if j == i - 1 else b_cur
        if bhi <= blo:
            continue
        left = _two_distinct(rng, blo, bhi)
        r0 = int(rng.integers(b_prev[0], b_prev[1] + 1))
        r1 = int(rng.integers(b_cur[0], b_cur[1] + 1))
        return ChallengePlan(i, left, (r0, r1), context, j)
    return None


def _two_distinct(rng: np.random.Generator, lo: int, hi: int) -> Tuple[int, int]:
    while True:
        a, b = (int(v) for v in rng.integers(lo, hi + 1, size=2))
        if a != b:
            return (a, b) if a < b else (b, a)


# ---------------------------------------------------------------------------
# the adversary


@dataclass
class _Pending:
    plan: Optional[ChallengePlan]
    labels: Tuple[int, ...]
    aborted: bool


class Algorithm3Adversary:
    """Static-security adversary built around a batch threshold learner.

    ``focused=True`` replaces the uniform choice of ``i`` by the index where
    the learner's boundary falls on the full sample (the sorted position of
    the largest point below ``t``), clamped to ``[2, n-1]``.
    """

    def __init__(
        self,
        learner: BatchLearner,
        n: int,
        d: int,
        focused: bool = False,
        construction: str = "direct",
        kind: KindLike = DistanceFunctionKind.FLOOR_LOG,
    ) -> None:
        if n < 4:
            raise ValueError("n must be >= 4")
        if construction not in ("direct", "Ai"):
            raise ValueError(f"unknown construction {construction!r}")
        self.learner = learner
        self.n = n
        self.d = check_bit_width(d)
        self.t = 1 << (d - 1)
        self.focused = focused
        self.construction = construction
        self.kind = kind
        self.last_info: Dict[str, Any] = {}
        self.last_guess_info: Dict[str, Any] = {}
        self._pending: Optional[_Pending] = None

    def _pick_i(self, S: BucketStructure, rng: np.random.Generator) -> int:
        if self.focused:
            k = int(np.searchsorted(np.asarray(S.points), self.t, side="left"))
            return min(max(k, 2), self.n - 1)
        return int(rng.integers(2, self.n))

    def challenge(self, rng: np.random.Generator) -> ChallengeSubmission:
        pts = np.sort(rng.integers(1, (1 << self.d) + 1, size=self.n))
        S = build_buckets(pts.tolist(), self.d)
        i = self._pick_i(S, rng)
        if self.construction == "direct":
            R = removal_set_direct(S, i, kind=self.kind)
        else:
            R = removal_set_Ai(S, i)
        plan = None if R.aborted else plan_challenge(S, i, R, rng)
        if plan is None:
            self._pending = _Pending(None, (), True)
            self.last_info = {"i": i, "aborted": True, "r_size": R.size}
            # something trivially valid, so the trial still runs
            return ChallengeSubmission((1,), (1,))
        plan.check(S)
        labels = tuple(int(m < self.t) for m in plan.context)
        self._pending = _Pending(plan, labels, False)
        self.last_info = {"i": i, "aborted": False, "r_size": R.size}
        return plan.submission()

    def guess(self, params: ParamsTag, ciphertexts: List[CiphertextHandle], oracle: EvalOracle, rng: np.random.Generator) -> int:
        pending, self._pending = self._pending, None
        if pending is None or pending.aborted:
            self.last_guess_info = {"agree": None}
            return int(rng.integers(2))
        p0, p1 = pending.plan.challenge_positions()
        rest = [c for k, c in enumerate(ciphertexts) if k not in (p0, p1)]
        samples = [LabeledExample(c, params, y) for c, y in zip(rest, pending.labels)]
        h = self.learner.learn(samples, oracle, self.d, rng)
        agree = int(h((ciphertexts[p0], params))) == int(h((ciphertexts[p1], params)))
        self.last_guess_info = {"agree": agree}
        return 0 if agree else 1


def algorithm3_adversary(learner: BatchLearner, n: int, d: int, focused: bool = False, construction: str = "direct") -> Algorithm3Adversary:
    return Algorithm3Adversary(learner, n, d, focused, construction)


@dataclass
class AttackResult:
    game: GameResult
    aborted: int

    @property
    def trials(self) -> int:
        return len(self.game.records)

    @property
    def abort_rate(self) -> float:
        return self.aborted / self.trials

    @property
    def p_hat_agree(self) -> float:
        seen = [r.info.get("agree") for r in self.game.records if r.info.get("agree") is not None]
        return sum(seen) / len(seen) if seen else float("nan")

    def summary(self) -> Dict[str, Any]:
        est = self.game.estimate
        out = est.to_dict()
        out.update(
            {
                "aborted": self.aborted,
                "abort_rate": round(self.abort_rate, 12),
                "invalid": self.game.invalid_count,
                "p_hat_agree": round(self.p_hat_agree, 12),
                "z_score": round(est.signed_gap / est.sigma, 12) if est.sigma > 0 else 0.0,
            }
        )
        return out

    def write_jsonl(self, fh: IO[str]) -> None:
        for r in self.game.records:
            row = {
                "trial": r.trial,
                "i": r.info.get("i"),
                "aborted": r.info.get("aborted"),
                "r_size": r.info.get("r_size"),
                "b": r.b,
                "b_guess": r.output,
                "p_hat_agree": r.info.get("agree"),
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def run_attack(adversary: Algorithm3Adversary, trials: int, seed: int, jobs: Optional[int] = 1) -> AttackResult:
    game = run_security_game(adversary, trials, seed, adversary.d, adversary.kind, jobs)
    aborted = sum(bool(r.info.get("aborted")) for r in game.records)
    return AttackResult(game, aborted)


# ---------------------------------------------------------------------------
# the advantage identity and the jump lemma core


def advantage_identity(p_i: float, p_next: float) -> float:
    return 0.5 * (1 + (p_i - p_next) ** 2)


@dataclass(frozen=True)
class IdentityCheck:
    empirical: float
    analytic: float
    trials: int

    @property
    def error(self) -> float:
        return abs(self.empirical - self.analytic)


def advantage_identity_check(p_i: float, p_next: float, trials: int, seed: int) -> IdentityCheck:
    """Simulate the agree/disagree rule with Bernoulli hypotheses on the two buckets.

    Left world: both points come from one bucket chosen by a fair coin.
    Right world: one point from each bucket.
    """
    for p in (p_i, p_next):
        if not 0 <= p <= 1:
            raise ValueError(f"probability {p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    b = rng.integers(2, size=trials)
    j = rng.integers(2, size=trials)
    p_first = np.where(b == 0, np.where(j == 0, p_i, p_next), p_i)
    p_second = np.where(b == 0, p_first, p_next)
    h0 = rng.random(trials) < p_first
    h1 = rng.random(trials) < p_second
    guess = (h0 != h1).astype(np.int64)
    return IdentityCheck(float(np.mean(guess == b)), advantage_identity(p_i, p_next), trials)


@dataclass(frozen=True)
class Implied:
    accuracy: float
    max_gap: float
    verdict = "Implied"


@dataclass(frozen=True)
class JumpCounterexample:
    accuracy: float
    max_gap: float
    verdict = "Counterexample"


def _jump_accuracy(p: np.ndarray, lengths: np.ndarray, k: int, la: float, lb: float) -> float:
    return float(np.dot(p[:k], lengths[:k]) + np.dot(1 - p[k + 1 :], lengths[k + 1 :]) + p[k] * la + (1 - p[k]) * lb)


def jump_core_check(p: Sequence[float], lengths: Sequence[float], split: Tuple[int, float, float], n: Optional[int] = None, tol: float = 1e-9) -> Union[Implied, JumpCounterexample]:
    """Accuracy >= 3/4 forces an adjacent gap ``|p_i - p_{i+1}| >= 1/(2n)``.

    ``split = (k, l_a, l_b)`` puts the threshold in bucket ``k`` (0-based)
    with ``l_a`` of it on the positive side; ``lengths[k]`` is ignored.
    """
    p = np.asarray(p, dtype=np.float64)
    ell = np.asarray(lengths, dtype=np.float64)
    k, la, lb = split
    n = len(p) if n is None else n
    if ell.shape != p.shape or len(p) < 1:
        raise ValueError("p and lengths must be non-empty and of equal length")
    if not 0 <= k < len(p):
        raise ValueError("split index outside the bucket range")
    if (ell < 0).any() or la < 0 or lb < 0:
        raise ValueError("lengths must be nonnegative")
    if abs(ell[:k].sum() + la - 0.5) > tol or abs(ell[k + 1 :].sum() + lb - 0.5) > tol:
        raise ValueError("each side of the threshold must carry mass 1/2")
    if ((p < 0) | (p > 1)).any():
        raise ValueError("p must lie in [0, 1]")
    acc = _jump_accuracy(p, ell, k, la, lb)
    gap = float(np.abs(np.diff(p)).max()) if len(p) > 1 else 0.0
    if acc >= 0.75 and gap < 1 / (2 * n) - tol:
        return JumpCounterexample(acc, gap)
    return Implied(acc, gap)


def random_jump_instances(n: int, count: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """``count`` random instances ``(p, lengths, k, l_a, l_b)``, feasibility not yet filtered.

    Hypothesis profiles mix four families: a noisy step at the threshold, a
    linear ramp (the shape that gets closest to the bound), a sorted random
    profile and plain noise. Bucket masses are skewed Dirichlet draws with
    some buckets emptied.
    """
    c = count
    k = rng.integers(n, size=c)
    slot = np.arange(n + 1)[None, :]
    # slots: j < k left buckets, j == k is l_a, j == k+1 is l_b, j > k+1 right bucket j-1
    w = rng.exponential(size=(c, n + 1)) ** rng.uniform(0.2, 3.0, size=(c, 1))
    w *= rng.random((c, n + 1)) > rng.uniform(0, 0.3, size=(c, 1))
    w += 1e-12
    left = slot <= k[:, None]
    w = np.where(left, w / np.where(left, w, 0).sum(axis=1, keepdims=True), w / np.where(~left, w, 0).sum(axis=1, keepdims=True)) * 0.5
    la = w[np.arange(c), k]
    lb = w[np.arange(c), k + 1]
    ell = np.where(slot[:, :n] < k[:, None], w[:, :n], w[:, 1:])
    ell[np.arange(c), k] = la + lb

    idx = np.arange(n)[None, :] / max(n - 1, 1)
    family = rng.integers(4, size=(c, 1))
    step = (np.arange(n)[None, :] < k[:, None]).astype(np.float64)
    step[np.arange(c), k] = rng.random(c)
    sharp = rng.random((c, 1))
    noisy_step = sharp * step + (1 - sharp) * 0.5 + (rng.random((c, n)) - 0.5) * rng.random((c, 1))
    top = rng.uniform(0.5, 1.0, size=(c, 1))
    bottom = rng.uniform(0.0, 0.5, size=(c, 1))
    ramp = top - (top - bottom) * idx + (rng.random((c, n)) - 0.5) * rng.uniform(0, 0.05, size=(c, 1))
    sorted_random = -np.sort(-rng.random((c, n)), axis=1)
    noise = rng.random((c, n))
    p = np.choose(family, [noisy_step, ramp, sorted_random, noise])
    return np.clip(p, 0, 1), ell, k, la, lb


def _batch_accuracy(p: np.ndarray, ell: np.ndarray, k: np.ndarray, la: np.ndarray, lb: np.ndarray) -> np.ndarray:
    j = np.arange(p.shape[1])[None, :]
    rows = np.arange(p.shape[0])
    pk = p[rows, k]
    return (np.where(j < k[:, None], p * ell, 0).sum(axis=1) + np.where(j > k[:, None], (1 - p) * ell, 0).sum(axis=1) + pk * la + (1 - pk) * lb)


@dataclass(frozen=True)
class JumpSearch:
    n: int
    generated: int
    feasible: int
    counterexamples: int
    min_gap_over_bound: float  # smallest max-adjacent-gap among feasible instances, in units of 1/(2n)


def jump_core_search(n: int, instances: int, seed: int, batch: int = 20_000, min_accuracy: float = 0.75) -> JumpSearch:
    """Draw until ``instances`` feasible (accuracy >= 3/4) instances have been checked."""
    rng = np.random.default_rng(seed)
    feasible = generated = bad = 0
    best = math.inf
    while feasible < instances:
        p, ell, k, la, lb = random_jump_instances(n, batch, rng)
        generated += batch
        acc = _batch_accuracy(p, ell, k, la, lb)
        keep = np.flatnonzero(acc >= min_accuracy)[: instances - feasible]
        feasible += len(keep)
        if len(keep) == 0:
            continue
        gaps = np.abs(np.diff(p[keep], axis=1)).max(axis=1) if n > 1 else np.zeros(len(keep))
        bad += int((gaps < 1 / (2 * n) - 1e-9).sum())
        best = min(best, float(gaps.min()) * 2 * n)
    return JumpSearch(n, generated, feasible, bad, best)


def random_jump_instance(n: int, rng: np.random.Generator, min_accuracy: float = 0.75, max_tries: int = 100) -> Tuple[np.ndarray, np.ndarray, Tuple[int, float, float]]:
    """One feasible instance in the format taken by :func:`jump_core_check`."""
    for _ in range(max_tries):
        p, ell, k, la, lb = random_jump_instances(n, 64, rng)
        ok = np.flatnonzero(_batch_accuracy(p, ell, k, la, lb) >= min_accuracy)
        if len(ok):
            r = int(ok[0])
            return p[r], ell[r], (int(k[r]), float(la[r]), float(lb[r]))
    raise RuntimeError("no accurate instance found")


def group_privacy_advantage_floor(base_prob: float, epsilon: float, delta: float, k: int) -> float:
    """Lower bound on ``Pr[A(L(S_i)) ∈ T]`` given ``Pr[A(L(S)) ∈ T] = base_prob`` and ``|R_i| = k``."""
    if not 0 <= base_prob <= 1:
        raise ValueError("base_prob must lie in [0, 1]")
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return base_prob
    slack = delta * group_delta_factor(epsilon, k)
    return max(0.0, (base_prob - slack) * math.exp(-k * epsilon))
