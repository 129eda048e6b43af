"""Mistake-bounded online learning: game engine, learners, adversaries.

Two kinds of game share one loop. In a plain game examples are bare
plaintexts and the concept is a :class:`ThresholdConcept`. In an encrypted
game examples are ``(handle, params)`` pairs, the concept is an
:class:`EncThresholdConcept`, and the learner only ever talks to an
:class:`EvalOracle`.

The harness, which holds the secret key, labels each example and records the
learner's potential ``|dist(Dec(c+), Dec(c-))|`` after every round.
"""

from __future__ import annotations

import copy
import csv
import io
from dataclasses import dataclass, field
from typing import Any, Hashable, List, NamedTuple, Optional, Protocol, Sequence, Union

import numpy as np

from leaklab.concepts import EncThresholdConcept, ThresholdConcept
from leaklab.fre_oracle import EvalOracle, KeyRegistry
from leaklab.leakage import Comparison, DistanceFunctionKind, KindLike, distance, fld

Concept = Union[ThresholdConcept, EncThresholdConcept]

_LE = (Comparison.GREATER, Comparison.EQUAL)  # Comp(c+, c) in these  <=>  c <= c+


class Round(NamedTuple):
    index: int
    plaintext: Optional[int]  # harness-only
    prediction: int
    label: int
    mistake: bool
    potential_after: Optional[int]
    phase: Optional[str]
    branch: Optional[str]
    note: str = ""


@dataclass
class GameTranscript:
    rounds: List[Round]
    learner_name: str
    adversary_name: str
    seed: int
    d: int
    halted_early: bool = False

    @property
    def total_mistakes(self) -> int:
        return sum(r.mistake for r in self.rounds)

    def to_csv(self, fh: Optional[io.TextIOBase] = None) -> str:
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "plaintext", "prediction", "label", "mistake", "potential"])
        for r in self.rounds:
            w.writerow([
                r.index,
                "" if r.plaintext is None else r.plaintext,
                r.prediction,
                r.label,
                int(r.mistake),
                "" if r.potential_after is None else r.potential_after,
            ])
        return buf.getvalue() if fh is None else ""


# ---------------------------------------------------------------------------
# learners


class Learner(Protocol):
    name: str

    def predict(self, x: Any) -> int: ...

    def observe(self, x: Any, label: int) -> None: ...

    def clone(self) -> "Learner": ...

    def anchors(self) -> Optional[tuple]: ...

    def state_key(self) -> Hashable: ...


class _LearnerBase:
    name = "learner"
    phase: Optional[str] = None

    def clone(self):
        return copy.copy(self)

    def anchors(self) -> Optional[tuple]:
        return None

    def state_key(self) -> Hashable:
        return None


class ConstantLearner(_LearnerBase):
    def __init__(self, value: int = 0) -> None:
        self.value = int(value)
        self.name = f"constant{self.value}"
        self.last_branch = "constant"

    def predict(self, x: Any) -> int:
        return self.value

    def observe(self, x: Any, label: int) -> None:
        pass


class HalvingLearner(_LearnerBase):
    """Binary search over thresholds of ``[2^d]``.

    The version space is ``t in (t_plus, t_minus]``, starting from
    ``t_plus = 0`` and ``t_minus = 2^d``. With ``mid = floor((t_plus + t_minus)/2)``
    the learner predicts 1 exactly when ``x <= mid``; a mistake moves
    ``t_plus`` or ``t_minus`` to ``x`` and at least halves the space.
    """

    name = "halving"

    def __init__(self, d: int) -> None:
        self.d = d
        self.t_plus = 0
        self.t_minus = 1 << d
        self.last_branch = "mid"

    @property
    def midpoint(self) -> int:
        return (self.t_plus + self.t_minus) // 2

    def predict(self, x: Any) -> int:
        return int(int(x) <= self.midpoint)

    def observe(self, x: Any, label: int) -> None:
        x = int(x)
        y_hat = self.predict(x)
        if y_hat == label:
            return
        if y_hat == 1:
            self.t_minus = x
        else:
            self.t_plus = x

    def anchors(self) -> Optional[tuple]:
        return (self.t_plus, self.t_minus) if self.t_plus >= 1 else None

    def state_key(self) -> Hashable:
        return (self.t_plus, self.t_minus)


class LEncThrLearner(_LearnerBase):
    """Online learner for encrypted thresholds under bisection leakage.

    Phase A predicts 0 until the first mistake, which fixes ``params`` and the
    positive anchor ``c+``. Phase B predicts 1 on every well-formed example
    until a mistake supplies the negative anchor ``c-``. Phase C runs the
    distance-halving rule: examples at or below ``c+`` get 1, at or above
    ``c-`` get 0, and anything in between follows the closeness bit of
    ``Eval(params, c+, c, c-)``.
    """

    name = "lencthr"

    def __init__(self, oracle: EvalOracle, kind: KindLike = DistanceFunctionKind.FLOOR_LOG) -> None:
        self.oracle = oracle
        self.kind = kind
        self.params = None
        self.c_plus = None
        self.c_minus = None
        self.last_branch: Optional[str] = None
        self._last = None

    @property
    def phase(self) -> str:
        if self.params is None:
            return "A"
        if self.c_minus is None:
            return "B"
        return "C"

    def _decide(self, x: Any) -> tuple:
        c, p = x
        if self.params is None:
            return 0, "bootstrap"
        if p != self.params:
            return 0, "params"
        if self.c_minus is None:
            out = self.oracle.eval(self.params, self.c_plus, c, self.c_plus)
            if out is None:
                return 0, "params"
            return 1, ("le_plus" if out.c01 in _LE else "bootstrap")
        out = self.oracle.eval(self.params, self.c_plus, c, self.c_minus)
        if out is None:
            return 0, "params"
        if out.c01 in _LE:
            return 1, "le_plus"
        if out.c12 is not Comparison.LESS:
            return 0, "ge_minus"
        return out.closeness_bit, "dist"

    def predict(self, x: Any) -> int:
        y_hat, branch = self._decide(x)
        self._last = (x, y_hat, branch)
        self.last_branch = branch
        return y_hat

    def observe(self, x: Any, label: int) -> None:
        last = self._last
        if last is not None and (last[0] is x or last[0] == x):
            _, y_hat, branch = last
        else:
            y_hat, branch = self._decide(x)
        self._last = None
        if y_hat == label:
            return
        c, p = x
        if branch == "bootstrap" and self.params is None:
            if label == 1:
                self.params, self.c_plus = p, c
        elif branch == "bootstrap":
            if label == 0:
                self.c_minus = c
        elif branch == "dist":
            if y_hat == 1:
                self.c_minus = c
            else:
                self.c_plus = c
        # mistakes on the other branches cannot happen for a realizable stream

    def anchors(self) -> Optional[tuple]:
        if self.c_plus is None or self.c_minus is None:
            return None
        return (self.c_plus, self.c_minus)

    def state_key(self) -> Hashable:
        return (self.params, self.c_plus, self.c_minus)


def halving_learner(d: int) -> HalvingLearner:
    return HalvingLearner(d)


def lencthr_learner(oracle: EvalOracle, kind: KindLike = DistanceFunctionKind.FLOOR_LOG) -> LEncThrLearner:
    return LEncThrLearner(oracle, kind)


# ---------------------------------------------------------------------------
# game loop


class Presentation(NamedTuple):
    example: Any
    plaintext: Optional[int]
    note: str = ""


@dataclass
class GameContext:
    concept: Concept
    d: int
    rng: np.random.Generator
    learner: Optional[Learner] = None  # None for oblivious adversaries

    @property
    def encrypted(self) -> bool:
        return isinstance(self.concept, EncThresholdConcept)

    @property
    def registry(self) -> Optional[KeyRegistry]:
        return self.concept.registry if self.encrypted else None

    @property
    def kind(self) -> KindLike:
        if self.encrypted:
            return self.concept.registry.kind(self.concept.sk)
        return DistanceFunctionKind.FLOOR_LOG

    def present(self, m: int, note: str = "") -> Presentation:
        if self.encrypted:
            c = self.concept
            return Presentation((c.registry.enc(c.sk, m), c.params), m, note)
        return Presentation(m, m, note)


class Adversary(Protocol):
    name: str

    def start(self, ctx: GameContext) -> None: ...

    def next(self, history: Sequence[Round]) -> Optional[Presentation]: ...


def _potential(ctx: GameContext, anchors: Optional[tuple]) -> Optional[int]:
    if anchors is None:
        return None
    a, b = anchors
    if ctx.encrypted:
        c = ctx.concept
        a, b = c.registry.dec(c.sk, a), c.registry.dec(c.sk, b)
        if a is None or b is None:
            return None
        return abs(distance(ctx.kind, a, b))
    return abs(fld(a, b))


def run_game(
    learner: Learner,
    adversary: Adversary,
    concept: Concept,
    rounds: int,
    seed: int,
    oblivious: bool = False,
) -> GameTranscript:
    """Play ``rounds`` rounds; the adversary may stop early by returning ``None``."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    d = concept.d
    ctx = GameContext(concept, d, np.random.default_rng(seed), None if oblivious else learner)
    adversary.start(ctx)
    out: List[Round] = []
    visible: List[Round] = [] if oblivious else out
    pot_key: Any = object()
    pot: Optional[int] = None
    halted = False
    for i in range(1, rounds + 1):
        pres = adversary.next(visible)
        if pres is None:
            halted = True
            break
        phase = getattr(learner, "phase", None)
        y_hat = int(learner.predict(pres.example))
        branch = getattr(learner, "last_branch", None)
        y = concept(pres.example)
        learner.observe(pres.example, y)
        anchors = learner.anchors()
        if anchors != pot_key:
            pot_key = anchors
            pot = _potential(ctx, anchors)
        r = Round(i, pres.plaintext, y_hat, y, y_hat != y, pot, phase, branch, pres.note)
        out.append(r)
        if oblivious:
            visible.append(r._replace(prediction=-1, mistake=False, potential_after=None, branch=None))
    return GameTranscript(out, getattr(learner, "name", type(learner).__name__), adversary.name, seed, d, halted)


# ---------------------------------------------------------------------------
# adversaries


class RandomAdversary:
    """Uniform plaintexts, salted with malformed and wrong-params examples in encrypted games."""

    name = "random"

    def __init__(self, p_malformed: float = 0.05, p_wrong_params: float = 0.05) -> None:
        self.p_malformed = p_malformed
        self.p_wrong_params = p_wrong_params

    def start(self, ctx: GameContext) -> None:
        self.ctx = ctx
        self.n = 1 << ctx.d
        self._decoy = None
        if ctx.encrypted:
            self._decoy = ctx.registry.gen(ctx.d, ctx.kind, seed=int(ctx.rng.integers(2**63)))

    def next(self, history: Sequence[Round]) -> Presentation:
        ctx = self.ctx
        rng = ctx.rng
        if ctx.encrypted:
            u = rng.random()
            if u < self.p_malformed:
                return Presentation((ctx.registry.forge(ctx.concept.params, rng), ctx.concept.params), None, "malformed")
            if u < self.p_malformed + self.p_wrong_params:
                sk, params = self._decoy
                m = int(rng.integers(1, self.n + 1))
                return Presentation((ctx.registry.enc(sk, m), params), None, "wrong-params")
        return ctx.present(int(rng.integers(1, self.n + 1)))


class AdaptiveWorstCaseAdversary:
    """Hunts for an example the learner will get wrong, by simulating a clone.

    Each time the learner's state changes the adversary clones it and
    binary-searches the plaintext line for the learner's decision boundary
    (first plaintext predicted 0). A point adjacent to the boundary on the
    wrong side of the true threshold is a mistake that shrinks the learner's
    uncertainty as little as possible. If that fails (non-monotone learners),
    it probes ``t-1``, ``t``, a malformed handle, a wrong-params handle and a
    few random points. With no mistake available it presents random points
    until the state changes again.
    """

    name = "adaptive"

    def __init__(self, random_probes: int = 8) -> None:
        self.random_probes = random_probes

    def start(self, ctx: GameContext) -> None:
        if ctx.learner is None:
            raise ValueError("the adaptive adversary needs learner access; not available in oblivious games")
        self.ctx = ctx
        self.n = 1 << ctx.d
        self.t = ctx.concept.t
        self._key: Any = object()
        self._decoy = None
        if ctx.encrypted:
            self._decoy = ctx.registry.gen(ctx.d, ctx.kind, seed=int(ctx.rng.integers(2**63)))

    def _wrong(self, clone: Learner, pres: Presentation) -> bool:
        return int(clone.predict(pres.example)) != self.ctx.concept(pres.example)

    def _search(self, clone: Learner) -> Optional[Presentation]:
        ctx, n, t = self.ctx, self.n, self.t
        cache = {}

        def at(m: int) -> Presentation:
            if m not in cache:
                cache[m] = ctx.present(m, "search")
            return cache[m]

        lo, hi = 1, n + 1  # first m with prediction 0 lies in [lo, hi]
        while lo < hi:
            mid = (lo + hi) // 2
            if clone.predict(at(mid).example) == 0:
                hi = mid
            else:
                lo = mid + 1
        boundary = lo
        picks = []
        if boundary < t:
            picks.append(boundary)
        elif boundary > t:
            picks.append(boundary - 1)
        picks += [m for m in (t - 1, t) if 1 <= m <= n]
        for m in picks:
            if self._wrong(clone, at(m)):
                return at(m)._replace(note="forced")
        if ctx.encrypted:
            params = ctx.concept.params
            probes = [Presentation((ctx.registry.forge(params, ctx.rng), params), None, "forced-malformed")]
            sk, dparams = self._decoy
            probes.append(Presentation((ctx.registry.enc(sk, int(ctx.rng.integers(1, n + 1))), dparams), None, "forced-wrong-params"))
            for p in probes:
                if self._wrong(clone, p):
                    return p
        for m in ctx.rng.integers(1, n + 1, size=self.random_probes):
            if self._wrong(clone, at(int(m))):
                return at(int(m))._replace(note="forced")
        return None

    def next(self, history: Sequence[Round]) -> Presentation:
        learner = self.ctx.learner
        key = learner.state_key()
        if key != self._key:
            found = self._search(learner.clone())
            if found is not None:
                self._key = object()  # search again next round
                return found
            self._key = key
        return self.ctx.present(int(self.ctx.rng.integers(1, self.n + 1)))


class OreBreakerAdversary:
    """Order-only attack on the middle threshold ``t = 2^(d-1)``.

    Tracks the largest presented positive ``g`` and smallest presented
    negative ``s`` and each round presents ``g + 1`` or ``s - 1`` by a fair
    coin. Both candidates sit strictly between every earlier positive and
    every earlier negative, so order-only leakage cannot tell them apart.

    ``projection_equal[r]`` records, for round ``r``, whether the two
    candidates were learner-indistinguishable: identical comparison vectors
    against every earlier example, identical leakage against the learner's
    anchors, and identical clone predictions.
    """

    name = "ore-breaker"

    def __init__(self, check_projection: bool = True) -> None:
        self.check_projection = check_projection

    def start(self, ctx: GameContext) -> None:
        self.ctx = ctx
        self.n = 1 << ctx.d
        self.t = 1 << (ctx.d - 1)
        if ctx.concept.t != self.t:
            raise ValueError("ore-breaker requires the concept threshold 2^(d-1)")
        self.g = 0
        self.s = self.n + 1
        self._seen = np.empty(1024, dtype=np.int64)
        self._count = 0
        self.projection_equal: List[bool] = []

    def _remember(self, m: int) -> None:
        if self._count == self._seen.shape[0]:
            self._seen = np.concatenate([self._seen, np.empty_like(self._seen)])
        self._seen[self._count] = m
        self._count += 1

    def _indistinguishable(self, a: Presentation, b: Presentation) -> bool:
        seen = self._seen[: self._count]
        if not np.array_equal(np.sign(a.plaintext - seen), np.sign(b.plaintext - seen)):
            return False
        learner = self.ctx.learner
        if learner is None:
            return True
        anchors = learner.anchors()
        if anchors is not None and self.ctx.encrypted:
            reg, params = self.ctx.registry, self.ctx.concept.params
            cp, cm = anchors
            for tri in ((cp, "x", cm), ("x", cp, cm), (cp, cm, "x")):
                la = reg.eval(params, *[a.example[0] if z == "x" else z for z in tri])
                lb = reg.eval(params, *[b.example[0] if z == "x" else z for z in tri])
                if la != lb:
                    return False
        clone = learner.clone()
        return clone.predict(a.example) == clone.predict(b.example)

    def next(self, history: Sequence[Round]) -> Optional[Presentation]:
        left_ok = self.g + 1 < self.t
        right_ok = self.s - 1 >= self.t
        if not left_ok and not right_ok:
            return None
        ctx = self.ctx
        coin = int(ctx.rng.integers(2))
        if left_ok and right_ok:
            left = ctx.present(self.g + 1, "left")
            right = ctx.present(self.s - 1, "right")
            if self.check_projection:
                self.projection_equal.append(self._indistinguishable(left, right))
            pick = left if coin == 0 else right
        else:
            pick = ctx.present(self.g + 1, "left") if left_ok else ctx.present(self.s - 1, "right")
        m = pick.plaintext
        if m < self.t:
            self.g = m
        else:
            self.s = m
        self._remember(m)
        return pick


def adaptive_worstcase_adversary(random_probes: int = 8) -> AdaptiveWorstCaseAdversary:
    return AdaptiveWorstCaseAdversary(random_probes)


def ore_breaker_adversary(check_projection: bool = True) -> OreBreakerAdversary:
    return OreBreakerAdversary(check_projection)


# ---------------------------------------------------------------------------
# convenience


def new_encrypted_concept(
    d: int,
    t: int,
    kind: KindLike = DistanceFunctionKind.FLOOR_LOG,
    key_seed: int = 0,
    registry: Optional[KeyRegistry] = None,
) -> EncThresholdConcept:
    registry = registry or KeyRegistry()
    sk, params = registry.gen(d, kind, seed=key_seed)
    return EncThresholdConcept(t, sk, params, registry)


@dataclass
class GameSummary:
    d: int
    seed: int
    t: int
    learner: str
    adversary: str
    rounds: int
    mistakes: int
    potential_ok: bool
    safety_ok: bool
    phase_mistakes: dict = field(default_factory=dict)


def check_potential(transcript: GameTranscript) -> bool:
    """Every Phase-C mistake strictly lowers the potential; the potential is never negative."""
    prev: Optional[int] = None
    for r in transcript.rounds:
        if r.potential_after is not None and r.potential_after < 0:
            return False
        if r.mistake and r.phase == "C" and r.branch == "dist":
            if prev is None or r.potential_after is None or r.potential_after > prev - 1:
                return False
        prev = r.potential_after
    return True


def check_safe_branches(transcript: GameTranscript) -> bool:
    """Predictions made through the ``<= c+`` / ``>= c-`` / bad-params branches are never mistakes."""
    return not any(r.mistake and r.branch in ("le_plus", "ge_minus", "params") for r in transcript.rounds)


def summarize(transcript: GameTranscript, t: int) -> GameSummary:
    phases: dict = {}
    for r in transcript.rounds:
        if r.mistake:
            phases[r.phase or "-"] = phases.get(r.phase or "-", 0) + 1
    return GameSummary(
        d=transcript.d,
        seed=transcript.seed,
        t=t,
        learner=transcript.learner_name,
        adversary=transcript.adversary_name,
        rounds=len(transcript.rounds),
        mistakes=transcript.total_mistakes,
        potential_ok=check_potential(transcript),
        safety_ok=check_safe_branches(transcript),
        phase_mistakes=phases,
    )
