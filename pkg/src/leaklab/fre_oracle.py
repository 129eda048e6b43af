"""Ideal function-revealing encryption.

Ciphertexts are opaque ``(nonce, params_tag)`` handles; the plaintexts behind
them live only in the :class:`KeyRegistry`. Learners and game adversaries get
an :class:`EvalOracle`, which can evaluate leakage but cannot decrypt.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from leaklab import _parallel
from leaklab.leakage import (
    DistanceFunctionKind,
    KindLike,
    LeakOutput,
    check_bit_width,
    closeness_bits,
    comparison_matrix,
    leak_fn,
    magnitude_array,
)


class UnknownKeyError(KeyError):
    pass


class ParamsTag(NamedTuple):
    tag: int

    @property
    def hex(self) -> str:
        return f"{self.tag:032x}"


class SecretKeyHandle(NamedTuple):
    key_id: int


class CiphertextHandle(NamedTuple):
    nonce: int
    params_tag: ParamsTag

    @property
    def nonce_hex(self) -> str:
        return f"{self.nonce:032x}"


@dataclass
class _KeyEntry:
    params: ParamsTag
    kind: KindLike
    d: int
    rng: random.Random
    table: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.leak = leak_fn(self.kind)
        self.upper = 1 << self.d


class KeyRegistry:
    """Holds every key and every issued ciphertext for one experiment worker.

    A registry is not thread-safe; give each concurrent trial its own.
    """

    def __init__(self) -> None:
        self._keys: Dict[int, _KeyEntry] = {}
        self._by_params: Dict[ParamsTag, _KeyEntry] = {}

    def gen(self, d: int, kind: KindLike = DistanceFunctionKind.FLOOR_LOG, seed: int = 0) -> Tuple[SecretKeyHandle, ParamsTag]:
        d = check_bit_width(d)
        seed = int(seed)
        tag_rng = random.Random(f"params:{seed}")
        params = ParamsTag(tag_rng.getrandbits(128))
        while params in self._by_params:
            params = ParamsTag(tag_rng.getrandbits(128))
        key_id = len(self._keys) + 1
        entry = _KeyEntry(params=params, kind=kind, d=d, rng=random.Random(seed))
        self._keys[key_id] = entry
        self._by_params[params] = entry
        return SecretKeyHandle(key_id), params

    def _entry(self, sk: SecretKeyHandle) -> _KeyEntry:
        try:
            return self._keys[sk.key_id]
        except (KeyError, AttributeError):
            raise UnknownKeyError(f"unknown key {sk!r}") from None

    def bit_width(self, sk: SecretKeyHandle) -> int:
        return self._entry(sk).d

    def kind(self, sk: SecretKeyHandle) -> KindLike:
        return self._entry(sk).kind

    def params_of(self, sk: SecretKeyHandle) -> ParamsTag:
        return self._entry(sk).params

    def enc(self, sk: SecretKeyHandle, m: int) -> CiphertextHandle:
        entry = self._entry(sk)
        m = int(m)
        if not 1 <= m <= entry.upper:
            raise ValueError(f"plaintext {m} outside [1, 2^{entry.d}]")
        nonce = entry.rng.getrandbits(128)
        while nonce in entry.table:
            nonce = entry.rng.getrandbits(128)
        entry.table[nonce] = m
        return CiphertextHandle(nonce, entry.params)

    def enc_many(self, sk: SecretKeyHandle, ms: Sequence[int]) -> List[CiphertextHandle]:
        return [self.enc(sk, m) for m in ms]

    def dec(self, sk: SecretKeyHandle, c: Any) -> Optional[int]:
        """Registered plaintext, or ``None`` (the failure symbol) for anything not issued under ``sk``."""
        entry = self._keys.get(getattr(sk, "key_id", None))
        if entry is None or not isinstance(c, CiphertextHandle) or c.params_tag != entry.params:
            return None
        return entry.table.get(c.nonce)

    def eval(self, params: ParamsTag, c0: Any, c1: Any, c2: Any) -> Optional[LeakOutput]:
        entry = self._by_params.get(params) if isinstance(params, ParamsTag) else None
        if entry is None:
            return None
        table = entry.table
        ms = []
        for c in (c0, c1, c2):
            if not isinstance(c, CiphertextHandle) or c.params_tag != params:
                return None
            m = table.get(c.nonce)
            if m is None:
                return None
            ms.append(m)
        return entry.leak(ms[0], ms[1], ms[2])

    def exact_distance(self, params: ParamsTag, c0: Any, c1: Any) -> Optional[int]:
        """Signed plaintext difference; only keys generated with ``EXACT`` expose it."""
        entry = self._by_params.get(params) if isinstance(params, ParamsTag) else None
        if entry is None:
            return None
        if entry.kind is not DistanceFunctionKind.EXACT:
            raise PermissionError("exact distances are only revealed under EXACT leakage")
        ms = []
        for c in (c0, c1):
            if not isinstance(c, CiphertextHandle) or c.params_tag != params:
                return None
            m = entry.table.get(c.nonce)
            if m is None:
                return None
            ms.append(m)
        return ms[0] - ms[1]

    def forge(self, params: ParamsTag, rng: Union[random.Random, np.random.Generator, None] = None) -> CiphertextHandle:
        """A handle carrying ``params`` whose nonce was never issued."""
        rng = rng or random.Random()
        entry = self._by_params.get(params)
        while True:
            if isinstance(rng, np.random.Generator):
                nonce = int.from_bytes(rng.bytes(16), "big")
            else:
                nonce = rng.getrandbits(128)
            if entry is None or nonce not in entry.table:
                return CiphertextHandle(nonce, params)

    def view(self) -> "EvalOracle":
        return EvalOracle(self)


class EvalOracle:
    """The public face of a registry: leakage evaluation only."""

    __slots__ = ("_registry",)

    def __init__(self, registry: KeyRegistry) -> None:
        self._registry = registry

    def eval(self, params: ParamsTag, c0: Any, c1: Any, c2: Any) -> Optional[LeakOutput]:
        return self._registry.eval(params, c0, c1, c2)

    def exact_distance(self, params: ParamsTag, c0: Any, c1: Any) -> Optional[int]:
        return self._registry.exact_distance(params, c0, c1)


# ---------------------------------------------------------------------------
# static security game


@dataclass(frozen=True)
class ChallengeSubmission:
    left: Tuple[int, ...]
    right: Tuple[int, ...]

    def __init__(self, left: Sequence[int], right: Sequence[int]) -> None:
        object.__setattr__(self, "left", tuple(int(m) for m in left))
        object.__setattr__(self, "right", tuple(int(m) for m in right))


@dataclass(frozen=True)
class Valid:
    verdict = "Valid"

    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class Invalid:
    i: int
    j: int
    k: int
    reason: str = "leakage differs"

    verdict = "Invalid"

    def __bool__(self) -> bool:
        return False


def _same_sorted_bits(kind: KindLike, left: np.ndarray, right: np.ndarray) -> bool:
    """Closeness bits agree on every triple, given that all comparisons already agree.

    Both sides then sort the same way, so it is enough to look at sorted
    positions ``a <= b <= c`` and compare ``|dist(a, b)| < |dist(b, c)|``.
    """
    order = np.argsort(left, kind="stable")
    sl, sr = left[order], right[order]
    dl = magnitude_array(kind, sl[:, None], sl[None, :])
    dr = magnitude_array(kind, sr[:, None], sr[None, :])
    for b in range(len(sl)):
        bl = dl[: b + 1, b, None] < dl[None, b, b:]
        br = dr[: b + 1, b, None] < dr[None, b, b:]
        if (bl != br).any():
            return False
    return True


def validate_submission(sub: ChallengeSubmission, kind: KindLike = DistanceFunctionKind.FLOOR_LOG) -> Union[Valid, Invalid]:
    """Compare ``leak`` on all ``q^3`` ordered index triples (repeats included).

    The first violating triple in lexicographic order is returned with
    1-based indices; ``Invalid(0, 0, 0)`` flags a malformed submission.
    """
    q = len(sub.left)
    if q != len(sub.right):
        return Invalid(0, 0, 0, reason="length mismatch")
    if q == 0:
        return Invalid(0, 0, 0, reason="empty submission")
    left = np.asarray(sub.left, dtype=np.int64)
    right = np.asarray(sub.right, dtype=np.int64)
    cmp_bad = comparison_matrix(left) != comparison_matrix(right)
    if not cmp_bad.any() and _same_sorted_bits(kind, left, right):
        return Valid()
    # locate the first violating triple the slow way
    # chunk over the first index so q up to a few hundred stays in memory
    step = max(1, 4_000_000 // (q * q))
    for i0 in range(0, q, step):
        sl = slice(i0, min(q, i0 + step))
        bits_l = closeness_bits(kind, left[sl, None, None], left[None, :, None], left[None, None, :])
        bits_r = closeness_bits(kind, right[sl, None, None], right[None, :, None], right[None, None, :])
        bad = (
            (bits_l != bits_r)
            | cmp_bad[sl, :, None]
            | cmp_bad[None, :, :]
            | cmp_bad[sl, None, :]
        )
        if bad.any():
            i, j, k = np.unravel_index(int(np.argmax(bad)), bad.shape)
            return Invalid(int(i) + i0 + 1, int(j) + 1, int(k) + 1)
    return Valid()


@dataclass(frozen=True)
class AdvantageEstimate:
    """Output-rate gap between the two worlds, with a pooled 95% normal interval."""

    ones_left: int
    trials_left: int
    ones_right: int
    trials_right: int

    @property
    def trials(self) -> int:
        return self.trials_left + self.trials_right

    @property
    def rate_left(self) -> float:
        return self.ones_left / self.trials_left if self.trials_left else 0.0

    @property
    def rate_right(self) -> float:
        return self.ones_right / self.trials_right if self.trials_right else 0.0

    @property
    def signed_gap(self) -> float:
        """``Pr[1 | right] - Pr[1 | left]``."""
        return self.rate_right - self.rate_left

    @property
    def advantage(self) -> float:
        return abs(self.signed_gap)

    @property
    def ci_halfwidth(self) -> float:
        if not self.trials_left or not self.trials_right:
            return 1.0
        p = (self.ones_left + self.ones_right) / self.trials
        return 1.96 * math.sqrt(p * (1 - p) * (1 / self.trials_left + 1 / self.trials_right))

    @property
    def sigma(self) -> float:
        return self.ci_halfwidth / 1.96

    def merge(self, other: "AdvantageEstimate") -> "AdvantageEstimate":
        return AdvantageEstimate(
            self.ones_left + other.ones_left,
            self.trials_left + other.trials_left,
            self.ones_right + other.ones_right,
            self.trials_right + other.trials_right,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "advantage": round(self.advantage, 12),
            "signed_gap": round(self.signed_gap, 12),
            "ci_halfwidth": round(self.ci_halfwidth, 12),
            "trials": self.trials,
            "trials_left": self.trials_left,
            "trials_right": self.trials_right,
            "ones_left": self.ones_left,
            "ones_right": self.ones_right,
        }


class GameAdversary(Protocol):
    """Static-security adversary. ``challenge`` and ``guess`` are called once per trial, in order."""

    def challenge(self, rng: np.random.Generator) -> ChallengeSubmission: ...

    def guess(self, params: ParamsTag, ciphertexts: List[CiphertextHandle], oracle: EvalOracle, rng: np.random.Generator) -> int: ...


@dataclass
class TrialRecord:
    trial: int
    b: int
    output: int
    valid: bool
    info: Dict[str, Any] = field(default_factory=dict)


@dataclass
class GameResult:
    estimate: AdvantageEstimate
    records: List[TrialRecord]

    @property
    def invalid_count(self) -> int:
        return sum(not r.valid for r in self.records)


class _GameTrial:
    def __init__(self, adversary: GameAdversary, d: int, kind: KindLike) -> None:
        self.adversary = adversary
        self.d = d
        self.kind = kind

    def __call__(self, k: int, rng: np.random.Generator) -> TrialRecord:
        b = int(rng.integers(2))
        sub = self.adversary.challenge(rng)
        info = dict(getattr(self.adversary, "last_info", None) or {})
        if not validate_submission(sub, self.kind):
            # invalid submissions contribute a coin flip
            return TrialRecord(k, b, int(rng.integers(2)), False, info)
        registry = KeyRegistry()
        sk, params = registry.gen(self.d, self.kind, seed=int(rng.integers(2**63)))
        side = sub.left if b == 0 else sub.right
        cts = registry.enc_many(sk, side)
        out = int(self.adversary.guess(params, cts, registry.view(), rng))
        info.update(getattr(self.adversary, "last_guess_info", None) or {})
        return TrialRecord(k, b, out, True, info)


def run_security_game(
    adversary: GameAdversary,
    trials: int,
    seed: int,
    d: int,
    kind: KindLike = DistanceFunctionKind.FLOOR_LOG,
    jobs: Optional[int] = 1,
) -> GameResult:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    d = check_bit_width(d)
    records = _parallel.run_trials(_GameTrial(adversary, d, kind), trials, seed, jobs)
    ones = [0, 0]
    counts = [0, 0]
    for r in records:
        counts[r.b] += 1
        ones[r.b] += r.output
    return GameResult(AdvantageEstimate(ones[0], counts[0], ones[1], counts[1]), records)
