"""Distance functions over ``[2^d]`` and the arity-3 leakage they induce.

Everything here is pure. Functions accept either bare ``int`` plaintexts or
:class:`Plaintext` values; when two ``Plaintext`` arguments disagree on their
bit width a :class:`WidthMismatchError` is raised.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np

MAX_BIT_WIDTH = 62
EXHAUSTIVE_MAX_D = 10


class WidthMismatchError(ValueError):
    pass


class BudgetExceededError(ValueError):
    pass


class Comparison(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1

    def __str__(self) -> str:
        return {-1: "<", 0: "=", 1: ">"}[self.value]


# indexed by sign + 1
_CMP = (Comparison.LESS, Comparison.EQUAL, Comparison.GREATER)


class DistanceFunctionKind(enum.Enum):
    FLOOR_LOG = "floorlog"
    EXACT = "exact"
    ORDER_ONLY = "orderonly"

    @classmethod
    def parse(cls, name: Union[str, "DistanceFunctionKind"]) -> "DistanceFunctionKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "floorlog": cls.FLOOR_LOG,
            "fld": cls.FLOOR_LOG,
            "tfld": cls.FLOOR_LOG,
            "exact": cls.EXACT,
            "orderonly": cls.ORDER_ONLY,
            "orderonlystub": cls.ORDER_ONLY,
            "ore": cls.ORDER_ONLY,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown distance kind {name!r}") from None


# A custom signed distance: dist(a, b) with sign(dist) == sign(a - b).
DistanceFn = Callable[[int, int], int]
KindLike = Union[DistanceFunctionKind, DistanceFn]


@dataclass(frozen=True)
class Plaintext:
    value: int
    d: int

    def __post_init__(self) -> None:
        check_bit_width(self.d)
        if not 1 <= self.value <= (1 << self.d):
            raise ValueError(f"plaintext {self.value} outside [1, 2^{self.d}]")

    def __int__(self) -> int:
        return self.value


class LeakOutput(NamedTuple):
    c01: Comparison
    c12: Comparison
    c02: Comparison
    closeness_bit: int


def check_bit_width(d: int) -> int:
    if not isinstance(d, (int, np.integer)) or isinstance(d, bool):
        raise TypeError(f"bit width must be an integer, got {d!r}")
    if not 1 <= d <= MAX_BIT_WIDTH:
        raise ValueError(f"bit width {d} outside [1, {MAX_BIT_WIDTH}]")
    return int(d)


def _ints(*xs: Union[int, Plaintext]) -> tuple[int, ...]:
    width = None
    out = []
    for x in xs:
        if isinstance(x, Plaintext):
            if width is None:
                width = x.d
            elif x.d != width:
                raise WidthMismatchError(f"bit widths {width} and {x.d} differ")
            out.append(x.value)
        else:
            out.append(int(x))
    return tuple(out)


def _sign(v: int) -> int:
    return (v > 0) - (v < 0)


def comp(a: Union[int, Plaintext], b: Union[int, Plaintext]) -> Comparison:
    x, y = _ints(a, b)
    return _CMP[_sign(x - y) + 1]


def fld(m0: Union[int, Plaintext], m1: Union[int, Plaintext]) -> int:
    """Signed floor-log distance: ``sgn(m0-m1) * (floor(log2|m0-m1|) + 1)``, 0 on equality."""
    x, y = _ints(m0, m1)
    if x == y:
        return 0
    # floor(log2 g) + 1 == g.bit_length() for g >= 1
    if x > y:
        return (x - y).bit_length()
    return -(y - x).bit_length()


def _magnitude_fn(kind: KindLike) -> Callable[[int, int], int]:
    """|dist(a, b)| as a function of the (already ordered-agnostic) pair."""
    if kind is DistanceFunctionKind.FLOOR_LOG:
        return lambda a, b: abs(a - b).bit_length()
    if kind is DistanceFunctionKind.EXACT:
        return lambda a, b: abs(a - b)
    if kind is DistanceFunctionKind.ORDER_ONLY:
        return lambda a, b: int(a != b)
    if callable(kind):
        return lambda a, b: abs(int(kind(a, b)))
    raise TypeError(f"not a distance kind: {kind!r}")


def distance(kind: KindLike, a: Union[int, Plaintext], b: Union[int, Plaintext]) -> int:
    """Signed distance under ``kind``; the sign always follows ``comp(a, b)``."""
    x, y = _ints(a, b)
    if callable(kind) and not isinstance(kind, DistanceFunctionKind):
        return int(kind(x, y))
    return _sign(x - y) * _magnitude_fn(kind)(x, y)


def leak_from_dist(
    kind: KindLike,
    x0: Union[int, Plaintext],
    x1: Union[int, Plaintext],
    x2: Union[int, Plaintext],
) -> LeakOutput:
    a, b, c = _ints(x0, x1, x2)
    y0, y1, y2 = sorted((a, b, c))
    mag = _magnitude_fn(kind)
    return LeakOutput(
        _CMP[_sign(a - b) + 1],
        _CMP[_sign(b - c) + 1],
        _CMP[_sign(a - c) + 1],
        int(mag(y0, y1) < mag(y1, y2)),
    )


def tfld(m0: int, m1: int, m2: int) -> LeakOutput:
    return leak_from_dist(DistanceFunctionKind.FLOOR_LOG, m0, m1, m2)


# ---------------------------------------------------------------------------
# vectorised helpers (int64; all values < 2^62 so differences never overflow)


def bit_length_array(x: np.ndarray) -> np.ndarray:
    """Elementwise ``int.bit_length`` for non-negative int64 arrays."""
    x = np.array(x, dtype=np.int64, copy=True)
    out = np.zeros(x.shape, dtype=np.int64)
    for s in (32, 16, 8, 4, 2, 1):
        big = x >= (np.int64(1) << s)
        out[big] += s
        x[big] >>= s
    out += x > 0
    return out


def magnitude_array(kind: KindLike, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    gap = np.abs(a - b)
    if kind is DistanceFunctionKind.FLOOR_LOG:
        return bit_length_array(gap)
    if kind is DistanceFunctionKind.EXACT:
        return gap
    if kind is DistanceFunctionKind.ORDER_ONLY:
        return (gap != 0).astype(np.int64)
    fn = _magnitude_fn(kind)
    return np.vectorize(lambda p, q: fn(int(p), int(q)), otypes=[np.int64])(a, b)


def comparison_matrix(values: np.ndarray) -> np.ndarray:
    """``M[i, j] = sign(v_i - v_j)``."""
    v = np.asarray(values, dtype=np.int64)
    return np.sign(v[:, None] - v[None, :]).astype(np.int8)


def closeness_bits(kind: KindLike, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Broadcast closeness bit of ``leak(a, b, c)``: sort each triple, compare adjacent gaps."""
    a, b, c = np.broadcast_arrays(*(np.asarray(t, dtype=np.int64) for t in (a, b, c)))
    lo = np.minimum(np.minimum(a, b), c)
    hi = np.maximum(np.maximum(a, b), c)
    mid = np.maximum(np.minimum(a, b), np.minimum(np.maximum(a, b), c))
    return magnitude_array(kind, mid, lo) < magnitude_array(kind, hi, mid)


def closeness_tensor(kind: KindLike, values: np.ndarray) -> np.ndarray:
    """Closeness bit of ``leak(v_i, v_j, v_k)`` for every ordered index triple."""
    v = np.asarray(values, dtype=np.int64)
    return closeness_bits(kind, v[:, None, None], v[None, :, None], v[None, None, :])


def leak_fn(kind: KindLike) -> Callable[[int, int, int], LeakOutput]:
    """Fast ``leak_from_dist`` specialised to ``kind``, for plain ``int`` inputs."""
    mag = _magnitude_fn(kind)
    cmp_ = _CMP

    def leak(a: int, b: int, c: int) -> LeakOutput:
        if a <= b:
            y0, y1, y2 = (a, b, c) if b <= c else ((a, c, b) if a <= c else (c, a, b))
        else:
            y0, y1, y2 = (b, a, c) if a <= c else ((b, c, a) if b <= c else (c, b, a))
        return LeakOutput(
            cmp_[(a > b) - (a < b) + 1],
            cmp_[(b > c) - (b < c) + 1],
            cmp_[(a > c) - (a < c) + 1],
            int(mag(y0, y1) < mag(y1, y2)),
        )

    return leak


# ---------------------------------------------------------------------------
# bisection property


@dataclass(frozen=True)
class Holds:
    triples_checked: int

    verdict = "Holds"


@dataclass(frozen=True)
class Counterexample:
    x: int
    y: int
    z: int
    reason: str = "bisection"

    verdict = "Counterexample"


@dataclass(frozen=True)
class Sampled:
    count: int
    seed: int


def _magnitude_table(kind: KindLike, d: int) -> np.ndarray:
    n = 1 << d
    v = np.arange(1, n + 1, dtype=np.int64)
    if isinstance(kind, DistanceFunctionKind):
        return magnitude_array(kind, v[:, None], v[None, :])
    fn = _magnitude_fn(kind)
    return np.array([[fn(int(a), int(b)) for b in v] for a in v], dtype=np.int64)


def check_bisection(kind: KindLike, d: int, mode: Union[str, Sampled] = "exhaustive") -> Union[Holds, Counterexample]:
    """Search for ``x < y < z`` violating the bisection inequality.

    Exhaustive mode walks every ascending triple of ``[2^d]`` and is capped at
    ``d <= 10``; pass ``Sampled(count, seed)`` for wider domains. The first
    counterexample in lexicographic order is returned.
    """
    d = check_bit_width(d)
    if isinstance(mode, Sampled):
        return _check_bisection_sampled(kind, d, mode)
    if str(mode).lower() != "exhaustive":
        raise ValueError(f"unknown mode {mode!r}")
    if d > EXHAUSTIVE_MAX_D:
        raise BudgetExceededError(f"exhaustive bisection check limited to d <= {EXHAUSTIVE_MAX_D}, got {d}")

    table = _magnitude_table(kind, d)
    n = table.shape[0]
    zero_off_diag = np.argwhere((table == 0) & ~np.eye(n, dtype=bool))
    if zero_off_diag.size:
        a, b = sorted(zero_off_diag[0] + 1)
        return Counterexample(int(a), int(b), int(b), reason="zero distance on distinct inputs")

    checked = 0
    for x in range(n - 2):
        row = table[x, x + 1:]  # |dist(x, y)| and |dist(x, z)| over y, z > x
        sub = table[x + 1:, x + 1:]  # |dist(y, z)|
        ok = (row[:, None] < row[None, :]) | (sub < row[None, :])
        bad = ~ok & np.triu(np.ones_like(ok), k=1)
        m = len(row)
        checked += m * (m - 1) // 2
        hit = np.argwhere(bad)
        if hit.size:
            y, z = hit[0]
            return Counterexample(x + 1, x + 2 + int(y), x + 2 + int(z))
    return Holds(checked)


def _check_bisection_sampled(kind: KindLike, d: int, mode: Sampled) -> Union[Holds, Counterexample]:
    rng = np.random.default_rng(mode.seed)
    n = 1 << d
    trip = np.sort(rng.integers(1, n + 1, size=(mode.count, 3), dtype=np.int64), axis=1)
    trip = trip[(trip[:, 0] < trip[:, 1]) & (trip[:, 1] < trip[:, 2])]
    x, y, z = trip[:, 0], trip[:, 1], trip[:, 2]
    dyx = magnitude_array(kind, y, x)
    dzx = magnitude_array(kind, z, x)
    dzy = magnitude_array(kind, z, y)
    bad = ~((dyx < dzx) | (dzy < dzx)) | (dyx == 0) | (dzy == 0)
    if bad.any():
        k = int(np.argmax(bad))
        return Counterexample(int(x[k]), int(y[k]), int(z[k]))
    return Holds(int(trip.shape[0]))
