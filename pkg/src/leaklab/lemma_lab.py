"""Monte Carlo checks of the spreading lemmas for uniformly sampled plaintexts.

Each verifier estimates a success probability over ``trials`` independent
samples and compares it with a claimed lower bound. The test is one-sided:
a report is ``Violated`` only when even the upper end of the 95% interval
falls short of the claim.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from leaklab._parallel import run_trials
from leaklab.attack import guard_band, in_removal_band, kappa
from leaklab.leakage import DistanceFunctionKind, bit_length_array, check_bit_width, closeness_bits

Sampler = Callable[[np.random.Generator, int, int], np.ndarray]


def uniform_sampler(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    return np.sort(rng.integers(1, (1 << d) + 1, size=n, dtype=np.int64))


def _r12(x: float) -> float:
    return float(f"{x:.12g}")


@dataclass
class LemmaReport:
    lemma: str
    n: int
    d: int
    trials: int
    success: int
    claimed: float
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def rate(self) -> float:
        return self.success / self.trials

    @property
    def ci(self) -> float:
        p = self.rate
        return 1.96 * math.sqrt(p * (1 - p) / self.trials)

    @property
    def verdict(self) -> str:
        return "Violated" if self.rate + self.ci < self.claimed else "Consistent"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lemma": self.lemma,
            "n": self.n,
            "d": self.d,
            "trials": self.trials,
            "success": self.success,
            "rate": _r12(self.rate),
            "ci": _r12(self.ci),
            "claimed": _r12(self.claimed),
            "verdict": self.verdict,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LemmaReport":
        return cls(data["lemma"], data["n"], data["d"], data["trials"], data["success"], data["claimed"], data.get("diagnostics", {}))


def _check_sizes(n: int, d: int) -> Tuple[float, bool]:
    check_bit_width(d)
    if n < 2:
        raise ValueError("n must be >= 2 (the bounds use log2 n > 0)")
    g = guard_band(n, d)
    return g, g < 2 ** (d - 1)


def _fld_signed(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64)
    return np.sign(diff) * bit_length_array(np.abs(diff))


def _band_matrix(pts: np.ndarray, d: int, g: float) -> np.ndarray:
    """``M[i, j]``: point ``j`` lies in ``A_i``."""
    return in_removal_band(pts[None, :] - pts[:, None], d, g)


# ---------------------------------------------------------------------------
# regularity


class _RegularityTrial:
    def __init__(self, n: int, d: int, sampler: Sampler) -> None:
        self.n, self.d, self.sampler = n, d, sampler
        self.g = guard_band(n, d)
        self.bound = 50 * math.log2(n) ** 2

    def __call__(self, k: int, rng: np.random.Generator) -> Tuple[bool, int]:
        pts = self.sampler(rng, self.n, self.d)
        worst = int(_band_matrix(pts, self.d, self.g).sum(axis=1).max())
        return worst <= self.bound, worst


def verify_regularity(
    n: int,
    d: int,
    trials: int,
    seed: int,
    claimed: Optional[float] = None,
    sampler: Sampler = uniform_sampler,
    jobs: Optional[int] = 1,
) -> LemmaReport:
    """Every ``|A_i ∩ S|`` stays within ``50 log2(n)^2``; claimed rate ``1 - 1/n``."""
    g, pre = _check_sizes(n, d)
    out = run_trials(_RegularityTrial(n, d, sampler), trials, seed, jobs)
    worst = max(w for _, w in out)
    return LemmaReport(
        "regularity",
        n,
        d,
        trials,
        sum(ok for ok, _ in out),
        1 - 1 / n if claimed is None else claimed,
        {"max_intersection": worst, "bound": _r12(50 * math.log2(n) ** 2), "G": _r12(g), "precondition_met": pre},
    )


# ---------------------------------------------------------------------------
# bucket sizes


class _BucketTrial:
    def __init__(self, n: int, d: int, sampler: Sampler) -> None:
        self.n, self.d, self.sampler = n, d, sampler
        self.g = guard_band(n, d)

    def __call__(self, k: int, rng: np.random.Generator) -> Tuple[bool, int]:
        pts = self.sampler(rng, self.n, self.d)
        edges = np.concatenate(([0], pts, [1 << self.d]))
        widest = int(np.diff(edges).max())
        return widest <= self.g, widest


def verify_bucket_sizes(
    n: int,
    d: int,
    trials: int,
    seed: int,
    claimed: Optional[float] = None,
    sampler: Sampler = uniform_sampler,
    jobs: Optional[int] = 1,
) -> LemmaReport:
    """All buckets, sentinels included, are at most ``G`` long; claimed rate ``1 - 1/n``."""
    g, pre = _check_sizes(n, d)
    out = run_trials(_BucketTrial(n, d, sampler), trials, seed, jobs)
    return LemmaReport(
        "bucket_sizes",
        n,
        d,
        trials,
        sum(ok for ok, _ in out),
        1 - 1 / n if claimed is None else claimed,
        {"max_bucket": max(w for _, w in out), "G": _r12(g), "precondition_met": pre},
    )


# ---------------------------------------------------------------------------
# fld spread


@dataclass(frozen=True)
class SpreadFailure:
    i: int  # 1-based sample index
    y: int  # offending plaintext, or -1 for a size failure
    reason: str


def fldspread_trial(pts: np.ndarray, d: int, g: float, bound: float) -> Tuple[bool, int, Optional[SpreadFailure]]:
    """Check every interior ``i`` on one sorted sample; returns (ok, max |R_i|, first failure)."""
    n = len(pts)
    band = _band_matrix(pts, d, g)
    band[np.arange(n), np.arange(n)] = True
    idx = np.arange(1, n - 1)  # 0-based positions of i = 2..n-1
    sizes = band[idx].sum(axis=1)
    lhs = _fld_signed(pts[None, :], pts[idx - 1, None])
    rhs = _fld_signed(pts[None, :], pts[idx + 1, None])
    bad = (lhs != rhs) & ~band[idx]
    worst = int(sizes.max()) if len(sizes) else 0
    for r, i0 in enumerate(idx):
        if sizes[r] > bound:
            return False, worst, SpreadFailure(int(i0) + 1, -1, "removal set too large")
        if bad[r].any():
            j = int(np.argmax(bad[r]))
            return False, worst, SpreadFailure(int(i0) + 1, int(pts[j]), "fld to the two neighbours differs")
    return True, worst, None


class _SpreadTrial:
    def __init__(self, n: int, d: int, g: float, sampler: Sampler) -> None:
        self.n, self.d, self.g, self.sampler = n, d, g, sampler
        self.bound = kappa(n)

    def __call__(self, k: int, rng: np.random.Generator) -> Tuple[bool, int, Optional[SpreadFailure]]:
        return fldspread_trial(self.sampler(rng, self.n, self.d), self.d, self.g, self.bound)


def verify_fldspread(
    n: int,
    d: int,
    trials: int,
    seed: int,
    claimed: Optional[float] = None,
    g: Optional[float] = None,
    sampler: Sampler = uniform_sampler,
    jobs: Optional[int] = 1,
) -> LemmaReport:
    """With ``R_i = A_i ∩ S``, points outside ``R_i`` see both neighbours of ``m_i`` at equal fld.

    Claimed rate ``1 - 2/n``. Passing ``g`` overrides the guard band (``g=0``
    is the negative control). The first failing trial is reported in full.
    """
    g0, pre = _check_sizes(n, d)
    g = g0 if g is None else g
    out = run_trials(_SpreadTrial(n, d, g, sampler), trials, seed, jobs)
    first = next(((k, f) for k, (_, _, f) in enumerate(out) if f is not None), None)
    diag: Dict[str, Any] = {"max_removal": max(w for _, w, _ in out), "bound": kappa(n), "G": _r12(g), "precondition_met": pre}
    if first is not None:
        diag["first_failure"] = {"trial": first[0], **asdict(first[1])}
    return LemmaReport("fldspread", n, d, trials, sum(ok for ok, _, _ in out), 1 - 2 / n if claimed is None else claimed, diag)


# ---------------------------------------------------------------------------
# log-invariance


def _probe_points(lo: int, hi: int, count: int, rng: np.random.Generator) -> np.ndarray:
    mid = (lo + hi) // 2
    extra = rng.integers(lo, hi + 1, size=max(0, count - 3))
    return np.unique(np.concatenate(([lo, mid, hi], extra)).astype(np.int64))


def _probe_pairs(lo: int, hi: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Ordered pairs ``z1 < z2``: widest, the two narrowest at the ends, one in the middle, then random."""
    mid = (lo + hi) // 2
    pairs = [(lo, hi), (lo, lo + 1), (hi - 1, hi), (mid, mid + 1)]
    while len(pairs) < count:
        a, b = (int(v) for v in rng.integers(lo, hi + 1, size=2))
        if a != b:
            pairs.append((min(a, b), max(a, b)))
    return np.array([p for p in pairs if lo <= p[0] < p[1] <= hi], dtype=np.int64).reshape(-1, 2)


def _condition1(kept: np.ndarray, z: np.ndarray) -> bool:
    """``tfld(m1, m2, z)`` is the same for all probe points ``z`` (every argument order).

    The triple's leakage depends on ``z`` only through each ``m``'s order and
    fld magnitude to ``z``; pairs where both of those are constant are skipped.
    """
    if len(z) < 2 or len(kept) == 0:
        return True
    sig = _fld_signed(kept[:, None], z[None, :])
    varying = np.flatnonzero((sig != sig[:, :1]).any(axis=1))
    for v in varying:
        if (np.sign(kept[v] - z) != np.sign(kept[v] - z[0])).any():
            return False
        bits = closeness_bits(DistanceFunctionKind.FLOOR_LOG, kept[v], kept[:, None], z[None, :])
        if (bits != bits[:, :1]).any():
            return False
    return True


def _condition2(kept: np.ndarray, pairs: np.ndarray) -> bool:
    """``tfld(m, z1, z2)`` is the same for every probe pair (every argument order)."""
    if len(pairs) < 2 or len(kept) == 0:
        return True
    bits = closeness_bits(DistanceFunctionKind.FLOOR_LOG, kept[:, None], pairs[None, :, 0], pairs[None, :, 1])
    order_a = np.sign(kept[:, None] - pairs[None, :, 0])
    order_b = np.sign(kept[:, None] - pairs[None, :, 1])
    same = (bits == bits[:, :1]) & (order_a == order_a[:, :1]) & (order_b == order_b[:, :1])
    return bool(same.all())


class _LogInvTrial:
    def __init__(self, n: int, d: int, probe_pairs: int, sampler: Sampler) -> None:
        self.n, self.d, self.probe_pairs, self.sampler = n, d, probe_pairs, sampler
        self.g = guard_band(n, d)
        self.bound = kappa(n)

    def __call__(self, k: int, rng: np.random.Generator) -> Tuple[bool, bool, bool]:
        pts = self.sampler(rng, self.n, self.d)
        n = len(pts)
        band = _band_matrix(pts, self.d, self.g)
        band[np.arange(n), np.arange(n)] = True
        ok1 = ok2 = size_ok = True
        for i0 in range(1, n - 1):
            if band[i0].sum() > self.bound:
                size_ok = False
            lo, hi = int(pts[i0 - 1]) + 1, int(pts[i0 + 1]) - 1
            if hi - lo < 1:
                continue
            kept = pts[~band[i0]]
            if ok1 and not _condition1(kept, _probe_points(lo, hi, self.probe_pairs, rng)):
                ok1 = False
            if ok2 and not _condition2(kept, _probe_pairs(lo, hi, self.probe_pairs, rng)):
                ok2 = False
            if not (ok1 or ok2):
                break
        return ok1 and size_ok, ok2 and size_ok, size_ok


def verify_log_invariance(
    n: int,
    d: int,
    trials: int,
    probe_pairs: int = 8,
    seed: int = 0,
    claimed: Optional[float] = None,
    sampler: Sampler = uniform_sampler,
    jobs: Optional[int] = 1,
) -> LemmaReport:
    """Probe both invariance conditions with ``R_i = A_i ∩ S`` at every interior ``i``.

    The report's success count is condition 1 (claimed ``1 - 2/n``);
    condition 2 is measured and reported without a claim.
    """
    if probe_pairs < 8:
        raise ValueError("probe_pairs must be >= 8")
    g, pre = _check_sizes(n, d)
    out = run_trials(_LogInvTrial(n, d, probe_pairs, sampler), trials, seed, jobs)
    c1 = sum(a for a, _, _ in out)
    c2 = sum(b for _, b, _ in out)
    return LemmaReport(
        "log_invariance",
        n,
        d,
        trials,
        c1,
        1 - 2 / n if claimed is None else claimed,
        {
            "condition1_rate": _r12(c1 / trials),
            "condition2_rate": _r12(c2 / trials),
            "size_ok_rate": _r12(sum(c for _, _, c in out) / trials),
            "probe_pairs": probe_pairs,
            "G": _r12(g),
            "precondition_met": pre,
        },
    )
