"""Seeded trial runner.

Trial ``k`` of a run with master seed ``s`` always draws from
``numpy.random.default_rng([s, k])``, so results do not depend on how trials
are spread across workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Optional, Sequence

import numpy as np

JOBS_ENV = "LEAKLAB_JOBS"


def resolve_jobs(jobs: Optional[int] = None) -> int:
    if jobs is None:
        env = os.environ.get(JOBS_ENV)
        if env:
            jobs = int(env)
        else:
            jobs = os.cpu_count() or 1
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    return jobs


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & (2**64 - 1), int(index)])


def _run_block(fn: Callable[[int, np.random.Generator], Any], seed: int, indices: Sequence[int]) -> List[Any]:
    return [fn(k, trial_rng(seed, k)) for k in indices]


def run_trials(
    fn: Callable[[int, np.random.Generator], Any],
    trials: int,
    seed: int,
    jobs: Optional[int] = 1,
    block: int = 256,
) -> List[Any]:
    """Run ``fn(k, rng_k)`` for ``k in range(trials)``; results in trial order.

    ``fn`` must be picklable when ``jobs > 1``.
    """
    jobs = resolve_jobs(jobs)
    if jobs == 1 or trials <= block:
        return _run_block(fn, seed, range(trials))
    blocks = [range(a, min(a + block, trials)) for a in range(0, trials, block)]
    out: List[Any] = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for part in pool.map(_run_block, [fn] * len(blocks), [seed] * len(blocks), blocks):
            out.extend(part)
    return out
