"""Threshold concepts over ``[2^d]`` and their encrypted counterparts."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, NamedTuple, Optional, Tuple, Union

import numpy as np

from leaklab.fre_oracle import CiphertextHandle, KeyRegistry, ParamsTag, SecretKeyHandle
from leaklab.leakage import Plaintext, WidthMismatchError, check_bit_width

# An encrypted example as the learner sees it.
Example = Tuple[Any, Any]  # (ciphertext handle, params tag)
Hypothesis = Callable[[Any, Any], int]


@dataclass(frozen=True)
class ThresholdConcept:
    t: int
    d: int

    def __post_init__(self) -> None:
        Plaintext(self.t, self.d)

    def __call__(self, x: Union[int, Plaintext]) -> int:
        return eval_threshold(self, x)


def eval_threshold(c: ThresholdConcept, x: Union[int, Plaintext]) -> int:
    if isinstance(x, Plaintext) and x.d != c.d:
        raise WidthMismatchError(f"bit widths {c.d} and {x.d} differ")
    return int(int(x) < c.t)


@dataclass(frozen=True)
class EncThresholdConcept:
    """``f_{t,r}``: the key plays the role of Gen's coin string."""

    t: int
    sk: SecretKeyHandle
    params: ParamsTag
    registry: KeyRegistry

    def __post_init__(self) -> None:
        if self.registry.params_of(self.sk) != self.params:
            raise ValueError("params tag was not issued with this key")
        Plaintext(self.t, self.registry.bit_width(self.sk))

    @property
    def d(self) -> int:
        return self.registry.bit_width(self.sk)

    def __call__(self, x: Example) -> int:
        return eval_enc_threshold(self, x)


def eval_enc_threshold(c: EncThresholdConcept, x: Example) -> int:
    ciphertext, params = x
    if params != c.params:
        return 0
    m = c.registry.dec(c.sk, ciphertext)
    if m is None:
        return 0
    return int(m < c.t)


class LabeledExample(NamedTuple):
    ciphertext: CiphertextHandle
    params: ParamsTag
    label: int

    @property
    def example(self) -> Example:
        return (self.ciphertext, self.params)


@dataclass(frozen=True)
class Dataset:
    examples: Tuple[LabeledExample, ...]
    plaintexts: Tuple[int, ...]  # harness-only

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def labels(self) -> Tuple[int, ...]:
        return tuple(e.label for e in self.examples)


def _as_rng(seed: Union[int, np.random.Generator, None]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def uniform_plaintexts(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(1, (1 << d) + 1, size=n, dtype=np.int64)


def sample_sorted_dataset(
    registry: KeyRegistry,
    sk: SecretKeyHandle,
    params: ParamsTag,
    t: int,
    n: int,
    seed: Union[int, np.random.Generator, None] = None,
) -> Dataset:
    """``n`` i.i.d. uniform plaintexts, sorted, encrypted one by one and labelled by ``f_t``."""
    if n < 1:
        raise ValueError("dataset size must be >= 1")
    d = registry.bit_width(sk)
    ms = np.sort(uniform_plaintexts(d, n, _as_rng(seed)))
    examples = tuple(LabeledExample(registry.enc(sk, int(m)), params, int(m < t)) for m in ms)
    return Dataset(examples, tuple(int(m) for m in ms))


def generalization_error(
    registry: KeyRegistry,
    sk: SecretKeyHandle,
    t: int,
    h: Hypothesis,
    mc_samples: int = 10_000,
    seed: Union[int, np.random.Generator, None] = None,
) -> float:
    """Monte Carlo ``Pr_{m ~ U[2^d]}[h(Enc(m)) != f_t(m)]`` on fresh encryptions."""
    params = registry.params_of(sk)
    d = registry.bit_width(sk)
    ms = uniform_plaintexts(d, mc_samples, _as_rng(seed))
    wrong = 0
    for m in ms:
        m = int(m)
        wrong += int(h(registry.enc(sk, m), params)) != int(m < t)
    return wrong / mc_samples


def exact_generalization_error(d: int, t: int, predicts_one: Callable[[int], int]) -> float:
    """Exact error of a plaintext-level predictor by enumeration (small ``d`` only)."""
    check_bit_width(d)
    n = 1 << d
    return sum(int(predicts_one(m)) != int(m < t) for m in range(1, n + 1)) / n


def write_dataset_csv(dataset: Dataset, path: Union[str, Path], plaintext_path: Optional[Union[str, Path]] = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "nonce_hex", "params_hex", "label"])
        for i, e in enumerate(dataset.examples):
            w.writerow([i, e.ciphertext.nonce_hex, e.params.hex, e.label])
    if plaintext_path is not None:
        with open(plaintext_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "plaintext"])
            for i, m in enumerate(dataset.plaintexts):
                w.writerow([i, m])
