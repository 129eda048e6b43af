import csv
import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leaklab.concepts import (
    EncThresholdConcept,
    ThresholdConcept,
    eval_enc_threshold,
    eval_threshold,
    exact_generalization_error,
    generalization_error,
    sample_sorted_dataset,
    write_dataset_csv,
)
from leaklab.fre_oracle import KeyRegistry
from leaklab.leakage import Plaintext, WidthMismatchError


def make(d=3, t=4, seed=0):
    reg = KeyRegistry()
    sk, p = reg.gen(d, seed=seed)
    return reg, sk, p, EncThresholdConcept(t, sk, p, reg)


def test_eval_threshold_examples():
    assert eval_threshold(ThresholdConcept(5, 3), 4) == 1
    assert eval_threshold(ThresholdConcept(5, 3), 5) == 0
    assert all(eval_threshold(ThresholdConcept(1, 3), x) == 0 for x in range(1, 9))


def test_eval_threshold_width_checked():
    with pytest.raises(WidthMismatchError):
        eval_threshold(ThresholdConcept(5, 3), Plaintext(2, 4))
    with pytest.raises(ValueError):
        ThresholdConcept(9, 3)


def test_eval_enc_threshold_conjuncts():
    reg, sk, p, c = make(d=4, t=5)
    assert eval_enc_threshold(c, (reg.enc(sk, 3), p)) == 1
    sk2, p2 = reg.gen(4, seed=99)
    assert eval_enc_threshold(c, (reg.enc(sk2, 3), p2)) == 0
    assert eval_enc_threshold(c, (reg.forge(p, random.Random(5)), p)) == 0
    assert eval_enc_threshold(c, (reg.enc(sk, 3), p2)) == 0


def test_concept_rejects_foreign_params():
    reg = KeyRegistry()
    sk, _ = reg.gen(4, seed=1)
    _, p2 = reg.gen(4, seed=2)
    with pytest.raises(ValueError):
        EncThresholdConcept(3, sk, p2, reg)


@given(st.integers(0, 2**32), st.integers(1, 16))
def test_never_one_on_cross_key_or_forged(seed, m):
    reg, sk, p, c = make(d=4, t=16, seed=seed)
    sk2, p2 = reg.gen(4, seed=seed + 1)
    rng = random.Random(f"forger:{seed}")
    assert c((reg.enc(sk2, m), p2)) == 0
    assert c((reg.enc(sk2, m), p)) == 0
    assert c((reg.forge(p, rng), p)) == 0


def test_dataset_seeded_example():
    # seed 6953 makes the generator draw 2, 7, 1, 7 for d = 3
    assert np.random.default_rng(6953).integers(1, 9, size=4).tolist() == [2, 7, 1, 7]
    reg, sk, p, _ = make(d=3)
    data = sample_sorted_dataset(reg, sk, p, 4, 4, 6953)
    assert data.plaintexts == (1, 2, 7, 7)
    assert data.labels == (1, 1, 0, 0)


def test_dataset_rejects_empty():
    reg, sk, p, _ = make(d=3)
    with pytest.raises(ValueError):
        sample_sorted_dataset(reg, sk, p, 4, 0, 1)


def test_dataset_deterministic():
    a = sample_sorted_dataset(*make(d=20)[:3], 1 << 19, 50, 7)
    b = sample_sorted_dataset(*make(d=20)[:3], 1 << 19, 50, 7)
    assert a.plaintexts == b.plaintexts


@given(st.integers(0, 2**32), st.integers(1, 40))
def test_dataset_invariants(seed, n):
    reg, sk, p, c = make(d=6, t=20, seed=seed)
    data = sample_sorted_dataset(reg, sk, p, 20, n, seed)
    assert list(data.plaintexts) == sorted(data.plaintexts)
    for e, m in zip(data.examples, data.plaintexts):
        assert reg.dec(sk, e.ciphertext) == m
        assert e.label == c(e.example)


def test_generalization_error_examples():
    d = 10
    reg, sk, p, c = make(d=d, t=(1 << (d - 1)) + 1)
    assert generalization_error(reg, sk, c.t, lambda x, q: c((x, q)), 2000, 1) == 0
    n = 10_000
    err = generalization_error(reg, sk, c.t, lambda x, q: 0, n, 2)
    sigma = math.sqrt(0.25 / n)
    assert abs(err - 0.5) <= 3 * sigma
    assert generalization_error(reg, sk, 1, lambda x, q: 1, 1000, 3) == 1


def test_exact_generalization_error():
    assert exact_generalization_error(4, 9, lambda m: 0) == 0.5
    assert exact_generalization_error(4, 9, lambda m: int(m < 9)) == 0


def test_dataset_csv(tmp_path):
    reg, sk, p, _ = make(d=3)
    data = sample_sorted_dataset(reg, sk, p, 4, 4, 6953)
    write_dataset_csv(data, tmp_path / "d.csv", tmp_path / "m.csv")
    rows = list(csv.DictReader(open(tmp_path / "d.csv")))
    assert [r["label"] for r in rows] == ["1", "1", "0", "0"]
    assert set(rows[0]) == {"index", "nonce_hex", "params_hex", "label"}
    assert [r["plaintext"] for r in csv.DictReader(open(tmp_path / "m.csv"))] == ["1", "2", "7", "7"]
