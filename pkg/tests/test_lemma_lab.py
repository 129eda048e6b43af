import itertools
import json

import numpy as np
import pytest

from leaklab.leakage import DistanceFunctionKind as K
from leaklab.leakage import comp, fld, leak_fn
from leaklab.attack import guard_band, kappa
from leaklab.lemma_lab import (
    LemmaReport,
    fldspread_trial,
    verify_bucket_sizes,
    verify_fldspread,
    verify_log_invariance,
    verify_regularity,
)


def all_at_one(rng, n, d):
    return np.ones(n, dtype=np.int64)


# report semantics


def test_verdict_is_one_sided():
    assert LemmaReport("x", 4, 6, 100, 100, 0.99).verdict == "Consistent"
    # rate 0.9 with a ci of about 0.059 clears 0.95
    assert LemmaReport("x", 4, 6, 100, 90, 0.95).verdict == "Consistent"
    assert LemmaReport("x", 4, 6, 100, 80, 0.95).verdict == "Violated"
    assert LemmaReport("x", 4, 6, 100, 100, 1.01).verdict == "Violated"


def test_report_round_trip():
    r = verify_regularity(16, 30, 20, seed=1)
    data = json.loads(json.dumps(r.to_dict()))
    back = LemmaReport.from_dict(data)
    assert back.to_dict() == r.to_dict()
    assert {"lemma", "n", "d", "trials", "success", "rate", "ci", "claimed", "verdict"} <= set(data)


@pytest.mark.parametrize("fn", [verify_regularity, verify_bucket_sizes, verify_fldspread])
def test_verifiers_deterministic(fn):
    assert fn(32, 30, 30, seed=5).to_dict() == fn(32, 30, 30, seed=5).to_dict()


def test_log_invariance_deterministic():
    a = verify_log_invariance(32, 30, 10, seed=5).to_dict()
    assert a == verify_log_invariance(32, 30, 10, seed=5).to_dict()


@pytest.mark.parametrize("fn", [verify_regularity, verify_bucket_sizes, verify_fldspread])
def test_n_below_two_rejected(fn):
    with pytest.raises(ValueError):
        fn(1, 20, 10, seed=0)


def test_probe_pairs_minimum():
    with pytest.raises(ValueError):
        verify_log_invariance(32, 30, 5, probe_pairs=7)


# regularity


def test_regularity_at_scale():
    r = verify_regularity(128, 40, 1000, seed=1)
    assert r.verdict == "Consistent"
    assert r.diagnostics["max_intersection"] <= r.diagnostics["bound"]


def test_regularity_small_regime_reports():
    r = verify_regularity(4, 6, 200, seed=2)
    assert r.verdict in ("Consistent", "Violated")
    assert r.diagnostics["precondition_met"] is False


def test_regularity_impossible_claim():
    assert verify_regularity(128, 40, 200, seed=3, claimed=1.01).verdict == "Violated"


# bucket sizes


def test_bucket_sizes_at_scale():
    r = verify_bucket_sizes(128, 40, 1000, seed=1)
    assert r.verdict == "Consistent"
    assert r.diagnostics["max_bucket"] <= guard_band(128, 40)


def test_bucket_sizes_degenerate_sampler_fails():
    r = verify_bucket_sizes(128, 40, 50, seed=1, sampler=all_at_one)
    assert r.success == 0
    assert r.diagnostics["max_bucket"] == 2**40 - 1
    assert r.verdict == "Violated"


# fld spread


def test_fldspread_at_scale():
    r = verify_fldspread(256, 40, 200, seed=1)
    assert r.verdict == "Consistent"
    assert r.diagnostics["max_removal"] <= kappa(256)
    assert "first_failure" not in r.diagnostics


def test_fldspread_without_guard_band_fails():
    r = verify_fldspread(64, 30, 100, seed=2, g=0)
    assert r.verdict == "Violated"
    assert r.rate < 0.5
    f = r.diagnostics["first_failure"]
    assert f["reason"] == "fld to the two neighbours differs"
    assert 2 <= f["i"] <= 63


def test_fldspread_drill_down_names_the_witness():
    pts = np.array([1, 100, 120, 140, 1000], dtype=np.int64)
    ok, _, fail = fldspread_trial(pts, 10, 0.0, kappa(5))
    assert not ok
    # the witness really sees the two neighbours of m_i at different fld
    prev, nxt = pts[fail.i - 2], pts[fail.i]
    assert fld(fail.y, int(prev)) != fld(fail.y, int(nxt))


def test_fldspread_trial_size_failure():
    pts = np.arange(1, 17, dtype=np.int64)
    ok, worst, fail = fldspread_trial(pts, 10, 1024.0, 3)
    assert not ok and worst == 16 and fail.reason == "removal set too large"


# log invariance


def test_log_invariance_reports_both_conditions():
    r = verify_log_invariance(64, 40, 40, probe_pairs=8, seed=1)
    assert r.verdict == "Consistent"
    for key in ("condition1_rate", "condition2_rate", "size_ok_rate"):
        assert 0 <= r.diagnostics[key] <= 1
    assert r.diagnostics["condition1_rate"] == r.rate


def test_permutation_sweep():
    rng = np.random.default_rng(0)
    leak = leak_fn(K.FLOOR_LOG)
    for x in rng.integers(1, 2**20, size=(1000, 3)):
        x = [int(v) for v in x]
        base = leak(*x)
        for perm in itertools.permutations(range(3)):
            y = [x[k] for k in perm]
            out = leak(*y)
            assert out.closeness_bit == base.closeness_bit
            assert (out.c01, out.c12, out.c02) == (comp(y[0], y[1]), comp(y[1], y[2]), comp(y[0], y[2]))
