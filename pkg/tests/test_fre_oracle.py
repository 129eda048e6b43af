import itertools
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leaklab.fre_oracle import (
    ChallengeSubmission,
    CiphertextHandle,
    Invalid,
    KeyRegistry,
    UnknownKeyError,
    Valid,
    run_security_game,
    validate_submission,
)
from leaklab.leakage import Comparison, DistanceFunctionKind as K, leak_from_dist

L, E = Comparison.LESS, Comparison.EQUAL


def brute_validate(left, right, kind=K.FLOOR_LOG):
    q = len(left)
    for i, j, k in itertools.product(range(q), repeat=3):
        if leak_from_dist(kind, left[i], left[j], left[k]) != leak_from_dist(kind, right[i], right[j], right[k]):
            return Invalid(i + 1, j + 1, k + 1)
    return Valid()


# keys and ciphertexts


def test_gen_is_deterministic_per_seed():
    r1, r2 = KeyRegistry(), KeyRegistry()
    sk1, p1 = r1.gen(8, K.FLOOR_LOG, seed=1)
    sk2, p2 = r2.gen(8, K.FLOOR_LOG, seed=1)
    assert p1 == p2
    assert [c.nonce for c in r1.enc_many(sk1, [3, 4, 5])] == [c.nonce for c in r2.enc_many(sk2, [3, 4, 5])]


def test_gen_width_bounds():
    reg = KeyRegistry()
    with pytest.raises(ValueError):
        reg.gen(0)
    sk, _ = reg.gen(62, K.FLOOR_LOG, seed=7)
    assert reg.dec(sk, reg.enc(sk, 1 << 62)) == 1 << 62


def test_enc_randomised_and_correct():
    reg = KeyRegistry()
    sk, _ = reg.gen(8, seed=3)
    a, b = reg.enc(sk, 5), reg.enc(sk, 5)
    assert a.nonce != b.nonce
    assert reg.dec(sk, a) == reg.dec(sk, b) == 5


def test_enc_errors():
    reg = KeyRegistry()
    sk, _ = reg.gen(3, seed=3)
    with pytest.raises(ValueError):
        reg.enc(sk, 9)
    with pytest.raises(UnknownKeyError):
        reg.enc(type(sk)(999), 1)


def test_dec_failure_cases():
    reg = KeyRegistry()
    sk1, p1 = reg.gen(8, seed=1)
    sk2, _ = reg.gen(8, seed=2)
    assert reg.dec(sk1, reg.enc(sk1, 9)) == 9
    assert reg.dec(sk1, reg.forge(p1, random.Random(0))) is None
    assert reg.dec(sk1, reg.enc(sk2, 9)) is None
    assert reg.dec(sk1, "garbage") is None


def test_eval_examples():
    reg = KeyRegistry()
    sk, p = reg.gen(4, seed=5)
    c1, c2, c10, c4 = reg.enc_many(sk, [1, 2, 10, 4])
    assert reg.eval(p, c1, c2, c10) == (L, L, L, 1)
    assert reg.eval(p, c1, reg.forge(p, random.Random(1)), c10) is None
    assert reg.eval(p, c4, c4, c4) == (E, E, E, 0)


def test_eval_unknown_params_and_stale_tag():
    reg = KeyRegistry()
    sk, p = reg.gen(4, seed=5)
    _, q = reg.gen(4, seed=6)
    c = reg.enc(sk, 3)
    assert reg.eval(q, c, c, c) is None
    stale = CiphertextHandle(c.nonce, q)
    assert reg.eval(p, c, stale, c) is None


def test_exact_distance_gated_by_kind():
    reg = KeyRegistry()
    sk, p = reg.gen(8, K.EXACT, seed=1)
    a, b = reg.enc_many(sk, [10, 3])
    assert reg.exact_distance(p, a, b) == 7
    sk2, p2 = reg.gen(8, K.FLOOR_LOG, seed=2)
    c = reg.enc(sk2, 1)
    with pytest.raises(PermissionError):
        reg.exact_distance(p2, c, c)


def test_view_exposes_eval_only():
    reg = KeyRegistry()
    oracle = reg.view()
    assert not hasattr(oracle, "dec") and not hasattr(oracle, "enc")


@given(st.integers(1, 20), st.lists(st.integers(0, 2**20), min_size=3, max_size=3), st.integers(0, 2**32))
def test_eval_agrees_with_decrypt_then_leak(d, raw, seed):
    reg = KeyRegistry()
    sk, p = reg.gen(d, K.FLOOR_LOG, seed=seed)
    ms = [1 + m % (1 << d) for m in raw]
    cs = reg.enc_many(sk, ms)
    assert reg.eval(p, *cs) == leak_from_dist(K.FLOOR_LOG, *ms)


@given(st.integers(0, 7), st.integers(0, 2**32))
def test_strong_correctness_bot_iff_some_argument_fails(mask, seed):
    reg = KeyRegistry()
    sk, p = reg.gen(6, seed=seed)
    other, _ = reg.gen(6, seed=seed + 1)
    rng = random.Random(f"forger:{seed}")
    cs = []
    for bit in range(3):
        if mask >> bit & 1:
            cs.append(reg.forge(p, rng) if rng.random() < 0.5 else reg.enc(other, 1))
        else:
            cs.append(reg.enc(sk, rng.randint(1, 64)))
    out = reg.eval(p, *cs)
    assert (out is None) == (mask != 0)


# validation


def test_validate_examples():
    assert isinstance(validate_submission(ChallengeSubmission((1, 2, 3), (1, 2, 3))), Valid)
    assert validate_submission(ChallengeSubmission((1, 2, 3), (1, 2, 4))) == Invalid(1, 2, 3)
    bad = validate_submission(ChallengeSubmission((1, 2), (1, 2, 3)))
    assert bad == Invalid(0, 0, 0, reason="length mismatch")
    assert isinstance(validate_submission(ChallengeSubmission((1, 2), (1, 4))), Valid)


@given(st.integers(1, 6), st.integers(0, 2**32))
def test_validate_matches_brute_force(q, seed):
    rng = np.random.default_rng(seed)
    left = rng.integers(1, 17, size=q).tolist()
    # half the time perturb a copy so valid submissions are common
    right = left[:] if rng.random() < 0.5 else rng.integers(1, 17, size=q).tolist()
    if rng.random() < 0.5 and q:
        k = int(rng.integers(q))
        right[k] = int(min(16, max(1, right[k] + rng.integers(-2, 3))))
    assert validate_submission(ChallengeSubmission(left, right)) == brute_validate(left, right)


# security game


class ConstantAdversary:
    def __init__(self, sub, out=0):
        self.sub, self.out = sub, out

    def challenge(self, rng):
        return self.sub

    def guess(self, params, cts, oracle, rng):
        return self.out


class ExhaustiveEvalAdversary:
    """Queries eval on every index triple and hashes the answers into a bit."""

    def __init__(self, sub):
        self.sub = sub

    def challenge(self, rng):
        return self.sub

    def guess(self, params, cts, oracle, rng):
        outs = tuple(oracle.eval(params, *t) for t in itertools.product(cts, repeat=3))
        return hash(outs) & 1


def test_constant_adversary_has_no_advantage():
    res = run_security_game(ConstantAdversary(ChallengeSubmission((1, 2), (1, 4))), 2000, seed=1, d=3)
    assert res.estimate.advantage == 0


def test_identical_worlds_no_advantage():
    sub = ChallengeSubmission((3, 9, 20), (3, 9, 20))
    res = run_security_game(ExhaustiveEvalAdversary(sub), 4000, seed=2, d=5)
    assert res.estimate.advantage <= res.estimate.ci_halfwidth + 1e-12


def test_ideal_model_hides_valid_difference():
    sub = ChallengeSubmission((1, 2), (1, 4))
    res = run_security_game(ExhaustiveEvalAdversary(sub), 10_000, seed=3, d=3)
    assert res.invalid_count == 0
    assert res.estimate.advantage <= res.estimate.ci_halfwidth


def test_invalid_submission_is_recorded_not_raised():
    res = run_security_game(ConstantAdversary(ChallengeSubmission((1, 2, 3), (1, 2, 4)), out=1), 200, seed=4, d=3)
    assert res.invalid_count == 200


def test_game_reproducible():
    sub = ChallengeSubmission((1, 2), (1, 4))
    a = run_security_game(ExhaustiveEvalAdversary(sub), 300, seed=9, d=3)
    b = run_security_game(ExhaustiveEvalAdversary(sub), 300, seed=9, d=3)
    assert a.estimate.to_dict() == b.estimate.to_dict()


def test_game_rejects_zero_trials():
    with pytest.raises(ValueError):
        run_security_game(ConstantAdversary(ChallengeSubmission((1,), (1,))), 0, seed=1, d=3)
