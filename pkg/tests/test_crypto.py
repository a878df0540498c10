from itertools import combinations

import pytest
from hypothesis import given, strategies as st

from hermes_bft.crypto import (
    AggregateSignature, BadPart, DuplicateSigner, KeyRing, QuorumShort, sha256,
)

KEYS = KeyRing(b"\x07" * 32, 10)
D = sha256(b"x")


def test_sign_is_deterministic():
    s = KEYS.signer(0)
    assert s.sign(D) == s.sign(D)


def test_verify_own_and_foreign_key():
    sig = KEYS.signer(0).sign(D)
    assert KEYS.verify(0, D, sig.tag)
    assert not KEYS.verify(1, D, sig.tag)


def test_sign_rejects_short_digest():
    with pytest.raises(ValueError):
        KEYS.signer(0).sign(b"short")


def test_out_of_range_signer_never_verifies():
    assert not KEYS.verify(10, D, KEYS.signer(0).sign(D).tag)


def test_keys_depend_on_run_seed():
    other = KeyRing(b"\x08" * 32, 10)
    assert other.signer(0).sign(D) != KEYS.signer(0).sign(D)


def parts(ids, digest=D):
    return [KEYS.signer(i).sign(digest) for i in ids]


class TestAggregate:
    def test_exact_quorum(self):
        keys = KeyRing(b"\x01" * 32, 4)
        agg = keys.aggregate([keys.signer(i).sign(D) for i in (2, 0, 1)], D, 3)
        assert agg.signers == (0, 1, 2)
        assert keys.verify_aggregate(agg, D, 3)

    def test_short(self):
        with pytest.raises(QuorumShort):
            KEYS.aggregate(parts([0, 1]), D, 3)

    def test_duplicate(self):
        p = parts([1, 1, 2])
        with pytest.raises(DuplicateSigner):
            KEYS.aggregate(p, D, 3)

    def test_bad_part(self):
        p = parts([0, 1]) + parts([2], sha256(b"y"))
        with pytest.raises(BadPart):
            KEYS.aggregate(p, D, 3)


class TestVerifyAggregate:
    def test_eligible_committee(self):
        agg = KEYS.aggregate(parts([1, 2]), D, 2)
        assert KEYS.verify_aggregate(agg, D, 2, {1, 2})

    def test_ineligible_signer(self):
        agg = KEYS.aggregate(parts([1, 3]), D, 2)
        assert not KEYS.verify_aggregate(agg, D, 2, {1, 2})

    def test_below_quorum(self):
        agg = KEYS.aggregate(parts([0, 1]), D, 2)
        assert not KEYS.verify_aggregate(agg, D, 3)

    def test_padded_with_duplicate_ids(self):
        agg = KEYS.aggregate(parts([0, 1]), D, 2)
        padded = AggregateSignature((0, 0, 1), (agg.tags[0],) + agg.tags)
        assert not KEYS.verify_aggregate(padded, D, 3)

    def test_wrong_digest(self):
        agg = KEYS.aggregate(parts([0, 1, 2]), D, 3)
        assert not KEYS.verify_aggregate(agg, sha256(b"y"), 3)


@given(st.integers(0, 9), st.integers(0, 9), st.binary(min_size=32, max_size=32))
def test_signature_bound_to_signer(i, j, digest):
    tag = KEYS.signer(i).sign(digest).tag
    assert KEYS.verify(j, digest, tag) == (i == j)


@given(st.sets(st.integers(0, 9), min_size=1), st.integers(0, 9))
def test_aggregate_monotone_in_parts(ids, extra):
    q = len(ids)
    agg = KEYS.aggregate(parts(sorted(ids)), D, q)
    assert KEYS.verify_aggregate(agg, D, q)
    bigger = KEYS.aggregate(parts(sorted(ids | {extra})), D, q)
    assert KEYS.verify_aggregate(bigger, D, q)


@pytest.mark.parametrize("f", [1, 2, 3])
def test_quorums_intersect_in_weak_quorum(f):
    n = 3 * f + 1
    quorums = list(combinations(range(n), 2 * f + 1))
    smallest = min(len(set(a) & set(b)) for a in quorums for b in quorums)
    assert smallest == f + 1
