import math

import numpy as np
import pytest

from tokengossip.fusion import (
    MAX_IDENTITY,
    FusionError,
    TokenPayload,
    fold,
    fuse,
    fuse_payload,
    max_fusion,
    sum_fusion,
    weighted_avg_fusion,
)

SUM = sum_fusion()
MAX = max_fusion()
WAVG = weighted_avg_fusion()


def test_fuse_hand_examples():
    assert fuse(SUM, 3, 4) == 7
    assert fuse(MAX, 2, 9) == 9
    y, w = fuse(WAVG, (2.0, 1.0), (4.0, 3.0))
    assert (y, w) == (3.5, 4.0)


def test_identity_laws():
    for spec, x in ((SUM, 17), (MAX, -4), (WAVG, (2.5, 3.0))):
        e = spec.identity
        assert fuse(spec, x, e) == x
        assert fuse(spec, e, x) == x
        assert fuse(spec, e, e) == e


def test_max_identity_is_a_sentinel():
    # -inf can never collide with a finite sensor reading
    assert MAX.identity == MAX_IDENTITY
    assert fuse(MAX, -(2**62), MAX.identity) == -(2**62)


def test_fold_hand_examples():
    assert fold(SUM, [1, 2, 3, 4]) == 10
    assert fold(MAX, [5]) == 5
    # (1*1 + 3*1 + 5*2) / 4 = 3.5, cross-checked against a pairwise fold
    direct = fold(WAVG, [(1.0, 1.0), (3.0, 1.0), (5.0, 2.0)])
    pairwise = fuse(WAVG, fuse(WAVG, (1.0, 1.0), (3.0, 1.0)), (5.0, 2.0))
    assert direct == (3.5, 4.0)
    assert math.isclose(direct[0], pairwise[0], rel_tol=1e-12)
    assert math.isclose(direct[1], pairwise[1], rel_tol=1e-12)


def test_fold_empty_rejected():
    with pytest.raises(FusionError):
        fold(SUM, [])


def test_payload_fusing():
    assert fuse_payload(SUM, TokenPayload(3, 2), TokenPayload(5, 1)) == TokenPayload(8, 3)
    assert fuse_payload(SUM, TokenPayload(7, 4), TokenPayload(0, 0)) == TokenPayload(7, 4)
    assert fuse_payload(MAX, TokenPayload(1, 4), TokenPayload(9, 4)) == TokenPayload(9, 8)


def test_permutation_invariance():
    rng = np.random.default_rng(11)
    ints = [int(v) for v in rng.integers(-1000, 1000, size=40)]
    for spec in (SUM, MAX):
        base = fold(spec, ints)
        for _ in range(20):
            perm = [ints[i] for i in rng.permutation(len(ints))]
            assert fold(spec, perm) == base
    pairs = [(float(y), float(w)) for y, w in zip(rng.normal(size=30), rng.random(30) + 0.1)]
    y0, w0 = fold(WAVG, pairs)
    for _ in range(20):
        perm = [pairs[i] for i in rng.permutation(len(pairs))]
        y, w = fold(WAVG, perm)
        assert math.isclose(y, y0, rel_tol=1e-9)
        assert math.isclose(w, w0, rel_tol=1e-9)


def test_decomposability_random_splits():
    rng = np.random.default_rng(5)
    ints = [int(v) for v in rng.integers(-50, 50, size=25)]
    for spec in (SUM, MAX):
        whole = fold(spec, ints)
        for _ in range(10):
            k = int(rng.integers(1, len(ints)))
            assert fuse(spec, fold(spec, ints[:k]), fold(spec, ints[k:])) == whole


def test_identity_absorption():
    rng = np.random.default_rng(2)
    for spec in (SUM, MAX, WAVG):
        vals = (
            [(float(y), float(w)) for y, w in zip(rng.normal(size=8), rng.random(8))]
            if spec is WAVG
            else [int(v) for v in rng.integers(-9, 9, size=8)]
        )
        padded = []
        for v in vals:
            padded.extend([spec.identity, v, spec.identity])
        assert fold(spec, padded) == fold(spec, vals)


def test_count_additivity():
    payloads = [TokenPayload(int(v), int(c)) for v, c in zip(range(6), [1, 2, 0, 3, 1, 1])]
    total = payloads[0]
    for p in payloads[1:]:
        total = fuse_payload(SUM, total, p)
    assert total.count == sum(p.count for p in payloads)


def test_sum_overflow_checked():
    with pytest.raises(OverflowError):
        fuse(SUM, 2**62, 2**62)
    with pytest.raises(OverflowError):
        fuse(SUM, 2**63, 1)  # already out of range on input


def test_kind_mismatch_rejected():
    with pytest.raises(FusionError):
        fuse(SUM, 1.5, 2)
    with pytest.raises(FusionError):
        fuse(WAVG, (1.0, 2.0), 3)
    with pytest.raises(FusionError):
        fuse(WAVG, (1.0, -2.0), (0.0, 1.0))  # negative weight


def test_negative_count_rejected():
    with pytest.raises(FusionError):
        TokenPayload(0, -1)
