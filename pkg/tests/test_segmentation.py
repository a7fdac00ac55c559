"""Segmentation strategies: partition invariants and parameter handling."""

from __future__ import annotations

import numpy as np
import pytest

from retsimd.errors import ContractError
from retsimd.segmentation import (
    PUNCTUATION_TOKENS,
    SegmentationConfig,
    SegmentSet,
    SegmentStrategy,
    segment_fixed_length,
    segment_fixed_number,
    segment_punctuation,
)

PUNCT = sorted(PUNCTUATION_TOKENS)


def random_text(rng, max_len: int = 40) -> tuple[str, ...]:
    n = int(rng.integers(1, max_len + 1))
    toks = []
    for _ in range(n):
        if rng.random() < 0.15:
            toks.append(PUNCT[int(rng.integers(0, len(PUNCT)))])
        else:
            toks.append(f"t{int(rng.integers(0, 50)):03d}")
    return tuple(toks)


class TestFixedNumber:
    def test_exact_chunk_sizes(self):
        segs = segment_fixed_number([f"w{i}" for i in range(7)], 3)
        assert tuple(len(s) for s in segs.segments) == (3, 2, 2)

    def test_short_text_shrinks_k(self):
        segs = segment_fixed_number(["a", "b"], 5)
        assert segs.k == 2
        assert segs.segments == (("a",), ("b",))

    def test_invariants_random(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            text = random_text(rng)
            k = int(rng.integers(1, 8))
            segs = segment_fixed_number(text, k)
            flat = tuple(t for s in segs.segments for t in s)
            assert flat == text
            assert segs.k == min(k, len(text))
            lengths = [len(s) for s in segs.segments]
            assert max(lengths) - min(lengths) <= 1
            # remainder tokens go to the earliest segments
            assert lengths == sorted(lengths, reverse=True)

    def test_rejects_bad_k(self):
        with pytest.raises(ContractError):
            segment_fixed_number(["a"], 0)


class TestFixedLength:
    def test_last_chunk_short(self):
        segs = segment_fixed_length([f"w{i}" for i in range(7)], 3)
        assert tuple(len(s) for s in segs.segments) == (3, 3, 1)

    def test_invariants_random(self):
        rng = np.random.default_rng(43)
        for _ in range(1000):
            text = random_text(rng)
            l = int(rng.integers(1, 12))
            segs = segment_fixed_length(text, l)
            flat = tuple(t for s in segs.segments for t in s)
            assert flat == text
            assert all(len(s) == l for s in segs.segments[:-1])
            assert 1 <= len(segs.segments[-1]) <= l

    def test_rejects_bad_l(self):
        with pytest.raises(ContractError):
            segment_fixed_length(["a"], 0)


class TestPunctuation:
    def test_cut_after_enough_words(self):
        text = "a b c d e f . g h i j k l !".split()
        segs = segment_punctuation(text, min_tokens=5)
        assert segs.k == 2
        assert segs.segments[0][-1] == "."
        assert segs.segments[1][-1] == "!"

    def test_remainder_merges_into_final(self):
        text = "a b c d e f . g h".split()
        segs = segment_punctuation(text, min_tokens=5)
        assert segs.k == 1
        assert segs.segments[0] == tuple(text)

    def test_invariants_random(self):
        rng = np.random.default_rng(44)
        for _ in range(1000):
            text = random_text(rng)
            min_tokens = int(rng.integers(1, 8))
            segs = segment_punctuation(text, min_tokens=min_tokens)
            flat = tuple(t for s in segs.segments for t in s)
            assert flat == text
            for seg in segs.segments[:-1]:
                assert seg[-1] in PUNCTUATION_TOKENS
                words = sum(1 for t in seg if t not in PUNCTUATION_TOKENS)
                assert words > min_tokens


class TestSegmentSet:
    def test_rejects_empty(self):
        with pytest.raises(ContractError):
            SegmentSet((), SegmentStrategy.FIXED_NUMBER, 0)

    def test_rejects_coverage_mismatch(self):
        with pytest.raises(ContractError):
            SegmentSet((("a",),), SegmentStrategy.FIXED_NUMBER, 2)

    def test_empty_text_rejected(self):
        with pytest.raises(ContractError):
            segment_fixed_number([], 3)


class TestSegmentationConfig:
    def test_defaults(self):
        cfg = SegmentationConfig()
        assert cfg.strategy is SegmentStrategy.FIXED_NUMBER
        assert cfg.k == 5

    def test_string_strategy_coerced(self):
        cfg = SegmentationConfig(strategy="fixed_length", l=4)
        assert cfg.strategy is SegmentStrategy.FIXED_LENGTH
        assert cfg.segment(["a"] * 10).k == 3

    def test_unknown_strategy_rejected(self):
        with pytest.raises(ContractError):
            SegmentationConfig(strategy="sentence")

    def test_dispatch(self):
        text = [f"w{i}" for i in range(20)]
        assert SegmentationConfig(strategy="fixed_number", k=4).segment(text).k == 4
        assert SegmentationConfig(strategy="fixed_length", l=6).segment(text).k == 4
        got = SegmentationConfig(strategy="punctuation").segment(text)
        assert got.strategy is SegmentStrategy.PUNCTUATION
