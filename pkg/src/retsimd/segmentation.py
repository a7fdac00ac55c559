"""Text segmentation strategies.

A post's token sequence is split into an ordered list of contiguous,
non-overlapping segments whose concatenation reproduces the input exactly.
Three strategies are provided: a fixed number of segments, fixed-length
chunks, and punctuation-driven cuts with a minimum word count.  Downstream
code must always read the effective segment count from the result, never
from configuration: short texts shrink it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import ContractError

# Exact-match punctuation tokens, covering Latin and CJK scripts.
PUNCTUATION_TOKENS = frozenset({".", ",", ";", ":", "!", "?", "。", "，", "！", "？"})


class SegmentStrategy(Enum):
    FIXED_NUMBER = "fixed_number"
    FIXED_LENGTH = "fixed_length"
    PUNCTUATION = "punctuation"


@dataclass(frozen=True)
class SegmentSet:
    """Ordered contiguous partition of a token sequence."""

    segments: tuple[tuple[str, ...], ...]
    strategy: SegmentStrategy
    source_token_count: int

    @property
    def k(self) -> int:
        """Effective number of segments."""
        return len(self.segments)

    def __post_init__(self):
        if not self.segments or any(len(s) == 0 for s in self.segments):
            raise ContractError("SegmentSet requires at least one non-empty segment")
        total = sum(len(s) for s in self.segments)
        if total != self.source_token_count:
            raise ContractError(
                f"segments cover {total} tokens, source has {self.source_token_count}"
            )


def _require_tokens(text) -> tuple[str, ...]:
    tokens = tuple(text)
    if not tokens:
        raise ContractError("cannot segment empty text")
    return tokens


def segment_fixed_number(text, k: int) -> SegmentSet:
    """Split into ``min(k, len(text))`` segments of near-equal length.

    Lengths differ by at most one; remainder tokens go to the earliest
    segments.  Texts shorter than ``k`` yield one single-token segment per
    token.
    """
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    tokens = _require_tokens(text)
    n = len(tokens)
    k_eff = min(k, n)
    base, extra = divmod(n, k_eff)
    segments = []
    pos = 0
    for j in range(k_eff):
        size = base + (1 if j < extra else 0)
        segments.append(tokens[pos : pos + size])
        pos += size
    return SegmentSet(tuple(segments), SegmentStrategy.FIXED_NUMBER, n)


def segment_fixed_length(text, l: int) -> SegmentSet:
    """Split into chunks of exactly ``l`` tokens; the last may be shorter."""
    if l < 1:
        raise ContractError(f"l must be >= 1, got {l}")
    tokens = _require_tokens(text)
    n = len(tokens)
    segments = tuple(tokens[i : i + l] for i in range(0, n, l))
    return SegmentSet(segments, SegmentStrategy.FIXED_LENGTH, n)


def segment_punctuation(text, min_tokens: int = 5) -> SegmentSet:
    """Cut at punctuation tokens guarding a minimum segment word count.

    Every punctuation token is a candidate cut point; the cut commits only
    when the accumulated segment holds more than ``min_tokens``
    non-punctuation tokens.  Punctuation stays attached to the preceding
    segment, and any trailing remainder merges into the final segment.
    """
    if min_tokens < 1:
        raise ContractError(f"min_tokens must be >= 1, got {min_tokens}")
    tokens = _require_tokens(text)
    segments: list[tuple[str, ...]] = []
    start = 0
    words_since_cut = 0
    for i, tok in enumerate(tokens):
        if tok in PUNCTUATION_TOKENS:
            if words_since_cut > min_tokens:
                segments.append(tokens[start : i + 1])
                start = i + 1
                words_since_cut = 0
        else:
            words_since_cut += 1
    if start < len(tokens):
        if segments:
            segments[-1] = segments[-1] + tokens[start:]
        else:
            segments.append(tokens[start:])
    return SegmentSet(tuple(segments), SegmentStrategy.PUNCTUATION, len(tokens))


@dataclass(frozen=True)
class SegmentationConfig:
    """Strategy selection as it appears in experiment configs."""

    strategy: SegmentStrategy = SegmentStrategy.FIXED_NUMBER
    k: int = 5
    l: int = 10
    min_tokens: int = 5

    def __post_init__(self):
        if not isinstance(self.strategy, SegmentStrategy):
            try:
                coerced = SegmentStrategy(self.strategy)
            except ValueError:
                raise ContractError(
                    f"unknown segmentation strategy {self.strategy!r}"
                ) from None
            object.__setattr__(self, "strategy", coerced)

    def segment(self, text) -> SegmentSet:
        if self.strategy is SegmentStrategy.FIXED_NUMBER:
            return segment_fixed_number(text, self.k)
        if self.strategy is SegmentStrategy.FIXED_LENGTH:
            return segment_fixed_length(text, self.l)
        return segment_punctuation(text, self.min_tokens)
