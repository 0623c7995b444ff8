"""Labels, character spans and span-set algebra.

Offsets are Unicode scalar value indices into the owning text, half-open
[start, end). Span sets keep a stable (start, end) order, forbid exact
duplicates, and explicitly allow overlap and nesting.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Iterator, Optional, Sequence

from .errors import AlignmentError, DataError

if TYPE_CHECKING:  # pragma: no cover
    from .data import Tokenization


class Label(enum.IntEnum):
    """The three inference labels, ordered for deterministic tie-breaking.

    The order Neutral < Entailed < Contradicted is fixed: whenever two
    labels tie on a score, the larger one in this order wins, so exact
    ties resolve toward contradiction.
    """

    NEUTRAL = 0
    ENTAILED = 1
    CONTRADICTED = 2

    @property
    def short(self) -> str:
        return {Label.NEUTRAL: "n", Label.ENTAILED: "e", Label.CONTRADICTED: "c"}[self]

    @classmethod
    def from_short(cls, s: str) -> "Label":
        try:
            return {"n": cls.NEUTRAL, "e": cls.ENTAILED, "c": cls.CONTRADICTED}[s]
        except KeyError:
            raise DataError(f"unknown label string: {s!r}") from None


@dataclass(frozen=True, order=True)
class Span:
    """Half-open [start, end) character interval with an optional polarity.

    Salient spans carry ENTAILED or CONTRADICTED polarity; fact spans carry
    none. NEUTRAL is never stored on a span.
    """

    start: int
    end: int
    polarity: Optional[Label] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise DataError(f"invalid span [{self.start}, {self.end})")
        if self.polarity is Label.NEUTRAL:
            raise DataError("NEUTRAL polarity is never stored on a span")

    def __len__(self) -> int:
        return self.end - self.start

    def contains(self, other: "Span") -> bool:
        return self.start <= other.start and other.end <= self.end

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.end and other.start < self.end

    def text(self, owner: str) -> str:
        return owner[self.start : self.end]


@dataclass(frozen=True)
class SpanSet:
    """An ordered, duplicate-free collection of spans over one text."""

    spans: tuple[Span, ...]
    owner_len: int

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.spans, key=lambda s: (s.start, s.end)))
        object.__setattr__(self, "spans", ordered)
        seen = set()
        for s in ordered:
            if s.end > self.owner_len:
                raise DataError(
                    f"span [{s.start}, {s.end}) exceeds owner length {self.owner_len}"
                )
            key = (s.start, s.end, s.polarity)
            if key in seen:
                raise DataError(f"duplicate span [{s.start}, {s.end})")
            seen.add(key)

    @classmethod
    def of(cls, spans: Iterable[Span], owner_len: int) -> "SpanSet":
        return cls(tuple(spans), owner_len)

    @classmethod
    def empty(cls, owner_len: int) -> "SpanSet":
        return cls((), owner_len)

    def __iter__(self) -> Iterator[Span]:
        return iter(self.spans)

    def __len__(self) -> int:
        return len(self.spans)

    def __bool__(self) -> bool:
        return bool(self.spans)

    def char_set(self) -> set[int]:
        """Union of covered character indices (the brute-force view)."""
        covered: set[int] = set()
        for s in self.spans:
            covered.update(range(s.start, s.end))
        return covered

    def coverage(self) -> float:
        """Fraction of the owning text covered by at least one span."""
        if self.owner_len == 0:
            return 0.0
        return len(self.char_set()) / self.owner_len


def _check_same_owner(a: SpanSet, b: SpanSet) -> None:
    if a.owner_len != b.owner_len:
        raise AlignmentError(
            f"span sets have different owner lengths: {a.owner_len} vs {b.owner_len}"
        )


def span_iou(a: SpanSet, b: SpanSet) -> float:
    """Intersection-over-union of the covered character sets.

    Two empty sets agree vacuously and score 1.0.
    """
    _check_same_owner(a, b)
    ca, cb = a.char_set(), b.char_set()
    union = len(ca | cb)
    if union == 0:
        return 1.0
    return len(ca & cb) / union


def exact_match(a: SpanSet, b: SpanSet) -> bool:
    """True iff both sets cover exactly the same characters."""
    _check_same_owner(a, b)
    return a.char_set() == b.char_set()


def merge_salient_tokens(
    token_labels: Sequence[Label],
    tok: "Tokenization",
    max_gap: int = 1,
) -> SpanSet:
    """Convert per-token labels into coherent character spans per polarity.

    Maximal runs of equal non-neutral polarity become spans; runs of the
    same polarity separated by at most ``max_gap`` other tokens are merged.
    Runs of different polarity are never merged.
    """
    if len(token_labels) != len(tok):
        raise AlignmentError(
            f"{len(token_labels)} labels for {len(tok)} tokens"
        )
    spans: list[Span] = []
    for polarity in (Label.ENTAILED, Label.CONTRADICTED):
        run_start: Optional[int] = None  # token index of current run start
        run_end = -1  # last token index with this polarity
        for i, lab in enumerate(token_labels):
            if lab is not polarity:
                continue
            if run_start is not None and i - run_end - 1 <= max_gap:
                run_end = i
            else:
                if run_start is not None:
                    spans.append(_token_range_span(tok, run_start, run_end, polarity))
                run_start, run_end = i, i
        if run_start is not None:
            spans.append(_token_range_span(tok, run_start, run_end, polarity))
    return SpanSet.of(spans, tok.owner_len)


def _token_range_span(tok: "Tokenization", i: int, j: int, polarity: Label) -> Span:
    start = tok.char_offsets[i][0]
    end = tok.char_offsets[j][1]
    return Span(start, end, polarity)
