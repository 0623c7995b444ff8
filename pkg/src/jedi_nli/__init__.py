"""Joint extractive fact decomposition and interpretable NLI."""

from .spans import Label, Span, SpanSet, exact_match, merge_salient_tokens, span_iou
from .data import (
    NLIInstance,
    StatsReport,
    Tokenization,
    corpus_stats,
    load_dataset,
    save_dataset,
    whitespace_tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "Label",
    "Span",
    "SpanSet",
    "span_iou",
    "exact_match",
    "merge_salient_tokens",
    "NLIInstance",
    "Tokenization",
    "whitespace_tokenize",
    "load_dataset",
    "save_dataset",
    "corpus_stats",
    "StatsReport",
    "__version__",
]
