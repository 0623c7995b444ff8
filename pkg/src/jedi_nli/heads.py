"""The four trainable heads, their losses, and negative sampling.

Class logits are carried as tensors of shape (..., 3) in the fixed order
(entailed, contradicted, threshold). The threshold slot doubles as the
neutral class: a class is predicted only when its logit exceeds the
threshold logit, and "no class above threshold" decodes to neutral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Collection, Optional, Sequence

import numpy as np
import torch
from torch import nn

from .data import Tokenization
from .encoder import EncoderOutput
from .errors import DataError
from .spans import Label, Span, SpanSet

if TYPE_CHECKING:  # pragma: no cover
    from .model import JointModel

E_IDX, C_IDX, TH_IDX = 0, 1, 2
_SLOT = {Label.ENTAILED: E_IDX, Label.CONTRADICTED: C_IDX}
NEG_INF = float("-inf")


@dataclass(frozen=True)
class ClassLogits:
    """Named view over a (3,) logits tensor."""

    tensor: torch.Tensor

    @property
    def entailed(self) -> torch.Tensor:
        return self.tensor[E_IDX]

    @property
    def contradicted(self) -> torch.Tensor:
        return self.tensor[C_IDX]

    @property
    def threshold(self) -> torch.Tensor:
        return self.tensor[TH_IDX]

    @classmethod
    def of(cls, entailed: float, contradicted: float, threshold: float) -> "ClassLogits":
        return cls(torch.tensor([entailed, contradicted, threshold], dtype=torch.float64))


def _as_logits_tensor(logits) -> torch.Tensor:
    if isinstance(logits, ClassLogits):
        return logits.tensor
    t = torch.as_tensor(logits, dtype=torch.float64) if not torch.is_tensor(logits) else logits
    if t.shape[-1] != 3:
        raise DataError(f"class logits must have a trailing dimension of 3, got {tuple(t.shape)}")
    return t


class GroupBilinear(nn.Module):
    """Block-wise bilinear classifier over k equal embedding groups.

    Scores three class slots (entailed, contradicted, threshold) from a
    left vector of width ``d_left`` and a tanh-squashed right vector of
    width ``d_right``.
    """

    def __init__(self, d_left: int, d_right: int, k: int):
        super().__init__()
        if d_left % k or d_right % k:
            raise DataError(f"group count {k} must divide widths {d_left} and {d_right}")
        self.k = k
        self.gl = d_left // k
        self.gr = d_right // k
        self.weight = nn.Parameter(torch.zeros(3, k, self.gl, self.gr))
        self.bias = nn.Parameter(torch.zeros(3))
        nn.init.normal_(self.weight, std=0.02)

    def forward(self, left: torch.Tensor, right: torch.Tensor) -> torch.Tensor:
        """left: (d_left,), right: (d_right,) or (m, d_right) -> (3,) or (m, 3)."""
        za = left.view(self.k, self.gl)
        if right.dim() == 1:
            zb = torch.tanh(right).view(self.k, self.gr)
            return torch.einsum("kg,xkgh,kh->x", za, self.weight, zb) + self.bias
        zb = torch.tanh(right).view(right.shape[0], self.k, self.gr)
        return torch.einsum("kg,xkgh,mkh->mx", za, self.weight, zb) + self.bias


class SpanHead(nn.Module):
    """Span start detection, span scoring, and the two span reductions."""

    def __init__(self, d: int, h: int):
        super().__init__()
        self.w_left = nn.Parameter(torch.zeros(d))
        self.b_left = nn.Parameter(torch.zeros(()))
        self.red1 = nn.Linear(2 * d, h)
        self.w_span = nn.Parameter(torch.zeros(h))
        self.b_span = nn.Parameter(torch.zeros(()))
        self.red2 = nn.Linear(2 * d, h)
        for p in (self.w_left, self.w_span, self.red1.weight, self.red2.weight):
            nn.init.normal_(p, std=0.02)
        nn.init.zeros_(self.red1.bias)
        nn.init.zeros_(self.red2.bias)


def group_bilinear(a: torch.Tensor, b: torch.Tensor, params: GroupBilinear) -> ClassLogits:
    """Class logits from the block-wise bilinear form of ``a`` and tanh(b)."""
    return ClassLogits(params(a, b))


def global_classify(out: EncoderOutput, model: "JointModel") -> ClassLogits:
    """Initial whole-pair classification from the CLS and SEP embeddings."""
    return group_bilinear(out.e_cls, out.e_sep, model.global_gb)


def _check_pair(out: EncoderOutput, i: int, j: int) -> None:
    if not (0 <= i <= j < out.n):
        raise IndexError(f"span ({i}, {j}) out of range for {out.n} premise tokens")


def is_left_logits(out: EncoderOutput, model: "JointModel") -> torch.Tensor:
    model.counters["span_head_evals"] += 1
    head = model.span_head
    return out.premise_embs @ head.w_left + head.b_left


def predict_is_left(out: EncoderOutput, model: "JointModel") -> torch.Tensor:
    """Per premise token, probability that it starts an atomic fact span."""
    return torch.sigmoid(is_left_logits(out, model))


def _pair_reps(out: EncoderOutput, pairs: Sequence[tuple[int, int]], red: nn.Linear) -> torch.Tensor:
    idx = torch.tensor(pairs, dtype=torch.long).reshape(-1, 2)
    cat = torch.cat([out.premise_embs[idx[:, 0]], out.premise_embs[idx[:, 1]]], dim=1)
    return red(cat)


def span_representation(
    out: EncoderOutput, i: int, j: int, model: "JointModel", which: str = "red1"
) -> torch.Tensor:
    """Fixed-size representation of token span (i, j) under one reduction."""
    _check_pair(out, i, j)
    model.counters["span_head_evals"] += 1
    red = model.span_head.red1 if which == "red1" else model.span_head.red2
    return _pair_reps(out, [(i, j)], red)[0]


def span_score_logits(
    out: EncoderOutput, pairs: Sequence[tuple[int, int]], model: "JointModel"
) -> torch.Tensor:
    model.counters["span_head_evals"] += 1
    head = model.span_head
    reps = _pair_reps(out, pairs, head.red1)
    return reps @ head.w_span + head.b_span


def score_span(out: EncoderOutput, i: int, j: int, model: "JointModel") -> torch.Tensor:
    """Probability that token span (i, j) expresses a relevant atomic fact."""
    _check_pair(out, i, j)
    return torch.sigmoid(span_score_logits(out, [(i, j)], model))[0]


def classify_spans(
    out: EncoderOutput, pairs: Sequence[tuple[int, int]], model: "JointModel"
) -> torch.Tensor:
    """Class logits (m, 3) for each token span, conditioned on CLS."""
    for i, j in pairs:
        _check_pair(out, i, j)
    model.counters["span_head_evals"] += 1
    reps = _pair_reps(out, pairs, model.span_head.red2)
    return model.span_gb(out.e_cls, reps)


def classify_span(out: EncoderOutput, i: int, j: int, model: "JointModel") -> ClassLogits:
    return ClassLogits(classify_spans(out, [(i, j)], model)[0])


@dataclass(frozen=True)
class ExtractConfig:
    t_left: float = 0.5
    t_span: float = 0.5
    max_len: int = 64
    max_spans: int = 32


@dataclass(frozen=True)
class CandidateSpan:
    i: int
    j: int  # inclusive end token
    p_is_span: float
    char_span: Span


def extract_spans(
    out: EncoderOutput, model: "JointModel", cfg: ExtractConfig = ExtractConfig()
) -> list[CandidateSpan]:
    """Candidate atomic fact spans: thresholded start tokens paired with end
    tokens, kept when the span score passes its threshold.

    Deterministic order: score descending, then (i, j) ascending. Overlap
    and nesting are retained; only exact duplicates are dropped.
    """
    n = out.n
    with torch.no_grad():
        p_left = predict_is_left(out, model)
        starts = [i for i in range(n) if p_left[i].item() >= cfg.t_left]
        pairs = [
            (i, j) for i in starts for j in range(i, min(i + cfg.max_len, n))
        ]
        if not pairs:
            return []
        probs = torch.sigmoid(span_score_logits(out, pairs, model))
    kept = [
        (i, j, probs[m].item())
        for m, (i, j) in enumerate(pairs)
        if probs[m].item() >= cfg.t_span
    ]
    kept.sort(key=lambda t: (-t[2], t[0], t[1]))
    seen: set[tuple[int, int]] = set()
    result = []
    for i, j, p in kept[: cfg.max_spans]:
        if (i, j) in seen:
            continue
        seen.add((i, j))
        s, e = out.premise_tok.token_span_chars(i, j)
        result.append(CandidateSpan(i, j, p, Span(s, e)))
    return result


# --- training span sampling ----------------------------------------------

def match_salient(
    i: int, j: int, salient: SpanSet, tok: Tokenization, min_fraction: float = 0.8
) -> Optional[Label]:
    """Polarity of the salient span containing >= min_fraction of the tokens
    of (i, j), if any. Fractions are per single salient span; the best
    match wins, ties resolving by the fixed label order."""
    width = j - i + 1
    best: Optional[tuple[float, Label]] = None
    for sal in salient:
        inside = sum(
            1
            for t in range(i, j + 1)
            if sal.start <= tok.char_offsets[t][0] and tok.char_offsets[t][1] <= sal.end
        )
        frac = inside / width
        if frac >= min_fraction:
            key = (frac, sal.polarity)
            if best is None or key > best:
                best = key
    return best[1] if best else None


def gold_token_spans(
    gold_fact: SpanSet, gold_salient: SpanSet, tok: Tokenization
) -> list[tuple[int, int]]:
    """Unique token spans of all gold fact and salient spans, in order."""
    spans = []
    for span in list(gold_fact) + list(gold_salient):
        rng = tok.tokens_overlapping(span.start, span.end)
        if rng is None:
            raise DataError(
                f"gold span [{span.start}, {span.end}) overlaps no token"
            )
        spans.append(rng)
    return sorted(set(spans))


@dataclass(frozen=True)
class SampledSpan:
    i: int
    j: int
    extraction_target: int  # 1 = gold span, 0 = sampled negative
    nli_target: Label       # salient polarity under the containment rule, else neutral
    matched: bool           # True when the containment rule fired


def sample_training_spans(
    gold_fact: SpanSet,
    gold_salient: SpanSet,
    tok: Tokenization,
    n_neg: int = 50,
    rng: Optional[np.random.Generator] = None,
    max_len: int = 64,
) -> list[SampledSpan]:
    """Gold spans as extraction positives plus n_neg random negatives.

    A sampled span is relabeled with a salient span's polarity when at
    least 80% of its tokens fall within that salient span; other spans
    keep a neutral target (final training targets additionally apply the
    instance-label rule, see the logic module).
    """
    if len(tok) < 1:
        raise DataError("cannot sample spans from an empty premise")
    rng = rng if rng is not None else np.random.default_rng(0)
    n = len(tok)

    def build(i: int, j: int, target: int) -> SampledSpan:
        pol = match_salient(i, j, gold_salient, tok)
        return SampledSpan(i, j, target, pol if pol else Label.NEUTRAL, pol is not None)

    gold = gold_token_spans(gold_fact, gold_salient, tok)
    out = [build(i, j, 1) for i, j in gold]
    gold_set = set(gold)
    drawn = 0
    while drawn < n_neg:
        i = int(rng.integers(0, n))
        length = int(rng.integers(1, min(max_len, n - i) + 1))
        j = i + length - 1
        if (i, j) in gold_set:
            continue  # a gold span is never labeled as a negative
        out.append(build(i, j, 0))
        drawn += 1
    return out


# --- losses ---------------------------------------------------------------

def bce_loss(p, target) -> torch.Tensor:
    """Binary cross-entropy from a probability in (0, 1)."""
    p = torch.as_tensor(p, dtype=torch.float64)
    t = torch.as_tensor(target, dtype=torch.float64)
    return -(t * torch.log(p) + (1.0 - t) * torch.log1p(-p))


def bce_with_logits(logit, target) -> torch.Tensor:
    """Numerically stable binary cross-entropy from a logit."""
    logit = logit if torch.is_tensor(logit) else torch.as_tensor(logit, dtype=torch.float64)
    t = torch.as_tensor(target, dtype=torch.float64)
    return torch.clamp_min(logit, 0.0) - logit * t + torch.log1p(torch.exp(-torch.abs(logit)))


def _positive_mask(positives: Collection[Label]) -> torch.Tensor:
    mask = torch.zeros(2, dtype=torch.bool)
    for lab in positives:
        if lab is Label.NEUTRAL:
            raise DataError("neutral is encoded as an empty positive set")
        mask[_SLOT[lab]] = True
    return mask


def at_loss_batch(logits: torch.Tensor, pos_mask: torch.Tensor) -> torch.Tensor:
    """Adaptive-thresholding loss per row.

    logits: (m, 3) in (entailed, contradicted, threshold) order.
    pos_mask: (m, 2) booleans marking positive substantive classes.

    Row loss = L1 + L2 where L1 ranks every positive class above the
    threshold slot (softmax restricted to positives plus threshold) and L2
    ranks the threshold above the negative classes. An all-false row is
    the neutral encoding and contributes only L2.
    """
    m = logits.shape[0]
    neg_fill = torch.tensor(NEG_INF, dtype=logits.dtype)
    sel1 = torch.cat([pos_mask, torch.ones(m, 1, dtype=torch.bool)], dim=1)
    l1_logits = torch.where(sel1, logits, neg_fill)
    lse1 = torch.logsumexp(l1_logits, dim=1)
    pos_terms = torch.where(pos_mask, lse1.unsqueeze(1) - logits[:, :2], torch.zeros((), dtype=logits.dtype))
    l1 = pos_terms.sum(dim=1)

    sel2 = torch.cat([~pos_mask, torch.ones(m, 1, dtype=torch.bool)], dim=1)
    l2_logits = torch.where(sel2, logits, neg_fill)
    l2 = torch.logsumexp(l2_logits, dim=1) - logits[:, TH_IDX]
    return l1 + l2


def at_loss(logits, positives: Collection[Label]) -> torch.Tensor:
    """Adaptive-thresholding loss for one logit triple."""
    t = _as_logits_tensor(logits)
    return at_loss_batch(t.unsqueeze(0), _positive_mask(positives).unsqueeze(0))[0]


def atloss_decision(logits) -> Label:
    """Decode a logit triple: classes strictly above the threshold logit are
    active; none -> neutral, one -> that class, both -> the larger logit
    with exact ties resolving to contradiction."""
    t = _as_logits_tensor(logits)
    e, c, th = (float(t[E_IDX]), float(t[C_IDX]), float(t[TH_IDX]))
    active = []
    if e > th:
        active.append((e, int(Label.ENTAILED), Label.ENTAILED))
    if c > th:
        active.append((c, int(Label.CONTRADICTED), Label.CONTRADICTED))
    if not active:
        return Label.NEUTRAL
    return max(active)[2]


GLOBAL_POSITIVES = {
    Label.NEUTRAL: frozenset(),
    Label.ENTAILED: frozenset({Label.ENTAILED}),
    Label.CONTRADICTED: frozenset({Label.CONTRADICTED}),
}


@dataclass
class TrainingTargets:
    """Per-instance targets for the four losses (built by the training
    harness from gold spans and the instance label)."""

    left: torch.Tensor                  # (n,) start-token 0/1 targets
    spans: list[tuple[int, int]]        # token spans, sampled + gold
    extraction: torch.Tensor            # (m,) is-span 0/1 targets
    nli: list[Optional[Label]]          # per span; None = masked from loss
    positives: frozenset[Label]         # global positive set

    def __post_init__(self) -> None:
        if len(self.spans) != len(self.nli) or len(self.spans) != self.extraction.shape[0]:
            raise DataError("span target lists disagree in length")


@dataclass(frozen=True)
class LossWeights:
    is_left: float = 1.0
    is_span: float = 1.0
    global_nli: float = 1.0
    span_nli: float = 1.0


def total_loss(
    out: EncoderOutput,
    model: "JointModel",
    targets: TrainingTargets,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """Sum of the four training losses for one instance.

    (1) BCE over start-token targets, (2) BCE over span-score targets,
    (3) adaptive-thresholding loss of the global classification, (4) mean
    adaptive-thresholding loss over unmasked span-wise targets.
    """
    zero = torch.zeros((), dtype=torch.float64)
    l_left = bce_with_logits(is_left_logits(out, model), targets.left).mean()

    if targets.spans:
        span_logits = span_score_logits(out, targets.spans, model)
        l_span = bce_with_logits(span_logits, targets.extraction).mean()
    else:
        l_span = zero

    l_global = at_loss(global_classify(out, model), targets.positives)

    unmasked = [m for m, lab in enumerate(targets.nli) if lab is not None]
    if unmasked:
        logits = classify_spans(out, [targets.spans[m] for m in unmasked], model)
        pos_mask = torch.zeros(len(unmasked), 2, dtype=torch.bool)
        for row, m in enumerate(unmasked):
            lab = targets.nli[m]
            if lab is not Label.NEUTRAL:
                pos_mask[row, _SLOT[lab]] = True
        l_span_nli = at_loss_batch(logits, pos_mask).mean()
    else:
        l_span_nli = zero

    return (
        weights.is_left * l_left
        + weights.is_span * l_span
        + weights.global_nli * l_global
        + weights.span_nli * l_span_nli
    )
