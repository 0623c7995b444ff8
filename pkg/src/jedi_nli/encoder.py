"""Toy contextualizing encoder and the binary embedding interchange format.

The encoder is a small from-scratch transformer over a hashed whitespace
vocabulary: token embeddings + sinusoidal positions + 2 segment embeddings,
then L single-head self-attention blocks with residuals, layer norm and a
pointwise feedforward. It exists to give the heads a contextual
representation at desk scale; any encoder exposing CLS / premise tokens /
SEP works, including embeddings read back from a `JEDIEMB1` file.

Sequence layout: [CLS] premise tokens [SEP] hypothesis tokens. Hypothesis
token embeddings are computed but never exposed. On overflow the hypothesis
tail is truncated (with a warning), never the premise.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Optional

import numpy as np
import torch
from torch import nn

from .data import NLIInstance, Tokenization, whitespace_tokenize
from .errors import DataError, NumericsError

log = logging.getLogger(__name__)

CLS_ID = 0
SEP_ID = 1
_RESERVED = 2

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of the UTF-8 bytes of ``text``."""
    h = _FNV_OFFSET
    for b in text.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def hash_token_id(token: str, vocab_size: int) -> int:
    return _RESERVED + fnv1a64(token) % (vocab_size - _RESERVED)


def sinusoidal_positions(max_len: int, d: int, dtype=torch.float64) -> torch.Tensor:
    """Fixed sin/cos position table of shape (max_len, d)."""
    pos = torch.arange(max_len, dtype=dtype).unsqueeze(1)
    half = torch.arange(0, d, 2, dtype=dtype)
    freq = torch.exp(-math.log(10000.0) * half / d)
    table = torch.zeros(max_len, d, dtype=dtype)
    table[:, 0::2] = torch.sin(pos * freq)
    table[:, 1::2] = torch.cos(pos * freq)
    return table


@dataclass(frozen=True)
class EncoderConfig:
    d: int = 64
    vocab_size: int = 10_000
    layers: int = 2
    ffn_mult: int = 4
    max_len: int = 512
    frozen: bool = False

    def __post_init__(self) -> None:
        if self.d % 2 != 0:
            raise DataError("embedding width must be even for sinusoidal positions")


class EncoderBlock(nn.Module):
    """Single-head self-attention block with residuals and post layer norm."""

    def __init__(self, d: int, ffn_mult: int):
        super().__init__()
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)
        self.ln1 = nn.LayerNorm(d)
        self.ff1 = nn.Linear(d, ffn_mult * d)
        self.ff2 = nn.Linear(ffn_mult * d, d)
        self.ln2 = nn.LayerNorm(d)
        self.scale = 1.0 / math.sqrt(d)

    def forward(self, x: torch.Tensor, return_attn: bool = False):
        scores = (self.q(x) @ self.k(x).transpose(-1, -2)) * self.scale
        attn = torch.softmax(scores, dim=-1)
        x = self.ln1(x + self.o(attn @ self.v(x)))
        x = self.ln2(x + self.ff2(torch.nn.functional.gelu(self.ff1(x))))
        if return_attn:
            return x, attn
        return x


class ToyEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.d)
        self.seg_emb = nn.Parameter(torch.zeros(2, cfg.d))
        self.register_buffer("pos", sinusoidal_positions(cfg.max_len, cfg.d))
        self.blocks = nn.ModuleList(
            EncoderBlock(cfg.d, cfg.ffn_mult) for _ in range(cfg.layers)
        )
        self.reset_parameters()
        if cfg.frozen:
            for p in self.parameters():
                p.requires_grad_(False)

    def reset_parameters(self) -> None:
        with torch.no_grad():
            for p in self.parameters():
                if p.dim() >= 2:
                    nn.init.normal_(p, std=0.02)
                else:
                    p.zero_()
            for blk in self.blocks:
                blk.ln1.weight.fill_(1.0)
                blk.ln2.weight.fill_(1.0)

    def forward(self, ids: torch.Tensor, seg_ids: torch.Tensor,
                return_attn: bool = False):
        x = self.tok_emb(ids) + self.pos[: ids.shape[0]] + self.seg_emb[seg_ids]
        attns = []
        for blk in self.blocks:
            if return_attn:
                x, a = blk(x, return_attn=True)
                attns.append(a)
            else:
                x = blk(x)
        if return_attn:
            return x, attns
        return x


@dataclass
class EncoderOutput:
    """CLS / premise-token / SEP embeddings plus the premise alignment.

    Hypothesis token embeddings are deliberately not part of this type.
    """

    e_cls: torch.Tensor
    premise_embs: torch.Tensor
    e_sep: torch.Tensor
    premise_tok: Tokenization

    @property
    def n(self) -> int:
        return len(self.premise_tok)

    @property
    def d(self) -> int:
        return int(self.e_cls.shape[0])


def build_input_ids(
    instance: NLIInstance, cfg: EncoderConfig
) -> tuple[torch.Tensor, torch.Tensor, Tokenization]:
    """Token ids and segment ids for [CLS] premise [SEP] hypothesis."""
    prem_tok = whitespace_tokenize(instance.premise)
    hyp_tok = whitespace_tokenize(instance.hypothesis)
    if len(prem_tok) == 0 or len(hyp_tok) == 0:
        raise DataError(
            f"instance {instance.id}: premise and hypothesis must each "
            "tokenize to at least one token"
        )
    n = len(prem_tok)
    if n + 3 > cfg.max_len:
        raise DataError(
            f"instance {instance.id}: premise of {n} tokens does not fit "
            f"max length {cfg.max_len}; the premise is never truncated"
        )
    budget = cfg.max_len - 2 - n
    hyp_texts = list(hyp_tok.token_texts)
    if len(hyp_texts) > budget:
        log.warning(
            "instance %s: truncating hypothesis from %d to %d tokens",
            instance.id, len(hyp_texts), budget,
        )
        hyp_texts = hyp_texts[:budget]
    ids = (
        [CLS_ID]
        + [hash_token_id(t, cfg.vocab_size) for t in prem_tok.token_texts]
        + [SEP_ID]
        + [hash_token_id(t, cfg.vocab_size) for t in hyp_texts]
    )
    seg = [0] * (n + 2) + [1] * len(hyp_texts)
    return torch.tensor(ids, dtype=torch.long), torch.tensor(seg, dtype=torch.long), prem_tok


def encode(
    instance: NLIInstance,
    encoder: ToyEncoder,
    return_attn: bool = False,
):
    """Run the encoder over one instance and expose CLS/premise/SEP only."""
    ids, seg, prem_tok = build_input_ids(instance, encoder.cfg)
    result = encoder(ids, seg, return_attn=return_attn)
    x, attns = result if return_attn else (result, None)
    n = len(prem_tok)
    out = EncoderOutput(
        e_cls=x[0],
        premise_embs=x[1 : n + 1],
        e_sep=x[n + 1],
        premise_tok=prem_tok,
    )
    if return_attn:
        return out, attns
    return out


# --- binary embedding interchange (`JEDIEMB1`) ---------------------------

MAGIC = b"JEDIEMB1"


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    e_cls: np.ndarray        # (d,) f32
    premise_embs: np.ndarray  # (n, d) f32
    e_sep: np.ndarray        # (d,) f32
    offsets: tuple[tuple[int, int], ...]

    @property
    def n(self) -> int:
        return self.premise_embs.shape[0]


def _read_exact(fh: BinaryIO, size: int, what: str) -> bytes:
    buf = fh.read(size)
    if len(buf) != size:
        raise DataError(f"truncated embedding file while reading {what}")
    return buf


def read_embedding_file(path: str | Path) -> tuple[int, list[EmbeddingRecord]]:
    """Read a `JEDIEMB1` file; returns (d, records). Strictly validated."""
    records = []
    with Path(path).open("rb") as fh:
        if _read_exact(fh, 8, "magic") != MAGIC:
            raise DataError(f"{path}: bad magic, not a JEDIEMB1 file")
        count, d = struct.unpack("<II", _read_exact(fh, 8, "header"))
        for r in range(count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, f"record {r} id"))
            rid = _read_exact(fh, id_len, f"record {r} id").decode("utf-8")
            (n,) = struct.unpack("<I", _read_exact(fh, 4, f"record {rid} n"))
            e_cls = np.frombuffer(
                _read_exact(fh, 4 * d, f"record {rid} cls"), dtype="<f4"
            ).copy()
            prem = np.frombuffer(
                _read_exact(fh, 4 * n * d, f"record {rid} premise"), dtype="<f4"
            ).reshape(n, d).copy()
            e_sep = np.frombuffer(
                _read_exact(fh, 4 * d, f"record {rid} sep"), dtype="<f4"
            ).copy()
            raw = struct.unpack(f"<{2 * n}I", _read_exact(fh, 8 * n, f"record {rid} offsets"))
            offsets = tuple((raw[2 * i], raw[2 * i + 1]) for i in range(n))
            for name, arr in (("cls", e_cls), ("premise", prem), ("sep", e_sep)):
                if not np.isfinite(arr).all():
                    raise NumericsError(f"record {rid}: non-finite {name} embeddings")
            prev = 0
            for s, e in offsets:
                if s < prev or e <= s:
                    raise DataError(f"record {rid}: offsets not ascending at ({s}, {e})")
                prev = e
            records.append(EmbeddingRecord(rid, e_cls, prem, e_sep, offsets))
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after {count} records")
    return d, records


def write_embedding_file(
    path: str | Path, d: int, records: list[EmbeddingRecord]
) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", len(records), d))
        for rec in records:
            rid = rec.id.encode("utf-8")
            fh.write(struct.pack("<H", len(rid)))
            fh.write(rid)
            fh.write(struct.pack("<I", rec.n))
            fh.write(np.asarray(rec.e_cls, dtype="<f4").tobytes())
            fh.write(np.asarray(rec.premise_embs, dtype="<f4").tobytes())
            fh.write(np.asarray(rec.e_sep, dtype="<f4").tobytes())
            flat = [v for pair in rec.offsets for v in pair]
            fh.write(struct.pack(f"<{len(flat)}I", *flat))
    tmp.replace(path)


class EmbeddingStore:
    """Lookup of precomputed encoder outputs, matched by instance id.

    When a dataset is paired with an embedding file, `encode` is bypassed
    and outputs are reconstructed from the stored records.
    """

    def __init__(self, path: str | Path):
        self.d, records = read_embedding_file(path)
        self.records = {r.id: r for r in records}

    def __contains__(self, instance_id: str) -> bool:
        return instance_id in self.records

    def __len__(self) -> int:
        return len(self.records)

    def encoder_output(
        self, instance: NLIInstance, dtype=torch.float64
    ) -> EncoderOutput:
        rec = self.records.get(instance.id)
        if rec is None:
            raise DataError(f"no embedding record for instance {instance.id}")
        texts = tuple(instance.premise[s:e] for s, e in rec.offsets)
        tok = Tokenization(texts, rec.offsets, len(instance.premise))
        return EncoderOutput(
            e_cls=torch.from_numpy(rec.e_cls).to(dtype),
            premise_embs=torch.from_numpy(rec.premise_embs).to(dtype),
            e_sep=torch.from_numpy(rec.e_sep).to(dtype),
            premise_tok=tok,
        )
