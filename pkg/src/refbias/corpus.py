"""Sentences, reference sets and k-best lists, plus the file formats they load from.

Plain-text inputs hold one sentence per line.  Structured inputs are JSON
lines, one record per source sentence::

    {"source": "...", "references": ["...", "..."]}      # multi-reference
    {"source": "...", "candidates": ["...", "..."]}      # k-best, best first
"""
from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class AlignmentError(ValueError):
    """Parallel input files disagree on their number of lines."""


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _split_token(tok: str) -> list[str]:
    i = 0
    while i < len(tok) and _is_punct(tok[i]):
        i += 1
    if i == len(tok):
        return [tok]
    j = len(tok)
    while j > i and _is_punct(tok[j - 1]):
        j -= 1
    out = []
    if i:
        out.append(tok[:i])
    out.append(tok[i:j])
    if j < len(tok):
        out.append(tok[j:])
    return out


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    raw: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    @classmethod
    def of(cls, tokens: Iterable[str]) -> "TokenSequence":
        if isinstance(tokens, str):
            return tokenize(tokens)
        toks = tuple(tokens)
        return cls(toks, " ".join(toks))


def tokenize(raw: str) -> TokenSequence:
    """Whitespace split, then detach leading and trailing punctuation runs.

    A fixed point on text that is already tokenized this way, e.g.
    ``tokenize("overseas .").tokens == ("overseas", ".")``.
    """
    tokens: list[str] = []
    for tok in raw.split():
        tokens.extend(_split_token(tok))
    return TokenSequence(tuple(tokens), raw)


def as_tokens(x: "TokenSequence | str | Sequence[str]") -> TokenSequence:
    if isinstance(x, TokenSequence):
        return x
    if isinstance(x, str):
        return tokenize(x)
    return TokenSequence.of(x)


@dataclass(frozen=True)
class NormalizationPolicy:
    lowercase: bool = False
    strip_non_alphanumeric: bool = False

    @property
    def is_identity(self) -> bool:
        return not (self.lowercase or self.strip_non_alphanumeric)


IDENTITY = NormalizationPolicy()


def normalize(seq: TokenSequence, policy: NormalizationPolicy = IDENTITY) -> TokenSequence:
    if policy.is_identity:
        return seq
    toks = []
    for tok in seq.tokens:
        if policy.strip_non_alphanumeric:
            tok = "".join(ch for ch in tok if ch.isalnum())
            if not tok:
                continue
        if policy.lowercase:
            tok = tok.lower()
        toks.append(tok)
    return TokenSequence(tuple(toks), seq.raw)


@dataclass(frozen=True)
class ReferenceSet:
    source: TokenSequence
    references: tuple[TokenSequence, ...]

    def __post_init__(self):
        if len(self.references) < 1:
            raise ValueError("a reference set needs at least one reference")

    @property
    def M(self) -> int:
        return len(self.references)

    def source_is_reference(self, policy: NormalizationPolicy = IDENTITY) -> bool:
        src = normalize(self.source, policy).tokens
        return any(normalize(r, policy).tokens == src for r in self.references)


@dataclass(frozen=True)
class ParallelCorpus:
    entries: tuple[ReferenceSet, ...]
    policy: NormalizationPolicy = field(default=IDENTITY)

    @property
    def N(self) -> int:
        return len(self.entries)

    @property
    def N_cor(self) -> int:
        """Sentences whose source already matches one of its references."""
        return sum(e.source_is_reference(self.policy) for e in self.entries)

    @property
    def sources(self) -> list[TokenSequence]:
        return [e.source for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


@dataclass(frozen=True)
class KBestList:
    source: TokenSequence
    candidates: tuple[TokenSequence, ...]

    def __post_init__(self):
        if len(self.candidates) < 1:
            raise ValueError("a k-best list needs at least one candidate")

    @property
    def k(self) -> int:
        return len(self.candidates)


# --- file IO -------------------------------------------------------------

def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [ln.rstrip("\r") for ln in lines]


def read_jsonl(path) -> list[dict]:
    out = []
    for ln, line in enumerate(read_lines(path), 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{ln}: invalid JSON record ({exc.msg})") from None
    return out


def make_corpus(sources: Sequence[str], references: Sequence[Sequence[str]],
                policy: NormalizationPolicy = IDENTITY) -> ParallelCorpus:
    entries = tuple(
        ReferenceSet(tokenize(s), tuple(tokenize(r) for r in refs))
        for s, refs in zip(sources, references, strict=True)
    )
    return ParallelCorpus(entries, policy)


def load_corpus(source_path=None, reference_paths: Sequence = (), multiref_path=None,
                policy: NormalizationPolicy = IDENTITY) -> ParallelCorpus:
    """Load either aligned plain-text files or one structured multi-reference file."""
    if multiref_path is not None:
        records = read_jsonl(multiref_path)
        for i, rec in enumerate(records, 1):
            if "source" not in rec or not rec.get("references"):
                raise ValueError(f"{multiref_path}:{i}: record needs 'source' and non-empty 'references'")
        return make_corpus([r["source"] for r in records],
                           [r["references"] for r in records], policy)
    if source_path is None or not reference_paths:
        raise ValueError("need a source file and at least one reference file, or a multi-reference file")
    sources = read_lines(source_path)
    columns = []
    for rp in reference_paths:
        lines = read_lines(rp)
        if len(lines) != len(sources):
            raise AlignmentError(
                f"{rp} has {len(lines)} lines but source {source_path} has {len(sources)}")
        columns.append(lines)
    refs = [list(row) for row in zip(*columns)] if columns else [[] for _ in sources]
    return make_corpus(sources, refs, policy)


def load_outputs(path, expected: int | None = None) -> list[TokenSequence]:
    lines = read_lines(path)
    if expected is not None and len(lines) != expected:
        raise AlignmentError(f"{path} has {len(lines)} lines but corpus has {expected}")
    return [tokenize(ln) for ln in lines]


def load_kbest(path) -> list[KBestList]:
    out = []
    for i, rec in enumerate(read_jsonl(path), 1):
        if "source" not in rec or not rec.get("candidates"):
            raise ValueError(f"{path}:{i}: record needs 'source' and non-empty 'candidates'")
        out.append(KBestList(tokenize(rec["source"]),
                             tuple(tokenize(c) for c in rec["candidates"])))
    return out


def dump_corpus(corpus: ParallelCorpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in corpus.entries:
            rec = {"source": e.source.raw, "references": [r.raw for r in e.references]}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
