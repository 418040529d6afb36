"""Word alignment between a source sentence and a rewrite of it.

Alignment is a minimum-cost bipartite matching: pairing source token ``s`` with
target token ``t`` costs ``levenshtein(s, t)`` and leaving a token unmatched
costs its character length.  The statistics below (word changes, word-order
correlation, split/concatenation counts, exact index match) are built on it.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

from .corpus import NormalizationPolicy, as_tokens, normalize

SENTENCE_FINAL = frozenset({".", "!", "?"})


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class WordAlignment:
    """``mapping[i]`` is the target index aligned to source token ``i`` (0-based), or None."""
    mapping: tuple[Optional[int], ...]
    cost: int
    source_len: int
    target_len: int

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j in enumerate(self.mapping) if j is not None]

    @property
    def unaligned_targets(self) -> list[int]:
        used = {j for j in self.mapping if j is not None}
        return [j for j in range(self.target_len) if j not in used]


def alignment_cost(source: Sequence[str], target: Sequence[str], mapping) -> int:
    used = set()
    cost = 0
    for i, j in enumerate(mapping):
        if j is None:
            cost += len(source[i])
        else:
            used.add(j)
            cost += levenshtein(source[i], target[j])
    cost += sum(len(t) for j, t in enumerate(target) if j not in used)
    return cost


def align_words(source, target) -> WordAlignment:
    """Minimum-cost word alignment via the Hungarian method.

    Among equal-cost matchings the one with the smallest total positional
    displacement ``|i - j|`` wins, which favours non-crossing alignments.
    """
    src = as_tokens(source).tokens
    tgt = as_tokens(target).tokens
    n, m = len(src), len(tgt)
    if n == 0 or m == 0:
        return WordAlignment((None,) * n, sum(map(len, src)) + sum(map(len, tgt)), n, m)

    big = 1e9
    eps = 1.0 / (2.0 * (n + 1) * (n + m + 1))
    size = n + m
    cost = np.zeros((size, size))
    for i, s in enumerate(src):
        for j, t in enumerate(tgt):
            cost[i, j] = levenshtein(s, t) + eps * abs(i - j)
    # source i left unmatched -> dummy column m + i
    cost[:n, m:] = big
    cost[np.arange(n), m + np.arange(n)] = [len(s) for s in src]
    # target j left unmatched -> dummy row n + j
    cost[n:, :m] = big
    cost[n + np.arange(m), np.arange(m)] = [len(t) for t in tgt]
    rows, cols = linear_sum_assignment(cost)

    mapping: list[Optional[int]] = [None] * n
    for r, c in zip(rows, cols):
        if r < n and c < m:
            mapping[r] = int(c)
    mapping_t = tuple(mapping)
    return WordAlignment(mapping_t, alignment_cost(src, tgt, mapping_t), n, m)


def changed_source_indices(source, target, alignment: WordAlignment | None = None) -> frozenset[int]:
    src = as_tokens(source).tokens
    tgt = as_tokens(target).tokens
    a = alignment or align_words(src, tgt)
    return frozenset(i for i, j in enumerate(a.mapping) if j is None or tgt[j] != src[i])


def word_change(source, target) -> int:
    """Altered plus deleted source words plus inserted target words."""
    src = as_tokens(source).tokens
    tgt = as_tokens(target).tokens
    a = align_words(src, tgt)
    return len(changed_source_indices(src, tgt, a)) + len(a.unaligned_targets)


def order_correlation(source, target) -> Optional[float]:
    """Spearman rho between source positions and their aligned target positions.

    None when fewer than two words are aligned.
    """
    a = align_words(source, target)
    pairs = a.pairs
    if len(pairs) < 2:
        return None
    x = rankdata([i for i, _ in pairs])
    y = rankdata([j for _, j in pairs])
    x = x - x.mean()
    y = y - y.mean()
    denom = np.sqrt((x * x).sum() * (y * y).sum())
    if denom == 0:
        return None
    return float((x * y).sum() / denom)


def count_segments(tokens: Sequence[str]) -> int:
    segs = 0
    open_seg = False
    for tok in tokens:
        if tok in SENTENCE_FINAL:
            if open_seg:
                segs += 1
            open_seg = False
        else:
            open_seg = True
    return segs + open_seg


def split_concat_counts(sources, targets) -> tuple[int, int]:
    if len(sources) != len(targets):
        raise ValueError(f"got {len(sources)} sources but {len(targets)} targets")
    splits = concats = 0
    for s, t in zip(sources, targets):
        ns = count_segments(as_tokens(s).tokens)
        nt = count_segments(as_tokens(t).tokens)
        splits += nt > ns
        concats += nt < ns
    return splits, concats


def exact_index_match(source, c, c_prime) -> bool:
    """True iff ``c`` and ``c_prime`` change exactly the same source positions."""
    src = as_tokens(source)
    return changed_source_indices(src, c) == changed_source_indices(src, c_prime)


@dataclass(frozen=True)
class UnderCorrectionRow:
    index: int
    word_change: int
    rho: Optional[float]
    split: int
    concat: int


def under_correction_rows(sources, targets,
                          policy: NormalizationPolicy = NormalizationPolicy(strip_non_alphanumeric=True)
                          ) -> list[UnderCorrectionRow]:
    """Per-pair statistics; word change and rho use ``policy``, segmentation the raw tokens."""
    if len(sources) != len(targets):
        raise ValueError(f"got {len(sources)} sources but {len(targets)} targets")
    rows = []
    for k, (s, t) in enumerate(zip(sources, targets)):
        s, t = as_tokens(s), as_tokens(t)
        ns, nt = normalize(s, policy), normalize(t, policy)
        sp, cc = split_concat_counts([s], [t])
        rows.append(UnderCorrectionRow(k, word_change(ns, nt), order_correlation(ns, nt), sp, cc))
    return rows


def rows_to_csv(rows: Sequence[UnderCorrectionRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "word_change", "rho", "split", "concat"])
    for r in rows:
        w.writerow([r.index, r.word_change, "" if r.rho is None else repr(r.rho), r.split, r.concat])
    return buf.getvalue()
