"""Oracle re-ranking of k-best lists and under-correction statistics.

The oracle picks, for each sentence, the k-best candidate scoring highest
against a sampled reference set.  Sweeping the reference-set size M shows how
much a system would change its input if tuned against more references.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import norm, permutation_test, rankdata

from .align import count_segments, order_correlation, word_change
from ._parallel import derive_rng, pmap
from .corpus import KBestList, NormalizationPolicy, ReferenceSet, normalize, read_jsonl
from .measures import PAIRWISE_MAX, EditSpan, get_sentence_measure

STRIP = NormalizationPolicy(strip_non_alphanumeric=True)


def oracle_rerank(kbest: KBestList, refs: ReferenceSet, measure: str = "gleu"):
    """(candidate, 1-based rank, score) of the best-scoring candidate; ties go to the better rank."""
    fn = get_sentence_measure(measure)
    best_rank, best_score = 0, -math.inf
    for r, cand in enumerate(kbest.candidates):
        s = fn(kbest.source, cand, refs.references)
        if s > best_score:
            best_rank, best_score = r, s
    return kbest.candidates[best_rank], best_rank + 1, best_score


@dataclass
class Profile:
    """Under-correction statistics of the chosen outputs, averaged over resamples."""
    word_change: dict[int, float]
    mean_rho: Optional[float]
    splits: float
    concats: float

    def to_dict(self) -> dict:
        return {"word_change": {str(k): v for k, v in sorted(self.word_change.items())},
                "mean_rho": self.mean_rho, "splits": self.splits, "concats": self.concats}


@dataclass
class RerankResult:
    M: Union[int, str]
    choice_probs: list[np.ndarray]     # per sentence: probability of choosing each rank
    mean_score: float
    profile: Profile
    delta: dict[int, float] = field(default_factory=dict)

    def alter_probability(self, sentence: int, keep_rank: int = 1) -> float:
        return 1.0 - float(self.choice_probs[sentence][keep_rank - 1])

    def to_dict(self) -> dict:
        return {"M": self.M, "mean_score": self.mean_score, "profile": self.profile.to_dict(),
                "word_change_delta": {str(k): v for k, v in sorted(self.delta.items())}}


class _Sentence:
    def __init__(self, kb: KBestList, pool: ReferenceSet, measure: str, policy: NormalizationPolicy):
        self.kb = kb
        self.pool = pool.references
        self.measure = measure
        self.fn = get_sentence_measure(measure)
        src = normalize(kb.source, policy)
        cands = [normalize(c, policy) for c in kb.candidates]
        self.wc = np.array([word_change(src, c) for c in cands])
        self.rho = [order_correlation(src, c) for c in cands]
        n_src = count_segments(kb.source.tokens)
        segs = [count_segments(c.tokens) for c in kb.candidates]
        self.split = np.array([s > n_src for s in segs], dtype=float)
        self.concat = np.array([s < n_src for s in segs], dtype=float)
        self.pair: Optional[np.ndarray] = None
        if measure in PAIRWISE_MAX:
            self.pair = np.array([[self.fn(kb.source, c, [r]) for r in self.pool]
                                  for c in kb.candidates])
        self.cache: dict = {}

    def choose(self, subsets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Chosen rank index and its score for each row of reference indices."""
        if self.pair is not None:
            scores = self.pair[:, subsets].max(axis=2)        # (k, T)
            ranks = scores.argmax(axis=0)
            return ranks, scores[ranks, np.arange(len(ranks))]
        ranks, best = [], []
        for row in subsets:
            key = tuple(sorted(int(x) for x in row))
            if key not in self.cache:
                refs = [self.pool[i] for i in key]
                sc = [self.fn(self.kb.source, c, refs) for c in self.kb.candidates]
                r = int(np.argmax(sc))
                self.cache[key] = (r, sc[r])
            r, s = self.cache[key]
            ranks.append(r)
            best.append(s)
        return np.array(ranks), np.array(best)


def _profile(sents: Sequence[_Sentence], probs: Sequence[np.ndarray]) -> Profile:
    wc: Counter = Counter()
    rho_num = rho_den = 0.0
    splits = concats = 0.0
    for s, p in zip(sents, probs):
        for r, pr in enumerate(p):
            if pr == 0:
                continue
            wc[int(s.wc[r])] += float(pr)
            if s.rho[r] is not None:
                rho_num += float(pr) * s.rho[r]
                rho_den += float(pr)
        splits += float(p @ s.split)
        concats += float(p @ s.concat)
    return Profile(dict(sorted(wc.items())), rho_num / rho_den if rho_den else None, splits, concats)


def _result(M, sents, probs, mean_score) -> RerankResult:
    return RerankResult(M, probs, mean_score, _profile(sents, probs))


def rerank_sweep(kbests: Sequence[KBestList], ref_pool: Sequence[ReferenceSet], M_values: Sequence[int],
                 resamples: int = 1312, seed: int = 42, measure: str = "f05",
                 policy: NormalizationPolicy = STRIP, threads: int = 1) -> list[RerankResult]:
    """Oracle re-ranking for each M, references drawn without replacement from each pool.

    The last result is the ``"all"`` condition using every pooled reference.
    Word-change deltas are taken against the M=1 result when M=1 is swept.
    """
    if len(kbests) != len(ref_pool):
        raise ValueError(f"{len(kbests)} k-best lists but {len(ref_pool)} reference pools")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    get_sentence_measure(measure)
    R_min = min(p.M for p in ref_pool)
    for M in M_values:
        if M < 1 or M > R_min:
            raise ValueError(f"M={M} outside 1..{R_min} (smallest reference pool)")
    sents = [_Sentence(kb, pool, measure, policy) for kb, pool in zip(kbests, ref_pool)]

    def sweep_one(M):
        probs, score_sum = [], 0.0
        for i, s in enumerate(sents):
            R = len(s.pool)
            rng = derive_rng(seed, int(M), i)
            subsets = np.argsort(rng.random((resamples, R)), axis=1)[:, :M]
            ranks, best = s.choose(subsets)
            probs.append(np.bincount(ranks, minlength=s.kb.k) / resamples)
            score_sum += float(best.mean())
        return _result(int(M), sents, probs, score_sum / len(sents))

    results = pmap(sweep_one, list(M_values), threads)

    probs, score_sum = [], 0.0
    for s in sents:
        ranks, best = s.choose(np.arange(len(s.pool))[None, :])
        p = np.zeros(s.kb.k)
        p[ranks[0]] = 1.0
        probs.append(p)
        score_sum += float(best[0])
    results.append(_result("all", sents, probs, score_sum / len(sents)))

    base = next((r for r in results if r.M == 1), None)
    if base is not None:
        for r in results:
            keys = set(r.profile.word_change) | set(base.profile.word_change)
            # rounded so that equal profiles give exact zeros despite summation order
            r.delta = {k: round(r.profile.word_change.get(k, 0.0) - base.profile.word_change.get(k, 0.0), 12)
                       for k in sorted(keys)}
    return results


def exact_rank_distribution(kbest: KBestList, pool: ReferenceSet, M: int, measure: str) -> np.ndarray:
    """Probability of choosing each rank when M references are drawn without replacement,
    by enumerating every M-subset of the pool."""
    fn = get_sentence_measure(measure)
    out = np.zeros(kbest.k)
    subsets = list(itertools.combinations(range(pool.M), M))
    for sub in subsets:
        refs = [pool.references[i] for i in sub]
        scores = [fn(kbest.source, c, refs) for c in kbest.candidates]
        out[int(np.argmax(scores))] += 1
    return out / len(subsets)


def sweep_to_csv(results: Sequence[RerankResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["M", "word_change_bucket", "count_delta"])
    for r in results:
        for k, v in sorted(r.delta.items()):
            w.writerow([r.M, k, repr(v)])
    return buf.getvalue()


# --- error-type under-correction ---------------------------------------

def load_typed_edits(path) -> list[list[EditSpan]]:
    out = []
    for i, rec in enumerate(read_jsonl(path), 1):
        try:
            out.append([EditSpan(int(e["start"]), int(e["end"]), tuple(e.get("replacement", [])),
                                 e.get("type")) for e in rec["edits"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{i}: malformed typed-edit record ({exc})") from None
    return out


def _type_counts(per_sentence: Sequence[Sequence[EditSpan]]) -> Counter:
    return Counter(e.type_label for edits in per_sentence for e in edits if e.type_label is not None)


def type_under_correction(system_edits: dict[str, Sequence[Sequence[EditSpan]]],
                          reference_edits: Sequence[Sequence[EditSpan]]) -> dict[str, float]:
    """Per type: mean number of system edits of that type over the reference count.

    Types the references never use are left out.
    """
    if not system_edits:
        raise ValueError("need at least one system")
    ref = _type_counts(reference_edits)
    systems = [_type_counts(e) for e in system_edits.values()]
    table = {}
    for t in sorted(ref):
        if ref[t] == 0:
            continue
        table[t] = float(np.mean([c.get(t, 0) for c in systems])) / ref[t]
    return table


def _spearman(x, y, axis=-1):
    rx = rankdata(x, axis=axis)
    ry = rankdata(y, axis=axis)
    rx = rx - rx.mean(axis=axis, keepdims=True)
    ry = ry - ry.mean(axis=axis, keepdims=True)
    return (rx * ry).sum(axis=axis) / np.sqrt((rx * rx).sum(axis=axis) * (ry * ry).sum(axis=axis))


def type_frequency_correlation(table: dict[str, float], type_frequencies: dict[str, float]
                               ) -> tuple[float, float]:
    """Spearman rho between type frequency and under-correction ratio, with a two-sided p-value.

    The p-value is exact (all pairings) for up to 10 types, normal-approximated beyond.
    """
    common = sorted(set(table) & set(type_frequencies))
    if len(common) < 3:
        raise ValueError(f"need at least 3 shared types, got {len(common)}")
    x = np.array([type_frequencies[t] for t in common], dtype=float)
    y = np.array([table[t] for t in common], dtype=float)
    rho = float(_spearman(x, y))
    n = len(common)
    if n <= 10:
        res = permutation_test((x, y), _spearman, permutation_type="pairings", vectorized=True,
                               n_resamples=np.inf, alternative="two-sided")
        p = float(res.pvalue)
    else:
        p = float(2 * norm.sf(abs(rho) * math.sqrt(n - 1)))
    return rho, p


def table_to_json(table: dict[str, float]) -> str:
    return json.dumps(table, indent=2, sort_keys=True)
