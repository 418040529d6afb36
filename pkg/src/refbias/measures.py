"""Reference-based measures for text rewriting.

Corpus-level entry points (``accuracy``, ``eim_accuracy``, ``f_beta``, ``gleu``,
``corpus_sari``, ``corpus_max_sari``) return a :class:`ScoreReport`.  Sentence-level
scorers live in :data:`SENTENCE_MEASURES`, keyed by the CLI measure names, and
all take ``(source, output, references)``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .align import exact_index_match
from .corpus import IDENTITY, NormalizationPolicy, ParallelCorpus, TokenSequence, as_tokens, normalize

MEASURE_NAMES = ("acc", "eim", "f05", "gleu", "sari", "max-sari")


class ArityError(ValueError):
    """Number of system outputs differs from the number of corpus entries."""


@dataclass
class ScoreReport:
    measure: str
    score: float
    sentence_scores: list[float]
    counts: Optional[dict] = field(default=None)

    def to_dict(self) -> dict:
        d = {"measure": self.measure, "score": self.score, "sentence_scores": self.sentence_scores}
        if self.counts is not None:
            d["counts"] = self.counts
        return d


def _check_arity(corpus: ParallelCorpus, outputs: Sequence) -> None:
    if len(outputs) != corpus.N:
        raise ArityError(f"{len(outputs)} outputs for a corpus of {corpus.N} sentences")


def _norm_all(corpus, outputs, policy):
    outs = [normalize(as_tokens(o), policy) for o in outputs]
    srcs = [normalize(e.source, policy) for e in corpus.entries]
    refs = [[normalize(r, policy) for r in e.references] for e in corpus.entries]
    return srcs, outs, refs


# --- accuracy ------------------------------------------------------------

def sentence_accuracy(source, output, references) -> float:
    out = as_tokens(output).tokens
    return float(any(as_tokens(r).tokens == out for r in references))


def sentence_eim(source, output, references) -> float:
    return float(any(exact_index_match(source, output, r) for r in references))


def accuracy(corpus: ParallelCorpus, outputs, policy: NormalizationPolicy = IDENTITY) -> ScoreReport:
    """Fraction of outputs that exactly match one of their references."""
    _check_arity(corpus, outputs)
    srcs, outs, refs = _norm_all(corpus, outputs, policy)
    scores = [sentence_accuracy(s, o, r) for s, o, r in zip(srcs, outs, refs)]
    return ScoreReport("acc", sum(scores) / len(scores) if scores else 0.0, scores)


def eim_accuracy(corpus: ParallelCorpus, outputs, policy: NormalizationPolicy = IDENTITY) -> ScoreReport:
    """Like :func:`accuracy`, matching on the set of changed source positions only."""
    _check_arity(corpus, outputs)
    srcs, outs, refs = _norm_all(corpus, outputs, policy)
    scores = [sentence_eim(s, o, r) for s, o, r in zip(srcs, outs, refs)]
    return ScoreReport("eim", sum(scores) / len(scores) if scores else 0.0, scores)


# --- edits and F-score ---------------------------------------------------

@dataclass(frozen=True)
class EditSpan:
    start: int
    end: int
    replacement: tuple[str, ...]
    type_label: Optional[str] = None

    def key(self) -> tuple:
        return (self.start, self.end, self.replacement)


def extract_edits(source, target) -> list[EditSpan]:
    """Token-level Levenshtein edit script with adjacent non-match operations merged."""
    s = as_tokens(source).tokens
    t = as_tokens(target).tokens
    n, m = len(s), len(t)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (s[i - 1] != t[j - 1]))
    # backtrace; each op is (kind, src_i, tgt_j) with kind in {"=", "~"}
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and s[i - 1] == t[j - 1] and d[i][j] == d[i - 1][j - 1]:
            ops.append(("=", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + 1:
            ops.append(("~", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            ops.append(("~", i - 1, None))
            i -= 1
        else:
            ops.append(("~", None, j - 1))
            j -= 1
    ops.reverse()

    edits = []
    src_pos = 0
    run_start = None
    run_repl: list[str] = []
    for kind, si, tj in ops:
        if kind == "=":
            if run_start is not None:
                edits.append(EditSpan(run_start, src_pos, tuple(run_repl)))
                run_start, run_repl = None, []
            src_pos += 1
            continue
        if run_start is None:
            run_start = src_pos
        if tj is not None:
            run_repl.append(t[tj])
        if si is not None:
            src_pos += 1
    if run_start is not None:
        edits.append(EditSpan(run_start, src_pos, tuple(run_repl)))
    return edits


def apply_edits(source, edits: Sequence[EditSpan]) -> tuple[str, ...]:
    s = as_tokens(source).tokens
    out: list[str] = []
    pos = 0
    for e in sorted(edits, key=lambda e: (e.start, e.end)):
        if e.start < pos:
            raise ValueError(f"overlapping edits at source index {e.start}")
        out.extend(s[pos:e.start])
        out.extend(e.replacement)
        pos = e.end
    out.extend(s[pos:])
    return tuple(out)


def match_edits(source, system: Sequence[EditSpan], gold: Sequence[EditSpan]) -> tuple[int, int, int]:
    """(TP, FP, FN) with optimistic merging of consecutive system edits.

    A run of consecutive system edits may be merged (together with the unchanged
    source tokens between them) into one edit when the merged edit equals a
    gold edit.  The grouping maximising TP, then minimising FP, is used.
    """
    s = as_tokens(source).tokens
    sys_edits = sorted(system, key=lambda e: (e.start, e.end))
    gold_keys = {e.key() for e in gold}
    k = len(sys_edits)
    # best[i] = (tp, -fp) over the first i system edits
    best: list[tuple[int, int]] = [(0, 0)] + [(-1, 0)] * k
    for i in range(1, k + 1):
        cand = (best[i - 1][0], best[i - 1][1] - 1)
        if sys_edits[i - 1].key() in gold_keys:
            cand = (best[i - 1][0] + 1, best[i - 1][1])
        for j in range(i - 1):
            merged = _merge(s, sys_edits[j:i])
            if merged in gold_keys:
                alt = (best[j][0] + 1, best[j][1])
                if alt > cand:
                    cand = alt
        best[i] = cand
    tp, neg_fp = best[k]
    return tp, -neg_fp, len(gold_keys) - tp


def _merge(s, run: Sequence[EditSpan]) -> tuple:
    repl: list[str] = []
    for a, b in zip(run, run[1:]):
        repl.extend(a.replacement)
        repl.extend(s[a.end:b.start])
    repl.extend(run[-1].replacement)
    return (run[0].start, run[-1].end, tuple(repl))


def f_from_counts(tp: float, fp: float, fn: float, beta: float = 0.5) -> tuple[float, float, float]:
    """(P, R, F_beta); an empty denominator gives 0, and F is 0 when P + R is 0."""
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    b2 = beta * beta
    f = (1 + b2) * p * r / (b2 * p + r) if (b2 * p + r) > 0 else 0.0
    return p, r, f


def sentence_counts(source, output, references) -> list[tuple[int, int, int]]:
    """(TP, FP, FN) of ``output`` against each reference separately."""
    sys_edits = extract_edits(source, output)
    return [match_edits(source, sys_edits, extract_edits(source, r)) for r in references]


def choose_reference(per_ref: Sequence[tuple[int, int, int]], totals: tuple[int, int, int],
                     beta: float) -> int:
    """Index of the reference maximising the running corpus F_beta.

    Ties go to more TP, then fewer FP, fewer FN, then the earlier reference.
    """
    T, P, N = totals

    def rank(k):
        tp, fp, fn = per_ref[k]
        return (f_from_counts(T + tp, P + fp, N + fn, beta)[2], tp, -fp, -fn, -k)

    return max(range(len(per_ref)), key=rank)


def sentence_f(source, output, references, beta: float = 0.5) -> float:
    """Sentence F_beta against the best reference; 1.0 when neither side edits."""
    best = 0.0
    for tp, fp, fn in sentence_counts(source, output, references):
        if tp + fp + fn == 0:
            return 1.0
        p = tp / (tp + fp) if tp + fp else 1.0
        r = tp / (tp + fn) if tp + fn else 1.0
        b2 = beta * beta
        f = (1 + b2) * p * r / (b2 * p + r) if (b2 * p + r) > 0 else 0.0
        best = max(best, f)
    return best


def corpus_f_from_sentence_counts(per_sentence: Sequence[Sequence[tuple[int, int, int]]],
                                  beta: float = 0.5) -> tuple[float, tuple[int, int, int], list[int]]:
    tot = (0, 0, 0)
    chosen = []
    for per_ref in per_sentence:
        k = choose_reference(per_ref, tot, beta)
        chosen.append(k)
        tp, fp, fn = per_ref[k]
        tot = (tot[0] + tp, tot[1] + fp, tot[2] + fn)
    return f_from_counts(*tot, beta)[2], tot, chosen


def f_beta(corpus: ParallelCorpus, outputs, beta: float = 0.5,
           policy: NormalizationPolicy = IDENTITY) -> ScoreReport:
    """Edit-level F_beta with per-sentence optimistic reference choice."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    _check_arity(corpus, outputs)
    srcs, outs, refs = _norm_all(corpus, outputs, policy)
    per_sentence = [sentence_counts(s, o, r) for s, o, r in zip(srcs, outs, refs)]
    score, (tp, fp, fn), chosen = corpus_f_from_sentence_counts(per_sentence, beta)
    sent = [f_from_counts(*per_ref[k], beta)[2] for per_ref, k in zip(per_sentence, chosen)]
    p, r, _ = f_from_counts(tp, fp, fn, beta)
    name = "f05" if beta == 0.5 else f"f{beta:g}"
    return ScoreReport(name, score, sent, {"tp": tp, "fp": fp, "fn": fn, "precision": p, "recall": r})


# --- n-gram measures -----------------------------------------------------

def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_gleu_single(source, candidate, reference, max_n: int = 4) -> float:
    src = as_tokens(source).tokens
    cand = as_tokens(candidate).tokens
    ref = as_tokens(reference).tokens
    if not cand or not ref:
        return 0.0
    orders = min(max_n, len(cand))
    log_sum = 0.0
    for n in range(1, orders + 1):
        c, r, s = ngrams(cand, n), ngrams(ref, n), ngrams(src, n)
        cr = c & r
        penalty = (c & s) - cr
        num = max(0, sum(cr.values()) - sum(penalty.values()))
        denom = sum(c.values())
        p = num / denom if num > 0 else 1.0 / (2 * denom)
        log_sum += math.log(p)
    bp = min(1.0, math.exp(1 - len(ref) / len(cand)))
    return bp * math.exp(log_sum / orders)


def sentence_gleu(source, output, references, max_n: int = 4) -> float:
    return max((sentence_gleu_single(source, output, r, max_n) for r in references), default=0.0)


def gleu(corpus: ParallelCorpus, outputs, max_n: int = 4,
         policy: NormalizationPolicy = IDENTITY) -> ScoreReport:
    """Mean sentence GLEU, each sentence taking its best reference."""
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    _check_arity(corpus, outputs)
    srcs, outs, refs = _norm_all(corpus, outputs, policy)
    scores = [sentence_gleu(s, o, r, max_n) for s, o, r in zip(srcs, outs, refs)]
    return ScoreReport("gleu", sum(scores) / len(scores) if scores else 0.0, scores)


def _ratio(num: float, den_size: int, other_empty: bool) -> float:
    if den_size == 0:
        return 1.0 if other_empty else 0.0
    return num / den_size


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def sari_ngram(src: Counter, cand: Counter, refs: Sequence[Counter], num_refs: int) -> tuple[float, float, float]:
    """(keep F1, delete precision, add F1) for one n-gram order.

    Source and output counts are scaled by the number of references and compared
    against the summed reference counts, so each reference carries weight 1/M.
    A component whose system side and reference side are both empty scores 1.
    """
    ref_all: Counter = Counter()
    for r in refs:
        ref_all.update(r)
    src_rep = Counter({g: c * num_refs for g, c in src.items()})
    cand_rep = Counter({g: c * num_refs for g, c in cand.items()})

    keep_sys = src_rep & cand_rep
    keep_good = keep_sys & ref_all
    keep_all = src_rep & ref_all
    keep_p = _ratio(sum(keep_good[g] / keep_sys[g] for g in keep_good), len(keep_sys), not keep_all)
    keep_r = _ratio(sum(keep_good[g] / keep_all[g] for g in keep_good), len(keep_all), not keep_sys)

    del_sys = src_rep - cand_rep
    del_good = del_sys - ref_all
    del_all = src_rep - ref_all
    del_p = _ratio(sum(del_good[g] / del_sys[g] for g in del_good), len(del_sys), not del_all)

    add_sys = set(cand) - set(src)
    add_all = set(ref_all) - set(src)
    add_good = add_sys & add_all
    add_p = _ratio(len(add_good), len(add_sys), not add_all)
    add_r = _ratio(len(add_good), len(add_all), not add_sys)

    return _f1(keep_p, keep_r), del_p, _f1(add_p, add_r)


def sari(source, output, references, max_n: int = 4) -> float:
    """SARI with references combined (not maximised) across the reference set."""
    src = as_tokens(source).tokens
    out = as_tokens(output).tokens
    refs = [as_tokens(r).tokens for r in references]
    if not refs:
        raise ValueError("SARI needs at least one reference")
    if any(len(r) == 0 for r in refs):
        return 0.0
    keep = dele = add = 0.0
    for n in range(1, max_n + 1):
        k, d, a = sari_ngram(ngrams(src, n), ngrams(out, n), [ngrams(r, n) for r in refs], len(refs))
        keep += k
        dele += d
        add += a
    return (keep + dele + add) / (3 * max_n)


def max_sari(source, output, references, max_n: int = 4) -> float:
    """Best single-reference SARI."""
    if not references:
        raise ValueError("MAX-SARI needs at least one reference")
    return max(sari(source, output, [r], max_n) for r in references)


def _corpus_mean(name: str, fn: Callable, corpus, outputs, policy, **kw) -> ScoreReport:
    _check_arity(corpus, outputs)
    srcs, outs, refs = _norm_all(corpus, outputs, policy)
    scores = [fn(s, o, r, **kw) for s, o, r in zip(srcs, outs, refs)]
    return ScoreReport(name, sum(scores) / len(scores) if scores else 0.0, scores)


def corpus_sari(corpus, outputs, max_n: int = 4, policy: NormalizationPolicy = IDENTITY) -> ScoreReport:
    return _corpus_mean("sari", sari, corpus, outputs, policy, max_n=max_n)


def corpus_max_sari(corpus, outputs, max_n: int = 4, policy: NormalizationPolicy = IDENTITY) -> ScoreReport:
    return _corpus_mean("max-sari", max_sari, corpus, outputs, policy, max_n=max_n)


SENTENCE_MEASURES: dict[str, Callable[[TokenSequence, TokenSequence, Sequence[TokenSequence]], float]] = {
    "acc": sentence_accuracy,
    "eim": sentence_eim,
    "f05": sentence_f,
    "gleu": sentence_gleu,
    "sari": sari,
    "max-sari": max_sari,
}

# measures whose multi-reference value is a max over single references
PAIRWISE_MAX = frozenset({"acc", "eim", "f05", "gleu", "max-sari"})


def get_sentence_measure(name: str):
    try:
        return SENTENCE_MEASURES[name]
    except KeyError:
        raise ValueError(f"unknown measure {name!r}; choose from {', '.join(MEASURE_NAMES)}") from None


def score_corpus(name: str, corpus: ParallelCorpus, outputs,
                 policy: NormalizationPolicy = IDENTITY) -> ScoreReport:
    if name == "acc":
        return accuracy(corpus, outputs, policy)
    if name == "eim":
        return eim_accuracy(corpus, outputs, policy)
    if name == "f05":
        return f_beta(corpus, outputs, 0.5, policy)
    if name == "gleu":
        return gleu(corpus, outputs, policy=policy)
    if name == "sari":
        return corpus_sari(corpus, outputs, policy=policy)
    if name == "max-sari":
        return corpus_max_sari(corpus, outputs, policy=policy)
    raise ValueError(f"unknown measure {name!r}; choose from {', '.join(MEASURE_NAMES)}")
