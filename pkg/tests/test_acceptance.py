"""Acceptance criteria, one test each.

Every test prints a single ``[ACCEPT n] PASS|FAIL ...`` line and asserts the
same condition.  The lines are repeated in the pytest terminal summary.
"""
import io
import json
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, zipf_probs
from oracles import gleu_oracle, min_matching_cost, poisson_binomial_brute, sari_oracle
from synthetic import load_type_counts, alteration_cases, typed_edits_from_counts
from refbias.align import align_words, levenshtein, order_correlation, word_change
from refbias.bias import (bias_curve, coverage_with_replacement, coverage_without_replacement,
                          poisson_binomial_pmf)
from refbias.bootstrap import bca_interval
from refbias.cli import run
from refbias.measures import max_sari, sari, sentence_gleu
from refbias.rerank import exact_rank_distribution, rerank_sweep, type_under_correction
from refbias.unseenest import dump_histograms, earthmover, estimate_histogram, histogram_from_probs


def report(n, ok, detail):
    line = f"[ACCEPT {n}] {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, detail


def test_1_monte_carlo_coverage_matches_analytic():
    hists = {f"uniform-{k}": histogram_from_probs([1 / k] * k) for k in (2, 5, 10)}
    hists["zipf-50"] = histogram_from_probs(zipf_probs(50))
    t0 = time.perf_counter()
    worst = 0.0
    for h in hists.values():
        a = bias_curve([h], range(1, 21), mode="analytic")
        m = bias_curve([h], range(1, 21), mode="mc", mc_samples=10_000, seed=42, threads=1)
        worst = max(worst, float(np.max(np.abs(a.biases() - m.biases()))))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 0.01 and elapsed < 60,
           f"max |MC - analytic| = {worst:.4f} (tol 0.01), {elapsed:.1f}s single-threaded (limit 60s)")


def test_2_poisson_binomial():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        p = rng.random(rng.integers(1, 16))
        worst = max(worst, float(np.max(np.abs(poisson_binomial_pmf(p) - poisson_binomial_brute(p)))))
    p = rng.random(1312)
    pmf = poisson_binomial_pmf(p)
    exp_err = abs(float(np.arange(1313) @ pmf) / 1312 - p.mean())
    report(2, worst <= 1e-12 and exp_err <= 1e-12,
           f"pmf vs enumeration max err {worst:.1e}; N=1312 expectation err {exp_err:.1e} (tol 1e-12)")


def test_3_bca_calibration():
    rng = np.random.default_rng(3)
    hits = 0
    for t in range(1000):
        data = rng.normal(5.0, 2.0, size=50)
        lo, _, hi = bca_interval(data, np.mean, iterations=1000, level=0.95, seed=t)
        hits += lo <= 5.0 <= hi
    rate = hits / 1000
    lo, pt, hi = bca_interval([2.5] * 20)
    degenerate = lo == pt == hi == 2.5
    report(3, 0.925 <= rate <= 0.975 and degenerate,
           f"coverage {rate:.3f} in [0.925, 0.975]; constant data zero-width: {degenerate}")


def test_4_diminishing_returns_and_dominance():
    hists = [histogram_from_probs(zipf_probs(k, s)) for k, s in ((100, 1.0), (500, 1.0), (1000, 0.8))]
    e = bias_curve(hists, range(1, 21)).expected()
    d = np.diff(e)
    increasing = bool(np.all(d > 0))
    diminishing = bool(np.all(np.diff(d) <= 0))
    dominated = 0
    checks = 0
    for h in [histogram_from_probs(zipf_probs(k)) for k in (5, 8, 12)]:
        for M in range(1, 21):
            checks += 1
            dominated += coverage_without_replacement(h, M) >= coverage_with_replacement(h, M) - 1e-12
    report(4, increasing and diminishing and dominated == checks,
           f"strictly increasing: {increasing}; non-increasing differences: {diminishing}; "
           f"without >= with replacement at {dominated}/{checks} points")


GLEU_SARI_FIXTURES = [
    ("a b c d", "a b c d", ["a b x d"]),
    ("the cat sit on mat .", "the cat sits on the mat .", ["the cat sat on the mat .", "a cat sits on the mat ."]),
    ("he go to school yesterday", "he went to school yesterday", ["he went to school yesterday"]),
    ("i am agree with you", "i agree with you", ["i agree with you", "i am in agreement with you"]),
    ("this are good", "these are good idea", ["this is good", "these are good", "this is fine"]),
]


def test_5_measure_oracles():
    worst = 0.0
    for src, out, refs in GLEU_SARI_FIXTURES:
        s, o, rs = src.split(), out.split(), [r.split() for r in refs]
        worst = max(worst, abs(sentence_gleu(s, o, rs) - max(gleu_oracle(s, o, r) for r in rs)))
        worst = max(worst, abs(sari(s, o, rs) - sari_oracle(s, o, rs)))
    single_equal = all(max_sari(src.split(), out.split(), [r.split()]) == sari(src.split(), out.split(), [r.split()])
                       for src, out, refs in GLEU_SARI_FIXTURES for r in refs)
    s, o = "a b c d".split(), "a x c d".split()
    two = ["a x c d".split(), "a x c e".split()]
    v_sari, v_max = sari(s, o, two), max_sari(s, o, two)
    report(5, worst <= 1e-9 and single_equal and v_sari < 1 and v_max == 1.0,
           f"max oracle deviation {worst:.1e} (tol 1e-9); M=1 MAX-SARI == SARI: {single_equal}; "
           f"two-reference SARI {v_sari:.4f} < 1, MAX-SARI {v_max}")


def test_6_unseen_estimation():
    truth = histogram_from_probs(zipf_probs(1000))
    emds, slow, support_ok = [], 0.0, True
    for seed in range(5):
        rng = np.random.default_rng(seed)
        sample = [f"c{i}" for i in rng.choice(1000, size=500, p=zipf_probs(1000))]
        t0 = time.perf_counter()
        est = estimate_histogram(sample)
        slow = max(slow, time.perf_counter() - t0)
        emds.append(earthmover(est, truth))
        support_ok &= est.support >= len(set(sample))
    rng = np.random.default_rng(99)
    sample = [f"u{i}" for i in rng.choice(5, size=1000)]
    uni = earthmover(estimate_histogram(sample), histogram_from_probs([0.2] * 5))
    report(6, max(emds) <= 0.1 and support_ok and uni <= 0.02 and slow < 30,
           f"Zipf EMD max {max(emds):.4f} (tol 0.1) over 5 runs; support >= distinct: {support_ok}; "
           f"uniform-5 EMD {uni:.4f} (tol 0.02); slowest {slow:.2f}s (limit 30s)")


def test_7_oracle_reranking_alteration_pattern():
    cases = alteration_cases()
    names = list(cases)
    kbests = [cases[n][0] for n in names]
    pools = [cases[n][1] for n in names]
    results = rerank_sweep(kbests, pools, [1, 2, 3, 4], resamples=10_000, seed=42, measure="acc")
    worst = 0.0
    exact = {n: [] for n in names}
    for r in results[:-1]:
        for i, n in enumerate(names):
            e = 1 - exact_rank_distribution(kbests[i], pools[i], r.M, "acc")[0]
            exact[n].append(e)
            worst = max(worst, abs(r.alter_probability(i) - e), abs(e - cases[n][2](r.M)))
    pattern = (all(v == 0 for v in exact["no_valid_alteration"])
               and all(b <= a for a, b in zip(exact["keep_is_valid"], exact["keep_is_valid"][1:]))
               and all(b >= a for a, b in zip(exact["keep_is_error"], exact["keep_is_error"][1:]))
               and exact["keep_is_error"][-1] == 1.0)
    error_sweep = rerank_sweep([kbests[2]], [pools[2]], [1, 2, 3, 4], resamples=10_000, seed=42, measure="acc")
    wc = [sum(k * v for k, v in r.profile.word_change.items()) for r in error_sweep[:-1]]
    wc_ok = all(b >= a for a, b in zip(wc, wc[1:]))
    report(7, worst <= 0.02 and pattern and wc_ok,
           f"max |sweep - exact| {worst:.4f} (tol 0.02); 0 / non-increasing / non-decreasing->1 pattern: {pattern}; "
           f"expected word change {[round(x, 3) for x in wc]} non-decreasing: {wc_ok}")


def test_8_alignment():
    rng = np.random.default_rng(8)
    vocab = ["a", "an", "the", "cat", "cats", "sat", "sit", "on", "mat", "dog", "x"]
    mismatches = 0
    for _ in range(500):
        s = [str(w) for w in rng.choice(vocab, rng.integers(0, 7))]
        t = [str(w) for w in rng.choice(vocab, rng.integers(0, 7))]
        mismatches += align_words(s, t).cost != min_matching_cost(s, t, levenshtein, len)
    self_zero = all(word_change(s, s) == 0 for s in
                    ([str(w) for w in rng.choice(vocab, rng.integers(0, 10))] for _ in range(500)))
    rho = (order_correlation("a b c".split(), "a b c".split()),
           order_correlation("a b c".split(), "c b a".split()),
           order_correlation("a b c".split(), "a c b".split()))
    report(8, mismatches == 0 and self_zero and rho == (1.0, -1.0, 0.5),
           f"cost != brute force on {mismatches}/500 pairs; word_change(s,s)=0: {self_zero}; "
           f"rho fixtures {rho}")


def test_9_type_ratios():
    counts = load_type_counts()
    ref = typed_edits_from_counts(counts, "reference")
    table = type_under_correction({s: typed_edits_from_counts(counts, s) for s in ("sys_a", "sys_b")}, ref)
    contr, verb = round(table["CONTR"], 4), round(table["VERB"], 4)
    report(9, contr == 0.9706 and verb == 0.1509, f"CONTR {contr} (want 0.9706), VERB {verb} (want 0.1509)")


def test_10_determinism_across_threads(tmp_path):
    hists = [histogram_from_probs(zipf_probs(k), labels=[f"he goes to school {i}" for i in range(k)],
                                  source="he go to school") for k in (4, 9, 20)]
    (tmp_path / "h.jsonl").write_text(dump_histograms(hists))
    kb = tmp_path / "kb.jsonl"
    pool = tmp_path / "pool.jsonl"
    k, p, _ = alteration_cases()["keep_is_error"]
    kb.write_text(json.dumps({"source": k.source.raw, "candidates": [c.raw for c in k.candidates]}) + "\n")
    pool.write_text(json.dumps({"source": p.source.raw, "references": [r.raw for r in p.references]}) + "\n")
    h = str(tmp_path / "h.jsonl")
    commands = {
        "bias-curve mc": ["bias-curve", "--hists", h, "--mode", "mc", "--m", "1..10", "--mc-samples", "500"],
        "bias-curve without": ["bias-curve", "--hists", h, "--mode", "without", "--m", "1..5", "--mc-samples", "500"],
        "simulate-perfect": ["simulate-perfect", "--hists", h, "--measure", "sari", "--m", "1..3",
                             "--N", "40", "--N-cor", "4", "--iterations", "40"],
        "rerank-sweep": ["rerank-sweep", "--kbest", str(kb), "--ref-pool", str(pool), "--m", "1..4",
                         "--measure", "gleu", "--resamples", "300"],
    }
    differing = []
    for name, argv in commands.items():
        outs = []
        for threads in ("1", "3", "1"):
            buf = io.StringIO()
            with redirect_stdout(buf):
                code = run(argv + ["--seed", "42", "--threads", threads])
            assert code == 0, name
            outs.append(buf.getvalue())
        if len(set(outs)) != 1:
            differing.append(name)
    report(10, not differing,
           f"byte-identical reports across --threads 1/3/1 for {len(commands)} randomized subcommands; "
           f"differing: {differing or 'none'}")
