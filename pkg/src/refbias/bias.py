"""Low-coverage bias of reference-based measures.

For an idealised system whose valid outputs follow the same distribution as the
human references, the chance that its output is among ``M`` sampled references
is the *coverage* of the reference set.  One minus the mean coverage over a
corpus is the bias ``b_M`` of sentence accuracy.  Measures without a closed form
(F-score, GLEU, SARI) are handled by simulating such a perfect system.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._parallel import derive_rng as _rng, pmap as _pmap
from .bootstrap import bca_endpoints, jackknife_values
from .corpus import tokenize
from .measures import (
    MEASURE_NAMES,
    choose_reference,
    f_from_counts,
    match_edits,
    extract_edits,
    get_sentence_measure,
)
from .unseenest import CorrectionHistogram, HistogramError

EXACT_ENUM_MAX_SUPPORT = 12


# --- coverage ------------------------------------------------------------

def coverage_with_replacement(h: CorrectionHistogram, M: int) -> float:
    """P(y in Y) for M references drawn i.i.d. from the histogram."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return float(sum(e.m * e.p * (1.0 - (1.0 - e.p) ** M) for e in h.entries))


def _exact_without_replacement(p: np.ndarray, M: int) -> float:
    K = len(p)
    # prob[S] = probability that the first |S| successive draws form the set S
    prob = np.zeros(1 << K)
    prob[0] = 1.0
    mass = np.zeros(1 << K)
    for S in range(1 << K):
        if S:
            low = S & -S
            mass[S] = mass[S ^ low] + p[low.bit_length() - 1]
    total = 0.0
    for S in range(1 << K):
        if prob[S] == 0.0:
            continue
        size = bin(S).count("1")
        if size == M:
            total += prob[S] * mass[S]
            continue
        rest = 1.0 - mass[S]
        if rest <= 0:
            continue
        for j in range(K):
            if not S >> j & 1:
                prob[S | 1 << j] += prob[S] * p[j] / rest
    return float(total)


def _mc_without_replacement(p: np.ndarray, M: int, samples: int, rng: np.random.Generator,
                            chunk: int = 1000) -> float:
    logp = np.log(p)
    total = 0.0
    done = 0
    while done < samples:
        b = min(chunk, samples - done)
        # Gumbel top-M == successive sampling proportional to remaining mass
        keys = logp[None, :] + rng.gumbel(size=(b, len(p)))
        top = np.argpartition(-keys, M - 1, axis=1)[:, :M]
        total += p[top].sum()
        done += b
    return total / samples


def coverage_without_replacement(h: CorrectionHistogram, M: int, mc_samples: int = 10_000,
                                 seed: int = 0) -> float:
    """P(y in Y) when Y holds min(M, support) distinct outcomes drawn successively.

    Exact for supports of at most 12 outcomes, Monte Carlo otherwise.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if not h.integral:
        raise HistogramError("sampling without replacement needs integral multiplicities")
    p = h.item_probs()
    p = p / p.sum()
    K = len(p)
    if M >= K:
        return 1.0
    if K <= EXACT_ENUM_MAX_SUPPORT:
        return _exact_without_replacement(p, M)
    return _mc_without_replacement(p, M, mc_samples, np.random.default_rng(seed))


def mc_coverage_with_replacement(h: CorrectionHistogram, M: int, mc_samples: int,
                                 rng: np.random.Generator, estimator: str = "mass") -> float:
    """Monte Carlo coverage; ``mass`` averages the covered probability mass of each sampled set,
    ``membership`` averages the indicator that a fresh draw lands in it."""
    p = h.item_probs()
    p = p / p.sum()
    draws = rng.choice(len(p), size=(mc_samples, M), p=p)
    if estimator == "membership":
        y = rng.choice(len(p), size=mc_samples, p=p)
        return float((draws == y[:, None]).any(axis=1).mean())
    if estimator != "mass":
        raise ValueError(f"unknown estimator {estimator!r}")
    draws.sort(axis=1)
    first = np.ones_like(draws, dtype=bool)
    first[:, 1:] = draws[:, 1:] != draws[:, :-1]
    return float((p[draws] * first).sum(axis=1).mean())


# --- accuracy distribution ------------------------------------------------

def poisson_binomial_pmf(success_probs: Sequence[float]) -> np.ndarray:
    """pmf of the number of successes among independent Bernoulli trials."""
    probs = np.asarray(success_probs, dtype=float)
    if np.any((probs < 0) | (probs > 1)):
        raise ValueError("success probabilities must lie in [0, 1]")
    pmf = np.zeros(len(probs) + 1)
    pmf[0] = 1.0
    for k, q in enumerate(probs, 1):
        pmf[1:k + 1] = pmf[1:k + 1] * (1 - q) + pmf[:k] * q
        pmf[0] *= 1 - q
    return pmf


@dataclass
class AccuracyDistribution:
    values: np.ndarray
    pmf: np.ndarray
    success_probs: np.ndarray

    @property
    def expectation(self) -> float:
        return float(self.success_probs.mean())

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        """Central interval of accuracy values holding at least ``level`` probability."""
        cdf = np.cumsum(self.pmf)
        alpha = (1 - level) / 2
        lo = int(np.searchsorted(cdf, alpha - 1e-12))
        hi = int(np.searchsorted(cdf, 1 - alpha - 1e-12))
        hi = min(hi, len(self.values) - 1)
        return float(self.values[lo]), float(self.values[hi])


def accuracy_distribution(hists: Sequence[CorrectionHistogram], M: int,
                          coverages: Optional[Sequence[float]] = None) -> AccuracyDistribution:
    """Distribution of a perfect system's accuracy over the corpus the histograms describe."""
    if not hists and coverages is None:
        raise ValueError("need at least one histogram")
    cov = np.asarray(coverages if coverages is not None
                     else [coverage_with_replacement(h, M) for h in hists], dtype=float)
    cov = np.clip(cov, 0.0, 1.0)
    N = len(cov)
    return AccuracyDistribution(np.arange(N + 1) / N, poisson_binomial_pmf(cov), cov)


# --- bias curves ---------------------------------------------------------

@dataclass
class CurvePoint:
    M: int
    expected: float
    bias: float
    ci_low: float
    ci_high: float
    level: float = 0.95

    def to_dict(self, mode: str) -> dict:
        return {"M": self.M, "expected": self.expected, "bias": self.bias,
                "ci": [self.ci_low, self.ci_high], "mode": mode}


@dataclass
class BiasCurve:
    points: list[CurvePoint]
    mode: str
    samples: int = 0
    measure: str = "acc"
    extra: dict = field(default_factory=dict)

    def expected(self) -> np.ndarray:
        return np.array([p.expected for p in self.points])

    def biases(self) -> np.ndarray:
        return np.array([p.bias for p in self.points])

    def to_records(self) -> list[dict]:
        return [p.to_dict(self.mode) for p in self.points]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["M", "expected", "bias", "ci_low", "ci_high", "level", "mode", "measure"])
        for p in self.points:
            w.writerow([p.M, repr(p.expected), repr(p.bias), repr(p.ci_low), repr(p.ci_high),
                        p.level, self.mode, self.measure])
        return buf.getvalue()


def bias_curve(hists: Sequence[CorrectionHistogram], M_range: Sequence[int], mode: str = "analytic",
               mc_samples: int = 1000, seed: int = 42, estimator: str = "mass",
               p_true: float = 1.0, p_fraction: float = 1.0, level: float = 0.95,
               threads: int = 1) -> BiasCurve:
    """Expected perfect-system accuracy and bias ``b_M`` for each M.

    ``mode`` is ``analytic`` (closed form, with replacement), ``mc`` (Monte Carlo,
    with replacement) or ``without`` (references drawn without replacement).
    With true accuracy ``p_true`` and a fraction ``p_fraction`` of sentences
    needing correction, expected accuracy is ``p_true * (1 - p_fraction * b_M)``.
    The interval is the central ``level`` range of the accuracy distribution.
    """
    if not hists:
        raise ValueError("need at least one histogram")
    if mode not in ("analytic", "mc", "without"):
        raise ValueError(f"unknown mode {mode!r}")
    if not (0 <= p_true <= 1 and 0 <= p_fraction <= 1):
        raise ValueError("p_true and p_fraction must lie in [0, 1]")
    for h in hists:
        h.check_normalized()

    def cover(task):
        i, M = task
        h = hists[i]
        if mode == "analytic":
            return coverage_with_replacement(h, M)
        if mode == "mc":
            return mc_coverage_with_replacement(h, M, mc_samples, _rng(seed, i, M), estimator)
        return coverage_without_replacement(h, M, mc_samples, seed=int(_rng(seed, i, M).integers(2**63)))

    M_list = [int(M) for M in M_range]
    tasks = [(i, M) for M in M_list for i in range(len(hists))]
    cov = np.array(_pmap(cover, tasks, threads)).reshape(len(M_list), len(hists))

    points = []
    for M, c in zip(M_list, cov):
        b_hat = 1.0 - float(c.mean())
        success = p_true * (1.0 - p_fraction + p_fraction * c)
        lo, hi = accuracy_distribution([], M, coverages=success).interval(level)
        points.append(CurvePoint(M, p_true * (1.0 - p_fraction * b_hat), p_true * p_fraction * b_hat,
                                 lo, hi, level))
    label = mode if mode != "mc" else f"mc-{estimator}"
    return BiasCurve(points, label, 0 if mode == "analytic" else mc_samples, "acc",
                     {"p_true": p_true, "p_fraction": p_fraction})


# --- perfect-system simulation -------------------------------------------

@dataclass(frozen=True)
class SimulationConfig:
    N: int = 1312
    N_cor: int = 136
    M: int = 2
    iterations: int = 1000
    seed: int = 42
    measure: str = "f05"
    p_true: float = 1.0
    p_fraction: float = 1.0
    level: float = 0.95

    def __post_init__(self):
        if self.measure not in MEASURE_NAMES:
            raise ValueError(f"unknown measure {self.measure!r}; choose from {', '.join(MEASURE_NAMES)}")
        if not 0 <= self.N_cor <= self.N or self.N < 1:
            raise ValueError("need 0 <= N_cor <= N and N >= 1")
        if self.iterations < 1 or self.M < 1:
            raise ValueError("iterations and M must be >= 1")
        if not (0 <= self.p_true <= 1 and 0 <= self.p_fraction <= 1):
            raise ValueError("p_true and p_fraction must lie in [0, 1]")
        if self.p_true < 1 and self.measure not in ("acc", "eim"):
            raise ValueError("p_true < 1 is only defined for acc and eim")

    @property
    def identity_count(self) -> int:
        """Sentences needing no correction: N_cor plus the (1 - p) share of the rest."""
        return self.N_cor + int(round((1 - self.p_fraction) * (self.N - self.N_cor)))


@dataclass
class SimResult:
    M: int
    expected: float
    bias: float
    ci_low: float
    ci_high: float
    level: float
    measure: str
    iterations: int
    unlabeled_mass_dropped: float = 0.0

    def point(self) -> CurvePoint:
        return CurvePoint(self.M, self.expected, self.bias, self.ci_low, self.ci_high, self.level)


class _Sentence:
    """Sampling tables and memoised scores for one source sentence."""

    def __init__(self, h: CorrectionHistogram, string_measure: bool):
        self.source = tokenize(h.source) if h.source is not None else None
        self.dropped = 0.0
        if string_measure:
            if self.source is None:
                raise HistogramError("string-based measures need histograms with a 'source'")
            labels, p, dropped = h.labeled_items()
            if not labels:
                raise HistogramError(f"histogram for {h.source!r} carries no labelled outcomes")
            self.items = [tokenize(s) for s in labels]
            self.dropped = dropped / h.mass
        else:
            p = h.item_probs()
            self.items = None
        self.cdf = np.cumsum(p / p.sum())
        self.cdf[-1] = 1.0
        self.cache: dict = {}

    def draw(self, u: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.cdf, u, side="right")


def _make_scorer(measure: str):
    """Return ``score(sent, out_idx, ref_idx_tuple) -> record``.

    Records are floats, or ``(tp, fp, fn)`` per reference for f05.
    """
    if measure == "f05":
        def score(sent: _Sentence, out: int, refs: tuple) -> list:
            res = []
            for r in refs:
                key = (out, r)
                if key not in sent.cache:
                    sys_e = extract_edits(sent.source, sent.items[out])
                    sent.cache[key] = match_edits(sent.source, sys_e,
                                                  extract_edits(sent.source, sent.items[r]))
                res.append(sent.cache[key])
            return res
        return score

    fn = get_sentence_measure(measure)
    if measure == "sari":
        def score(sent, out, refs):
            key = (out, tuple(sorted(refs)))
            if key not in sent.cache:
                sent.cache[key] = fn(sent.source, sent.items[out], [sent.items[r] for r in key[1]])
            return sent.cache[key]
        return score

    def score(sent, out, refs):
        best = 0.0
        for r in refs:
            key = (out, r)
            if key not in sent.cache:
                sent.cache[key] = fn(sent.source, sent.items[out], [sent.items[r]])
            best = max(best, sent.cache[key])
        return best
    return score


def _aggregator(measure: str) -> Callable[[np.ndarray], float]:
    if measure == "f05":
        return lambda rec: f_from_counts(*rec.sum(axis=0), 0.5)[2]
    return np.mean


def simulate_perfect(hists: Sequence[CorrectionHistogram], config: SimulationConfig,
                     threads: int = 1, lucky: bool = False) -> SimResult:
    """Score a perfect system whose outputs are drawn from the reference distribution.

    Every iteration draws ``N`` sentences uniformly with replacement from
    ``hists``; ``identity_count`` of them need no correction (output, source and
    reference coincide).  The rest get ``M`` references and one output drawn
    from their histogram (with ``lucky``, the output is one of the references).
    Returns the mean over iterations and a BCa interval over the iteration
    scores, bias-corrected towards that mean and accelerated by the jackknife
    skewness of the first iteration's sentences.
    """
    if not hists:
        raise ValueError("need at least one histogram")
    cfg = config
    for h in hists:
        h.check_normalized()
    fast_acc = cfg.measure == "acc"
    sents = [_Sentence(h, string_measure=not fast_acc) for h in hists]
    scorer = None if fast_acc else _make_scorer(cfg.measure)
    aggregate = _aggregator(cfg.measure)
    n_id = cfg.identity_count
    H = len(sents)

    if cfg.measure == "f05":
        identity_record = (0, 0, 0)
    else:
        identity_record = 1.0

    def run(b: int) -> np.ndarray:
        rng = _rng(cfg.seed, b)
        which = rng.integers(0, H, size=cfg.N)
        u = rng.random((cfg.N, cfg.M + 1))
        pick = rng.integers(0, cfg.M, size=cfg.N)
        fail = rng.random(cfg.N) >= cfg.p_true
        draws = np.empty((cfg.N, cfg.M + 1), dtype=np.int64)
        for s in np.unique(which):
            rows = which == s
            draws[rows] = sents[s].draw(u[rows])
        if lucky:
            draws[:, 0] = draws[np.arange(cfg.N), 1 + pick]

        if fast_acc:
            rec = (draws[:, 1:] == draws[:, :1]).any(axis=1).astype(float)
            rec[fail] = 0.0
            rec[:n_id] = 1.0
            return rec

        if cfg.measure == "f05":
            rec = np.zeros((cfg.N, 3))
            tot = (0, 0, 0)
            for k in range(n_id, cfg.N):
                per_ref = scorer(sents[which[k]], int(draws[k, 0]), tuple(int(x) for x in draws[k, 1:]))
                c = per_ref[choose_reference(per_ref, tot, 0.5)]
                tot = (tot[0] + c[0], tot[1] + c[1], tot[2] + c[2])
                rec[k] = c
            rec[:n_id] = identity_record
            return rec

        rec = np.empty(cfg.N)
        rec[:n_id] = identity_record
        for k in range(n_id, cfg.N):
            rec[k] = scorer(sents[which[k]], int(draws[k, 0]), tuple(int(x) for x in draws[k, 1:]))
        rec[n_id:][fail[n_id:]] = 0.0
        return rec

    records = _pmap(run, range(cfg.iterations), threads)
    thetas = np.array([aggregate(r) for r in records])
    expected = float(thetas.mean())
    if np.all(thetas == thetas[0]):
        lo = hi = float(thetas[0])
    else:
        # parametric bootstrap: the model's own value is estimated by the replicate mean
        jack = jackknife_values(records[0], aggregate)
        lo, hi = bca_endpoints(expected, thetas, jack, cfg.level)
    dropped = float(np.mean([s.dropped for s in sents]))
    return SimResult(cfg.M, expected, cfg.p_true - expected, lo, hi, cfg.level,
                     ("lucky-" if lucky else "") + cfg.measure, cfg.iterations, dropped)


def simulate_lucky_perfect(hists: Sequence[CorrectionHistogram], config: SimulationConfig,
                           threads: int = 1) -> SimResult:
    """A perfect system that always outputs one of the sampled references."""
    if config.measure not in ("sari", "max-sari"):
        raise ValueError("the lucky-perfect system is defined for sari and max-sari")
    return simulate_perfect(hists, config, threads, lucky=True)


def simulation_curve(hists, config: SimulationConfig, M_range: Sequence[int], threads: int = 1,
                     lucky: bool = False) -> BiasCurve:
    results = []
    for M in M_range:
        cfg = SimulationConfig(**{**asdict(config), "M": int(M)})
        results.append(simulate_perfect(hists, cfg, threads, lucky))
    mode = ("lucky-" if lucky else "") + "bootstrap"
    return BiasCurve([r.point() for r in results], mode, config.iterations, config.measure,
                     {"unlabeled_mass_dropped": results[0].unlabeled_mass_dropped if results else 0.0})


# --- incentive to correct ------------------------------------------------

@dataclass(frozen=True)
class IncentiveParams:
    p_detect: float
    p_correct: float
    p_coverage: float
    alpha: float = 0.0

    def __post_init__(self):
        for name in ("p_detect", "p_correct", "p_coverage"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


def incentive_condition(params: IncentiveParams) -> tuple[bool, float]:
    """Whether correcting beats abstaining, and by what margin.

    Correcting is rewarded with probability ``p_correct * p_coverage`` and costs
    ``alpha`` per unrewarded attempt; abstaining is rewarded when the phrase was
    not actually wrong, ``1 - p_detect``.
    """
    hit = params.p_correct * params.p_coverage
    margin = hit - (1 - hit) * params.alpha - (1 - params.p_detect)
    return margin > 0, margin


def expected_accuracy_slope(curve: BiasCurve) -> np.ndarray:
    """Forward differences of expected value along M."""
    return np.diff(curve.expected())

