"""Estimating the histogram of a correction distribution from a finite sample.

The histogram of a distribution records which probability values occur and how
many outcomes carry each value; outcome identities are irrelevant.  Frequently
observed corrections keep their empirical frequency.  The rare region is fitted
by a linear program over a geometric mesh of probability values, choosing the
histogram whose expected fingerprint (counts of outcomes seen exactly r times)
is closest to the observed one, unseen outcomes included.
"""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.stats import poisson

log = logging.getLogger(__name__)

MASS_TOL = 1e-6


class HistogramError(ValueError):
    pass


@dataclass(frozen=True)
class HistEntry:
    p: float
    m: float
    labels: Optional[tuple[str, ...]] = None


@dataclass(frozen=True)
class CorrectionHistogram:
    entries: tuple[HistEntry, ...]
    n: int = 0
    source: Optional[str] = None
    fallback: bool = False

    @property
    def mass(self) -> float:
        return float(sum(e.p * e.m for e in self.entries))

    @property
    def support(self) -> float:
        return float(sum(e.m for e in self.entries))

    @property
    def integral(self) -> bool:
        return all(abs(e.m - round(e.m)) < 1e-9 for e in self.entries)

    def check_normalized(self, tol: float = MASS_TOL) -> None:
        if abs(self.mass - 1.0) > tol:
            raise HistogramError(f"histogram mass is {self.mass:.9g}, expected 1")

    def item_probs(self) -> np.ndarray:
        """Probability of every individual outcome.

        An entry with fractional multiplicity ``m`` contributes ``floor(m)``
        outcomes of probability ``p`` and one outcome of probability
        ``p * frac(m)``.
        """
        probs: list[float] = []
        for e in self.entries:
            whole = int(math.floor(e.m + 1e-12))
            probs.extend([e.p] * whole)
            frac = e.m - whole
            if frac > 1e-12:
                probs.append(e.p * frac)
        return np.asarray(probs, dtype=float)

    def labeled_items(self) -> tuple[list[str], np.ndarray, float]:
        """(labels, probabilities, unlabeled mass) of the outcomes that carry strings."""
        labels: list[str] = []
        probs: list[float] = []
        for e in self.entries:
            if e.labels:
                labels.extend(e.labels)
                probs.extend([e.p] * len(e.labels))
        unlabeled = self.mass - sum(probs)
        if unlabeled < 1e-12:
            unlabeled = 0.0
        return labels, np.asarray(probs, dtype=float), unlabeled

    def to_dict(self) -> dict:
        ents = []
        for e in self.entries:
            d = {"p": e.p, "m": e.m}
            if e.labels:
                d["labels"] = list(e.labels)
            ents.append(d)
        out: dict = {"n": self.n, "entries": ents}
        if self.source is not None:
            out["source"] = self.source
        if self.fallback:
            out["fallback"] = True
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "CorrectionHistogram":
        try:
            ents = tuple(
                HistEntry(float(e["p"]), float(e["m"]),
                          tuple(e["labels"]) if e.get("labels") else None)
                for e in d["entries"])
        except (KeyError, TypeError) as exc:
            raise HistogramError(f"malformed histogram record: {exc}") from None
        if any(e.p <= 0 for e in ents) or any(e.m < 0 for e in ents):
            raise HistogramError("histogram probabilities must be positive and multiplicities non-negative")
        return cls(ents, int(d.get("n", 0)), d.get("source"), bool(d.get("fallback", False)))


def histogram_from_probs(probs: Iterable[float], labels: Optional[Sequence[str]] = None,
                         n: int = 0, source: Optional[str] = None) -> CorrectionHistogram:
    """One entry per outcome; convenient for known distributions."""
    probs = list(probs)
    if labels is None:
        ents = tuple(HistEntry(float(p), 1.0) for p in probs)
    else:
        ents = tuple(HistEntry(float(p), 1.0, (lab,)) for p, lab in zip(probs, labels, strict=True))
    return CorrectionHistogram(ents, n, source)


def empirical_histogram(samples: Sequence[str], source: Optional[str] = None) -> CorrectionHistogram:
    if not samples:
        raise HistogramError("empty sample")
    n = len(samples)
    counts = Counter(samples)
    by_count: dict[int, list[str]] = {}
    for s, c in counts.items():
        by_count.setdefault(c, []).append(s)
    ents = tuple(HistEntry(c / n, float(len(labs)), tuple(sorted(labs)))
                 for c, labs in sorted(by_count.items(), reverse=True))
    return CorrectionHistogram(ents, n, source)


def load_histograms(path) -> list[CorrectionHistogram]:
    with open(path, encoding="utf-8") as fh:
        text = fh.read().strip()
    if not text:
        return []
    if text.startswith("["):
        return [CorrectionHistogram.from_dict(d) for d in json.loads(text)]
    return [CorrectionHistogram.from_dict(json.loads(ln)) for ln in text.splitlines() if ln.strip()]


def dump_histograms(hists: Sequence[CorrectionHistogram]) -> str:
    return "".join(json.dumps(h.to_dict(), ensure_ascii=False, sort_keys=True) + "\n" for h in hists)


# --- fingerprint and estimation -------------------------------------------

def fingerprint(samples: Sequence) -> dict[int, int]:
    """``{r: number of distinct items observed exactly r times}``."""
    if len(samples) == 0:
        raise HistogramError("cannot fingerprint an empty sample")
    return dict(sorted(Counter(Counter(samples).values()).items()))


@dataclass(frozen=True)
class MeshSpec:
    heavy_cutoff: float = 0.05
    min_scale: float = 50.0     # smallest mesh value is 1 / (min_scale * n)
    ratio: float = 1.05
    # second pass: fewest outcomes whose fit is within this slack of the best fit
    support_slack: Optional[float] = 0.5

    def grid(self, n: int) -> np.ndarray:
        lo = 1.0 / (self.min_scale * n)
        hi = self.heavy_cutoff
        if hi <= lo:
            return np.array([hi])
        k = int(math.floor(math.log(hi / lo) / math.log(self.ratio)))
        return lo * self.ratio ** np.arange(k + 1)


def estimate_histogram(samples: Sequence[str], mesh: MeshSpec = MeshSpec(),
                       source: Optional[str] = None) -> CorrectionHistogram:
    """Estimate the full histogram, unseen mass included, from ``samples``."""
    n = len(samples)
    if n < 2:
        raise HistogramError("need at least two samples")
    counts = Counter(samples)
    heavy_ents: list[HistEntry] = []
    rare: dict[int, list[str]] = {}
    for c, labs in _group_by_count(counts).items():
        if c / n >= mesh.heavy_cutoff:
            heavy_ents.append(HistEntry(c / n, float(len(labs)), tuple(labs)))
        else:
            rare[c] = labs
    heavy_mass = sum(e.p * e.m for e in heavy_ents)
    if not rare:
        return _finish(heavy_ents, [], n, source)

    F = {r: len(labs) for r, labs in rare.items()}
    r_max = max(F)
    rs = np.arange(1, r_max + 1)
    f_obs = np.array([F.get(int(r), 0) for r in rs], dtype=float)
    x = mesh.grid(n)
    J, R = len(x), len(rs)
    # expected fingerprint per unit of histogram mass at each mesh point
    A = poisson.pmf(rs[:, None], n * x[None, :])
    w = 1.0 / np.sqrt(f_obs + 1.0)

    # variables: h (J), e_plus (R), e_minus (R)
    c = np.concatenate([np.zeros(J), w, w])
    A_eq = np.zeros((R + 1, J + 2 * R))
    A_eq[:R, :J] = A
    A_eq[:R, J:J + R] = -np.eye(R)
    A_eq[:R, J + R:] = np.eye(R)
    A_eq[R, :J] = x
    b_eq = np.concatenate([f_obs, [1.0 - heavy_mass]])
    # estimated support never below the number of distinct rare items observed
    A_ub = np.concatenate([-np.ones(J), np.zeros(2 * R)])[None, :]
    b_ub = np.array([-float(sum(F.values()))])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * (J + 2 * R), method="highs")
    if res.status != 0:
        log.warning("fingerprint LP failed (%s); falling back to the empirical histogram", res.message)
        emp = empirical_histogram(samples, source)
        return replace(emp, fallback=True)

    if mesh.support_slack is not None:
        res2 = linprog(np.concatenate([np.ones(J), np.zeros(2 * R)]),
                       A_ub=np.vstack([A_ub, c[None, :]]),
                       b_ub=np.concatenate([b_ub, [res.fun + mesh.support_slack]]),
                       A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * (J + 2 * R), method="highs")
        if res2.status == 0:
            res = res2
    h = np.clip(res.x[:J], 0.0, None)
    rare_mass = float(h @ x)
    if rare_mass > 0:
        h *= (1.0 - heavy_mass) / rare_mass
    rare_strings = [s for r in sorted(rare, reverse=True) for s in rare[r]]
    rare_ents = _place_labels(x, h, rare_strings)
    return _finish(heavy_ents, rare_ents, n, source)


def _group_by_count(counts: Counter) -> dict[int, list[str]]:
    out: dict[int, list[str]] = {}
    for s, c in counts.items():
        out.setdefault(c, []).append(s)
    return {c: sorted(labs) for c, labs in sorted(out.items(), reverse=True)}


def _place_labels(x: np.ndarray, h: np.ndarray, strings: list[str]) -> list[HistEntry]:
    """Attach observed rare strings to the largest-probability mesh entries first."""
    ents = []
    queue = list(strings)
    for j in np.argsort(-x, kind="stable"):
        if h[j] <= 1e-9:
            continue
        take = min(len(queue), int(math.floor(h[j] + 1e-9)))
        labs, queue = queue[:take], queue[take:]
        if take:
            ents.append(HistEntry(float(x[j]), float(take), tuple(labs)))
        rest = float(h[j]) - take
        if rest > 1e-9:
            ents.append(HistEntry(float(x[j]), rest))
    return ents


def _finish(heavy, rare, n, source) -> CorrectionHistogram:
    ents = list(heavy) + list(rare)
    total = sum(e.p * e.m for e in ents)
    if total <= 0:
        raise HistogramError("estimated histogram has no mass")
    if abs(total - 1.0) > 1e-12:
        ents = [HistEntry(e.p / total, e.m, e.labels) for e in ents]
    ents.sort(key=lambda e: -e.p)
    return CorrectionHistogram(tuple(ents), n, source)


# --- comparison and summaries --------------------------------------------

def earthmover(h1: CorrectionHistogram, h2: CorrectionHistogram) -> float:
    """1-Wasserstein distance between the mass-weighted distributions of probability values."""
    h1.check_normalized()
    h2.check_normalized()
    v1 = np.array([e.p for e in h1.entries])
    w1 = np.array([e.p * e.m for e in h1.entries])
    v2 = np.array([e.p for e in h2.entries])
    w2 = np.array([e.p * e.m for e in h2.entries])
    allv = np.concatenate([v1, v2])
    order = np.argsort(allv, kind="stable")
    allv = allv[order]
    dw = np.concatenate([w1 / w1.sum(), -w2 / w2.sum()])[order]
    cdf_diff = np.cumsum(dw)[:-1]
    return float(np.sum(np.abs(cdf_diff) * np.diff(allv)))


@dataclass
class SummaryRow:
    gamma: float
    count: float
    mass: float


def summarize(hists, thresholds: Sequence[float] = (0.0, 0.001, 0.01, 0.1)) -> list[SummaryRow]:
    """Per threshold: variants with probability above it and their total mass.

    Given several histograms the per-sentence values are averaged.
    """
    if isinstance(hists, CorrectionHistogram):
        hists = [hists]
    if not hists:
        raise HistogramError("nothing to summarize")
    rows = []
    for g in thresholds:
        counts = [sum(e.m for e in h.entries if e.p > g) for h in hists]
        masses = [sum(e.m * e.p for e in h.entries if e.p > g) for h in hists]
        rows.append(SummaryRow(float(g), float(np.mean(counts)), float(np.mean(masses))))
    return rows
