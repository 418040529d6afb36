"""Measuring how incomplete reference sets bias reference-based evaluation."""

__version__ = "0.1.0"

from .corpus import (AlignmentError, KBestList, NormalizationPolicy, ParallelCorpus, ReferenceSet,
                     TokenSequence, load_corpus, normalize, tokenize)
from .align import WordAlignment, align_words, exact_index_match, order_correlation, split_concat_counts, word_change
from .measures import (ScoreReport, accuracy, eim_accuracy, extract_edits, f_beta, gleu, max_sari, sari,
                       score_corpus)
from .unseenest import (CorrectionHistogram, HistogramError, MeshSpec, earthmover, estimate_histogram,
                        fingerprint, histogram_from_probs, summarize)
from .bootstrap import bca_interval
from .bias import (BiasCurve, IncentiveParams, SimulationConfig, accuracy_distribution, bias_curve,
                   coverage_with_replacement, coverage_without_replacement, incentive_condition,
                   poisson_binomial_pmf, simulate_lucky_perfect, simulate_perfect)
from .rerank import oracle_rerank, rerank_sweep, type_frequency_correlation, type_under_correction
