"""Accuracy, multiclass margins, layer norms and normalized margins."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import LabeledSet, multinomial_counts, multinomial_weights
from .model import INVALID, MlpParams, scores, uargmax
from .numerics import ConvergenceError, frobenius_norm, percentile_nearest_rank, row_max_l1, spectral_norm

MARGIN_PERCENTILE = 0.5


@dataclass
class MarginReport:
    per_sample_margins: np.ndarray
    min_margin: float
    pct05_margin: float
    v_spectral: float
    w_frobenius: float
    v_row_l1: float
    norm_margin_relu: float
    norm_margin_sine: float
    # min-margin versions of the two normalized margins
    norm_min_margin_relu: float
    norm_min_margin_sine: float

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("per_sample_margins")
        return d


@dataclass
class EvalSummary:
    accuracy: float
    invalid_rate: float
    n: int

    @property
    def error_rate(self) -> float:
        return 1.0 - self.accuracy


def margins_from_scores(S: np.ndarray, y) -> np.ndarray:
    """``s_y - max_{k != y} s_k`` row by row."""
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    rows = np.arange(S.shape[0])
    correct = S[rows, y].copy()
    other = S.copy()
    other[rows, y] = -np.inf
    return correct - other.max(axis=1)


def margin(theta: MlpParams, x, y: int) -> float:
    return float(margins_from_scores(scores(theta, x), [y])[0])


def margins(theta: MlpParams, data: LabeledSet) -> np.ndarray:
    return margins_from_scores(scores(theta, data.X), data.y)


def _safe_div(a: float, b: float) -> float:
    if b == 0.0:
        return math.inf if a > 0 else (-math.inf if a < 0 else math.nan)
    return a / b


def margin_report(theta: MlpParams, data: LabeledSet, q: float = MARGIN_PERCENTILE) -> MarginReport:
    if len(data) == 0:
        raise ValueError("margin report of an empty set")
    g = margins(theta, data)
    gmin = float(g.min())
    gq = percentile_nearest_rank(g, q)
    try:
        v2 = spectral_norm(theta.V)
    except ConvergenceError:
        # near-equal top singular values stall power iteration; SVD is exact
        v2 = float(np.linalg.norm(theta.V, 2))
    wf = frobenius_norm(theta.W)
    v1 = row_max_l1(theta.V)
    return MarginReport(
        per_sample_margins=g,
        min_margin=gmin,
        pct05_margin=gq,
        v_spectral=v2,
        w_frobenius=wf,
        v_row_l1=v1,
        norm_margin_relu=_safe_div(gq, v2 * wf),
        norm_margin_sine=_safe_div(gq, v1),
        norm_min_margin_relu=_safe_div(gmin, v2 * wf),
        norm_min_margin_sine=_safe_div(gmin, v1),
    )


def evaluate_arrays(theta: MlpParams, X, y) -> EvalSummary:
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("evaluation on an empty set")
    pred = uargmax(scores(theta, X))
    return EvalSummary(float(np.mean(pred == y)), float(np.mean(pred == INVALID)), int(y.size))


def evaluate(theta: MlpParams, data: LabeledSet) -> EvalSummary:
    """Fraction of items whose unique-argmax prediction equals the label; ties count as errors."""
    return evaluate_arrays(theta, data.X, data.y)


@dataclass
class PopulationAccuracy:
    unweighted: float  # over distinct bags
    weighted: float  # bags weighted by their multinomial probability
    weighted_exact: tuple[int, int]  # (#correct sequences, p**m) when computed exactly


def population_accuracy(theta: MlpParams, domain: LabeledSet) -> PopulationAccuracy:
    """Accuracy over an exhaustively enumerated ``X_m``, unweighted and multinomial-weighted."""
    m, p = domain.m, domain.p
    if m is None:
        raise ValueError("population accuracy needs a single-length domain")
    correct = uargmax(scores(theta, domain.X)) == domain.y
    unweighted = float(np.mean(correct))
    if m <= 20:
        counts = multinomial_counts(domain.X[correct], m)
        num, den = sum(counts), p**m
        return PopulationAccuracy(unweighted, num / den, (num, den))
    w = multinomial_weights(domain.X, m, p)
    return PopulationAccuracy(unweighted, float(w[correct].sum()), (-1, -1))


def q2_statistic(data: LabeledSet) -> float:
    """Root-mean-square l2 norm of the input bags."""
    if len(data) == 0:
        raise ValueError("Q2 of an empty set")
    X = data.X.astype(np.float64)
    return float(math.sqrt(np.mean(np.sum(X * X, axis=1))))


def q2_from_sequences(seqs) -> float:
    """Same statistic from raw sequences via pair-collision counts ``sum_{j,l} 1{s_j = s_l}``."""
    seqs = np.asarray(seqs)
    coll = (seqs[:, :, None] == seqs[:, None, :]).sum(axis=(1, 2))
    return float(math.sqrt(coll.mean()))


def q2_hoeffding_band(m: int, p: int, n: int, delta: float) -> tuple[float, float]:
    """Two-sided interval for ``Q2^2`` around its mean ``m(1 + (m-1)/p)``."""
    mean = m * (1 + (m - 1) / p)
    half = m * (m - 1) * math.sqrt(math.log(1 / delta) / (2 * n))
    return mean - half, mean + half
