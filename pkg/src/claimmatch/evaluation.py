"""Retrieval metrics, threshold sweeps, and inter-annotator agreement."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from ._validation import check_seed
from .corpus import ClaimLabel, MajorityLabel, SimilarityLabel


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float

    def __str__(self) -> str:
        return f"{self.mean:.3f} +/- {self.std:.3f}"


@dataclass(frozen=True)
class BinaryMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def binary_metrics(y_true, y_pred, positive: int = 1) -> BinaryMetrics:
    """Confusion-matrix metrics with the zero-division-yields-zero convention."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValueError("need at least one observation")
    tp = int(np.sum((y_pred == positive) & (y_true == positive)))
    fp = int(np.sum((y_pred == positive) & (y_true != positive)))
    fn = int(np.sum((y_pred != positive) & (y_true == positive)))
    accuracy = float(np.mean(y_pred == y_true))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return BinaryMetrics(accuracy, precision, recall, f1)


# -- ranked-retrieval metrics ---------------------------------------------------


@dataclass(frozen=True)
class RankedQueryResult:
    """One query's ranked candidate ids plus the ids that count as relevant.

    Relevant ids may be missing from the ranking entirely; each metric
    documents how it treats that case.
    """

    query_id: str
    ranking: tuple[str, ...]
    relevant: frozenset[str]

    def __post_init__(self) -> None:
        if not self.relevant:
            raise ValueError(f"query {self.query_id!r} has no relevant ids")
        if len(set(self.ranking)) != len(self.ranking):
            raise ValueError(f"query {self.query_id!r} ranking contains duplicates")

    def first_relevant_rank(self) -> Optional[int]:
        """1-based rank of the first relevant candidate, None when absent."""
        for rank, doc_id in enumerate(self.ranking, start=1):
            if doc_id in self.relevant:
                return rank
        return None


def _require_results(results: Sequence[RankedQueryResult]) -> None:
    if not results:
        raise ValueError("need at least one query result")


def mrr(results: Sequence[RankedQueryResult]) -> float:
    """Mean reciprocal rank; a query with no relevant candidate contributes 0."""
    _require_results(results)
    total = 0.0
    for result in results:
        rank = result.first_relevant_rank()
        total += 0.0 if rank is None else 1.0 / rank
    return total / len(results)


def mfr(results: Sequence[RankedQueryResult], absent_rank: Optional[int] = None) -> float:
    """Mean 1-based rank of the first relevant candidate.

    Queries whose relevant items never appear take the rank `absent_rank`;
    without that cap an absence is an error, since the mean would be
    undefined.
    """
    _require_results(results)
    total = 0.0
    for result in results:
        rank = result.first_relevant_rank()
        if rank is None:
            if absent_rank is None:
                raise ValueError(
                    f"query {result.query_id!r} has no relevant candidate in its "
                    "ranking and no absent_rank cap was given"
                )
            if absent_rank < 1:
                raise ValueError("absent_rank must be >= 1")
            rank = absent_rank
        total += rank
    return total / len(results)


def has_positive_at_k(results: Sequence[RankedQueryResult], k: int) -> float:
    """Fraction of queries with a relevant candidate somewhere in the top k."""
    _require_results(results)
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = 0
    for result in results:
        rank = result.first_relevant_rank()
        if rank is not None and rank <= k:
            hits += 1
    return hits / len(results)


# -- threshold sweep ------------------------------------------------------------


POSITIVE_RULES = ("vs", "vs+ss")


def binarize_majorities(
    majorities: Sequence[MajorityLabel], rule: str = "vs"
) -> tuple[np.ndarray, np.ndarray]:
    """Map majority labels to binary classes under a positive-class rule.

    Rule "vs" counts VerySimilar as positive, "vs+ss" also counts
    SomewhatSimilar.  Pairs without a strict majority and pairs whose
    majority is NotApplicable carry no usable class and are dropped.
    Returns (keep mask, labels for kept pairs).
    """
    if rule not in POSITIVE_RULES:
        raise ValueError(f"unknown positive-class rule {rule!r}; expected {POSITIVE_RULES}")
    positive = {MajorityLabel.VERY_SIMILAR}
    if rule == "vs+ss":
        positive.add(MajorityLabel.SOMEWHAT_SIMILAR)
    dropped = {MajorityLabel.NA, MajorityLabel.NO_MAJORITY}
    keep = np.array([m not in dropped for m in majorities], dtype=bool)
    labels = np.array(
        [1 if m in positive else 0 for m in majorities if m not in dropped],
        dtype=int,
    )
    return keep, labels


def threshold_grid(step: float = 0.01) -> np.ndarray:
    """Strictly increasing grid over [0, 1] inclusive."""
    if not 0.0 < step <= 1.0:
        raise ValueError(f"grid step must be in (0, 1], got {step}")
    n = round(1.0 / step)
    return np.linspace(0.0, 1.0, n + 1)


def threshold_table(
    cosines: np.ndarray, labels: np.ndarray, grid: np.ndarray
) -> list[BinaryMetrics]:
    """Metrics of the rule `cosine >= t` for every grid threshold."""
    return [binary_metrics(labels, (cosines >= t).astype(int)) for t in grid]


def choose_threshold(
    cosines: np.ndarray, labels: np.ndarray, grid_step: float = 0.01
) -> float:
    """F1-maximizing grid threshold; ties resolve to the median maximizer."""
    grid = threshold_grid(grid_step)
    f1s = np.array([m.f1 for m in threshold_table(cosines, labels, grid)])
    best = np.flatnonzero(f1s == f1s.max())
    return float(grid[best[(len(best) - 1) // 2]])


@dataclass(frozen=True)
class SweepResult:
    """Full-data per-threshold metrics plus cross-validated held-out scores."""

    grid: np.ndarray
    table: list[BinaryMetrics]
    cv_f1: MeanStd
    modal_threshold: float
    chosen_thresholds: list[float] = field(repr=False)

    def best_row(self) -> tuple[float, BinaryMetrics]:
        f1s = [m.f1 for m in self.table]
        i = int(np.argmax(f1s))
        return float(self.grid[i]), self.table[i]


def f1_sweep(
    cosines,
    labels,
    folds: int = 10,
    repeats: int = 10,
    grid_step: float = 0.01,
    seed: int = 0,
) -> SweepResult:
    """Repeated stratified CV over the cosine-threshold classifier.

    Each fold picks the F1-maximizing threshold on its training split and
    is scored on the held-out split; the report aggregates the held-out F1
    values and the modal chosen threshold (ties to the lowest).
    """
    cosines = np.asarray(cosines, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if cosines.ndim != 1 or cosines.shape != labels.shape:
        raise ValueError("cosines and labels must be parallel 1-D sequences")
    counts = np.bincount(labels, minlength=2)
    if counts.min() < folds:
        raise ValueError(
            f"each class needs at least {folds} members for {folds}-fold "
            f"stratified CV, got counts {counts.tolist()}"
        )
    check_seed(seed)

    chosen: list[float] = []
    held_f1: list[float] = []
    X = cosines.reshape(-1, 1)
    for repeat in range(repeats):
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed + repeat)
        for train_idx, test_idx in splitter.split(X, labels):
            tau = choose_threshold(cosines[train_idx], labels[train_idx], grid_step)
            pred = (cosines[test_idx] >= tau).astype(int)
            chosen.append(tau)
            held_f1.append(binary_metrics(labels[test_idx], pred).f1)

    tally = Counter(chosen)
    top = max(tally.values())
    modal = min(t for t, c in tally.items() if c == top)
    scores = np.asarray(held_f1)
    grid = threshold_grid(grid_step)
    return SweepResult(
        grid=grid,
        table=threshold_table(cosines, labels, grid),
        cv_f1=MeanStd(float(scores.mean()), float(scores.std())),
        modal_threshold=modal,
        chosen_thresholds=chosen,
    )


# -- inter-annotator agreement --------------------------------------------------


CLAIM_CATEGORIES = ("claim", "no", "wrong_language")
SIMILARITY_CATEGORIES = ("very_similar", "not_very_similar", "na")


def collapse_claim_label(label: ClaimLabel) -> str:
    """Fold the claim-detection scale to claim / no / wrong_language."""
    if label in (ClaimLabel.YES, ClaimLabel.PROBABLY):
        return "claim"
    if label == ClaimLabel.NO:
        return "no"
    return "wrong_language"


def collapse_similarity_label(label: SimilarityLabel) -> str:
    """Fold the similarity scale to very_similar / not_very_similar / na."""
    if label == SimilarityLabel.VERY_SIMILAR:
        return "very_similar"
    if label == SimilarityLabel.NA:
        return "na"
    return "not_very_similar"


@dataclass(frozen=True)
class AgreementTable:
    """Per-item annotator labels over an explicit category set.

    Rows may have different annotator counts, but every row needs at least
    two labels and every label must come from `categories`.
    """

    rows: tuple[tuple[str, ...], ...]
    categories: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.categories) < 2:
            raise ValueError("need at least two categories")
        if len(set(self.categories)) != len(self.categories):
            raise ValueError("categories must be unique")
        if not self.rows:
            raise ValueError("need at least one item")
        allowed = set(self.categories)
        for i, row in enumerate(self.rows):
            if len(row) < 2:
                raise ValueError(f"item {i} has {len(row)} labels; need >= 2")
            bad = set(row) - allowed
            if bad:
                raise ValueError(f"item {i} uses labels outside the category set: {sorted(bad)}")


def randolph_kappa(table: AgreementTable) -> float:
    """Free-marginal kappa: (observed agreement - 1/k) / (1 - 1/k).

    Per-item agreement is the fraction of concordant label pairs among the
    item's annotators; chance agreement is the uniform 1/k, which keeps the
    statistic usable under heavily skewed label distributions.
    """
    k = len(table.categories)
    agreements = []
    for row in table.rows:
        n = len(row)
        counts = Counter(row)
        pairs = sum(c * (c - 1) for c in counts.values())
        agreements.append(pairs / (n * (n - 1)))
    p_observed = math.fsum(agreements) / len(agreements)
    p_chance = 1.0 / k
    return (p_observed - p_chance) / (1.0 - p_chance)
