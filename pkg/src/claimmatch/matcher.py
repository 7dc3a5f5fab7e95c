"""The claim-matching core.

Retrieval is two-stage: BM25 generates candidates, embedding cosine
reranks them.  Pair classification is either a plain cosine threshold or
AdaBoost over decision stumps with the pair feature vector
[len_a, len_b, |len_a - len_b|, emb_a..., emb_b..., cosine].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import StratifiedKFold

from ._validation import check_matrix, check_seed
from .bm25 import InvertedIndex
from .corpus import AnnotatedPair, MajorityLabel, Message
from .embedding import EmbeddingProvider, VectorStore, cosine
from .evaluation import binary_metrics, choose_threshold

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchConfig:
    retrieval_depth: int = 50
    rerank_provider: str = ""
    auto_match_threshold: float = 0.95
    suggest_threshold: float = 0.90

    def __post_init__(self) -> None:
        if not 0.0 <= self.suggest_threshold <= self.auto_match_threshold <= 1.0:
            raise ValueError(
                "need 0 <= suggest_threshold <= auto_match_threshold <= 1, got "
                f"{self.suggest_threshold} / {self.auto_match_threshold}"
            )
        if self.retrieval_depth < 1:
            raise ValueError("retrieval_depth must be >= 1")


class MatchDecision(str, Enum):
    AUTO_MATCHED = "auto_matched"
    SUGGESTED = "suggested"
    NEW_CLAIM = "new_claim"


def decide_band(best_cosine: Optional[float], config: MatchConfig) -> MatchDecision:
    """Deployment policy: pure function of the best candidate cosine."""
    if best_cosine is None:
        return MatchDecision.NEW_CLAIM
    if best_cosine >= config.auto_match_threshold:
        return MatchDecision.AUTO_MATCHED
    if best_cosine >= config.suggest_threshold:
        return MatchDecision.SUGGESTED
    return MatchDecision.NEW_CLAIM


@dataclass(frozen=True)
class RankedCandidate:
    doc_id: str
    bm25_score: float
    cosine: float


def rank_candidates(
    query_text: str,
    query_vec: np.ndarray,
    index: InvertedIndex,
    store: VectorStore,
    depth: int,
) -> list[RankedCandidate]:
    """Top-`depth` BM25 hits re-sorted by descending cosine to the query.

    Candidates without a stored embedding are dropped with a warning; the
    output is always a permutation of the surviving BM25 hits (reranking
    neither invents nor duplicates candidates).  Ties break by ascending id.
    """
    hits = index.search(query_text, depth) if index.doc_count else []
    out = []
    for hit in hits:
        if hit.doc_id not in store:
            logger.warning("candidate %r has no embedding; dropped", hit.doc_id)
            continue
        out.append(
            RankedCandidate(hit.doc_id, hit.score, cosine(query_vec, store.get(hit.doc_id)))
        )
    out.sort(key=lambda c: (-c.cosine, c.doc_id))
    return out


class ClaimMatcher:
    """Bundles index, vector store, provider, and policy for query-time use."""

    def __init__(self, index: InvertedIndex, store: VectorStore,
                 provider: Optional[EmbeddingProvider] = None,
                 config: MatchConfig = MatchConfig()):
        self.index = index
        self.store = store
        self.provider = provider
        self.config = config

    def query_vector(self, message: Message) -> np.ndarray:
        """Stored vector when the message is known, else embed its text."""
        if message.id in self.store:
            return self.store.get(message.id)
        if self.provider is None:
            raise ValueError(f"no stored vector for {message.id!r} and no provider")
        return self.provider.embed_batch([message.text])[0]

    def rank(self, message: Message, exclude_self: bool = True) -> list[RankedCandidate]:
        vec = self.query_vector(message)
        ranked = rank_candidates(
            message.text, vec, self.index, self.store, self.config.retrieval_depth
        )
        if exclude_self:
            ranked = [c for c in ranked if c.doc_id != message.id]
        return ranked


def classify_threshold(pair_cosine: float, tau: float) -> bool:
    """Match iff cosine >= tau (boundary counts as a match)."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return pair_cosine >= tau


class ThresholdMatchClassifier(ClassifierMixin, BaseEstimator):
    """Threshold on the pair cosine, sklearn-style.

    With tau=None, fit() picks the training-F1-maximizing threshold on a
    0.01 grid (median of the maximizing grid points); otherwise fit is a
    validation no-op and the fixed tau is used.
    """

    def __init__(self, tau: Optional[float] = 0.90, grid_step: float = 0.01):
        self.tau = tau
        self.grid_step = grid_step

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        if self.tau is not None:
            self.tau_ = float(self.tau)
        else:
            if y is None:
                raise ValueError("tau=None requires labels to tune the threshold")
            y = np.asarray(y).astype(int)
            self.tau_ = choose_threshold(X[:, -1], y, self.grid_step)
        self.classes_ = np.array([0, 1])
        return self

    def predict(self, X):
        X = check_matrix(X, "X")
        tau = getattr(self, "tau_", self.tau)
        return (X[:, -1] >= tau).astype(int)


# -- pair features -------------------------------------------------------------


def pair_feature_vector(text_a: str, text_b: str, vec_a, vec_b) -> np.ndarray:
    """[len_a, len_b, |len_a-len_b|, emb_a..., emb_b..., cosine]; lengths in characters."""
    len_a, len_b = len(text_a), len(text_b)
    return np.concatenate(
        [
            np.array([len_a, len_b, abs(len_a - len_b)], dtype=np.float64),
            np.asarray(vec_a, dtype=np.float64),
            np.asarray(vec_b, dtype=np.float64),
            np.array([cosine(vec_a, vec_b)], dtype=np.float64),
        ]
    )


LabeledPair = tuple[AnnotatedPair, int]


def build_balanced_pairs(
    annotated: Sequence[AnnotatedPair],
    languages: Optional[Mapping[str, str]] = None,
    seed: int = 0,
) -> list[LabeledPair]:
    """All majority-VerySimilar pairs plus one same-language negative each.

    Negatives are drawn uniformly without replacement among the remaining
    pairs of the same language, whatever their label.  Output size is
    exactly twice the positive count.
    """
    check_seed(seed)

    def lang_of(pair: AnnotatedPair) -> str:
        if pair.language:
            return pair.language
        if languages:
            return languages.get(pair.id_a, "und")
        return "und"

    by_lang: dict[str, tuple[list[AnnotatedPair], list[AnnotatedPair]]] = {}
    for pair in annotated:
        positives, negatives = by_lang.setdefault(lang_of(pair), ([], []))
        if pair.majority == MajorityLabel.VERY_SIMILAR:
            positives.append(pair)
        else:
            negatives.append(pair)

    rng = np.random.default_rng(seed)
    out: list[LabeledPair] = []
    for lang in sorted(by_lang):
        positives, negatives = by_lang[lang]
        if not positives:
            continue
        if len(negatives) < len(positives):
            raise ValueError(
                f"language {lang!r} has {len(positives)} positives but only "
                f"{len(negatives)} negatives to pair them with"
            )
        negatives = sorted(negatives, key=lambda p: (p.id_a, p.id_b))
        chosen = rng.choice(len(negatives), size=len(positives), replace=False)
        out.extend((p, 1) for p in positives)
        out.extend((negatives[i], 0) for i in sorted(chosen.tolist()))
    return out


def pair_design_matrix(
    labeled: Sequence[LabeledPair],
    texts: Mapping[str, str],
    vectors: VectorStore,
) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix / label vector for a labeled pair set."""
    rows, y = [], []
    for pair, label in labeled:
        rows.append(
            pair_feature_vector(
                texts[pair.id_a], texts[pair.id_b],
                vectors.get(pair.id_a), vectors.get(pair.id_b),
            )
        )
        y.append(label)
    return np.vstack(rows), np.asarray(y, dtype=int)


# -- AdaBoost over decision stumps ---------------------------------------------


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    polarity: int  # +1: predict positive above threshold; -1: below
    alpha: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        above = X[:, self.feature] > self.threshold
        return np.where(above, self.polarity, -self.polarity)


def _best_stump(X: np.ndarray, y_signed: np.ndarray, weights: np.ndarray) -> tuple[int, float, int, float]:
    """Exhaustive weighted-error minimization over (feature, threshold, polarity).

    Returns (feature, threshold, polarity, error).  Ties resolve to the
    lowest feature index, then lowest threshold, then polarity +1, so
    training is deterministic.
    """
    n, n_features = X.shape
    best: Optional[tuple[float, int, float, int]] = None
    for j in range(n_features):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        w_pos = np.where(y_signed[order] > 0, weights[order], 0.0)
        w_neg = np.where(y_signed[order] > 0, 0.0, weights[order])
        cum_pos = np.concatenate([[0.0], np.cumsum(w_pos)])
        cum_neg = np.concatenate([[0.0], np.cumsum(w_neg)])
        total_pos, total_neg = cum_pos[-1], cum_neg[-1]
        # i = number of points at or below the threshold; i=0 puts the
        # threshold below the minimum, other candidates sit at midpoints
        # between distinct consecutive values.
        candidates = [(0, xs[0] - 1.0)]
        candidates.extend(
            (i, (xs[i - 1] + xs[i]) / 2.0)
            for i in range(1, n)
            if xs[i] != xs[i - 1]
        )
        for i, theta in candidates:
            # polarity +1 predicts positive above: wrong on positives at or
            # below and negatives above
            err_up = cum_pos[i] + (total_neg - cum_neg[i])
            err_down = cum_neg[i] + (total_pos - cum_pos[i])
            for err, polarity in ((err_up, 1), (err_down, -1)):
                key = (err, j, theta, -polarity)
                if best is None or key < best:
                    best = key
    assert best is not None
    err, j, theta, neg_polarity = best
    return j, float(theta), -neg_polarity, float(err)


class AdaBoostStumpClassifier(ClassifierMixin, BaseEstimator):
    """Discrete AdaBoost over depth-1 decision stumps, built from scratch.

    Labels are {0, 1}.  Each round fits the weighted-error-minimizing stump
    exhaustively, then reweights with the standard exponential update.
    Training stops early when a round reaches zero weighted error (the
    round is kept with the error floored at 1e-12) or when no stump beats
    0.5 (the round is dropped).
    """

    ERROR_FLOOR = 1e-12

    def __init__(self, n_rounds: int = 100):
        self.n_rounds = n_rounds

    def fit(self, X, y):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        X = check_matrix(X, "X")
        y = np.asarray(y)
        labels = set(np.unique(y).tolist())
        if not labels <= {0, 1}:
            raise ValueError(f"labels must be 0/1, got {sorted(labels)}")
        if len(labels) < 2:
            raise ValueError("training data must contain both classes")
        if bool(np.all(X.max(axis=0) == X.min(axis=0))):
            raise ValueError(
                "every feature is constant across the training set; "
                "no stump can split it"
            )
        y_signed = np.where(y == 1, 1.0, -1.0)
        n = X.shape[0]
        weights = np.full(n, 1.0 / n)

        self.stumps_: list[Stump] = []
        self.round_errors_: list[float] = []
        for _ in range(self.n_rounds):
            feature, threshold, polarity, err = _best_stump(X, y_signed, weights)
            if err >= 0.5:
                if not self.stumps_:
                    raise ValueError(
                        "no stump beats chance on the training set "
                        f"(best weighted error {err:.3f}); features do not "
                        "separate the classes"
                    )
                break
            clamped = max(err, self.ERROR_FLOOR)
            alpha = 0.5 * math.log((1.0 - clamped) / clamped)
            stump = Stump(feature, threshold, polarity, alpha)
            self.stumps_.append(stump)
            self.round_errors_.append(err)
            if err <= 0.0:
                break
            margins = y_signed * stump.predict(X)
            weights = weights * np.exp(-alpha * margins)
            weights = weights / weights.sum()

        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        X = check_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        score = np.zeros(X.shape[0])
        for stump in self.stumps_:
            score += stump.alpha * stump.predict(X)
        return score

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.0).astype(int)

    def save(self, path) -> None:
        """Text format: header line, then one line per stump."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"stumps={len(self.stumps_)} features={self.n_features_in_}\n")
            for s in self.stumps_:
                fh.write(f"{s.feature} {s.threshold!r} {s.polarity} {s.alpha!r}\n")

    @classmethod
    def load(cls, path) -> "AdaBoostStumpClassifier":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            try:
                count = int(header[0].removeprefix("stumps="))
                n_features = int(header[1].removeprefix("features="))
            except (IndexError, ValueError) as exc:
                raise ValueError(f"malformed model header in {path}") from exc
            stumps = []
            for line in fh:
                feature, threshold, polarity, alpha = line.split()
                stumps.append(
                    Stump(int(feature), float(threshold), int(polarity), float(alpha))
                )
        if len(stumps) != count:
            raise ValueError(
                f"model file {path} declares {count} stumps, found {len(stumps)}"
            )
        model = cls(n_rounds=max(count, 1))
        model.stumps_ = stumps
        model.round_errors_ = []
        model.classes_ = np.array([0, 1])
        model.n_features_in_ = n_features
        return model


@dataclass(frozen=True)
class CvMetric:
    mean: float
    std: float

    def __str__(self) -> str:
        return f"{self.mean:.3f} +/- {self.std:.3f}"


@dataclass(frozen=True)
class CvReport:
    accuracy: CvMetric
    f1_positive: CvMetric
    f1_negative: CvMetric
    n_folds: int


def repeated_stratified_cv(
    X: np.ndarray,
    y: np.ndarray,
    make_model,
    folds: int = 10,
    repeats: int = 10,
    seed: int = 0,
) -> CvReport:
    """Mean and std of accuracy / per-class F1 over folds x repeats fits."""
    X = check_matrix(X, "X")
    y = np.asarray(y, dtype=int)
    counts = np.bincount(y, minlength=2)
    if counts.min() < folds:
        raise ValueError(
            f"each class needs at least {folds} members for {folds}-fold "
            f"stratified CV, got counts {counts.tolist()}"
        )
    check_seed(seed)
    accs, f1_pos, f1_neg = [], [], []
    for repeat in range(repeats):
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed + repeat)
        for train_idx, test_idx in splitter.split(X, y):
            model = make_model().fit(X[train_idx], y[train_idx])
            pred = model.predict(X[test_idx])
            truth = y[test_idx]
            accs.append(float(np.mean(pred == truth)))
            f1_pos.append(binary_metrics(truth, pred, positive=1).f1)
            f1_neg.append(binary_metrics(truth, pred, positive=0).f1)

    def metric(values: list[float]) -> CvMetric:
        arr = np.asarray(values)
        return CvMetric(float(arr.mean()), float(arr.std()))

    return CvReport(metric(accs), metric(f1_pos), metric(f1_neg), len(accs))


def adaboost_eval_cv(
    labeled: Sequence[LabeledPair],
    texts: Mapping[str, str],
    vectors: VectorStore,
    n_rounds: int = 100,
    folds: int = 10,
    repeats: int = 10,
    seed: int = 0,
) -> CvReport:
    X, y = pair_design_matrix(labeled, texts, vectors)
    return repeated_stratified_cv(
        X, y, lambda: AdaBoostStumpClassifier(n_rounds=n_rounds),
        folds=folds, repeats=repeats, seed=seed,
    )
