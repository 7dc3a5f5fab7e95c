"""Teacher-student embedding alignment for the hashed n-gram encoder.

Fits the student so that its embeddings of both sides of a bitext pair land
on the teacher's embedding of the source side.  The batch objective is

    (1/|B|) * sum_i [ msd(T(s_i), S(s_i)) + msd(T(s_i), S(t_i)) ]

where msd is the mean of squared component differences.  The student's
final L2 normalization is disabled during training, which keeps the
objective convex in the projection matrix; plain mini-batch gradient
descent is sufficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator

from .corpus import ParallelPair
from .embedding import EmbeddingProvider, HashedNGramEncoder


class DistillDivergenceError(RuntimeError):
    """Training produced a non-finite loss; carries the partial trace."""

    def __init__(self, trace: "TrainingTrace"):
        super().__init__("distillation diverged (non-finite loss)")
        self.trace = trace


@dataclass
class DistillConfig:
    batch_size: int = 32
    learning_rate: float = 0.05
    epochs: int = 10
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        # The invariant is lr > 0 for real training; lr == 0 is allowed as an
        # explicit frozen-parameters mode.
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass
class TrainingTrace:
    epoch_losses: list[float] = field(default_factory=list)
    student: HashedNGramEncoder | None = None


def _feature_matrix(encoder: HashedNGramEncoder, texts: Sequence[str]) -> sparse.csr_matrix:
    rows, cols, vals = [], [], []
    for i, text in enumerate(texts):
        idx, val = encoder.features(text)
        rows.extend([i] * idx.size)
        cols.extend(idx.tolist())
        vals.extend(val.tolist())
    return sparse.csr_matrix(
        (vals, (rows, cols)), shape=(len(texts), encoder.n_buckets), dtype=np.float64
    )


def _pair_losses(
    projection: np.ndarray,
    source_feats: sparse.csr_matrix,
    target_feats: sparse.csr_matrix,
    teacher_vecs: np.ndarray,
) -> np.ndarray:
    """Per-pair loss terms msd(T, S(s)) + msd(T, S(t)) at the given projection."""
    res_src = teacher_vecs - source_feats @ projection
    res_tgt = teacher_vecs - target_feats @ projection
    return np.mean(res_src**2, axis=1) + np.mean(res_tgt**2, axis=1)


def _check_dims(teacher: EmbeddingProvider, student: HashedNGramEncoder) -> None:
    if teacher.dim != student.dim:
        raise ValueError(f"teacher dim {teacher.dim} != student dim {student.dim}")


def distill_loss(
    teacher: EmbeddingProvider,
    student: HashedNGramEncoder,
    batch: Sequence[ParallelPair],
) -> float:
    """Batch MSE alignment loss (mean over components, mean over the batch).

    Uses the student's raw projection output (no final normalization), the
    same quantity the trainer optimizes.  Exact summation makes the result
    invariant under batch permutation.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    _check_dims(teacher, student)
    sources = [p.source_text for p in batch]
    targets = [p.target_text for p in batch]
    teacher_vecs = np.asarray(teacher.embed_batch(sources), dtype=np.float64)
    losses = _pair_losses(
        student.projection,
        _feature_matrix(student, sources),
        _feature_matrix(student, targets),
        teacher_vecs,
    )
    return math.fsum(losses.tolist()) / len(batch)


def distill_train(
    teacher: EmbeddingProvider,
    student: HashedNGramEncoder,
    pairs: Sequence[ParallelPair],
    config: DistillConfig,
) -> TrainingTrace:
    """Mini-batch gradient descent on the student's projection matrix.

    Records one loss per epoch: the exact mean of the per-pair losses
    observed as each batch was visited (before its update).  Aborts with a
    DistillDivergenceError carrying the partial trace if the loss goes
    non-finite.
    """
    if not pairs:
        raise ValueError("need at least one parallel pair")
    _check_dims(teacher, student)

    sources = [p.source_text for p in pairs]
    targets = [p.target_text for p in pairs]
    n = len(pairs)
    dim = student.dim

    teacher_vecs = np.asarray(teacher.embed_batch(sources), dtype=np.float64)
    source_feats = _feature_matrix(student, sources)
    target_feats = _feature_matrix(student, targets)

    projection = student.projection
    trace = TrainingTrace(student=student)
    rng = np.random.default_rng(config.shuffle_seed)

    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_terms: list[float] = []
        for start in range(0, n, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            xa = source_feats[batch_idx]
            xb = target_feats[batch_idx]
            tv = teacher_vecs[batch_idx]
            res_a = tv - xa @ projection
            res_b = tv - xb @ projection
            batch_losses = np.mean(res_a**2, axis=1) + np.mean(res_b**2, axis=1)
            if not np.all(np.isfinite(batch_losses)):
                raise DistillDivergenceError(trace)
            epoch_terms.extend(batch_losses.tolist())
            if config.learning_rate:
                grad = (-2.0 / (len(batch_idx) * dim)) * (xa.T @ res_a + xb.T @ res_b)
                projection -= config.learning_rate * grad
        trace.epoch_losses.append(math.fsum(epoch_terms) / n)

    student.projection = projection
    return trace


def gradient_check(
    student: HashedNGramEncoder,
    teacher: EmbeddingProvider,
    batch: Sequence[ParallelPair],
    epsilon: float = 1e-5,
    n_entries: int = 120,
    seed: int = 0,
) -> float:
    """Max relative error of the analytic loss gradient vs central differences.

    Samples projection entries mostly from buckets the batch actually
    touches (elsewhere both gradients are exactly zero).  Relative error is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if not 0 < epsilon <= 1e-2:
        raise ValueError("epsilon must be in (0, 1e-2]")
    if not batch:
        raise ValueError("batch must be non-empty")
    _check_dims(teacher, student)

    sources = [p.source_text for p in batch]
    targets = [p.target_text for p in batch]
    teacher_vecs = np.asarray(teacher.embed_batch(sources), dtype=np.float64)
    xa = _feature_matrix(student, sources)
    xb = _feature_matrix(student, targets)
    n, dim = len(batch), student.dim
    projection = student.projection.copy()

    res_a = teacher_vecs - xa @ projection
    res_b = teacher_vecs - xb @ projection
    analytic = (-2.0 / (n * dim)) * (xa.T @ res_a + xb.T @ res_b)
    analytic = np.asarray(analytic)

    active = np.union1d(xa.indices, xb.indices)
    rng = np.random.default_rng(seed)
    entries = set()
    target_count = max(n_entries, 100)
    while len(entries) < min(target_count, active.size * dim):
        entries.add((int(rng.choice(active)), int(rng.integers(dim))))
    # A few untouched rows: gradient must be exactly zero there too.
    for _ in range(10):
        entries.add((int(rng.integers(student.n_buckets)), int(rng.integers(dim))))

    def loss_at(p: np.ndarray) -> float:
        return math.fsum(_pair_losses(p, xa, xb, teacher_vecs).tolist()) / n

    max_rel = 0.0
    for i, j in sorted(entries):
        perturbed = projection.copy()
        perturbed[i, j] += epsilon
        up = loss_at(perturbed)
        perturbed[i, j] -= 2 * epsilon
        down = loss_at(perturbed)
        numeric = (up - down) / (2 * epsilon)
        denom = max(abs(analytic[i, j]), abs(numeric), 1e-8)
        max_rel = max(max_rel, abs(analytic[i, j] - numeric) / denom)
    return max_rel


class DistillationTrainer(BaseEstimator):
    """Estimator wrapper around distill_train for pipeline-style use.

    fit(pairs) trains a fresh student against the given teacher and exposes
    the trained encoder as ``student_`` and the loss trace as ``trace_``.
    """

    def __init__(self, teacher: EmbeddingProvider, batch_size: int = 32,
                 learning_rate: float = 0.05, epochs: int = 10,
                 shuffle_seed: int = 0, n_buckets: int = 16384,
                 ngram_sizes: tuple[int, ...] = (3, 4, 5), hash_seed: int = 13,
                 init_seed: int = 0):
        self.teacher = teacher
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.shuffle_seed = shuffle_seed
        self.n_buckets = n_buckets
        self.ngram_sizes = ngram_sizes
        self.hash_seed = hash_seed
        self.init_seed = init_seed

    def fit(self, X: Sequence[ParallelPair], y=None) -> "DistillationTrainer":
        student = HashedNGramEncoder(
            dim=self.teacher.dim,
            n_buckets=self.n_buckets,
            ngram_sizes=self.ngram_sizes,
            hash_seed=self.hash_seed,
            init_seed=self.init_seed,
        )
        config = DistillConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            shuffle_seed=self.shuffle_seed,
        )
        self.trace_ = distill_train(self.teacher, student, X, config)
        self.student_ = student
        return self
