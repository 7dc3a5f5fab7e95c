"""Alignment-loss oracle via finite differences, convergence, and trainer API."""

import math

import numpy as np
import pytest

from claimmatch.corpus import ParallelPair
from claimmatch.distill import (
    DistillConfig,
    DistillDivergenceError,
    DistillationTrainer,
    distill_loss,
    distill_train,
    gradient_check,
)
from claimmatch.embedding import HashedNGramEncoder


def make_pairs(n: int, seed: int = 0) -> list[ParallelPair]:
    rng = np.random.default_rng(seed)
    words = ["agua", "fiebre", "vacuna", "banco", "dinero", "cierre", "torre", "red"]
    pairs = []
    for i in range(n):
        k = int(rng.integers(3, 7))
        src = " ".join(rng.choice(words, size=k))
        tgt = " ".join(rng.choice(words, size=k))
        pairs.append(ParallelPair(f"{src} {i}", f"{tgt} {i}"))
    return pairs


def make_teacher(dim: int = 16) -> HashedNGramEncoder:
    return HashedNGramEncoder(dim=dim, n_buckets=2048, init_seed=99, normalize_output=False)


def make_student(dim: int = 16) -> HashedNGramEncoder:
    return HashedNGramEncoder(dim=dim, n_buckets=2048, init_seed=1)


def loss_oracle(teacher, student, batch) -> float:
    """Recompute the objective pair by pair from embed calls alone."""
    total = 0.0
    for pair in batch:
        t = np.asarray(teacher.embed_batch([pair.source_text])[0], dtype=np.float64)
        s_src = np.asarray(student.encode_raw([pair.source_text])[0], dtype=np.float64)
        s_tgt = np.asarray(student.encode_raw([pair.target_text])[0], dtype=np.float64)
        total += float(np.mean((t - s_src) ** 2) + np.mean((t - s_tgt) ** 2))
    return total / len(batch)


class TestDistillLoss:
    def test_matches_per_pair_oracle(self):
        batch = make_pairs(8)
        teacher, student = make_teacher(), make_student()
        assert distill_loss(teacher, student, batch) == pytest.approx(
            loss_oracle(teacher, student, batch), rel=1e-12
        )

    def test_permutation_invariant(self):
        batch = make_pairs(16)
        teacher, student = make_teacher(), make_student()
        forward = distill_loss(teacher, student, batch)
        assert distill_loss(teacher, student, batch[::-1]) == forward

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            distill_loss(make_teacher(), make_student(), [])

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dim"):
            distill_loss(make_teacher(16), make_student(8), make_pairs(2))


class TestGradient:
    def test_analytic_matches_finite_differences(self):
        value = gradient_check(make_student(), make_teacher(), make_pairs(12), seed=3)
        assert value < 1e-4

    def test_independent_finite_difference_probe(self):
        # Same check, recomputed here from distill_loss alone.
        teacher, student = make_teacher(8), make_student(8)
        batch = make_pairs(6, seed=2)
        eps = 1e-5
        idx, _ = student.features(batch[0].source_text)
        i, j = int(idx[0]), 3

        base = student.projection.copy()
        n, dim = len(batch), student.dim
        from claimmatch.distill import _feature_matrix

        xa = _feature_matrix(student, [p.source_text for p in batch])
        xb = _feature_matrix(student, [p.target_text for p in batch])
        tv = np.asarray(teacher.embed_batch([p.source_text for p in batch]), dtype=np.float64)
        analytic = (-2.0 / (n * dim)) * (xa.T @ (tv - xa @ base) + xb.T @ (tv - xb @ base))

        student.projection = base.copy()
        student.projection[i, j] += eps
        up = distill_loss(teacher, student, batch)
        student.projection = base.copy()
        student.projection[i, j] -= eps
        down = distill_loss(teacher, student, batch)
        student.projection = base
        numeric = (up - down) / (2 * eps)
        assert np.asarray(analytic)[i, j] == pytest.approx(numeric, abs=1e-7)


class TestDistillTrain:
    def test_loss_decreases(self):
        pairs = make_pairs(64)
        teacher, student = make_teacher(), make_student()
        trace = distill_train(teacher, student, pairs, DistillConfig(epochs=8, learning_rate=2.0))
        assert trace.epoch_losses[-1] < trace.epoch_losses[0]

    def test_final_loss_matches_distill_loss(self):
        pairs = make_pairs(32)
        teacher, student = make_teacher(), make_student()
        distill_train(teacher, student, pairs, DistillConfig(epochs=5, learning_rate=2.0))
        # One inert pass: recorded loss must equal the standalone evaluation.
        trace = distill_train(teacher, student, pairs, DistillConfig(epochs=1, learning_rate=0.0))
        assert trace.epoch_losses[0] == pytest.approx(
            distill_loss(teacher, student, pairs), rel=1e-12
        )

    def test_zero_learning_rate_freezes_student(self):
        pairs = make_pairs(16)
        student = make_student()
        before = student.projection.copy()
        distill_train(make_teacher(), student, pairs, DistillConfig(epochs=3, learning_rate=0.0))
        assert np.array_equal(student.projection, before)

    def test_deterministic_given_seed(self):
        pairs = make_pairs(40)
        config = DistillConfig(epochs=4, learning_rate=1.0, shuffle_seed=5)
        s1, s2 = make_student(), make_student()
        t1 = distill_train(make_teacher(), s1, pairs, config)
        t2 = distill_train(make_teacher(), s2, pairs, config)
        assert t1.epoch_losses == t2.epoch_losses
        assert np.array_equal(s1.projection, s2.projection)

    def test_shuffle_seed_changes_batch_order(self):
        pairs = make_pairs(40)
        s1, s2 = make_student(), make_student()
        t1 = distill_train(
            make_teacher(), s1, pairs, DistillConfig(epochs=3, learning_rate=1.0, shuffle_seed=0)
        )
        t2 = distill_train(
            make_teacher(), s2, pairs, DistillConfig(epochs=3, learning_rate=1.0, shuffle_seed=1)
        )
        # First-epoch loss is order-invariant (recorded before updates apply
        # only within the epoch); later epochs see different update orders.
        assert t1.epoch_losses[0] != t2.epoch_losses[0] or t1.epoch_losses[1:] != t2.epoch_losses[1:]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises_with_partial_trace(self):
        pairs = make_pairs(32)
        with pytest.raises(DistillDivergenceError) as exc_info:
            distill_train(
                make_teacher(), make_student(), pairs,
                DistillConfig(epochs=50, learning_rate=1e6),
            )
        assert isinstance(exc_info.value.trace.epoch_losses, list)

    def test_empty_pairs_rejected(self):
        with pytest.raises(ValueError):
            distill_train(make_teacher(), make_student(), [], DistillConfig())

    def test_improves_alignment_cosine(self):
        pairs = make_pairs(128)
        teacher, student = make_teacher(), make_student()

        def mean_alignment() -> float:
            t = teacher.embed_batch([p.source_text for p in pairs])
            s = student.embed_batch([p.source_text for p in pairs])
            t = t / np.linalg.norm(t, axis=1, keepdims=True)
            return float(np.mean(np.sum(t * s, axis=1)))

        before = mean_alignment()
        distill_train(teacher, student, pairs, DistillConfig(epochs=20, learning_rate=4.0))
        assert mean_alignment() > before


class TestDistillationTrainer:
    def test_fit_exposes_student_and_trace(self):
        pairs = make_pairs(32)
        trainer = DistillationTrainer(
            teacher=make_teacher(), epochs=3, learning_rate=1.0, n_buckets=2048
        )
        trainer.fit(pairs)
        assert trainer.student_.dim == 16
        assert len(trainer.trace_.epoch_losses) == 3

    def test_get_params_round_trip(self):
        teacher = make_teacher()
        trainer = DistillationTrainer(teacher=teacher, epochs=2, n_buckets=2048)
        clone = DistillationTrainer(**trainer.get_params(deep=False))
        assert clone.epochs == 2 and clone.teacher is teacher


class TestConfig:
    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            DistillConfig(batch_size=0)
        with pytest.raises(ValueError):
            DistillConfig(learning_rate=-0.1)
        with pytest.raises(ValueError):
            DistillConfig(epochs=-1)
