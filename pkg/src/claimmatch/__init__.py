"""Multilingual claim matching: retrieval, reranking, classification, clustering."""

from .corpus import (
    AnnotatedPair,
    ClaimLabel,
    ClaimLabelRecord,
    Corpus,
    CorpusError,
    FactCheckReport,
    MajorityLabel,
    Message,
    ParallelPair,
    SimilarityLabel,
    Source,
    majority_label,
    scrub_pii,
)
from .embedding import (
    EmbeddingProvider,
    FileEmbeddingProvider,
    HashedNGramEncoder,
    ProviderError,
    RemoteEmbeddingProvider,
    StaticProvider,
    VectorStore,
    cosine,
    nearest_neighbors,
)
from .bm25 import InvertedIndex, ScoredHit, tokenize
from .distill import (
    DistillConfig,
    DistillationTrainer,
    DistillDivergenceError,
    TrainingTrace,
    distill_loss,
    distill_train,
    gradient_check,
)
from .matcher import (
    AdaBoostStumpClassifier,
    ClaimMatcher,
    MatchConfig,
    MatchDecision,
    RankedCandidate,
    ThresholdMatchClassifier,
    build_balanced_pairs,
    classify_threshold,
    decide_band,
    pair_feature_vector,
    rank_candidates,
)
from .evaluation import (
    AgreementTable,
    RankedQueryResult,
    SweepResult,
    f1_sweep,
    has_positive_at_k,
    mfr,
    mrr,
    randolph_kappa,
)
from .cluster import OnlineSingleLinkClusterer, Representatives
from .sampler import SampledPair, SamplingPlan, sample_pairs, sample_random_pairs
from .service import MatchingService, ReviewItem, ReviewState, create_app

__version__ = "0.1.0"
