"""Multi-task hate/offensive/sexist post detection toolkit.

Fuses an encoded target post with the author's history, similar users'
tweets, and hand-crafted tweet features, trained through a shared-encoder
multi-task architecture with transferable shared weights.
"""

__version__ = "0.1.0"

from .corpus import (
    CorpusError,
    Dataset,
    FoldSplit,
    TaskId,
    TweetRecord,
    UserRecord,
    class_distribution,
    kfold_split,
    load_corpus,
    load_users,
)
from .encoder import EncoderConfig, EncoderParams, TextEncoder, Tokenizer
from .evaluation import (
    ConfusionMatrix,
    HistoryProfile,
    MetricsReport,
    RunAggregate,
    confusion,
    error_cases,
    macro_weighted_f1,
    profile_history,
)
from .fusion import FeatureBundle, FeatureMask, FusionModel, fuse, predict, train_fusion
from .mtl import MTLModel, STLModel, TaskHead, TrainingConfig, train_mtl, train_stl, transfer_shared
from .protocol import PipelineSpec, cross_validate
from .textfeat import (
    NGramVocabulary,
    SentimentLexicon,
    SurfaceCounts,
    TweetFeatureVector,
    build_ngram_vocab,
    count_surface_features,
    normalize_tokens,
    sentiment_score,
    tfidf_vector,
    tweet_feature_vector,
)
from .usergraph import (
    NeighborSelection,
    SimilarityFeatures,
    SimilarityScore,
    select_inter_tweets,
    similarity_features,
    top_k_similar,
    tsim_score,
)

__all__ = [
    "ConfusionMatrix",
    "CorpusError",
    "Dataset",
    "EncoderConfig",
    "EncoderParams",
    "FeatureBundle",
    "FeatureMask",
    "FoldSplit",
    "FusionModel",
    "HistoryProfile",
    "MTLModel",
    "MetricsReport",
    "NGramVocabulary",
    "NeighborSelection",
    "PipelineSpec",
    "RunAggregate",
    "STLModel",
    "SentimentLexicon",
    "SimilarityFeatures",
    "SimilarityScore",
    "SurfaceCounts",
    "TaskHead",
    "TaskId",
    "TextEncoder",
    "Tokenizer",
    "TrainingConfig",
    "TweetFeatureVector",
    "TweetRecord",
    "UserRecord",
    "build_ngram_vocab",
    "class_distribution",
    "confusion",
    "count_surface_features",
    "cross_validate",
    "error_cases",
    "fuse",
    "kfold_split",
    "load_corpus",
    "load_users",
    "macro_weighted_f1",
    "normalize_tokens",
    "predict",
    "profile_history",
    "select_inter_tweets",
    "sentiment_score",
    "similarity_features",
    "tfidf_vector",
    "top_k_similar",
    "train_fusion",
    "train_mtl",
    "train_stl",
    "transfer_shared",
    "tsim_score",
    "tweet_feature_vector",
]
