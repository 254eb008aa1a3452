"""Featured-topic recommendation for software repositories."""

from repotopics.classify import MultinomialNBOVR, WeightedLogisticOVR, recommend
from repotopics.corpus import RepoRecord, parse_corpus
from repotopics.features import SourceFeaturizer, TfidfNgramVectorizer
from repotopics.model import TopicRecommender
from repotopics.textprep import ProcessedDoc, RepoPreprocessor
from repotopics.topicnorm import TopicMapper, TopicVocabulary

__version__ = "0.1.0"

__all__ = [
    "MultinomialNBOVR",
    "ProcessedDoc",
    "RepoPreprocessor",
    "RepoRecord",
    "SourceFeaturizer",
    "TfidfNgramVectorizer",
    "TopicMapper",
    "TopicRecommender",
    "TopicVocabulary",
    "WeightedLogisticOVR",
    "parse_corpus",
    "recommend",
]
