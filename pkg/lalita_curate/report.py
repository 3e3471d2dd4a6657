"""Analysis reports: cluster histograms, per-cluster feature distributions, corpus profiles."""
from collections import Counter
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from loguru import logger

from lalita_curate.conllu_ingest import AnnotatedSentence
from lalita_curate.errors import ReportError
from lalita_curate.feature_vector import LENGTH_FEATURE, FeatureSchema, FeatureVector
from lalita_curate.jenks_cluster import ClusterModel, assign_clusters
from lalita_curate.utils import format_number

SCORE_BINS = 50


class HistogramBin(BaseModel):
    lower: float
    upper: float
    count: int
    cluster: int


class ClusterSummary(BaseModel):
    cluster: int
    count: int
    share: float
    score_min: Optional[float] = None
    score_max: Optional[float] = None
    mean_length: Optional[float] = None


class AnalysisReport(BaseModel):
    k: int
    breaks: List[float]
    size: int
    clusters: List[ClusterSummary]
    score_histogram: List[HistogramBin]
    feature_histograms: Dict[str, Dict[str, Dict[str, float]]] = Field(default_factory=dict)


class CorpusProfile(BaseModel):
    size: int
    length_mean: float
    length_median: float
    length_std: float
    length_threshold: int
    share_at_or_below_threshold: float
    verb_distribution: Dict[str, float]
    share_lacking_relation: Dict[str, float]


class ExternalDistribution(BaseModel):
    size: int
    counts: List[int]
    shares: List[float]
    mean_length: Optional[List[Optional[float]]] = None


def _percent_histogram(values: Sequence[float]) -> Dict[str, float]:
    counts = Counter(values)
    total = len(values)
    return {format_number(v): 100.0 * counts[v] / total for v in sorted(counts)}


def score_histogram(scores: np.ndarray, model: ClusterModel, bins: int = SCORE_BINS) -> List[HistogramBin]:
    counts, edges = np.histogram(scores, bins=bins)
    rows = []
    breaks = np.array(model.breaks)
    for count, lower, upper in zip(counts, edges[:-1], edges[1:]):
        cluster = int(np.searchsorted(breaks, (lower + upper) / 2.0, side="right"))
        rows.append(HistogramBin(lower=float(lower), upper=float(upper), count=int(count), cluster=cluster))
    return rows


def report_clusters(
    scores: Sequence[float],
    labels: Sequence[int],
    model: ClusterModel,
    vectors: Sequence[FeatureVector],
    schema: FeatureSchema,
    features: Sequence[str],
    bins: int = SCORE_BINS,
) -> AnalysisReport:
    """
    Cluster shares and score ranges, the score histogram with its boundaries,
    and per-cluster percentage histograms of the requested features.
    """
    if not (len(scores) == len(labels) == len(vectors)):
        raise ReportError("scores, labels and vectors must have equal length")
    if len(scores) == 0:
        raise ReportError("Cannot report on an empty corpus")
    index = schema.index
    unknown = [f for f in features if f not in index]
    if unknown:
        raise ReportError(f"Unknown feature(s) for report: {', '.join(unknown)}")

    x = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    matrix = np.array([v.values for v in vectors], dtype=np.float64)
    lengths = matrix[:, index[LENGTH_FEATURE]]

    summaries = []
    for c in range(model.k):
        mask = y == c
        n = int(mask.sum())
        summaries.append(ClusterSummary(
            cluster=c,
            count=n,
            share=100.0 * n / len(x),
            score_min=float(x[mask].min()) if n else None,
            score_max=float(x[mask].max()) if n else None,
            mean_length=float(lengths[mask].mean()) if n else None,
        ))

    histograms: Dict[str, Dict[str, Dict[str, float]]] = {}
    for feature in features:
        column = matrix[:, index[feature]]
        per_cluster = {}
        for c in range(model.k):
            values = column[y == c].tolist()
            if values:
                per_cluster[str(c)] = _percent_histogram(values)
        histograms[feature] = per_cluster

    report = AnalysisReport(
        k=model.k,
        breaks=list(model.breaks),
        size=len(x),
        clusters=summaries,
        score_histogram=score_histogram(x, model, bins),
        feature_histograms=histograms,
    )
    logger.info(f"Cluster report: shares={[round(s.share, 2) for s in summaries]}")
    return report


def feature_histogram_rows(report: AnalysisReport) -> List[List[str]]:
    rows = []
    for feature in sorted(report.feature_histograms):
        for cluster in sorted(report.feature_histograms[feature], key=int):
            for value, percent in report.feature_histograms[feature][cluster].items():
                rows.append([feature, cluster, value, format_number(percent)])
    return rows


def score_histogram_rows(report: AnalysisReport) -> List[List[str]]:
    return [
        [format_number(b.lower), format_number(b.upper), str(b.count), str(b.cluster)]
        for b in report.score_histogram
    ]


def corpus_profile(
    sentences: Sequence[AnnotatedSentence],
    length_threshold: int = 23,
    absent_relations: Sequence[str] = ("acl", "advcl", "conj"),
) -> CorpusProfile:
    """Length statistics, verbs per sentence and the share of sentences without given relations."""
    if not sentences:
        raise ReportError("Cannot profile an empty corpus")
    lengths = np.array([len(s.tokens) for s in sentences], dtype=np.float64)
    verbs = [sum(1 for t in s.tokens if t.upos == "VERB") for s in sentences]
    lacking = {}
    for relation in absent_relations:
        missing = sum(
            1 for s in sentences
            if not any(t.deprel.split(":")[0] == relation for t in s.tokens)
        )
        lacking[relation] = 100.0 * missing / len(sentences)
    return CorpusProfile(
        size=len(sentences),
        length_mean=float(lengths.mean()),
        length_median=float(np.median(lengths)),
        length_std=float(lengths.std()),
        length_threshold=length_threshold,
        share_at_or_below_threshold=100.0 * float((lengths <= length_threshold).mean()),
        verb_distribution=_percent_histogram(verbs),
        share_lacking_relation=lacking,
    )


def external_distribution(
    scores: Mapping[str, float],
    model: ClusterModel,
    lengths: Optional[Mapping[str, int]] = None,
) -> ExternalDistribution:
    """Cluster shares of an externally scored set (e.g. a test set) under the fitted breaks."""
    if not scores:
        raise ReportError("External score file is empty")
    ids = list(scores)
    labels = np.array(assign_clusters(model, [scores[i] for i in ids]))
    counts = [int((labels == c).sum()) for c in range(model.k)]
    mean_length = None
    if lengths is not None:
        mean_length = []
        for c in range(model.k):
            member_lengths = [lengths[i] for i, label in zip(ids, labels) if label == c and i in lengths]
            mean_length.append(float(np.mean(member_lengths)) if member_lengths else None)
    return ExternalDistribution(
        size=len(ids),
        counts=counts,
        shares=[100.0 * c / len(ids) for c in counts],
        mean_length=mean_length,
    )
