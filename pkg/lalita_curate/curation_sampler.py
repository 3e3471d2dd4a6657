"""Curated corpus materialization: cluster-mix sampling, baselines, stepwise orders."""
import itertools
import math
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from loguru import logger

from lalita_curate.bitext import BitextPair
from lalita_curate.config import PERCENT_SUM_TOLERANCE, CurationConfig, format_percent
from lalita_curate.errors import ConfigError, SamplingError
from lalita_curate.utils import whitespace_tokens

STANDARD_CONFIGURATION_SETS: Tuple[Tuple[float, ...], ...] = (
    (25, 25, 25, 25),
    (70, 10, 10, 10),
    (40, 40, 10, 10),
    (33.34, 33.34, 33.34, 0),
    (60, 20, 20, 0),
    (70, 15, 15, 0),
    (50, 50, 0, 0),
    (75, 25, 0, 0),
    (100, 0, 0, 0),
)

Strategy = Literal["incpca", "decpca", "rs"]


class ScoredPair(BaseModel):
    model_config = ConfigDict(frozen=True)

    pair: BitextPair
    score: float
    cluster: int
    synthetic: bool = False


class TokenBudget(BaseModel):
    source: int = 0
    target: int = 0


class ClusteredCorpus:
    """Pairs bucketed by cluster, each bucket ordered by descending score (stable)."""

    def __init__(self, items: Sequence[ScoredPair], k: int, synthetic: bool = False):
        self.k = k
        self.synthetic = synthetic
        self.items = list(items)
        self.clusters: List[List[ScoredPair]] = [[] for _ in range(k)]
        for item in self.items:
            if not 0 <= item.cluster < k:
                raise SamplingError(f"Pair '{item.pair.id}' carries cluster {item.cluster}, outside 0..{k - 1}")
            self.clusters[item.cluster].append(item)
        for bucket in self.clusters:
            bucket.sort(key=lambda item: -item.score)

    @classmethod
    def build(
        cls,
        pairs: Sequence[BitextPair],
        scores: Sequence[float],
        labels: Sequence[int],
        k: int,
        synthetic: bool = False,
    ) -> "ClusteredCorpus":
        if not (len(pairs) == len(scores) == len(labels)):
            raise SamplingError("pairs, scores and labels must have equal length")
        items = [
            ScoredPair(pair=p, score=float(s), cluster=int(c), synthetic=synthetic)
            for p, s, c in zip(pairs, scores, labels)
        ]
        return cls(items, k, synthetic)

    @property
    def counts(self) -> List[int]:
        return [len(bucket) for bucket in self.clusters]

    def __len__(self) -> int:
        return len(self.items)


class ClusterTake(BaseModel):
    cluster: int
    quota: int
    quota_exact: float
    real: int
    synthetic: int


class SampleManifest(BaseModel):
    name: str
    percents: List[float]
    tds: int
    seed: Optional[int] = None
    allow_augmentation: bool = True
    clusters: List[ClusterTake] = Field(default_factory=list)
    token_budget: TokenBudget = Field(default_factory=TokenBudget)


class SampleResult(BaseModel):
    pairs: List[BitextPair]
    manifest: SampleManifest


class StepwiseOrder(BaseModel):
    strategy: str
    items: List[ScoredPair]
    cut_points: List[int]


def _check_sum(percents: Sequence[float]):
    total = sum(percents)
    if abs(total - 100.0) > PERCENT_SUM_TOLERANCE:
        raise ConfigError(f"Percents must sum to 100, got {total}")


def enumerate_configurations(multiset: Sequence[float]) -> List[Tuple[float, ...]]:
    """All distinct orderings of the percent multiset, lexicographically sorted."""
    _check_sum(multiset)
    return sorted(set(itertools.permutations(tuple(float(p) for p in multiset))))


def configuration_name(percents: Sequence[float]) -> str:
    return "_".join(format_percent(p) for p in percents)


def largest_remainder(shares: Sequence[Fraction], total: int) -> List[int]:
    """Integer quotas summing to `total`; leftover units go to the largest fractional parts, lower index first."""
    raw = [share * total for share in shares]
    quotas = [math.floor(r) for r in raw]
    leftover = total - sum(quotas)
    ranked = sorted(range(len(raw)), key=lambda i: (-(raw[i] - quotas[i]), i))
    for i in ranked[:leftover]:
        quotas[i] += 1
    return quotas


def _take(
    corpus: ClusteredCorpus,
    synthetic: Optional[ClusteredCorpus],
    shares: Sequence[Fraction],
    tds: int,
    allow_augmentation: bool,
) -> Tuple[List[List[ScoredPair]], List[ClusterTake]]:
    if len(shares) != corpus.k:
        raise ConfigError(f"Configuration has {len(shares)} shares but the corpus has {corpus.k} clusters")
    if synthetic is not None and synthetic.k != corpus.k:
        raise SamplingError("Real and synthetic corpora were clustered with different k")

    quotas = largest_remainder(shares, tds)
    slices: List[List[ScoredPair]] = []
    takes: List[ClusterTake] = []
    shortfall: Dict[int, int] = {}
    for i, quota in enumerate(quotas):
        real = corpus.clusters[i][:quota]
        deficit = quota - len(real)
        extra: List[ScoredPair] = []
        if deficit > 0:
            if allow_augmentation and synthetic is not None:
                extra = synthetic.clusters[i][:deficit]
            if len(extra) < deficit:
                shortfall[i] = deficit - len(extra)
        chosen = sorted(real + extra, key=lambda item: -item.score)
        slices.append(chosen)
        takes.append(ClusterTake(
            cluster=i, quota=quota, quota_exact=float(shares[i] * tds), real=len(real), synthetic=len(extra),
        ))
    if shortfall:
        reason = "augmentation disabled" if not allow_augmentation else "synthetic clusters too small"
        if allow_augmentation and synthetic is None:
            reason = "no synthetic corpus"
        raise SamplingError(f"Cannot fill quotas at tds={tds}: {reason}", shortfall)
    return slices, takes


def sample_configuration(
    corpus: ClusteredCorpus,
    synthetic: Optional[ClusteredCorpus],
    cfg: CurationConfig,
) -> SampleResult:
    """
    Top-score-first sampling per cluster; a cluster short of its quota is
    topped up from the synthetic cluster with the same index.
    """
    slices, takes = _take(corpus, synthetic, cfg.exact_shares(), cfg.tds, cfg.allow_augmentation)
    pairs = [item.pair for bucket in slices for item in bucket]
    manifest = SampleManifest(
        name=cfg.name,
        percents=list(cfg.percents),
        tds=cfg.tds,
        allow_augmentation=cfg.allow_augmentation,
        clusters=takes,
        token_budget=token_budget(pairs),
    )
    added = sum(t.synthetic for t in takes)
    logger.info(f"Sampled {cfg.name} at tds={cfg.tds}: {len(pairs)} pairs ({added} synthetic)")
    return SampleResult(pairs=pairs, manifest=manifest)


def baseline_proportional(
    corpus: ClusteredCorpus,
    tds: int,
    fit_counts: Optional[Sequence[int]] = None,
    synthetic: Optional[ClusteredCorpus] = None,
) -> SampleResult:
    """Quotas follow the cluster shares of the fit corpus (or of `corpus` itself)."""
    counts = list(fit_counts) if fit_counts is not None else corpus.counts
    total = sum(counts)
    if total <= 0:
        raise SamplingError("Cluster counts are empty; cannot derive proportional quotas")
    shares = [Fraction(c, total) for c in counts]
    slices, takes = _take(corpus, synthetic, shares, tds, allow_augmentation=synthetic is not None)
    pairs = [item.pair for bucket in slices for item in bucket]
    manifest = SampleManifest(
        name="baseline_proportional",
        percents=[100.0 * c / total for c in counts],
        tds=tds,
        allow_augmentation=synthetic is not None,
        clusters=takes,
        token_budget=token_budget(pairs),
    )
    return SampleResult(pairs=pairs, manifest=manifest)


def random_sample(pairs: Sequence[BitextPair], tds: int, seed: int = 0) -> List[BitextPair]:
    """Uniform sample without replacement, returned in corpus order."""
    if tds > len(pairs):
        raise SamplingError(f"Cannot draw {tds} pairs from a corpus of {len(pairs)}", {0: tds - len(pairs)})
    if tds < 0:
        raise SamplingError(f"Sample size must be nonnegative, got {tds}")
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(len(pairs), size=tds, replace=False))
    return [pairs[i] for i in picked]


def stepwise_order(
    items: Sequence[ScoredPair],
    strategy: str,
    increment: int = 300000,
    seed: int = 0,
) -> StepwiseOrder:
    """Whole-corpus ordering with a cut point after every `increment` pairs (the last may be partial)."""
    if increment < 1:
        raise ConfigError(f"Increment must be at least 1, got {increment}")
    strategy = strategy.lower()
    if strategy == "incpca":
        ordered = sorted(items, key=lambda item: item.score)
    elif strategy == "decpca":
        ordered = sorted(items, key=lambda item: -item.score)
    elif strategy == "rs":
        permutation = np.random.default_rng(seed).permutation(len(items))
        ordered = [items[i] for i in permutation]
    else:
        raise ConfigError(f"Unknown stepwise strategy '{strategy}' (expected incpca, decpca or rs)")
    n = len(ordered)
    cuts = [min(i * increment, n) for i in range(1, math.ceil(n / increment) + 1)]
    return StepwiseOrder(strategy=strategy, items=ordered, cut_points=cuts)


def token_budget(pairs: Sequence[BitextPair]) -> TokenBudget:
    return TokenBudget(
        source=sum(len(whitespace_tokens(p.source)) for p in pairs),
        target=sum(len(whitespace_tokens(p.target)) for p in pairs),
    )
