"""Bitext hygiene rules for real and synthetic corpora."""
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from pydantic import BaseModel, model_validator
from loguru import logger

from lalita_curate.bitext import BitextPair
from lalita_curate.config import FilterConfig
from lalita_curate.conllu_ingest import AnnotatedSentence, index_annotations
from lalita_curate.errors import SidecarMissingError
from lalita_curate.utils import whitespace_tokens

RULES = ("dedup", "roman_script", "length_ratio", "one_to_many", "single_sentence")

Annotations = Union[Mapping[str, AnnotatedSentence], Sequence[AnnotatedSentence]]


class FilterReport(BaseModel):
    """Removal counts per rule; each removed pair counts under the first rule that fired."""
    input_size: int
    counts_removed_by_rule: Dict[str, int]
    survivors: int

    @model_validator(mode="after")
    def _reconcile(self):
        if any(n < 0 for n in self.counts_removed_by_rule.values()) or self.survivors < 0:
            raise ValueError("counts must be nonnegative")
        if self.survivors + sum(self.counts_removed_by_rule.values()) != self.input_size:
            raise ValueError("filter report does not reconcile with the input size")
        return self

    def to_json(self) -> Dict[str, int]:
        payload = dict(self.counts_removed_by_rule)
        payload["survivors"] = self.survivors
        payload["input"] = self.input_size
        return payload


class FilterResult(BaseModel):
    pairs: List[BitextPair]
    report: FilterReport


def _as_index(annotations: Annotations) -> Mapping[str, AnnotatedSentence]:
    if isinstance(annotations, Mapping):
        return annotations
    return index_annotations(annotations)


def dedup(pairs: Iterable[BitextPair]) -> List[BitextPair]:
    """Collapse exact (source, target) duplicates to their first occurrence."""
    seen: Set[Tuple[str, str]] = set()
    out = []
    for pair in pairs:
        key = (pair.source, pair.target)
        if key in seen:
            continue
        seen.add(key)
        out.append(pair)
    return out


def _is_roman_token(token: str) -> Optional[bool]:
    letters = [c for c in token if c.isalpha()]
    if not letters:
        return None
    latin = sum(1 for c in letters if ("a" <= c <= "z") or ("A" <= c <= "Z"))
    return latin * 2 > len(letters)


def roman_fraction(text: str) -> float:
    """Share of alphabetic whitespace tokens written mostly in Basic-Latin letters."""
    votes = [v for v in (_is_roman_token(t) for t in whitespace_tokens(text)) if v is not None]
    if not votes:
        return 0.0
    return sum(votes) / len(votes)


def length_ratio_ok(src: str, tgt: str, max_ratio: float = 4.0) -> bool:
    a = len(whitespace_tokens(src))
    b = len(whitespace_tokens(tgt))
    if min(a, b) == 0:
        return False
    return max(a, b) / min(a, b) <= max_ratio


def _ambiguous_keys(pairs: Sequence[BitextPair]) -> Set[Tuple[str, str]]:
    targets_of: Dict[str, Set[str]] = defaultdict(set)
    sources_of: Dict[str, Set[str]] = defaultdict(set)
    for pair in pairs:
        targets_of[pair.source].add(pair.target)
        sources_of[pair.target].add(pair.source)
    return {
        (pair.source, pair.target)
        for pair in pairs
        if len(targets_of[pair.source]) > 1 or len(sources_of[pair.target]) > 1
    }


def one_to_many_prune(pairs: Sequence[BitextPair]) -> List[BitextPair]:
    """Drop every pair whose source or target has more than one distinct counterpart."""
    ambiguous = _ambiguous_keys(pairs)
    return [p for p in pairs if (p.source, p.target) not in ambiguous]


def single_sentence_ok(ann: Optional[AnnotatedSentence]) -> bool:
    return ann is not None and ann.sentence_count_in_doc == 1


def _roman_text(pair: BitextPair, side: str) -> Optional[str]:
    if side == "source":
        return pair.source
    if side == "target":
        return pair.target
    return None


def filter_pipeline(pairs: Sequence[BitextPair], annotations: Annotations, cfg: FilterConfig) -> FilterResult:
    """
    dedup -> roman script -> length ratio -> one-to-many -> single sentence.
    Rules are judged on the deduplicated corpus; a pair is attributed to the
    first rule that rejects it. Output keeps input order.
    """
    by_id = _as_index(annotations)
    removed = {rule: 0 for rule in RULES}

    unique = dedup(pairs)
    removed["dedup"] = len(pairs) - len(unique)
    ambiguous = _ambiguous_keys(unique) if cfg.enforce_one_to_one else set()

    survivors = []
    for pair in unique:
        text = _roman_text(pair, cfg.roman_side)
        if text is not None and roman_fraction(text) > cfg.roman_fraction_max:
            removed["roman_script"] += 1
        elif cfg.length_ratio_max is not None and not length_ratio_ok(pair.source, pair.target, cfg.length_ratio_max):
            removed["length_ratio"] += 1
        elif (pair.source, pair.target) in ambiguous:
            removed["one_to_many"] += 1
        elif cfg.enforce_single_sentence and not single_sentence_ok(by_id.get(pair.id)):
            removed["single_sentence"] += 1
        else:
            survivors.append(pair)

    report = FilterReport(input_size=len(pairs), counts_removed_by_rule=removed, survivors=len(survivors))
    logger.info(f"Filtered {len(pairs)} pairs -> {len(survivors)} survivors; removed {removed}")
    return FilterResult(pairs=survivors, report=report)


def synthetic_quality_filter(
    pairs: Sequence[BitextPair],
    annotations: Annotations,
    min_loglik: float = -1.0,
) -> FilterResult:
    """Keep synthetic pairs with avg_logprob >= min_loglik whose source is a single sentence."""
    by_id = _as_index(annotations)
    removed = {"avg_logprob": 0, "single_sentence": 0}
    kept = []
    for pair in pairs:
        if "avg_logprob" not in pair.sidecar:
            raise SidecarMissingError("avg_logprob", pair.id)
        if pair.sidecar["avg_logprob"] < min_loglik:
            removed["avg_logprob"] += 1
        elif not single_sentence_ok(by_id.get(pair.id)):
            removed["single_sentence"] += 1
        else:
            kept.append(pair)
    report = FilterReport(input_size=len(pairs), counts_removed_by_rule=removed, survivors=len(kept))
    logger.info(f"Synthetic quality filter kept {len(kept)} of {len(pairs)} pairs")
    return FilterResult(pairs=kept, report=report)
