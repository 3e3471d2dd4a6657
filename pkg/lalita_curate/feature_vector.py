from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from loguru import logger

from lalita_curate.conllu_ingest import NER_CATEGORIES, UPOS_TAGS, AnnotatedSentence
from lalita_curate.errors import FeatureError
from lalita_curate.utils import canonical_json, format_number, sha256_text

GROUP_ORDER = ("Statistical", "Lexical", "NamedEntity", "POS", "DepRel", "UMF")
NLM_FEATURE = "nlm_ppl"
SLM_FEATURE = "slm_ppl"
LENGTH_FEATURE = "sentenceLength"
NO_UMF = "NoUMF"
PERPLEXITY_FEATURES = (NLM_FEATURE, SLM_FEATURE)


def feature_sort_key(name: str) -> Tuple[str, str]:
    return (name.casefold(), name)


def umf_names(feats: Mapping[str, str]) -> List[str]:
    """`Case=Acc,Dat` yields `Case_Acc` and `Case_Dat`."""
    names = []
    for key, value in feats.items():
        for part in value.split(","):
            if part:
                names.append(f"{key}_{part}")
    return names


class FeatureGroup(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    features: Tuple[str, ...]


class FeatureSchema(BaseModel):
    """Ordered feature registry: fixed group order, alphabetical inside each group."""
    model_config = ConfigDict(frozen=True)

    groups: Tuple[FeatureGroup, ...]

    @model_validator(mode="after")
    def _check(self):
        if tuple(g.name for g in self.groups) != GROUP_ORDER:
            raise ValueError(f"groups must be {GROUP_ORDER}")
        names = [n for g in self.groups for n in g.features]
        if len(names) != len(set(names)):
            duplicated = sorted(n for n, c in Counter(names).items() if c > 1)
            raise ValueError(f"feature names must be unique, duplicated: {duplicated}")
        return self

    @property
    def names(self) -> List[str]:
        return [n for g in self.groups for n in g.features]

    @property
    def dimension(self) -> int:
        return sum(len(g.features) for g in self.groups)

    @property
    def index(self) -> Dict[str, int]:
        return {n: i for i, n in enumerate(self.names)}

    @property
    def has_nlm(self) -> bool:
        return NLM_FEATURE in self.group("Statistical")

    def group(self, name: str) -> Tuple[str, ...]:
        for g in self.groups:
            if g.name == name:
                return g.features
        raise KeyError(name)

    @property
    def schema_hash(self) -> str:
        return sha256_text(canonical_json(self.model_dump(mode="json")))

    def to_payload(self) -> Dict:
        payload = self.model_dump(mode="json")
        payload["dimension"] = self.dimension
        return payload

    @classmethod
    def from_payload(cls, payload: Mapping) -> "FeatureSchema":
        schema = cls(groups=payload["groups"])
        stored = payload.get("schema_hash")
        if stored is not None and stored != schema.schema_hash:
            raise FeatureError("Schema artifact hash does not match its content")
        return schema


class FeatureVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    values: Tuple[float, ...]
    schema_hash: str


def build_schema(corpus: Sequence[AnnotatedSentence], has_nlm: bool) -> FeatureSchema:
    """
    NamedEntity and POS groups are fixed inventories; DepRel and UMF are the
    labels observed in `corpus` (UMF always carries NoUMF).
    """
    if not corpus:
        raise FeatureError("Cannot build a feature schema from an empty corpus")

    deprels = set()
    umf = {NO_UMF}
    for ann in corpus:
        for token in ann.tokens:
            deprels.add(token.deprel)
            umf.update(umf_names(token.feats))

    statistical = [SLM_FEATURE] + ([NLM_FEATURE] if has_nlm else [])
    groups = (
        FeatureGroup(name="Statistical", features=tuple(sorted(statistical, key=feature_sort_key))),
        FeatureGroup(name="Lexical", features=(LENGTH_FEATURE,)),
        FeatureGroup(name="NamedEntity", features=tuple(sorted(NER_CATEGORIES, key=feature_sort_key))),
        FeatureGroup(name="POS", features=tuple(sorted(UPOS_TAGS, key=feature_sort_key))),
        FeatureGroup(name="DepRel", features=tuple(sorted(deprels, key=feature_sort_key))),
        FeatureGroup(name="UMF", features=tuple(sorted(umf, key=feature_sort_key))),
    )
    schema = FeatureSchema(groups=groups)
    logger.info(
        f"Built feature schema: dimension={schema.dimension} "
        f"(deprel={len(deprels)}, umf={len(umf)}, nlm={has_nlm})"
    )
    return schema


def _fixed_position(index: Mapping[str, int], name: str, sentence_id: str) -> int:
    position = index.get(name)
    if position is None:
        raise FeatureError(f"Sentence '{sentence_id}': label '{name}' is not part of the feature schema")
    return position


def _bump(values: np.ndarray, index: Mapping[str, int], name: str, unseen: Optional[Counter]):
    position = index.get(name)
    if position is None:
        if unseen is not None:
            unseen[name] += 1
        return
    values[position] += 1


def vectorize(
    ann: AnnotatedSentence,
    schema: FeatureSchema,
    slm_ppl: float,
    nlm_ppl: Optional[float] = None,
    unseen: Optional[Counter] = None,
) -> FeatureVector:
    """
    Count features of one sentence against `schema`. Labels the schema does
    not know are skipped and tallied in `unseen`.
    """
    if schema.has_nlm and nlm_ppl is None:
        raise FeatureError(f"Sentence '{ann.id}': schema expects nlm_ppl but none was supplied")
    if not schema.has_nlm and nlm_ppl is not None:
        raise FeatureError(f"Sentence '{ann.id}': schema has no nlm_ppl feature")

    index = schema.index
    values = np.zeros(schema.dimension, dtype=np.float64)
    values[index[SLM_FEATURE]] = slm_ppl
    if nlm_ppl is not None:
        values[index[NLM_FEATURE]] = nlm_ppl
    values[index[LENGTH_FEATURE]] = len(ann.tokens)

    for category, _, _ in ann.entity_spans():
        values[_fixed_position(index, category, ann.id)] += 1
    for token in ann.tokens:
        values[_fixed_position(index, token.upos, ann.id)] += 1
        _bump(values, index, token.deprel, unseen)
        names = umf_names(token.feats)
        if not names:
            values[index[NO_UMF]] += 1
        for name in names:
            _bump(values, index, name, unseen)

    return FeatureVector(id=ann.id, values=tuple(float(v) for v in values), schema_hash=schema.schema_hash)


def vectorize_many(
    sentences: Sequence[AnnotatedSentence],
    schema: FeatureSchema,
    slm_ppl: Mapping[str, float],
    nlm_ppl: Optional[Mapping[str, float]] = None,
) -> List[FeatureVector]:
    unseen: Counter = Counter()
    vectors = []
    for ann in sentences:
        if ann.id not in slm_ppl:
            raise FeatureError(f"No slm_ppl value for sentence '{ann.id}'")
        nlm = None
        if schema.has_nlm:
            if nlm_ppl is None or ann.id not in nlm_ppl:
                raise FeatureError(f"No nlm_ppl value for sentence '{ann.id}'")
            nlm = nlm_ppl[ann.id]
        vectors.append(vectorize(ann, schema, slm_ppl[ann.id], nlm, unseen))
    if unseen:
        logger.warning(
            f"Ignored {sum(unseen.values())} occurrences of {len(unseen)} labels unknown to the schema: "
            f"{sorted(unseen)[:10]}"
        )
    return vectors


def as_matrix(vectors: Sequence[FeatureVector]) -> np.ndarray:
    if not vectors:
        return np.zeros((0, 0))
    return np.array([v.values for v in vectors], dtype=np.float64)


def vector_rows(vectors: Iterable[FeatureVector]) -> Iterable[List[str]]:
    for v in vectors:
        yield [v.id] + [format_number(x) for x in v.values]


def read_vectors(path: Path, schema: FeatureSchema) -> List[FeatureVector]:
    """Read `id<TAB>v1...vD` rows written for `schema`."""
    vectors = []
    schema_hash = schema.schema_hash
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != schema.dimension + 1:
                raise FeatureError(
                    f"{path}: line {line_no} has {len(cols) - 1} values, schema dimension is {schema.dimension}"
                )
            try:
                values = tuple(float(x) for x in cols[1:])
            except ValueError as e:
                raise FeatureError(f"{path}: line {line_no}: {e}")
            vectors.append(FeatureVector(id=cols[0], values=values, schema_hash=schema_hash))
    return vectors
