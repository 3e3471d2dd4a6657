"""Standardize -> row-normalize -> PCA scoring model.

The first principal component of the processed feature matrix is the
complexity score. Its sign is fixed so that the sentenceLength loading is
nonnegative; every other component points its largest loading upward.
"""
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from loguru import logger

from lalita_curate.errors import ScoreModelError
from lalita_curate.feature_vector import LENGTH_FEATURE, FeatureSchema, FeatureVector, as_matrix
from lalita_curate.utils import format_number

CONSTANT_TOLERANCE = 1e-12


class ScoredSentence(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    lalita: float
    extra_components: Tuple[float, ...] = ()

    @property
    def components(self) -> Tuple[float, ...]:
        return (self.lalita,) + self.extra_components


class ScoreModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    schema_hash: str
    feature_names: List[str]
    kept: List[str]
    dropped: List[str]
    means: List[float]
    stds: List[float]
    center: List[float]
    components: List[List[float]]
    eigenvalues: List[float]
    explained_variance_ratio: List[float]
    row_normalized: bool
    sign_anchor: Optional[str]
    k_requested: int

    @property
    def k(self) -> int:
        return len(self.components)

    def kept_positions(self) -> List[int]:
        position = {name: i for i, name in enumerate(self.feature_names)}
        return [position[name] for name in self.kept]

    def to_payload(self) -> Dict:
        payload = self.model_dump(mode="json")
        payload.pop("schema_hash")
        return payload

    @classmethod
    def from_payload(cls, payload: Dict) -> "ScoreModel":
        data = {key: value for key, value in payload.items() if key != "config_hash"}
        return cls(**data)


def _orient(vector: np.ndarray, anchor: Optional[int]) -> np.ndarray:
    if anchor is not None and abs(vector[anchor]) > CONSTANT_TOLERANCE:
        return vector if vector[anchor] > 0 else -vector
    pivot = int(np.argmax(np.abs(vector)))
    return vector if vector[pivot] >= 0 else -vector


def _process(matrix: np.ndarray, means: np.ndarray, stds: np.ndarray, row_normalized: bool) -> np.ndarray:
    z = (matrix - means) / stds
    if row_normalized:
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        z = np.divide(z, norms, out=np.zeros_like(z), where=norms > 0)
    return z


def fit_score_model(vectors: Sequence[FeatureVector], schema: FeatureSchema, k: int = 10) -> ScoreModel:
    """
    Fit the scoring model on `vectors`:
      1. z-score each feature, dropping constant ones;
      2. L2-normalize each row (skipped when a single feature survives);
      3. eigendecompose the covariance of the centred result and keep the top k axes.
    """
    if k < 1:
        raise ScoreModelError(f"Number of components must be at least 1, got {k}")
    if len(vectors) < 2:
        raise ScoreModelError(f"Need at least 2 vectors to fit, got {len(vectors)}")
    schema_hash = schema.schema_hash
    for v in vectors:
        if v.schema_hash != schema_hash or len(v.values) != schema.dimension:
            raise ScoreModelError(f"Vector '{v.id}' does not conform to the schema")

    x = as_matrix(vectors)
    if len(np.unique(x, axis=0)) < 2:
        raise ScoreModelError("Need at least 2 distinct feature vectors to fit")

    names = schema.names
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    keep = std > CONSTANT_TOLERANCE * np.maximum(1.0, np.abs(mean))
    kept = [n for n, flag in zip(names, keep) if flag]
    dropped = [n for n, flag in zip(names, keep) if not flag]
    if not kept:
        raise ScoreModelError("Every feature is constant; nothing to fit")

    row_normalized = len(kept) > 1
    if not row_normalized:
        logger.warning(f"Only '{kept[0]}' varies; row normalization skipped")
    z = _process(x[:, keep], mean[keep], std[keep], row_normalized)

    center = z.mean(axis=0)
    centred = z - center
    cov = centred.T @ centred / len(z)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    total = float(eigvals.sum())
    if total <= 0.0:
        raise ScoreModelError("Processed feature matrix has zero variance")

    k_used = min(k, len(kept))
    if k_used < k:
        logger.warning(f"Requested {k} components but only {len(kept)} features survive; using {k_used}")

    anchor_name = LENGTH_FEATURE if LENGTH_FEATURE in kept else None
    anchor = kept.index(anchor_name) if anchor_name else None
    components = []
    for i in range(k_used):
        components.append(_orient(eigvecs[:, i], anchor if i == 0 else None))
    if anchor is None or abs(components[0][anchor]) <= CONSTANT_TOLERANCE:
        anchor_name = None

    model = ScoreModel(
        schema_hash=schema_hash,
        feature_names=names,
        kept=kept,
        dropped=dropped,
        means=mean[keep].tolist(),
        stds=std[keep].tolist(),
        center=center.tolist(),
        components=[c.tolist() for c in components],
        eigenvalues=eigvals[:k_used].tolist(),
        explained_variance_ratio=(eigvals[:k_used] / total).tolist(),
        row_normalized=row_normalized,
        sign_anchor=anchor_name,
        k_requested=k,
    )
    logger.info(
        f"Fitted score model on {len(vectors)} vectors: kept={len(kept)}, dropped={len(dropped)}, "
        f"k={k_used}, PC1 explains {model.explained_variance_ratio[0]:.4f}"
    )
    return model


def _check_vectors(model: ScoreModel, vectors: Sequence[FeatureVector]):
    for v in vectors:
        if len(v.values) != len(model.feature_names):
            raise ScoreModelError(
                f"Vector '{v.id}' has dimension {len(v.values)}, model expects {len(model.feature_names)}"
            )
        if v.schema_hash != model.schema_hash:
            raise ScoreModelError(f"Vector '{v.id}' was built for a different schema")


def score_many(model: ScoreModel, vectors: Sequence[FeatureVector]) -> List[ScoredSentence]:
    if not vectors:
        return []
    _check_vectors(model, vectors)
    x = as_matrix(vectors)[:, model.kept_positions()]
    z = _process(x, np.array(model.means), np.array(model.stds), model.row_normalized)
    projected = (z - np.array(model.center)) @ np.array(model.components).T
    return [
        ScoredSentence(id=v.id, lalita=float(row[0]), extra_components=tuple(float(c) for c in row[1:]))
        for v, row in zip(vectors, projected)
    ]


def score(model: ScoreModel, v: FeatureVector) -> ScoredSentence:
    return score_many(model, [v])[0]


def export_loadings(model: ScoreModel) -> List[Tuple[str, float]]:
    """|PC1| per schema feature, dropped features at 0, largest first."""
    magnitude = dict(zip(model.kept, (abs(c) for c in model.components[0])))
    rows = [(name, float(magnitude.get(name, 0.0))) for name in model.feature_names]
    position = {name: i for i, name in enumerate(model.feature_names)}
    return sorted(rows, key=lambda row: (-row[1], position[row[0]]))


def score_rows(scored: Sequence[ScoredSentence]) -> List[List[str]]:
    return [[s.id] + [format_number(c) for c in s.components] for s in scored]


def read_scores(path: Path) -> Dict[str, float]:
    """First score column of an `id<TAB>score[...]` file."""
    scores: Dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            cols = line.rstrip("\n").split("\t")
            if not line.strip():
                continue
            if len(cols) < 2:
                raise ScoreModelError(f"{path}: line {line_no} has no score column")
            try:
                scores[cols[0]] = float(cols[1])
            except ValueError:
                raise ScoreModelError(f"{path}: line {line_no}: score '{cols[1]}' is not a number")
    return scores


def read_scored(path: Path) -> List[ScoredSentence]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            cols = line.rstrip("\n").split("\t")
            values = [float(c) for c in cols[1:]]
            out.append(ScoredSentence(id=cols[0], lalita=values[0], extra_components=tuple(values[1:])))
    return out
