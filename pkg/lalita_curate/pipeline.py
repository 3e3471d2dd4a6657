"""End-to-end curation pipeline.

Stages run in a fixed order; each writes its artifacts through the
ArtifactWriter and is skipped on a rerun when its fingerprint (config section
plus input hashes) and its outputs are unchanged.
"""
import asyncio
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Set, Tuple

from pydantic import BaseModel, Field
from loguru import logger

from lalita_curate.artifacts import ArtifactWriter
from lalita_curate.bitext import (
    BitextPair,
    attach_sidecars,
    bitext_rows,
    check_unique_ids,
    read_bitext,
    read_sidecar_file,
)
from lalita_curate.bitext_filter import filter_pipeline, synthetic_quality_filter
from lalita_curate.config import PipelineConfig, config_hash, section_hash
from lalita_curate.conllu_ingest import AnnotatedSentence, index_annotations, read_conllu, read_conllu_many
from lalita_curate.curation_sampler import (
    ClusteredCorpus,
    baseline_proportional,
    random_sample,
    sample_configuration,
    stepwise_order,
    token_budget,
)
from lalita_curate.errors import (
    ConfigError,
    CurationError,
    DataError,
    SamplingError,
    SidecarMissingError,
    StageError,
)
from lalita_curate.feature_vector import NLM_FEATURE, FeatureSchema, build_schema, read_vectors, vector_rows, vectorize_many, as_matrix
from lalita_curate.jenks_cluster import ClusterModel, assign_clusters, jenks_breaks, silhouette_details
from lalita_curate.lalita_score import (
    ScoreModel,
    ScoredSentence,
    export_loadings,
    fit_score_model,
    read_scored,
    read_scores,
    score_many,
    score_rows,
)
from lalita_curate.ngram_lm import load_model, sentence_perplexities, train_on_annotations
from lalita_curate.report import (
    corpus_profile,
    external_distribution,
    feature_histogram_rows,
    report_clusters,
    score_histogram_rows,
)
from lalita_curate.utils import format_number, whitespace_tokens

STAGES = ("filter", "lm", "schema", "vectorize", "score_fit", "score", "cluster", "synthetic", "sample", "order", "report")
DEPENDENCIES: Dict[str, Tuple[str, ...]] = {
    "filter": (),
    "lm": ("filter",),
    "schema": ("filter",),
    "vectorize": ("lm", "schema"),
    "score_fit": ("vectorize",),
    "score": ("score_fit",),
    "cluster": ("score",),
    "synthetic": ("cluster",),
    "sample": ("synthetic",),
    "order": ("cluster",),
    "report": ("sample", "order"),
}


class PipelineResult(BaseModel):
    output_dir: Path
    executed: List[str] = Field(default_factory=list)
    resumed: List[str] = Field(default_factory=list)
    artifacts: Dict[str, str] = Field(default_factory=dict)


def required_stages(target: Optional[str]) -> List[str]:
    if target is None:
        return list(STAGES)
    if target not in DEPENDENCIES:
        raise ConfigError(f"Unknown stage '{target}' (expected one of {', '.join(STAGES)})")
    needed: Set[str] = set()
    pending = [target]
    while pending:
        stage = pending.pop()
        if stage not in needed:
            needed.add(stage)
            pending.extend(DEPENDENCIES[stage])
    return [s for s in STAGES if s in needed]


def _annotations_for(pairs: Sequence[BitextPair], index: Mapping[str, AnnotatedSentence]) -> List[AnnotatedSentence]:
    missing = [p.id for p in pairs if p.id not in index]
    if missing:
        raise DataError(f"{len(missing)} pairs have no annotation, e.g. {', '.join(missing[:5])}")
    return [index[p.id] for p in pairs]


def _nlm_values(pairs: Sequence[BitextPair], schema: FeatureSchema) -> Optional[Dict[str, float]]:
    if not schema.has_nlm:
        return None
    values = {}
    for pair in pairs:
        if NLM_FEATURE not in pair.sidecar:
            raise SidecarMissingError(NLM_FEATURE, pair.id)
        values[pair.id] = pair.sidecar[NLM_FEATURE]
    return values


def _read_table(path: Path) -> Dict[str, str]:
    table = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                key, value = line.rstrip("\n").split("\t", 1)
                table[key] = value
    return table


class Pipeline:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.output_dir = config.paths.output_dir
        self.writer = ArtifactWriter(self.output_dir, config_hash(config))
        self.executed: List[str] = []
        self.resumed: List[str] = []
        self.state: Dict[str, Any] = {}

    def out(self, relative: str) -> Path:
        return self.writer.path(relative)

    async def _stage(
        self,
        name: str,
        sections: Sequence[str],
        inputs: Sequence[Path],
        compute: Callable[[], Tuple[Any, List[Path], Optional[str]]],
        load: Callable[[], Any],
    ) -> Any:
        try:
            fingerprint = self.writer.fingerprint(name, section_hash(self.config, *sections), inputs)
            if self.writer.is_fresh(name, fingerprint):
                logger.info(f"Stage '{name}' is up to date; reusing its artifacts")
                result = await asyncio.to_thread(load)
                self.resumed.append(name)
                return result
            logger.info(f"Running stage '{name}'")
            result, outputs, schema_hash = await asyncio.to_thread(compute)
        except StageError:
            raise
        except Exception as e:
            logger.error(f"Stage '{name}' failed: {e}")
            raise StageError(name, e) from e
        self.writer.record(name, fingerprint, outputs, schema_hash)
        self.executed.append(name)
        logger.success(f"Stage '{name}' finished ({len(outputs)} artifacts)")
        return result

    async def _ingest(self):
        paths = self.config.paths
        try:
            pairs = await asyncio.to_thread(read_bitext, paths.bitext)
            check_unique_ids((p.id for p in pairs), "bitext")
            tables = [await asyncio.to_thread(read_sidecar_file, p) for p in paths.sidecars]
            self.state["pairs"] = attach_sidecars(pairs, tables)
            conllu_paths = [paths.conllu]
            if paths.synthetic_conllu is not None:
                conllu_paths.append(paths.synthetic_conllu)
            parsed = await read_conllu_many(conllu_paths)
            self.state["annotations"] = index_annotations(parsed[0])
            if paths.synthetic_conllu is not None:
                self.state["synthetic_annotations"] = index_annotations(parsed[1])
        except CurationError as e:
            logger.error(f"Stage 'ingest' failed: {e}")
            raise StageError("ingest", e) from e
        logger.info(f"Ingested {len(self.state['pairs'])} pairs and {len(self.state['annotations'])} annotations")

    # -- stages ---------------------------------------------------------

    async def _filter(self):
        paths = self.config.paths

        def compute():
            result = filter_pipeline(self.state["pairs"], self.state["annotations"], self.config.filter)
            outputs = [
                self.writer.save_tsv("filtered.tsv", bitext_rows(result.pairs)),
                self.writer.save_json("filter_report.json", result.report.to_json()),
            ]
            return result.pairs, outputs, None

        def load():
            return read_bitext(self.out("filtered.tsv"))

        inputs = [paths.bitext, paths.conllu, *paths.sidecars]
        self.state["filtered"] = await self._stage("filter", ("filter",), inputs, compute, load)

    async def _lm(self):
        def compute():
            sentences = _annotations_for(self.state["filtered"], self.state["annotations"])
            model = train_on_annotations(sentences, self.config.lm.order)
            ppl = sentence_perplexities(model, sentences)
            outputs = [
                self.writer.save_json("slm.json", model.to_payload()),
                self.writer.save_tsv("slm_ppl.tsv", ([pair_id, format_number(v)] for pair_id, v in ppl.items())),
            ]
            return (model, ppl), outputs, None

        def load():
            table = _read_table(self.out("slm_ppl.tsv"))
            return load_model(self.out("slm.json")), {k: float(v) for k, v in table.items()}

        inputs = [self.out("filtered.tsv"), self.config.paths.conllu]
        self.state["lm"], self.state["slm_ppl"] = await self._stage("lm", ("lm",), inputs, compute, load)

    async def _schema(self):
        def compute():
            filtered = self.state["filtered"]
            sentences = _annotations_for(filtered, self.state["annotations"])
            has_nlm = bool(filtered) and all(NLM_FEATURE in p.sidecar for p in filtered)
            schema = build_schema(sentences, has_nlm)
            outputs = [self.writer.save_json("schema.json", schema.to_payload(), schema_hash=schema.schema_hash)]
            return schema, outputs, schema.schema_hash

        def load():
            return FeatureSchema.from_payload(self.writer.load_json("schema.json"))

        inputs = [self.out("filtered.tsv"), self.config.paths.conllu]
        self.state["schema"] = await self._stage("schema", (), inputs, compute, load)

    async def _vectorize(self):
        schema: FeatureSchema = self.state["schema"]

        def compute():
            filtered = self.state["filtered"]
            sentences = _annotations_for(filtered, self.state["annotations"])
            vectors = vectorize_many(sentences, schema, self.state["slm_ppl"], _nlm_values(filtered, schema))
            outputs = [
                self.writer.save_tsv("vectors.tsv", vector_rows(vectors)),
                self.writer.save_npy("vectors.npy", as_matrix(vectors)),
                self.writer.save_json("vectors.ids.json", {"ids": [v.id for v in vectors]}, schema_hash=schema.schema_hash),
            ]
            return vectors, outputs, schema.schema_hash

        def load():
            return read_vectors(self.out("vectors.tsv"), schema)

        inputs = [self.out("schema.json"), self.out("slm_ppl.tsv"), self.out("filtered.tsv"), self.config.paths.conllu]
        self.state["vectors"] = await self._stage("vectorize", (), inputs, compute, load)

    async def _score_fit(self):
        schema: FeatureSchema = self.state["schema"]

        def compute():
            model = fit_score_model(self.state["vectors"], schema, self.config.score.components)
            rows = ([name, format_number(magnitude)] for name, magnitude in export_loadings(model))
            outputs = [
                self.writer.save_json("score_model.json", model.to_payload(), schema_hash=model.schema_hash),
                self.writer.save_tsv("loadings.tsv", rows),
            ]
            return model, outputs, model.schema_hash

        def load():
            return ScoreModel.from_payload(self.writer.load_json("score_model.json"))

        inputs = [self.out("vectors.tsv"), self.out("schema.json")]
        self.state["score_model"] = await self._stage("score_fit", ("score",), inputs, compute, load)

    async def _score(self):
        def compute():
            scored = score_many(self.state["score_model"], self.state["vectors"])
            return scored, [self.writer.save_tsv("scores.tsv", score_rows(scored))], self.state["schema"].schema_hash

        def load():
            return read_scored(self.out("scores.tsv"))

        inputs = [self.out("score_model.json"), self.out("vectors.tsv")]
        self.state["scores"] = await self._stage("score", (), inputs, compute, load)

    async def _cluster(self):
        cfg = self.config.cluster

        def compute():
            scored: List[ScoredSentence] = self.state["scores"]
            values = [s.lalita for s in scored]
            model = jenks_breaks(values, cfg.k)
            labels = assign_clusters(model, values)
            if len(set(labels)) >= 2:
                value, used = silhouette_details(values, labels, cfg.silhouette_sample, cfg.seed)
                model = model.with_silhouette(value, used)
                logger.info(f"Silhouette over {used} points: {value:.4f}")
            outputs = [
                self.writer.save_json("cluster_model.json", model.model_dump(mode="json")),
                self.writer.save_tsv("clusters.tsv", ([s.id, str(c)] for s, c in zip(scored, labels))),
            ]
            return (model, labels), outputs, None

        def load():
            payload = self.writer.load_json("cluster_model.json")
            payload.pop("config_hash", None)
            table = _read_table(self.out("clusters.tsv"))
            return ClusterModel(**payload), [int(table[s.id]) for s in self.state["scores"]]

        inputs = [self.out("scores.tsv")]
        self.state["cluster_model"], self.state["labels"] = await self._stage("cluster", ("cluster",), inputs, compute, load)

    async def _synthetic(self):
        paths = self.config.paths
        if paths.synthetic_bitext is None:
            logger.info("No synthetic corpus configured; skipping stage 'synthetic'")
            self.state["synthetic"] = None
            return
        schema: FeatureSchema = self.state["schema"]

        def compute():
            pairs = read_bitext(paths.synthetic_bitext)
            check_unique_ids((p.id for p in pairs), "synthetic bitext")
            pairs = attach_sidecars(pairs, [read_sidecar_file(p) for p in paths.synthetic_sidecars])
            annotations = self.state["synthetic_annotations"]
            result = synthetic_quality_filter(pairs, annotations, self.config.filter.synthetic_loglik_min)
            kept = result.pairs
            sentences = _annotations_for(kept, annotations)
            ppl = sentence_perplexities(self.state["lm"], sentences)
            vectors = vectorize_many(sentences, schema, ppl, _nlm_values(kept, schema))
            scored = score_many(self.state["score_model"], vectors)
            labels = assign_clusters(self.state["cluster_model"], [s.lalita for s in scored])
            outputs = [
                self.writer.save_tsv("synthetic/filtered.tsv", bitext_rows(kept)),
                self.writer.save_json("synthetic/filter_report.json", result.report.to_json()),
                self.writer.save_tsv("synthetic/scores.tsv", score_rows(scored)),
                self.writer.save_tsv("synthetic/clusters.tsv", ([s.id, str(c)] for s, c in zip(scored, labels))),
            ]
            return (kept, scored, labels), outputs, schema.schema_hash

        def load():
            kept = read_bitext(self.out("synthetic/filtered.tsv"))
            scored = read_scored(self.out("synthetic/scores.tsv"))
            table = _read_table(self.out("synthetic/clusters.tsv"))
            return kept, scored, [int(table[s.id]) for s in scored]

        inputs = [
            paths.synthetic_bitext, paths.synthetic_conllu, *paths.synthetic_sidecars,
            self.out("slm.json"), self.out("schema.json"), self.out("score_model.json"), self.out("cluster_model.json"),
        ]
        self.state["synthetic"] = await self._stage("synthetic", ("filter",), inputs, compute, load)

    def _real_corpus(self) -> ClusteredCorpus:
        scored = self.state["scores"]
        return ClusteredCorpus.build(
            self.state["filtered"], [s.lalita for s in scored], self.state["labels"], self.state["cluster_model"].k,
        )

    def _synthetic_corpus(self) -> Optional[ClusteredCorpus]:
        if self.state.get("synthetic") is None:
            return None
        kept, scored, labels = self.state["synthetic"]
        return ClusteredCorpus.build(kept, [s.lalita for s in scored], labels, self.state["cluster_model"].k, synthetic=True)

    async def _sample(self):
        cfg = self.config.sampling

        def compute():
            corpus = self._real_corpus()
            synthetic = self._synthetic_corpus()
            samples, skipped, outputs = [], [], []

            def emit(relative: str, pairs: Sequence[BitextPair], entry: Dict):
                outputs.append(self.writer.save_tsv(relative, bitext_rows(pairs)))
                entry["file"] = relative
                samples.append(entry)

            def skip(name: str, tds: int, error: SamplingError):
                logger.warning(f"Skipping {name} at tds={tds}: {error}")
                skipped.append({"name": name, "tds": tds, "shortfall": {str(c): n for c, n in error.shortfall.items()}})

            for curation in cfg.curation_configs():
                if len(curation.percents) != corpus.k:
                    raise ConfigError(f"Configuration {curation.name} has {len(curation.percents)} shares, cluster.k is {corpus.k}")
                try:
                    result = sample_configuration(corpus, synthetic, curation)
                except SamplingError as e:
                    skip(curation.name, curation.tds, e)
                    continue
                emit(f"samples/{curation.name}_{curation.tds}.tsv", result.pairs, result.manifest.model_dump(mode="json"))

            for tds in cfg.tds:
                if "proportional" in cfg.baselines:
                    try:
                        result = baseline_proportional(corpus, tds, self.state["cluster_model"].counts)
                    except SamplingError as e:
                        skip("baseline_proportional", tds, e)
                    else:
                        emit(f"samples/baseline_proportional_{tds}.tsv", result.pairs, result.manifest.model_dump(mode="json"))
                if "random" in cfg.baselines:
                    for run in range(cfg.random_runs):
                        seed = cfg.seed + run
                        try:
                            pairs = random_sample(self.state["filtered"], tds, seed)
                        except SamplingError as e:
                            skip(f"baseline_random_run{run}", tds, e)
                            continue
                        entry = {
                            "name": f"baseline_random_run{run}",
                            "tds": tds,
                            "seed": seed,
                            "token_budget": token_budget(pairs).model_dump(),
                        }
                        emit(f"samples/baseline_random_{tds}_run{run}.tsv", pairs, entry)

            manifest = {"samples": samples, "skipped": skipped}
            outputs.append(self.writer.save_json("samples/manifest.json", manifest))
            logger.info(f"Materialized {len(samples)} corpora, skipped {len(skipped)}")
            return manifest, outputs, None

        def load():
            return self.writer.load_json("samples/manifest.json")

        inputs = [self.out("filtered.tsv"), self.out("scores.tsv"), self.out("clusters.tsv"), self.out("cluster_model.json")]
        if self.state.get("synthetic") is not None:
            inputs += [self.out("synthetic/filtered.tsv"), self.out("synthetic/scores.tsv"), self.out("synthetic/clusters.tsv")]
        self.state["manifest"] = await self._stage("sample", ("sampling",), inputs, compute, load)

    async def _order(self):
        cfg = self.config.sampling

        def compute():
            items = self._real_corpus().items
            cut_points, outputs = {}, []
            for strategy in cfg.stepwise_strategies:
                order = stepwise_order(items, strategy, cfg.increment, cfg.seed)
                rows = ([item.pair.id, format_number(item.score)] for item in order.items)
                outputs.append(self.writer.save_tsv(f"orders/{strategy}.tsv", rows))
                cut_points[strategy] = order.cut_points
            outputs.append(self.writer.save_json("orders/cut_points.json", {"increment": cfg.increment, "cut_points": cut_points}))
            return cut_points, outputs, None

        def load():
            return self.writer.load_json("orders/cut_points.json")["cut_points"]

        inputs = [self.out("filtered.tsv"), self.out("scores.tsv"), self.out("clusters.tsv")]
        self.state["orders"] = await self._stage("order", ("sampling",), inputs, compute, load)

    async def _report(self):
        cfg = self.config.report
        paths = self.config.paths
        if not cfg.enabled:
            logger.info("Reports disabled; skipping stage 'report'")
            return

        def compute():
            scored = self.state["scores"]
            model: ClusterModel = self.state["cluster_model"]
            filtered = self.state["filtered"]
            analysis = report_clusters(
                [s.lalita for s in scored], self.state["labels"], model,
                self.state["vectors"], self.state["schema"], cfg.histogram_features,
            )
            profile = corpus_profile(
                _annotations_for(filtered, self.state["annotations"]), cfg.length_threshold, cfg.absent_relations,
            )
            budget_rows = [["filtered", str(len(filtered))] + [str(v) for v in token_budget(filtered).model_dump().values()]]
            for entry in self.state["manifest"]["samples"]:
                budget = entry["token_budget"]
                budget_rows.append([entry["file"], str(entry["tds"]), str(budget["source"]), str(budget["target"])])

            payload = {
                "clusters": analysis.model_dump(mode="json"),
                "silhouette": model.silhouette,
                "silhouette_sample_size": model.silhouette_sample_size,
                "profile": profile.model_dump(mode="json"),
                "loadings": [[name, value] for name, value in export_loadings(self.state["score_model"])],
                "filter": self.writer.load_json("filter_report.json"),
            }
            if paths.external_scores is not None:
                lengths = None
                if paths.external_bitext is not None:
                    lengths = {p.id: len(whitespace_tokens(p.source)) for p in read_bitext(paths.external_bitext)}
                external = external_distribution(read_scores(paths.external_scores), model, lengths)
                payload["external"] = external.model_dump(mode="json")

            outputs = [
                self.writer.save_json("report.json", payload, schema_hash=self.state["schema"].schema_hash),
                self.writer.save_tsv("reports/score_histogram.tsv", score_histogram_rows(analysis)),
                self.writer.save_tsv("reports/feature_histograms.tsv", feature_histogram_rows(analysis)),
                self.writer.save_tsv("reports/token_budgets.tsv", budget_rows),
            ]
            return payload, outputs, self.state["schema"].schema_hash

        def load():
            return self.writer.load_json("report.json")

        inputs = [
            self.out("scores.tsv"), self.out("clusters.tsv"), self.out("cluster_model.json"), self.out("vectors.tsv"),
            self.out("score_model.json"), self.out("samples/manifest.json"), self.out("filter_report.json"),
            paths.conllu,
        ]
        inputs += [p for p in (paths.external_scores, paths.external_bitext) if p is not None]
        self.state["report"] = await self._stage("report", ("report",), inputs, compute, load)

    async def run(self, until: Optional[str] = None) -> PipelineResult:
        stages = required_stages(until)
        logger.info(f"Pipeline stages: {', '.join(stages)}")
        await self._ingest()
        for name in stages:
            await getattr(self, f"_{name}")()
        artifacts = {}
        for stage in STAGES:
            entry = self.writer.index["stages"].get(stage, {})
            artifacts.update(entry.get("outputs", {}))
        logger.success(
            f"Pipeline finished: {len(self.executed)} stages run, {len(self.resumed)} resumed, "
            f"artifacts in {self.output_dir}"
        )
        return PipelineResult(
            output_dir=self.output_dir, executed=self.executed, resumed=self.resumed, artifacts=artifacts,
        )


async def run_pipeline(config: PipelineConfig, until: Optional[str] = None) -> PipelineResult:
    return await Pipeline(config).run(until)


def score_external(
    config: PipelineConfig,
    conllu_path: Path,
    sidecar_paths: Sequence[Path] = (),
) -> List[ScoredSentence]:
    """Score an annotated set with the language model, schema and score model of a finished run."""
    writer = ArtifactWriter(config.paths.output_dir, config_hash(config))
    for name in ("slm.json", "schema.json", "score_model.json"):
        if not writer.path(name).exists():
            raise ConfigError(f"Artifact {name} not found in {writer.output_dir}; run the pipeline first")
    lm = load_model(writer.path("slm.json"))
    schema = FeatureSchema.from_payload(writer.load_json("schema.json"))
    model = ScoreModel.from_payload(writer.load_json("score_model.json"))

    sentences = read_conllu(conllu_path)
    sidecars: Dict[str, Dict[str, float]] = {}
    for path in sidecar_paths:
        for key, values in read_sidecar_file(path).items():
            sidecars.setdefault(key, {}).update(values)
    nlm = None
    if schema.has_nlm:
        nlm = {}
        for ann in sentences:
            if NLM_FEATURE not in sidecars.get(ann.id, {}):
                raise SidecarMissingError(NLM_FEATURE, ann.id)
            nlm[ann.id] = sidecars[ann.id][NLM_FEATURE]
    ppl = sentence_perplexities(lm, sentences)
    vectors = vectorize_many(sentences, schema, ppl, nlm)
    return score_many(model, vectors)
