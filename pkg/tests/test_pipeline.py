import asyncio
import json
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
import yaml

from lalita_curate.config import load_config
from lalita_curate.conllu_ingest import to_conllu
from lalita_curate.demo import fixture_sentence, generate_demo
from lalita_curate.errors import ConfigError, StageError
from lalita_curate.pipeline import STAGES, required_stages, run_pipeline, score_external


def average_ranks(values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    ranks[order] = np.arange(len(values), dtype=np.float64)
    for value in np.unique(values):
        tied = values == value
        ranks[tied] = ranks[tied].mean()
    return ranks


def spearman(a, b) -> float:
    return float(np.corrcoef(average_ranks(a), average_ranks(b))[0, 1])


def read_rows(path: Path):
    with open(path, "r", encoding="utf-8") as f:
        return [line.rstrip("\n").split("\t") for line in f if line.strip()]


class TestDemoRun(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.test_dir = Path(tempfile.mkdtemp())
        cls.config_path = generate_demo(cls.test_dir / "demo")
        cls.config = load_config(str(cls.config_path))
        cls.result = asyncio.run(run_pipeline(cls.config))
        cls.out = cls.config.paths.output_dir

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.test_dir)

    def test_all_stages_ran(self):
        self.assertEqual(self.result.executed, list(STAGES))
        self.assertEqual(self.result.resumed, [])
        for name in ("filtered.tsv", "filter_report.json", "slm.json", "schema.json", "vectors.npy",
                     "score_model.json", "loadings.tsv", "scores.tsv", "cluster_model.json", "clusters.tsv",
                     "synthetic/scores.tsv", "samples/manifest.json", "orders/incpca.tsv", "report.json",
                     "reports/score_histogram.tsv", "reports/token_budgets.tsv"):
            self.assertTrue((self.out / name).exists(), name)
            self.assertIn(name, self.result.artifacts)

    def test_filter_removed_planted_violations(self):
        report = json.loads((self.out / "filter_report.json").read_text(encoding="utf-8"))
        for rule in ("dedup", "roman_script", "length_ratio", "one_to_many", "single_sentence"):
            self.assertGreater(report[rule], 0, rule)
        self.assertEqual(report["input"], 1000)
        self.assertEqual(report["survivors"], len(read_rows(self.out / "filtered.tsv")))

    def test_artifacts_carry_hashes(self):
        schema = json.loads((self.out / "schema.json").read_text(encoding="utf-8"))
        model = json.loads((self.out / "score_model.json").read_text(encoding="utf-8"))
        self.assertEqual(model["schema_hash"], schema["schema_hash"])
        self.assertEqual(model["config_hash"], schema["config_hash"])
        self.assertIn("nlm_ppl", schema["groups"][0]["features"])

    def test_score_tracks_sentence_length(self):
        vectors = {row[0]: row for row in read_rows(self.out / "vectors.tsv")}
        schema = json.loads((self.out / "schema.json").read_text(encoding="utf-8"))
        names = [n for g in schema["groups"] for n in g["features"]]
        position = names.index("sentenceLength") + 1
        scores = read_rows(self.out / "scores.tsv")
        lengths = [float(vectors[row[0]][position]) for row in scores]
        self.assertGreaterEqual(spearman([float(row[1]) for row in scores], lengths), 0.8)

    def test_fixture_sentences_order_by_complexity(self):
        fixtures = [fixture_sentence("short", 3, 0), fixture_sentence("medium", 40, 2), fixture_sentence("long", 72, 6)]
        conllu_path = self.test_dir / "fixtures.conllu"
        conllu_path.write_text("".join(to_conllu(s) for s in fixtures), encoding="utf-8")
        sidecar = self.test_dir / "fixtures_nlm.tsv"
        sidecar.write_text("".join(f"{s.id}\tnlm_ppl=30\n" for s in fixtures), encoding="utf-8")
        scored = {s.id: s.lalita for s in score_external(self.config, conllu_path, [sidecar])}
        self.assertLess(scored["short"], scored["medium"])
        self.assertLess(scored["medium"], scored["long"])

    def test_clusters_are_contiguous_score_ranges(self):
        model = json.loads((self.out / "cluster_model.json").read_text(encoding="utf-8"))
        self.assertEqual(model["k"], 4)
        self.assertEqual(sum(model["counts"]), len(read_rows(self.out / "scores.tsv")))
        self.assertTrue(-1.0 <= model["silhouette"] <= 1.0)
        scores = {row[0]: float(row[1]) for row in read_rows(self.out / "scores.tsv")}
        by_cluster = {}
        for pair_id, label in read_rows(self.out / "clusters.tsv"):
            by_cluster.setdefault(int(label), []).append(scores[pair_id])
        for c in range(1, 4):
            self.assertLess(max(by_cluster[c - 1]), min(by_cluster[c]))

    def test_samples_match_manifest(self):
        manifest = json.loads((self.out / "samples/manifest.json").read_text(encoding="utf-8"))
        names = {e["name"] for e in manifest["samples"]} | {e["name"] for e in manifest["skipped"]}
        self.assertTrue({"0_0_0_100", "25_25_25_25", "100_0_0_0"} <= names)
        for entry in manifest["samples"]:
            rows = read_rows(self.out / entry["file"])
            self.assertEqual(len(rows), entry["tds"], entry["file"])
            for take in entry.get("clusters", []):
                self.assertEqual(take["real"] + take["synthetic"], take["quota"])
        randoms = [e for e in manifest["samples"] if e["name"].startswith("baseline_random")]
        self.assertEqual(len(randoms), 3)

    def test_orders_and_cut_points(self):
        cuts = json.loads((self.out / "orders/cut_points.json").read_text(encoding="utf-8"))["cut_points"]
        n = len(read_rows(self.out / "filtered.tsv"))
        for strategy in ("incpca", "decpca", "rs"):
            rows = read_rows(self.out / f"orders/{strategy}.tsv")
            self.assertEqual(len(rows), n)
            self.assertEqual(cuts[strategy][-1], n)
        inc = [float(r[1]) for r in read_rows(self.out / "orders/incpca.tsv")]
        self.assertEqual(inc, sorted(inc))

    def test_report_contents(self):
        report = json.loads((self.out / "report.json").read_text(encoding="utf-8"))
        shares = [c["share"] for c in report["clusters"]["clusters"]]
        self.assertAlmostEqual(sum(shares), 100.0, places=9)
        self.assertEqual(sum(b["count"] for b in report["clusters"]["score_histogram"]),
                         sum(c["count"] for c in report["clusters"]["clusters"]))
        for histogram in report["clusters"]["feature_histograms"]["VERB"].values():
            self.assertAlmostEqual(sum(histogram.values()), 100.0, places=9)
        self.assertTrue(all(0.0 <= m <= 1.0 for _, m in report["loadings"]))
        self.assertEqual(report["profile"]["length_threshold"], 23)
        budgets = read_rows(self.out / "reports/token_budgets.tsv")
        self.assertEqual(budgets[0][0], "filtered")


class TestPipelineRuns(unittest.IsolatedAsyncioTestCase):
    async def asyncSetUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    async def asyncTearDown(self):
        shutil.rmtree(self.test_dir)

    def demo(self, name: str) -> Path:
        return generate_demo(self.test_dir / name, n_pairs=400, n_synthetic=200, seed=3)

    async def test_identical_inputs_give_identical_artifacts(self):
        a = await run_pipeline(load_config(str(self.demo("a"))))
        b = await run_pipeline(load_config(str(self.demo("b"))))
        self.assertEqual(a.artifacts, b.artifacts)
        self.assertEqual((a.output_dir / "artifacts.json").read_bytes(), (b.output_dir / "artifacts.json").read_bytes())

    async def test_rerun_resumes_every_stage(self):
        config_path = self.demo("a")
        first = await run_pipeline(load_config(str(config_path)))
        second = await run_pipeline(load_config(str(config_path)))
        self.assertEqual(second.executed, [])
        self.assertEqual(second.resumed, first.executed)
        self.assertEqual(second.artifacts, first.artifacts)

    async def test_changed_section_reruns_downstream_only(self):
        config_path = self.demo("a")
        await run_pipeline(load_config(str(config_path)), until="cluster")
        result = await run_pipeline(load_config(str(config_path), ["cluster.k=3"]), until="cluster")
        self.assertEqual(result.executed, ["cluster"])
        self.assertIn("filter", result.resumed)
        model = json.loads((result.output_dir / "cluster_model.json").read_text(encoding="utf-8"))
        self.assertEqual(model["k"], 3)

    async def test_missing_conllu_fails_before_any_artifact(self):
        config_path = self.demo("a")
        data = yaml.safe_load(config_path.read_text(encoding="utf-8"))
        data["paths"]["conllu"] = "missing.conllu"
        config_path.write_text(yaml.safe_dump(data), encoding="utf-8")
        with self.assertRaises(ConfigError):
            load_config(str(config_path))
        self.assertFalse((config_path.parent / "output").exists())

    async def test_stage_failure_names_stage_and_keeps_artifacts(self):
        config_path = self.demo("a")
        synthetic = config_path.parent / "synthetic.tsv"
        rows = read_rows(synthetic)
        synthetic.write_text("".join("\t".join(r[:3]) + "\n" for r in rows), encoding="utf-8")
        with self.assertRaises(StageError) as ctx:
            await run_pipeline(load_config(str(config_path)))
        self.assertEqual(ctx.exception.stage, "synthetic")
        self.assertEqual(ctx.exception.exit_code, 2)
        self.assertTrue((config_path.parent / "output" / "scores.tsv").exists())

    async def test_partial_run(self):
        result = await run_pipeline(load_config(str(self.demo("a"))), until="schema")
        self.assertEqual(result.executed, ["filter", "lm", "schema"])
        self.assertFalse((result.output_dir / "vectors.tsv").exists())


class TestStageSelection(unittest.TestCase):
    def test_dependencies(self):
        self.assertEqual(required_stages("vectorize"), ["filter", "lm", "schema", "vectorize"])
        self.assertEqual(required_stages("order"), ["filter", "lm", "schema", "vectorize", "score_fit", "score", "cluster", "order"])
        self.assertNotIn("order", required_stages("sample"))
        self.assertEqual(required_stages(None), list(STAGES))
        with self.assertRaises(ConfigError):
            required_stages("train")


if __name__ == "__main__":
    unittest.main()
