import unittest
from pathlib import Path

import numpy as np

from lalita_curate.conllu_ingest import read_conllu
from lalita_curate.demo import fixture_sentence
from lalita_curate.errors import ReportError
from lalita_curate.feature_vector import build_schema, vectorize
from lalita_curate.jenks_cluster import assign_clusters, jenks_breaks
from lalita_curate.report import (
    corpus_profile,
    external_distribution,
    feature_histogram_rows,
    report_clusters,
    score_histogram_rows,
)

FIXTURES = Path(__file__).parent / "fixtures"


class TestReportClusters(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        shapes = [(3, 0), (8, 1), (12, 1), (20, 2), (27, 2), (33, 3), (40, 2), (52, 4), (61, 5), (72, 6)]
        cls.sentences = [fixture_sentence(f"f{n}", n, v) for n, v in shapes]
        cls.schema = build_schema(cls.sentences, has_nlm=False)
        cls.vectors = [vectorize(s, cls.schema, slm_ppl=50.0) for s in cls.sentences]
        # stand-in scores: token counts
        cls.scores = [float(n) for n, _ in shapes]
        cls.model = jenks_breaks(cls.scores, 4)
        cls.labels = assign_clusters(cls.model, cls.scores)

    def test_shares_and_histograms(self):
        report = report_clusters(self.scores, self.labels, self.model, self.vectors, self.schema, ["VERB", "sentenceLength"])
        self.assertEqual(report.k, 4)
        self.assertEqual(report.breaks, self.model.breaks)
        self.assertAlmostEqual(sum(c.share for c in report.clusters), 100.0, places=9)
        self.assertEqual(sum(b.count for b in report.score_histogram), len(self.scores))
        for feature in ("VERB", "sentenceLength"):
            for cluster, histogram in report.feature_histograms[feature].items():
                self.assertAlmostEqual(sum(histogram.values()), 100.0, places=9, msg=f"{feature}/{cluster}")
        top = report.clusters[-1]
        self.assertEqual(top.score_max, 72.0)
        self.assertGreater(top.mean_length, report.clusters[0].mean_length)

    def test_tsv_rows(self):
        report = report_clusters(self.scores, self.labels, self.model, self.vectors, self.schema, ["VERB"], bins=5)
        self.assertEqual(len(score_histogram_rows(report)), 5)
        rows = feature_histogram_rows(report)
        self.assertTrue(all(row[0] == "VERB" and len(row) == 4 for row in rows))

    def test_single_cluster(self):
        model = jenks_breaks(self.scores, 1)
        labels = assign_clusters(model, self.scores)
        report = report_clusters(self.scores, labels, model, self.vectors, self.schema, [])
        self.assertEqual(len(report.clusters), 1)
        self.assertEqual(report.clusters[0].share, 100.0)

    def test_unknown_feature(self):
        with self.assertRaises(ReportError):
            report_clusters(self.scores, self.labels, self.model, self.vectors, self.schema, ["adjectiveCount"])

    def test_length_mismatch(self):
        with self.assertRaises(ReportError):
            report_clusters(self.scores[:-1], self.labels, self.model, self.vectors, self.schema, [])


class TestProfiles(unittest.TestCase):
    def test_kovind_profile(self):
        profile = corpus_profile(read_conllu(FIXTURES / "kovind.conllu"))
        self.assertEqual(profile.size, 1)
        self.assertEqual(profile.length_mean, 24.0)
        self.assertEqual(profile.share_at_or_below_threshold, 0.0)
        self.assertEqual(profile.verb_distribution, {"1": 100.0})
        self.assertEqual(profile.share_lacking_relation, {"acl": 100.0, "advcl": 100.0, "conj": 100.0})

    def test_threshold_and_relations(self):
        sentences = [fixture_sentence("a", 3, 0), fixture_sentence("b", 23, 2), fixture_sentence("c", 40, 2)]
        profile = corpus_profile(sentences, length_threshold=23, absent_relations=["conj"])
        self.assertAlmostEqual(profile.share_at_or_below_threshold, 200.0 / 3)
        self.assertAlmostEqual(profile.share_lacking_relation["conj"], 100.0 / 3)
        self.assertEqual(profile.length_median, 23.0)

    def test_empty(self):
        with self.assertRaises(ReportError):
            corpus_profile([])

    def test_external_distribution(self):
        model = jenks_breaks([1.0, 2.0, 10.0, 11.0, 20.0, 21.0], 3)
        scores = {"t1": -5.0, "t2": 10.5, "t3": 30.0, "t4": 25.0}
        dist = external_distribution(scores, model, lengths={"t1": 4, "t2": 10, "t3": 30, "t4": 20})
        self.assertEqual(dist.counts, [1, 1, 2])
        self.assertEqual(dist.shares, [25.0, 25.0, 50.0])
        self.assertEqual(dist.mean_length, [4.0, 10.0, 25.0])
        self.assertIsNone(external_distribution(scores, model).mean_length)
        with self.assertRaises(ReportError):
            external_distribution({}, model)


if __name__ == "__main__":
    unittest.main()
