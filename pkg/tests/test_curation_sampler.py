import unittest
from fractions import Fraction

from lalita_curate.bitext import BitextPair
from lalita_curate.config import CurationConfig
from lalita_curate.curation_sampler import (
    STANDARD_CONFIGURATION_SETS,
    ClusteredCorpus,
    baseline_proportional,
    configuration_name,
    enumerate_configurations,
    largest_remainder,
    random_sample,
    sample_configuration,
    stepwise_order,
    token_budget,
)
from lalita_curate.errors import ConfigError, SamplingError


def corpus_of(sizes, prefix="r", synthetic=False) -> ClusteredCorpus:
    """Cluster c holds sizes[c] pairs; scores decrease with the index inside a cluster."""
    pairs, scores, labels = [], [], []
    for c, size in enumerate(sizes):
        for i in range(size):
            pairs.append(BitextPair(id=f"{prefix}{c}-{i}", source="w " * (i % 3 + 1), target="t"))
            scores.append(c * 100.0 - i)
            labels.append(c)
    return ClusteredCorpus.build(pairs, scores, labels, len(sizes), synthetic=synthetic)


class TestConfigurations(unittest.TestCase):
    def test_permutation_counts(self):
        self.assertEqual(len(enumerate_configurations((25, 25, 25, 25))), 1)
        self.assertEqual(len(enumerate_configurations((70, 10, 10, 10))), 4)
        self.assertEqual(len(enumerate_configurations((60, 20, 20, 0))), 12)
        self.assertEqual(sum(len(enumerate_configurations(s)) for s in STANDARD_CONFIGURATION_SETS), 61)

    def test_each_standard_set(self):
        expected = {
            (25, 25, 25, 25): 1, (70, 10, 10, 10): 4, (40, 40, 10, 10): 6,
            (33.34, 33.34, 33.34, 0): 4, (60, 20, 20, 0): 12, (70, 15, 15, 0): 12,
            (50, 50, 0, 0): 6, (75, 25, 0, 0): 12, (100, 0, 0, 0): 4,
        }
        self.assertEqual(set(STANDARD_CONFIGURATION_SETS), set(expected))
        for multiset, count in expected.items():
            configs = enumerate_configurations(multiset)
            self.assertEqual(len(configs), count, str(multiset))
            self.assertEqual(len(set(configs)), count, str(multiset))

    def test_sorted_and_named(self):
        configs = enumerate_configurations((50, 50, 0, 0))
        self.assertEqual(configs, sorted(configs))
        self.assertEqual(configuration_name(configs[0]), "0_0_50_50")
        self.assertEqual(configuration_name((33.34, 33.34, 33.34, 0)), "33.34_33.34_33.34_0")

    def test_bad_sum(self):
        with self.assertRaises(ConfigError):
            enumerate_configurations((50, 40, 0, 0))

    def test_largest_remainder(self):
        thirds = [Fraction(1, 3)] * 3
        self.assertEqual(largest_remainder(thirds, 100), [34, 33, 33])
        cfg = CurationConfig(percents=(33.34, 33.34, 33.34, 0), tds=100)
        self.assertEqual(largest_remainder(cfg.exact_shares(), 100), [34, 33, 33, 0])
        quotas = largest_remainder([Fraction(7, 10), Fraction(1, 10), Fraction(1, 10), Fraction(1, 10)], 33)
        self.assertEqual(sum(quotas), 33)
        self.assertEqual(quotas, [23, 4, 3, 3])


class TestSampleConfiguration(unittest.TestCase):
    def test_top_scores_per_cluster(self):
        corpus = corpus_of([10, 10, 10, 10])
        result = sample_configuration(corpus, None, CurationConfig(percents=(40, 40, 10, 10), tds=20))
        ids = [p.id for p in result.pairs]
        self.assertEqual(ids[:8], [f"r0-{i}" for i in range(8)])
        self.assertEqual(ids[16:18], ["r2-0", "r2-1"])
        self.assertEqual(len(ids), 20)
        self.assertEqual([t.quota for t in result.manifest.clusters], [8, 8, 2, 2])
        self.assertEqual(result.manifest.name, "40_40_10_10")

    def test_all_from_one_cluster(self):
        corpus = corpus_of([5, 5, 5, 5])
        result = sample_configuration(corpus, None, CurationConfig(percents=(100, 0, 0, 0), tds=5))
        self.assertTrue(all(p.id.startswith("r0-") for p in result.pairs))

    def test_deficit_filled_from_synthetic(self):
        corpus = corpus_of([2, 10, 10, 10])
        synthetic = corpus_of([10, 0, 0, 0], prefix="s", synthetic=True)
        result = sample_configuration(corpus, synthetic, CurationConfig(percents=(50, 50, 0, 0), tds=10))
        take = result.manifest.clusters[0]
        self.assertEqual((take.quota, take.real, take.synthetic), (5, 2, 3))
        for t in result.manifest.clusters:
            self.assertEqual(t.real + t.synthetic, t.quota)
        first = [p.id for p in result.pairs[:5]]
        # both corpora rank 0-0 and 0-1 alike; real entries were collected first
        self.assertEqual(first, ["r0-0", "s0-0", "r0-1", "s0-1", "s0-2"])
        self.assertEqual(len(result.pairs), 10)

    def test_shortfall_reported(self):
        corpus = corpus_of([2, 10, 10, 10])
        cfg = CurationConfig(percents=(50, 50, 0, 0), tds=10)
        with self.assertRaises(SamplingError) as ctx:
            sample_configuration(corpus, None, cfg)
        self.assertEqual(ctx.exception.shortfall, {0: 3})
        small = corpus_of([1, 0, 0, 0], prefix="s", synthetic=True)
        with self.assertRaises(SamplingError) as ctx:
            sample_configuration(corpus, small, cfg)
        self.assertEqual(ctx.exception.shortfall, {0: 2})
        no_aug = CurationConfig(percents=(50, 50, 0, 0), tds=10, allow_augmentation=False)
        with self.assertRaises(SamplingError):
            sample_configuration(corpus, corpus_of([10, 0, 0, 0], prefix="s", synthetic=True), no_aug)

    def test_cluster_count_mismatch(self):
        with self.assertRaises(ConfigError):
            sample_configuration(corpus_of([5, 5, 5]), None, CurationConfig(percents=(25, 25, 25, 25), tds=4))

    def test_three_clusters(self):
        result = sample_configuration(corpus_of([5, 5, 5]), None, CurationConfig(percents=(60, 20, 20), tds=5))
        self.assertEqual([t.quota for t in result.manifest.clusters], [3, 1, 1])

    def test_token_budget(self):
        pairs = [BitextPair(id="a", source="one two", target="x"), BitextPair(id="b", source="three", target="y z  w")]
        budget = token_budget(pairs)
        self.assertEqual((budget.source, budget.target), (3, 4))


class TestBaselines(unittest.TestCase):
    def test_proportional_follows_fit_counts(self):
        corpus = corpus_of([10, 10, 10, 10])
        result = baseline_proportional(corpus, 10, fit_counts=[20, 40, 20, 20])
        self.assertEqual([t.quota for t in result.manifest.clusters], [2, 4, 2, 2])
        self.assertEqual(result.manifest.percents, [20.0, 40.0, 20.0, 20.0])

    def test_proportional_quotas_at_scale(self):
        fit_counts = [2183, 2515, 2889, 2413]
        corpus = corpus_of([21830, 25150, 28890, 24130])
        result = baseline_proportional(corpus, 100000, fit_counts=fit_counts)
        self.assertEqual([t.quota for t in result.manifest.clusters], [21830, 25150, 28890, 24130])
        self.assertEqual(len(result.pairs), 100000)

    def test_proportional_single_pair_goes_to_largest_share(self):
        corpus = corpus_of([2, 2, 2, 2])
        result = baseline_proportional(corpus, 1, fit_counts=[2183, 2515, 2889, 2413])
        self.assertEqual([t.quota for t in result.manifest.clusters], [0, 0, 1, 0])
        self.assertEqual([p.id for p in result.pairs], ["r2-0"])

    def test_random_sample(self):
        pairs = [BitextPair(id=str(i), source="a", target="b") for i in range(50)]
        a = random_sample(pairs, 10, seed=1)
        self.assertEqual(a, random_sample(pairs, 10, seed=1))
        self.assertNotEqual(a, random_sample(pairs, 10, seed=2))
        self.assertEqual(len({p.id for p in a}), 10)
        self.assertEqual([int(p.id) for p in a], sorted(int(p.id) for p in a))
        with self.assertRaises(SamplingError):
            random_sample(pairs, 51)


class TestStepwiseOrder(unittest.TestCase):
    def setUp(self):
        self.items = corpus_of([4, 3, 3]).items

    def test_increasing_and_decreasing(self):
        inc = stepwise_order(self.items, "incpca", increment=4)
        scores = [i.score for i in inc.items]
        self.assertEqual(scores, sorted(scores))
        self.assertEqual(inc.cut_points, [4, 8, 10])
        dec = stepwise_order(self.items, "decpca", increment=5)
        self.assertEqual([i.score for i in dec.items], sorted(scores, reverse=True))
        self.assertEqual(dec.cut_points, [5, 10])

    def test_random_order_is_seeded_permutation(self):
        a = stepwise_order(self.items, "rs", increment=3, seed=9)
        b = stepwise_order(self.items, "rs", increment=3, seed=9)
        self.assertEqual([i.pair.id for i in a.items], [i.pair.id for i in b.items])
        self.assertEqual(sorted(i.pair.id for i in a.items), sorted(i.pair.id for i in self.items))

    def test_bad_arguments(self):
        with self.assertRaises(ConfigError):
            stepwise_order(self.items, "sideways")
        with self.assertRaises(ConfigError):
            stepwise_order(self.items, "incpca", increment=0)


if __name__ == "__main__":
    unittest.main()
