import io
import unittest
from pathlib import Path

from pydantic import ValidationError

from lalita_curate.bitext import BitextPair
from lalita_curate.conllu_ingest import (
    Token,
    index_annotations,
    join_bitext,
    parse_conllu,
    read_conllu,
    read_conllu_many,
    to_conllu,
)
from lalita_curate.errors import ConlluParseError, DuplicateIdError

FIXTURES = Path(__file__).parent / "fixtures"


def row(*cols) -> str:
    return "\t".join(str(c) for c in cols) + "\n"


def block(sent_id: str, *rows: str) -> str:
    return f"# sent_id = {sent_id}\n" + "".join(rows) + "\n"


def parse(text: str):
    return parse_conllu(io.BytesIO(text.encode("utf-8")))


class TestParseConllu(unittest.TestCase):
    def test_kovind_fixture(self):
        (ann,) = read_conllu(FIXTURES / "kovind.conllu")
        self.assertEqual(ann.id, "kovind")
        self.assertEqual(len(ann.tokens), 24)
        self.assertEqual(ann.sentence_count_in_doc, 1)
        self.assertEqual(ann.tokens[8].form, "administered")
        self.assertEqual(ann.tokens[8].head, 0)
        self.assertEqual(ann.tokens[7].feats["Tense"], "Past")
        self.assertEqual(ann.entity_spans(), [("PER", 2, 4), ("PER", 16, 18), ("ORG", 23, 23)])

    def test_consecutive_blocks_form_one_document(self):
        text = (
            block("d1", row(1, "Rain", "rain", "NOUN", "_", "_", 2, "nsubj", "_", "_"),
                  row(2, "fell", "fall", "VERB", "_", "_", 0, "root", "_", "_"))
            + block("d1", row(1, "Stop", "stop", "VERB", "_", "_", 0, "root", "_", "_"))
            + block("d2", row(1, "Go", "go", "VERB", "_", "_", 0, "root", "_", "_"))
        )
        docs = parse(text)
        self.assertEqual([d.id for d in docs], ["d1", "d2"])
        self.assertEqual(docs[0].block_sizes, (2, 1))
        self.assertEqual(docs[0].sentence_count_in_doc, 2)
        # second block is renumbered after the first
        self.assertEqual(docs[0].tokens[2].id, 3)
        self.assertEqual(docs[0].tokens[2].head, 0)
        self.assertEqual(docs[0].tokens[0].head, 2)

    def test_ranges_and_empty_nodes_skipped(self):
        text = block(
            "s",
            row("1-2", "don't", "_", "_", "_", "_", "_", "_", "_", "_"),
            row(1, "do", "do", "AUX", "_", "_", 3, "aux", "_", "_"),
            row(2, "n't", "not", "PART", "_", "_", 3, "advmod", "_", "_"),
            row(3, "go", "go", "VERB", "_", "_", 0, "root", "_", "_"),
            row("3.1", "went", "go", "VERB", "_", "_", "_", "_", "_", "_"),
        )
        (ann,) = parse(text)
        self.assertEqual([t.form for t in ann.tokens], ["do", "n't", "go"])

    def test_orphan_inside_tag_opens_entity(self):
        text = block(
            "s",
            row(1, "Delhi", "Delhi", "PROPN", "_", "_", 0, "root", "_", "NER=I-LOC"),
            row(2, "Goa", "Goa", "PROPN", "_", "_", 1, "conj", "_", "NER=B-LOC"),
            row(3, "UNESCO", "UNESCO", "PROPN", "_", "_", 1, "conj", "_", "NER=I-ORG"),
        )
        (ann,) = parse(text)
        self.assertEqual(ann.entity_spans(), [("LOC", 1, 1), ("LOC", 2, 2), ("ORG", 3, 3)])

    def test_errors_carry_line_and_sent_id(self):
        bad_upos = block("s1", row(1, "x", "x", "NOPE", "_", "_", 0, "root", "_", "_"))
        with self.assertRaises(ConlluParseError) as ctx:
            parse(bad_upos)
        self.assertEqual(ctx.exception.line_no, 2)
        self.assertEqual(ctx.exception.sent_id, "s1")

        cases = [
            "1\tx\tx\tNOUN\t_\t_\t0\troot\t_\t_\n\n",  # no sent_id
            block("s", row(1, "x", "x", "NOUN", "_", "_", 0, "root", "_", "_"),
                  row(3, "y", "y", "NOUN", "_", "_", 1, "dep", "_", "_")),
            block("s", row(1, "x", "x", "NOUN", "_", "_", 5, "root", "_", "_")),
            block("s", row(1, "x", "x", "NOUN", "_", "_", 0, "_", "_", "_")),
            block("s", row(1, "x", "x", "NOUN", "_", "Case=Acc|Case=Dat", 0, "root", "_", "_")),
            block("s", row(1, "x", "x", "NOUN", "_", "_", 0, "root", "_", "NER=B-FOO")),
            block("s", "1\tx\tx\tNOUN\t_\n"),
        ]
        for text in cases:
            with self.assertRaises(ConlluParseError):
                parse(text)

    def test_head_must_be_ascii_decimal(self):
        for head in ("²", "٣", "01", "-1", "1.0"):
            text = block("s", row(1, "x", "x", "NOUN", "_", "_", head, "root", "_", "_"))
            with self.assertRaises(ConlluParseError, msg=head):
                parse(text)

    def test_invalid_utf8(self):
        with self.assertRaises(ConlluParseError):
            parse_conllu(io.BytesIO(b"# sent_id = s\n1\t\xff\tx\tNOUN\t_\t_\t0\troot\t_\t_\n\n"))

    def test_serialize_then_parse(self):
        original = read_conllu(FIXTURES / "kovind.conllu")
        again = parse(to_conllu(original[0]))
        self.assertEqual(again, original)


class TestToken(unittest.TestCase):
    def make(self, **fields) -> Token:
        values = dict(id=1, form="x", upos="NOUN", head=0, deprel="root")
        values.update(fields)
        return Token(**values)

    def test_valid_token(self):
        token = self.make(feats={"Number": "Sing"}, ner="B-PER")
        self.assertEqual(token.upos, "NOUN")
        self.assertEqual(token.ner, "B-PER")

    def test_unknown_upos(self):
        with self.assertRaises(ValidationError):
            self.make(upos="FOO")

    def test_invalid_ner(self):
        for tag in ("B-FOO", "X-PER", "O", "PER"):
            with self.assertRaises(ValidationError, msg=tag):
                self.make(ner=tag)

    def test_empty_feats_entries(self):
        with self.assertRaises(ValidationError):
            self.make(feats={"Case": ""})
        with self.assertRaises(ValidationError):
            self.make(feats={"": "Acc"})


class TestJoin(unittest.TestCase):
    def test_join_reports_both_sides(self):
        (ann,) = read_conllu(FIXTURES / "kovind.conllu")
        pairs = [
            BitextPair(id="kovind", source="President ...", target="राष्ट्रपति ..."),
            BitextPair(id="other", source="a", target="b"),
        ]
        other_ann = ann.model_copy(update={"id": "orphan"})
        result = join_bitext(pairs, [ann, other_ann])
        self.assertEqual([p.id for p, _ in result.records], ["kovind"])
        self.assertEqual(result.unmatched_pairs, ["other"])
        self.assertEqual(result.unmatched_annotations, ["orphan"])

    def test_records_follow_bitext_order(self):
        (ann,) = read_conllu(FIXTURES / "kovind.conllu")
        ids = ["c", "a", "d", "b"]
        pairs = [BitextPair(id=i, source=f"s {i}", target=f"t {i}") for i in ids]
        annotations = [ann.model_copy(update={"id": i}) for i in ("a", "b", "c", "d")]
        result = join_bitext(pairs, annotations)
        self.assertEqual([p.id for p, _ in result.records], ids)
        self.assertEqual([a.id for _, a in result.records], ids)
        self.assertEqual(result.unmatched_pairs, [])
        self.assertEqual(result.unmatched_annotations, [])

    def test_duplicate_annotation_ids(self):
        (ann,) = read_conllu(FIXTURES / "kovind.conllu")
        with self.assertRaises(DuplicateIdError):
            index_annotations([ann, ann])


class TestReadMany(unittest.IsolatedAsyncioTestCase):
    async def test_order_follows_paths(self):
        path = FIXTURES / "kovind.conllu"
        results = await read_conllu_many([path, path])
        self.assertEqual(len(results), 2)
        self.assertEqual(results[0], results[1])


if __name__ == "__main__":
    unittest.main()
