import unittest
import shutil
import tempfile
from pathlib import Path

from lalita_curate.bitext import (
    BitextPair,
    attach_sidecars,
    bitext_rows,
    check_unique_ids,
    format_sidecar_field,
    parse_sidecar_field,
    read_bitext,
    read_sidecar_file,
)
from lalita_curate.errors import BitextFormatError, DuplicateIdError


class TestBitextFiles(unittest.TestCase):
    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_read_with_inline_sidecar(self):
        path = self.test_dir / "bitext.tsv"
        path.write_text(
            "p1\tthe cat sat\tबिल्ली बैठी\n"
            "\n"
            "p2\train falls\tबारिश\tnlm_ppl=31.5;avg_logprob=-0.4\n",
            encoding="utf-8",
        )
        pairs = read_bitext(path)
        self.assertEqual([p.id for p in pairs], ["p1", "p2"])
        self.assertEqual(pairs[0].sidecar, {})
        self.assertEqual(pairs[1].sidecar, {"nlm_ppl": 31.5, "avg_logprob": -0.4})

    def test_column_count_error_names_line(self):
        path = self.test_dir / "bad.tsv"
        path.write_text("p1\ta\tb\np2\tonly two\n", encoding="utf-8")
        with self.assertRaises(BitextFormatError) as ctx:
            read_bitext(path)
        self.assertEqual(ctx.exception.line_no, 2)

    def test_sidecar_value_must_be_numeric(self):
        with self.assertRaises(BitextFormatError):
            parse_sidecar_field("nlm_ppl=high", 3)
        self.assertEqual(parse_sidecar_field("_"), {})

    def test_sidecar_files_override_inline(self):
        pairs = [
            BitextPair(id="p1", source="a", target="b", sidecar={"nlm_ppl": 10.0}),
            BitextPair(id="p2", source="c", target="d"),
        ]
        path = self.test_dir / "nlm.tsv"
        path.write_text("p1\tnlm_ppl=12\np2\tnlm_ppl=20.25\norphan\tnlm_ppl=1\n", encoding="utf-8")
        merged = attach_sidecars(pairs, [read_sidecar_file(path)])
        self.assertEqual(merged[0].sidecar["nlm_ppl"], 12.0)
        self.assertEqual(merged[1].sidecar["nlm_ppl"], 20.25)
        self.assertEqual(pairs[0].sidecar["nlm_ppl"], 10.0)

    def test_rows_keep_sidecar_column(self):
        pairs = [
            BitextPair(id="p1", source="a", target="b"),
            BitextPair(id="p2", source="c", target="d", sidecar={"b": 2.0, "a": 0.5}),
        ]
        rows = list(bitext_rows(pairs))
        self.assertEqual(rows[0], ["p1", "a", "b"])
        self.assertEqual(rows[1], ["p2", "c", "d", "a=0.5;b=2"])
        self.assertEqual(format_sidecar_field({}), "")

    def test_duplicate_ids(self):
        check_unique_ids(["a", "b"], "bitext")
        with self.assertRaises(DuplicateIdError) as ctx:
            check_unique_ids(["a", "b", "a"], "bitext")
        self.assertEqual(ctx.exception.duplicates, ["a"])


if __name__ == "__main__":
    unittest.main()
