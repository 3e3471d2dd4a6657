import json
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

from lalita_curate.artifacts import INDEX_NAME, ArtifactWriter


class TestArtifactWriter(unittest.TestCase):
    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())
        self.writer = ArtifactWriter(self.test_dir, "cfg123")

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_json_is_stamped_and_canonical(self):
        path = self.writer.save_json("sub/model.json", {"b": 1, "a": [1.5]}, schema_hash="sch")
        text = path.read_text(encoding="utf-8")
        self.assertEqual(json.loads(text), {"a": [1.5], "b": 1, "config_hash": "cfg123", "schema_hash": "sch"})
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertEqual(list(path.parent.glob(".*.tmp")), [])

    def test_tsv(self):
        path = self.writer.save_tsv("rows.tsv", [["a", "1"], ["b", "2"]])
        self.assertEqual(path.read_text(encoding="utf-8"), "a\t1\nb\t2\n")
        self.assertEqual(self.writer.read_tsv("rows.tsv"), [["a", "1"], ["b", "2"]])
        with self.assertRaises(ValueError):
            self.writer.save_tsv("bad.tsv", [["a\tb"]])

    def test_npy_is_byte_stable(self):
        matrix = np.arange(6, dtype=np.float64).reshape(2, 3)
        first = self.writer.save_npy("m.npy", matrix).read_bytes()
        second = self.writer.save_npy("m.npy", matrix.copy()).read_bytes()
        self.assertEqual(first, second)
        np.testing.assert_array_equal(np.load(self.test_dir / "m.npy"), matrix)

    def test_resume_bookkeeping(self):
        source = self.test_dir / "input.txt"
        source.write_text("v1", encoding="utf-8")
        fp = self.writer.fingerprint("stage", "section", [source])
        self.assertFalse(self.writer.is_fresh("stage", fp))

        out = self.writer.save_tsv("out.tsv", [["x"]])
        self.writer.record("stage", fp, [out])
        self.assertTrue(self.writer.is_fresh("stage", fp))
        self.assertEqual(self.writer.outputs_of("stage"), ["out.tsv"])

        reopened = ArtifactWriter(self.test_dir, "cfg123")
        self.assertTrue(reopened.is_fresh("stage", fp))

        out.write_text("tampered\n", encoding="utf-8")
        self.assertFalse(reopened.is_fresh("stage", fp))

        source.write_text("v2", encoding="utf-8")
        self.assertNotEqual(self.writer.fingerprint("stage", "section", [source]), fp)
        self.assertNotEqual(self.writer.fingerprint("stage", "other", [source]), self.writer.fingerprint("stage", "section", [source]))

    def test_corrupt_index_starts_fresh(self):
        (self.test_dir / INDEX_NAME).write_text("{not json", encoding="utf-8")
        writer = ArtifactWriter(self.test_dir, "cfg123")
        self.assertEqual(writer.index["stages"], {})


if __name__ == "__main__":
    unittest.main()
