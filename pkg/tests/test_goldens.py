import json
import tempfile
import unittest
from pathlib import Path

from src.export import load_json
from src.goldens import TOLERANCES_FILE, check_golden, compare_records, flatten, load_tolerances


class TestCompareRecords(unittest.TestCase):
    def test_flatten(self):
        flat = flatten({"a": {"b": [1, {"c": 2}]}, "generated_at": "now"})
        self.assertEqual(flat, {"a.b.0": 1, "a.b.1.c": 2})

    def test_numbers_within_tolerance(self):
        self.assertEqual(compare_records({"x": 1.0 + 1e-12}, {"x": 1.0}), [])
        self.assertEqual(len(compare_records({"x": 1.001}, {"x": 1.0})), 1)
        self.assertEqual(compare_records({"x": 1.001}, {"x": 1.0}, {"x": 1e-2}), [])

    def test_prefix_tolerances_apply_to_nested_fields(self):
        tolerances = {"leaf": 1e-2, "leaf.tv": 1e-6}
        self.assertEqual(compare_records({"leaf": {"mass": 0.505}}, {"leaf": {"mass": 0.5}}, tolerances), [])
        self.assertEqual(len(compare_records({"leaf": {"tv": 0.505}}, {"leaf": {"tv": 0.5}}, tolerances)), 1)

    def test_structure_and_exact_fields(self):
        self.assertEqual(len(compare_records({"x": 1}, {"y": 1})), 2)
        self.assertEqual(len(compare_records({"kind": "zero"}, {"kind": "phi_u"})), 1)
        self.assertEqual(len(compare_records({"ok": True}, {"ok": False})), 1)


class TestCheckGolden(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_missing_golden_is_recorded(self):
        result = check_golden("report", {"x": 1.5}, self.dir)
        self.assertTrue(result.recorded)
        self.assertTrue(result.passed)
        self.assertEqual(load_json(self.dir / "report.json"), {"x": 1.5})
        self.assertTrue(check_golden("report", {"x": 1.5}, self.dir).passed)

    def test_mismatch_fails_unless_exploratory(self):
        check_golden("report", {"x": 1.5}, self.dir)
        failed = check_golden("report", {"x": 2.5}, self.dir)
        self.assertFalse(failed.passed)
        self.assertEqual(failed.to_record()["mismatches"], ["x: 2.5 != 1.5"])
        self.assertTrue(check_golden("report", {"x": 2.5}, self.dir, exploratory=True).passed)

    def test_tolerances_file(self):
        self.assertEqual(load_tolerances(self.dir, "report"), {})
        (self.dir / TOLERANCES_FILE).write_text(json.dumps({"report": {"x": 1e-3}}), encoding="utf-8")
        self.assertEqual(load_tolerances(self.dir, "report"), {"x": 1e-3})
        self.assertEqual(load_tolerances(self.dir, "other"), {})
        check_golden("report", {"x": 1.5}, self.dir)
        self.assertTrue(check_golden("report", {"x": 1.5005}, self.dir).passed)
        self.assertFalse(check_golden("report", {"x": 1.502}, self.dir).passed)
        self.assertFalse(check_golden("report", {"x": 1.5005}, self.dir, tolerances={}).passed)


if __name__ == "__main__":
    unittest.main()
