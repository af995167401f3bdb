import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from src.conjugacy import compute_conjugacy
from src.export import canonical_json, load_conjugacy_grid, load_json, save_conjugacy_grid, save_csv, save_json
from tests.fixtures import PERTURBED


class TestExport(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out_dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_csv_keeps_full_precision(self):
        df = pd.DataFrame({"x": [1.0 / 3.0, np.pi], "n": [1, 2]})
        path = save_csv("table", df, self.out_dir)
        back = pd.read_csv(path, float_precision="round_trip")
        self.assertEqual(list(back.columns), ["x", "n"])
        self.assertEqual(back["x"].tolist(), df["x"].tolist())

    def test_json_is_canonical(self):
        first = canonical_json({"b": np.float64(0.5), "a": [np.int64(1), 2]})
        second = canonical_json({"a": [1, 2], "b": 0.5})
        self.assertEqual(first, second)
        self.assertTrue(first.endswith("\n"))

    def test_json_timestamp(self):
        stamped = load_json(save_json("stamped", {"x": 1}, self.out_dir))
        self.assertIn("generated_at", stamped)
        plain = load_json(save_json("plain", {"x": 1}, self.out_dir, timestamp=False))
        self.assertEqual(plain, {"x": 1})

    def test_empty_name_is_rejected(self):
        with self.assertRaises(ValueError):
            save_json("", {}, self.out_dir)

    def test_conjugacy_grid(self):
        c = compute_conjugacy(PERTURBED, 256)
        path = save_conjugacy_grid("grid", c, self.out_dir)
        self.assertEqual(path.stat().st_size, 16 + 256 * 256 * 2 * 8)
        grid_n, residual, grid = load_conjugacy_grid(path)
        self.assertEqual(grid_n, 256)
        self.assertEqual(residual, c.residual)
        np.testing.assert_array_equal(grid, c.grid_displacement())


if __name__ == "__main__":
    unittest.main()
