import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from src.config import OUTPUT_DIR_ENV, NumericsConfig, load_run_config, parse_run_config
from src.errors import ConfigError
from src.ingest_config import ConfigIngestorFactory, JsonConfigIngestor
from tests.fixtures import CAT

BASE = {
    "seed": 7,
    "map": {
        "matrix": [[2, 1], [1, 1]],
        "perturbations": [{"amplitude": 0.05, "direction": [1.0, 0.0], "frequency": [1, 0]}],
    },
    "potential": {"kind": "fourier", "terms": [[1, 0, 0.1, 0.0]]},
    "numerics": {"period": 8},
}


class TestConfigIngestion(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, name: str, text: str) -> str:
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    def test_factory(self):
        self.assertIsInstance(ConfigIngestorFactory.get_config_ingestor(".json"), JsonConfigIngestor)
        with self.assertRaises(ConfigError):
            ConfigIngestorFactory.get_config_ingestor(".yaml")

    def test_malformed_json_reports_the_position(self):
        path = self._write("bad.json", '{"seed": 1,\n "map": }')
        with self.assertRaises(ConfigError) as ctx:
            JsonConfigIngestor().ingest(path)
        self.assertEqual(ctx.exception.details["line"], 2)

    def test_missing_file_and_non_object(self):
        with self.assertRaises(ConfigError):
            JsonConfigIngestor().ingest(str(self.dir / "absent.json"))
        with self.assertRaises(ConfigError):
            JsonConfigIngestor().ingest(self._write("list.json", "[1, 2]"))

    def test_output_dir_override(self):
        path = self._write("run.json", json.dumps(BASE))
        self.assertEqual(load_run_config(path).output_dir, "results")
        with mock.patch.dict(os.environ, {OUTPUT_DIR_ENV: str(self.dir / "elsewhere")}):
            self.assertEqual(load_run_config(path).output_dir, str(self.dir / "elsewhere"))


class TestRunConfig(unittest.TestCase):
    def test_valid_config(self):
        config = parse_run_config(BASE)
        spec = config.map.to_map_spec()
        self.assertEqual(spec.linear, CAT)
        self.assertFalse(spec.is_linear)
        self.assertEqual(config.numerics.period, 8)
        self.assertEqual(config.numerics.grid_n, 1024)
        self.assertEqual(config.potential.terms, [(1, 0, 0.1, 0.0)])

    def test_negative_tolerance_names_the_key(self):
        raw = dict(BASE, numerics={"conjugacy_tol": -1.0})
        with self.assertRaises(ConfigError) as ctx:
            parse_run_config(raw)
        self.assertEqual(ctx.exception.details["pointer"], "numerics.conjugacy_tol")

    def test_unknown_keys_and_bad_matrices(self):
        with self.assertRaises(ConfigError):
            parse_run_config(dict(BASE, extra=1))
        with self.assertRaises(ConfigError) as ctx:
            parse_run_config(dict(BASE, map={"matrix": [[2, 0], [0, 1]]}))
        self.assertEqual(ctx.exception.details["pointer"], "map.matrix")

    def test_period_and_range_limits(self):
        with self.assertRaises(ConfigError):
            parse_run_config(dict(BASE, numerics={"period": 15}))
        with self.assertRaises(ConfigError):
            parse_run_config(dict(BASE, numerics={"m_range": [3, -3]}))
        with self.assertRaises(ConfigError):
            parse_run_config(dict(BASE, potential={"kind": "gibbs"}))

    def test_leaves_must_fit_the_chart(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_run_config(dict(BASE, numerics={"chart_delta": 0.05, "leaf_half_length": 0.08}))
        self.assertEqual(ctx.exception.details["pointer"], "numerics")
        config = parse_run_config(dict(BASE, numerics={"chart_delta": 0.05, "leaf_half_length": 0.05}))
        self.assertEqual(config.numerics.chart_delta, 0.05)

    def test_cone_settings(self):
        self.assertEqual(NumericsConfig().cone, (128, 0.3, 0.1))
        raw = dict(BASE, numerics={"cone_grid_n": 64, "cone_halfwidth": 0.25})
        self.assertEqual(parse_run_config(raw).numerics.cone, (64, 0.25, 0.1))


if __name__ == "__main__":
    unittest.main()
