import json
import math
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from io import StringIO
from pathlib import Path

from src.cli import EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION, build_parser, run
from src.export import load_json
from src.goldens import compare_records, load_tolerances
from src.reductions import configure_workers

GOLDENS = Path(__file__).resolve().parents[1] / "goldens"
GOLDEN_RUNS = ("linear_zero", "linear_phi_u", "linear_fourier", "perturbed_zero", "perturbed_phi_u", "perturbed_fourier")

LINEAR_CONFIG = {
    "seed": 1,
    "map": {"matrix": [[2, 1], [1, 1]]},
    "potential": {"kind": "zero"},
    "numerics": {"period": 6, "coarse_period": 4, "grid_n": 256},
}


class TestCli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        configure_workers(1)
        self.tmp.cleanup()

    def _config(self, raw: dict) -> str:
        path = self.dir / "run.json"
        path.write_text(json.dumps(raw), encoding="utf-8")
        return str(path)

    def _run(self, *argv: str):
        out, err = StringIO(), StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = run(list(argv))
        return code, out.getvalue(), err.getvalue()

    def test_parser_knows_every_report(self):
        parser = build_parser()
        for name in ("verify", "conjugacy", "equilibrium", "exponents", "dimension", "leaf", "rigidity", "spectrum", "report"):
            self.assertEqual(parser.parse_args([name, "--config", "run.json"]).subcommand, name)

    def test_equilibrium_run_writes_artifacts(self):
        out = self.dir / "out"
        code, stdout, _ = self._run("equilibrium", "--config", self._config(LINEAR_CONFIG), "--out", str(out))
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(stdout.startswith("equilibrium:"))
        record = load_json(out / "equilibrium.json")
        self.assertEqual(record["atoms"], 320)
        self.assertAlmostEqual(record["pressure"], math.log(320) / 6, places=12)
        self.assertTrue((out / "ensemble.csv").is_file())

    def test_invalid_config_exits_with_validation_code(self):
        raw = dict(LINEAR_CONFIG, numerics={"conjugacy_tol": -1.0})
        code, _, stderr = self._run("exponents", "--config", self._config(raw), "--out", str(self.dir))
        self.assertEqual(code, EXIT_VALIDATION)
        error = json.loads(stderr.strip().splitlines()[-1])
        self.assertEqual(error["details"]["pointer"], "numerics.conjugacy_tol")

    def test_verify_linear_map(self):
        code, stdout, _ = self._run("verify", "--config", self._config(LINEAR_CONFIG), "--out", str(self.dir))
        self.assertEqual(code, EXIT_OK)
        self.assertIn("passed=True", stdout)

    def test_uncertified_map_is_rejected(self):
        raw = dict(
            LINEAR_CONFIG,
            map={
                "matrix": [[2, 1], [1, 1]],
                "perturbations": [{"amplitude": 0.5, "direction": [1.0, 0.0], "frequency": [1, 0]}],
            },
        )
        code, _, stderr = self._run("verify", "--config", self._config(raw), "--out", str(self.dir / "out"))
        self.assertEqual(code, EXIT_VALIDATION)
        self.assertEqual(json.loads(stderr.strip().splitlines()[-1])["error"], "not_certified")
        self.assertFalse(load_json(self.dir / "out" / "verify.json")["passed"])

    def test_period_override_is_validated(self):
        code, _, _ = self._run(
            "equilibrium", "--config", self._config(LINEAR_CONFIG), "--out", str(self.dir), "--period-override", "20"
        )
        self.assertEqual(code, EXIT_VALIDATION)

    def test_golden_round_trip(self):
        config = self._config(LINEAR_CONFIG)
        goldens = self.dir / "goldens"
        args = ("exponents", "--config", config, "--out", str(self.dir / "out"), "--golden-dir", str(goldens))
        self.assertEqual(self._run(*args)[0], EXIT_OK)
        self.assertTrue((goldens / "exponents.json").is_file())
        self.assertEqual(self._run(*args)[0], EXIT_OK)

        tampered = load_json(goldens / "exponents.json")
        tampered["lambda_u"] += 1.0
        (goldens / "exponents.json").write_text(json.dumps(tampered), encoding="utf-8")
        code, _, stderr = self._run(*args)
        self.assertEqual(code, EXIT_NUMERIC)
        self.assertIn("lambda_u", stderr)

    def test_shipped_goldens(self):
        for run_name in GOLDEN_RUNS:
            golden_dir = GOLDENS / run_name
            out = self.dir / run_name
            for name in ("equilibrium", "exponents"):
                with self.subTest(run=run_name, report=name):
                    args = (name, "--config", str(golden_dir / "config.json"), "--out", str(out))
                    self.assertEqual(self._run(*args, "--golden-dir", str(golden_dir))[0], EXIT_OK)
                    mismatches = compare_records(
                        load_json(out / f"{name}.json"),
                        load_json(golden_dir / f"{name}.json"),
                        load_tolerances(golden_dir, name),
                    )
                    self.assertEqual(mismatches, [])

    def test_reports_do_not_depend_on_the_worker_count(self):
        config = str(GOLDENS / "perturbed_fourier" / "config.json")
        outputs = []
        for workers in (1, 4, 8):
            out = self.dir / f"workers_{workers}"
            code, _, _ = self._run("exponents", "--config", config, "--out", str(out), "--workers", str(workers))
            self.assertEqual(code, EXIT_OK)
            record = load_json(out / "exponents.json")
            record.pop("generated_at")
            outputs.append((json.dumps(record, sort_keys=True), (out / "orbit_exponents.csv").read_bytes()))
        self.assertEqual(outputs[0], outputs[1])
        self.assertEqual(outputs[0], outputs[2])


if __name__ == "__main__":
    unittest.main()
