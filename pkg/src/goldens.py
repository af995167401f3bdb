import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from src.export import canonical_json, load_json, save_json

EXCLUDED_FIELDS = ("generated_at",)
DEFAULT_TOLERANCE: float = 1e-9
TOLERANCES_FILE = "tolerances.json"


def flatten(record: Any, prefix: str = "") -> Dict[str, Any]:
    """Nested dicts and lists as a flat mapping keyed by dotted paths."""
    flat: Dict[str, Any] = {}
    if isinstance(record, dict):
        for key, value in record.items():
            if key in EXCLUDED_FIELDS:
                continue
            flat.update(flatten(value, f"{prefix}.{key}" if prefix else str(key)))
    elif isinstance(record, list):
        for i, value in enumerate(record):
            flat.update(flatten(value, f"{prefix}.{i}"))
    else:
        flat[prefix] = record
    return flat


def load_tolerances(golden_dir: Union[str, Path], name: str) -> Dict[str, float]:
    """Per-field tolerances of one report from DIR/tolerances.json, empty when absent.

    The file maps report names to {dotted field prefix: absolute tolerance}.
    """
    path = Path(golden_dir) / TOLERANCES_FILE
    if not path.is_file():
        return {}
    return {str(key): float(tol) for key, tol in load_json(path).get(name, {}).items()}


def _tolerance_for(path: str, tolerances: Dict[str, float]) -> float:
    """Longest matching dotted prefix wins; otherwise the default."""
    best, best_len = DEFAULT_TOLERANCE, -1
    for key, tol in tolerances.items():
        if (path == key or path.startswith(key + ".")) and len(key) > best_len:
            best, best_len = tol, len(key)
    return best


@dataclass
class GoldenResult:
    name: str
    recorded: bool = False
    mismatches: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def to_record(self) -> dict:
        return {"name": self.name, "recorded": self.recorded, "passed": self.passed, "mismatches": self.mismatches}


def compare_records(
    actual: dict, expected: dict, tolerances: Optional[Dict[str, float]] = None
) -> List[str]:
    """Field-wise comparison; numbers within their tolerance, everything else exact."""
    tolerances = tolerances or {}
    # numpy scalars compare as their JSON values
    got, want = flatten(json.loads(canonical_json(actual))), flatten(expected)
    mismatches = []
    for path in sorted(set(got) | set(want)):
        if path not in got or path not in want:
            mismatches.append(f"{path}: present in only one record")
            continue
        a, b = got[path], want[path]
        numeric = isinstance(a, (int, float)) and isinstance(b, (int, float))
        if numeric and not isinstance(a, bool) and not isinstance(b, bool):
            if math.isnan(a) and math.isnan(b):
                continue
            if abs(a - b) > _tolerance_for(path, tolerances):
                mismatches.append(f"{path}: {a!r} != {b!r}")
        elif a != b:
            mismatches.append(f"{path}: {a!r} != {b!r}")
    return mismatches


def check_golden(
    name: str,
    record: dict,
    golden_dir: Union[str, Path],
    tolerances: Optional[Dict[str, float]] = None,
    exploratory: bool = False,
) -> GoldenResult:
    """Compare a report against goldens/<name>.json, recording it when missing.

    Args:
        name (str): Golden name.
        record (dict): Report to check.
        golden_dir (str | Path): Directory of the golden files.
        tolerances (Dict[str, float], optional): Absolute tolerance per dotted
            field path (prefixes apply to nested fields). Read from the
            directory's tolerances file when not given.
        exploratory (bool, optional): Mismatches are logged as warnings
            instead of failing.

    Returns:
        GoldenResult: Outcome; `passed` is True for exploratory mismatches.
    """
    path = Path(golden_dir) / f"{name}.json"
    if tolerances is None:
        tolerances = load_tolerances(golden_dir, name)
    if not path.is_file():
        save_json(name, record, golden_dir, timestamp=False)
        logging.info(f"Recorded missing golden: {path}")
        return GoldenResult(name=name, recorded=True)
    mismatches = compare_records(record, load_json(path), tolerances)
    if mismatches and exploratory:
        for line in mismatches:
            logging.warning(f"Exploratory golden {name} differs at {line}")
        return GoldenResult(name=name)
    if mismatches:
        logging.warning(f"Golden {name} failed on {len(mismatches)} fields")
    return GoldenResult(name=name, mismatches=mismatches)
