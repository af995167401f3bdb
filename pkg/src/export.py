import json
import logging
import struct
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd

from src.conjugacy import Conjugacy

PathLike = Union[str, Path]
CSV_FLOAT_FORMAT = "%.17g"
GRID_HEADER = "<qd"


def _output_path(out_dir: PathLike, name: str, suffix: str) -> Path:
    if not name:
        raise ValueError("The 'name' parameter cannot be empty when saving an artifact.")
    output_path = Path(out_dir) / f"{name}{suffix}"
    output_path.parent.mkdir(parents=True, exist_ok=True)
    return output_path


def save_csv(name: str, df: pd.DataFrame, out_dir: PathLike) -> Path:
    """Save a table as CSV with a header row and 17 significant digits."""
    output_path = _output_path(out_dir, name, ".csv")
    logging.info(f"Saving DataFrame to: {output_path}")
    df.to_csv(output_path, index=False, float_format=CSV_FLOAT_FORMAT)
    return output_path


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def canonical_json(record: dict) -> str:
    """UTF-8 JSON text with sorted keys; identical records give identical text."""
    return json.dumps(_to_jsonable(record), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save_json(name: str, record: dict, out_dir: PathLike, timestamp: bool = True) -> Path:
    """Save a report as JSON, stamped with `generated_at` unless disabled."""
    output_path = _output_path(out_dir, name, ".json")
    payload = dict(record)
    if timestamp:
        payload["generated_at"] = datetime.now(timezone.utc).isoformat()
    logging.info(f"Saving report to: {output_path}")
    output_path.write_text(canonical_json(payload), encoding="utf-8")
    return output_path


def load_json(path: PathLike) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def save_conjugacy_grid(name: str, c: Conjugacy, out_dir: PathLike) -> Path:
    """Write the displacement grid as little-endian float64 after a (grid_n, residual) header."""
    output_path = _output_path(out_dir, name, ".bin")
    grid = np.ascontiguousarray(c.grid_displacement(), dtype="<f8")
    logging.info(f"Saving conjugacy grid to: {output_path}")
    with open(output_path, "wb") as handle:
        handle.write(struct.pack(GRID_HEADER, c.grid_n, c.residual))
        handle.write(grid.tobytes(order="C"))
    return output_path


def load_conjugacy_grid(path: PathLike) -> tuple:
    """Read back (grid_n, residual, (grid_n, grid_n, 2) displacement)."""
    raw = Path(path).read_bytes()
    offset = struct.calcsize(GRID_HEADER)
    grid_n, residual = struct.unpack(GRID_HEADER, raw[:offset])
    grid = np.frombuffer(raw[offset:], dtype="<f8").reshape(grid_n, grid_n, 2)
    return grid_n, residual, grid
