import json
import math
import os
from dataclasses import asdict, is_dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional

import jsonschema
import numpy as np
import pandas as pd

from src.errors import ConfigError

SUMMARY_SCHEMA_PATH = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config", "summary.schema.json"
)

REPLICA_COLUMNS = ["replica", "n", "t_length", "word_length", "ell_value"]
CYCLE_COLUMNS = ["replica", "i", "duration", "length_gain", "syllable_count"]
CLT_COLUMNS = ["replica", "n", "ell_value", "statistic"]


def to_jsonable(obj: Any) -> Any:
    """Plain JSON values; NaN/inf become null so the output stays strict JSON."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    return obj


def dump_summary(summary: Dict[str, Any]) -> str:
    return json.dumps(to_jsonable(summary), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def load_schema(path: Optional[str] = None) -> Dict[str, Any]:
    with open(path or SUMMARY_SCHEMA_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def validate_summary(summary: Dict[str, Any], schema: Optional[Dict[str, Any]] = None) -> None:
    try:
        jsonschema.validate(to_jsonable(summary), schema or load_schema())
    except jsonschema.ValidationError as e:
        where = "/".join(str(x) for x in e.absolute_path) or "<root>"
        raise ConfigError(f"summary does not match its schema at {where}: {e.message}") from None


def write_summary(out_dir: str, name: str, summary: Dict[str, Any]) -> str:
    validate_summary(summary)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name}.json")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_summary(summary))
    return path


def write_csv(out_dir: str, name: str, df: pd.DataFrame) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name}.csv")
    df.to_csv(path, index=False, lineterminator="\n")
    return path


def replica_frame(trajs: Iterable[Any]) -> pd.DataFrame:
    """One row per recorded checkpoint (n, t_length, word_length, l) of every replica."""
    rows: List[Dict[str, Any]] = []
    for tr in trajs:
        for n, t_len, w_len, ell in tr.checkpoints:
            rows.append({"replica": tr.replica, "n": n, "t_length": t_len, "word_length": w_len, "ell_value": ell})
    return pd.DataFrame(rows, columns=REPLICA_COLUMNS)


def cycles_frame(cycles_by_replica: Dict[int, Iterable[Any]]) -> pd.DataFrame:
    rows: List[Dict[str, Any]] = []
    for r in sorted(cycles_by_replica):
        for c in cycles_by_replica[r]:
            rows.append({
                "replica": r,
                "i": c.index,
                "duration": c.duration,
                "length_gain": c.length_gain,
                "syllable_count": c.syllable_count,
            })
    return pd.DataFrame(rows, columns=CYCLE_COLUMNS)


def clt_frame(report: Any) -> pd.DataFrame:
    rows = [
        {"replica": r, "n": report.n, "ell_value": ell, "statistic": s}
        for r, (ell, s) in enumerate(zip(report.lengths, report.statistics))
    ]
    return pd.DataFrame(rows, columns=CLT_COLUMNS)


def format_table(rows: Dict[str, Any], digits: int = 6) -> str:
    """Two-column text table for terminal output."""
    width = max((len(k) for k in rows), default=0)
    lines = []
    for k, v in rows.items():
        if isinstance(v, float):
            v = f"{v:.{digits}g}"
        lines.append(f"{k.ljust(width)}  {v}")
    return "\n".join(lines)
