import copy
import json
import os
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

load_dotenv()

DEFAULTS_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config", "defaults.yaml")


def load_yaml(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def load_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _deep_update(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def load_defaults(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    config/defaults.yaml + 환경변수(HNNWALK_WORKERS, HNNWALK_OUT) + 호출자 overrides 순으로 병합.
    """
    cfg = copy.deepcopy(load_yaml(path or DEFAULTS_PATH))
    run = cfg.setdefault("run", {})
    workers = os.getenv("HNNWALK_WORKERS", "")
    if workers.strip():
        run["workers"] = int(workers)
    out_dir = os.getenv("HNNWALK_OUT", "")
    if out_dir.strip():
        run["out_dir"] = out_dir
    return _deep_update(cfg, overrides or {})
