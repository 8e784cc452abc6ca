"""Output helpers: every CSV gets a header and a JSON sidecar (tool version, seed, config hash)."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__

TOOL = "posroute"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=json_default)


def config_hash(config) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if hasattr(o, "value") and isinstance(getattr(o, "value"), (str, int)):
        return o.value
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def sidecar(seed, config, command: str) -> dict:
    return {"tool": TOOL, "version": __version__, "command": command, "seed": seed,
            "config_hash": config_hash(config)}


def _fmt(x) -> str:
    if isinstance(x, float):
        if np.isnan(x):
            return ""
        return repr(round(x, 10))
    return str(x)


def write_csv(df: pd.DataFrame, path, meta: dict) -> Path:
    """Write ``df`` with a fixed float format and ``<name>.meta.json`` beside it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = df.copy()
    for c in out.columns:
        if out[c].dtype.kind == "f":
            out[c] = out[c].map(_fmt)
    out.to_csv(path, index=False, lineterminator="\n")
    write_json({**meta, "file": path.name, "rows": int(len(df))}, path.with_suffix(".meta.json"))
    return path


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=json_default) + "\n")
    return path


def write_table(df: pd.DataFrame, out_dir, name: str, fmt: str, meta: dict) -> Path:
    out_dir = Path(out_dir)
    if fmt == "json":
        rows = json.loads(df.to_json(orient="records", double_precision=10))
        return write_json({"meta": meta, "rows": rows}, out_dir / f"{name}.json")
    return write_csv(df, out_dir / f"{name}.csv", meta)
