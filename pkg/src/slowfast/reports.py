"""JSON and CSV report files with a schema version and a run manifest.

Infinite values are legal results (rate functionals take +inf), so they are
written as tagged tokens and restored on reading: {"__float__": "+inf"} in
JSON, the bare token +inf in CSV.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
TOOLKIT_VERSION = "0.1.0"

_TOKENS = {math.inf: "+inf", -math.inf: "-inf"}
_UNTOKENS = {"+inf": math.inf, "inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def encode(obj):
    """Convert numpy containers and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return encode(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return {"__float__": "nan"}
        if math.isinf(x):
            return {"__float__": _TOKENS[x]}
        return x
    if isinstance(obj, complex):
        return {"__complex__": [encode(obj.real), encode(obj.imag)]}
    return obj


def decode(obj):
    if isinstance(obj, dict):
        if set(obj) == {"__float__"}:
            return _UNTOKENS[obj["__float__"]]
        if set(obj) == {"__complex__"}:
            re, im = (decode(v) for v in obj["__complex__"])
            return complex(re, im)
        return {k: decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [decode(v) for v in obj]
    return obj


def dumps(report: dict) -> str:
    return json.dumps(encode(report), indent=2, sort_keys=True, allow_nan=False)


def loads(text: str) -> dict:
    return decode(json.loads(text))


def write_json(path, report: dict, manifest: "RunManifest | None" = None):
    body = {"schema_version": SCHEMA_VERSION, **report}
    if manifest is not None:
        body["manifest"] = manifest.reference()
    Path(path).write_text(dumps(body) + "\n")
    if manifest is not None:
        manifest.outputs.append(str(path))
    return Path(path)


def read_json(path) -> dict:
    return loads(Path(path).read_text())


def _csv_cell(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return _TOKENS[x]
        if math.isnan(x):
            return "nan"
        return repr(x)
    return x


def write_csv(path, columns: dict, manifest: "RunManifest | None" = None):
    """Columns of equal length; a comment header carries the schema version and manifest id."""
    names = list(columns)
    cols = [np.asarray(columns[k]).ravel().tolist() for k in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns must have equal length")
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}")
        if manifest is not None:
            fh.write(f" manifest={manifest.run_id}")
        fh.write("\n")
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_csv_cell(x) for x in row])
    if manifest is not None:
        manifest.outputs.append(str(path))
    return Path(path)


def _parse_cell(s):
    if s in _UNTOKENS:
        return _UNTOKENS[s]
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_csv(path):
    """Returns (header dict, columns dict)."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        header = dict(kv.split("=", 1) for kv in first.lstrip("# ").split())
        rows = list(csv.reader(fh))
    names, body = rows[0], rows[1:]
    cols = {k: [_parse_cell(r[i]) for r in body] for i, k in enumerate(names)}
    return header, cols


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    subcommand: str
    config_text: str
    parameters: dict
    seeds: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    started: float = field(default_factory=time.time)
    wall_clock: float = 0.0

    @property
    def config_hash(self) -> str:
        return config_hash(self.config_text)

    @property
    def run_id(self) -> str:
        return f"{self.subcommand}-{self.config_hash}"

    def reference(self):
        return {"run_id": self.run_id, "config_hash": self.config_hash}

    def finish(self, outdir) -> Path:
        self.wall_clock = time.time() - self.started
        body = {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "subcommand": self.subcommand,
            "config_hash": self.config_hash,
            "toolkit_version": TOOLKIT_VERSION,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "seeds": self.seeds,
            "wall_clock_s": self.wall_clock,
            "parameters": self.parameters,
            "outputs": [os.path.basename(p) for p in self.outputs],
        }
        path = Path(outdir) / "manifest.json"
        path.write_text(dumps(body) + "\n")
        return path
