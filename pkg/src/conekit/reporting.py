"""Machine-readable run reports: deterministic JSON plus CSV tables.

Reports are byte-identical across reruns with the same config and seed; the
only volatile field is the top-level timestamp, which comparison helpers
strip before diffing.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if hasattr(value, "tolist"):
        out = value.tolist()
        return [_jsonable(v) for v in out] if isinstance(out, list) else out
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float):
        # canonical repr keeps reports byte-stable across platforms
        return value
    return str(value)


@dataclass
class RunReport:
    command: str
    config: dict
    verdicts: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add_verdict(self, name: str, passed: bool, tolerance=None,
                    observed=None, margin=None, detail=None):
        entry = {"name": name, "passed": bool(passed)}
        if tolerance is not None:
            entry["tolerance"] = tolerance
        if observed is not None:
            entry["observed"] = observed
        if margin is not None:
            entry["margin"] = margin
        if detail is not None:
            entry["detail"] = detail
        self.verdicts.append(entry)

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts)

    def to_dict(self, timestamp: bool = True) -> dict:
        doc = {
            "command": self.command,
            "config": _jsonable(self.config),
            "config_hash": config_hash(_jsonable(self.config)),
            "metadata": _jsonable(self.metadata),
            "passed": self.passed,
            "tables": _jsonable(self.tables),
            "verdicts": _jsonable(self.verdicts),
        }
        if timestamp:
            doc["timestamp"] = datetime.now(timezone.utc).isoformat()
        return doc

    def write(self, out_dir, name: str = "report.json") -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / name
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def write_csv(path, rows: list[dict]) -> Path:
    """One table per file; the header is the union of row keys, sorted."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = sorted({k for row in rows for k in row})
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in keys})
    return path


def load_stripped(path) -> dict:
    """Report JSON with the volatile timestamp removed, for diffing."""
    doc = json.loads(Path(path).read_text())
    doc.pop("timestamp", None)
    return doc


def reports_equal(path_a, path_b) -> bool:
    a = json.dumps(load_stripped(path_a), sort_keys=True)
    b = json.dumps(load_stripped(path_b), sort_keys=True)
    return a == b
