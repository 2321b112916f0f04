"""Replicate streams (JSON lines) and summary tables (CSV).

Records are written with sorted keys and Python's shortest round-trip float
repr, so the same campaign always produces the same bytes.  Summary rows
are derived from the records alone.
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .experiments import RECORD_SCHEMA, _json_default

SUMMARY_COLUMNS = ("campaign", "statistic", "window", "M", "mean", "variance", "ks")


class ResultsIOError(OSError):
    """Reading or writing a results file failed; the message names the path."""


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), default=_json_default,
                      allow_nan=True)


def _check_versions(records: list, existing: Optional[int] = None) -> int:
    versions = {r.get("schema_version") for r in records}
    if existing is not None:
        versions.add(existing)
    if len(versions) > 1:
        raise ValueError(f"records carry mixed schema versions {sorted(map(str, versions))}")
    v = versions.pop() if versions else RECORD_SCHEMA
    if v != RECORD_SCHEMA:
        raise ValueError(f"unsupported record schema version {v!r}")
    return v


def read_records(path) -> list[dict]:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            recs = [json.loads(line) for line in f if line.strip()]
    except OSError as e:
        raise ResultsIOError(f"cannot read {path}: {e.strerror or e}") from e
    _check_versions(recs)
    return recs


def _series(records: list) -> dict:
    """{(campaign, statistic, window): [values in replicate order]}."""
    out: dict = {}

    def add(key, x):
        out.setdefault(key, []).append(float(x))

    for r in sorted(records, key=lambda r: (r.get("campaign", ""), r.get("A", 0.0),
                                            r.get("replicate", 0))):
        c = r.get("campaign", "")
        if c == "window_statistics":
            for n, vals in r["values"].items():
                for s, x in vals.items():
                    add((c, s, n), x)
        elif c == "stabilization_probe":
            for j, x in enumerate(r["changed"]):
                add((c, "changed", f"r[{j}]"), x)
        elif c in ("tail_sup", "tail_inf"):
            for level, x in r["exceed"].items():
                ev = "sup>T" if c == "tail_sup" else "inf<t"
                add((c, ev, f"A={r['A']!r},level={level}"), x)
        elif c == "decorrelation":
            add((c, "inner", "a"), r["inner"])
            for j, x in enumerate(r["shells"]):
                add((c, "shell", f"b[{j}]"), x)
    return out


def summary_rows(records: list, ks: Optional[dict] = None) -> list[dict]:
    """One row per (statistic, window) with replicate count, mean and variance.

    ``ks`` maps ``(statistic, window)`` to a KS distance to fill that column.
    """
    rows = []
    for (c, s, w), xs in sorted(_series(records).items()):
        x = np.asarray(xs)
        var = float(x.var(ddof=1)) if len(x) > 1 else math.nan
        k = (ks or {}).get((s, w))
        rows.append({"campaign": c, "statistic": s, "window": w, "M": len(x),
                     "mean": float(x.mean()), "variance": var,
                     "ks": "" if k is None else float(k)})
    return rows


def write_results(records: Iterable[dict], out_dir, name: str = "records",
                  ks: Optional[dict] = None, append: bool = False) -> tuple[Path, Path]:
    """Write ``<name>.jsonl`` and ``<name>.csv`` under ``out_dir``.

    With ``append`` the records are added to an existing stream, which must
    carry the same schema version; the CSV is rebuilt from the whole stream.
    """
    records = list(records)
    out_dir = Path(out_dir)
    jpath, cpath = out_dir / f"{name}.jsonl", out_dir / f"{name}.csv"
    try:
        os.makedirs(out_dir, exist_ok=True)
        previous = read_records(jpath) if append and jpath.exists() else []
        _check_versions(records, previous[0]["schema_version"] if previous else None)
        with open(jpath, "a" if append else "w", encoding="utf-8", newline="\n") as f:
            for r in records:
                f.write(dumps_record(r) + "\n")
        with open(cpath, "w", encoding="utf-8", newline="") as f:
            w = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in summary_rows(previous + records, ks):
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    except ResultsIOError:
        raise
    except OSError as e:
        raise ResultsIOError(f"cannot write results under {out_dir}: "
                             f"{e.strerror or e} ({e.filename or out_dir})") from e
    return jpath, cpath


def write_json(obj, path) -> Path:
    path = Path(path)
    try:
        os.makedirs(path.parent, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n")
    except OSError as e:
        raise ResultsIOError(f"cannot write {path}: {e.strerror or e}") from e
    return path
