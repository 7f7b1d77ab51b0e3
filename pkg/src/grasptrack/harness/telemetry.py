"""Trace persistence and summary helpers: JSONL telemetry, CSV tables, file
digests, and the binomial interval used in run summaries.

Wall-clock timing fields are stripped from trial traces by default so that a
rerun with the same seed produces byte-identical files; timing lives in its
own CSV instead.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path


def strip_timing(record: dict) -> dict:
    return {k: v for k, v in record.items() if k != "timing_ms"}


def write_trial_jsonl(path: Path, records: list[dict], include_timing: bool = False) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for rec in records:
            if not include_timing:
                rec = strip_timing(rec)
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def digest_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def binomial_ci(successes: int, trials: int) -> float:
    """Half-width of the 95% normal-approximation interval on the rate."""
    if trials == 0:
        return 0.0
    p = successes / trials
    return 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / trials)
