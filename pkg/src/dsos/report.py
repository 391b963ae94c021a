"""Versioned JSON test reports."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from . import __version__
from .errors import DataError
from .stats import WaucResult

SCHEMA_VERSION = 1


@dataclass
class TestReport:
    """A test result plus everything needed to reproduce it.

    ``wall_clock_seconds`` is only filled in on request so that reports of
    identical invocations are byte-identical.
    """

    __test__ = False  # not a pytest class

    result: WaucResult
    notion: Optional[str]
    dataset: Dict[str, Any]
    invocation: Dict[str, Any]
    verdict: Optional[str] = None
    wall_clock_seconds: Optional[float] = None
    tool_version: str = __version__
    schema_version: int = SCHEMA_VERSION
    feature_names: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["result"] = self.result.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TestReport":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DataError(f"unsupported report schema version {version!r} (expected {SCHEMA_VERSION})")
        d = dict(d)
        d["result"] = WaucResult.from_dict(d["result"])
        return cls(**d)

    def to_json(self) -> str:
        return dumps(self.to_dict())


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_report(path) -> dict:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read report: {exc}") from exc
    if not isinstance(d, dict):
        raise DataError(f"{path}: not a report object")
    return d


def format_report(d: dict) -> str:
    """Human-readable rendering of a report dict (single test or panel)."""
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"unsupported report schema version {version!r} (expected {SCHEMA_VERSION})")
    if "panel" in d:
        lines = [f"notion panel ({d['invocation'].get('method', '?')}), "
                 f"{d['dataset']['n_train']} train / {d['dataset']['n_test']} test rows"]
        for e in d["panel"]:
            if e.get("error"):
                lines.append(f"  {e['notion']:<24} error: {e['error']}")
            else:
                r = e["result"]
                lines.append(f"  {e['notion']:<24} p = {r['p_value']:.4g}   s = {r['s_value']:.2f} bits")
        return "\n".join(lines) + "\n"
    report = TestReport.from_dict(d)
    r = report.result
    lines = [
        f"method      {r.method.value}",
        f"notion      {report.notion or '-'}",
        f"rows        {r.n_train} train / {r.n_test} test",
        f"statistic   {r.statistic:.6g}",
        f"p-value     {r.p_value:.4g}",
        f"s-value     {r.s_value:.2f} bits",
    ]
    if r.permutations_used is not None:
        lines.append(f"resamples   {r.permutations_used}")
    if report.verdict:
        lines.append(f"verdict     {report.verdict}")
    lines.append(f"seed        {r.seed}")
    return "\n".join(lines) + "\n"
