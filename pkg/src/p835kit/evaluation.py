"""Correlation-based evaluation of SIG/BAK/OVRL predictors."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .audio import load_canonical
from .dataset import Manifest
from .model import Checkpoint, OvrlHead, predict, predict_ovrl_a, predict_ovrl_p, tensor_digest

log = logging.getLogger(__name__)

REPORT_SCHEMA = "p835kit.eval-report/1"
METRICS = ("bak", "sig", "ovrl_a", "ovrl_p")
_LABEL_OF = {"bak": "bak", "sig": "sig", "ovrl_a": "ovrl", "ovrl_p": "ovrl"}
_COLUMN_TITLES = {"bak": "BAK", "sig": "SIG", "ovrl_a": "OVRL A", "ovrl_p": "OVRL P"}


class UndefinedCorrelation(ValueError):
    pass


def _prepare(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"expected two equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise ValueError("correlation needs at least two points")
    return x, y


def pearson_lcc(x, y) -> float:
    x, y = _prepare(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("correlation is undefined for a constant vector")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def average_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(len(x))
    start = 0
    while start < len(x):
        stop = start + 1
        while stop < len(x) and sorted_x[stop] == sorted_x[start]:
            stop += 1
        ranks[order[start:stop]] = (start + stop + 1) / 2.0
        start = stop
    return ranks


def spearman_srcc(x, y) -> float:
    x, y = _prepare(x, y)
    return pearson_lcc(average_ranks(x), average_ranks(y))


@dataclass
class MetricResult:
    lcc: float | None = None
    srcc: float | None = None
    mse: float | None = None
    n: int = 0
    reason: str | None = None  # set when the metric could not be computed

    @property
    def available(self) -> bool:
        return self.reason is None


@dataclass
class EvalReport:
    metrics: dict[str, MetricResult]
    provenance: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    skipped: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "metrics": {k: asdict(self.metrics[k]) for k in METRICS if k in self.metrics},
            "extras": self.extras,
            "skipped": self.skipped,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        return cls(
            {k: MetricResult(**v) for k, v in d["metrics"].items()},
            d.get("provenance", {}),
            d.get("extras", {}),
            d.get("skipped", []),
        )

    def __eq__(self, other):
        return isinstance(other, EvalReport) and self.to_dict() == other.to_dict()

    @property
    def any_available(self) -> bool:
        return any(m.available for m in self.metrics.values())


def score_metric(pred, truth) -> MetricResult:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    n = len(truth)
    if n < 2:
        return MetricResult(n=n, reason=f"only {n} labeled entries")
    mse = float(np.mean((pred - truth) ** 2))
    try:
        return MetricResult(pearson_lcc(pred, truth), spearman_srcc(pred, truth), mse, n)
    except UndefinedCorrelation as exc:
        return MetricResult(mse=mse, n=n, reason=str(exc))


def report_from_predictions(rows: list[dict], manifest: Manifest, provenance: dict | None = None) -> EvalReport:
    """Build a report from per-entry predictions.

    ``rows`` maps entry id to predictions: ``{"id", "sig", "bak", "ovrl_a", "ovrl_p"}``
    with absent or ``None`` values for whatever was not predicted. Entries are
    scored in id order, so the report does not depend on manifest order.
    """
    by_id = {r["id"]: r for r in rows}
    entries = sorted((e for e in manifest.entries if e.id in by_id), key=lambda e: e.id)
    metrics = {}
    for metric in METRICS:
        label = _LABEL_OF[metric]
        pairs = [(by_id[e.id].get(metric), e.label(label)) for e in entries]
        labeled = [(p, t) for p, t in pairs if t is not None]
        if not labeled:
            metrics[metric] = MetricResult(reason=f"no {label} labels")
            continue
        if any(p is None for p, _ in labeled):
            metrics[metric] = MetricResult(n=len(labeled), reason=f"no {metric} predictions")
            continue
        metrics[metric] = score_metric([p for p, _ in labeled], [t for _, t in labeled])

    extras = {}
    triplets = [(e.sig, e.bak, e.ovrl) for e in entries if None not in (e.sig, e.bak, e.ovrl)]
    if len(triplets) >= 2:
        t = np.array(triplets)
        try:
            extras["lcc_ovrl_vs_mean_sig_bak"] = pearson_lcc(t[:, 2], (t[:, 0] + t[:, 1]) / 2)
            extras["n_triplets"] = len(triplets)
        except UndefinedCorrelation:
            pass
    return EvalReport(metrics, dict(provenance or {}), extras)


def predict_entry(ckpt_sig, ckpt_bak, ovrl_head, clip) -> dict:
    row = {}
    if ckpt_sig is not None:
        row["sig"] = predict(ckpt_sig, clip)
    if ckpt_bak is not None:
        row["bak"] = predict(ckpt_bak, clip)
    if "sig" in row and "bak" in row:
        row["ovrl_a"] = predict_ovrl_a(row["sig"], row["bak"])
        if ovrl_head is not None:
            row["ovrl_p"] = predict_ovrl_p(ckpt_sig, ckpt_bak, ovrl_head, clip)
    return row


def _digest(ckpt) -> str | None:
    return None if ckpt is None else tensor_digest(ckpt.tensors())


def evaluate(
    ckpt_sig: Checkpoint | None,
    ckpt_bak: Checkpoint | None,
    ovrl_head: OvrlHead | None,
    manifest: Manifest,
    *,
    jobs: int = 1,
    loader: Callable = load_canonical,
    manifest_path: str | None = None,
) -> EvalReport:
    """Whole-clip predictions for every entry, scored against its labels.

    Unreadable entries are skipped and listed in ``report.skipped``.
    """
    def work(entry):
        try:
            clip = loader(manifest.resolve(entry))
            return dict(predict_entry(ckpt_sig, ckpt_bak, ovrl_head, clip), id=entry.id)
        except (OSError, ValueError) as exc:
            return {"id": entry.id, "error": str(exc)}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(work, manifest.entries))
    else:
        rows = [work(e) for e in manifest.entries]
    good = [r for r in rows if "error" not in r]
    skipped = sorted(({"id": r["id"], "error": r["error"]} for r in rows if "error" in r), key=lambda r: r["id"])
    if skipped:
        log.warning("skipped %d unreadable entries", len(skipped))
    provenance = {
        "manifest": manifest_path,
        "sig_checkpoint": _digest(ckpt_sig),
        "bak_checkpoint": _digest(ckpt_bak),
        "ovrl_head": None if ovrl_head is None else tensor_digest(
            {"ovrl.weight": ovrl_head.weight, "ovrl.bias": ovrl_head.bias}),
    }
    report = report_from_predictions(good, manifest, provenance)
    report.skipped = skipped
    return report


def _fmt(v) -> str:
    return "--" if v is None else f"{v:.3f}"


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), indent=2)


def report_from_json(text: str) -> EvalReport:
    return EvalReport.from_dict(json.loads(text))


def report_to_text(report: EvalReport) -> str:
    """Table with BAK, SIG, OVRL A and OVRL P columns; missing values as "--"."""
    cols = list(METRICS)
    width = 8
    lines = ["".ljust(6) + "".join(_COLUMN_TITLES[c].rjust(width) for c in cols)]
    for stat in ("lcc", "srcc", "mse"):
        cells = []
        for c in cols:
            m = report.metrics.get(c)
            cells.append(_fmt(None if m is None else getattr(m, stat)).rjust(width))
        lines.append(stat.upper().ljust(6) + "".join(cells))
    counts = []
    for c in cols:
        m = report.metrics.get(c)
        counts.append(("--" if m is None or m.n == 0 else str(m.n)).rjust(width))
    lines.append("n".ljust(6) + "".join(counts))
    for c in cols:
        m = report.metrics.get(c)
        if m is not None and m.reason:
            lines.append(f"  {_COLUMN_TITLES[c]}: {m.reason}")
    if "lcc_ovrl_vs_mean_sig_bak" in report.extras:
        lines.append(f"LCC(OVRL, (SIG+BAK)/2) on labels: {report.extras['lcc_ovrl_vs_mean_sig_bak']:.3f}")
    if report.skipped:
        lines.append(f"skipped {len(report.skipped)} unreadable entries")
    return "\n".join(lines) + "\n"
