"""Error tallies, security verdicts, image reconstruction and report output."""

from __future__ import annotations

import csv
import dataclasses
import enum
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .polar_core import SECURE_ERROR_BOUND, STATE_NAMES, mutual_information
from .protocol_sim import PORT_NAMES, PROTOCOL_STATES, EventBatch, PhotonEvent, RunRecord
from .scene import write_image_pgm

CSV_HEADER = ["frame", "sent_state", "basis", "true_x", "true_y",
              "reported_x", "reported_y", "port", "is_error"]

INCONCLUSIVE_NOTE = ("confidence interval straddles the error bound; the sharp "
                     "threshold is extended with this finite-sample band")


class Verdict(enum.Enum):
    SECURE = "secure"
    COMPROMISED = "compromised"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ErrorReport:
    per_channel: dict[str, dict[str, int]]  # keyed by sent state
    average_error: float
    ci_low: float
    ci_high: float
    n_detected: int
    confidence: float = 0.99

    def channel_error(self, name: str) -> float:
        c = self.per_channel[name]
        return c["errors"] / c["total"] if c["total"] else float("nan")


@dataclass(frozen=True)
class SecurityVerdict:
    verdict: Verdict
    bound: float
    mutual_information_bits: float


def _as_batch(events) -> EventBatch:
    if isinstance(events, RunRecord):
        return events.events
    if isinstance(events, EventBatch):
        return events
    events = [e for e in events if isinstance(e, PhotonEvent)]
    detected = [e for e in events if e.detected_outcome is not None]
    batch = EventBatch.new(
        [e.frame_index for e in detected],
        [PROTOCOL_STATES.index(e.sent_state) for e in detected],
        [e.photon_count for e in detected],
        [e.true_pixel.x for e in detected],
        [e.true_pixel.y for e in detected],
    )
    port = [2 * (e.sent_basis.theta != 0.0) + e.detected_outcome.axis.value for e in detected]
    return dataclasses.replace(
        batch,
        port=np.array(port, dtype=np.int8),
        is_error=np.array([e.is_error for e in detected], dtype=np.int8),
    )


def tally_errors(events, confidence: float = 0.99) -> ErrorReport:
    """Per-sent-state and average error with a Wilson score interval.

    Accepts a RunRecord, an EventBatch or an iterable of PhotonEvents.
    """
    batch = _as_batch(events)
    det = batch.detected
    n = int(det.sum())
    if n == 0:
        raise ValueError("no detections to tally")
    errors = batch.is_error[det] == 1
    sent = batch.sent[det]
    per_channel = {
        name: {"errors": int(errors[sent == k].sum()), "total": int((sent == k).sum())}
        for k, name in enumerate(STATE_NAMES)
    }
    k = int(errors.sum())
    ci = binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
    avg = k / n
    return ErrorReport(
        per_channel=per_channel,
        average_error=avg,
        ci_low=min(max(float(ci.low), 0.0), avg),
        ci_high=max(min(float(ci.high), 1.0), avg),
        n_detected=n,
        confidence=confidence,
    )


def security_verdict(report: ErrorReport, bound: float = SECURE_ERROR_BOUND) -> SecurityVerdict:
    if report.ci_high < bound:
        verdict = Verdict.SECURE
    elif report.ci_low > bound:
        verdict = Verdict.COMPROMISED
    else:
        verdict = Verdict.INCONCLUSIVE
    return SecurityVerdict(verdict, bound, mutual_information(report.average_error))


def jammer_misidentification(run: RunRecord | EventBatch) -> tuple[float, int]:
    """Fraction of intercepted photons whose jammer outcome disagrees with the sent bit.

    The jammer's aligned click stands for H (or D), the orthogonal click for
    V (or A), read in the basis the photon was sent in.
    """
    batch = _as_batch(run)
    sel = batch.jammer_axis >= 0
    n = int(sel.sum())
    if n == 0:
        raise ValueError("no intercepted photons")
    wrong = batch.jammer_axis[sel] != batch.sent[sel] % 2
    return float(wrong.mean()), n


def reconstruct_image(run: RunRecord) -> dict[str, np.ndarray]:
    """The four per-port grids plus their pixelwise sum under ``"composite"``."""
    grids = {name: run.grids[name].copy() for name in PORT_NAMES}
    grids["composite"] = sum(grids[name] for name in PORT_NAMES)
    return grids


def write_images(run: RunRecord, out_dir: str | os.PathLike) -> list[Path]:
    out = Path(out_dir)
    paths = []
    for name, grid in reconstruct_image(run).items():
        path = out / f"{name}.pgm"
        write_image_pgm(grid, path)
        paths.append(path)
    return paths


def report_dict(report: ErrorReport, verdict: SecurityVerdict, *, seed: int,
                config: dict | None = None, chsh_s: float | None = None) -> dict:
    d = {
        "per_channel": {
            name: {**c, "error_rate": report.channel_error(name) if c["total"] else None}
            for name, c in report.per_channel.items()
        },
        "average_error": report.average_error,
        "ci": {"low": report.ci_low, "high": report.ci_high,
               "confidence": report.confidence, "method": "wilson"},
        "n_detected": report.n_detected,
        "verdict": verdict.verdict.value,
        "bound": verdict.bound,
        "mutual_information_bits": verdict.mutual_information_bits,
    }
    if verdict.verdict is Verdict.INCONCLUSIVE:
        d["verdict_note"] = INCONCLUSIVE_NOTE
    if chsh_s is not None:
        d["S"] = chsh_s
    d["config"] = config or {}
    d["seed"] = seed
    return d


def write_events_csv(run: RunRecord, path: str | os.PathLike) -> None:
    ev = run.events
    basis_names = ("HV", "DA")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(len(ev)):
            w.writerow([
                int(ev.frame[i]), STATE_NAMES[ev.sent[i]], basis_names[ev.sent[i] // 2],
                int(ev.true_x[i]), int(ev.true_y[i]),
                int(ev.reported_x[i]), int(ev.reported_y[i]),
                PORT_NAMES[ev.port[i]], int(ev.is_error[i]),
            ])


def write_report(report: ErrorReport, verdict: SecurityVerdict, run: RunRecord,
                 json_path: str | os.PathLike, csv_path: str | os.PathLike | None = None,
                 chsh_s: float | None = None) -> None:
    """JSON summary (stable key order) and optional per-frame CSV log."""
    d = report_dict(report, verdict, seed=run.seed, config=run.config, chsh_s=chsh_s)
    with open(json_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(d, f, indent=2)
        f.write("\n")
    if csv_path is not None:
        write_events_csv(run, csv_path)
