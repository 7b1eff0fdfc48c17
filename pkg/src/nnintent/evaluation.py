"""Metrics, threshold calibration, and report exports.

The two headline metrics are in-domain accuracy (C_in / N_in) and OOS
recall (C_oos / N_oos); their unweighted sum is the calibration objective.
The sum is piecewise-constant in the threshold with breakpoints only at
observed confidences, so sweeping the observed values (plus 0 and the
reject-all sentinel) attains the global maximum over [0, 1].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .classify import REJECT_ALL_THRESHOLD, Prediction, check_threshold
from .corpus import OOS_LABEL, Utterance
from .errors import ValidationError

HISTOGRAM_BINS = 20

CURVE_FILE = "curve.tsv"
HISTOGRAM_FILE = "confidence_hist.tsv"
CASES_FILE = "cases.tsv"
EMBEDDINGS_FILE = "embeddings.tsv"


@dataclass(frozen=True)
class ScoredInstance:
    """One pre-threshold scoring outcome paired with its gold label.

    Decouples scoring from thresholding: a single scoring pass over a split
    serves every candidate threshold in the calibration sweep.
    """

    confidence: float
    predicted_label: str
    gold: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError("confidence must be in [0, 1]")

    @property
    def is_oos(self) -> bool:
        return self.gold == OOS_LABEL


@dataclass(frozen=True)
class Metrics:
    c_in: int
    n_in: int
    c_oos: int
    n_oos: int

    def __post_init__(self) -> None:
        if self.n_in < 1 or self.n_oos < 1:
            raise ValidationError("both populations must be non-empty")
        if not 0 <= self.c_in <= self.n_in or not 0 <= self.c_oos <= self.n_oos:
            raise ValidationError("correct counts must not exceed population sizes")

    @property
    def acc_in(self) -> float:
        return self.c_in / self.n_in

    @property
    def r_oos(self) -> float:
        return self.c_oos / self.n_oos

    @property
    def joint(self) -> float:
        return self.acc_in + self.r_oos

    @property
    def combined(self) -> float:
        """Pooled accuracy (C_in + C_oos) / (N_in + N_oos).

        Reported for reference only; it over-weights the in-domain side
        whenever the populations are imbalanced, so it is never the
        threshold-selection criterion.
        """
        return (self.c_in + self.c_oos) / (self.n_in + self.n_oos)

    def as_dict(self) -> dict:
        return {
            "acc_in": self.acc_in,
            "r_oos": self.r_oos,
            "joint": self.joint,
            "combined": self.combined,
            "c_in": self.c_in,
            "n_in": self.n_in,
            "c_oos": self.c_oos,
            "n_oos": self.n_oos,
        }


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    metrics: Metrics

    @property
    def joint(self) -> float:
        return self.metrics.joint


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    joint_at_threshold: float
    curve: tuple[CurvePoint, ...]

    def __post_init__(self) -> None:
        thresholds = [p.threshold for p in self.curve]
        if self.threshold not in thresholds:
            raise ValidationError("chosen threshold must appear in the curve")
        best = max(p.joint for p in self.curve)
        if self.joint_at_threshold != best:
            raise ValidationError("joint at threshold must be the curve maximum")


def compute_metrics(instances: list[ScoredInstance], threshold: float) -> Metrics:
    """Count threshold-gated outcomes over a scored split.

    An in-domain instance counts as correct when its confidence clears the
    threshold (closed comparison: equality accepts) and its pre-threshold
    label matches gold; an OOS instance counts when it falls below.
    """
    check_threshold(threshold)
    n_in = n_oos = c_in = c_oos = 0
    for inst in instances:
        if inst.is_oos:
            n_oos += 1
            if inst.confidence < threshold:
                c_oos += 1
        else:
            n_in += 1
            if inst.confidence >= threshold and inst.predicted_label == inst.gold:
                c_in += 1
    if n_in < 1 or n_oos < 1:
        raise ValidationError(
            "metrics need both populations present "
            f"(got {n_in} in-domain, {n_oos} OOS instances)"
        )
    return Metrics(c_in=c_in, n_in=n_in, c_oos=c_oos, n_oos=n_oos)


def calibrate_threshold(instances: list[ScoredInstance]) -> CalibrationResult:
    """Sweep candidate thresholds and keep the best joint score.

    Candidates are the observed confidences plus 0 and the reject-all
    sentinel just above 1. Among equally good candidates the largest wins:
    it rejects the most, favoring OOS recall over prior practice that
    sacrificed it.
    """
    candidates = sorted({inst.confidence for inst in instances} | {0.0, REJECT_ALL_THRESHOLD})
    curve = tuple(
        CurvePoint(threshold=t, metrics=compute_metrics(instances, t)) for t in candidates
    )
    best = max(p.joint for p in curve)
    chosen = max(p.threshold for p in curve if p.joint == best)
    return CalibrationResult(threshold=chosen, joint_at_threshold=best, curve=curve)


@dataclass(frozen=True)
class CaseRow:
    """One row of the case-study table: an input against its best match."""

    input_text: str
    prediction: Prediction
    gold: str

    @property
    def matched(self) -> Utterance | None:
        return self.prediction.matched_example


def _write_tsv(path: Path, header: list[str], rows: list[list]) -> None:
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write report file {path}: {exc}") from exc


def _clean(text: str) -> str:
    return " ".join(text.split())


def write_curve_tsv(calibration: CalibrationResult, path: str | Path) -> Path:
    """Write the calibration sweep as TSV, one row per candidate threshold."""
    path = Path(path)
    _write_tsv(
        path,
        ["threshold", "acc_in", "r_oos", "joint", "combined"],
        [
            [repr(p.threshold), repr(p.metrics.acc_in), repr(p.metrics.r_oos),
             repr(p.metrics.joint), repr(p.metrics.combined)]
            for p in calibration.curve
        ],
    )
    return path


def histogram_counts(
    instances: list[ScoredInstance], bins: int = HISTOGRAM_BINS
) -> list[tuple[float, float, int, int]]:
    """Equal-width confidence bins split by gold population.

    Returns (bin_lo, bin_hi, in_domain_count, oos_count) per bin; the last
    bin is closed at 1.0 so totals are conserved.
    """
    width = 1.0 / bins
    in_counts = [0] * bins
    oos_counts = [0] * bins
    for inst in instances:
        idx = min(int(inst.confidence / width), bins - 1)
        if inst.is_oos:
            oos_counts[idx] += 1
        else:
            in_counts[idx] += 1
    return [
        (i * width, (i + 1) * width, in_counts[i], oos_counts[i]) for i in range(bins)
    ]


def export_report(
    out_dir: str | Path,
    *,
    calibration: CalibrationResult,
    instances: list[ScoredInstance],
    cases: list[CaseRow],
    embeddings: list[tuple[str, str, list[float]]] | None = None,
) -> list[Path]:
    """Write the delimited report files into ``out_dir``.

    Produces the threshold curve, the per-population confidence histogram,
    the case-study table, and (when given) an embedding dump for external
    projection plots. All files are tab-separated with a header row.
    """
    if not instances or not cases:
        raise ValidationError("nothing to report: provide scored instances and cases")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out_dir}: {exc}") from exc

    written = []

    curve_path = out_dir / CURVE_FILE
    write_curve_tsv(calibration, curve_path)
    written.append(curve_path)

    hist_path = out_dir / HISTOGRAM_FILE
    _write_tsv(
        hist_path,
        ["bin_lo", "bin_hi", "in_domain", "oos"],
        [[repr(lo), repr(hi), n_in, n_oos] for lo, hi, n_in, n_oos in histogram_counts(instances)],
    )
    written.append(hist_path)

    cases_path = out_dir / CASES_FILE
    _write_tsv(
        cases_path,
        ["input", "matched_utterance", "input_label", "matched_label", "confidence"],
        [
            [
                _clean(row.input_text),
                _clean(row.matched.text) if row.matched else "",
                row.gold,
                row.matched.label if row.matched else "",
                repr(row.prediction.confidence),
            ]
            for row in cases
        ],
    )
    written.append(cases_path)

    if embeddings is not None:
        emb_path = out_dir / EMBEDDINGS_FILE
        dims = {len(vec) for _, _, vec in embeddings}
        if len(dims) > 1:
            raise ValidationError("embedding dump vectors disagree on dim")
        dim = dims.pop() if dims else 0
        _write_tsv(
            emb_path,
            ["text", "label"] + [f"d{i}" for i in range(dim)],
            [[_clean(text), label, *[repr(v) for v in vec]] for text, label, vec in embeddings],
        )
        written.append(emb_path)

    return written
