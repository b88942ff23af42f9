"""Deployment decisions with unknown-class rejection and scoring reports.

A sample is assigned its argmax class only when its transfer score
strictly exceeds the decision threshold; otherwise it is marked with the
reserved unknown symbol.  Accuracy is the macro average of per-class
recall over the shared classes plus the unknown class (micro accuracy is
reported alongside).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import scoring as sc
from .data import TAU, DomainDataset, LabelSetSpec
from .errors import ContractError
from .model import ModelBundle
from .scoring import ScoreRecord

HIST_BINS = 50

SCORE_GROUPS = ("source-shared", "source-private", "target-shared", "target-private")


@dataclass(frozen=True)
class Prediction:
    """Decision for one sample: its argmax class or the unknown symbol."""

    raw_argmax: int
    w: float
    decision: int


@dataclass
class EvalReport:
    """Per-class recalls over shared classes plus unknown, and their mean."""

    per_class_recall: dict
    average_class_accuracy: float
    micro_accuracy: float
    counts: dict
    n_evaluated_classes: int

    def to_json(self) -> str:
        payload = {
            "per_class_recall": {str(k): v for k, v in self.per_class_recall.items()},
            "average_class_accuracy": self.average_class_accuracy,
            "micro_accuracy": self.micro_accuracy,
            "counts": {str(k): v for k, v in self.counts.items()},
            "n_evaluated_classes": self.n_evaluated_classes,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def summary(self) -> str:
        lines = ["class  count  recall"]
        for cls in sorted(self.per_class_recall, key=lambda c: (c == TAU, c)):
            name = "tau" if cls == TAU else str(cls)
            recall = self.per_class_recall[cls]
            rec = "   n/a" if recall is None else f"{recall:6.4f}"
            lines.append(f"{name:>5}  {self.counts.get(cls, 0):5d}  {rec}")
        lines.append(f"average class accuracy: {self.average_class_accuracy:.4f}")
        lines.append(f"micro accuracy:         {self.micro_accuracy:.4f}")
        return "\n".join(lines)


def decide(record: ScoreRecord, w0: float,
           class_ids: tuple[int, ...]) -> Prediction:
    """Apply the rejection rule: argmax class iff the score exceeds w0."""
    idx = int(np.argmax(record.y_bar))  # ties -> lowest index
    cls = int(class_ids[idx])
    decision = cls if record.w > w0 else TAU
    return Prediction(raw_argmax=cls, w=record.w, decision=decision)


def evaluate(m: ModelBundle, tgt: DomainDataset, spec: LabelSetSpec,
             w0: float, scheme: str = "ours") -> EvalReport:
    """Score, decide and compute macro recall over shared classes plus unknown."""
    if tgt.n == 0:
        raise ContractError("cannot evaluate on an empty target set")
    records = sc.score_batch(m, tgt.features, scheme)
    decisions = np.array([decide(r, w0, m.class_ids).decision for r in records])
    truth = np.array([y if y in spec.shared else TAU for y in tgt.labels])

    eval_classes = [*spec.shared, TAU]
    per_class: dict = {}
    counts: dict = {}
    recalls = []
    for cls in eval_classes:
        mask = truth == cls
        counts[cls] = int(mask.sum())
        if counts[cls] == 0:
            warnings.warn(f"class {cls} has no test samples; excluded from the mean")
            per_class[cls] = None
            continue
        recall = float((decisions[mask] == cls).mean())
        per_class[cls] = recall
        recalls.append(recall)
    return EvalReport(
        per_class_recall=per_class,
        average_class_accuracy=float(np.mean(recalls)),
        micro_accuracy=float((decisions == truth).mean()),
        counts=counts,
        n_evaluated_classes=len(recalls))


def group_of(domain: str, label: int, spec: LabelSetSpec) -> str:
    shared = label in spec.shared
    if domain == "source":
        return "source-shared" if shared else "source-private"
    return "target-shared" if shared else "target-private"


def export_score_distributions(path, records: list[ScoreRecord],
                               groups: list[str], scheme: str = "ours") -> None:
    """Fixed-bin histograms of d, max prob and w for each sample group.

    One tab-delimited file with columns (group, quantity, bin_lo, bin_hi,
    count); bins span each quantity's theoretical range so exports are
    comparable across runs.
    """
    for g in groups:
        if g not in SCORE_GROUPS:
            raise ContractError(f"unknown score group {g!r}")
    lo, hi = sc.SCHEME_RANGES[scheme]
    ranges = {"d": (0.0, 1.0), "max_prob": (0.0, 1.0), "w": (lo, hi)}
    values = {"d": np.array([r.d for r in records]),
              "max_prob": np.array([r.max_prob for r in records]),
              "w": np.array([r.w for r in records])}
    groups_arr = np.array(groups)
    with open(path, "w") as fh:
        fh.write("group\tquantity\tbin_lo\tbin_hi\tcount\n")
        for group in SCORE_GROUPS:
            mask = groups_arr == group
            if not mask.any():
                continue
            for qty, (qlo, qhi) in ranges.items():
                edges = np.linspace(qlo, qhi, HIST_BINS + 1)
                hist, _ = np.histogram(np.clip(values[qty][mask], qlo, qhi),
                                       bins=edges)
                for b in range(HIST_BINS):
                    fh.write(f"{group}\t{qty}\t{float(edges[b])!r}\t"
                             f"{float(edges[b + 1])!r}\t{int(hist[b])}\n")
