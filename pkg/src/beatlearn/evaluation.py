"""Metrics, confusion matrices, patient-wise cross-validation, threshold sweeps.

Reporting uses the 5-class merged view (E folded into Q) while training
stays in the full 6-class view; :func:`evaluate_beats` does the merge.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import FULL_LABELS, MERGED_LABELS, merge_interference, split_by_patient
from .errors import DataError
from .network import build_network
from .seeding import substream
from .training import TrainConfig, beats_to_arrays, train


@dataclass
class MetricsReport:
    """Confusion counts (rows = true, cols = predicted) plus derived metrics."""

    labels: tuple
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float

    def per_class(self) -> dict:
        return {label: {"precision": float(self.precision[i]),
                        "recall": float(self.recall[i]),
                        "f1": float(self.f1[i])}
                for i, label in enumerate(self.labels)}

    def to_csv(self) -> str:
        lines = ["class,precision,recall,f1"]
        for i, label in enumerate(self.labels):
            lines.append(f"{label},{self.precision[i]!r},{self.recall[i]!r},{self.f1[i]!r}")
        return "\n".join(lines) + "\n"

    def confusion_text(self) -> str:
        width = max(6, max(len(str(int(v))) for v in self.confusion.flat) + 1)
        head = "true\\pred" + "".join(f"{l:>{width}}" for l in self.labels)
        lines = [head]
        for i, label in enumerate(self.labels):
            row = "".join(f"{int(v):>{width}}" for v in self.confusion[i])
            lines.append(f"{label:>9}" + row)
        lines.append(f"accuracy {self.accuracy!r}")
        return "\n".join(lines) + "\n"


def confusion_matrix(preds, truths, labels) -> np.ndarray:
    """counts[t][p] = number of samples with truth t predicted as p."""
    if len(preds) != len(truths):
        raise DataError(f"{len(preds)} predictions vs {len(truths)} truths")
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for pred, truth in zip(preds, truths):
        if truth not in index:
            raise DataError(f"truth label {truth!r} outside taxonomy {labels}")
        if pred not in index:
            raise DataError(f"predicted label {pred!r} outside taxonomy {labels}")
        counts[index[truth], index[pred]] += 1
    return counts


def precision_recall_f1(confusion: np.ndarray):
    """Per-class (precision, recall, f1); zero denominators yield 0."""
    confusion = np.asarray(confusion, dtype=np.float64)
    tp = np.diag(confusion)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    precision = np.divide(tp, tp + fp, out=np.zeros_like(tp), where=(tp + fp) > 0)
    recall = np.divide(tp, tp + fn, out=np.zeros_like(tp), where=(tp + fn) > 0)
    pr_sum = precision + recall
    f1 = np.divide(2.0 * precision * recall, pr_sum,
                   out=np.zeros_like(tp), where=pr_sum > 0)
    return precision, recall, f1


def accuracy_from_confusion(confusion: np.ndarray) -> float:
    confusion = np.asarray(confusion)
    total = confusion.sum()
    return float(np.trace(confusion) / total) if total else 0.0


def report_from_predictions(preds, truths, labels) -> MetricsReport:
    confusion = confusion_matrix(preds, truths, labels)
    precision, recall, f1 = precision_recall_f1(confusion)
    return MetricsReport(labels=tuple(labels), confusion=confusion,
                         precision=precision, recall=recall, f1=f1,
                         accuracy=accuracy_from_confusion(confusion))


def evaluate_beats(model, beats, merged: bool = True, chunk: int = 512) -> MetricsReport:
    """Predict a beat collection and report metrics.

    Truth is the clean label when present, the given label otherwise.
    With ``merged=True`` predictions and truths are folded to the 5-class
    reporting view first.
    """
    x, given, clean = beats_to_arrays(beats, FULL_LABELS)
    truth_idx = clean if clean is not None else given
    preds = []
    for start in range(0, len(x), chunk):
        probs = model.forward(x[start:start + chunk], mode="eval", tape=None).data
        preds.extend(FULL_LABELS[i] for i in probs.argmax(axis=1))
    truths = [FULL_LABELS[i] for i in truth_idx]
    if merged:
        preds = [merge_interference(p) for p in preds]
        truths = [merge_interference(t) for t in truths]
        return report_from_predictions(preds, truths, MERGED_LABELS)
    return report_from_predictions(preds, truths, FULL_LABELS)


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------


def crossvalidate(beats, network_spec, config: TrainConfig, n_folds: int = 3,
                  holdout_patients: int = 2):
    """Repeated patient-holdout validation with disjoint holdout sets.

    Returns (reports, aggregate) where aggregate holds mean/std accuracy
    and the per-fold values.  Patients are shuffled once from the config
    seed; fold i holds out the i-th slice.
    """
    patients = sorted({b.patient_id for b in beats})
    if len(patients) < 3:
        raise DataError(f"cross-validation needs >= 3 patients, have {len(patients)}")
    if n_folds * holdout_patients > len(patients):
        raise DataError(
            f"{n_folds} folds x {holdout_patients} held-out patients exceeds "
            f"{len(patients)} available")
    rng = substream(config.seed, "folds")
    order = list(rng.permutation(patients))
    reports = []
    for fold in range(n_folds):
        held = set(order[fold * holdout_patients:(fold + 1) * holdout_patients])
        train_b = [b for b in beats if b.patient_id not in held]
        val_b = [b for b in beats if b.patient_id in held]
        model = build_network(network_spec, substream(config.seed, "init"))
        result = train(model, train_b, val_b, config)
        reports.append(evaluate_beats(result.model, val_b))
    accuracies = [r.accuracy for r in reports]
    aggregate = {
        "mean_accuracy": float(np.mean(accuracies)),
        "std_accuracy": float(np.std(accuracies)),
        "fold_accuracies": accuracies,
    }
    return reports, aggregate


def confidence_sweep(beats, taus, network_spec, config: TrainConfig,
                     holdout_patients: int = 2):
    """Train once per threshold (shared seed and split); returns [(tau, accuracy)].

    Rows come back sorted by descending tau, matching the reporting layout.
    """
    train_b, val_b = split_by_patient(beats, holdout_patients,
                                      substream(config.seed, "folds"))
    rows = []
    for tau in taus:
        cfg = replace(config, routing=replace(config.routing, tau=tau))
        model = build_network(network_spec, substream(cfg.seed, "init"))
        result = train(model, train_b, val_b, cfg)
        rows.append((float(tau), evaluate_beats(result.model, val_b).accuracy))
    return sorted(rows, key=lambda row: -row[0])


def write_sweep_csv(path, rows) -> None:
    lines = ["tau,accuracy"] + [f"{tau!r},{acc!r}" for tau, acc in rows]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
