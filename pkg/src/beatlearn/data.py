"""Labeled-beat corpus management.

The six-class taxonomy, class balancing by undersampling, controlled
symmetric label-noise injection, leakage-free patient-wise splits, and the
corpus CSV format.  Every beat keeps an optional hidden clean label so
experiments can measure what noise injection actually did.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, ParseError
from .signals import (
    SEGMENT_LENGTH,
    BeatSegment,
    SynthConfig,
    normalize_beat,
    segment_beats,
    synth_ecg,
)

# full taxonomy; the merged reporting view folds E (electromagnetic
# interference) into Q (motion interference)
FULL_LABELS = ("N", "V", "S", "A", "E", "Q")
MERGED_LABELS = ("N", "V", "S", "A", "Q")

# reference per-class beat counts of the source corpus; min class is S
REFERENCE_CLASS_COUNTS = {
    "N": 3_501_003,
    "V": 194_469,
    "S": 45_536,
    "A": 96_052,
    "E": 46_437,
    "Q": 148_020,
}


def label_index(label: str, labels=FULL_LABELS) -> int:
    try:
        return labels.index(label)
    except ValueError:
        raise DataError(f"unknown label {label!r}; expected one of {labels}")


def merge_interference(label: str) -> str:
    """Map a full-taxonomy label to the merged reporting view (E -> Q)."""
    if label not in FULL_LABELS:
        raise DataError(f"unknown label {label!r}; expected one of {FULL_LABELS}")
    return "Q" if label == "E" else label


@dataclass
class LabeledBeat:
    """One normalized segment plus its (possibly noisy) label.

    ``clean_label`` carries the ground truth in experiments; it is None for
    real recordings where no ground truth exists.
    """

    segment: BeatSegment
    given_label: str | None
    patient_id: str
    clean_label: str | None = None

    def __post_init__(self):
        for value in (self.given_label, self.clean_label):
            if value is not None and value not in FULL_LABELS:
                raise DataError(f"label {value!r} outside taxonomy {FULL_LABELS}")


@dataclass
class NoiseSpec:
    """Symmetric label-flip configuration; exempt labels are never flipped."""

    rate: float = 0.3
    mode: str = "symmetric"
    seed: int = 0
    exempt_labels: frozenset = frozenset({"A"})

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"noise rate must be in [0, 1), got {self.rate}")
        if self.mode != "symmetric":
            raise ConfigError(f"only symmetric noise is supported, got {self.mode!r}")
        self.exempt_labels = frozenset(self.exempt_labels)


def balanced_counts(counts: dict) -> dict:
    """Per-class target counts after undersampling: every class at the min count."""
    if not counts:
        raise DataError("no classes to balance")
    floor = min(counts.values())
    return {label: floor for label in counts}


def balance_classes(beats, rng: np.random.Generator, labels=None) -> list:
    """Undersample to equal per-class counts and shuffle.

    ``labels`` defaults to the labels present in ``beats``; passing an
    explicit collection makes a missing class an error.
    """
    by_label: dict = {}
    for beat in beats:
        by_label.setdefault(beat.given_label, []).append(beat)
    wanted = tuple(labels) if labels is not None else tuple(by_label)
    for label in wanted:
        if label not in by_label:
            raise DataError(f"class {label!r} has no beats to balance")
    floor = min(len(by_label[label]) for label in wanted)
    chosen = []
    for label in wanted:
        group = by_label[label]
        idx = rng.choice(len(group), size=floor, replace=False)
        chosen.extend(group[i] for i in idx)
    order = rng.permutation(len(chosen))
    return [chosen[i] for i in order]


def inject_label_noise(beats, spec: NoiseSpec, labels=FULL_LABELS) -> list:
    """Flip each non-exempt given label with probability ``spec.rate``.

    Flip targets are uniform over the other labels; ``clean_label`` is set
    to the pre-flip label when absent, so the realized flips stay
    recoverable as ``given_label != clean_label``.
    """
    rng = np.random.default_rng(spec.seed)
    n = len(labels)
    out = []
    for beat in beats:
        if beat.given_label is None:
            raise DataError("cannot inject noise into an unlabeled beat")
        clean = beat.clean_label if beat.clean_label is not None else beat.given_label
        given = beat.given_label
        if given not in spec.exempt_labels and rng.random() < spec.rate:
            shift = int(rng.integers(1, n))  # uniform over the n-1 other labels
            given = labels[(label_index(given, labels) + shift) % n]
        out.append(replace(beat, given_label=given, clean_label=clean))
    return out


def split_by_patient(beats, holdout_patients: int, rng: np.random.Generator):
    """Hold out whole patients: returns (train, validation) with disjoint ids."""
    patients = sorted({beat.patient_id for beat in beats})
    if holdout_patients < 0:
        raise ConfigError(f"holdout_patients must be >= 0, got {holdout_patients}")
    if len(patients) <= holdout_patients:
        raise DataError(
            f"need more than {holdout_patients} distinct patients, have {len(patients)}")
    held = set(rng.choice(patients, size=holdout_patients, replace=False)) \
        if holdout_patients else set()
    train = [b for b in beats if b.patient_id not in held]
    val = [b for b in beats if b.patient_id in held]
    return train, val


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------


def build_synthetic_corpus(beats_per_class: int, n_patients: int, seed: int,
                           classes=FULL_LABELS, synth: SynthConfig | None = None) -> list:
    """Generate a labeled corpus of normalized beats across synthetic patients.

    Each patient gets a slightly perturbed copy of the generator parameters
    (rate range, amplitudes), so patient-wise splits are meaningful.  Beats
    are segmented at the generator's ground-truth R positions;
    ``clean_label == given_label`` everywhere.
    """
    if beats_per_class < 1 or n_patients < 1:
        raise ConfigError("beats_per_class and n_patients must be >= 1")
    base = synth if synth is not None else SynthConfig()
    root = np.random.default_rng(np.random.SeedSequence((seed, 0xDA7A)))
    patient_rngs = root.spawn(n_patients)
    per_patient = _spread(beats_per_class, n_patients)
    corpus = []
    for p, (rng, quota) in enumerate(zip(patient_rngs, per_patient)):
        pid = f"p{p:02d}"
        lo, hi = base.heart_rate_bpm
        shift = rng.uniform(-0.3, 0.3) * (hi - lo)
        cfg = replace(
            base,
            heart_rate_bpm=(lo + max(shift, 0.0), hi + min(shift, 0.0)),
            r_amplitude_mv=base.r_amplitude_mv * rng.uniform(0.78, 1.22),
            t_amplitude_mv=base.t_amplitude_mv * rng.uniform(0.72, 1.28),
            p_amplitude_mv=base.p_amplitude_mv * rng.uniform(0.72, 1.28),
            pr_interval_s=base.pr_interval_s + rng.uniform(-0.025, 0.025),
            qrs_duration_s=base.qrs_duration_s * rng.uniform(0.9, 1.1),
            baseline_wander_mv=base.baseline_wander_mv * rng.uniform(0.5, 1.5),
            baseline_wander_hz=base.baseline_wander_hz * rng.uniform(0.7, 1.4),
        )
        for beat_type in classes:
            want = quota
            trace, peaks, _ = synth_ecg(cfg, want + 2, beat_type, rng=rng)
            segments = segment_beats(trace, peaks)
            if len(segments) < want:
                raise DataError(
                    f"generator produced {len(segments)} usable beats, wanted {want}")
            for seg in segments[:want]:
                corpus.append(LabeledBeat(segment=normalize_beat(seg),
                                          given_label=beat_type,
                                          patient_id=pid,
                                          clean_label=beat_type))
    return corpus


def _spread(total: int, bins: int) -> list:
    """Split ``total`` into ``bins`` near-equal integer quotas."""
    base, extra = divmod(total, bins)
    return [base + (1 if i < extra else 0) for i in range(bins)]


# ---------------------------------------------------------------------------
# corpus CSV
# ---------------------------------------------------------------------------

_CORPUS_HEADER = "patient_id,label,clean_label," + ",".join(
    f"s{i}" for i in range(SEGMENT_LENGTH))


def save_corpus_csv(path, beats) -> None:
    """Rows: ``patient_id,label,clean_label,s0,...,s249``; blank labels allowed."""
    lines = [_CORPUS_HEADER]
    for beat in beats:
        samples = ",".join(repr(float(v)) for v in beat.segment.values)
        lines.append(",".join([
            beat.patient_id,
            beat.given_label or "",
            beat.clean_label or "",
            samples,
        ]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_corpus_csv(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _CORPUS_HEADER:
        raise ParseError(f"{path}: line 1: bad corpus header")
    beats = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3 + SEGMENT_LENGTH:
            raise ParseError(
                f"{path}: line {lineno}: expected {3 + SEGMENT_LENGTH} fields, got {len(parts)}")
        patient_id, label, clean = parts[0], parts[1] or None, parts[2] or None
        try:
            values = np.array([float(v) for v in parts[3:]])
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: non-numeric sample value")
        try:
            beats.append(LabeledBeat(segment=BeatSegment(values, r_index=0),
                                     given_label=label, patient_id=patient_id,
                                     clean_label=clean))
        except DataError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}")
    return beats
