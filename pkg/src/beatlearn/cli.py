"""Command-line entry point: `beatlearn synth|preprocess|train|eval|sweep`.

Every command takes an optional JSON config file plus overriding flags
(precedence: flags > file > defaults), echoes the effective configuration
next to its outputs, and derives all randomness from one root seed.  Exit
codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .data import (
    FULL_LABELS,
    LabeledBeat,
    NoiseSpec,
    balance_classes,
    build_synthetic_corpus,
    inject_label_noise,
    load_corpus_csv,
    save_corpus_csv,
    split_by_patient,
)
from .errors import (
    BeatlearnError,
    CheckpointError,
    ConfigError,
    DataError,
    ParseError,
)
from .evaluation import confidence_sweep, evaluate_beats, write_sweep_csv
from .network import NetworkSpec, build_network, default_network_spec
from .seeding import substream
from .signals import (
    SynthConfig,
    bandpass_filter,
    detect_qrs,
    load_trace_binary,
    load_trace_csv,
    normalize_beat,
    segment_beats,
)
from .training import RoutingPolicy, TrainConfig, train, write_history_csv

DEFAULT_TAUS = (0.99, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3)


@dataclass
class ExperimentConfig:
    """Everything one reproducible run needs; serializes to/from JSON."""

    seed: int = 0
    out_dir: str = "runs/out"
    corpus_path: str = "corpus.csv"
    checkpoint_path: str | None = None
    classes: tuple = FULL_LABELS
    beats_per_class: int = 200
    n_patients: int = 12
    holdout_patients: int = 2
    noise_rate: float = 0.0
    noise_exempt: tuple = ("A",)
    base_filters: int = 32
    stem_stride: int = 1
    dropout_rate: float = 0.2
    epochs: int = 30
    batch_size: int = 256
    alpha: float = 0.05
    momentum: float = 0.9
    tau: float = 0.8
    per_class_tau: dict = field(default_factory=lambda: {"A": 0.5})
    warmup_epochs: int = 2
    taus: tuple = DEFAULT_TAUS
    balance: bool = True

    def network_spec(self) -> NetworkSpec:
        return default_network_spec(
            base_filters=self.base_filters,
            n_classes=len(FULL_LABELS),
            dropout_rate=self.dropout_rate,
            stem_stride=self.stem_stride,
        )

    def train_config(self, baseline: bool = False) -> TrainConfig:
        warmup = self.epochs if baseline else self.warmup_epochs
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            alpha=self.alpha,
            momentum=self.momentum,
            seed=self.seed,
            routing=RoutingPolicy(tau=self.tau, per_class_tau=dict(self.per_class_tau),
                                  warmup_epochs=warmup),
        )

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(rate=self.noise_rate, seed=self.seed,
                         exempt_labels=frozenset(self.noise_exempt))

    def to_json(self) -> str:
        data = asdict(self)
        data["classes"] = list(self.classes)
        data["noise_exempt"] = list(self.noise_exempt)
        data["taus"] = list(self.taus)
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.classes = tuple(cfg.classes)
        cfg.noise_exempt = tuple(cfg.noise_exempt)
        cfg.taus = tuple(cfg.taus)
        return cfg


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _echo_config(config: ExperimentConfig, out_dir: Path) -> None:
    _atomic_write_text(out_dir / "config.json", config.to_json())


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        config = ExperimentConfig.from_json(path.read_text())
    else:
        config = ExperimentConfig()
    overrides = {
        "seed": "seed",
        "out": "out_dir",
        "corpus": "corpus_path",
        "checkpoint": "checkpoint_path",
        "epochs": "epochs",
        "tau": "tau",
        "noise_rate": "noise_rate",
        "beats_per_class": "beats_per_class",
        "patients": "n_patients",
        "holdout": "holdout_patients",
        "alpha": "alpha",
        "batch_size": "batch_size",
        "base_filters": "base_filters",
        "stem_stride": "stem_stride",
        "warmup": "warmup_epochs",
    }
    for arg_name, field_name in overrides.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            config = replace(config, **{field_name: value})
    if getattr(args, "classes", None):
        config = replace(config, classes=tuple(args.classes.split(",")))
    if getattr(args, "taus", None):
        config = replace(config, taus=tuple(float(t) for t in args.taus.split(",")))
    return config


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    config = _load_config(args)
    for label in config.classes:
        if label not in FULL_LABELS:
            raise ConfigError(f"unknown class {label!r}; expected subset of {FULL_LABELS}")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = build_synthetic_corpus(config.beats_per_class, config.n_patients,
                                    seed=config.seed, classes=config.classes)
    corpus_path = out_dir / Path(config.corpus_path).name
    save_corpus_csv(corpus_path, corpus)
    _echo_config(config, out_dir)
    counts = Counter(b.given_label for b in corpus)
    for label in config.classes:
        print(f"{label}: {counts[label]}")
    print(f"wrote {len(corpus)} beats to {corpus_path}")
    return 0


def cmd_preprocess(args) -> int:
    config = _load_config(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    beats = []
    for name in args.traces:
        path = Path(name)
        if not path.is_file():
            raise ConfigError(f"trace file not found: {path}")
        if path.suffix == ".bin":
            trace = load_trace_binary(path, patient_id=path.stem)
        else:
            trace = load_trace_csv(path)
            if not trace.patient_id:
                trace.patient_id = path.stem
        if len(trace) < 250:
            print(f"warning: {path} shorter than one beat window, skipped",
                  file=sys.stderr)
            continue
        filtered = bandpass_filter(trace, 5.0, 15.0)
        peaks = detect_qrs(trace)
        if peaks.size == 0:
            print(f"warning: no beats found in {path}", file=sys.stderr)
        for segment in segment_beats(filtered, peaks):
            beats.append(LabeledBeat(segment=normalize_beat(segment),
                                     given_label=None,
                                     patient_id=trace.patient_id))
    corpus_path = out_dir / Path(config.corpus_path).name
    save_corpus_csv(corpus_path, beats)
    _echo_config(config, out_dir)
    print(f"wrote {len(beats)} beats to {corpus_path}")
    return 0


def _load_training_corpus(config: ExperimentConfig):
    path = Path(config.corpus_path)
    if not path.is_file():
        raise ConfigError(f"corpus file not found: {path}")
    beats = load_corpus_csv(path)
    if not beats:
        raise DataError(f"corpus {path} holds no beats")
    if any(b.given_label is None for b in beats):
        raise DataError(f"corpus {path} has unlabeled beats; label it before training")
    if config.balance:
        beats = balance_classes(beats, substream(config.seed, "data"))
    if config.noise_rate > 0.0:
        beats = inject_label_noise(beats, config.noise_spec())
    return beats


def cmd_train(args) -> int:
    config = _load_config(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    beats = _load_training_corpus(config)
    train_b, val_b = split_by_patient(beats, config.holdout_patients,
                                      substream(config.seed, "folds"))
    model = build_network(config.network_spec(), substream(config.seed, "init"))
    result = train(model, train_b, val_b, config.train_config(baseline=args.baseline))
    ckpt.save_arrays(out_dir / "checkpoint", model.state_dict())
    write_history_csv(out_dir / "history.csv", result.history)
    _echo_config(config, out_dir)
    best = (f"best val accuracy {result.best_val_accuracy:.4f} "
            f"at epoch {result.best_epoch}" if result.best_epoch is not None
            else "no validation split")
    print(f"trained {config.epochs} epochs; {best}")
    print(f"checkpoint: {out_dir / 'checkpoint'}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    if not config.checkpoint_path:
        raise ConfigError("eval needs --checkpoint")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus_path = Path(config.corpus_path)
    if not corpus_path.is_file():
        raise ConfigError(f"corpus file not found: {corpus_path}")
    beats = load_corpus_csv(corpus_path)
    if not beats:
        raise DataError(f"corpus {corpus_path} holds no beats")
    model = build_network(config.network_spec(), substream(config.seed, "init"))
    model.load_state_dict(ckpt.load_arrays(config.checkpoint_path))
    report = evaluate_beats(model, beats, merged=True)
    _atomic_write_text(out_dir / "metrics.csv", report.to_csv())
    _atomic_write_text(out_dir / "confusion.txt", report.confusion_text())
    _echo_config(config, out_dir)
    print(report.confusion_text(), end="")
    print(f"reports under {out_dir}")
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    beats = _load_training_corpus(config)
    rows = confidence_sweep(beats, config.taus, config.network_spec(),
                            config.train_config(),
                            holdout_patients=config.holdout_patients)
    write_sweep_csv(out_dir / "sweep.csv", rows)
    _echo_config(config, out_dir)
    for tau, acc in rows:
        print(f"tau {tau}: accuracy {acc:.4f}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beatlearn",
        description="Noise-robust heartbeat classification experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="root random seed")
        p.add_argument("--out", help="output directory")

    p_synth = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    common(p_synth)
    p_synth.add_argument("--classes", help="comma-separated class letters, e.g. N,V")
    p_synth.add_argument("--beats-per-class", dest="beats_per_class", type=int)
    p_synth.add_argument("--patients", type=int, help="number of synthetic patients")
    p_synth.add_argument("--corpus", help="corpus file name to write")
    p_synth.set_defaults(func=cmd_synth)

    p_pre = sub.add_parser("preprocess", help="turn raw traces into an unlabeled corpus")
    common(p_pre)
    p_pre.add_argument("traces", nargs="+", help="trace files (.csv or .bin)")
    p_pre.add_argument("--corpus", help="corpus file name to write")
    p_pre.set_defaults(func=cmd_preprocess)

    p_train = sub.add_parser("train", help="train a classifier on a labeled corpus")
    common(p_train)
    p_train.add_argument("--corpus", help="labeled corpus CSV")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--tau", type=float, help="global confidence threshold")
    p_train.add_argument("--noise-rate", dest="noise_rate", type=float)
    p_train.add_argument("--alpha", type=float, help="learning rate")
    p_train.add_argument("--batch-size", dest="batch_size", type=int)
    p_train.add_argument("--base-filters", dest="base_filters", type=int)
    p_train.add_argument("--stem-stride", dest="stem_stride", type=int)
    p_train.add_argument("--warmup", type=int, help="pure-PL warmup epochs")
    p_train.add_argument("--holdout", type=int, help="patients held out for validation")
    p_train.add_argument("--baseline", action="store_true",
                         help="disable negative learning (warmup spans all epochs)")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    common(p_eval)
    p_eval.add_argument("--checkpoint", help="checkpoint directory")
    p_eval.add_argument("--corpus", help="corpus CSV to evaluate")
    p_eval.add_argument("--base-filters", dest="base_filters", type=int)
    p_eval.add_argument("--stem-stride", dest="stem_stride", type=int)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="accuracy across confidence thresholds")
    common(p_sweep)
    p_sweep.add_argument("--corpus", help="labeled corpus CSV")
    p_sweep.add_argument("--taus", help="comma-separated thresholds, e.g. 0.9,0.8")
    p_sweep.add_argument("--epochs", type=int)
    p_sweep.add_argument("--noise-rate", dest="noise_rate", type=float)
    p_sweep.add_argument("--alpha", type=float)
    p_sweep.add_argument("--batch-size", dest="batch_size", type=int)
    p_sweep.add_argument("--base-filters", dest="base_filters", type=int)
    p_sweep.add_argument("--stem-stride", dest="stem_stride", type=int)
    p_sweep.add_argument("--holdout", type=int)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BeatlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
