"""Confidence-routed selective positive/negative training.

Each batch is partitioned by the model's own output probability at the
given label: samples at or above their class threshold train positively
(cross-entropy on the given label), the rest train negatively
(cross-entropy on the *complement* of a freshly drawn complementary
label, i.e. minimizing -log(1 - p) there).  Both losses are summed and
descended in one step.  The first ``warmup_epochs`` epochs train
everything positively so confidences mean something before routing
starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import SGD, Tape, Tensor
from .data import FULL_LABELS, label_index
from .errors import ConfigError, ContractError, DataError
from .seeding import substream

PROB_CLAMP = 1e-12  # probabilities clipped to [PROB_CLAMP, 1 - PROB_CLAMP] inside losses


@dataclass
class RoutingPolicy:
    """Confidence thresholds deciding positive vs negative training per sample."""

    tau: float = 0.8
    per_class_tau: dict = field(default_factory=lambda: {"A": 0.5})
    warmup_epochs: int = 2

    def __post_init__(self):
        for value in (self.tau, *self.per_class_tau.values()):
            if not 0.0 < value < 1.0:
                raise ConfigError(f"confidence thresholds must be in (0, 1), got {value}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")

    def threshold(self, label: str) -> float:
        return self.per_class_tau.get(label, self.tau)


@dataclass
class ComplementaryLabel:
    """A class the sample is asserted NOT to be; never equals the source label."""

    y_prime: str
    source_label: str

    def __post_init__(self):
        if self.y_prime == self.source_label:
            raise ContractError(
                f"complementary label must differ from source, both are {self.y_prime!r}")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    alpha: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    routing: RoutingPolicy = field(default_factory=RoutingPolicy)
    pl_weight: float = 1.0
    nl_weight: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.alpha}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


def route_batch(probs: np.ndarray, given_labels, policy: RoutingPolicy,
                labels=FULL_LABELS):
    """Split batch indices into (clean, noisy) by confidence at the given label.

    Sample i is clean iff probs[i, given_i] >= threshold(given label); the
    two index arrays partition the batch exactly.
    """
    probs = np.asarray(probs)
    given_idx = np.asarray([label_index(lbl, labels) if isinstance(lbl, str) else int(lbl)
                            for lbl in given_labels])
    thresholds = np.array([policy.threshold(lbl) for lbl in labels])
    confidence = probs[np.arange(len(given_idx)), given_idx]
    is_clean = confidence >= thresholds[given_idx]
    return np.flatnonzero(is_clean), np.flatnonzero(~is_clean)


def gen_complementary_label(source: str, labels, rng: np.random.Generator) -> ComplementaryLabel:
    """Draw y' uniformly from the taxonomy minus the source label."""
    n = len(labels)
    if n < 2:
        raise ConfigError(f"need at least 2 labels to complement, got {n}")
    shift = int(rng.integers(1, n))
    y_prime = labels[(label_index(source, labels) + shift) % n]
    return ComplementaryLabel(y_prime=y_prime, source_label=source)


def sample_complementary_indices(source_idx: np.ndarray, n_classes: int,
                                 rng: np.random.Generator) -> np.ndarray:
    """Vectorized uniform draws over the other classes, one per source index."""
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes to complement, got {n_classes}")
    source_idx = np.asarray(source_idx)
    shifts = rng.integers(1, n_classes, size=source_idx.shape)
    return (source_idx + shifts) % n_classes


def _one_hot(idx: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(idx), n_classes))
    out[np.arange(len(idx)), idx] = 1.0
    return out


def positive_loss(tape, probs: Tensor, one_hot: np.ndarray) -> Tensor:
    """Mean cross-entropy -log(p) at the labeled class."""
    selected = (probs.data * one_hot).sum(axis=1)
    clamped = np.clip(selected, PROB_CLAMP, 1.0 - PROB_CLAMP)
    result = Tensor(np.mean(-np.log(clamped)))

    if tape is not None:
        n = len(clamped)
        active = (selected == clamped).astype(np.float64)  # clamp stops the gradient

        def bwd(g):
            rows = -active / (clamped * n) * float(g)
            return (one_hot * rows[:, None],)

        tape.record(result, (probs,), bwd)
    return result


def negative_loss(tape, probs: Tensor, comp_one_hot: np.ndarray) -> Tensor:
    """Mean complementary cross-entropy -log(1 - p) at the complementary class.

    This is the positive loss with the selected probability flipped to
    1 - p: descending it pushes probability away from the complementary
    class.
    """
    selected = (probs.data * comp_one_hot).sum(axis=1)
    clamped = np.clip(selected, PROB_CLAMP, 1.0 - PROB_CLAMP)
    # formed as log(1 - p), not log1p(-p): the flip identity against
    # positive_loss(1 - p) then holds bit-exactly
    result = Tensor(np.mean(-np.log(1.0 - clamped)))

    if tape is not None:
        n = len(clamped)
        active = (selected == clamped).astype(np.float64)

        def bwd(g):
            rows = active / ((1.0 - clamped) * n) * float(g)
            return (comp_one_hot * rows[:, None],)

        tape.record(result, (probs,), bwd)
    return result


@dataclass
class StepReport:
    """What one optimization step did: losses and routing tallies."""

    total_loss: float
    pl_loss: float | None
    nl_loss: float | None
    n_clean: int
    n_noisy: int
    n_mislabeled: int | None = None
    n_mislabeled_routed_nl: int | None = None
    n_truly_clean: int | None = None
    n_truly_clean_routed_nl: int | None = None


def combined_step(model, optimizer: SGD, x: np.ndarray, given_idx: np.ndarray,
                  config: TrainConfig, dropout_rng, comp_rng,
                  policy: RoutingPolicy | None = None,
                  labels=FULL_LABELS, clean_idx: np.ndarray | None = None) -> StepReport:
    """One forward, confidence routing, combined PL+NL loss, one SGD step.

    ``policy=None`` trains the whole batch positively (warmup / baseline).
    ``clean_idx`` (hidden ground-truth label indices) is only used to tally
    how routing treated mislabeled vs truly clean samples.
    """
    if len(x) == 0:
        raise ContractError("combined_step needs a non-empty batch")
    n_classes = model.spec.n_classes
    tape = Tape()
    probs = model.forward(x, mode="train", tape=tape, dropout_rng=dropout_rng)

    if policy is None:
        clean_rows = np.arange(len(x))
        noisy_rows = np.array([], dtype=int)
    else:
        detached = probs.data.copy()
        clean_rows, noisy_rows = route_batch(
            detached, [labels[i] for i in given_idx], policy, labels)

    pl_term = nl_term = None
    if clean_rows.size:
        pl_probs = ad.take_rows(tape, probs, clean_rows)
        pl_term = positive_loss(tape, pl_probs, _one_hot(given_idx[clean_rows], n_classes))
    if noisy_rows.size:
        comp_idx = sample_complementary_indices(given_idx[noisy_rows], n_classes, comp_rng)
        nl_probs = ad.take_rows(tape, probs, noisy_rows)
        nl_term = negative_loss(tape, nl_probs, _one_hot(comp_idx, n_classes))

    if pl_term is not None and nl_term is not None:
        total = ad.add(tape, ad.scale(tape, pl_term, config.pl_weight),
                       ad.scale(tape, nl_term, config.nl_weight))
    elif pl_term is not None:
        total = ad.scale(tape, pl_term, config.pl_weight)
    else:
        total = ad.scale(tape, nl_term, config.nl_weight)

    optimizer.zero_grad()
    ad.backward(tape, total)
    optimizer.step()

    report = StepReport(
        total_loss=total.item(),
        pl_loss=pl_term.item() if pl_term is not None else None,
        nl_loss=nl_term.item() if nl_term is not None else None,
        n_clean=int(clean_rows.size),
        n_noisy=int(noisy_rows.size),
    )
    if clean_idx is not None:
        mislabeled = given_idx != clean_idx
        noisy_mask = np.zeros(len(x), dtype=bool)
        noisy_mask[noisy_rows] = True
        report.n_mislabeled = int(mislabeled.sum())
        report.n_mislabeled_routed_nl = int((mislabeled & noisy_mask).sum())
        report.n_truly_clean = int((~mislabeled).sum())
        report.n_truly_clean_routed_nl = int((~mislabeled & noisy_mask).sum())
    return report


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    pl_loss: float
    nl_loss: float
    noisy_fraction: float
    val_accuracy: float | None
    nl_rate_mislabeled: float | None = None
    nl_rate_clean: float | None = None


@dataclass
class TrainResult:
    model: object
    history: list
    best_epoch: int | None
    best_val_accuracy: float | None


def beats_to_arrays(beats, labels=FULL_LABELS):
    """Stack segments into [n, 1, W]; return (x, given_idx, clean_idx | None)."""
    if not beats:
        raise DataError("empty beat collection")
    x = np.stack([b.segment.values for b in beats])[:, None, :]
    for b in beats:
        if b.given_label is None:
            raise DataError("beat without a given label cannot be used for training")
    given = np.array([label_index(b.given_label, labels) for b in beats])
    if all(b.clean_label is not None for b in beats):
        clean = np.array([label_index(b.clean_label, labels) for b in beats])
    else:
        clean = None
    return x, given, clean


def _accuracy(model, x: np.ndarray, y_idx: np.ndarray, chunk: int = 512) -> float:
    hits = 0
    for start in range(0, len(x), chunk):
        probs = model.forward(x[start:start + chunk], mode="eval", tape=None).data
        hits += int((probs.argmax(axis=1) == y_idx[start:start + chunk]).sum())
    return hits / len(x)


def train(model, train_beats, val_beats, config: TrainConfig,
          labels=FULL_LABELS) -> TrainResult:
    """Full training loop with per-epoch history and best-validation restore.

    Epochs below ``config.routing.warmup_epochs`` train purely positively;
    afterwards every batch is routed.  Validation accuracy (used both for
    the history and for best-checkpoint selection) is measured against the
    given labels: that is what a practitioner can actually observe on a
    noisy corpus.  History rows also tally how often mislabeled vs truly
    clean samples were routed to negative learning, when ground truth is
    available.
    """
    if model.spec.n_classes != len(labels):
        raise DataError(
            f"model has {model.spec.n_classes} classes but taxonomy has {len(labels)}")
    x_train, y_given, y_clean = beats_to_arrays(train_beats, labels)
    have_val = len(val_beats) > 0
    if have_val:
        x_val, v_given, _ = beats_to_arrays(val_beats, labels)
        y_val = v_given

    data_rng = substream(config.seed, "data")
    dropout_rng = substream(config.seed, "dropout")
    comp_rng = substream(config.seed, "routing")
    optimizer = SGD(model.parameters(), alpha=config.alpha, momentum=config.momentum)

    history: list[EpochStats] = []
    best_state = None
    best_epoch = None
    best_val = None
    for epoch in range(config.epochs):
        policy = config.routing if epoch >= config.routing.warmup_epochs else None
        order = data_rng.permutation(len(x_train))
        sums = {"loss": 0.0, "pl": 0.0, "nl": 0.0, "n": 0, "n_clean": 0, "n_noisy": 0,
                "mis": 0, "mis_nl": 0, "tc": 0, "tc_nl": 0}
        for start in range(0, len(order), config.batch_size):
            rows = order[start:start + config.batch_size]
            report = combined_step(
                model, optimizer, x_train[rows], y_given[rows], config,
                dropout_rng, comp_rng, policy=policy, labels=labels,
                clean_idx=y_clean[rows] if y_clean is not None else None)
            sums["loss"] += report.total_loss * len(rows)
            sums["n"] += len(rows)
            if report.pl_loss is not None:
                sums["pl"] += report.pl_loss * report.n_clean
            if report.nl_loss is not None:
                sums["nl"] += report.nl_loss * report.n_noisy
            sums["n_clean"] += report.n_clean
            sums["n_noisy"] += report.n_noisy
            if report.n_mislabeled is not None:
                sums["mis"] += report.n_mislabeled
                sums["mis_nl"] += report.n_mislabeled_routed_nl
                sums["tc"] += report.n_truly_clean
                sums["tc_nl"] += report.n_truly_clean_routed_nl

        val_acc = _accuracy(model, x_val, y_val) if have_val else None
        history.append(EpochStats(
            epoch=epoch,
            train_loss=sums["loss"] / sums["n"],
            pl_loss=sums["pl"] / sums["n_clean"] if sums["n_clean"] else 0.0,
            nl_loss=sums["nl"] / sums["n_noisy"] if sums["n_noisy"] else 0.0,
            noisy_fraction=sums["n_noisy"] / sums["n"],
            val_accuracy=val_acc,
            nl_rate_mislabeled=sums["mis_nl"] / sums["mis"] if sums["mis"] else None,
            nl_rate_clean=sums["tc_nl"] / sums["tc"] if sums["tc"] else None,
        ))
        if have_val and (best_val is None or val_acc > best_val):
            best_val = val_acc
            best_epoch = epoch
            best_state = model.state_dict()

    if best_state is not None:
        model.load_state_dict(best_state)
    return TrainResult(model=model, history=history, best_epoch=best_epoch,
                       best_val_accuracy=best_val)


HISTORY_HEADER = "epoch,train_loss,pl_loss,nl_loss,noisy_fraction,val_accuracy"


def write_history_csv(path, history) -> None:
    lines = [HISTORY_HEADER]
    for row in history:
        val = repr(row.val_accuracy) if row.val_accuracy is not None else ""
        lines.append(",".join([
            str(row.epoch), repr(row.train_loss), repr(row.pl_loss),
            repr(row.nl_loss), repr(row.noisy_fraction), val]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
