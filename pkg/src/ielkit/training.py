"""Alternating-source training for the segmenter and the amplified
reconstruction objective for the generator."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ielkit import autodiff as ad
from ielkit import models
from ielkit.errors import ConfigError, DataError, NumericsError
from ielkit.grids import as_grid, as_label_grid
from ielkit.inverse_evolution import IELConfig, iel, iel_apply
from ielkit.metrics import confusion_matrix, miou_from_confusion
from ielkit.optim import sgd_step
from ielkit.scenes import SegSample

log = logging.getLogger(__name__)

MIXING_MODES = ("alternate", "source-only")


@dataclass
class TrainSchedule:
    epochs: int = 6
    batch_size: int = 4
    learning_rate: float = 0.05
    seed: int = 0
    iel: IELConfig = field(default_factory=lambda: IELConfig(depth=5, tau=0.1, boundary="replicate"))
    mff_enabled: bool = True
    mixing: str = "alternate"

    def __post_init__(self):
        if self.mixing not in MIXING_MODES:
            raise ConfigError(f"mixing must be one of {MIXING_MODES}, got {self.mixing!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch size must be >= 1")


@dataclass
class HistoryRow:
    epoch: int
    step: int
    loss: float
    val_miou: float | None


@dataclass
class TrainResult:
    history: list[HistoryRow]
    source_steps: int
    generated_steps: int


def write_history_csv(path, history: list[HistoryRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "loss", "val_miou"])
        for row in history:
            miou_txt = "" if row.val_miou is None else f"{row.val_miou:.10g}"
            writer.writerow([row.epoch, row.step, f"{row.loss:.10g}", miou_txt])


def seg_loss(logits, label) -> float:
    """Mean pixel cross-entropy, max-subtraction stabilized."""
    z = as_grid(logits, "logits")
    lab = as_label_grid(label, z.shape[0], "label")
    if lab.shape != z.shape[1:]:
        raise DataError(f"label {lab.shape} does not match logits {z.shape[1:]}")
    return float(ad.softmax_ce(ad.Var(z), lab).value)


def gen_loss(output, target, iel_cfg: IELConfig) -> float:
    """MSE between the amplified output and the amplified target.

    The stack is linear, so this equals the mean of iel_apply(output -
    target)^2: high-frequency generation errors dominate the loss.
    """
    out = as_grid(output, "output")
    tgt = as_grid(target, "target")
    if out.shape != tgt.shape:
        raise DataError(f"output {out.shape} and target {tgt.shape} differ in shape")
    diff = iel_apply(out, iel_cfg) - iel_apply(tgt, iel_cfg)
    return float((diff**2).mean())


def _epoch_batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def _validate(model: models.ToySegmenter, val_set: Sequence[SegSample] | None) -> float | None:
    if not val_set:
        return None
    cm = None
    for s in val_set:
        pred = models.predict(model, s.image)
        c = confusion_matrix(pred, s.label, model.n_classes)
        cm = c if cm is None else cm + c
    return miou_from_confusion(cm)[1]


def train_seg(
    model: models.ToySegmenter,
    source: Sequence[SegSample],
    generated: Sequence[SegSample] | None,
    schedule: TrainSchedule,
    val_set: Sequence[SegSample] | None = None,
) -> TrainResult:
    """Gradient-descent training with alternating source/generated batches.

    Odd steps consume source batches, even steps generated ones; with
    equal corpus sizes exactly half of all steps are generated.  History
    holds one row per epoch (mean loss, validation mIoU).
    """
    if not source:
        raise ConfigError("source corpus is empty")
    if schedule.mixing == "alternate" and not generated:
        raise ConfigError("alternate mixing requires a non-empty generated corpus")
    model.mff_enabled = schedule.mff_enabled
    rng = np.random.default_rng([schedule.seed, 11])
    history: list[HistoryRow] = []
    step = 0
    src_steps = gen_steps = 0
    for epoch in range(1, schedule.epochs + 1):
        src_batches = _epoch_batches(rng.permutation(len(source)), schedule.batch_size)
        if schedule.mixing == "alternate":
            gen_order = rng.permutation(len(generated))
            gen_pos = 0
        losses = []
        for src_batch in src_batches:
            plan = [("source", src_batch)]
            if schedule.mixing == "alternate":
                take = np.take(
                    gen_order,
                    np.arange(gen_pos, gen_pos + len(src_batch)),
                    mode="wrap",
                )
                gen_pos += len(src_batch)
                plan.append(("generated", take))
            for kind, batch_idx in plan:
                corpus = source if kind == "source" else generated
                batch = [corpus[int(i)] for i in batch_idx]
                step += 1
                if kind == "source":
                    src_steps += 1
                else:
                    gen_steps += 1
                losses.append(_seg_step(model, batch, schedule))
        residues = getattr(model, "_last_residues", None)
        if residues:
            log.info("epoch %d max fusion residue %.3e", epoch, max(residues))
        epoch_loss = float(np.mean(losses))
        history.append(
            HistoryRow(epoch=epoch, step=step, loss=epoch_loss, val_miou=_validate(model, val_set))
        )
    return TrainResult(history=history, source_steps=src_steps, generated_steps=gen_steps)


def _seg_step(model: models.ToySegmenter, batch: list[SegSample], schedule: TrainSchedule) -> float:
    total = None
    leaves_all = []
    for s in batch:
        logits, info = models.trace_segmenter(model, s.image, train=True, iel_cfg=schedule.iel)
        loss = ad.softmax_ce(logits, as_label_grid(s.label, model.n_classes))
        total = loss if total is None else ad.add(total, loss)
        leaves_all.append(info["leaves"])
        model._last_residues = info["residues"]
    total = ad.scale(total, 1.0 / len(batch))
    value = float(total.value)
    if not np.isfinite(value):
        raise NumericsError(f"training loss became non-finite ({value})")
    ad.backward(total)
    for leaves in leaves_all:
        ad.harvest_grads(model.params, leaves)
    sgd_step(model.params, schedule.learning_rate)
    return value


def train_gen(
    gen: models.ToyGenerator,
    corpus: Sequence[SegSample],
    schedule: TrainSchedule,
) -> TrainResult:
    """Minimize the amplified reconstruction error over (label, image)
    pairs; the IEL stack lives in the loss only, evaluation
    reconstructions never apply it."""
    if not corpus:
        raise ConfigError("generator corpus is empty")
    rng = np.random.default_rng([schedule.seed, 13])
    history: list[HistoryRow] = []
    step = 0
    for epoch in range(1, schedule.epochs + 1):
        order = rng.permutation(len(corpus))
        losses = []
        for batch_idx in _epoch_batches(order, schedule.batch_size):
            batch = [corpus[int(i)] for i in batch_idx]
            step += 1
            total = None
            leaves_all = []
            for s in batch:
                noise = rng.uniform(0.0, 1.0, size=s.label.shape)
                out, info = models.trace_generator(gen, s.label, noise)
                amplified = iel(out, schedule.iel) if schedule.iel.depth > 0 else out
                target = iel_apply(s.image, schedule.iel)
                loss = ad.mse(amplified, target)
                total = loss if total is None else ad.add(total, loss)
                leaves_all.append(info["leaves"])
            total = ad.scale(total, 1.0 / len(batch))
            value = float(total.value)
            if not np.isfinite(value):
                raise NumericsError(f"generator loss became non-finite ({value})")
            ad.backward(total)
            for leaves in leaves_all:
                ad.harvest_grads(gen.params, leaves)
            sgd_step(gen.params, schedule.learning_rate)
            losses.append(value)
        history.append(
            HistoryRow(epoch=epoch, step=step, loss=float(np.mean(losses)), val_miou=None)
        )
    return TrainResult(history=history, source_steps=step, generated_steps=0)


def reconstruction_noise(seed: int, shape: tuple[int, int]) -> np.ndarray:
    """Fixed evaluation noise channel for reproducible reconstructions."""
    return np.random.default_rng([seed, 17]).uniform(0.0, 1.0, size=shape)
