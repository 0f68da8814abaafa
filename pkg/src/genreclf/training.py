"""Weighted multi-label training loop with deterministic shuffling,
validation-driven checkpointing and bit-exact resume."""

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .checkpoint import read_blob, save_checkpoint, load_checkpoint
from .data import make_batch
from .errors import ConfigError, DataError, NumericError
from .metrics import MetricsReport, compute_report
from .models import ModelConfig, build_model, predict_scores
from .optim import Adam, clip_global_norm
from .rng import SeededRng, derive_seed
from .vocab import NUM_GENRES, label_vector

TRAINER_STATE_VERSION = 1


def weighted_bce(logits: Tensor, targets: np.ndarray, positive_weight: float = 1.0) -> Tensor:
    """Per sample, -(1/C) * sum_c [ w * y_c * log p_c + (1 - y_c) * log(1 - p_c) ]
    with p = sigmoid(logit), averaged over the batch.

    Computed from logits via softplus so extreme values stay finite:
    the summand equals w * y * softplus(-z) + (1 - y) * softplus(z).
    """
    t = np.asarray(targets)
    if t.shape != logits.shape:
        raise ValueError(f"targets shape {t.shape} != logits shape {logits.shape}")
    if not np.isin(t, (0, 1)).all():
        raise ValueError("targets must be 0 or 1")
    t = t.astype(logits.dtype)
    pos = ag.mul(ag.softplus(ag.mul(logits, -1.0)), t * np.asarray(positive_weight, dtype=logits.dtype))
    neg = ag.mul(ag.softplus(logits), 1.0 - t)
    return ag.tmean(ag.add(pos, neg))


@dataclass
class TrainConfig:
    model: ModelConfig
    lr: float = 1e-5
    batch_size: int = 32
    clip_norm: float = 1.0
    epochs: int = 1
    max_steps: int | None = None
    eval_interval: int = 0          # validation every N steps; 0 disables
    seed: int = 0
    checkpoint_dir: str | None = None

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "lr": self.lr,
            "batch_size": self.batch_size,
            "clip_norm": self.clip_norm,
            "epochs": self.epochs,
            "max_steps": self.max_steps,
            "eval_interval": self.eval_interval,
            "seed": self.seed,
            "checkpoint_dir": self.checkpoint_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        try:
            model = ModelConfig.from_dict(d["model"])
        except KeyError as exc:
            raise ConfigError(f"train config missing field: {exc}")
        return cls(
            model=model,
            lr=float(d.get("lr", 1e-5)),
            batch_size=int(d.get("batch_size", 32)),
            clip_norm=float(d.get("clip_norm", 1.0)),
            epochs=int(d.get("epochs", 1)),
            max_steps=None if d.get("max_steps") is None else int(d["max_steps"]),
            eval_interval=int(d.get("eval_interval", 0)),
            seed=int(d.get("seed", 0)),
            checkpoint_dir=d.get("checkpoint_dir"),
        )


@dataclass
class TrainHistory:
    losses: list[tuple[int, float]] = field(default_factory=list)
    evals: list[tuple[int, MetricsReport]] = field(default_factory=list)
    best_step: int = -1
    best_map: float = float("-inf")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["step", "loss", "val_mAP", "val_P", "val_R"])
        by_step = {s: r for s, r in self.evals}
        for step, loss in self.losses:
            r = by_step.get(step)
            if r is None:
                w.writerow([step, repr(loss), "", "", ""])
            else:
                w.writerow([step, repr(loss), repr(r.mean_ap), repr(r.macro_precision), repr(r.macro_recall)])
        return buf.getvalue()


def evaluate(model, records, threshold: float = None) -> MetricsReport:
    """Score records one at a time at full duration (no padding) and build
    a MetricsReport. Leaves model parameters untouched."""
    if not records:
        raise DataError("evaluate needs at least one record")
    if threshold is None:
        threshold = model.config.threshold
    scores = np.zeros((len(records), NUM_GENRES), dtype=np.float64)
    targets = np.zeros((len(records), NUM_GENRES), dtype=np.float32)
    for i, rec in enumerate(records):
        batch = make_batch([rec], model.config.modalities, lengths="full")
        scores[i] = predict_scores(model, batch)[0]
        targets[i] = label_vector(rec.genres)
    return compute_report(scores, targets, threshold)


class Trainer:
    """Seeded minibatch loop: forward, weighted BCE, backward, global-norm
    clip, Adam. Epoch order comes from a per-epoch seed derived from
    (config seed, epoch index); the final short minibatch is kept."""

    def __init__(self, config: TrainConfig, train_records, val_records=()):
        self.config = config
        self.train_records = list(train_records)
        self.val_records = list(val_records)
        if not self.train_records:
            raise DataError("no training records")
        self.model = build_model(config.model, seed=config.seed)
        self.adam = Adam(self.model.params, lr=config.lr)
        self.dropout_rng = SeededRng(derive_seed(config.seed, "dropout"))
        self.history = TrainHistory()
        self.global_step = 0
        self.epoch = 0
        self.step_in_epoch = 0

    # -- determinism plumbing -------------------------------------------
    def _epoch_order(self, epoch: int) -> np.ndarray:
        return SeededRng(derive_seed(self.config.seed, "shuffle", epoch)).permutation(len(self.train_records))

    def _step_budget_left(self) -> bool:
        return self.config.max_steps is None or self.global_step < self.config.max_steps

    # -- core -------------------------------------------------------------
    def _train_step(self, batch):
        model = self.model
        logits = model.forward(batch, train=True, rng=self.dropout_rng)
        loss = weighted_bce(logits, batch.labels, model.config.positive_weight)
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            ag.clear_tape()
            raise NumericError(f"non-finite loss {loss_val} at step {self.global_step} on batch ids {batch.ids}")
        model.params.zero_grad()
        ag.backward(loss)
        clip_global_norm([p.grad for p in model.params.tensors()], self.config.clip_norm)
        self.adam.step()
        return loss_val

    def _maybe_eval(self):
        cfg = self.config
        if cfg.eval_interval and self.val_records and self.global_step % cfg.eval_interval == 0:
            report = evaluate(self.model, self.val_records)
            self.history.evals.append((self.global_step, report))
            if report.mean_ap > self.history.best_map:
                self.history.best_map = report.mean_ap
                self.history.best_step = self.global_step
                if cfg.checkpoint_dir:
                    save_checkpoint(self.model, os.path.join(cfg.checkpoint_dir, "best"))

    def run(self) -> TrainHistory:
        cfg = self.config
        bs = cfg.batch_size
        n = len(self.train_records)
        while self.epoch < cfg.epochs and self._step_budget_left():
            order = self._epoch_order(self.epoch)
            starts = list(range(0, n, bs))
            while self.step_in_epoch < len(starts) and self._step_budget_left():
                lo = starts[self.step_in_epoch]
                recs = [self.train_records[j] for j in order[lo:lo + bs]]
                batch = make_batch(recs, cfg.model.modalities, lengths="train")
                loss = self._train_step(batch)
                self.global_step += 1
                self.step_in_epoch += 1
                self.history.losses.append((self.global_step, loss))
                self._maybe_eval()
            if self.step_in_epoch >= len(starts):
                self.step_in_epoch = 0
                self.epoch += 1
        if self.history.best_step < 0:
            # no validation ran: the final parameters are the ones retained
            self.history.best_step = self.global_step
            if cfg.checkpoint_dir:
                save_checkpoint(self.model, os.path.join(cfg.checkpoint_dir, "best"))
        if cfg.checkpoint_dir:
            self.save_state(cfg.checkpoint_dir)
        return self.history

    # -- resume -----------------------------------------------------------
    def save_state(self, out_dir: str):
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(self.model, os.path.join(out_dir, "last"))
        manifest = []
        blobs = []
        offset = 0
        for name, arr in self.adam.state_arrays().items():
            raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
            blobs.append(raw)
            offset += len(raw)
        with open(os.path.join(out_dir, "trainer_state.bin"), "wb") as fh:
            fh.write(b"".join(blobs))
        state = {
            "version": TRAINER_STATE_VERSION,
            "global_step": self.global_step,
            "epoch": self.epoch,
            "step_in_epoch": self.step_in_epoch,
            "adam_t": self.adam.t,
            "adam_manifest": manifest,
            "dropout_rng": self.dropout_rng.state(),
            "best_step": self.history.best_step,
            "best_map": self.history.best_map,
            "losses": self.history.losses,
        }
        with open(os.path.join(out_dir, "trainer_state.json"), "w") as fh:
            json.dump(state, fh)

    @classmethod
    def resume(cls, config: TrainConfig, train_records, val_records, state_dir: str) -> "Trainer":
        with open(os.path.join(state_dir, "trainer_state.json")) as fh:
            state = json.load(fh)
        if state.get("version") != TRAINER_STATE_VERSION:
            raise DataError(f"unsupported trainer state version {state.get('version')}")
        t = cls(config, train_records, val_records)
        t.model = load_checkpoint(os.path.join(state_dir, "last"))
        t.adam = Adam(t.model.params, lr=config.lr)
        t.adam.load_state_arrays(read_blob(os.path.join(state_dir, "trainer_state.bin"),
                                           state["adam_manifest"]), state["adam_t"])
        t.dropout_rng = SeededRng.from_state(state["dropout_rng"])
        t.global_step = state["global_step"]
        t.epoch = state["epoch"]
        t.step_in_epoch = state["step_in_epoch"]
        t.history.best_step = state["best_step"]
        t.history.best_map = state["best_map"]
        t.history.losses = [tuple(x) for x in state["losses"]]
        return t


def train(config: TrainConfig, train_records, val_records=()):
    """Convenience wrapper: build a Trainer, run it, return (model, history)."""
    trainer = Trainer(config, train_records, val_records)
    history = trainer.run()
    return trainer.model, history
