"""Adam training loop with step-decay schedule and best-checkpoint retention.

One optimizer step per sample (batch size 1 by default; larger batches
average gradients before stepping). Each epoch reshuffles the samples and
redraws a point subsample per sample from the epoch's seeded generator,
which bounds the quadratic attention cost while the full cloud is still
seen across epochs. Validation runs after every epoch on held-out
samples; the checkpoint with the best overall validation L2 is the one
that survives.

A watchdog aborts on any non-finite loss, gradient, or parameter, after
making sure the last good checkpoint is on disk.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import loss_and_grads
from .checkpoint import save_checkpoint
from .data import ZScoreStats, apply_zscore, invert_zscore
from .encoding import CoordinateNormalizer, apply_normalizer
from .errors import (
    ConfigError,
    EmptyDatasetError,
    NumericalAbortError,
    ShapeError,
    UndefinedMetricError,
)
from .model import ModelConfig, ParameterStore, model_forward
from .seeding import sub_seed

SUBSAMPLE_MODES = ("fixed", "per_epoch")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 1
    initial_lr: float = 1e-3
    lr_decay_factor: float = 0.5
    lr_step_epochs: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    points_per_sample: int = 512
    seed: int = 0
    val_subsample: str = "fixed"   # validation points: fixed per sample or per_epoch

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ConfigError(
                f"lr_decay_factor must be in (0, 1], got {self.lr_decay_factor}")
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise ConfigError("adam betas must be in (0, 1)")
        if self.adam_eps <= 0:
            raise ConfigError(f"adam_eps must be > 0, got {self.adam_eps}")
        if self.batch_size < 1 or self.points_per_sample < 1 or self.lr_step_epochs < 1:
            raise ConfigError(
                "batch_size, points_per_sample, lr_step_epochs must be >= 1")
        if self.initial_lr <= 0:
            raise ConfigError(f"initial_lr must be > 0, got {self.initial_lr}")
        if self.val_subsample not in SUBSAMPLE_MODES:
            raise ConfigError(
                f"val_subsample must be one of {SUBSAMPLE_MODES}, "
                f"got {self.val_subsample!r}")


@dataclass
class OptimizerState:
    m: dict
    v: dict
    t: int = 0


def init_optimizer_state(params: ParameterStore) -> OptimizerState:
    return OptimizerState(
        m={name: np.zeros_like(arr) for name, arr in params.items()},
        v={name: np.zeros_like(arr) for name, arr in params.items()},
        t=0)


def adam_step(params: ParameterStore, grads: dict, state: OptimizerState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place; t advances by exactly 1."""
    for name in params.names():
        if not np.all(np.isfinite(grads[name])):
            raise NumericalAbortError(f"non-finite gradient in {name}")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name in params.names():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        arr = params[name]
        arr -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        if not np.all(np.isfinite(arr)):
            raise NumericalAbortError(f"non-finite values in {name} after update")


def steplr(epoch: int, config: TrainConfig) -> float:
    """initial_lr * factor^floor(epoch / step); non-increasing in epoch."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return float(config.initial_lr
                 * config.lr_decay_factor ** (epoch // config.lr_step_epochs))


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_mse: float
    val_rel_l2: tuple
    seconds: float


def format_log_row(row: EpochLog) -> str:
    channels = ",".join(f"{v:.9e}" for v in row.val_rel_l2)
    return (f"epoch={row.epoch} lr={row.lr:.9e} train_mse={row.train_mse:.9e} "
            f"val_rel_l2={channels} seconds={row.seconds:.3f}")


def parse_log_row(line: str) -> EpochLog:
    fields = dict(part.split("=", 1) for part in line.strip().split(" "))
    return EpochLog(
        epoch=int(fields["epoch"]),
        lr=float(fields["lr"]),
        train_mse=float(fields["train_mse"]),
        val_rel_l2=tuple(float(v) for v in fields["val_rel_l2"].split(",")),
        seconds=float(fields["seconds"]))


def last_logged_epoch(log_path: str) -> int | None:
    """Highest epoch number in an existing training log, None if absent."""
    if not os.path.exists(log_path):
        return None
    last = None
    with open(log_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("epoch="):
                last = parse_log_row(line).epoch
    return last


@dataclass
class FitResult:
    rows: list = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = np.inf
    best_val_per_channel: tuple = ()
    best_params: ParameterStore | None = None


def _validate_inputs(train_records, val_records, config, zscore):
    if not train_records:
        raise EmptyDatasetError("training split is empty")
    if not val_records:
        raise EmptyDatasetError("validation split is empty")
    for rec in list(train_records) + list(val_records):
        if rec.num_channels != config.out_channels:
            raise ShapeError(
                f"sample {rec.sample_id} has {rec.num_channels} channels, "
                f"model predicts {config.out_channels}")
    if zscore.num_channels != config.out_channels:
        raise ShapeError(
            f"zscore stats cover {zscore.num_channels} channels, "
            f"model predicts {config.out_channels}")


def fit(train_records, val_records, params: ParameterStore, config: ModelConfig,
        tcfg: TrainConfig, normalizer: CoordinateNormalizer, zscore: ZScoreStats,
        channel_names=(), log_path: str | None = None,
        checkpoint_path: str | None = None, start_epoch: int = 0,
        on_epoch=None) -> FitResult:
    """Train on Z-scored targets; keep the best-validation checkpoint.

    Records must already be restricted to the model's target channels.
    `start_epoch` continues an interrupted run's epoch numbering (the
    schedule and subsampling depend only on the absolute epoch index; the
    checkpoint format stores no optimizer state, so Adam moments restart).
    Each epoch appends one row (epoch, lr, train_mse, val_rel_l2 per
    channel, seconds) to `log_path`.
    """
    _validate_inputs(train_records, val_records, config, zscore)

    train_coords = [apply_normalizer(r.coords, normalizer) for r in train_records]
    train_targets = [apply_zscore(r.fields, zscore) for r in train_records]
    val_coords = [apply_normalizer(r.coords, normalizer) for r in val_records]
    val_fields = [r.fields for r in val_records]

    fixed_val_idx = None
    if tcfg.val_subsample == "fixed":
        fixed_val_idx = [
            np.random.default_rng(sub_seed(tcfg.seed, "val-subsample", i))
            .permutation(c.shape[0])[:min(tcfg.points_per_sample, c.shape[0])]
            for i, c in enumerate(val_coords)
        ]

    state = init_optimizer_state(params)
    result = FitResult(best_params=params.copy(), best_epoch=start_epoch - 1)

    def preserve_best():
        if checkpoint_path is not None and result.best_params is not None:
            save_checkpoint(checkpoint_path, result.best_params, config,
                            normalizer, zscore, channel_names)

    try:
        for epoch in range(start_epoch, tcfg.epochs):
            t_start = time.perf_counter()
            lr = steplr(epoch, tcfg)
            rng = np.random.default_rng(sub_seed(tcfg.seed, "epoch", epoch))
            order = rng.permutation(len(train_records))
            losses = []
            batch_grads = None
            batch_n = 0
            for pos, si in enumerate(order):
                coords_i = train_coords[si]
                n_i = coords_i.shape[0]
                take = min(tcfg.points_per_sample, n_i)
                idx = rng.permutation(n_i)[:take]
                loss, grads, _ = loss_and_grads(
                    coords_i[idx], train_targets[si][idx], params, config)
                if not np.isfinite(loss):
                    raise NumericalAbortError(
                        f"non-finite loss at epoch {epoch}, sample "
                        f"{train_records[si].sample_id}")
                losses.append(loss)
                if batch_grads is None:
                    batch_grads = grads
                else:
                    for name in batch_grads:
                        batch_grads[name] += grads[name]
                batch_n += 1
                if batch_n == tcfg.batch_size or pos == len(order) - 1:
                    if batch_n > 1:
                        for name in batch_grads:
                            batch_grads[name] /= batch_n
                    adam_step(params, batch_grads, state, lr,
                              tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps)
                    batch_grads = None
                    batch_n = 0
            train_mse = float(np.mean(losses))

            err2 = np.zeros(config.out_channels)
            truth2 = np.zeros(config.out_channels)
            for vi, coords_v in enumerate(val_coords):
                if fixed_val_idx is not None:
                    idx = fixed_val_idx[vi]
                else:
                    n_v = coords_v.shape[0]
                    idx = np.random.default_rng(
                        sub_seed(tcfg.seed, "val-subsample", vi, epoch)
                    ).permutation(n_v)[:min(tcfg.points_per_sample, n_v)]
                pred_z, _, _ = model_forward(coords_v[idx], params, config)
                pred = invert_zscore(pred_z, zscore)
                truth = val_fields[vi][idx]
                diff = pred - truth
                err2 += np.sum(diff * diff, axis=0)
                truth2 += np.sum(truth * truth, axis=0)
            if np.any(truth2 == 0.0):
                raise UndefinedMetricError(
                    f"validation channel {int(np.argmin(truth2))} has zero norm")
            val_per_channel = tuple(np.sqrt(err2 / truth2))
            val_overall = float(np.sqrt(np.sum(err2) / np.sum(truth2)))

            row = EpochLog(
                epoch=epoch, lr=lr, train_mse=train_mse,
                val_rel_l2=val_per_channel,
                seconds=time.perf_counter() - t_start)
            result.rows.append(row)
            if log_path is not None:
                with open(log_path, "a", encoding="utf-8") as fh:
                    fh.write(format_log_row(row) + "\n")
            if on_epoch is not None:
                on_epoch(row)

            if val_overall < result.best_val:
                result.best_val = val_overall
                result.best_val_per_channel = val_per_channel
                result.best_epoch = epoch
                result.best_params = params.copy()
                preserve_best()
    except NumericalAbortError:
        preserve_best()
        raise
    preserve_best()
    return result
