"""Command-line entry point: one executable, six subcommands.

Every run is driven by a flat `key = value` config file plus flag
overrides (flags win); the effective merged configuration is echoed into
the output directory so a run can be reproduced from its artifacts alone.
Unknown keys, in the file or on the command line, fail fast.

All randomness flows from the single `seed` key, fanned out through named
sub-streams (data, init, subsampling), so two runs that differ only in
`variant` train on identical data with identical draws.

Exit codes: 0 success, 2 input/config error, 3 numerical abort,
4 checkpoint mismatch, 5 resource guard.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import backends
from .checkpoint import load_checkpoint
from .data import (
    SampleRecord,
    apply_zscore,
    fit_zscore,
    gen_potential_flow_sphere,
    invert_zscore,
    load_sample,
    load_split,
    make_splits,
    read_manifest,
    save_sample,
    write_manifest,
)
from .encoding import fit_normalizer
from .errors import (
    CheckpointMismatchError,
    ConfigError,
    NumericalAbortError,
    ResourceGuardError,
    RopeflowError,
)
from .metrics import (
    MetricsReport,
    abs_error_pdf,
    attention_row,
    entropy_profile,
    per_sample_error_distribution,
    relative_l2,
    write_csv,
    write_metrics_report,
)
from .model import VARIANTS, ModelConfig, init_parameters, model_forward
from .seeding import seed_int, sub_seed
from .training import TrainConfig, fit, format_log_row, last_logged_epoch

# key -> (type, default, help). This is the whole config surface; every
# key is also a --flag (dashes for underscores) on every subcommand.
SCHEMA = {
    # run control
    "seed": (int, 0, "top-level seed; all randomness derives from it"),
    "threads": (int, 0, "cap compute threads; 0 keeps library defaults, 1 is bit-reproducible"),
    "out_dir": (str, "runs/out", "directory for generated files, checkpoints, reports"),
    "data_dir": (str, "", "dataset directory containing manifest.txt"),
    "checkpoint": (str, "", "checkpoint file to evaluate/predict/analyze from"),
    "targets": (str, "pressure", "channels to learn: pressure | velocity | all"),
    # model
    "variant": (str, "full", "architecture variant: full | no_rope | no_sincos | neither"),
    "num_blocks": (int, 5, "attention blocks T"),
    "num_heads": (int, 8, "attention heads H"),
    "latent_dim": (int, 256, "latent width D (divisible by num_heads, D/H even)"),
    "per_axis_dim": (int, 84, "sin-cos features per axis m (encoder input is 3m)"),
    "ffn_hidden_ratio": (float, 2.0, "block FFN hidden width as a multiple of D"),
    "encoder_hidden": (int, 512, "encoder MLP hidden width"),
    "decoder_hidden": (int, 512, "decoder MLP hidden width"),
    "wavelength_base": (float, 10000.0, "sin-cos frequency base"),
    "rope_base": (float, 100.0, "rotary frequency base (normalized coordinates)"),
    # training
    "epochs": (int, 150, "total training epochs"),
    "batch_size": (int, 1, "samples per optimizer step"),
    "initial_lr": (float, 1e-3, "Adam learning rate at epoch 0"),
    "lr_decay_factor": (float, 0.5, "step-decay multiplier"),
    "lr_step_epochs": (int, 50, "epochs between decay steps"),
    "adam_beta1": (float, 0.9, "Adam first-moment decay"),
    "adam_beta2": (float, 0.999, "Adam second-moment decay"),
    "adam_eps": (float, 1e-8, "Adam denominator guard"),
    "points_per_sample": (int, 512, "training subsample size per sample per epoch"),
    "val_subsample": (str, "fixed", "validation points: fixed | per_epoch"),
    "resume": (bool, False, "continue from out_dir's checkpoint and log"),
    # data generation
    "samples": (int, 100, "number of samples to generate"),
    "gen_points": (int, 2048, "points per generated sample"),
    "radius_min": (float, 0.5, "sphere radius range lower bound"),
    "radius_max": (float, 1.0, "sphere radius range upper bound"),
    "free_stream": (float, 1.0, "free-stream speed"),
    "region": (str, "shell", "sampling region: shell | surface"),
    "outer_radius": (float, 2.0, "outer radius of the shell region"),
    "ratio_train": (float, 0.8, "train split fraction"),
    "ratio_val": (float, 0.1, "validation split fraction"),
    "ratio_test": (float, 0.1, "test split fraction"),
    # evaluation / analysis
    "split": (str, "test", "dataset split to evaluate: train | val | test"),
    "eval_points": (int, 10000, "evaluation subsample cap per sample"),
    "per_channel": (bool, True, "include per-channel columns in reports"),
    "bin_count": (int, 64, "histogram bins for PDFs"),
    "entropy_epsilon": (float, 1e-12, "epsilon inside the entropy logarithm"),
    "resolutions": (str, "", "comma-separated entropy resolutions; empty = min(N, 10000)"),
    "entropy_blocks": (str, "last", "blocks to profile: last | all | comma indices"),
    "entropy_heads": (str, "mean", "heads to profile: mean | all | comma indices"),
    "resolution_cap": (int, 20000, "largest resolution allowed without --force"),
    "force": (bool, False, "override the resolution resource guard"),
    "point_index": (int, -1, "query point whose attention row to export; -1 = off"),
    "input": (str, "", "input sample file (predict / analyze-attention)"),
    "output": (str, "", "output sample file (predict)"),
}

TARGET_CHANNELS = {
    "pressure": ("p",),
    "velocity": ("u", "v", "w"),
    "all": ("p", "u", "v", "w"),
}

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_CHECKPOINT = 4
EXIT_RESOURCE = 5


def _coerce(key: str, raw: str):
    kind = SCHEMA[key][0]
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(
            f"config key {key!r}: expected {kind.__name__}, got {raw!r}") from exc


def parse_config_file(path: str) -> dict:
    """Flat `key = value` lines; # comments; unknown or repeated keys fail."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key, raw = stripped.split("=", 1)
            key = key.strip()
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate config key {key!r}")
            out[key] = _coerce(key, raw)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ropeflow",
        description="Point-cloud field regression with rotary attention.")
    commands = {
        "gen-data": "generate a synthetic sphere-flow dataset with splits",
        "train": "train a model on a generated dataset",
        "eval": "evaluate a checkpoint on a dataset split",
        "predict": "predict fields for one input sample",
        "ablate": "train and evaluate all four architecture variants",
        "analyze-attention": "entropy profiles and attention-row exports",
    }
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="flat key = value config file")
        for key, (kind, default, key_help) in SCHEMA.items():
            flag = "--" + key.replace("_", "-")
            if kind is bool:
                p.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction,
                               default=None, help=f"{key_help} (default {default})")
            else:
                p.add_argument(flag, dest=key, type=kind, default=None,
                               help=f"{key_help} (default {default})")
    return parser


def build_config(args: argparse.Namespace) -> dict:
    cfg = {key: default for key, (_, default, _) in SCHEMA.items()}
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key in SCHEMA:
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    return cfg


def echo_config(cfg: dict, out_dir: str, command: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    lines = [f"# effective configuration ({command})"]
    for key in sorted(SCHEMA):
        value = cfg[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _target_names(cfg: dict) -> tuple:
    targets = cfg["targets"]
    if targets not in TARGET_CHANNELS:
        raise ConfigError(
            f"targets must be one of {tuple(TARGET_CHANNELS)}, got {targets!r}")
    return TARGET_CHANNELS[targets]


def _restrict(records, names, error_cls=ConfigError):
    out = []
    for rec in records:
        try:
            idx = [rec.channel_names.index(n) for n in names]
        except ValueError:
            raise error_cls(
                f"sample {rec.sample_id} lacks channels {names}, "
                f"has {rec.channel_names}") from None
        out.append(SampleRecord(
            sample_id=rec.sample_id, coords=rec.coords,
            fields=rec.fields[:, idx], channel_names=names,
            metadata=dict(rec.metadata)))
    return out


def _load_dataset(cfg: dict):
    data_dir = cfg["data_dir"]
    if not data_dir:
        raise ConfigError("data_dir is required for this command")
    manifest_path = os.path.join(data_dir, "manifest.txt")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"no dataset manifest at {manifest_path}")
    return read_manifest(manifest_path), data_dir


def _model_config(cfg: dict, out_channels: int, variant: str | None = None) -> ModelConfig:
    return ModelConfig(
        num_blocks=cfg["num_blocks"],
        num_heads=cfg["num_heads"],
        latent_dim=cfg["latent_dim"],
        per_axis_dim=cfg["per_axis_dim"],
        ffn_hidden_ratio=cfg["ffn_hidden_ratio"],
        out_channels=out_channels,
        encoder_hidden=cfg["encoder_hidden"],
        decoder_hidden=cfg["decoder_hidden"],
        variant=variant if variant is not None else cfg["variant"],
        wavelength_base=cfg["wavelength_base"],
        rope_base=cfg["rope_base"])


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        initial_lr=cfg["initial_lr"],
        lr_decay_factor=cfg["lr_decay_factor"],
        lr_step_epochs=cfg["lr_step_epochs"],
        adam_beta1=cfg["adam_beta1"],
        adam_beta2=cfg["adam_beta2"],
        adam_eps=cfg["adam_eps"],
        points_per_sample=cfg["points_per_sample"],
        seed=cfg["seed"],
        val_subsample=cfg["val_subsample"])


def cmd_gen_data(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    count = cfg["samples"]
    if count < 1:
        raise ConfigError(f"samples must be >= 1, got {count}")
    if not 0 < cfg["radius_min"] <= cfg["radius_max"]:
        raise ConfigError(
            f"need 0 < radius_min <= radius_max, got "
            f"{cfg['radius_min']}..{cfg['radius_max']}")
    seed = cfg["seed"]
    radii = np.random.default_rng(sub_seed(seed, "data-radius")).uniform(
        cfg["radius_min"], cfg["radius_max"], size=count)
    entries = []
    for i in range(count):
        sid = f"sphere-{i:04d}"
        rec = gen_potential_flow_sphere(
            radius=float(radii[i]), free_stream=cfg["free_stream"],
            point_count=cfg["gen_points"], region=cfg["region"],
            outer_radius=cfg["outer_radius"],
            seed=seed_int(seed, "data-points", i), sample_id=sid)
        fname = sid + ".rsmp"
        save_sample(rec, os.path.join(out_dir, fname))
        entries.append((sid, fname))
    ratios = (cfg["ratio_train"], cfg["ratio_val"], cfg["ratio_test"])
    manifest = make_splits(entries, ratios, seed=seed_int(seed, "split"))
    write_manifest(manifest, os.path.join(out_dir, "manifest.txt"))
    echo_config(cfg, out_dir, "gen-data")
    counts = manifest.counts()
    print(f"generated {count} samples into {out_dir} "
          f"(train {counts['train']} / val {counts['val']} / test {counts['test']})")
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    manifest, base = _load_dataset(cfg)
    names = _target_names(cfg)
    train_records = _restrict(load_split(manifest, base, "train"), names)
    val_records = _restrict(load_split(manifest, base, "val"), names)

    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "train.log")
    ckpt_path = os.path.join(out_dir, "checkpoint.bin")

    mcfg = _model_config(cfg, out_channels=len(names))
    tcfg = _train_config(cfg)
    start_epoch = 0
    if cfg["resume"] and os.path.exists(ckpt_path):
        params, ck_cfg, normalizer, zscore, ck_names = load_checkpoint(ckpt_path)
        if ck_cfg != mcfg:
            raise CheckpointMismatchError(
                f"{ckpt_path} was trained with a different model configuration")
        if tuple(ck_names) != tuple(names):
            raise CheckpointMismatchError(
                f"{ckpt_path} predicts channels {ck_names}, requested {names}")
        last = last_logged_epoch(log_path)
        start_epoch = 0 if last is None else last + 1
        print(f"resuming from {ckpt_path} at epoch {start_epoch} "
              "(optimizer moments restart)")
    else:
        normalizer = fit_normalizer([r.coords for r in train_records])
        zscore = fit_zscore([r.fields for r in train_records])
        params = init_parameters(mcfg, sub_seed(cfg["seed"], "init"))

    echo_config(cfg, out_dir, "train")
    if start_epoch >= tcfg.epochs:
        print(f"log already covers {tcfg.epochs} epochs; nothing to do")
        return EXIT_OK
    result = fit(
        train_records, val_records, params, mcfg, tcfg, normalizer, zscore,
        channel_names=names, log_path=log_path, checkpoint_path=ckpt_path,
        start_epoch=start_epoch,
        on_epoch=lambda row: print(format_log_row(row), flush=True))
    print(f"best epoch {result.best_epoch}: val_rel_l2 {result.best_val:.6e} "
          f"-> {ckpt_path}")
    return EXIT_OK


def _evaluate_records(params, mcfg, normalizer, zscore, records,
                      eval_points: int, seed: int):
    """Per-sample L2 rows plus pooled absolute errors on Z-scored fields."""
    per_sample = []
    pooled = []
    for rec in records:
        n = rec.num_points
        take = min(eval_points, n)
        idx = np.random.default_rng(
            sub_seed(seed, "eval-subsample", rec.sample_id)).permutation(n)[:take]
        pred_z, _, _ = model_forward(rec.coords[idx], params, mcfg, normalizer)
        pred = invert_zscore(pred_z, zscore)
        truth = rec.fields[idx]
        overall = relative_l2(pred, truth)
        per_ch = tuple(relative_l2(pred, truth, per_channel=True))
        per_sample.append((rec.sample_id, overall, per_ch))
        pooled.append(np.abs(pred_z - apply_zscore(truth, zscore)).ravel())
    return per_sample, np.concatenate(pooled)


def cmd_eval(cfg: dict) -> int:
    if not cfg["checkpoint"]:
        raise ConfigError("checkpoint path is required for eval")
    params, mcfg, normalizer, zscore, names = load_checkpoint(cfg["checkpoint"])
    if normalizer is None or zscore is None or not names:
        raise ConfigError(
            f"{cfg['checkpoint']} lacks preprocessing state; cannot evaluate")
    manifest, base = _load_dataset(cfg)
    split = cfg["split"]
    if split not in ("train", "val", "test"):
        raise ConfigError(f"split must be train/val/test, got {split!r}")
    records = _restrict(load_split(manifest, base, split), names,
                        error_cls=CheckpointMismatchError)
    if not records:
        raise ConfigError(f"split {split!r} is empty")

    per_sample, pooled = _evaluate_records(
        params, mcfg, normalizer, zscore, records, cfg["eval_points"], cfg["seed"])
    report = MetricsReport(
        channel_names=tuple(names) if cfg["per_channel"] else (),
        per_sample=(per_sample if cfg["per_channel"]
                    else [(sid, overall, ()) for sid, overall, _ in per_sample]),
        distribution=per_sample_error_distribution(
            [(sid, overall) for sid, overall, _ in per_sample]),
        error_pdf=abs_error_pdf(pooled, cfg["bin_count"]))
    out_dir = cfg["out_dir"]
    written = write_metrics_report(report, out_dir)
    echo_config(cfg, out_dir, "eval")
    mean_overall = float(np.mean([overall for _, overall, _ in per_sample]))
    print(f"split {split}: mean rel_l2 {mean_overall:.6e} over "
          f"{len(per_sample)} samples; wrote {len(written)} files to {out_dir}")
    return EXIT_OK


def cmd_predict(cfg: dict) -> int:
    if not cfg["checkpoint"] or not cfg["input"] or not cfg["output"]:
        raise ConfigError("predict needs checkpoint, input and output paths")
    params, mcfg, normalizer, zscore, names = load_checkpoint(cfg["checkpoint"])
    if normalizer is None or zscore is None or not names:
        raise ConfigError(
            f"{cfg['checkpoint']} lacks preprocessing state; cannot predict")
    rec = load_sample(cfg["input"])
    pred_z, _, _ = model_forward(rec.coords, params, mcfg, normalizer)
    pred = invert_zscore(pred_z, zscore)
    out = SampleRecord(
        sample_id=rec.sample_id, coords=rec.coords, fields=pred,
        channel_names=names,
        metadata={**rec.metadata, "predicted_from": os.path.basename(cfg["input"])})
    save_sample(out, cfg["output"])
    print(f"wrote {out.num_points} x {out.num_channels} prediction to {cfg['output']}")
    return EXIT_OK


def cmd_ablate(cfg: dict) -> int:
    manifest, base = _load_dataset(cfg)
    names = _target_names(cfg)
    train_records = _restrict(load_split(manifest, base, "train"), names)
    val_records = _restrict(load_split(manifest, base, "val"), names)
    test_records = _restrict(load_split(manifest, base, "test"), names)
    normalizer = fit_normalizer([r.coords for r in train_records])
    zscore = fit_zscore([r.fields for r in train_records])
    tcfg = _train_config(cfg)
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)

    rows = []
    for variant in VARIANTS:
        vdir = os.path.join(out_dir, variant)
        os.makedirs(vdir, exist_ok=True)
        try:
            mcfg = _model_config(cfg, out_channels=len(names), variant=variant)
            params = init_parameters(mcfg, sub_seed(cfg["seed"], "init"))
            result = fit(
                train_records, val_records, params, mcfg, tcfg, normalizer,
                zscore, channel_names=names,
                log_path=os.path.join(vdir, "train.log"),
                checkpoint_path=os.path.join(vdir, "checkpoint.bin"))
            per_sample, _ = _evaluate_records(
                result.best_params, mcfg, normalizer, zscore, test_records,
                cfg["eval_points"], cfg["seed"])
            overall = float(np.mean([ov for _, ov, _ in per_sample]))
            per_ch = np.mean([ch for _, _, ch in per_sample], axis=0)
            rows.append((variant, overall, tuple(float(v) for v in per_ch)))
            print(f"{variant}: test rel_l2 {overall:.6e}")
        except RopeflowError as exc:
            rows.append((variant, None, str(exc)))
            print(f"{variant}: FAILED ({exc})", file=sys.stderr)

    lines = ["ropeflow-ablation v1",
             "variant\toverall\t" + "\t".join(names)]
    for variant, overall, detail in rows:
        if overall is None:
            lines.append(f"{variant}\tFAILED\t{detail}")
        else:
            cols = "\t".join(f"{v:.9e}" for v in detail)
            lines.append(f"{variant}\t{overall:.9e}\t{cols}")
    table_path = os.path.join(out_dir, "ablation.txt")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    echo_config(cfg, out_dir, "ablate")
    print(f"wrote {table_path}")
    return EXIT_OK


def _parse_index_list(text: str, label: str, limit: int) -> list:
    try:
        values = [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{label}: expected comma-separated integers, "
                          f"got {text!r}") from exc
    for v in values:
        if not 0 <= v < limit:
            raise ConfigError(f"{label}: index {v} outside 0..{limit - 1}")
    return values


def cmd_analyze_attention(cfg: dict) -> int:
    if not cfg["checkpoint"]:
        raise ConfigError("checkpoint path is required for analyze-attention")
    params, mcfg, normalizer, zscore, names = load_checkpoint(cfg["checkpoint"])
    if cfg["input"]:
        rec = load_sample(cfg["input"])
    else:
        manifest, base = _load_dataset(cfg)
        paths = manifest.paths(cfg["split"])
        if not paths:
            raise ConfigError(f"split {cfg['split']!r} is empty")
        rec = load_sample(os.path.join(base, paths[0]))
    coords = rec.coords
    n = coords.shape[0]

    if cfg["resolutions"].strip():
        try:
            resolutions = [int(v) for v in cfg["resolutions"].split(",")]
        except ValueError as exc:
            raise ConfigError(
                f"resolutions: expected comma-separated integers, "
                f"got {cfg['resolutions']!r}") from exc
    else:
        resolutions = [min(n, 10000)]
    cap = cfg["resolution_cap"]
    for res in resolutions:
        if res > cap and not cfg["force"]:
            dense_gb = res * res * 8 / 1e9
            raise ResourceGuardError(
                f"resolution {res} exceeds the desk cap {cap}; a dense "
                f"attention matrix at this size is {dense_gb:.1f} GB as "
                f"float64. Rows are streamed, so pass --force to proceed.")

    if cfg["entropy_blocks"] == "last":
        blocks = [mcfg.num_blocks - 1]
    elif cfg["entropy_blocks"] == "all":
        blocks = list(range(mcfg.num_blocks))
    else:
        blocks = _parse_index_list(cfg["entropy_blocks"], "entropy_blocks",
                                   mcfg.num_blocks)
    if cfg["entropy_heads"] == "mean":
        heads = "mean"
    elif cfg["entropy_heads"] == "all":
        heads = list(range(mcfg.num_heads))
    else:
        heads = _parse_index_list(cfg["entropy_heads"], "entropy_heads",
                                  mcfg.num_heads)

    tables = entropy_profile(
        params, mcfg, coords, resolutions, blocks=blocks, heads=heads,
        normalizer=normalizer, epsilon=cfg["entropy_epsilon"],
        bin_count=cfg["bin_count"], seed=cfg["seed"])
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for (t, h, res), (centers, densities) in sorted(
            tables.items(), key=lambda kv: str(kv[0])):
        path = os.path.join(out_dir, f"entropy_block{t}_head{h}_res{res}.csv")
        write_csv(path, ("bin_center", "density"),
                  list(zip(map(float, centers), map(float, densities))))
        written.append(path)

    if cfg["point_index"] >= 0:
        if n > cap and not cfg["force"]:
            raise ResourceGuardError(
                f"attention-row export over {n} points exceeds the desk cap "
                f"{cap}; pass --force to proceed.")
        block = blocks[-1]
        rows = attention_row(params, mcfg, coords, block, cfg["point_index"],
                             normalizer=normalizer)
        for h in range(mcfg.num_heads):
            path = os.path.join(
                out_dir,
                f"attention_block{block}_head{h}_point{cfg['point_index']}.csv")
            write_csv(path, ("target_index", "x", "y", "z", "weight"),
                      [(i, float(coords[i, 0]), float(coords[i, 1]),
                        float(coords[i, 2]), float(rows[h, i]))
                       for i in range(n)])
            written.append(path)

    echo_config(cfg, out_dir, "analyze-attention")
    print(f"wrote {len(written)} tables to {out_dir}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "ablate": cmd_ablate,
    "analyze-attention": cmd_analyze_attention,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else 0
    try:
        cfg = build_config(args)
        if cfg["threads"] > 0:
            backends.set_num_threads(cfg["threads"])
        return COMMANDS[args.command](cfg)
    except CheckpointMismatchError as exc:
        print(f"ropeflow: checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except NumericalAbortError as exc:
        print(f"ropeflow: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ResourceGuardError as exc:
        print(f"ropeflow: resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (RopeflowError, OSError, ValueError) as exc:
        print(f"ropeflow: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
