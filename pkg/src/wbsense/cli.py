"""Command-line entry point tying the pipeline together.

Subcommands: generate, preprocess, augment, train, calibrate, evaluate,
roc. Each command echoes its resolved configuration into its output
directory, is deterministic given its seeds, and removes partial outputs
on failure. Exit codes: 0 ok, 2 configuration error, 3 missing upstream
artifact, 4 runtime error.
"""

import argparse
import json
import os
import shutil
import sys

import numpy as np

from . import augment as aug
from . import dataset as ds
from . import sensing, siggen, specest
from .backend import set_num_threads
from .dsffnet import (
    DsffModel,
    ModelConfig,
    TrainSettings,
    load_checkpoint,
    normalize_input,
    save_checkpoint,
    train_model,
    write_history_csv,
)
from .errors import ConfigurationError, PreconditionError, WbsenseError

EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_RUNTIME = 4

DEFAULT_TAPER = {"nw": 4.0, "num_tapers": 7}


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise PreconditionError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path}: line {exc.lineno}: {exc.msg}") from exc


def _echo_config(out_dir, resolved):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config_echo.json"), "w") as f:
        json.dump(resolved, f, indent=2, sort_keys=True)


def _normalized_inputs(data_dir):
    """Load PSD caches and labels, normalized and ready for the network."""
    meta = ds.load_psd_meta(data_dir)
    mtm, pg = ds.load_psd_cache(data_dir)
    labels = ds.load_labels(data_dir, meta["N"])
    x_mtm = normalize_input(mtm).astype(np.float32)
    x_pg = normalize_input(pg).astype(np.float32)
    return x_mtm, x_pg, labels, meta


def _scores(model, x_mtm, x_pg, batch_size=64):
    out = []
    for start in range(0, len(x_mtm), batch_size):
        sl = slice(start, start + batch_size)
        out.append(model.forward(x_mtm[sl], x_pg[sl], training=False))
    return np.concatenate(out, axis=0)


# ----------------------------------------------------------------- commands


def cmd_generate(args):
    cfg_dict = _load_config(args.config)
    gen_fields = {
        "signal_length", "num_subbands", "modulation_set", "rolloff",
        "sps_choices", "snr_mode", "snr_range_db", "snr_step_db",
        "samples_per_snr", "num_random_samples", "channel", "master_seed",
    }
    gen_dict = {k: v for k, v in cfg_dict.items() if k in gen_fields}
    if args.seed is not None:
        gen_dict["master_seed"] = args.seed
    cfg = siggen.GenerationConfig.from_dict(gen_dict)

    manifest = siggen.generate_dataset(cfg, args.out)
    _echo_config(args.out, {"command": "generate", "config": cfg.to_dict()})
    print(
        f"generated {manifest['num_samples']} samples "
        f"(M={manifest['M']}, N={manifest['N']}, mode={manifest['snr_mode']}) "
        f"-> {args.out}"
    )


def cmd_preprocess(args):
    manifest = ds.load_manifest(args.data)
    m = manifest["M"]
    nw = args.nw
    num_tapers = args.tapers
    w = nw / m
    bank = specest.dpss_tapers(m, w, num_tapers, cache_dir=args.taper_cache)
    iq = ds.load_iq(args.data, m)

    mtm = np.empty((iq.shape[0], m), dtype=np.float64)
    pg = np.empty((iq.shape[0], m), dtype=np.float64)
    for i in range(iq.shape[0]):
        dual = specest.dual_representation(iq[i], bank)
        mtm[i] = dual.mtm.psd
        pg[i] = dual.pg.psd
    psd_meta = {
        "M": m, "N": manifest["N"], "W": w, "nw": nw, "L": num_tapers,
        "estimators": {"mtm": "multitaper-v1", "pg": "periodogram-v1"},
    }
    ds.write_psd_cache(args.data, mtm, pg, psd_meta)
    _echo_config(args.data, {"command": "preprocess", "taper": psd_meta})
    print(f"wrote PSD caches for {iq.shape[0]} samples -> {args.data}")


def cmd_augment(args):
    seed = args.seed if args.seed is not None else 0
    info = aug.augment_dataset(
        args.data, args.out, args.factor_inter, args.factor_intra, seed
    )
    _echo_config(args.out, {
        "command": "augment", "data": args.data, "seed": seed,
        "factor_inter": args.factor_inter, "factor_intra": args.factor_intra,
    })
    print(f"augmented dataset: {info['num_samples']} samples -> {args.out}")


def _split_train_val(n, val_fraction, seed):
    order = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    return order[n_val:], order[:n_val]


def cmd_train(args):
    cfg_dict = _load_config(args.config)
    train_cfg = cfg_dict.get("train", {})
    seed = args.seed if args.seed is not None else train_cfg.get("seed", 0)
    settings = TrainSettings(
        lr=train_cfg.get("lr", 1e-3),
        batch_size=train_cfg.get("batch_size", 32),
        max_epochs=args.max_epochs if args.max_epochs is not None
        else train_cfg.get("max_epochs", 100),
        patience_lr=train_cfg.get("patience_lr", 5),
        patience_stop=train_cfg.get("patience_stop", 15),
        shuffle_seed=seed,
    )

    x_mtm, x_pg, labels, meta = _normalized_inputs(args.data)
    if args.val_data:
        v_mtm, v_pg, v_labels, _ = _normalized_inputs(args.val_data)
        t_mtm, t_pg, t_labels = x_mtm, x_pg, labels
    else:
        tr, va = _split_train_val(len(labels), args.val_fraction, seed)
        t_mtm, t_pg, t_labels = x_mtm[tr], x_pg[tr], labels[tr]
        v_mtm, v_pg, v_labels = x_mtm[va], x_pg[va], labels[va]

    model_cfg = ModelConfig(
        num_subbands=meta["N"], reference_length=meta["M"], init_seed=seed
    )
    model = DsffModel(model_cfg)
    os.makedirs(args.out, exist_ok=True)
    try:
        result = train_model(
            model, t_mtm, t_pg, t_labels, v_mtm, v_pg, v_labels, settings
        )
        ckpt = os.path.join(args.out, "checkpoint.dsff")
        save_checkpoint(model, ckpt, train_settings=settings.to_dict())
        write_history_csv(result.history, os.path.join(args.out, "history.csv"))
        _echo_config(args.out, {
            "command": "train", "data": args.data, "val_data": args.val_data,
            "seed": seed, "settings": settings.to_dict(),
            "model": model_cfg.to_dict(),
        })
    except Exception:
        shutil.rmtree(args.out, ignore_errors=True)
        raise
    print(
        f"trained {len(result.history)} epochs, best val accuracy "
        f"{result.best_val_accuracy:.4f} (epoch {result.best_epoch}) -> {args.out}"
    )


def cmd_calibrate(args):
    model, _, _, _ = load_checkpoint(args.checkpoint)
    x_mtm, x_pg, labels, _ = _normalized_inputs(args.data)
    scores = _scores(model, x_mtm, x_pg)
    thresholds = sensing.calibrate_thresholds(
        scores, labels, args.target_pf, calibration_set_id=args.data
    )
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "thresholds.json"), "w") as f:
        json.dump({
            "target_pf": thresholds.target_pf,
            "lambda_values": [float(v) for v in thresholds.lam],
            "calibration_set_id": thresholds.calibration_set_id,
        }, f, indent=2, sort_keys=True)
    _echo_config(args.out, {
        "command": "calibrate", "checkpoint": args.checkpoint,
        "data": args.data, "target_pf": args.target_pf,
    })
    print(f"calibrated {thresholds.lam.size} thresholds at target_pf="
          f"{args.target_pf} -> {args.out}")


def _load_thresholds(path):
    with open(os.path.join(path, "thresholds.json")) as f:
        blob = json.load(f)
    return sensing.ThresholdVector(
        lam=np.array(blob["lambda_values"], dtype=float),
        target_pf=blob["target_pf"],
        calibration_set_id=blob.get("calibration_set_id", ""),
    )


def cmd_evaluate(args):
    model, _, _, _ = load_checkpoint(args.checkpoint)
    thresholds = _load_thresholds(args.thresholds)
    x_mtm, x_pg, labels, meta = _normalized_inputs(args.data)
    scores = _scores(model, x_mtm, x_pg)
    decisions = sensing.decide(scores, thresholds)
    counts = sensing.accumulate_confusion(
        decisions, labels, sensing.ConfusionCounts.zeros(meta["N"])
    )
    pd, pf = sensing.micro_metrics(counts)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "metrics.json"), "w") as f:
        json.dump({
            "micro_pd": pd,
            "micro_pf": pf,
            "target_pf": thresholds.target_pf,
            "thresholds": [float(v) for v in thresholds.lam],
            "threshold_mode": "per-subband",
            "dataset": args.data,
            "checkpoint": args.checkpoint,
            "num_samples": int(len(labels)),
        }, f, indent=2, sort_keys=True)
    sensing.write_per_subband_csv(
        sensing.per_subband_report(counts),
        os.path.join(args.out, "per_subband.csv"),
    )
    _echo_config(args.out, {
        "command": "evaluate", "checkpoint": args.checkpoint,
        "thresholds": args.thresholds, "data": args.data,
    })
    print(f"micro Pd={pd:.4f} Pf={pf:.4f} -> {args.out}")


def cmd_roc(args):
    model, _, _, _ = load_checkpoint(args.checkpoint)
    x_mtm, x_pg, labels, _ = _normalized_inputs(args.data)
    scores = _scores(model, x_mtm, x_pg)
    curve = sensing.roc_curve(scores, labels, grid_size=args.grid_size)
    os.makedirs(args.out, exist_ok=True)
    sensing.write_roc_csv(curve, os.path.join(args.out, "roc.csv"))
    _echo_config(args.out, {
        "command": "roc", "checkpoint": args.checkpoint, "data": args.data,
        "grid_size": args.grid_size,
    })
    print(f"wrote ROC curve with {len(curve.points)} points -> {args.out}")


# ------------------------------------------------------------------- parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wbsense",
        description="Wideband spectrum sensing with dual power-spectrum inputs",
    )
    parser.add_argument("--threads", type=int, default=0,
                        help="limit worker threads (0 = library default)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", default=None, help="JSON config path")
        p.add_argument("--seed", type=int, default=None)
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("generate", help="generate a labeled IQ dataset")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("preprocess", help="compute PSD caches for a dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--nw", type=float, default=DEFAULT_TAPER["nw"],
                   help="time-bandwidth product (W = nw / M)")
    p.add_argument("--tapers", type=int, default=DEFAULT_TAPER["num_tapers"])
    p.add_argument("--taper-cache", default=None,
                   help="directory for cached taper banks")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("augment", help="shuffle-augment a preprocessed dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--factor-inter", type=int, default=1)
    p.add_argument("--factor-intra", type=int, default=1)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train the fusion network")
    common(p)
    p.add_argument("--data", required=True, help="preprocessed training dataset")
    p.add_argument("--val-data", default=None,
                   help="separate validation dataset (default: split --data)")
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--max-epochs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="calibrate per-subband thresholds")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="calibration dataset")
    p.add_argument("--target-pf", type=float, default=0.01)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="evaluate detection metrics")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--thresholds", required=True,
                   help="directory holding thresholds.json")
    p.add_argument("--data", required=True, help="test dataset")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("roc", help="sweep a global threshold into a ROC curve")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--grid-size", type=int, default=100)
    p.set_defaults(func=cmd_roc)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        set_num_threads(args.threads)
    try:
        args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except WbsenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
