"""``translob`` command line: synth | prepare | train | eval | attention.

Exit codes: 0 success, 2 usage or validation error, 1 runtime error.
Settings come from an optional JSON ``--config`` file; explicit flags win.
``TRANSLOB_THREADS`` caps the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .attention import export_attention
from .config import DEFAULTS, RunConfig
from .lob import (
    REGIMES,
    SMOOTHING_MODES,
    LobFileFormat,
    LobSeries,
    generate_synthetic_lob,
    load_archive,
    make_windows,
    parse_lob_file,
    save_archive,
    write_lob_csv,
)
from .lob.normalize import STATS_POLICIES
from .model import SCALE_MODES, ModelConfig, TransLOB, build_model
from .nn.checkpoint import load_checkpoint, restore_params
from .nn.optim import AdamState
from .training import evaluate, split_train_test, train

logger = logging.getLogger("translob")


class UsageError(Exception):
    """Bad invocation detected after argument parsing."""


# argument helpers ------------------------------------------------------------


def _default(name: str) -> str:
    value = getattr(DEFAULTS, name)
    if isinstance(value, tuple):
        value = ",".join(map(str, value))
    return f"(default: {value})"


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags given here override it")
    p.add_argument("--seed", type=int, help=f"root seed {_default('seed')}")


def _add_label_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("labelling")
    g.add_argument("--k", dest="horizon_k", type=_positive_int, help=f"prediction horizon {_default('horizon_k')}")
    g.add_argument("--alpha", type=float, help=f"neutral band half-width {_default('alpha')}")
    g.add_argument("--smoothing", choices=SMOOTHING_MODES, help=f"future-mean reading {_default('smoothing')}")
    g.add_argument("--stats-policy", dest="stats_policy", choices=STATS_POLICIES,
                   help=f"normalization history {_default('stats_policy')}")
    g.add_argument("--cross-day", dest="cross_day", action="store_true", default=None,
                   help=f"let windows span day boundaries {_default('cross_day')}")
    g.add_argument("--window", type=_positive_int, help=f"events per input window {_default('window')}")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--filters", dest="conv_filters", type=_positive_int, help=f"conv filters {_default('conv_filters')}")
    g.add_argument("--dilations", type=_int_list, help=f"conv dilations {_default('dilations')}")
    g.add_argument("--d-model", dest="d_model", type=_positive_int, help=f"model dimension {_default('d_model')}")
    g.add_argument("--heads", dest="num_heads", type=_positive_int, help=f"attention heads {_default('num_heads')}")
    g.add_argument("--blocks", dest="num_blocks", type=_positive_int, help=f"transformer blocks {_default('num_blocks')}")
    g.add_argument("--unshared", dest="weights_shared", action="store_false", default=None,
                   help=f"separate weights per block (shared {_default('weights_shared')})")
    g.add_argument("--mlp-dim", dest="mlp_dim", type=_positive_int, help=f"block MLP width {_default('mlp_dim')}")
    g.add_argument("--dense-dim", dest="dense_dim", type=_positive_int, help=f"dense layer width {_default('dense_dim')}")
    g.add_argument("--dropout", type=float, help=f"dropout rate {_default('dropout')}")
    g.add_argument("--l2", type=float, help=f"L2 weight on the dense layer {_default('l2')}")
    g.add_argument("--scale-mode", dest="scale_mode", choices=SCALE_MODES,
                   help=f"attention score scaling {_default('scale_mode')}")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--batch-size", dest="batch_size", type=_positive_int, help=f"mini-batch size {_default('batch_size')}")
    g.add_argument("--epochs", type=_positive_int, help=f"epochs {_default('epochs')}")
    g.add_argument("--lr", dest="learning_rate", type=float, help=f"Adam learning rate {_default('learning_rate')}")
    g.add_argument("--beta1", type=float, help=f"Adam beta1 {_default('beta1')}")
    g.add_argument("--beta2", type=float, help=f"Adam beta2 {_default('beta2')}")
    g.add_argument("--adam-eps", dest="adam_eps", type=float, help=f"Adam epsilon {_default('adam_eps')}")
    g.add_argument("--no-shuffle", dest="shuffle", action="store_false", default=None,
                   help=f"keep window order (shuffle {_default('shuffle')})")
    g.add_argument("--eval-every", dest="eval_every", type=_positive_int,
                   help=f"validate every N epochs {_default('eval_every')}")
    g.add_argument("--patience", type=_positive_int, help=f"early-stop patience in evaluations {_default('patience')}")


CONFIG_KEYS = {f for f in DEFAULTS.to_dict()}


def _run_config(args) -> RunConfig:
    base = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: v for k, v in vars(args).items() if k in CONFIG_KEYS}
    return base.merged(overrides)


def _setup_logging(log_file=None) -> None:
    logger.setLevel(logging.INFO)
    for h in list(logger.handlers):
        logger.removeHandler(h)
        h.close()
    fmt = logging.Formatter("%(message)s")
    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(fmt)
    logger.addHandler(stream)
    if log_file is not None:
        fh = logging.FileHandler(log_file, mode="a", encoding="utf-8")
        fh.setFormatter(fmt)
        logger.addHandler(fh)
    logging.getLogger("translob.training").setLevel(logging.INFO)


def _require_file(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    return path


def _require_archive(path) -> Path:
    path = Path(path)
    for suffix in (".npz", ".json"):
        _require_file(path.with_suffix(suffix))
    return path


# commands --------------------------------------------------------------------


def cmd_synth(args) -> int:
    series = generate_synthetic_lob(args.seed, args.n, args.regime, n_days=args.days)
    out = Path(args.out)
    write_lob_csv(series, out, with_day_id=True)
    print(f"wrote {len(series)} events over {args.days} day(s) to {out}")
    return 0


def _load_inputs(paths, layout: str, on_invalid: str) -> LobSeries:
    parts = []
    next_day = 0
    next_ts = 0
    skipped = 0
    for path in paths:
        s = parse_lob_file(_require_file(path), LobFileFormat(layout=layout, on_invalid=on_invalid, day_id=0))
        skipped += s.n_skipped
        if len(s) == 0:
            continue
        # each file continues after the days and event ordinals of the previous one
        day = s.day_id - s.day_id.min() + next_day
        parts.append(LobSeries(s.features, day, s.timestamp - s.timestamp.min() + next_ts, s.tags))
        next_day = int(day.max()) + 1
        next_ts = int(parts[-1].timestamp.max()) + 1
    series = LobSeries.empty() if not parts else LobSeries(
        np.concatenate([p.features for p in parts]),
        np.concatenate([p.day_id for p in parts]),
        np.concatenate([p.timestamp for p in parts]),
    )
    series.n_skipped = skipped
    return series


def cmd_prepare(args) -> int:
    cfg = _run_config(args)
    series = _load_inputs(args.inputs, args.layout, args.on_invalid)
    n_skipped = series.n_skipped
    if args.split != "all":
        train_part, test_part = split_train_test(series, cfg.n_train_days, cfg.n_test_days)
        # the first test day keeps the last training day as normalization history
        if args.split == "train":
            series = train_part
        else:
            history = series.select_days([train_part.days()[-1]]) if cfg.stats_policy == "previous_day" else train_part
            series = LobSeries(
                np.concatenate([history.features, test_part.features]),
                np.concatenate([history.day_id, test_part.day_id]),
                np.concatenate([history.timestamp, test_part.timestamp]),
            )
    ws = make_windows(series, cfg.label_config(), cfg.stats_policy, cfg.window, cfg.cross_day)
    sidecar = save_archive(ws, args.out, {
        "seed": cfg.seed,
        "sources": [str(p) for p in args.inputs],
        "layout": args.layout,
        "split": args.split,
        "n_events": len(series),
        "n_skipped": n_skipped,
    })
    counts = ws.class_counts()
    total = max(len(ws), 1)
    balance = ", ".join(f"{name} {n} ({100 * n / total:.1f}%)" for name, n in counts.items())
    print(f"{len(ws)} windows from {len(series)} events; {balance}")
    print(f"archive: {Path(args.out).with_suffix('.npz')} (sidecar {sidecar})")
    return 0


def _echo_config(cfg: RunConfig, labels: dict) -> None:
    logger.info(
        "config: batch=%d lr=%g heads=%d blocks=%d epochs=%d seed=%d",
        cfg.batch_size, cfg.learning_rate, cfg.num_heads, cfg.num_blocks, cfg.epochs, cfg.seed,
    )
    logger.info("archive labels: k=%s alpha=%s smoothing=%s", labels.get("horizon_k"), labels.get("alpha"),
                labels.get("smoothing"))
    logger.info("config json: %s", json.dumps(cfg.to_dict(), sort_keys=True))


def cmd_train(args) -> int:
    cfg = _run_config(args)
    windows = load_archive(_require_archive(args.archive))
    if len(windows) == 0:
        raise UsageError(f"archive {args.archive} holds no windows")
    val = load_archive(_require_archive(args.val)) if args.val else None
    out_dir = Path(args.out_dir or cfg.out_dir or "run")
    out_dir.mkdir(parents=True, exist_ok=True)
    _setup_logging(out_dir / "run.log")

    adam = None
    start_epoch = 0
    if args.resume:
        blob = load_checkpoint(_require_file(args.resume))
        model_cfg = ModelConfig.from_dict(blob["meta"]["model_config"])
        model = build_model(model_cfg)
        restore_params(model.parameters(), blob)
        if blob.get("adam") is None:
            raise UsageError(f"checkpoint {args.resume} carries no optimizer state")
        adam = AdamState.from_dict(blob["adam"])
        start_epoch = int(blob["meta"].get("epoch", 0))
        cfg = cfg.merged({k: v for k, v in model_cfg.to_dict().items() if k in CONFIG_KEYS})
        logger.info("resuming from %s at epoch %d, step %d", args.resume, start_epoch, adam.t)
    else:
        model_cfg = cfg.model_config()
        model = build_model(model_cfg)
    if windows.window != model_cfg.window:
        raise UsageError(f"archive windows have {windows.window} rows, model expects {model_cfg.window}")

    _echo_config(cfg, windows.meta)
    logger.info("parameters: %d; training windows: %d %s", model.num_parameters(), len(windows),
                json.dumps(windows.class_counts()))
    result = train(model, windows, cfg.train_config(), val_windows=val, out_dir=out_dir, adam=adam,
                   start_epoch=start_epoch, checkpoint_meta={"seed": cfg.seed, "run_config": cfg.to_dict(),
                                                            "archive": str(args.archive)})
    final = result.history[-1]
    logger.info("done: %d steps, final loss %.6f, train accuracy %.2f, best epoch %s",
                result.adam.t, final["loss"], final["train_accuracy"], result.best_epoch)
    return 0


def _model_from_checkpoint(path, config_path=None) -> TransLOB:
    blob = load_checkpoint(_require_file(path))
    if config_path:
        model_cfg = RunConfig.load(config_path).model_config()
    else:
        model_cfg = ModelConfig.from_dict(blob["meta"]["model_config"])
    model = build_model(model_cfg)
    restore_params(model.parameters(), blob)
    return model


def cmd_eval(args) -> int:
    windows = load_archive(_require_archive(args.archive))
    if len(windows) == 0:
        raise UsageError(f"archive {args.archive} holds no windows")
    model = _model_from_checkpoint(args.checkpoint, args.config)
    metrics = evaluate(model, windows)
    text = json.dumps(metrics.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_attention(args) -> int:
    windows = load_archive(_require_archive(args.archive))
    if not 0 <= args.index < len(windows):
        raise UsageError(f"sample index {args.index} out of range for {len(windows)} windows")
    model = _model_from_checkpoint(args.checkpoint, args.config)
    maps = model.extract_attention(windows[args.index].input)
    paths = export_attention(maps, args.out_dir)
    print(f"wrote {len(paths)} files for {maps.shape[0]} blocks x {maps.shape[1]} heads to {args.out_dir}")
    return 0


# parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="translob", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic order-book CSV",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--n", type=_positive_int, default=5000, help="number of events")
    p.add_argument("--regime", choices=REGIMES, default="mixed", help="price regime")
    p.add_argument("--days", type=_positive_int, default=1, help="number of trading days")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="normalize, label and window order-book files into an archive")
    p.add_argument("inputs", nargs="+", help="input files; each fi2010 file is one day")
    p.add_argument("--out", required=True, help="archive path (.npz plus .json sidecar)")
    p.add_argument("--layout", choices=("csv", "fi2010"), default="csv", help="input layout (default: csv)")
    p.add_argument("--on-invalid", dest="on_invalid", choices=("abort", "skip"), default="abort",
                   help="what to do with invalid book rows (default: abort)")
    p.add_argument("--split", choices=("all", "train", "test"), default="all",
                   help="keep all days or one side of the day split (default: all)")
    p.add_argument("--train-days", dest="n_train_days", type=_positive_int,
                   help=f"days in the training split {_default('n_train_days')}")
    p.add_argument("--test-days", dest="n_test_days", type=_positive_int,
                   help=f"days in the test split {_default('n_test_days')}")
    _add_config(p)
    _add_label_flags(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a window archive")
    p.add_argument("archive", help="training archive")
    p.add_argument("--val", help="validation archive used to pick the best checkpoint")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default: run)")
    p.add_argument("--resume", help="checkpoint to continue from (model and optimizer state)")
    _add_config(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="print metrics of a checkpoint on an archive")
    p.add_argument("archive")
    p.add_argument("checkpoint")
    p.add_argument("--config", help="run config whose model settings replace the checkpoint's")
    p.add_argument("--out", help="also write the metrics JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attention", help="export attention maps of one window")
    p.add_argument("archive")
    p.add_argument("checkpoint")
    p.add_argument("--index", type=int, default=0, help="window index (default: 0)")
    p.add_argument("--out-dir", dest="out_dir", default="attention", help="output directory (default: attention)")
    p.add_argument("--config", help="run config whose model settings replace the checkpoint's")
    p.set_defaults(func=cmd_attention)
    return parser


def _thread_limit():
    value = os.environ.get("TRANSLOB_THREADS")
    if not value:
        return None
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"TRANSLOB_THREADS must be a positive integer, got {value!r}") from None
    if n < 1:
        raise UsageError(f"TRANSLOB_THREADS must be a positive integer, got {value!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging()
    try:
        limiter = _thread_limit()
        try:
            return args.func(args)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except (UsageError, ValueError) as exc:
        print(f"translob {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"translob {args.command}: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
