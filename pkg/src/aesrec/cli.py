"""Experiment commands: prepare, train, evaluate, stats, recommend.

Configuration comes from a key=value file plus per-key command-line
overrides; every run writes the fully resolved configuration next to its
outputs so results are reproducible from the echo alone. Model kinds are
config values sharing one code path: the tensor ranker and its ablations
(vra-aplr, vra-plr, vra-basic, vrco, vrao, vrh), the matrix baselines
(bpr, vbpr, wbpr, cplr), and the dense reconstruction mode (mse-opt).

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import baselines as bl
from . import model as mdl
from .data import (
    discretize_time,
    k_core_filter,
    load_interactions,
    read_split,
    split_dataset,
    write_split,
)
from .errors import AesrecError, ConfigError, DataError
from .evaluate import evaluate_split, top_n, write_metrics_csv
from .features import (
    FeatureMatrix,
    hsv_segment_diff,
    load_features,
    load_hsv_table,
    normalize_features,
)
from .learning import train_ranking
from .model import Hyperparams
from .neighbors import build_neighbor_index

TENSOR_KINDS = ("vra-aplr", "vra-plr", "vra-basic", "vrco", "vrao", "vrh")
BASELINE_KINDS = bl.BASELINE_KINDS
MODEL_KINDS = TENSOR_KINDS + BASELINE_KINDS + ("mse-opt",)

# key: (type, default, help)
CONFIG_SCHEMA = {
    "interactions": (str, None, "interactions csv (user,item,timestamp[,category])"),
    "features": (str, None, "visual feature file (binary or text)"),
    "hsv_table": (str, None, "per-item HSV histogram table"),
    "out_dir": (str, "run_out", "output directory for this command"),
    "data_dir": (str, None, "prepared split directory (defaults to out_dir)"),
    "min_timestamp": (int, 1262304000, "drop records before this unix time"),
    "k_core": (int, 5, "iterative k-core threshold"),
    "granularity": (int, 604800, "seconds per time interval (weekly default)"),
    "split_ratios": (str, "0.8,0.1,0.1", "train,validation,test fractions"),
    "split_unit": (str, "triple", "unit of the random split (triple only)"),
    "category": (str, None, "keep only records with this category column"),
    "model_kind": (str, "vra-aplr", "one of: " + ", ".join(MODEL_KINDS)),
    "k1": (int, 200, "user-item factor rank"),
    "k2": (int, 200, "time-item factor rank"),
    "lambda_c": (float, 0.01, "coupled-matrix weight"),
    "lambda_r": (float, 1.5, "regularization coefficient"),
    "eta1": (float, 0.1, "weight of positive-vs-neighbor pairs"),
    "eta2": (float, 0.01, "weight of neighbor-vs-negative pairs"),
    "rho": (int, 5, "pairs sampled per record per relation"),
    "batch_size": (int, 256, "records per mini-batch"),
    "learn_rate": (float, 0.01, "gradient step size"),
    "max_iters": (int, 200, "training epochs"),
    "seed": (int, 0, "RNG seed"),
    "k_cnn": (int, -1, "CNN-space cluster count (-1 auto, 0 disabled)"),
    "k_aes": (int, -1, "aesthetic-space cluster count (-1 auto, 0 disabled)"),
    "delta_r": (int, 0, "time-graph neighbor window"),
    "n_list": (str, "5,10,20,50,100", "top-n cutoffs"),
    "eval_every": (int, 1, "epochs between validation evaluations"),
    "eval_subsample": (int, 1000, "validation records scored per evaluation"),
    "test_subsample": (int, 0, "test groups scored by evaluate (0 = all)"),
    "normalize_features": (str, "none", "none or unitL2-per-block"),
    "threads": (int, 1, "worker threads (1 = fully deterministic)"),
    "dense_limit": (int, mdl.DENSE_CELL_LIMIT, "cell cap for mse-opt"),
    "segment": (str, None, "item-id list file for the stats segment"),
    "baseline_segment": (str, None, "item-id list file for the stats baseline"),
    "resume": (str, None, "checkpoint to continue training from (tensor kinds)"),
}


def parse_config_file(path) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def resolve_config(file_values: dict, cli_values: dict) -> dict:
    cfg = {}
    for key, (typ, default, _help) in CONFIG_SCHEMA.items():
        raw = cli_values.get(key)
        if raw is None:
            raw = file_values.get(key)
        if raw is None:
            cfg[key] = default
            continue
        try:
            cfg[key] = typ(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {typ.__name__}") from None
    if cfg["data_dir"] is None:
        cfg["data_dir"] = cfg["out_dir"]
    if cfg["model_kind"] not in MODEL_KINDS:
        raise ConfigError(
            f"unknown model kind {cfg['model_kind']!r}; choose from {', '.join(MODEL_KINDS)}"
        )
    if cfg["split_unit"] != "triple":
        raise ConfigError("only split_unit=triple is supported")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be at least 1")
    return cfg


def echo_config(cfg: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}={'' if cfg[key] is None else cfg[key]}" for key in sorted(cfg)]
    (out_dir / "config_resolved.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_ratios(cfg) -> tuple:
    parts = [p for p in str(cfg["split_ratios"]).split(",") if p.strip()]
    if len(parts) != 3:
        raise ConfigError(f"split_ratios needs three values, got {cfg['split_ratios']!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"unparseable split_ratios {cfg['split_ratios']!r}") from None


def _parse_n_list(cfg) -> list:
    try:
        values = [int(p) for p in str(cfg["n_list"]).split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"unparseable n_list {cfg['n_list']!r}") from None
    if not values or min(values) < 1:
        raise ConfigError("n_list must contain positive integers")
    return values


def _hyperparams(cfg, **overrides) -> Hyperparams:
    base = dict(
        k1=cfg["k1"], k2=cfg["k2"], lambda_c=cfg["lambda_c"],
        lambda_r=cfg["lambda_r"], eta1=cfg["eta1"], eta2=cfg["eta2"],
        rho=cfg["rho"], batch_size=cfg["batch_size"],
        learn_rate=cfg["learn_rate"], max_iters=cfg["max_iters"],
        seed=cfg["seed"],
    )
    base.update(overrides)
    return Hyperparams(**base)


def _require(cfg, key: str) -> str:
    if not cfg[key]:
        raise ConfigError(f"this command needs the {key!r} config key")
    return cfg[key]


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------

def cmd_prepare(cfg) -> int:
    path = _require(cfg, "interactions")
    records = load_interactions(path, cfg["min_timestamp"], cfg["category"])
    records = k_core_filter(records, cfg["k_core"])
    if not records:
        raise DataError("no records survive filtering; lower k_core or the cutoff")
    ds = discretize_time(records, cfg["granularity"])
    bundle = split_dataset(ds, _parse_ratios(cfg), seed=cfg["seed"])
    out_dir = Path(cfg["out_dir"])
    write_split(bundle, out_dir)
    echo_config(cfg, out_dir)

    lines = [
        f"records            {len(records)}",
        f"users (P)          {ds.n_users}",
        f"items (Q)          {ds.n_items}",
        f"intervals (R)      {ds.n_intervals}",
        f"positives          {ds.n_positives}",
        f"matrix sparsity    {100.0 * ds.matrix_sparsity():.4f}%",
        f"tensor sparsity    {100.0 * ds.tensor_sparsity():.4f}%",
        f"train/val/test     {bundle.train.n_positives}/{len(bundle.validation)}/{len(bundle.test)}",
        f"cold-dropped       {bundle.dropped_validation} validation, {bundle.dropped_test} test",
    ]
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# feature assembly shared by train/evaluate/recommend
# ---------------------------------------------------------------------------

def _load_kind_features(cfg, kind: str, bundle):
    """The feature matrix a model kind consumes, or None for basic kinds."""
    ds = bundle.train
    needs_file = kind in ("vra-aplr", "vra-plr", "vrco", "vrao", "vbpr") or (
        kind == "mse-opt" and cfg["features"]
    )
    if kind == "vrh":
        table_path = _require(cfg, "hsv_table")
        table = load_hsv_table(table_path, ds.n_items, item_ids=ds.items)
        flat = table.histograms.reshape(table.n_items, 3 * table.bins)
        fm = FeatureMatrix(3 * table.bins, 0, flat)
    elif needs_file:
        feat_path = _require(cfg, "features")
        fm = load_features(feat_path, ds.n_items, item_ids=ds.items)
        if kind == "vrco":
            fm = FeatureMatrix(fm.dim_cnn, 0, fm.cnn_block())
        elif kind == "vrao":
            fm = FeatureMatrix(0, fm.dim_aes, fm.aes_block())
    elif cfg["features"]:
        # optional: basic kinds may still cluster on features for sampling
        fm = load_features(cfg["features"], ds.n_items, item_ids=ds.items)
    else:
        return None
    return normalize_features(fm, cfg["normalize_features"])


def _feature_mode_for(kind: str, features) -> str:
    if kind in ("vra-aplr", "vra-plr", "vrco", "vrao", "vrh"):
        return mdl.HYBRID
    if kind == "mse-opt" and features is not None:
        return mdl.HYBRID
    return mdl.BASIC


def _neighbor_index_for(cfg, kind: str, bundle, features, hp):
    if kind in BASELINE_KINDS or kind == "mse-opt" or kind == "vra-plr":
        return None
    if hp.eta1 == 0 and hp.eta2 == 0:
        return None
    k_cnn = None if cfg["k_cnn"] < 0 else cfg["k_cnn"]
    k_aes = None if cfg["k_aes"] < 0 else cfg["k_aes"]
    # a restricted feature matrix may lack one block entirely
    if features is not None and features.dim_cnn == 0:
        k_cnn = 0
    if features is not None and features.dim_aes == 0:
        k_aes = 0
    return build_neighbor_index(
        bundle.train, features, k_cnn=k_cnn, k_aes=k_aes,
        delta_r=cfg["delta_r"], seed=cfg["seed"],
    )


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(cfg) -> int:
    bundle = read_split(cfg["data_dir"])
    kind = cfg["model_kind"]
    features = _load_kind_features(cfg, kind, bundle)
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out_dir)

    checkpoint_path = out_dir / "checkpoint.bin"
    history_path = out_dir / "history.csv"

    if kind in BASELINE_KINDS:
        hp = _hyperparams(cfg)
        result = bl.train_baseline(bundle, features, hp, kind,
                                   eval_every=cfg["eval_every"],
                                   eval_subsample=cfg["eval_subsample"])
        bl.save_baseline_checkpoint(checkpoint_path, result.params, result.best_epoch)
        mdl.write_history_csv(history_path, result.history)
        print(f"{kind}: best validation NDCG@10 {result.best_ndcg:.6f} "
              f"at epoch {result.best_epoch}")
        return 0

    if kind == "mse-opt":
        hp = _hyperparams(cfg)
        feature_mode = _feature_mode_for(kind, features)
        params, history = mdl.train_mse(bundle, features, hp,
                                        feature_mode=feature_mode,
                                        dense_limit=cfg["dense_limit"])
        mdl.save_checkpoint(checkpoint_path, params, hp.max_iters, kind)
        rows = [(it, obj, None, None, 0.0) for it, obj in history]
        mdl.write_history_csv(history_path, rows)
        print(f"mse-opt: objective {history[0][1]:.6f} -> {history[-1][1]:.6f}")
        return 0

    overrides = {}
    if kind == "vra-plr":
        overrides = {"eta1": 0.0, "eta2": 0.0}
    hp = _hyperparams(cfg, **overrides)
    feature_mode = _feature_mode_for(kind, features)
    if feature_mode == mdl.HYBRID and features is None:
        raise ConfigError(f"model kind {kind} needs a feature file")
    nbr = _neighbor_index_for(cfg, kind, bundle, features, hp)
    if nbr is not None:
        sizes = nbr.summary()
        print("neighbor set sizes: " +
              ", ".join(f"{name}={total}" for name, total in sizes.items()))
    initial_params = None
    start_epoch = 1
    if cfg["resume"]:
        initial_params, resume_meta = mdl.load_checkpoint(cfg["resume"])
        mdl.check_checkpoint_shapes(resume_meta, bundle.train)
        if resume_meta["model_kind"] != kind:
            raise ConfigError(
                f"resume checkpoint is {resume_meta['model_kind']!r}, "
                f"training requested {kind!r}"
            )
        start_epoch = resume_meta["iteration"] + 1
        print(f"resuming from {cfg['resume']} at epoch {start_epoch}")
    result = train_ranking(bundle, features, nbr, hp,
                           eval_every=cfg["eval_every"],
                           feature_mode=feature_mode,
                           eval_subsample=cfg["eval_subsample"],
                           initial_params=initial_params,
                           start_epoch=start_epoch)
    mdl.save_checkpoint(checkpoint_path, result.params, result.best_epoch, kind)
    mdl.write_history_csv(history_path, result.history)
    print(f"{kind}: best validation NDCG@10 {result.best_ndcg:.6f} "
          f"at epoch {result.best_epoch}")
    return 0


# ---------------------------------------------------------------------------
# evaluate / recommend
# ---------------------------------------------------------------------------

def _load_any_checkpoint(cfg, checkpoint_path, bundle):
    raw = Path(checkpoint_path).read_bytes()
    meta = mdl.peek_checkpoint(raw, checkpoint_path)
    kind = meta["model_kind"]
    mdl.check_checkpoint_shapes(meta, bundle.train)
    if kind in BASELINE_KINDS:
        params, _ = bl.load_baseline_checkpoint(checkpoint_path)
    else:
        params, _ = mdl.load_checkpoint(checkpoint_path)
    features = _load_kind_features(cfg, kind, bundle)
    needs_features = (
        meta["feature_mode"] == mdl.HYBRID or kind == "vbpr"
    )
    if needs_features:
        if features is None:
            raise ConfigError(f"checkpoint kind {kind} needs its feature inputs")
        if meta["feature_dim"] and features.dim != meta["feature_dim"]:
            raise DataError(
                f"checkpoint expects feature dim {meta['feature_dim']}, "
                f"file provides {features.dim}"
            )
    return params, features, meta


def cmd_evaluate(cfg, checkpoint_path) -> int:
    bundle = read_split(cfg["data_dir"])
    params, features, meta = _load_any_checkpoint(cfg, checkpoint_path, bundle)
    subsample = cfg["test_subsample"] or None
    report = evaluate_split(params, features, bundle, _parse_n_list(cfg),
                            subsample=subsample, seed=cfg["seed"], part="test")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out_dir)
    write_metrics_csv(out_dir / "metrics.csv", meta["model_kind"], report)
    for n in sorted(report.mean_f1):
        print(f"{meta['model_kind']} n={n} f1={report.mean_f1[n]:.6f} "
              f"ndcg={report.mean_ndcg[n]:.6f}")
    print(f"groups={report.n_groups} skipped={report.n_skipped}")
    return 0


def cmd_recommend(cfg, checkpoint_path, user: int, interval: int, n: int) -> int:
    bundle = read_split(cfg["data_dir"])
    params, features, meta = _load_any_checkpoint(cfg, checkpoint_path, bundle)
    ds = bundle.train
    if not 0 <= user < ds.n_users:
        raise DataError(f"unknown user index {user} (P={ds.n_users})")
    if not 0 <= interval < ds.n_intervals:
        raise DataError(f"unknown time index {interval} (R={ds.n_intervals})")
    result = top_n(params, features, ds, (user, interval), n)
    print(f"top-{n} for user {user} at interval {interval} ({meta['model_kind']}):")
    for rank, (q, score) in enumerate(
        zip(result.ranked_items.tolist(), result.scores.tolist()), start=1
    ):
        print(f"{rank:4d}  {q:8d}  {ds.items[q]:24s}  {score:+.6f}")
    if result.truncated:
        print(f"(only {len(result.ranked_items)} candidates available)")
    return 0


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def _read_segment(path, item_ids) -> list:
    index_of = {str(ident): i for i, ident in enumerate(item_ids)}
    indices = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        ident = line.strip()
        if not ident:
            continue
        if ident in index_of:
            indices.append(index_of[ident])
        elif ident.isdigit() and int(ident) < len(item_ids):
            indices.append(int(ident))
        else:
            raise DataError(f"{path}:{lineno}: unknown item id {ident!r}")
    if not indices:
        raise DataError(f"{path}: empty segment")
    return indices


def cmd_stats(cfg) -> int:
    table_path = _require(cfg, "hsv_table")
    seg_path = _require(cfg, "segment")
    base_path = _require(cfg, "baseline_segment")
    data_dir = Path(cfg["data_dir"])
    items_file = data_dir / "items.txt"
    if items_file.exists():
        item_ids = items_file.read_text(encoding="utf-8").splitlines()
        table = load_hsv_table(table_path, len(item_ids), item_ids=item_ids)
    else:
        table = load_hsv_table(table_path, None)
        item_ids = [str(i) for i in range(table.n_items)]
    segment = _read_segment(seg_path, item_ids)
    baseline = _read_segment(base_path, item_ids)
    diff = hsv_segment_diff(table, segment, baseline)

    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out_dir)
    header = "channel," + ",".join(f"bin_{i}" for i in range(table.bins))
    lines = [header]
    for name, row in zip(("hue", "saturation", "value"), diff):
        lines.append(name + "," + ",".join(f"{x:.9f}" for x in row))
    out_path = out_dir / "hsv_diff.csv"
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aesrec",
        description="time-aware visual recommendation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("prepare", "train", "evaluate", "stats", "recommend"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="key=value config file")
        for key, (_typ, _default, help_text) in CONFIG_SCHEMA.items():
            cmd.add_argument(
                "--" + key.replace("_", "-"), dest=key, metavar="V", help=help_text
            )
        if name in ("evaluate", "recommend"):
            cmd.add_argument("--checkpoint", required=True)
        if name == "recommend":
            cmd.add_argument("--user", type=int, required=True)
            cmd.add_argument("--time", type=int, required=True)
            cmd.add_argument("--n", type=int, default=10)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        cli_values = {
            key: getattr(args, key)
            for key in CONFIG_SCHEMA
            if getattr(args, key, None) is not None
        }
        cfg = resolve_config(file_values, cli_values)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.checkpoint)
        if args.command == "stats":
            return cmd_stats(cfg)
        if args.command == "recommend":
            return cmd_recommend(cfg, args.checkpoint, args.user, args.time, args.n)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except AesrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
