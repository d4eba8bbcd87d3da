"""Command-line entry point: gen / train / score / eval / report.

Every command is a pure function of (config file, flags, seed); flag values
override config-file values, and the fully resolved configuration is echoed
into the output directory. Exit codes: 0 success, 2 user or configuration
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import c3score, evalsuite, synthdata, trainer
from .errors import C3RError, ConfigError, DivergenceError, NumericError

RISK_LOG_COLUMNS = [
    "epoch", "train_loss", "train_suf", "train_mon", "train_kl_theta",
    "train_kl_phi", "train_indep", "train_cond_indep",
    "lambda1", "lambda2", "lambda3",
    "eval_suf_hard", "eval_suf_surrogate", "eval_nec_hard",
    "eval_nec_surrogate", "eval_mon_hard", "eval_mon_surrogate",
    "eval_c3_bound_hard", "eval_c3_bound_surrogate",
    "eval_kl_theta", "eval_kl_phi",
]


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    with open(p) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})")
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top-level JSON value must be an object")
    return doc


def _resolve(args: argparse.Namespace, file_cfg: dict, key: str, default):
    """Flag value if given, else config-file value, else the default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return default


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_risk_log(path: Path, result: trainer.TrainResult) -> None:
    lambdas = {"lambda1": result.weights.kl_theta,
               "lambda2": result.weights.indep,
               "lambda3": result.weights.cond_indep}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RISK_LOG_COLUMNS)
        for entry in result.log:
            row = dict(entry)
            row.update(lambdas)
            writer.writerow([repr(row[c]) if isinstance(row.get(c), float)
                             else row.get(c, "") for c in RISK_LOG_COLUMNS])


def cmd_gen(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    defaults = synthdata.SynthConfig()
    cfg = synthdata.SynthConfig(
        n_train=int(_resolve(args, file_cfg, "n_train", defaults.n_train)),
        n_eval=int(_resolve(args, file_cfg, "n_eval", defaults.n_eval)),
        xi_a=tuple(_resolve(args, file_cfg, "xi_a", defaults.xi_a)),
        xi_label=float(_resolve(args, file_cfg, "xi_label", defaults.xi_label)),
        xi_b=tuple(_resolve(args, file_cfg, "xi_b", defaults.xi_b)),
        omega=float(_resolve(args, file_cfg, "omega", defaults.omega)),
        block_dim=int(_resolve(args, file_cfg, "block_dim", defaults.block_dim)),
        noise_var=float(_resolve(args, file_cfg, "noise_var", defaults.noise_var)),
        seed=int(_resolve(args, file_cfg, "seed", defaults.seed)))
    dataset = synthdata.generate_dataset(cfg)
    synthdata.save_dataset(dataset, args.out)
    print(f"wrote dataset ({cfg.n_train} train / {cfg.n_eval} eval rows) "
          f"to {args.out}")
    return 0


def _train_config(args: argparse.Namespace, file_cfg: dict) -> trainer.TrainConfig:
    d = trainer.TrainConfig()
    return trainer.TrainConfig(
        lambda1=float(_resolve(args, file_cfg, "lambda1", d.lambda1)),
        lambda2=float(_resolve(args, file_cfg, "lambda2", d.lambda2)),
        lambda3=float(_resolve(args, file_cfg, "lambda3", d.lambda3)),
        lr=float(_resolve(args, file_cfg, "lr", d.lr)),
        epochs=int(_resolve(args, file_cfg, "epochs", d.epochs)),
        batch_size=int(_resolve(args, file_cfg, "batch_size", d.batch_size)),
        adversary_steps_per_main_step=int(_resolve(
            args, file_cfg, "adv_steps", d.adversary_steps_per_main_step)),
        seed=int(_resolve(args, file_cfg, "seed", d.seed)))


def cmd_train(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    data_dir = Path(args.data)
    if not data_dir.exists():
        raise ConfigError(f"dataset directory not found: {data_dir}")
    dataset = synthdata.load_dataset(data_dir)
    cfg = _train_config(args, file_cfg)
    baseline = bool(_resolve(args, file_cfg, "baseline", False))

    result = trainer.fit_baseline(dataset, cfg) if baseline \
        else trainer.train(dataset, cfg)

    out = Path(args.out)
    trainer.save_checkpoint(out, result)
    _write_risk_log(out / "risk_log.csv", result)
    _write_json(out / "train_config.json",
                {"config": cfg.to_json(), "baseline": baseline,
                 "data_dir": str(data_dir)})
    mode = "baseline" if baseline else "c3r"
    print(f"trained {mode} model for {cfg.epochs} epochs; checkpoint in {out}")
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    table = c3score.read_table(args.table)
    scores = c3score.score_table(table)
    text = json.dumps(scores, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    ckpt_dir = Path(args.checkpoint)
    data_dir = Path(args.data)
    for p in (ckpt_dir, data_dir):
        if not p.exists():
            raise ConfigError(f"input path not found: {p}")
    result = trainer.load_checkpoint(ckpt_dir)
    dataset = synthdata.load_dataset(data_dir)
    fused_dim = dataset.eval.fused().shape[1]
    if result.model.theta.in_dim != fused_dim:
        raise ConfigError(
            f"architecture mismatch: checkpoint expects {result.model.theta.in_dim} "
            f"features, dataset provides {fused_dim}")

    noise_var = float(_resolve(args, file_cfg, "noise_var", 10.0))
    noise_frac = float(_resolve(args, file_cfg, "noise_frac", 0.5))
    trials = int(_resolve(args, file_cfg, "trials", 5))
    seed = int(_resolve(args, file_cfg, "seed", 0))
    epsilon = float(_resolve(args, file_cfg, "epsilon", 0.05))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    corr = evalsuite.causal_property_report(result.model, dataset)
    _write_json(out / "correlation.json",
                {"seed": seed, **corr.as_dict()})

    clean_acc = evalsuite.model_accuracy(result.model, dataset.eval)
    noise_cfg = evalsuite.NoiseConfig(variance=noise_var,
                                      fraction=noise_frac, seed=seed)
    avg, worst, per_trial = evalsuite.accuracy_avg_worst(
        result.model, dataset.eval, noise_cfg, trials)
    with open(out / "accuracy.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experiment", "seed", "trial", "accuracy", "worst"])
        for i, acc in enumerate(per_trial):
            writer.writerow(["noise_robustness", seed, i, repr(acc), ""])
        writer.writerow(["noise_robustness", seed, "summary",
                         repr(avg), repr(worst)])
    _write_json(out / "accuracy.json",
                {"seed": seed, "clean": clean_acc, "avg": avg, "worst": worst,
                 "trials": per_trial, "noise_var": noise_var,
                 "noise_frac": noise_frac})

    # bound report: training-side hard risks of the final model
    train_report = trainer.batch_risk_report(result.model, dataset.train)
    eval_report = trainer.batch_risk_report(result.model, dataset.eval)
    bounds = evalsuite.bound_report(
        suf_hard=train_report["eval_suf_hard"],
        mon_hard=train_report["eval_mon_hard"],
        kl_theta=train_report["eval_kl_theta"],
        kl_phi=train_report["eval_kl_phi"],
        n=dataset.config.n_train, epsilon=epsilon)
    _write_json(out / "bounds.json", {
        "seed": seed,
        **bounds.as_dict(),
        "train_suf_hard": train_report["eval_suf_hard"],
        "train_mon_hard": train_report["eval_mon_hard"],
        "eval_suf_hard": eval_report["eval_suf_hard"],
        "eval_nec_hard": eval_report["eval_nec_hard"],
        "eval_suf_plus_nec_hard": (eval_report["eval_suf_hard"]
                                   + eval_report["eval_nec_hard"]),
    })
    print(f"wrote correlation.json, accuracy.csv/json, bounds.json to {out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    rows = []
    for run_dir in args.runs:
        run = Path(run_dir)
        corr_path = run / "correlation.json"
        acc_path = run / "accuracy.json"
        if not corr_path.exists():
            raise ConfigError(f"{run}: no correlation.json (not an eval output)")
        with open(corr_path) as fh:
            corr = json.load(fh)
        acc = {}
        if acc_path.exists():
            with open(acc_path) as fh:
                acc = json.load(fh)
        rows.append({"run": run.name,
                     "dcorr_snc": corr["dcorr_snc"],
                     "dcorr_sc": corr["dcorr_sc"],
                     "dcorr_nc": corr["dcorr_nc"],
                     "dcorr_sp": corr["dcorr_sp"],
                     "clean": acc.get("clean", ""),
                     "avg": acc.get("avg", ""),
                     "worst": acc.get("worst", "")})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["run", "dcorr_snc", "dcorr_sc", "dcorr_nc", "dcorr_sp",
            "clean", "avg", "worst"]
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([row[c] for c in cols])
    if args.svg:
        _write_svg(out / "summary.svg", rows)
    print(f"wrote summary.csv{' and summary.svg' if args.svg else ''} to {out}")
    return 0


def _write_svg(path: Path, rows: list[dict]) -> None:
    """Small self-contained grouped bar chart of the correlation scores."""
    keys = ["dcorr_snc", "dcorr_sc", "dcorr_nc", "dcorr_sp"]
    colors = ["#2b6cb0", "#38a169", "#d69e2e", "#c53030"]
    bar_w, gap, group_gap, height, base = 22, 4, 30, 220, 250
    width = 60 + len(rows) * (len(keys) * (bar_w + gap) + group_gap)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{base + 60}" font-family="sans-serif" font-size="11">']
    parts.append(f'<line x1="40" y1="{base}" x2="{width - 10}" y2="{base}" '
                 'stroke="#333"/>')
    for frac in (0.0, 0.5, 1.0):
        y = base - frac * height
        parts.append(f'<text x="8" y="{y + 4}">{frac:.1f}</text>')
    x = 60
    for row in rows:
        for key, color in zip(keys, colors):
            h = max(float(row[key]), 0.0) * height
            parts.append(f'<rect x="{x}" y="{base - h:.1f}" width="{bar_w}" '
                         f'height="{h:.1f}" fill="{color}"/>')
            x += bar_w + gap
        label_x = x - len(keys) * (bar_w + gap) / 2 - bar_w
        parts.append(f'<text x="{label_x:.0f}" y="{base + 16}">{row["run"]}</text>')
        x += group_gap
    for i, (key, color) in enumerate(zip(keys, colors)):
        y = 20 + i * 16
        parts.append(f'<rect x="{width - 110}" y="{y - 10}" width="12" '
                     f'height="12" fill="{color}"/>')
        parts.append(f'<text x="{width - 92}" y="{y}">{key[6:]}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="c3r",
        description="Synthetic multimodal generation, causal-completeness "
                    "training, exact scoring and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-eval", dest="n_eval", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--xi-label", dest="xi_label", type=float)
    p.add_argument("--block-dim", dest="block_dim", type=int)
    p.add_argument("--noise-var", dest="noise_var", type=float)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda3", type=float)
    p.add_argument("--adv-steps", dest="adv_steps", type=int)
    p.add_argument("--baseline", action="store_const", const=True,
                   default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a causal table JSON file")
    p.add_argument("--table", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-var", dest="noise_var", type=float)
    p.add_argument("--noise-frac", dest="noise_frac", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="summarize one or more eval outputs")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NumericError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (C3RError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
