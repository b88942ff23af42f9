"""Experiment runner: generate data, train, evaluate, sweep and ablate.

Every run writes its artifacts into one directory (effective config,
metrics log, checkpoint, evaluation report, score dump and histograms)
plus a manifest listing them; reruns of the same plan overwrite with
identical bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as dt
from . import evaluation as ev
from . import model as md
from . import scoring as sc
from . import trainer as tr
from .errors import ConfigError, FeatureFileError, NumericError, UdaError

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SCHEME_ABLATION = ("ours", "uan", "entropy", "ours_no_d", "ours_no_maxy")

#: fraction of each scheme's score range used for the default thresholds,
#: taken from the main scheme's defaults on [0, 2]
_THRESHOLD_FRACTIONS = {"w0": 0.5, "w_beta": 0.4, "w_alpha_start": 0.75}


def scheme_defaults(cfg: tr.TrainConfig, scheme: str) -> tr.TrainConfig:
    """Re-express the default thresholds in another scheme's native range."""
    lo, hi = sc.SCHEME_RANGES[scheme]
    span = hi - lo
    return replace(cfg, scheme=scheme,
                   w0=lo + _THRESHOLD_FRACTIONS["w0"] * span,
                   w_beta=lo + _THRESHOLD_FRACTIONS["w_beta"] * span,
                   w_alpha_start=lo + _THRESHOLD_FRACTIONS["w_alpha_start"] * span)


def default_output_root() -> Path:
    return Path(os.environ.get("UDASELECT_OUTPUT_ROOT", "runs"))


# ---------------------------------------------------------------------------
# run machinery


def benchmark_config(**overrides) -> tr.TrainConfig:
    """Tuned hyperparameters for the synthetic benchmark.

    A linear feature extractor suffices here because the synthetic domain
    gap is affine, and it keeps the extractor from folding private-class
    blobs onto source clusters, which would blind the domain classifier.
    """
    base = dict(total_steps=3000, lr=0.01, grl_lambda=0.3,
                f_hidden=(), feature_dim=8)
    base.update(overrides)
    return tr.TrainConfig(**base)


def make_benchmark(cfg: tr.TrainConfig, dim: int = 8, per_class: int = 60
                   ) -> tuple[dt.DomainDataset, dt.DomainDataset, dt.LabelSetSpec]:
    """The seed-pinned synthetic benchmark tied to the run seed."""
    spec = dt.benchmark_label_spec()
    src, tgt = dt.gen_synthetic(spec, dim=dim, per_class=per_class,
                                shift=dt.benchmark_shift(), seed=cfg.seed)
    return src, tgt, spec


def run_experiment(name: str, cfg: tr.TrainConfig, src: dt.DomainDataset,
                   tgt: dt.DomainDataset, spec: dt.LabelSetSpec,
                   out_dir: Path) -> ev.EvalReport:
    """Train, evaluate and write every artifact of one run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    model, records = tr.train(src, tgt, cfg)
    report = ev.evaluate(model, tgt, spec, cfg.w0, cfg.scheme)

    tr.write_metrics(out_dir / "metrics.jsonl", records)
    md.save_checkpoint(model, out_dir / "checkpoint.txt")
    (out_dir / "config.json").write_text(
        json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")
    (out_dir / "eval.json").write_text(report.to_json() + "\n")
    (out_dir / "eval.txt").write_text(report.summary() + "\n")

    score_records = (sc.score_batch(model, src.features, cfg.scheme)
                     + sc.score_batch(model, tgt.features, cfg.scheme))
    domains = ["source"] * src.n + ["target"] * tgt.n
    labels = [int(y) for y in src.labels] + [int(y) for y in tgt.labels]
    sc.write_score_dump(out_dir / "scores.tsv", score_records, domains, labels)
    groups = [ev.group_of(d, y, spec) for d, y in zip(domains, labels)]
    ev.export_score_distributions(out_dir / "score_hist.tsv", score_records,
                                  groups, cfg.scheme)

    artifacts = ["config.json", "metrics.jsonl", "checkpoint.txt", "eval.json",
                 "eval.txt", "scores.tsv", "score_hist.tsv"]
    manifest = {"name": name, "seed": cfg.seed, "config": cfg.to_dict(),
                "artifacts": artifacts}
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return report


def run_benchmark(cfg: tr.TrainConfig) -> ev.EvalReport:
    """Train and evaluate on the synthetic benchmark without writing files."""
    src, tgt, spec = make_benchmark(cfg)
    model, _ = tr.train(src, tgt, cfg)
    return ev.evaluate(model, tgt, spec, cfg.w0, cfg.scheme)


def _seeded(cfg: tr.TrainConfig, reps: int) -> list[tr.TrainConfig]:
    return [replace(cfg, seed=cfg.seed + i) for i in range(reps)]


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    print(path)
    print("\n".join(lines))


def _variant_rows(variants: list[tuple[str, tr.TrainConfig]], reps: int,
                  out_dir: Path) -> list[list]:
    rows = []
    for name, base in variants:
        accs = []
        for cfg in _seeded(base, reps):
            src, tgt, spec = make_benchmark(cfg)
            report = run_experiment(name, cfg, src, tgt, spec,
                                    out_dir / f"{name}_seed{cfg.seed}")
            accs.append(report.average_class_accuracy)
        rows.append([name] + [f"{a:.4f}" for a in accs]
                    + [f"{np.mean(accs):.4f}", f"{np.std(accs):.4f}"])
    return rows


# ---------------------------------------------------------------------------
# verbs


def _load_datasets(args) -> tuple[dt.DomainDataset, dt.DomainDataset, dt.LabelSetSpec]:
    src = dt.load_features(args.source, "source", labeled=True)
    tgt = dt.load_features(args.target, "target", labeled=True)
    spec_dict = json.loads(Path(args.labelset).read_text())
    spec = dt.LabelSetSpec(shared=tuple(spec_dict["shared"]),
                           source_private=tuple(spec_dict["source_private"]),
                           target_private=tuple(spec_dict["target_private"]))
    return src, tgt, spec


def _build_config(args, preset: tr.TrainConfig | None = None) -> tr.TrainConfig:
    base = preset.to_dict() if preset is not None else {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        file_cfg = json.loads(path.read_text())
        unknown = set(file_cfg) - set(tr.TrainConfig().__dict__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = {**base, **file_cfg}
    overrides = {k: v for k, v in {
        "gamma": args.gamma, "w0": args.w0, "w_beta": args.w_beta,
        "total_steps": args.steps, "batch_size": args.batch_size,
        "lr": args.lr, "momentum": args.momentum, "scheme": args.scheme,
        "static_w_alpha": args.static_w_alpha,
        "diversity_mode": args.diversity_mode, "seed": args.seed,
        "grl_mode": args.grl_mode, "grl_lambda": args.grl_lambda,
    }.items() if v is not None}
    if args.no_pseudo_labels:
        overrides["pseudo_labels"] = False
    return tr.TrainConfig.from_dict({**base, **overrides})


def cmd_gen(args) -> int:
    s, p, t = args.shared, args.source_private, args.target_private
    spec = dt.LabelSetSpec(shared=tuple(range(s)),
                           source_private=tuple(range(s, s + p)),
                           target_private=tuple(range(s + p, s + p + t)))
    shift = dt.ShiftConfig(rotation=args.rotation, translation=args.translation,
                           scale=args.scale, noise=args.noise)
    src, tgt = dt.gen_synthetic(spec, dim=args.dim, per_class=args.per_class,
                                shift=shift, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dt.save_features(out / "source.features.txt", src)
    dt.save_features(out / "target.features.txt", tgt)
    (out / "labelset.json").write_text(json.dumps({
        "shared": list(spec.shared), "source_private": list(spec.source_private),
        "target_private": list(spec.target_private), "jaccard": spec.jaccard,
    }, sort_keys=True, indent=2) + "\n")
    print(f"wrote {src.n} source / {tgt.n} target samples to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _build_config(args, benchmark_config() if args.synthetic else None)
    if args.synthetic:
        src, tgt, spec = make_benchmark(cfg)
    else:
        if not (args.source and args.target and args.labelset):
            raise ConfigError("need --synthetic or --source/--target/--labelset")
        src, tgt, spec = _load_datasets(args)
    out_dir = Path(args.out) if args.out else default_output_root() / args.name
    report = run_experiment(args.name, cfg, src, tgt, spec, out_dir)
    print(report.summary())
    return 0


def cmd_eval(args) -> int:
    model = md.load_checkpoint(args.checkpoint)
    tgt = dt.load_features(args.target, "target", labeled=True)
    spec_dict = json.loads(Path(args.labelset).read_text())
    spec = dt.LabelSetSpec(shared=tuple(spec_dict["shared"]),
                           source_private=tuple(spec_dict["source_private"]),
                           target_private=tuple(spec_dict["target_private"]))
    report = ev.evaluate(model, tgt, spec, args.w0, args.scheme)
    print(report.summary())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_json() + "\n")
    return 0


def cmd_sweep(args) -> int:
    cfg = _build_config(args, benchmark_config())
    values = [float(v) for v in args.values.split(",") if v != ""]
    if not values:
        raise ConfigError("sweep needs a non-empty value list")
    lo, hi = sc.SCHEME_RANGES[cfg.scheme]
    for v in values:
        if not lo <= v <= hi:
            raise ConfigError(f"value {v} outside scheme range [{lo}, {hi}]")
    variants = []
    for v in values:
        if args.param == "w_alpha_static":
            variants.append((f"w_alpha_static_{v:g}", replace(cfg, static_w_alpha=v)))
        elif args.param == "w_beta":
            variants.append((f"w_beta_{v:g}", replace(cfg, w_beta=v)))
        else:
            variants.append((f"w0_{v:g}", replace(cfg, w0=v)))
    out_dir = Path(args.out) if args.out else default_output_root() / f"sweep_{args.param}"
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = _variant_rows(variants, args.seeds, out_dir)
    header = (["variant"] + [f"seed{cfg.seed + i}" for i in range(args.seeds)]
              + ["mean", "std"])
    _write_table(out_dir / "sweep.tsv", header, rows)
    return 0


def cmd_ablate(args) -> int:
    cfg = _build_config(args, benchmark_config())
    if args.ablation == "scoring":
        variants = [(f"scheme_{s}", scheme_defaults(cfg, s)) for s in SCHEME_ABLATION]
    elif args.ablation == "pseudo":
        variants = [
            ("full", cfg),
            ("no_pseudo_labels", replace(cfg, pseudo_labels=False)),
            ("w_alpha_0", replace(cfg, static_w_alpha=0.0)),
            ("static_w_alpha_1.2", replace(cfg, static_w_alpha=1.2)),
        ]
    else:
        variants = [
            ("diversity_off", replace(cfg, diversity_mode="off")),
            ("diversity_target_only", replace(cfg, diversity_mode="target_only")),
            ("diversity_both", replace(cfg, diversity_mode="both")),
        ]
    out_dir = Path(args.out) if args.out else default_output_root() / f"ablate_{args.ablation}"
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = _variant_rows(variants, args.seeds, out_dir)
    header = (["variant"] + [f"seed{cfg.seed + i}" for i in range(args.seeds)]
              + ["mean", "std"])
    _write_table(out_dir / "ablation.tsv", header, rows)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of training config fields")
    p.add_argument("--gamma", type=float)
    p.add_argument("--w0", type=float)
    p.add_argument("--w-beta", dest="w_beta", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--scheme", choices=sc.SCHEMES)
    p.add_argument("--static-w-alpha", dest="static_w_alpha", type=float)
    p.add_argument("--diversity-mode", choices=["off", "target_only", "both"])
    p.add_argument("--no-pseudo-labels", action="store_true")
    p.add_argument("--grl-mode", choices=["constant", "ramp"])
    p.add_argument("--grl-lambda", dest="grl_lambda", type=float)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="udaselect",
        description="Universal domain adaptation with selective pseudo-labels")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic domain pair")
    g.add_argument("--out", required=True)
    g.add_argument("--shared", type=int, default=4)
    g.add_argument("--source-private", dest="source_private", type=int, default=2)
    g.add_argument("--target-private", dest="target_private", type=int, default=6)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--per-class", dest="per_class", type=int, default=60)
    g.add_argument("--rotation", type=float, default=dt.benchmark_shift().rotation)
    g.add_argument("--translation", type=float, default=dt.benchmark_shift().translation)
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--noise", type=float, default=dt.benchmark_shift().noise)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train, evaluate and write run artifacts")
    t.add_argument("--name", default="run")
    t.add_argument("--out")
    t.add_argument("--synthetic", action="store_true",
                   help="use the built-in synthetic benchmark")
    t.add_argument("--source", help="labeled source feature file")
    t.add_argument("--target", help="labeled target feature file")
    t.add_argument("--labelset", help="label-set partition JSON")
    _add_config_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a feature file")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--target", required=True)
    e.add_argument("--labelset", required=True)
    e.add_argument("--w0", type=float, default=1.0)
    e.add_argument("--scheme", choices=sc.SCHEMES, default="ours")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="sweep one threshold parameter")
    s.add_argument("--param", required=True,
                   choices=["w_alpha_static", "w_beta", "w0"])
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--seeds", type=int, default=3)
    s.add_argument("--out")
    _add_config_flags(s)
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("ablate", help="run a predefined ablation grid")
    a.add_argument("--ablation", required=True,
                   choices=["scoring", "pseudo", "diversity"])
    a.add_argument("--seeds", type=int, default=3)
    a.add_argument("--out")
    _add_config_flags(a)
    a.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, FeatureFileError, UdaError, json.JSONDecodeError,
            FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
