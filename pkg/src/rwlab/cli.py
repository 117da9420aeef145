"""``rwlab`` command-line entry point.

Exit codes: 0 on success, 2 for bad input (unreadable or malformed files,
invalid configs), 3 when training hits a non-finite value.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, jsonio
from .corpus import compute_stats, dump_corpus, load_corpus
from .evaluation import evaluate
from .experiment import ExperimentConfig, run_compare, run_train
from .model import Mode, NumericalError, load_checkpoint
from .synthetic import SyntheticSpec, generate_synthetic
from .weighting import SchemeConfig

logger = logging.getLogger("rwlab")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

SPLIT_FILES = ("train", "valid", "test_full", "test_contrastive")


class InputError(Exception):
    pass


def _read_json(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object")
    return doc


def _ensure_writable(path: str | Path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".rwlab-write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise InputError(f"output directory {out} is not writable: {exc}") from None
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _stats_table(name: str, stats) -> str:
    head = f"{'Dataset':20s} {'#Pos.':>6s} {'#Neg.':>6s} {'#Neu.':>6s} {'#Aspect':>8s} {'#Contra.':>9s} {'%Contra.':>9s}"
    row = (
        f"{name[:20]:20s} {stats.n_positive:6d} {stats.n_negative:6d} {stats.n_neutral:6d} "
        f"{stats.n_aspects:8d} {stats.n_contrastive_sentences:9d} {stats.pct_contrastive:8.1f}%"
    )
    return head + "\n" + row


# ---------------------------------------------------------------- commands


def cmd_stats(args) -> int:
    corpus = load_corpus(args.path)
    stats = compute_stats(corpus)
    if args.json:
        sys.stdout.write(jsonio.dumps(stats.to_json()))
    else:
        print(_stats_table(Path(args.path).name, stats))
        if stats.warning:
            print(f"warning: {stats.warning}")
    if args.json_out:
        jsonio.write_json(stats.to_json(), args.json_out)
    return EXIT_OK


def cmd_generate(args) -> int:
    raw = _read_json(args.spec)
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = SyntheticSpec.from_dict(raw)
    out = _ensure_writable(args.out_dir)
    splits = generate_synthetic(spec)
    files = {}
    for name, corpus in zip(SPLIT_FILES, splits):
        path = out / f"{name}.jsonl"
        dump_corpus(corpus, path)
        files[name] = {
            "path": path.name,
            "sha256": _sha256(path),
            "n_examples": len(corpus),
            "n_sentences": len(corpus.sentence_ids),
        }
    manifest = {
        "schema_version": 1,
        "rwlab_version": __version__,
        "spec": spec.to_dict(),
        "seed": spec.seed,
        "files": files,
        "train_stats": compute_stats(splits[0]).to_json(),
    }
    jsonio.write_json(manifest, out / "manifest.json")
    print(f"wrote {len(files)} splits to {out}")
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    raw = _read_json(args.config) if args.config else {}
    cfg = ExperimentConfig.from_dict(raw)
    train_over = {}
    for flag, key in (
        ("batch_size", "batch_size"),
        ("max_epochs", "max_epochs"),
        ("patience", "patience"),
        ("validation_size", "validation_size"),
        ("seed", "seed"),
        ("learning_rate", "learning_rate"),
        ("hash_bits", "hash_bits"),
        ("n_runs", "n_runs"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            train_over[key] = value
    if getattr(args, "mode", None):
        train_over["mode"] = Mode(args.mode)

    def patch_scheme(s: SchemeConfig) -> SchemeConfig:
        over = {}
        if args.epsilon is not None:
            over["epsilon"] = args.epsilon
        if args.gamma is not None:
            over["gamma"] = args.gamma
        if args.initial_weighting is not None:
            over["initial_weighting"] = args.initial_weighting
        return replace(s, **over) if over else s

    schemes = cfg.schemes
    scheme = cfg.train.scheme
    if args.scheme:
        names = [s.strip() for s in args.scheme.split(",") if s.strip()]
        schemes = tuple(SchemeConfig(n) for n in names)
        scheme = SchemeConfig(names[0])
    train_over["scheme"] = patch_scheme(scheme)
    top = {
        "train": replace(cfg.train, **train_over),
        "schemes": tuple(patch_scheme(s) for s in schemes),
    }
    if args.out_dir:
        top["out_dir"] = args.out_dir
    if getattr(args, "jobs", None) is not None:
        top["jobs"] = args.jobs
    if getattr(args, "sweep_epsilon", False):
        top["sweep_epsilon"] = True
    return replace(cfg, **top)


def cmd_train(args) -> int:
    cfg = _experiment_config(args)
    out = _ensure_writable(cfg.out_dir)
    t0 = time.perf_counter()
    run, record, path = run_train(cfg, out)
    elapsed = time.perf_counter() - t0
    # wall time lives apart from run.json so that file stays byte-reproducible
    jsonio.write_json(
        {
            "wall_seconds": elapsed,
            "python": platform.python_version(),
            "machine": platform.machine(),
            "processor": platform.processor(),
        },
        path / "timing.json",
    )
    jsonio.write_json(cfg.to_dict(), path / "config.json")
    summary = f"best epoch {run.best_epoch}, val macro-F1 {run.best.val_macro_f1:.4f}"
    for name, rep in record.reports.items():
        summary += f", {name} acc {rep.accuracy:.4f}"
    print(f"{path}: {summary} ({elapsed:.1f}s)")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _experiment_config(args)
    out = _ensure_writable(cfg.out_dir)
    jsonio.write_json(cfg.to_dict(), out / "config.json")
    report, out = run_compare(cfg, out)
    sys.stdout.write(report.render_table())
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        model = load_checkpoint(args.model)
    except FileNotFoundError:
        raise InputError(f"{args.model}: no such checkpoint") from None
    corpus = load_corpus(args.data)
    mode = Mode.ASPECT_BLIND if args.no_aspect else None
    split_filter = "contrastive_only" if args.contrastive_only else "all"
    report = evaluate(model, corpus, split_filter=split_filter, mode=mode)
    doc = {"schema_version": 1, "model": str(args.model), "data": str(args.data), **report.to_json()}
    sys.stdout.write(jsonio.dumps(doc))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_overrides(p: argparse.ArgumentParser, compare: bool) -> None:
    p.add_argument("--config", help="experiment config (JSON); flags below override its keys")
    p.add_argument("--scheme", help="weighting scheme" + (" list, comma separated" if compare else ""))
    p.add_argument("--epsilon", type=float, help="re-weighting offset for arw / arw_all")
    p.add_argument("--gamma", type=float, help="focal exponent")
    p.add_argument("--initial-weighting", choices=("uniform", "manual"))
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--validation-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--hash-bits", type=int)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--seed", type=int, help="training seed (compare uses seed .. seed+n_runs-1)")
    p.add_argument("--out-dir")
    if compare:
        p.add_argument("--n-runs", type=int)
        p.add_argument("--jobs", type=int, help="parallel (scheme, seed) jobs")
        p.add_argument("--sweep-epsilon", action="store_true", help="expand ARW schemes over the epsilon sweep list")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rwlab", description="Adaptive re-weighting experiments for aspect sentiment")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=f"rwlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("path")
    p.add_argument("--json", action="store_true", help="print JSON instead of the table")
    p.add_argument("--json-out", help="also write the JSON report here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--spec", required=True, help="synthetic spec (JSON)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default="data")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model")
    _add_overrides(p, compare=False)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="train and evaluate several schemes over seeds")
    _add_overrides(p, compare=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--contrastive-only", action="store_true")
    p.add_argument("--no-aspect", action="store_true", help="aspect-blind probe")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NumericalError, FloatingPointError) as exc:
        print(f"rwlab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValueError, OSError, KeyError, TypeError) as exc:
        print(f"rwlab: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
