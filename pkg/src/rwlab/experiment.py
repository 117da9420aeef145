"""Experiment configs and the train/evaluate/compare pipelines behind the CLI."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import jsonio
from .corpus import Corpus, holdout_validation, load_corpus
from .evaluation import (
    AggregateReport,
    EmptySplitError,
    RunRecord,
    aggregate,
    count_incorrect_contrastive,
    evaluate,
)
from .model import Mode
from .synthetic import SyntheticSpec, generate_synthetic
from .trainer import TrainConfig, TrainRun, train, write_run
from .weighting import SchemeConfig

logger = logging.getLogger(__name__)

DEFAULT_SCHEMES = ("uniform", "manual", "focal", "arw", "arw_all")
EPSILON_SWEEP = (-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2)
MAIN_SPLITS = ("full", "contrastive")
PROBE_SPLITS = ("full_no_aspect", "contrastive_no_aspect")


@dataclass(frozen=True)
class Datasets:
    train: Corpus
    valid: Corpus
    test_full: Corpus | None = None
    test_contrastive: Corpus | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    # {"synthetic": {...spec fields...}} or {"train": path, "valid": ..., "test_full": ..., "test_contrastive": ...}
    data: dict = field(default_factory=lambda: {"synthetic": {}})
    train: TrainConfig = field(default_factory=TrainConfig)
    schemes: tuple[SchemeConfig, ...] = tuple(SchemeConfig(s) for s in DEFAULT_SCHEMES)
    out_dir: str = "runs"
    epsilon_sweep: tuple[float, ...] = EPSILON_SWEEP
    sweep_epsilon: bool = False
    jobs: int = 1

    def __post_init__(self):
        if not self.schemes:
            raise ValueError("scheme list must be non-empty")
        if "synthetic" not in self.data and "train" not in self.data:
            raise ValueError("data needs either a 'synthetic' spec or a 'train' path")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        if "schemes" in d:
            d["schemes"] = tuple(SchemeConfig.from_dict(s) for s in d["schemes"])
        if "epsilon_sweep" in d:
            d["epsilon_sweep"] = tuple(float(e) for e in d["epsilon_sweep"])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "data": self.data,
            "train": self.train.to_dict(),
            "schemes": [s.to_dict() for s in self.schemes],
            "out_dir": self.out_dir,
            "epsilon_sweep": list(self.epsilon_sweep),
            "sweep_epsilon": self.sweep_epsilon,
            "jobs": self.jobs,
        }


def load_datasets(data: dict, validation_size: int) -> Datasets:
    """Materialise the corpora named by a config's ``data`` block."""
    if "synthetic" in data:
        train_c, valid_c, test_c, contra_c = generate_synthetic(SyntheticSpec.from_dict(data["synthetic"]))
        return Datasets(train_c, valid_c, test_c, contra_c)
    train_c = load_corpus(data["train"])
    if data.get("valid"):
        valid_c = load_corpus(data["valid"])
    else:
        train_c, valid_c = holdout_validation(train_c, validation_size)
    test_c = load_corpus(data["test_full"]) if data.get("test_full") else None
    contra_c = load_corpus(data["test_contrastive"]) if data.get("test_contrastive") else None
    if contra_c is None and test_c is not None:
        contra_c = test_c.contrastive_only()
    return Datasets(train_c, valid_c, test_c, contra_c)


def evaluate_run(
    run: TrainRun, data: Datasets, scheme_label: str, probe: bool = False
) -> RunRecord:
    """Test-set reports for a finished run; ``probe`` adds the aspect-blind rows."""
    reports = {}
    splits = [("full", data.test_full), ("contrastive", data.test_contrastive)]
    for name, corpus in splits:
        if corpus is None or len(corpus) == 0:
            continue
        reports[name] = evaluate(run.model, corpus, split=name)
        if probe:
            reports[f"{name}_no_aspect"] = evaluate(
                run.model, corpus, mode=Mode.ASPECT_BLIND, split=f"{name}_no_aspect"
            )
    key = json.dumps({**run.config.to_dict(), "seed": None}, sort_keys=True)
    return RunRecord(
        scheme=scheme_label,
        seed=run.config.seed,
        config_key=key,
        reports=reports,
        incorrect_contrastive=count_incorrect_contrastive(run.model, data.train),
        best_epoch=run.best_epoch,
    )


def run_train(config: ExperimentConfig, out_dir: str | Path | None = None) -> tuple[TrainRun, RunRecord, Path]:
    data = load_datasets(config.data, config.train.validation_size)
    run = train(data.train, data.valid, config.train)
    record = evaluate_run(run, data, config.train.scheme.label)
    extra = {
        "data": config.data,
        "n_train": len(data.train),
        "n_valid": len(data.valid),
        "incorrect_contrastive_train": record.incorrect_contrastive,
        "test": {k: r.to_json() for k, r in record.reports.items()},
    }
    path = write_run(run, out_dir or config.out_dir, extra)
    return run, record, path


def expand_schemes(config: ExperimentConfig) -> list[tuple[str, SchemeConfig]]:
    out = []
    for s in config.schemes:
        if config.sweep_epsilon and s.is_arw:
            out += [(f"{s.label}@eps={e:g}", replace(s, epsilon=e)) for e in config.epsilon_sweep]
        else:
            out.append((s.label, s))
    return out


def _compare_job(args) -> RunRecord:
    config, label, scheme, seed, run_dir = args
    data = load_datasets(config.data, config.train.validation_size)
    tcfg = replace(config.train, scheme=scheme, seed=seed)
    run = train(data.train, data.valid, tcfg)
    # The aspect-blind probe is reported for plain uniform training only.
    record = evaluate_run(run, data, label, probe=(scheme.scheme == "uniform"))
    write_run(run, run_dir, {"test": {k: r.to_json() for k, r in record.reports.items()}})
    return record


def run_compare(config: ExperimentConfig, out_dir: str | Path | None = None) -> tuple[AggregateReport, Path]:
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = load_datasets(config.data, config.train.validation_size)
    if data.test_full is None:
        raise EmptySplitError("compare needs a full test set")
    jobs = []
    for label, scheme in expand_schemes(config):
        for k in range(config.train.n_runs):
            seed = config.train.seed + k
            safe = label.replace("@", "_").replace("=", "").replace("+", "_")
            jobs.append((config, label, scheme, seed, out / "runs" / safe / f"seed-{seed}"))
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            records = list(pool.map(_compare_job, jobs))
    else:
        records = [_compare_job(j) for j in jobs]
    report = aggregate(records)
    doc = report.to_json()
    doc["config"] = config.to_dict()
    doc["runs"] = [
        {
            "scheme": r.scheme,
            "seed": r.seed,
            "best_epoch": r.best_epoch,
            "incorrect_contrastive_train": r.incorrect_contrastive,
            "reports": {k: {"accuracy": v.accuracy, "macro_f1": v.macro_f1} for k, v in r.reports.items()},
        }
        for r in records
    ]
    jsonio.write_json(doc, out / "aggregate.json")
    (out / "aggregate.csv").write_text(report.to_csv(MAIN_SPLITS), encoding="utf-8")
    if any(PROBE_SPLITS[0] in splits for splits in report.stats.values()):
        (out / "probe.csv").write_text(report.to_csv(PROBE_SPLITS), encoding="utf-8")
    (out / "table.txt").write_text(report.render_table(), encoding="utf-8")
    return report, out
