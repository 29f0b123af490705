"""Benchmark harness: grid of (compression ratio, seed) cells, each running
the full device -> wire -> hub pipeline, with metric normalization against
the ratio-1 baseline and CSV/JSON report emission."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .data import (
    LabeledDataset,
    SyntheticSpec,
    cifar10_subset,
    gen_synthetic,
    load_cifar10,
)
from .device import HubSink, make_devices
from .errors import LatentWireError, MissingBaselineError
from .hub import Hub
from .train import TrainConfig
from .zoo import count_parameters

log = logging.getLogger("latentwire")

CONFIG_FORMAT = "latentwire-config"
CONFIG_VERSION = 1

CSV_COLUMNS = ("dataset", "cr", "seed", "accuracy", "params", "train_s", "test_s",
               "acc_norm", "params_norm", "train_norm", "test_norm")


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic"  # "synthetic" | "cifar10"
    cifar_dir: str | None = None
    cifar_subset: str | None = None  # "CLASSESxPER_CLASS", e.g. "2x1000"
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    ratios: tuple = (1, 4, 8, 16)
    family: str = "A"
    n_devices: int = 4
    partition: str = "iid"
    ae: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=12))
    clf: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=20))
    seeds: tuple = (0,)
    jobs: int = 1
    out: str | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("need at least one seed")
        if any(r <= 0 for r in self.ratios):
            raise ValueError("ratios must be positive")


@dataclass
class ReportRow:
    dataset: str
    cr: float
    seed: int
    accuracy: float | None = None
    params: int | None = None
    train_s: float | None = None
    test_s: float | None = None
    acc_norm: float | None = None
    params_norm: float | None = None
    train_norm: float | None = None
    test_norm: float | None = None
    error: str | None = None

    @property
    def failed(self):
        return self.error is not None


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)

    def group(self, dataset, seed):
        return [r for r in self.rows if r.dataset == dataset and r.seed == seed]


def load_experiment_data(cfg):
    """(name, train, test) for the configured source."""
    if cfg.dataset == "synthetic":
        train, test = gen_synthetic(cfg.synthetic, seed=0)
        return "synthetic", train, test
    if cfg.dataset == "cifar10":
        if not cfg.cifar_dir:
            raise ValueError("cifar10 dataset needs cifar_dir")
        train, test = load_cifar10(cfg.cifar_dir)
        if cfg.cifar_subset:
            classes, per_class = (int(v) for v in cfg.cifar_subset.lower().split("x"))
            train, test = cifar10_subset(train, test, classes, per_class)
            return f"cifar10-{cfg.cifar_subset}", train, test
        return "cifar10", train, test
    raise ValueError(f"unknown dataset source {cfg.dataset!r}")


def run_cell(name, train, test, cfg, cr, seed):
    """One (ratio, seed) cell: partition, fit device autoencoders, push every
    latent through the wire codec into a hub, train and score the classifier."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD1CE]))
    devices = make_devices(train, test, cfg.n_devices, cfg.partition, rng)
    hub = Hub()
    for dev in devices:
        dev.fit_autoencoder(cr, replace(cfg.ae, seed=seed))
        hub.register_decoder(dev.device_id, dev.export_decoder())
        dev.export_latents("train", HubSink(hub, "train"))
        dev.export_latents("test", HubSink(hub, "test"))

    clf_cfg = replace(cfg.clf, seed=seed,
                      augment=cfg.clf.augment and cr == 1)
    history = hub.train_classifier(cfg.family, clf_cfg, num_classes=train.num_classes)
    accuracy, test_s = hub.evaluate("test", num_classes=train.num_classes)
    params = count_parameters(hub.classifier.spec)

    for dev in devices:
        recs = [r for r in hub.records("test") if r.device_id == dev.device_id]
        if recs:
            ok = sum(1 for r in recs if hub.predict(r) == r.label)
            log.info("cell cr=%s seed=%d device=%d accuracy=%.4f",
                     cr, seed, dev.device_id, ok / len(recs))

    return ReportRow(dataset=name, cr=float(cr), seed=seed, accuracy=accuracy,
                     params=params, train_s=history.train_seconds, test_s=test_s)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run the full grid; a failing cell is recorded and the rest continue."""
    name, train, test = load_experiment_data(cfg)
    cells = [(cr, seed) for seed in cfg.seeds for cr in cfg.ratios]

    def one(cell):
        cr, seed = cell
        try:
            return run_cell(name, train, test, cfg, cr, seed)
        except LatentWireError as exc:
            log.warning("cell cr=%s seed=%d failed: %s", cr, seed, exc)
            return ReportRow(dataset=name, cr=float(cr), seed=seed, error=str(exc))

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(one, cells))
    else:
        rows = [one(cell) for cell in cells]
    report = ExperimentReport(rows)
    normalize_metrics(report)
    return report


def normalize_metrics(report: ExperimentReport) -> ExperimentReport:
    """Divide each metric by its ratio-1 value within the (dataset, seed) group."""
    for row in report.rows:
        if row.failed:
            continue
        base = [r for r in report.group(row.dataset, row.seed)
                if not r.failed and r.cr == 1.0]
        if not base:
            raise MissingBaselineError(
                f"no ratio-1 baseline for ({row.dataset}, seed {row.seed})")
        b = base[0]
        row.acc_norm = row.accuracy / b.accuracy
        row.params_norm = row.params / b.params
        row.train_norm = row.train_s / b.train_s
        row.test_norm = row.test_s / b.test_s
    return report


# ---------------------------------------------------------------------------
# report files


def _fmt(value, places):
    return "" if value is None else f"{value:.{places}f}"


def emit_report(report, path, fmt="csv"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in report.rows:
                writer.writerow([
                    r.dataset, f"{r.cr:g}", r.seed,
                    _fmt(r.accuracy, 4),
                    "" if r.params is None else r.params,
                    _fmt(r.train_s, 3), _fmt(r.test_s, 3),
                    _fmt(r.acc_norm, 4),
                    _fmt(r.params_norm, 6),
                    _fmt(r.train_norm, 3), _fmt(r.test_norm, 3),
                ])
    elif fmt in ("structured-text", "json"):
        doc = {"format": "latentwire-report", "version": 1,
               "rows": [asdict(r) for r in report.rows]}
        path.write_text(json.dumps(doc, indent=2) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def parse_report(path, fmt="csv") -> ExperimentReport:
    path = Path(path)
    if fmt == "csv":
        rows = []
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ValueError(f"unexpected report header {reader.fieldnames}")
            for rec in reader:
                rows.append(ReportRow(
                    dataset=rec["dataset"], cr=float(rec["cr"]), seed=int(rec["seed"]),
                    accuracy=float(rec["accuracy"]) if rec["accuracy"] else None,
                    params=int(rec["params"]) if rec["params"] else None,
                    train_s=float(rec["train_s"]) if rec["train_s"] else None,
                    test_s=float(rec["test_s"]) if rec["test_s"] else None,
                    acc_norm=float(rec["acc_norm"]) if rec["acc_norm"] else None,
                    params_norm=float(rec["params_norm"]) if rec["params_norm"] else None,
                    train_norm=float(rec["train_norm"]) if rec["train_norm"] else None,
                    test_norm=float(rec["test_norm"]) if rec["test_norm"] else None,
                ))
        return ExperimentReport(rows)
    if fmt in ("structured-text", "json"):
        doc = json.loads(path.read_text())
        if doc.get("format") != "latentwire-report":
            raise ValueError("not a latentwire report document")
        return ExperimentReport([ReportRow(**r) for r in doc["rows"]])
    raise ValueError(f"unknown report format {fmt!r}")


# ---------------------------------------------------------------------------
# config files (versioned JSON mirroring ExperimentConfig)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = {
        "format": CONFIG_FORMAT,
        "version": CONFIG_VERSION,
        "dataset": cfg.dataset,
        "cifar_dir": cfg.cifar_dir,
        "cifar_subset": cfg.cifar_subset,
        "synthetic": {
            "image_size": list(cfg.synthetic.image_size),
            "num_classes": cfg.synthetic.num_classes,
            "samples_per_class": cfg.synthetic.samples_per_class,
            "ratio": list(cfg.synthetic.ratio),
            "noise": cfg.synthetic.noise,
            "jitter": cfg.synthetic.jitter,
            "margin": cfg.synthetic.margin,
        },
        "ratios": list(cfg.ratios),
        "family": cfg.family,
        "n_devices": cfg.n_devices,
        "partition": cfg.partition,
        "ae": asdict(cfg.ae),
        "clf": asdict(cfg.clf),
        "seeds": list(cfg.seeds),
        "jobs": cfg.jobs,
        "out": cfg.out,
    }
    return doc


def config_from_dict(doc: dict) -> ExperimentConfig:
    if doc.get("format") != CONFIG_FORMAT:
        raise ValueError(f"not a latentwire config document: {doc.get('format')!r}")
    if doc.get("version") != CONFIG_VERSION:
        raise ValueError(f"unsupported config version {doc.get('version')!r}")
    syn = doc.get("synthetic", {})
    return ExperimentConfig(
        dataset=doc.get("dataset", "synthetic"),
        cifar_dir=doc.get("cifar_dir"),
        cifar_subset=doc.get("cifar_subset"),
        synthetic=SyntheticSpec(
            image_size=tuple(syn.get("image_size", (32, 32, 3))),
            num_classes=syn.get("num_classes", 4),
            samples_per_class=syn.get("samples_per_class", 150),
            ratio=tuple(syn.get("ratio", (5, 1))),
            noise=syn.get("noise", 0.05),
            jitter=syn.get("jitter", 0.25),
            margin=syn.get("margin", 1.2),
        ),
        ratios=tuple(doc.get("ratios", (1, 4, 8, 16))),
        family=doc.get("family", "A"),
        n_devices=doc.get("n_devices", 4),
        partition=doc.get("partition", "iid"),
        ae=TrainConfig(**doc.get("ae", {})),
        clf=TrainConfig(**doc.get("clf", {})),
        seeds=tuple(doc.get("seeds", (0,))),
        jobs=doc.get("jobs", 1),
        out=doc.get("out"),
    )


def save_config(cfg, path):
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


def load_config(path):
    return config_from_dict(json.loads(Path(path).read_text()))
