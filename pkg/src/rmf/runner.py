"""Measurement orchestration: select attack, measure, compute, evaluate.

A measurement always runs two phases. The baseline phase trains the stock
classifier on the clean data and evaluates it on the clean test set; its
damage value anchors the comparison. The attack phase poisons the training
set, trains the same architecture on it, and evaluates on both the clean
test set and the trigger-stamped one, all under the resource probe and
stopwatch. Baseline checkpoints can be cached and reused across runs that
share the dataset, model config, and seed.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from . import __version__, attacks, engine, metrics, pipeline, telemetry
from .config import RunConfig, config_digest, config_to_dict
from .data import DataError, LabeledDataset, generate_synthetic, load_directory

log = logging.getLogger("rmf")


class ReportWriteError(OSError):
    """Report or CSV output could not be written."""


def build_datasets(cfg: RunConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """(train, test) per the dataset section: synthetic pair or manifest split."""
    if cfg.dataset.synthetic is not None:
        return generate_synthetic(cfg.dataset.synthetic)
    full = load_directory(cfg.dataset.manifest, class_count=cfg.model.class_count)
    # manifest datasets are split 75/25, stratified, seeded by the run seed
    n = len(full)
    rng = np.random.default_rng([cfg.seed, 7])
    order = rng.permutation(n)
    cut = max(1, int(0.75 * n))
    if cut >= n:
        raise DataError("manifest dataset too small to split into train and test")
    return full.take(order[:cut]), full.take(order[cut:])


def _baseline_key(cfg: RunConfig) -> str:
    d = config_to_dict(cfg)
    relevant = {"dataset": d["dataset"], "model": d["model"], "seed": cfg.seed}
    return hashlib.sha256(json.dumps(relevant, sort_keys=True).encode("utf-8")).hexdigest()[:16]


@dataclasses.dataclass(eq=False)
class BaselineResult:
    model: engine.Model
    bundle: metrics.MetricsBundle
    damage: float
    train_seconds: float
    epoch_losses: list[float]
    from_cache: bool = False


def run_baseline(cfg: RunConfig, train_ds: LabeledDataset, test_ds: LabeledDataset,
                 cache_dir: Path | None = None, reuse: bool = False) -> BaselineResult:
    """Clean train + evaluate; optionally served from the checkpoint cache."""
    key = _baseline_key(cfg)
    ckpt = meta = None
    if cache_dir is not None:
        ckpt = cache_dir / f"baseline-{key}.npz"
        meta = cache_dir / f"baseline-{key}.json"
    if reuse and ckpt is not None and ckpt.is_file() and meta.is_file():
        log.info("baseline: reusing cached checkpoint %s", ckpt)
        model = engine.load_model(ckpt)
        info = json.loads(meta.read_text(encoding="utf-8"))
        return BaselineResult(
            model=model,
            bundle=metrics.MetricsBundle(**info["bundle"]),
            damage=info["damage"],
            train_seconds=info["train_seconds"],
            epoch_losses=info["epoch_losses"],
            from_cache=True,
        )

    log.info("baseline: training clean model (%d samples, %d epochs)", len(train_ds), cfg.model.train.epochs)
    model = engine.build_model(cfg.model.class_count, train_ds.image_shape, seed=cfg.model.train.seed)
    result = engine.train(model, train_ds, cfg.model.train)
    predicted = engine.predict_labels(result.model, test_ds)
    bundle = metrics.bundle_from_predictions(test_ds.labels, predicted, test_ds.class_count)
    damage = pipeline.extent_of_damage(bundle)
    baseline = BaselineResult(model=result.model, bundle=bundle, damage=damage,
                              train_seconds=result.elapsed_s, epoch_losses=result.epoch_losses)
    if ckpt is not None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        engine.save_model(result.model, ckpt)
        meta.write_text(json.dumps({
            "bundle": bundle.as_dict(),
            "damage": damage,
            "train_seconds": result.elapsed_s,
            "epoch_losses": result.epoch_losses,
        }), encoding="utf-8")
    return baseline


def run_attack_phase(cfg: RunConfig, train_ds: LabeledDataset, test_ds: LabeledDataset):
    """Poison, train, and evaluate under the telemetry probe."""
    spec = cfg.attack

    def attacked_run():
        poisoned = attacks.run_attack(train_ds, spec, seed=cfg.seed)
        model = engine.build_model(cfg.model.class_count, train_ds.image_shape, seed=cfg.model.train.seed)
        trained = engine.train(model, poisoned, cfg.model.train).model
        triggered = attacks.triggered_evaluation_set(test_ds, spec)
        return metrics.evaluate_model(trained, test_ds, triggered)

    log.info("attack: %s fraction=%.3f under probe", spec.kind, spec.poison_fraction)
    probe = telemetry.probe_run(attacked_run, interval_ms=cfg.probe_interval_ms)
    clean_bundle, attacked_bundle = probe.value
    return clean_bundle, attacked_bundle, probe


def attack_summary(cfg: RunConfig) -> dict:
    spec = cfg.attack
    return {
        "kind": spec.kind,
        "poison_fraction": spec.poison_fraction,
        "target_label": spec.target_label,
        "specificity": spec.specificity,
        "trigger": None if spec.trigger is None else {
            "kind": spec.trigger.kind,
            "size": spec.trigger.size,
            "intensity": spec.trigger.intensity,
            "position": spec.trigger.position,
        },
    }


def run_measurement(cfg: RunConfig, out_dir=None, reuse_baseline: bool = False,
                    write_outputs: bool = True) -> tuple[pipeline.RiskReport, dict]:
    """Full measurement: baseline, attacked run, report assembly, artifacts.

    Returns the report and a dict of written paths (empty when
    write_outputs=False).
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    train_ds, test_ds = build_datasets(cfg)

    baseline = run_baseline(cfg, train_ds, test_ds, cache_dir=out / "baseline_cache",
                            reuse=reuse_baseline)
    clean_bundle, attacked_bundle, probe = run_attack_phase(cfg, train_ds, test_ds)

    totals, attack_time_s, resources = pipeline.map_telemetry_to_effort(
        probe.resources, probe.elapsed_s, cfg.attack.steps
    )
    base = pipeline.BaseMeasures(
        clean_metrics=clean_bundle,
        attacked_metrics=attacked_bundle,
        attack_time_s=attack_time_s,
        resources=resources,
        steps=totals,
    )
    provenance = {
        "package_version": __version__,
        "engine": "rmf-f64-sgd/1",
        "seed": cfg.seed,
        "config_sha256": config_digest(cfg),
        "baseline_from_cache": baseline.from_cache,
    }
    report = pipeline.build_report(
        base,
        cfg.criteria,
        baseline_damage=baseline.damage,
        attack_summary=attack_summary(cfg),
        provenance=provenance,
    )

    paths: dict = {}
    if write_outputs:
        try:
            out.mkdir(parents=True, exist_ok=True)
            report_json = out / "report.json"
            report_txt = out / "report.txt"
            report_json.write_text(pipeline.dumps_report(report) + "\n", encoding="utf-8")
            report_txt.write_text(print_report(report), encoding="utf-8")
            paths = {"report_json": report_json, "report_txt": report_txt}
        except OSError as exc:
            raise ReportWriteError(f"cannot write report under {out}: {exc}") from exc
    log.info("measurement done: damage=%.4f class=%s", report.derived.extent_of_damage,
             report.indicator.name)
    return report, paths


def sweep(cfg: RunConfig, fractions, out_dir=None) -> tuple[list[dict], Path]:
    """One measurement row per poison fraction; row i runs with seed + i.

    A failing row is recorded with its error class and the sweep continues.
    """
    fractions = list(fractions)
    if not fractions:
        raise ValueError("fraction list must be non-empty")
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"fraction {f} outside [0, 1]")

    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    rows = []
    for i, fraction in enumerate(fractions):
        row_cfg = dataclasses.replace(
            cfg,
            seed=cfg.seed + i,
            attack=dataclasses.replace(cfg.attack, poison_fraction=float(fraction)),
        )
        try:
            report, _ = run_measurement(row_cfg, out_dir=out, reuse_baseline=True,
                                        write_outputs=False)
            rows.append(pipeline.report_csv_row(report))
        except Exception as exc:  # keep sweeping; the row records the failure
            log.warning("sweep row %d (fraction %s) failed: %s", i, fraction, exc)
            rows.append({
                "attack": cfg.attack.kind,
                "fraction": fraction,
                "damage": "", "steps": "", "time_s": "", "cpu_mean": "", "rss_peak_mb": "",
                "class": "",
                "status": f"error: {type(exc).__name__}: {exc}",
            })

    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "sweep.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=pipeline.report_csv_fields())
            writer.writeheader()
            writer.writerows(rows)
    except OSError as exc:
        raise ReportWriteError(f"cannot write sweep CSV under {out}: {exc}") from exc
    return rows, csv_path


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def print_report(report: pipeline.RiskReport) -> str:
    """Stable line-oriented rendering; field order is fixed for golden files."""
    a = report.attack_summary
    res = report.derived.resources
    lines = [
        "rmf report 1",
        f"attack: {a.get('kind', 'unknown')}",
        f"specificity: {a.get('specificity', 'unknown')}",
        f"poison_fraction: {_fmt(a['poison_fraction']) if 'poison_fraction' in a else 'unknown'}",
        f"target_label: {a.get('target_label') if a.get('target_label') is not None else 'none'}",
        f"steps: {report.derived.total_steps} (knowledge {report.base.steps.knowledge}, "
        f"goal {report.base.steps.goal}, specificity {report.base.steps.specificity})",
        f"time_s: {report.derived.attack_time_s:.3f}",
        f"cpu_mean_percent: {res.cpu_percent_mean:.1f}" if res is not None else "cpu_mean_percent: unavailable",
        f"rss_peak_mb: {res.rss_mb_peak:.1f}" if res is not None else "rss_peak_mb: unavailable",
        (f"gpu_peak_mb: {res.gpu_mb_peak:.1f}" if res is not None and res.gpu_mb_peak is not None
         else "gpu: unavailable"),
        "clean: accuracy {accuracy:.4f} precision {avg_precision:.4f} recall {avg_recall:.4f} f1 {f1:.4f}".format(
            **report.base.clean_metrics.as_dict()),
        "attacked: accuracy {accuracy:.4f} precision {avg_precision:.4f} recall {avg_recall:.4f} f1 {f1:.4f}".format(
            **report.base.attacked_metrics.as_dict()),
        f"extent_of_damage: {_fmt(report.derived.extent_of_damage)}",
        f"damage_normalized: {_fmt(report.derived.damage_normalized)}",
        (f"baseline_damage: {_fmt(report.baseline_damage)}" if report.baseline_damage is not None
         else "baseline_damage: absent"),
        (f"damage_vs_baseline: {_fmt(pipeline.compare_to_baseline(report.derived.extent_of_damage, report.baseline_damage))}"
         if report.baseline_damage is not None else "damage_vs_baseline: absent"),
        f"class: {report.indicator.name}",
    ]
    lines.extend(f"note: {note}" for note in report.notes)
    return "\n".join(lines) + "\n"
