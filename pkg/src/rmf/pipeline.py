"""Measurement core: base measures per attribute, derived measures, the
decision criteria, and the risk indicator.

Damage aggregation inverts each post-attack metric (1 - v) and sums the four
terms, giving an extent of damage in [0, 4]; dividing by 4 yields the
normalized damage the decision criteria act on. Effort stays three separate
quantities (step counts, attack seconds, observed resources); there is no
defensible common unit, so no single effort scalar is ever computed and the
risk class depends on damage alone.

Reference figures of 4.62 (attacked) and 0.1 (clean baseline) have been
published for the street-sign scenario, but they cannot be derived from the
invert-and-sum rule, which gives 3.89 and 0.22 on the same metric columns.
Reports therefore carry the formula output and flag the discrepancy in a
note instead of silently adopting either number.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass

from .metrics import MetricsBundle
from .telemetry import ResourceSummary, StepLedgerTotals, ledger_total
from .attacks import StepCatalog

REPORT_SCHEMA = "rmf-report/1"

# Published reference figures that disagree with the invert-and-sum rule.
REFERENCE_REPORTED_ATTACKED_DAMAGE = 4.62
REFERENCE_REPORTED_BASELINE_DAMAGE = 0.1

FORMULA_NOTE = (
    "formula-note: extent_of_damage = (1-accuracy) + (1-avg_precision) + (1-avg_recall) + (1-f1); "
    "previously published reference values of 4.62 (attacked) / 0.1 (clean baseline) for the "
    "street-sign case are not reproducible from this formula, which yields 3.89 / 0.22 on the "
    "same metric columns; this report uses the formula output."
)
CPU_CONVENTION_NOTE = (
    "telemetry-note: cpu_percent_mean is the per-process mean over probe samples and may exceed "
    "100 on multicore hosts; whether published reference CPU figures were means or instantaneous "
    "readings is unstated."
)
RESOURCES_ABSENT_NOTE = "telemetry-note: resources unavailable; effort reported as time and steps only."
GPU_ABSENT_NOTE = "telemetry-note: gpu memory not exposed on this platform; gpu_mb_peak absent."


class RiskClass(enum.IntEnum):
    Minor = 0
    Major = 1
    Critical = 2


@dataclass(frozen=True)
class DecisionCriteria:
    """Thresholds on normalized damage; effort_adjustment is reserved and unused."""

    critical_threshold: float = 0.6
    major_threshold: float = 0.3
    effort_adjustment: None = None

    def __post_init__(self):
        if not 0.0 <= self.major_threshold < self.critical_threshold <= 1.0:
            raise ValueError("need 0 <= major_threshold < critical_threshold <= 1")
        if self.effort_adjustment is not None:
            raise ValueError("effort_adjustment is reserved for future criteria and must stay unset")


@dataclass(frozen=True)
class BaseMeasures:
    clean_metrics: MetricsBundle
    attacked_metrics: MetricsBundle
    attack_time_s: float
    resources: ResourceSummary | None
    steps: StepLedgerTotals


@dataclass(frozen=True)
class DerivedMeasures:
    extent_of_damage: float
    damage_normalized: float
    total_steps: int
    attack_time_s: float
    resources: ResourceSummary | None


@dataclass(frozen=True)
class RiskReport:
    base: BaseMeasures
    derived: DerivedMeasures
    indicator: RiskClass
    baseline_damage: float | None
    attack_summary: dict
    provenance: dict
    notes: tuple[str, ...]


def invert_metric(v: float) -> float:
    """1 - v for a metric in [0, 1] (an attack's goal is to push metrics down)."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"metric value {v} outside [0, 1]")
    return 1.0 - v


def extent_of_damage(attacked: MetricsBundle) -> float:
    """Sum of the four inverted metrics; 0 for perfect metrics, 4 for zeroed ones."""
    return (
        invert_metric(attacked.accuracy)
        + invert_metric(attacked.avg_precision)
        + invert_metric(attacked.avg_recall)
        + invert_metric(attacked.f1)
    )


def map_telemetry_to_effort(resources: ResourceSummary | None, elapsed_s: float,
                            catalog: StepCatalog):
    """Map monitored low-level data onto the three effort attributes.

    Step counts come from the catalog phases, time from the stopwatch,
    resources from the probe. Missing resources stay None (explicitly
    absent), never silent zeros; the three outputs are never aggregated.
    """
    if elapsed_s < 0:
        raise ValueError("elapsed_s must be non-negative")
    k, g, s = catalog.counts()
    return StepLedgerTotals(knowledge=k, goal=g, specificity=s), float(elapsed_s), resources


def classify(derived: DerivedMeasures, criteria: DecisionCriteria) -> RiskClass:
    """Monotone thresholding of normalized damage; effort never enters."""
    if derived.damage_normalized >= criteria.critical_threshold:
        return RiskClass.Critical
    if derived.damage_normalized >= criteria.major_threshold:
        return RiskClass.Major
    return RiskClass.Minor


def compare_to_baseline(attacked_damage: float, baseline_damage: float) -> float:
    """Signed damage gap; negative means the 'attack' improved the metrics."""
    if attacked_damage < 0 or baseline_damage < 0:
        raise ValueError("damage values must be non-negative")
    return attacked_damage - baseline_damage


def build_report(base: BaseMeasures, criteria: DecisionCriteria,
                 baseline_damage: float | None = None,
                 attack_summary: dict | None = None,
                 provenance: dict | None = None,
                 extra_notes: tuple[str, ...] = ()) -> RiskReport:
    """Assemble derived measures, the indicator, and provenance into a report."""
    for name in ("clean_metrics", "attacked_metrics", "attack_time_s", "steps"):
        if getattr(base, name) is None:
            raise ValueError(f"base measures missing attribute: {name}")
    if base.attack_time_s < 0:
        raise ValueError("attack_time_s must be non-negative")

    damage = extent_of_damage(base.attacked_metrics)
    derived = DerivedMeasures(
        extent_of_damage=damage,
        damage_normalized=damage / 4.0,
        total_steps=ledger_total(base.steps),
        attack_time_s=base.attack_time_s,
        resources=base.resources,
    )
    notes = [FORMULA_NOTE, CPU_CONVENTION_NOTE]
    if base.resources is None:
        notes.append(RESOURCES_ABSENT_NOTE)
    elif base.resources.gpu_mb_peak is None:
        notes.append(GPU_ABSENT_NOTE)
    notes.extend(extra_notes)

    report = RiskReport(
        base=base,
        derived=derived,
        indicator=classify(derived, criteria),
        baseline_damage=baseline_damage,
        attack_summary=dict(attack_summary or {}),
        provenance=dict(provenance or {}),
        notes=tuple(notes),
    )
    stamped = dict(report.provenance)
    stamped["determinism_sha256"] = determinism_hash(report)
    return RiskReport(
        base=report.base,
        derived=report.derived,
        indicator=report.indicator,
        baseline_damage=report.baseline_damage,
        attack_summary=report.attack_summary,
        provenance=stamped,
        notes=report.notes,
    )


def _resources_to_dict(res: ResourceSummary | None):
    if res is None:
        return None
    return {
        "cpu_percent_mean": res.cpu_percent_mean,
        "rss_mb_peak": res.rss_mb_peak,
        "gpu_mb_peak": res.gpu_mb_peak,
        "sample_count": res.sample_count,
    }


def _resources_from_dict(d) -> ResourceSummary | None:
    if d is None:
        return None
    return ResourceSummary(
        cpu_percent_mean=d["cpu_percent_mean"],
        rss_mb_peak=d["rss_mb_peak"],
        gpu_mb_peak=d["gpu_mb_peak"],
        sample_count=d["sample_count"],
    )


def report_to_dict(report: RiskReport) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "base": {
            "clean_metrics": report.base.clean_metrics.as_dict(),
            "attacked_metrics": report.base.attacked_metrics.as_dict(),
            "attack_time_s": report.base.attack_time_s,
            "resources": _resources_to_dict(report.base.resources),
            "steps": {
                "knowledge": report.base.steps.knowledge,
                "goal": report.base.steps.goal,
                "specificity": report.base.steps.specificity,
            },
        },
        "derived": {
            "extent_of_damage": report.derived.extent_of_damage,
            "damage_normalized": report.derived.damage_normalized,
            "total_steps": report.derived.total_steps,
            "attack_time_s": report.derived.attack_time_s,
            "resources": _resources_to_dict(report.derived.resources),
        },
        "indicator": report.indicator.name,
        "baseline_damage": report.baseline_damage,
        "attack": report.attack_summary,
        "provenance": report.provenance,
        "notes": list(report.notes),
    }


def report_from_dict(d: dict) -> RiskReport:
    if d.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"unsupported report schema {d.get('schema')!r}")
    base = BaseMeasures(
        clean_metrics=MetricsBundle(**d["base"]["clean_metrics"]),
        attacked_metrics=MetricsBundle(**d["base"]["attacked_metrics"]),
        attack_time_s=d["base"]["attack_time_s"],
        resources=_resources_from_dict(d["base"]["resources"]),
        steps=StepLedgerTotals(**d["base"]["steps"]),
    )
    derived = DerivedMeasures(
        extent_of_damage=d["derived"]["extent_of_damage"],
        damage_normalized=d["derived"]["damage_normalized"],
        total_steps=d["derived"]["total_steps"],
        attack_time_s=d["derived"]["attack_time_s"],
        resources=_resources_from_dict(d["derived"]["resources"]),
    )
    return RiskReport(
        base=base,
        derived=derived,
        indicator=RiskClass[d["indicator"]],
        baseline_damage=d["baseline_damage"],
        attack_summary=dict(d["attack"]),
        provenance=dict(d["provenance"]),
        notes=tuple(d["notes"]),
    )


def dumps_report(report: RiskReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True)


def loads_report(text: str) -> RiskReport:
    return report_from_dict(json.loads(text))


def mask_volatile_fields(d: dict) -> dict:
    """Copy of a report dict with timing/resource measurements nulled.

    Two runs with identical config and seed must agree on everything else;
    this masked form is what the determinism hash covers.
    """
    masked = json.loads(json.dumps(d))
    masked["base"]["attack_time_s"] = None
    masked["base"]["resources"] = None
    masked["derived"]["attack_time_s"] = None
    masked["derived"]["resources"] = None
    masked.get("provenance", {}).pop("determinism_sha256", None)
    return masked


def determinism_hash(report: RiskReport) -> str:
    canonical = json.dumps(mask_volatile_fields(report_to_dict(report)), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def report_csv_fields() -> list[str]:
    return ["attack", "fraction", "damage", "steps", "time_s", "cpu_mean", "rss_peak_mb", "class", "status"]


def report_csv_row(report: RiskReport) -> dict:
    """Flat row for sweep aggregation."""
    res = report.derived.resources
    return {
        "attack": report.attack_summary.get("kind", ""),
        "fraction": report.attack_summary.get("poison_fraction", ""),
        "damage": repr(report.derived.extent_of_damage),
        "steps": report.derived.total_steps,
        "time_s": f"{report.derived.attack_time_s:.3f}",
        "cpu_mean": "" if res is None else f"{res.cpu_percent_mean:.1f}",
        "rss_peak_mb": "" if res is None else f"{res.rss_mb_peak:.1f}",
        "class": report.indicator.name,
        "status": "ok",
    }
