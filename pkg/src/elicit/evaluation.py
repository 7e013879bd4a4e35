"""Evaluation against gold labels: support-weighted precision/recall, a
simulated annotator for end-to-end sweeps, deferral curves, inter-annotator
agreement, and timing summaries.

Scoring convention for abstentions: an abstained prediction counts as a
false negative for the gold class and produces no false positive. A class
with no predicted instances reports zero precision, flagged as undefined.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError, KeyMismatch, NoOverlap, ValidationError
from .labeling import ExplanationGroup
from .labelmodel import ABSTAIN, majority_rule, rank_explanations
from .schema import DeferralPolicy, ProjectConfig
from .session import (
    CONFIRM,
    MANUAL_GROUP,
    NO_EVIDENCE,
    NOT_MENTIONED,
    REJECT,
    TERMINAL_DECISIONS,
    ValidationRecord,
    plan_deferral,
)

Item = tuple[str, str]


@dataclass(frozen=True)
class GoldLabel:
    doc_id: str
    variable_id: str
    value: str


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    tp: int
    fp: int
    fn: int
    precision_undefined: bool = False


@dataclass
class VariableMetrics:
    classes: dict[str, ClassMetrics]
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricReport:
    variables: dict[str, VariableMetrics]
    precision: float
    recall: float
    f1: float
    timing: dict | None = None

    def to_json(self) -> str:
        payload = {
            "aggregate": {"precision": self.precision, "recall": self.recall, "f1": self.f1},
            "variables": {
                variable_id: {
                    "precision": vm.precision,
                    "recall": vm.recall,
                    "f1": vm.f1,
                    "support": vm.support,
                    "classes": {
                        value: {
                            "precision": cm.precision,
                            "recall": cm.recall,
                            "f1": cm.f1,
                            "support": cm.support,
                            "tp": cm.tp,
                            "fp": cm.fp,
                            "fn": cm.fn,
                            "precision_undefined": cm.precision_undefined,
                        }
                        for value, cm in vm.classes.items()
                    },
                }
                for variable_id, vm in self.variables.items()
            },
            "timing": self.timing,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["variable_id", "precision", "recall", "f1", "support"])
        for variable_id in sorted(self.variables):
            vm = self.variables[variable_id]
            writer.writerow(
                [variable_id, repr(vm.precision), repr(vm.recall), repr(vm.f1), vm.support]
            )
        writer.writerow(["__aggregate__", repr(self.precision), repr(self.recall), repr(self.f1), ""])
        return buf.getvalue()


def load_gold(path: str | Path) -> dict[Item, str]:
    """Gold labels keyed by (doc_id, variable_id); CSV or JSONL by suffix."""
    path = Path(path)
    out: dict[Item, str] = {}
    if path.suffix == ".csv":
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for i, row in enumerate(reader, start=2):
                try:
                    out[(row["doc_id"], row["variable_id"])] = row["value"]
                except KeyError as exc:
                    raise FormatError(f"gold CSV missing column {exc}", record_index=i) from exc
    else:
        for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            for key in ("doc_id", "variable_id", "value"):
                if key not in record:
                    raise FormatError(f"gold record missing {key!r}", record_index=i)
            out[(record["doc_id"], record["variable_id"])] = record["value"]
    return out


def weighted_precision_recall(
    predictions: Mapping[Item, str],
    gold: Mapping[Item, str],
    records: Sequence[ValidationRecord] | None = None,
) -> MetricReport:
    """Per-class precision/recall/F1, averaged with per-class support weights.

    predictions and gold must cover the same (doc, variable) keys; use
    ABSTAIN (or None) for abstentions.
    """
    if set(predictions) != set(gold):
        missing = set(gold) ^ set(predictions)
        raise KeyMismatch(f"predictions and gold cover different keys, e.g. {sorted(missing)[:3]}")

    by_variable: dict[str, list[Item]] = {}
    for key in gold:
        by_variable.setdefault(key[1], []).append(key)

    variables: dict[str, VariableMetrics] = {}
    for variable_id, keys in sorted(by_variable.items()):
        values = sorted({gold[k] for k in keys})
        classes: dict[str, ClassMetrics] = {}
        for value in values:
            tp = fp = fn = 0
            for key in keys:
                predicted = predictions[key]
                abstained = predicted is None or predicted == ABSTAIN
                if gold[key] == value:
                    if predicted == value:
                        tp += 1
                    else:
                        fn += 1  # abstention or wrong value: missed gold
                elif not abstained and predicted == value:
                    fp += 1
            support = tp + fn
            undefined = (tp + fp) == 0
            precision = 0.0 if undefined else tp / (tp + fp)
            recall = tp / support if support else 0.0
            f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
            classes[value] = ClassMetrics(
                precision=precision,
                recall=recall,
                f1=f1,
                support=support,
                tp=tp,
                fp=fp,
                fn=fn,
                precision_undefined=undefined,
            )
        total = sum(cm.support for cm in classes.values())
        weighted = lambda attr: (
            sum(getattr(cm, attr) * cm.support for cm in classes.values()) / total
            if total
            else 0.0
        )
        variables[variable_id] = VariableMetrics(
            classes=classes,
            precision=weighted("precision"),
            recall=weighted("recall"),
            f1=weighted("f1"),
            support=total,
        )

    grand = sum(vm.support for vm in variables.values())
    agg = lambda attr: (
        sum(getattr(vm, attr) * vm.support for vm in variables.values()) / grand if grand else 0.0
    )
    timing = timing_summary(records) if records else None
    return MetricReport(
        variables=variables,
        precision=agg("precision"),
        recall=agg("recall"),
        f1=agg("f1"),
        timing=timing,
    )


def timing_summary(records: Sequence[ValidationRecord]) -> dict:
    times = [r.wall_time_ms for r in records]
    if not times:
        return {"count": 0, "total_ms": 0, "mean_ms": 0.0, "median_ms": 0.0}
    return {
        "count": len(times),
        "total_ms": sum(times),
        "mean_ms": sum(times) / len(times),
        "median_ms": float(statistics.median(times)),
    }


def simulate_annotator(
    items: Sequence[tuple[Item, Sequence[ExplanationGroup]]],
    gold: Mapping[Item, str],
    config: ProjectConfig,
    p: float = 0.98,
    seed: int = 0,
    annotator_id: str = "sim",
) -> tuple[list[ValidationRecord], dict[Item, str]]:
    """Walk ranked groups the way a user would, with accuracy p.

    For each item, groups are visited in rank order: a gold-consistent group
    is confirmed with probability p (otherwise wrongly rejected); a
    gold-inconsistent group is rejected with probability p (otherwise
    wrongly confirmed). The first confirm ends the item; an exhausted list
    ends in a no-evidence decision. Deterministic given the seed. Returns
    the records and the resolved value per item.
    """
    if not (0.0 <= p <= 1.0):
        raise ValidationError(f"annotator accuracy p={p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    records: list[ValidationRecord] = []
    finals: dict[Item, str] = {}
    counter = 0

    def emit(item: Item, decision: str, group_id: str, value: str | None):
        nonlocal counter
        records.append(
            ValidationRecord(
                record_id=f"{annotator_id}-{counter:06d}",
                doc_id=item[0],
                variable_id=item[1],
                group_id=group_id,
                decision=decision,
                annotator_id=annotator_id,
                wall_time_ms=0,
                timestamp=float(counter),
                value=value,
            )
        )
        counter += 1

    for item, groups in items:
        gold_value = gold[item]
        ranked = rank_explanations(list(groups))
        decided = False
        for g in ranked:
            acts_correctly = rng.random() < p
            should_confirm = g.value == gold_value
            confirm_now = should_confirm == acts_correctly
            if confirm_now:
                emit(item, CONFIRM, g.group_id, g.value)
                finals[item] = g.value
                decided = True
                break
            emit(item, REJECT, g.group_id, None)
        if not decided:
            schema = config.variable(item[1])
            value = schema.negative_value if schema.negative_value is not None else NOT_MENTIONED
            emit(item, NO_EVIDENCE, MANUAL_GROUP, value)
            finals[item] = value
    return records, finals


def automated_predictions(
    items: Sequence[tuple[Item, Sequence[ExplanationGroup]]],
    config: ProjectConfig,
    fitted: bool = True,
) -> dict[Item, str]:
    """Label-model argmax per item (majority rule when no fit is in force)."""
    out: dict[Item, str] = {}
    for item, groups in items:
        negative = config.variable(item[1]).negative_value
        if not groups:
            out[item] = negative if negative is not None else ABSTAIN
        elif fitted:
            out[item] = rank_explanations(list(groups))[0].value
        else:
            out[item] = majority_rule(list(groups), negative_value=negative)
    return out


def deferral_curve(
    items: Sequence[tuple[Item, Sequence[ExplanationGroup]]],
    gold: Mapping[Item, str],
    config: ProjectConfig,
    budgets: Sequence[float],
    p: float = 0.98,
    seed: int = 0,
    fitted: bool = True,
) -> list[dict]:
    """Sweep fixed-budget deferral; score each split with weighted metrics.

    Human items are resolved by the simulated annotator, auto items by the
    automated prediction. At budget 0 this is exactly the fully automated
    pipeline; at budget 1 it is exactly the (simulated) human pipeline.
    """
    if not budgets:
        raise ValidationError("budget grid must be non-empty")
    item_list = [item for item, _ in items]
    groups_by_item = {item: list(groups) for item, groups in items}
    confidences = []
    for item, groups in items:
        confidences.append((item, max((g.group_confidence for g in groups), default=0.0)))

    rows = []
    for i, q in enumerate(budgets):
        human, auto = plan_deferral(confidences, DeferralPolicy(mode="budget", q=q))
        predictions: dict[Item, str] = {}
        predictions.update(
            automated_predictions(
                [(item, groups_by_item[item]) for item in auto], config, fitted=fitted
            )
        )
        _, sim_finals = simulate_annotator(
            [(item, groups_by_item[item]) for item in human],
            gold,
            config,
            p=p,
            seed=seed + i,
        )
        predictions.update(sim_finals)
        report = weighted_precision_recall(predictions, gold)
        rows.append(
            {
                "budget": q,
                "deferred_fraction": len(human) / len(item_list) if item_list else 0.0,
                "precision": report.precision,
                "recall": report.recall,
                "f1": report.f1,
            }
        )
    return rows


def deferral_curve_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["budget", "deferred_fraction", "precision", "recall", "f1"])
    for row in rows:
        writer.writerow(
            [
                repr(row["budget"]),
                repr(row["deferred_fraction"]),
                repr(row["precision"]),
                repr(row["recall"]),
                repr(row["f1"]),
            ]
        )
    return buf.getvalue()


def annotator_agreement(
    log_a: Sequence[ValidationRecord], log_b: Sequence[ValidationRecord]
) -> dict[str, dict[str, float]]:
    """Percent agreement and Cohen's kappa per variable over cells both
    annotators validated. Raises NoOverlap when there are none."""

    def finals(log: Sequence[ValidationRecord]) -> dict[Item, str]:
        out: dict[Item, str] = {}
        for record in log:
            key = (record.doc_id, record.variable_id)
            if record.decision in TERMINAL_DECISIONS and key not in out:
                out[key] = record.value
        return out

    a, b = finals(log_a), finals(log_b)
    joint = sorted(set(a) & set(b))
    if not joint:
        raise NoOverlap("annotators share no jointly validated cells")

    by_variable: dict[str, list[Item]] = {}
    for key in joint:
        by_variable.setdefault(key[1], []).append(key)

    out: dict[str, dict[str, float]] = {}
    for variable_id, keys in sorted(by_variable.items()):
        n = len(keys)
        agreements = sum(a[k] == b[k] for k in keys)
        po = agreements / n
        values = sorted({a[k] for k in keys} | {b[k] for k in keys})
        pe = sum(
            (sum(a[k] == v for k in keys) / n) * (sum(b[k] == v for k in keys) / n)
            for v in values
        )
        if pe >= 1.0:
            kappa = 1.0 if po == 1.0 else 0.0
        else:
            kappa = (po - pe) / (1.0 - pe)
        out[variable_id] = {"percent_agreement": po, "kappa": kappa, "n": n}
    return out
