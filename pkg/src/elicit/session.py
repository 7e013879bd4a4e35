"""Validation workflow: queue, decisions, deferral, alerts, and export.

All mutation goes through an append-only event log (JSONL, one event per
line). The live session and replay share one transition function, so
replaying a log over the same project and groups reconstructs the exact
session state; exports are pure functions of that state and byte-identical
across re-exports.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Corpus, Span
from .errors import (
    CorruptState,
    InvalidRecord,
    SessionClosed,
    StaleItem,
    ValidationError,
)
from .labeling import ExplanationGroup
from .labelmodel import ABSTAIN, majority_rule, rank_explanations
from .schema import DeferralPolicy, ProjectConfig

LOG_VERSION = 1

# Item statuses
PENDING = "pending"
DEFERRED = "deferred_to_human"
AUTO_ACCEPTED = "auto_accepted"
VALIDATED = "validated"

# Decisions
CONFIRM = "confirm"
REJECT = "reject"
NO_EVIDENCE = "no_evidence"
MANUAL = "manual"
TERMINAL_DECISIONS = (CONFIRM, NO_EVIDENCE, MANUAL)

MANUAL_GROUP = "MANUAL"
NOT_MENTIONED = "not_mentioned"

Item = tuple[str, str]  # (doc_id, variable_id)


@dataclass(frozen=True)
class ValidationRecord:
    """One human decision about one explanation group (or a manual entry)."""

    record_id: str
    doc_id: str
    variable_id: str
    group_id: str  # a group id, or MANUAL for manual / no-evidence decisions
    decision: str
    annotator_id: str
    wall_time_ms: int
    timestamp: float
    value: str | None = None  # resolved final value for terminal decisions

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "ValidationRecord":
        return cls(**payload)


@dataclass(frozen=True)
class Alert:
    doc_id: str
    variable_id: str
    group_id: str


@dataclass
class SessionState:
    statuses: dict[Item, str]
    queue: tuple[Item, ...]
    log: list[ValidationRecord] = field(default_factory=list)
    alerts: list[Alert] = field(default_factory=list)
    auto_values: dict[Item, tuple[str, float]] = field(default_factory=dict)
    fit_version: int = 0
    closed: bool = False


@dataclass(frozen=True)
class GroupView:
    group_id: str
    value: str
    confidence: float
    agreement: int
    snippet: str
    span_start: int
    span_end: int


@dataclass(frozen=True)
class ItemView:
    doc_id: str
    variable_id: str
    display_name: str
    label_values: tuple[str, ...]
    negative_value: str | None
    groups: tuple[GroupView, ...]
    lf_total: int


def plan_deferral(
    predictions: Sequence[tuple[Item, float]], policy: DeferralPolicy | None
) -> tuple[list[Item], list[Item]]:
    """Split items into (human, auto) by confidence.

    budget(q): the ceil(q*N) lowest-confidence items go to the human, ties
    resolved by input order. threshold(tau): items with confidence strictly
    below tau go to the human. none (or no policy): everything goes to the
    human. Both lists preserve input order.
    """
    for _, confidence in predictions:
        if not (0.0 <= confidence <= 1.0):
            raise ValidationError(f"confidence {confidence} outside [0, 1]")
    items = [key for key, _ in predictions]
    if policy is None or policy.mode == "none":
        return list(items), []
    if policy.mode == "budget":
        n = math.ceil(policy.q * len(items))
        order = sorted(range(len(items)), key=lambda i: predictions[i][1])
        chosen = set(order[:n])
        human = [key for i, key in enumerate(items) if i in chosen]
        auto = [key for i, key in enumerate(items) if i not in chosen]
        return human, auto
    if policy.mode == "threshold":
        human = [key for key, conf in predictions if conf < policy.tau]
        auto = [key for key, conf in predictions if conf >= policy.tau]
        return human, auto
    raise ValidationError("unknown deferral mode", policy.mode)


class Session:
    """Single-writer validation session over a corpus and its groups.

    Groups arrive with confidences already assigned (0.5 before any fit).
    Every mutation is expressed as an event; events are applied through one
    transition function and appended (write-through) to the log when a path
    is configured.
    """

    def __init__(
        self,
        config: ProjectConfig,
        corpus: Corpus,
        groups: Sequence[ExplanationGroup],
        log_path: str | Path | None = None,
        fitted: bool = False,
    ):
        self.config = config
        self.corpus = corpus
        self.fitted = fitted
        self._groups: dict[Item, list[ExplanationGroup]] = {}
        self._set_groups(groups)
        queue = tuple(
            (doc_id, v.variable_id) for doc_id in corpus.doc_ids for v in config.variables
        )
        self.state = SessionState(statuses={item: PENDING for item in queue}, queue=queue)
        self._log_fh = None
        if log_path is not None:
            log_path = Path(log_path)
            fresh = not log_path.exists() or log_path.stat().st_size == 0
            self._log_fh = log_path.open("a", encoding="utf-8")
            if fresh:
                self._write_event({"type": "session_started", "v": LOG_VERSION})

    # -- plumbing -----------------------------------------------------------

    def _set_groups(self, groups: Iterable[ExplanationGroup]) -> None:
        self._groups = {}
        for g in groups:
            self._groups.setdefault((g.doc_id, g.variable_id), []).append(g)

    def group_ids(self) -> dict[Item, set[str]]:
        return {item: {g.group_id for g in gs} for item, gs in self._groups.items()}

    def find_group(self, group_id: str) -> ExplanationGroup | None:
        for gs in self._groups.values():
            for g in gs:
                if g.group_id == group_id:
                    return g
        return None

    def _write_event(self, event: dict) -> None:
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(event, sort_keys=True) + "\n")
            self._log_fh.flush()

    def _emit(self, event: dict) -> None:
        self._apply(event)
        self._write_event(event)

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "session_started":
            if event.get("v") != LOG_VERSION:
                raise CorruptState(f"unsupported log version {event.get('v')}")
        elif kind == "deferral_planned":
            for doc_id, variable_id in event["human"]:
                item = (doc_id, variable_id)
                if self.state.statuses.get(item) not in (VALIDATED, None):
                    self.state.statuses[item] = DEFERRED
            for doc_id, variable_id, value, confidence in event["auto"]:
                item = (doc_id, variable_id)
                if self.state.statuses.get(item) not in (VALIDATED, None):
                    self.state.statuses[item] = AUTO_ACCEPTED
                    self.state.auto_values[item] = (value, confidence)
        elif kind == "validation":
            record = ValidationRecord.from_dict(event["record"])
            self.state.log.append(record)
            if record.decision in TERMINAL_DECISIONS:
                self.state.statuses[(record.doc_id, record.variable_id)] = VALIDATED
        elif kind == "refresh":
            for doc_id, variable_id, group_id in event["alerts"]:
                self.state.alerts.append(Alert(doc_id, variable_id, group_id))
        elif kind == "fit_updated":
            self.state.fit_version = event["version"]
        elif kind == "session_closed":
            self.state.closed = True
        else:
            raise CorruptState(f"unknown event type {kind!r}")

    def close(self) -> None:
        """Flush and release the log file; the session stays resumable."""
        if self._log_fh is not None:
            self._log_fh.flush()
            self._log_fh.close()
            self._log_fh = None

    def terminate(self) -> None:
        """Record the end of the workflow; further mutations are refused."""
        if not self.state.closed:
            self._emit({"type": "session_closed"})
        self.close()

    # -- reads --------------------------------------------------------------

    def item_confidence(self, item: Item) -> float:
        """Best group confidence for the item; 0.0 when it has no groups."""
        groups = self._groups.get(item, [])
        if not groups:
            return 0.0
        return max(g.group_confidence for g in groups)

    def item_prediction(self, item: Item) -> str:
        """Automated value for the item: label-model argmax when a fit is in
        force, the majority-rule baseline otherwise."""
        doc_id, variable_id = item
        groups = self._groups.get(item, [])
        negative = self.config.variable(variable_id).negative_value
        if not groups:
            return negative if negative is not None else ABSTAIN
        if self.fitted:
            return rank_explanations(groups)[0].value
        return majority_rule(groups, negative_value=negative)

    def next_item(self, annotator_id: str) -> ItemView | None:
        """The next item awaiting this annotator, or None when done.

        Idempotent read: calling twice without an intervening submit returns
        the same item.
        """
        if self.state.closed:
            raise SessionClosed("session is closed")
        for item in self.state.queue:
            if self.state.statuses[item] not in (PENDING, DEFERRED):
                continue
            if self._validated_by(item, annotator_id):
                continue
            return self._view(item)
        return None

    def _validated_by(self, item: Item, annotator_id: str) -> bool:
        return any(
            r.annotator_id == annotator_id
            and (r.doc_id, r.variable_id) == item
            and r.decision in TERMINAL_DECISIONS
            for r in self.state.log
        )

    def _view(self, item: Item) -> ItemView:
        doc_id, variable_id = item
        schema = self.config.variable(variable_id)
        ranked = rank_explanations(self._groups.get(item, []))
        views = tuple(
            GroupView(
                group_id=g.group_id,
                value=g.value,
                confidence=g.group_confidence,
                agreement=g.agreement,
                snippet=self.corpus.text_for(g.merged_span),
                span_start=g.merged_span.start,
                span_end=g.merged_span.end,
            )
            for g in ranked
        )
        return ItemView(
            doc_id=doc_id,
            variable_id=variable_id,
            display_name=schema.display_name,
            label_values=schema.label_values,
            negative_value=schema.negative_value,
            groups=views,
            lf_total=len(self.config.lf_configs),
        )

    def progress(self) -> dict[str, int]:
        counts = {PENDING: 0, DEFERRED: 0, AUTO_ACCEPTED: 0, VALIDATED: 0}
        for status in self.state.statuses.values():
            counts[status] += 1
        counts["total"] = len(self.state.statuses)
        counts["alerts"] = len(self.state.alerts)
        return counts

    # -- mutations ----------------------------------------------------------

    def apply_deferral(self, policy: DeferralPolicy | None) -> tuple[list[Item], list[Item]]:
        """Partition open items by the policy; auto items get a prediction."""
        if self.state.closed:
            raise SessionClosed("session is closed")
        open_items = [
            item
            for item in self.state.queue
            if self.state.statuses[item] in (PENDING, DEFERRED, AUTO_ACCEPTED)
        ]
        predictions = [(item, self.item_confidence(item)) for item in open_items]
        human, auto = plan_deferral(predictions, policy)
        event = {
            "type": "deferral_planned",
            "policy": _policy_to_dict(policy),
            "human": [list(item) for item in human],
            "auto": [
                [item[0], item[1], self.item_prediction(item), self.item_confidence(item)]
                for item in auto
            ],
        }
        self._emit(event)
        return human, auto

    def submit_validation(self, record: ValidationRecord) -> ValidationRecord:
        """Record a decision; returns the record as logged (value resolved).

        Re-submitting an already-logged record_id is a no-op (exactly-once
        semantics for retrying clients).
        """
        if self.state.closed:
            raise SessionClosed("session is closed")
        for existing in self.state.log:
            if existing.record_id == record.record_id:
                return existing

        item = (record.doc_id, record.variable_id)
        if item not in self.state.statuses:
            raise InvalidRecord(f"unknown item {item}")
        status = self.state.statuses[item]
        if status == AUTO_ACCEPTED:
            raise InvalidRecord(f"item {item} was auto-accepted by the deferral policy")
        if self._validated_by(item, record.annotator_id):
            raise StaleItem(f"item {item} already validated by {record.annotator_id!r}")

        schema = self.config.variable(record.variable_id)
        if record.decision in (CONFIRM, REJECT):
            group = self.find_group(record.group_id)
            if group is None or (group.doc_id, group.variable_id) != item:
                raise InvalidRecord(f"decision references unknown group {record.group_id!r}")
            value = group.value if record.decision == CONFIRM else None
        elif record.decision == NO_EVIDENCE:
            value = schema.negative_value if schema.negative_value is not None else NOT_MENTIONED
        elif record.decision == MANUAL:
            if record.value not in schema.label_values:
                raise InvalidRecord(f"manual value {record.value!r} not in schema")
            value = record.value
        else:
            raise InvalidRecord(f"unknown decision {record.decision!r}")

        if record.decision in (NO_EVIDENCE, MANUAL) and record.group_id != MANUAL_GROUP:
            record = dataclasses.replace(record, group_id=MANUAL_GROUP)
        resolved = dataclasses.replace(record, value=value)
        self._emit({"type": "validation", "record": resolved.to_dict()})
        return resolved

    def refresh_candidates(self, new_groups: Sequence[ExplanationGroup]) -> list[Alert]:
        """Swap in a new labeling run; alert on validated pairs that gained a
        previously unseen group. Statuses are unchanged until the annotator
        acts; pending items simply pick up the new ranking."""
        if self.state.closed:
            raise SessionClosed("session is closed")
        before = self.group_ids()
        self._set_groups(new_groups)
        after = self.group_ids()
        alerts = []
        for item, ids in sorted(after.items()):
            if self.state.statuses.get(item) != VALIDATED:
                continue
            for group_id in sorted(ids - before.get(item, set())):
                alerts.append(Alert(item[0], item[1], group_id))
        self._emit(
            {"type": "refresh", "alerts": [[a.doc_id, a.variable_id, a.group_id] for a in alerts]}
        )
        return alerts

    def mark_fit_updated(self) -> int:
        self.fitted = True
        self._emit({"type": "fit_updated", "version": self.state.fit_version + 1})
        return self.state.fit_version

    # -- export -------------------------------------------------------------

    def final_values(self) -> dict[Item, tuple[str | None, dict]]:
        """Resolved value and provenance per item.

        Validated cells take the first annotator's terminal decision
        (first-wins); later terminal decisions by other annotators set the
        disagreement flag. Auto-accepted cells carry the planned prediction.
        """
        out: dict[Item, tuple[str | None, dict]] = {}
        terminal: dict[Item, list[ValidationRecord]] = {}
        for record in self.state.log:
            if record.decision in TERMINAL_DECISIONS:
                terminal.setdefault((record.doc_id, record.variable_id), []).append(record)

        for item in self.state.queue:
            status = self.state.statuses[item]
            provenance: dict = {
                "doc_id": item[0],
                "variable_id": item[1],
                "status": status,
                "decision": None,
                "value": None,
                "group_id": None,
                "annotator_id": None,
                "group_confidence": None,
                "agreement": None,
                "span": None,
                "wall_time_ms": None,
                "disagreement": False,
            }
            if status == VALIDATED:
                records = terminal[item]
                first = records[0]
                provenance.update(
                    decision=first.decision,
                    value=first.value,
                    group_id=first.group_id,
                    annotator_id=first.annotator_id,
                    wall_time_ms=first.wall_time_ms,
                    disagreement=any(r.value != first.value for r in records[1:]),
                )
                if first.group_id != MANUAL_GROUP:
                    group = self.find_group(first.group_id)
                    if group is not None:
                        provenance.update(
                            group_confidence=group.group_confidence,
                            agreement=group.agreement,
                            span=[group.merged_span.start, group.merged_span.end],
                        )
                out[item] = (first.value, provenance)
            elif status == AUTO_ACCEPTED:
                value, confidence = self.state.auto_values[item]
                provenance.update(decision="auto", value=value, group_confidence=confidence)
                out[item] = (value, provenance)
            else:
                out[item] = (None, provenance)
        return out

    def export_dataset(self, format: str = "csv") -> bytes:
        """One row per document, one column per variable; unvalidated cells
        are empty. Byte-identical across re-exports of the same state."""
        finals = self.final_values()
        doc_ids = self.corpus.doc_ids
        variable_ids = [v.variable_id for v in self.config.variables]
        if format == "csv":
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["doc_id", *variable_ids])
            for doc_id in doc_ids:
                row = [doc_id]
                for variable_id in variable_ids:
                    value, _ = finals.get((doc_id, variable_id), (None, None))
                    row.append("" if value is None else value)
                writer.writerow(row)
            return buf.getvalue().encode("utf-8")
        if format == "jsonl":
            lines = []
            for doc_id in doc_ids:
                cells = {
                    variable_id: finals.get((doc_id, variable_id), (None, None))[0]
                    for variable_id in variable_ids
                }
                lines.append(json.dumps({"doc_id": doc_id, "values": cells}, sort_keys=True))
            return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")
        raise ValidationError("unknown export format", format)

    def export_provenance(self) -> bytes:
        finals = self.final_values()
        lines = [
            json.dumps(provenance, sort_keys=True)
            for _, provenance in (finals[item] for item in self.state.queue)
        ]
        return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def _policy_to_dict(policy: DeferralPolicy | None) -> dict:
    if policy is None:
        return {"mode": "none"}
    out = {"mode": policy.mode}
    if policy.q is not None:
        out["q"] = policy.q
    if policy.tau is not None:
        out["tau"] = policy.tau
    return out


def read_events(path: str | Path) -> list[dict]:
    """Parse an event log; CorruptState points at the offending byte offset."""
    path = Path(path)
    data = path.read_bytes()
    events = []
    offset = 0
    for line in data.split(b"\n"):
        if line.strip():
            try:
                events.append(json.loads(line.decode("utf-8")))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise CorruptState(f"unreadable event: {exc}", offset=offset) from exc
        offset += len(line) + 1
    return events


def replay(
    config: ProjectConfig,
    corpus: Corpus,
    groups: Sequence[ExplanationGroup],
    events: Iterable[dict],
    fitted: bool = False,
) -> Session:
    """Rebuild a session by applying logged events to a fresh state."""
    session = Session(config, corpus, groups, log_path=None, fitted=fitted)
    for event in events:
        session._apply(event)
    return session


def resume(
    config: ProjectConfig,
    corpus: Corpus,
    groups: Sequence[ExplanationGroup],
    log_path: str | Path,
    fitted: bool = False,
) -> Session:
    """Reopen a session over an existing log file and continue appending."""
    events = read_events(log_path)
    session = replay(config, corpus, groups, events, fitted=fitted)
    if session.state.closed:
        raise SessionClosed(f"log {log_path} records a closed session")
    session._log_fh = Path(log_path).open("a", encoding="utf-8")
    return session
