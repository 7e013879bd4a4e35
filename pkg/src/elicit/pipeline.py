"""Artifact plumbing: candidate files, group building, and per-variable fits.

One code path builds groups from candidates everywhere (CLI, API, tests), so
group ids are stable for a given (candidates, config) pair.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .calibration import CalibrationMap, apply_calibration
from .corpus import Corpus, Span
from .errors import FormatError
from .labeling import (
    Candidate,
    ExplanationGroup,
    merge_candidates,
    run_labeling_functions,
    select_top_k,
)
from .labelmodel import (
    LabelModelFit,
    LambdaMatrix,
    build_lambda,
    build_omega,
    fit,
    fit_with_penalty,
    score_groups,
)
from .schema import ProjectConfig
from .session import CONFIRM, REJECT, ValidationRecord

FIT_FILE_VERSION = 1


def candidates_to_jsonl(candidates: Sequence[Candidate], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for c in candidates:
            fh.write(
                json.dumps(
                    {
                        "lf_id": c.lf_id,
                        "variable_id": c.variable_id,
                        "value": c.value,
                        "confidence": c.confidence,
                        "doc_id": c.span.doc_id,
                        "start": c.span.start,
                        "end": c.span.end,
                        "raw_score": c.raw_score,
                        "uncalibrated": c.uncalibrated,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def candidates_from_jsonl(path: str | Path) -> list[Candidate]:
    out = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            out.append(
                Candidate(
                    lf_id=record["lf_id"],
                    variable_id=record["variable_id"],
                    value=record["value"],
                    confidence=float(record["confidence"]),
                    span=Span(record["doc_id"], int(record["start"]), int(record["end"])),
                    raw_score=float(record["raw_score"]),
                    uncalibrated=bool(record.get("uncalibrated", False)),
                )
            )
        except (json.JSONDecodeError, KeyError) as exc:
            raise FormatError(f"bad candidate record: {exc}", record_index=i) from exc
    return out


def build_groups(
    config: ProjectConfig,
    candidates: Sequence[Candidate],
    calibration: CalibrationMap | None = None,
) -> list[ExplanationGroup]:
    """Top-K trim then merge, per document. Deterministic for fixed inputs."""
    if calibration is not None:
        candidates = [apply_calibration(calibration, c) for c in candidates]
    trimmed = select_top_k(candidates, config.k)
    by_doc: dict[str, list[Candidate]] = {}
    for c in trimmed:
        by_doc.setdefault(c.span.doc_id, []).append(c)
    groups: list[ExplanationGroup] = []
    for doc_id in sorted(by_doc):
        groups.extend(merge_candidates(by_doc[doc_id], config.merge_overlap_threshold))
    return groups


def lambda_matrices(
    config: ProjectConfig, groups: Sequence[ExplanationGroup]
) -> dict[str, LambdaMatrix]:
    by_variable: dict[str, list[ExplanationGroup]] = {}
    for g in groups:
        by_variable.setdefault(g.variable_id, []).append(g)
    return {
        variable_id: build_lambda(variable_groups, config.lf_ids)
        for variable_id, variable_groups in sorted(by_variable.items())
    }


def validated_rows(
    lam: LambdaMatrix, records: Sequence[ValidationRecord]
) -> list[tuple[int, int]]:
    """Map confirm/reject decisions onto vote-matrix rows (1 confirm, 0 reject)."""
    index = lam.row_index
    out = []
    for record in records:
        if record.group_id in index:
            if record.decision == CONFIRM:
                out.append((index[record.group_id], 1))
            elif record.decision == REJECT:
                out.append((index[record.group_id], 0))
    return out


def fit_all(
    config: ProjectConfig,
    groups: Sequence[ExplanationGroup],
    records: Sequence[ValidationRecord] = (),
    alpha: float | None = None,
) -> dict[str, LabelModelFit]:
    """Fit one label model per variable; validated records trigger the
    penalised refit. Variables with fewer than 2 groups (or fewer than 2
    LFs configured) cannot be fitted and are skipped."""
    alpha = config.alpha if alpha is None else alpha
    omega = build_omega(config.lf_ids, config.dependency_pairs)
    fits: dict[str, LabelModelFit] = {}
    for variable_id, lam in lambda_matrices(config, groups).items():
        if lam.entries.shape[0] < 2 or lam.entries.shape[1] < 2:
            continue
        validated = validated_rows(lam, records)
        if validated and alpha > 0:
            fits[variable_id] = fit_with_penalty(
                lam, validated, alpha, omega=omega, variable_id=variable_id
            )
        else:
            fits[variable_id] = fit(lam, omega=omega, variable_id=variable_id)
    return fits


def score_all(
    config: ProjectConfig,
    groups: Sequence[ExplanationGroup],
    fits: Mapping[str, LabelModelFit] | None,
) -> None:
    """Assign group confidences from the per-variable fits (0.5 without one)."""
    matrices = lambda_matrices(config, groups)
    by_variable: dict[str, list[ExplanationGroup]] = {}
    for g in groups:
        by_variable.setdefault(g.variable_id, []).append(g)
    for variable_id, variable_groups in by_variable.items():
        fit_result = (fits or {}).get(variable_id)
        score_groups(variable_groups, matrices[variable_id], fit_result)


def run_project(
    config: ProjectConfig,
    corpus: Corpus,
    transport: httpx.BaseTransport | None = None,
    records: Sequence[ValidationRecord] = (),
) -> tuple[list[Candidate], list[ExplanationGroup], dict[str, LabelModelFit]]:
    """LF run, grouping, fitting, and scoring in one deterministic pass."""
    candidates = run_labeling_functions(config, corpus, transport=transport)
    groups = build_groups(config, candidates)
    fits = fit_all(config, groups, records=records)
    score_all(config, groups, fits)
    return candidates, groups, fits


def save_fits(fits: Mapping[str, LabelModelFit], path: str | Path) -> None:
    payload = {
        "version": FIT_FILE_VERSION,
        "variables": {variable_id: f.to_dict() for variable_id, f in sorted(fits.items())},
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_fits(path: str | Path) -> dict[str, LabelModelFit]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != FIT_FILE_VERSION:
        raise FormatError(f"unsupported fit file version {payload.get('version')}")
    return {
        variable_id: LabelModelFit.from_dict(entry)
        for variable_id, entry in payload["variables"].items()
    }
