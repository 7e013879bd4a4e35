"""Labeling-function weighting and explanation ranking.

Votes are aggregated per explanation group, not per document: the vote
matrix L has one row per group and one column per labeling function, with
entries +1 (the LF has a member candidate in the group), -1 (the LF voted a
different value for that variable in the same document) and 0 (abstained).

Weights come from a masked matrix-completion problem. With Sigma the
empirical covariance of the L columns (plus a small ridge) and Omega a
binary mask selecting LF pairs assumed conditionally independent, we
minimise over z

    J(z) = || (Sigma^-1 + z z^T) * Omega ||_F^2

by deterministic fixed-step gradient descent. J is reported in squared
Frobenius units (the argmin is unchanged; differences near the optimum are
better conditioned). Since J(z) = J(-z), the returned sign is the one that
maximises the weight sum, on the assumption that most LFs beat chance;
weights are the sign-resolved z clipped at zero. The solver returns the
best point seen among the origin, the init, and the descent trajectory, so
it is never worse than the trivial point.

Human feedback enters as a quadratic disagreement penalty: for validated
rows D with outcomes y in {0, 1},

    J_fb(z) = J(z) + alpha * sum_{i in D} (p(z, L_i) - y_i)^2

where p(z, row) = logistic(row . max(z, 0)) is the same vote-to-confidence
map used for ranking. The feedback anchors the orientation, so the sign is
fixed at +1 when the penalty is active. With alpha = 0 this reduces exactly
to the unpenalised fit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DimensionMismatch, UnknownLf, ValidationError
from .labeling import ExplanationGroup

FIT_ARTIFACT_VERSION = 1

ABSTAIN = "__abstain__"

DEFAULT_INIT_SCALE = 0.1
DEFAULT_STEP = 0.01
DEFAULT_MAX_ITER = 5000
DEFAULT_TOL = 1e-8
DEFAULT_RIDGE = 1e-6
# The disagreement penalty can make gradients orders of magnitude larger
# than the base objective's; capping the gradient's infinity norm keeps the
# fixed step stable without touching small-gradient trajectories.
DEFAULT_GRAD_CLIP = 1.0


# ---------------------------------------------------------------------------
# Vote matrix


@dataclass(frozen=True)
class LambdaMatrix:
    """Per-explanation vote matrix for one variable."""

    entries: np.ndarray  # (e, m) with entries in {-1, 0, +1}
    group_ids: tuple[str, ...]
    lf_ids: tuple[str, ...]

    def __post_init__(self):
        check_lambda(self.entries)
        if self.entries.shape != (len(self.group_ids), len(self.lf_ids)):
            raise DimensionMismatch(
                f"entries shape {self.entries.shape} does not match "
                f"{len(self.group_ids)} groups x {len(self.lf_ids)} LFs"
            )

    @property
    def row_index(self) -> dict[str, int]:
        return {gid: i for i, gid in enumerate(self.group_ids)}

    def row_for(self, group_id: str) -> np.ndarray:
        return self.entries[self.row_index[group_id]]


def check_lambda(entries: np.ndarray) -> np.ndarray:
    """Validate a vote matrix: 2-D, entries in {-1, 0, +1}."""
    entries = np.asarray(entries)
    if entries.ndim != 2:
        raise DimensionMismatch(f"vote matrix must be 2-D, got shape {entries.shape}")
    if entries.size and not np.isin(entries, (-1, 0, 1)).all():
        raise ValidationError("vote matrix entries must be -1, 0, or +1")
    return entries


def check_omega(omega: np.ndarray, m: int) -> np.ndarray:
    """Validate an independence mask: m x m, symmetric, hollow, binary."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (m, m):
        raise DimensionMismatch(f"omega must be {m}x{m}, got {omega.shape}")
    if not np.isin(omega, (0, 1)).all():
        raise ValidationError("omega entries must be 0 or 1")
    if np.diag(omega).any():
        raise ValidationError("omega must have a zero diagonal")
    if not np.array_equal(omega, omega.T):
        raise ValidationError("omega must be symmetric")
    return omega


def build_omega(lf_ids: Sequence[str], dependency_pairs: Sequence[tuple[str, str]] = ()) -> np.ndarray:
    """All-ones off-diagonal mask with config-declared dependent pairs zeroed."""
    m = len(lf_ids)
    omega = np.ones((m, m)) - np.eye(m)
    index = {lf_id: i for i, lf_id in enumerate(lf_ids)}
    for a, b in dependency_pairs:
        for lf_id in (a, b):
            if lf_id not in index:
                raise UnknownLf(lf_id)
        omega[index[a], index[b]] = 0.0
        omega[index[b], index[a]] = 0.0
    return omega


def build_lambda(
    groups: Sequence[ExplanationGroup], lf_ids: Sequence[str]
) -> LambdaMatrix:
    """Vote matrix over all groups of one variable (any number of documents).

    Row order is deterministic: (doc_id, span start, span end, value, id).
    Entry (g, k) is +1 when LF k has a member candidate in g, -1 when LF k
    voted a different value for the variable in g's document, else 0.
    """
    variables = {g.variable_id for g in groups}
    if len(variables) > 1:
        raise ValidationError(
            "build_lambda expects groups of a single variable", ",".join(sorted(variables))
        )
    index = {lf_id: i for i, lf_id in enumerate(lf_ids)}
    ordered = sorted(
        groups,
        key=lambda g: (g.doc_id, g.merged_span.start, g.merged_span.end, g.value, g.group_id),
    )

    # Values each LF voted for, per document.
    votes: dict[tuple[str, str], set[str]] = {}
    for g in ordered:
        for member in g.members:
            if member.lf_id not in index:
                raise UnknownLf(member.lf_id)
            votes.setdefault((g.doc_id, member.lf_id), set()).add(g.value)

    entries = np.zeros((len(ordered), len(lf_ids)), dtype=np.int8)
    for row, g in enumerate(ordered):
        member_lfs = {m.lf_id for m in g.members}
        for lf_id, col in index.items():
            if lf_id in member_lfs:
                entries[row, col] = 1
            else:
                voted = votes.get((g.doc_id, lf_id), set())
                if voted - {g.value}:
                    entries[row, col] = -1
    return LambdaMatrix(
        entries=entries,
        group_ids=tuple(g.group_id for g in ordered),
        lf_ids=tuple(lf_ids),
    )


# ---------------------------------------------------------------------------
# Solver


@dataclass(frozen=True)
class LabelModelFit:
    """Serialisable result of one label-model fit."""

    lf_ids: tuple[str, ...]
    z_hat: tuple[float, ...]
    sign: int
    weights: tuple[float, ...]
    objective_value: float
    iterations: int
    converged: bool
    alpha: float
    sigma_ridge: float
    params: dict[str, float] = field(default_factory=dict)
    diagnostics: tuple[str, ...] = ()
    variable_id: str | None = None

    @property
    def m(self) -> int:
        return len(self.lf_ids)

    def to_dict(self) -> dict:
        return {
            "version": FIT_ARTIFACT_VERSION,
            "variable_id": self.variable_id,
            "lf_ids": list(self.lf_ids),
            "z_hat": list(self.z_hat),
            "sign": self.sign,
            "weights": list(self.weights),
            "objective_value": self.objective_value,
            "iterations": self.iterations,
            "converged": self.converged,
            "alpha": self.alpha,
            "sigma_ridge": self.sigma_ridge,
            "params": self.params,
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "LabelModelFit":
        if payload.get("version") != FIT_ARTIFACT_VERSION:
            raise ValidationError("unsupported fit artifact version", str(payload.get("version")))
        return cls(
            lf_ids=tuple(payload["lf_ids"]),
            z_hat=tuple(payload["z_hat"]),
            sign=int(payload["sign"]),
            weights=tuple(payload["weights"]),
            objective_value=float(payload["objective_value"]),
            iterations=int(payload["iterations"]),
            converged=bool(payload["converged"]),
            alpha=float(payload["alpha"]),
            sigma_ridge=float(payload["sigma_ridge"]),
            params=dict(payload.get("params", {})),
            diagnostics=tuple(payload.get("diagnostics", ())),
            variable_id=payload.get("variable_id"),
        )

    @classmethod
    def from_json(cls, text: str) -> "LabelModelFit":
        return cls.from_dict(json.loads(text))


def save_fit(fit: LabelModelFit, path: str | Path) -> None:
    Path(path).write_text(fit.to_json() + "\n", encoding="utf-8")


def load_fit(path: str | Path) -> LabelModelFit:
    return LabelModelFit.from_json(Path(path).read_text(encoding="utf-8"))


def _sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-x))


def masked_objective(z: np.ndarray, sigma_inv: np.ndarray, omega: np.ndarray) -> float:
    """|| (Sigma^-1 + z z^T) * Omega ||_F^2."""
    masked = (sigma_inv + np.outer(z, z)) * omega
    return float((masked * masked).sum())


class LabelModel(BaseEstimator):
    """Weights labeling functions from their agreement structure.

    Estimator over vote matrices: fit(L) estimates per-LF weights by the
    masked matrix-completion objective; fit(L, y) adds the quadratic
    human-disagreement penalty for validated rows y (a sequence of
    (row_index, outcome) with outcome 1 for confirmed, 0 for rejected);
    predict_proba(L) maps rows to confidences via the logistic vote score.

    Solver constants are exposed as parameters; the defaults are part of the
    artifact contract (reproducibility beats speed at this scale).
    """

    def __init__(
        self,
        init_scale: float = DEFAULT_INIT_SCALE,
        step: float = DEFAULT_STEP,
        max_iter: int = DEFAULT_MAX_ITER,
        tol: float = DEFAULT_TOL,
        ridge: float = DEFAULT_RIDGE,
        grad_clip: float = DEFAULT_GRAD_CLIP,
        alpha: float = 0.0,
    ):
        self.init_scale = init_scale
        self.step = step
        self.max_iter = max_iter
        self.tol = tol
        self.ridge = ridge
        self.grad_clip = grad_clip
        self.alpha = alpha

    def fit(
        self,
        L: np.ndarray,
        y: Sequence[tuple[int, int]] | None = None,
        omega: np.ndarray | None = None,
    ) -> "LabelModel":
        L = check_lambda(L)
        e, m = L.shape
        if e < 2:
            raise DimensionMismatch("need at least 2 vote rows to estimate covariance")
        if m < 2:
            raise DimensionMismatch("need at least 2 labeling functions")
        omega = check_omega(omega if omega is not None else np.ones((m, m)) - np.eye(m), m)

        validated = list(y or [])
        for row, outcome in validated:
            if not (0 <= row < e):
                raise DimensionMismatch(f"validated row {row} outside matrix with {e} rows")
            if outcome not in (0, 1):
                raise ValidationError("validated outcomes must be 0 or 1", str(outcome))

        Lf = L.astype(float)
        sigma = np.cov(Lf, rowvar=False) + self.ridge * np.eye(m)
        sigma_inv = np.linalg.inv(sigma)

        penalty_active = self.alpha > 0 and validated
        if penalty_active:
            rows_d = Lf[[row for row, _ in validated]]
            y_d = np.array([outcome for _, outcome in validated], dtype=float)

        def objective(z: np.ndarray) -> float:
            value = masked_objective(z, sigma_inv, omega)
            if penalty_active:
                p = _sigmoid(rows_d @ np.maximum(z, 0.0))
                value += self.alpha * float(((p - y_d) ** 2).sum())
            return value

        def gradient(z: np.ndarray) -> np.ndarray:
            g = 4.0 * (((sigma_inv + np.outer(z, z)) * omega) @ z)
            if penalty_active:
                u = rows_d @ np.maximum(z, 0.0)
                p = _sigmoid(u)
                g_pen = rows_d.T @ (2.0 * (p - y_d) * p * (1.0 - p))
                g = g + self.alpha * g_pen * (z > 0.0)
            return g

        zero = np.zeros(m)
        best_z, best_f = zero, objective(zero)
        z = np.full(m, self.init_scale)
        f = objective(z)
        if f < best_f:
            best_z, best_f = z.copy(), f

        iterations = 0
        converged = False
        while iterations < self.max_iter:
            g = gradient(z)
            g_norm = np.max(np.abs(g))
            if g_norm < self.tol:
                converged = True
                break
            if g_norm > self.grad_clip:
                g = g * (self.grad_clip / g_norm)
            z = z - self.step * g
            iterations += 1
            f = objective(z)
            if f < best_f:
                best_z, best_f = z.copy(), f

        diagnostics = []
        if not converged:
            diagnostics.append(f"not converged after {self.max_iter} iterations")

        if penalty_active:
            sign = 1  # feedback anchors the orientation
        else:
            sign = 1 if best_z.sum() >= 0 else -1
        weights = np.maximum(sign * best_z, 0.0)

        # Constant vote columns carry no covariance signal: weight them zero.
        degenerate = np.ptp(L, axis=0) == 0
        for col in np.flatnonzero(degenerate):
            weights[col] = 0.0
            diagnostics.append(f"degenerate input: column {col} is constant; weight forced to 0")

        self.z_hat_ = best_z
        self.sign_ = sign
        self.weights_ = weights
        self.objective_value_ = best_f
        self.iterations_ = iterations
        self.converged_ = converged
        self.diagnostics_ = tuple(diagnostics)
        self.omega_ = omega
        self.n_features_in_ = m
        return self

    def predict_proba(self, L: np.ndarray) -> np.ndarray:
        """Confidence in (0, 1) per vote row; 0.5 under total abstention."""
        if not hasattr(self, "weights_"):
            raise ValidationError("model is not fitted")
        L = np.atleast_2d(check_lambda(np.asarray(L)))
        if L.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"rows have {L.shape[1]} votes, model has {self.n_features_in_} LFs"
            )
        return _sigmoid(L.astype(float) @ self.weights_)

    def to_result(
        self, lf_ids: Sequence[str], variable_id: str | None = None
    ) -> LabelModelFit:
        if len(lf_ids) != self.n_features_in_:
            raise DimensionMismatch("lf_ids length does not match fitted model")
        return LabelModelFit(
            lf_ids=tuple(lf_ids),
            z_hat=tuple(float(v) for v in self.z_hat_),
            sign=int(self.sign_),
            weights=tuple(float(v) for v in self.weights_),
            objective_value=float(self.objective_value_),
            iterations=int(self.iterations_),
            converged=bool(self.converged_),
            alpha=float(self.alpha),
            sigma_ridge=float(self.ridge),
            params={
                "init_scale": self.init_scale,
                "step": self.step,
                "max_iter": self.max_iter,
                "tol": self.tol,
                "grad_clip": self.grad_clip,
            },
            diagnostics=self.diagnostics_,
            variable_id=variable_id,
        )


def fit(
    lam: LambdaMatrix,
    omega: np.ndarray | None = None,
    variable_id: str | None = None,
    **solver_params,
) -> LabelModelFit:
    """Weight the LFs of one variable from its vote matrix."""
    model = LabelModel(**solver_params).fit(lam.entries, omega=omega)
    return model.to_result(lam.lf_ids, variable_id=variable_id)


def fit_with_penalty(
    lam: LambdaMatrix,
    validated: Sequence[tuple[int, int]],
    alpha: float,
    omega: np.ndarray | None = None,
    variable_id: str | None = None,
    **solver_params,
) -> LabelModelFit:
    """Refit with the human-disagreement penalty over validated rows.

    validated holds (row index, outcome) pairs, outcome 1 when the human
    confirmed the group's value and 0 when they rejected it. alpha = 0
    reduces exactly to fit().
    """
    model = LabelModel(alpha=alpha, **solver_params).fit(lam.entries, y=validated, omega=omega)
    return model.to_result(lam.lf_ids, variable_id=variable_id)


def predict_proba(fit_result: LabelModelFit, row: Sequence[float]) -> float:
    """Probabilistic confidence for one vote row under a fit."""
    row = np.asarray(row, dtype=float)
    if row.shape != (fit_result.m,):
        raise DimensionMismatch(f"row has shape {row.shape}, expected ({fit_result.m},)")
    return float(_sigmoid(float(np.dot(np.asarray(fit_result.weights), row))))


def disagreement_term(
    fit_result: LabelModelFit, lam: LambdaMatrix, validated: Sequence[tuple[int, int]]
) -> float:
    """Sum of squared (confidence - human outcome) over validated rows."""
    total = 0.0
    for row, outcome in validated:
        total += (predict_proba(fit_result, lam.entries[row]) - outcome) ** 2
    return total


# ---------------------------------------------------------------------------
# Ranking and baselines


def score_groups(
    groups: Sequence[ExplanationGroup],
    lam: LambdaMatrix,
    fit_result: LabelModelFit | None,
) -> None:
    """Assign group_confidence in place from a fit (0.5 everywhere if none)."""
    index = lam.row_index
    for g in groups:
        if fit_result is None:
            g.group_confidence = 0.5
        else:
            g.group_confidence = predict_proba(fit_result, lam.entries[index[g.group_id]])


def rank_explanations(groups: Sequence[ExplanationGroup]) -> list[ExplanationGroup]:
    """Order groups of one (document, variable) for presentation.

    Descending confidence; ties broken by higher agreement, then earlier
    merged span, then group id. Total and deterministic.
    """
    keys = {(g.doc_id, g.variable_id) for g in groups}
    if len(keys) > 1:
        raise ValidationError(
            "rank_explanations expects groups of one (document, variable)",
            ",".join(sorted(map(str, keys))),
        )
    return sorted(
        groups,
        key=lambda g: (
            -g.group_confidence,
            -g.agreement,
            g.merged_span.start,
            g.merged_span.end,
            g.group_id,
        ),
    )


def majority_rule(
    groups: Sequence[ExplanationGroup], negative_value: str | None = None
) -> str:
    """Baseline prediction: the value with the greatest total distinct-LF
    agreement; ties go to the value whose group starts earliest. With no
    groups at all, the negative value if defined, else the abstain marker.
    """
    if not groups:
        return negative_value if negative_value is not None else ABSTAIN
    totals: dict[str, int] = {}
    earliest: dict[str, int] = {}
    for g in groups:
        totals[g.value] = totals.get(g.value, 0) + g.agreement
        start = g.merged_span.start
        earliest[g.value] = min(earliest.get(g.value, start), start)
    best = max(totals.values())
    tied = [value for value, total in totals.items() if total == best]
    tied.sort(key=lambda value: (earliest[value], value))
    return tied[0]
