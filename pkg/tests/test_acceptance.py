"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one [PASS] line per
criterion. The suite touches only the core package (no UI, no model server)
and is budgeted to finish well under two minutes.
"""

import dataclasses
import json
import time

import httpx
import numpy as np
import pytest
from scipy.stats import spearmanr

from elicit.corpus import ChatMessage, Corpus, Document, segment_chat_instances
from elicit.evaluation import (
    automated_predictions,
    deferral_curve,
    simulate_annotator,
    weighted_precision_recall,
)
from elicit.labeling import merge_candidates, run_labeling_functions, select_top_k
from elicit.labelmodel import (
    LambdaMatrix,
    build_omega,
    disagreement_term,
    fit,
    fit_with_penalty,
    masked_objective,
    predict_proba,
)
from elicit.pipeline import build_groups, fit_all, run_project, score_all
from elicit.schema import DeferralPolicy, LfConfig
from elicit.session import CONFIRM, Session, ValidationRecord, read_events, replay

from conftest import make_candidate, make_config, make_variable
from test_evaluation import two_value_groups


def _pass(name: str):
    print(f"[PASS] {name}")


def synthetic_votes(accuracies, rows, seed):
    rng = np.random.default_rng(seed)
    accuracies = np.asarray(accuracies)
    y = rng.choice([-1, 1], size=rows)
    return np.where(
        rng.random((rows, len(accuracies))) < accuracies, y[:, None], -y[:, None]
    ).astype(np.int8)


def as_lambda(entries):
    entries = np.asarray(entries, dtype=np.int8)
    return LambdaMatrix(
        entries=entries,
        group_ids=tuple(f"g{i}" for i in range(entries.shape[0])),
        lf_ids=tuple(f"lf{i}" for i in range(entries.shape[1])),
    )


def test_solver_vs_grid_oracle():
    """Fit objective within 1e-2 of brute-force grid search; < 10 s."""
    t0 = time.time()
    lam = as_lambda(synthetic_votes([0.9, 0.7, 0.6], 200, seed=7))
    result = fit(lam)

    # independent oracle: exhaustive grid over z in [-2, 2]^3, step 0.05,
    # with its own objective implementation
    Lf = lam.entries.astype(float)
    sigma_inv = np.linalg.inv(np.cov(Lf, rowvar=False) + 1e-6 * np.eye(3))
    grid = np.arange(-2.0, 2.0 + 1e-9, 0.05)
    Z1, Z2, Z3 = np.meshgrid(grid, grid, grid, indexing="ij")
    oracle = 2.0 * (
        (sigma_inv[0, 1] + Z1 * Z2) ** 2
        + (sigma_inv[0, 2] + Z1 * Z3) ** 2
        + (sigma_inv[1, 2] + Z2 * Z3) ** 2
    )
    grid_best = float(oracle.min())

    elapsed = time.time() - t0
    assert abs(result.objective_value - grid_best) <= 1e-2
    assert elapsed < 10.0
    _pass(f"solver-vs-oracle (|diff|={abs(result.objective_value - grid_best):.2e}, "
          f"{elapsed:.1f}s)")


def test_accuracy_recovery():
    """Spearman(weights, accuracies) >= 0.9 on >= 9 of 10 seeds; < 30 s."""
    accuracies = [0.9, 0.8, 0.7, 0.6, 0.55]
    t0 = time.time()
    passes = 0
    for seed in range(10):
        lam = as_lambda(synthetic_votes(accuracies, 1000, seed=seed))
        result = fit(lam)
        rho = spearmanr(result.weights, accuracies).statistic
        # for five items one adjacent swap gives exactly 0.9; tolerate float repr
        passes += rho >= 0.9 - 1e-12
    elapsed = time.time() - t0
    assert passes >= 9
    assert elapsed < 30.0
    _pass(f"accuracy-recovery ({passes}/10 seeds, {elapsed:.1f}s)")


@pytest.fixture(scope="module")
def contradiction_fixture():
    """One LF nominates 50 groups against the crowd; humans reject them."""
    base = synthetic_votes([0.85, 0.8, 0.7, 0.65], 300, seed=3)
    contradiction = np.tile([1, -1, -1, -1], (50, 1)).astype(np.int8)
    lam = as_lambda(np.vstack([base, contradiction]))
    validated = [(300 + i, 0) for i in range(50)]
    return lam, validated, fit(lam), fit_with_penalty(lam, validated, alpha=100.0)


class TestPenaltyBehaviour:
    """Human-disagreement penalty: improves agreement, demotes the
    contradicted LF, and vanishes exactly at alpha=0."""

    @pytest.fixture
    def fixture(self, contradiction_fixture):
        return contradiction_fixture

    def test_disagreement_term_not_increased(self, fixture):
        lam, validated, before, after = fixture
        d0 = disagreement_term(before, lam, validated)
        d100 = disagreement_term(after, lam, validated)
        assert d100 <= d0
        _pass(f"penalty-disagreement ({d0:.3f} -> {d100:.3f})")

    def test_contradicted_weight_strictly_decreases(self, fixture):
        _, _, before, after = fixture
        assert after.weights[0] < before.weights[0]
        _pass(f"penalty-weight-decrease ({before.weights[0]:.3f} -> {after.weights[0]:.3f})")

    def test_alpha_zero_bit_identical(self, fixture):
        lam, validated, before, _ = fixture
        again = fit_with_penalty(lam, validated, alpha=0.0)
        assert again.z_hat == before.z_hat
        assert again.weights == before.weights
        assert again.objective_value == before.objective_value
        assert again.iterations == before.iterations
        _pass("penalty-alpha-zero-identity")


RAPPORT = make_variable(
    variable_id="rapport",
    values=("Rapport", "No Rapport"),
    negative="No Rapport",
    questions=("Is the offender building a special bond?",),
)

DOC_TEXT = "wrong one !! the bond is growing here . another wrong span follows now ."


def planted_transport(rank3_docs: set[str]) -> httpx.MockTransport:
    """Stub model server: a global ranking per document with the correct
    'Rapport' span planted at rank 2, or rank 3 for the given docs, behind a
    top-scored wrong-value span. Responses honour max_candidates, like a
    retrieval-limited model."""

    def handler(request):
        body = json.loads(request.content)
        correct_score = 0.70 if body["doc_id"] in rank3_docs else 0.80
        ranking = sorted(
            [
                {"start": 0, "end": 9, "value": "No Rapport", "score": 0.90},
                {"start": 12, "end": 36, "value": "Rapport", "score": correct_score},
                {"start": 39, "end": 63, "value": "No Rapport", "score": 0.75},
            ],
            key=lambda e: -e["score"],
        )
        return httpx.Response(200, json={"candidates": ranking[: body["max_candidates"]]})

    return httpx.MockTransport(handler)


def run_topk_pipeline(k: int, rank3_docs: set[str], docs: list[Document]):
    config = make_config(
        variables=(RAPPORT,),
        lfs=(LfConfig(lf_id="qa", kind="external", endpoint="http://stub/score"),),
        k=k,
    )
    corpus = Corpus(docs)
    candidates = run_labeling_functions(config, corpus, transport=planted_transport(rank3_docs))
    groups = build_groups(config, candidates)
    by_item = {}
    for g in groups:
        by_item.setdefault((g.doc_id, g.variable_id), []).append(g)
    items = [((d.doc_id, "rapport"), by_item.get((d.doc_id, "rapport"), [])) for d in docs]
    gold = {(d.doc_id, "rapport"): "Rapport" for d in docs}
    _, finals = simulate_annotator(items, gold, config, p=1.0, seed=0)
    return weighted_precision_recall(finals, gold).recall


def test_topk_recall_monotonicity():
    """Oracle-annotator recall at k=3 never below k=1; strict on the fixture
    with correct evidence planted at nomination ranks 2-3."""
    docs = [Document(f"chat-{i:02d}", DOC_TEXT) for i in range(12)]
    for seed in range(5):
        rng = np.random.default_rng(seed)
        rank3 = {d.doc_id for d in docs if rng.random() < 0.5}
        # keep at least one doc of each planting so the gap is observable
        rank3.add("chat-00")
        rank3.discard("chat-01")
        recall_1 = run_topk_pipeline(1, rank3, docs)
        recall_3 = run_topk_pipeline(3, rank3, docs)
        assert recall_3 >= recall_1
        if seed == 0:
            assert recall_3 > recall_1
            first_gap = (recall_1, recall_3)
    _pass(f"topk-monotonicity (recall {first_gap[0]:.2f} -> {first_gap[1]:.2f} at k=1 -> 3)")


class TestDeferral:
    """Deferral endpoints reproduce the pure pipelines exactly; the curve is
    non-decreasing on the monotone fixture."""

    def fixture(self, n=10):
        items, gold = [], {}
        for i in range(n):
            key = (f"d{i}", "victim_sex")
            correct_first = i >= n // 2
            groups = two_value_groups(f"d{i}", correct_first)
            for g in groups:
                g.group_confidence *= 1.0 if correct_first else 0.5
            items.append((key, groups))
            gold[key] = "Male"
        config = make_config(variables=(make_variable(questions=("q?",)),))
        return items, gold, config

    def test_budget_zero_equals_automated(self):
        items, gold, config = self.fixture()
        rows = deferral_curve(items, gold, config, budgets=[0.0], p=1.0, seed=0)
        auto = weighted_precision_recall(automated_predictions(items, config), gold)
        assert rows[0]["precision"] == auto.precision
        assert rows[0]["recall"] == auto.recall
        _pass("deferral-endpoint-automated")

    def test_budget_one_equals_oracle_ceiling(self):
        items, gold, config = self.fixture()
        rows = deferral_curve(items, gold, config, budgets=[1.0], p=1.0, seed=0)
        _, finals = simulate_annotator(items, gold, config, p=1.0, seed=0)
        ceiling = weighted_precision_recall(finals, gold)
        assert rows[0]["precision"] == ceiling.precision
        assert rows[0]["recall"] == ceiling.recall
        _pass("deferral-endpoint-oracle")

    def test_curve_non_decreasing(self):
        items, gold, config = self.fixture()
        budgets = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
        rows = deferral_curve(items, gold, config, budgets=budgets, p=1.0, seed=0)
        recalls = [r["recall"] for r in rows]
        precisions = [r["precision"] for r in rows]
        assert recalls == sorted(recalls)
        assert precisions == sorted(precisions)
        _pass(f"deferral-shape (recall {recalls[0]:.2f} -> {recalls[-1]:.2f})")


def test_weighted_metric_matches_enumeration():
    """Support-weighted metrics equal exhaustive counting to 1e-12 on a
    12-instance fixture (two classes, supports 3 and 1, one confusion)."""
    gold, predictions = {}, {}
    # variable v1: supports 3 (A) and 1 (B), one confusion on d3
    for doc, g, p in [("d1", "A", "A"), ("d2", "A", "A"), ("d3", "A", "B"), ("d4", "B", "B")]:
        gold[(doc, "v1")] = g
        predictions[(doc, "v1")] = p
    # v2: clean sweep with an abstention
    for doc, g, p in [("d1", "X", "X"), ("d2", "X", None), ("d3", "Y", "Y"), ("d4", "Y", "Y")]:
        gold[(doc, "v2")] = g
        predictions[(doc, "v2")] = p
    # v3: inverted pair plus two hits
    for doc, g, p in [("d1", "P", "Q"), ("d2", "Q", "P"), ("d3", "P", "P"), ("d4", "Q", "Q")]:
        gold[(doc, "v3")] = g
        predictions[(doc, "v3")] = p
    assert len(gold) == 12
    report = weighted_precision_recall(predictions, gold)

    # oracle: enumerate TP/FP/FN per class from scratch
    for variable in ("v1", "v2", "v3"):
        keys = [k for k in gold if k[1] == variable]
        values = sorted({gold[k] for k in keys})
        expected_p = expected_r = 0.0
        total = len(keys)
        for value in values:
            tp = sum(1 for k in keys if gold[k] == value and predictions[k] == value)
            fp = sum(
                1
                for k in keys
                if gold[k] != value and predictions[k] is not None and predictions[k] == value
            )
            fn = sum(1 for k in keys if gold[k] == value and predictions[k] != value)
            support = tp + fn
            expected_p += (support / total) * (tp / (tp + fp) if tp + fp else 0.0)
            expected_r += (support / total) * (tp / support if support else 0.0)
        assert abs(report.variables[variable].precision - expected_p) <= 1e-12
        assert abs(report.variables[variable].recall - expected_r) <= 1e-12
    _pass("metric-oracle (3 variables x 4 instances vs enumeration)")


def test_segmentation_boundary():
    """Gaps of 3599/3600/3601 s: only the strictly-over-an-hour gap splits."""
    messages = [
        ChatMessage("offender", t, f"m{t}") for t in (0, 3599, 7199, 10800)
    ]
    docs = segment_chat_instances(messages)
    assert [int(d.metadata["message_count"]) for d in docs] == [3, 1]
    _pass("segmentation-boundary (split only after the 3601 s gap)")


def test_merge_fuzz_suite():
    """1000 randomised candidate sets: partition, idempotence, agreement cap,
    and merged-span containment all hold."""
    lf_roster = ["lf-a", "lf-b", "lf-c", "lf-d", "lf-e"]
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        n = int(rng.integers(1, 14))
        candidates = []
        for _ in range(n):
            start = int(rng.integers(0, 90))
            width = int(rng.integers(1, 40))
            candidates.append(
                make_candidate(
                    lf_id=lf_roster[int(rng.integers(0, len(lf_roster)))],
                    value=("Male", "Female")[int(rng.integers(0, 2))],
                    confidence=float(rng.random()),
                    start=start,
                    end=start + width,
                )
            )
        threshold = float(rng.uniform(0.05, 1.0))
        groups = merge_candidates(candidates, threshold)

        members = [m for g in groups for m in g.members]
        assert len(members) == len(candidates)
        assert {id(m) for m in members} == {id(c) for c in candidates}
        for g in groups:
            assert 1 <= g.agreement <= len(lf_roster)
            for m in g.members:
                assert g.merged_span.start <= m.span.start
                assert m.span.end <= g.merged_span.end
            again = merge_candidates(list(g.members), threshold)
            assert len(again) == 1 and again[0].merged_span == g.merged_span
    _pass("merge-fuzz (1000 randomised candidate sets)")


def test_reproducibility_end_to_end(tmp_path):
    """Replaying the event log reconstructs the session state; exports are
    byte-identical; the full pipeline is deterministic for a fixed seed."""
    config = make_config(
        variables=(
            make_variable(keywords={"Male": ("man",), "Female": ("woman",)}),
        ),
        k=2,
        seed=123,
    )
    corpus = Corpus(
        [
            Document("doc-0", "The man was found. A woman appeared. The man left."),
            Document("doc-1", "A woman spoke first. Then the man answered."),
            Document("doc-2", "The man and the man again. No woman mentioned."),
        ]
    )

    # identical pipelines from the same seed and inputs
    cands_a, groups_a, fits_a = run_project(config, corpus)
    cands_b, groups_b, fits_b = run_project(config, corpus)
    assert cands_a == cands_b
    assert [dataclasses.asdict(g) for g in groups_a] == [dataclasses.asdict(g) for g in groups_b]
    assert fits_a == fits_b

    log_path = tmp_path / "events.jsonl"
    session = Session(config, corpus, groups_a, log_path=log_path, fitted=bool(fits_a))
    session.apply_deferral(DeferralPolicy(mode="budget", q=0.5))
    counter = 0
    while (view := session.next_item("ann-1")) is not None:
        counter += 1
        session.submit_validation(
            ValidationRecord(
                record_id=f"r{counter}",
                doc_id=view.doc_id,
                variable_id=view.variable_id,
                group_id=view.groups[0].group_id,
                decision=CONFIRM,
                annotator_id="ann-1",
                wall_time_ms=1000,
                timestamp=float(counter),
            )
        )
    session.close()

    rebuilt = replay(config, corpus, groups_a, read_events(log_path), fitted=bool(fits_a))
    assert rebuilt.state == session.state

    assert session.export_dataset("csv") == rebuilt.export_dataset("csv")
    assert session.export_dataset("jsonl") == rebuilt.export_dataset("jsonl")
    assert session.export_provenance() == rebuilt.export_provenance()
    assert session.export_dataset("csv") == session.export_dataset("csv")
    _pass("reproducibility (replayed state equal, exports byte-identical)")
