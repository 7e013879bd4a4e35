from pathlib import Path

import pytest

from elicit.corpus import Corpus, Document, Span
from elicit.labeling import Candidate, ExplanationGroup, merge_candidates
from elicit.schema import LfConfig, ProjectConfig, VariableSchema

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def project_path() -> Path:
    return FIXTURES / "project" / "project.yaml"


def make_variable(
    variable_id="victim_sex",
    values=("Male", "Female"),
    negative=None,
    questions=("What sex was the victim?",),
    keywords=None,
) -> VariableSchema:
    return VariableSchema(
        variable_id=variable_id,
        display_name=variable_id.replace("_", " ").title(),
        label_values=tuple(values),
        negative_value=negative,
        questions=tuple(questions),
        keywords=keywords or {},
    )


def make_config(variables=None, lfs=None, **overrides) -> ProjectConfig:
    if variables is None:
        variables = (
            make_variable(keywords={"Male": ("man", "male", "boy"),
                                    "Female": ("woman", "female", "girl")}),
        )
    if lfs is None:
        lfs = (
            LfConfig(lf_id="kw", kind="keyword"),
            LfConfig(lf_id="sim", kind="similarity", threshold=0.3),
        )
    return ProjectConfig(variables=tuple(variables), lf_configs=tuple(lfs), **overrides)


def make_candidate(
    lf_id="lf-a",
    variable_id="victim_sex",
    value="Male",
    confidence=0.9,
    doc_id="doc-1",
    start=0,
    end=10,
    raw_score=None,
    uncalibrated=False,
) -> Candidate:
    return Candidate(
        lf_id=lf_id,
        variable_id=variable_id,
        value=value,
        confidence=confidence,
        span=Span(doc_id, start, end),
        raw_score=confidence if raw_score is None else raw_score,
        uncalibrated=uncalibrated,
    )


def make_group(candidates, overlap=0.5) -> ExplanationGroup:
    groups = merge_candidates(candidates, overlap)
    assert len(groups) == 1, "fixture candidates did not merge into one group"
    return groups[0]


@pytest.fixture
def small_corpus() -> Corpus:
    return Corpus(
        [
            Document(
                doc_id="doc-1",
                text="The man was found at home. He had previous convictions for theft.",
            ),
            Document(
                doc_id="doc-2",
                text="The victim was a woman. She was described as vulnerable by the judge.",
            ),
        ]
    )
