"""Human-validated information extraction over long documents.

An ensemble of labeling functions nominates (value, confidence, explanation)
candidates; overlapping same-value explanations are merged into groups; a
matrix-completion label model weights the labeling functions from their
agreement structure and ranks the groups; a validation session routes items
to a human (optionally only the low-confidence ones) and exports a
reproducible tabular dataset.
"""

from .calibration import CalibrationMap, HistogramCalibrator, apply_calibration, calibrate
from .corpus import (
    ChatMessage,
    Corpus,
    Document,
    Span,
    context_window,
    ingest_documents,
    segment_chat_instances,
)
from .errors import ElicitError
from .labeling import (
    Candidate,
    ExplanationGroup,
    call_external_lf,
    merge_candidates,
    run_keyword_lf,
    run_labeling_functions,
    run_similarity_lf,
    select_top_k,
)
from .labelmodel import (
    ABSTAIN,
    LabelModel,
    LabelModelFit,
    LambdaMatrix,
    build_lambda,
    build_omega,
    fit,
    fit_with_penalty,
    majority_rule,
    predict_proba,
    rank_explanations,
)
from .schema import (
    DeferralPolicy,
    LfConfig,
    ProjectConfig,
    VariableSchema,
    load_project,
    save_project,
    schema_summary,
)
from .session import Session, SessionState, ValidationRecord, plan_deferral, replay, resume

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN",
    "CalibrationMap",
    "Candidate",
    "ChatMessage",
    "Corpus",
    "DeferralPolicy",
    "Document",
    "ElicitError",
    "ExplanationGroup",
    "HistogramCalibrator",
    "LabelModel",
    "LabelModelFit",
    "LambdaMatrix",
    "LfConfig",
    "ProjectConfig",
    "Session",
    "SessionState",
    "Span",
    "ValidationRecord",
    "VariableSchema",
    "apply_calibration",
    "build_lambda",
    "build_omega",
    "calibrate",
    "call_external_lf",
    "context_window",
    "fit",
    "fit_with_penalty",
    "ingest_documents",
    "load_project",
    "majority_rule",
    "merge_candidates",
    "plan_deferral",
    "predict_proba",
    "rank_explanations",
    "replay",
    "resume",
    "run_keyword_lf",
    "run_labeling_functions",
    "run_similarity_lf",
    "save_project",
    "schema_summary",
    "segment_chat_instances",
    "select_top_k",
    "__version__",
]
