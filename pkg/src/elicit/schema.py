"""Project configuration: extraction variables, their label values, questions,
keywords, and run parameters.

A project is one YAML file referencing three schema documents:

    project.yaml        - run parameters and the labeling-function roster
    categories.yaml     - variable -> {display_name, values, negative_value}
    questions.yaml      - variable -> list of question texts
    keywords.yaml       - variable -> {value -> list of keyword strings}

The canonical fixture under tests/fixtures/project/ documents the layout.
Unknown keys are errors, not warnings: configs must be exactly reproducible.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ParseError, ValidationError

DEFAULT_K = 1
DEFAULT_MERGE_OVERLAP = 0.5
DEFAULT_ALPHA = 100.0
DEFAULT_SEED = 0

LF_KINDS = ("keyword", "regex", "similarity", "external")


@dataclass(frozen=True)
class VariableSchema:
    """One extraction target: its label values, questions, and keywords."""

    variable_id: str
    display_name: str
    label_values: tuple[str, ...]
    negative_value: str | None = None
    questions: tuple[str, ...] = ()
    keywords: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.label_values:
            raise ValidationError("variable has no label values", self.variable_id)
        if len(set(self.label_values)) != len(self.label_values):
            raise ValidationError("duplicate label values", self.variable_id)
        if self.negative_value is not None and self.negative_value not in self.label_values:
            raise ValidationError(
                f"negative_value of {self.variable_id!r} not among its label values",
                self.negative_value,
            )
        for value in self.keywords:
            if value not in self.label_values:
                raise ValidationError(
                    f"keyword map of {self.variable_id!r} references unknown value",
                    value,
                )


@dataclass(frozen=True)
class DeferralPolicy:
    """Which predictions are routed to the human: a budget fraction, a
    confidence threshold, or neither (everything is reviewed)."""

    mode: str  # "budget" | "threshold" | "none"
    q: float | None = None
    tau: float | None = None

    def __post_init__(self):
        if self.mode == "budget":
            if self.q is None or not (0.0 <= self.q <= 1.0):
                raise ValidationError("budget deferral requires q in [0, 1]", "q")
            if self.tau is not None:
                raise ValidationError("budget deferral does not take tau", "tau")
        elif self.mode == "threshold":
            if self.tau is None or not (0.0 <= self.tau <= 1.0):
                raise ValidationError("threshold deferral requires tau in [0, 1]", "tau")
            if self.q is not None:
                raise ValidationError("threshold deferral does not take q", "q")
        elif self.mode == "none":
            if self.q is not None or self.tau is not None:
                raise ValidationError("deferral mode 'none' takes no parameters", "mode")
        else:
            raise ValidationError("unknown deferral mode", self.mode)


@dataclass(frozen=True)
class LfConfig:
    """Declaration of one labeling function in the ensemble."""

    lf_id: str
    kind: str
    # similarity parameters
    threshold: float | None = None
    # external parameters
    endpoint: str | None = None
    min_confidence: float | None = None
    # regex parameters: value -> pattern
    patterns: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LF_KINDS:
            raise ValidationError("unknown labeling-function kind", self.kind)
        if self.kind == "similarity":
            t = self.threshold
            if t is None or not (0.0 < t < 1.0):
                raise ValidationError(
                    f"similarity LF {self.lf_id!r} requires threshold in (0, 1)",
                    "threshold",
                )
        if self.kind == "external" and not self.endpoint:
            raise ValidationError(f"external LF {self.lf_id!r} requires endpoint", "endpoint")
        if self.kind == "regex" and not self.patterns:
            raise ValidationError(f"regex LF {self.lf_id!r} requires patterns", "patterns")


@dataclass(frozen=True)
class ProjectConfig:
    variables: tuple[VariableSchema, ...]
    lf_configs: tuple[LfConfig, ...]
    k: int = DEFAULT_K
    merge_overlap_threshold: float = DEFAULT_MERGE_OVERLAP
    alpha: float = DEFAULT_ALPHA
    seed: int = DEFAULT_SEED
    deferral: DeferralPolicy | None = None
    dependency_pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.variables:
            raise ValidationError("no variables")
        if self.k < 1:
            raise ValidationError("k must be >= 1", "k")
        if not (0.0 < self.merge_overlap_threshold <= 1.0):
            raise ValidationError(
                "merge_overlap_threshold must be in (0, 1]", "merge_overlap_threshold"
            )
        if self.alpha < 0:
            raise ValidationError("alpha must be non-negative", "alpha")
        ids = [v.variable_id for v in self.variables]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ValidationError("duplicate variable id", dup)
        lf_ids = [lf.lf_id for lf in self.lf_configs]
        if len(set(lf_ids)) != len(lf_ids):
            dup = next(i for i in lf_ids if lf_ids.count(i) > 1)
            raise ValidationError("duplicate labeling-function id", dup)
        for a, b in self.dependency_pairs:
            for lf_id in (a, b):
                if lf_id not in lf_ids:
                    raise ValidationError("dependency pair references unknown LF", lf_id)
        has_external = any(lf.kind == "external" for lf in self.lf_configs)
        for v in self.variables:
            if not v.questions and not v.keywords and not has_external:
                raise ValidationError(
                    "variable has neither questions nor keywords and no external LF "
                    "is configured",
                    v.variable_id,
                )

    @property
    def lf_ids(self) -> tuple[str, ...]:
        return tuple(lf.lf_id for lf in self.lf_configs)

    def variable(self, variable_id: str) -> VariableSchema:
        for v in self.variables:
            if v.variable_id == variable_id:
                return v
        raise ValidationError("unknown variable", variable_id)


def _load_yaml(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path=str(path)) from exc
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ParseError(f"malformed YAML: {exc}", path=str(path), line=line) from exc


def _require_mapping(obj, what: str, path: Path) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ParseError(f"{what} must be a mapping", path=str(path))
    return obj


def _check_keys(mapping: dict, allowed: set[str], what: str):
    for key in mapping:
        if key not in allowed:
            raise ValidationError(f"unknown key in {what}", str(key))


def _string_list(obj, what: str) -> tuple[str, ...]:
    if obj is None:
        return ()
    if not isinstance(obj, list) or not all(isinstance(x, str) for x in obj):
        raise ValidationError(f"{what} must be a list of strings", what)
    return tuple(obj)


def load_project(path: str | Path) -> ProjectConfig:
    """Load and fully validate a project file and its three schema documents.

    Raises ParseError for malformed files (with line info where available)
    and ValidationError for duplicate ids or dangling references.
    """
    path = Path(path)
    raw = _require_mapping(_load_yaml(path), "project file", path)
    _check_keys(
        raw,
        {
            "version",
            "schemas",
            "k",
            "merge_overlap_threshold",
            "alpha",
            "seed",
            "deferral",
            "labeling_functions",
            "dependency_pairs",
        },
        "project file",
    )
    version = raw.get("version", 1)
    if version != 1:
        raise ValidationError("unsupported project version", str(version))

    schemas = _require_mapping(raw.get("schemas"), "schemas", path)
    _check_keys(schemas, {"categories", "questions", "keywords"}, "schemas")
    for required in ("categories", "questions", "keywords"):
        if required not in schemas:
            raise ValidationError("missing schema document", required)
    base = path.parent
    categories = _require_mapping(
        _load_yaml(base / schemas["categories"]), "category schema", base / schemas["categories"]
    )
    questions = _require_mapping(
        _load_yaml(base / schemas["questions"]), "question schema", base / schemas["questions"]
    )
    keywords = _require_mapping(
        _load_yaml(base / schemas["keywords"]), "keyword schema", base / schemas["keywords"]
    )

    if not categories:
        raise ValidationError("no variables")

    variables = []
    for var_id, spec in categories.items():
        spec = _require_mapping(spec, f"category entry {var_id!r}", base / schemas["categories"])
        _check_keys(spec, {"display_name", "values", "negative_value"}, f"variable {var_id!r}")
        values = _string_list(spec.get("values"), f"values of {var_id!r}")
        var_questions = _string_list(questions.get(var_id), f"questions of {var_id!r}")
        kw_map = {}
        raw_kw = keywords.get(var_id)
        if raw_kw is not None:
            raw_kw = _require_mapping(raw_kw, f"keyword entry {var_id!r}", base / schemas["keywords"])
            for value, kws in raw_kw.items():
                kw_map[value] = _string_list(kws, f"keywords of {var_id!r}/{value!r}")
        variables.append(
            VariableSchema(
                variable_id=str(var_id),
                display_name=str(spec.get("display_name", var_id)),
                label_values=values,
                negative_value=spec.get("negative_value"),
                questions=var_questions,
                keywords=kw_map,
            )
        )

    known = {v.variable_id for v in variables}
    for doc_name, doc in (("question schema", questions), ("keyword schema", keywords)):
        for var_id in doc:
            if str(var_id) not in known:
                raise ValidationError(f"{doc_name} references unknown variable", str(var_id))

    lf_configs = []
    for i, entry in enumerate(raw.get("labeling_functions") or []):
        entry = _require_mapping(entry, f"labeling function #{i}", path)
        _check_keys(
            entry,
            {"id", "kind", "threshold", "endpoint", "min_confidence", "patterns"},
            f"labeling function #{i}",
        )
        if "id" not in entry or "kind" not in entry:
            raise ValidationError("labeling function requires id and kind", f"#{i}")
        lf_configs.append(
            LfConfig(
                lf_id=str(entry["id"]),
                kind=str(entry["kind"]),
                threshold=entry.get("threshold"),
                endpoint=entry.get("endpoint"),
                min_confidence=entry.get("min_confidence"),
                patterns=dict(entry.get("patterns") or {}),
            )
        )
    if not lf_configs:
        raise ValidationError("no labeling functions declared", "labeling_functions")

    deferral = None
    raw_deferral = raw.get("deferral")
    if raw_deferral is not None:
        raw_deferral = _require_mapping(raw_deferral, "deferral", path)
        _check_keys(raw_deferral, {"mode", "q", "tau"}, "deferral")
        deferral = DeferralPolicy(
            mode=str(raw_deferral.get("mode", "none")),
            q=raw_deferral.get("q"),
            tau=raw_deferral.get("tau"),
        )

    pairs = []
    for pair in raw.get("dependency_pairs") or []:
        if not isinstance(pair, list) or len(pair) != 2:
            raise ValidationError("dependency_pairs entries must be [lf_a, lf_b]", str(pair))
        pairs.append((str(pair[0]), str(pair[1])))

    return ProjectConfig(
        variables=tuple(variables),
        lf_configs=tuple(lf_configs),
        k=int(raw.get("k", DEFAULT_K)),
        merge_overlap_threshold=float(raw.get("merge_overlap_threshold", DEFAULT_MERGE_OVERLAP)),
        alpha=float(raw.get("alpha", DEFAULT_ALPHA)),
        seed=int(raw.get("seed", DEFAULT_SEED)),
        deferral=deferral,
        dependency_pairs=tuple(pairs),
    )


def save_project(config: ProjectConfig, directory: str | Path) -> Path:
    """Write a config back to the four-file YAML layout; returns the project path.

    load_project(save_project(c, d)) is structurally equal to c.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    categories = {}
    questions = {}
    keywords = {}
    for v in config.variables:
        entry = {"display_name": v.display_name, "values": list(v.label_values)}
        if v.negative_value is not None:
            entry["negative_value"] = v.negative_value
        categories[v.variable_id] = entry
        if v.questions:
            questions[v.variable_id] = list(v.questions)
        if v.keywords:
            keywords[v.variable_id] = {value: list(kws) for value, kws in v.keywords.items()}

    project = {
        "version": 1,
        "schemas": {
            "categories": "categories.yaml",
            "questions": "questions.yaml",
            "keywords": "keywords.yaml",
        },
        "k": config.k,
        "merge_overlap_threshold": config.merge_overlap_threshold,
        "alpha": config.alpha,
        "seed": config.seed,
        "labeling_functions": [_lf_to_yaml(lf) for lf in config.lf_configs],
    }
    if config.deferral is not None:
        entry = {"mode": config.deferral.mode}
        if config.deferral.q is not None:
            entry["q"] = config.deferral.q
        if config.deferral.tau is not None:
            entry["tau"] = config.deferral.tau
        project["deferral"] = entry
    if config.dependency_pairs:
        project["dependency_pairs"] = [list(p) for p in config.dependency_pairs]

    def dump(name: str, obj):
        (directory / name).write_text(
            yaml.safe_dump(obj, sort_keys=False, allow_unicode=True), encoding="utf-8"
        )

    dump("categories.yaml", categories)
    dump("questions.yaml", questions)
    dump("keywords.yaml", keywords)
    dump("project.yaml", project)
    return directory / "project.yaml"


def _lf_to_yaml(lf: LfConfig) -> dict:
    entry = {"id": lf.lf_id, "kind": lf.kind}
    if lf.threshold is not None:
        entry["threshold"] = lf.threshold
    if lf.endpoint is not None:
        entry["endpoint"] = lf.endpoint
    if lf.min_confidence is not None:
        entry["min_confidence"] = lf.min_confidence
    if lf.patterns:
        entry["patterns"] = dict(lf.patterns)
    return entry


def schema_summary(config: ProjectConfig) -> str:
    """Deterministic human-readable listing of variables, values, and LFs."""
    lines = [f"variables: {len(config.variables)}"]
    for v in config.variables:
        neg = f", negative={v.negative_value!r}" if v.negative_value else ""
        n_kw = sum(len(kws) for kws in v.keywords.values())
        lines.append(
            f"  {v.variable_id}: {len(v.label_values)} values"
            f" ({', '.join(v.label_values)}){neg},"
            f" {len(v.questions)} questions, {n_kw} keywords"
        )
    lines.append(f"labeling functions: {len(config.lf_configs)}")
    for lf in config.lf_configs:
        extra = ""
        if lf.kind == "similarity":
            extra = f" threshold={lf.threshold}"
        elif lf.kind == "external":
            extra = f" endpoint={lf.endpoint}"
        lines.append(f"  {lf.lf_id}: {lf.kind}{extra}")
    lines.append(
        f"k={config.k} merge_overlap_threshold={config.merge_overlap_threshold}"
        f" alpha={config.alpha} seed={config.seed}"
    )
    if config.deferral is not None:
        params = {"budget": config.deferral.q, "threshold": config.deferral.tau}.get(
            config.deferral.mode
        )
        lines.append(f"deferral: {config.deferral.mode}"
                     + (f" ({params})" if params is not None else ""))
    return "\n".join(lines) + "\n"


def config_to_dict(config: ProjectConfig) -> dict:
    """JSON-safe dump used by fit artifacts and the API."""
    return dataclasses.asdict(config)
