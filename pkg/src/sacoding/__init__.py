"""Workbench for coding security-advice datasets with the SAcoding tree.

A human coder answers the tree's yes/no questions per advice item, the
engine assigns leaf codes, and the analytics layer produces frequency,
proportion, actionability, comparison, and question-flow reports.
"""

from .tree import (
    CodingTree,
    LeafCode,
    Question,
    TreeError,
    TreeParseError,
    TreeValidationError,
    classify_actionable,
    default_tree,
    load_tree,
)
from .corpus import (
    AdviceItem,
    Category,
    CorpusError,
    Dataset,
    bundled_codes,
    bundled_dataset,
    bundled_datasets,
    export_dataset,
    export_dataset_csv,
    parse_codes,
    parse_dataset,
)
from .session import (
    AnswerStep,
    CodingDecision,
    Session,
    SessionError,
)
from .analytics import (
    ActionabilityResult,
    AgreementResult,
    ComparisonMatrix,
    FlowStats,
    FrequencyReport,
    actionability,
    agreement,
    compare,
    emit_report,
    frequency_table,
    question_flow_stats,
)

__version__ = "0.1.0"

__all__ = [
    "ActionabilityResult",
    "AdviceItem",
    "AgreementResult",
    "AnswerStep",
    "Category",
    "CodingDecision",
    "CodingTree",
    "ComparisonMatrix",
    "CorpusError",
    "Dataset",
    "FlowStats",
    "FrequencyReport",
    "LeafCode",
    "Question",
    "Session",
    "SessionError",
    "TreeError",
    "TreeParseError",
    "TreeValidationError",
    "actionability",
    "agreement",
    "bundled_codes",
    "bundled_dataset",
    "bundled_datasets",
    "classify_actionable",
    "compare",
    "default_tree",
    "emit_report",
    "export_dataset",
    "export_dataset_csv",
    "frequency_table",
    "load_tree",
    "parse_codes",
    "parse_dataset",
    "question_flow_stats",
]
