"""Command-line tooling: evaluation runs, reports, and human annotation."""

from .annotate import annotate_session, binary_collapse, human_automatic, human_human, sample_plan, suggest_label
from .reports import CellReport, cmd_agree, cmd_rr
from .run import RunConfig, cmd_eval

__all__ = [
    "CellReport", "RunConfig", "annotate_session", "binary_collapse", "cmd_agree", "cmd_eval",
    "cmd_rr", "human_automatic", "human_human", "sample_plan", "suggest_label",
]
