from metameta.eval.evaluate import EvalReport, confidence_interval, evaluate, evaluate_fiveway
from metameta.eval.report import render_report, write_report

__all__ = [
    "EvalReport",
    "confidence_interval",
    "evaluate",
    "evaluate_fiveway",
    "render_report",
    "write_report",
]
