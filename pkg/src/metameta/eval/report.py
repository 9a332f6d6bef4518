from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

from metameta.errors import ConfigError
from metameta.eval.evaluate import EvalReport

CSV_COLUMNS = ("method", "k", "n_problems", "mean_acc", "ci95", "seed", "wall_time_s")


def _pct(value: float) -> str:
    return f"{100.0 * value:.2f}"


def render_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow(
            [
                r.method.value,
                r.k,
                r.n_problems,
                _pct(r.mean),
                _pct(r.ci95_halfwidth),
                r.seed,
                f"{r.wall_time_s:.3f}",
            ]
        )
    return buf.getvalue()


def render_markdown(reports: Sequence[EvalReport]) -> str:
    """Rows are k, columns are methods in first-seen order; cells read 'mean ± ci'."""
    methods: List[str] = []
    ks: List[int] = []
    cells: Dict[Tuple[int, str], str] = {}
    for r in reports:
        if r.method.value not in methods:
            methods.append(r.method.value)
        if r.k not in ks:
            ks.append(r.k)
        cells[(r.k, r.method.value)] = f"{_pct(r.mean)} ± {_pct(r.ci95_halfwidth)}"

    lines = [
        "| k | " + " | ".join(methods) + " |",
        "|---|" + "---|" * len(methods),
    ]
    for k in sorted(ks):
        row = [cells.get((k, m), "-") for m in methods]
        lines.append(f"| {k} | " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def render_report(reports: Sequence[EvalReport], fmt: str = "csv") -> str:
    if not reports:
        raise ConfigError("no reports to render")
    if fmt == "csv":
        return render_csv(reports)
    if fmt == "markdown":
        return render_markdown(reports)
    raise ConfigError(f"unknown report format {fmt!r} (expected csv or markdown)")


def report_format_for(path: Union[str, Path]) -> str:
    return "markdown" if Path(path).suffix.lower() in (".md", ".markdown") else "csv"


def write_report(path: Union[str, Path], reports: Sequence[EvalReport]) -> Path:
    p = Path(path)
    text = render_report(reports, report_format_for(p))
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return p
