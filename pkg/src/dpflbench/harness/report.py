"""Deterministic result files: markdown/CSV tables, plot series and the raw log.

Every file starts with a comment line carrying the sha256 digest of the
resolved configuration. Output depends only on the rows, never on the
order in which grid cells finished.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

from ..data import write_label_mapping
from .config import MODEL_KINDS, ExperimentConfig
from .experiment import PreparedData, RawRecord, ResultRow, cell_key

SETUP_LABELS = {
    "centralized": "Centralized",
    "centralized-dp": "Centralized DP",
    "fl-iid": "FL-IID (no DP)",
    "fl-noniid": "FL-Non IID (no DP)",
    "dpfl-iid": "FL-IID",
    "dpfl-noniid": "FL-Non IID",
}

OUTPUT_FILES = ("results.md", "results.csv", "plot.csv", "raw_accuracies.csv", "resolved_config")


def format_epsilon(eps: float, markdown: bool = False) -> str:
    if math.isinf(eps):
        return "∞ (No noise)" if markdown else "inf"
    return f"{eps:g}"


def parse_epsilon(text: str) -> float:
    return math.inf if text.strip() in ("inf", "∞ (No noise)") else float(text)


def _sorted(rows: Sequence[ResultRow]) -> list[ResultRow]:
    return sorted(rows, key=lambda r: cell_key(r.setup, r.epsilon, r.model))


def _csv_text(header: list[str], body: list[list], comments: list[str]) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(body)
    return buf.getvalue()


def format_markdown(rows: Sequence[ResultRow], digest: str = "") -> str:
    """Grouped Setup rows, an Epsilon column, one column per model."""
    if not rows:
        raise ValueError("no rows to emit")
    rows = _sorted(rows)
    models = sorted({r.model for r in rows}, key=MODEL_KINDS.index)
    cells = {(r.setup, r.epsilon, r.model): r for r in rows}
    n_seeds = sorted({r.n_seeds for r in rows})
    deltas = sorted({r.delta for r in rows})

    out = [
        f"<!-- dpflbench results; config sha256={digest} -->",
        f"<!-- cell = mean ± population std of test accuracy (%) over "
        f"{'/'.join(map(str, n_seeds))} seeds; delta={'/'.join(f'{d:g}' for d in deltas)} -->",
        "",
        "| Setup | Epsilon | " + " | ".join(models) + " |",
        "|:--|--:|" + "--:|" * len(models),
    ]
    previous = None
    seen = []
    for r in rows:
        if (r.setup, r.epsilon) not in seen:
            seen.append((r.setup, r.epsilon))
    for setup, eps in seen:
        label = SETUP_LABELS[setup] if setup != previous else ""
        previous = setup
        values = []
        for m in models:
            row = cells.get((setup, eps, m))
            values.append(f"{row.mean_accuracy:.2f} ± {row.std_accuracy:.2f}" if row else "-")
        out.append(f"| {label} | {format_epsilon(eps, markdown=True)} | " + " | ".join(values) + " |")
    return "\n".join(out) + "\n"


def format_csv(rows: Sequence[ResultRow], digest: str = "") -> str:
    body = [
        [r.setup, format_epsilon(r.epsilon), r.model, f"{r.mean_accuracy:.2f}", f"{r.std_accuracy:.2f}", r.n_seeds, f"{r.delta:g}"]
        for r in _sorted(rows)
    ]
    return _csv_text(
        ["setup", "epsilon", "model", "mean_accuracy", "std_accuracy", "n_seeds", "delta"],
        body,
        [f"config sha256={digest}", "accuracy in percent; std is the population std over seeds"],
    )


def format_table(rows: Sequence[ResultRow], fmt: str = "markdown", digest: str = "") -> str:
    if fmt == "markdown":
        return format_markdown(rows, digest)
    if fmt == "csv":
        return format_csv(rows, digest)
    raise ValueError(f"unknown table format {fmt!r}")


def format_plot_data(rows: Sequence[ResultRow], digest: str = "") -> str:
    """Epsilon-vs-accuracy series, one line per (setup, model, epsilon)."""
    ordered = sorted(rows, key=lambda r: (cell_key(r.setup, 0.0, r.model), r.epsilon))
    body = [
        [r.setup, r.model, format_epsilon(r.epsilon), f"{r.mean_accuracy:.2f}", f"{r.std_accuracy:.2f}"]
        for r in ordered
    ]
    return _csv_text(["setup", "model", "epsilon", "mean", "std"], body, [f"config sha256={digest}"])


def format_raw(raw: Sequence[RawRecord], digest: str = "", delta: float | None = None) -> str:
    ordered = sorted(raw, key=lambda r: (cell_key(r.setup, r.epsilon, r.model), r.seed_index))
    body = [[r.setup, format_epsilon(r.epsilon), r.model, r.seed_index, r.seed, repr(r.accuracy)] for r in ordered]
    comments = [f"config sha256={digest}"]
    if delta is not None:
        comments.append(f"delta={delta!r}")
    return _csv_text(["setup", "epsilon", "model", "seed_index", "seed", "accuracy"], body, comments)


def read_raw(path: str | Path) -> tuple[list[RawRecord], str, float | None]:
    """Inverse of :func:`format_raw`; returns records, config digest and delta."""
    digest, delta = "", None
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    data_lines = []
    for line in lines:
        if line.startswith("# config sha256="):
            digest = line.split("=", 1)[1]
        elif line.startswith("# delta="):
            delta = float(line.split("=", 1)[1])
        elif not line.startswith("#"):
            data_lines.append(line)
    records = [
        RawRecord(row["setup"], parse_epsilon(row["epsilon"]), row["model"], int(row["seed_index"]), int(row["seed"]), float(row["accuracy"]))
        for row in csv.DictReader(data_lines)
    ]
    return records, digest, delta


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def write_outputs(
    out_dir: str | Path,
    cfg: ExperimentConfig,
    rows: Sequence[ResultRow],
    raw: Sequence[RawRecord],
    data: PreparedData | None = None,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = cfg.render()
    digest = cfg.digest
    delta = rows[0].delta if rows else None
    _write(out / "resolved_config", f"# config sha256={digest}\n" + resolved)
    _write(out / "results.md", format_markdown(rows, digest))
    _write(out / "results.csv", format_csv(rows, digest))
    _write(out / "plot.csv", format_plot_data(rows, digest))
    _write(out / "raw_accuracies.csv", format_raw(raw, digest, delta))
    if data is not None:
        write_label_mapping(data.train, out / "label_mapping.tsv")
    return out
