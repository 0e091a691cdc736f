"""Result files written and read by the command line.

Trace CSVs (one per method and seed), the per-experiment ``summary.csv``,
optional PPM grids and the averaged per-method CSVs of ``trace-analysis``.
All tables go through ``udslab.core.file_utils`` so that the same run always
produces byte-identical files.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from udslab.core.errors import TraceFileError
from udslab.core.file_utils import atomic_write_bytes, encode_ppm, write_csv
from udslab.core.logging_manager import get_logger
from udslab.modules.gmm_oracle import ConditionRegistry
from udslab.modules.metrics import (
    StabilityStats,
    identity_preservation,
    mean_without_sentinels,
    stability_stats,
    target_alignment,
)
from udslab.modules.optimizer import RunResult

TRACE_COLUMNS = ("step", "t", "grad_norm", "grad_norm_normalized", "cos_recon", "cos_cls", "cos_identity")
COSINE_COLUMNS = ("cos_recon", "cos_cls", "cos_identity")
SUMMARY_COLUMNS = (
    "method",
    "seed",
    "task",
    "w",
    "steps",
    "target_log_density_proxy",
    "identity_preservation",
    "grad_norm_mean",
    "grad_norm_std",
    "grad_norm_ratio",
)
TRACE_FILE_PATTERN = re.compile(r"^trace_(?P<method>[A-Z_]+)_seed(?P<seed>\d+)\.csv$")
BURN_IN_FRACTION = 0.2


@dataclass(frozen=True)
class TraceRow:
    """One trace line as read back from disk."""

    step: float
    t: float
    grad_norm: float
    grad_norm_normalized: float
    cos_recon: float
    cos_cls: float
    cos_identity: float

    def values(self) -> Tuple[float, ...]:
        return tuple(getattr(self, column) for column in TRACE_COLUMNS)


@dataclass(frozen=True)
class RunSummary:
    method: str
    seed: int
    task: str
    w: float
    steps: int
    target_log_density_proxy: float
    identity_preservation: Optional[float]
    stability: StabilityStats
    final: np.ndarray

    def row(self) -> List[Any]:
        return [
            self.method,
            self.seed,
            self.task,
            self.w,
            self.steps,
            self.target_log_density_proxy,
            self.identity_preservation,
            self.stability.mean,
            self.stability.std,
            self.stability.ratio,
            *[float(value) for value in self.final],
        ]

    def to_dict(self) -> Dict[str, Any]:
        payload = dict(zip(SUMMARY_COLUMNS, self.row()))
        payload["final"] = [float(value) for value in self.final]
        return payload


# ----------------------------------------------------------------------
# run outputs


def _require_written(written: bool, path: Path) -> None:
    if not written:
        raise TraceFileError(f"Datei konnte nicht geschrieben werden: {path}")


def trace_filename(method: str, seed: int) -> str:
    return f"trace_{method}_seed{int(seed)}.csv"


def summary_columns(dim: int) -> List[str]:
    return [*SUMMARY_COLUMNS, *(f"final_{index}" for index in range(dim))]


def trace_rows(result: RunResult) -> List[List[Any]]:
    return [
        [
            record.step,
            record.t_sampled,
            record.grad_norm,
            record.grad_norm_normalized,
            record.cos_recon,
            record.cos_cls,
            record.cos_identity,
        ]
        for record in result.trace
    ]


def summarise(
    result: RunResult,
    registry: ConditionRegistry,
    *,
    task: str,
    frozen_dims: Optional[Sequence[int]] = None,
) -> RunSummary:
    """Metrics of one finished run (the log-density stands in for a CLIP score)."""

    config = result.config
    preservation: Optional[float] = None
    if result.x0_src is not None and frozen_dims:
        preservation = identity_preservation(result.final_render, result.x0_src, frozen_dims)
    return RunSummary(
        method=config.distiller.method.value,
        seed=config.seed,
        task=task,
        w=config.distiller.w,
        steps=config.steps,
        target_log_density_proxy=target_alignment(result.final_render, config.prompts.tgt, registry),
        identity_preservation=preservation,
        stability=stability_stats(result.trace, BURN_IN_FRACTION),
        final=result.final_render,
    )


def image_panels(result: RunResult) -> List[np.ndarray]:
    """Square panels: source (editing only), initial render, final render."""

    side = math.isqrt(result.final_render.size)
    if side * side != result.final_render.size:
        raise ValueError(f"Dimension {result.final_render.size} ist keine Quadratzahl")
    renders = [result.initial_render, result.final_render]
    if result.x0_src is not None:
        renders.insert(0, result.x0_src)
    return [np.asarray(render).reshape(side, side) for render in renders]


def write_run_outputs(
    results: Sequence[RunResult],
    registry: ConditionRegistry,
    out_dir: Path,
    *,
    task: str,
    frozen_dims: Optional[Sequence[int]] = None,
    as_image: bool = False,
    image_scale: int = 8,
    logger: Optional[logging.Logger] = None,
) -> List[RunSummary]:
    """Write traces, ``summary.csv`` and optional PPM grids; single writer for all seeds."""

    logger = logger or get_logger("cli.outputs")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries: List[RunSummary] = []
    for result in results:
        method = result.config.distiller.method.value
        trace_path = out_dir / trace_filename(method, result.seed)
        _require_written(write_csv(trace_path, TRACE_COLUMNS, trace_rows(result), logger=logger), trace_path)
        logger.info("Spur geschrieben: %s (%d Einträge)", trace_path, len(result.trace))
        if as_image:
            image_path = out_dir / f"render_{method}_seed{result.seed}.ppm"
            payload = encode_ppm(image_panels(result), scale=image_scale)
            _require_written(atomic_write_bytes(image_path, payload, logger=logger), image_path)
            logger.info("Bildraster geschrieben: %s", image_path)
        summaries.append(summarise(result, registry, task=task, frozen_dims=frozen_dims))

    if summaries:
        summary_path = out_dir / "summary.csv"
        columns = summary_columns(summaries[0].final.size)
        rows = [item.row() for item in summaries]
        _require_written(write_csv(summary_path, columns, rows, logger=logger), summary_path)
        logger.info("Zusammenfassung geschrieben: %s (%d Zeilen)", summary_path, len(summaries))
    return summaries


# ----------------------------------------------------------------------
# trace analysis


def read_trace(path: Path) -> List[TraceRow]:
    """Parse a trace CSV; raises :class:`TraceFileError` for malformed content."""

    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
                raise TraceFileError(f"{path}: unerwartete Spalten {reader.fieldnames}")
            rows: List[TraceRow] = []
            for line_number, raw in enumerate(reader, start=2):
                try:
                    rows.append(TraceRow(**{column: float(raw[column]) for column in TRACE_COLUMNS}))
                except (TypeError, ValueError) as error:
                    raise TraceFileError(f"{path}, Zeile {line_number}: {error}") from error
    except OSError as error:
        raise TraceFileError(f"{path}: {error}") from error
    if not rows:
        raise TraceFileError(f"{path}: keine Einträge")
    return rows


def collect_traces(trace_dir: Path) -> Dict[str, List[Tuple[int, List[TraceRow]]]]:
    """Group every ``trace_<METHOD>_seed<N>.csv`` in ``trace_dir`` by method (seed order)."""

    trace_dir = Path(trace_dir)
    if not trace_dir.is_dir():
        raise TraceFileError(f"Spurverzeichnis fehlt: {trace_dir}")
    grouped: Dict[str, List[Tuple[int, List[TraceRow]]]] = {}
    for path in sorted(trace_dir.iterdir()):
        match = TRACE_FILE_PATTERN.match(path.name)
        if match is None:
            continue
        grouped.setdefault(match["method"], []).append((int(match["seed"]), read_trace(path)))
    if not grouped:
        raise TraceFileError(f"Keine Spurdateien in {trace_dir}")
    for traces in grouped.values():
        traces.sort(key=lambda item: item[0])
    return grouped


def average_traces(traces: Sequence[Sequence[TraceRow]], *, logger: Optional[logging.Logger] = None) -> List[TraceRow]:
    """Align by record index and average across seeds; cosine sentinels are skipped."""

    if not traces:
        raise ValueError("Mindestens eine Spur wird benötigt")
    length = min(len(trace) for trace in traces)
    if any(len(trace) != length for trace in traces):
        (logger or get_logger("cli.outputs")).warning(
            "Spuren unterschiedlich lang, verwende die ersten %d Einträge.", length
        )
    averaged: List[TraceRow] = []
    for index in range(length):
        rows = [trace[index] for trace in traces]
        values: Dict[str, float] = {}
        for column in TRACE_COLUMNS:
            column_values = [getattr(row, column) for row in rows]
            if column in COSINE_COLUMNS:
                values[column] = mean_without_sentinels(column_values)
            else:
                values[column] = float(np.mean(column_values))
        averaged.append(TraceRow(**values))
    return averaged


def write_trace_analysis(
    grouped: Dict[str, List[Tuple[int, List[TraceRow]]]],
    out_dir: Path,
    *,
    logger: Optional[logging.Logger] = None,
) -> Dict[str, Tuple[Path, List[TraceRow]]]:
    """Write ``analysis_<METHOD>.csv`` per method; returns path and averaged rows."""

    logger = logger or get_logger("cli.outputs")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: Dict[str, Tuple[Path, List[TraceRow]]] = {}
    for method in sorted(grouped):
        rows = average_traces([trace for _, trace in grouped[method]], logger=logger)
        path = out_dir / f"analysis_{method}.csv"
        _require_written(write_csv(path, TRACE_COLUMNS, [_analysis_values(row) for row in rows], logger=logger), path)
        logger.info("Analyse geschrieben: %s (%d Seeds, %d Zeilen)", path, len(grouped[method]), len(rows))
        written[method] = (path, rows)
    return written


def _analysis_values(row: TraceRow) -> List[Any]:
    values: List[Any] = list(row.values())
    values[0] = int(row.step)
    return values


__all__ = [
    "BURN_IN_FRACTION",
    "RunSummary",
    "SUMMARY_COLUMNS",
    "TRACE_COLUMNS",
    "TraceRow",
    "average_traces",
    "collect_traces",
    "image_panels",
    "read_trace",
    "summarise",
    "summary_columns",
    "trace_filename",
    "trace_rows",
    "write_run_outputs",
    "write_trace_analysis",
]
