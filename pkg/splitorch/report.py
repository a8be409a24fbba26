"""Output files: request and KPI tables, the event log, the sweep summary
and its latency chart

Column sets are fixed; floats are rounded to 6 decimals and lines end with
`\\n` on every platform so that the same run always produces the same bytes.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, fields, is_dataclass
from enum import Enum
from functools import singledispatch
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

from .cost import CostBreakdown, LatencyBreakdown
from .model import Segment, SplitScheme
from .orchestrator import ReconfigEvent
from .simulator import ComparisonRow, KpiWindow, RequestRecord
from .solver import Placement
from .utils import fmt_float

PathLike = Union[str, Path]

REQUEST_COLUMNS = tuple(f.name for f in fields(RequestRecord))
KPI_COLUMNS = tuple(f.name for f in fields(KpiWindow))
SUMMARY_COLUMNS = (
    "bandwidth_mbps",
    "static_latency_ms",
    "adaptive_latency_ms",
    "delta_pct",
    "throughput_ratio",
    "max_gpu_util",
    "reconfig_count",
)


@singledispatch
def to_jsonable(obj: Any) -> Any:
    """Convert a domain object into plain JSON types, floats rounded"""
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    raise TypeError(f"Cannot serialize {type(obj).__name__} objects.")


@to_jsonable.register(type(None))
@to_jsonable.register(str)
@to_jsonable.register(int)
def _(obj: Any) -> Any:
    return obj


@to_jsonable.register(float)
def _(obj: float) -> Any:
    if math.isinf(obj):
        return None
    return fmt_float(obj)


@to_jsonable.register(Enum)
def _(obj: Enum) -> Any:
    return obj.value


@to_jsonable.register(tuple)
@to_jsonable.register(list)
def _(obj: Sequence) -> Any:
    return [to_jsonable(item) for item in obj]


@to_jsonable.register(frozenset)
@to_jsonable.register(set)
def _(obj: Iterable) -> Any:
    return sorted(to_jsonable(item) for item in obj)


@to_jsonable.register(dict)
def _(obj: Mapping) -> Any:
    return {str(key): to_jsonable(value) for key, value in obj.items()}


@to_jsonable.register(Placement)
def _(obj: Placement) -> Any:
    return list(obj.assignment)


@to_jsonable.register(Segment)
def _(obj: Segment) -> Any:
    return {
        "segment_index": obj.segment_index,
        "layers": list(obj.layer_range),
        "load_compute": to_jsonable(obj.load_compute),
        "load_mem": to_jsonable(obj.load_mem),
        "boundary_activation_bits": to_jsonable(obj.boundary_activation_bits),
        "privacy_critical": obj.privacy_critical,
    }


@to_jsonable.register(SplitScheme)
def _(obj: SplitScheme) -> Any:
    return {
        "model": obj.profile.name,
        "boundaries": list(obj.boundaries),
        "segments": [to_jsonable(seg) for seg in obj.segments],
    }


@to_jsonable.register(LatencyBreakdown)
def _(obj: LatencyBreakdown) -> Any:
    out = {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    out["queue_ms"] = {k: to_jsonable(v) for k, v in sorted(obj.queue_ms.items())}
    out["utilization"] = {
        k: to_jsonable(v) for k, v in sorted(obj.utilization.items())
    }
    return out


@to_jsonable.register(CostBreakdown)
def _(obj: CostBreakdown) -> Any:
    return {
        "total": to_jsonable(obj.total),
        "latency_ms": to_jsonable(obj.latency_ms),
        "utilization_term": to_jsonable(obj.utilization_term),
        "privacy_violations": obj.privacy_violations,
        "latency": to_jsonable(obj.latency),
    }


@to_jsonable.register(ReconfigEvent)
def _(obj: ReconfigEvent) -> Any:
    out = {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    out["causes"] = list(obj.causes)
    return out


def _cell(value: Any) -> Any:
    if isinstance(value, bool):
        return "true" if value else "false"
    return fmt_float(value)


def _write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if is_dataclass(row):
                row = asdict(row)
            writer.writerow([_cell(row.get(col)) for col in columns])
    return path


def write_requests_csv(path: PathLike, requests: Iterable[RequestRecord]) -> Path:
    return _write_csv(path, REQUEST_COLUMNS, requests)


def write_kpi_csv(path: PathLike, windows: Iterable[KpiWindow]) -> Path:
    return _write_csv(path, KPI_COLUMNS, windows)


def write_summary_csv(path: PathLike, rows: Iterable[ComparisonRow]) -> Path:
    """Write the sweep summary, one row per backhaul bandwidth"""
    return _write_csv(path, SUMMARY_COLUMNS, rows)


def write_events_jsonl(path: PathLike, events: Iterable[ReconfigEvent]) -> Path:
    """Write the reconfiguration log, one JSON object per line"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for event in events:
            fh.write(json.dumps(to_jsonable(event)) + "\n")
    return path


def read_summary_csv(path: PathLike) -> List[Dict[str, Any]]:
    """Read a summary written by `write_summary_csv`

    Empty cells come back as `None`, everything else as float except
    `reconfig_count`.
    """
    rows = []
    with Path(path).open(newline="") as fh:
        for raw in csv.DictReader(fh):
            row: Dict[str, Any] = {}
            for col in SUMMARY_COLUMNS:
                cell = raw.get(col, "")
                if cell == "":
                    row[col] = None
                elif col == "reconfig_count":
                    row[col] = int(cell)
                else:
                    row[col] = float(cell)
            rows.append(row)
    return rows


def _nice_step(span: float, ticks: int = 5) -> float:
    raw = span / ticks
    magnitude = 10 ** math.floor(math.log10(raw))
    for factor in (1, 2, 5, 10):
        if raw <= factor * magnitude:
            return factor * magnitude
    return 10 * magnitude  # pragma: no cover


def render_svg(
    rows: Sequence[Mapping[str, Any]],
    width: int = 640,
    height: int = 400,
) -> str:
    """Line chart of static and adaptive latency against backhaul bandwidth

    A pure function of the summary rows (as read by `read_summary_csv`).
    """
    rows = sorted(rows, key=lambda row: row["bandwidth_mbps"])
    left, right, top, bottom = 70, 20, 40, 50
    plot_w, plot_h = width - left - right, height - top - bottom

    bws = [row["bandwidth_mbps"] for row in rows]
    values = [
        row[col]
        for row in rows
        for col in ("static_latency_ms", "adaptive_latency_ms")
        if row[col] is not None
    ]
    y_step = _nice_step(max(values, default=1.0) or 1.0)
    y_max = y_step * math.ceil(max(values, default=1.0) / y_step) or y_step
    x_min, x_max = (min(bws), max(bws)) if bws else (0.0, 1.0)
    if x_max == x_min:
        x_min, x_max = x_min - 1, x_max + 1

    def x(bw: float) -> float:
        return left + (bw - x_min) / (x_max - x_min) * plot_w

    def y(ms: float) -> float:
        return top + plot_h - ms / y_max * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}" '
        'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        'font-size="14">Latency vs backhaul bandwidth</text>',
    ]

    tick = 0.0
    while tick <= y_max + 1e-9:
        out.append(
            f'<line x1="{left}" y1="{y(tick):.1f}" x2="{left + plot_w}" '
            f'y2="{y(tick):.1f}" stroke="#dddddd"/>'
        )
        out.append(
            f'<text x="{left - 6}" y="{y(tick) + 4:.1f}" '
            f'text-anchor="end">{tick:g}</text>'
        )
        tick += y_step
    for bw in bws:
        out.append(
            f'<text x="{x(bw):.1f}" y="{top + plot_h + 18}" '
            f'text-anchor="middle">{bw:g}</text>'
        )
    out.append(
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" '
        f'y2="{top + plot_h}" stroke="black"/>'
    )
    out.append(
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" '
        'stroke="black"/>'
    )
    out.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 10}" '
        'text-anchor="middle">Backhaul bandwidth (Mb/s)</text>'
    )
    out.append(
        f'<text x="16" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.1f})">'
        "Mean latency (ms)</text>"
    )

    series = (
        ("static_latency_ms", "Static", "#d62728"),
        ("adaptive_latency_ms", "Adaptive", "#1f77b4"),
    )
    for i, (col, label, color) in enumerate(series):
        points = [
            (x(row["bandwidth_mbps"]), y(row[col]))
            for row in rows
            if row[col] is not None
        ]
        if points:
            out.append(
                '<polyline fill="none" stroke="{}" stroke-width="2" '
                'points="{}"/>'.format(
                    color, " ".join(f"{px:.1f},{py:.1f}" for px, py in points)
                )
            )
            out.extend(
                f'<circle cx="{px:.1f}" cy="{py:.1f}" r="3" fill="{color}"/>'
                for px, py in points
            )
        legend_y = top + 10 + 16 * i
        out.append(
            f'<line x1="{left + plot_w - 110}" y1="{legend_y}" '
            f'x2="{left + plot_w - 90}" y2="{legend_y}" stroke="{color}" '
            'stroke-width="2"/>'
        )
        out.append(
            f'<text x="{left + plot_w - 84}" y="{legend_y + 4}">{label}</text>'
        )

    out.append("</svg>")
    return "\n".join(out) + "\n"
