"""Text and JSON renderings of a UserLoadReport.

JSON layout (keys in this order)::

    {"user", "collected_at",
     "jobs":  [{"job_id", "user", "partition", "state", "nodelist",
                "alloc_cpus", "alloc_gpus"}],
     "nodes": [{"hostname", "cpus_alloc", "cpus_total", "load_5min",
                "load_known", "load_ratio", "mem_used_plus_cache_mib",
                "mem_total_mib", "jupyter", "gpu"}],
     "advisories": [{"kind", "hostname", "message", "observed", "threshold"}]}

``gpu`` is null without ``-g``, ``{"unreachable": reason}`` for a node that
could not be queried, and otherwise ``{"gpus_total", "gpus_used",
"gpu_load", "gpu_mem_used_mib", "gpu_mem_total_mib", "devices": [{"index",
"util_pct", "mem_used_mib", "mem_total_mib", "power_w"}]}``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from datetime import datetime, timezone

from .model import (Advisory, AdvisoryKind, GpuSample, GpuSummary, GpuUnreachable,
                    JobRecord, NodeReport, UserLoadReport)
from .units import fixed, gib, percent

NA = "n/a"
COLUMN_GAP = "  "
BASE_HEADERS = ("NODE", "CPUS", "LOAD", "LOAD%", "MEM(GB)")
GPU_HEADERS = ("GPUS", "GPULOAD", "GPUMEM(GB)")
JUPYTER_BADGE = "[jupyter]"

_RED = "\033[31m"
_YELLOW = "\033[33m"
_RESET = "\033[0m"


class OutputFormat(str, enum.Enum):
    TABLE = "table"
    JSON = "json"


class ColorMode(str, enum.Enum):
    AUTO = "auto"
    ALWAYS = "always"
    NEVER = "never"


@dataclass(frozen=True)
class RenderOptions:
    gpu_mode: bool = False
    format: OutputFormat = OutputFormat.TABLE
    # AUTO must be resolved by the caller (it knows whether stdout is a tty)
    color: ColorMode = ColorMode.NEVER


def iso_utc(epoch: float) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _gpu_cells(gpu) -> list[str]:
    if not isinstance(gpu, GpuSummary):
        return [NA, NA, NA]
    return [
        f"{gpu.gpus_used}/{gpu.gpus_total}",
        fixed(gpu.gpu_load, 2),
        f"{gib(gpu.gpu_mem_used_mib)}/{gib(gpu.gpu_mem_total_mib)}",
    ]


def _node_cells(node: NodeReport, gpu_mode: bool) -> list[str]:
    if node.load_known:
        load, load_pct = fixed(node.load_5min, 2), str(percent(node.load_ratio))
    else:
        load = load_pct = NA
    cells = [
        node.hostname,
        f"{node.cpus_alloc}/{node.cpus_total}",
        load,
        load_pct,
        f"{gib(node.mem_used_plus_cache_mib)}/{gib(node.mem_total_mib)}",
    ]
    if gpu_mode:
        cells += _gpu_cells(node.gpu)
    return cells


def _paint(text: str, code: str, on: bool) -> str:
    return f"{code}{text}{_RESET}" if on and text else text


def render_table(report: UserLoadReport, options: RenderOptions = RenderOptions()) -> str:
    running = [j for j in report.jobs if j.running]
    if not running:
        return f"No running jobs for user {report.user}.\n"
    color = options.color is ColorMode.ALWAYS

    plural = "" if len(running) == 1 else "s"
    lines = [f"User {report.user}, {len(running)} running job{plural}, {iso_utc(report.collected_at)}"]

    headers = list(BASE_HEADERS) + (list(GPU_HEADERS) if options.gpu_mode else [])
    rows = [headers] + [_node_cells(n, options.gpu_mode) for n in report.nodes]
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    load_pct_col = headers.index("LOAD%")

    flagged = {}
    for adv in report.advisories:
        if adv.kind is AdvisoryKind.CPU_OVERLOADED:
            flagged[adv.hostname] = _RED
        elif adv.kind is AdvisoryKind.CPU_UNDERUTILIZED:
            flagged[adv.hostname] = _YELLOW

    badges = [""] + [JUPYTER_BADGE if n.jupyter else "" for n in report.nodes]
    hosts = [None] + [n.hostname for n in report.nodes]
    for row, badge, host in zip(rows, badges, hosts):
        cells = []
        for i, (cell, width) in enumerate(zip(row, widths)):
            padded = cell.ljust(width)
            if i == load_pct_col and host in flagged:
                padded = _paint(cell, flagged[host], color) + " " * (width - len(cell))
            cells.append(padded)
        cells.append(badge)
        lines.append(COLUMN_GAP.join(cells).rstrip())

    for adv in report.advisories:
        lines.append(_paint(f"hint: {adv.message}", _YELLOW, color))
    return "\n".join(lines) + "\n"


def _job_dict(job: JobRecord) -> dict:
    return {
        "job_id": job.job_id,
        "user": job.user,
        "partition": job.partition,
        "state": job.state,
        "nodelist": job.nodelist,
        "alloc_cpus": job.alloc_cpus,
        "alloc_gpus": job.alloc_gpus,
    }


def _gpu_dict(gpu):
    if gpu is None:
        return None
    if isinstance(gpu, GpuUnreachable):
        return {"unreachable": gpu.reason}
    return {
        "gpus_total": gpu.gpus_total,
        "gpus_used": gpu.gpus_used,
        "gpu_load": float(gpu.gpu_load),
        "gpu_mem_used_mib": gpu.gpu_mem_used_mib,
        "gpu_mem_total_mib": gpu.gpu_mem_total_mib,
        "devices": [
            {
                "index": s.index,
                "util_pct": float(s.util_pct),
                "mem_used_mib": s.mem_used_mib,
                "mem_total_mib": s.mem_total_mib,
                "power_w": float(s.power_w),
            }
            for s in gpu.devices
        ],
    }


def _node_dict(node: NodeReport) -> dict:
    return {
        "hostname": node.hostname,
        "cpus_alloc": node.cpus_alloc,
        "cpus_total": node.cpus_total,
        "load_5min": float(node.load_5min),
        "load_known": node.load_known,
        "load_ratio": float(node.load_ratio),
        "mem_used_plus_cache_mib": node.mem_used_plus_cache_mib,
        "mem_total_mib": node.mem_total_mib,
        "jupyter": node.jupyter,
        "gpu": _gpu_dict(node.gpu),
    }


def report_to_dict(report: UserLoadReport) -> dict:
    return {
        "user": report.user,
        "collected_at": report.collected_at,
        "jobs": [_job_dict(j) for j in report.jobs],
        "nodes": [_node_dict(n) for n in report.nodes],
        "advisories": [
            {
                "kind": a.kind.value,
                "hostname": a.hostname,
                "message": a.message,
                "observed": float(a.observed),
                "threshold": float(a.threshold),
            }
            for a in report.advisories
        ],
    }


def render_json(report: UserLoadReport) -> str:
    return json.dumps(report_to_dict(report), indent=2) + "\n"


def _gpu_from_dict(hostname: str, data):
    if data is None:
        return None
    if "unreachable" in data:
        return GpuUnreachable(data["unreachable"])
    devices = tuple(
        GpuSample(hostname, d["index"], d["util_pct"], d["mem_used_mib"],
                  d["mem_total_mib"], d["power_w"])
        for d in data["devices"]
    )
    return GpuSummary(data["gpus_total"], data["gpus_used"], data["gpu_load"],
                      data["gpu_mem_used_mib"], data["gpu_mem_total_mib"], devices)


def report_from_dict(data: dict) -> UserLoadReport:
    """Rebuild a report from ``report_to_dict`` output (or parsed JSON)."""
    jobs = tuple(JobRecord(**j) for j in data["jobs"])
    nodes = tuple(
        NodeReport(**{k: v for k, v in n.items() if k != "gpu"},
                   gpu=_gpu_from_dict(n["hostname"], n["gpu"]))
        for n in data["nodes"]
    )
    advisories = tuple(
        Advisory(AdvisoryKind(a["kind"]), a["hostname"], a["message"], a["observed"], a["threshold"])
        for a in data["advisories"]
    )
    return UserLoadReport(data["user"], data["collected_at"], jobs, nodes, advisories)


def render(report: UserLoadReport, options: RenderOptions) -> str:
    if options.format is OutputFormat.JSON:
        return render_json(report)
    return render_table(report, options)
