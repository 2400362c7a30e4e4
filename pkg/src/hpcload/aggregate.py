"""Join jobs, node status and GPU samples into a UserLoadReport.

Interpretation rules:

* CPU load is the 5-minute load average over allocated cores; the target
  band is 50-150 %, inclusive at both ends.
* Memory is used plus page cache, i.e. total minus the scheduler's free.
* GPU load is the sum of per-device utilization over 100, so two fully
  busy GPUs score 2.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass

from .model import (Advisory, AdvisoryKind, GpuNodeResult, GpuSample, GpuSummary,
                    GpuUnreachable, HpcloadError, JobRecord, NodeReport, NodeStatus,
                    UserLoadReport)
from .units import percent

DEFAULT_GPU_USED_MEM_FLOOR = 64
RATIO_DENOMINATORS = ("alloc", "total")


class InconsistentInput(HpcloadError):
    pass


@dataclass(frozen=True)
class AdvisoryThresholds:
    cpu_low: float = 0.50
    cpu_high: float = 1.50
    gpu_low: float = 0.10  # mean per-GPU utilization fraction

    def __post_init__(self):
        if not 0 < self.cpu_low < self.cpu_high:
            raise ValueError("need 0 < cpu_low < cpu_high")
        if self.gpu_low < 0:
            raise ValueError("gpu_low must be non-negative")


def normalized_gpu_load(samples: Iterable[GpuSample]) -> float:
    return sum(s.util_pct for s in samples) / 100


def memory_used_plus_cache(node: NodeStatus) -> int:
    # FreeMem already excludes page cache, so total - free counts it as used
    return node.mem_total_mib - node.mem_free_mib


def cpu_load_ratio(load_5min: float, cpus_alloc: int) -> float:
    return load_5min / max(cpus_alloc, 1)


def gpu_is_used(sample: GpuSample, mem_floor: int = DEFAULT_GPU_USED_MEM_FLOOR) -> bool:
    return sample.util_pct > 0 or sample.mem_used_mib > mem_floor


def summarize_gpus(samples, mem_floor: int = DEFAULT_GPU_USED_MEM_FLOOR) -> GpuSummary:
    samples = tuple(samples)
    return GpuSummary(
        gpus_total=len(samples),
        gpus_used=sum(gpu_is_used(s, mem_floor) for s in samples),
        gpu_load=normalized_gpu_load(samples),
        gpu_mem_used_mib=sum(s.mem_used_mib for s in samples),
        gpu_mem_total_mib=sum(s.mem_total_mib for s in samples),
        devices=samples,
    )


def advisory_message(kind: AdvisoryKind, hostname: str, observed: float, threshold: float) -> str:
    seen, target = percent(observed), percent(threshold)
    if kind is AdvisoryKind.CPU_UNDERUTILIZED:
        return (f"{hostname}: CPU load is {seen}% of its CPUs, below the {target}% target; "
                "run more threads or processes per node to use what you requested")
    if kind is AdvisoryKind.CPU_OVERLOADED:
        return (f"{hostname}: CPU load is {seen}% of its CPUs, above the {target}% target; "
                "the node risks slowing down, reduce threads or processes")
    return (f"{hostname}: GPUs average {seen}% utilization, below {target}%; "
            "see the documentation on optimizing GPU usage")


def make_advisory(kind: AdvisoryKind, hostname: str, observed: float, threshold: float) -> Advisory:
    return Advisory(kind, hostname, advisory_message(kind, hostname, observed, threshold),
                    observed, threshold)


def node_advisories(node: NodeReport, thresholds: AdvisoryThresholds) -> list[Advisory]:
    out = []
    if node.load_known:
        if node.load_ratio < thresholds.cpu_low:
            out.append(make_advisory(AdvisoryKind.CPU_UNDERUTILIZED, node.hostname,
                                     node.load_ratio, thresholds.cpu_low))
        elif node.load_ratio > thresholds.cpu_high:
            out.append(make_advisory(AdvisoryKind.CPU_OVERLOADED, node.hostname,
                                     node.load_ratio, thresholds.cpu_high))
    gpu = node.gpu
    if isinstance(gpu, GpuSummary) and gpu.gpus_total >= 1:
        mean = gpu.gpu_load / gpu.gpus_total
        if mean < thresholds.gpu_low:
            out.append(make_advisory(AdvisoryKind.GPU_UNDERUTILIZED, node.hostname,
                                     mean, thresholds.gpu_low))
    return out


def build_report(
    user: str,
    jobs: Iterable[JobRecord],
    filtered_nodes: Iterable[NodeStatus],
    gpu_results: Mapping[str, GpuNodeResult] | None,
    jupyter_nodes: Iterable[str],
    clock: Callable[[], float],
    thresholds: AdvisoryThresholds = AdvisoryThresholds(),
    *,
    ratio_denominator: str = "alloc",
    gpu_used_mem_floor: int = DEFAULT_GPU_USED_MEM_FLOOR,
) -> UserLoadReport:
    """Assemble the report.  ``gpu_results=None`` means GPU mode is off.

    Raises InconsistentInput if a GPU result or node does not belong to the
    user's running jobs.
    """
    if ratio_denominator not in RATIO_DENOMINATORS:
        raise ValueError(f"ratio_denominator must be one of {RATIO_DENOMINATORS}")
    jobs = tuple(jobs)
    nodes = sorted(filtered_nodes, key=lambda n: n.hostname)
    names = [n.hostname for n in nodes]
    if len(set(names)) != len(names):
        raise InconsistentInput("duplicate hostnames in node list")
    job_hosts = {h for job in jobs if job.running for h in job.hostnames()}
    stray = [h for h in names if h not in job_hosts]
    if stray:
        raise InconsistentInput(f"nodes not running any job: {', '.join(stray)}")
    if gpu_results is not None:
        unknown = sorted(set(gpu_results) - set(names))
        if unknown:
            raise InconsistentInput(f"GPU results for unknown nodes: {', '.join(unknown)}")
    jupyter = set(jupyter_nodes)

    reports = []
    for node in nodes:
        denom = node.cpus_alloc if ratio_denominator == "alloc" else node.cpus_total
        gpu = None
        if gpu_results is not None:
            result = gpu_results.get(node.hostname, GpuNodeResult.failed("not queried"))
            if result.reachable:
                gpu = summarize_gpus(result.samples, gpu_used_mem_floor)
            else:
                gpu = GpuUnreachable(result.unreachable)
        reports.append(NodeReport(
            hostname=node.hostname,
            cpus_alloc=node.cpus_alloc,
            cpus_total=node.cpus_total,
            load_5min=node.load_5min,
            load_ratio=cpu_load_ratio(node.load_5min, denom),
            mem_used_plus_cache_mib=memory_used_plus_cache(node),
            mem_total_mib=node.mem_total_mib,
            load_known=node.load_known,
            jupyter=node.hostname in jupyter,
            gpu=gpu,
        ))

    advisories = [a for r in reports for a in node_advisories(r, thresholds)]
    return UserLoadReport(user, clock(), jobs, tuple(reports), tuple(advisories))
