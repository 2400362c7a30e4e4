"""Value types shared by the collectors, the aggregator and the renderers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .hostlist import expand_hostlist

RUNNING_STATES = frozenset({"R", "RUNNING"})


class HpcloadError(Exception):
    """Base for errors that the CLI turns into a one-line diagnostic."""


@dataclass(frozen=True)
class JobRecord:
    """One job of the monitored user, as listed by ``squeue``.

    ``state`` is the scheduler's raw state code; only running jobs are
    resolved to nodes.  ``alloc_cpus`` is the job total, ``alloc_gpus`` the
    per-node GPU request.
    """

    job_id: str
    user: str
    partition: str
    state: str
    nodelist: str
    alloc_cpus: int
    alloc_gpus: int = 0

    def __post_init__(self):
        if not self.job_id:
            raise ValueError("job_id must be non-empty")
        if self.alloc_gpus < 0 or self.alloc_cpus < 0:
            raise ValueError(f"job {self.job_id}: negative allocation")
        if self.running:
            if not self.nodelist:
                raise ValueError(f"running job {self.job_id} has no nodelist")
            if self.alloc_cpus < 1:
                raise ValueError(f"running job {self.job_id} has no CPUs")

    @property
    def running(self) -> bool:
        return self.state in RUNNING_STATES

    def hostnames(self) -> list[str]:
        return expand_hostlist(self.nodelist) if self.nodelist else []


@dataclass(frozen=True)
class NodeStatus:
    """The scheduler's view of one node.

    ``load_known`` is false when the scheduler reported no load (``N/A``);
    ``load_5min`` is then 0 and must not be read as an idle node.
    """

    hostname: str
    cpus_total: int
    cpus_alloc: int
    load_5min: float
    mem_total_mib: int
    mem_free_mib: int
    node_state: str = ""
    load_known: bool = True

    def __post_init__(self):
        if self.cpus_total < 1 or not 0 <= self.cpus_alloc <= self.cpus_total:
            raise ValueError(f"{self.hostname}: bad CPU counts {self.cpus_alloc}/{self.cpus_total}")
        if not 0 <= self.mem_free_mib <= self.mem_total_mib:
            raise ValueError(f"{self.hostname}: free memory exceeds total")
        if self.load_5min < 0:
            raise ValueError(f"{self.hostname}: negative load")


@dataclass(frozen=True)
class GpuSample:
    node: str
    index: int
    util_pct: float
    mem_used_mib: int
    mem_total_mib: int
    power_w: float = 0.0

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("GPU index must be non-negative")
        if not 0 <= self.util_pct <= 100:
            raise ValueError(f"GPU utilization {self.util_pct} outside [0, 100]")
        if not 0 <= self.mem_used_mib <= self.mem_total_mib:
            raise ValueError(f"GPU memory used {self.mem_used_mib} exceeds total {self.mem_total_mib}")
        if self.power_w < 0:
            raise ValueError("negative power draw")


@dataclass(frozen=True)
class GpuNodeResult:
    """Outcome of one node's GPU query: samples, or the reason there are none."""

    samples: tuple[GpuSample, ...] = ()
    unreachable: str | None = None

    def __post_init__(self):
        indices = [s.index for s in self.samples]
        if indices != sorted(set(indices)):
            raise ValueError("GPU samples must have distinct ascending indices")
        if self.unreachable is not None and self.samples:
            raise ValueError("an unreachable node carries no samples")

    @classmethod
    def failed(cls, reason: str) -> GpuNodeResult:
        return cls(unreachable=reason)

    @property
    def reachable(self) -> bool:
        return self.unreachable is None


@dataclass(frozen=True)
class GpuSummary:
    gpus_total: int
    gpus_used: int
    gpu_load: float
    gpu_mem_used_mib: int
    gpu_mem_total_mib: int
    devices: tuple[GpuSample, ...] = ()


@dataclass(frozen=True)
class GpuUnreachable:
    reason: str


@dataclass(frozen=True)
class NodeReport:
    hostname: str
    cpus_alloc: int
    cpus_total: int
    load_5min: float
    load_ratio: float
    mem_used_plus_cache_mib: int
    mem_total_mib: int
    load_known: bool = True
    jupyter: bool = False
    # None when GPU collection was not requested
    gpu: GpuSummary | GpuUnreachable | None = None


class AdvisoryKind(str, enum.Enum):
    CPU_UNDERUTILIZED = "cpu_underutilized"
    CPU_OVERLOADED = "cpu_overloaded"
    GPU_UNDERUTILIZED = "gpu_underutilized"


@dataclass(frozen=True)
class Advisory:
    kind: AdvisoryKind
    hostname: str
    message: str
    observed: float
    threshold: float

    def __post_init__(self):
        below = self.kind in (AdvisoryKind.CPU_UNDERUTILIZED, AdvisoryKind.GPU_UNDERUTILIZED)
        if below and not self.observed < self.threshold:
            raise ValueError(f"{self.kind.value} needs observed < threshold")
        if not below and not self.observed > self.threshold:
            raise ValueError(f"{self.kind.value} needs observed > threshold")


@dataclass(frozen=True)
class UserLoadReport:
    user: str
    collected_at: float
    jobs: tuple[JobRecord, ...] = ()
    nodes: tuple[NodeReport, ...] = ()
    advisories: tuple[Advisory, ...] = field(default=())

    def __post_init__(self):
        names = [n.hostname for n in self.nodes]
        if any(a >= b for a, b in zip(names, names[1:])):
            raise ValueError("report nodes must be strictly sorted by hostname")
