"""Per-user snapshot of CPU, memory and GPU load on SLURM nodes."""

from .aggregate import AdvisoryThresholds, build_report
from .hostlist import MalformedHostlist, expand_hostlist, hostlist_cardinality
from .model import (Advisory, AdvisoryKind, GpuNodeResult, GpuSample, JobRecord, NodeReport,
                    NodeStatus, UserLoadReport)
from .transport import CommandSpec, Transport, TransportConfig

__version__ = "0.1.0"

__all__ = [
    "Advisory",
    "AdvisoryKind",
    "AdvisoryThresholds",
    "CommandSpec",
    "GpuNodeResult",
    "GpuSample",
    "JobRecord",
    "MalformedHostlist",
    "NodeReport",
    "NodeStatus",
    "Transport",
    "TransportConfig",
    "UserLoadReport",
    "build_report",
    "expand_hostlist",
    "hostlist_cardinality",
]
