"""Query and parse SLURM: the user's running jobs and the node status table.

``sinfo`` cannot filter by user or nodelist, so the full node table is
fetched and narrowed to the user's nodes here.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

from .hostlist import MalformedHostlist, expand_hostlist, hostlist_cardinality
from .model import HpcloadError, JobRecord, NodeStatus
from .transport import CommandResult, CommandSpec, Transport, TransportError

logger = logging.getLogger(__name__)

SQUEUE_FORMAT = "%i|%P|%t|%N|%C|%b"
SINFO_FIELDS = (
    ("NodeHost", 40),
    ("CPUsState", 20),
    ("CPULoad", 12),
    ("Memory", 12),
    ("FreeMem", 12),
    ("StateCompact", 10),
)
SINFO_FORMAT = ",".join(f"{name}:{width}" for name, width in SINFO_FIELDS)
PARTITION_FORMAT = "NodeList:200"
NO_VALUE = {"N/A", "n/a", "(null)"}


def squeue_args(user: str) -> tuple[str, ...]:
    return ("-h", "-u", user, "-t", "R", "-o", SQUEUE_FORMAT)


def sinfo_args() -> tuple[str, ...]:
    return ("-h", "-N", "-O", SINFO_FORMAT)


def partition_args(partition: str) -> tuple[str, ...]:
    return ("-h", "-p", partition, "-O", PARTITION_FORMAT)


@dataclass(frozen=True)
class RawParseError:
    line_no: int
    line: str
    reason: str

    def __str__(self):
        return f"line {self.line_no}: {self.reason}: {self.line!r}"


class SchedulerUnavailable(HpcloadError):
    pass


class ParseFailure(HpcloadError):
    def __init__(self, command: str, errors: list[RawParseError]):
        self.command = command
        self.errors = list(errors)
        first = self.errors[0] if self.errors else "no detail"
        more = f" (+{len(self.errors) - 1} more)" if len(self.errors) > 1 else ""
        super().__init__(f"cannot parse {command} output: {first}{more}")


class FilteredNodes(NamedTuple):
    nodes: list[NodeStatus]
    missing: list[str]  # job hostnames that sinfo did not report


def _run_scheduler(transport: Transport, program: str, args) -> CommandResult:
    try:
        result = transport.run(CommandSpec(program, tuple(args)))
    except TransportError as exc:
        raise SchedulerUnavailable(f"{program} failed: {exc}") from exc
    if result.exit_code != 0:
        detail = result.error_text.splitlines()[0] if result.error_text else "no stderr"
        raise SchedulerUnavailable(f"{program} exited with status {result.exit_code}: {detail}")
    return result


def parse_gres_gpus(tres: str) -> int:
    """GPU count per node from a tres-per-node string such as ``gres/gpu:2``."""
    total = 0
    for token in tres.split(","):
        token = token.strip().replace("=", ":")
        for prefix in ("gres/", "gres:"):
            if token.startswith(prefix):
                token = token[len(prefix):]
        if token != "gpu" and not token.startswith("gpu:"):
            continue
        parts = token.split(":")
        count = parts[-1] if len(parts) > 1 else "1"
        # "gpu:a100" names a type with the implicit count 1
        if not count.isdigit():
            count = "1" if len(parts) == 2 else count
        total += int(count)
    return total


def _parse_job_line(line: str, user: str) -> JobRecord:
    fields = line.split("|")
    if len(fields) != 6:
        raise ValueError(f"expected 6 '|'-separated fields, got {len(fields)}")
    job_id, partition, state, nodelist, cpus, tres = (f.strip() for f in fields)
    if not job_id:
        raise ValueError("empty job id")
    if not cpus.isdigit():
        raise ValueError(f"CPU count {cpus!r} is not an integer")
    if nodelist:
        hostlist_cardinality(nodelist)
    try:
        gpus = parse_gres_gpus(tres)
    except ValueError:
        raise ValueError(f"bad GPU request {tres!r}") from None
    return JobRecord(job_id, user, partition, state, nodelist, int(cpus), gpus)


def parse_squeue(text: str, user: str) -> list[JobRecord]:
    """Parse ``squeue -o '%i|%P|%t|%N|%C|%b'`` output; all lines or nothing."""
    jobs, errors = [], []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            jobs.append(_parse_job_line(line, user))
        except ValueError as exc:
            errors.append(RawParseError(line_no, line, str(exc)))
    if errors:
        raise ParseFailure("squeue", errors)
    return jobs


def list_user_jobs(user: str, transport: Transport) -> list[JobRecord]:
    if not user:
        raise ValueError("user must be non-empty")
    result = _run_scheduler(transport, "squeue", squeue_args(user))
    return parse_squeue(result.text, user)


def _split_sinfo_row(line: str) -> list[str]:
    cells = line.split()
    if len(cells) == len(SINFO_FIELDS):
        return cells
    # Fields wider than their column run together; fall back to the widths.
    cells, pos = [], 0
    for _, width in SINFO_FIELDS:
        cells.append(line[pos:pos + width].strip())
        pos += width
    if line[pos:].strip():
        cells[-1] += line[pos:].strip()
    return cells


def _parse_node_line(line: str) -> NodeStatus:
    host, cpus_state, load, memory, free, state = _split_sinfo_row(line)
    if not host:
        raise ValueError("missing hostname")
    parts = cpus_state.split("/")
    if len(parts) != 4 or not all(p.isdigit() for p in parts):
        raise ValueError(f"CPUsState {cpus_state!r} is not A/I/O/T")
    alloc, _idle, _other, total = map(int, parts)
    if not memory.isdigit():
        raise ValueError(f"Memory {memory!r} is not an integer")
    mem_total = int(memory)
    if free in NO_VALUE:
        mem_free = mem_total
    elif free.isdigit():
        # FreeMem is measured, Memory is configured; the former can be larger
        mem_free = min(int(free), mem_total)
    else:
        raise ValueError(f"FreeMem {free!r} is not an integer")
    load_known = load not in NO_VALUE
    try:
        load_5min = float(load) if load_known else 0.0
    except ValueError:
        raise ValueError(f"CPULoad {load!r} is not a number") from None
    if load_5min < 0 or load_5min != load_5min:
        raise ValueError(f"CPULoad {load!r} out of range")
    return NodeStatus(host, total, alloc, load_5min, mem_total, mem_free, state, load_known)


def parse_sinfo_nodes(text: str) -> list[NodeStatus]:
    """Parse the node-oriented ``sinfo -N -O`` table, dropping repeated rows.

    A node in several partitions is listed once per partition; the first row
    wins.
    """
    nodes: dict[str, NodeStatus] = {}
    errors = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            node = _parse_node_line(line)
        except ValueError as exc:
            errors.append(RawParseError(line_no, line, str(exc)))
            continue
        nodes.setdefault(node.hostname, node)
    if errors:
        raise ParseFailure("sinfo", errors)
    return list(nodes.values())


def snapshot_all_nodes(transport: Transport) -> list[NodeStatus]:
    result = _run_scheduler(transport, "sinfo", sinfo_args())
    nodes = parse_sinfo_nodes(result.text)
    if not nodes:
        raise SchedulerUnavailable("sinfo returned no nodes")
    return nodes


def filter_nodes_for_user(all_nodes, jobs) -> FilteredNodes:
    """Keep the nodes that run at least one of the jobs, sorted by hostname."""
    wanted = {host for job in jobs if job.running for host in expand_hostlist(job.nodelist)}
    by_name = {node.hostname: node for node in all_nodes}
    nodes = [by_name[h] for h in sorted(wanted) if h in by_name]
    missing = sorted(wanted - by_name.keys())
    for host in missing:
        logger.warning("node %s runs a job but is not reported by sinfo", host)
    return FilteredNodes(nodes, missing)


def list_partition_nodes(partition: str, transport: Transport) -> set[str]:
    """Hostnames in ``partition``; an unknown partition yields an empty set."""
    if not partition:
        raise ValueError("partition must be non-empty")
    result = _run_scheduler(transport, "sinfo", partition_args(partition))
    hosts: set[str] = set()
    for line in result.text.splitlines():
        line = line.strip()
        if line:
            hosts.update(expand_hostlist(line))
    return hosts


__all__ = [
    "FilteredNodes",
    "MalformedHostlist",
    "ParseFailure",
    "RawParseError",
    "SchedulerUnavailable",
    "filter_nodes_for_user",
    "list_partition_nodes",
    "list_user_jobs",
    "parse_gres_gpus",
    "parse_sinfo_nodes",
    "parse_squeue",
    "snapshot_all_nodes",
]
