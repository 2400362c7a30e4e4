"""Remote ``nvidia-smi`` snapshots, one ssh call per node.

Each call is a single instantaneous sample; nothing here averages over time.
Failures never raise: a node that cannot be queried comes back as
``GpuNodeResult.failed(reason)`` so the report still renders.
"""

from __future__ import annotations

from .model import GpuNodeResult, GpuSample
from .transport import (CommandResult, CommandSpec, CommandTimeout, FixtureMiss,
                        SpawnFailure, Transport, TransportError)

NVIDIA_SMI = "nvidia-smi"
QUERY_FIELDS = ("index", "utilization.gpu", "memory.used", "memory.total", "power.draw")
NVIDIA_SMI_ARGS = (
    f"--query-gpu={','.join(QUERY_FIELDS)}",
    "--format=csv,noheader,nounits",
)
NOT_AVAILABLE = {"N/A", "[N/A]", "[Not Supported]", "Not Supported"}

# Reasons carried in GpuNodeResult.unreachable
REASON_TIMEOUT = "timeout"
REASON_UNREACHABLE = "unreachable"


class GpuParseError(ValueError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        super().__init__(f"parse: line {line_no}")
        self.reason = reason


def gpu_query_spec(host: str) -> CommandSpec:
    return CommandSpec(NVIDIA_SMI, NVIDIA_SMI_ARGS, host=host)


def _int_field(value: str, name: str) -> int:
    if not value.isdigit():
        raise ValueError(f"{name} {value!r} is not an integer")
    return int(value)


def parse_gpu_csv(text: str, node: str) -> list[GpuSample]:
    """Parse ``index, util, mem.used, mem.total, power`` rows into samples.

    Raises GpuParseError naming the first bad line.  Utilization outside
    [0, 100] is rejected, not clamped.
    """
    samples = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = [c.strip() for c in line.split(",")]
        try:
            if len(cells) != len(QUERY_FIELDS):
                raise ValueError(f"expected {len(QUERY_FIELDS)} fields, got {len(cells)}")
            index = _int_field(cells[0], "index")
            util = float(cells[1])
            used = _int_field(cells[2], "memory.used")
            total = _int_field(cells[3], "memory.total")
            power = 0.0 if cells[4] in NOT_AVAILABLE else float(cells[4])
            samples.append(GpuSample(node, index, util, used, total, power))
        except ValueError as exc:
            raise GpuParseError(line_no, str(exc)) from None
    samples.sort(key=lambda s: s.index)
    indices = [s.index for s in samples]
    if len(set(indices)) != len(indices):
        raise GpuParseError(len(text.splitlines()), "duplicate GPU index")
    return samples


def format_gpu_csv(samples) -> str:
    """Inverse of parse_gpu_csv, in nvidia-smi's own layout."""
    return "".join(
        f"{s.index}, {s.util_pct:g}, {s.mem_used_mib}, {s.mem_total_mib}, {s.power_w:.2f}\n"
        for s in samples
    )


def result_from_command(host: str, outcome: CommandResult | TransportError) -> GpuNodeResult:
    """Map one transport outcome onto a GpuNodeResult."""
    if isinstance(outcome, CommandTimeout):
        return GpuNodeResult.failed(REASON_TIMEOUT)
    if isinstance(outcome, FixtureMiss):
        return GpuNodeResult.failed(REASON_UNREACHABLE)
    if isinstance(outcome, SpawnFailure):
        return GpuNodeResult.failed(f"spawn: {outcome}")
    if isinstance(outcome, TransportError):
        return GpuNodeResult.failed(str(outcome))
    if outcome.exit_code != 0:
        # ssh reports connection failures as 255
        if outcome.exit_code == 255:
            return GpuNodeResult.failed(REASON_UNREACHABLE)
        return GpuNodeResult.failed(f"exit {outcome.exit_code}")
    try:
        return GpuNodeResult(tuple(parse_gpu_csv(outcome.text, host)))
    except GpuParseError as exc:
        return GpuNodeResult.failed(str(exc))


def query_node_gpus(host: str, transport: Transport) -> GpuNodeResult:
    if not host:
        raise ValueError("host must be non-empty")
    try:
        outcome = transport.run(gpu_query_spec(host))
    except TransportError as exc:
        outcome = exc
    return result_from_command(host, outcome)


def collect_gpu_usage(hosts, transport: Transport) -> dict[str, GpuNodeResult]:
    """Query every host concurrently, bounded by the transport's fan-out limit."""
    hosts = list(hosts)
    outcomes = transport.run_many_remote([gpu_query_spec(h) for h in hosts])
    return {host: result_from_command(host, outcomes[host]) for host in hosts}
