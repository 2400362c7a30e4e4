"""``hpcload``: snapshot the load on every node running your SLURM jobs.

Exit codes: 0 success (including "no running jobs"), 1 collection failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import getpass
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .aggregate import DEFAULT_GPU_USED_MEM_FLOOR, RATIO_DENOMINATORS, AdvisoryThresholds, build_report
from .gpu import collect_gpu_usage
from .hostlist import MalformedHostlist
from .model import HpcloadError
from .render import ColorMode, OutputFormat, RenderOptions, iso_utc, render
from .scheduler import filter_nodes_for_user, list_partition_nodes, list_user_jobs, snapshot_all_nodes
from .transport import Transport, TransportConfig

FIXTURE_ENV = "HPCLOAD_FIXTURE"
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

GUIDANCE = """\
reading the report:
  LOAD     5-minute load average of the node.
  LOAD%    LOAD over your allocated cores.  Aim for 50-150%.  Below that you
           can likely use more of the node (more threads, or more jobs or
           processes per node); well above it the node risks slowing down.
  MEM      memory in use plus page cache, so it overstates what your job
           needs.  Check the real figure with htop on the node, or with
           sacct once the job has finished.
  GPULOAD  sum of GPU utilization over 100: two fully busy GPUs read 2.00.
           It is a single instantaneous sample; rerun (or use --watch) a few
           times before drawing conclusions.

exit status: 0 ok, 1 could not collect data, 2 bad arguments
"""


class UsageError(Exception):
    exit_code = EXIT_USAGE


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass(frozen=True)
class CliConfig:
    user: str
    gpu_mode: bool = False
    format: OutputFormat = OutputFormat.TABLE
    color: ColorMode = ColorMode.AUTO
    watch_s: int | None = None
    transport: TransportConfig = field(default_factory=TransportConfig)
    jupyter_partition: str = "jupyter"
    thresholds: AdvisoryThresholds = AdvisoryThresholds()
    ratio_denominator: str = "alloc"
    gpu_used_mem_floor: int = DEFAULT_GPU_USED_MEM_FLOOR


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _backend(text: str) -> Path | None:
    if text == "live":
        return None
    if text.startswith("fixture:") and len(text) > len("fixture:"):
        return Path(text[len("fixture:"):])
    raise argparse.ArgumentTypeError("expected 'live' or 'fixture:PATH'")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="hpcload",
        description="Show CPU, memory and GPU load on the nodes running your SLURM jobs.",
        epilog=GUIDANCE + "\nrun 'hpcload gen-fixture --help' to build a synthetic cluster.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-u", "--user", help="whose jobs to show (default: you)")
    p.add_argument("-g", "--gpu", dest="gpu_mode", action="store_true",
                   help="also query GPUs on each node over ssh")
    p.add_argument("--format", choices=[f.value for f in OutputFormat], default="table")
    p.add_argument("--color", choices=[c.value for c in ColorMode], default="auto")
    p.add_argument("--watch", type=_positive_int, metavar="N",
                   help="repeat every N seconds until interrupted")
    p.add_argument("--backend", type=_backend, metavar="live|fixture:PATH",
                   help=f"where commands run (default: live, or ${FIXTURE_ENV} if set)")
    p.add_argument("--timeout", type=_positive_int, default=5, metavar="S",
                   help="seconds to wait for each node's GPU query (default: 5)")
    p.add_argument("--max-parallel", type=_positive_int, default=16, metavar="N",
                   help="maximum concurrent ssh sessions (default: 16)")
    p.add_argument("--jupyter-partition", default="jupyter", metavar="NAME",
                   help="partition whose nodes get a [jupyter] badge (default: jupyter)")
    p.add_argument("--cpu-low", type=_non_negative_float, default=0.5, metavar="F",
                   help="hint when load/cores is below F (default: 0.5)")
    p.add_argument("--cpu-high", type=_non_negative_float, default=1.5, metavar="F",
                   help="hint when load/cores is above F (default: 1.5)")
    p.add_argument("--gpu-low", type=_non_negative_float, default=0.1, metavar="F",
                   help="hint when mean GPU utilization is below F (default: 0.1)")
    p.add_argument("--gpu-used-mem-floor", type=int, default=DEFAULT_GPU_USED_MEM_FLOOR,
                   metavar="MIB", help="an idle GPU holding more than this counts as used (default: 64)")
    p.add_argument("--ratio-denominator", choices=RATIO_DENOMINATORS, default="alloc",
                   help="divide load by allocated or total cores (default: alloc)")
    return p


def parse_args(argv, environ=None) -> CliConfig:
    environ = os.environ if environ is None else environ
    args = build_parser().parse_args(argv)
    fixture_root = args.backend
    if args.backend is None and "--backend" not in argv and environ.get(FIXTURE_ENV):
        fixture_root = Path(environ[FIXTURE_ENV])
    try:
        thresholds = AdvisoryThresholds(args.cpu_low, args.cpu_high, args.gpu_low)
    except ValueError as exc:
        raise UsageError(f"hpcload: error: {exc}") from None
    if args.gpu_used_mem_floor < 0:
        raise UsageError("hpcload: error: --gpu-used-mem-floor must be >= 0")
    user = args.user or environ.get("USER") or environ.get("LOGNAME") or getpass.getuser()
    return CliConfig(
        user=user,
        gpu_mode=args.gpu_mode,
        format=OutputFormat(args.format),
        color=ColorMode(args.color),
        watch_s=args.watch,
        transport=TransportConfig(
            fixture_root=fixture_root,
            remote_timeout_s=args.timeout,
            max_parallel_remote=args.max_parallel,
        ),
        jupyter_partition=args.jupyter_partition,
        thresholds=thresholds,
        ratio_denominator=args.ratio_denominator,
        gpu_used_mem_floor=args.gpu_used_mem_floor,
    )


def default_clock(environ=None):
    """time.time, unless SOURCE_DATE_EPOCH pins the report timestamp."""
    environ = os.environ if environ is None else environ
    pinned = environ.get("SOURCE_DATE_EPOCH")
    if pinned:
        value = float(pinned)
        return lambda: value
    return time.time


def collect(config: CliConfig, clock, transport: Transport | None = None, err=None):
    """Steps 1-5 of the pipeline up to (not including) rendering."""
    transport = transport or Transport(config.transport)
    jupyter = list_partition_nodes(config.jupyter_partition, transport)
    jobs = list_user_jobs(config.user, transport)
    running = [j for j in jobs if j.running]
    nodes = []
    if running:
        filtered = filter_nodes_for_user(snapshot_all_nodes(transport), running)
        nodes = filtered.nodes
        if err is not None:
            for host in filtered.missing:
                print(f"hpcload: warning: node {host} runs a job but sinfo does not list it", file=err)
    gpu_results = None
    if config.gpu_mode:
        gpu_results = collect_gpu_usage([n.hostname for n in nodes], transport)
    return build_report(
        config.user, jobs, nodes, gpu_results, jupyter, clock, config.thresholds,
        ratio_denominator=config.ratio_denominator,
        gpu_used_mem_floor=config.gpu_used_mem_floor,
    )


def _render_options(config: CliConfig, out) -> RenderOptions:
    color = config.color
    if color is ColorMode.AUTO:
        tty = hasattr(out, "isatty") and out.isatty()
        color = ColorMode.ALWAYS if tty and not os.environ.get("NO_COLOR") else ColorMode.NEVER
    return RenderOptions(gpu_mode=config.gpu_mode, format=config.format, color=color)


def run_once(config: CliConfig, clock=None, out=None, err=None, transport=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    clock = clock or default_clock()
    try:
        report = collect(config, clock, transport, err)
    except (HpcloadError, MalformedHostlist) as exc:
        print(f"hpcload: error: {exc}", file=err)
        return EXIT_FAILURE
    except Exception as exc:  # never show a traceback to the user
        print(f"hpcload: internal error: {type(exc).__name__}: {exc}", file=err)
        return EXIT_FAILURE
    out.write(render(report, _render_options(config, out)))
    out.flush()
    return EXIT_OK


def run_watch(config: CliConfig, clock=None, out=None, err=None, sleep=time.sleep,
              max_iterations: int | None = None) -> int:
    """Rerun the whole pipeline every ``watch_s`` seconds; Ctrl-C exits 0.

    Iteration ``k`` reads numbered fixture files (``squeue.k.out``) when the
    backend is a fixture tree.
    """
    out = out or sys.stdout
    clock = clock or default_clock()
    iteration = 1
    try:
        while max_iterations is None or iteration <= max_iterations:
            out.write(f"===== {iso_utc(clock())} =====\n")
            step = replace(config, transport=replace(config.transport, iteration=iteration))
            run_once(step, clock, out, err)
            iteration += 1
            if max_iterations is None or iteration <= max_iterations:
                sleep(config.watch_s)
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def main(argv=None, *, clock=None, out=None, err=None, sleep=time.sleep) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    err = err or sys.stderr
    if argv[:1] == ["gen-fixture"]:
        from .fixtures import gen_fixture_main

        return gen_fixture_main(argv[1:], out=out, err=err)
    try:
        config = parse_args(argv)
    except UsageError as exc:
        print(build_parser().format_usage().rstrip(), file=err)
        print(exc, file=err)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    if config.watch_s:
        return run_watch(config, clock, out, err, sleep)
    try:
        return run_once(config, clock, out, err)
    except KeyboardInterrupt:
        print("hpcload: interrupted", file=err)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
