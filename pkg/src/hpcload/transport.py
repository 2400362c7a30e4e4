"""Run external commands locally, over ssh, or from an on-disk fixture tree.

Every scheduler and GPU query goes through :class:`Transport`.  In fixture
mode nothing is spawned: a command is resolved to a file by its logical kind
(``squeue``, ``sinfo``, ``sinfo_partitions``, ``gpu/<host>``)::

    <root>/squeue.out             stdout of squeue
    <root>/sinfo.out              stdout of the node status query
    <root>/sinfo_partitions.out   stdout of the partition node query
    <root>/gpu/<host>.out         stdout of nvidia-smi on <host>

A sibling ``<name>.exit`` holds a non-zero exit code, ``<name>.err`` the
stderr bytes, and ``<name>.timeout`` (any content) makes the call time out.
For watch iteration ``k`` the file ``<name>.<k>.out`` wins over
``<name>.out`` when it exists.
"""

from __future__ import annotations

import logging
import os
import signal
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .model import HpcloadError

logger = logging.getLogger(__name__)

# program name -> fixture directory for remote commands
REMOTE_FIXTURE_DIRS = {"nvidia-smi": "gpu"}


class TransportError(HpcloadError):
    pass


class SpawnFailure(TransportError):
    pass


class CommandTimeout(TransportError):
    def __init__(self, target: str, seconds: float):
        self.target = target
        self.seconds = seconds
        super().__init__(f"{target}: no answer within {seconds:g}s")


class FixtureMiss(TransportError):
    def __init__(self, path: Path):
        self.path = path
        super().__init__(f"no fixture file {path}")


@dataclass(frozen=True)
class CommandSpec:
    program: str
    args: tuple[str, ...] = ()
    host: str | None = None  # None runs locally

    def __post_init__(self):
        if not self.program:
            raise ValueError("program must be non-empty")
        if self.host == "":
            raise ValueError("remote host must be non-empty")
        object.__setattr__(self, "args", tuple(self.args))

    @property
    def remote(self) -> bool:
        return self.host is not None

    @property
    def target(self) -> str:
        return self.host or "localhost"


@dataclass(frozen=True)
class CommandResult:
    exit_code: int
    stdout: bytes = b""
    stderr: bytes = b""
    duration_ms: int = 0

    @property
    def text(self) -> str:
        return self.stdout.decode("utf-8", errors="replace")

    @property
    def error_text(self) -> str:
        return self.stderr.decode("utf-8", errors="replace").strip()


@dataclass(frozen=True)
class TransportConfig:
    fixture_root: Path | None = None  # None selects live execution
    remote_timeout_s: int = 5
    max_parallel_remote: int = 16
    ssh_extra_args: tuple[str, ...] | None = None
    iteration: int = 1

    def __post_init__(self):
        if self.remote_timeout_s < 1:
            raise ValueError("remote_timeout_s must be >= 1")
        if self.max_parallel_remote < 1:
            raise ValueError("max_parallel_remote must be >= 1")
        if self.fixture_root is not None:
            object.__setattr__(self, "fixture_root", Path(self.fixture_root))

    @property
    def live(self) -> bool:
        return self.fixture_root is None

    @property
    def ssh_args(self) -> tuple[str, ...]:
        if self.ssh_extra_args is not None:
            return tuple(self.ssh_extra_args)
        return ("-o", "BatchMode=yes", "-o", f"ConnectTimeout={self.remote_timeout_s}")


def ssh_command(spec: CommandSpec, config: TransportConfig) -> list[str]:
    return ["ssh", *config.ssh_args, spec.host, spec.program, *spec.args]


def fixture_name(spec: CommandSpec) -> str:
    """Logical fixture key for a command, independent of its argument vector."""
    program = os.path.basename(spec.program)
    if spec.remote:
        return f"{REMOTE_FIXTURE_DIRS.get(program, program)}/{spec.host}"
    if program == "sinfo" and "-p" in spec.args:
        return "sinfo_partitions"
    return program


@dataclass
class Transport:
    config: TransportConfig = field(default_factory=TransportConfig)

    def run(self, spec: CommandSpec) -> CommandResult:
        """Run one command; non-zero exits are returned, not raised."""
        if self.config.live:
            return self._run_live(spec)
        return self._resolve_fixture(spec)

    def run_many_remote(self, specs) -> dict[str, CommandResult | TransportError]:
        """Run remote commands with bounded parallelism.

        The result has one entry per input host, in input order, holding
        either the result or the per-host error.
        """
        specs = list(specs)
        hosts = [s.host for s in specs]
        if any(h is None for h in hosts):
            raise ValueError("run_many_remote only takes remote commands")
        if len(set(hosts)) != len(hosts):
            raise ValueError("hosts must be distinct")
        if not specs:
            return {}

        def one(spec):
            try:
                return self.run(spec)
            except TransportError as exc:
                return exc

        workers = min(self.config.max_parallel_remote, len(specs))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, specs))
        return dict(zip(hosts, outcomes))

    def _run_live(self, spec: CommandSpec) -> CommandResult:
        if spec.remote:
            argv = ssh_command(spec, self.config)
            timeout = self.config.remote_timeout_s
        else:
            argv = [spec.program, *spec.args]
            timeout = None
        logger.debug("exec %s", argv)
        start = time.monotonic()
        try:
            proc = subprocess.Popen(
                argv,
                stdin=subprocess.DEVNULL,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                start_new_session=True,
            )
        except OSError as exc:
            raise SpawnFailure(f"cannot run {argv[0]}: {exc.strerror or exc}") from exc
        try:
            out, err = proc.communicate(timeout=timeout)
        except subprocess.TimeoutExpired:
            # kill the whole session so grandchildren holding the pipes die too
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            proc.communicate()
            raise CommandTimeout(spec.target, timeout) from None
        elapsed = int((time.monotonic() - start) * 1000)
        return CommandResult(proc.returncode, out, err, elapsed)

    def _fixture_path(self, name: str, ext: str) -> Path:
        root = self.config.fixture_root
        numbered = root / f"{name}.{self.config.iteration}{ext}"
        if numbered.exists():
            return numbered
        return root / f"{name}{ext}"

    def _resolve_fixture(self, spec: CommandSpec) -> CommandResult:
        root = self.config.fixture_root
        if not root.is_dir():
            raise FixtureMiss(root)
        name = fixture_name(spec)
        if self._fixture_path(name, ".timeout").exists():
            raise CommandTimeout(spec.target, self.config.remote_timeout_s)
        out_path = self._fixture_path(name, ".out")
        if not out_path.is_file():
            raise FixtureMiss(out_path)
        exit_path = self._fixture_path(name, ".exit")
        err_path = self._fixture_path(name, ".err")
        exit_code = int(exit_path.read_text().strip() or 0) if exit_path.is_file() else 0
        stderr = err_path.read_bytes() if err_path.is_file() else b""
        return CommandResult(exit_code, out_path.read_bytes(), stderr, 0)


def run(spec: CommandSpec, config: TransportConfig) -> CommandResult:
    return Transport(config).run(spec)


def run_many_remote(specs, config: TransportConfig) -> dict[str, CommandResult | TransportError]:
    return Transport(config).run_many_remote(specs)
