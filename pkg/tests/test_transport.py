import os
import stat
import sys
import threading
import time

import pytest

from hpcload.transport import (CommandResult, CommandSpec, CommandTimeout, FixtureMiss,
                               SpawnFailure, Transport, TransportConfig, fixture_name,
                               run, run_many_remote, ssh_command)


def fixture_config(root, **kw):
    return TransportConfig(fixture_root=root, **kw)


def test_fixture_passthrough(make_tree):
    root = make_tree({"squeue.out": "1|p|R|n1|1|N/A\n"})
    result = run(CommandSpec("squeue", ("-h", "-u", "bob")), fixture_config(root))
    assert result == CommandResult(0, b"1|p|R|n1|1|N/A\n", b"", 0)


def test_fixture_exit_and_stderr(make_tree):
    root = make_tree({"squeue.out": "", "squeue.exit": "1\n", "squeue.err": "slurm down\n"})
    result = run(CommandSpec("squeue"), fixture_config(root))
    assert result.exit_code == 1
    assert result.error_text == "slurm down"


def test_fixture_miss_for_remote_gpu_query(make_tree):
    root = make_tree({"squeue.out": ""})
    with pytest.raises(FixtureMiss) as info:
        run(CommandSpec("nvidia-smi", ("--query-gpu=index",), host="node01"), fixture_config(root))
    assert info.value.path == root / "gpu" / "node01.out"


def test_fixture_missing_root(tmp_path):
    with pytest.raises(FixtureMiss):
        run(CommandSpec("squeue"), fixture_config(tmp_path / "absent"))


def test_fixture_timeout_marker(make_tree):
    root = make_tree({"gpu/n1.timeout": ""})
    with pytest.raises(CommandTimeout):
        run(CommandSpec("nvidia-smi", host="n1"), fixture_config(root))


def test_fixture_keys_on_command_kind():
    assert fixture_name(CommandSpec("squeue", ("-u", "x"))) == "squeue"
    assert fixture_name(CommandSpec("/usr/bin/sinfo", ("-N",))) == "sinfo"
    assert fixture_name(CommandSpec("sinfo", ("-h", "-p", "jupyter"))) == "sinfo_partitions"
    assert fixture_name(CommandSpec("nvidia-smi", ("--anything",), host="g1")) == "gpu/g1"


def test_numbered_iteration_files(make_tree):
    root = make_tree({"squeue.out": "base\n", "squeue.2.out": "second\n"})
    spec = CommandSpec("squeue")
    assert run(spec, fixture_config(root, iteration=1)).stdout == b"base\n"
    assert run(spec, fixture_config(root, iteration=2)).stdout == b"second\n"
    assert run(spec, fixture_config(root, iteration=3)).stdout == b"base\n"


def test_fixture_mode_is_deterministic(cluster3):
    specs = [CommandSpec("squeue"), CommandSpec("sinfo"), CommandSpec("nvidia-smi", host="node01")]
    t = Transport(fixture_config(cluster3))
    assert [t.run(s) for s in specs] == [t.run(s) for s in specs]


def test_spec_validation():
    with pytest.raises(ValueError):
        CommandSpec("")
    with pytest.raises(ValueError):
        CommandSpec("ls", host="")
    with pytest.raises(ValueError):
        TransportConfig(max_parallel_remote=0)
    with pytest.raises(ValueError):
        TransportConfig(remote_timeout_s=0)


def test_ssh_wrapping_always_batch_mode():
    cfg = TransportConfig(remote_timeout_s=7)
    argv = ssh_command(CommandSpec("nvidia-smi", ("-q",), host="n3"), cfg)
    assert argv == ["ssh", "-o", "BatchMode=yes", "-o", "ConnectTimeout=7", "n3", "nvidia-smi", "-q"]


# --- fan-out ----------------------------------------------------------------

def gpu_specs(hosts):
    return [CommandSpec("nvidia-smi", host=h) for h in hosts]


def test_run_many_remote_all_ok(make_tree):
    root = make_tree({f"gpu/n{i}.out": f"{i}\n" for i in range(3)})
    results = run_many_remote(gpu_specs(["n0", "n1", "n2"]), fixture_config(root))
    assert list(results) == ["n0", "n1", "n2"]
    assert [r.stdout for r in results.values()] == [b"0\n", b"1\n", b"2\n"]


def test_run_many_remote_isolates_failures(make_tree):
    root = make_tree({"gpu/n0.out": "x\n", "gpu/n2.out": "y\n"})
    results = run_many_remote(gpu_specs(["n0", "n1", "n2"]), fixture_config(root))
    assert set(results) == {"n0", "n1", "n2"}
    assert isinstance(results["n1"], FixtureMiss)
    assert results["n0"].stdout == b"x\n" and results["n2"].stdout == b"y\n"


def test_run_many_remote_rejects_bad_input():
    with pytest.raises(ValueError):
        Transport().run_many_remote([CommandSpec("ls")])
    with pytest.raises(ValueError):
        Transport().run_many_remote(gpu_specs(["a", "a"]))
    assert Transport().run_many_remote([]) == {}


class CountingTransport(Transport):
    """Fixture transport that records how many resolutions overlap."""

    def __init__(self, config, delay=0.005):
        super().__init__(config)
        self.delay = delay
        self.lock = threading.Lock()
        self.in_flight = 0
        self.peak = 0

    def _resolve_fixture(self, spec):
        with self.lock:
            self.in_flight += 1
            self.peak = max(self.peak, self.in_flight)
        try:
            time.sleep(self.delay)
            return super()._resolve_fixture(spec)
        finally:
            with self.lock:
                self.in_flight -= 1


@pytest.mark.parametrize("limit", [1, 4, 16])
def test_bounded_parallelism(make_tree, limit):
    hosts = [f"n{i:03d}" for i in range(100)]
    root = make_tree({f"gpu/{h}.out": "0, 1, 1, 2, 3\n" for h in hosts[::2]})
    t = CountingTransport(fixture_config(root, max_parallel_remote=limit))
    results = t.run_many_remote(gpu_specs(hosts))
    assert list(results) == hosts
    assert 1 <= t.peak <= limit
    if limit > 1:
        assert t.peak > 1  # the pool really runs concurrently


def test_result_independent_of_completion_order(make_tree):
    hosts = [f"h{i}" for i in range(20)]
    root = make_tree({f"gpu/{h}.out": h for h in hosts})

    class Jittery(Transport):
        def _resolve_fixture(self, spec):
            time.sleep((hash(spec.host) % 5) / 1000)
            return super()._resolve_fixture(spec)

    a = Jittery(fixture_config(root, max_parallel_remote=8)).run_many_remote(gpu_specs(hosts))
    b = Transport(fixture_config(root, max_parallel_remote=1)).run_many_remote(gpu_specs(hosts))
    assert a == b


# --- live mode --------------------------------------------------------------

def test_live_local_command():
    result = run(CommandSpec(sys.executable, ("-c", "import sys; print('hi'); sys.exit(3)")),
                 TransportConfig())
    assert result.exit_code == 3
    assert result.text == "hi\n"
    assert result.duration_ms >= 0


def test_live_spawn_failure():
    with pytest.raises(SpawnFailure):
        run(CommandSpec("definitely-not-a-program-xyz"), TransportConfig())


@pytest.fixture
def fake_ssh(tmp_path, monkeypatch):
    """Put a script named ssh first on PATH."""

    def install(body):
        bindir = tmp_path / "bin"
        bindir.mkdir(exist_ok=True)
        script = bindir / "ssh"
        script.write_text("#!/bin/sh\n" + body + "\n")
        script.chmod(script.stat().st_mode | stat.S_IEXEC)
        monkeypatch.setenv("PATH", f"{bindir}{os.pathsep}{os.environ['PATH']}")

    return install


def test_live_remote_goes_through_ssh(fake_ssh):
    fake_ssh('echo "$@"')
    result = run(CommandSpec("nvidia-smi", ("-L",), host="n9"), TransportConfig(remote_timeout_s=3))
    assert result.text.split() == ["-o", "BatchMode=yes", "-o", "ConnectTimeout=3", "n9", "nvidia-smi", "-L"]


def test_live_remote_timeout(fake_ssh):
    # stands in for a blackholed host: never answers
    fake_ssh("sleep 30")
    cfg = TransportConfig(remote_timeout_s=1)
    start = time.monotonic()
    with pytest.raises(CommandTimeout):
        run(CommandSpec("nvidia-smi", host="blackhole"), cfg)
    elapsed = time.monotonic() - start
    assert 1.0 <= elapsed <= 2.0


def test_live_missing_ssh(monkeypatch, tmp_path):
    monkeypatch.setenv("PATH", str(tmp_path))
    with pytest.raises(SpawnFailure):
        run(CommandSpec("nvidia-smi", host="n1"), TransportConfig())
