import json
from pathlib import Path

import pytest

from hpcload.fixtures import (InvalidScenario, IoFailure, JobSpec, LoadProfile, Scenario,
                              generate)
from hpcload.hostlist import expand_hostlist
from hpcload.scheduler import parse_sinfo_nodes, parse_squeue


def tree_bytes(root: Path):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_manifest_lists_written_files(tmp_path):
    written = generate(Scenario(seed=3, node_count=4, gpus_per_node=1), tmp_path / "fx")
    assert written == sorted(tree_bytes(tmp_path / "fx"))
    assert Path("expected.json") in written


def test_seed_determinism(tmp_path):
    s = Scenario(seed=11, node_count=12, gpus_per_node=4, user_jobs=(JobSpec(6, 2, 3), JobSpec(4)),
                 jupyter_nodes=3, unreachable_nodes=frozenset({2}))
    generate(s, tmp_path / "a")
    generate(s, tmp_path / "b")
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    generate(Scenario(seed=12, node_count=12, gpus_per_node=4), tmp_path / "c")
    assert tree_bytes(tmp_path / "a") != tree_bytes(tmp_path / "c")


@pytest.mark.parametrize("seed", range(10))
def test_consistency(tmp_path, seed):
    s = Scenario(seed=seed, node_count=10, gpus_per_node=2,
                 user_jobs=(JobSpec(16, 1, 2), JobSpec(20, 1, 3), JobSpec(12, 0, 1)))
    generate(s, tmp_path)
    nodes = {n.hostname: n for n in parse_sinfo_nodes((tmp_path / "sinfo.out").read_text())}
    jobs = parse_squeue((tmp_path / "squeue.out").read_text(), s.user)
    per_node = {}
    for job, spec in zip(jobs, s.user_jobs):
        hosts = expand_hostlist(job.nodelist)
        assert len(hosts) == spec.node_span
        for h in hosts:
            assert h in nodes
            per_node[h] = per_node.get(h, 0) + spec.cpus
    for host, cpus in per_node.items():
        assert nodes[host].cpus_alloc == cpus <= nodes[host].cpus_total


def test_balanced_profile_lands_in_band(tmp_path):
    generate(Scenario(seed=1, node_count=3, load_profile=LoadProfile.BALANCED,
                      user_jobs=(JobSpec(8, 0, 3),)), tmp_path)
    expected = json.loads((tmp_path / "expected.json").read_text())
    assert expected["nodes"]
    assert all(50 <= round(n["load_ratio"] * 100) <= 150 for n in expected["nodes"])
    assert expected["advisories"] == []


def test_no_gpus_means_no_gpu_dir(tmp_path):
    generate(Scenario(seed=1, node_count=3, gpus_per_node=0), tmp_path)
    assert not (tmp_path / "gpu").exists()
    expected = json.loads((tmp_path / "expected.json").read_text())
    assert all(n["gpu"] == {"unreachable": "unreachable"} for n in expected["nodes"])


def test_unreachable_node_has_no_gpu_file(tmp_path):
    generate(Scenario(seed=1, node_count=3, gpus_per_node=2, unreachable_nodes=frozenset({1})), tmp_path)
    assert not (tmp_path / "gpu" / "node1.out").exists()
    assert (tmp_path / "gpu" / "node0.out").exists() and (tmp_path / "gpu" / "node2.out").exists()


def test_padding(tmp_path):
    generate(Scenario(seed=1, node_count=12, pad=3, user_jobs=(JobSpec(4, 0, 12),)), tmp_path)
    (line,) = (tmp_path / "squeue.out").read_text().splitlines()
    assert line.split("|")[3] == "node[000-011]"


@pytest.mark.parametrize("scenario", [
    Scenario(seed=0, node_count=0),
    Scenario(seed=0, node_count=2, user_jobs=(JobSpec(4, 0, 3),)),
    Scenario(seed=0, node_count=2, unreachable_nodes=frozenset({2})),
    Scenario(seed=0, node_count=2, user_jobs=(JobSpec(4, 1),)),
    Scenario(seed=0, node_count=2, user_jobs=(JobSpec(100),)),
    Scenario(seed=0, node_count=1, user_jobs=(JobSpec(30), JobSpec(30))),
])
def test_invalid_scenarios(tmp_path, scenario):
    with pytest.raises(InvalidScenario):
        generate(scenario, tmp_path)


def test_refuses_non_empty_dir(tmp_path):
    (tmp_path / "stale.out").write_text("x")
    with pytest.raises(IoFailure):
        generate(Scenario(seed=0, node_count=1), tmp_path)
