"""Synthetic fixture clusters with a known-correct report.

``generate`` writes a fixture tree for the fixture transport together with
``expected.json``: the report ``hpcload -g --format json`` must print for the
scenario user at ``collected_at``.  The expected report is built from the
generator's own state, never by reading the files back, so a parser bug
cannot cancel out.
"""

from __future__ import annotations

import argparse
import enum
import json
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .aggregate import make_advisory
from .hostlist import compress_hostlist
from .model import AdvisoryKind, HpcloadError

# column widths of the sinfo -O query (NodeHost:40,CPUsState:20,...)
_SINFO_WIDTHS = (40, 20, 12, 12, 12, 10)
_MEM_SIZES = (96000, 192000, 384000)
_GPU_MEM_SIZES = (16160, 32768, 81920)
_CPU_LOW, _CPU_HIGH, _GPU_LOW, _GPU_MEM_FLOOR = 0.5, 1.5, 0.1, 64
UNREACHABLE_REASON = "unreachable"


class InvalidScenario(ValueError):
    pass


class IoFailure(HpcloadError):
    pass


class LoadProfile(str, enum.Enum):
    IDLE = "idle"
    BALANCED = "balanced"
    OVERLOADED = "overloaded"


# load / allocated cores drawn uniformly from these ranges
PROFILE_RATIOS = {
    LoadProfile.IDLE: (0.0, 0.3),
    LoadProfile.BALANCED: (0.6, 1.4),
    LoadProfile.OVERLOADED: (1.8, 3.0),
}

# per-device GPU utilization ranges for each profile
_PROFILE_GPU_UTIL = {
    LoadProfile.IDLE: (0, 8),
    LoadProfile.BALANCED: (30, 100),
    LoadProfile.OVERLOADED: (80, 100),
}


@dataclass(frozen=True)
class JobSpec:
    """One user job: ``cpus`` and ``gpus`` per node, on ``node_span`` nodes."""

    cpus: int
    gpus: int = 0
    node_span: int = 1


@dataclass(frozen=True)
class Scenario:
    seed: int
    node_count: int
    gpus_per_node: int = 0
    user_jobs: tuple[JobSpec, ...] = (JobSpec(8),)
    jupyter_nodes: int = 0
    unreachable_nodes: frozenset[int] = frozenset()
    load_profile: LoadProfile = LoadProfile.BALANCED
    user: str = "alice"
    cpus_per_node: int = 48
    prefix: str = "node"
    pad: int = 0
    collected_at: float = 1714564800.0

    def validate(self) -> None:
        if self.node_count < 1:
            raise InvalidScenario("node_count must be positive")
        if self.gpus_per_node < 0 or self.cpus_per_node < 1:
            raise InvalidScenario("bad per-node resources")
        if not 0 <= self.jupyter_nodes <= self.node_count:
            raise InvalidScenario("jupyter_nodes out of range")
        bad = [i for i in self.unreachable_nodes if not 0 <= i < self.node_count]
        if bad:
            raise InvalidScenario(f"unreachable node indices out of range: {sorted(bad)}")
        if not self.user:
            raise InvalidScenario("user must be non-empty")
        for job in self.user_jobs:
            if not 1 <= job.node_span <= self.node_count:
                raise InvalidScenario(f"node_span {job.node_span} exceeds node_count")
            if not 1 <= job.cpus <= self.cpus_per_node:
                raise InvalidScenario(f"job needs {job.cpus} CPUs per node")
            if not 0 <= job.gpus <= self.gpus_per_node:
                raise InvalidScenario(f"job needs {job.gpus} GPUs per node")

    def hostname(self, index: int) -> str:
        return f"{self.prefix}{str(index).zfill(self.pad)}"


@dataclass
class _Node:
    name: str
    cpus_total: int
    mem_total: int
    mem_free: int
    cpus_alloc: int = 0
    load_centi: int | None = 0  # None: scheduler reports N/A
    state: str = "idle"
    gpus: list = field(default_factory=list)  # (index, util, used, total, power_centi|None)
    gpu_file: bool = False


def _build_state(s: Scenario, rng: random.Random):
    nodes = []
    for i in range(s.node_count):
        mem = rng.choice(_MEM_SIZES)
        nodes.append(_Node(s.hostname(i), s.cpus_per_node, mem, rng.randint(0, mem)))

    free_cpus = [s.cpus_per_node] * s.node_count
    free_gpus = [s.gpus_per_node] * s.node_count
    placements = []
    for job in s.user_jobs:
        fits = [i for i in range(s.node_count) if free_cpus[i] >= job.cpus and free_gpus[i] >= job.gpus]
        if len(fits) < job.node_span:
            raise InvalidScenario("user jobs do not fit on the cluster")
        chosen = sorted(rng.sample(fits, job.node_span))
        for i in chosen:
            free_cpus[i] -= job.cpus
            free_gpus[i] -= job.gpus
        placements.append(chosen)
    user_nodes = sorted({i for chosen in placements for i in chosen})

    lo, hi = PROFILE_RATIOS[s.load_profile]
    for i, node in enumerate(nodes):
        if i in user_nodes:
            node.cpus_alloc = s.cpus_per_node - free_cpus[i]
            node.load_centi = round(rng.uniform(lo, hi) * node.cpus_alloc * 100)
            node.state = "alloc" if node.cpus_alloc == node.cpus_total else "mix"
            continue
        # other users' nodes; single-user scheduling keeps them off ours
        kind = rng.choice(("idle", "mix", "alloc", "down"))
        node.state = kind
        if kind == "down":
            node.load_centi = None
        else:
            node.cpus_alloc = {"idle": 0, "mix": rng.randint(1, node.cpus_total), "alloc": node.cpus_total}[kind]
            node.load_centi = rng.randint(0, 100 * 2 * node.cpus_total)

    ulo, uhi = _PROFILE_GPU_UTIL[s.load_profile]
    for i, node in enumerate(nodes):
        if s.gpus_per_node == 0 or i in s.unreachable_nodes:
            continue
        node.gpu_file = True
        gpu_total = rng.choice(_GPU_MEM_SIZES)
        for index in range(s.gpus_per_node):
            util = 0 if rng.random() < 0.15 else rng.randint(ulo, uhi)
            if util == 0:
                used = rng.choice((0, rng.randint(1, _GPU_MEM_FLOOR), rng.randint(_GPU_MEM_FLOOR + 1, gpu_total)))
            else:
                used = rng.randint(0, gpu_total)
            power = None if rng.random() < 0.1 else rng.randint(2000, 40000)
            node.gpus.append((index, util, used, gpu_total, power))
    return nodes, placements, user_nodes


def _sinfo_row(*cells) -> str:
    return "".join(str(c).ljust(w) for c, w in zip(cells, _SINFO_WIDTHS)).rstrip() + "\n"


def _job_lines(s: Scenario, placements):
    jobs = []
    for k, (job, chosen) in enumerate(zip(s.user_jobs, placements)):
        jobs.append({
            "job_id": str(1000 + k),
            "user": s.user,
            "partition": "gpu" if job.gpus else "normal",
            "state": "R",
            "nodelist": compress_hostlist(s.hostname(i) for i in chosen),
            "alloc_cpus": job.cpus * job.node_span,
            "alloc_gpus": job.gpus,
        })
    return jobs


def _expected_report(s: Scenario, nodes, jobs, user_nodes) -> dict:
    jupyter = set(range(s.jupyter_nodes))
    node_dicts, advisories = [], []
    for i in sorted(user_nodes, key=lambda i: nodes[i].name):
        node = nodes[i]
        load = node.load_centi / 100
        ratio = load / max(node.cpus_alloc, 1)
        if node.gpu_file:
            util_sum = sum(g[1] for g in node.gpus)
            gpu = {
                "gpus_total": len(node.gpus),
                "gpus_used": sum(1 for g in node.gpus if g[1] > 0 or g[2] > _GPU_MEM_FLOOR),
                "gpu_load": util_sum / 100,
                "gpu_mem_used_mib": sum(g[2] for g in node.gpus),
                "gpu_mem_total_mib": sum(g[3] for g in node.gpus),
                "devices": [
                    {"index": g[0], "util_pct": float(g[1]), "mem_used_mib": g[2],
                     "mem_total_mib": g[3], "power_w": 0.0 if g[4] is None else g[4] / 100}
                    for g in node.gpus
                ],
            }
        else:
            gpu = {"unreachable": UNREACHABLE_REASON}
        node_dicts.append({
            "hostname": node.name,
            "cpus_alloc": node.cpus_alloc,
            "cpus_total": node.cpus_total,
            "load_5min": load,
            "load_known": True,
            "load_ratio": ratio,
            "mem_used_plus_cache_mib": node.mem_total - node.mem_free,
            "mem_total_mib": node.mem_total,
            "jupyter": i in jupyter,
            "gpu": gpu,
        })
        found = []
        if ratio < _CPU_LOW:
            found.append((AdvisoryKind.CPU_UNDERUTILIZED, ratio, _CPU_LOW))
        elif ratio > _CPU_HIGH:
            found.append((AdvisoryKind.CPU_OVERLOADED, ratio, _CPU_HIGH))
        if node.gpus and node.gpu_file:
            mean = (sum(g[1] for g in node.gpus) / 100) / len(node.gpus)
            if mean < _GPU_LOW:
                found.append((AdvisoryKind.GPU_UNDERUTILIZED, mean, _GPU_LOW))
        for kind, observed, threshold in found:
            adv = make_advisory(kind, node.name, observed, threshold)
            advisories.append({"kind": kind.value, "hostname": node.name, "message": adv.message,
                               "observed": observed, "threshold": threshold})
    return {
        "user": s.user,
        "collected_at": s.collected_at,
        "jobs": jobs,
        "nodes": node_dicts,
        "advisories": advisories,
    }


def generate(scenario: Scenario, out_dir) -> list[Path]:
    """Write the fixture tree for ``scenario`` into ``out_dir``.

    Returns the written paths relative to ``out_dir``, sorted.  The
    directory must be new or empty so stale files cannot leak into a run.
    """
    scenario.validate()
    rng = random.Random(scenario.seed)
    nodes, placements, user_nodes = _build_state(scenario, rng)
    jobs = _job_lines(scenario, placements)

    files: dict[str, str] = {}
    files["squeue.out"] = "".join(
        f"{j['job_id']}|{j['partition']}|R|{j['nodelist']}|{j['alloc_cpus']}|"
        f"{'gres/gpu:%d' % j['alloc_gpus'] if j['alloc_gpus'] else 'N/A'}\n"
        for j in jobs
    )
    rows = []
    for node in nodes:
        if node.load_centi is None:
            cpus_state, load = f"0/0/{node.cpus_total}/{node.cpus_total}", "N/A"
        else:
            idle = node.cpus_total - node.cpus_alloc
            cpus_state, load = f"{node.cpus_alloc}/{idle}/0/{node.cpus_total}", f"{node.load_centi / 100:.2f}"
        rows.append(_sinfo_row(node.name, cpus_state, load, node.mem_total, node.mem_free, node.state))
    # nodes in a second partition appear twice
    dup_rng = random.Random(scenario.seed ^ 0x5EED)
    rows += [row for row in rows if dup_rng.random() < 0.2]
    files["sinfo.out"] = "".join(rows)
    jup = [scenario.hostname(i) for i in range(scenario.jupyter_nodes)]
    files["sinfo_partitions.out"] = compress_hostlist(jup) + "\n" if jup else ""
    for node in nodes:
        if node.gpu_file:
            files[f"gpu/{node.name}.out"] = "".join(
                f"{g[0]}, {g[1]}, {g[2]}, {g[3]}, {'[N/A]' if g[4] is None else f'{g[4] / 100:.2f}'}\n"
                for g in node.gpus
            )
    expected = _expected_report(scenario, nodes, jobs, user_nodes)
    files["expected.json"] = json.dumps(expected, indent=2) + "\n"

    out_dir = Path(out_dir)
    try:
        if out_dir.exists() and any(out_dir.iterdir()):
            raise IoFailure(f"{out_dir} is not empty")
        for rel, text in files.items():
            path = out_dir / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write fixture tree: {exc}") from exc
    return sorted(Path(rel) for rel in files)


def _job_spec(text: str) -> JobSpec:
    try:
        parts = [int(p) for p in text.split(":")]
        return JobSpec(*parts)
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(f"expected CPUS[:GPUS[:SPAN]], got {text!r}") from None


def _index_set(text: str) -> frozenset[int]:
    try:
        return frozenset(int(p) for p in text.split(",") if p)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated indices, got {text!r}") from None


def gen_fixture_main(argv, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    p = argparse.ArgumentParser(prog="hpcload gen-fixture",
                                description="Write a synthetic fixture cluster and its expected report.")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--gpus-per-node", type=int, default=0)
    p.add_argument("--cpus-per-node", type=int, default=48)
    p.add_argument("--job", type=_job_spec, action="append", metavar="CPUS[:GPUS[:SPAN]]",
                   help="a job of the user, per-node counts (repeatable; default 8)")
    p.add_argument("--jupyter-nodes", type=int, default=0)
    p.add_argument("--unreachable", type=_index_set, default=frozenset(), metavar="I,J,...")
    p.add_argument("--profile", choices=[lp.value for lp in LoadProfile], default="balanced")
    p.add_argument("--user", default="alice")
    p.add_argument("--pad", type=int, default=0, help="zero-pad node numbers to this width")
    p.add_argument("--out", type=Path, required=True)
    try:
        args = p.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 2
    scenario = Scenario(
        seed=args.seed,
        node_count=args.nodes,
        gpus_per_node=args.gpus_per_node,
        user_jobs=tuple(args.job or (JobSpec(8),)),
        jupyter_nodes=args.jupyter_nodes,
        unreachable_nodes=args.unreachable,
        load_profile=LoadProfile(args.profile),
        user=args.user,
        cpus_per_node=args.cpus_per_node,
        pad=args.pad,
    )
    try:
        written = generate(scenario, args.out)
    except InvalidScenario as exc:
        print(f"hpcload gen-fixture: invalid scenario: {exc}", file=err)
        return 2
    except IoFailure as exc:
        print(f"hpcload gen-fixture: {exc}", file=err)
        return 1
    for rel in written:
        print(args.out / rel, file=out)
    return 0
