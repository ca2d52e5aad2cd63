"""Benchmark suite: six kernels, oracle-verified runs on both paths,
IPC comparison with geometric-mean speedup, and a load-latency sweep.

No statistics are reported for a run whose output does not match the
reference interpreter bit-for-bit.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import CoreConfig
from .codegen import lower_hw, lower_sw
from .oracle import run_reference
from .parser import parse_kernel
from .sim import launch
from .typecheck import typecheck

KERNEL_DIR = Path(__file__).parent / "kernels"


class VerificationError(Exception):
    pass


@dataclass
class BenchmarkCase:
    name: str
    source_path: Path
    grid: int
    block: int
    make_inputs: object  # seed -> dict of parameter values

    def load(self):
        k = parse_kernel(self.source_path.read_text())
        return typecheck(k)


def _gen_vote(seed):
    r = np.random.RandomState(seed)
    return {"in": r.randint(-16, 128, 32).astype(np.int32),
            "out": np.zeros(32, np.int32)}


def _gen_shuffle(seed):
    r = np.random.RandomState(seed)
    return {"in": r.randint(-1000, 1000, 32).astype(np.int32),
            "out": np.zeros(32, np.int32)}


def _gen_reduce(seed):
    r = np.random.RandomState(seed)
    return {"in": r.randint(-100, 100, 32).astype(np.int32),
            "out": np.zeros(1, np.int32)}


def _gen_reduce_tile(seed):
    r = np.random.RandomState(seed)
    return {"in": r.randint(-100, 100, 32).astype(np.int32),
            "out": np.zeros(8, np.int32)}


def _gen_matmul(seed):
    r = np.random.RandomState(seed)
    return {"a": r.standard_normal(256).astype(np.float32),
            "b": r.standard_normal(256).astype(np.float32),
            "c": np.zeros(256, np.float32), "n": 16}


def _gen_mse(seed):
    r = np.random.RandomState(seed)
    return {"pred": r.standard_normal(64).astype(np.float32),
            "target": r.standard_normal(64).astype(np.float32),
            "partial": np.zeros(8, np.float32), "n": 64}


CASES = {
    "mse_forward": BenchmarkCase("mse_forward", KERNEL_DIR / "mse_forward.mk",
                                 grid=2, block=32, make_inputs=_gen_mse),
    "matmul": BenchmarkCase("matmul", KERNEL_DIR / "matmul.mk",
                            grid=8, block=32, make_inputs=_gen_matmul),
    "shuffle": BenchmarkCase("shuffle", KERNEL_DIR / "shuffle.mk",
                             grid=1, block=32, make_inputs=_gen_shuffle),
    "vote": BenchmarkCase("vote", KERNEL_DIR / "vote.mk",
                          grid=1, block=32, make_inputs=_gen_vote),
    "reduce": BenchmarkCase("reduce", KERNEL_DIR / "reduce.mk",
                            grid=1, block=32, make_inputs=_gen_reduce),
    "reduce_tile": BenchmarkCase("reduce_tile", KERNEL_DIR / "reduce_tile.mk",
                                 grid=1, block=32, make_inputs=_gen_reduce_tile),
}

CASE_ORDER = ["mse_forward", "matmul", "shuffle", "vote", "reduce", "reduce_tile"]


def _buffers_equal(a: dict, b: dict):
    """First differing (buffer, word) or None; f32 compared bit-exactly."""
    for name in a:
        x, y = a[name], b[name]
        xv = x.view(np.int32) if x.dtype == np.float32 else x
        yv = y.view(np.int32) if y.dtype == np.float32 else y
        neq = np.nonzero(xv != yv)[0]
        if neq.size:
            i = int(neq[0])
            return name, i, int(xv[i]), int(yv[i])
    return None


def compile_case(case: BenchmarkCase, path: str, core: CoreConfig):
    k = case.load()
    return lower_hw(k, core, case.block) if path == "hw" \
        else lower_sw(k, core, case.block)


def run_case(case: BenchmarkCase, path: str, core: CoreConfig, seed: int,
             program=None, reference=None):
    """Compile, simulate, and verify one case; stats are only returned
    when the simulated memory image matches the oracle."""
    if program is None:
        program = compile_case(case, path, core)
    inputs = case.make_inputs(seed)
    if reference is None:
        k = case.load()
        reference = run_reference(k, case.grid, case.block, inputs,
                                  warp_size=core.threads_per_warp)
    h = launch(program, case.grid, case.block, inputs, core)
    outputs, stats = h.run_to_completion()
    diff = _buffers_equal(reference, outputs)
    if diff is not None:
        name, i, want, got = diff
        raise VerificationError(
            f"{case.name}/{path} seed {seed}: buffer {name}[{i}] = "
            f"{got:#010x}, oracle says {want:#010x}")
    return outputs, stats


@dataclass
class Report:
    config: dict
    seed: int
    cases: list = field(default_factory=list)  # per-case result dicts
    geomean_speedup: float = 0.0
    sweep: list = field(default_factory=list)  # per-latency speedup rows

    def to_dict(self):
        return {"config": self.config, "seed": self.seed, "cases": self.cases,
                "geomean_speedup": self.geomean_speedup, "sweep": self.sweep}

    @classmethod
    def from_dict(cls, d):
        return cls(config=d["config"], seed=d["seed"], cases=d["cases"],
                   geomean_speedup=d["geomean_speedup"], sweep=d["sweep"])


def geomean(values):
    return math.exp(sum(math.log(v) for v in values) / len(values))


def _case_row(case, core, seed):
    k = case.load()
    inputs = case.make_inputs(seed)
    reference = run_reference(k, case.grid, case.block, inputs,
                              warp_size=core.threads_per_warp)
    row = {"case": case.name}
    for path in ("hw", "sw"):
        _, stats = run_case(case, path, core, seed, reference=reference)
        row[f"ipc_{path}"] = stats.ipc
        row[f"cycles_{path}"] = stats.cycles
        row[f"instrs_{path}"] = stats.instrs_warp
    row["speedup"] = row["ipc_hw"] / row["ipc_sw"]
    return row


def compare_all(core: CoreConfig, seed: int = 0, cases=None,
                sweep_latencies=(2, 4, 8)) -> Report:
    names = cases or CASE_ORDER
    rep = Report(config=core.to_dict(), seed=seed)
    for name in names:
        rep.cases.append(_case_row(CASES[name], core, seed))
    rep.geomean_speedup = geomean([r["speedup"] for r in rep.cases])
    for lat in sweep_latencies:
        c2 = CoreConfig.from_dict(copy.deepcopy(core.to_dict()))
        c2.latencies.load = lat
        rows = [_case_row(CASES[name], c2, seed) for name in names]
        rep.sweep.append({
            "load_latency": lat,
            "speedups": {r["case"]: r["speedup"] for r in rows},
            "geomean": geomean([r["speedup"] for r in rows]),
        })
    return rep


def _fmt(x):
    return f"{x:.4f}"


def emit_report(rep: Report, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        lines = ["case,ipc_hw,ipc_sw,speedup"]
        for r in rep.cases:
            lines.append(f"{r['case']},{_fmt(r['ipc_hw'])},"
                         f"{_fmt(r['ipc_sw'])},{_fmt(r['speedup'])}")
        lines.append(f"geomean,,,{_fmt(rep.geomean_speedup)}")
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        lines = [
            "# Warp-feature path comparison",
            "",
            f"- seed: {rep.seed}",
            f"- core: {rep.config['threads_per_warp']} threads/warp x "
            f"{rep.config['warps_per_core']} warps, load latency "
            f"{rep.config['latencies']['load']}, issue gap "
            f"{rep.config['issue_gap_cycles']}",
            "",
            "| case | ipc_hw | ipc_sw | speedup | cycles_hw | cycles_sw |",
            "|---|---|---|---|---|---|",
        ]
        for r in rep.cases:
            lines.append(
                f"| {r['case']} | {_fmt(r['ipc_hw'])} | {_fmt(r['ipc_sw'])} | "
                f"{_fmt(r['speedup'])} | {r['cycles_hw']} | {r['cycles_sw']} |")
        lines.append(f"| **geomean** |  |  | **{_fmt(rep.geomean_speedup)}** |  |  |")
        lines.append("")
        lines.append("## Load-latency sensitivity")
        lines.append("")
        header = "| load latency | " + " | ".join(
            r["case"] for r in rep.cases) + " | geomean |"
        lines.append(header)
        lines.append("|" + "---|" * (len(rep.cases) + 2))
        for row in rep.sweep:
            cells = " | ".join(_fmt(row["speedups"][r["case"]]) for r in rep.cases)
            lines.append(f"| {row['load_latency']} | {cells} | {_fmt(row['geomean'])} |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
