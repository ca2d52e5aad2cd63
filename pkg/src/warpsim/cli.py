"""warpbench: compile, run, verify, and compare the two lowering paths.

    warpbench compile --kernel vote --path hw --emit asm -o vote.s
    warpbench run     --kernel reduce --path sw --seed 3
    warpbench oracle  --kernel reduce --seed 3
    warpbench compare --seed 7 --report markdown -o report.md
    warpbench sweep   --seed 7 -o sweep.md
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .asm import asm_format, program_to_bytes
from .ast import dump_ir
from .bench import (CASES, CASE_ORDER, VerificationError, compare_all,
                    compile_case, emit_report, run_case)
from .codegen import lower_hw, lower_sw
from .config import CoreConfig
from .oracle import run_reference
from .parser import parse_kernel
from .sim import launch
from .transform import TransformConfig, transform
from .typecheck import typecheck


def _load_core(args) -> CoreConfig:
    if args.config:
        return CoreConfig.from_json(args.config)
    return CoreConfig()


def _resolve_kernel(name):
    """A case name, or a path to a .mk file (case names take priority)."""
    if name in CASES:
        case = CASES[name]
        return case, case.load()
    path = Path(name)
    if not path.exists():
        sys.exit(f"error: unknown kernel {name!r} (cases: {', '.join(CASE_ORDER)})")
    return None, typecheck(parse_kernel(path.read_text()))


def _write(out, text, binary=False):
    if out in (None, "-"):
        if binary:
            sys.exit("error: binary output needs -o FILE")
        sys.stdout.write(text)
    else:
        mode = "wb" if binary else "w"
        with open(out, mode) as f:
            f.write(text)


def cmd_compile(args):
    core = _load_core(args)
    case, kernel = _resolve_kernel(args.kernel)
    block = args.block or (case.block if case else core.hardware_threads)
    if args.emit == "ast":
        _write(args.output, dump_ir(kernel))
        return 0
    if args.emit == "pr-ir":
        tk = transform(kernel, TransformConfig(
            block_dim=block, warp_size=core.threads_per_warp))
        _write(args.output, dump_ir(tk))
        return 0
    prog = (lower_hw if args.path == "hw" else lower_sw)(kernel, core, block)
    if args.emit == "asm":
        _write(args.output, asm_format(prog))
    else:  # bin
        _write(args.output, program_to_bytes(prog), binary=True)
    return 0


def _dump_buffers(buffers):
    for name in buffers:
        arr = buffers[name]
        words = arr.view(np.int32) if arr.dtype == np.float32 else arr
        body = " ".join(f"{int(w) & 0xFFFFFFFF:08x}" for w in words)
        print(f"{name}: {body}")


def cmd_run(args):
    core = _load_core(args)
    case, _ = _resolve_kernel(args.kernel)
    if case is None:
        sys.exit("error: run needs one of the named benchmark cases")
    trace = None
    if args.trace:
        trace = lambda line: print(line, file=sys.stderr)
    prog = compile_case(case, args.path, core)
    if trace is not None:
        inputs = case.make_inputs(args.seed)
        h = launch(prog, case.grid, case.block, inputs, core, trace=trace)
        outputs, stats = h.run_to_completion()
        print("warning: trace run skips oracle verification", file=sys.stderr)
    else:
        try:
            outputs, stats = run_case(case, args.path, core, args.seed, program=prog)
        except VerificationError as e:
            sys.exit(f"verification failed: {e}")
    _dump_buffers(outputs)
    import json
    print(json.dumps(stats.to_dict(), sort_keys=True))
    return 0


def cmd_oracle(args):
    core = _load_core(args)
    case, kernel = _resolve_kernel(args.kernel)
    if case is None:
        sys.exit("error: oracle needs one of the named benchmark cases")
    inputs = case.make_inputs(args.seed)
    buffers = run_reference(kernel, case.grid, case.block, inputs,
                            warp_size=core.threads_per_warp)
    _dump_buffers(buffers)
    return 0


def cmd_compare(args, sweep_only=False):
    core = _load_core(args)
    try:
        rep = compare_all(core, seed=args.seed)
    except VerificationError as e:
        sys.exit(f"verification failed: {e}")
    if sweep_only:
        lines = ["load_latency," + ",".join(r["case"] for r in rep.cases) + ",geomean"]
        for row in rep.sweep:
            cells = ",".join(f"{row['speedups'][r['case']]:.4f}" for r in rep.cases)
            lines.append(f"{row['load_latency']},{cells},{row['geomean']:.4f}")
        _write(args.output, "\n".join(lines) + "\n")
    else:
        _write(args.output, emit_report(rep, args.report))
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="warpbench", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, kernel=True, path=True):
        if kernel:
            p.add_argument("--kernel", required=True,
                           help="benchmark case name or .mk file")
        if path:
            p.add_argument("--path", choices=["hw", "sw"], default="hw")
        p.add_argument("--config", help="core configuration JSON")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-o", "--output", default=None)

    p = sub.add_parser("compile", help="lower a kernel and emit ast/pr-ir/asm/bin")
    common(p)
    p.add_argument("--emit", choices=["ast", "pr-ir", "asm", "bin"], default="asm")
    p.add_argument("--block", type=int, default=None, help="block size override")
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("run", help="simulate a case and verify against the oracle")
    common(p)
    p.add_argument("--trace", action="store_true", help="per-issue trace on stderr")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("oracle", help="run the reference interpreter, dump buffers")
    common(p, path=False)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("compare", help="run all cases on both paths, emit a report")
    common(p, kernel=False, path=False)
    p.add_argument("--report", choices=["markdown", "csv", "json"],
                   default="markdown")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("sweep", help="load-latency sensitivity table (csv)")
    common(p, kernel=False, path=False)
    p.set_defaults(fn=lambda a: cmd_compare(a, sweep_only=True))

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
