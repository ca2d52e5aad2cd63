"""Cycle-approximate single-core SIMT simulator.

Timing model: single-issue in-order core; each cycle at most one ready
logical warp issues one instruction (round-robin). After issuing, a warp
is not ready again for ``issue_gap_cycles`` cycles (the pipeline's
re-issue interval); a load extends that to ``load latency + 1`` cycles.
Warps waiting at barriers or at a pending warp reshape are not ready.
Cycles advance even when nothing can issue.

Divergence uses a per-warp stack: ``vx_split`` pushes the complement
mask and the else-path pc, ``vx_join`` first switches to the pending
else path and then pops to the reconvergence mask. ``vx_tile`` reshapes
logical warps once every live warp has reached it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numeric as nm
from .asm import Program, encode_program, format_instr
from .config import CoreConfig
from .isa import (
    CSR_BLOCK_ID, CSR_GRID_DIM, CSR_NUM_THREADS, CSR_NUM_WARPS,
    CSR_THREAD_ID, CSR_WARP_ID, IllegalInstruction, decode, instr_class,
    latency_class,
)
from .layout import GLOBAL_BASE, PARAM_BASE, SHARED_BASE
from .tiles import TileConfig, default_tile, groups, validate_tile, TileError


class SimTrap(Exception):
    pass


class DeadlockError(SimTrap):
    pass


class WatchdogError(SimTrap):
    pass


# ------------------------------------------------------- collective semantics

def exec_vote(func: str, preds, participants, width: int):
    """Vote over one logical warp; preds are per-lane register values.
    Returns per-lane results (None for non-participants)."""
    res = [None] * width
    got = [preds[l] for l in range(width) if participants[l]]
    if func == "ballot":
        bits = 0
        for l in range(width):
            if participants[l] and preds[l] != 0:
                bits |= 1 << l
        r = nm.s32(bits)
    elif func == "any":
        r = int(any(p != 0 for p in got))
    elif func == "all":
        r = int(all(p != 0 for p in got))
    elif func == "uni":
        r = int(all(p == got[0] for p in got)) if got else 1
    else:
        raise SimTrap(f"unknown vote mode {func}")
    for l in range(width):
        if participants[l]:
            res[l] = r
    return res


def exec_shfl(func: str, values, participants, offset: int, clamps, width: int):
    """Shuffle over one logical warp. ``clamps`` holds each lane's clamp
    register value (max valid source lane). Out-of-range or inactive
    source lanes return the calling lane's own value."""
    res = [None] * width
    for l in range(width):
        if not participants[l]:
            continue
        if func == "up":
            src = l - offset
        elif func == "down":
            src = l + offset
        elif func == "bfly":
            src = l ^ offset
        elif func == "idx":
            src = offset
        else:
            raise SimTrap(f"unknown shuffle mode {func}")
        clamp = clamps[l]
        if 0 <= src <= min(clamp, width - 1) and participants[src]:
            res[l] = values[src]
        else:
            res[l] = values[l]
    return res


# --------------------------------------------------------------------- state

@dataclass
class SimStats:
    cycles: int = 0
    instrs_warp: int = 0
    instrs_lane: int = 0
    histogram: dict = field(default_factory=lambda: {
        "alu": 0, "mem": 0, "collective": 0, "control": 0, "tile": 0})

    @property
    def ipc(self) -> float:
        return self.instrs_warp / self.cycles if self.cycles else 0.0

    def to_dict(self) -> dict:
        return {"cycles": self.cycles, "instrs_warp": self.instrs_warp,
                "instrs_lane": self.instrs_lane, "ipc": self.ipc,
                "histogram": dict(self.histogram)}


class _Warp:
    __slots__ = ("wid", "lanes", "pc", "active", "stack", "ready_at",
                 "at_barrier", "tile_wait", "exited", "_lanes_c", "_tids_c")

    def __init__(self, wid, lanes, pc):
        self.wid = wid
        self.lanes = lanes  # tuple of absolute thread ids
        self.pc = pc
        self.active = (1 << len(lanes)) - 1
        self.stack = []  # [phase, else_mask, else_pc, end_mask]
        self.ready_at = 0
        self.at_barrier = False
        self.tile_wait = None  # (mask, count) while waiting for reshape
        self.exited = False
        self._lanes_c = None
        self._tids_c = None

    @property
    def blocked(self):
        return self.at_barrier or self.tile_wait is not None

    def set_active(self, mask):
        self.active = mask
        self._lanes_c = None
        self._tids_c = None

    def lane_list(self):
        c = self._lanes_c
        if c is None:
            a = self.active
            c = self._lanes_c = [l for l in range(len(self.lanes))
                                 if (a >> l) & 1]
        return c

    def tids(self):
        c = self._tids_c
        if c is None:
            c = self._tids_c = [self.lanes[l] for l in self.lane_list()]
        return c

    def lane_ids(self):
        return self.lane_list()


class SimHandle:
    def __init__(self, program: Program, grid: int, block: int, inputs: dict,
                 core: CoreConfig, trace=None, watchdog_cycles=2_000_000):
        self.core = core
        self.program = program
        self.grid = grid
        self.block = block
        self.trace = trace
        self.watchdog_cycles = watchdog_cycles
        md = program.metadata
        self.path = md.get("path", "hw")
        if md.get("block_dim") is not None and md["block_dim"] != block:
            raise SimTrap(
                f"program compiled for block size {md['block_dim']}, launched with {block}")
        if md.get("warp_size") is not None and md["warp_size"] != core.threads_per_warp:
            raise SimTrap("program compiled for a different warp size")
        if self.path == "hw" and block != core.hardware_threads:
            raise SimTrap(
                f"hw-path launch needs blockDim == threads_per_warp x warps_per_core "
                f"({core.hardware_threads}), got {block}")
        if self.path == "sw" and grid > core.hardware_threads:
            raise SimTrap(
                f"sw-path launch supports at most {core.hardware_threads} blocks, "
                f"got {grid}")

        self.mem = bytearray(core.memory_size_bytes)
        words, self.symbols = encode_program(program)
        self.mem[0:4 * len(words)] = b"".join(w.to_bytes(4, "little") for w in words)
        self.code_words = len(words)
        self.decoded = [None] * len(words)

        H = core.hardware_threads
        self.regs_i = [[0] * 32 for _ in range(H)]
        self.regs_f = [[0.0] * 32 for _ in range(H)]

        # parameter block and buffers
        self.buffers = {}
        bump = GLOBAL_BASE
        params = md.get("params", [])
        stack_region = core.memory_size_bytes - H * core.stack_bytes_per_thread
        for idx, (name, space, elem) in enumerate(params):
            if name not in inputs:
                raise SimTrap(f"missing input for parameter {name!r}")
            if space == "global-buffer":
                arr = np.array(inputs[name],
                               dtype=np.float32 if elem == "f32" else np.int32)
                nbytes = arr.size * 4
                if bump + nbytes > stack_region:
                    raise SimTrap("out of memory for input buffers")
                self.mem[bump:bump + nbytes] = arr.tobytes()
                self.buffers[name] = (bump, arr.size, arr.dtype)
                self._store_param(idx, bump)
                bump += (nbytes + 15) & ~15
            else:
                v = inputs[name]
                self._store_param(idx, nm.s32(int(v)) if elem == "i32"
                                  else nm.f32_bits(v))
        self.shared_bytes = md.get("shared_bytes", 0)
        if SHARED_BASE + self.shared_bytes > GLOBAL_BASE:
            raise SimTrap("shared memory exceeds its window")

        self.entry = self.symbols.get(program.entry, 0)
        self.stats = SimStats()
        self.cycle = 0
        self.rr = 0
        self.block_idx = 0
        self.warps = []
        self.tile = default_tile(core)
        self._init_block(0)

    # -- setup -----------------------------------------------------------------
    def _store_param(self, idx, word):
        self.mem[PARAM_BASE + 4 * idx:PARAM_BASE + 4 * idx + 4] = \
            (word & 0xFFFFFFFF).to_bytes(4, "little")

    def _init_block(self, b):
        self.block_idx = b
        self.n_live = self.core.warps_per_core
        self.tile = default_tile(self.core)
        t = self.core.threads_per_warp
        self.warps = [
            _Warp(w, tuple(range(w * t, (w + 1) * t)), self.entry)
            for w in range(self.core.warps_per_core)
        ]
        for w in self.warps:
            w.ready_at = self.cycle
        self.mem[SHARED_BASE:SHARED_BASE + self.shared_bytes] = \
            bytes(self.shared_bytes)

    # -- helpers ---------------------------------------------------------------
    def _csr(self, tid, csr):
        t = self.core.threads_per_warp
        if csr == CSR_THREAD_ID:
            return tid % t
        if csr == CSR_WARP_ID:
            return tid // t
        if csr == CSR_NUM_THREADS:
            return t
        if csr == CSR_NUM_WARPS:
            return self.core.warps_per_core
        if csr == CSR_BLOCK_ID:
            return self.block_idx
        if csr == CSR_GRID_DIM:
            return self.grid
        raise SimTrap(f"unknown CSR {csr:#x}")

    def _fetch(self, pc):
        if pc % 4 or not (0 <= pc < 4 * self.code_words):
            raise SimTrap(f"pc {pc:#x} outside code")
        idx = pc // 4
        d = self.decoded[idx]
        if d is None:
            word = int.from_bytes(self.mem[pc:pc + 4], "little")
            d = decode(word)
            self.decoded[idx] = d
        return d

    def _mem_addr(self, w, lane, addr):
        if addr % 4:
            raise SimTrap(
                f"misaligned access {addr:#x} at pc {w.pc:#x} lane {w.lanes[lane]}")
        if not (0 <= addr <= self.core.memory_size_bytes - 4):
            raise SimTrap(
                f"out-of-bounds access {addr:#x} at pc {w.pc:#x} lane {w.lanes[lane]}")
        return addr

    def _load_w(self, w, lane, addr):
        a = self._mem_addr(w, lane, addr)
        return nm.s32(int.from_bytes(self.mem[a:a + 4], "little"))

    def _store_w(self, w, lane, addr, val):
        a = self._mem_addr(w, lane, addr)
        self.mem[a:a + 4] = (val & 0xFFFFFFFF).to_bytes(4, "little")

    def live_warps(self):
        return [w for w in self.warps if not w.exited]

    # -- barrier / reshape bookkeeping ------------------------------------------
    def _check_barrier_release(self):
        live = self.live_warps()
        if live and all(w.at_barrier for w in live):
            for w in live:
                w.at_barrier = False
                w.ready_at = max(w.ready_at, self.cycle + 1)

    def _check_tile_reshape(self):
        live = self.live_warps()
        if not live or not all(w.tile_wait is not None for w in live):
            return
        ops = {w.tile_wait for w in live}
        if len(ops) != 1:
            raise SimTrap(f"inconsistent vx_tile operands across warps: {ops}")
        mask_v, count_v = ops.pop()
        pcs = {w.pc for w in live}
        if len(pcs) != 1:
            raise SimTrap("warps reshaping at different program points")
        tile = TileConfig(group_mask=mask_v, group_size=count_v)
        try:
            validate_tile(tile, self.core)
        except TileError as e:
            raise SimTrap(f"vx_tile: {e}")
        live_lanes = set()
        for w in live:
            for l in w.lane_ids():
                live_lanes.add(w.lanes[l])
        pc = pcs.pop()
        before = len(live_lanes)
        new_warps = []
        for wid, (start, size) in enumerate(groups(tile, self.core)):
            lanes = tuple(range(start, start + size))
            if not all(t in live_lanes for t in lanes):
                raise SimTrap("vx_tile covers exited or inactive threads")
            nw = _Warp(wid, lanes, pc)
            nw.ready_at = self.cycle + 1
            new_warps.append(nw)
        after = sum(len(w.lanes) for w in new_warps)
        if before != after:
            raise SimTrap("reshape changed the live thread population")
        self.warps = new_warps
        self.n_live = len(new_warps)
        self.tile = tile
        self.rr = 0

    # -- scheduling --------------------------------------------------------------
    def _ready(self, w):
        return not w.exited and not w.blocked and w.ready_at <= self.cycle

    def _pick(self):
        n = len(self.warps)
        for k in range(n):
            w = self.warps[(self.rr + k) % n]
            if self._ready(w):
                self.rr = (self.rr + k + 1) % n
                return w
        return None

    def finished(self):
        return self.n_live == 0 and \
            (self.path == "sw" or self.block_idx >= self.grid - 1)

    def step(self):
        """Advance one cycle; returns the issue event or None (idle)."""
        if self.finished():
            return None
        if self.n_live == 0:
            self._init_block(self.block_idx + 1)
        w = self._pick()
        event = None
        if w is not None:
            event = self._issue(w)
        self.cycle += 1
        self.stats.cycles = self.cycle
        if w is None:
            live = self.live_warps()
            if live and all(wp.blocked for wp in live):
                self._deadlock(live)
        return event

    def run_to_completion(self):
        """Run to exit; returns (buffer contents, stats)."""
        limit = self.watchdog_cycles
        while True:
            if self.n_live == 0:
                if self.path == "sw" or self.block_idx >= self.grid - 1:
                    break
                self._init_block(self.block_idx + 1)
            w = self._pick()
            if w is not None:
                self._issue(w)
                self.cycle += 1
            else:
                nexts = [wp.ready_at for wp in self.warps
                         if not wp.exited and not wp.blocked]
                if not nexts:
                    self.cycle += 1
                    self.stats.cycles = self.cycle
                    self._deadlock(self.live_warps())
                self.cycle = max(self.cycle + 1, min(nexts))
            if self.cycle > limit:
                self.stats.cycles = self.cycle
                self._deadlock(self.live_warps(), watchdog=True)
        self.stats.cycles = self.cycle
        return self.read_buffers(), self.stats

    def _deadlock(self, live, watchdog=False):
        report = "; ".join(
            f"warp {w.wid} pc={w.pc:#x} mask={w.active:#x}"
            f"{' barrier' if w.at_barrier else ''}"
            f"{' tile' if w.tile_wait is not None else ''}"
            for w in live)
        cls = WatchdogError if watchdog else DeadlockError
        raise cls(f"cycle {self.cycle}: no warp can make progress: {report}")

    def read_buffers(self):
        out = {}
        for name, (addr, size, dtype) in self.buffers.items():
            out[name] = np.frombuffer(
                bytes(self.mem[addr:addr + 4 * size]), dtype=dtype).copy()
        return out

    # -- execution ----------------------------------------------------------------
    def _issue(self, w):
        entry = self.decoded[w.pc >> 2]
        if entry is None:
            entry = self._predecode(w.pc)
        i, handler, iclass, delta = entry
        if self.trace is not None:
            nlanes = len(w.lanes)
            self.trace(f"{self.cycle} W{w.wid} {w.pc:#06x} "
                       f"{format_instr(i):32s} mask={w.active:0{nlanes}b}")
        st = self.stats
        st.instrs_warp += 1
        st.instrs_lane += _popcount(w.active)
        st.histogram[iclass] += 1
        w.ready_at = self.cycle + delta
        handler(self, w, i)
        return {"cycle": self.cycle, "warp": w.wid, "pc": w.pc, "instr": i}

    def _predecode(self, pc):
        if pc % 4 or not (0 <= pc < 4 * self.code_words):
            raise SimTrap(f"pc {pc:#x} outside code")
        i = self._fetch(pc)
        handler = _DISPATCH.get(i.mnemonic)
        if handler is None:
            raise IllegalInstruction(f"unimplemented {i.mnemonic}")
        lcls = latency_class(i.mnemonic)
        lat = self.core.latencies
        gap = self.core.issue_gap_cycles
        if lcls == "load":
            delta = max(gap, lat.load + 1)
        else:
            delta = max(gap, getattr(lat, lcls if lcls != "collective" else "collective"))
        entry = (i, handler, instr_class(i.mnemonic), delta)
        self.decoded[pc >> 2] = entry
        return entry


def _popcount(x):
    return bin(x).count("1")


# ---------------------------------------------------------------- handlers
# Each handler executes one instruction for warp ``w`` and advances its pc.

def _h_alu_i(fn):
    def run(h, w, i):
        R = h.regs_i
        rd, rs1, imm = i.rd, i.rs1, i.imm
        if rd != 0:
            for t in w.tids():
                r = R[t]
                r[rd] = nm.s32(fn(r[rs1], imm))
        w.pc += 4
    return run


def _h_alu_r(fn):
    def run(h, w, i):
        R = h.regs_i
        rd, rs1, rs2 = i.rd, i.rs1, i.rs2
        if rd != 0:
            for t in w.tids():
                r = R[t]
                r[rd] = nm.s32(fn(r[rs1], r[rs2]))
        w.pc += 4
    return run


def _h_lw(h, w, i):
    R = h.regs_i
    rd, rs1, imm = i.rd, i.rs1, i.imm
    mem = h.mem
    hi = h.core.memory_size_bytes - 4
    for l, t in zip(w.lane_list(), w.tids()):
        a = R[t][rs1] + imm
        if a % 4 or not (0 <= a <= hi):
            h._mem_addr(w, l, a)
        v = int.from_bytes(mem[a:a + 4], "little")
        if rd != 0:
            R[t][rd] = v - (1 << 32) if v & 0x80000000 else v
    w.pc += 4


def _h_sw(h, w, i):
    R = h.regs_i
    rs1, rs2, imm = i.rs1, i.rs2, i.imm
    mem = h.mem
    hi = h.core.memory_size_bytes - 4
    for l, t in zip(w.lane_list(), w.tids()):
        a = R[t][rs1] + imm
        if a % 4 or not (0 <= a <= hi):
            h._mem_addr(w, l, a)
        mem[a:a + 4] = (R[t][rs2] & 0xFFFFFFFF).to_bytes(4, "little")
    w.pc += 4


def _h_branch(cmp):
    def run(h, w, i):
        R = h.regs_i
        rs1, rs2 = i.rs1, i.rs2
        taken = None
        for t in w.tids():
            tk = cmp(R[t][rs1], R[t][rs2])
            if taken is None:
                taken = tk
            elif taken != tk:
                raise SimTrap(f"divergent branch without split at pc {w.pc:#x}")
        w.pc += i.imm if taken else 4
    return run


def _h_jal(h, w, i):
    if i.rd != 0:
        link = nm.s32(w.pc + 4)
        for t in w.tids():
            h.regs_i[t][i.rd] = link
    w.pc += i.imm


def _h_jalr(h, w, i):
    R = h.regs_i
    targets = {nm.u32(R[t][i.rs1] + i.imm) & ~1 for t in w.tids()}
    if len(targets) > 1:
        raise SimTrap(f"divergent jalr at pc {w.pc:#x}")
    if i.rd != 0:
        link = nm.s32(w.pc + 4)
        for t in w.tids():
            R[t][i.rd] = link
    w.pc = targets.pop() if targets else w.pc + 4


def _h_lui(h, w, i):
    v = nm.s32(i.imm << 12)
    if i.rd != 0:
        for t in w.tids():
            h.regs_i[t][i.rd] = v
    w.pc += 4


def _h_auipc(h, w, i):
    v = nm.s32(w.pc + (i.imm << 12))
    if i.rd != 0:
        for t in w.tids():
            h.regs_i[t][i.rd] = v
    w.pc += 4


def _h_csrr(h, w, i):
    if i.rd != 0:
        for t in w.tids():
            h.regs_i[t][i.rd] = h._csr(t, i.imm)
    w.pc += 4


def _h_flw(h, w, i):
    for l, t in zip(w.lane_list(), w.tids()):
        bits = h._load_w(w, l, h.regs_i[t][i.rs1] + i.imm)
        h.regs_f[t][i.rd] = nm.bits_f32(bits)
    w.pc += 4


def _h_fsw(h, w, i):
    for l, t in zip(w.lane_list(), w.tids()):
        h._store_w(w, l, h.regs_i[t][i.rs1] + i.imm, nm.f32_bits(h.regs_f[t][i.rs2]))
    w.pc += 4


def _h_farith(op):
    def run(h, w, i):
        F = h.regs_f
        for t in w.tids():
            F[t][i.rd] = nm.f32_binop(op, F[t][i.rs1], F[t][i.rs2])
        w.pc += 4
    return run


def _h_fsgnj(mode):
    def run(h, w, i):
        F = h.regs_f
        for t in w.tids():
            a = nm.u32(nm.f32_bits(F[t][i.rs1]))
            b = nm.u32(nm.f32_bits(F[t][i.rs2]))
            if mode == 0:
                sign = b & 0x80000000
            elif mode == 1:
                sign = ~b & 0x80000000
            else:
                sign = (a ^ b) & 0x80000000
            F[t][i.rd] = nm.bits_f32((a & 0x7FFFFFFF) | sign)
        w.pc += 4
    return run


def _h_fminmax(fn):
    def run(h, w, i):
        F = h.regs_f
        for t in w.tids():
            F[t][i.rd] = fn(F[t][i.rs1], F[t][i.rs2])
        w.pc += 4
    return run


def _h_fcmp(op):
    def run(h, w, i):
        F, R = h.regs_f, h.regs_i
        if i.rd != 0:
            for t in w.tids():
                a, b = F[t][i.rs1], F[t][i.rs2]
                R[t][i.rd] = int(op(a, b))
        w.pc += 4
    return run


def _h_fcvt_w_s(h, w, i):
    if i.rd != 0:
        for t in w.tids():
            h.regs_i[t][i.rd] = nm.f32_to_i32(h.regs_f[t][i.rs1])
    w.pc += 4


def _h_fcvt_s_w(h, w, i):
    for t in w.tids():
        h.regs_f[t][i.rd] = nm.f32(h.regs_i[t][i.rs1])
    w.pc += 4


def _h_fmv_x_w(h, w, i):
    if i.rd != 0:
        for t in w.tids():
            h.regs_i[t][i.rd] = nm.f32_bits(h.regs_f[t][i.rs1])
    w.pc += 4


def _h_fmv_w_x(h, w, i):
    for t in w.tids():
        h.regs_f[t][i.rd] = nm.bits_f32(h.regs_i[t][i.rs1])
    w.pc += 4


def _h_vote(func):
    def run(h, w, i):
        R = h.regs_i
        width = len(w.lanes)
        parts, preds = [], []
        act = w.active
        for l in range(width):
            t = w.lanes[l]
            p = bool((act >> l) & 1)
            if p:
                p = bool((nm.u32(R[t][i.imm]) >> l) & 1)
            parts.append(p)
            preds.append(R[t][i.rs1])
        res = exec_vote(func, preds, parts, width)
        if i.rd != 0:
            for l in range(width):
                if res[l] is not None:
                    R[w.lanes[l]][i.rd] = nm.s32(res[l])
        w.pc += 4
    return run


def _h_shfl(func):
    def run(h, w, i):
        R = h.regs_i
        width = len(w.lanes)
        act = w.active
        parts = [bool((act >> l) & 1) for l in range(width)]
        vals = [R[w.lanes[l]][i.rs1] for l in range(width)]
        clamp_reg = i.imm & 0x1F
        offset = (i.imm >> 5) & 0x1F
        clamps = [R[w.lanes[l]][clamp_reg] for l in range(width)]
        res = exec_shfl(func, vals, parts, offset, clamps, width)
        if i.rd != 0:
            for l in range(width):
                if res[l] is not None:
                    R[w.lanes[l]][i.rd] = nm.s32(res[l])
        w.pc += 4
    return run


def _h_split(h, w, i):
    R = h.regs_i
    full = w.active
    taken = 0
    for l in w.lane_list():
        if R[w.lanes[l]][i.rs1] != 0:
            taken |= 1 << l
    not_taken = full & ~taken
    else_pc = w.pc + i.imm
    if not_taken == 0:
        w.stack.append([1, 0, 0, full])
        w.pc += 4
    elif taken == 0:
        w.stack.append([1, 0, 0, full])
        w.pc = else_pc
    else:
        w.stack.append([0, not_taken, else_pc, full])
        w.set_active(taken)
        w.pc += 4


def _h_join(h, w, i):
    if not w.stack:
        raise SimTrap(f"vx_join with empty stack at pc {w.pc:#x}")
    top = w.stack[-1]
    if top[0] == 0:
        top[0] = 1
        w.set_active(top[1])
        w.pc = top[2]
    else:
        w.stack.pop()
        w.set_active(top[3])
        w.pc += 4


def _h_bar(h, w, i):
    w.at_barrier = True
    w.pc += 4
    h._check_barrier_release()


def _h_tmc(h, w, i):
    tids = w.tids()
    v = h.regs_i[tids[0]][i.rs1] if tids else 0
    if v != 0:
        raise SimTrap("vx_tmc supports only thread-mask 0 (warp exit)")
    if w.stack:
        raise SimTrap(f"warp {w.wid} exited with a non-empty divergence stack")
    w.exited = True
    w.set_active(0)
    w.pc += 4
    h.n_live -= 1
    h._check_barrier_release()
    h._check_tile_reshape()


def _h_tile(h, w, i):
    if w.stack or w.active != (1 << len(w.lanes)) - 1:
        raise SimTrap("vx_tile while diverged")
    t0 = w.lanes[0]
    w.tile_wait = (nm.u32(h.regs_i[t0][i.rs1]), h.regs_i[t0][i.rs2])
    w.pc += 4
    h._check_tile_reshape()


_DISPATCH = {
    "addi": _h_alu_i(lambda a, b: a + b),
    "slti": _h_alu_i(lambda a, b: int(a < b)),
    "sltiu": _h_alu_i(lambda a, b: int(nm.u32(a) < nm.u32(b))),
    "xori": _h_alu_i(lambda a, b: a ^ b),
    "ori": _h_alu_i(lambda a, b: a | b),
    "andi": _h_alu_i(lambda a, b: a & b),
    "slli": _h_alu_i(lambda a, b: a << b),
    "srli": _h_alu_i(lambda a, b: nm.u32(a) >> b),
    "srai": _h_alu_i(lambda a, b: a >> b),
    "add": _h_alu_r(lambda a, b: a + b),
    "sub": _h_alu_r(lambda a, b: a - b),
    "sll": _h_alu_r(lambda a, b: a << (b & 31)),
    "srl": _h_alu_r(lambda a, b: nm.u32(a) >> (b & 31)),
    "sra": _h_alu_r(lambda a, b: a >> (b & 31)),
    "slt": _h_alu_r(lambda a, b: int(a < b)),
    "sltu": _h_alu_r(lambda a, b: int(nm.u32(a) < nm.u32(b))),
    "xor": _h_alu_r(lambda a, b: a ^ b),
    "or": _h_alu_r(lambda a, b: a | b),
    "and": _h_alu_r(lambda a, b: a & b),
    "mul": _h_alu_r(lambda a, b: a * b),
    "mulh": _h_alu_r(lambda a, b: (a * b) >> 32),
    "mulhsu": _h_alu_r(lambda a, b: (a * nm.u32(b)) >> 32),
    "mulhu": _h_alu_r(lambda a, b: (nm.u32(a) * nm.u32(b)) >> 32),
    "div": _h_alu_r(nm.sdiv),
    "divu": _h_alu_r(nm.udiv),
    "rem": _h_alu_r(nm.srem),
    "remu": _h_alu_r(nm.urem),
    "lw": _h_lw,
    "sw": _h_sw,
    "beq": _h_branch(lambda a, b: a == b),
    "bne": _h_branch(lambda a, b: a != b),
    "blt": _h_branch(lambda a, b: a < b),
    "bge": _h_branch(lambda a, b: a >= b),
    "bltu": _h_branch(lambda a, b: nm.u32(a) < nm.u32(b)),
    "bgeu": _h_branch(lambda a, b: nm.u32(a) >= nm.u32(b)),
    "jal": _h_jal,
    "jalr": _h_jalr,
    "lui": _h_lui,
    "auipc": _h_auipc,
    "csrr": _h_csrr,
    "flw": _h_flw,
    "fsw": _h_fsw,
    "fadd.s": _h_farith("+"),
    "fsub.s": _h_farith("-"),
    "fmul.s": _h_farith("*"),
    "fdiv.s": _h_farith("/"),
    "fsgnj.s": _h_fsgnj(0),
    "fsgnjn.s": _h_fsgnj(1),
    "fsgnjx.s": _h_fsgnj(2),
    "fmin.s": _h_fminmax(min),
    "fmax.s": _h_fminmax(max),
    "feq.s": _h_fcmp(lambda a, b: a == b),
    "flt.s": _h_fcmp(lambda a, b: a < b),
    "fle.s": _h_fcmp(lambda a, b: a <= b),
    "fcvt.w.s": _h_fcvt_w_s,
    "fcvt.s.w": _h_fcvt_s_w,
    "fmv.x.w": _h_fmv_x_w,
    "fmv.w.x": _h_fmv_w_x,
    "vx_vote.all": _h_vote("all"),
    "vx_vote.any": _h_vote("any"),
    "vx_vote.uni": _h_vote("uni"),
    "vx_vote.ballot": _h_vote("ballot"),
    "vx_shfl.up": _h_shfl("up"),
    "vx_shfl.down": _h_shfl("down"),
    "vx_shfl.bfly": _h_shfl("bfly"),
    "vx_shfl.idx": _h_shfl("idx"),
    "vx_split": _h_split,
    "vx_join": _h_join,
    "vx_bar": _h_bar,
    "vx_tmc": _h_tmc,
    "vx_tile": _h_tile,
}


def launch(program: Program, grid: int, block: int, inputs: dict,
           core: CoreConfig, trace=None, **kw) -> SimHandle:
    """Initialize memory, parameters, and warps for a launch."""
    return SimHandle(program, grid, block, inputs, core, trace=trace, **kw)


def run_to_completion(h: SimHandle):
    return h.run_to_completion()
