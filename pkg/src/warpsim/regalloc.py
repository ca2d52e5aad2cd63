"""Linear-scan register allocation over x5-x29 / f0-f29 with spill slots
on the per-thread stack; x30/x31 and f30/f31 are reload scratch.

Intervals are first-occurrence..last-occurrence, extended over loop
back-edges when a value defined before the loop is used inside it.
Deterministic for identical input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .asm import Label
from .isa import Instr, pack_shfl_imm


class AllocError(Exception):
    pass


_NEXT = [0]


@dataclass(frozen=True)
class VReg:
    id: int
    cls: str  # "x" | "f"


def vreg(cls="x") -> VReg:
    _NEXT[0] += 1
    return VReg(_NEXT[0], cls)


@dataclass
class VInstr:
    mnemonic: str
    rd: object = 0
    rs1: object = 0
    rs2: object = 0
    imm: object = 0  # int, VReg (register-in-immediate), or frame marker str
    target: Optional[str] = None
    shfl_offset: Optional[int] = None

    def defs(self):
        m = self.mnemonic
        if m in ("sw", "fsw", "vx_split", "vx_tmc", "vx_join", "vx_bar",
                 "vx_tile") or m.startswith("b"):
            return []
        return [self.rd] if isinstance(self.rd, VReg) else []

    def uses(self):
        out = []
        for f in (self.rs1, self.rs2, self.imm):
            if isinstance(f, VReg):
                out.append(f)
        return out


X_POOL = list(range(5, 30))
F_POOL = list(range(0, 30))
X_SCRATCH = (30, 31)
F_SCRATCH = (30, 31)


def _positions(items):
    """Instruction index per item; labels map to the next instruction."""
    pos = {}
    idx = 0
    for it in items:
        if isinstance(it, Label):
            pos[it.name] = idx
        else:
            idx += 1
    return pos, idx


def _intervals(items, label_pos):
    start, end, first_is_def = {}, {}, {}
    idx = 0
    backedges = []
    for it in items:
        if isinstance(it, Label):
            continue
        for r in it.uses():
            if r not in start:
                start[r] = idx
                first_is_def[r] = False
            end[r] = idx
        for r in it.defs():
            if r not in start:
                start[r] = idx
                first_is_def[r] = True
            end[r] = idx
        if it.target is not None and it.target in label_pos \
                and label_pos[it.target] <= idx:
            backedges.append((label_pos[it.target], idx))
        idx += 1
    for r, isdef in first_is_def.items():
        if not isdef:
            raise AllocError(f"virtual register {r} read before definition")
    changed = True
    while changed:
        changed = False
        for r in start:
            for bs, be in backedges:
                if start[r] < bs and bs <= end[r] < be:
                    end[r] = be
                    changed = True
    return start, end


def _scan(start, end):
    order = sorted(start, key=lambda r: (start[r], r.id))
    pools = {"x": list(X_POOL), "f": list(F_POOL)}
    active = []  # (end, vreg)
    assign = {}
    spills = {}
    n_slots = [0]

    def spill(r):
        spills[r] = n_slots[0]
        n_slots[0] += 1

    for r in order:
        s = start[r]
        for (e, a) in list(active):
            if e < s:
                active.remove((e, a))
                if a in assign:
                    pools[a.cls].append(assign[a])
        pool = pools[r.cls]
        if pool:
            assign[r] = pool.pop(0)
            active.append((end[r], r))
        else:
            victim = max(
                (p for p in active if p[1].cls == r.cls and p[1] in assign),
                key=lambda p: p[0], default=None)
            if victim is not None and victim[0] > end[r]:
                e, v = victim
                active.remove(victim)
                assign[r] = assign.pop(v)
                spill(v)
                active.append((end[r], r))
            else:
                spill(r)
    return assign, spills, n_slots[0]


def allocate(items, arrays_bytes: int, frame_extra=0):
    """Map virtual registers to physical ones. Returns (out_items,
    frame_bytes); frame markers in immediates are resolved here."""
    label_pos, _ = _positions(items)
    start, end = _intervals(items, label_pos)
    assign, spills, n_slots = _scan(start, end)
    spill_base = arrays_bytes
    frame = arrays_bytes + 4 * n_slots + frame_extra
    frame = (frame + 15) & ~15

    def slot_off(r):
        off = spill_base + 4 * spills[r]
        if off > 2047:
            raise AllocError(
                f"spill slot offset {off} exceeds direct addressing range")
        return off

    out = []
    for it in items:
        if isinstance(it, Label):
            out.append(it)
            continue
        pre, post = [], []
        scratch_iter = {"x": iter(X_SCRATCH), "f": iter(F_SCRATCH)}

        def map_use(r):
            if not isinstance(r, VReg):
                return r
            if r in assign:
                return assign[r]
            sc = next(scratch_iter[r.cls])
            op = "flw" if r.cls == "f" else "lw"
            pre.append(Instr(op, rd=sc, rs1=2, imm=slot_off(r)))
            return sc

        def map_def(r):
            if not isinstance(r, VReg):
                return r
            if r in assign:
                return assign[r]
            sc = X_SCRATCH[0] if r.cls == "x" else F_SCRATCH[0]
            op = "fsw" if r.cls == "f" else "sw"
            post.append(Instr(op, rs1=2, rs2=sc, imm=slot_off(r)))
            return sc

        rs1 = map_use(it.rs1)
        rs2 = map_use(it.rs2)
        imm = it.imm
        if isinstance(imm, VReg):
            imm = map_use(imm)
        rd = map_def(it.rd)
        if it.shfl_offset is not None:
            imm = pack_shfl_imm(it.shfl_offset, imm)
        if imm == "frame_hi":
            imm = ((frame + 0x800) >> 12) & 0xFFFFF
        elif imm == "frame_lo":
            hi = ((frame + 0x800) >> 12) << 12
            imm = frame - hi
        out.extend(pre)
        out.append(Instr(it.mnemonic, rd=rd, rs1=rs1, rs2=rs2, imm=imm,
                         target=it.target))
        out.extend(post)
    return out, frame
