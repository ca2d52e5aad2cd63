"""Lower typed kernels to executable programs.

HW path: vote/shuffle/partition map 1:1 onto vx_vote/vx_shfl/vx_tile,
divergent ifs onto vx_split/vx_join, barriers onto vx_bar; CUDA threads
map 1:1 to hardware threads. SW path: the serializing transform runs
first, then the loop program is emitted as plain scalar code; each
hardware thread executes one thread block (its global id), guarded by a
grid-bound test. Buffers live in global memory; promoted and temporary
arrays live on the per-thread stack.
"""

from __future__ import annotations

import math

from .asm import Label, Program
from .ast import (
    BOOL, F32, I32, Assign, Barrier, Binary, BoolLit, Builtin, CastInt,
    ExprStmt, FloatLit, For, GroupAccessor, GroupSync, If, Index, IntLit,
    Kernel, TiledPartition, Unary, Var, VarDecl, WarpIntrinsic, walk_stmts,
)
from .config import CoreConfig
from .isa import (
    CSR_BLOCK_ID, CSR_GRID_DIM, CSR_THREAD_ID, CSR_WARP_ID, OPC_CUSTOM1,
    OPC_CUSTOM2, SPEC,
)
from .layout import PARAM_BASE, SHARED_BASE
from .numeric import f32_bits
from .regalloc import AllocError, VInstr, VReg, allocate, vreg
from .tiles import mask_for_size, TileError
from .transform import TransformConfig, transform


class CodegenError(Exception):
    pass


_VOTE_MODE = {"vote_any": "any", "vote_all": "all", "vote_uni": "uni",
              "vote_ballot": "ballot"}
_SHFL_MODE = {"shfl_up": "up", "shfl_down": "down", "shfl_xor": "bfly",
              "shfl_idx": "idx"}
_INT_OP = {"+": "add", "-": "sub", "*": "mul", "/": "div", "%": "rem",
           "<<": "sll", ">>": "sra", "&": "and", "|": "or", "^": "xor"}
_F_OP = {"+": "fadd.s", "-": "fsub.s", "*": "fmul.s", "/": "fdiv.s"}


class _Emit:
    def __init__(self, kernel: Kernel, core: CoreConfig, block_dim: int, path: str):
        self.k = kernel
        self.core = core
        self.B = block_dim
        self.path = path
        self.items = []
        self.sym = {}
        self.arrays = 0
        self.nlabel = 0
        self.ambient = core.threads_per_warp
        self.shared_bytes = 0
        self.tid = None
        self.block_idx = None
        self.shared_base = None

    # -- emission helpers -------------------------------------------------------
    def ins(self, mnemonic, **kw):
        vi = VInstr(mnemonic, **kw)
        self.items.append(vi)
        return vi

    def label(self, base):
        self.nlabel += 1
        return f".L{base}{self.nlabel}"

    def place(self, name):
        self.items.append(Label(name))

    def li(self, value):
        from .numeric import s32

        value = s32(value)
        r = vreg(cls="x")
        if -2048 <= value <= 2047:
            self.ins("addi", rd=r, rs1=0, imm=value)
        else:
            hi = ((value + 0x800) >> 12) & 0xFFFFF
            lo = value - s32(hi << 12)
            self.ins("lui", rd=r, imm=hi)
            if lo:
                self.ins("addi", rd=r, rs1=r, imm=lo)
        return r

    def move(self, dst: VReg, src, cls):
        if cls == "f":
            self.ins("fsgnj.s", rd=dst, rs1=src, rs2=src)
        else:
            self.ins("addi", rd=dst, rs1=src, imm=0)

    def _stack_slot(self, nbytes):
        off = self.arrays
        self.arrays += (nbytes + 3) & ~3
        return off

    # -- prologue ----------------------------------------------------------------
    def prologue(self):
        # stack pointer first, using only scratch physical registers
        tpw = self.core.threads_per_warp
        self.ins("csrr", rd=30, imm=CSR_WARP_ID)
        self.ins("csrr", rd=31, imm=CSR_THREAD_ID)
        self.ins("slli", rd=30, rs1=30, imm=int(math.log2(tpw)))
        self.ins("add", rd=30, rs1=30, rs2=31)
        sb = self.core.stack_bytes_per_thread
        self.ins("lui", rd=31, imm=(sb >> 12) & 0xFFFFF)
        if sb & 0xFFF:
            self.ins("addi", rd=31, rs1=31, imm=sb & 0xFFF)
        self.ins("mul", rd=30, rs1=30, rs2=31)
        top = self.core.memory_size_bytes
        if top % 4096:
            raise CodegenError("memory size must be a multiple of 4096")
        self.ins("lui", rd=2, imm=(top >> 12) & 0xFFFFF)
        self.ins("sub", rd=2, rs1=2, rs2=30)
        self.ins("lui", rd=31, imm="frame_hi")
        self.ins("addi", rd=31, rs1=31, imm="frame_lo")
        self.ins("sub", rd=2, rs1=2, rs2=31)

        # thread identity
        w = vreg()
        t = vreg()
        self.ins("csrr", rd=w, imm=CSR_WARP_ID)
        self.ins("csrr", rd=t, imm=CSR_THREAD_ID)
        hw = vreg()
        self.ins("slli", rd=hw, rs1=w, imm=int(math.log2(tpw)))
        self.ins("add", rd=hw, rs1=hw, rs2=t)
        if self.path == "hw":
            self.tid = hw
            self.block_idx = vreg()
            self.ins("csrr", rd=self.block_idx, imm=CSR_BLOCK_ID)
        else:
            self.block_idx = hw  # one block per hardware thread

        # parameters
        pb = vreg()
        self.ins("lui", rd=pb, imm=PARAM_BASE >> 12)
        for idx, p in enumerate(self.k.params):
            r = vreg()
            self.ins("lw", rd=r, rs1=pb, imm=4 * idx)
            if p.space == "global-buffer":
                self.sym[p.name] = ("buffer", r, p.elem_ty)
            elif p.ty == F32:
                fr = vreg(cls="f")
                self.ins("fmv.w.x", rd=fr, rs1=r)
                self.sym[p.name] = ("reg", fr, F32)
            else:
                self.sym[p.name] = ("reg", r, p.ty)

        # shared arrays
        if self.k.shared:
            if self.path == "hw":
                self.shared_base = vreg()
                self.ins("lui", rd=self.shared_base, imm=SHARED_BASE >> 12)
            for sh in self.k.shared:
                nbytes = 4 * sh.length
                if self.path == "hw":
                    self.sym[sh.name] = ("shared", self.shared_bytes, sh.elem_ty)
                    self.shared_bytes += nbytes
                else:
                    self.sym[sh.name] = ("stack", self._stack_slot(nbytes), sh.elem_ty)
        return hw

    # -- expressions ---------------------------------------------------------------
    def eval(self, e):
        if isinstance(e, IntLit):
            return self.li(e.value)
        if isinstance(e, BoolLit):
            return self.li(int(e.value))
        if isinstance(e, FloatLit):
            bits = self.li(f32_bits(e.value))
            r = vreg(cls="f")
            self.ins("fmv.w.x", rd=r, rs1=bits)
            return r
        if isinstance(e, Builtin):
            if e.name == "threadIdx.x":
                if self.tid is None:
                    raise CodegenError("threadIdx.x in a serialized program")
                return self.tid
            if e.name == "blockIdx.x":
                return self.block_idx
            if e.name == "blockDim.x":
                return self.li(self.B)
            if e.name == "warpSize":
                return self.li(self.core.threads_per_warp)
            if e.name == "gridDim.x":
                r = vreg()
                self.ins("csrr", rd=r, imm=CSR_GRID_DIM)
                return r
            raise CodegenError(f"unknown builtin {e.name}")
        if isinstance(e, Var):
            kind, r, ty = self.sym[e.name]
            if kind != "reg":
                raise CodegenError(f"{e.name} is not a scalar")
            return r
        if isinstance(e, Index):
            a, off, elem = self.addr(e.base, e.index)
            r = vreg(cls="f" if elem == F32 else "x")
            self.ins("flw" if elem == F32 else "lw", rd=r, rs1=a, imm=off)
            return r
        if isinstance(e, CastInt):
            return self.eval(e.operand)  # bools are 0/1 words already
        if isinstance(e, Unary):
            v = self.eval(e.operand)
            r_cls = "f" if e.ty == F32 else "x"
            r = vreg(cls=r_cls)
            if e.op == "-":
                if e.ty == F32:
                    self.ins("fsgnjn.s", rd=r, rs1=v, rs2=v)
                else:
                    self.ins("sub", rd=r, rs1=0, rs2=v)
            elif e.op == "!":
                self.ins("xori", rd=r, rs1=v, imm=1)
            else:  # ~
                self.ins("xori", rd=r, rs1=v, imm=-1)
            return r
        if isinstance(e, Binary):
            return self._binary(e)
        if isinstance(e, GroupAccessor):
            return self._accessor(e)
        if isinstance(e, WarpIntrinsic):
            return self._intrinsic(e)
        raise CodegenError(f"cannot lower {e!r}")

    def _binary(self, e):
        op = e.op
        lty = e.left.ty
        a = self.eval(e.left)
        b = self.eval(e.right)
        if op in ("&&", "||"):
            r = vreg()
            self.ins("and" if op == "&&" else "or", rd=r, rs1=a, rs2=b)
            return r
        if op in ("<", "<=", ">", ">=", "==", "!="):
            r = vreg()
            if lty == F32:
                if op == "<":
                    self.ins("flt.s", rd=r, rs1=a, rs2=b)
                elif op == ">":
                    self.ins("flt.s", rd=r, rs1=b, rs2=a)
                elif op == "<=":
                    self.ins("fle.s", rd=r, rs1=a, rs2=b)
                elif op == ">=":
                    self.ins("fle.s", rd=r, rs1=b, rs2=a)
                elif op == "==":
                    self.ins("feq.s", rd=r, rs1=a, rs2=b)
                else:
                    self.ins("feq.s", rd=r, rs1=a, rs2=b)
                    self.ins("xori", rd=r, rs1=r, imm=1)
                return r
            if op == "<":
                self.ins("slt", rd=r, rs1=a, rs2=b)
            elif op == ">":
                self.ins("slt", rd=r, rs1=b, rs2=a)
            elif op == "<=":
                self.ins("slt", rd=r, rs1=b, rs2=a)
                self.ins("xori", rd=r, rs1=r, imm=1)
            elif op == ">=":
                self.ins("slt", rd=r, rs1=a, rs2=b)
                self.ins("xori", rd=r, rs1=r, imm=1)
            elif op == "==":
                t = vreg()
                self.ins("xor", rd=t, rs1=a, rs2=b)
                self.ins("sltiu", rd=r, rs1=t, imm=1)
            else:
                t = vreg()
                self.ins("xor", rd=t, rs1=a, rs2=b)
                self.ins("sltu", rd=r, rs1=0, rs2=t)
            return r
        if e.ty == F32:
            r = vreg(cls="f")
            self.ins(_F_OP[op], rd=r, rs1=a, rs2=b)
            return r
        r = vreg()
        self.ins(_INT_OP[op], rd=r, rs1=a, rs2=b)
        return r

    def _accessor(self, e):
        S = self.ambient
        r = vreg()
        if e.kind == "num_threads":
            self.ins("addi", rd=r, rs1=0, imm=S)
        elif e.kind == "thread_rank":
            self.ins("andi", rd=r, rs1=self.tid, imm=S - 1)
        else:
            self.ins("srli", rd=r, rs1=self.tid, imm=int(math.log2(S)))
        return r

    def _intrinsic(self, e):
        if self.path != "hw":
            raise CodegenError("warp intrinsic in serialized program")
        if e.kind in _VOTE_MODE:
            pred = self.eval(e.value)
            mask = self.eval(e.member_mask) if e.scope == "warp" else self.li(-1)
            r = vreg()
            self.ins(f"vx_vote.{_VOTE_MODE[e.kind]}", rd=r, rs1=pred, imm=mask)
            return r
        S = self.ambient if e.scope == "tile" else self.core.threads_per_warp
        val = self.eval(e.value)
        is_f = e.value.ty == F32
        if is_f:
            vi = vreg()
            self.ins("fmv.x.w", rd=vi, rs1=val)
            val = vi
        clamp = self.li(S - 1)
        r = vreg()
        self.ins(f"vx_shfl.{_SHFL_MODE[e.kind]}", rd=r, rs1=val, imm=clamp,
                 shfl_offset=e.lane_arg.value)
        if is_f:
            fr = vreg(cls="f")
            self.ins("fmv.w.x", rd=fr, rs1=r)
            return fr
        return r

    def addr(self, base, idx_expr):
        kind, info, elem = self.sym[base]
        vi = self.eval(idx_expr)
        t = vreg()
        self.ins("slli", rd=t, rs1=vi, imm=2)
        a = vreg()
        if kind == "buffer":
            self.ins("add", rd=a, rs1=info, rs2=t)
            return a, 0, elem
        if kind == "shared":
            self.ins("add", rd=a, rs1=self.shared_base, rs2=t)
            off = info
        elif kind == "stack":
            self.ins("add", rd=a, rs1=2, rs2=t)
            off = info
        else:
            raise CodegenError(f"{base} is not addressable")
        if off > 2047:
            vo = self.li(off)
            self.ins("add", rd=a, rs1=a, rs2=vo)
            off = 0
        return a, off, elem

    # -- statements -------------------------------------------------------------
    def stmt(self, s):
        if isinstance(s, VarDecl):
            if s.array_len is not None:
                self.sym[s.name] = ("stack", self._stack_slot(4 * s.array_len),
                                    s.var_ty)
                return
            cls = "f" if s.var_ty == F32 else "x"
            r = vreg(cls=cls)
            if s.init is not None:
                v = self.eval(s.init)
                self.move(r, v, cls)
            elif cls == "f":
                self.ins("fmv.w.x", rd=r, rs1=0)
            else:
                self.ins("addi", rd=r, rs1=0, imm=0)
            self.sym[s.name] = ("reg", r, s.var_ty)
        elif isinstance(s, Assign):
            v = self.eval(s.value)
            if isinstance(s.target, Var):
                kind, r, ty = self.sym[s.target.name]
                self.move(r, v, "f" if ty == F32 else "x")
            else:
                a, off, elem = self.addr(s.target.base, s.target.index)
                self.ins("fsw" if elem == F32 else "sw", rs1=a, rs2=v, imm=off)
        elif isinstance(s, If):
            self._if(s)
        elif isinstance(s, For):
            self._for(s)
        elif isinstance(s, Barrier):
            self.ins("vx_bar")
        elif isinstance(s, TiledPartition):
            try:
                mask = mask_for_size(s.size, self.core)
            except TileError as err:
                raise CodegenError(f"unsupported configuration: {err}")
            m = self.li(mask)
            c = self.li(s.size)
            self.ins("vx_tile", rs1=m, rs2=c)
            self.ambient = s.size
            self.sym[s.group_var] = ("group", None, None)
        elif isinstance(s, GroupSync):
            pass  # lockstep within a logical warp
        elif isinstance(s, ExprStmt):
            self.eval(s.expr)
        else:
            raise CodegenError(f"cannot lower statement {s!r}")

    def _if(self, s):
        c = self.eval(s.cond)
        tramp = self.label("tramp")
        then_l = self.label("then")
        else_l = self.label("else")
        join_l = self.label("join")
        self.ins("vx_split", rs1=c, target=tramp)
        self.ins("jal", rd=0, target=then_l)
        self.place(tramp)
        self.ins("jal", rd=0, target=else_l)
        self.place(then_l)
        for t in s.then_body:
            self.stmt(t)
        self.ins("jal", rd=0, target=join_l)
        self.place(else_l)
        for t in s.else_body:
            self.stmt(t)
        self.place(join_l)
        self.ins("vx_join")

    def _for(self, s):
        r = vreg()
        init = self.eval(s.init)
        self.move(r, init, "x")
        self.sym[s.var] = ("reg", r, I32)
        head = self.label("head")
        body_l = self.label("body")
        end = self.label("end")
        self.place(head)
        cond = self._binary(Binary(op=s.rel_op, ty=BOOL,
                                   left=Var(name=s.var, ty=I32),
                                   right=s.bound))
        self.ins("bne", rs1=cond, rs2=0, target=body_l)
        self.ins("jal", rd=0, target=end)
        self.place(body_l)
        for t in s.body:
            self.stmt(t)
        step = self._binary(Binary(op=s.step_op, ty=I32,
                                   left=Var(name=s.var, ty=I32), right=s.step))
        self.move(r, step, "x")
        self.ins("jal", rd=0, target=head)
        self.place(end)


def _finish(em: _Emit, kernel: Kernel, core: CoreConfig, block_dim, path) -> Program:
    try:
        items, frame = allocate(em.items, em.arrays)
    except AllocError as e:
        raise CodegenError(str(e))
    if frame > core.stack_bytes_per_thread:
        raise CodegenError(
            f"per-thread stack overflow: frame needs {frame} bytes, "
            f"configured {core.stack_bytes_per_thread}")
    meta = {
        "path": path,
        "block_dim": block_dim,
        "warp_size": core.threads_per_warp,
        "params": [(p.name, p.space, p.elem_ty if p.space == "global-buffer"
                    else p.ty) for p in kernel.params],
        "shared_bytes": em.shared_bytes,
        "frame_bytes": frame,
    }
    return Program(text=[Label("main")] + items, entry="main",
                   stack_bytes_per_thread=core.stack_bytes_per_thread,
                   metadata=meta)


def lower_hw(kernel: Kernel, core: CoreConfig, block_dim: int) -> Program:
    """Direct lowering: one vx instruction per warp operation."""
    if not kernel.typed:
        raise CodegenError("kernel must be typechecked")
    if block_dim > core.hardware_threads:
        raise CodegenError(
            f"unsupported configuration: block size {block_dim} exceeds "
            f"{core.hardware_threads} hardware threads")
    if block_dim % core.threads_per_warp:
        raise CodegenError("block size must be a multiple of the warp size")
    em = _Emit(kernel, core, block_dim, "hw")
    em.prologue()
    for s in kernel.body:
        em.stmt(s)
    em.ins("vx_tmc", rs1=0)
    return _finish(em, kernel, core, block_dim, "hw")


def lower_sw(kernel: Kernel, core: CoreConfig, block_dim: int) -> Program:
    """Serialize first, then emit the loop program; each hardware thread
    runs at most one thread block, selected by its global id."""
    if not kernel.typed:
        raise CodegenError("kernel must be typechecked")
    tk = transform(kernel, TransformConfig(block_dim=block_dim,
                                           warp_size=core.threads_per_warp))
    em = _Emit(tk, core, block_dim, "sw")
    hw = em.prologue()
    grid = vreg()
    em.ins("csrr", rd=grid, imm=CSR_GRID_DIM)
    c = vreg()
    em.ins("slt", rd=c, rs1=hw, rs2=grid)
    tramp = em.label("tramp")
    body_l = em.label("body")
    skip = em.label("skip")
    join_l = em.label("join")
    em.ins("vx_split", rs1=c, target=tramp)
    em.ins("jal", rd=0, target=body_l)
    em.place(tramp)
    em.ins("jal", rd=0, target=skip)
    em.place(body_l)
    for s in tk.body:
        em.stmt(s)
    em.ins("jal", rd=0, target=join_l)
    em.place(skip)
    em.place(join_l)
    em.ins("vx_join")
    em.ins("vx_tmc", rs1=0)
    prog = _finish(em, tk, core, block_dim, "sw")
    for i in prog.instructions():
        op = SPEC[i.mnemonic][1]
        if op in (OPC_CUSTOM1, OPC_CUSTOM2) or i.mnemonic.startswith("vx_vote"):
            raise CodegenError(f"serialized program contains {i.mnemonic}")
    return prog


def mnemonic_census(p: Program) -> dict:
    out = {}
    for i in p.instructions():
        out[i.mnemonic] = out.get(i.mnemonic, 0) + 1
    return out
