"""Reference interpreter: lockstep whole-block execution with direct
collective semantics. Ground truth for all differential tests.

Divergence is handled by recursive masked execution: the then-branch runs
under the condition mask, the else-branch under its complement. Votes and
shuffles take part only for lanes that are active *and* selected by the
member mask.
"""

from __future__ import annotations

import numpy as np

from . import numeric as nm
from .ast import (
    BOOL, F32, I32, Assign, Barrier, Binary, BoolLit, Builtin, CastInt,
    ExprStmt, FloatLit, For, GroupAccessor, GroupSync, If, Index, IntLit,
    Kernel, TiledPartition, Unary, Var, VarDecl, WarpIntrinsic,
)


class OracleError(Exception):
    pass


class BarrierDivergenceError(OracleError):
    pass


def eval_intrinsic(kind, values, participants, lane_arg, group_size):
    """Collective semantics over one group.

    ``values`` and ``participants`` are per-lane lists of length
    ``group_size``; non-participant results are None (caller leaves the
    destination unchanged). Shuffle source lanes outside [0, group_size)
    or pointing at a non-participant yield the calling lane's own value.
    """
    res = [None] * group_size
    if kind == "vote_ballot":
        bits = 0
        for l in range(group_size):
            if participants[l] and values[l]:
                bits |= 1 << l
        bits = nm.s32(bits)
        for l in range(group_size):
            if participants[l]:
                res[l] = bits
        return res
    if kind in ("vote_any", "vote_all", "vote_uni"):
        got = [values[l] for l in range(group_size) if participants[l]]
        if kind == "vote_any":
            r = int(any(bool(v) for v in got))
        elif kind == "vote_all":
            r = int(all(bool(v) for v in got))
        else:
            r = int(all(v == got[0] for v in got)) if got else 1
        for l in range(group_size):
            if participants[l]:
                res[l] = r
        return res
    # shuffles
    delta = lane_arg
    for l in range(group_size):
        if not participants[l]:
            continue
        if kind == "shfl_up":
            src = l - delta
        elif kind == "shfl_down":
            src = l + delta
        elif kind == "shfl_xor":
            src = l ^ delta
        elif kind == "shfl_idx":
            src = delta
        else:
            raise OracleError(f"unknown intrinsic {kind}")
        if 0 <= src < group_size and participants[src]:
            res[l] = values[src]
        else:
            res[l] = values[l]
    return res


_ZERO = {I32: 0, F32: np.float32(0.0), BOOL: False}


class _BlockRun:
    def __init__(self, kernel, block_idx, grid, block, warp_size, buffers, scalars):
        self.k = kernel
        self.b = block_idx
        self.grid = grid
        self.block = block
        self.warp_size = warp_size
        self.buffers = buffers
        self.scalars = scalars
        self.locals = [dict() for _ in range(block)]
        self.arrays = [dict() for _ in range(block)]  # per-thread local arrays
        self.shared = {sh.name: np.zeros(sh.length, dtype=_np_ty(sh.elem_ty))
                       for sh in kernel.shared}
        self.tile_size = [warp_size] * block
        self.array_names = {sh.name for sh in kernel.shared}

    # -- expression evaluation -------------------------------------------------
    def eval(self, e, t):
        if isinstance(e, IntLit):
            return nm.s32(e.value)
        if isinstance(e, FloatLit):
            return np.float32(e.value)
        if isinstance(e, BoolLit):
            return e.value
        if isinstance(e, Builtin):
            return {"threadIdx.x": t, "blockIdx.x": self.b,
                    "blockDim.x": self.block, "gridDim.x": self.grid,
                    "warpSize": self.warp_size}[e.name]
        if isinstance(e, Var):
            if e.name in self.locals[t]:
                return self.locals[t][e.name]
            if e.name in self.scalars:
                return self.scalars[e.name]
            raise OracleError(f"thread {t}: read of undefined {e.name!r}")
        if isinstance(e, Index):
            arr = self._array(e.base, t)
            i = self.eval(e.index, t)
            if not (0 <= i < len(arr)):
                raise OracleError(
                    f"thread {t}: {e.base}[{i}] out of bounds (len {len(arr)})")
            v = arr[i]
            return np.float32(v) if arr.dtype == np.float32 else nm.s32(int(v))
        if isinstance(e, Unary):
            v = self.eval(e.operand, t)
            if e.op == "-":
                return nm.s32(-v) if e.ty == I32 else np.float32(-v)
            if e.op == "!":
                return not v
            return nm.s32(~v)
        if isinstance(e, CastInt):
            return int(bool(self.eval(e.operand, t)))
        if isinstance(e, Binary):
            a = self.eval(e.left, t)
            b = self.eval(e.right, t)
            return _binop(e.op, a, b, e.left.ty)
        if isinstance(e, GroupAccessor):
            gs = self.tile_size[t]
            if e.kind == "num_threads":
                return gs
            if e.kind == "thread_rank":
                return t % gs
            return t // gs
        if isinstance(e, WarpIntrinsic):
            raise OracleError("intrinsic evaluated outside statement context")
        raise OracleError(f"cannot evaluate {e!r}")

    def _array(self, name, t):
        if name in self.buffers:
            return self.buffers[name]
        if name in self.shared:
            return self.shared[name]
        if name in self.arrays[t]:
            return self.arrays[t][name]
        raise OracleError(f"thread {t}: unknown array {name!r}")

    def store(self, target, t, value):
        if isinstance(target, Var):
            self.locals[t][target.name] = value
        else:
            arr = self._array(target.base, t)
            i = self.eval(target.index, t)
            if not (0 <= i < len(arr)):
                raise OracleError(
                    f"thread {t}: {target.base}[{i}] out of bounds (len {len(arr)})")
            if arr.dtype == np.float32:
                arr[i] = np.float32(value)
            else:
                arr[i] = np.int32(nm.s32(int(value)))

    # -- statements --------------------------------------------------------------
    def run(self, stmts, mask):
        for s in stmts:
            self.stmt(s, mask)

    def stmt(self, s, mask):
        active = [t for t in range(self.block) if mask[t]]
        if not active:
            return
        if isinstance(s, (Assign, VarDecl)) and isinstance(
                s.value if isinstance(s, Assign) else s.init, WarpIntrinsic):
            intr = s.value if isinstance(s, Assign) else s.init
            self._collective(s, intr, mask)
            return
        if isinstance(s, ExprStmt) and isinstance(s.expr, WarpIntrinsic):
            self._collective(None, s.expr, mask)
            return
        if isinstance(s, VarDecl):
            for t in active:
                if s.array_len is not None:
                    self.arrays[t][s.name] = np.zeros(
                        s.array_len, dtype=_np_ty(s.var_ty))
                else:
                    v = self.eval(s.init, t) if s.init is not None else _ZERO[s.var_ty]
                    self.locals[t][s.name] = v
        elif isinstance(s, Assign):
            for t in active:
                self.store(s.target, t, self.eval(s.value, t))
        elif isinstance(s, If):
            tmask = [mask[t] and bool(self.eval(s.cond, t)) if mask[t] else False
                     for t in range(self.block)]
            fmask = [mask[t] and not tmask[t] for t in range(self.block)]
            self.run(s.then_body, tmask)
            self.run(s.else_body, fmask)
        elif isinstance(s, For):
            for t in active:
                self.locals[t][s.var] = self.eval(s.init, t)
            while True:
                cont = [mask[t] and bool(_binop(s.rel_op, self.locals[t][s.var],
                                                self.eval(s.bound, t), I32))
                        if mask[t] else False
                        for t in range(self.block)]
                if not any(cont):
                    break
                self.run(s.body, cont)
                for t in range(self.block):
                    if cont[t]:
                        self.locals[t][s.var] = _binop(
                            s.step_op, self.locals[t][s.var], self.eval(s.step, t), I32)
        elif isinstance(s, Barrier):
            if len(active) != self.block:
                raise BarrierDivergenceError(
                    f"barrier reached by {len(active)} of {self.block} threads")
        elif isinstance(s, TiledPartition):
            if len(active) != self.block:
                raise OracleError("tiled_partition under divergence")
            if s.size > self.block:
                raise OracleError(
                    f"tile size {s.size} exceeds block size {self.block}")
            for t in active:
                self.tile_size[t] = s.size
        elif isinstance(s, GroupSync):
            pass  # lockstep execution already orders tile members
        elif isinstance(s, ExprStmt):
            for t in active:
                self.eval(s.expr, t)
        else:
            raise OracleError(f"cannot execute {s!r}")

    def _collective(self, dest_stmt, intr, mask):
        gs = self.warp_size if intr.scope == "warp" else self.tile_size[
            next(t for t in range(self.block) if mask[t])]
        for g0 in range(0, self.block, gs):
            lanes = list(range(g0, min(g0 + gs, self.block)))
            width = len(lanes)
            part = []
            vals = []
            for l, t in enumerate(lanes):
                p = bool(mask[t])
                if p and intr.scope == "warp":
                    mval = self.eval(intr.member_mask, t)
                    p = bool((nm.u32(mval) >> l) & 1)
                part.append(p)
                vals.append(self.eval(intr.value, t) if p else None)
            lane_arg = intr.lane_arg.value if intr.lane_arg is not None else None
            res = eval_intrinsic(intr.kind, vals, part, lane_arg, width)
            if dest_stmt is None:
                continue
            for l, t in enumerate(lanes):
                if not part[l]:
                    continue
                if isinstance(dest_stmt, VarDecl):
                    self.locals[t][dest_stmt.name] = res[l]
                else:
                    self.store(dest_stmt.target, t, res[l])


def _np_ty(ty):
    return np.float32 if ty == F32 else np.int32


def _binop(op, a, b, ty):
    if ty == F32 and op in ("+", "-", "*", "/"):
        return nm.f32_binop(op, a, b)
    if op == "+":
        return nm.s32(a + b)
    if op == "*":
        return nm.s32(a * b)
    if op == "-":
        return nm.s32(a - b)
    if op == "<":
        return bool(a < b)
    if op == "<=":
        return bool(a <= b)
    if op == ">":
        return bool(a > b)
    if op == ">=":
        return bool(a >= b)
    if op == "==":
        return bool(a == b)
    if op == "!=":
        return bool(a != b)
    if op == "&&":
        return bool(a) and bool(b)
    if op == "||":
        return bool(a) or bool(b)
    if op == "/":
        return nm.sdiv(a, b)
    if op == "%":
        return nm.srem(a, b)
    if op == "<<":
        return nm.shl(a, b)
    if op == ">>":
        return nm.sra(a, b)
    if op == "&":
        return nm.s32(a & b)
    if op == "|":
        return nm.s32(a | b)
    return nm.s32(a ^ b)


def _split_inputs(kernel, inputs):
    buffers, scalars = {}, {}
    for p in kernel.params:
        if p.name not in inputs:
            raise OracleError(f"missing input for parameter {p.name!r}")
        v = inputs[p.name]
        if p.space == "global-buffer":
            buffers[p.name] = np.array(v, dtype=_np_ty(p.elem_ty), copy=True)
        else:
            scalars[p.name] = nm.s32(int(v)) if p.ty == I32 else np.float32(v)
    return buffers, scalars


def run_reference(kernel: Kernel, grid: int, block: int, inputs: dict,
                  warp_size: int = 8) -> dict:
    """Execute a typechecked kernel and return final buffer contents."""
    if not kernel.typed:
        raise OracleError("kernel must be typechecked first")
    buffers, scalars = _split_inputs(kernel, inputs)
    for b in range(grid):
        run = _BlockRun(kernel, b, grid, block, warp_size, buffers, scalars)
        run.run(kernel.body, [True] * block)
    return buffers


def run_sequential(kernel: Kernel, grid: int, block: int, inputs: dict,
                   warp_size: int = 8) -> dict:
    """One thread at a time, valid only for kernels without cross-thread
    operations; used to check lockstep soundness."""
    from .ast import is_cross_thread, walk_stmts

    if any(is_cross_thread(s) for s in walk_stmts(kernel.body)):
        raise OracleError("sequential execution requires an intrinsic-free kernel")
    buffers, scalars = _split_inputs(kernel, inputs)
    for b in range(grid):
        run = _BlockRun(kernel, b, grid, block, warp_size, buffers, scalars)
        for t in range(block):
            m = [False] * block
            m[t] = True
            run.run(kernel.body, m)
    return buffers
