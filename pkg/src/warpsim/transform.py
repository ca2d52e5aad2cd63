"""Serialize parallel regions into loops over emulated thread indices.

Plain regions become one loop over the block's software threads. A
vote/shuffle boundary becomes a nested block: an outer loop over warps
(or tiles), and inside it a produce loop filling a temporary array with
each lane's operand, the per-kind combination loop, and a consume loop
writing the result back per lane. Uniform-result votes accumulate into a
single scalar instead of an array. Special variables are then rewritten:
``threadIdx.x`` becomes the loop index (or ``outer*width + inner``),
group accessors become arithmetic on the emulated index, and any local
that lives across a region boundary is promoted to a per-thread array.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .ast import (
    BOOL, F32, I32, Assign, Barrier, Binary, BoolLit, Builtin, CastInt,
    ExprStmt, FloatLit, For, GroupAccessor, GroupSync, If, Index, IntLit,
    Kernel, TiledPartition, Unary, Var, VarDecl, WarpIntrinsic,
    is_cross_thread, walk_stmts, walk_exprs_of,
)
from .regions import (
    Boundary, ParallelRegion, RegionGraph, RegionError, FISSION,
    KERNEL_ENTRY, KERNEL_EXIT, fission_control, identify_parallel_regions,
    prune_trivial_regions,
)
from .typecheck import typecheck
from .validate import validate_ir


@dataclass
class TransformConfig:
    block_dim: int = 32
    warp_size: int = 8


def _i(v):
    return IntLit(value=v, ty=I32)


def _var(name):
    return Var(name=name, ty=I32)


def _loop(var, bound, body, tid_expr=None, ambient=None):
    return For(var=var, init=_i(0), rel_op="<", bound=_i(bound),
               step_op="+", step=_i(1), body=body,
               tid_expr=tid_expr, ambient_tile=ambient)


def _tid_nested(outer, width, inner):
    return Binary(op="+", ty=I32,
                  left=Binary(op="*", ty=I32, left=_var(outer), right=_i(width)),
                  right=_var(inner))


def _is_full_mask(e):
    return isinstance(e, IntLit) and e.value in (-1, 0xFFFFFFFF)


class _Namer:
    def __init__(self, taken):
        self.taken = set(taken)

    def fresh(self, base):
        name = base
        n = 0
        while name in self.taken:
            n += 1
            name = f"{base}_{n}"
        self.taken.add(name)
        return name


def _used_names(kernel):
    names = {p.name for p in kernel.params} | {s.name for s in kernel.shared}
    for s in walk_stmts(kernel.body):
        if isinstance(s, VarDecl):
            names.add(s.name)
        if isinstance(s, For):
            names.add(s.var)
        if isinstance(s, TiledPartition):
            names.add(s.group_var)
        for e in walk_exprs_of(s):
            if isinstance(e, Var):
                names.add(e.name)
    return names


# ------------------------------------------------------------ rule lowering

def lower_group_accessor(kind, tid_expr, group_size):
    """Arithmetic form of a group accessor over the emulated thread index."""
    if kind == "num_threads":
        return _i(group_size)
    if kind == "thread_rank":
        return Binary(op="%", ty=I32, left=copy.deepcopy(tid_expr), right=_i(group_size))
    if kind == "meta_group_rank":
        return Binary(op="/", ty=I32, left=copy.deepcopy(tid_expr), right=_i(group_size))
    raise RegionError(f"unknown accessor {kind}")


@dataclass
class LoweringCtx:
    width: int           # lanes per group (warp or tile size)
    block_dim: int
    outer: str           # outer loop variable name
    namer: object
    guard_expr: object = None   # test over saved conditions, or None
    mask_expr: object = None    # member-mask expression, or None when full
    ambient: int = None


def lower_warp_op(op_stmt, ctx: LoweringCtx):
    """Emit the nested-block statements for one vote/shuffle boundary.

    ``op_stmt`` is the boundary statement (assignment/declaration whose sole
    right-hand side is the intrinsic, or a bare intrinsic call). Returns the
    statement list forming the body of the outer per-group loop.
    """
    intr, dest = _split_boundary(op_stmt)
    S = ctx.width
    nm = ctx.namer
    k_val = nm.fresh("_val")
    k_flg = nm.fresh("_flg")
    guarded = ctx.guard_expr is not None or ctx.mask_expr is not None
    val_ty = BOOL if intr.kind.startswith("vote_") else intr.value.ty

    body = [VarDecl(name=k_val, var_ty=val_ty, array_len=S)]
    if guarded:
        body.append(VarDecl(name=k_flg, var_ty=I32, array_len=S))

    # produce: evaluate each lane's operand into the temporary array
    pi = nm.fresh("_innerIdx")
    produce = []
    store_val = Assign(target=Index(base=k_val, index=_var(pi), ty=val_ty),
                       value=copy.deepcopy(intr.value))
    if guarded:
        produce.append(Assign(target=Index(base=k_flg, index=_var(pi), ty=I32),
                              value=_i(0)))
        cond = _participation(ctx, pi)
        produce.append(If(cond=cond, then_body=[
            store_val,
            Assign(target=Index(base=k_flg, index=_var(pi), ty=I32), value=_i(1)),
        ], else_body=[]))
    else:
        produce.append(store_val)
    body.append(_loop(pi, S, produce,
                      tid_expr=_tid_nested(ctx.outer, S, pi), ambient=ctx.ambient))

    # combine per the per-kind rule
    ri = nm.fresh("_innerIdx")

    def flg_at(i_var):
        return Binary(op="!=", ty=BOOL,
                      left=Index(base=k_flg, index=_var(i_var), ty=I32),
                      right=_i(0))

    def val_at(i_expr):
        return Index(base=k_val, index=i_expr, ty=val_ty)

    consume_src = None
    if intr.kind in ("vote_any", "vote_all"):
        acc = nm.fresh("_acc")
        op = "||" if intr.kind == "vote_any" else "&&"
        init = BoolLit(value=intr.kind == "vote_all", ty=BOOL)
        body.append(VarDecl(name=acc, var_ty=BOOL, init=init))
        rule = Assign(target=Var(name=acc, ty=BOOL),
                      value=Binary(op=op, ty=BOOL, left=Var(name=acc, ty=BOOL),
                                   right=val_at(_var(ri))))
        body.append(_loop(ri, S, [_wrap(rule, flg_at(ri) if guarded else None)],
                          tid_expr=_tid_nested(ctx.outer, S, ri), ambient=ctx.ambient))
        consume_src = CastInt(operand=Var(name=acc, ty=BOOL), ty=I32)
    elif intr.kind == "vote_ballot":
        acc = nm.fresh("_acc")
        body.append(VarDecl(name=acc, var_ty=I32, init=_i(0)))
        rule = Assign(
            target=Var(name=acc, ty=I32),
            value=Binary(op="|", ty=I32, left=Var(name=acc, ty=I32),
                         right=Binary(op="<<", ty=I32,
                                      left=CastInt(operand=val_at(_var(ri)), ty=I32),
                                      right=_var(ri))))
        body.append(_loop(ri, S, [_wrap(rule, flg_at(ri) if guarded else None)],
                          tid_expr=_tid_nested(ctx.outer, S, ri), ambient=ctx.ambient))
        consume_src = Var(name=acc, ty=I32)
    elif intr.kind == "vote_uni":
        acc = nm.fresh("_acc")
        ref = nm.fresh("_ref")
        seen = nm.fresh("_seen")
        body.append(VarDecl(name=acc, var_ty=BOOL, init=BoolLit(value=True, ty=BOOL)))
        body.append(VarDecl(name=ref, var_ty=BOOL, init=BoolLit(value=False, ty=BOOL)))
        body.append(VarDecl(name=seen, var_ty=I32, init=_i(0)))
        steps = [
            If(cond=Binary(op="==", ty=BOOL, left=Var(name=seen, ty=I32), right=_i(0)),
               then_body=[Assign(target=Var(name=ref, ty=BOOL), value=val_at(_var(ri))),
                          Assign(target=Var(name=seen, ty=I32), value=_i(1))],
               else_body=[]),
            If(cond=Binary(op="!=", ty=BOOL, left=val_at(_var(ri)),
                           right=Var(name=ref, ty=BOOL)),
               then_body=[Assign(target=Var(name=acc, ty=BOOL),
                                 value=BoolLit(value=False, ty=BOOL))],
               else_body=[]),
        ]
        if guarded:
            steps = [If(cond=flg_at(ri), then_body=steps, else_body=[])]
        body.append(_loop(ri, S, steps,
                          tid_expr=_tid_nested(ctx.outer, S, ri), ambient=ctx.ambient))
        consume_src = CastInt(operand=Var(name=acc, ty=BOOL), ty=I32)
    else:  # shuffles
        res = nm.fresh("_res")
        src = nm.fresh("_src")
        body.append(VarDecl(name=res, var_ty=val_ty, array_len=S))
        delta = intr.lane_arg.value
        if intr.kind == "shfl_up":
            src_expr = Binary(op="-", ty=I32, left=_var(ri), right=_i(delta))
        elif intr.kind == "shfl_down":
            src_expr = Binary(op="+", ty=I32, left=_var(ri), right=_i(delta))
        elif intr.kind == "shfl_xor":
            src_expr = Binary(op="^", ty=I32, left=_var(ri), right=_i(delta))
        else:  # shfl_idx
            src_expr = _i(delta)
        in_range = Binary(op="&&", ty=BOOL,
                          left=Binary(op=">=", ty=BOOL, left=_var(src), right=_i(0)),
                          right=Binary(op="<=", ty=BOOL, left=_var(src), right=_i(S - 1)))
        own = Assign(target=Index(base=res, index=_var(ri), ty=val_ty),
                     value=val_at(_var(ri)))
        take = Assign(target=Index(base=res, index=_var(ri), ty=val_ty),
                      value=val_at(_var(src)))
        if guarded:
            ok = nm.fresh("_ok")
            steps = [
                VarDecl(name=src, var_ty=I32, init=src_expr),
                VarDecl(name=ok, var_ty=I32, init=_i(0)),
                If(cond=in_range,
                   then_body=[If(cond=flg_at_src(k_flg, src),
                                 then_body=[Assign(target=Var(name=ok, ty=I32),
                                                   value=_i(1))],
                                 else_body=[])],
                   else_body=[]),
                If(cond=Binary(op="!=", ty=BOOL, left=Var(name=ok, ty=I32),
                               right=_i(0)),
                   then_body=[take], else_body=[own]),
            ]
            steps = [If(cond=flg_at(ri), then_body=steps, else_body=[])]
        else:
            steps = [
                VarDecl(name=src, var_ty=I32, init=src_expr),
                If(cond=in_range, then_body=[take], else_body=[own]),
            ]
        body.append(_loop(ri, S, steps,
                          tid_expr=_tid_nested(ctx.outer, S, ri), ambient=ctx.ambient))
        consume_src = Index(base=res, index=None, ty=val_ty)  # index filled below

    # consume: write the result back per lane
    if dest is not None:
        ci = nm.fresh("_innerIdx")
        if isinstance(consume_src, Index):
            consume_src = Index(base=consume_src.base, index=_var(ci), ty=val_ty)
        if isinstance(dest, tuple):  # boundary was a declaration
            name, ty = dest
            wr = VarDecl(name=name, var_ty=ty, init=consume_src)
        else:
            wr = Assign(target=copy.deepcopy(dest), value=consume_src)
        body.append(_loop(ci, S, [_wrap(wr, flg_at(ci) if guarded else None)],
                          tid_expr=_tid_nested(ctx.outer, S, ci), ambient=ctx.ambient))
    return body


def flg_at_src(k_flg, src_var):
    return Binary(op="!=", ty=BOOL,
                  left=Index(base=k_flg, index=_var(src_var), ty=I32),
                  right=_i(0))


def _wrap(stmt, cond):
    if cond is None:
        return stmt
    return If(cond=cond, then_body=[stmt], else_body=[])


def _participation(ctx: LoweringCtx, lane_var):
    terms = []
    if ctx.guard_expr is not None:
        terms.append(copy.deepcopy(ctx.guard_expr))
    if ctx.mask_expr is not None:
        bit = Binary(op="&", ty=I32,
                     left=Binary(op=">>", ty=I32,
                                 left=copy.deepcopy(ctx.mask_expr),
                                 right=_var(lane_var)),
                     right=_i(1))
        terms.append(Binary(op="!=", ty=BOOL, left=bit, right=_i(0)))
    expr = terms[0]
    for t in terms[1:]:
        expr = Binary(op="&&", ty=BOOL, left=expr, right=t)
    return expr


def _split_boundary(op_stmt):
    """Return (intrinsic, dest). dest is a Var/Index target, a
    (name, type) pair when the boundary declared its result, or None."""
    if isinstance(op_stmt, Assign):
        return op_stmt.value, op_stmt.target
    if isinstance(op_stmt, VarDecl):
        return op_stmt.init, (op_stmt.name, op_stmt.var_ty)
    if isinstance(op_stmt, ExprStmt):
        return op_stmt.expr, None
    raise RegionError(f"not a warp-op boundary: {op_stmt!r}")


# ------------------------------------------------------------- serialization

def serialize_regions(graph: RegionGraph, cfg: TransformConfig) -> Kernel:
    """Wrap every region in a loop over the block's software threads and
    expand vote/shuffle boundaries into nested per-group blocks."""
    return Serializer(graph.kernel, graph, cfg).run()


class Serializer:
    """Builds the serialized kernel body from a pruned region graph."""

    def __init__(self, kernel: Kernel, graph: RegionGraph, cfg: TransformConfig):
        self.kernel = kernel
        self.graph = graph
        self.cfg = cfg
        self.namer = _Namer(_used_names(kernel))

    def _group_width(self, el: Boundary):
        intr, _ = _split_boundary(el.op)
        if intr.scope == "tile":
            if el.tile_size is None:
                raise RegionError("tile-scope intrinsic before any tiled_partition")
            return el.tile_size
        return self.cfg.warp_size

    def run(self) -> Kernel:
        B = self.cfg.block_dim
        out = []
        for el in self.graph.elements:
            if isinstance(el, ParallelRegion):
                stmts = el.body()
                if not stmts:
                    continue
                li = self.namer.fresh("_loopIdx")
                ambient = el.scope if el.scope is not None else self.cfg.warp_size
                out.append(_loop(li, B, stmts, tid_expr=_var(li), ambient=ambient))
            elif el.kind == "warp_intrinsic":
                S = self._group_width(el)
                if B % S != 0:
                    raise RegionError(
                        f"block size {B} is not a multiple of group width {S}")
                intr, _ = _split_boundary(el.op)
                mask = None
                if intr.scope == "warp" and not _is_full_mask(intr.member_mask):
                    mask = intr.member_mask
                oi = self.namer.fresh("_outerIdx")
                ambient = el.tile_size if el.tile_size is not None else self.cfg.warp_size
                ctx = LoweringCtx(width=S, block_dim=B, outer=oi, namer=self.namer,
                                  guard_expr=el.guard_expr, mask_expr=mask,
                                  ambient=ambient)
                nested = lower_warp_op(el.op, ctx)
                out.append(_loop(oi, B // S, nested, tid_expr=None, ambient=ambient))
            # barrier / group_sync / tiled_partition / fission / entry / exit:
            # the loop split is the synchronization; nothing is emitted.
        new = Kernel(name=self.kernel.name, params=copy.deepcopy(self.kernel.params),
                     shared=copy.deepcopy(self.kernel.shared), body=out)
        return new


# -------------------------------------------------- special-variable rewrite

def replace_special_vars(kernel: Kernel, cfg: TransformConfig) -> Kernel:
    """Rewrite builtins to loop-index arithmetic and promote thread-locals
    that cross region boundaries to per-thread arrays."""
    decls = {}  # name -> VarDecl for local scalars
    for s in walk_stmts(kernel.body):
        if isinstance(s, VarDecl) and s.array_len is None:
            decls[s.name] = s

    # a scalar referenced by more than one top-level loop crosses a boundary
    used_by = {name: set() for name in decls}
    for idx, top in enumerate(kernel.body):
        for s in walk_stmts([top]):
            if isinstance(s, VarDecl) and s.name in used_by:
                used_by[s.name].add(idx)
            for e in walk_exprs_of(s):
                if isinstance(e, Var) and e.name in used_by:
                    used_by[e.name].add(idx)
    promoted = {name for name, units in used_by.items() if len(units) > 1}

    B = cfg.block_dim

    def rw_expr(e, tid, ambient):
        if e is None:
            return None
        if isinstance(e, Builtin):
            if e.name == "threadIdx.x":
                if tid is None:
                    raise RegionError("threadIdx.x outside a serialized loop")
                return copy.deepcopy(tid)
            if e.name == "blockDim.x":
                return _i(B)
            if e.name == "warpSize":
                return _i(cfg.warp_size)
            return e
        if isinstance(e, GroupAccessor):
            if tid is None:
                raise RegionError("group accessor outside a serialized loop")
            return lower_group_accessor(e.kind, tid, ambient)
        if isinstance(e, Var) and e.name in promoted:
            return Index(base=e.name, index=copy.deepcopy(tid), ty=e.ty)
        e = copy.copy(e)
        for f in ("index", "operand", "left", "right"):
            if hasattr(e, f) and getattr(e, f) is not None:
                setattr(e, f, rw_expr(getattr(e, f), tid, ambient))
        return e

    def rw_stmts(stmts, tid, ambient):
        out = []
        for s in stmts:
            s = copy.copy(s)
            if isinstance(s, VarDecl):
                if s.name in promoted:
                    if s.init is not None:
                        out.append(Assign(
                            target=Index(base=s.name, index=copy.deepcopy(tid),
                                         ty=s.var_ty),
                            value=rw_expr(s.init, tid, ambient)))
                    continue
                s.init = rw_expr(s.init, tid, ambient)
                out.append(s)
            elif isinstance(s, Assign):
                s.target = rw_expr(s.target, tid, ambient)
                s.value = rw_expr(s.value, tid, ambient)
                out.append(s)
            elif isinstance(s, If):
                s.cond = rw_expr(s.cond, tid, ambient)
                s.then_body = rw_stmts(s.then_body, tid, ambient)
                s.else_body = rw_stmts(s.else_body, tid, ambient)
                out.append(s)
            elif isinstance(s, For):
                inner_tid = s.tid_expr if s.tid_expr is not None else tid
                inner_amb = s.ambient_tile if s.ambient_tile is not None else ambient
                s.init = rw_expr(s.init, tid, ambient)
                s.bound = rw_expr(s.bound, tid, ambient)
                s.step = rw_expr(s.step, tid, ambient)
                s.body = rw_stmts(s.body, inner_tid, inner_amb)
                out.append(s)
            elif isinstance(s, ExprStmt):
                s.expr = rw_expr(s.expr, tid, ambient)
                out.append(s)
            else:
                out.append(s)
        return out

    body = rw_stmts(kernel.body, None, cfg.warp_size)
    head = [VarDecl(name=n, var_ty=decls[n].var_ty, array_len=B)
            for n in sorted(promoted)]
    return Kernel(name=kernel.name, params=kernel.params, shared=kernel.shared,
                  body=head + body)


# --------------------------------------------------------------- entry point

def transform(kernel: Kernel, cfg: TransformConfig) -> Kernel:
    """Full serializing pipeline; output contains no cross-thread operations
    and passes the validator and typechecker."""
    graph = identify_parallel_regions(kernel)
    graph = fission_control(graph)
    graph = prune_trivial_regions(graph)
    ser = serialize_regions(graph, cfg)
    out = replace_special_vars(ser, cfg)
    validate_ir(out)
    typecheck(out)
    leftovers = [s for s in walk_stmts(out.body) if is_cross_thread(s)]
    if leftovers:
        raise RegionError(f"cross-thread operations survived: {leftovers}")
    return out
