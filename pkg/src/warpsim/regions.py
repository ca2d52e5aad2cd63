"""Parallel-region analysis: split a kernel body at cross-thread operations.

The graph alternates boundaries and regions. Cross-thread statements
(barrier, tiled_partition, group_sync, vote/shuffle) live on boundaries;
region bodies never contain one. Statements guarded by an if whose body
spans a boundary are kept as guarded fragments; control-structure fission
later materializes the saved-condition re-tests. Constant-trip-count
loops containing cross-thread operations are unrolled first so every
boundary surfaces at fragment level.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

from .ast import (
    Assign, Barrier, Binary, BoolLit, ExprStmt, For, GroupSync, If, IntLit,
    Kernel, Stmt, TiledPartition, Unary, Var, VarDecl, WarpIntrinsic,
    is_cross_thread, walk_stmts, struct_eq,
)

KERNEL_ENTRY = "kernel-entry"
KERNEL_EXIT = "kernel-exit"
FISSION = "fission"

MAX_UNROLL = 1024


class RegionError(Exception):
    pass


@dataclass(frozen=True)
class Guard:
    if_id: int
    polarity: bool
    cond: object  # original condition expression (shared, not copied)

    def __repr__(self):
        return f"g{self.if_id}{'+' if self.polarity else '-'}"


@dataclass
class Fragment:
    guards: tuple
    stmts: list


@dataclass
class ParallelRegion:
    items: list  # of Fragment; after fission: one unguarded Fragment
    scope: Optional[int] = None  # ambient tile size; None = warp scope
    live_thread_locals: set = field(default_factory=set)

    @property
    def trivial(self) -> bool:
        return all(not f.stmts for f in self.items)

    def body(self):
        out = []
        for f in self.items:
            out.extend(f.stmts)
        return out


@dataclass
class Boundary:
    kind: str  # barrier | tiled_partition | group_sync | warp_intrinsic
    #          # | kernel-entry | kernel-exit | fission
    op: Optional[Stmt] = None  # the original statement
    guards: tuple = ()
    tile_size: Optional[int] = None  # ambient tile size after this boundary
    guard_expr: object = None  # filled by fission (test over saved conditions)


@dataclass
class RegionGraph:
    elements: list  # alternating Boundary / ParallelRegion, boundaries at ends
    source_body: list  # body the graph was built from (loops pre-unrolled)
    kernel: object = None  # the kernel the graph was built from
    fissioned: bool = False

    @property
    def regions(self):
        return [e for e in self.elements if isinstance(e, ParallelRegion)]

    @property
    def boundaries(self):
        return [e for e in self.elements if isinstance(e, Boundary)]


# ----------------------------------------------------------- loop unrolling

def _const_value(e):
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, Unary) and e.op == "-":
        v = _const_value(e.operand)
        return None if v is None else -v
    return None


def _subst_expr(e, name, value):
    if isinstance(e, Var) and e.name == name:
        return IntLit(value=value, ty="i32")
    out = copy.copy(e)
    for f in ("index", "operand", "left", "right", "member_mask", "value", "lane_arg"):
        if hasattr(out, f) and getattr(out, f) is not None \
                and not isinstance(getattr(out, f), (int, str, bool, float)):
            setattr(out, f, _subst_expr(getattr(out, f), name, value))
    return out


def _subst_stmt(s, name, value):
    s = copy.copy(s)
    if isinstance(s, VarDecl) and s.init is not None:
        s.init = _subst_expr(s.init, name, value)
    elif isinstance(s, Assign):
        s.target = _subst_expr(s.target, name, value)
        s.value = _subst_expr(s.value, name, value)
    elif isinstance(s, If):
        s.cond = _subst_expr(s.cond, name, value)
        s.then_body = [_subst_stmt(t, name, value) for t in s.then_body]
        s.else_body = [_subst_stmt(t, name, value) for t in s.else_body]
    elif isinstance(s, For):
        s.init = _subst_expr(s.init, name, value)
        s.bound = _subst_expr(s.bound, name, value)
        s.step = _subst_expr(s.step, name, value)
        s.body = [_subst_stmt(t, name, value) for t in s.body]
    elif isinstance(s, ExprStmt):
        s.expr = _subst_expr(s.expr, name, value)
    return s


def _trip_values(loop: For):
    init = _const_value(loop.init)
    bound = _const_value(loop.bound)
    step = _const_value(loop.step)
    if init is None or bound is None or step is None:
        raise RegionError(
            "cross-thread operation in a loop without constant bounds")
    rel = {"<": lambda a, b: a < b, "<=": lambda a, b: a <= b,
           ">": lambda a, b: a > b, ">=": lambda a, b: a >= b,
           "!=": lambda a, b: a != b}[loop.rel_op]
    stepf = {"+": lambda a, b: a + b, "-": lambda a, b: a - b,
             "*": lambda a, b: a * b, "/": lambda a, b: a // b if b else 0,
             "<<": lambda a, b: a << b, ">>": lambda a, b: a >> b}[loop.step_op]
    vals = []
    i = init
    while rel(i, bound):
        vals.append(i)
        i = stepf(i, step)
        if len(vals) > MAX_UNROLL:
            raise RegionError(f"loop unrolls past {MAX_UNROLL} iterations")
    return vals


def unroll_cross_thread_loops(stmts):
    """Fully unroll constant loops whose bodies contain cross-thread ops."""
    out = []
    for s in stmts:
        if isinstance(s, If):
            s = copy.copy(s)
            s.then_body = unroll_cross_thread_loops(s.then_body)
            s.else_body = unroll_cross_thread_loops(s.else_body)
            out.append(s)
        elif isinstance(s, For):
            if any(is_cross_thread(t) for t in walk_stmts(s.body)):
                body = unroll_cross_thread_loops(s.body)
                for v in _trip_values(s):
                    out.extend(_subst_stmt(t, s.var, v) for t in body)
            else:
                out.append(s)
        else:
            out.append(s)
    return out


# ------------------------------------------------------ region identification

def _has_cross_thread(stmts):
    return any(is_cross_thread(s) for s in walk_stmts(stmts))


class _Builder:
    def __init__(self):
        self.elements = [Boundary(kind=KERNEL_ENTRY)]
        self.items = []
        self.stmts = []
        self.cur_guards = ()
        self.ambient = None  # tile size; None until a partition is seen
        self.next_if_id = 0

    def _flush(self, guards):
        if self.stmts:
            self.items.append(Fragment(guards=self.cur_guards, stmts=self.stmts))
            self.stmts = []
        self.cur_guards = guards

    def add_stmt(self, s, guards):
        if guards != self.cur_guards:
            self._flush(guards)
        self.stmts.append(s)

    def add_boundary(self, kind, op, guards):
        self._flush(guards)
        self.elements.append(ParallelRegion(items=self.items, scope=self.ambient))
        self.items = []
        if kind == "tiled_partition":
            self.ambient = op.size
        self.elements.append(Boundary(kind=kind, op=op, guards=guards,
                                      tile_size=self.ambient))

    def finish(self):
        self._flush(())
        self.elements.append(ParallelRegion(items=self.items, scope=self.ambient))
        self.elements.append(Boundary(kind=KERNEL_EXIT, tile_size=self.ambient))
        return self.elements


def _boundary_kind(s):
    if isinstance(s, Barrier):
        return "barrier"
    if isinstance(s, TiledPartition):
        return "tiled_partition"
    if isinstance(s, GroupSync):
        return "group_sync"
    return "warp_intrinsic"


def _walk(b: _Builder, stmts, guards):
    for s in stmts:
        if is_cross_thread(s):
            if isinstance(s, TiledPartition) and guards:
                raise RegionError("tiled_partition under a condition")
            b.add_boundary(_boundary_kind(s), s, guards)
        elif isinstance(s, If) and _has_cross_thread(s.then_body + s.else_body):
            gid = b.next_if_id
            b.next_if_id += 1
            _walk(b, s.then_body, guards + (Guard(gid, True, s.cond),))
            if s.else_body:
                b.add_boundary(FISSION, None, guards)
                _walk(b, s.else_body, guards + (Guard(gid, False, s.cond),))
        else:
            b.add_stmt(s, guards)


def identify_parallel_regions(kernel: Kernel) -> RegionGraph:
    """Split the kernel body at cross-thread operations (unrolling constant
    loops that contain them), keeping statements under spanning ifs as
    guarded fragments."""
    if not kernel.typed:
        raise RegionError("kernel must be typechecked first")
    body = unroll_cross_thread_loops(copy.deepcopy(kernel.body))
    b = _Builder()
    _walk(b, body, ())
    return RegionGraph(elements=b.finish(), source_body=body, kernel=kernel)


# -------------------------------------------------------------- reconstruction

def reconstruct(graph: RegionGraph) -> list:
    """Reassemble the statement list the graph was built from; the result
    must be structurally identical to ``graph.source_body``."""
    if graph.fissioned:
        raise RegionError("reconstruction applies to pre-fission graphs")
    pairs = []
    for el in graph.elements:
        if isinstance(el, ParallelRegion):
            for f in el.items:
                pairs.extend((f.guards, s) for s in f.stmts)
        elif el.kind not in (KERNEL_ENTRY, KERNEL_EXIT, FISSION):
            pairs.append((el.guards, el.op))
    return _rebuild(pairs, 0)


def _rebuild(pairs, depth):
    out = []
    i = 0
    while i < len(pairs):
        guards, s = pairs[i]
        if len(guards) == depth:
            out.append(s)
            i += 1
            continue
        gid = guards[depth].if_id
        j = i
        while j < len(pairs) and len(pairs[j][0]) > depth \
                and pairs[j][0][depth].if_id == gid:
            j += 1
        chunk = pairs[i:j]
        then_pairs = [p for p in chunk if p[0][depth].polarity]
        else_pairs = [p for p in chunk if not p[0][depth].polarity]
        out.append(If(cond=guards[depth].cond,
                      then_body=_rebuild(then_pairs, depth + 1),
                      else_body=_rebuild(else_pairs, depth + 1)))
        i = j
    return out


def check_reconstruction(graph: RegionGraph) -> bool:
    return struct_eq(reconstruct(graph), graph.source_body)


# ---------------------------------------------------------------- fission

def _guard_test(guards, saved):
    """Conjunction of saved-condition tests for a guard chain."""
    expr = None
    for g in guards:
        v = Var(name=saved[g.if_id], ty="bool")
        term = v if g.polarity else Unary(op="!", operand=v, ty="bool")
        expr = term if expr is None else Binary(op="&&", left=expr, right=term, ty="bool")
    return expr


def fission_control(graph: RegionGraph, name_prefix="_prc") -> RegionGraph:
    """Materialize divergence control: save each spanning if's condition to
    a per-thread boolean once, then re-test it around every fragment and
    boundary it guards."""
    saved = {}
    counter = [0]

    def ensure_saved(guards, region_stmts):
        for depth, g in enumerate(guards):
            if g.if_id in saved:
                continue
            var = f"{name_prefix}{counter[0]}"
            counter[0] += 1
            saved[g.if_id] = var
            region_stmts.append(VarDecl(name=var, var_ty="bool",
                                        init=BoolLit(value=False, ty="bool")))
            assign = Assign(target=Var(name=var, ty="bool"), value=g.cond)
            outer = _guard_test(guards[:depth], saved)
            if outer is not None:
                assign = If(cond=outer, then_body=[assign], else_body=[])
            region_stmts.append(assign)

    last_region = None
    for el in graph.elements:
        if isinstance(el, ParallelRegion):
            new_stmts = []
            for f in el.items:
                ensure_saved(f.guards, new_stmts)
                if not f.stmts:
                    continue
                test = _guard_test(f.guards, saved)
                if test is None:
                    new_stmts.extend(f.stmts)
                else:
                    new_stmts.append(If(cond=test, then_body=f.stmts, else_body=[]))
            el.items = [Fragment(guards=(), stmts=new_stmts)]
            last_region = el
        else:
            if el.kind in (KERNEL_ENTRY, KERNEL_EXIT, FISSION):
                continue
            if el.guards:
                # the condition save belongs just before the boundary
                ensure_saved(el.guards, last_region.items[0].stmts)
                el.guard_expr = _guard_test(el.guards, saved)
    graph.fissioned = True
    return graph


# ---------------------------------------------------------------- pruning

def prune_trivial_regions(graph: RegionGraph) -> RegionGraph:
    """Drop regions whose bodies are empty (partition/sync-only stretches);
    boundary metadata such as ambient tile sizes stays on the graph."""
    if not graph.fissioned:
        raise RegionError("prune runs after fission")
    graph.elements = [
        el for el in graph.elements
        if not (isinstance(el, ParallelRegion) and el.trivial)
    ]
    _fill_liveness(graph)
    return graph


def _unit_names(el):
    from .ast import walk_all_exprs, Index, walk_exprs_of

    names = set()
    if isinstance(el, ParallelRegion):
        for s in walk_stmts(el.body()):
            for e in walk_exprs_of(s):
                if isinstance(e, Var):
                    names.add(e.name)
                elif isinstance(e, Index):
                    names.add(e.base)
            if isinstance(s, VarDecl):
                names.add(s.name)
    elif isinstance(el, Boundary) and el.op is not None:
        for e in (list(walk_exprs_of(el.op)) +
                  ([el.guard_expr] if el.guard_expr is not None else [])):
            for sub in _expr_names(e):
                names.add(sub)
        if isinstance(el.op, VarDecl):
            names.add(el.op.name)
    return names


def _expr_names(e):
    from .ast import Index, Unary, CastInt, Binary, WarpIntrinsic

    if e is None:
        return
    if isinstance(e, Var):
        yield e.name
    elif isinstance(e, Index):
        yield e.base
        yield from _expr_names(e.index)
    elif isinstance(e, (Unary, CastInt)):
        yield from _expr_names(e.operand)
    elif isinstance(e, Binary):
        yield from _expr_names(e.left)
        yield from _expr_names(e.right)
    elif isinstance(e, WarpIntrinsic):
        yield from _expr_names(e.member_mask)
        yield from _expr_names(e.value)
        yield from _expr_names(e.lane_arg)


def _fill_liveness(graph: RegionGraph):
    units = [el for el in graph.elements
             if isinstance(el, ParallelRegion) or
             (isinstance(el, Boundary) and el.op is not None)]
    refs = [_unit_names(u) for u in units]
    for i, u in enumerate(units):
        if isinstance(u, ParallelRegion):
            later = set().union(*refs[i + 1:]) if i + 1 < len(refs) else set()
            u.live_thread_locals = refs[i] & later
