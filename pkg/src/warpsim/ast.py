"""Typed AST for MiniKernel programs.

The same node set covers source kernels and the output of the
serializing transform, so one validator and one text dumper serve both.
``dump_ir`` emits MiniKernel source that reparses to a structurally
identical kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

I32 = "i32"
F32 = "f32"
BOOL = "bool"

BUILTINS = ("threadIdx.x", "blockIdx.x", "blockDim.x", "gridDim.x", "warpSize")

VOTE_KINDS = ("vote_any", "vote_all", "vote_uni", "vote_ballot")
SHFL_KINDS = ("shfl_idx", "shfl_up", "shfl_down", "shfl_xor")
ACCESSOR_KINDS = ("num_threads", "thread_rank", "meta_group_rank")


@dataclass
class Loc:
    line: int = 0
    col: int = 0

    def __str__(self):
        return f"{self.line}:{self.col}"


NOLOC = Loc()


# ---------------------------------------------------------------- expressions

@dataclass
class Expr:
    pass


@dataclass
class IntLit(Expr):
    value: int
    loc: Loc = NOLOC
    ty: Optional[str] = None


@dataclass
class FloatLit(Expr):
    value: float
    loc: Loc = NOLOC
    ty: Optional[str] = None


@dataclass
class BoolLit(Expr):
    value: bool
    loc: Loc = NOLOC
    ty: Optional[str] = None


@dataclass
class Var(Expr):
    name: str
    loc: Loc = NOLOC
    ty: Optional[str] = None


@dataclass
class Builtin(Expr):
    name: str  # one of BUILTINS
    loc: Loc = NOLOC
    ty: Optional[str] = None


@dataclass
class Index(Expr):
    base: str  # buffer param, shared array, or local array name
    index: Expr = None
    loc: Loc = NOLOC
    ty: Optional[str] = None


@dataclass
class Unary(Expr):
    op: str  # - ! ~
    operand: Expr = None
    loc: Loc = NOLOC
    ty: Optional[str] = None


@dataclass
class Binary(Expr):
    op: str
    left: Expr = None
    right: Expr = None
    loc: Loc = NOLOC
    ty: Optional[str] = None


@dataclass
class CastInt(Expr):
    """(int)e for bool e; yields 0 or 1."""

    operand: Expr = None
    loc: Loc = NOLOC
    ty: Optional[str] = None


@dataclass
class WarpIntrinsic(Expr):
    kind: str  # VOTE_KINDS | SHFL_KINDS
    member_mask: Expr = None  # None for tile scope (full tile)
    value: Expr = None  # predicate for votes, value for shuffles
    lane_arg: Optional[Expr] = None  # srcLane/delta; absent for votes
    scope: str = "warp"  # "warp" or "tile"
    group_var: Optional[str] = None  # tile variable when scope == "tile"
    loc: Loc = NOLOC
    ty: Optional[str] = None


@dataclass
class GroupAccessor(Expr):
    kind: str  # ACCESSOR_KINDS
    group_var: str = ""
    loc: Loc = NOLOC
    ty: Optional[str] = None


# ----------------------------------------------------------------- statements

@dataclass
class Stmt:
    pass


@dataclass
class VarDecl(Stmt):
    name: str
    var_ty: str  # I32 | F32 | BOOL
    init: Optional[Expr] = None
    array_len: Optional[int] = None  # local array when set (no init allowed)
    loc: Loc = NOLOC


@dataclass
class Assign(Stmt):
    target: Expr = None  # Var or Index
    value: Expr = None
    loc: Loc = NOLOC


@dataclass
class If(Stmt):
    cond: Expr = None
    then_body: list = field(default_factory=list)
    else_body: list = field(default_factory=list)
    loc: Loc = NOLOC


@dataclass
class For(Stmt):
    var: str = ""
    init: Expr = None
    rel_op: str = "<"
    bound: Expr = None
    step_op: str = "+"
    step: Expr = None
    body: list = field(default_factory=list)
    loc: Loc = NOLOC
    # Serialization metadata: the emulated thread-index expression valid
    # inside this loop, and the ambient tile size there.  Source loops
    # carry neither.
    tid_expr: Optional[Expr] = None
    ambient_tile: Optional[int] = None


@dataclass
class Barrier(Stmt):
    loc: Loc = NOLOC


@dataclass
class TiledPartition(Stmt):
    group_var: str = ""
    size: int = 0
    loc: Loc = NOLOC


@dataclass
class GroupSync(Stmt):
    group_var: str = ""
    loc: Loc = NOLOC


@dataclass
class ExprStmt(Stmt):
    expr: Expr = None
    loc: Loc = NOLOC


# --------------------------------------------------------------------- kernel

@dataclass
class Param:
    name: str
    ty: str  # I32 | F32 | BOOL for scalars
    space: str  # "global-buffer" | "scalar"
    elem_ty: Optional[str] = None  # element type for buffers
    loc: Loc = NOLOC


@dataclass
class SharedDecl:
    name: str
    elem_ty: str
    length: int
    loc: Loc = NOLOC


@dataclass
class Kernel:
    name: str
    params: list  # of Param
    shared: list  # of SharedDecl
    body: list  # of Stmt
    typed: bool = False


# ----------------------------------------------------------------- traversal

def walk_stmts(stmts):
    """Yield every statement, recursing into control structure bodies."""
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from walk_stmts(s.then_body)
            yield from walk_stmts(s.else_body)
        elif isinstance(s, For):
            yield from walk_stmts(s.body)


def walk_exprs_of(stmt):
    def rec(e):
        if e is None:
            return
        yield e
        if isinstance(e, Index):
            yield from rec(e.index)
        elif isinstance(e, Unary):
            yield from rec(e.operand)
        elif isinstance(e, CastInt):
            yield from rec(e.operand)
        elif isinstance(e, Binary):
            yield from rec(e.left)
            yield from rec(e.right)
        elif isinstance(e, WarpIntrinsic):
            yield from rec(e.member_mask)
            yield from rec(e.value)
            yield from rec(e.lane_arg)

    if isinstance(stmt, VarDecl):
        yield from rec(stmt.init)
    elif isinstance(stmt, Assign):
        yield from rec(stmt.target)
        yield from rec(stmt.value)
    elif isinstance(stmt, If):
        yield from rec(stmt.cond)
    elif isinstance(stmt, For):
        yield from rec(stmt.init)
        yield from rec(stmt.bound)
        yield from rec(stmt.step)
    elif isinstance(stmt, ExprStmt):
        yield from rec(stmt.expr)


def walk_all_exprs(stmts):
    for s in walk_stmts(stmts):
        yield from walk_exprs_of(s)


def is_cross_thread(stmt) -> bool:
    """True for statements that synchronize or exchange across threads."""
    if isinstance(stmt, (Barrier, TiledPartition, GroupSync)):
        return True
    if isinstance(stmt, (Assign, VarDecl, ExprStmt)):
        return any(isinstance(e, WarpIntrinsic) for e in walk_exprs_of(stmt))
    return False


# ------------------------------------------------------------------- printing

_PREC = {
    "||": 1, "&&": 2, "|": 3, "^": 4, "&": 5,
    "==": 6, "!=": 6, "<": 7, "<=": 7, ">": 7, ">=": 7,
    "<<": 8, ">>": 8, "+": 9, "-": 9, "*": 10, "/": 10, "%": 10,
}

_TY_NAMES = {I32: "int", F32: "float", BOOL: "bool"}


def _fmt_float(v: float) -> str:
    s = repr(float(v))
    if "e" not in s and "." not in s and "inf" not in s and "nan" not in s:
        s += ".0"
    return s


def fmt_expr(e: Expr, parent_prec: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, FloatLit):
        return _fmt_float(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Builtin):
        return e.name
    if isinstance(e, Index):
        return f"{e.base}[{fmt_expr(e.index)}]"
    if isinstance(e, Unary):
        return f"{e.op}{fmt_expr(e.operand, 11)}"
    if isinstance(e, CastInt):
        return f"(int){fmt_expr(e.operand, 11)}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        s = f"{fmt_expr(e.left, p)} {e.op} {fmt_expr(e.right, p + 1)}"
        return f"({s})" if p < parent_prec else s
    if isinstance(e, WarpIntrinsic):
        if e.scope == "tile":
            m = {"vote_any": "any", "vote_all": "all", "vote_uni": "uni",
                 "vote_ballot": "ballot", "shfl_idx": "shfl",
                 "shfl_up": "shfl_up", "shfl_down": "shfl_down",
                 "shfl_xor": "shfl_xor"}[e.kind]
            args = [fmt_expr(e.value)]
            if e.lane_arg is not None:
                args.append(fmt_expr(e.lane_arg))
            return f"{e.group_var}.{m}({', '.join(args)})"
        args = [fmt_expr(e.member_mask), fmt_expr(e.value)]
        if e.lane_arg is not None:
            args.append(fmt_expr(e.lane_arg))
        return f"{e.kind}({', '.join(args)})"
    if isinstance(e, GroupAccessor):
        return f"{e.group_var}.{e.kind}()"
    raise TypeError(f"unprintable expression {e!r}")


def _fmt_stmt(s: Stmt, indent: int, out: list):
    pad = "    " * indent
    if isinstance(s, VarDecl):
        ty = _TY_NAMES[s.var_ty]
        if s.array_len is not None:
            out.append(f"{pad}{ty} {s.name}[{s.array_len}];")
        elif s.init is not None:
            out.append(f"{pad}{ty} {s.name} = {fmt_expr(s.init)};")
        else:
            out.append(f"{pad}{ty} {s.name};")
    elif isinstance(s, Assign):
        out.append(f"{pad}{fmt_expr(s.target)} = {fmt_expr(s.value)};")
    elif isinstance(s, If):
        out.append(f"{pad}if ({fmt_expr(s.cond)}) {{")
        for t in s.then_body:
            _fmt_stmt(t, indent + 1, out)
        if s.else_body:
            out.append(f"{pad}}} else {{")
            for t in s.else_body:
                _fmt_stmt(t, indent + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(s, For):
        head = (f"for (int {s.var} = {fmt_expr(s.init)}; "
                f"{s.var} {s.rel_op} {fmt_expr(s.bound)}; "
                f"{s.var} = {s.var} {s.step_op} {fmt_expr(s.step)})")
        out.append(f"{pad}{head} {{")
        for t in s.body:
            _fmt_stmt(t, indent + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(s, Barrier):
        out.append(f"{pad}__syncthreads();")
    elif isinstance(s, TiledPartition):
        out.append(f"{pad}tile {s.group_var} = tiled_partition({s.size});")
    elif isinstance(s, GroupSync):
        out.append(f"{pad}{s.group_var}.sync();")
    elif isinstance(s, ExprStmt):
        out.append(f"{pad}{fmt_expr(s.expr)};")
    else:
        raise TypeError(f"unprintable statement {s!r}")


def dump_ir(k: Kernel) -> str:
    """Deterministic, reparseable text form of a kernel."""
    parts = []
    for p in k.params:
        if p.space == "global-buffer":
            parts.append(f"{_TY_NAMES[p.elem_ty]}* {p.name}")
        else:
            parts.append(f"{_TY_NAMES[p.ty]} {p.name}")
    out = [f"__kernel void {k.name}({', '.join(parts)}) {{"]
    for sh in k.shared:
        out.append(f"    __shared__ {_TY_NAMES[sh.elem_ty]} {sh.name}[{sh.length}];")
    for s in k.body:
        _fmt_stmt(s, 1, out)
    out.append("}")
    return "\n".join(out) + "\n"


def struct_eq(a, b) -> bool:
    """Structural equality ignoring locations and type annotations."""
    if type(a) is not type(b):
        return False
    if isinstance(a, (int, float, str, bool, type(None))):
        return a == b
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(struct_eq(x, y) for x, y in zip(a, b))
    if isinstance(a, (Expr, Stmt, Param, SharedDecl, Kernel)):
        skip = {"loc", "ty", "typed", "tid_expr", "ambient_tile"}
        for f in a.__dataclass_fields__:
            if f in skip:
                continue
            if not struct_eq(getattr(a, f), getattr(b, f)):
                return False
        return True
    return a == b
