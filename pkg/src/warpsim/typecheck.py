"""Type checking and placement rules for MiniKernel.

Beyond expression typing this pass enforces the execution-model rules
that keep both compilation paths well defined:

* for-loop init/bound/step must be uniform across the block, so branch
  outcomes at loop heads never diverge within a warp;
* cross-thread operations inside a for loop require fully constant loop
  headers (the serializing transform unrolls such loops);
* barriers and group syncs may not sit under a divergent (non-uniform)
  condition;
* ``tiled_partition`` appears only at the top statement level, and
  warp-scoped intrinsics may not follow it (the hardware reshapes warps
  to the tile size, so full-warp collectives become ill-defined);
* vote/shuffle calls appear only as the sole right-hand side of an
  assignment/declaration or as a bare expression statement, which pins
  the region boundary they induce.
"""

from __future__ import annotations

from .ast import (
    BOOL, F32, I32, Assign, Barrier, Binary, BoolLit, Builtin, CastInt,
    ExprStmt, FloatLit, For, GroupAccessor, GroupSync, If, Index, IntLit,
    Kernel, TiledPartition, Unary, Var, VarDecl, WarpIntrinsic, Loc,
    is_cross_thread, walk_exprs_of, walk_stmts,
)


class TypecheckError(Exception):
    def __init__(self, msg, loc: Loc = None):
        super().__init__(f"{loc or '?'}: {msg}")
        self.msg = msg
        self.loc = loc


_INT_OPS = {"+", "-", "*", "/", "%", "<<", ">>", "&", "|", "^"}
_FLOAT_OPS = {"+", "-", "*", "/"}
_CMP_OPS = {"<", "<=", ">", ">="}
_EQ_OPS = {"==", "!="}
_BOOL_OPS = {"&&", "||"}


class _Sym:
    __slots__ = ("kind", "ty", "array_len", "mutable")

    def __init__(self, kind, ty, array_len=None, mutable=True):
        self.kind = kind  # scalar | array | buffer | group | loopvar | param-scalar
        self.ty = ty
        self.array_len = array_len
        self.mutable = mutable


class _Checker:
    def __init__(self, kernel: Kernel):
        self.k = kernel
        self.scopes = [{}]
        self.decl_names: set = set()  # VarDecl names are unique kernel-wide
        self.nonuniform: set = set()  # names with thread-dependent values
        self.partition_seen = False

    # -- symbols -------------------------------------------------------------
    def declare(self, name, sym, loc, kernel_unique=False):
        for scope in self.scopes:
            if name in scope:
                raise TypecheckError(f"redeclaration of {name!r}", loc)
        if kernel_unique:
            if name in self.decl_names:
                raise TypecheckError(f"redeclaration of {name!r}", loc)
            self.decl_names.add(name)
        self.scopes[-1][name] = sym

    def lookup(self, name):
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    # -- uniformity ----------------------------------------------------------
    def _expr_uniform(self, e) -> bool:
        if isinstance(e, (IntLit, FloatLit, BoolLit)):
            return True
        if isinstance(e, Builtin):
            return e.name != "threadIdx.x"
        if isinstance(e, Var):
            return e.name not in self.nonuniform
        if isinstance(e, Index):
            # memory contents are thread-dependent in general
            return False
        if isinstance(e, (Unary, CastInt)):
            return self._expr_uniform(e.operand)
        if isinstance(e, Binary):
            return self._expr_uniform(e.left) and self._expr_uniform(e.right)
        if isinstance(e, GroupAccessor):
            return e.kind == "num_threads"
        if isinstance(e, WarpIntrinsic):
            return False
        return False

    # -- expression typing ----------------------------------------------------
    def type_expr(self, e):
        if isinstance(e, IntLit):
            e.ty = I32
        elif isinstance(e, FloatLit):
            e.ty = F32
        elif isinstance(e, BoolLit):
            e.ty = BOOL
        elif isinstance(e, Builtin):
            e.ty = I32
        elif isinstance(e, Var):
            sym = self.lookup(e.name)
            if sym is None:
                raise TypecheckError(f"undeclared identifier {e.name!r}", e.loc)
            if sym.kind == "buffer":
                raise TypecheckError(f"buffer {e.name!r} must be indexed", e.loc)
            if sym.kind == "array":
                raise TypecheckError(f"array {e.name!r} must be indexed", e.loc)
            if sym.kind == "group":
                raise TypecheckError(f"group {e.name!r} is not a value", e.loc)
            e.ty = sym.ty
        elif isinstance(e, Index):
            sym = self.lookup(e.base)
            if sym is None:
                raise TypecheckError(f"undeclared identifier {e.base!r}", e.loc)
            if sym.kind not in ("buffer", "array"):
                raise TypecheckError(f"{e.base!r} is not indexable", e.loc)
            self.type_expr(e.index)
            if e.index.ty != I32:
                raise TypecheckError("index must be int", e.loc)
            e.ty = sym.ty
        elif isinstance(e, Unary):
            self.type_expr(e.operand)
            t = e.operand.ty
            if e.op == "!" and t != BOOL:
                raise TypecheckError("! needs a bool operand", e.loc)
            if e.op == "~" and t != I32:
                raise TypecheckError("~ needs an int operand", e.loc)
            if e.op == "-" and t not in (I32, F32):
                raise TypecheckError("unary - needs a numeric operand", e.loc)
            e.ty = t
        elif isinstance(e, CastInt):
            self.type_expr(e.operand)
            if e.operand.ty != BOOL:
                raise TypecheckError("(int) cast applies to bool only", e.loc)
            e.ty = I32
        elif isinstance(e, Binary):
            self.type_expr(e.left)
            self.type_expr(e.right)
            lt, rt = e.left.ty, e.right.ty
            if e.op in _BOOL_OPS:
                if lt != BOOL or rt != BOOL:
                    raise TypecheckError(f"{e.op} needs bool operands", e.loc)
                e.ty = BOOL
            elif e.op in _CMP_OPS:
                if lt != rt or lt not in (I32, F32):
                    raise TypecheckError(f"{e.op} needs matching numeric operands", e.loc)
                e.ty = BOOL
            elif e.op in _EQ_OPS:
                if lt != rt:
                    raise TypecheckError(f"{e.op} needs matching operand types", e.loc)
                e.ty = BOOL
            elif lt == I32 and rt == I32 and e.op in _INT_OPS:
                e.ty = I32
            elif lt == F32 and rt == F32 and e.op in _FLOAT_OPS:
                e.ty = F32
            else:
                raise TypecheckError(
                    f"operator {e.op} not defined for {lt} and {rt}", e.loc)
        elif isinstance(e, WarpIntrinsic):
            self._type_intrinsic(e)
        elif isinstance(e, GroupAccessor):
            sym = self.lookup(e.group_var)
            if sym is None or sym.kind != "group":
                raise TypecheckError(f"{e.group_var!r} is not a group", e.loc)
            e.ty = I32
        else:
            raise TypecheckError(f"unsupported expression {e!r}", getattr(e, "loc", None))
        return e.ty

    def _type_intrinsic(self, e: WarpIntrinsic):
        if e.scope == "tile":
            sym = self.lookup(e.group_var)
            if sym is None or sym.kind != "group":
                raise TypecheckError(f"{e.group_var!r} is not a group", e.loc)
        else:
            if self.partition_seen:
                raise TypecheckError(
                    "warp-scope intrinsics are not allowed after tiled_partition; "
                    "use the tile's methods", e.loc)
            self.type_expr(e.member_mask)
            if e.member_mask.ty != I32:
                raise TypecheckError("member mask must be int", e.loc)
        self.type_expr(e.value)
        if e.kind.startswith("vote_"):
            if e.value.ty != BOOL:
                raise TypecheckError("predicate must be boolean", e.loc)
            e.ty = I32
        else:
            if e.scope == "warp" and not (
                    isinstance(e.member_mask, IntLit)
                    and e.member_mask.value in (-1, 0xFFFFFFFF)):
                raise TypecheckError(
                    "shuffle member mask must be the full mask (the shuffle "
                    "instruction carries no mask operand)", e.loc)
            if e.value.ty not in (I32, F32):
                raise TypecheckError("shuffle value must be int or float", e.loc)
            if not isinstance(e.lane_arg, IntLit):
                raise TypecheckError(
                    "shuffle lane/delta must be an integer literal", e.loc)
            if not (0 <= e.lane_arg.value <= 31):
                raise TypecheckError("shuffle lane/delta must be in 0..31", e.loc)
            self.type_expr(e.lane_arg)
            e.ty = e.value.ty

    # -- statement checking ----------------------------------------------------
    def _check_sole_intrinsic(self, stmt):
        allowed_root = None
        if isinstance(stmt, Assign):
            allowed_root = stmt.value
        elif isinstance(stmt, VarDecl):
            allowed_root = stmt.init
        elif isinstance(stmt, ExprStmt):
            allowed_root = stmt.expr
        for e in walk_exprs_of(stmt):
            if isinstance(e, WarpIntrinsic) and e is not allowed_root:
                raise TypecheckError(
                    "vote/shuffle must be the sole right-hand side of an "
                    "assignment (region boundary cannot be placed here)", e.loc)

    def _is_const_expr(self, e):
        if isinstance(e, IntLit):
            return True
        if isinstance(e, Unary) and e.op == "-":
            return self._is_const_expr(e.operand)
        return False

    def check_stmts(self, stmts, divergent: bool, in_loop_const: bool, top: bool):
        for s in stmts:
            self._check_sole_intrinsic(s)
            if isinstance(s, VarDecl):
                if s.array_len is not None:
                    if s.array_len <= 0:
                        raise TypecheckError("array length must be positive", s.loc)
                    self.declare(s.name, _Sym("array", s.var_ty, s.array_len), s.loc, kernel_unique=True)
                else:
                    if s.init is not None:
                        self.type_expr(s.init)
                        if s.init.ty != s.var_ty:
                            raise TypecheckError(
                                f"initializer type {s.init.ty} does not match "
                                f"declared type {s.var_ty}", s.loc)
                    self.declare(s.name, _Sym("scalar", s.var_ty), s.loc, kernel_unique=True)
                    if divergent or s.init is None or not self._expr_uniform(s.init):
                        self.nonuniform.add(s.name)
            elif isinstance(s, Assign):
                self.type_expr(s.value)
                if isinstance(s.target, Var):
                    sym = self.lookup(s.target.name)
                    if sym is None:
                        raise TypecheckError(
                            f"undeclared identifier {s.target.name!r}", s.target.loc)
                    if sym.kind in ("param-scalar", "loopvar"):
                        raise TypecheckError(
                            f"{s.target.name!r} is read-only", s.target.loc)
                    if sym.kind != "scalar":
                        raise TypecheckError(
                            f"cannot assign to {sym.kind} {s.target.name!r}", s.target.loc)
                    s.target.ty = sym.ty
                    if divergent or not self._expr_uniform(s.value):
                        self.nonuniform.add(s.target.name)
                elif isinstance(s.target, Index):
                    self.type_expr(s.target)
                else:
                    raise TypecheckError("invalid assignment target", s.loc)
                if s.target.ty != s.value.ty:
                    raise TypecheckError(
                        f"cannot assign {s.value.ty} to {s.target.ty}", s.loc)
            elif isinstance(s, If):
                self.type_expr(s.cond)
                if s.cond.ty != BOOL:
                    raise TypecheckError("if condition must be bool", s.loc)
                div = divergent or not self._expr_uniform(s.cond)
                self.scopes.append({})
                self.check_stmts(s.then_body, div, in_loop_const, False)
                self.scopes.pop()
                self.scopes.append({})
                self.check_stmts(s.else_body, div, in_loop_const, False)
                self.scopes.pop()
            elif isinstance(s, For):
                self.type_expr(s.init)
                self.type_expr(s.bound)
                self.type_expr(s.step)
                if I32 not in (s.init.ty,) or s.bound.ty != I32 or s.step.ty != I32:
                    raise TypecheckError("loop bounds must be int", s.loc)
                for part, what in ((s.init, "init"), (s.bound, "bound"), (s.step, "step")):
                    if not self._expr_uniform(part):
                        raise TypecheckError(
                            f"loop {what} must be uniform across the block", s.loc)
                const_hdr = all(self._is_const_expr(x) for x in (s.init, s.bound, s.step))
                has_cross = any(is_cross_thread(t) for t in walk_stmts(s.body))
                if has_cross and not const_hdr:
                    raise TypecheckError(
                        "synchronization or warp operations inside a loop require "
                        "constant loop bounds", s.loc)
                self.scopes.append({s.var: _Sym("loopvar", I32)})
                self.check_stmts(s.body, divergent, in_loop_const or const_hdr, False)
                self.scopes.pop()
            elif isinstance(s, Barrier):
                if divergent:
                    raise TypecheckError(
                        "barrier under a divergent condition", s.loc)
            elif isinstance(s, GroupSync):
                sym = self.lookup(s.group_var)
                if sym is None or sym.kind != "group":
                    raise TypecheckError(f"{s.group_var!r} is not a group", s.loc)
                if divergent:
                    raise TypecheckError(
                        "group sync under a divergent condition", s.loc)
            elif isinstance(s, TiledPartition):
                if not top:
                    raise TypecheckError(
                        "tiled_partition is only allowed at the top statement level",
                        s.loc)
                if s.size < 2 or (s.size & (s.size - 1)) != 0:
                    raise TypecheckError("size must be power of two", s.loc)
                self.declare(s.group_var, _Sym("group", None, mutable=False), s.loc)
                self.partition_seen = True
            elif isinstance(s, ExprStmt):
                self.type_expr(s.expr)
            else:
                raise TypecheckError(f"unsupported statement {s!r}", getattr(s, "loc", None))


def typecheck(kernel: Kernel) -> Kernel:
    """Annotate every expression with its type; raise TypecheckError on rule
    violations. Returns the same kernel, marked typed."""
    c = _Checker(kernel)
    names = set()
    for p in kernel.params:
        if p.name in names:
            raise TypecheckError(f"duplicate parameter {p.name!r}", p.loc)
        names.add(p.name)
        if p.space == "global-buffer":
            c.scopes[0][p.name] = _Sym("buffer", p.elem_ty)
        else:
            c.scopes[0][p.name] = _Sym("param-scalar", p.ty, mutable=False)
    for sh in kernel.shared:
        if sh.length <= 0:
            raise TypecheckError("shared array length must be positive", sh.loc)
        c.declare(sh.name, _Sym("array", sh.elem_ty, sh.length), sh.loc)
    c.check_stmts(kernel.body, divergent=False, in_loop_const=False, top=True)
    kernel.typed = True
    return kernel
