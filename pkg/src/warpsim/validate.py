"""Structural validator run after parsing and after every transform pass."""

from __future__ import annotations

from .ast import (
    BUILTINS, Assign, Barrier, Builtin, ExprStmt, For, GroupAccessor,
    GroupSync, If, Index, Kernel, TiledPartition, Var, VarDecl,
    WarpIntrinsic, walk_exprs_of,
)


class ValidationError(Exception):
    pass


def validate_ir(kernel: Kernel) -> None:
    """Check the kernel-level invariants: every referenced identifier is
    declared, builtins come from the fixed set, array lengths are positive."""
    declared = set()
    groups = set()
    for p in kernel.params:
        declared.add(p.name)
    for sh in kernel.shared:
        if sh.length <= 0:
            raise ValidationError(f"shared array {sh.name} has non-positive length")
        declared.add(sh.name)

    def check_expr(e):
        if isinstance(e, Builtin) and e.name not in BUILTINS:
            raise ValidationError(f"unknown builtin {e.name}")
        if isinstance(e, Var) and e.name not in declared:
            raise ValidationError(f"undeclared identifier {e.name}")
        if isinstance(e, Index) and e.base not in declared:
            raise ValidationError(f"undeclared identifier {e.base}")
        if isinstance(e, (WarpIntrinsic, GroupAccessor)) and e.ty is None:
            pass  # typing is the typechecker's concern
        if isinstance(e, WarpIntrinsic) and e.scope == "tile" and e.group_var not in groups:
            raise ValidationError(f"unknown group {e.group_var}")
        if isinstance(e, GroupAccessor) and e.group_var not in groups:
            raise ValidationError(f"unknown group {e.group_var}")

    def check_stmts(stmts):
        for s in stmts:
            for e in walk_exprs_of(s):
                check_expr(e)
            if isinstance(s, VarDecl):
                if s.array_len is not None and s.array_len <= 0:
                    raise ValidationError(f"array {s.name} has non-positive length")
                declared.add(s.name)
            elif isinstance(s, TiledPartition):
                declared.add(s.group_var)
                groups.add(s.group_var)
            elif isinstance(s, GroupSync):
                if s.group_var not in groups:
                    raise ValidationError(f"unknown group {s.group_var}")
            elif isinstance(s, If):
                check_stmts(s.then_body)
                check_stmts(s.else_body)
            elif isinstance(s, For):
                declared.add(s.var)
                check_stmts(s.body)
            elif isinstance(s, (Assign, Barrier, ExprStmt)):
                pass

    check_stmts(kernel.body)


def count_cross_thread(kernel: Kernel) -> dict:
    """Census of cross-thread constructs, used by transform output checks."""
    from .ast import is_cross_thread, walk_stmts

    n = {"barrier": 0, "tiled_partition": 0, "group_sync": 0, "warp_intrinsic": 0}
    for s in walk_stmts(kernel.body):
        if isinstance(s, Barrier):
            n["barrier"] += 1
        elif isinstance(s, TiledPartition):
            n["tiled_partition"] += 1
        elif isinstance(s, GroupSync):
            n["group_sync"] += 1
        elif is_cross_thread(s):
            n["warp_intrinsic"] += 1
    return n
