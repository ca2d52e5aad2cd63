"""Recursive-descent parser for MiniKernel source (see docs/grammar.md)."""

from __future__ import annotations

import re

from .ast import (
    BOOL, F32, I32, Assign, Barrier, BoolLit, Builtin, CastInt, Expr, ExprStmt,
    FloatLit, For, GroupAccessor, GroupSync, If, Index, IntLit, Kernel, Loc,
    Param, SharedDecl, TiledPartition, Unary, Var, VarDecl, WarpIntrinsic,
    Binary,
)


class ParseError(Exception):
    def __init__(self, msg, loc: Loc):
        super().__init__(f"{loc}: {msg}")
        self.msg = msg
        self.loc = loc


KEYWORDS = {
    "__kernel", "void", "int", "float", "bool", "if", "else", "for",
    "true", "false", "tile", "__shared__",
}

WARP_FUNCS = {
    "vote_any": ("vote_any", False),
    "vote_all": ("vote_all", False),
    "vote_uni": ("vote_uni", False),
    "vote_ballot": ("vote_ballot", False),
    "shfl_idx": ("shfl_idx", True),
    "shfl_up": ("shfl_up", True),
    "shfl_down": ("shfl_down", True),
    "shfl_xor": ("shfl_xor", True),
}

TILE_METHODS = {
    "any": ("vote_any", False),
    "all": ("vote_all", False),
    "uni": ("vote_uni", False),
    "ballot": ("vote_ballot", False),
    "shfl": ("shfl_idx", True),
    "shfl_up": ("shfl_up", True),
    "shfl_down": ("shfl_down", True),
    "shfl_xor": ("shfl_xor", True),
}

ACCESSOR_METHODS = ("num_threads", "thread_rank", "meta_group_rank")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<float>(\d+\.\d*|\.\d+)([eE][-+]?\d+)?f?|\d+[eE][-+]?\d+f?)
  | (?P<hex>0[xX][0-9a-fA-F]+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><<|>>|<=|>=|==|!=|&&|\|\||[-+*/%<>=!~&^|().,;{}\[\]])
    """,
    re.VERBOSE | re.DOTALL,
)


def tokenize(src: str):
    toks = []
    pos = 0
    line, col = 1, 1
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", Loc(line, col))
        text = m.group(0)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            toks.append((kind, text, Loc(line, col)))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    toks.append(("eof", "", Loc(line, col)))
    return toks


class Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0
        self.group_vars: set = set()

    # -- token plumbing ------------------------------------------------------
    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.i]
        if t[0] != "eof":
            self.i += 1
        return t

    def at(self, text):
        return self.peek()[1] == text and self.peek()[0] != "eof"

    def accept(self, text):
        if self.at(text):
            return self.next()
        return None

    def expect(self, text):
        t = self.peek()
        if t[1] != text or t[0] == "eof":
            raise ParseError(f"expected {text!r}, found {t[1]!r}", t[2])
        return self.next()

    def ident(self):
        kind, text, loc = self.peek()
        if kind != "ident" or text in KEYWORDS:
            raise ParseError(f"expected identifier, found {text!r}", loc)
        self.next()
        return text, loc

    # -- grammar -------------------------------------------------------------
    def parse_kernel(self) -> Kernel:
        self.expect("__kernel")
        self.expect("void")
        name, _ = self.ident()
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                params.append(self._param())
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("{")
        shared = []
        while self.at("__shared__"):
            shared.append(self._shared_decl())
        body = self._stmts_until("}")
        self.expect("}")
        t = self.peek()
        if t[0] != "eof":
            raise ParseError(f"trailing input {t[1]!r}", t[2])
        return Kernel(name=name, params=params, shared=shared, body=body)

    def _base_type(self):
        t = self.peek()
        if t[1] in ("int", "float", "bool"):
            self.next()
            return {"int": I32, "float": F32, "bool": BOOL}[t[1]]
        raise ParseError(f"expected type, found {t[1]!r}", t[2])

    def _param(self) -> Param:
        loc = self.peek()[2]
        ty = self._base_type()
        if self.accept("*"):
            if ty == BOOL:
                raise ParseError("bool buffers are not supported", loc)
            name, _ = self.ident()
            return Param(name=name, ty=ty, space="global-buffer", elem_ty=ty, loc=loc)
        name, _ = self.ident()
        return Param(name=name, ty=ty, space="scalar", loc=loc)

    def _shared_decl(self) -> SharedDecl:
        loc = self.expect("__shared__")[2]
        ty = self._base_type()
        name, _ = self.ident()
        self.expect("[")
        n = self._int_lit()
        self.expect("]")
        self.expect(";")
        return SharedDecl(name=name, elem_ty=ty, length=n, loc=loc)

    def _int_lit(self) -> int:
        kind, text, loc = self.peek()
        if kind == "int":
            self.next()
            return int(text)
        if kind == "hex":
            self.next()
            return int(text, 16)
        raise ParseError(f"expected integer literal, found {text!r}", loc)

    def _stmts_until(self, closer):
        out = []
        while not self.at(closer):
            if self.peek()[0] == "eof":
                raise ParseError(f"expected {closer!r} before end of input", self.peek()[2])
            out.append(self._stmt())
        return out

    def _block(self):
        self.expect("{")
        body = self._stmts_until("}")
        self.expect("}")
        return body

    def _stmt(self):
        kind, text, loc = self.peek()
        if text in ("int", "float", "bool") and self.peek(1)[1] != ")":
            return self._var_decl()
        if text == "tile":
            return self._tile_decl()
        if text == "if":
            return self._if()
        if text == "for":
            return self._for()
        if text == "__syncthreads":
            self.next()
            self.expect("(")
            self.expect(")")
            self.expect(";")
            return Barrier(loc=loc)
        if kind == "ident" and text in self.group_vars and self.peek(1)[1] == "." \
                and self.peek(2)[1] == "sync":
            self.next(); self.next(); self.next()
            self.expect("(")
            self.expect(")")
            self.expect(";")
            return GroupSync(group_var=text, loc=loc)
        # assignment or expression statement
        if kind == "ident" and text not in KEYWORDS:
            save = self.i
            target = self._lvalue_try()
            if target is not None and self.at("="):
                self.next()
                value = self._expr()
                self.expect(";")
                return Assign(target=target, value=value, loc=loc)
            self.i = save
        e = self._expr()
        self.expect(";")
        return ExprStmt(expr=e, loc=loc)

    def _lvalue_try(self):
        kind, text, loc = self.peek()
        if kind != "ident" or text in KEYWORDS:
            return None
        self.next()
        if self.accept("["):
            idx = self._expr()
            self.expect("]")
            if not self.at("="):
                return None
            return Index(base=text, index=idx, loc=loc)
        if not self.at("="):
            return None
        return Var(name=text, loc=loc)

    def _var_decl(self):
        loc = self.peek()[2]
        ty = self._base_type()
        name, nloc = self.ident()
        if self.accept("["):
            n = self._int_lit()
            self.expect("]")
            self.expect(";")
            return VarDecl(name=name, var_ty=ty, array_len=n, loc=loc)
        init = None
        if self.accept("="):
            init = self._expr()
        self.expect(";")
        return VarDecl(name=name, var_ty=ty, init=init, loc=loc)

    def _tile_decl(self):
        loc = self.expect("tile")[2]
        name, _ = self.ident()
        self.expect("=")
        t = self.peek()
        if t[1] != "tiled_partition":
            raise ParseError(f"expected tiled_partition(...), found {t[1]!r}", t[2])
        self.next()
        self.expect("(")
        size = self._int_lit()
        self.expect(")")
        self.expect(";")
        self.group_vars.add(name)
        return TiledPartition(group_var=name, size=size, loc=loc)

    def _if(self):
        loc = self.expect("if")[2]
        self.expect("(")
        cond = self._expr()
        self.expect(")")
        then_body = self._block()
        else_body = []
        if self.accept("else"):
            else_body = self._block()
        return If(cond=cond, then_body=then_body, else_body=else_body, loc=loc)

    def _for(self):
        loc = self.expect("for")[2]
        self.expect("(")
        self.expect("int")
        var, _ = self.ident()
        self.expect("=")
        init = self._expr()
        self.expect(";")
        v2, v2loc = self.ident()
        if v2 != var:
            raise ParseError(f"loop condition must test {var!r}", v2loc)
        t = self.peek()
        if t[1] not in ("<", "<=", ">", ">=", "!="):
            raise ParseError(f"expected loop relation, found {t[1]!r}", t[2])
        rel = self.next()[1]
        bound = self._expr()
        self.expect(";")
        v3, v3loc = self.ident()
        if v3 != var:
            raise ParseError(f"loop step must assign {var!r}", v3loc)
        self.expect("=")
        v4, v4loc = self.ident()
        if v4 != var:
            raise ParseError(f"loop step must be {var} = {var} op expr", v4loc)
        t = self.peek()
        if t[1] not in ("+", "-", "*", "/", ">>", "<<"):
            raise ParseError(f"expected loop step operator, found {t[1]!r}", t[2])
        step_op = self.next()[1]
        step = self._expr()
        self.expect(")")
        body = self._block()
        return For(var=var, init=init, rel_op=rel, bound=bound,
                   step_op=step_op, step=step, body=body, loc=loc)

    # -- expressions (precedence climbing) -----------------------------------
    _LEVELS = [
        ("||",), ("&&",), ("|",), ("^",), ("&",),
        ("==", "!="), ("<", "<=", ">", ">="), ("<<", ">>"),
        ("+", "-"), ("*", "/", "%"),
    ]

    def _expr(self, level=0) -> Expr:
        if level == len(self._LEVELS):
            return self._unary()
        left = self._expr(level + 1)
        ops = self._LEVELS[level]
        while self.peek()[1] in ops and self.peek()[0] == "op":
            _, op, loc = self.next()
            right = self._expr(level + 1)
            left = Binary(op=op, left=left, right=right, loc=loc)
        return left

    def _unary(self) -> Expr:
        kind, text, loc = self.peek()
        if text in ("-", "!", "~") and kind == "op":
            self.next()
            return Unary(op=text, operand=self._unary(), loc=loc)
        if text == "(" and self.peek(1)[1] == "int" and self.peek(2)[1] == ")":
            self.next(); self.next(); self.next()
            return CastInt(operand=self._unary(), loc=loc)
        return self._primary()

    def _call_args(self):
        self.expect("(")
        args = []
        if not self.at(")"):
            while True:
                args.append(self._expr())
                if not self.accept(","):
                    break
        self.expect(")")
        return args

    def _primary(self) -> Expr:
        kind, text, loc = self.peek()
        if kind == "int":
            self.next()
            return IntLit(value=int(text), loc=loc)
        if kind == "hex":
            self.next()
            v = int(text, 16)
            if v & 0x80000000:
                v -= 1 << 32
            return IntLit(value=v, loc=loc)
        if kind == "float":
            self.next()
            return FloatLit(value=float(text.rstrip("fF")), loc=loc)
        if text in ("true", "false"):
            self.next()
            return BoolLit(value=text == "true", loc=loc)
        if self.accept("("):
            e = self._expr()
            self.expect(")")
            return e
        if kind != "ident":
            raise ParseError(f"expected expression, found {text!r}", loc)
        if text in ("threadIdx", "blockIdx", "blockDim", "gridDim"):
            self.next()
            self.expect(".")
            axis = self.peek()
            if axis[1] != "x":
                raise ParseError(f"only .x indexing is supported, found .{axis[1]}", axis[2])
            self.next()
            return Builtin(name=f"{text}.x", loc=loc)
        if text == "warpSize":
            self.next()
            return Builtin(name="warpSize", loc=loc)
        if text in WARP_FUNCS:
            self.next()
            kind_name, has_lane = WARP_FUNCS[text]
            args = self._call_args()
            want = 3 if has_lane else 2
            if len(args) != want:
                raise ParseError(f"{text} expects {want} arguments, got {len(args)}", loc)
            return WarpIntrinsic(kind=kind_name, member_mask=args[0], value=args[1],
                                 lane_arg=args[2] if has_lane else None,
                                 scope="warp", loc=loc)
        name = text
        self.next()
        if self.at(".") and name in self.group_vars:
            self.next()
            meth, mloc = self.ident()
            if meth in ACCESSOR_METHODS:
                self.expect("(")
                self.expect(")")
                return GroupAccessor(kind=meth, group_var=name, loc=loc)
            if meth in TILE_METHODS:
                kind_name, has_lane = TILE_METHODS[meth]
                args = self._call_args()
                want = 2 if has_lane else 1
                if len(args) != want:
                    raise ParseError(f".{meth} expects {want} arguments, got {len(args)}", mloc)
                return WarpIntrinsic(kind=kind_name, member_mask=None, value=args[0],
                                     lane_arg=args[1] if has_lane else None,
                                     scope="tile", group_var=name, loc=loc)
            raise ParseError(f"unknown group method {meth!r}", mloc)
        if self.at("("):
            raise ParseError(f"unknown intrinsic {name!r}", loc)
        if self.accept("["):
            idx = self._expr()
            self.expect("]")
            return Index(base=name, index=idx, loc=loc)
        return Var(name=name, loc=loc)


def parse_kernel(source: str) -> Kernel:
    """Parse one MiniKernel translation unit into a Kernel."""
    return Parser(source).parse_kernel()
