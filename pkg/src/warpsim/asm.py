"""Assembly text format and flat binary images (documented in docs/isa.md).

A Program is label-resolved only at encode time so the text form
round-trips exactly: ``asm_parse(asm_format(p)) == p``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .isa import SPEC, Instr, IsaError, decode, encode, pack_shfl_imm


class AsmError(Exception):
    pass


@dataclass
class Label:
    name: str


@dataclass
class Program:
    text: list = field(default_factory=list)  # Label | Instr
    entry: str = ""
    data: list = field(default_factory=list)  # initialized words
    data_labels: dict = field(default_factory=dict)  # name -> word index
    stack_bytes_per_thread: int = 16384
    metadata: dict = field(default_factory=dict, compare=False)

    def instructions(self):
        return [t for t in self.text if isinstance(t, Instr)]


# operand layout per mnemonic; x = int reg, f = float reg
_F_ALL = {"fadd.s", "fsub.s", "fmul.s", "fdiv.s", "fsgnj.s", "fsgnjn.s",
          "fsgnjx.s", "fmin.s", "fmax.s"}
_F_CMP = {"feq.s", "flt.s", "fle.s"}


def _layout(m):
    fmt = SPEC[m][0]
    if m in _F_ALL:
        return "fr3"
    if m in _F_CMP:
        return "fcmp"
    if m == "flw":
        return "fload"
    if m == "fsw":
        return "fstore"
    if m == "fcvt.w.s" or m == "fmv.x.w":
        return "xf"
    if m == "fcvt.s.w" or m == "fmv.w.x":
        return "fx"
    if m == "lw":
        return "load"
    if m == "sw":
        return "store"
    if m == "jal":
        return "jal"
    if m == "jalr":
        return "jalr"
    if m == "csrr":
        return "csr"
    if m.startswith("vx_vote."):
        return "vote"
    if m.startswith("vx_shfl."):
        return "shfl"
    if m == "vx_tile":
        return "tile"
    if m == "vx_split":
        return "split"
    if m in ("vx_join", "vx_bar"):
        return "bare"
    if m == "vx_tmc":
        return "tmc"
    if fmt == "B":
        return "branch"
    if fmt == "U":
        return "ui"
    if fmt == "R":
        return "r3"
    return "i"  # addi-style, shifts


def _x(n):
    return f"x{n}"


def _f(n):
    return f"f{n}"


def _tgt(i):
    return i.target if i.target is not None else str(i.imm)


def format_instr(i: Instr) -> str:
    lay = _layout(i.mnemonic)
    m = i.mnemonic
    if lay == "r3":
        return f"{m} {_x(i.rd)}, {_x(i.rs1)}, {_x(i.rs2)}"
    if lay == "fr3":
        return f"{m} {_f(i.rd)}, {_f(i.rs1)}, {_f(i.rs2)}"
    if lay == "fcmp":
        return f"{m} {_x(i.rd)}, {_f(i.rs1)}, {_f(i.rs2)}"
    if lay == "xf":
        return f"{m} {_x(i.rd)}, {_f(i.rs1)}"
    if lay == "fx":
        return f"{m} {_f(i.rd)}, {_x(i.rs1)}"
    if lay == "load":
        return f"{m} {_x(i.rd)}, {i.imm}({_x(i.rs1)})"
    if lay == "fload":
        return f"{m} {_f(i.rd)}, {i.imm}({_x(i.rs1)})"
    if lay == "store":
        return f"{m} {_x(i.rs2)}, {i.imm}({_x(i.rs1)})"
    if lay == "fstore":
        return f"{m} {_f(i.rs2)}, {i.imm}({_x(i.rs1)})"
    if lay == "branch":
        return f"{m} {_x(i.rs1)}, {_x(i.rs2)}, {_tgt(i)}"
    if lay == "jal":
        return f"{m} {_x(i.rd)}, {_tgt(i)}"
    if lay == "jalr":
        return f"{m} {_x(i.rd)}, {_x(i.rs1)}, {i.imm}"
    if lay == "csr":
        return f"{m} {_x(i.rd)}, {i.imm:#x}"
    if lay == "ui":
        return f"{m} {_x(i.rd)}, {i.imm:#x}"
    if lay == "vote":
        return f"{m} {_x(i.rd)}, {_x(i.rs1)}, {_x(i.imm)}"
    if lay == "shfl":
        return f"{m} {_x(i.rd)}, {_x(i.rs1)}, {i.shfl_offset}, {_x(i.shfl_clamp_reg)}"
    if lay == "tile":
        return f"{m} {_x(i.rs1)}, {_x(i.rs2)}"
    if lay == "split":
        if i.target is None and i.imm == 0:
            return f"{m} {_x(i.rs1)}"
        return f"{m} {_x(i.rs1)}, {_tgt(i)}"
    if lay == "bare":
        return m
    if lay == "tmc":
        return f"{m} {_x(i.rs1)}"
    return f"{m} {_x(i.rd)}, {_x(i.rs1)}, {i.imm}"


def asm_format(p: Program) -> str:
    out = []
    if p.entry:
        out.append(f".entry {p.entry}")
    out.append(f".stack {p.stack_bytes_per_thread}")
    out.append(".text")
    for t in p.text:
        if isinstance(t, Label):
            out.append(f"{t.name}:")
        else:
            out.append(f"    {format_instr(t)}")
    if p.data:
        out.append(".data")
        by_index = {v: k for k, v in p.data_labels.items()}
        i = 0
        while i < len(p.data):
            label = by_index.get(i)
            j = i + 1
            while j < len(p.data) and j not in by_index:
                j += 1
            words = ", ".join(str(w) for w in p.data[i:j])
            prefix = f"{label}: " if label else ""
            out.append(f"{prefix}.word {words}")
            i = j
    return "\n".join(out) + "\n"


_REG_RE = re.compile(r"^([xf])(\d+)$")
_MEM_RE = re.compile(r"^(-?(?:0[xX][0-9a-fA-F]+|\d+))\((x\d+)\)$")


def _parse_reg(tok, want, where):
    m = _REG_RE.match(tok)
    if not m or m.group(1) != want or int(m.group(2)) > 31:
        raise AsmError(f"{where}: expected {want}-register, found {tok!r}")
    return int(m.group(2))


def _parse_int(tok, where):
    try:
        return int(tok, 0)
    except ValueError:
        raise AsmError(f"{where}: expected number, found {tok!r}")


def _is_label(tok):
    return re.match(r"^[A-Za-z_.][A-Za-z0-9_.]*$", tok) is not None


def parse_instr(mnemonic, ops, where) -> Instr:
    if mnemonic not in SPEC:
        raise AsmError(f"{where}: unknown mnemonic {mnemonic!r}")
    lay = _layout(mnemonic)
    need = {"r3": 3, "fr3": 3, "fcmp": 3, "xf": 2, "fx": 2, "load": 2,
            "fload": 2, "store": 2, "fstore": 2, "branch": 3, "jal": 2,
            "jalr": 3, "csr": 2, "ui": 2, "vote": 3, "shfl": 4, "tile": 2,
            "bare": 0, "tmc": 1, "i": 3}
    if lay == "split":
        if len(ops) not in (1, 2):
            raise AsmError(f"{where}: vx_split takes 1 or 2 operands")
    elif len(ops) != need[lay]:
        raise AsmError(f"{where}: {mnemonic} takes {need[lay]} operands, got {len(ops)}")
    i = Instr(mnemonic)
    if lay == "r3":
        i.rd, i.rs1, i.rs2 = (_parse_reg(o, "x", where) for o in ops)
    elif lay == "fr3":
        i.rd, i.rs1, i.rs2 = (_parse_reg(o, "f", where) for o in ops)
    elif lay == "fcmp":
        i.rd = _parse_reg(ops[0], "x", where)
        i.rs1 = _parse_reg(ops[1], "f", where)
        i.rs2 = _parse_reg(ops[2], "f", where)
    elif lay == "xf":
        i.rd = _parse_reg(ops[0], "x", where)
        i.rs1 = _parse_reg(ops[1], "f", where)
    elif lay == "fx":
        i.rd = _parse_reg(ops[0], "f", where)
        i.rs1 = _parse_reg(ops[1], "x", where)
    elif lay in ("load", "fload"):
        i.rd = _parse_reg(ops[0], "f" if lay == "fload" else "x", where)
        m = _MEM_RE.match(ops[1])
        if not m:
            raise AsmError(f"{where}: expected imm(reg), found {ops[1]!r}")
        i.imm = int(m.group(1), 0)
        i.rs1 = _parse_reg(m.group(2), "x", where)
    elif lay in ("store", "fstore"):
        i.rs2 = _parse_reg(ops[0], "f" if lay == "fstore" else "x", where)
        m = _MEM_RE.match(ops[1])
        if not m:
            raise AsmError(f"{where}: expected imm(reg), found {ops[1]!r}")
        i.imm = int(m.group(1), 0)
        i.rs1 = _parse_reg(m.group(2), "x", where)
    elif lay == "branch":
        i.rs1 = _parse_reg(ops[0], "x", where)
        i.rs2 = _parse_reg(ops[1], "x", where)
        _target(i, ops[2], where)
    elif lay == "jal":
        i.rd = _parse_reg(ops[0], "x", where)
        _target(i, ops[1], where)
    elif lay == "jalr":
        i.rd = _parse_reg(ops[0], "x", where)
        i.rs1 = _parse_reg(ops[1], "x", where)
        i.imm = _parse_int(ops[2], where)
    elif lay in ("csr", "ui"):
        i.rd = _parse_reg(ops[0], "x", where)
        i.imm = _parse_int(ops[1], where)
    elif lay == "vote":
        i.rd = _parse_reg(ops[0], "x", where)
        i.rs1 = _parse_reg(ops[1], "x", where)
        i.imm = _parse_reg(ops[2], "x", where)
    elif lay == "shfl":
        i.rd = _parse_reg(ops[0], "x", where)
        i.rs1 = _parse_reg(ops[1], "x", where)
        off = _parse_int(ops[2], where)
        clamp = _parse_reg(ops[3], "x", where)
        i.imm = pack_shfl_imm(off, clamp)
    elif lay == "tile":
        i.rs1 = _parse_reg(ops[0], "x", where)
        i.rs2 = _parse_reg(ops[1], "x", where)
    elif lay == "split":
        i.rs1 = _parse_reg(ops[0], "x", where)
        if len(ops) == 2:
            _target(i, ops[1], where)
    elif lay == "tmc":
        i.rs1 = _parse_reg(ops[0], "x", where)
    elif lay == "i":
        i.rd = _parse_reg(ops[0], "x", where)
        i.rs1 = _parse_reg(ops[1], "x", where)
        i.imm = _parse_int(ops[2], where)
    return i


def _target(i, tok, where):
    if re.match(r"^-?\d|^-?0[xX]", tok):
        i.imm = _parse_int(tok, where)
    elif _is_label(tok):
        i.target = tok
    else:
        raise AsmError(f"{where}: bad target {tok!r}")


def asm_parse(text: str) -> Program:
    p = Program()
    section = "text"
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"line {ln}"
        if line.startswith(".entry"):
            p.entry = line.split()[1]
            continue
        if line.startswith(".stack"):
            p.stack_bytes_per_thread = int(line.split()[1], 0)
            continue
        if line == ".text":
            section = "text"
            continue
        if line == ".data":
            section = "data"
            continue
        label = None
        m = re.match(r"^([A-Za-z_.][A-Za-z0-9_.]*):\s*(.*)$", line)
        if m:
            label, line = m.group(1), m.group(2).strip()
        if section == "data":
            if label:
                p.data_labels[label] = len(p.data)
            if line:
                if not line.startswith(".word"):
                    raise AsmError(f"{where}: expected .word in data section")
                for tok in line[len(".word"):].split(","):
                    p.data.append(_parse_int(tok.strip(), where) & 0xFFFFFFFF)
            continue
        if label:
            p.text.append(Label(label))
        if not line:
            continue
        parts = line.split(None, 1)
        mnemonic = parts[0]
        ops = [o.strip() for o in parts[1].split(",")] if len(parts) > 1 else []
        p.text.append(parse_instr(mnemonic, ops, where))
    return p


# ------------------------------------------------------------------ encoding

def resolve_labels(p: Program):
    """Return a copy of the instruction list with label targets turned into
    pc-relative offsets, plus the symbol table."""
    addr = 0
    symbols = {}
    for t in p.text:
        if isinstance(t, Label):
            if t.name in symbols:
                raise AsmError(f"duplicate label {t.name!r}")
            symbols[t.name] = addr
        else:
            addr += 4
    code_bytes = addr
    for name, idx in p.data_labels.items():
        if name in symbols:
            raise AsmError(f"duplicate label {name!r}")
        symbols[name] = code_bytes + 4 * idx
    out = []
    pc = 0
    for t in p.text:
        if isinstance(t, Label):
            continue
        i = t
        if i.target is not None:
            if i.target not in symbols:
                raise AsmError(f"undefined label {i.target!r}")
            i = Instr(i.mnemonic, rd=i.rd, rs1=i.rs1, rs2=i.rs2,
                      imm=symbols[i.target] - pc)
        out.append(i)
        pc += 4
    return out, symbols


def encode_program(p: Program):
    """Flat little-endian word image: code then the data segment."""
    instrs, symbols = resolve_labels(p)
    words = [encode(i) for i in instrs]
    return words + [w & 0xFFFFFFFF for w in p.data], symbols


def program_to_bytes(p: Program) -> bytes:
    words, _ = encode_program(p)
    return b"".join(w.to_bytes(4, "little") for w in words)


def disassemble_word(word: int) -> str:
    try:
        return format_instr(decode(word))
    except Exception:
        return f".word {word:#010x}"
