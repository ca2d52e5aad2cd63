"""Instruction set: RV32IM subset, f32 ops, SIMT control, and the three
warp-collective extensions.

vx_vote (custom-0, I-type) carries the member-mask register index in its
immediate; vx_shfl (custom-1, I-type) packs the clamp register index in
imm[4:0] and the lane offset in imm[9:5]; vx_tile (custom-2, R-type)
takes the group mask in rs1 and the thread count in rs2. The SIMT-control
baseline instructions vx_split/vx_join/vx_bar/vx_tmc sit on custom-0
funct3 points 4-7.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

OPC_LUI = 0b0110111
OPC_AUIPC = 0b0010111
OPC_JAL = 0b1101111
OPC_JALR = 0b1100111
OPC_BRANCH = 0b1100011
OPC_LOAD = 0b0000011
OPC_STORE = 0b0100011
OPC_OPIMM = 0b0010011
OPC_OP = 0b0110011
OPC_LOADFP = 0b0000111
OPC_STOREFP = 0b0100111
OPC_OPFP = 0b1010011
OPC_SYSTEM = 0b1110011
OPC_CUSTOM0 = 0b0001011
OPC_CUSTOM1 = 0b0101011
OPC_CUSTOM2 = 0b1011011

VOTE_FUNCT = {"all": 0, "any": 1, "uni": 2, "ballot": 3}
SHFL_FUNCT = {"up": 0, "down": 1, "bfly": 2, "idx": 3}

# CSR numbers: per-lane/warp identity and launch geometry
CSR_THREAD_ID = 0xCC0
CSR_WARP_ID = 0xCC1
CSR_NUM_THREADS = 0xCC2
CSR_NUM_WARPS = 0xCC3
CSR_BLOCK_ID = 0xCC4
CSR_GRID_DIM = 0xCC5


class IsaError(Exception):
    pass


class IllegalInstruction(IsaError):
    pass


@dataclass
class Instr:
    mnemonic: str
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    target: Optional[str] = None  # unresolved label for branch/jump/split

    @property
    def format(self) -> str:
        return SPEC[self.mnemonic][0]

    @property
    def func(self) -> Optional[str]:
        return self.mnemonic.split(".", 1)[1] if self.mnemonic.startswith("vx_vote.") \
            or self.mnemonic.startswith("vx_shfl.") else None

    # vx_shfl immediate packing
    @property
    def shfl_clamp_reg(self) -> int:
        return self.imm & 0x1F

    @property
    def shfl_offset(self) -> int:
        return (self.imm >> 5) & 0x1F


def pack_shfl_imm(offset: int, clamp_reg: int) -> int:
    if not (0 <= offset <= 31 and 0 <= clamp_reg <= 31):
        raise IsaError(f"shfl offset/clamp out of range: {offset}, {clamp_reg}")
    return (offset << 5) | clamp_reg


# mnemonic -> (format, opcode, funct3, funct7)
# format letters follow the base spec; "Iu" marks I-type with an unsigned
# immediate field (csr number, register index, or packed shfl operand).
SPEC = {
    "lui": ("U", OPC_LUI, None, None),
    "auipc": ("U", OPC_AUIPC, None, None),
    "jal": ("J", OPC_JAL, None, None),
    "jalr": ("I", OPC_JALR, 0, None),
    "beq": ("B", OPC_BRANCH, 0, None),
    "bne": ("B", OPC_BRANCH, 1, None),
    "blt": ("B", OPC_BRANCH, 4, None),
    "bge": ("B", OPC_BRANCH, 5, None),
    "bltu": ("B", OPC_BRANCH, 6, None),
    "bgeu": ("B", OPC_BRANCH, 7, None),
    "lw": ("I", OPC_LOAD, 2, None),
    "sw": ("S", OPC_STORE, 2, None),
    "addi": ("I", OPC_OPIMM, 0, None),
    "slti": ("I", OPC_OPIMM, 2, None),
    "sltiu": ("I", OPC_OPIMM, 3, None),
    "xori": ("I", OPC_OPIMM, 4, None),
    "ori": ("I", OPC_OPIMM, 6, None),
    "andi": ("I", OPC_OPIMM, 7, None),
    "slli": ("Ish", OPC_OPIMM, 1, 0b0000000),
    "srli": ("Ish", OPC_OPIMM, 5, 0b0000000),
    "srai": ("Ish", OPC_OPIMM, 5, 0b0100000),
    "add": ("R", OPC_OP, 0, 0b0000000),
    "sub": ("R", OPC_OP, 0, 0b0100000),
    "sll": ("R", OPC_OP, 1, 0b0000000),
    "slt": ("R", OPC_OP, 2, 0b0000000),
    "sltu": ("R", OPC_OP, 3, 0b0000000),
    "xor": ("R", OPC_OP, 4, 0b0000000),
    "srl": ("R", OPC_OP, 5, 0b0000000),
    "sra": ("R", OPC_OP, 5, 0b0100000),
    "or": ("R", OPC_OP, 6, 0b0000000),
    "and": ("R", OPC_OP, 7, 0b0000000),
    "mul": ("R", OPC_OP, 0, 0b0000001),
    "mulh": ("R", OPC_OP, 1, 0b0000001),
    "mulhsu": ("R", OPC_OP, 2, 0b0000001),
    "mulhu": ("R", OPC_OP, 3, 0b0000001),
    "div": ("R", OPC_OP, 4, 0b0000001),
    "divu": ("R", OPC_OP, 5, 0b0000001),
    "rem": ("R", OPC_OP, 6, 0b0000001),
    "remu": ("R", OPC_OP, 7, 0b0000001),
    "flw": ("I", OPC_LOADFP, 2, None),
    "fsw": ("S", OPC_STOREFP, 2, None),
    "fadd.s": ("R", OPC_OPFP, 0, 0b0000000),
    "fsub.s": ("R", OPC_OPFP, 0, 0b0000100),
    "fmul.s": ("R", OPC_OPFP, 0, 0b0001000),
    "fdiv.s": ("R", OPC_OPFP, 0, 0b0001100),
    "fsgnj.s": ("R", OPC_OPFP, 0, 0b0010000),
    "fsgnjn.s": ("R", OPC_OPFP, 1, 0b0010000),
    "fsgnjx.s": ("R", OPC_OPFP, 2, 0b0010000),
    "fmin.s": ("R", OPC_OPFP, 0, 0b0010100),
    "fmax.s": ("R", OPC_OPFP, 1, 0b0010100),
    "feq.s": ("R", OPC_OPFP, 2, 0b1010000),
    "flt.s": ("R", OPC_OPFP, 1, 0b1010000),
    "fle.s": ("R", OPC_OPFP, 0, 0b1010000),
    "fcvt.w.s": ("R2z", OPC_OPFP, 1, 0b1100000),
    "fcvt.s.w": ("R2z", OPC_OPFP, 0, 0b1101000),
    "fmv.x.w": ("R2z", OPC_OPFP, 0, 0b1110000),
    "fmv.w.x": ("R2z", OPC_OPFP, 0, 0b1111000),
    "csrr": ("Iu", OPC_SYSTEM, 2, None),
    "vx_vote.all": ("Iu", OPC_CUSTOM0, 0, None),
    "vx_vote.any": ("Iu", OPC_CUSTOM0, 1, None),
    "vx_vote.uni": ("Iu", OPC_CUSTOM0, 2, None),
    "vx_vote.ballot": ("Iu", OPC_CUSTOM0, 3, None),
    "vx_split": ("I", OPC_CUSTOM0, 4, None),
    "vx_join": ("I", OPC_CUSTOM0, 5, None),
    "vx_bar": ("I", OPC_CUSTOM0, 6, None),
    "vx_tmc": ("I", OPC_CUSTOM0, 7, None),
    "vx_shfl.up": ("Iu", OPC_CUSTOM1, 0, None),
    "vx_shfl.down": ("Iu", OPC_CUSTOM1, 1, None),
    "vx_shfl.bfly": ("Iu", OPC_CUSTOM1, 2, None),
    "vx_shfl.idx": ("Iu", OPC_CUSTOM1, 3, None),
    "vx_tile": ("R", OPC_CUSTOM2, 0, 0b0000000),
}

_DECODE = {}
for _m, (_f, _op, _f3, _f7) in SPEC.items():
    _DECODE.setdefault(_op, {})
    key = (_f3, _f7 if _f in ("R", "R2z", "Ish") else None)
    _DECODE[_op][key] = _m


def _check_reg(r, what):
    if not (0 <= r <= 31):
        raise IsaError(f"{what} register index {r} out of range")


def _sext(value, bits):
    sign = 1 << (bits - 1)
    return (value & (sign - 1)) - (value & sign)


def encode(i: Instr) -> int:
    """Encode to a 32-bit word; label targets must already be resolved."""
    if i.mnemonic not in SPEC:
        raise IsaError(f"unknown mnemonic {i.mnemonic!r}")
    fmt, opcode, f3, f7 = SPEC[i.mnemonic]
    _check_reg(i.rd, "rd")
    _check_reg(i.rs1, "rs1")
    _check_reg(i.rs2, "rs2")
    if i.target is not None:
        raise IsaError(f"unresolved label {i.target!r} in {i.mnemonic}")
    w = opcode
    if fmt == "U":
        if not (0 <= i.imm <= 0xFFFFF):
            raise IsaError(f"{i.mnemonic} imm20 out of range: {i.imm}")
        return w | (i.rd << 7) | (i.imm << 12)
    if fmt == "J":
        if not (-(1 << 20) <= i.imm < (1 << 20)) or i.imm & 1:
            raise IsaError(f"jal offset out of range: {i.imm}")
        v = i.imm & 0x1FFFFF
        w |= i.rd << 7
        w |= ((v >> 12) & 0xFF) << 12
        w |= ((v >> 11) & 1) << 20
        w |= ((v >> 1) & 0x3FF) << 21
        w |= ((v >> 20) & 1) << 31
        return w
    if fmt == "B":
        if not (-(1 << 12) <= i.imm < (1 << 12)) or i.imm & 1:
            raise IsaError(f"branch offset out of range: {i.imm}")
        v = i.imm & 0x1FFF
        w |= f3 << 12
        w |= i.rs1 << 15
        w |= i.rs2 << 20
        w |= ((v >> 11) & 1) << 7
        w |= ((v >> 1) & 0xF) << 8
        w |= ((v >> 5) & 0x3F) << 25
        w |= ((v >> 12) & 1) << 31
        return w
    if fmt == "S":
        if not (-2048 <= i.imm <= 2047):
            raise IsaError(f"store offset out of range: {i.imm}")
        v = i.imm & 0xFFF
        w |= f3 << 12
        w |= i.rs1 << 15
        w |= i.rs2 << 20
        w |= (v & 0x1F) << 7
        w |= ((v >> 5) & 0x7F) << 25
        return w
    if fmt in ("R", "R2z"):
        w |= (i.rd << 7) | (f3 << 12) | (i.rs1 << 15) | (i.rs2 << 20) | (f7 << 25)
        return w
    if fmt == "Ish":
        if not (0 <= i.imm <= 31):
            raise IsaError(f"shift amount out of range: {i.imm}")
        return w | (i.rd << 7) | (f3 << 12) | (i.rs1 << 15) | (i.imm << 20) | (f7 << 25)
    if fmt == "Iu":
        if not (0 <= i.imm <= 0xFFF):
            raise IsaError(f"{i.mnemonic} immediate out of range: {i.imm}")
        return w | (i.rd << 7) | (f3 << 12) | (i.rs1 << 15) | (i.imm << 20)
    # plain I
    if not (-2048 <= i.imm <= 2047):
        raise IsaError(f"{i.mnemonic} immediate out of range: {i.imm}")
    return w | (i.rd << 7) | (f3 << 12) | (i.rs1 << 15) | ((i.imm & 0xFFF) << 20)


def decode(word: int) -> Instr:
    """Inverse of encode; raises IllegalInstruction for unknown patterns."""
    word &= 0xFFFFFFFF
    opcode = word & 0x7F
    rd = (word >> 7) & 0x1F
    f3 = (word >> 12) & 0x7
    rs1 = (word >> 15) & 0x1F
    rs2 = (word >> 20) & 0x1F
    f7 = (word >> 25) & 0x7F
    group = _DECODE.get(opcode)
    if group is None:
        raise IllegalInstruction(f"unknown opcode {opcode:#09b} in {word:#010x}")

    def find(key):
        m = group.get(key)
        if m is None:
            raise IllegalInstruction(f"unknown funct fields in {word:#010x}")
        return m

    if opcode in (OPC_LUI, OPC_AUIPC):
        m = find((None, None))
        return Instr(m, rd=rd, imm=(word >> 12) & 0xFFFFF)
    if opcode == OPC_JAL:
        v = (((word >> 31) & 1) << 20) | (((word >> 21) & 0x3FF) << 1) | \
            (((word >> 20) & 1) << 11) | (((word >> 12) & 0xFF) << 12)
        return Instr("jal", rd=rd, imm=_sext(v, 21))
    if opcode == OPC_BRANCH:
        m = find((f3, None))
        v = (((word >> 31) & 1) << 12) | (((word >> 7) & 1) << 11) | \
            (((word >> 25) & 0x3F) << 5) | (((word >> 8) & 0xF) << 1)
        return Instr(m, rs1=rs1, rs2=rs2, imm=_sext(v, 13))
    if opcode in (OPC_STORE, OPC_STOREFP):
        m = find((f3, None))
        v = ((word >> 25) << 5) | ((word >> 7) & 0x1F)
        return Instr(m, rs1=rs1, rs2=rs2, imm=_sext(v, 12))
    if opcode in (OPC_OP, OPC_OPFP, OPC_CUSTOM2):
        m = find((f3, f7))
        fmt = SPEC[m][0]
        if fmt == "R2z":
            if rs2 != 0:
                raise IllegalInstruction(f"nonzero rs2 in {m}: {word:#010x}")
            return Instr(m, rd=rd, rs1=rs1)
        return Instr(m, rd=rd, rs1=rs1, rs2=rs2)
    # remaining opcodes are I-flavored
    if opcode == OPC_OPIMM and f3 in (1, 5):
        m = find((f3, f7))  # shifts carry funct7
        return Instr(m, rd=rd, rs1=rs1, imm=rs2)
    m = group.get((f3, None))
    if m is None:
        raise IllegalInstruction(f"unknown funct3 {f3} in {word:#010x}")
    fmt = SPEC[m][0]
    imm_u = (word >> 20) & 0xFFF
    if fmt == "Iu":
        return Instr(m, rd=rd, rs1=rs1, imm=imm_u)
    return Instr(m, rd=rd, rs1=rs1, imm=_sext(imm_u, 12))


def instr_class(mnemonic: str) -> str:
    """Histogram class: alu | mem | collective | control | tile."""
    if mnemonic in ("lw", "sw", "flw", "fsw"):
        return "mem"
    if mnemonic.startswith("vx_vote") or mnemonic.startswith("vx_shfl"):
        return "collective"
    if mnemonic == "vx_tile":
        return "tile"
    if mnemonic in ("jal", "jalr", "vx_split", "vx_join", "vx_bar", "vx_tmc") \
            or SPEC[mnemonic][1] == OPC_BRANCH:
        return "control"
    return "alu"


def latency_class(mnemonic: str) -> str:
    if mnemonic in ("lw", "flw"):
        return "load"
    if mnemonic in ("sw", "fsw"):
        return "store"
    if mnemonic.startswith("vx_vote") or mnemonic.startswith("vx_shfl") \
            or mnemonic == "vx_tile":
        return "collective"
    if mnemonic.startswith("f") and mnemonic.endswith(".s"):
        return "fpu"
    return "alu"
