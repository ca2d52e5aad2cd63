"""32-bit integer and float helpers shared by the interpreter and simulator.

All integer state is kept as canonical signed 32-bit Python ints; all f32
state as numpy.float32 so both execution paths round identically.
"""

import math
import struct

import numpy as np

INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1
MASK32 = 0xFFFFFFFF


def u32(x: int) -> int:
    return x & MASK32


def s32(x: int) -> int:
    x &= MASK32
    return x - (1 << 32) if x & 0x80000000 else x


def sdiv(a: int, b: int) -> int:
    # RISC-V M semantics: div by zero = -1, overflow wraps to INT32_MIN.
    if b == 0:
        return -1
    if a == INT32_MIN and b == -1:
        return INT32_MIN
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


def srem(a: int, b: int) -> int:
    if b == 0:
        return a
    if a == INT32_MIN and b == -1:
        return 0
    return a - sdiv(a, b) * b


def udiv(a: int, b: int) -> int:
    if b == 0:
        return s32(MASK32)
    return s32(u32(a) // u32(b))


def urem(a: int, b: int) -> int:
    if b == 0:
        return a
    return s32(u32(a) % u32(b))


def shl(a: int, sh: int) -> int:
    return s32(a << (sh & 31))


def sra(a: int, sh: int) -> int:
    return s32(a >> (sh & 31))


def srl(a: int, sh: int) -> int:
    return s32(u32(a) >> (sh & 31))


def f32(x) -> float:
    """Round to the nearest f32-representable value (kept as python float)."""
    return struct.unpack("<f", struct.pack("<f", float(x)))[0]


def f32_bits(x) -> int:
    return s32(struct.unpack("<i", struct.pack("<f", float(x)))[0])


def bits_f32(b: int) -> float:
    return struct.unpack("<f", struct.pack("<i", s32(b)))[0]


_INF = float("inf")
_NAN = float("nan")


def f32_binop(op: str, a, b) -> np.float32:
    # Exact f32 semantics via double intermediates: for +,-,* on f32 inputs
    # the double result is exact, so rounding to f32 matches native f32
    # arithmetic. Division goes through the same shared path everywhere, so
    # interpreter and simulator agree bit-for-bit by construction.
    x, y = float(a), float(b)
    if op == "+":
        r = x + y
    elif op == "-":
        r = x - y
    elif op == "*":
        r = x * y
    else:
        if y == 0.0:
            if x == 0.0 or x != x:
                r = _NAN
            else:
                neg = (math.copysign(1.0, x) < 0) != (math.copysign(1.0, y) < 0)
                r = -_INF if neg else _INF
        else:
            r = x / y
    return struct.unpack("<f", struct.pack("<f", r))[0]


def f32_to_i32(x) -> int:
    # fcvt.w.s with round-toward-zero; NaN and overflow saturate per RISC-V.
    v = np.float32(x)
    if np.isnan(v):
        return INT32_MAX
    if v >= np.float32(2.0**31):
        return INT32_MAX
    if v <= np.float32(-(2.0**31)) and float(v) < INT32_MIN:
        return INT32_MIN
    t = int(np.trunc(float(v)))
    return max(INT32_MIN, min(INT32_MAX, t))
