"""Decode, encode and disassemble the 46-operation RV32I + Zicsr + trap subset.

Immediates are sign-extended at decode time and stored as Python ints in
two's-complement signed range.  Fields that carry no meaning for a given
operation are zero, so two decodes of the same word compare equal.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

MASK32 = 0xFFFFFFFF


class Kind(enum.IntEnum):
    LUI = 0
    AUIPC = 1
    JAL = 2
    JALR = 3
    BEQ = 4
    BNE = 5
    BLT = 6
    BGE = 7
    BLTU = 8
    BGEU = 9
    LB = 10
    LH = 11
    LW = 12
    LBU = 13
    LHU = 14
    SB = 15
    SH = 16
    SW = 17
    ADDI = 18
    SLTI = 19
    SLTIU = 20
    XORI = 21
    ORI = 22
    ANDI = 23
    SLLI = 24
    SRLI = 25
    SRAI = 26
    ADD = 27
    SUB = 28
    SLL = 29
    SLT = 30
    SLTU = 31
    XOR = 32
    SRL = 33
    SRA = 34
    OR = 35
    AND = 36
    CSRRW = 37
    CSRRS = 38
    CSRRC = 39
    CSRRWI = 40
    CSRRSI = 41
    CSRRCI = 42
    ECALL = 43
    EBREAK = 44
    MRET = 45

    @property
    def mnemonic(self) -> str:
        return self.name.lower()


BRANCHES = frozenset({Kind.BEQ, Kind.BNE, Kind.BLT, Kind.BGE, Kind.BLTU, Kind.BGEU})
LOADS = frozenset({Kind.LB, Kind.LH, Kind.LW, Kind.LBU, Kind.LHU})
STORES = frozenset({Kind.SB, Kind.SH, Kind.SW})
ALU_IMM = frozenset({Kind.ADDI, Kind.SLTI, Kind.SLTIU, Kind.XORI, Kind.ORI, Kind.ANDI})
SHIFT_IMM = frozenset({Kind.SLLI, Kind.SRLI, Kind.SRAI})
ALU_REG = frozenset({Kind.ADD, Kind.SUB, Kind.SLL, Kind.SLT, Kind.SLTU,
                     Kind.XOR, Kind.SRL, Kind.SRA, Kind.OR, Kind.AND})
CSR_REG = frozenset({Kind.CSRRW, Kind.CSRRS, Kind.CSRRC})
CSR_IMM = frozenset({Kind.CSRRWI, Kind.CSRRSI, Kind.CSRRCI})
CSR_KINDS = CSR_REG | CSR_IMM
JUMPS = frozenset({Kind.JAL, Kind.JALR})
# everything resolved in EX against a predicted next pc
CONTROL = BRANCHES | JUMPS | {Kind.MRET}

# which register operands an operation actually reads
READS_RS1 = frozenset(BRANCHES | LOADS | STORES | ALU_IMM | SHIFT_IMM | ALU_REG | CSR_REG | {Kind.JALR})
READS_RS2 = frozenset(BRANCHES | STORES | ALU_REG)
WRITES_RD = frozenset(LOADS | ALU_IMM | SHIFT_IMM | ALU_REG | CSR_KINDS
                      | {Kind.LUI, Kind.AUIPC, Kind.JAL, Kind.JALR})

CSR_NAMES = {
    0x300: "mstatus", 0x301: "misa", 0x302: "medeleg", 0x303: "mideleg",
    0x304: "mie", 0x305: "mtvec", 0x306: "mcounteren", 0x340: "mscratch",
    0x341: "mepc", 0x342: "mcause", 0x343: "mtval", 0x344: "mip",
    0xB00: "mcycle", 0xB02: "minstret", 0xB80: "mcycleh", 0xB82: "minstreth",
    0xC00: "cycle", 0xC01: "time", 0xC02: "instret",
    0xC80: "cycleh", 0xC81: "timeh", 0xC82: "instreth",
    0xF11: "mvendorid", 0xF12: "marchid", 0xF13: "mimpid", 0xF14: "mhartid",
}
CSR_NUMBERS = {name: num for num, name in CSR_NAMES.items()}


@dataclass(frozen=True, slots=True)
class DecodedInstr:
    kind: Kind
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    csr: int = 0

    def __str__(self) -> str:
        return disassemble(self)


@dataclass(frozen=True, slots=True)
class IllegalEncoding:
    """A word that is not one of the 46 supported operations."""
    word: int

    def __str__(self) -> str:
        return "illegal"


def sext(value: int, bits: int) -> int:
    sign = 1 << (bits - 1)
    value &= (1 << bits) - 1
    return (value ^ sign) - sign


def to_signed(value: int) -> int:
    return sext(value, 32)


_BRANCH_F3 = {0: Kind.BEQ, 1: Kind.BNE, 4: Kind.BLT, 5: Kind.BGE, 6: Kind.BLTU, 7: Kind.BGEU}
_LOAD_F3 = {0: Kind.LB, 1: Kind.LH, 2: Kind.LW, 4: Kind.LBU, 5: Kind.LHU}
_STORE_F3 = {0: Kind.SB, 1: Kind.SH, 2: Kind.SW}
_IMM_F3 = {0: Kind.ADDI, 2: Kind.SLTI, 3: Kind.SLTIU, 4: Kind.XORI, 6: Kind.ORI, 7: Kind.ANDI}
_REG_F3F7 = {
    (0, 0x00): Kind.ADD, (0, 0x20): Kind.SUB, (1, 0x00): Kind.SLL,
    (2, 0x00): Kind.SLT, (3, 0x00): Kind.SLTU, (4, 0x00): Kind.XOR,
    (5, 0x00): Kind.SRL, (5, 0x20): Kind.SRA, (6, 0x00): Kind.OR, (7, 0x00): Kind.AND,
}
_CSR_F3 = {1: Kind.CSRRW, 2: Kind.CSRRS, 3: Kind.CSRRC,
           5: Kind.CSRRWI, 6: Kind.CSRRSI, 7: Kind.CSRRCI}
_F3_OF = {k: f for f, k in _BRANCH_F3.items()}
_F3_OF.update({k: f for f, k in _LOAD_F3.items()})
_F3_OF.update({k: f for f, k in _STORE_F3.items()})
_F3_OF.update({k: f for f, k in _IMM_F3.items()})
_F3_OF.update({k: f for f, k in _CSR_F3.items()})
_F3F7_OF = {k: f for f, k in _REG_F3F7.items()}

_NOP = DecodedInstr(Kind.ADDI)


@lru_cache(maxsize=1 << 16)
def decode(word: int, fence_nop: bool = False) -> DecodedInstr | IllegalEncoding:
    """Decode one 32-bit instruction word.

    Never raises: unsupported encodings come back as ``IllegalEncoding``.
    With ``fence_nop`` a FENCE (funct3 000) decodes as ``addi x0, x0, 0``.
    """
    word &= MASK32
    opcode = word & 0x7F
    rd = (word >> 7) & 0x1F
    f3 = (word >> 12) & 0x7
    rs1 = (word >> 15) & 0x1F
    rs2 = (word >> 20) & 0x1F
    f7 = word >> 25

    if opcode == 0x37:
        return DecodedInstr(Kind.LUI, rd=rd, imm=to_signed(word & 0xFFFFF000))
    if opcode == 0x17:
        return DecodedInstr(Kind.AUIPC, rd=rd, imm=to_signed(word & 0xFFFFF000))
    if opcode == 0x6F:
        imm = (((word >> 31) & 1) << 20 | ((word >> 12) & 0xFF) << 12
               | ((word >> 20) & 1) << 11 | ((word >> 21) & 0x3FF) << 1)
        return DecodedInstr(Kind.JAL, rd=rd, imm=sext(imm, 21))
    if opcode == 0x67:
        if f3 != 0:
            return IllegalEncoding(word)
        return DecodedInstr(Kind.JALR, rd=rd, rs1=rs1, imm=sext(word >> 20, 12))
    if opcode == 0x63:
        kind = _BRANCH_F3.get(f3)
        if kind is None:
            return IllegalEncoding(word)
        imm = (((word >> 31) & 1) << 12 | ((word >> 7) & 1) << 11
               | ((word >> 25) & 0x3F) << 5 | ((word >> 8) & 0xF) << 1)
        return DecodedInstr(kind, rs1=rs1, rs2=rs2, imm=sext(imm, 13))
    if opcode == 0x03:
        kind = _LOAD_F3.get(f3)
        if kind is None:
            return IllegalEncoding(word)
        return DecodedInstr(kind, rd=rd, rs1=rs1, imm=sext(word >> 20, 12))
    if opcode == 0x23:
        kind = _STORE_F3.get(f3)
        if kind is None:
            return IllegalEncoding(word)
        imm = (f7 << 5) | rd
        return DecodedInstr(kind, rs1=rs1, rs2=rs2, imm=sext(imm, 12))
    if opcode == 0x13:
        if f3 == 1:
            if f7 != 0:
                return IllegalEncoding(word)
            return DecodedInstr(Kind.SLLI, rd=rd, rs1=rs1, imm=rs2)
        if f3 == 5:
            if f7 == 0:
                return DecodedInstr(Kind.SRLI, rd=rd, rs1=rs1, imm=rs2)
            if f7 == 0x20:
                return DecodedInstr(Kind.SRAI, rd=rd, rs1=rs1, imm=rs2)
            return IllegalEncoding(word)
        return DecodedInstr(_IMM_F3[f3], rd=rd, rs1=rs1, imm=sext(word >> 20, 12))
    if opcode == 0x33:
        kind = _REG_F3F7.get((f3, f7))
        if kind is None:
            return IllegalEncoding(word)
        return DecodedInstr(kind, rd=rd, rs1=rs1, rs2=rs2)
    if opcode == 0x73:
        if f3 == 0:
            if word == 0x00000073:
                return DecodedInstr(Kind.ECALL)
            if word == 0x00100073:
                return DecodedInstr(Kind.EBREAK)
            if word == 0x30200073:
                return DecodedInstr(Kind.MRET)
            return IllegalEncoding(word)
        kind = _CSR_F3.get(f3)
        if kind is None:
            return IllegalEncoding(word)
        # immediate forms carry zimm in the rs1 slot
        return DecodedInstr(kind, rd=rd, rs1=rs1, csr=word >> 20)
    if opcode == 0x0F and f3 == 0 and fence_nop:
        return _NOP
    return IllegalEncoding(word)


def _check(cond: bool, instr: DecodedInstr, why: str) -> None:
    if not cond:
        raise ValueError(f"cannot encode {instr!r}: {why}")


def encode(instr: DecodedInstr) -> int:
    """Inverse of :func:`decode` for canonical instructions; raises ValueError otherwise."""
    k, rd, rs1, rs2, imm, csr = instr.kind, instr.rd, instr.rs1, instr.rs2, instr.imm, instr.csr
    for name, reg in (("rd", rd), ("rs1", rs1), ("rs2", rs2)):
        _check(0 <= reg < 32, instr, f"{name} out of range")
    _check(0 <= csr < 4096, instr, "csr out of range")
    if k not in CSR_KINDS:
        _check(csr == 0, instr, "csr field must be zero")
    if k not in WRITES_RD:
        _check(rd == 0, instr, "rd field must be zero")
    if k not in READS_RS1 and k not in CSR_IMM:
        _check(rs1 == 0, instr, "rs1 field must be zero")
    if k not in READS_RS2:
        _check(rs2 == 0, instr, "rs2 field must be zero")

    if k in (Kind.LUI, Kind.AUIPC):
        _check(-(1 << 31) <= imm < (1 << 31) and imm & 0xFFF == 0, instr, "U immediate")
        return (imm & 0xFFFFF000) | rd << 7 | (0x37 if k == Kind.LUI else 0x17)
    if k == Kind.JAL:
        _check(-(1 << 20) <= imm < (1 << 20) and imm % 2 == 0, instr, "J immediate")
        v = imm & 0x1FFFFF
        return (((v >> 20) & 1) << 31 | ((v >> 1) & 0x3FF) << 21 | ((v >> 11) & 1) << 20
                | ((v >> 12) & 0xFF) << 12 | rd << 7 | 0x6F)
    if k in BRANCHES:
        _check(-4096 <= imm < 4096 and imm % 2 == 0, instr, "B immediate")
        v = imm & 0x1FFF
        return (((v >> 12) & 1) << 31 | ((v >> 5) & 0x3F) << 25 | rs2 << 20 | rs1 << 15
                | _F3_OF[k] << 12 | ((v >> 1) & 0xF) << 8 | ((v >> 11) & 1) << 7 | 0x63)
    if k in STORES:
        _check(-2048 <= imm < 2048, instr, "S immediate")
        v = imm & 0xFFF
        return (v >> 5) << 25 | rs2 << 20 | rs1 << 15 | _F3_OF[k] << 12 | (v & 0x1F) << 7 | 0x23
    if k in SHIFT_IMM:
        _check(0 <= imm < 32, instr, "shamt must be 0..31")
        f7 = 0x20 if k == Kind.SRAI else 0
        f3 = 1 if k == Kind.SLLI else 5
        return f7 << 25 | imm << 20 | rs1 << 15 | f3 << 12 | rd << 7 | 0x13
    if k in ALU_IMM or k in LOADS or k == Kind.JALR:
        _check(-2048 <= imm < 2048, instr, "I immediate")
        opcode = 0x13 if k in ALU_IMM else 0x03 if k in LOADS else 0x67
        f3 = 0 if k == Kind.JALR else _F3_OF[k]
        return (imm & 0xFFF) << 20 | rs1 << 15 | f3 << 12 | rd << 7 | opcode
    _check(imm == 0, instr, "immediate must be zero")
    if k in ALU_REG:
        f3, f7 = _F3F7_OF[k]
        return f7 << 25 | rs2 << 20 | rs1 << 15 | f3 << 12 | rd << 7 | 0x33
    if k in CSR_KINDS:
        return csr << 20 | rs1 << 15 | _F3_OF[k] << 12 | rd << 7 | 0x73
    _check(rd == rs1 == rs2 == 0, instr, "system op takes no operands")
    return {Kind.ECALL: 0x00000073, Kind.EBREAK: 0x00100073, Kind.MRET: 0x30200073}[k]


def ins(kind: Kind, rd: int = 0, rs1: int = 0, rs2: int = 0, imm: int = 0, csr: int = 0) -> int:
    """Shorthand for ``encode(DecodedInstr(...))`` used when building test programs."""
    return encode(DecodedInstr(kind, rd, rs1, rs2, imm, csr))


def csr_name(num: int) -> str:
    return CSR_NAMES.get(num, f"0x{num:03x}")


def disassemble(instr: DecodedInstr | IllegalEncoding) -> str:
    if isinstance(instr, IllegalEncoding):
        return "illegal"
    k = instr.kind
    m = k.mnemonic
    rd, rs1, rs2, imm = f"x{instr.rd}", f"x{instr.rs1}", f"x{instr.rs2}", instr.imm
    if k in (Kind.LUI, Kind.AUIPC):
        return f"{m} {rd}, 0x{(imm >> 12) & 0xFFFFF:x}"
    if k == Kind.JAL:
        return f"{m} {rd}, {imm}"
    if k == Kind.JALR or k in LOADS:
        return f"{m} {rd}, {imm}({rs1})"
    if k in STORES:
        return f"{m} {rs2}, {imm}({rs1})"
    if k in BRANCHES:
        return f"{m} {rs1}, {rs2}, {imm}"
    if k in ALU_IMM or k in SHIFT_IMM:
        return f"{m} {rd}, {rs1}, {imm}"
    if k in ALU_REG:
        return f"{m} {rd}, {rs1}, {rs2}"
    if k in CSR_REG:
        return f"{m} {rd}, {csr_name(instr.csr)}, {rs1}"
    if k in CSR_IMM:
        return f"{m} {rd}, {csr_name(instr.csr)}, {instr.rs1}"
    return m
