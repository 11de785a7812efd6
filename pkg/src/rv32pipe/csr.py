"""Machine-mode CSR file, Zicsr semantics, exception detection, trap entry and MRET."""
from __future__ import annotations

from .isa import (MASK32, CSR_IMM, Kind, LOADS, STORES, DecodedInstr, IllegalEncoding)

# exception cause codes (mcause, interrupt bit always clear)
INSTR_MISALIGNED = 0
INSTR_ACCESS_FAULT = 1
ILLEGAL_INSTRUCTION = 2
BREAKPOINT = 3
LOAD_MISALIGNED = 4
LOAD_ACCESS_FAULT = 5
STORE_MISALIGNED = 6
STORE_ACCESS_FAULT = 7
ECALL_M = 11

CAUSE_NAMES = {
    INSTR_MISALIGNED: "instruction address misaligned",
    INSTR_ACCESS_FAULT: "instruction access fault",
    ILLEGAL_INSTRUCTION: "illegal instruction",
    BREAKPOINT: "breakpoint",
    LOAD_MISALIGNED: "load address misaligned",
    LOAD_ACCESS_FAULT: "load access fault",
    STORE_MISALIGNED: "store address misaligned",
    STORE_ACCESS_FAULT: "store access fault",
    ECALL_M: "environment call from M-mode",
}

MSTATUS = 0x300
MISA = 0x301
MTVEC = 0x305
MSCRATCH = 0x340
MEPC = 0x341
MCAUSE = 0x342
MTVAL = 0x343
MCYCLE, MCYCLEH = 0xB00, 0xB80
MINSTRET, MINSTRETH = 0xB02, 0xB82
CYCLE, CYCLEH = 0xC00, 0xC80
INSTRET, INSTRETH = 0xC02, 0xC82
MVENDORID, MARCHID, MIMPID, MHARTID = 0xF11, 0xF12, 0xF13, 0xF14

MSTATUS_MIE = 1 << 3
MSTATUS_MPIE = 1 << 7
MSTATUS_MPP = 0b11 << 11
MISA_RV32I = (1 << 30) | (1 << 8)

# reads whose value depends on timing, not on architecture
COUNTER_CSRS = frozenset({MCYCLE, MCYCLEH, MINSTRET, MINSTRETH, CYCLE, CYCLEH, INSTRET, INSTRETH})
CYCLE_CSRS = frozenset({MCYCLE, MCYCLEH, CYCLE, CYCLEH})
READ_ONLY = frozenset({MISA, CYCLE, CYCLEH, INSTRET, INSTRETH, MVENDORID, MARCHID, MIMPID, MHARTID})
IMPLEMENTED = frozenset({MSTATUS, MTVEC, MSCRATCH, MEPC, MCAUSE, MTVAL}) | COUNTER_CSRS | READ_ONLY
MASK64 = (1 << 64) - 1


class IllegalCsrAccess(Exception):
    def __init__(self, csr: int, reason: str):
        super().__init__(f"csr 0x{csr:03x}: {reason}")
        self.csr = csr


class CsrFile:
    """The implemented machine-mode CSRs.

    ``mcycle`` and ``minstret`` are 64-bit.  An explicit write to either
    half of a counter suppresses that counter's increment for the current
    cycle; :meth:`end_cycle` clears the suppression.
    """

    __slots__ = ("mstatus", "mtvec", "mepc", "mcause", "mtval", "mscratch",
                 "mcycle", "minstret", "_cycle_written", "_instret_written")

    def __init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        self.mstatus = MSTATUS_MPP
        self.mtvec = 0
        self.mepc = 0
        self.mcause = 0
        self.mtval = 0
        self.mscratch = 0
        self.mcycle = 0
        self.minstret = 0
        self._cycle_written = False
        self._instret_written = False

    def copy(self) -> "CsrFile":
        other = CsrFile.__new__(CsrFile)
        for name in CsrFile.__slots__:
            setattr(other, name, getattr(self, name))
        return other

    @property
    def mie(self) -> bool:
        return bool(self.mstatus & MSTATUS_MIE)

    def read(self, csr: int) -> int:
        if csr == MSTATUS:
            return self.mstatus
        if csr == MTVEC:
            return self.mtvec
        if csr == MEPC:
            return self.mepc & ~3 & MASK32
        if csr == MCAUSE:
            return self.mcause
        if csr == MTVAL:
            return self.mtval
        if csr == MSCRATCH:
            return self.mscratch
        if csr in (MCYCLE, CYCLE):
            return self.mcycle & MASK32
        if csr in (MCYCLEH, CYCLEH):
            return (self.mcycle >> 32) & MASK32
        if csr in (MINSTRET, INSTRET):
            return self.minstret & MASK32
        if csr in (MINSTRETH, INSTRETH):
            return (self.minstret >> 32) & MASK32
        if csr == MISA:
            return MISA_RV32I
        if csr in (MVENDORID, MARCHID, MIMPID, MHARTID):
            return 0
        raise IllegalCsrAccess(csr, "not implemented")

    def write(self, csr: int, value: int) -> None:
        value &= MASK32
        if csr not in IMPLEMENTED:
            raise IllegalCsrAccess(csr, "not implemented")
        if csr in READ_ONLY:
            raise IllegalCsrAccess(csr, "read-only")
        if csr == MSTATUS:
            self.mstatus = (value & (MSTATUS_MIE | MSTATUS_MPIE)) | MSTATUS_MPP
        elif csr == MTVEC:
            self.mtvec = value & ~3 & MASK32
        elif csr == MEPC:
            self.mepc = value & ~3 & MASK32
        elif csr == MCAUSE:
            self.mcause = value
        elif csr == MTVAL:
            self.mtval = value
        elif csr == MSCRATCH:
            self.mscratch = value
        elif csr == MCYCLE:
            self.mcycle = (self.mcycle & ~MASK32 & MASK64) | value
            self._cycle_written = True
        elif csr == MCYCLEH:
            self.mcycle = (self.mcycle & MASK32) | value << 32
            self._cycle_written = True
        elif csr == MINSTRET:
            self.minstret = (self.minstret & ~MASK32 & MASK64) | value
            self._instret_written = True
        elif csr == MINSTRETH:
            self.minstret = (self.minstret & MASK32) | value << 32
            self._instret_written = True

    def retire(self) -> None:
        """Count one retired instruction unless minstret was written this cycle."""
        if not self._instret_written:
            self.minstret = (self.minstret + 1) & MASK64

    def end_cycle(self) -> None:
        if not self._cycle_written:
            self.mcycle = (self.mcycle + 1) & MASK64
        self._cycle_written = False
        self._instret_written = False

    def dump(self) -> dict[str, int]:
        return {
            "mstatus": self.mstatus, "mtvec": self.mtvec, "mepc": self.read(MEPC),
            "mcause": self.mcause, "mtval": self.mtval, "mscratch": self.mscratch,
            "mcycle": self.mcycle, "minstret": self.minstret,
        }


def csr_op(file: CsrFile, kind: Kind, csr: int, operand: int, rd_is_x0: bool = False,
           operand_is_zero_register: bool = False) -> int:
    """Apply one Zicsr operation and return the CSR value from before it.

    ``operand`` is the rs1 value for register forms and the zero-extended
    zimm for immediate forms.  ``operand_is_zero_register`` marks rs1 == x0
    (for immediate forms, pass ``zimm == 0``).  Set and clear with that flag
    perform no write, so reads of read-only CSRs through them are legal.
    Raises :class:`IllegalCsrAccess`.
    """
    old = file.read(csr)
    if kind in (Kind.CSRRW, Kind.CSRRWI):
        file.write(csr, operand)
    elif not operand_is_zero_register:
        if kind in (Kind.CSRRS, Kind.CSRRSI):
            file.write(csr, old | operand)
        else:
            file.write(csr, old & ~operand)
    return old


def raise_trap(file: CsrFile, cause: int, faulting_pc: int, tval: int = 0) -> int:
    """Enter the trap handler; returns the handler pc (direct mode)."""
    file.mepc = faulting_pc & ~3 & MASK32
    file.mcause = cause
    file.mtval = tval & MASK32
    mie = file.mstatus & MSTATUS_MIE
    file.mstatus = MSTATUS_MPP | (MSTATUS_MPIE if mie else 0)
    return file.mtvec & ~3


def mret(file: CsrFile) -> int:
    mpie = file.mstatus & MSTATUS_MPIE
    file.mstatus = MSTATUS_MPP | MSTATUS_MPIE | (MSTATUS_MIE if mpie else 0)
    return file.mepc & ~3 & MASK32


def detect_exception(decoded: DecodedInstr | IllegalEncoding, fetch_pc: int,
                     mem_addr: int | None = None,
                     jump_target: int | None = None) -> int | None:
    """Highest-priority exception cause for one instruction, or None.

    ``jump_target`` is the resolved target of a taken control transfer;
    a misaligned one reports cause 0 on the transferring instruction.
    """
    if fetch_pc & 3:
        return INSTR_MISALIGNED
    if isinstance(decoded, IllegalEncoding):
        return ILLEGAL_INSTRUCTION
    kind = decoded.kind
    if kind == Kind.ECALL:
        return ECALL_M
    if kind == Kind.EBREAK:
        return BREAKPOINT
    if jump_target is not None and jump_target & 3:
        return INSTR_MISALIGNED
    if mem_addr is not None:
        if kind in LOADS and mem_addr & _ALIGN[kind]:
            return LOAD_MISALIGNED
        if kind in STORES and mem_addr & _ALIGN[kind]:
            return STORE_MISALIGNED
    return None


_ALIGN = {Kind.LB: 0, Kind.LBU: 0, Kind.SB: 0, Kind.LH: 1, Kind.LHU: 1, Kind.SH: 1,
          Kind.LW: 3, Kind.SW: 3}


def csr_operand(instr: DecodedInstr, rs1_value: int) -> tuple[int, bool]:
    """(operand, operand_is_zero_register) for a decoded Zicsr instruction."""
    if instr.kind in CSR_IMM:
        return instr.rs1, instr.rs1 == 0
    return rs1_value, instr.rs1 == 0
