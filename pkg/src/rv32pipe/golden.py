"""Single-cycle functional core: one instruction per step, CPI exactly 1."""
from __future__ import annotations

from dataclasses import dataclass

from . import csr as C
from .bus import SimFault, SocBus
from .isa import (MASK32, Kind, LOADS, STORES, BRANCHES, CSR_KINDS, ALU_REG, DecodedInstr,
                  IllegalEncoding, decode, to_signed)


@dataclass(slots=True)
class RetireEvent:
    cycle: int
    pc: int
    raw: int
    rd_write: tuple[int, int] | None = None
    mem_effect: tuple[int, int, str, int] | None = None  # addr, size, "load"/"store", value
    trap: tuple[int, int] | None = None                   # cause, mepc
    next_pc: int = 0

    def key(self) -> tuple:
        """Everything but the cycle stamp."""
        return (self.pc, self.raw, self.rd_write, self.mem_effect, self.trap, self.next_pc)


def exec_alu(kind: Kind, a: int, b: int) -> int:
    """ALU result for a register or immediate arithmetic op; operands are 32-bit unsigned."""
    if kind in (Kind.ADD, Kind.ADDI):
        return (a + b) & MASK32
    if kind == Kind.SUB:
        return (a - b) & MASK32
    if kind in (Kind.SLL, Kind.SLLI):
        return (a << (b & 31)) & MASK32
    if kind in (Kind.SLT, Kind.SLTI):
        return int(to_signed(a) < to_signed(b))
    if kind in (Kind.SLTU, Kind.SLTIU):
        return int((a & MASK32) < (b & MASK32))
    if kind in (Kind.XOR, Kind.XORI):
        return (a ^ b) & MASK32
    if kind in (Kind.SRL, Kind.SRLI):
        return (a & MASK32) >> (b & 31)
    if kind in (Kind.SRA, Kind.SRAI):
        return (to_signed(a) >> (b & 31)) & MASK32
    if kind in (Kind.OR, Kind.ORI):
        return (a | b) & MASK32
    if kind in (Kind.AND, Kind.ANDI):
        return a & b & MASK32
    raise ValueError(f"{kind.name} is not an ALU operation")


def branch_taken(kind: Kind, a: int, b: int) -> bool:
    if kind == Kind.BEQ:
        return a == b
    if kind == Kind.BNE:
        return a != b
    if kind == Kind.BLT:
        return to_signed(a) < to_signed(b)
    if kind == Kind.BGE:
        return to_signed(a) >= to_signed(b)
    if kind == Kind.BLTU:
        return a < b
    if kind == Kind.BGEU:
        return a >= b
    raise ValueError(f"{kind.name} is not a branch")


MEM_SIZE = {Kind.LB: 1, Kind.LBU: 1, Kind.SB: 1, Kind.LH: 2, Kind.LHU: 2, Kind.SH: 2,
            Kind.LW: 4, Kind.SW: 4}


def extend_load(kind: Kind, raw: int) -> int:
    if kind == Kind.LB:
        return ((raw ^ 0x80) - 0x80) & MASK32
    if kind == Kind.LH:
        return ((raw ^ 0x8000) - 0x8000) & MASK32
    return raw


class ArchState:
    __slots__ = ("pc", "regs", "csrs")

    def __init__(self, pc: int = 0):
        self.pc = pc
        self.regs = [0] * 32
        self.csrs = C.CsrFile()


class GoldenCore:
    """Functional model; :meth:`step` retires (or traps) exactly one instruction."""

    kind = "golden"

    def __init__(self, bus: SocBus, entry: int | None = None, fence_nop: bool = False):
        self.bus = bus
        self.fence_nop = fence_nop
        self.state = ArchState(bus.map.reset_vector if entry is None else entry)
        self.cycle = 0
        self.retired = 0
        self.traps = 0

    @property
    def pc(self) -> int:
        return self.state.pc

    @property
    def regs(self) -> list[int]:
        return self.state.regs

    @property
    def csrs(self) -> C.CsrFile:
        return self.state.csrs

    def reset(self, pc: int | None = None) -> None:
        self.state = ArchState(self.bus.map.reset_vector if pc is None else pc)

    def occupancy(self) -> list[tuple[str, int | None, str]]:
        return [("EXEC", self.state.pc, "")]

    def _trap(self, pc: int, raw: int, cause: int, tval: int) -> RetireEvent:
        target = C.raise_trap(self.state.csrs, cause, pc, tval)
        self.state.pc = target
        return RetireEvent(self.cycle, pc, raw, trap=(cause, pc), next_pc=target)

    def step(self) -> RetireEvent:
        st, bus = self.state, self.bus
        csrs = st.csrs
        self.cycle += 1
        bus.cycle = self.cycle
        try:
            ev = self._execute(st, bus)
        except SimFault as fault:
            fault.pc = st.pc
            fault.cycle = self.cycle
            raise
        if ev.trap is None:
            csrs.retire()
            self.retired += 1
        else:
            self.traps += 1
        csrs.end_cycle()
        return ev

    def _execute(self, st: ArchState, bus: SocBus) -> RetireEvent:
        pc = st.pc
        regs = st.regs
        if not bus.in_ram(pc) and bus.unmapped == "trap":
            return self._trap(pc, 0, C.INSTR_ACCESS_FAULT, pc)
        raw = bus.fetch(pc)
        instr = decode(raw, self.fence_nop)
        cause = C.detect_exception(instr, pc)
        if cause is not None:
            return self._trap(pc, raw, cause, raw if cause == C.ILLEGAL_INSTRUCTION else 0)

        k = instr.kind
        a = regs[instr.rs1]
        b = regs[instr.rs2]
        next_pc = (pc + 4) & MASK32
        rd_value = None
        mem = None

        if k in LOADS or k in STORES:
            addr = (a + instr.imm) & MASK32
            cause = C.detect_exception(instr, pc, mem_addr=addr)
            if cause is not None:
                return self._trap(pc, raw, cause, addr)
            size = MEM_SIZE[k]
            if not bus.is_mapped(addr, size) and bus.unmapped == "trap":
                return self._trap(pc, raw, C.LOAD_ACCESS_FAULT if k in LOADS
                                  else C.STORE_ACCESS_FAULT, addr)
            if k in LOADS:
                value = bus.read(addr, size)
                mem = (addr, size, "load", value)
                rd_value = extend_load(k, value)
            else:
                value = b & ((1 << (8 * size)) - 1)
                bus.write(addr, size, value)
                mem = (addr, size, "store", value)
        elif k in BRANCHES:
            if branch_taken(k, a, b):
                target = (pc + instr.imm) & MASK32
                if target & 3:
                    return self._trap(pc, raw, C.INSTR_MISALIGNED, target)
                next_pc = target
        elif k == Kind.JAL or k == Kind.JALR:
            if k == Kind.JAL:
                target = (pc + instr.imm) & MASK32
            else:
                target = (a + instr.imm) & MASK32 & ~1
            if target & 3:
                return self._trap(pc, raw, C.INSTR_MISALIGNED, target)
            rd_value = next_pc
            next_pc = target
        elif k == Kind.LUI:
            rd_value = instr.imm & MASK32
        elif k == Kind.AUIPC:
            rd_value = (pc + instr.imm) & MASK32
        elif k in CSR_KINDS:
            operand, zero = C.csr_operand(instr, a)
            try:
                rd_value = C.csr_op(st.csrs, k, instr.csr, operand, instr.rd == 0, zero)
            except C.IllegalCsrAccess:
                return self._trap(pc, raw, C.ILLEGAL_INSTRUCTION, raw)
        elif k == Kind.MRET:
            next_pc = C.mret(st.csrs)
        else:
            operand = b if k in ALU_REG else instr.imm & MASK32
            rd_value = exec_alu(k, a, operand)

        rd_write = None
        if rd_value is not None and instr.rd != 0:
            regs[instr.rd] = rd_value
            rd_write = (instr.rd, rd_value)
        st.pc = next_pc
        return RetireEvent(self.cycle, pc, raw, rd_write, mem, None, next_pc)
