"""Cycle-accurate 5-stage pipeline (IF, ID, EX, MEM, WB).

Stages are evaluated back to front inside :meth:`PipelineCore.tick` against
the latch contents from the start of the cycle, so WB writes the register
file before ID reads it, and a MEM-stage trap or exit squashes younger
instructions before they execute.

Timing model:

* branches, jumps and MRET resolve in EX; a mispredict squashes the IF and
  ID occupants and refetches next cycle (2 cycles lost);
* a load followed by a consumer of its result stalls the consumer in ID
  for one cycle; everything else is covered by EX/MEM and MEM/WB forwarding;
* exceptions are flagged where they are detected (ID or EX) and taken when
  the instruction reaches MEM; fetch resumes at mtvec the following cycle
  (4 cycles lost counting the trapping slot itself);
* a store that overwrites an instruction already fetched squashes and
  refetches it (self-modifying code).

So for any run that ends on a retirement::

    cycles == instructions + 4 + load_use + flush + trap_redirect + smc
"""
from __future__ import annotations

from dataclasses import dataclass

from . import csr as C
from .bus import SimFault, SocBus
from .golden import MEM_SIZE, RetireEvent, branch_taken, exec_alu, extend_load
from .isa import (ALU_REG, BRANCHES, CONTROL, CSR_KINDS, LOADS, MASK32, READS_RS1,
                  READS_RS2, STORES, WRITES_RD, DecodedInstr, Kind,
                  decode, disassemble)
from .predictor import PredictorState, predict, train

FETCH_SIMFAULT = -1  # pseudo-cause: unmapped fetch under the halt policy
FILL_LATENCY = 4
MISPREDICT_PENALTY = 2
TRAP_PENALTY = 4

# forwarding sources
REGISTER_FILE, FROM_EX_MEM, FROM_MEM_WB = "RegisterFile", "FromExMem", "FromMemWb"


class IfId:
    __slots__ = ("pc", "raw", "fault", "pred_taken", "pred_target")

    def __init__(self, pc, raw, fault, pred_taken, pred_target):
        self.pc = pc
        self.raw = raw
        self.fault = fault
        self.pred_taken = pred_taken
        self.pred_target = pred_target


class IdEx:
    __slots__ = ("pc", "raw", "instr", "rs1_val", "rs2_val", "pred_taken", "pred_target", "exc")

    def __init__(self, pc, raw, instr, rs1_val, rs2_val, pred_taken, pred_target, exc):
        self.pc = pc
        self.raw = raw
        self.instr = instr
        self.rs1_val = rs1_val
        self.rs2_val = rs2_val
        self.pred_taken = pred_taken
        self.pred_target = pred_target
        self.exc = exc


class ExMem:
    __slots__ = ("pc", "raw", "instr", "rd", "result", "addr", "store_data", "exc", "next_pc")

    def __init__(self, pc, raw, instr, rd, result, addr, store_data, exc, next_pc):
        self.pc = pc
        self.raw = raw
        self.instr = instr
        self.rd = rd
        self.result = result
        self.addr = addr
        self.store_data = store_data
        self.exc = exc
        self.next_pc = next_pc


class MemWb:
    __slots__ = ("pc", "raw", "rd", "value", "mem", "trap", "next_pc", "exits")

    def __init__(self, pc, raw, rd, value, mem, trap, next_pc, exits=False):
        self.pc = pc
        self.raw = raw
        self.rd = rd
        self.value = value
        self.mem = mem
        self.trap = trap
        self.next_pc = next_pc
        self.exits = exits


@dataclass(slots=True)
class CycleReport:
    retired: RetireEvent | None
    stalled: bool
    flushed: bool


@dataclass(slots=True)
class StallCounters:
    load_use: int = 0
    flush: int = 0
    trap_redirect: int = 0
    smc: int = 0
    mispredicts: int = 0
    traps: int = 0


def sources(instr) -> tuple[int, int]:
    """Registers an instruction reads (0 where none)."""
    if not isinstance(instr, DecodedInstr):
        return 0, 0
    k = instr.kind
    return (instr.rs1 if k in READS_RS1 else 0, instr.rs2 if k in READS_RS2 else 0)


def hazard_resolve(id_instr, id_ex: IdEx | None, ex_mem: ExMem | None,
                   mem_wb: MemWb | None) -> tuple[tuple[str, str], bool]:
    """Forwarding selection for the instruction in EX and the load-use stall flag.

    ``id_instr`` is the decoded instruction sitting in ID; ``id_ex`` the one
    in EX.  The selection is for the EX occupant's sources; the stall flag
    says whether the ID occupant must wait for a load now in EX.
    """
    fwd = [REGISTER_FILE, REGISTER_FILE]
    if id_ex is not None:
        for i, src in enumerate(sources(id_ex.instr)):
            if src == 0:
                continue
            if ex_mem is not None and ex_mem.rd == src:
                fwd[i] = FROM_EX_MEM
            elif mem_wb is not None and mem_wb.rd == src:
                fwd[i] = FROM_MEM_WB
    stall = False
    if (id_ex is not None and id_ex.exc is None and isinstance(id_ex.instr, DecodedInstr)
            and id_ex.instr.kind in LOADS and id_ex.instr.rd != 0):
        stall = id_ex.instr.rd in sources(id_instr)
    return (fwd[0], fwd[1]), stall


def resolve_branch(instr: DecodedInstr, pc: int, rs1_val: int, rs2_val: int,
                   predicted_taken: bool, predicted_target: int,
                   mret_target: int = 0) -> tuple[bool, int, bool]:
    """(actual_taken, actual_target, mispredict) for a control transfer in EX.

    ``actual_target`` is the architectural next pc (pc + 4 when not taken).
    """
    k = instr.kind
    if k in BRANCHES:
        taken = branch_taken(k, rs1_val, rs2_val)
        target = (pc + instr.imm) & MASK32 if taken else (pc + 4) & MASK32
    elif k == Kind.JAL:
        taken, target = True, (pc + instr.imm) & MASK32
    elif k == Kind.JALR:
        taken, target = True, (rs1_val + instr.imm) & MASK32 & ~1
    elif k == Kind.MRET:
        taken, target = True, mret_target
    else:
        taken, target = False, (pc + 4) & MASK32
    mispredict = taken != predicted_taken or (taken and target != predicted_target)
    return taken, target, mispredict


class PipelineCore:
    kind = "pipeline"

    def __init__(self, bus: SocBus, entry: int | None = None, fence_nop: bool = False,
                 predictor_bits: int = 6):
        self.bus = bus
        self.fence_nop = fence_nop
        self.predictor = PredictorState(predictor_bits)
        self.forwarding = True  # test hook: False breaks EX forwarding
        self._inject: tuple[str, str, int] | None = None
        self.cycle = 0
        self.retired = 0
        self.stalls = StallCounters()
        self.reset(entry)

    def reset(self, pc: int | None = None) -> None:
        """Architectural reset; RAM and the simulation's cycle count survive."""
        self.regs = [0] * 32
        self.csrs = C.CsrFile()
        self.predictor.clear()
        self.fetch_pc = self.bus.map.reset_vector if pc is None else pc
        self.if_id: IfId | None = None
        self.id_ex: IdEx | None = None
        self.ex_mem: ExMem | None = None
        self.mem_wb: MemWb | None = None
        self.exit_pending = False
        self.exited = False
        self.last_occupancy: list[tuple[str, int | None]] = [
            (s, None) for s in ("IF", "ID", "EX", "MEM", "WB")]

    @property
    def pc(self) -> int:
        """pc of the oldest in-flight instruction, or the next fetch address."""
        for latch in (self.mem_wb, self.ex_mem, self.id_ex, self.if_id):
            if latch is not None:
                return latch.pc
        return self.fetch_pc

    def in_flight(self) -> int:
        return sum(x is not None for x in (self.if_id, self.id_ex, self.ex_mem, self.mem_wb))

    def inject_fault(self, latch: str, field: str, bit: int) -> None:
        """Flip one bit of a latch field at the start of the next tick (test hook)."""
        self._inject = (latch, field, bit)

    def _apply_injection(self) -> None:
        latch_name, field, bit = self._inject
        self._inject = None
        latch = getattr(self, latch_name)
        if latch is None:
            return
        value = getattr(latch, field)
        if isinstance(value, bool):
            setattr(latch, field, not value)
        elif isinstance(value, int):
            width = 5 if field == "rd" else 32
            setattr(latch, field, value ^ (1 << (bit % width)))

    def occupancy(self) -> list[tuple[str, int | None, str]]:
        out = []
        for stage, pc in self.last_occupancy:
            text = ""
            if pc is not None and self.bus.in_ram(pc):
                text = disassemble(decode(self.bus.fetch(pc), self.fence_nop))
            out.append((stage, pc, text))
        return out

    def tick(self) -> CycleReport:
        if self._inject is not None:
            self._apply_injection()
        self.cycle += 1
        cycle = self.cycle
        bus, regs, csrs = self.bus, self.regs, self.csrs
        bus.cycle = cycle
        f, e, m, w = self.if_id, self.id_ex, self.ex_mem, self.mem_wb
        stalls = self.stalls

        # ---- WB
        retired = None
        if w is not None:
            if w.trap is None:
                if w.rd:
                    regs[w.rd] = w.value
                csrs.retire()
                self.retired += 1
            retired = RetireEvent(cycle, w.pc, w.raw, (w.rd, w.value) if w.rd else None,
                                  w.mem, w.trap, w.next_pc)
            if w.exits:
                self.exited = True

        # ---- MEM
        new_wb = None
        squash = False       # EX and ID occupants die this cycle
        fetch_ok = not self.exit_pending
        redirect = None
        if m is not None:
            if m.exc is not None:
                cause, tval = m.exc
                if cause == FETCH_SIMFAULT:
                    fault = SimFault(f"instruction fetch from unmapped address 0x{m.pc:08x}",
                                     pc=m.pc, cycle=cycle)
                    fault.retired = retired
                    raise fault
                target = C.raise_trap(csrs, cause, m.pc, tval)
                new_wb = MemWb(m.pc, m.raw, 0, 0, None, (cause, m.pc), target)
                squash, fetch_ok, redirect = True, False, target
                stalls.traps += 1
                stalls.trap_redirect += TRAP_PENALTY
            else:
                k = m.instr.kind
                value = m.result
                mem = None
                exits = False
                try:
                    if k in LOADS:
                        size = MEM_SIZE[k]
                        raw = bus.read(m.addr, size)
                        mem = (m.addr, size, "load", raw)
                        value = extend_load(k, raw)
                    elif k in STORES:
                        size = MEM_SIZE[k]
                        had_exit = bus.exit_code is not None
                        bus.write(m.addr, size, m.store_data)
                        mem = (m.addr, size, "store", m.store_data)
                        if bus.exit_code is not None and not had_exit:
                            exits = True
                            self.exit_pending = True
                            squash, fetch_ok = True, False
                        else:
                            redirect = self._smc_check(m.addr, size, e, f)
                            if redirect is not None:
                                squash = True
                except SimFault as fault:
                    fault.pc, fault.cycle, fault.retired = m.pc, cycle, retired
                    raise
                new_wb = MemWb(m.pc, m.raw, m.rd, value, mem, None, m.next_pc, exits)

        # ---- hazard unit (ID occupant decoded early; decode is pure)
        id_instr = None
        id_exc = None
        if f is not None:
            if f.fault:
                id_exc = (C.INSTR_ACCESS_FAULT if bus.unmapped == "trap" else FETCH_SIMFAULT, f.pc)
            else:
                id_instr = decode(f.raw, self.fence_nop)
                cause = C.detect_exception(id_instr, f.pc)
                if cause is not None:
                    id_exc = (cause, f.raw if cause == C.ILLEGAL_INSTRUCTION else 0)
        fwd, load_use = hazard_resolve(id_instr, e, m, w)

        # ---- EX
        new_mem = None
        mispredict = False
        if e is not None and not squash:
            new_mem, mispredict, target = self._execute(e, m, w, fwd)
            if mispredict:
                redirect = target
                fetch_ok = False
                stalls.mispredicts += 1
                stalls.flush += MISPREDICT_PENALTY
            elif new_mem.exc is not None:
                load_use = False  # the load traps; nothing to wait for

        # ---- ID
        new_ex = None
        stall = False
        if f is not None and not squash and not mispredict:
            if load_use:
                stall = True
                stalls.load_use += 1
                fetch_ok = False
            else:
                rs1, rs2 = sources(id_instr)
                new_ex = IdEx(f.pc, f.raw, id_instr, regs[rs1], regs[rs2],
                              f.pred_taken, f.pred_target, id_exc)

        # ---- IF
        new_id = f if stall else None
        fetched = None
        if redirect is not None:
            self.fetch_pc = redirect
        if fetch_ok:
            pc = self.fetch_pc
            fetched = pc
            if bus.in_ram(pc):
                raw, fault = bus.fetch(pc), False
            else:
                raw, fault = 0, True
            taken, target = predict(self.predictor, pc)
            new_id = IfId(pc, raw, fault, taken, target)
            self.fetch_pc = target

        self.last_occupancy = [
            ("IF", fetched), ("ID", f.pc if f is not None else None),
            ("EX", e.pc if e is not None else None), ("MEM", m.pc if m is not None else None),
            ("WB", w.pc if w is not None else None)]
        self.if_id, self.id_ex, self.ex_mem, self.mem_wb = new_id, new_ex, new_mem, new_wb
        csrs.end_cycle()
        return CycleReport(retired, stall, squash or mispredict)

    def _smc_check(self, addr: int, size: int, e: IdEx | None, f: IfId | None) -> int | None:
        """Refetch pc if a store overwrote an instruction already fetched."""
        hit = False
        squashed = 0
        oldest = None
        for latch in (e, f):
            if latch is None:
                continue
            squashed += 1
            if oldest is None:
                oldest = latch.pc
            if addr < latch.pc + 4 and latch.pc < addr + size:
                hit = True
        if not hit:
            return None
        self.stalls.smc += squashed
        return oldest

    def _execute(self, e: IdEx, m: ExMem | None, w: MemWb | None, fwd: tuple[str, str]):
        """Run the EX stage; returns (ExMem latch, mispredict, redirect target)."""
        instr = e.instr
        pc = e.pc
        if e.exc is not None:
            return ExMem(pc, e.raw, instr, 0, 0, 0, 0, e.exc, 0), False, 0
        k = instr.kind
        a, b = e.rs1_val, e.rs2_val
        if self.forwarding:
            if fwd[0] == FROM_EX_MEM:
                a = m.result
            elif fwd[0] == FROM_MEM_WB:
                a = w.value
            if fwd[1] == FROM_EX_MEM:
                b = m.result
            elif fwd[1] == FROM_MEM_WB:
                b = w.value
        rd = instr.rd if k in WRITES_RD else 0
        result = 0
        addr = 0
        store_data = 0
        exc = None
        next_pc = (pc + 4) & MASK32

        if k in LOADS or k in STORES:
            addr = (a + instr.imm) & MASK32
            size = MEM_SIZE[k]
            cause = C.detect_exception(instr, pc, mem_addr=addr)
            if cause is None and bus_unmapped_trap(self.bus) and not self.bus.is_mapped(addr, size):
                cause = C.LOAD_ACCESS_FAULT if k in LOADS else C.STORE_ACCESS_FAULT
            if cause is not None:
                exc = (cause, addr)
            store_data = b & ((1 << (8 * size)) - 1)
        elif k in CSR_KINDS:
            operand, zero = C.csr_operand(instr, a)
            try:
                result = C.csr_op(self.csrs, k, instr.csr, operand, instr.rd == 0, zero)
            except C.IllegalCsrAccess:
                exc = (C.ILLEGAL_INSTRUCTION, e.raw)
        elif k == Kind.LUI:
            result = instr.imm & MASK32
        elif k == Kind.AUIPC:
            result = (pc + instr.imm) & MASK32
        elif k not in CONTROL:
            result = exec_alu(k, a, b if k in ALU_REG else instr.imm & MASK32)

        mispredict = False
        if k in CONTROL:
            mret_target = self.csrs.mepc & ~3 & MASK32 if k == Kind.MRET else 0
            taken, target, mispredict = resolve_branch(
                instr, pc, a, b, e.pred_taken, e.pred_target, mret_target)
            if taken and target & 3:
                exc = (C.INSTR_MISALIGNED, target)
                mispredict = False
            else:
                if k == Kind.MRET:
                    C.mret(self.csrs)
                result = (pc + 4) & MASK32
                next_pc = target
                train(self.predictor, pc, taken, target, mispredict)
        elif e.pred_taken and exc is None:
            # stale target-buffer hit on something that does not transfer control
            mispredict = True
            train(self.predictor, pc, False, next_pc, True)

        if exc is not None:
            rd = 0
        return ExMem(pc, e.raw, instr, rd, result, addr, store_data, exc, next_pc), mispredict, next_pc


def bus_unmapped_trap(bus: SocBus) -> bool:
    return bus.unmapped == "trap"
