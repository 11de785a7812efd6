"""Differential run of the golden and pipeline cores, compared retirement by retirement."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from . import csr as C
from .bus import SimFault
from .golden import RetireEvent
from .harness import Options, Simulation
from .isa import CSR_KINDS, DecodedInstr, decode
from .loader import LoadedImage
from .trace import format_event

INSTRET_CSRS = frozenset({C.MINSTRET, C.MINSTRETH, C.INSTRET, C.INSTRETH})


@dataclass
class Ok:
    retired: int
    halt_reason: str
    golden_cycles: int = 0
    pipeline_cycles: int = 0
    sims: tuple[Simulation, Simulation] | None = field(default=None, repr=False, compare=False)

    def __bool__(self) -> bool:
        return True


@dataclass
class Divergence:
    index: int
    cycle_g: int | None
    cycle_p: int | None
    golden_event: RetireEvent | None
    pipeline_event: RetireEvent | None
    state_digest_diff: list[str] = field(default_factory=list)
    reason: str = ""

    def __bool__(self) -> bool:
        return False

    def describe(self) -> str:
        lines = [f"divergence at retirement #{self.index}: {self.reason}"]
        for name, ev in (("golden", self.golden_event), ("pipeline", self.pipeline_event)):
            lines.append(f"  {name:8s} {format_event(ev) if ev is not None else '<none>'}")
        lines += [f"  {d}" for d in self.state_digest_diff]
        return "\n".join(lines)


def masked_key(ev: RetireEvent, strict_instret: bool = False) -> tuple:
    """Comparison key with the cycle stamp and timing-dependent counter reads removed."""
    rd_write = ev.rd_write
    if rd_write is not None:
        instr = decode(ev.raw)
        if isinstance(instr, DecodedInstr) and instr.kind in CSR_KINDS:
            masked = C.CYCLE_CSRS if strict_instret else C.COUNTER_CSRS
            if instr.csr in masked:
                rd_write = (rd_write[0], None)
    return (ev.pc, ev.raw, rd_write, ev.mem_effect, ev.trap, ev.next_pc)


def state_diff(golden: Simulation, pipeline: Simulation) -> list[str]:
    out = []
    for i, (g, p) in enumerate(zip(golden.core.regs, pipeline.core.regs)):
        if g != p:
            out.append(f"x{i}: golden={g:08x} pipeline={p:08x}")
    gd, pd = golden.core.csrs.dump(), pipeline.core.csrs.dump()
    for name in gd:
        if name in ("mcycle", "minstret"):
            continue
        if gd[name] != pd[name]:
            out.append(f"{name}: golden={gd[name]:08x} pipeline={pd[name]:08x}")
    return out


def lockstep(image: LoadedImage, opts: Options | None = None, strict_instret: bool = False,
             setup: Callable[[Simulation], None] | None = None) -> Ok | Divergence:
    """Run both cores on ``image`` and return the first mismatching retirement, if any.

    ``setup`` gets the pipeline simulation before the run (fault-injection hook).
    """
    opts = opts or Options()
    golden = Simulation("golden", image, opts)
    pipe = Simulation("pipeline", image, opts)
    if setup is not None:
        setup(pipe)
    index = 0
    while True:
        p_fault = None
        try:
            p_ev = pipe.advance()
        except SimFault as exc:
            p_fault, p_ev = exc, exc.retired
        if p_ev is None and p_fault is None:
            return Ok(index, "budget", golden.core.cycle, pipe.core.cycle, (golden, pipe))
        if p_ev is not None:
            try:
                g_ev = golden.advance()
            except SimFault as exc:
                return Divergence(index, golden.core.cycle, pipe.core.cycle, None, p_ev,
                                  state_diff(golden, pipe), f"golden faulted: {exc}")
            if masked_key(g_ev, strict_instret) != masked_key(p_ev, strict_instret):
                return Divergence(index, g_ev.cycle, p_ev.cycle, g_ev, p_ev,
                                  state_diff(golden, pipe), "retirement mismatch")
            index += 1
        if p_fault is not None:
            # the golden core must fault on the very next instruction, at the same pc
            try:
                g_ev = golden.advance()
            except SimFault as exc:
                if exc.pc == p_fault.pc:
                    return Ok(index, "fault", golden.core.cycle, pipe.core.cycle, (golden, pipe))
                return Divergence(index, golden.core.cycle, pipe.core.cycle, None, None,
                                  state_diff(golden, pipe),
                                  f"faults differ: golden {exc}; pipeline {p_fault}")
            return Divergence(index, g_ev.cycle, pipe.core.cycle, g_ev, None,
                              state_diff(golden, pipe), f"pipeline faulted: {p_fault}")
        g_done, p_done = golden.halted, pipe.halted
        if g_done or p_done:
            if g_done != p_done:
                which = "golden" if g_done else "pipeline"
                return Divergence(index, golden.core.cycle, pipe.core.cycle, g_ev, p_ev,
                                  state_diff(golden, pipe), f"{which} halted first")
            return Ok(index, golden.halt_reason, golden.core.cycle, pipe.core.cycle, (golden, pipe))
