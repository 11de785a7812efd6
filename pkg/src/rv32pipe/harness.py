"""Run control shared by the CLI, the debugger and the lockstep engine."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .bus import ButtonScript, ClockGate, MemoryMap, SimFault, SocBus, UartSink
from .golden import GoldenCore, RetireEvent
from .isa import JUMPS, DecodedInstr, decode
from .loader import LoadedImage
from .pipeline import PipelineCore
from .stats import StatsReport

EXIT_OK, EXIT_DIVERGENCE, EXIT_SIMFAULT, EXIT_BUDGET, EXIT_USAGE = 0, 1, 2, 3, 4
HISTORY = 16


@dataclass
class Options:
    memmap: MemoryMap = field(default_factory=MemoryMap)
    fence_nop: bool = False
    unmapped: str = "halt"
    max_cycles: int = 10_000_000
    buttons: ButtonScript = field(default_factory=ButtonScript)
    uart_input: bytes = b""
    predictor_bits: int = 6


def make_core(kind: str, bus: SocBus, entry: int, opts: Options):
    if kind == "golden":
        return GoldenCore(bus, entry, opts.fence_nop)
    if kind == "pipeline":
        return PipelineCore(bus, entry, opts.fence_nop, opts.predictor_bits)
    raise ValueError(f"unknown core {kind!r}")


def is_self_loop(ev: RetireEvent) -> bool:
    if ev.trap is not None or ev.next_pc != ev.pc:
        return False
    instr = decode(ev.raw)
    return isinstance(instr, DecodedInstr) and instr.kind in JUMPS


class Simulation:
    """One core on its own SoC, loaded with an image.

    :meth:`advance` moves to the next retirement; :meth:`run` loops until a
    halt condition: SIM_EXIT store retired (``exit``), a jump-to-self
    retired twice in a row (``self_loop``), the cycle budget (``budget``),
    a breakpoint (``breakpoint``: the next instruction to retire sits at a
    breakpoint pc) or a closed clock gate (``step``).
    """

    def __init__(self, core_kind: str, image: LoadedImage, opts: Options | None = None,
                 uart: UartSink | None = None):
        self.opts = opts or Options()
        self.image = image
        self.bus = SocBus(self.opts.memmap, uart, self.opts.buttons, self.opts.uart_input,
                          self.opts.unmapped)
        image.install(self.bus)
        self.core = make_core(core_kind, self.bus, image.entry_pc, self.opts)
        self.history: deque[RetireEvent] = deque(maxlen=HISTORY)
        self.listeners: list[Callable[[RetireEvent], None]] = []
        self.breakpoints: set[int] = set()
        self.gate = ClockGate()
        self.halt_reason: str | None = None
        self.retirements = 0
        self._self_loops = 0
        self.exit_code: int | None = None

    @property
    def core_kind(self) -> str:
        return self.core.kind

    @property
    def halted(self) -> bool:
        return self.halt_reason in ("exit", "self_loop", "fault")

    def _maybe_reset(self) -> None:
        if self.opts.buttons.events and self.opts.buttons.reset_at(self.core.cycle + 1):
            self.core.reset(self.opts.memmap.reset_vector)
            self._self_loops = 0

    def _retire(self, ev: RetireEvent) -> None:
        self.retirements += 1
        self.history.append(ev)
        for fn in self.listeners:
            fn(ev)
        self.gate.retired()
        if is_self_loop(ev):
            self._self_loops += 1
            if self._self_loops >= 2:
                self.halt_reason = "self_loop"
                self.exit_code = 0
        else:
            self._self_loops = 0

    def _fault(self, fault: SimFault) -> SimFault:
        if fault.retired is not None:
            self._retire(fault.retired)
        fault.history = list(self.history)
        self.halt_reason = "fault"
        return fault

    def advance(self) -> RetireEvent | None:
        """Tick until one retirement; None if the budget ran out first."""
        core = self.core
        try:
            if isinstance(core, GoldenCore):
                if core.cycle >= self.opts.max_cycles:
                    self.halt_reason = "budget"
                    return None
                self._maybe_reset()
                ev = core.step()
                self._retire(ev)
                if self.bus.exit_code is not None:
                    self.halt_reason = "exit"
                    self.exit_code = self.bus.exit_code
                return ev
            while True:
                if core.cycle >= self.opts.max_cycles:
                    self.halt_reason = "budget"
                    return None
                self._maybe_reset()
                report = core.tick()
                if report.retired is not None:
                    self._retire(report.retired)
                    if core.exited:
                        self.halt_reason = "exit"
                        self.exit_code = self.bus.exit_code
                    return report.retired
        except SimFault as fault:
            raise self._fault(fault) from None

    def run(self) -> str:
        self.halt_reason = None
        while True:
            if not self.gate.enabled():
                self.halt_reason = "step"
                return self.halt_reason
            ev = self.advance()
            if ev is None or self.halt_reason is not None:
                return self.halt_reason
            if ev.next_pc in self.breakpoints:
                self.halt_reason = "breakpoint"
                return self.halt_reason

    def stats(self, dhrystone_iters: int | None = None) -> StatsReport:
        core = self.core
        if isinstance(core, PipelineCore):
            s = core.stalls
            p = core.predictor
            return StatsReport(
                "pipeline", core.cycle, core.retired, p.trained, p.mispredicts,
                s.load_use, s.flush, s.trap_redirect, s.smc, s.traps, len(self.bus.uart),
                dhrystone_iters, self.halt_reason or "", self.exit_code)
        return StatsReport(
            "golden", core.cycle, core.retired, 0, 0, 0, 0, 0, 0, core.traps,
            len(self.bus.uart), dhrystone_iters, self.halt_reason or "", self.exit_code)
