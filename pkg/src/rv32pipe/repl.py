"""Instruction-level step debugger."""
from __future__ import annotations

import cmd
import sys
from typing import TextIO

from .bus import SimFault
from .harness import Simulation
from .isa import decode, disassemble
from .pipeline import PipelineCore
from .trace import format_event

HELP = """commands:
  s [n]          retire n instructions (default 1)
  c              run until halt or breakpoint
  r              registers
  x <addr> [n]   dump n words of memory (default 4)
  csr            CSR file
  p              pipeline stage occupancy
  b <pc>         stop when execution reaches pc
  pred           predictor table
  q              quit"""


class Debugger(cmd.Cmd):
    prompt = "(rv) "

    def __init__(self, sim: Simulation, stdin: TextIO | None = None, stdout: TextIO | None = None):
        super().__init__(stdin=stdin, stdout=stdout)
        if stdin is not None:
            self.use_rawinput = False
        self.sim = sim
        sim.gate.mode = "step"
        sim.gate.pending = 0
        self.out = stdout or sys.stdout

    def say(self, text: str = "") -> None:
        self.out.write(text + "\n")

    def emptyline(self) -> bool:
        return False

    def default(self, line: str) -> bool:
        self.say(f"unknown command: {line}")
        self.say(HELP)
        return False

    def do_help(self, arg: str) -> bool:
        self.say(HELP)
        return False

    def _go(self) -> None:
        if self.sim.halted:
            self.say(f"halted ({self.sim.halt_reason})")
            return
        shown = []
        self.sim.listeners.append(shown.append)
        try:
            reason = self.sim.run()
        except SimFault as fault:
            self.say(f"SimFault: {fault}")
            return
        finally:
            self.sim.listeners.remove(shown.append)
        for ev in shown[-8:]:
            self.say(format_event(ev))
        if reason == "breakpoint":
            self.say(f"breakpoint at 0x{shown[-1].next_pc:08x}")
        elif reason != "step":
            self.say(f"halted ({reason})")

    def do_s(self, arg: str) -> bool:
        try:
            n = int(arg, 0) if arg.strip() else 1
        except ValueError:
            return self.default(f"s {arg}")
        self.sim.gate.step(n)
        self._go()
        return False

    def do_c(self, arg: str) -> bool:
        self.sim.gate.mode = "free"
        self._go()
        self.sim.gate.mode = "step"
        self.sim.gate.pending = 0
        return False

    def do_r(self, arg: str) -> bool:
        regs = self.sim.core.regs
        for row in range(0, 32, 4):
            self.say("  ".join(f"x{i:<2d}={regs[i]:08x}" for i in range(row, row + 4)))
        self.say(f"pc={self.sim.core.pc:08x}")
        return False

    def do_x(self, arg: str) -> bool:
        parts = arg.split()
        try:
            addr = int(parts[0], 0)
            n = int(parts[1], 0) if len(parts) > 1 else 4
        except (IndexError, ValueError):
            return self.default(f"x {arg}")
        bus = self.sim.bus
        for i in range(n):
            a = addr + 4 * i
            try:
                word = bus.read(a, 4) if bus.is_mapped(a, 4) else None
            except SimFault:
                word = None
            self.say(f"{a:08x}: " + ("--------" if word is None else f"{word:08x}"))
        return False

    def do_csr(self, arg: str) -> bool:
        for name, value in self.sim.core.csrs.dump().items():
            self.say(f"{name:9s} {value:08x}")
        return False

    def do_p(self, arg: str) -> bool:
        for stage, pc, text in self.sim.core.occupancy():
            if pc is None:
                self.say(f"{stage:4s} bubble")
            else:
                self.say(f"{stage:4s} {pc:08x} {text}".rstrip())
        return False

    def do_b(self, arg: str) -> bool:
        try:
            pc = int(arg, 0)
        except ValueError:
            return self.default(f"b {arg}")
        self.sim.breakpoints.add(pc)
        self.say(f"breakpoint set at 0x{pc:08x}")
        return False

    def do_pred(self, arg: str) -> bool:
        core = self.sim.core
        if not isinstance(core, PipelineCore):
            self.say("golden core has no predictor")
            return False
        lines = core.predictor.dump()
        self.say("\n".join(lines) if lines else "predictor empty")
        return False

    def do_q(self, arg: str) -> bool:
        return True

    def do_EOF(self, arg: str) -> bool:
        return True


def run_script(sim: Simulation, script: str, out: TextIO) -> None:
    """Run debugger commands from ``script`` text non-interactively."""
    import io
    dbg = Debugger(sim, stdin=io.StringIO(script), stdout=out)
    dbg.prompt = ""
    dbg.cmdloop(intro="")


def where(sim: Simulation) -> str:
    pc = sim.core.pc
    if sim.bus.in_ram(pc):
        return f"{pc:08x} {disassemble(decode(sim.bus.fetch(pc)))}"
    return f"{pc:08x}"
