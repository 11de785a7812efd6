"""CPI, predictor accuracy and DMIPS/MHz reporting."""
from __future__ import annotations

from dataclasses import dataclass, field

DHRYSTONES_PER_VAX_MIPS = 1757


def cpi(cycles: int, instructions: int) -> float:
    if instructions <= 0:
        raise ValueError("no instructions retired")
    return cycles / instructions


def compute_dmips(iterations: int, cycles: int) -> float:
    """Dhrystone MIPS per MHz from an iteration count and the cycles it took.

    DMIPS = iterations / seconds / 1757 and seconds = cycles / f, so per MHz
    of clock the frequency cancels: iterations * 1e6 / (cycles * 1757).
    """
    if iterations <= 0 or cycles <= 0:
        raise ValueError("iterations and cycles must both be positive")
    return iterations * 1e6 / (cycles * DHRYSTONES_PER_VAX_MIPS)


@dataclass
class StatsReport:
    core: str
    cycles: int
    instructions: int
    branch_resolved: int = 0
    branch_mispredicted: int = 0
    stall_load_use: int = 0
    stall_flush: int = 0
    stall_trap_redirect: int = 0
    stall_smc: int = 0
    traps: int = 0
    uart_bytes: int = 0
    dhrystone_iters: int | None = None
    halt_reason: str = ""
    exit_code: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def cpi(self) -> float:
        return cpi(self.cycles, self.instructions) if self.instructions else float("nan")

    @property
    def branch_accuracy(self) -> float:
        if self.branch_resolved == 0:
            return 1.0
        return 1.0 - self.branch_mispredicted / self.branch_resolved

    @property
    def dmips_per_mhz(self) -> float | None:
        if not self.dhrystone_iters:
            return None
        return compute_dmips(self.dhrystone_iters, self.cycles)

    def identity_holds(self) -> bool:
        """Pipeline cycle accounting: every cycle is a retirement, fill, or a counted stall."""
        if self.core != "pipeline":
            return self.cycles == self.instructions + self.traps
        return self.cycles == (self.instructions + 4 + self.stall_load_use + self.stall_flush
                               + self.stall_trap_redirect + self.stall_smc)

    def items(self) -> list[tuple[str, str]]:
        out = [
            ("core", self.core),
            ("halt_reason", self.halt_reason),
            ("exit_code", "" if self.exit_code is None else str(self.exit_code)),
            ("cycles", str(self.cycles)),
            ("instructions", str(self.instructions)),
            ("cpi", f"{self.cpi:.3f}"),
            ("branch_resolved", str(self.branch_resolved)),
            ("branch_mispredicted", str(self.branch_mispredicted)),
            ("branch_accuracy", f"{self.branch_accuracy:.4f}"),
            ("stall_load_use", str(self.stall_load_use)),
            ("stall_flush", str(self.stall_flush)),
            ("stall_trap_redirect", str(self.stall_trap_redirect)),
            ("stall_smc", str(self.stall_smc)),
            ("traps", str(self.traps)),
            ("uart_bytes", str(self.uart_bytes)),
        ]
        if self.dhrystone_iters:
            out += [("dhrystone_iters", str(self.dhrystone_iters)),
                    ("dmips_per_mhz", f"{self.dmips_per_mhz:.3f}"),
                    ("dmips_formula", "iters*1e6/(cycles*1757);clock-independent")]
        out += [(k, str(v)) for k, v in self.extra.items()]
        return out

    def format(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.items())
