"""One stable text line per retirement."""
from __future__ import annotations

from typing import TextIO

from .golden import RetireEvent
from .isa import decode, disassemble


def format_event(ev: RetireEvent, fence_nop: bool = False) -> str:
    """``cycle pc raw disasm [rd=v] [mem op addr=v] [trap cause=n]``"""
    parts = [str(ev.cycle), f"{ev.pc:08x}", f"{ev.raw:08x}", disassemble(decode(ev.raw, fence_nop))]
    if ev.rd_write is not None:
        parts.append(f"rd={ev.rd_write[1]:08x}")
    if ev.mem_effect is not None:
        addr, size, op, value = ev.mem_effect
        parts.append(f"mem {op} {addr:08x}={value:0{2 * size}x}")
    if ev.trap is not None:
        parts.append(f"trap cause={ev.trap[0]}")
    return " ".join(parts)


class TraceWriter:
    def __init__(self, out: TextIO, fence_nop: bool = False):
        self.out = out
        self.fence_nop = fence_nop

    def __call__(self, ev: RetireEvent) -> None:
        self.out.write(format_event(ev, self.fence_nop) + "\n")
