"""Simulated SoC: unified RAM, UART, GPIO, simulation-exit register."""
from __future__ import annotations

import logging
import sys
import threading
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import BinaryIO, Iterable

log = logging.getLogger(__name__)

UART_TXDATA, UART_TXSTATUS, UART_RXDATA, UART_RXSTATUS = 0x0, 0x4, 0x8, 0xC
GPIO_LEDS, GPIO_BUTTONS = 0x0, 0x4
BUTTON_RESET_BIT = 1 << 5


class SimFault(Exception):
    """Simulation cannot continue (unmapped access under the halt policy, ...)."""

    def __init__(self, message: str, pc: int | None = None, cycle: int | None = None):
        super().__init__(message)
        self.pc = pc
        self.cycle = cycle
        self.history: list = []
        # an instruction that completed in the faulting cycle, reported late
        self.retired = None

    def __str__(self) -> str:
        where = ""
        if self.pc is not None:
            where += f" pc=0x{self.pc:08x}"
        if self.cycle is not None:
            where += f" cycle={self.cycle}"
        return f"{self.args[0]}{where}"


@dataclass(frozen=True)
class MemoryMap:
    ram_base: int = 0x0000_0000
    ram_size: int = 128 * 1024
    uart_base: int = 0x1000_0000
    gpio_base: int = 0x1000_1000
    sim_exit: int = 0x1000_2000
    reset_vector: int = 0x0000_0000

    def __post_init__(self) -> None:
        if self.ram_size <= 0 or self.ram_size & (self.ram_size - 1):
            raise ValueError(f"ram_size must be a power of two, got {self.ram_size:#x}")
        spans = sorted([(self.ram_base, self.ram_size, "ram"), (self.uart_base, 16, "uart"),
                        (self.gpio_base, 8, "gpio"), (self.sim_exit, 4, "sim_exit")])
        for (a, n, x), (b, _, y) in zip(spans, spans[1:]):
            if a + n > b:
                raise ValueError(f"memory regions {x} and {y} overlap")

    @classmethod
    def from_file(cls, path: str | Path) -> "MemoryMap":
        """Read ``key = value`` lines (``#`` comments) overriding the defaults."""
        known = {f.name for f in fields(cls)}
        overrides = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in known:
                raise ValueError(f"{path}:{lineno}: expected one of {sorted(known)} = <int>")
            overrides[key] = int(value.strip(), 0)
        return replace(cls(), **overrides)


class UartSink:
    """Ordered byte stream written by the UART; optionally mirrored to streams.

    Another thread may call :meth:`drain` to take the bytes written so far.
    """

    def __init__(self, outputs: Iterable[BinaryIO] = ()):
        self.data = bytearray()
        self.outputs = list(outputs)
        self._pending = bytearray()
        self._lock = threading.Lock()

    def put(self, byte: int) -> None:
        b = bytes((byte & 0xFF,))
        self.data += b
        with self._lock:
            self._pending += b
        for out in self.outputs:
            out.write(b)
            out.flush()

    def drain(self) -> bytes:
        with self._lock:
            chunk = bytes(self._pending)
            self._pending.clear()
        return chunk

    def __len__(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class ButtonEvent:
    cycle: int
    buttons: int
    reset: bool = False


class ButtonScript:
    """Button states in force from given cycles on (text lines ``<cycle> <hex>[ R]``)."""

    def __init__(self, events: Iterable[ButtonEvent] = ()):
        self.events = list(events)
        for a, b in zip(self.events, self.events[1:]):
            if b.cycle <= a.cycle:
                raise ValueError("button script cycles must be strictly increasing")
        for e in self.events:
            if not 0 <= e.buttons < 32:
                raise ValueError(f"button value {e.buttons:#x} does not fit 5 bits")

    @classmethod
    def parse(cls, text: str, source: str = "<buttons>") -> "ButtonScript":
        events = []
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            try:
                if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "R"):
                    raise ValueError("expected '<cycle> <hex>[ R]'")
                events.append(ButtonEvent(int(parts[0], 0), int(parts[1], 16), len(parts) == 3))
            except ValueError as exc:
                raise ValueError(f"{source}:{lineno}: {exc}") from None
        return cls(events)

    @classmethod
    def load(cls, path: str | Path) -> "ButtonScript":
        return cls.parse(Path(path).read_text(), str(path))

    def at(self, cycle: int) -> ButtonEvent | None:
        current = None
        for e in self.events:
            if e.cycle > cycle:
                break
            current = e
        return current

    def value(self, cycle: int) -> int:
        e = self.at(cycle)
        if e is None:
            return 0
        return e.buttons | (BUTTON_RESET_BIT if e.reset else 0)

    def reset_at(self, cycle: int) -> bool:
        """True on the first cycle of a reset-marked entry."""
        return any(e.reset and e.cycle == cycle for e in self.events)


class SocBus:
    """Unified memory plus devices.

    Instruction fetch and data access share one RAM, so a store is seen by
    every later fetch of the same address.  ``unmapped`` selects what an
    access outside every region does: ``"halt"`` raises :class:`SimFault`,
    ``"trap"`` lets the core raise an access-fault trap (the core checks
    :meth:`is_mapped` before accessing).
    """

    def __init__(self, memmap: MemoryMap | None = None, uart: UartSink | None = None,
                 buttons: ButtonScript | None = None, uart_input: bytes = b"",
                 unmapped: str = "halt"):
        if unmapped not in ("halt", "trap"):
            raise ValueError(f"unknown unmapped-access policy {unmapped!r}")
        self.map = memmap or MemoryMap()
        self.ram = bytearray(self.map.ram_size)
        self.uart = uart if uart is not None else UartSink()
        self.buttons = buttons or ButtonScript()
        self.rx = bytearray(uart_input)
        self.leds = 0
        self.exit_code: int | None = None
        self.unmapped = unmapped
        self.cycle = 0
        self._ram_lo = self.map.ram_base
        self._ram_hi = self.map.ram_base + self.map.ram_size

    # --- RAM helpers ---------------------------------------------------
    def in_ram(self, addr: int, size: int = 4) -> bool:
        return self._ram_lo <= addr and addr + size <= self._ram_hi

    def is_mapped(self, addr: int, size: int = 4) -> bool:
        if self.in_ram(addr, size):
            return True
        return size == 4 and self._device(addr) is not None

    def _device(self, addr: int) -> tuple[str, int] | None:
        m = self.map
        if m.uart_base <= addr < m.uart_base + 16 and addr % 4 == 0:
            return "uart", addr - m.uart_base
        if m.gpio_base <= addr < m.gpio_base + 8 and addr % 4 == 0:
            return "gpio", addr - m.gpio_base
        if addr == m.sim_exit:
            return "exit", 0
        return None

    def load_bytes(self, addr: int, data: bytes) -> None:
        if not self.in_ram(addr, len(data)):
            raise ValueError(f"segment 0x{addr:08x}+{len(data)} lies outside RAM")
        off = addr - self._ram_lo
        self.ram[off:off + len(data)] = data

    def dump(self, addr: int, length: int) -> bytes:
        off = addr - self._ram_lo
        return bytes(self.ram[off:off + length])

    # --- core-facing accesses -----------------------------------------
    def fetch(self, addr: int) -> int:
        lo = self._ram_lo
        if lo <= addr and addr + 4 <= self._ram_hi:
            off = addr - lo
            return int.from_bytes(self.ram[off:off + 4], "little")
        raise SimFault(f"instruction fetch from unmapped address 0x{addr:08x}", pc=addr)

    def read(self, addr: int, size: int) -> int:
        lo = self._ram_lo
        if lo <= addr and addr + size <= self._ram_hi:
            off = addr - lo
            return int.from_bytes(self.ram[off:off + size], "little")
        dev = self._device(addr) if size == 4 else None
        if dev is None:
            raise SimFault(f"load from unmapped address 0x{addr:08x} (size {size})")
        name, reg = dev
        if name == "uart":
            if reg == UART_TXSTATUS:
                return 1
            if reg == UART_RXDATA:
                if self.rx:
                    return self.rx.pop(0)
                return 0
            if reg == UART_RXSTATUS:
                return 1 if self.rx else 0
            return 0
        if name == "gpio":
            if reg == GPIO_LEDS:
                return self.leds
            return self.buttons.value(self.cycle)
        return 0

    def write(self, addr: int, size: int, value: int) -> None:
        lo = self._ram_lo
        if lo <= addr and addr + size <= self._ram_hi:
            off = addr - lo
            self.ram[off:off + size] = (value & ((1 << (8 * size)) - 1)).to_bytes(size, "little")
            return
        dev = self._device(addr) if size == 4 else None
        if dev is None:
            raise SimFault(f"store to unmapped address 0x{addr:08x} (size {size})")
        name, reg = dev
        if name == "uart":
            if reg == UART_TXDATA:
                self.uart.put(value)
            else:
                log.warning("ignoring write to read-only UART register +0x%x", reg)
        elif name == "gpio":
            if reg == GPIO_LEDS:
                self.leds = value & 0xFF
            else:
                log.warning("ignoring write to read-only BUTTONS register")
        else:
            self.exit_code = value & 0xFFFFFFFF


def stdout_sink(path: str | None = None, echo: bool = True) -> UartSink:
    outs: list[BinaryIO] = []
    if echo:
        outs.append(sys.stdout.buffer)
    if path:
        outs.append(open(path, "wb"))
    return UartSink(outs)


class ClockGate:
    """Clock-enable for instruction-level stepping.

    In ``free`` mode the core always ticks.  In ``step`` mode it ticks while
    retirements are still owed; each retirement pays one off.
    """

    def __init__(self, mode: str = "free", pending: int = 0):
        self.mode = mode
        self.pending = pending

    def enabled(self) -> bool:
        return clock_enable_gate(self.mode, self.pending)

    def step(self, n: int = 1) -> None:
        self.mode = "step"
        self.pending += n

    def retired(self) -> None:
        if self.mode == "step" and self.pending > 0:
            self.pending -= 1


def clock_enable_gate(run_mode: str, pending_steps: int) -> bool:
    if run_mode == "free":
        return True
    if run_mode == "step":
        return pending_steps > 0
    raise ValueError(f"unknown run mode {run_mode!r}")
