import io
import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rv32pipe.bus import (ButtonScript, ClockGate, MemoryMap, SimFault, SocBus, UartSink,
                          clock_enable_gate)

UART, GPIO, EXIT = 0x10000000, 0x10001000, 0x10002000


def test_little_endian_byte_zero():
    bus = SocBus()
    bus.write(0x100, 4, 0xDEADBEEF)
    assert bus.read(0x100, 1) == 0xEF
    assert bus.read(0x102, 2) == 0xDEAD


def test_uart_status_and_tx():
    sink = UartSink()
    bus = SocBus(uart=sink)
    assert bus.read(UART + 4, 4) == 1
    bus.write(UART, 4, 0x41)
    bus.write(UART, 4, 0x142)  # only the low byte is sent
    assert bytes(sink.data) == b"AB"


def test_uart_mirrors_to_streams():
    out = io.BytesIO()
    sink = UartSink([out])
    bus = SocBus(uart=sink)
    for b in b"hi\n":
        bus.write(UART, 4, b)
    assert out.getvalue() == b"hi\n"
    assert sink.drain() == b"hi\n"
    assert sink.drain() == b""


def test_uart_rx():
    bus = SocBus(uart_input=b"ok")
    assert bus.read(UART + 0xC, 4) == 1
    assert bus.read(UART + 8, 4) == ord("o")
    assert bus.read(UART + 8, 4) == ord("k")
    assert bus.read(UART + 0xC, 4) == 0
    assert bus.read(UART + 8, 4) == 0


def test_leds_latch_low_byte():
    bus = SocBus()
    bus.write(GPIO, 4, 0x1FF)
    assert bus.leds == 0xFF


def test_read_only_writes_warn(caplog):
    bus = SocBus()
    with caplog.at_level(logging.WARNING):
        bus.write(UART + 4, 4, 0)
        bus.write(GPIO + 4, 4, 0x3F)
    assert len(caplog.records) == 2
    assert bus.read(UART + 4, 4) == 1


def test_sim_exit():
    bus = SocBus()
    assert bus.exit_code is None
    bus.write(EXIT, 4, 0)
    assert bus.exit_code == 0


def test_unmapped_halts():
    bus = SocBus()
    with pytest.raises(SimFault):
        bus.read(0x20000000, 4)
    with pytest.raises(SimFault):
        bus.write(0x20000000, 4, 0)
    with pytest.raises(SimFault):
        bus.fetch(UART)
    # devices are word-wide registers
    with pytest.raises(SimFault):
        bus.write(UART, 1, 0x41)
    assert not bus.is_mapped(UART, 1)
    assert bus.is_mapped(UART, 4) and bus.is_mapped(0, 1)


def test_buttons_follow_script():
    script = ButtonScript.parse("10 01\n# comment\n20 1f\n30 00 R\n")
    bus = SocBus(buttons=script)
    values = {}
    for cycle in (0, 9, 10, 19, 20, 35):
        bus.cycle = cycle
        values[cycle] = bus.read(GPIO + 4, 4)
    assert values == {0: 0, 9: 0, 10: 0x01, 19: 0x01, 20: 0x1F, 35: 0x20}
    assert script.reset_at(30) and not script.reset_at(31)


@pytest.mark.parametrize("text", ["10", "10 zz", "10 1 X", "20 1\n10 2", "5 40"])
def test_button_script_errors(text):
    with pytest.raises(ValueError):
        ButtonScript.parse(text)


def test_memmap_file(tmp_path):
    p = tmp_path / "map.txt"
    p.write_text("# board\nram_size = 0x10000\nuart_base=0x20000000\n")
    m = MemoryMap.from_file(p)
    assert m.ram_size == 0x10000 and m.uart_base == 0x20000000
    assert m.gpio_base == GPIO


@pytest.mark.parametrize("text", ["ram_size=3000", "uart_base=0x100", "nonsense=1", "ram_size"])
def test_memmap_file_errors(tmp_path, text):
    p = tmp_path / "map.txt"
    p.write_text(text)
    with pytest.raises(ValueError):
        MemoryMap.from_file(p)


def test_clock_gate():
    assert clock_enable_gate("free", 0)
    assert clock_enable_gate("step", 1)
    assert not clock_enable_gate("step", 0)
    g = ClockGate()
    g.step(2)
    assert g.enabled()
    g.retired()
    g.retired()
    assert not g.enabled()


# --- properties -----------------------------------------------------------

sizes = st.sampled_from([1, 2, 4])


@given(st.lists(st.tuples(st.integers(0, 0x1FFF), sizes, st.integers(0, 0xFFFFFFFF)),
                min_size=1, max_size=40))
def test_read_after_write(ops):
    bus = SocBus()
    for addr, size, value in ops:
        addr &= ~(size - 1)
        bus.write(addr, size, value)
        assert bus.read(addr, size) == value & ((1 << 8 * size) - 1)


@given(st.integers(0, 0x7FF), st.integers(0, 0xFFFFFFFF))
def test_endianness(index, value):
    bus = SocBus()
    addr = 4 * index
    bus.write(addr, 4, value)
    assembled = sum(bus.read(addr + i, 1) << (8 * i) for i in range(4))
    assert assembled == value == bus.read(addr, 4)
    halves = bus.read(addr, 2) | bus.read(addr + 2, 2) << 16
    assert halves == value


@given(st.binary(max_size=64))
def test_uart_ordering(payload):
    sink = UartSink()
    bus = SocBus(uart=sink)
    for b in payload:
        bus.write(UART, 4, b)
    assert bytes(sink.data) == payload


@given(st.integers(0, 0x7FFF), sizes, st.integers(0, 0xFFFFFFFF))
def test_fetch_coherence(addr, size, value):
    bus = SocBus()
    addr &= ~(size - 1)
    bus.write(addr, size, value)
    word_addr = addr & ~3
    shift = 8 * (addr - word_addr)
    assert (bus.fetch(word_addr) >> shift) & ((1 << 8 * size) - 1) == value & ((1 << 8 * size) - 1)
