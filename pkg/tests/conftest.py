from __future__ import annotations

from pathlib import Path

import pytest

from rv32pipe.harness import Options, Simulation
from rv32pipe.isa import Kind, ins
from rv32pipe.loader import LoadedImage, load_image

DATA = Path(__file__).parent / "data"
SIM_EXIT = 0x10002000
UART = 0x10000000


def exit_seq(value_reg: int = 0, scratch: int = 31) -> list[int]:
    """lui scratch, SIM_EXIT; sw value_reg, 0(scratch)"""
    return [ins(Kind.LUI, scratch, imm=SIM_EXIT), ins(Kind.SW, rs1=scratch, rs2=value_reg)]


def run_words(words, core: str = "pipeline", data=None, opts: Options | None = None,
              trace: list | None = None) -> Simulation:
    sim = Simulation(core, LoadedImage.from_words(words, 0, data), opts or Options(max_cycles=100_000))
    if trace is not None:
        sim.listeners.append(trace.append)
    sim.run()
    return sim


def fixture_image(name: str) -> LoadedImage:
    return load_image(DATA / f"{name}.elf", "elf")


def run_fixture(name: str, core: str = "pipeline", trace: list | None = None,
                opts: Options | None = None) -> Simulation:
    sim = Simulation(core, fixture_image(name), opts or Options(max_cycles=1_000_000))
    if trace is not None:
        sim.listeners.append(trace.append)
    sim.run()
    return sim


@pytest.fixture(params=["golden", "pipeline"])
def core_kind(request) -> str:
    return request.param


# acceptance verdict lines, printed once after the run so capture never hides them
VERDICTS: list[str] = []


def verdict(number: int, name: str, ok: bool | None, detail: str) -> bool:
    word = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
    VERDICTS.append(f"{word} [{number}] {name}: {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
