from rv32pipe import fuzz
from rv32pipe.harness import Simulation
from rv32pipe.isa import Kind


def test_deterministic():
    assert fuzz.generate(11).words == fuzz.generate(11).words


def test_length_bounds():
    for seed in range(50):
        prog = fuzz.generate(seed)
        assert len(prog) <= fuzz.MAX_LENGTH
    assert len(fuzz.generate(1, length=10_000)) <= fuzz.MAX_LENGTH


def test_all_kinds_drawn():
    kinds = set()
    for seed in range(60):
        kinds |= fuzz.generate(seed).kinds
    assert kinds == set(Kind)


def test_programs_terminate_without_budget():
    for seed in range(30):
        sim = Simulation("golden", fuzz.generate(seed).image)
        assert sim.run() in ("exit", "self_loop")
