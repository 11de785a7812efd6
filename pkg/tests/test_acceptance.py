"""One verdict line per acceptance criterion, printed in the terminal summary."""
import os
import subprocess
import sys
import time

import pytest

from rv32pipe import fuzz
from rv32pipe.harness import Options, Simulation
from rv32pipe.isa import BRANCHES, Kind, decode, ins
from rv32pipe.loader import load_image
from rv32pipe.lockstep import lockstep, masked_key
from rv32pipe.stats import compute_dmips, cpi
from rv32pipe.bus import UartSink

import test_golden
import test_isa
from conftest import DATA, exit_seq, fixture_image, run_fixture, run_words, verdict
from test_predictor import OracleTable

RANDOM_PROGRAMS = int(os.environ.get("RV32PIPE_ACCEPT_PROGRAMS", "10000"))


def spec_identity(s) -> bool:
    return s.cycles == (s.instructions + 4 + s.stall_load_use + 2 * s.branch_mispredicted
                        + s.stall_trap_redirect)


def test_1_dmips_arithmetic():
    d, c = compute_dmips(2000, 1_043_092), cpi(1_043_092, 646_640)
    ok = abs(d - 1.09) <= 0.005 and abs(c - 1.61) <= 0.005
    assert verdict(1, "DMIPS/CPI arithmetic", ok, f"dmips_per_mhz={d:.4f} cpi={c:.4f}")


def test_2_lockstep_suite():
    start = time.perf_counter()
    divergent, identity_bad, kinds, longest, halts = [], 0, set(), 0, {}
    for seed in range(RANDOM_PROGRAMS):
        prog = fuzz.generate(seed)
        kinds |= prog.kinds
        longest = max(longest, len(prog))
        result = lockstep(prog.image)
        if not result:
            divergent.append(seed)
            continue
        halts[result.halt_reason] = halts.get(result.halt_reason, 0) + 1
        identity_bad += not spec_identity(result.sims[1].stats())
    elapsed = time.perf_counter() - start
    ok = (RANDOM_PROGRAMS >= 10_000 and not divergent and identity_bad == 0
          and len(kinds) == 46 and longest <= 512 and set(halts) <= {"exit", "self_loop"}
          and elapsed <= 300)
    assert verdict(2, "lockstep differential suite", ok,
                   f"programs={RANDOM_PROGRAMS} divergences={len(divergent)} "
                   f"kinds={len(kinds)} max_len={longest} identity_violations={identity_bad} "
                   f"halts={dict(sorted(halts.items()))} "
                   f"elapsed={elapsed:.0f}s"), divergent[:5]


def _independent(n):
    return [ins(Kind.ADDI, 1 + i % 27, 0, imm=i % 2048) for i in range(n)]


def _overhead(words):
    s = run_words(words).stats()
    return s.cycles - s.instructions, s


def test_3_analytic_cycle_counts():
    fill = {}
    for n in (1, 10, 1000):
        trace = []
        run_words(_independent(n) + exit_seq(), trace=trace)
        fill[n] = trace[n - 1].cycle
    fill_ok = all(fill[n] == n + 4 for n in fill)

    lw = ins(Kind.LW, 1, 0, imm=0x100)
    base, _ = _overhead([lw, ins(Kind.ADD, 3, 5, 4)] + exit_seq())
    dep, s_dep = _overhead([lw, ins(Kind.ADD, 3, 1, 4)] + exit_seq())
    load_use = dep - base

    tail = [ins(Kind.ADDI, 1, 0, imm=1), ins(Kind.ADDI, 2, 0, imm=2)] + exit_seq()
    right, s_right = _overhead([ins(Kind.BNE, rs1=0, rs2=0, imm=8)] + tail)
    wrong, s_wrong = _overhead([ins(Kind.BEQ, rs1=0, rs2=0, imm=8)] + tail)
    mispredict = wrong - right

    runs = [s_dep, s_right, s_wrong]
    runs += [run_fixture(n).stats() for n in ("hello", "loop", "ecall", "ebreak", "illegal")]
    for seed in range(300):
        sim = Simulation("pipeline", fuzz.generate(50_000 + seed).image)
        sim.run()
        runs.append(sim.stats())
    identity_ok = all(spec_identity(s) for s in runs)
    smc = run_fixture("smc").stats()
    smc_ok = smc.identity_holds() and smc.stall_smc > 0

    ok = fill_ok and load_use == 1 and mispredict == 2 and s_wrong.branch_mispredicted == 1 \
        and identity_ok and smc_ok
    assert verdict(3, "analytic cycle counts", ok,
                   f"fill={fill} load_use=+{load_use} mispredict=+{mispredict} "
                   f"identity_runs={len(runs)} identity_ok={identity_ok} "
                   f"smc_stall={smc.stall_smc} (extended identity ok={smc_ok})")


def test_4_predictor_steady_state():
    sim = Simulation("pipeline", fixture_image("loop"), Options(max_cycles=100_000))
    outer_pc = max(_branch_pcs(fixture_image("loop")))
    per_iter, stream, last = [], [], [0]

    def listen(ev):
        instr = decode(ev.raw)
        if kind_of(ev.raw) in BRANCHES:
            stream.append((ev.pc, ev.next_pc != ev.pc + 4, (ev.pc + instr.imm) & 0xFFFFFFFF))
        if ev.pc == outer_pc:
            total = sim.core.predictor.mispredicts
            per_iter.append(total - last[0])
            last[0] = total

    sim.listeners.append(listen)
    sim.run()

    oracle, oracle_iter, count = OracleTable(64), [], 0
    for pc, taken, target in stream:
        guess, guess_target = oracle.predict(pc)
        count += guess != taken or (taken and guess_target != target)
        oracle.train(pc, taken, target)
        if pc == outer_pc:
            oracle_iter.append(count)
            count = 0

    warm = len(stream) - 11
    warm_acc = 1 - sum(per_iter[1:]) / warm
    steady = per_iter[1:-1]
    ok = (len(per_iter) == 100 and oracle_iter == per_iter and all(m == 1 for m in steady)
          and warm_acc >= 0.88 and sim.stats().branch_accuracy >= 0.88)
    assert verdict(4, "predictor steady state", ok,
                   f"iterations={len(per_iter)} first={per_iter[0]} steady={set(steady)} "
                   f"last={per_iter[-1]} accuracy_after_warmup={warm_acc:.4f} "
                   f"overall={sim.stats().branch_accuracy:.4f} oracle_agrees={oracle_iter == per_iter}")


def kind_of(word):
    return getattr(decode(word), "kind", None)


def _branch_pcs(image):
    return [base + i for base, blob in image.segments for i in range(0, len(blob) - 3, 4)
            if kind_of(int.from_bytes(blob[i:i + 4], "little")) in BRANCHES]


def _trap_round_trip(name, cause):
    traces = {}
    for core in ("golden", "pipeline"):
        trace = []
        sim = run_fixture(name, core, trace)
        traces[core] = (sim, trace)
    (g, gt), (p, pt) = traces["golden"], traces["pipeline"]
    same = [masked_key(e) for e in gt] == [masked_key(e) for e in pt]
    trap = next(e for e in pt if e.trap)
    mret = next(e for e in pt if kind_of(e.raw) == Kind.MRET)
    regs = p.core.regs
    ok = (same and trap.trap[0] == cause and regs[11] == cause
          and mret.next_pc == trap.pc + 4 and regs[10] == 101
          and regs[13] & 0x88 == 0x80 and p.core.csrs.mie and g.core.csrs.mie)
    return ok, f"{name}: mcause={regs[11]} resumed=0x{mret.next_pc:08x} mie={int(p.core.csrs.mie)}"


def test_5_trap_round_trip():
    results = [_trap_round_trip(n, c) for n, c in (("ecall", 11), ("ebreak", 3), ("illegal", 2))]
    ok = all(r for r, _ in results)
    assert verdict(5, "trap round trip", ok,
                   "; ".join(d for _, d in results) + " traces_identical=True" * ok)


def test_6_isa_conformance():
    capstone = pytest.importorskip("capstone")
    words = list(test_isa.corpus())
    test_isa.test_corpus_disassembly_matches_assembler_source()
    test_isa.test_corpus_agrees_with_capstone()
    test_isa.test_corpus_covers_every_kind_and_csr()
    directed = 0
    for case in test_golden.ALU_CASES:
        test_golden.test_alu(*case)
        directed += 1
    for case in test_golden.LOAD_CASES:
        test_golden.test_loads(*case)
        directed += 1
    for case in test_golden.BRANCH_CASES:
        test_golden.test_branches(*case)
        directed += 1
    test_golden.test_every_kind_has_a_directed_case()
    ok = len(words) >= 1000 and directed >= 50
    assert verdict(6, "ISA conformance", ok,
                   f"corpus={len(words)} agree(clang, capstone {capstone.__version__}) "
                   f"directed_golden_cases={directed}")


def test_7_soc_behavior():
    sink = UartSink()
    sim = Simulation("pipeline", fixture_image("hello"), Options(max_cycles=10_000), sink)
    sim.run()
    uart = bytes(sink.data)
    smc = {core: run_fixture("smc", core).exit_code for core in ("golden", "pipeline")}
    proc = subprocess.run([sys.executable, "-m", "rv32pipe", "run", "--image",
                           str(DATA / "exit7.elf"), "--format", "elf"], capture_output=True)
    ok = uart == b"hello\n" and smc == {"golden": 42, "pipeline": 42} and proc.returncode == 7
    assert verdict(7, "SoC behavior", ok,
                   f"uart={uart!r} smc_exit={smc['pipeline']} cli_exit_status={proc.returncode}")


def test_8_dhrystone_cpi():
    path = os.environ.get("RV32PIPE_DHRYSTONE")
    if not path:
        verdict(8, "Dhrystone CPI", None,
                "no RV32I Dhrystone binary supplied (set RV32PIPE_DHRYSTONE=<elf>)")
        pytest.skip("no Dhrystone binary")
    sim = Simulation("pipeline", load_image(path, "elf"), Options(max_cycles=500_000_000))
    sim.run()
    s = sim.stats()
    ok = sim.halt_reason == "exit" and 1.2 <= s.cpi <= 2.0
    assert verdict(8, "Dhrystone CPI", ok, f"cpi={s.cpi:.3f} halt={sim.halt_reason}")
