"""Command line: run, diff (lockstep), debug (REPL) and stats."""
from __future__ import annotations

import argparse
import sys
from contextlib import ExitStack
from pathlib import Path

from . import fuzz
from .bus import ButtonScript, MemoryMap, SimFault, UartSink
from .harness import (EXIT_BUDGET, EXIT_DIVERGENCE, EXIT_OK, EXIT_SIMFAULT, EXIT_USAGE,
                      Options, Simulation)
from .loader import FORMATS, ImageError, LoadedImage, load_image
from .lockstep import lockstep
from .report import CpiRecorder, render
from .repl import Debugger, run_script
from .stats import StatsReport, compute_dmips, cpi
from .trace import TraceWriter, format_event


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int(text: str) -> int:
    return int(text, 0)


def _image_args(p: argparse.ArgumentParser, image_required: bool = True) -> None:
    p.add_argument("--image", required=image_required, help="program file")
    p.add_argument("--format", choices=FORMATS, default="bin")
    p.add_argument("--base", type=_int, default=0, help="load address for bin/hex images")
    p.add_argument("--max-cycles", type=_int, default=10_000_000)
    p.add_argument("--memmap", help="key=value file overriding the address map")
    p.add_argument("--fence-nop", action="store_true", help="decode FENCE as a no-op")
    p.add_argument("--unmapped-trap", action="store_true",
                   help="unmapped accesses trap (cause 1/5/7) instead of halting")
    p.add_argument("--buttons", help="button script: '<cycle> <hex>[ R]' per line")
    p.add_argument("--uart-in", help="bytes fed to UART RXDATA")
    p.add_argument("--uart-out", help="copy UART output to this file")
    p.add_argument("--no-uart-echo", action="store_true", help="do not echo UART to stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rv32pipe", description="RV32I pipeline and golden-core simulator")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a program on one core")
    run.add_argument("--core", choices=("golden", "pipeline"), default="pipeline")
    _image_args(run)
    run.add_argument("--trace", help="write one line per retirement ('-' for stdout)")
    run.add_argument("--dhrystone-iters", type=_int, help="iterations, for DMIPS/MHz")
    run.add_argument("--stats-out", help="also write the key=value stats here")
    run.add_argument("--report-dir", help="write stats.txt and cycles.png here")

    diff = sub.add_parser("diff", help="lockstep golden vs pipeline")
    _image_args(diff, image_required=False)
    diff.add_argument("--strict-instret", action="store_true",
                      help="compare instret/minstret reads too")
    diff.add_argument("--random", type=_int, metavar="N",
                      help="instead of --image, check N generated programs")
    diff.add_argument("--seed", type=_int, default=0, help="first seed for --random")

    dbg = sub.add_parser("debug", help="step debugger")
    dbg.add_argument("--core", choices=("golden", "pipeline"), default="pipeline")
    _image_args(dbg)
    dbg.add_argument("--script", help="read commands from this file instead of the terminal")

    st = sub.add_parser("stats", help="CPI and DMIPS/MHz from raw counts")
    st.add_argument("--cycles", type=_int, required=True)
    st.add_argument("--instructions", type=_int, required=True)
    st.add_argument("--dhrystone-iters", type=_int)
    return ap


def _options(args) -> Options:
    try:
        memmap = MemoryMap.from_file(args.memmap) if args.memmap else MemoryMap()
        buttons = ButtonScript.load(args.buttons) if args.buttons else ButtonScript()
        uart_in = Path(args.uart_in).read_bytes() if args.uart_in else b""
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return Options(memmap=memmap, fence_nop=args.fence_nop,
                   unmapped="trap" if args.unmapped_trap else "halt",
                   max_cycles=args.max_cycles, buttons=buttons, uart_input=uart_in)


def _image(args, opts: Options) -> LoadedImage:
    try:
        image = load_image(args.image, args.format, args.base)
        image.check(opts.memmap)
    except (OSError, ImageError) as exc:
        raise UsageError(str(exc)) from None
    return image


def report_fault(fault: SimFault, out=None) -> None:
    out = out or sys.stderr
    pc = "?" if fault.pc is None else f"0x{fault.pc:08x}"
    out.write(f"SimFault: {fault}\n  pc={pc} cycle={fault.cycle}\n")
    out.write(f"  last {len(fault.history)} retirements:\n")
    for ev in fault.history:
        out.write(f"    {format_event(ev)}\n")


def _exit_status(sim: Simulation) -> int:
    if sim.halt_reason == "budget":
        return EXIT_BUDGET
    if sim.halt_reason == "exit":
        return sim.exit_code & 0xFF
    return EXIT_OK


def cmd_run(args) -> int:
    opts = _options(args)
    image = _image(args, opts)
    with ExitStack() as stack:
        outs = [] if args.no_uart_echo else [sys.stdout.buffer]
        if args.uart_out:
            outs.append(stack.enter_context(open(args.uart_out, "wb")))
        uart = UartSink(outs)
        sim = Simulation(args.core, image, opts, uart)
        if args.trace:
            out = sys.stdout if args.trace == "-" else stack.enter_context(open(args.trace, "w"))
            sim.listeners.append(TraceWriter(out, opts.fence_nop))
        recorder = None
        if args.report_dir:
            recorder = CpiRecorder()
            sim.listeners.append(recorder)
        try:
            sim.run()
        except SimFault as fault:
            sys.stdout.flush()
            report_fault(fault)
            return EXIT_SIMFAULT
        finally:
            sys.stdout.flush()
        stats = sim.stats(args.dhrystone_iters)
        if uart.data and not uart.data.endswith(b"\n") and not args.no_uart_echo:
            sys.stdout.write("\n")
        text = stats.format()
        sys.stdout.write(text)
        if args.stats_out:
            Path(args.stats_out).write_text(text)
        if recorder is not None:
            out_dir = Path(args.report_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "stats.txt").write_text(text)
            render(stats, recorder.samples, out_dir / "cycles.png")
    return _exit_status(sim)


def cmd_diff(args) -> int:
    opts = _options(args)
    if args.random is not None:
        if args.image:
            raise UsageError("--random and --image are exclusive")
        for seed in range(args.seed, args.seed + args.random):
            prog = fuzz.generate(seed, memmap=opts.memmap)
            result = lockstep(prog.image, opts, args.strict_instret)
            if not result:
                print(f"result=divergence\nseed={seed}")
                print(result.describe())
                return EXIT_DIVERGENCE
        print(f"result=ok\nprograms={args.random}\nfirst_seed={args.seed}")
        return EXIT_OK
    if not args.image:
        raise UsageError("diff needs --image or --random N")
    result = lockstep(_image(args, opts), opts, args.strict_instret)
    if not result:
        print("result=divergence")
        print(result.describe())
        return EXIT_DIVERGENCE
    print(f"result=ok\nretired={result.retired}\nhalt_reason={result.halt_reason}\n"
          f"golden_cycles={result.golden_cycles}\npipeline_cycles={result.pipeline_cycles}")
    if result.halt_reason == "budget":
        return EXIT_BUDGET
    if result.halt_reason == "fault":
        return EXIT_SIMFAULT
    golden, _ = result.sims
    if result.halt_reason == "exit":
        return golden.exit_code & 0xFF
    return EXIT_OK


def cmd_debug(args) -> int:
    opts = _options(args)
    image = _image(args, opts)
    outs = [] if args.no_uart_echo else [sys.stdout.buffer]
    with ExitStack() as stack:
        if args.uart_out:
            outs.append(stack.enter_context(open(args.uart_out, "wb")))
        sim = Simulation(args.core, image, opts, UartSink(outs))
        if args.script:
            try:
                script = Path(args.script).read_text()
            except OSError as exc:
                raise UsageError(str(exc)) from None
            run_script(sim, script, sys.stdout)
        else:
            Debugger(sim).cmdloop(intro="type 'help' for commands")
    return EXIT_OK


def cmd_stats(args) -> int:
    try:
        cpi(args.cycles, args.instructions)
        if args.dhrystone_iters is not None:
            compute_dmips(args.dhrystone_iters, args.cycles)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = StatsReport("counts", args.cycles, args.instructions,
                         dhrystone_iters=args.dhrystone_iters)
    keep = {"cycles", "instructions", "cpi", "dhrystone_iters", "dmips_per_mhz", "dmips_formula"}
    sys.stdout.write("".join(f"{k}={v}\n" for k, v in report.items() if k in keep))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "diff": cmd_diff, "debug": cmd_debug, "stats": cmd_stats}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"rv32pipe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
