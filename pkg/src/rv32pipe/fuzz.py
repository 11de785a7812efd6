"""Random bounded programs for differential testing.

Register conventions inside generated programs:

* x1..x27  free for random instructions
* x28      loop counter (only written by loop templates)
* x29      data base pointer, every load/store goes through it
* x30      trap-handler and template scratch (deterministic, may be read)
* x31      sink for counter CSR reads; never read, its value is timing dependent

Control flow only goes forward except for counted loops whose bodies hold
no control transfers, so every program terminates.  Traps (misaligned
accesses and jumps, illegal words, ECALL/EBREAK, bad CSR accesses) land in
a handler at ``HANDLER`` that resumes after the faulting instruction.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import csr as C
from .bus import MemoryMap
from .isa import (ALU_IMM, ALU_REG, BRANCHES, CSR_KINDS, LOADS, SHIFT_IMM, STORES,
                  DecodedInstr, Kind, decode, ins)
from .loader import LoadedImage

HANDLER = 0x1000
DATA_BASE = 0x8000
DATA_SPAN = 2048
MAX_LENGTH = 512

FREE = list(range(1, 28))
LOOP, BASE, SCRATCH, SINK = 28, 29, 30, 31
SOURCES = list(range(0, 31))

RW_CSRS = [C.MSCRATCH, C.MEPC, C.MCAUSE, C.MTVAL, C.MSTATUS]
RO_CSRS = [C.MISA, C.MHARTID, C.MVENDORID, C.MARCHID, C.MIMPID]
COUNTERS = sorted(C.COUNTER_CSRS)
UNIMPLEMENTED = [0x7C0, 0x304, 0x344, 0xC01, 0x180]
ILLEGAL_WORDS = [0x00000000, 0xFFFFFFFF, 0x0FF0000F, 0x10500073, 0x4000D093 | (1 << 26),
                 0x00002063, 0x00003003, 0x00004073, 0x02000033]
MEM_SIZE = {Kind.LB: 1, Kind.LBU: 1, Kind.SB: 1, Kind.LH: 2, Kind.LHU: 2, Kind.SH: 2,
            Kind.LW: 4, Kind.SW: 4}


@dataclass
class Program:
    seed: int
    words: list[int]
    image: LoadedImage
    kinds: set[Kind] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.words)


class _Builder:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.recent: list[int] = []

    def src(self) -> int:
        # favour recently written registers to exercise forwarding and interlocks
        if self.recent and self.rng.random() < 0.6:
            return self.rng.choice(self.recent[-3:])
        return self.rng.choice(SOURCES)

    def dst(self) -> int:
        rd = 0 if self.rng.random() < 0.04 else self.rng.choice(FREE)
        self.recent.append(rd)
        return rd

    def offset(self, size: int) -> int:
        imm = self.rng.randrange(-DATA_SPAN, DATA_SPAN - 4)
        if self.rng.random() < 0.85:
            imm &= ~(size - 1)
        return imm

    def straight(self) -> int:
        """One instruction that never transfers control (it may trap)."""
        r = self.rng.random()
        rng = self.rng
        if r < 0.30:
            return ins(rng.choice(sorted(ALU_REG)), self.dst(), self.src(), self.src())
        if r < 0.45:
            return ins(rng.choice(sorted(ALU_IMM)), self.dst(), self.src(), imm=rng.randrange(-2048, 2048))
        if r < 0.52:
            return ins(rng.choice(sorted(SHIFT_IMM)), self.dst(), self.src(), imm=rng.randrange(32))
        if r < 0.56:
            return ins(rng.choice((Kind.LUI, Kind.AUIPC)), self.dst(),
                       imm=rng.randrange(-(1 << 19), 1 << 19) << 12)
        if r < 0.70:
            k = rng.choice(sorted(LOADS))
            return ins(k, self.dst(), BASE, imm=self.offset(MEM_SIZE[k]))
        if r < 0.80:
            k = rng.choice(sorted(STORES))
            return ins(k, rs1=BASE, rs2=self.src(), imm=self.offset(MEM_SIZE[k]))
        if r < 0.93:
            return self.csr()
        if r < 0.96:
            return rng.choice((ins(Kind.ECALL), ins(Kind.EBREAK)))
        return rng.choice(ILLEGAL_WORDS)

    def csr(self) -> int:
        rng = self.rng
        k = rng.choice(sorted(CSR_KINDS))
        imm_form = k in (Kind.CSRRWI, Kind.CSRRSI, Kind.CSRRCI)
        operand = rng.randrange(32) if imm_form else self.src()
        group = rng.random()
        if group < 0.45:
            csr, rd = rng.choice(RW_CSRS), self.dst()
        elif group < 0.60:
            csr, rd = rng.choice(RO_CSRS), self.dst()
        elif group < 0.75:
            csr, rd = C.MTVEC, self.dst()
            if imm_form:
                operand = 0
            k = Kind.CSRRSI if imm_form else Kind.CSRRS
            operand = 0
        elif group < 0.90:
            csr, rd = rng.choice(COUNTERS), rng.choice((0, SINK))
        else:
            csr, rd = rng.choice(UNIMPLEMENTED), self.dst()
        return ins(k, rd, operand, csr=csr)


def generate(seed: int, length: int | None = None, memmap: MemoryMap | None = None) -> Program:
    """A random terminating program of at most ``MAX_LENGTH`` instructions."""
    rng = random.Random(seed)
    b = _Builder(rng)
    if length is None:
        length = rng.randint(8, MAX_LENGTH)
    length = max(8, min(length, MAX_LENGTH))

    prologue = [ins(Kind.LUI, BASE, imm=DATA_BASE), ins(Kind.LUI, SCRATCH, imm=HANDLER),
                ins(Kind.CSRRW, 0, SCRATCH, csr=C.MTVEC)]
    for rd in rng.sample(FREE, rng.randint(3, 10)):
        prologue.append(ins(Kind.LW, rd, BASE, imm=rng.randrange(-DATA_SPAN, DATA_SPAN - 4) & ~3))

    # blocks are lists of items: ints, or (kind-tag, fields...) resolved at layout
    budget = length - len(prologue) - 2
    blocks: list[list] = []
    while budget > 0:
        r = rng.random()
        if r < 0.55 or budget < 6:
            n = min(budget, rng.randint(1, 6))
            blocks.append([b.straight() for _ in range(n)])
        elif r < 0.75:
            blocks.append([("branch",)])
        elif r < 0.83:
            blocks.append([("jal",)])
        elif r < 0.90:
            blocks.append([("jalr",)])
        elif r < 0.95:
            m = rng.randint(1, min(8, budget - 3))
            count = rng.randint(1, 12)
            body = [b.straight() for _ in range(m)]
            blocks.append([ins(Kind.ADDI, LOOP, 0, imm=count)] + body
                          + [ins(Kind.ADDI, LOOP, LOOP, imm=-1), ("loop", m + 1)])
        else:
            blocks.append([("mret",)])
        budget -= sum(_width(item) for item in blocks[-1])

    # layout
    starts = []
    pc = 4 * len(prologue)
    for blk in blocks:
        starts.append(pc)
        pc += 4 * sum(_width(item) for item in blk)
    end_pc = pc
    starts.append(end_pc)

    words = list(prologue)
    for i, blk in enumerate(blocks):
        for item in blk:
            here = 4 * len(words)
            if isinstance(item, int):
                words.append(item)
                continue
            target = rng.choice(starts[i + 1:i + 9])
            tag = item[0]
            if tag == "branch":
                off = target - here
                if rng.random() < 0.05:
                    off += 2
                words.append(ins(rng.choice(sorted(BRANCHES)), rs1=b.src(), rs2=b.src(), imm=off))
            elif tag == "jal":
                off = target - here
                if rng.random() < 0.05:
                    off += 2
                words.append(ins(Kind.JAL, b.dst(), imm=off))
            elif tag == "jalr":
                words.extend(_jalr(rng, b, here, target))
            elif tag == "loop":
                words.append(ins(Kind.BNE, rs1=LOOP, rs2=0, imm=-4 * item[1]))
            elif tag == "mret":
                off = target - here
                words += [ins(Kind.AUIPC, SCRATCH, imm=0), ins(Kind.ADDI, SCRATCH, SCRATCH, imm=off),
                          ins(Kind.CSRRW, 0, SCRATCH, csr=C.MEPC), ins(Kind.MRET)]
    assert 4 * len(words) == end_pc
    if rng.random() < 0.5:
        words += [ins(Kind.LUI, SCRATCH, imm=(memmap or MemoryMap()).sim_exit),
                  ins(Kind.SW, rs1=SCRATCH, rs2=rng.choice((0, 0, b.src())))]
    else:
        words += [ins(Kind.JAL, 0, imm=0)]

    handler = [ins(Kind.CSRRS, SCRATCH, 0, csr=C.MEPC), ins(Kind.ADDI, SCRATCH, SCRATCH, imm=4),
               ins(Kind.CSRRW, 0, SCRATCH, csr=C.MEPC), ins(Kind.MRET)]
    data = bytes(rng.getrandbits(8) for _ in range(2 * DATA_SPAN))
    image = LoadedImage.from_words(words, 0, {
        HANDLER: b"".join(w.to_bytes(4, "little") for w in handler),
        DATA_BASE - DATA_SPAN: data,
    })
    kinds = {d.kind for d in map(decode, words + handler) if isinstance(d, DecodedInstr)}
    return Program(seed, words, image, kinds)


def _width(item) -> int:
    if isinstance(item, int):
        return 1
    return {"branch": 1, "jal": 1, "jalr": 4, "loop": 1, "mret": 4}[item[0]]


def _jalr(rng: random.Random, b: _Builder, here: int, target: int) -> list[int]:
    """Four words ending in a JALR to ``target`` (padded with no-op adds)."""
    variant = rng.randrange(3)
    skew = 2 if rng.random() < 0.05 else rng.choice((0, 0, 1))  # bit0 is dropped, bit1 traps
    nop = ins(Kind.ADDI, 0, 0, imm=0)
    if variant == 0:
        return [nop, nop, nop, ins(Kind.JALR, b.dst(), 0, imm=target + skew)]
    base = rng.choice(FREE)
    if variant == 1:
        return [nop, nop, ins(Kind.AUIPC, base, imm=0),
                ins(Kind.JALR, b.dst(), base, imm=target - (here + 8) + skew)]
    # through memory: exercises a load-use interlock on the jump register
    slot = rng.randrange(-DATA_SPAN, DATA_SPAN - 4) & ~3
    return [ins(Kind.AUIPC, base, imm=0), ins(Kind.SW, rs1=BASE, rs2=base, imm=slot),
            ins(Kind.LW, base, BASE, imm=slot), ins(Kind.JALR, b.dst(), base, imm=target - here + skew)]
