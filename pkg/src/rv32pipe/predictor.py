"""2-bit saturating-counter branch predictor with a direct-mapped target buffer."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Counter2(enum.IntEnum):
    STRONG_NOT_TAKEN = 0
    WEAK_NOT_TAKEN = 1
    WEAK_TAKEN = 2
    STRONG_TAKEN = 3

    @property
    def predicts_taken(self) -> bool:
        return self >= Counter2.WEAK_TAKEN


def counter_update(c: Counter2, actually_taken: bool) -> Counter2:
    if actually_taken:
        return Counter2(min(c + 1, Counter2.STRONG_TAKEN))
    return Counter2(max(c - 1, Counter2.STRONG_NOT_TAKEN))


@dataclass(slots=True)
class Entry:
    valid: bool = False
    tag: int = 0
    target: int = 0
    counter: Counter2 = Counter2.WEAK_TAKEN


@dataclass
class PredictorState:
    """Table of ``2**index_bits`` entries indexed by ``(pc >> 2) % 2**index_bits``.

    The tag is every pc bit above the index, so only the exact pc that
    trained an entry can hit it.  Entries are allocated on taken outcomes
    only, starting at WEAK_TAKEN.
    """

    index_bits: int = 6
    entries: list[Entry] = field(default_factory=list)
    hits: int = 0
    misses: int = 0
    mispredicts: int = 0

    def __post_init__(self) -> None:
        if not self.entries:
            self.entries = [Entry() for _ in range(1 << self.index_bits)]

    @property
    def trained(self) -> int:
        return self.hits + self.misses

    @property
    def accuracy(self) -> float:
        if self.trained == 0:
            return 1.0
        return 1.0 - self.mispredicts / self.trained

    def slot(self, pc: int) -> tuple[int, int]:
        word = pc >> 2
        return word & ((1 << self.index_bits) - 1), word >> self.index_bits

    def clear(self) -> None:
        """Invalidate every entry; statistics are kept."""
        self.entries = [Entry() for _ in range(1 << self.index_bits)]

    def dump(self) -> list[str]:
        lines = []
        for i, e in enumerate(self.entries):
            if e.valid:
                pc = ((e.tag << self.index_bits) | i) << 2
                lines.append(f"[{i:3d}] pc=0x{pc:08x} target=0x{e.target:08x} "
                             f"{e.counter.name.lower()}")
        return lines


def predict(p: PredictorState, pc: int) -> tuple[bool, int]:
    idx, tag = p.slot(pc)
    e = p.entries[idx]
    if e.valid and e.tag == tag and e.counter >= Counter2.WEAK_TAKEN:
        return True, e.target
    return False, (pc + 4) & 0xFFFFFFFF


def train(p: PredictorState, pc: int, actually_taken: bool, actual_target: int,
          was_mispredicted: bool) -> PredictorState:
    """Update with one resolved outcome; mutates and returns ``p``."""
    idx, tag = p.slot(pc)
    e = p.entries[idx]
    if e.valid and e.tag == tag:
        p.hits += 1
        e.counter = counter_update(e.counter, actually_taken)
        if actually_taken:
            e.target = actual_target
    else:
        p.misses += 1
        if actually_taken:
            p.entries[idx] = Entry(True, tag, actual_target, Counter2.WEAK_TAKEN)
    if was_mispredicted:
        p.mispredicts += 1
    return p
