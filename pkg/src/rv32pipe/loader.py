"""Program images: flat binary, $readmemh hex, and RV32 ELF executables."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

from .bus import MemoryMap, SocBus

FORMATS = ("bin", "hex", "elf")

EM_RISCV = 243
PT_LOAD = 1


class ImageError(ValueError):
    pass


@dataclass
class LoadedImage:
    segments: list[tuple[int, bytes]]
    entry_pc: int
    format: str

    def check(self, memmap: MemoryMap) -> None:
        lo, hi = memmap.ram_base, memmap.ram_base + memmap.ram_size
        spans = sorted((base, base + len(data)) for base, data in self.segments if data)
        for start, end in spans:
            if start < lo or end > hi:
                raise ImageError(f"segment 0x{start:08x}-0x{end:08x} lies outside RAM "
                                 f"0x{lo:08x}-0x{hi:08x}")
        for (_, end), (start, _) in zip(spans, spans[1:]):
            if start < end:
                raise ImageError(f"segments overlap at 0x{start:08x}")

    def install(self, bus: SocBus) -> None:
        self.check(bus.map)
        for base, data in self.segments:
            bus.load_bytes(base, data)

    @classmethod
    def from_words(cls, words, base: int = 0, data: dict[int, bytes] | None = None) -> "LoadedImage":
        """In-memory image from instruction words (plus optional extra segments)."""
        code = b"".join((w & 0xFFFFFFFF).to_bytes(4, "little") for w in words)
        segments = [(base, code)] + sorted((data or {}).items())
        return cls(segments, base, "words")


def parse_hex(text: str, base: int = 0, source: str = "<hex>") -> LoadedImage:
    """$readmemh-style text: one 32-bit word per token, ``@index`` sets the word index."""
    chunks: dict[int, bytearray] = {}
    index = 0
    start = 0
    cur = chunks.setdefault(start, bytearray())
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("//", 1)[0]
        for tok in line.split():
            tok = tok.replace("_", "")
            try:
                if tok.startswith("@"):
                    index = int(tok[1:], 16)
                    start = index
                    cur = chunks.setdefault(start, bytearray())
                    continue
                value = int(tok, 16)
            except ValueError:
                raise ImageError(f"{source}:{lineno}: bad hex token {tok!r}") from None
            if not 0 <= value <= 0xFFFFFFFF or len(tok) > 8:
                raise ImageError(f"{source}:{lineno}: {tok!r} does not fit 32 bits")
            cur += value.to_bytes(4, "little")
            index += 1
    segments = [(base + 4 * s, bytes(d)) for s, d in sorted(chunks.items()) if d]
    return LoadedImage(segments, base, "hex")


def parse_elf(blob: bytes, source: str = "<elf>") -> LoadedImage:
    if len(blob) < 52 or blob[:4] != b"\x7fELF":
        raise ImageError(f"{source}: not an ELF file")
    if blob[4] != 1:
        raise ImageError(f"{source}: not ELFCLASS32")
    if blob[5] != 1:
        raise ImageError(f"{source}: not little-endian")
    (e_type, e_machine, _version, e_entry, e_phoff, _shoff, _flags, _ehsize,
     e_phentsize, e_phnum) = struct.unpack_from("<HHIIIIIHHH", blob, 16)
    if e_machine != EM_RISCV:
        raise ImageError(f"{source}: e_machine {e_machine} is not RISC-V")
    if e_type != 2:
        raise ImageError(f"{source}: not an executable (e_type {e_type})")
    segments = []
    for i in range(e_phnum):
        off = e_phoff + i * e_phentsize
        if off + 32 > len(blob):
            raise ImageError(f"{source}: program header {i} truncated")
        p_type, p_offset, _vaddr, p_paddr, p_filesz, p_memsz, _flags, _align = \
            struct.unpack_from("<IIIIIIII", blob, off)
        if p_type != PT_LOAD or p_memsz == 0:
            continue
        if p_offset + p_filesz > len(blob):
            raise ImageError(f"{source}: segment {i} extends past end of file")
        data = blob[p_offset:p_offset + p_filesz] + bytes(p_memsz - p_filesz)
        segments.append((p_paddr, data))
    return LoadedImage(segments, e_entry, "elf")


def load_image(path: str | Path, fmt: str, base: int = 0, bus: SocBus | None = None) -> LoadedImage:
    """Parse a program file and, when a bus is given, copy it into RAM."""
    path = Path(path)
    if fmt == "bin":
        image = LoadedImage([(base, path.read_bytes())], base, "bin")
    elif fmt == "hex":
        image = parse_hex(path.read_text(), base, str(path))
    elif fmt == "elf":
        image = parse_elf(path.read_bytes(), str(path))
    else:
        raise ImageError(f"unknown image format {fmt!r}; expected one of {FORMATS}")
    if bus is not None:
        image.install(bus)
    return image
