import struct

import pytest

from rv32pipe.bus import MemoryMap, SocBus
from rv32pipe.loader import ImageError, LoadedImage, load_image, parse_elf, parse_hex

from conftest import DATA

FIXTURES = sorted(p.stem for p in DATA.glob("*.elf"))


def test_bin(tmp_path):
    p = tmp_path / "a.bin"
    p.write_bytes(bytes.fromhex("9300500013000000"))
    bus = SocBus()
    image = load_image(p, "bin", base=0x100, bus=bus)
    assert image.entry_pc == 0x100
    assert bus.read(0x100, 4) == 0x00500093


def test_hex_words_and_address_marker():
    image = parse_hex("// header\n00500093 00000013\n@10\nDEAD_BEEF // tail\n")
    bus = SocBus()
    image.install(bus)
    assert bus.read(0, 4) == 0x00500093 and bus.read(4, 4) == 0x13
    assert bus.read(0x40, 4) == 0xDEADBEEF


def test_hex_with_base():
    image = parse_hex("00000013\n", base=0x200)
    assert image.segments == [(0x200, bytes.fromhex("13000000"))]


@pytest.mark.parametrize("text, line", [("00000013\nxyz\n", 2), ("123456789\n", 1), ("@zz\n", 1)])
def test_hex_errors_carry_line(text, line):
    with pytest.raises(ImageError, match=f":{line}:"):
        parse_hex(text)


def test_image_outside_ram():
    image = LoadedImage([(0x1FFFC, b"\0" * 8)], 0, "bin")
    with pytest.raises(ImageError, match="outside RAM"):
        image.check(MemoryMap())


def test_overlapping_segments():
    image = LoadedImage([(0, b"\0" * 8), (4, b"\0" * 8)], 0, "bin")
    with pytest.raises(ImageError, match="overlap"):
        image.check(MemoryMap())


def _elf_header(**over):
    fields = dict(cls=1, data=1, e_type=2, machine=243, entry=0, phoff=52, phnum=0)
    fields.update(over)
    ident = b"\x7fELF" + bytes([fields["cls"], fields["data"], 1]) + b"\0" * 9
    return ident + struct.pack("<HHIIIIIHHHHHH", fields["e_type"], fields["machine"], 1,
                               fields["entry"], fields["phoff"], 0, 0, 52, 32,
                               fields["phnum"], 40, 0, 0)


@pytest.mark.parametrize("over, msg", [
    ({"cls": 2}, "ELFCLASS32"), ({"data": 2}, "little-endian"),
    ({"machine": 62}, "RISC-V"), ({"e_type": 1}, "executable")])
def test_elf_rejects(over, msg):
    with pytest.raises(ImageError, match=msg):
        parse_elf(_elf_header(**over))


def test_elf_rejects_garbage():
    with pytest.raises(ImageError, match="not an ELF"):
        parse_elf(b"hello")


def test_elf_truncated_segment():
    blob = _elf_header(phnum=1) + struct.pack("<IIIIIIII", 1, 84, 0, 0, 100, 100, 5, 4)
    with pytest.raises(ImageError, match="past end"):
        parse_elf(blob)


def test_elf_bss_zero_filled():
    payload = b"\x13\0\0\0"
    blob = _elf_header(phnum=1, entry=0x40) + struct.pack("<IIIIIIII", 1, 84, 0x40, 0x40, 4, 16, 5, 4)
    image = parse_elf(blob + payload)
    assert image.entry_pc == 0x40
    assert image.segments == [(0x40, payload + bytes(12))]


@pytest.mark.parametrize("name", FIXTURES)
def test_elf_fixture_matches_pyelftools(name):
    elffile = pytest.importorskip("elftools.elf.elffile")
    path = DATA / f"{name}.elf"
    ours = load_image(path, "elf")
    with open(path, "rb") as fh:
        ref = elffile.ELFFile(fh)
        assert ours.entry_pc == ref.header.e_entry
        expected = [(seg["p_paddr"], seg.data() + bytes(seg["p_memsz"] - seg["p_filesz"]))
                    for seg in ref.iter_segments()
                    if seg["p_type"] == "PT_LOAD" and seg["p_memsz"]]
    assert ours.segments == expected


def test_hello_fixture_has_data_segment():
    image = load_image(DATA / "hello.elf", "elf")
    bus = SocBus()
    image.install(bus)
    assert bus.dump(0x4000, 7) == b"hello\n\0"


def test_unknown_format(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"")
    with pytest.raises(ImageError):
        load_image(p, "srec")
