"""Subword tokenizer with byte fallback.

The decoder's output space and the biasing trie are both defined over the
token ids of a :class:`Vocabulary`.  Segmentation is greedy longest-match
from the left over the UTF-8 byte string; because every single byte value
has a vocabulary entry, ``encode`` is total and ``decode(encode(s)) == s``
byte-exactly for any text.

Vocabulary file format (UTF-8 TSV): one ``surface<TAB>id`` record per
line, ``#``-prefixed comment lines skipped.  Escape sequences in the
surface field: ``\\t``, ``\\n``, ``\\\\``, and ``\\xHH`` for raw byte
values that are not expressible as UTF-8 text (required for the byte
fallback entries 0x80..0xFF and for the tab/newline delimiters).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DataError

_HEX_DIGITS = "0123456789abcdefABCDEF"


def _parse_surface(text: str, line_no: int) -> bytes:
    """Decode the escaped surface field of a vocab line into raw bytes."""
    out = bytearray()
    i = 0
    while i < len(text):
        ch = text[i]
        if ch != "\\":
            out.extend(ch.encode("utf-8"))
            i += 1
            continue
        if i + 1 >= len(text):
            raise DataError(f"vocab line {line_no}: dangling escape in surface")
        nxt = text[i + 1]
        if nxt == "t":
            out.append(0x09)
            i += 2
        elif nxt == "n":
            out.append(0x0A)
            i += 2
        elif nxt == "\\":
            out.append(0x5C)
            i += 2
        elif nxt == "x":
            hexpart = text[i + 2 : i + 4]
            if len(hexpart) != 2 or any(c not in _HEX_DIGITS for c in hexpart):
                raise DataError(f"vocab line {line_no}: bad \\x escape in surface")
            out.append(int(hexpart, 16))
            i += 4
        else:
            raise DataError(f"vocab line {line_no}: unknown escape \\{nxt}")
    return bytes(out)


def escape_surface(surface: bytes) -> str:
    """Inverse of the surface-field parsing; used when writing vocab files."""
    parts: list[str] = []
    i = 0
    while i < len(surface):
        b = surface[i]
        if b == 0x09:
            parts.append("\\t")
            i += 1
        elif b == 0x0A:
            parts.append("\\n")
            i += 1
        elif b == 0x5C:
            parts.append("\\\\")
            i += 1
        elif 0x20 <= b < 0x7F:
            parts.append(chr(b))
            i += 1
        else:
            # Try to keep multi-byte UTF-8 sequences readable in the file.
            for j in (4, 3, 2):
                chunk = surface[i : i + j]
                if len(chunk) == j:
                    try:
                        ch = chunk.decode("utf-8")
                    except UnicodeDecodeError:
                        continue
                    if ch.isprintable():
                        parts.append(ch)
                        i += j
                        break
            else:
                parts.append(f"\\x{b:02x}")
                i += 1
    return "".join(parts)


@dataclass
class Vocabulary:
    """Immutable token inventory: dense ids 0..size-1, unique byte surfaces.

    Every single byte value 0..255 must have an entry so that encoding
    never fails.  Instances are safe for concurrent read-only use.
    """

    surfaces: list[bytes]
    surface_to_id: dict[bytes, int] = field(repr=False)
    _trie: dict = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.surfaces)

    def __len__(self) -> int:
        return len(self.surfaces)

    @classmethod
    def from_entries(cls, entries: list[tuple[int, bytes]]) -> "Vocabulary":
        """Build from (token_id, surface) pairs, validating all invariants."""
        seen_ids: dict[int, bytes] = {}
        seen_surfaces: dict[bytes, int] = {}
        for token_id, surface in entries:
            if token_id in seen_ids:
                raise DataError(f"duplicate id: {token_id}")
            if not surface:
                raise DataError(f"empty surface for id {token_id}")
            if surface in seen_surfaces:
                raise DataError(
                    f"duplicate surface {surface!r} (ids {seen_surfaces[surface]}"
                    f" and {token_id})"
                )
            seen_ids[token_id] = surface
            seen_surfaces[surface] = token_id
        size = len(entries)
        if set(seen_ids) != set(range(size)):
            missing = sorted(set(range(size)) - set(seen_ids))
            raise DataError(f"token ids not dense 0..{size - 1}; missing {missing[:5]}")
        surfaces = [seen_ids[i] for i in range(size)]
        covered = {s[0] for s in surfaces if len(s) == 1}
        if covered != set(range(256)):
            raise DataError("incomplete byte fallback")
        trie: dict = {}
        for token_id, surface in enumerate(surfaces):
            node = trie
            for b in surface:
                node = node.setdefault(b, {})
            node[-1] = token_id  # terminal marker
        return cls(surfaces=surfaces, surface_to_id=dict(seen_surfaces), _trie=trie)

    def encode(self, text: str) -> list[int]:
        """Greedy longest-match segmentation of ``text`` into token ids.

        Deterministic, total (byte fallback), and exactly invertible:
        ``decode(encode(text)) == text``.
        """
        data = text.encode("utf-8")
        ids: list[int] = []
        pos = 0
        n = len(data)
        while pos < n:
            node = self._trie
            best_id = -1
            best_len = 0
            i = pos
            while i < n:
                nxt = node.get(data[i])
                if nxt is None:
                    break
                node = nxt
                i += 1
                tid = node.get(-1)
                if tid is not None:
                    best_id = tid
                    best_len = i - pos
            # byte fallback guarantees best_len >= 1
            ids.append(best_id)
            pos += best_len
        return ids

    def decode(self, tokens: list[int]) -> str:
        """Concatenate token surfaces and decode as UTF-8.

        Inverse of :meth:`encode` on its outputs.  Arbitrary id sequences
        may not form valid UTF-8; invalid bytes become U+FFFD.
        """
        out = bytearray()
        for pos, tid in enumerate(tokens):
            if not 0 <= tid < len(self.surfaces):
                raise DataError(f"token id out of range at index {pos}: {tid}")
            out.extend(self.surfaces[tid])
        return out.decode("utf-8", errors="replace")


def load_vocabulary(path: str) -> Vocabulary:
    """Load a vocabulary from a TSV file (see module docstring for format)."""
    entries: list[tuple[int, bytes]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise DataError(
                    f"vocab line {line_no}: expected 2 fields, got {len(fields)}"
                )
            surface = _parse_surface(fields[0], line_no)
            try:
                token_id = int(fields[1])
            except ValueError:
                raise DataError(f"vocab line {line_no}: bad id {fields[1]!r}") from None
            if token_id < 0:
                raise DataError(f"vocab line {line_no}: negative id {token_id}")
            entries.append((token_id, surface))
    return Vocabulary.from_entries(entries)


def write_vocabulary(vocab: Vocabulary, path: str) -> None:
    """Write a vocabulary in the TSV format accepted by :func:`load_vocabulary`."""
    with open(path, "w", encoding="utf-8") as fh:
        for token_id, surface in enumerate(vocab.surfaces):
            fh.write(f"{escape_surface(surface)}\t{token_id}\n")


def byte_fallback_entries(start_id: int = 0) -> list[tuple[int, bytes]]:
    """The 256 single-byte entries, with ids start_id..start_id+255."""
    return [(start_id + b, bytes([b])) for b in range(256)]


def make_vocabulary(extra_surfaces: list[str], bytes_first: bool = False) -> Vocabulary:
    """Convenience constructor: ``extra_surfaces`` plus full byte fallback.

    Extra surfaces occupy the low ids (handy for small decoder output
    spaces); byte values already present as extras are not duplicated.
    """
    extras = [s.encode("utf-8") for s in extra_surfaces]
    extra_set = set(extras)
    byte_entries = [bytes([b]) for b in range(256) if bytes([b]) not in extra_set]
    ordered = byte_entries + extras if bytes_first else extras + byte_entries
    return Vocabulary.from_entries(list(enumerate(ordered)))
