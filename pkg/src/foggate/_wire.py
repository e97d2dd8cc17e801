"""Big-endian length-prefixed field helpers used by the packet and ledger codecs."""

import struct

_WIDTHS = {1: ">B", 2: ">H", 4: ">I", 8: ">Q"}


class FramingError(ValueError):
    pass


def pack_uint(value: int, width: int) -> bytes:
    try:
        return struct.pack(_WIDTHS[width], value)
    except struct.error as exc:
        raise FramingError(f"{value} does not fit in {width} bytes") from exc


def pack_field(data: bytes, width: int) -> bytes:
    return pack_uint(len(data), width) + data


class Reader:
    """Sequential strict reader; every accessor raises FramingError on short input."""

    def __init__(self, data: bytes):
        self._data = memoryview(bytes(data))
        self._pos = 0

    @property
    def position(self) -> int:
        return self._pos

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise FramingError(f"need {n} bytes at offset {self._pos}, have {self.remaining()}")
        out = bytes(self._data[self._pos:self._pos + n])
        self._pos += n
        return out

    def uint(self, width: int) -> int:
        return struct.unpack(_WIDTHS[width], self.take(width))[0]

    def field(self, width: int) -> bytes:
        return self.take(self.uint(width))

    def text(self, width: int) -> str:
        raw = self.field(width)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FramingError("field is not valid UTF-8") from exc

    def finish(self) -> None:
        if self.remaining():
            raise FramingError(f"{self.remaining()} trailing bytes")
