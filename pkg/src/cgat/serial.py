"""Shared helpers for the binary dataset and checkpoint containers."""

from __future__ import annotations

import os
import struct
import tempfile


class FormatError(ValueError):
    """File is not a recognized container or is corrupted/truncated."""


class VersionError(FormatError):
    """File carries a recognized magic but an unsupported format version."""


def atomic_write(path, data: bytes):
    """Whole-file atomic write: temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Reader:
    """Cursor over an in-memory buffer that fails loudly on truncation."""

    def __init__(self, data: bytes, what: str):
        self._data = data
        self._pos = 0
        self._what = what

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise FormatError(f"truncated {self._what} file")
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def expect_eof(self):
        if self._pos != len(self._data):
            raise FormatError(f"trailing bytes in {self._what} file")


def check_magic(reader: Reader, magic: bytes, version: bytes, what: str):
    """Validate a ``magic + single version byte`` header."""
    got = reader.take(len(magic) + 1)
    if got[: len(magic)] != magic:
        raise FormatError(f"bad magic for {what} file")
    if got[len(magic) :] != version:
        raise VersionError(
            f"unsupported {what} format version {got[len(magic):]!r}, "
            f"expected {version!r}"
        )
