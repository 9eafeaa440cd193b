"""Binary trace archive (``.phst``).

Layout, all little-endian::

    magic      4s   b"PHST"
    version    u16
    sample_rate u64  Hz
    trace_len  u32  samples per trace
    n_shots    u64  (patched when the writer closes)
    n_pulses   u8
    if_freq    u64  Hz
    layout     u8   1 = sig_a, sig_b, noise_a, noise_b per shot

followed by ``n_shots`` records of four traces, each ``trace_len``
interleaved float32 (I, Q) pairs.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .chain import ShotBlock, ShotRecord
from .errors import GeometryError, ParseError

MAGIC = b"PHST"
VERSION = 1
LAYOUT_SIG_NOISE = 1
HEADER = struct.Struct("<4sHQIQBQB")
_SAMPLE = np.dtype("<c8")


@dataclass(frozen=True)
class ArchiveHeader:
    sample_rate: int
    trace_len: int
    n_shots: int
    n_pulses: int
    if_freq: int
    layout: int = LAYOUT_SIG_NOISE
    version: int = VERSION

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, self.sample_rate, self.trace_len, self.n_shots,
                           self.n_pulses, self.if_freq, self.layout)

    @classmethod
    def unpack(cls, raw: bytes) -> "ArchiveHeader":
        if len(raw) < HEADER.size:
            raise ParseError(f"archive header truncated ({len(raw)} of {HEADER.size} bytes)")
        magic, version, sr, tl, ns, npul, fif, layout = HEADER.unpack(raw[: HEADER.size])
        if magic != MAGIC:
            raise ParseError(f"bad magic {magic!r}; not a trace archive")
        if version != VERSION:
            raise ParseError(f"unsupported archive version {version}")
        if layout != LAYOUT_SIG_NOISE:
            raise ParseError(f"unknown channel layout tag {layout}")
        return cls(sr, tl, ns, npul, fif, layout, version)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def record_bytes(self) -> int:
        return 4 * self.trace_len * _SAMPLE.itemsize


class ArchiveWriter:
    """Append shots to a new archive; use as a context manager."""

    def __init__(self, path, sample_rate: float, trace_len: int, n_pulses: int, if_freq: float):
        self.path = os.fspath(path)
        self.header = ArchiveHeader(int(round(sample_rate)), int(trace_len), 0, int(n_pulses),
                                    int(round(if_freq)))
        self._fh = open(self.path, "wb")
        self._fh.write(self.header.pack())
        self.n_shots = 0

    def write_block(self, block: ShotBlock) -> None:
        if block.trace_len != self.header.trace_len:
            raise GeometryError(f"block has {block.trace_len} samples, archive expects {self.header.trace_len}")
        data = np.stack([block.sig_a, block.sig_b, block.noise_a, block.noise_b], axis=1)
        self._fh.write(np.ascontiguousarray(data, dtype=_SAMPLE).tobytes())
        self.n_shots += len(block)

    def write_shot(self, shot: ShotRecord) -> None:
        self.write_block(ShotBlock.from_records([shot]))

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.seek(0)
        self._fh.write(ArchiveHeader(**{**self.header.__dict__, "n_shots": self.n_shots}).pack())
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ArchiveReader:
    """Memory-mapped read access to an archive."""

    def __init__(self, path):
        self.path = os.fspath(path)
        with open(self.path, "rb") as fh:
            self.header = ArchiveHeader.unpack(fh.read(HEADER.size))
        size = os.path.getsize(self.path) - HEADER.size
        expected = self.header.n_shots * self.header.record_bytes
        if size != expected:
            raise ParseError(
                f"archive body has {size} bytes, header promises {self.header.n_shots} shots ({expected} bytes)"
            )
        self._data = np.memmap(self.path, dtype=_SAMPLE, mode="r", offset=HEADER.size,
                               shape=(self.header.n_shots, 4, self.header.trace_len)) if expected else \
            np.zeros((0, 4, self.header.trace_len), dtype=_SAMPLE)

    def __len__(self):
        return self.header.n_shots

    def block(self, start: int, stop: int) -> ShotBlock:
        d = np.asarray(self._data[start:stop], dtype=np.complex64)
        return ShotBlock(d[:, 0].copy(), d[:, 1].copy(), d[:, 2].copy(), d[:, 3].copy(),
                         self.header.dt, np.arange(start, start + d.shape[0]))

    def iter_blocks(self, block_size: int = 1000) -> Iterator[ShotBlock]:
        for start in range(0, len(self), block_size):
            yield self.block(start, min(start + block_size, len(self)))

    def read_shot(self, index: int) -> ShotRecord:
        if not 0 <= index < len(self):
            raise IndexError(index)
        return next(self.block(index, index + 1).records())

    def __iter__(self) -> Iterator[ShotRecord]:
        for blk in self.iter_blocks():
            yield from blk.records()


def write_archive(path, blocks, sample_rate: float, trace_len: int, n_pulses: int, if_freq: float) -> int:
    """Write all blocks; returns the number of shots written."""
    with ArchiveWriter(path, sample_rate, trace_len, n_pulses, if_freq) as w:
        for blk in blocks:
            w.write_block(blk)
        return w.n_shots


def read_archive(path) -> list[ShotRecord]:
    return list(ArchiveReader(path))
