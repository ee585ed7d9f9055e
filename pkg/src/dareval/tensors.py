"""Headed tensors, key-segment maps, and the DART1 on-disk layout.

A HeadedTensor is a (tokens, heads, dim) float64 array; queries and keys
share the type. KeySegments records which slices of a key sequence are
text, reference-image, or noise tokens, so the rebalancing kernel knows
which positions are eligible for reweighting.

DART1 files are self-describing: magic bytes ``DART1``, three little-endian
uint32 counts (tokens, heads, dim), then row-major float64 payload. Segment
maps travel in a JSON sidecar.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import FormatError, ShapeError

MAGIC = b"DART1"

SEGMENT_TEXT = "text"
SEGMENT_REFERENCE = "reference_image"
SEGMENT_NOISE = "noise"
_SEGMENT_KINDS = (SEGMENT_TEXT, SEGMENT_REFERENCE, SEGMENT_NOISE)


@dataclass(frozen=True)
class HeadedTensor:
    """Immutable (tokens, heads, dim) array of finite float64 values."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeError(f"expected (tokens, heads, dim) array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ShapeError(f"all axes must be >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("tensor contains non-finite entries")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n_tokens(self) -> int:
        return self.data.shape[0]

    @property
    def n_heads(self) -> int:
        return self.data.shape[1]

    @property
    def head_dim(self) -> int:
        return self.data.shape[2]

    def take_tokens(self, indices) -> "HeadedTensor":
        """New tensor holding the given token rows, in the given order."""
        return HeadedTensor(self.data[np.asarray(indices, dtype=np.intp)])


@dataclass(frozen=True)
class Segment:
    kind: str
    start: int
    length: int
    index: int | None = None  # reference-image ordinal, refs only

    def __post_init__(self):
        if self.kind not in _SEGMENT_KINDS:
            raise FormatError(f"unknown segment kind {self.kind!r}")
        if self.kind == SEGMENT_REFERENCE and self.index is None:
            raise FormatError("reference_image segment requires an index")
        if self.kind != SEGMENT_REFERENCE and self.index is not None:
            raise FormatError(f"{self.kind} segment must not carry an index")
        if self.start < 0 or self.length < 1:
            raise FormatError(f"segment bounds out of range: start={self.start} length={self.length}")

    @property
    def stop(self) -> int:
        return self.start + self.length

    @property
    def label(self) -> str:
        if self.kind == SEGMENT_REFERENCE:
            return f"{SEGMENT_REFERENCE}[{self.index}]"
        return self.kind


@dataclass(frozen=True)
class KeySegments:
    """Contiguous, non-overlapping cover of a key sequence."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise FormatError("at least one segment required")
        pos = segs[0].start
        if pos != 0:
            raise FormatError(f"segments must start at token 0, got {pos}")
        for seg in segs:
            if seg.start != pos:
                raise FormatError(f"segments must be contiguous; gap or overlap at token {seg.start}")
            pos = seg.stop
        object.__setattr__(self, "segments", segs)

    @property
    def n_tokens(self) -> int:
        return self.segments[-1].stop

    def reference_segments(self) -> list[Segment]:
        return [s for s in self.segments if s.kind == SEGMENT_REFERENCE]

    def reference_indices(self) -> np.ndarray:
        """Token indices of all reference segments, concatenated in order."""
        refs = self.reference_segments()
        if not refs:
            return np.empty(0, dtype=np.intp)
        return np.concatenate([np.arange(s.start, s.stop, dtype=np.intp) for s in refs])

    def validate_for(self, n_key_tokens: int) -> None:
        if self.n_tokens != n_key_tokens:
            raise ShapeError(
                f"segments cover {self.n_tokens} tokens but key tensor has {n_key_tokens}"
            )


def write_tensor(path: str | Path, tensor: HeadedTensor) -> None:
    arr = np.ascontiguousarray(tensor.data, dtype="<f8")
    header = MAGIC + struct.pack("<III", tensor.n_tokens, tensor.n_heads, tensor.head_dim)
    Path(path).write_bytes(header + arr.tobytes())


def read_tensor(path: str | Path) -> HeadedTensor:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic bytes, not a DART1 file")
    header_len = len(MAGIC) + 12
    if len(blob) < header_len:
        raise FormatError(f"{path}: truncated header")
    tokens, heads, dim = struct.unpack("<III", blob[len(MAGIC):header_len])
    expected = tokens * heads * dim * 8
    payload = blob[header_len:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} "
            f"for {tokens}x{heads}x{dim} float64"
        )
    arr = np.frombuffer(payload, dtype="<f8").reshape(tokens, heads, dim)
    return HeadedTensor(arr)


def write_segments(path: str | Path, segments: KeySegments) -> None:
    payload = {"segments": []}
    for seg in segments.segments:
        entry = {"kind": seg.kind, "start": seg.start, "length": seg.length}
        if seg.index is not None:
            entry["index"] = seg.index
        payload["segments"].append(entry)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_segments(path: str | Path) -> KeySegments:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid segment sidecar JSON: {exc}") from exc
    if not isinstance(payload, dict) or "segments" not in payload:
        raise FormatError(f"{path}: sidecar must be an object with a 'segments' list")
    segs = []
    for entry in payload["segments"]:
        segs.append(
            Segment(
                kind=entry.get("kind", ""),
                start=int(entry["start"]),
                length=int(entry["length"]),
                index=entry.get("index"),
            )
        )
    return KeySegments(tuple(segs))
