"""Binary grid container format ("SEBG").

Layout, all little-endian:

    offset 0   magic   4 bytes  b"SEBG"
    offset 4   version u16      (currently 1)
    offset 6   dtype   u16      0 = float32 planes, 1 = uint32 bitfield
    offset 8   height  u32
    offset 12  width   u32
    offset 16  planes  u32
    offset 20  payload planar, row-major

Round trips are bit-exact; malformed files raise :class:`InputFormatError`
with the offending byte offset.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InputFormatError
from .grids import EdgeLabelMap, MultiLabelMap, ProbMap

MAGIC = b"SEBG"
VERSION = 1
DTYPE_F32 = 0
DTYPE_U32 = 1
_HEADER = struct.Struct("<4sHHIII")
_NP_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_U32: np.dtype("<u4")}


def write_container(path, array: np.ndarray, dtype_code: int) -> None:
    if dtype_code not in _NP_DTYPES:
        raise InputFormatError(f"unknown dtype code {dtype_code}")
    a = np.asarray(array)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.size == 0:
        raise InputFormatError(f"expected (planes, H, W) data, got shape {a.shape}")
    a = np.ascontiguousarray(a.astype(_NP_DTYPES[dtype_code], copy=False))
    planes, h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dtype_code, h, w, planes))
        fh.write(a.tobytes(order="C"))


def read_container(path) -> tuple[int, np.ndarray]:
    """Returns (dtype_code, array of shape (planes, H, W))."""
    try:
        data = Path(path).read_bytes()
    except OSError as err:
        raise InputFormatError(f"cannot read container {path}: {err}") from None
    if len(data) < _HEADER.size:
        raise InputFormatError(
            f"{path}: file too short for header ({len(data)} < {_HEADER.size} bytes)"
        )
    magic, version, dtype_code, h, w, planes = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise InputFormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise InputFormatError(f"{path}: unsupported version {version} at offset 4")
    if dtype_code not in _NP_DTYPES:
        raise InputFormatError(f"{path}: unknown dtype code {dtype_code} at offset 6")
    if h == 0 or w == 0 or planes == 0:
        raise InputFormatError(f"{path}: zero dimension in header at offset 8")
    np_dtype = _NP_DTYPES[dtype_code]
    expected = h * w * planes * np_dtype.itemsize
    actual = len(data) - _HEADER.size
    if actual != expected:
        raise InputFormatError(
            f"{path}: payload at offset {_HEADER.size} has {actual} bytes, expected {expected}"
        )
    arr = np.frombuffer(data, dtype=np_dtype, offset=_HEADER.size).reshape(planes, h, w)
    return dtype_code, arr.copy()


def read_header(path) -> tuple[int, int, int, int]:
    """(dtype_code, height, width, planes) without reading the payload."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
    except OSError as err:
        raise InputFormatError(f"cannot read container {path}: {err}") from None
    if len(head) < _HEADER.size:
        raise InputFormatError(f"{path}: file too short for header")
    magic, version, dtype_code, h, w, planes = _HEADER.unpack(head)
    if magic != MAGIC:
        raise InputFormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise InputFormatError(f"{path}: unsupported version {version} at offset 4")
    return dtype_code, h, w, planes


def save_prob_map(path, prob: ProbMap) -> None:
    write_container(path, prob.planes, DTYPE_F32)


def load_prob_map(path) -> ProbMap:
    code, arr = read_container(path)
    if code != DTYPE_F32:
        raise InputFormatError(f"{path}: expected float32 planes for a probability map")
    return ProbMap(planes=arr)


def save_multi_label(path, labels: MultiLabelMap) -> None:
    write_container(path, labels.field[None], DTYPE_U32)


def load_multi_label(path, num_classes: int) -> MultiLabelMap:
    code, arr = read_container(path)
    if code != DTYPE_U32:
        raise InputFormatError(f"{path}: expected a uint32 bitfield for labels")
    if arr.shape[0] != 1:
        raise InputFormatError(f"{path}: label bitfields use one plane, got {arr.shape[0]}")
    return MultiLabelMap(field=arr[0], num_classes=num_classes)


def save_label_map(path, labels: EdgeLabelMap) -> None:
    write_container(path, labels.bits.astype(np.uint32)[None], DTYPE_U32)


def save_image(path, image: np.ndarray) -> None:
    write_container(path, np.asarray(image, dtype=np.float32)[None], DTYPE_F32)


def load_image(path) -> np.ndarray:
    code, arr = read_container(path)
    if code != DTYPE_F32 or arr.shape[0] != 1:
        raise InputFormatError(f"{path}: expected a single float32 plane image")
    return arr[0]
