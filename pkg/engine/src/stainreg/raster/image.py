# src/stainreg/raster/image.py
import logging
import math
import os
import re
from dataclasses import dataclass

import numpy as np

from stainreg.data.atomic import atomic_write_bytes
from stainreg.errors import ArgumentError, FormatError, UnreadableInputError
from stainreg.util import quantize_u8

_log = logging.getLogger(__name__)

_WHITESPACE = b" \t\n\r\v\f"
_MPP_COMMENT = re.compile(rb"^# mpp (\S+)\s*$")
DEFAULT_MPP = 1.0


def _readonly(array: np.ndarray) -> np.ndarray:
    view = array.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True, eq=False)
class Image:
    """
    A 2-D raster with physical resolution.

    `data` is (height, width) for gray or (height, width, 3) for RGB. Samples are
    either uint8 (as read from / written to disk) or float64 in [0, 1] (internal).
    Arrays are frozen on construction; operations always return new images.
    """

    data: np.ndarray
    mpp: float = DEFAULT_MPP

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim not in (2, 3) or (data.ndim == 3 and data.shape[2] != 3):
            raise ArgumentError(f"Image data must be (H, W) or (H, W, 3), got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ArgumentError(f"Image must have at least one pixel, got shape {data.shape}")
        if data.dtype != np.uint8:
            data = data.astype(np.float64, copy=False)
            if data.size and (not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0):
                raise ArgumentError("Real-valued image samples must lie in [0, 1]")
        mpp = float(self.mpp)
        if not (math.isfinite(mpp) and mpp > 0):
            raise ArgumentError(f"mpp must be positive and finite, got {self.mpp!r}")
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "mpp", mpp)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def is_gray(self) -> bool:
        return self.channels == 1

    def unit(self) -> np.ndarray:
        """Samples as float64 in [0, 1]."""
        if self.data.dtype == np.uint8:
            return self.data.astype(np.float64) / 255.0
        return np.array(self.data, dtype=np.float64)

    def to_bytes(self) -> np.ndarray:
        """Samples as uint8, quantizing real samples with round-half-away."""
        if self.data.dtype == np.uint8:
            return np.array(self.data)
        return quantize_u8(self.data * 255.0)

    def replace(self, data: np.ndarray, mpp: float | None = None) -> "Image":
        return Image(data, self.mpp if mpp is None else mpp)

    def require_gray(self, operation: str) -> None:
        if not self.is_gray:
            raise ArgumentError(f"{operation} requires a grayscale image, got {self.channels} channels")


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary foreground flags, row-major (height, width)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ArgumentError(f"Mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", _readonly(bits.astype(bool, copy=False)))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    def apply(self, image: Image) -> Image:
        """Zeroes every sample outside the mask (gray images)."""
        image.require_gray("Mask.apply")
        return image.replace(np.where(self.bits, image.unit(), 0.0))


@dataclass(frozen=True)
class Pyramid:
    """Resolution pyramid; level 0 is the source image, each level shrinks by `factor`."""

    levels: tuple[Image, ...]
    factor: int = 2

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, level: int) -> Image:
        return self.levels[level]

    def scale(self, level: int) -> int:
        """Pixel size of `level` relative to level 0."""
        return self.factor**level


# --- PNM IO ---


def _next_token(buf: bytes, pos: int, path: str, state: dict) -> tuple[bytes, int, int]:
    """Returns (token, token_offset, next_pos), skipping whitespace and comments."""
    while True:
        if pos >= len(buf):
            raise FormatError(path, pos, "truncated header")
        char = buf[pos : pos + 1]
        if char in _WHITESPACE:
            pos += 1
            continue
        if char == b"#":
            end = buf.find(b"\n", pos)
            if end == -1:
                raise FormatError(path, pos, "unterminated comment")
            if not state["comment_seen"]:
                state["comment_seen"] = True
                match = _MPP_COMMENT.match(buf[pos:end])
                if match:
                    try:
                        state["mpp"] = float(match.group(1))
                    except ValueError:
                        raise FormatError(path, pos, f"invalid mpp value {match.group(1)!r}") from None
            pos = end + 1
            continue
        start = pos
        while pos < len(buf) and buf[pos : pos + 1] not in _WHITESPACE and buf[pos : pos + 1] != b"#":
            pos += 1
        return buf[start:pos], start, pos


def decode_pnm(buf: bytes, path: str = "<bytes>") -> Image:
    """Decodes a binary P5/P6 PNM payload with an optional `# mpp <float>` comment."""
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(path, 0, f"unsupported magic {magic!r}")
    channels = 1 if magic == b"P5" else 3
    state = {"comment_seen": False, "mpp": None}

    values = []
    pos = 2
    for name in ("width", "height", "maxval"):
        token, offset, pos = _next_token(buf, pos, path, state)
        if not token.isdigit():
            raise FormatError(path, offset, f"expected integer {name}, found {token!r}")
        values.append((int(token), offset))
    (width, w_off), (height, h_off), (maxval, m_off) = values
    if width < 1:
        raise FormatError(path, w_off, "width must be positive")
    if height < 1:
        raise FormatError(path, h_off, "height must be positive")
    if maxval != 255:
        raise FormatError(path, m_off, f"maxval must be 255, found {maxval}")
    if pos >= len(buf) or buf[pos : pos + 1] not in _WHITESPACE:
        raise FormatError(path, pos, "missing whitespace after maxval")
    pos += 1

    expected = width * height * channels
    available = len(buf) - pos
    if available < expected:
        raise FormatError(path, len(buf), f"truncated payload: expected {expected} bytes, found {available}")
    if available > expected:
        _log.debug("Ignoring %d trailing bytes in %s", available - expected, path)

    samples = np.frombuffer(buf, dtype=np.uint8, count=expected, offset=pos)
    shape = (height, width) if channels == 1 else (height, width, 3)
    mpp = state["mpp"] if state["mpp"] is not None else DEFAULT_MPP
    if not (math.isfinite(mpp) and mpp > 0):
        raise FormatError(path, 2, f"mpp must be positive, found {mpp}")
    return Image(samples.reshape(shape).copy(), mpp)


def read_pnm(path: str | os.PathLike) -> Image:
    """Reads a P5/P6 file. Missing or unreadable files raise UnreadableInputError."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as file:
            buf = file.read()
    except OSError as e:
        raise UnreadableInputError(path, e) from e
    image = decode_pnm(buf, path)
    _log.debug("Read %s: %dx%dx%d at %s um/px", path, image.width, image.height, image.channels, image.mpp)
    return image


def encode_pnm(image: Image) -> bytes:
    magic = "P5" if image.is_gray else "P6"
    header = f"{magic}\n# mpp {image.mpp!r}\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.to_bytes().tobytes()


def write_pnm(image: Image, path: str | os.PathLike) -> None:
    """Writes `image` atomically; IO failures propagate as OSError naming the path."""
    atomic_write_bytes(path, encode_pnm(image))
