"""8-bit image file I/O: PNG (via Pillow) and binary PGM/PPM (native).

Reading maps bytes to [0, 1] by u / 255; writing clamps to [0, 1] and
quantizes with round-half-away-from-zero (PSNR tables depend on this
rule, so it is pinned here rather than left to the codec).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageFormatError, ParameterError, UnsupportedDepthError
from .image import as_image


def quantize(x: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and quantize to uint8, rounding half away from zero."""
    clamped = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8)


def _read_pnm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < 2 or data[:1] != b"P":
        raise ImageFormatError(f"{path}: not a PNM file")
    magic = data[:2].decode("ascii", errors="replace")
    if magic not in ("P5", "P6"):
        raise ImageFormatError(f"{path}: unsupported PNM magic {magic!r}")

    # Header tokens separated by whitespace, with '#' comments to end of line.
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated PNM header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError:
            raise ImageFormatError(
                f"{path}: non-numeric PNM header token {data[start:pos]!r}"
            ) from None
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = tokens
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: bad PNM dimensions {width}x{height}")
    if not (1 <= maxval <= 255):
        raise UnsupportedDepthError(
            f"{path}: maxval {maxval} is not 8-bit (must be <= 255)"
        )
    channels = 1 if magic == "P5" else 3
    expected = width * height * channels
    raw = data[pos : pos + expected]
    if len(raw) != expected:
        raise ImageFormatError(
            f"{path}: expected {expected} pixel bytes, found {len(raw)}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / float(maxval)
    if channels == 1:
        return pixels.reshape(1, height, width)
    return pixels.reshape(height, width, 3).transpose(2, 0, 1)


def _read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode not in ("L", "RGB"):
                raise UnsupportedDepthError(
                    f"{path}: unsupported PNG mode {mode!r} (8-bit L/RGB only)"
                )
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a decodable image ({exc})") from exc
    if arr.ndim == 2:
        return arr[None, :, :]
    return arr.transpose(2, 0, 1)


def read_image(path) -> np.ndarray:
    """Read an 8-bit PNG/PGM/PPM file into a (C, H, W) float64 tensor."""
    p = Path(path)
    with open(p, "rb") as fh:
        head = fh.read(2)
    if head in (b"P5", b"P6"):
        return _read_pnm(p)
    if head == b"\x89P":
        return _read_png(p)
    raise ImageFormatError(f"{p}: unrecognized image signature {head!r}")


def write_image(x, path) -> None:
    """Write a tensor as 8-bit PNG/PGM/PPM, chosen by file extension."""
    x = as_image(x, "image")
    p = Path(path)
    b = quantize(x)
    suffix = p.suffix.lower()
    if suffix in (".pgm", ".ppm"):
        if suffix == ".pgm":
            if b.shape[0] != 1:
                raise ParameterError(f"PGM requires 1 channel, got {b.shape[0]}")
            payload = b[0].tobytes()
            magic = b"P5"
        else:
            if b.shape[0] != 3:
                raise ParameterError(f"PPM requires 3 channels, got {b.shape[0]}")
            payload = b.transpose(1, 2, 0).tobytes()
            magic = b"P6"
        header = magic + f"\n{b.shape[2]} {b.shape[1]}\n255\n".encode("ascii")
        p.write_bytes(header + payload)
        return
    if suffix == ".png":
        if b.shape[0] == 1:
            Image.fromarray(b[0], mode="L").save(p, format="PNG")
        elif b.shape[0] == 3:
            Image.fromarray(b.transpose(1, 2, 0), mode="RGB").save(p, format="PNG")
        else:
            raise ParameterError(f"PNG requires 1 or 3 channels, got {b.shape[0]}")
        return
    raise ParameterError(f"unsupported image extension {suffix!r} (png/pgm/ppm)")
