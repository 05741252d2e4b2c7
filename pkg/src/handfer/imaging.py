"""Grayscale image I/O, resizing, normalization and Sobel edge extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Largest single-axis Sobel response for 8-bit input (4 * 255). The hand
# classifier consumes magnitude / EDGE_INPUT_SCALE.
EDGE_INPUT_SCALE = 1020.0
# Largest possible magnitude for 8-bit input, 4 * 255 * sqrt(2) rounded.
EDGE_EXPORT_MAX = 1442.5

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


class PGMError(ValueError):
    pass


class MalformedHeader(PGMError):
    pass


class TruncatedRaster(PGMError):
    pass


class UnsupportedMaxval(PGMError):
    pass


@dataclass
class Image:
    """A grayscale raster; ``pixels`` has shape (height, width), row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or 0 in self.pixels.shape:
            raise ValueError(f"image must be a non-empty 2-D array, got shape {self.pixels.shape}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def samples(self) -> np.ndarray:
        return self.pixels.ravel()


@dataclass
class EdgeMap:
    magnitudes: np.ndarray

    @property
    def width(self) -> int:
        return self.magnitudes.shape[1]

    @property
    def height(self) -> int:
        return self.magnitudes.shape[0]


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    # Reads `count` whitespace-separated tokens after the magic, skipping
    # '#' comments. Returns the tokens and the offset just past the last one.
    tokens = []
    pos = 2
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise MalformedHeader("header ended before width, height and maxval were read")
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise MalformedHeader("unterminated comment in header")
            pos = end + 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def load_pgm(data: bytes) -> Image:
    """Decode a binary (P5) PGM with maxval <= 255."""
    if data[:2] != b"P5":
        raise MalformedHeader(f"expected magic b'P5', got {data[:2]!r}")
    if len(data) < 3 or not data[2:3].isspace():
        raise MalformedHeader("magic must be followed by whitespace")
    tokens, pos = _header_tokens(data, 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedHeader(f"non-integer header field in {tokens!r}") from None
    if width <= 0 or height <= 0:
        raise MalformedHeader(f"invalid dimensions {width}x{height}")
    if maxval <= 0:
        raise MalformedHeader(f"invalid maxval {maxval}")
    if maxval > 255:
        raise UnsupportedMaxval(f"maxval {maxval} > 255 is not supported")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise MalformedHeader("missing whitespace byte after maxval")
    pos += 1
    need = width * height
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise TruncatedRaster(f"raster has {len(raster)} bytes, header declares {width}x{height} = {need}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return Image(pixels.astype(np.float64))


def read_pgm(path) -> Image:
    with open(path, "rb") as f:
        return load_pgm(f.read())


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Round half up and clamp to [0, 255]."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def encode_pgm(img: Image) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + to_uint8(img.pixels).tobytes()


def write_pgm(path, img: Image) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(img))


def _axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if n_out == 1:
        src = np.array([(n_in - 1) / 2.0])
    else:
        src = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.clip(np.floor(src).astype(int), 0, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img: Image, out_w: int, out_h: int) -> Image:
    """Bilinear resize with corner-aligned sampling.

    Output pixel ``i`` samples source coordinate ``i * (n_in - 1) / (n_out - 1)``
    so the first and last samples of each axis coincide with the source
    corners. A target dimension of 1 samples the source centre.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"target dimensions must be positive, got {out_w}x{out_h}")
    if (out_w, out_h) == (img.width, img.height):
        return Image(img.pixels.copy())
    x0, x1, fx = _axis_coords(img.width, out_w)
    y0, y1, fy = _axis_coords(img.height, out_h)
    p = img.pixels
    top = p[y0][:, x0] * (1 - fx) + p[y0][:, x1] * fx
    bottom = p[y1][:, x0] * (1 - fx) + p[y1][:, x1] * fx
    return Image(top * (1 - fy)[:, None] + bottom * fy[:, None])


def normalize(img: Image) -> Image:
    return Image(img.pixels / 255.0)


def _correlate3(padded: np.ndarray, kernel: np.ndarray, h: int, w: int) -> np.ndarray:
    out = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            if kernel[dy, dx] != 0.0:
                out += kernel[dy, dx] * padded[dy:dy + h, dx:dx + w]
    return out


def sobel_gradients(img: Image) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical Sobel responses (correlation, replicate borders)."""
    h, w = img.height, img.width
    padded = np.pad(img.pixels, 1, mode="edge")
    return _correlate3(padded, SOBEL_X, h, w), _correlate3(padded, SOBEL_Y, h, w)


def sobel_edges(img: Image) -> EdgeMap:
    gx, gy = sobel_gradients(img)
    return EdgeMap(np.sqrt(gx * gx + gy * gy))


def edges_to_image(edges: EdgeMap) -> Image:
    """Scale magnitudes to the 8-bit range for export (255 / EDGE_EXPORT_MAX)."""
    return Image(to_uint8(edges.magnitudes * (255.0 / EDGE_EXPORT_MAX)).astype(np.float64))
