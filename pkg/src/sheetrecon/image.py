"""Grayscale images, PGM file I/O and blob-style particle detection.

Images hold row-major float intensities normalized to [0, 1]; all pixel
coordinates are (u, v) with u along the width axis and v along the height
axis, origin at the top-left pixel center.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage


class ImageFormatError(ValueError):
    """Raised for unreadable, unsupported or malformed image files."""


@dataclass(frozen=True)
class Image:
    """2D grayscale intensity grid with intensities in [0, 1].

    The backing array is made read-only on construction, so instances can
    be shared freely between threads.
    """

    data: np.ndarray  # (height, width), float64, row-major

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ImageFormatError(f"image data must be a non-empty 2D grid, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image intensities must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class Feature2D:
    """A detected particle: subpixel image position plus blob statistics."""

    u: float
    v: float
    peak: float  # brightest intensity of the blob, in [0, 1]
    mass: float  # summed intensity over the blob's pixels
    pixels: int  # number of pixels in the blob

    @property
    def position(self) -> tuple[float, float]:
        return (self.u, self.v)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

_PGM_HEADER = re.compile(rb"^P5\s")


def load_image(path) -> Image:
    """Load a grayscale raster file and normalize intensities to [0, 1].

    Binary PGM (P5, 8-bit or 16-bit big-endian) is always supported;
    grayscale PNG is supported when Pillow is installed. Samples are
    divided by the format's maximum sample value.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".pnm"):
        return _load_pgm(path)
    if suffix == ".png":
        return _load_png(path)
    # fall back to content sniffing for extension-less files
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        return _load_pgm(path)
    raise ImageFormatError(f"unsupported image format: {path}")


def _load_pgm(path: Path) -> Image:
    raw = path.read_bytes()
    if not _PGM_HEADER.match(raw):
        raise ImageFormatError(f"not a binary (P5) PGM file: {path}")

    # Header tokens: magic, width, height, maxval; '#' starts a comment.
    tokens = []
    pos = 2
    while len(tokens) < 3 and pos < len(raw):
        ch = raw[pos : pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            pos = raw.find(b"\n", pos)
            if pos < 0:
                raise ImageFormatError(f"truncated PGM header: {path}")
            pos += 1
        else:
            end = pos
            while end < len(raw) and raw[end : end + 1] not in b" \t\r\n#":
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    if len(tokens) < 3 or pos >= len(raw):
        raise ImageFormatError(f"truncated PGM header: {path}")
    pos += 1  # single whitespace byte after maxval

    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ImageFormatError(f"malformed PGM header: {path}") from exc
    if width < 1 or height < 1:
        raise ImageFormatError(f"zero-dimension PGM image: {path}")
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"PGM maxval {maxval} out of range: {path}")

    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    samples = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    if samples.size != count:
        raise ImageFormatError(f"truncated PGM pixel data: {path}")
    data = samples.reshape(height, width).astype(np.float64) / float(maxval)
    return Image(np.clip(data, 0.0, 1.0))


def _load_png(path: Path) -> Image:
    try:
        from PIL import Image as PILImage
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise ImageFormatError("PNG support requires the 'pillow' package") from exc
    with PILImage.open(path) as img:
        if img.mode == "I;16":
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        elif img.mode in ("L", "I"):
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        else:
            raise ImageFormatError(f"PNG must be grayscale, got mode {img.mode}: {path}")
    if arr.ndim != 2 or arr.size == 0:
        raise ImageFormatError(f"zero-dimension PNG image: {path}")
    return Image(np.clip(arr, 0.0, 1.0))


def save_pgm(image: Image, path, bit_depth: int = 16) -> None:
    """Write an image as binary PGM (P5), 8-bit or 16-bit big-endian."""
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    maxval = 255 if bit_depth == 8 else 65535
    samples = np.rint(image.data * maxval)
    samples = samples.astype("u1" if bit_depth == 8 else ">u2")
    header = f"P5\n{image.width} {image.height}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + samples.tobytes())


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def detect_features(
    image: Image,
    threshold: float,
    min_pixels: int = 1,
    max_pixels: int = 10_000,
) -> list[Feature2D]:
    """Detect bright blobs and reduce each to a subpixel centroid.

    Pixels with intensity strictly above ``threshold`` are grouped into
    8-connected components. Components whose pixel count falls within
    [min_pixels, max_pixels] become features; the reported position is the
    centroid weighted by (intensity - threshold), which makes it
    insensitive to the background level near the threshold.

    Returns features sorted by descending mass, ties broken by ascending
    (v, u). An empty list is a valid result.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if min_pixels < 1:
        raise ValueError(f"min_pixels must be >= 1, got {min_pixels}")
    if max_pixels < min_pixels:
        raise ValueError(f"max_pixels ({max_pixels}) must be >= min_pixels ({min_pixels})")

    mask = image.data > threshold
    labels, n_components = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    features: list[Feature2D] = []
    slices = ndimage.find_objects(labels)
    for index, slc in enumerate(slices, start=1):
        component = labels[slc] == index
        count = int(component.sum())
        if not min_pixels <= count <= max_pixels:
            continue
        vv, uu = np.nonzero(component)
        intensities = image.data[slc][vv, uu]
        weights = np.maximum(intensities - threshold, 0.0)
        wsum = weights.sum()
        u = float(np.dot(weights, uu + slc[1].start) / wsum)
        v = float(np.dot(weights, vv + slc[0].start) / wsum)
        features.append(
            Feature2D(
                u=u,
                v=v,
                peak=float(intensities.max()),
                mass=float(intensities.sum()),
                pixels=count,
            )
        )
    features.sort(key=lambda f: (-f.mass, f.v, f.u))
    return features


# ---------------------------------------------------------------------------
# Feature CSV serialization
# ---------------------------------------------------------------------------

FEATURE_CSV_HEADER = "id,u,v,peak,mass,pixels"


def features_to_csv(features: list[Feature2D]) -> str:
    """Serialize features to CSV text (positions with 6 decimal places)."""
    lines = [FEATURE_CSV_HEADER]
    for i, f in enumerate(features):
        lines.append(f"{i},{f.u:.6f},{f.v:.6f},{f.peak:.9g},{f.mass:.9g},{f.pixels}")
    return "\n".join(lines) + "\n"


def write_features_csv(features: list[Feature2D], path) -> None:
    Path(path).write_text(features_to_csv(features), encoding="ascii")


def read_features_csv(path) -> list[Feature2D]:
    """Read a feature CSV written by :func:`write_features_csv`."""
    text = Path(path).read_text(encoding="ascii")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != FEATURE_CSV_HEADER:
        raise ImageFormatError(f"not a feature CSV file: {path}")
    features = []
    for line in lines[1:]:
        _, u, v, peak, mass, pixels = line.split(",")
        features.append(
            Feature2D(u=float(u), v=float(v), peak=float(peak), mass=float(mass), pixels=int(pixels))
        )
    return features
