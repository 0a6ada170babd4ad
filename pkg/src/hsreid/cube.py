"""Hyperspectral data cubes: in-memory representation, ENVI-subset I/O, RGB band integration.

A cube is stored pixel-major, shape ``(height, width, bands)`` with the last
axis contiguous, so each pixel's full spectrum sits in one cache line run.
On disk a cube is a flat little-endian raster plus a plain-text header in a
minimal ENVI-compatible dialect (see :func:`read_header`).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DEFAULT_RGB_WINDOWS",
    "CubeHeader",
    "HyperCube",
    "RgbImage",
    "read_header",
    "write_header",
    "read_cube",
    "write_cube",
    "infer_header_path",
    "integrate_to_rgb",
    "rgb_to_cube",
]

# Band-integration windows in nm, ascending: blue, green, red.
DEFAULT_RGB_WINDOWS: tuple[tuple[float, float], ...] = (
    (400.0, 500.0),
    (500.0, 600.0),
    (600.0, 700.0),
)

# ENVI numeric codes for the supported sample types.
DATA_TYPE_CODES = {"float32": 4, "float64": 5, "uint16": 12}
_CODE_TO_TYPE = {v: k for k, v in DATA_TYPE_CODES.items()}
_NUMPY_DTYPES = {"float32": "<f4", "float64": "<f8", "uint16": "<u2"}

INTERLEAVES = ("bsq", "bil", "bip")

# uint16 rasters hold reflectance scaled by this factor; divided out on read.
UINT16_REFLECTANCE_SCALE = 10000.0


@dataclass(frozen=True)
class CubeHeader:
    """Parsed header for a flat binary raster."""

    samples: int
    lines: int
    bands: int
    interleave: str
    data_type: str
    wavelengths: tuple[float, ...]
    fwhm: tuple[float, ...] | None = None
    byte_order: int = 0
    extras: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.samples < 1 or self.lines < 1 or self.bands < 1:
            raise ValueError("samples, lines and bands must all be >= 1")
        if self.interleave not in INTERLEAVES:
            raise ValueError(f"unsupported interleave {self.interleave!r}")
        if self.data_type not in DATA_TYPE_CODES:
            raise ValueError(f"unsupported data type {self.data_type!r}")
        if len(self.wavelengths) != self.bands:
            raise ValueError(
                f"wavelength list has {len(self.wavelengths)} entries for {self.bands} bands"
            )
        if self.fwhm is not None and len(self.fwhm) != self.bands:
            raise ValueError("fwhm list length must equal the band count")
        if self.byte_order != 0:
            raise ValueError("only little-endian rasters (byte order = 0) are supported")

    @property
    def raster_bytes(self) -> int:
        itemsize = np.dtype(_NUMPY_DTYPES[self.data_type]).itemsize
        return self.samples * self.lines * self.bands * itemsize


@dataclass(frozen=True, eq=False)
class HyperCube:
    """Reflectance raster with per-band wavelengths.

    ``data`` has shape ``(height, width, bands)``; values are finite and
    non-negative. ``wavelengths`` is strictly increasing, in nanometers.
    The arrays are frozen after construction: cubes are safe to share
    across threads.
    """

    wavelengths: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=np.float64)
        data = np.ascontiguousarray(self.data)
        if data.ndim != 3:
            raise ValueError("cube data must be (height, width, bands)")
        if wl.ndim != 1 or wl.shape[0] != data.shape[2]:
            raise ValueError("wavelength count must equal the band count")
        if wl.shape[0] > 1 and not np.all(np.diff(wl) > 0):
            raise ValueError("wavelengths must be strictly increasing")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise ValueError("cube data contains non-finite values")
        if data.min(initial=0.0) < 0.0:
            raise ValueError("cube data contains negative reflectance")
        wl.flags.writeable = False
        data.flags.writeable = False
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Band-integrated color image, channels ordered (R, G, B)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError("rgb data must be (height, width, 3)")
        if not np.all(np.isfinite(data)):
            raise ValueError("rgb data contains non-finite values")
        if data.min(initial=0.0) < 0.0:
            raise ValueError("rgb data contains negative values")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


_LIST_KEYS = ("wavelength", "fwhm")


def _parse_header_text(text: str) -> list[tuple[str, str]]:
    """Split header text into (key, value) pairs, joining brace lists that span lines."""
    body = text
    if body.lstrip().upper().startswith("ENVI"):
        body = body.lstrip()[4:]
    entries: list[tuple[str, str]] = []
    pending = ""
    for raw in body.splitlines():
        line = pending + raw if pending else raw
        if not line.strip():
            continue
        if line.count("{") > line.count("}"):
            pending = line + "\n"
            continue
        pending = ""
        if "=" not in line:
            raise ValueError(f"malformed header line (expected 'key = value'): {line.strip()!r}")
        key, value = line.split("=", 1)
        key = re.sub(r"\s+", " ", key.strip().lower())
        if not key:
            raise ValueError("malformed header line: empty key")
        entries.append((key, value.strip()))
    if pending:
        raise ValueError("malformed header: unterminated '{' list")
    return entries


def _parse_float_list(value: str, key: str) -> tuple[float, ...]:
    inner = value.strip()
    if not (inner.startswith("{") and inner.endswith("}")):
        raise ValueError(f"header key {key!r} must be a braces-delimited list")
    items = [tok for tok in re.split(r"[\s,]+", inner[1:-1].strip()) if tok]
    try:
        return tuple(float(tok) for tok in items)
    except ValueError as exc:
        raise ValueError(f"non-numeric entry in header list {key!r}") from exc


def read_header(path: str | Path) -> CubeHeader:
    """Parse the plain-text header dialect.

    Recognized keys (case-insensitive): samples, lines, bands, data type,
    interleave, byte order, wavelength, fwhm. Unknown keys are preserved
    verbatim and echoed back by :func:`write_header`.
    """
    entries = _parse_header_text(Path(path).read_text())
    known: dict[str, str] = {}
    extras: list[tuple[str, str]] = []
    for key, value in entries:
        if key in ("samples", "lines", "bands", "data type", "interleave", "byte order") or key in _LIST_KEYS:
            known[key] = value
        else:
            extras.append((key, value))

    for required in ("samples", "lines", "bands", "data type", "interleave", "wavelength"):
        if required not in known:
            raise ValueError(f"header is missing required key {required!r}")

    def _int(key: str) -> int:
        try:
            return int(known[key])
        except ValueError as exc:
            raise ValueError(f"header key {key!r} must be an integer") from exc

    code = _int("data type")
    if code not in _CODE_TO_TYPE:
        raise ValueError(f"unsupported data type code {code}")
    interleave = known["interleave"].lower()
    if interleave not in INTERLEAVES:
        raise ValueError(f"unsupported interleave {known['interleave']!r}")

    return CubeHeader(
        samples=_int("samples"),
        lines=_int("lines"),
        bands=_int("bands"),
        interleave=interleave,
        data_type=_CODE_TO_TYPE[code],
        wavelengths=_parse_float_list(known["wavelength"], "wavelength"),
        fwhm=_parse_float_list(known["fwhm"], "fwhm") if "fwhm" in known else None,
        byte_order=_int("byte order") if "byte order" in known else 0,
        extras=tuple(extras),
    )


def write_header(header: CubeHeader, path: str | Path) -> None:
    lines = [
        "ENVI",
        f"samples = {header.samples}",
        f"lines = {header.lines}",
        f"bands = {header.bands}",
        f"data type = {DATA_TYPE_CODES[header.data_type]}",
        f"interleave = {header.interleave}",
        f"byte order = {header.byte_order}",
        "wavelength = { " + ", ".join(repr(w) for w in header.wavelengths) + " }",
    ]
    if header.fwhm is not None:
        lines.append("fwhm = { " + ", ".join(repr(w) for w in header.fwhm) + " }")
    for key, value in header.extras:
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def infer_header_path(raster_path: str | Path) -> Path:
    """Locate the header companion of a raster: ``<raster>.hdr`` or the suffix swapped."""
    raster = Path(raster_path)
    appended = Path(str(raster) + ".hdr")
    if appended.exists():
        return appended
    return raster.with_suffix(".hdr")


def read_cube(header_path: str | Path, raster_path: str | Path) -> HyperCube:
    """Read a cube, normalizing any interleave to the pixel-major layout.

    uint16 rasters are divided by 10000 into float32 reflectance; float
    rasters keep their stored precision bit-for-bit.
    """
    header = read_header(header_path)
    raw = np.fromfile(raster_path, dtype=_NUMPY_DTYPES[header.data_type])
    expected = header.samples * header.lines * header.bands
    if raw.size != expected:
        raise ValueError(
            f"raster holds {raw.size} samples but header implies {expected} "
            f"({header.lines}x{header.samples}x{header.bands})"
        )
    h, w, b = header.lines, header.samples, header.bands
    if header.interleave == "bsq":
        data = raw.reshape(b, h, w).transpose(1, 2, 0)
    elif header.interleave == "bil":
        data = raw.reshape(h, b, w).transpose(0, 2, 1)
    else:  # bip
        data = raw.reshape(h, w, b)
    data = np.ascontiguousarray(data)
    if header.data_type == "uint16":
        data = (data.astype(np.float64) / UINT16_REFLECTANCE_SCALE).astype(np.float32)
    wl = np.asarray(header.wavelengths, dtype=np.float64)
    if wl.size > 1 and not np.all(np.diff(wl) > 0):
        raise ValueError("header wavelengths must be strictly increasing")
    return HyperCube(wavelengths=wl, data=data)


def write_cube(
    cube: HyperCube,
    header_path: str | Path,
    raster_path: str | Path,
    interleave: str = "bip",
    data_type: str = "float32",
    fwhm: tuple[float, ...] | None = None,
    extras: tuple[tuple[str, str], ...] = (),
) -> None:
    """Write header + raster such that :func:`read_cube` restores the cube.

    Round trips are bit-exact when ``data_type`` matches the cube's dtype
    (float32 or float64). uint16 output stores reflectance * 10000 and
    rejects values the scale cannot represent.
    """
    interleave = interleave.lower()
    if interleave not in INTERLEAVES:
        raise ValueError(f"unsupported interleave {interleave!r}")
    if data_type not in DATA_TYPE_CODES:
        raise ValueError(f"unsupported data type {data_type!r}")

    if data_type == "uint16":
        scaled = np.round(cube.data.astype(np.float64) * UINT16_REFLECTANCE_SCALE)
        if scaled.max(initial=0.0) > np.iinfo(np.uint16).max:
            raise ValueError("reflectance exceeds the uint16 range (value > 6.5535)")
        out = scaled.astype(_NUMPY_DTYPES["uint16"])
    else:
        out = cube.data.astype(_NUMPY_DTYPES[data_type])

    if interleave == "bsq":
        out = out.transpose(2, 0, 1)
    elif interleave == "bil":
        out = out.transpose(0, 2, 1)
    header = CubeHeader(
        samples=cube.width,
        lines=cube.height,
        bands=cube.bands,
        interleave=interleave,
        data_type=data_type,
        wavelengths=tuple(float(w) for w in cube.wavelengths),
        fwhm=fwhm,
        extras=extras,
    )
    write_header(header, header_path)
    np.ascontiguousarray(out).tofile(raster_path)


def _window_mean(data: np.ndarray, inside: np.ndarray) -> np.ndarray:
    # Mean anchored at the first selected band: exact for spectrally constant
    # input, where plain summation would round (e.g. mean of three 0.4s).
    slab = data[:, :, inside]
    anchor = slab[:, :, 0]
    return anchor + (slab - slab[:, :, :1]).mean(axis=2)


def integrate_to_rgb(
    cube: HyperCube, windows: tuple[tuple[float, float], ...] = DEFAULT_RGB_WINDOWS
) -> RgbImage:
    """Box-integrate the cube into three channels.

    ``windows`` are (low, high) wavelength intervals in ascending order
    (blue, green, red); band membership uses inclusive bounds. Each output
    channel is the arithmetic mean over its window's bands, and the result
    is channel-ordered (R, G, B).
    """
    if len(windows) != 3:
        raise ValueError("exactly three integration windows are required")
    channels = []
    for low, high in windows:
        inside = (cube.wavelengths >= low) & (cube.wavelengths <= high)
        if not inside.any():
            raise ValueError(f"window [{low}, {high}] nm overlaps no cube band")
        channels.append(_window_mean(cube.data.astype(np.float64), inside))
    # windows ascend blue->red; output channels are (R, G, B)
    return RgbImage(data=np.stack(channels[::-1], axis=2))


def rgb_to_cube(rgb: RgbImage, windows: tuple[tuple[float, float], ...] = DEFAULT_RGB_WINDOWS) -> HyperCube:
    """View an RGB image as a 3-band cube so the matching pipeline can ingest it.

    Pseudo-wavelengths are the window centers in ascending order, so band
    order is (B, G, R), the reverse of the image's channel order.
    """
    centers = np.array([(low + high) / 2.0 for low, high in windows], dtype=np.float64)
    return HyperCube(wavelengths=centers, data=np.ascontiguousarray(rgb.data[:, :, ::-1]))
