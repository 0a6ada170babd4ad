"""Spectral angle metric, region mean signatures, and skin-superpixel selection.

The angle between two spectra, viewed as vectors, ignores any positive
global scaling of either input, which is what makes it robust to uniform
illumination gain between captures.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cube import HyperCube
from .segment import SuperpixelMap

__all__ = [
    "spectral_angle",
    "label_means",
    "mean_signature",
    "SkinSignatureSet",
    "skin_signatures",
    "read_mask",
    "write_mask",
    "write_signatures_csv",
    "read_signatures_csv",
]


def spectral_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in radians between two spectra: arccos of their normalized dot product.

    Evaluated in the half-angle form 2*atan2(|a^ - b^|, |a^ + b^|) over the
    unit-normalized vectors, which is the same quantity as the clamped
    arccos but stays accurate near 0 and pi (identical inputs give exactly
    0). For non-negative spectra the result lies in [0, pi/2].
    """
    av = np.asarray(a, dtype=np.float64).ravel()
    bv = np.asarray(b, dtype=np.float64).ravel()
    if av.shape != bv.shape:
        raise ValueError(f"band counts differ: {av.size} vs {bv.size}")
    na = np.linalg.norm(av)
    nb = np.linalg.norm(bv)
    if na == 0.0 or nb == 0.0:
        raise ValueError("spectral angle is undefined for a zero vector")
    an = av / na
    bn = bv / nb
    return float(2.0 * np.arctan2(np.linalg.norm(an - bn), np.linalg.norm(an + bn)))


def label_means(cube: HyperCube, label_map: SuperpixelMap) -> tuple[np.ndarray, np.ndarray]:
    """Per-band mean spectrum and pixel count for every superpixel.

    Returns ``(means, counts)`` with shapes (K, B) and (K,). Means are
    anchored at each region's first row-major pixel so a spectrally
    constant region averages to its constant exactly.
    """
    if (label_map.height, label_map.width) != (cube.height, cube.width):
        raise ValueError("label map dimensions do not match the cube")
    flat = cube.data.reshape(-1, cube.bands).astype(np.float64)
    labels = label_map.labels.ravel()
    k = label_map.k

    counts = np.bincount(labels, minlength=k)
    first = np.full(k, labels.size, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(labels.size))
    anchors = flat[first]

    sums = np.zeros((k, cube.bands), dtype=np.float64)
    np.add.at(sums, labels, flat - anchors[labels])
    return anchors + sums / counts[:, None], counts


def mean_signature(cube: HyperCube, label_map: SuperpixelMap, label: int) -> np.ndarray:
    """Mean spectrum over all pixels carrying ``label``."""
    if not 0 <= label < label_map.k:
        raise ValueError(f"label {label} does not exist in the map (K={label_map.k})")
    means, _ = label_means(cube, label_map)
    return means[label]


@dataclass(frozen=True, eq=False)
class SkinSignatureSet:
    """Mean signatures of the superpixels selected as skin for one image."""

    image_id: str
    labels: np.ndarray
    signatures: np.ndarray
    pixel_counts: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        sigs = np.asarray(self.signatures, dtype=np.float64)
        counts = np.asarray(self.pixel_counts, dtype=np.int64)
        if sigs.ndim != 2 or labels.ndim != 1 or counts.ndim != 1:
            raise ValueError("signature set arrays have inconsistent shapes")
        if not (labels.size == sigs.shape[0] == counts.size):
            raise ValueError("signature set arrays have inconsistent lengths")
        if labels.size == 0:
            raise ValueError("signature set must contain at least one superpixel")
        if np.unique(labels).size != labels.size:
            raise ValueError("duplicate superpixel labels in signature set")
        if counts.min() < 1:
            raise ValueError("pixel counts must be >= 1")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "signatures", sigs)
        object.__setattr__(self, "pixel_counts", counts)

    @property
    def bands(self) -> int:
        return self.signatures.shape[1]

    def __len__(self) -> int:
        return self.labels.size


def skin_signatures(
    cube: HyperCube,
    label_map: SuperpixelMap,
    mask: np.ndarray,
    image_id: str = "",
    min_overlap: float = 0.0,
) -> SkinSignatureSet:
    """Select the superpixels intersecting an annotated skin mask.

    A superpixel qualifies when at least one of its pixels is masked and
    its masked fraction reaches ``min_overlap`` (default 0: any overlap).
    Each entry's signature is the mean over the *entire* superpixel, not
    just the masked pixels; entries are ordered by label.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (cube.height, cube.width):
        raise ValueError("mask dimensions do not match the cube")
    if (label_map.height, label_map.width) != (cube.height, cube.width):
        raise ValueError("label map dimensions do not match the cube")
    if not 0.0 <= min_overlap <= 1.0:
        raise ValueError("min_overlap must lie in [0, 1]")
    if not mask.any():
        raise ValueError("skin mask is empty")

    labels = label_map.labels.ravel()
    overlap = np.bincount(labels[mask.ravel()], minlength=label_map.k)
    means, counts = label_means(cube, label_map)
    keep = (overlap >= 1) & (overlap >= min_overlap * counts)
    selected = np.nonzero(keep)[0]
    if selected.size == 0:
        raise ValueError("mask does not intersect any superpixel at the required overlap")
    return SkinSignatureSet(
        image_id=image_id,
        labels=selected,
        signatures=means[selected],
        pixel_counts=counts[selected],
    )


def _read_pnm_tokens(blob: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated ASCII integers after the magic, skipping comments."""
    tokens: list[int] = []
    pos = 2  # past the magic
    current = b""
    while len(tokens) < count:
        if pos >= len(blob):
            raise ValueError("truncated PNM header")
        ch = blob[pos : pos + 1]
        pos += 1
        if ch == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            if current:
                tokens.append(int(current))
                current = b""
        else:
            current += ch
    return tokens, pos


def read_mask(path: str | Path) -> np.ndarray:
    """Read a skin mask: binary PGM (P5, 8-bit; nonzero = skin) or bitmap PBM (P4; 1 = skin)."""
    blob = Path(path).read_bytes()
    magic = blob[:2]
    if magic == b"P5":
        (width, height, maxval), pos = _read_pnm_tokens(blob, 3)
        if maxval > 255:
            raise ValueError("mask PGM must be 8-bit")
        pixels = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=pos)
        return (pixels.reshape(height, width) > 0).copy()
    if magic == b"P4":
        (width, height), pos = _read_pnm_tokens(blob, 2)
        row_bytes = (width + 7) // 8
        raw = np.frombuffer(blob, dtype=np.uint8, count=row_bytes * height, offset=pos)
        bits = np.unpackbits(raw.reshape(height, row_bytes), axis=1)[:, :width]
        return bits.astype(bool)
    raise ValueError(f"unsupported mask format (magic {magic!r}); expected P5 or P4")


def write_mask(mask: np.ndarray, path: str | Path) -> None:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be a 2-D boolean array")
    height, width = mask.shape
    header = f"P5\n{width} {height}\n255\n".encode()
    Path(path).write_bytes(header + (mask.astype(np.uint8) * 255).tobytes())


def write_signatures_csv(sset: SkinSignatureSet, path: str | Path) -> None:
    """Write one row per skin superpixel: label, then its per-band mean values."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"wavelength_{i + 1}" for i in range(sset.bands)])
        for label, sig in zip(sset.labels, sset.signatures):
            writer.writerow([int(label)] + [repr(float(v)) for v in sig])


def read_signatures_csv(path: str | Path, image_id: str | None = None) -> SkinSignatureSet:
    """Read a signature CSV back; pixel counts are not stored and default to 1."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "label":
        raise ValueError(f"{path}: not a signature CSV (missing 'label' header)")
    labels = [int(row[0]) for row in rows[1:]]
    sigs = [[float(v) for v in row[1:]] for row in rows[1:]]
    return SkinSignatureSet(
        image_id=image_id if image_id is not None else path.stem,
        labels=np.array(labels, dtype=np.int64),
        signatures=np.array(sigs, dtype=np.float64),
        pixel_counts=np.ones(len(labels), dtype=np.int64),
    )
