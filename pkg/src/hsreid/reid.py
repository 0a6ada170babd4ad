"""Closed-set matching of probe images against a gallery and CMC evaluation.

An image is represented by the mean signatures of its skin superpixels;
the distance between two images aggregates the spectral angle over all
cross pairs of those signatures (mean by default, min optionally). Probes
are ranked by ascending distance and summarized as a cumulative matching
characteristic curve.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .spectral import SkinSignatureSet

__all__ = [
    "ManifestEntry",
    "DatasetManifest",
    "load_manifest",
    "save_manifest",
    "image_distance",
    "DistanceMatrix",
    "distance_matrix",
    "rank_of_match",
    "CmcCurve",
    "cmc",
    "write_distance_csv",
    "read_distance_csv",
    "write_cmc_csv",
]

ROLES = ("gallery", "probe")
AGGREGATIONS = ("mean", "min")


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    person_id: str
    role: str
    cube_path: Path
    mask_path: Path

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        object.__setattr__(self, "cube_path", Path(self.cube_path))
        object.__setattr__(self, "mask_path", Path(self.mask_path))


@dataclass(frozen=True)
class DatasetManifest:
    """Gallery/probe inventory. Closed set: every probe person is enrolled in the gallery."""

    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        ids = [e.image_id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("image ids in a manifest must be unique")
        gallery_people = {e.person_id for e in entries if e.role == "gallery"}
        probes = [e for e in entries if e.role == "probe"]
        if not gallery_people or not probes:
            raise ValueError("manifest needs at least one gallery and one probe entry")
        missing = sorted({p.person_id for p in probes} - gallery_people)
        if missing:
            raise ValueError(f"probe person ids absent from the gallery (open set): {missing}")
        object.__setattr__(self, "entries", entries)

    @property
    def gallery(self) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.role == "gallery")

    @property
    def probes(self) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.role == "probe")

    def person_of(self, image_id: str) -> str:
        for e in self.entries:
            if e.image_id == image_id:
                return e.person_id
        raise KeyError(f"image id {image_id!r} not in manifest")


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest JSON document; relative paths resolve against the file's directory."""
    path = Path(path)
    doc = json.loads(path.read_text())
    if not isinstance(doc, dict) or "entries" not in doc:
        raise ValueError(f"{path}: manifest JSON must be an object with an 'entries' list")
    base = path.parent
    entries = []
    for item in doc["entries"]:
        try:
            entries.append(
                ManifestEntry(
                    image_id=str(item["image_id"]),
                    person_id=str(item["person_id"]),
                    role=str(item["role"]),
                    cube_path=base / item["cube_path"],
                    mask_path=base / item["mask_path"],
                )
            )
        except KeyError as exc:
            raise ValueError(f"{path}: manifest entry missing field {exc}") from exc
    return DatasetManifest(entries=tuple(entries))


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write manifest JSON with paths stored relative to the output file where possible."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p: Path) -> str:
        try:
            return str(p.resolve().relative_to(base))
        except ValueError:
            return str(p)

    doc = {
        "entries": [
            {
                "image_id": e.image_id,
                "person_id": e.person_id,
                "role": e.role,
                "cube_path": rel(e.cube_path),
                "mask_path": rel(e.mask_path),
            }
            for e in manifest.entries
        ]
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _cross_angles(probe: SkinSignatureSet, gallery: SkinSignatureSet) -> np.ndarray:
    if probe.bands != gallery.bands:
        raise ValueError(f"band counts differ: {probe.bands} vs {gallery.bands}")
    p = probe.signatures
    g = gallery.signatures
    p_norm = np.linalg.norm(p, axis=1)
    g_norm = np.linalg.norm(g, axis=1)
    if p_norm.min(initial=np.inf) == 0.0 or g_norm.min(initial=np.inf) == 0.0:
        raise ValueError("signature sets contain a zero vector")
    pu = p / p_norm[:, None]
    gu = g / g_norm[:, None]
    # half-angle form, accurate down to zero angle (see spectral.spectral_angle)
    diff = np.linalg.norm(pu[:, None, :] - gu[None, :, :], axis=2)
    summ = np.linalg.norm(pu[:, None, :] + gu[None, :, :], axis=2)
    return 2.0 * np.arctan2(diff, summ)


def image_distance(probe: SkinSignatureSet, gallery: SkinSignatureSet, aggregation: str = "mean") -> float:
    """Aggregate spectral angle over all (probe superpixel, gallery superpixel) pairs."""
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
    # reduce in sorted order: the angle multiset is the same either way round,
    # so swapping the arguments changes nothing, not even the rounding
    angles = np.sort(_cross_angles(probe, gallery), axis=None)
    return float(angles.mean()) if aggregation == "mean" else float(angles[0])


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Image-level distances, probes on rows and gallery on columns."""

    probe_ids: tuple[str, ...]
    gallery_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (len(self.probe_ids), len(self.gallery_ids)):
            raise ValueError("distance matrix shape does not match its id lists")
        if not np.all(np.isfinite(values)) or (values.size and values.min() < 0.0):
            raise ValueError("distances must be finite and non-negative")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probe_ids", tuple(self.probe_ids))
        object.__setattr__(self, "gallery_ids", tuple(self.gallery_ids))


def distance_matrix(
    probes: Sequence[SkinSignatureSet],
    gallery: Sequence[SkinSignatureSet],
    aggregation: str = "mean",
) -> DistanceMatrix:
    if not probes or not gallery:
        raise ValueError("need at least one probe and one gallery signature set")
    values = np.empty((len(probes), len(gallery)), dtype=np.float64)
    for i, p in enumerate(probes):
        for j, g in enumerate(gallery):
            values[i, j] = image_distance(p, g, aggregation)
    return DistanceMatrix(
        probe_ids=tuple(p.image_id for p in probes),
        gallery_ids=tuple(g.image_id for g in gallery),
        values=values,
    )


def rank_of_match(
    distances: np.ndarray,
    gallery_image_ids: Sequence[str],
    gallery_person_ids: Sequence[str],
    probe_person_id: str,
) -> int:
    """1-based position of the correct gallery image under ascending distance.

    Exact distance ties break by ascending gallery image id; when several
    gallery images share the probe's person, the best-ranked one counts.
    """
    distances = np.asarray(distances, dtype=np.float64)
    if not (len(distances) == len(gallery_image_ids) == len(gallery_person_ids)):
        raise ValueError("row length and gallery id lists must agree")
    if probe_person_id not in set(gallery_person_ids):
        raise ValueError(f"probe person {probe_person_id!r} is not enrolled in the gallery")
    order = sorted(range(len(distances)), key=lambda j: (distances[j], gallery_image_ids[j]))
    for rank, j in enumerate(order, start=1):
        if gallery_person_ids[j] == probe_person_id:
            return rank
    raise AssertionError("unreachable: closed set checked above")


@dataclass(frozen=True, eq=False)
class CmcCurve:
    """Recognition rate at each rank r = 1..N; non-decreasing and 1.0 at rank N."""

    rates: np.ndarray

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=np.float64)
        if rates.ndim != 1 or rates.size == 0:
            raise ValueError("rates must be a non-empty 1-D array")
        if rates.min() < 0.0 or rates.max() > 1.0:
            raise ValueError("rates must lie in [0, 1]")
        if np.any(np.diff(rates) < 0.0):
            raise ValueError("rates must be non-decreasing in rank")
        if rates[-1] != 1.0:
            raise ValueError("closed-set curve must reach 1.0 at rank N")
        rates.flags.writeable = False
        object.__setattr__(self, "rates", rates)

    @property
    def n(self) -> int:
        return self.rates.size

    def rate(self, rank: int) -> float:
        return float(self.rates[rank - 1])


def cmc(matrix: DistanceMatrix, manifest: DatasetManifest) -> CmcCurve:
    """Fraction of probes whose correct match appears within the top r ranks, r = 1..N."""
    manifest_probe_ids = {e.image_id for e in manifest.probes}
    manifest_gallery_ids = {e.image_id for e in manifest.gallery}
    if not set(matrix.probe_ids) <= manifest_probe_ids:
        raise ValueError("matrix probe ids do not align with the manifest probes")
    if not set(matrix.gallery_ids) <= manifest_gallery_ids:
        raise ValueError("matrix gallery ids do not align with the manifest gallery")
    gallery_people = [manifest.person_of(g) for g in matrix.gallery_ids]
    n = len(matrix.gallery_ids)
    hits = np.zeros(n, dtype=np.int64)
    for i, probe_id in enumerate(matrix.probe_ids):
        rank = rank_of_match(matrix.values[i], matrix.gallery_ids, gallery_people, manifest.person_of(probe_id))
        hits[rank - 1] += 1
    return CmcCurve(rates=np.cumsum(hits) / len(matrix.probe_ids))


def write_distance_csv(matrix: DistanceMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["probe_id"] + list(matrix.gallery_ids))
        for pid, row in zip(matrix.probe_ids, matrix.values):
            writer.writerow([pid] + [repr(float(v)) for v in row])


def read_distance_csv(path: str | Path) -> DistanceMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["probe_id"]:
        raise ValueError(f"{path}: not a distance CSV (missing 'probe_id' header)")
    gallery_ids = tuple(rows[0][1:])
    probe_ids = tuple(row[0] for row in rows[1:])
    values = np.array([[float(v) for v in row[1:]] for row in rows[1:]], dtype=np.float64)
    return DistanceMatrix(probe_ids=probe_ids, gallery_ids=gallery_ids, values=values)


def write_cmc_csv(curve: CmcCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "rate"])
        for rank in range(1, curve.n + 1):
            writer.writerow([rank, repr(curve.rate(rank))])
