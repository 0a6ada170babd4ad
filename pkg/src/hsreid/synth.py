"""Synthetic hyperspectral scenes with ground truth for segmentation and matching.

Each generated person carries a narrowband skin signature; in metamer mode
all person signatures share identical means over the three color windows,
so they collapse to the same RGB triple while staying mutually separated
in spectral angle. Scenes place a skin patch on a spectrally distant
background, probes get a per-image global illumination gain and fresh
sensor noise, and everything is written in the cube/mask/manifest formats
the rest of the pipeline ingests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cube import DEFAULT_RGB_WINDOWS, HyperCube, write_cube
from .reid import DatasetManifest, ManifestEntry, save_manifest
from .spectral import spectral_angle, write_mask

__all__ = [
    "SyntheticSpec",
    "MetamerPair",
    "window_means",
    "make_metamer_pair",
    "make_metamer_family",
    "make_separated_spectra",
    "generate_dataset",
]

# Per-window mean agreement required of a metamer pair (relative).
METAMER_TOL = 1e-9


def _default_wavelengths() -> np.ndarray:
    return np.linspace(400.0, 1000.0, 64)


@dataclass
class SyntheticSpec:
    """Parameters of one generated gallery/probe dataset."""

    height: int = 40
    width: int = 40
    wavelengths: np.ndarray = field(default_factory=_default_wavelengths)
    n_persons: int = 15
    patches: tuple[tuple[int, int, int, int], ...] = ((14, 14, 12, 12),)
    noise_sigma: float = 0.005
    seed: int = 0
    metamer: bool = True
    min_angle: float = 0.15
    windows: tuple[tuple[float, float], ...] = DEFAULT_RGB_WINDOWS
    gain_range: tuple[float, float] = (0.7, 1.3)
    illumination: str = "scalar"
    tilt_max: float = 0.2
    background_min_angle: float = 0.5

    def __post_init__(self):
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        if self.n_persons < 2:
            raise ValueError("need at least two persons")
        if self.noise_sigma < 0.0:
            raise ValueError("noise level must be >= 0")
        if not self.patches:
            raise ValueError("at least one skin patch rectangle is required")
        for row, col, ph, pw in self.patches:
            if ph < 1 or pw < 1 or row < 0 or col < 0 or row + ph > self.height or col + pw > self.width:
                raise ValueError(f"patch {(row, col, ph, pw)} does not fit inside {self.height}x{self.width}")
        lo, hi = self.gain_range
        if not 0.0 < lo <= hi:
            raise ValueError("gain range must satisfy 0 < low <= high")
        if self.illumination not in ("scalar", "tilt"):
            raise ValueError("illumination must be 'scalar' or 'tilt'")


@dataclass(frozen=True, eq=False)
class MetamerPair:
    """Two spectra indistinguishable after window integration yet separated in angle."""

    first: np.ndarray
    second: np.ndarray
    windows: tuple[tuple[float, float], ...]
    min_angle: float
    wavelengths: np.ndarray

    def __post_init__(self):
        m1 = window_means(self.first, self.wavelengths, self.windows)
        m2 = window_means(self.second, self.wavelengths, self.windows)
        rel = np.abs(m1 - m2) / np.maximum(np.maximum(np.abs(m1), np.abs(m2)), 1e-30)
        if rel.max() > METAMER_TOL:
            raise ValueError(f"window means differ by {rel.max():.3e} relative (> {METAMER_TOL})")
        if spectral_angle(self.first, self.second) < self.min_angle:
            raise ValueError("pair does not reach the required angular separation")


def window_means(spectrum: np.ndarray, wavelengths: np.ndarray, windows) -> np.ndarray:
    """Mean value of a spectrum inside each (low, high) window, inclusive bounds."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    out = []
    for low, high in windows:
        inside = (wavelengths >= low) & (wavelengths <= high)
        if not inside.any():
            raise ValueError(f"window [{low}, {high}] nm covers no band")
        out.append(spectrum[inside].mean())
    return np.array(out)


def _sinusoid_mix(wavelengths: np.ndarray, rng: np.random.Generator, n_components: int = 3) -> np.ndarray:
    """Smooth zero-centered waveform with bounded crest factor."""
    span = wavelengths[-1] - wavelengths[0] if wavelengths.size > 1 else 1.0
    t = (wavelengths - wavelengths[0]) / span
    wave = np.zeros_like(t)
    for _ in range(n_components):
        freq = rng.uniform(1.5, max(3.0, wavelengths.size / 6.0))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave += np.sin(2.0 * np.pi * freq * t + phase)
    return wave / np.sqrt(n_components)


def _smooth_base(wavelengths: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    wave = _sinusoid_mix(wavelengths, rng)
    wave = wave / max(1.0, float(np.abs(wave).max()))
    return 0.55 + 0.2 * wave


def _balanced_wave(wavelengths: np.ndarray, windows, rng: np.random.Generator) -> np.ndarray:
    """Oscillation whose mean vanishes inside every window; free elsewhere.

    Window bounds are inclusive, so a band sitting exactly on a shared
    endpoint belongs to two windows; such bands are pinned to zero and each
    window balances over its exclusive bands, keeping every window's mean
    at zero simultaneously.
    """
    wave = _sinusoid_mix(wavelengths, rng)
    masks = [(wavelengths >= low) & (wavelengths <= high) for low, high in windows]
    shared = np.sum(masks, axis=0) > 1
    wave[shared] = 0.0
    for inside in masks:
        exclusive = inside & ~shared
        if exclusive.any():
            wave[exclusive] -= wave[inside].sum() / np.count_nonzero(exclusive)
        else:
            wave[inside] = 0.0
    return wave


def _scaled_perturbation(
    base: np.ndarray,
    wave: np.ndarray,
    target_ratio: float,
) -> np.ndarray:
    """Scale a wave toward ``|p|/|base| ~ target_ratio`` without breaking non-negativity."""
    wave_norm = float(np.linalg.norm(wave))
    if wave_norm == 0.0:
        return np.zeros_like(wave)
    scale = target_ratio * float(np.linalg.norm(base)) / wave_norm
    with np.errstate(divide="ignore"):
        headroom = np.where(np.abs(wave) > 0.0, 0.95 * base / np.maximum(np.abs(wave), 1e-300), np.inf)
    return wave * min(scale, float(headroom.min()))


def make_metamer_pair(
    wavelengths: np.ndarray,
    windows=DEFAULT_RGB_WINDOWS,
    min_angle: float = 0.15,
    seed: int = 0,
    max_retries: int = 100,
) -> MetamerPair:
    """Construct two non-negative spectra with equal window means and angle >= ``min_angle``.

    A base spectrum is perturbed by +/- one window-balanced oscillation;
    the oscillation amplitude is pushed toward the target angle while
    keeping both spectra non-negative, retrying with fresh draws until the
    separation is met (ValueError after ``max_retries`` failed draws).
    """
    wavelengths = np.asarray(wavelengths, dtype=np.float64)
    if not 0.0 < min_angle <= 0.5:
        raise ValueError("min_angle must lie in (0, 0.5]")
    for low, high in windows:
        if np.count_nonzero((wavelengths >= low) & (wavelengths <= high)) < 2:
            raise ValueError(f"window [{low}, {high}] nm needs at least two bands")
    rng = np.random.default_rng(seed)
    target = np.tan(min_angle / 2.0) * 1.4
    for _ in range(max_retries):
        base = _smooth_base(wavelengths, rng)
        p = _scaled_perturbation(base, _balanced_wave(wavelengths, windows, rng), target)
        first = np.maximum(base + p, 0.0)
        second = np.maximum(base - p, 0.0)
        if spectral_angle(first, second) >= min_angle:
            return MetamerPair(
                first=first, second=second, windows=tuple(windows), min_angle=min_angle, wavelengths=wavelengths
            )
    raise ValueError(
        f"could not build a metamer pair with angle >= {min_angle} rad in {max_retries} draws; "
        "the band grid is too coarse for that separation"
    )


def make_metamer_family(
    wavelengths: np.ndarray,
    windows,
    n: int,
    min_angle: float,
    rng: np.random.Generator,
    max_retries: int = 400,
) -> np.ndarray:
    """n spectra sharing identical window means, pairwise separated by ``min_angle``."""
    wavelengths = np.asarray(wavelengths, dtype=np.float64)
    base = _smooth_base(wavelengths, rng)
    target = np.tan(min_angle / 2.0) * 2.2
    members: list[np.ndarray] = []
    attempts = 0
    while len(members) < n:
        if attempts >= max_retries:
            raise ValueError(f"could not place {n} metamer spectra at >= {min_angle} rad separation")
        attempts += 1
        p = _scaled_perturbation(base, _balanced_wave(wavelengths, windows, rng), target)
        candidate = np.maximum(base + p, 0.0)
        if all(spectral_angle(candidate, m) >= min_angle for m in members):
            members.append(candidate)
    return np.stack(members)


def make_separated_spectra(
    wavelengths: np.ndarray,
    n: int,
    min_angle: float,
    rng: np.random.Generator,
    max_retries: int = 400,
) -> np.ndarray:
    """n smooth positive spectra with pairwise spectral angle >= ``min_angle``."""
    members: list[np.ndarray] = []
    attempts = 0
    while len(members) < n:
        if attempts >= max_retries:
            raise ValueError(f"could not place {n} spectra at >= {min_angle} rad separation")
        attempts += 1
        candidate = _bump_spectrum(wavelengths, rng)
        if all(spectral_angle(candidate, m) >= min_angle for m in members):
            members.append(candidate)
    return np.stack(members)


def _bump_spectrum(wavelengths: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Localized positive bump on a low floor; directions vary strongly with the center."""
    span = wavelengths[-1] - wavelengths[0] if wavelengths.size > 1 else 1.0
    center = rng.uniform(wavelengths[0], wavelengths[-1])
    width = rng.uniform(0.04, 0.12) * span
    return 0.03 + 0.8 * np.exp(-((wavelengths - center) ** 2) / (2.0 * width**2))


def _pick_background(
    wavelengths: np.ndarray,
    signatures: np.ndarray,
    min_angle: float,
    rng: np.random.Generator,
    max_retries: int = 400,
) -> np.ndarray:
    for _ in range(max_retries):
        candidate = _bump_spectrum(wavelengths, rng)
        if all(spectral_angle(candidate, s) >= min_angle for s in signatures):
            return candidate
    raise ValueError("could not find a background spectrum separated from all skin signatures")


def _gain_profile(spec: SyntheticSpec, gain: float, rng: np.random.Generator) -> np.ndarray:
    """Per-band illumination multiplier; flat unless the tilt flag is set."""
    if spec.illumination == "scalar":
        return np.full(spec.wavelengths.size, gain)
    mid = 0.5 * (spec.wavelengths[0] + spec.wavelengths[-1])
    half = 0.5 * (spec.wavelengths[-1] - spec.wavelengths[0])
    slope = rng.uniform(-spec.tilt_max, spec.tilt_max)
    return gain * (1.0 + slope * (spec.wavelengths - mid) / half)


def _render_image(
    spec: SyntheticSpec,
    signature: np.ndarray,
    background: np.ndarray,
    gain_profile: np.ndarray,
    rng: np.random.Generator,
) -> HyperCube:
    scene = np.broadcast_to(background, (spec.height, spec.width, spec.wavelengths.size)).copy()
    for row, col, ph, pw in spec.patches:
        scene[row : row + ph, col : col + pw, :] = signature
    scene = scene * gain_profile
    if spec.noise_sigma > 0.0:
        scene = scene + rng.normal(0.0, spec.noise_sigma, scene.shape)
    scene = np.maximum(scene, 0.0)
    return HyperCube(wavelengths=spec.wavelengths, data=scene.astype(np.float32))


def _patch_mask(spec: SyntheticSpec) -> np.ndarray:
    mask = np.zeros((spec.height, spec.width), dtype=bool)
    for row, col, ph, pw in spec.patches:
        mask[row : row + ph, col : col + pw] = True
    return mask


def generate_dataset(spec: SyntheticSpec, out_dir: str | Path) -> DatasetManifest:
    """Write one gallery and one probe cube per person, plus masks and a manifest.

    The random stream is split per image, so outputs are byte-identical
    for equal seeds regardless of generation order. Returns the manifest
    (paths resolved against ``out_dir``); ``out_dir/manifest.json`` holds
    the same content with relative paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    sig_rng = np.random.default_rng((spec.seed, 1))
    if spec.metamer:
        signatures = make_metamer_family(spec.wavelengths, spec.windows, spec.n_persons, spec.min_angle, sig_rng)
    else:
        signatures = make_separated_spectra(spec.wavelengths, spec.n_persons, spec.min_angle, sig_rng)
    background = _pick_background(
        spec.wavelengths, signatures, spec.background_min_angle, np.random.default_rng((spec.seed, 2))
    )

    mask = _patch_mask(spec)
    entries = []
    for person in range(spec.n_persons):
        person_id = f"person{person + 1:02d}"
        for role, tag in (("gallery", "am"), ("probe", "pm")):
            image_id = f"p{person + 1:02d}_{tag}"
            rng = np.random.default_rng((spec.seed, 3, person, 0 if role == "gallery" else 1))
            gain = 1.0 if role == "gallery" else float(rng.uniform(*spec.gain_range))
            profile = _gain_profile(spec, gain, rng)
            cube = _render_image(spec, signatures[person], background, profile, rng)
            raster = out / f"{image_id}.raw"
            write_cube(cube, out / f"{image_id}.hdr", raster, interleave="bsq", data_type="float32")
            mask_path = out / f"{image_id}_mask.pgm"
            write_mask(mask, mask_path)
            entries.append(
                ManifestEntry(
                    image_id=image_id,
                    person_id=person_id,
                    role=role,
                    cube_path=raster,
                    mask_path=mask_path,
                )
            )
    manifest = DatasetManifest(entries=tuple(entries))
    save_manifest(manifest, out / "manifest.json")
    return manifest
