"""Command-line driver.

Subcommands: synth, segment, signatures, match, cmc, rgb, pipeline.
Exit codes: 0 success, 1 stage failure, 2 usage or config violation.
"""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import build_config
from .cube import infer_header_path, integrate_to_rgb, read_cube, rgb_to_cube, write_cube
from .pipeline import MODES, run_pipeline
from .reid import (
    cmc as compute_cmc,
    distance_matrix as compute_distance_matrix,
    load_manifest,
    read_distance_csv,
    write_cmc_csv,
    write_distance_csv,
)
from .segment import (
    build_graph,
    read_label_map_raw,
    segment as segment_graph,
    write_label_map_pgm,
    write_label_map_raw,
)
from .spectral import read_mask, read_signatures_csv, skin_signatures, write_signatures_csv
from .synth import SyntheticSpec, generate_dataset


def _version(f):
    return click.version_option(__version__, "--version", prog_name="hsreid")(f)


@contextmanager
def _stage():
    """Convert module errors into a one-line diagnostic with exit status 1."""
    try:
        yield
    except (ValueError, KeyError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc


def _build_config(config_file, **overrides):
    try:
        return build_config(config_file, **overrides)
    except (ValueError, OSError) as exc:
        raise click.UsageError(str(exc)) from exc


def _parse_windows_flag(text):
    if text is None:
        return None
    windows = []
    for part in text.split(","):
        lo, sep, hi = part.partition(":")
        if not sep:
            raise click.UsageError(f"bad window spec {part!r}; expected low:high")
        try:
            windows.append((float(lo), float(hi)))
        except ValueError:
            raise click.UsageError(f"bad window spec {part!r}; expected numeric low:high")
    return tuple(windows)


def _header_for(raster: Path) -> Path:
    return raster.with_suffix(".hdr") if raster.suffix else Path(str(raster) + ".hdr")


@click.group()
@_version
def main():
    """Skin-signature person re-identification on hyperspectral cubes."""


@main.command("synth")
@_version
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path), help="Dataset output directory.")
@click.option("--persons", default=15, show_default=True, help="Number of persons (gallery+probe pairs).")
@click.option("--height", default=40, show_default=True)
@click.option("--width", default=40, show_default=True)
@click.option("--bands", default=64, show_default=True, help="Band count on a 400-1000 nm grid.")
@click.option("--noise", default=0.005, show_default=True, help="Additive per-band noise std dev.")
@click.option("--seed", default=0, show_default=True)
@click.option("--metamer/--plain", default=True, show_default=True, help="Make person spectra RGB-indistinguishable.")
@click.option("--min-angle", default=0.15, show_default=True, help="Pairwise person separation in radians.")
@click.option("--gain-min", default=0.7, show_default=True, help="Probe illumination gain lower bound.")
@click.option("--gain-max", default=1.3, show_default=True, help="Probe illumination gain upper bound.")
@click.option("--patch", "patches", multiple=True, help="Skin patch as row,col,height,width (repeatable).")
@click.option("--illumination", type=click.Choice(["scalar", "tilt"]), default="scalar", show_default=True)
def synth_cmd(out_dir, persons, height, width, bands, noise, seed, metamer, min_angle, gain_min, gain_max, patches, illumination):
    """Generate a synthetic gallery/probe dataset with ground-truth masks."""
    rects = []
    for spec_str in patches:
        parts = spec_str.split(",")
        if len(parts) != 4:
            raise click.UsageError(f"bad patch spec {spec_str!r}; expected row,col,height,width")
        rects.append(tuple(int(p) for p in parts))
    with _stage():
        spec = SyntheticSpec(
            height=height,
            width=width,
            wavelengths=np.linspace(400.0, 1000.0, bands),
            n_persons=persons,
            patches=tuple(rects) if rects else SyntheticSpec.__dataclass_fields__["patches"].default,
            noise_sigma=noise,
            seed=seed,
            metamer=metamer,
            min_angle=min_angle,
            gain_range=(gain_min, gain_max),
            illumination=illumination,
        )
        manifest = generate_dataset(spec, out_dir)
    click.echo(f"wrote {len(manifest.entries)} images under {out_dir} (manifest.json included)")


@main.command("segment")
@_version
@click.option("--cube", "cube_path", required=True, type=click.Path(path_type=Path), help="Cube raster path.")
@click.option("--header", "header_path", type=click.Path(path_type=Path), help="Header path (default: alongside the raster).")
@click.option("--K", "k", required=True, type=int, help="Number of superpixels.")
@click.option("--sigma", type=float, help="Similarity kernel bandwidth in radians (default: median edge angle).")
@click.option("--lambda", "lam", type=float, help="Balancing weight (default: data-adaptive).")
@click.option("--out", "out_prefix", required=True, type=click.Path(path_type=Path), help="Output prefix for .pgm/.bin label maps.")
def segment_cmd(cube_path, header_path, k, sigma, lam, out_prefix):
    """Segment one cube into K superpixels and export the label map."""
    if k < 1:
        raise click.UsageError("--K must be >= 1")
    with _stage():
        header = header_path if header_path else infer_header_path(cube_path)
        cube = read_cube(header, cube_path)
        graph = build_graph(cube, sigma=sigma)
        label_map, trace = segment_graph(graph, k, lam=lam)
        write_label_map_pgm(label_map, Path(str(out_prefix) + ".pgm"))
        write_label_map_raw(label_map, Path(str(out_prefix) + ".bin"))
    click.echo(f"{label_map.k} superpixels, objective {trace.final_objective:.6g}")


@main.command("signatures")
@_version
@click.option("--cube", "cube_path", required=True, type=click.Path(path_type=Path))
@click.option("--header", "header_path", type=click.Path(path_type=Path))
@click.option("--labels", "labels_path", required=True, type=click.Path(path_type=Path), help="Raw label map (.bin) from 'segment'.")
@click.option("--mask", "mask_path", required=True, type=click.Path(path_type=Path), help="Skin mask (PGM P5 or PBM P4).")
@click.option("--overlap-fraction", default=0.0, show_default=True, help="Minimum masked fraction of a superpixel.")
@click.option("--image-id", default=None, help="Image id stored in the CSV (default: cube file stem).")
@click.option("--out", "out_csv", required=True, type=click.Path(path_type=Path))
def signatures_cmd(cube_path, header_path, labels_path, mask_path, overlap_fraction, image_id, out_csv):
    """Extract mean signatures of the superpixels that intersect the skin mask."""
    with _stage():
        header = header_path if header_path else infer_header_path(cube_path)
        cube = read_cube(header, cube_path)
        label_map = read_label_map_raw(labels_path)
        mask = read_mask(mask_path)
        sset = skin_signatures(
            cube, label_map, mask,
            image_id=image_id if image_id else Path(cube_path).stem,
            min_overlap=overlap_fraction,
        )
        write_signatures_csv(sset, out_csv)
    click.echo(f"{len(sset)} skin superpixels -> {out_csv}")


@main.command("match")
@_version
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--signatures-dir", required=True, type=click.Path(path_type=Path), help="Directory of <image_id>_signatures.csv files.")
@click.option("--aggregation", type=click.Choice(["mean", "min"]), default="mean", show_default=True)
@click.option("--out", "out_csv", required=True, type=click.Path(path_type=Path))
def match_cmd(manifest_path, signatures_dir, aggregation, out_csv):
    """Compute the probe x gallery distance matrix from per-image signature CSVs."""
    with _stage():
        manifest = load_manifest(manifest_path)
        sig_dir = Path(signatures_dir)

        def load(entry):
            return read_signatures_csv(sig_dir / f"{entry.image_id}_signatures.csv", image_id=entry.image_id)

        probes = [load(e) for e in manifest.probes]
        gallery = [load(e) for e in manifest.gallery]
        matrix = compute_distance_matrix(probes, gallery, aggregation=aggregation)
        write_distance_csv(matrix, out_csv)
    click.echo(f"{len(matrix.probe_ids)}x{len(matrix.gallery_ids)} distances -> {out_csv}")


@main.command("cmc")
@_version
@click.option("--distances", "distances_path", required=True, type=click.Path(path_type=Path))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_csv", required=True, type=click.Path(path_type=Path))
def cmc_cmd(distances_path, manifest_path, out_csv):
    """Evaluate a distance matrix as a closed-set CMC curve."""
    with _stage():
        matrix = read_distance_csv(distances_path)
        manifest = load_manifest(manifest_path)
        curve = compute_cmc(matrix, manifest)
        write_cmc_csv(curve, out_csv)
    click.echo(f"rank-1 {curve.rate(1):.4f} over {curve.n} gallery images -> {out_csv}")


@main.command("rgb")
@_version
@click.option("--cube", "cube_path", required=True, type=click.Path(path_type=Path))
@click.option("--header", "header_path", type=click.Path(path_type=Path))
@click.option("--windows", default=None, help="Three low:high nm windows, comma separated (default 400:500,500:600,600:700).")
@click.option("--out", "out_raster", required=True, type=click.Path(path_type=Path), help="Output 3-band cube raster.")
def rgb_cmd(cube_path, header_path, windows, out_raster):
    """Band-integrate a cube to a 3-band color cube in the same raster format."""
    windows = _parse_windows_flag(windows)
    with _stage():
        header = header_path if header_path else infer_header_path(cube_path)
        cube = read_cube(header, cube_path)
        rgb = integrate_to_rgb(cube, windows) if windows else integrate_to_rgb(cube)
        small = rgb_to_cube(rgb, windows) if windows else rgb_to_cube(rgb)
        write_cube(small, _header_for(Path(out_raster)), out_raster, interleave="bsq", data_type="float32")
    click.echo(f"3-band cube -> {out_raster}")


@main.command("pipeline")
@_version
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--mode", type=click.Choice(list(MODES)), default="hyper", show_default=True)
@click.option("--config", "config_file", type=click.Path(path_type=Path), help="key = value config file.")
@click.option("--label", default=None, help="Run directory name under the output dir (default: the mode).")
@click.option("--K", "k", type=int, help="Superpixel count per image.")
@click.option("--lambda", "lam", type=float, help="Balancing weight.")
@click.option("--sigma", type=float, help="Kernel bandwidth in radians.")
@click.option("--aggregation", type=click.Choice(["mean", "min"]), default=None)
@click.option("--windows", default=None, help="Three low:high nm integration windows.")
@click.option("--overlap-fraction", type=float, default=None)
@click.option("--output-dir", type=click.Path(path_type=Path), default=None)
@click.option("--jobs", default=1, show_default=True, help="Images processed concurrently.")
@click.option("--force", is_flag=True, help="Overwrite an existing run directory.")
def pipeline_cmd(manifest_path, mode, config_file, label, k, lam, sigma, aggregation, windows, overlap_fraction, output_dir, jobs, force):
    """Run manifest -> segmentation -> signatures -> distances -> CMC in one pass."""
    config = _build_config(
        config_file,
        k=k,
        lam=lam,
        sigma=sigma,
        aggregation=aggregation,
        rgb_windows=_parse_windows_flag(windows),
        overlap_fraction=overlap_fraction,
        output_dir=output_dir,
    )
    if jobs < 1:
        raise click.UsageError("--jobs must be >= 1")
    run_dir = config.output_dir / (label if label else mode)
    if run_dir.exists() and not force:
        raise click.UsageError(f"run directory {run_dir} exists; pass --force to overwrite")
    with _stage():
        manifest = load_manifest(manifest_path)
        missing = [
            str(p)
            for e in manifest.entries
            for p in (e.cube_path, infer_header_path(e.cube_path), e.mask_path)
            if not p.exists()
        ]
        if missing:
            raise ValueError("manifest references missing files: " + ", ".join(missing[:5]))
        matrix, curve = run_pipeline(manifest, config, mode=mode, run_dir=run_dir, jobs=jobs)
    click.echo(f"mode={mode} rank-1 {curve.rate(1):.4f} -> {run_dir / 'cmc.csv'}")


if __name__ == "__main__":
    main()
