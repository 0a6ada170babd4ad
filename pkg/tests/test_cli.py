import numpy as np
import pytest
from click.testing import CliRunner

from hsreid.cli import main
from hsreid.config import PipelineConfig, build_config, load_config_file
from hsreid.pipeline import run_pipeline
from hsreid.reid import load_manifest, read_distance_csv
from hsreid.segment import read_label_map_raw
from hsreid.synth import SyntheticSpec, generate_dataset


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    spec = SyntheticSpec(
        height=20,
        width=20,
        wavelengths=np.linspace(400.0, 1000.0, 24),
        n_persons=3,
        patches=((6, 6, 8, 8),),
        noise_sigma=0.002,
        seed=7,
        min_angle=0.25,
    )
    manifest = generate_dataset(spec, root)
    return root, manifest


def run_cli(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


# ---------------------------------------------------------------- config


def test_config_file_parsing(tmp_path):
    path = tmp_path / "pipeline.cfg"
    path.write_text(
        "# pipeline settings\n"
        "K = 12\n"
        "lambda = 0.4\n"
        "sigma = 0.2\n"
        "aggregation = min\n"
        "rgb_windows = 410:490,510:590,610:690\n"
        "overlap_fraction = 0.25\n"
        "output_dir = out/runs\n"
    )
    values = load_config_file(path)
    config = PipelineConfig(**values)
    assert config.k == 12 and config.lam == 0.4 and config.sigma == 0.2
    assert config.aggregation == "min"
    assert config.rgb_windows == ((410.0, 490.0), (510.0, 590.0), (610.0, 690.0))
    assert config.overlap_fraction == 0.25
    assert str(config.output_dir) == "out/runs"


def test_config_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("threads = 4\n")
    with pytest.raises(ValueError, match="unknown config key"):
        load_config_file(path)


def test_config_flags_override_file(tmp_path):
    path = tmp_path / "pipeline.cfg"
    path.write_text("K = 12\nsigma = 0.2\n")
    config = build_config(path, k=5, lam=None)
    assert config.k == 5  # flag wins
    assert config.sigma == 0.2  # file value survives


def test_config_validation():
    with pytest.raises(ValueError, match="K must"):
        PipelineConfig(k=0)
    with pytest.raises(ValueError, match="overlap_fraction"):
        PipelineConfig(overlap_fraction=1.5)
    with pytest.raises(ValueError, match="ascending"):
        PipelineConfig(rgb_windows=((400.0, 520.0), (500.0, 600.0), (600.0, 700.0)))
    with pytest.raises(ValueError, match="aggregation"):
        PipelineConfig(aggregation="median")


# ---------------------------------------------------------------- pipeline api


def test_run_pipeline_writes_artifacts_and_is_repeatable(dataset, tmp_path):
    root, manifest = dataset
    config = PipelineConfig(k=8)
    run_a = tmp_path / "a"
    run_b = tmp_path / "b"
    matrix_a, curve_a = run_pipeline(manifest, config, mode="hyper", run_dir=run_a)
    matrix_b, curve_b = run_pipeline(manifest, config, mode="hyper", run_dir=run_b)
    assert curve_a.rates[-1] == 1.0
    assert np.array_equal(matrix_a.values, matrix_b.values)
    for name in ("distances.csv", "cmc.csv", "p01_am_labels.pgm", "p01_am_signatures.csv"):
        assert (run_a / name).read_bytes() == (run_b / name).read_bytes()


def test_run_pipeline_parallel_jobs_match_serial(dataset, tmp_path):
    root, manifest = dataset
    config = PipelineConfig(k=8)
    serial, _ = run_pipeline(manifest, config, mode="hyper")
    parallel, _ = run_pipeline(manifest, config, mode="hyper", jobs=3)
    assert serial.probe_ids == parallel.probe_ids
    assert np.array_equal(serial.values, parallel.values)


def test_run_pipeline_rgb_mode(dataset):
    root, manifest = dataset
    matrix, curve = run_pipeline(manifest, PipelineConfig(k=8), mode="rgb")
    assert curve.rates[-1] == 1.0
    assert matrix.values.shape == (3, 3)


# ---------------------------------------------------------------- cli


def test_version_and_help_everywhere():
    assert run_cli("--version").exit_code == 0
    for sub in ("synth", "segment", "signatures", "match", "cmc", "rgb", "pipeline"):
        assert run_cli(sub, "--help").exit_code == 0
        assert run_cli(sub, "--version").exit_code == 0


def test_unknown_command_exits_2():
    assert run_cli("florbs").exit_code == 2


def test_cli_synth_and_pipeline_end_to_end(tmp_path):
    ds = tmp_path / "ds"
    result = run_cli(
        "synth", "--out", ds, "--persons", 2, "--height", 16, "--width", 16,
        "--bands", 16, "--seed", 3, "--patch", "5,5,6,6", "--min-angle", 0.3,
    )
    assert result.exit_code == 0, result.output
    result = run_cli(
        "pipeline", "--manifest", ds / "manifest.json", "--mode", "hyper",
        "--K", 6, "--output-dir", tmp_path / "runs", "--label", "demo",
    )
    assert result.exit_code == 0, result.output
    cmc_lines = (tmp_path / "runs" / "demo" / "cmc.csv").read_text().splitlines()
    assert cmc_lines[0] == "rank,rate"
    assert cmc_lines[-1].endswith("1.0")  # closed set reaches 1 at rank N


def test_cli_pipeline_refuses_existing_run_dir(tmp_path, dataset):
    root, _ = dataset
    args = [
        "pipeline", "--manifest", root / "manifest.json", "--K", 6,
        "--output-dir", tmp_path / "runs", "--label", "x",
    ]
    assert run_cli(*args).exit_code == 0
    assert run_cli(*args).exit_code == 2  # refuses to overwrite
    assert run_cli(*args, "--force").exit_code == 0


def test_cli_segment_k1_single_label(tmp_path, dataset):
    root, manifest = dataset
    cube = manifest.entries[0].cube_path
    out = tmp_path / "seg"
    result = run_cli("segment", "--cube", cube, "--K", 1, "--out", out)
    assert result.exit_code == 0, result.output
    label_map = read_label_map_raw(tmp_path / "seg.bin")
    assert label_map.k == 1 and np.all(label_map.labels == 0)
    assert (tmp_path / "seg.pgm").exists() and (tmp_path / "seg.pgm.txt").exists()


def test_cli_stage_chain_matches_pipeline(tmp_path, dataset):
    root, manifest = dataset
    sig_dir = tmp_path / "sigs"
    sig_dir.mkdir()
    for entry in manifest.entries:
        prefix = tmp_path / f"{entry.image_id}"
        assert run_cli("segment", "--cube", entry.cube_path, "--K", 8, "--out", prefix).exit_code == 0
        result = run_cli(
            "signatures", "--cube", entry.cube_path, "--labels", f"{prefix}.bin",
            "--mask", entry.mask_path, "--image-id", entry.image_id,
            "--out", sig_dir / f"{entry.image_id}_signatures.csv",
        )
        assert result.exit_code == 0, result.output
    distances_csv = tmp_path / "distances.csv"
    result = run_cli("match", "--manifest", root / "manifest.json", "--signatures-dir", sig_dir, "--out", distances_csv)
    assert result.exit_code == 0, result.output
    result = run_cli("cmc", "--distances", distances_csv, "--manifest", root / "manifest.json", "--out", tmp_path / "cmc.csv")
    assert result.exit_code == 0, result.output

    matrix = read_distance_csv(distances_csv)
    api_matrix, _ = run_pipeline(load_manifest(root / "manifest.json"), PipelineConfig(k=8), mode="hyper")
    assert matrix.probe_ids == api_matrix.probe_ids
    assert np.allclose(matrix.values, api_matrix.values, rtol=1e-12)


def test_cli_rgb_produces_three_band_cube(tmp_path, dataset):
    root, manifest = dataset
    out = tmp_path / "small.raw"
    result = run_cli("rgb", "--cube", manifest.entries[0].cube_path, "--out", out)
    assert result.exit_code == 0, result.output
    from hsreid.cube import read_cube

    small = read_cube(tmp_path / "small.hdr", out)
    assert small.bands == 3


def test_cli_config_violation_exits_2(tmp_path, dataset):
    root, _ = dataset
    result = run_cli(
        "pipeline", "--manifest", root / "manifest.json", "--K", 0,
        "--output-dir", tmp_path / "runs", "--label", "bad",
    )
    assert result.exit_code == 2
    assert not (tmp_path / "runs" / "bad").exists()  # no partial artifacts


def test_cli_stage_failure_exits_1(tmp_path):
    result = run_cli("pipeline", "--manifest", tmp_path / "missing.json", "--output-dir", tmp_path / "runs")
    assert result.exit_code == 1
    result = run_cli("segment", "--cube", tmp_path / "missing.raw", "--K", 2, "--out", tmp_path / "x")
    assert result.exit_code == 1


def test_cli_pipeline_validates_before_writing(tmp_path, dataset):
    root, manifest = dataset
    broken = tmp_path / "broken.json"
    text = (root / "manifest.json").read_text().replace("p01_am.raw", "gone.raw")
    broken.write_text(text)
    result = run_cli("pipeline", "--manifest", broken, "--output-dir", tmp_path / "runs", "--label", "x")
    assert result.exit_code == 1
    assert "missing" in result.output
    assert not (tmp_path / "runs" / "x" / "distances.csv").exists()
