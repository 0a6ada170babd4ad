"""Pipeline configuration: defaults, key=value config files, flag overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .cube import DEFAULT_RGB_WINDOWS

__all__ = ["PipelineConfig", "load_config_file", "build_config"]


@dataclass
class PipelineConfig:
    """Knobs shared by the CLI subcommands and the end-to-end pipeline.

    ``lam`` and ``sigma`` default to None, meaning data-adaptive choices
    are made per image at segmentation time.
    """

    k: int = 64
    lam: float | None = None
    sigma: float | None = None
    aggregation: str = "mean"
    rgb_windows: tuple[tuple[float, float], ...] = DEFAULT_RGB_WINDOWS
    overlap_fraction: float = 0.0
    output_dir: Path = Path("runs")

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.k < 1:
            raise ValueError("K must be >= 1")
        if self.lam is not None and self.lam < 0.0:
            raise ValueError("lambda must be >= 0")
        if self.sigma is not None and self.sigma <= 0.0:
            raise ValueError("sigma must be > 0")
        if self.aggregation not in ("mean", "min"):
            raise ValueError("aggregation must be 'mean' or 'min'")
        if not 0.0 <= self.overlap_fraction <= 1.0:
            raise ValueError("overlap_fraction must lie in [0, 1]")
        windows = tuple((float(lo), float(hi)) for lo, hi in self.rgb_windows)
        if len(windows) != 3:
            raise ValueError("rgb_windows must list exactly three intervals")
        for lo, hi in windows:
            if not lo < hi:
                raise ValueError(f"rgb window [{lo}, {hi}] is not an interval")
        for (_, hi), (lo, _) in zip(windows, windows[1:]):
            if hi > lo:
                raise ValueError("rgb windows must be ascending and non-overlapping")
        self.rgb_windows = windows


# config-file key -> dataclass field
_KEY_TO_FIELD = {
    "k": "k",
    "lambda": "lam",
    "sigma": "sigma",
    "aggregation": "aggregation",
    "rgb_windows": "rgb_windows",
    "overlap_fraction": "overlap_fraction",
    "output_dir": "output_dir",
}


def _parse_windows(text: str) -> tuple[tuple[float, float], ...]:
    """Parse ``400:500,500:600,600:700`` into three (low, high) pairs."""
    windows = []
    for part in text.split(","):
        lo, _, hi = part.partition(":")
        try:
            windows.append((float(lo), float(hi)))
        except ValueError as exc:
            raise ValueError(f"bad window spec {part!r}; expected low:high") from exc
    return tuple(windows)


def load_config_file(path: str | Path) -> dict:
    """Read ``key = value`` lines ('#' comments allowed) into config field values."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _KEY_TO_FIELD:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        field_name = _KEY_TO_FIELD[key]
        if field_name == "k":
            values[field_name] = int(value)
        elif field_name in ("lam", "sigma", "overlap_fraction"):
            values[field_name] = float(value)
        elif field_name == "rgb_windows":
            values[field_name] = _parse_windows(value)
        elif field_name == "output_dir":
            values[field_name] = Path(value)
        else:
            values[field_name] = value
    return values


def build_config(config_file: str | Path | None = None, **overrides) -> PipelineConfig:
    """Layer defaults, then the config file, then explicit (non-None) overrides."""
    values: dict = {}
    if config_file is not None:
        values.update(load_config_file(config_file))
    valid = {f.name for f in fields(PipelineConfig)}
    for key, value in overrides.items():
        if key not in valid:
            raise ValueError(f"unknown config field {key!r}")
        if value is not None:
            values[key] = value
    return PipelineConfig(**values)
