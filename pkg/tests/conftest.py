import os
from pathlib import Path

import numpy as np
import pytest

from rodnn.network import DetectorLayout
from rodnn.wavefield import GridSpec

REPO = Path(__file__).resolve().parent.parent


def data_root() -> Path:
    return Path(os.environ.get("RODNN_DATA_DIR", REPO / "data"))


def dataset_dir(name: str) -> Path | None:
    d = data_root() / name
    return d if (d / "train-labels-idx1-ubyte").exists() or (d / "train-labels-idx1-ubyte.gz").exists() else None


def pixel_layout(grid: GridSpec) -> DetectorLayout:
    """Ten single-sample detectors spread over a small (>= 7x7) grid."""
    _, x = grid.coordinates()
    y, _ = grid.coordinates()
    cells = [(1, 1), (1, 3), (1, 5), (3, 0), (3, 2), (3, 4), (3, 6), (5, 1), (5, 3), (5, 5)]
    centers = tuple((float(x[c]), float(y[r])) for r, c in cells)
    return DetectorLayout(centers, (grid.pitch,) * 10)


def band_limited(rng: np.random.Generator, grid: GridSpec) -> np.ndarray:
    """Random field with no spectral content at or beyond the evanescent cutoff."""
    fy, fx = grid.frequencies()
    lam = grid.wavelength
    keep = (lam * fy[:, None]) ** 2 + (lam * fx[None, :]) ** 2 < 1.0
    spec = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * keep
    return np.fft.ifft2(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
