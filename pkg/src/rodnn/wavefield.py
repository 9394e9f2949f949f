"""Complex scalar fields sampled on a uniform grid.

Samples are stored row-major with index ``(iy, ix)``. The physical center of
sample ``ix`` sits at ``(ix + 0.5 - nx/2) * pitch``, which keeps the grid
symmetric about the optical axis. All lengths are in micrometres.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft


@dataclass(frozen=True)
class GridSpec:
    """Sampling grid shared by every plane of a network."""

    nx: int = 120
    ny: int = 120
    pitch: float = 1.0
    wavelength: float = 1.55

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid needs at least one sample per axis, got {self.ny}x{self.nx}")
        if not self.pitch > 0:
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def extent(self) -> tuple[float, float]:
        """Physical size ``(height, width)`` in micrometres."""
        return (self.ny * self.pitch, self.nx * self.pitch)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """1D sample-center coordinates ``(y, x)``."""
        x = (np.arange(self.nx) + 0.5 - self.nx / 2) * self.pitch
        y = (np.arange(self.ny) + 0.5 - self.ny / 2) * self.pitch
        return y, x

    def frequencies(self, pad_factor: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Spatial frequencies ``(fy, fx)`` in 1/um for the (optionally padded) grid.

        Bin ``k`` maps to ``k / (N * pitch)``, wrapping to negative values above N/2.
        """
        fy = sfft.fftfreq(self.ny * pad_factor, d=self.pitch)
        fx = sfft.fftfreq(self.nx * pad_factor, d=self.pitch)
        return fy, fx


@dataclass(frozen=True, eq=False)
class WaveField:
    grid: GridSpec
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.complex128)
        if samples.shape != self.grid.shape:
            raise ValueError(f"samples shape {samples.shape} does not match grid {self.grid.shape}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @classmethod
    def zeros(cls, grid: GridSpec) -> WaveField:
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def plane_wave(cls, grid: GridSpec, amplitude: complex = 1.0) -> WaveField:
        return cls(grid, np.full(grid.shape, amplitude, dtype=np.complex128))

    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2


def total_power(field: WaveField) -> float:
    """Sum of ``|sample|^2`` over the grid (not area weighted)."""
    return float(np.sum(field.samples.real ** 2 + field.samples.imag ** 2))


def spectral_transform(field: WaveField) -> np.ndarray:
    """Forward 2D DFT of the samples with orthonormal scaling.

    The orthonormal convention makes the transform unitary, so
    ``sum |spectrum|^2 == total_power(field)`` and :func:`inverse_spectral_transform`
    is an exact inverse.
    """
    return sfft.fft2(field.samples, norm="ortho")


def inverse_spectral_transform(spectrum: np.ndarray, grid: GridSpec) -> WaveField:
    spectrum = np.asarray(spectrum)
    if spectrum.shape != grid.shape:
        raise ValueError(f"spectrum shape {spectrum.shape} does not match grid {grid.shape}")
    return WaveField(grid, sfft.ifft2(spectrum, norm="ortho"))
