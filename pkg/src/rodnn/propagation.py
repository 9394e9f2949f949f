"""Angular-spectrum free-space propagation between parallel planes."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .wavefield import GridSpec, WaveField

EVANESCENT_POLICIES = ("zero_out", "keep_decaying")


@dataclass(frozen=True)
class PropagationParams:
    pad_factor: int = 2
    evanescent_policy: str = "zero_out"

    def __post_init__(self):
        if int(self.pad_factor) != self.pad_factor or self.pad_factor < 1:
            raise ValueError(f"pad_factor must be an integer >= 1, got {self.pad_factor}")
        if self.evanescent_policy not in EVANESCENT_POLICIES:
            raise ValueError(f"unknown evanescent policy {self.evanescent_policy!r}")


@lru_cache(maxsize=64)
def _cached_transfer(grid: GridSpec, z: float, policy: str, pad_factor: int) -> np.ndarray:
    fy, fx = grid.frequencies(pad_factor)
    lam = grid.wavelength
    arg = 1.0 - (lam * fy[:, None]) ** 2 - (lam * fx[None, :]) ** 2
    k = 2 * np.pi / lam
    propagating = arg >= 0
    h = np.zeros(arg.shape, dtype=np.complex128)
    h[propagating] = np.exp(1j * k * z * np.sqrt(arg[propagating]))
    if policy == "keep_decaying" or z == 0:
        h[~propagating] = np.exp(-k * abs(z) * np.sqrt(-arg[~propagating]))
    h.setflags(write=False)
    return h


def transfer_function(grid: GridSpec, z: float, policy: str = "zero_out",
                      pad_factor: int = 1) -> np.ndarray:
    """Free-space transfer function sampled on the DFT frequencies of the grid.

    Propagating bins get ``exp(i k z sqrt(1 - (lam fx)^2 - (lam fy)^2))``. Evanescent
    bins are zeroed, or under ``keep_decaying`` attenuated by ``exp(-k |z| ...)``.
    Zero distance is the identity under either policy.
    The returned array is read-only and shared through a cache.
    """
    if policy not in EVANESCENT_POLICIES:
        raise ValueError(f"unknown evanescent policy {policy!r}")
    return _cached_transfer(grid, float(z), policy, int(pad_factor))


def propagate_samples(samples: np.ndarray, grid: GridSpec, z: float,
                      params: PropagationParams = PropagationParams(),
                      adjoint: bool = False) -> np.ndarray:
    """Propagate raw sample arrays of shape ``(..., ny, nx)`` by ``z``.

    With ``adjoint=True`` the conjugate transfer function is applied, which is the
    Hermitian adjoint of the forward operator (pad, transform, filter, invert, crop).
    Zero padding goes after the data; the row transform only touches the ``ny``
    non-zero rows and the inverse crops rows before the last transform.
    """
    ny, nx = grid.shape
    p = params.pad_factor
    h = transfer_function(grid, z, params.evanescent_policy, p)
    if adjoint:
        h = h.conj()
    spec = sfft.fft(samples, n=nx * p, axis=-1)
    spec = sfft.fft(spec, n=ny * p, axis=-2, overwrite_x=True)
    spec *= h
    out = sfft.ifft(spec, axis=-2, overwrite_x=True)[..., :ny, :]
    return sfft.ifft(out, axis=-1)[..., :nx]


def propagate(field: WaveField, z: float, params: PropagationParams = PropagationParams()) -> WaveField:
    return WaveField(field.grid, propagate_samples(field.samples, field.grid, z, params))


def oracle_propagate(field: WaveField, z: float, policy: str = "zero_out") -> WaveField:
    """Reference propagation by explicit DFT double sums over the grid period.

    Quartic in the grid size; meant for grids of at most about 32x32. Shares no
    code with :func:`propagate`: frequencies, the transfer function and both
    transforms are built here from scratch.
    """
    grid = field.grid
    ny, nx = grid.shape
    iy, ix = np.arange(ny), np.arange(nx)
    # kernel[ky, kx, y, x] = exp(-2 pi i (ky y / ny + kx x / nx))
    phase = (np.multiply.outer(iy, iy)[:, None, :, None] / ny
             + np.multiply.outer(ix, ix)[None, :, None, :] / nx)
    kernel = np.exp(-2j * np.pi * phase)
    spectrum = np.tensordot(kernel, field.samples, axes=([2, 3], [0, 1]))

    ky = np.where(iy >= (ny + 1) // 2, iy - ny, iy) / (ny * grid.pitch)
    kx = np.where(ix >= (nx + 1) // 2, ix - nx, ix) / (nx * grid.pitch)
    lam = grid.wavelength
    k = 2 * np.pi / lam
    h = np.zeros((ny, nx), dtype=np.complex128)
    for a in range(ny):
        for b in range(nx):
            arg = 1.0 - (lam * ky[a]) ** 2 - (lam * kx[b]) ** 2
            if arg >= 0:
                h[a, b] = np.exp(1j * k * z * np.sqrt(arg))
            elif policy == "keep_decaying" or z == 0:
                h[a, b] = np.exp(-k * abs(z) * np.sqrt(-arg))

    out = np.tensordot(kernel.conj(), spectrum * h, axes=([0, 1], [0, 1])) / (nx * ny)
    return WaveField(grid, out)
