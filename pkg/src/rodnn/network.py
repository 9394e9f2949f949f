"""Diffractive network built from two-state phase-change neurons."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .propagation import PropagationParams, propagate_samples
from .wavefield import GridSpec, WaveField

N_CLASSES = 10
AMORPHOUS = "amorphous"
CRYSTALLINE = "crystalline"


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NeuronPhysics:
    """Phase difference ``theta_max`` (rad) and power-transmittance ratio ``k_ratio``
    of the crystalline state relative to the amorphous one."""

    theta_max: float = math.pi
    k_ratio: float = 1.0

    def __post_init__(self):
        # theta_max == 0 is accepted as the degenerate zero-thickness case
        if not 0.0 <= self.theta_max < 2 * math.pi:
            raise ValueError(f"theta_max must lie in [0, 2pi), got {self.theta_max}")
        if not self.k_ratio > 0:
            raise ValueError(f"k_ratio must be positive, got {self.k_ratio}")

    @property
    def crystalline_coefficient(self) -> complex:
        return math.sqrt(self.k_ratio) * complex(math.cos(self.theta_max), math.sin(self.theta_max))


@dataclass(frozen=True)
class NeuronGeometry:
    thickness: float = 1.0
    side: float = 0.8
    pitch: float = 1.0
    n_crystalline: float = 3.28
    n_amorphous: float = 4.05
    n_clad: float = 1.444
    wavelength: float = 1.55


@dataclass(frozen=True, eq=False)
class DiffractiveLayer:
    grid: GridSpec
    weights: np.ndarray = field(repr=False)
    amplitudes: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        weights = _frozen(self.weights)
        if weights.shape != self.grid.shape:
            raise ValueError(f"weights shape {weights.shape} does not match grid {self.grid.shape}")
        amplitudes = np.ones(self.grid.shape) if self.amplitudes is None else self.amplitudes
        amplitudes = _frozen(amplitudes)
        if amplitudes.shape != self.grid.shape:
            raise ValueError(f"amplitudes shape {amplitudes.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "amplitudes", amplitudes)

    @classmethod
    def flat(cls, grid: GridSpec, value: float = 0.0) -> DiffractiveLayer:
        return cls(grid, np.full(grid.shape, value))


@dataclass(frozen=True)
class DetectorLayout:
    """Square detector regions given by centers ``(x, y)`` and side lengths, in um."""

    centers: tuple[tuple[float, float], ...]
    sides: tuple[float, ...]

    def __post_init__(self):
        centers = tuple((float(x), float(y)) for x, y in self.centers)
        sides = tuple(float(s) for s in self.sides)
        if len(centers) != N_CLASSES or len(sides) != N_CLASSES:
            raise ValueError(f"need exactly {N_CLASSES} detector regions, got {len(centers)}")
        if any(s <= 0 for s in sides):
            raise ValueError("detector sides must be positive")
        for i in range(N_CLASSES):
            for j in range(i + 1, N_CLASSES):
                (xi, yi), (xj, yj) = centers[i], centers[j]
                reach = (sides[i] + sides[j]) / 2
                if abs(xi - xj) < reach and abs(yi - yj) < reach:
                    raise ValueError(f"detector regions {i} and {j} overlap")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "sides", sides)

    def check_inside(self, grid: GridSpec) -> None:
        h, w = grid.extent
        for i, ((x, y), s) in enumerate(zip(self.centers, self.sides)):
            if abs(x) + s / 2 > w / 2 + 1e-9 or abs(y) + s / 2 > h / 2 + 1e-9:
                raise ValueError(f"detector {i} at ({x}, {y}) with side {s} leaves the {w}x{h} um grid")

    def masks(self, grid: GridSpec) -> np.ndarray:
        """Boolean array ``(10, ny, nx)``; a sample belongs to a region when its
        center lies in ``[c - s/2, c + s/2)`` along both axes."""
        return _region_masks(self, grid)


@lru_cache(maxsize=32)
def _region_masks(layout: DetectorLayout, grid: GridSpec) -> np.ndarray:
    layout.check_inside(grid)
    y, x = grid.coordinates()
    out = np.zeros((N_CLASSES,) + grid.shape, dtype=bool)
    for i, ((cx, cy), s) in enumerate(zip(layout.centers, layout.sides)):
        in_x = (x >= cx - s / 2) & (x < cx + s / 2)
        in_y = (y >= cy - s / 2) & (y < cy + s / 2)
        out[i] = in_y[:, None] & in_x[None, :]
    out.setflags(write=False)
    return out


def default_detector_layout(grid: GridSpec) -> DetectorLayout:
    """Ten squares in rows of 3, 4 and 3 (classes 0-2, 3-6, 7-9, top to bottom).

    On the 120 um grid the squares are 10 um wide with 20 um center spacing along
    both axes; smaller or larger grids scale the pattern with the shorter extent.
    """
    scale = min(grid.extent) / 120.0
    side, step = 10.0 * scale, 20.0 * scale
    centers = []
    for row, count in zip((-1, 0, 1), (3, 4, 3)):
        y = row * step
        for c in range(count):
            centers.append(((c - (count - 1) / 2) * step, y))
    return DetectorLayout(tuple(centers), (side,) * N_CLASSES)


@dataclass(frozen=True)
class CorrectingLayer:
    """Linear map from detector powers to class scores, ``L = W X (+ b)``."""

    W: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        W = _frozen(self.W)
        if W.shape != (N_CLASSES, N_CLASSES) or not np.all(np.isfinite(W)):
            raise ValueError("correcting matrix must be a finite 10x10 array")
        object.__setattr__(self, "W", W)
        if self.bias is not None:
            bias = _frozen(self.bias)
            if bias.shape != (N_CLASSES,) or not np.all(np.isfinite(bias)):
                raise ValueError("correcting bias must be a finite 10-vector")
            object.__setattr__(self, "bias", bias)

    @classmethod
    def identity(cls) -> CorrectingLayer:
        return cls(np.eye(N_CLASSES))


@dataclass(frozen=True, eq=False)
class DiffractiveNetwork:
    """Stack of phase layers between an input plane and a detector plane.

    ``distances`` holds the input-to-first-layer gap, the inter-layer gaps and the
    last-layer-to-detector gap, so it is one longer than ``layers``. When
    ``binary`` is set every weight is either 0 (amorphous) or ``physics.theta_max``
    (crystalline) and the crystalline neurons carry the amplitude ``sqrt(K)``.
    """

    grid: GridSpec
    layers: tuple[DiffractiveLayer, ...]
    distances: tuple[float, ...]
    physics: NeuronPhysics = NeuronPhysics()
    detectors: DetectorLayout | None = None
    propagation: PropagationParams = PropagationParams()
    binary: bool = False
    correcting: CorrectingLayer | None = None

    def __post_init__(self):
        layers = tuple(self.layers)
        distances = tuple(float(d) for d in self.distances)
        if len(distances) != len(layers) + 1:
            raise ValueError(f"{len(layers)} layers need {len(layers) + 1} distances, got {len(distances)}")
        if any(d <= 0 for d in distances):
            raise ValueError(f"distances must be positive, got {distances}")
        for i, layer in enumerate(layers):
            if layer.grid != self.grid:
                raise ValueError(f"layer {i} grid {layer.grid} differs from network grid {self.grid}")
        detectors = self.detectors or default_detector_layout(self.grid)
        detectors.check_inside(self.grid)
        if self.binary:
            for i, layer in enumerate(layers):
                if not np.all((layer.weights == 0) | (layer.weights == self.physics.theta_max)):
                    raise ValueError(f"binary network has layer {i} weights outside {{0, theta_max}}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "distances", distances)
        object.__setattr__(self, "detectors", detectors)

    @classmethod
    def create(cls, grid: GridSpec = GridSpec(), n_layers: int = 3, distance: float = 50.0,
               weights: Sequence[np.ndarray] | None = None, **kwargs) -> DiffractiveNetwork:
        if weights is None:
            layers = tuple(DiffractiveLayer.flat(grid) for _ in range(n_layers))
        else:
            layers = tuple(DiffractiveLayer(grid, w) for w in weights)
        return cls(grid, layers, (distance,) * (len(layers) + 1), **kwargs)

    @property
    def n_neurons(self) -> int:
        return len(self.layers) * self.grid.nx * self.grid.ny

    def with_weights(self, weights: Sequence[np.ndarray], binary: bool = False) -> DiffractiveNetwork:
        layers = tuple(replace(layer, weights=w) for layer, w in zip(self.layers, weights))
        return replace(self, layers=layers, binary=binary)


def neuron_transmission(state: str, physics: NeuronPhysics = NeuronPhysics()) -> complex:
    if state == AMORPHOUS:
        return 1 + 0j
    if state == CRYSTALLINE:
        return physics.crystalline_coefficient
    raise ValueError(f"unknown neuron state {state!r}")


def layer_transmission(layer: DiffractiveLayer, physics: NeuronPhysics, binary: bool) -> np.ndarray:
    """Per-neuron complex coefficient ``k * exp(i theta)``."""
    if binary:
        crystalline = layer.weights == physics.theta_max
        t = np.where(crystalline, physics.crystalline_coefficient, 1 + 0j)
        return t * layer.amplitudes
    return layer.amplitudes * np.exp(1j * layer.weights)


def apply_layer(field: WaveField, layer: DiffractiveLayer, physics: NeuronPhysics | None = None,
                binary: bool = False) -> WaveField:
    if field.grid.shape != layer.grid.shape:
        raise ValueError(f"field grid {field.grid.shape} does not match layer grid {layer.grid.shape}")
    t = layer_transmission(layer, physics or NeuronPhysics(), binary)
    return WaveField(field.grid, field.samples * t)


def detect_samples(samples: np.ndarray, masks: np.ndarray, pitch: float) -> np.ndarray:
    """Area-weighted region powers for a field batch ``(..., ny, nx)`` -> ``(..., 10)``."""
    intensity = samples.real ** 2 + samples.imag ** 2
    return np.einsum("...ij,kij->...k", intensity, masks.astype(np.float64)) * pitch ** 2


def detect(field: WaveField, layout: DetectorLayout) -> np.ndarray:
    return detect_samples(field.samples, layout.masks(field.grid), field.grid.pitch)


def classify(X: np.ndarray) -> int | np.ndarray:
    """Index of the strongest detector; ``argmax`` already breaks ties toward the
    lowest index. Accepts a single vector or a batch along the last axis."""
    X = np.asarray(X)
    if X.ndim == 1:
        return int(np.argmax(X))
    return np.argmax(X, axis=-1)


def transmissions(net: DiffractiveNetwork) -> list[np.ndarray]:
    return [layer_transmission(layer, net.physics, net.binary) for layer in net.layers]


def run_planes(net: DiffractiveNetwork, samples: np.ndarray,
               coefficients: Sequence[np.ndarray] | None = None) -> list[np.ndarray]:
    """Fields at every plane: input, after each layer, detector plane.

    ``coefficients`` overrides the per-layer transmissions (used for
    straight-through training).
    """
    if coefficients is None:
        coefficients = transmissions(net)
    planes = [samples]
    u = samples
    for d, t in zip(net.distances, coefficients):
        u = propagate_samples(u, net.grid, d, net.propagation) * t
        planes.append(u)
    planes.append(propagate_samples(u, net.grid, net.distances[-1], net.propagation))
    return planes


def forward_samples(net: DiffractiveNetwork, samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Detector powers and detector-plane field for a raw sample batch."""
    out = run_planes(net, samples)[-1]
    return detect_samples(out, net.detectors.masks(net.grid), net.grid.pitch), out


def forward(net: DiffractiveNetwork, field: WaveField) -> tuple[np.ndarray, WaveField]:
    if field.grid.shape != net.grid.shape:
        raise ValueError(f"input grid {field.grid.shape} does not match network grid {net.grid.shape}")
    X, out = forward_samples(net, field.samples)
    return X, WaveField(net.grid, out)


def slab_phase_model(geom: NeuronGeometry) -> NeuronPhysics:
    """Thin-slab estimate of the two-state neuron response.

    The phase difference is the optical-path difference of the filled etch,
    ``2 pi t (n_a - n_c) / lam`` wrapped into ``[0, 2 pi)``. Interface reflections
    are neglected, so the transmittance ratio stays 1.
    """
    if geom.thickness < 0 or min(geom.side, geom.pitch, geom.wavelength) <= 0:
        raise ValueError(f"invalid neuron geometry {geom}")
    if geom.side > geom.pitch:
        raise ValueError(f"neuron side {geom.side} um exceeds the cell pitch {geom.pitch} um")
    theta = 2 * math.pi * geom.thickness * (geom.n_amorphous - geom.n_crystalline) / geom.wavelength
    theta = math.fmod(theta, 2 * math.pi)
    if theta < 0:
        theta += 2 * math.pi
    return NeuronPhysics(theta_max=theta, k_ratio=1.0)


ERROR_KINDS = ("axial_shift", "phase_difference", "transmittance_ratio", "geometry")


@dataclass(frozen=True)
class ErrorSpec:
    """One perturbation of a trained network.

    ``value`` is, by kind: a shift in um (scalar for every gap, or one per gap);
    the replacement phase difference; the replacement transmittance ratio; or a
    :class:`NeuronGeometry` mapped through :func:`slab_phase_model`.
    """

    kind: str
    value: object

    def __post_init__(self):
        if self.kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {self.kind!r}; expected one of {ERROR_KINDS}")
        if self.kind == "geometry" and not isinstance(self.value, NeuronGeometry):
            raise ValueError("geometry errors need a NeuronGeometry value")


def _with_physics(net: DiffractiveNetwork, physics: NeuronPhysics) -> DiffractiveNetwork:
    if not net.binary:
        return replace(net, physics=physics)
    old = net.physics.theta_max
    layers = tuple(replace(layer, weights=np.where(layer.weights == old, physics.theta_max, 0.0))
                   for layer in net.layers)
    return replace(net, layers=layers, physics=physics)


def inject_error(net: DiffractiveNetwork, spec: ErrorSpec) -> DiffractiveNetwork:
    """Return a perturbed copy of ``net``; the original is left as is."""
    if spec.kind == "axial_shift":
        shift = np.broadcast_to(np.asarray(spec.value, dtype=np.float64), (len(net.distances),))
        distances = tuple(float(d + s) for d, s in zip(net.distances, shift))
        if any(d <= 0 for d in distances):
            raise ValueError(f"axial shift {spec.value} leaves a non-positive gap: {distances}")
        return replace(net, distances=distances)
    if spec.kind == "phase_difference":
        return _with_physics(net, replace(net.physics, theta_max=float(spec.value)))
    if spec.kind == "transmittance_ratio":
        return replace(net, physics=replace(net.physics, k_ratio=float(spec.value)))
    return _with_physics(net, slab_phase_model(spec.value))
