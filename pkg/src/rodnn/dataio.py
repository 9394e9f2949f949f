"""Dataset ingestion, image-to-field encoding and network persistence."""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .network import (
    CorrectingLayer,
    DetectorLayout,
    DiffractiveLayer,
    DiffractiveNetwork,
    NeuronPhysics,
)
from .propagation import PropagationParams
from .wavefield import GridSpec, WaveField

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
IMAGE_SIDE = 28

RODN_MAGIC = b"RODN"
RODN_VERSION = 1


class IdxFormatError(ValueError):
    pass


class RodnFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray  # (n, 28, 28) uint8
    labels: np.ndarray  # (n,) int64
    split: str = "train"

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.uint8)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 3 or len(images) != len(labels):
            raise ValueError(f"{len(images)} images vs {len(labels)} labels")
        if len(labels) and (labels.min() < 0 or labels.max() > 9):
            raise ValueError("labels must lie in 0..9")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index) -> Dataset:
        return replace(self, images=self.images[index], labels=self.labels[index])


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _parse_idx(raw: bytes, magic: int, dims: int, path) -> np.ndarray:
    header = 4 + 4 * dims
    if len(raw) >= 4:
        (found,) = struct.unpack(">I", raw[:4])
        if found != magic:
            raise IdxFormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise IdxFormatError(f"{path}: truncated header ({len(raw)} of {header} bytes)")
    shape = struct.unpack(f">{dims}I", raw[4:header])
    if dims == 3 and tuple(shape[1:]) != (IMAGE_SIDE, IMAGE_SIDE):
        raise IdxFormatError(f"{path}: rows/cols {shape[1]}x{shape[2]}, expected {IMAGE_SIDE}x{IMAGE_SIDE}")
    expected = header + int(np.prod(shape))
    if len(raw) < expected:
        raise IdxFormatError(f"{path}: truncated payload, count {shape[0]} needs {expected} bytes, "
                             f"file has {len(raw)}")
    if len(raw) > expected:
        raise IdxFormatError(f"{path}: {len(raw) - expected} trailing bytes after count {shape[0]} items")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(shape)


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Parse an IDX image/label pair (optionally gzipped)."""
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, 3, images_path)
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, 1, labels_path)
    if len(images) != len(labels):
        raise IdxFormatError(f"count mismatch: {len(images)} images in {images_path}, "
                             f"{len(labels)} labels in {labels_path}")
    if len(labels) and labels.max() > 9:
        raise IdxFormatError(f"{labels_path}: label value {labels.max()} outside 0..9")
    return Dataset(images, labels, split)


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"no {stem}[.gz] in {directory}")


def load_split(directory, split: str) -> Dataset:
    """Load ``train`` or ``test`` from a directory holding the standard IDX file names."""
    directory = Path(directory)
    prefix = {"train": "train", "test": "t10k"}[split]
    return load_idx(_find(directory, f"{prefix}-images-idx3-ubyte"),
                    _find(directory, f"{prefix}-labels-idx1-ubyte"), split)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


@dataclass(frozen=True)
class EncodingSpec:
    """Amplitude encoding: nearest-neighbour upsampling, centered, unit power."""

    upsample: int = 4
    encoding: str = "amplitude"

    def __post_init__(self):
        if self.upsample < 1:
            raise ValueError(f"upsample must be >= 1, got {self.upsample}")
        if self.encoding != "amplitude":
            raise ValueError(f"unsupported encoding {self.encoding!r}")

    def check_fits(self, grid: GridSpec, side: int = IMAGE_SIDE) -> None:
        n = side * self.upsample
        if n > grid.nx or n > grid.ny:
            raise ValueError(f"{side}px image upsampled x{self.upsample} is {n} samples, "
                             f"larger than the {grid.ny}x{grid.nx} grid")


def encode_batch(images: np.ndarray, spec: EncodingSpec, grid: GridSpec) -> np.ndarray:
    """Encode ``(B, h, w)`` images into ``(B, ny, nx)`` complex input fields."""
    images = np.asarray(images)
    b, h, w = images.shape
    f = spec.upsample
    if h * f > grid.ny or w * f > grid.nx:
        raise ValueError(f"{h}x{w} image upsampled x{f} does not fit the {grid.ny}x{grid.nx} grid")
    amp = images.astype(np.float64) / 255.0
    amp = np.repeat(np.repeat(amp, f, axis=1), f, axis=2)
    power = np.sum(amp ** 2, axis=(1, 2))
    scale = np.divide(1.0, np.sqrt(power), out=np.zeros_like(power), where=power > 0)
    out = np.zeros((b,) + grid.shape, dtype=np.complex128)
    y0, x0 = (grid.ny - h * f) // 2, (grid.nx - w * f) // 2
    out[:, y0:y0 + h * f, x0:x0 + w * f] = amp * scale[:, None, None]
    return out


def encode_image(image: np.ndarray, spec: EncodingSpec, grid: GridSpec) -> WaveField:
    return WaveField(grid, encode_batch(np.asarray(image)[None], spec, grid)[0])


def _header(net: DiffractiveNetwork, meta: dict | None) -> dict:
    g = net.grid
    arrays = []
    for i in range(len(net.layers)):
        arrays.append({"name": f"layer{i}.weights", "shape": [g.ny, g.nx]})
        arrays.append({"name": f"layer{i}.amplitudes", "shape": [g.ny, g.nx]})
    if net.correcting is not None:
        arrays.append({"name": "correcting.W", "shape": [10, 10]})
        if net.correcting.bias is not None:
            arrays.append({"name": "correcting.bias", "shape": [10]})
    return {
        "grid": {"nx": g.nx, "ny": g.ny, "pitch": g.pitch, "wavelength": g.wavelength},
        "layers": len(net.layers),
        "distances": list(net.distances),
        "theta_max": net.physics.theta_max,
        "k_ratio": net.physics.k_ratio,
        "detectors": {"centers": [list(c) for c in net.detectors.centers],
                      "sides": list(net.detectors.sides)},
        "propagation": {"pad_factor": net.propagation.pad_factor,
                        "evanescent_policy": net.propagation.evanescent_policy},
        "binary": net.binary,
        "arrays": arrays,
        "meta": meta or {},
    }


def save_network(net: DiffractiveNetwork, path, meta: dict | None = None) -> None:
    """Write the RODN file: magic, version byte, u32 LE header length, UTF-8 JSON
    header, then every array listed in the header as little-endian float64, row-major."""
    header = json.dumps(_header(net, meta), sort_keys=True).encode("utf-8")
    chunks = [RODN_MAGIC, bytes([RODN_VERSION]), struct.pack("<I", len(header)), header]
    for layer in net.layers:
        chunks.append(layer.weights.astype("<f8").tobytes())
        chunks.append(layer.amplitudes.astype("<f8").tobytes())
    if net.correcting is not None:
        chunks.append(net.correcting.W.astype("<f8").tobytes())
        if net.correcting.bias is not None:
            chunks.append(net.correcting.bias.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_network(path) -> tuple[DiffractiveNetwork, dict]:
    """Load a RODN file, returning the network and the free-form ``meta`` header."""
    raw = Path(path).read_bytes()
    if raw[:4] != RODN_MAGIC:
        raise RodnFormatError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 9:
        raise RodnFormatError(f"{path}: truncated header at byte offset {len(raw)}")
    if raw[4] != RODN_VERSION:
        raise RodnFormatError(f"{path}: unsupported format version {raw[4]}")
    (hlen,) = struct.unpack("<I", raw[5:9])
    if len(raw) < 9 + hlen:
        raise RodnFormatError(f"{path}: truncated header at byte offset {len(raw)} (needs {9 + hlen})")
    try:
        h = json.loads(raw[9:9 + hlen].decode("utf-8"))
    except ValueError as exc:
        raise RodnFormatError(f"{path}: unreadable header: {exc}") from None

    try:
        return _network_from(h, raw, 9 + hlen, path)
    except (KeyError, TypeError) as exc:
        raise RodnFormatError(f"{path}: malformed header field {exc}") from None


def _network_from(h: dict, raw: bytes, offset: int, path) -> tuple[DiffractiveNetwork, dict]:
    arrays = {}
    for spec in h["arrays"]:
        count = int(np.prod(spec["shape"]))
        end = offset + 8 * count
        if end > len(raw):
            raise RodnFormatError(f"{path}: truncated in array {spec['name']!r} at byte offset "
                                  f"{len(raw)} (array spans {offset}..{end})")
        arrays[spec["name"]] = np.frombuffer(raw, dtype="<f8", count=count,
                                             offset=offset).reshape(spec["shape"]).astype(np.float64)
        offset = end
    if offset != len(raw):
        raise RodnFormatError(f"{path}: {len(raw) - offset} trailing bytes at byte offset {offset}")

    grid = GridSpec(**h["grid"])
    physics = NeuronPhysics(h["theta_max"], h["k_ratio"])
    layers = tuple(DiffractiveLayer(grid, arrays[f"layer{i}.weights"], arrays[f"layer{i}.amplitudes"])
                   for i in range(h["layers"]))
    if h["binary"]:
        for i, layer in enumerate(layers):
            bad = ~((layer.weights == 0) | (layer.weights == physics.theta_max))
            if bad.any():
                raise RodnFormatError(f"{path}: binary file has {int(bad.sum())} weights in layer {i} "
                                      f"outside {{0, {physics.theta_max}}}")
    correcting = None
    if "correcting.W" in arrays:
        correcting = CorrectingLayer(arrays["correcting.W"], arrays.get("correcting.bias"))
    detectors = DetectorLayout(tuple(tuple(c) for c in h["detectors"]["centers"]),
                               tuple(h["detectors"]["sides"]))
    net = DiffractiveNetwork(grid, layers, tuple(h["distances"]), physics, detectors,
                             PropagationParams(**h["propagation"]), bool(h["binary"]), correcting)
    return net, h["meta"]


def load_network(path) -> DiffractiveNetwork:
    return read_network(path)[0]
