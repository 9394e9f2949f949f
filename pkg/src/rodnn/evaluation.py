"""Accuracy, confusion matrices, error sweeps and per-plane field export."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataio import Dataset, EncodingSpec, encode_batch
from .network import (
    N_CLASSES,
    DiffractiveNetwork,
    ErrorSpec,
    NeuronGeometry,
    detect_samples,
    inject_error,
    run_planes,
)
from .training import Hyperparams, apply_correcting, detector_outputs, fit_correcting

log = logging.getLogger(__name__)

SWEEP_KINDS = ("axial", "theta", "kratio", "geometry", "distance", "layers")
GEOMETRY_PARAMS = ("thickness", "side", "n_amorphous", "n_crystalline")


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts indexed ``[true, predicted]``."""

    counts: np.ndarray

    @classmethod
    def from_predictions(cls, labels, predictions) -> ConfusionMatrix:
        counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
        np.add.at(counts, (np.asarray(labels, dtype=np.int64), np.asarray(predictions, dtype=np.int64)), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["true"] + [str(i) for i in range(N_CLASSES)])
            for i, row in enumerate(self.counts):
                w.writerow([i] + [int(c) for c in row])


def scores(net: DiffractiveNetwork, X: np.ndarray, use_correcting: bool = True) -> np.ndarray:
    if use_correcting and net.correcting is not None:
        return apply_correcting(net.correcting, X)
    return X


def evaluate(net: DiffractiveNetwork, data: Dataset, encoding: EncodingSpec, use_correcting: bool = True,
             batch_size: int = 256, X: np.ndarray | None = None) -> tuple[float, ConfusionMatrix, np.ndarray]:
    """Accuracy, confusion matrix and raw detector powers on ``data``."""
    if X is None:
        X = detector_outputs(net, data, encoding, batch_size)
    pred = np.argmax(scores(net, X, use_correcting), axis=-1)
    cm = ConfusionMatrix.from_predictions(data.labels, pred)
    return cm.accuracy, cm, X


# -- sweeps -----------------------------------------------------------------------


@dataclass
class SweepRow:
    value: float
    accuracy: float
    accuracy_after_retrain: float = float("nan")


def error_spec(kind: str, value: float, net: DiffractiveNetwork,
               geometry: NeuronGeometry = NeuronGeometry(), geometry_param: str = "thickness") -> ErrorSpec:
    if kind == "axial":
        return ErrorSpec("axial_shift", value)
    if kind == "theta":
        return ErrorSpec("phase_difference", value)
    if kind == "kratio":
        return ErrorSpec("transmittance_ratio", value)
    if kind == "geometry":
        if geometry_param not in GEOMETRY_PARAMS:
            raise ValueError(f"geometry parameter must be one of {GEOMETRY_PARAMS}")
        return ErrorSpec("geometry", replace(geometry, **{geometry_param: value}))
    raise ValueError(f"{kind!r} is not an error-injection sweep")


def sweep_errors(net: DiffractiveNetwork, kind: str, values: Sequence[float], test: Dataset,
                 encoding: EncodingSpec, retrain: Dataset | None = None, hp: Hyperparams = Hyperparams(),
                 seed: int = 0, retrain_epochs: int = 20, geometry: NeuronGeometry = NeuronGeometry(),
                 geometry_param: str = "thickness", workers: int = 1) -> list[SweepRow]:
    """Inject one error per grid value and evaluate; optionally refit the correcting
    layer on ``retrain`` behind the perturbed optics. Rows come back in grid order."""
    specs = [error_spec(kind, v, net, geometry, geometry_param) for v in values]

    def point(i: int) -> SweepRow:
        perturbed = inject_error(net, specs[i])
        acc, _, _ = evaluate(perturbed, test, encoding, batch_size=hp.eval_batch_size)
        row = SweepRow(float(values[i]), acc)
        if retrain is not None:
            X = detector_outputs(perturbed, retrain, encoding, hp.eval_batch_size)
            layer = fit_correcting(X, retrain.labels, hp, seed, retrain_epochs)
            row.accuracy_after_retrain, _, _ = evaluate(replace(perturbed, correcting=layer), test, encoding,
                                                        batch_size=hp.eval_batch_size)
        log.info("%s = %r: accuracy %.4f, after retrain %.4f", kind, row.value, row.accuracy,
                 row.accuracy_after_retrain)
        return row

    return _ordered_map(point, len(values), workers)


def sweep_architecture(kind: str, values: Sequence[float], build: Callable[[float], DiffractiveNetwork],
                       train_fn: Callable[[DiffractiveNetwork], DiffractiveNetwork], test: Dataset,
                       encoding: EncodingSpec, retrain: Dataset | None = None,
                       hp: Hyperparams = Hyperparams(), seed: int = 0, retrain_epochs: int = 20,
                       workers: int = 1) -> list[SweepRow]:
    """Train a fresh network per grid value (layer distance or layer count)."""
    if kind not in ("distance", "layers"):
        raise ValueError(f"{kind!r} is not an architecture sweep")

    def point(i: int) -> SweepRow:
        trained = train_fn(build(values[i]))
        acc, _, _ = evaluate(trained, test, encoding, use_correcting=False, batch_size=hp.eval_batch_size)
        row = SweepRow(float(values[i]), acc)
        if retrain is not None:
            X = detector_outputs(trained, retrain, encoding, hp.eval_batch_size)
            layer = fit_correcting(X, retrain.labels, hp, seed, retrain_epochs)
            row.accuracy_after_retrain, _, _ = evaluate(replace(trained, correcting=layer), test, encoding,
                                                        batch_size=hp.eval_batch_size)
        log.info("%s = %r: accuracy %.4f, after retrain %.4f", kind, row.value, row.accuracy,
                 row.accuracy_after_retrain)
        return row

    return _ordered_map(point, len(values), workers)


def _ordered_map(fn, n: int, workers: int) -> list:
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["value", "accuracy", "accuracy_after_retrain"])
        for r in rows:
            after = "" if math.isnan(r.accuracy_after_retrain) else repr(r.accuracy_after_retrain)
            w.writerow([repr(r.value), repr(r.accuracy), after])


# -- field export -----------------------------------------------------------------


@dataclass
class PlaneExport:
    names: list[str]
    z: list[float]
    intensities: list[np.ndarray]
    X: np.ndarray

    @property
    def powers(self) -> list[float]:
        return [float(np.sum(i)) for i in self.intensities]


def export_planes(net: DiffractiveNetwork, image: np.ndarray, encoding: EncodingSpec) -> PlaneExport:
    """Intensity at the input plane, after every layer and at the detector plane."""
    fields = encode_batch(np.asarray(image)[None], encoding, net.grid)
    planes = [p[0] for p in run_planes(net, fields)]
    names = ["input"] + [f"layer{i}" for i in range(len(net.layers))] + ["detector"]
    z = [0.0] + list(np.cumsum(net.distances))
    X = detect_samples(planes[-1], net.detectors.masks(net.grid), net.grid.pitch)
    return PlaneExport(names, [float(v) for v in z], [np.abs(p) ** 2 for p in planes], X)


def write_plane_export(export: PlaneExport, net: DiffractiveNetwork, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for k, (name, inten) in enumerate(zip(export.names, export.intensities)):
        path = outdir / f"plane{k}_{name}.csv"
        np.savetxt(path, inten, delimiter=",", fmt="%.17g")
        written.append(path)
    path = outdir / "planes.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["plane", "name", "z_um", "total_power"])
        for k, (name, z, p) in enumerate(zip(export.names, export.z, export.powers)):
            w.writerow([k, name, repr(z), repr(p)])
    written.append(path)
    path = outdir / "detectors.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["detector", "x_center_um", "y_center_um", "side_um", "power"])
        for i, ((x, y), s) in enumerate(zip(net.detectors.centers, net.detectors.sides)):
            w.writerow([i, repr(x), repr(y), repr(s), repr(float(export.X[i]))])
    written.append(path)
    return written
