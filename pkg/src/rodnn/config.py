"""Run configuration stored as a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored. Angles may be written with a ``pi``
suffix (``0.8pi``). Unknown keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .dataio import EncodingSpec
from .network import DetectorLayout, DiffractiveNetwork, NeuronPhysics, default_detector_layout
from .propagation import PropagationParams
from .training import Hyperparams, PenaltySchedule
from .wavefield import GridSpec


def parse_float(text: str) -> float:
    text = str(text).strip().replace(" ", "")
    if text.endswith("pi"):
        head = text[:-2].rstrip("*")
        factor = {"": 1.0, "+": 1.0, "-": -1.0}.get(head)
        return (float(head) if factor is None else factor) * math.pi
    return float(text)


def parse_floats(text: str) -> list[float]:
    return [parse_float(t) for t in str(text).split(",") if t.strip()]


def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    # grid and optics
    nx: int = 120
    ny: int = 120
    pitch: float = 1.0
    wavelength: float = 1.55
    n_layers: int = 3
    distance: float = 50.0
    distances: str = ""  # comma list of n_layers + 1 gaps; overrides `distance`
    theta_max: float = math.pi
    k_ratio: float = 1.0
    pad_factor: int = 2
    evanescent_policy: str = "zero_out"
    detector_side: float = 0.0  # 0 -> scaled default
    detector_step: float = 0.0  # 0 -> scaled default
    # input encoding
    upsample: int = 4
    # optical training
    mode: str = "penalty"  # or "ste"
    gamma_start: float = -1e-3
    gamma_max: float = 5.0
    ramp_epochs: int = 300
    hold_epochs: int = 200
    ste_epochs: int = 10
    learning_rate: float = 1e-2
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    logit_scale: float = 10.0
    penalty_form: str = "double_well"
    relaxation: str = "mixture"
    ste_backward: str = "latent"
    init: str = "uniform"
    # correcting layer
    correcting_lr: float = 1e-2
    correcting_epochs: int = 20
    correcting_batch_size: int = 64
    correcting_init: str = "random"
    correcting_bias: bool = False
    # data
    dataset_dir: str = "data/mnist"
    train_size: int = 0  # 0 -> every training sample not held out for validation
    val_size: int = 5000
    test_size: int = 0  # 0 -> full test split
    eval_batch_size: int = 256
    # sweeps
    retrain_epochs: int = 20
    retrain_size: int = 0  # 0 -> same training samples as train_size
    workers: int = 1
    # run
    seed: int = 0
    out: str = "runs/default"

    def __post_init__(self):
        if self.mode not in ("penalty", "ste"):
            raise ValueError(f"mode must be 'penalty' or 'ste', got {self.mode!r}")
        for name in ("train_size", "val_size", "test_size", "retrain_size", "retrain_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        # building every component runs their own validation
        self.network()
        self.schedule()
        self.hyperparams()
        self.encoding().check_fits(self.grid())

    # -- builders ---------------------------------------------------------------

    def grid(self) -> GridSpec:
        return GridSpec(self.nx, self.ny, self.pitch, self.wavelength)

    def gap_list(self) -> tuple[float, ...]:
        if self.distances.strip():
            gaps = tuple(parse_floats(self.distances))
            if len(gaps) != self.n_layers + 1:
                raise ValueError(f"distances lists {len(gaps)} gaps, {self.n_layers} layers need "
                                 f"{self.n_layers + 1}")
            return gaps
        return (self.distance,) * (self.n_layers + 1)

    def detector_layout(self) -> DetectorLayout:
        grid = self.grid()
        base = default_detector_layout(grid)
        if not self.detector_side and not self.detector_step:
            return base
        scale = min(grid.extent) / 120.0
        side = self.detector_side or 10.0 * scale
        step = self.detector_step or 20.0 * scale
        ratio = step / (20.0 * scale)
        centers = tuple((x * ratio, y * ratio) for x, y in base.centers)
        return DetectorLayout(centers, (side,) * len(centers))

    def network(self) -> DiffractiveNetwork:
        grid = self.grid()
        gaps = self.gap_list()
        net = DiffractiveNetwork.create(grid, self.n_layers, 1.0,
                                        physics=NeuronPhysics(self.theta_max, self.k_ratio),
                                        detectors=self.detector_layout(),
                                        propagation=PropagationParams(self.pad_factor, self.evanescent_policy))
        return replace(net, distances=gaps)

    def schedule(self) -> PenaltySchedule:
        return PenaltySchedule(self.gamma_start, self.gamma_max, self.ramp_epochs, self.hold_epochs)

    def hyperparams(self) -> Hyperparams:
        names = {f.name for f in fields(Hyperparams)}
        return Hyperparams(**{k: v for k, v in asdict(self).items() if k in names})

    def encoding(self) -> EncodingSpec:
        return EncodingSpec(self.upsample)

    # -- text form ----------------------------------------------------------------

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    def updated(self, **overrides) -> RunConfig:
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _coerce(name: str, kind, text: str):
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return parse_float(text)
    if kind in (bool, "bool"):
        return _parse_bool(text)
    return str(text).strip()


def config_from_mapping(values: dict, base: RunConfig = RunConfig()) -> RunConfig:
    known = {f.name: f.type for f in fields(RunConfig)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    return replace(base, **{k: _coerce(k, known[k], v) for k, v in values.items()})


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string("[run]\n" + Path(path).read_text())
    return config_from_mapping(dict(parser["run"]))
