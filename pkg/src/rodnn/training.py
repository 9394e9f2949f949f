"""Training of the optical section and of the correcting layer.

The optical loss is the mean softmax cross-entropy of the detector powers plus a
per-neuron binarization penalty. Gradients come from an explicit adjoint of the
forward model: the detector-plane gradient is carried back through conjugated
free-space propagation and conjugated layer coefficients, and each phase picks up
``Re(conj(g) * a * dt/dtheta)`` where ``a`` is the field arriving at the layer,
``t`` the layer coefficient and ``g`` the adjoint field leaving it. For the pure
phase model ``t = k exp(i theta)`` this is ``Im(g * conj(b))`` with ``b = a t``.

Two relaxations map a real-valued phase onto a coefficient during training:

``phase``
    ``k exp(i theta)``, the phase used directly.
``mixture``
    ``k (1 + s(theta) (c - 1))`` with ``c`` the crystalline coefficient and
    ``s = d0^2 / (d0^2 + dT^2)`` from the wrapped distances to the two targets.
    It equals the binary coefficient at both targets and crosses between the
    states along a straight line, so the data gradient near a target points
    along the flip between states rather than across it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dataio import Dataset, EncodingSpec, encode_batch
from .network import (
    N_CLASSES,
    CorrectingLayer,
    DiffractiveNetwork,
    detect_samples,
    run_planes,
    transmissions,
)
from .propagation import propagate_samples

log = logging.getLogger(__name__)

CE_FLOOR = 1e-12
PENALTY_FORMS = ("double_well", "literal")
RELAXATIONS = ("phase", "mixture")


class TrainingDiverged(RuntimeError):
    pass


def wrap_phase(theta):
    """Map angles into ``(-pi, pi]``; values already inside come back bit-identical."""
    theta = np.asarray(theta, dtype=np.float64)
    inside = (theta > -np.pi) & (theta <= np.pi)
    return np.where(inside, theta, np.pi - np.mod(np.pi - theta, 2 * np.pi))


@dataclass(frozen=True)
class PenaltySchedule:
    gamma_start: float = -1e-3
    gamma_max: float = 5.0
    ramp_epochs: int = 300
    hold_epochs: int = 200

    def __post_init__(self):
        if not self.gamma_start < 0 < self.gamma_max:
            raise ValueError(f"need gamma_start < 0 < gamma_max, got {self.gamma_start}, {self.gamma_max}")
        if self.ramp_epochs < 0 or self.hold_epochs < 0:
            raise ValueError("epoch counts must be non-negative")

    @property
    def total_epochs(self) -> int:
        return self.ramp_epochs + self.hold_epochs

    def gamma(self, progress: float) -> float:
        """Coefficient at a (possibly fractional) epoch position."""
        if self.ramp_epochs == 0 or progress >= self.ramp_epochs:
            return self.gamma_max
        frac = max(progress, 0.0) / self.ramp_epochs
        return self.gamma_start + (self.gamma_max - self.gamma_start) * frac


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 1e-2
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    logit_scale: float = 10.0
    penalty_form: str = "double_well"
    init: str = "uniform"  # or "keep" to start from the network's weights
    ste_epochs: int = 10
    correcting_lr: float = 1e-2
    correcting_epochs: int = 20
    correcting_batch_size: int = 64
    correcting_init: str = "random"  # or "identity"
    correcting_bias: bool = False
    eval_batch_size: int = 256
    relaxation: str = "mixture"
    ste_backward: str = "latent"

    def __post_init__(self):
        if self.penalty_form not in PENALTY_FORMS:
            raise ValueError(f"unknown penalty form {self.penalty_form!r}")
        if self.relaxation not in RELAXATIONS:
            raise ValueError(f"unknown relaxation {self.relaxation!r}")
        if self.ste_backward not in ("latent", "binary"):
            raise ValueError(f"unknown ste_backward {self.ste_backward!r}")
        if self.init not in ("uniform", "keep"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.correcting_init not in ("random", "identity"):
            raise ValueError(f"unknown correcting init {self.correcting_init!r}")
        if self.batch_size < 1 or self.correcting_batch_size < 1 or self.eval_batch_size < 1:
            raise ValueError("batch sizes must be positive")
        if not self.learning_rate > 0 or not self.correcting_lr > 0:
            raise ValueError("learning rates must be positive")


# -- loss pieces --------------------------------------------------------------


def _normalized(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = np.mean(X, axis=-1, keepdims=True)
    Xn = np.divide(X, m, out=np.zeros_like(X, dtype=np.float64), where=m > 0)
    return Xn, m


def softmax(X, scale: float = 10.0, normalize: bool = True) -> np.ndarray:
    """Softmax of ``scale * X / mean(X)`` along the last axis.

    A zero vector normalizes to zero and so maps to the uniform distribution.
    """
    X = np.asarray(X, dtype=np.float64)
    z = scale * (_normalized(X)[0] if normalize else X)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def one_hot(label: int) -> np.ndarray:
    out = np.zeros(N_CLASSES)
    out[label] = 1.0
    return out


def cross_entropy(Y, label) -> float | np.ndarray:
    """``-ln Y[label]`` with the probability floored at 1e-12.

    ``label`` may be a class index, a one-hot vector, or an index array for a batch.
    """
    Y = np.asarray(Y, dtype=np.float64)
    label = np.asarray(label)
    if label.ndim == Y.ndim and label.shape[-1] == N_CLASSES:
        label = np.argmax(label, axis=-1)
    if Y.ndim == 1:
        return float(-np.log(max(Y[int(label)], CE_FLOOR)))
    p = Y[np.arange(len(Y)), label]
    return -np.log(np.maximum(p, CE_FLOOR))


def penalty(theta, gamma: float, theta_max: float, form: str = "double_well"):
    """Binarization penalty and its derivative, elementwise.

    ``double_well`` is ``gamma * d0^2 * dT^2`` with ``d0``/``dT`` the wrapped
    distances to 0 and ``theta_max``: zero at both targets, maximal at the
    thresholds ``theta_max/2`` and ``-(pi - theta_max/2)``. ``literal`` is
    ``gamma * (|d0| + |dT|)``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    d0 = wrap_phase(theta)
    dt = wrap_phase(theta - theta_max)
    if form == "double_well":
        p = gamma * d0 ** 2 * dt ** 2
        dp = 2 * gamma * d0 * dt * (dt + d0)
    elif form == "literal":
        p = gamma * (np.abs(d0) + np.abs(dt))
        dp = gamma * (np.sign(d0) + np.sign(dt))
    else:
        raise ValueError(f"unknown penalty form {form!r}")
    return p, dp


def penalty_sum(weights: Sequence[np.ndarray], gamma: float, theta_max: float,
                form: str = "double_well") -> float:
    """Penalty averaged over every neuron of every layer."""
    if gamma == 0:
        return 0.0
    n = sum(w.size for w in weights)
    return float(sum(np.sum(penalty(w, gamma, theta_max, form)[0]) for w in weights) / n)


def _log_softmax_ce(z: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # per-sample -log softmax(z)[label] without going through probabilities
    z = z - np.max(z, axis=-1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=-1))
    return lse - z[np.arange(len(labels)), labels], np.exp(z - lse[:, None])


def total_loss(X, labels, weights: Sequence[np.ndarray], gamma: float, theta_max: float = math.pi,
               logit_scale: float = 10.0, form: str = "double_well") -> float:
    """Mean cross-entropy of the batch plus the per-neuron averaged penalty."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    ce, _ = _log_softmax_ce(logit_scale * _normalized(X)[0], labels)
    return float(np.mean(ce) + penalty_sum(weights, gamma, theta_max, form))


def _ce_grad_X(X: np.ndarray, labels: np.ndarray, scale: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient with respect to raw ``X``."""
    Xn, m = _normalized(X)
    ce, Y = _log_softmax_ce(scale * Xn, labels)
    g = scale * Y
    g[np.arange(len(labels)), labels] -= scale
    g = (g - np.mean(g * Xn, axis=-1, keepdims=True))
    g = np.divide(g, m, out=np.zeros_like(g), where=m > 0)
    return float(np.mean(ce)), g / len(labels), Y


# -- relaxed coefficients -------------------------------------------------------


def mixture_fraction(theta, theta_max: float = math.pi) -> tuple[np.ndarray, np.ndarray]:
    """Crystalline fraction ``s`` in [0, 1] and ``ds/dtheta``."""
    d0 = wrap_phase(theta)
    dt = wrap_phase(np.asarray(theta, dtype=np.float64) - theta_max)
    a, b = d0 ** 2, dt ** 2
    den = a + b
    s = a / den
    ds = 2 * (d0 * b - dt * a) / den ** 2
    return s, ds


def relaxed_coefficients(net: DiffractiveNetwork, relaxation: str = "phase"
                         ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-layer coefficients of a real-valued network and their phase derivatives."""
    if net.binary:
        raise ValueError("relaxed coefficients need real-valued weights")
    coeffs, derivs = [], []
    for layer in net.layers:
        if relaxation == "phase":
            t = layer.amplitudes * np.exp(1j * layer.weights)
            dt = 1j * t
        elif relaxation == "mixture":
            c = net.physics.crystalline_coefficient
            s, ds = mixture_fraction(layer.weights, net.physics.theta_max)
            t = layer.amplitudes * (1 + s * (c - 1))
            dt = layer.amplitudes * ds * (c - 1)
        else:
            raise ValueError(f"unknown relaxation {relaxation!r}")
        coeffs.append(t)
        derivs.append(dt)
    return coeffs, derivs


def network_coefficients(net: DiffractiveNetwork, relaxation: str = "phase") -> list[np.ndarray]:
    """Coefficients used for inference: binary states, or the relaxation for real weights."""
    if net.binary:
        return transmissions(net)
    return relaxed_coefficients(net, relaxation)[0]


# -- gradients ------------------------------------------------------------------


@dataclass
class BatchResult:
    loss: float
    grads: list[np.ndarray]
    X: np.ndarray


def loss_and_gradient(net: DiffractiveNetwork, samples: np.ndarray, labels, gamma: float,
                      hp: Hyperparams = Hyperparams(), weights: Sequence[np.ndarray] | None = None,
                      coefficients: Sequence[np.ndarray] | None = None,
                      derivatives: Sequence[np.ndarray] | None = None) -> BatchResult:
    """Loss and exact gradient with respect to every layer phase for a sample batch.

    ``weights`` are the real-valued phases the penalty acts on (default: the layer
    weights). ``coefficients`` override the layer coefficients used in the forward
    pass and ``derivatives`` their phase derivatives (default ``i * coefficients``);
    without either, both come from ``hp.relaxation``.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.ndim == 2:
        samples = samples[None]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if weights is None:
        weights = [layer.weights for layer in net.layers]
    if coefficients is None:
        coefficients, derivatives = relaxed_coefficients(net, hp.relaxation)
    elif derivatives is None:
        derivatives = [1j * t for t in coefficients]
    grid, params = net.grid, net.propagation

    arriving = []
    u = samples
    for d, t in zip(net.distances, coefficients):
        u = propagate_samples(u, grid, d, params)
        arriving.append(u)
        u = u * t
    out = propagate_samples(u, grid, net.distances[-1], params)
    masks = net.detectors.masks(grid).astype(np.float64)
    X = detect_samples(out, masks, grid.pitch)
    ce, gX, _ = _ce_grad_X(X, labels, hp.logit_scale)

    g = 2 * grid.pitch ** 2 * out * np.einsum("bk,kij->bij", gX, masks)
    g = propagate_samples(g, grid, net.distances[-1], params, adjoint=True)
    grads: list[np.ndarray] = [None] * len(net.layers)
    for i in reversed(range(len(net.layers))):
        grads[i] = np.sum((g.conj() * arriving[i] * derivatives[i]).real, axis=0)
        if i > 0:
            g = propagate_samples(g * coefficients[i].conj(), grid, net.distances[i], params, adjoint=True)

    loss = ce
    if gamma != 0:
        n = sum(w.size for w in weights)
        for i, w in enumerate(weights):
            p, dp = penalty(w, gamma, net.physics.theta_max, hp.penalty_form)
            loss += float(np.sum(p)) / n
            grads[i] = grads[i] + dp / n
    return BatchResult(loss, grads, X)


def ste_loss_and_gradient(net: DiffractiveNetwork, samples: np.ndarray, labels,
                          hp: Hyperparams = Hyperparams()) -> BatchResult:
    """Straight-through estimate for a real-valued network.

    The forward pass runs the binarized network. Backward treats binarization of
    the layer coefficient as the identity: the adjoint fields of the binary pass
    are combined with the relaxation's derivative at the latent phases
    (``ste_backward = "latent"``), or with the phase derivative of the binary
    coefficients themselves (``"binary"``).
    """
    bin_net = binarize_network(net)
    derivs = None
    if hp.ste_backward == "latent":
        derivs = relaxed_coefficients(net, hp.relaxation)[1]
    return loss_and_gradient(bin_net, samples, labels, 0.0, hp, coefficients=transmissions(bin_net),
                             derivatives=derivs)


def backward(net: DiffractiveNetwork, field, label, gamma: float,
             hp: Hyperparams = Hyperparams(relaxation="phase")) -> list[np.ndarray]:
    """Gradient of the total loss with respect to every layer phase, by default for
    the physical model ``k exp(i theta)`` that :func:`forward_samples` evaluates."""
    samples = getattr(field, "samples", field)
    return loss_and_gradient(net, samples, label, gamma, hp).grads


# -- optimizer ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrainState:
    weights: tuple[np.ndarray, ...]
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    step: int = 0
    epoch: int = 0
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    wrap: bool = True

    @classmethod
    def start(cls, weights: Sequence[np.ndarray], hp: Hyperparams = Hyperparams(),
              learning_rate: float | None = None, wrap: bool = True) -> TrainState:
        weights = tuple(np.array(w, dtype=np.float64) for w in weights)
        return cls(weights, tuple(np.zeros_like(w) for w in weights), tuple(np.zeros_like(w) for w in weights),
                   learning_rate=hp.learning_rate if learning_rate is None else learning_rate,
                   beta1=hp.beta1, beta2=hp.beta2, eps=hp.eps, wrap=wrap)


def adam_step(state: TrainState, grads: Sequence[np.ndarray]) -> TrainState:
    """One bias-corrected Adam update; phases are re-wrapped into ``(-pi, pi]``."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    weights, ms, vs = [], [], []
    for w, m, v, g in zip(state.weights, state.m, state.v, grads):
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} does not match weights {w.shape}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * (g * g)
        w = w - state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        weights.append(wrap_phase(w) if state.wrap else w)
        ms.append(m)
        vs.append(v)
    return replace(state, weights=tuple(weights), m=tuple(ms), v=tuple(vs), step=t)


def binarize(weights, theta_max: float = math.pi) -> np.ndarray:
    """0 on ``(-(pi - theta_max/2), theta_max/2]``, ``theta_max`` elsewhere."""
    w = wrap_phase(weights)
    low = -(np.pi - theta_max / 2)
    return np.where((w > low) & (w <= theta_max / 2), 0.0, theta_max)


def binarize_network(net: DiffractiveNetwork) -> DiffractiveNetwork:
    theta_max = net.physics.theta_max
    if net.binary:
        return net
    return net.with_weights([binarize(layer.weights, theta_max) for layer in net.layers], binary=True)


# -- evaluation helpers -----------------------------------------------------------


def detector_outputs(net: DiffractiveNetwork, data: Dataset, encoding: EncodingSpec,
                     batch_size: int = 256, relaxation: str = "phase") -> np.ndarray:
    """Detector powers ``(n, 10)`` for every sample, evaluated in fixed-order batches.

    ``relaxation`` only matters for a real-valued network.
    """
    masks = net.detectors.masks(net.grid)
    coeffs = network_coefficients(net, relaxation)
    out = np.empty((len(data), N_CLASSES))
    for start in range(0, len(data), batch_size):
        sl = slice(start, start + batch_size)
        fields = encode_batch(data.images[sl], encoding, net.grid)
        final = run_planes(net, fields, coeffs)[-1]
        out[sl] = detect_samples(final, masks, net.grid.pitch)
    return out


def accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(np.argmax(scores, axis=-1) == labels))


# -- optical training -------------------------------------------------------------


@dataclass
class EpochMetrics:
    epoch: int
    gamma: float
    train_loss: float
    train_acc: float
    val_acc: float


@dataclass
class History:
    epochs: list[EpochMetrics] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    real_network: DiffractiveNetwork | None = None  # weights before binarization


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init, shuffle = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init), np.random.default_rng(shuffle)


def _initial_weights(net: DiffractiveNetwork, hp: Hyperparams, rng: np.random.Generator) -> list[np.ndarray]:
    if hp.init == "keep":
        return [wrap_phase(layer.weights) for layer in net.layers]
    # uniform on (-pi, pi]
    return [np.pi - rng.uniform(0.0, 2 * np.pi, net.grid.shape) for _ in net.layers]


def _run_epochs(net, train, val, encoding, hp, seed, n_epochs, gamma_at, ste, callback):
    if len(train) == 0:
        raise ValueError("training set is empty")
    init_rng, shuffle_rng = _streams(seed)
    net = replace(net, binary=False, correcting=None)
    state = TrainState.start(_initial_weights(net, hp, init_rng), hp)
    history = History()
    n_batches = math.ceil(len(train) / hp.batch_size)
    theta_max = net.physics.theta_max
    for epoch in range(n_epochs):
        order = shuffle_rng.permutation(len(train))
        total, correct, loss_sum = 0, 0, 0.0
        for b in range(n_batches):
            idx = order[b * hp.batch_size:(b + 1) * hp.batch_size]
            gamma = gamma_at(epoch + b / n_batches)
            fields = encode_batch(train.images[idx], encoding, net.grid)
            labels = train.labels[idx]
            if ste:
                res = ste_loss_and_gradient(net.with_weights(state.weights), fields, labels, hp)
            else:
                current = net.with_weights(state.weights)
                res = loss_and_gradient(current, fields, labels, gamma, hp)
            if not math.isfinite(res.loss) or not all(np.all(np.isfinite(g)) for g in res.grads):
                raise TrainingDiverged(f"non-finite loss {res.loss} at epoch {epoch}, batch {b}, gamma {gamma}")
            state = adam_step(state, res.grads)
            loss_sum += res.loss * len(idx)
            correct += int(np.sum(np.argmax(res.X, axis=-1) == labels))
            total += len(idx)
        state = replace(state, epoch=epoch + 1)
        if ste:
            current = net.with_weights([binarize(w, theta_max) for w in state.weights], binary=True)
        else:
            current = net.with_weights(state.weights)
        val_acc = float("nan")
        if val is not None and len(val):
            val_acc = accuracy(detector_outputs(current, val, encoding, hp.eval_batch_size, hp.relaxation),
                               val.labels)
        m = EpochMetrics(epoch, gamma_at(epoch), loss_sum / total, correct / total, val_acc)
        history.epochs.append(m)
        log.info("epoch %d gamma %.4g loss %.4f train %.4f val %.4f",
                 epoch, m.gamma, m.train_loss, m.train_acc, m.val_acc)
        if callback is not None:
            callback(m)

    real_net = net.with_weights(state.weights)
    trained = binarize_network(real_net)
    history.real_network = real_net
    if val is not None and len(val):
        if not ste:
            history.summary["val_acc_real"] = accuracy(
                detector_outputs(real_net, val, encoding, hp.eval_batch_size, hp.relaxation), val.labels)
        history.summary["val_acc_binary"] = accuracy(
            detector_outputs(trained, val, encoding, hp.eval_batch_size), val.labels)
    return trained, history


def train_optical(net: DiffractiveNetwork, train: Dataset, val: Dataset | None,
                  schedule: PenaltySchedule = PenaltySchedule(), hp: Hyperparams = Hyperparams(),
                  seed: int = 0, encoding: EncodingSpec = EncodingSpec(),
                  callback: Callable[[EpochMetrics], None] | None = None
                  ) -> tuple[DiffractiveNetwork, History]:
    """Penalty-scheduled training of the layer phases, then binarization.

    The penalty coefficient ramps linearly from ``gamma_start`` to ``gamma_max``
    over ``ramp_epochs`` (evaluated per mini-batch at fractional epoch positions)
    and stays at ``gamma_max`` for ``hold_epochs``. Initialization and shuffling
    draw from separate streams derived from ``seed``.
    """
    return _run_epochs(net, train, val, encoding, hp, seed, schedule.total_epochs,
                       schedule.gamma, ste=False, callback=callback)


def ste_train_optical(net: DiffractiveNetwork, train: Dataset, val: Dataset | None,
                      hp: Hyperparams = Hyperparams(), seed: int = 0,
                      encoding: EncodingSpec = EncodingSpec(), epochs: int | None = None,
                      callback: Callable[[EpochMetrics], None] | None = None
                      ) -> tuple[DiffractiveNetwork, History]:
    """Straight-through training: binarized phases forward, identity backward."""
    n = hp.ste_epochs if epochs is None else epochs
    return _run_epochs(net, train, val, encoding, hp, seed, n, lambda _: 0.0, ste=True, callback=callback)


# -- correcting layer -------------------------------------------------------------


def apply_correcting(layer: CorrectingLayer, X) -> np.ndarray:
    """``L = W X``; a bias, when present, is scaled by the mean detector power so
    that it acts on the same normalized powers the layer was trained on."""
    X = np.asarray(X, dtype=np.float64)
    L = X @ layer.W.T
    if layer.bias is not None:
        L = L + np.mean(X, axis=-1, keepdims=True) * layer.bias
    return L


def fit_correcting(X: np.ndarray, labels: np.ndarray, hp: Hyperparams = Hyperparams(),
                   seed: int = 0, epochs: int | None = None) -> CorrectingLayer:
    """Adam on softmax cross-entropy of ``W X`` for precomputed detector powers."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    epochs = hp.correcting_epochs if epochs is None else epochs
    if len(X) == 0:
        raise ValueError("no samples for the correcting layer")
    init_rng, shuffle_rng = _streams(seed)
    if hp.correcting_init == "identity":
        W = np.eye(N_CLASSES)
    else:
        W = init_rng.normal(0.0, 1.0 / math.sqrt(N_CLASSES), (N_CLASSES, N_CLASSES))
    params = [W, np.zeros(N_CLASSES)] if hp.correcting_bias else [W]
    state = TrainState.start(params, hp, learning_rate=hp.correcting_lr, wrap=False)
    Xn, _ = _normalized(X)
    s = hp.logit_scale
    bs = hp.correcting_batch_size
    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(X))
        for start in range(0, len(X), bs):
            idx = order[start:start + bs]
            xb, yb = Xn[idx], labels[idx]
            W = state.weights[0]
            z = xb @ W.T
            if hp.correcting_bias:
                z = z + state.weights[1]
            _, Y = _log_softmax_ce(s * z, yb)
            gz = s * Y
            gz[np.arange(len(idx)), yb] -= s
            gz /= len(idx)
            grads = [gz.T @ xb]
            if hp.correcting_bias:
                grads.append(gz.sum(axis=0))
            if not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDiverged(f"non-finite correcting-layer gradient at epoch {epoch}")
            state = adam_step(state, grads)
    bias = state.weights[1] if hp.correcting_bias else None
    return CorrectingLayer(state.weights[0], bias)


def train_correcting(net: DiffractiveNetwork, train: Dataset, hp: Hyperparams = Hyperparams(),
                     seed: int = 0, encoding: EncodingSpec = EncodingSpec(),
                     epochs: int | None = None, X: np.ndarray | None = None) -> CorrectingLayer:
    """Fit the correcting layer behind a frozen, binarized optical section.

    Detector powers are computed once per sample (or passed in as ``X``).
    """
    if not net.binary:
        raise ValueError("the optical section must be binarized before training the correcting layer")
    if X is None:
        X = detector_outputs(net, train, encoding, hp.eval_batch_size)
    return fit_correcting(X, train.labels, hp, seed, epochs)
