import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rodnn.dataio import Dataset, EncodingSpec, encode_batch
from rodnn.network import (
    CorrectingLayer,
    DiffractiveNetwork,
    NeuronPhysics,
    detect_samples,
    forward_samples,
    run_planes,
    transmissions,
)
from rodnn.propagation import PropagationParams
from rodnn.training import (
    Hyperparams,
    PenaltySchedule,
    TrainState,
    TrainingDiverged,
    accuracy,
    adam_step,
    apply_correcting,
    backward,
    binarize,
    binarize_network,
    cross_entropy,
    detector_outputs,
    fit_correcting,
    loss_and_gradient,
    mixture_fraction,
    one_hot,
    penalty,
    relaxed_coefficients,
    softmax,
    ste_loss_and_gradient,
    ste_train_optical,
    total_loss,
    train_correcting,
    train_optical,
    wrap_phase,
)
from rodnn.wavefield import GridSpec

from conftest import pixel_layout

SMALL = GridSpec(8, 8)
TINY = GridSpec(32, 32)
ONE = EncodingSpec(upsample=1)


def make_net(rng, n_layers, grid=SMALL, **kw):
    weights = [rng.uniform(-np.pi, np.pi, grid.shape) for _ in range(n_layers)]
    kw.setdefault("detectors", pixel_layout(grid))
    return DiffractiveNetwork.create(grid, n_layers, 5.0, weights=weights, **kw)


def synthetic(n, rng, classes=10):
    """Digit-like blobs whose position encodes the label."""
    labels = rng.integers(0, classes, n)
    images = np.zeros((n, 28, 28), dtype=np.uint8)
    for i, c in enumerate(labels):
        r, col = divmod(int(c), 4)
        images[i, 4 + 7 * r:9 + 7 * r, 3 + 6 * col:8 + 6 * col] = 200 + rng.integers(0, 55)
    return Dataset(images, labels.astype(np.int64), "train")


# -- softmax and cross entropy ---------------------------------------------------


def test_softmax_examples():
    np.testing.assert_allclose(softmax(np.full(10, 3.0)), 0.1)
    assert softmax(np.array([1e6] + [0.0] * 9))[0] == pytest.approx(1.0)
    Y = softmax(np.array([2.0] + [1.0] * 9), scale=1.0, normalize=False)
    assert Y[0] == pytest.approx(math.e ** 2 / (math.e ** 2 + 9 * math.e), rel=1e-14)
    np.testing.assert_allclose(softmax(np.zeros(10)), 0.1)


@settings(max_examples=50, deadline=None)
@given(X=st.lists(st.floats(0, 1e3), min_size=10, max_size=10))
def test_softmax_is_a_distribution(X):
    Y = softmax(np.array(X))
    assert Y.sum() == pytest.approx(1.0)
    assert np.all(Y > 0)


def test_cross_entropy_examples():
    assert cross_entropy(one_hot(4), one_hot(4)) == 0.0
    assert cross_entropy(np.full(10, 0.1), 2) == pytest.approx(math.log(10))
    Y = np.zeros(10)
    Y[[1, 6]] = 0.5
    assert cross_entropy(Y, 6) == pytest.approx(math.log(2))
    assert cross_entropy(one_hot(0), 5) == pytest.approx(-math.log(1e-12))
    np.testing.assert_allclose(cross_entropy(np.full((3, 10), 0.1), np.array([0, 1, 2])), math.log(10))


# -- penalty ---------------------------------------------------------------------


def test_penalty_examples():
    for theta in (0.0, math.pi):
        p, dp = penalty(theta, 1.0, math.pi)
        assert p == 0 and dp == 0
    p, _ = penalty(math.pi / 2, 1.0, math.pi)
    assert p == pytest.approx(math.pi ** 4 / 16)
    p, dp = penalty(np.linspace(-3, 3, 11), 0.0, math.pi)
    assert np.all(p == 0) and np.all(dp == 0)


def test_penalty_derivative_matches_finite_difference():
    theta = np.linspace(-3.0, 3.0, 41)
    for theta_max in (math.pi, 0.8 * math.pi, 1.2 * math.pi):
        _, dp = penalty(theta, 0.7, theta_max)
        fd = (penalty(theta + 1e-6, 0.7, theta_max)[0] - penalty(theta - 1e-6, 0.7, theta_max)[0]) / 2e-6
        np.testing.assert_allclose(dp, fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("theta_max", [math.pi, 0.8 * math.pi, 1.2 * math.pi])
def test_penalty_well_shape(theta_max):
    theta = wrap_phase(np.linspace(-math.pi, math.pi, 2001)[1:])
    p, dp = penalty(theta, 1.0, theta_max)
    assert np.all(p >= 0)
    high, low = theta_max / 2, -(math.pi - theta_max / 2)
    # nearest binary target of each sample, as a signed wrapped offset
    to0, toT = -wrap_phase(theta), wrap_phase(theta_max - theta)
    step = np.where(np.abs(to0) <= np.abs(toT), to0, toT)
    away = (np.abs(wrap_phase(theta - high)) > 1e-3) & (np.abs(wrap_phase(theta - low)) > 1e-3) \
        & (np.abs(step) > 1e-3)
    # gradient descent moves along -dp: toward the nearest target when gamma > 0
    assert np.all(np.sign(-dp[away]) == np.sign(step[away]))
    _, dn = penalty(theta, -1.0, theta_max)
    assert np.all(np.sign(-dn[away]) == -np.sign(step[away]))
    # thresholds are local maxima of the well
    for t in (high, low):
        centre = penalty(t, 1.0, theta_max)[0]
        assert centre > penalty(t - 1e-3, 1.0, theta_max)[0]
        assert centre > penalty(t + 1e-3, 1.0, theta_max)[0]


def test_literal_penalty_form():
    p, dp = penalty(np.array([0.5, 2.0]), 2.0, math.pi, "literal")
    np.testing.assert_allclose(p, 2.0 * math.pi)
    np.testing.assert_allclose(dp, 0.0)
    with pytest.raises(ValueError):
        penalty(0.1, 1.0, math.pi, "quartic")


def test_total_loss_examples():
    X = np.ones((1, 10))
    w = [np.full((4, 4), math.pi / 2)]
    assert total_loss(X, [3], w, 0.0) == pytest.approx(math.log(10))
    assert total_loss(X, [3], [np.zeros((4, 4)), np.full((4, 4), math.pi)], 5.0) == pytest.approx(math.log(10))
    assert total_loss(X, [3], w, 1.0) == pytest.approx(math.log(10) + math.pi ** 4 / 16)


# -- gradients ---------------------------------------------------------------------


def _numeric_gradient(net, samples, labels, gamma, hp, h=1e-5):
    grads = []
    for li, layer in enumerate(net.layers):
        g = np.zeros(layer.weights.shape)
        for idx in np.ndindex(layer.weights.shape):
            vals = []
            for s in (h, -h):
                w = [l.weights.copy() for l in net.layers]
                w[li][idx] += s
                pert = net.with_weights(w)
                X, _ = forward_samples(pert, samples)
                vals.append(total_loss(X, labels, w, gamma, net.physics.theta_max, hp.logit_scale,
                                       hp.penalty_form))
            g[idx] = (vals[0] - vals[1]) / (2 * h)
        grads.append(g)
    return grads


def _assert_gradients_match(analytic, numeric):
    for a, n in zip(analytic, numeric):
        tol = np.maximum(1e-5 * np.abs(n), 1e-8)
        assert np.all(np.abs(a - n) <= tol), np.max(np.abs(a - n) / np.maximum(np.abs(n), 1e-8))


@pytest.mark.parametrize("n_layers", [1, 2, 3])
@pytest.mark.parametrize("gamma", [0.0, 0.3])
def test_gradient_matches_finite_differences(n_layers, gamma, rng):
    net = make_net(rng, n_layers)
    samples = rng.standard_normal((2, 8, 8)) + 1j * rng.standard_normal((2, 8, 8))
    labels = np.array([2, 7])
    hp = Hyperparams(relaxation="phase")
    res = loss_and_gradient(net, samples, labels, gamma, hp)
    X, _ = forward_samples(net, samples)
    weights = [l.weights for l in net.layers]
    assert res.loss == pytest.approx(total_loss(X, labels, weights, gamma), rel=1e-12)
    _assert_gradients_match(res.grads, _numeric_gradient(net, samples, labels, gamma, hp))


def test_gradient_with_physics_and_policy_variants(rng):
    net = make_net(rng, 2, physics=NeuronPhysics(0.8 * math.pi, 1.0),
                   propagation=PropagationParams(1, "keep_decaying"))
    samples = rng.standard_normal((1, 8, 8)) + 0j
    hp = Hyperparams(logit_scale=3.0, relaxation="phase")
    res = loss_and_gradient(net, samples, [5], 0.05, hp)
    _assert_gradients_match(res.grads, _numeric_gradient(net, samples, [5], 0.05, hp))


@pytest.mark.parametrize("physics", [NeuronPhysics(), NeuronPhysics(0.8 * math.pi, 0.7)])
def test_mixture_gradient_matches_finite_differences(physics, rng):
    net = make_net(rng, 2, physics=physics)
    samples = rng.standard_normal((2, 8, 8)) + 1j * rng.standard_normal((2, 8, 8))
    labels = np.array([1, 8])
    hp = Hyperparams(relaxation="mixture")
    masks = net.detectors.masks(SMALL)

    def loss(weights):
        pert = net.with_weights(weights)
        out = run_planes(pert, samples, relaxed_coefficients(pert, "mixture")[0])[-1]
        return total_loss(detect_samples(out, masks, SMALL.pitch), labels, weights, 0.2, physics.theta_max)

    res = loss_and_gradient(net, samples, labels, 0.2, hp)
    base = [l.weights for l in net.layers]
    assert res.loss == pytest.approx(loss(base), rel=1e-12)
    h = 1e-6
    numeric = []
    for li in range(2):
        g = np.zeros(SMALL.shape)
        for idx in np.ndindex(SMALL.shape):
            vals = []
            for step in (h, -h):
                w = [b.copy() for b in base]
                w[li][idx] += step
                vals.append(loss(w))
            g[idx] = (vals[0] - vals[1]) / (2 * h)
        numeric.append(g)
    _assert_gradients_match(res.grads, numeric)


@pytest.mark.parametrize("theta_max", [math.pi, 0.7 * math.pi, 1.3 * math.pi])
def test_mixture_fraction_examples(theta_max):
    s, ds = mixture_fraction(np.array([0.0, theta_max, theta_max / 2, theta_max / 2 - math.pi]), theta_max)
    np.testing.assert_allclose(s, [0.0, 1.0, 0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(ds[:2], 0.0, atol=1e-15)
    grid = np.linspace(-math.pi, math.pi, 1001)[1:]
    s, _ = mixture_fraction(grid, theta_max)
    assert np.all((s >= 0) & (s <= 1))
    # the crystalline side is where binarize picks theta_max (thresholds themselves excluded)
    off = np.abs(s - 0.5) > 1e-12
    np.testing.assert_array_equal((s > 0.5)[off], (binarize(grid, theta_max) == theta_max)[off])


def test_mixture_coefficients_equal_binary_states_at_targets(rng):
    physics = NeuronPhysics(0.9 * math.pi, 0.8)
    net = make_net(rng, 1, physics=physics)
    b = binarize(net.layers[0].weights, physics.theta_max)
    relaxed = relaxed_coefficients(net.with_weights([b]), "mixture")[0][0]
    exact = transmissions(binarize_network(net))[0]
    np.testing.assert_allclose(relaxed, exact, atol=1e-15)
    with pytest.raises(ValueError):
        relaxed_coefficients(binarize_network(net), "mixture")


def test_backward_zero_input_gives_zero_gradient(rng):
    net = make_net(rng, 2)
    for g in backward(net, np.zeros((8, 8), dtype=complex), 3, 0.0):
        np.testing.assert_array_equal(g, 0.0)


def test_penalty_gradient_vanishes_at_target(rng):
    w = [np.zeros(SMALL.shape)]
    net = DiffractiveNetwork.create(SMALL, 1, 5.0, weights=w, detectors=pixel_layout(SMALL))
    g = backward(net, np.zeros((8, 8), dtype=complex), 0, 2.0)[0]
    np.testing.assert_array_equal(g, 0.0)


# -- Adam --------------------------------------------------------------------------


def test_adam_zero_gradient():
    w = np.array([0.3, -1.0])
    st0 = replace(TrainState.start([w]), m=(np.array([1.0, 2.0]),), v=(np.array([4.0, 8.0]),), step=3)
    st1 = adam_step(st0, [np.zeros(2)])
    # moments decay; the update is proportional to the decayed first moment
    np.testing.assert_allclose(st1.m[0], [0.9, 1.8])
    np.testing.assert_allclose(st1.v[0], [4.0 * 0.999, 8.0 * 0.999])
    fresh = adam_step(TrainState.start([w]), [np.zeros(2)])
    np.testing.assert_array_equal(fresh.weights[0], w)


def test_adam_first_step_is_learning_rate():
    g = np.array([1e-4, -3.0, 250.0])
    st1 = adam_step(TrainState.start([np.zeros(3)], learning_rate=0.01), [g])
    np.testing.assert_allclose(st1.weights[0], -0.01 * np.sign(g), rtol=1e-3)
    np.testing.assert_allclose(st1.weights[0], -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-14)


def test_adam_two_steps_closed_form():
    g = np.array([0.5, -2.0])
    hp = Hyperparams(learning_rate=0.05)
    s = TrainState.start([np.zeros(2)], hp)
    s = adam_step(adam_step(s, [g]), [g])
    m = 0.1 * g * 0.9 + 0.1 * g
    v = 0.001 * g ** 2 * 0.999 + 0.001 * g ** 2
    mhat, vhat = m / (1 - 0.9 ** 2), v / (1 - 0.999 ** 2)
    step1 = -0.05 * g / (np.abs(g) + 1e-8)
    expected = step1 - 0.05 * mhat / (np.sqrt(vhat) + 1e-8)
    np.testing.assert_allclose(s.m[0], m, rtol=1e-14)
    np.testing.assert_allclose(s.v[0], v, rtol=1e-14)
    np.testing.assert_allclose(s.weights[0], expected, rtol=1e-12)
    assert s.step == 2


def test_adam_rewraps_phases():
    s = TrainState.start([np.array([math.pi - 0.001])], learning_rate=0.01)
    s = adam_step(s, [np.array([-1.0])])
    assert -math.pi < s.weights[0][0] < 0
    with pytest.raises(ValueError):
        adam_step(s, [np.zeros(3)])


# -- binarization -------------------------------------------------------------------


def test_binarize_examples():
    assert binarize(0.4 * math.pi, math.pi) == 0.0
    assert binarize(0.6 * math.pi, math.pi) == math.pi
    assert binarize(-0.6 * math.pi, math.pi) == math.pi
    assert binarize(math.pi / 2, math.pi) == 0.0
    assert binarize(-math.pi / 2, math.pi) == math.pi


@settings(max_examples=100, deadline=None)
@given(w=st.lists(st.floats(-50, 50), min_size=1, max_size=30), tm=st.floats(0.1, 6.2))
def test_binarize_idempotent_and_binary(w, tm):
    b = binarize(np.array(w), tm)
    assert np.all((b == 0) | (b == tm))
    np.testing.assert_array_equal(binarize(b, tm), b)


def test_binarize_network(rng):
    net = binarize_network(make_net(rng, 2))
    assert net.binary
    assert binarize_network(net) is net


# -- schedule ------------------------------------------------------------------------


def test_schedule():
    s = PenaltySchedule(-1.0, 3.0, 4, 2)
    assert s.total_epochs == 6
    assert [s.gamma(e) for e in (0, 1, 2, 4, 5)] == [-1.0, 0.0, 1.0, 3.0, 3.0]
    assert s.gamma(0.5) == -0.5
    assert PenaltySchedule(-1.0, 3.0, 0, 2).gamma(0) == 3.0
    for bad in ((1e-3, 1.0, 3, 2), (-1.0, -0.5, 3, 2), (-1.0, 1.0, -1, 2)):
        with pytest.raises(ValueError):
            PenaltySchedule(*bad)


# -- training loops ------------------------------------------------------------------


def test_zero_epochs_returns_binarized_initial(rng):
    net = DiffractiveNetwork.create(TINY, 2, 20.0)
    data = synthetic(8, rng)
    trained, hist = train_optical(net, data, None, PenaltySchedule(-1e-3, 1e-1, 0, 0), seed=5, encoding=ONE)
    assert hist.epochs == [] and trained.binary
    assert all(np.all((l.weights == 0) | (l.weights == math.pi)) for l in trained.layers)
    again, _ = train_optical(net, data, None, PenaltySchedule(-1e-3, 1e-1, 0, 0), seed=5, encoding=ONE)
    for a, b in zip(trained.layers, again.layers):
        np.testing.assert_array_equal(a.weights, b.weights)


def test_single_class_reaches_full_accuracy(rng):
    net = DiffractiveNetwork.create(TINY, 2, 20.0)
    data = synthetic(64, rng)
    data = replace(data, labels=np.full(64, 4, dtype=np.int64))
    hp = Hyperparams(learning_rate=0.05, batch_size=8)
    trained, hist = train_optical(net, data, data, PenaltySchedule(-1e-3, 20.0, 3, 10), hp, seed=0, encoding=ONE)
    assert hist.epochs[2].val_acc == 1.0
    assert accuracy(detector_outputs(trained, data, ONE), data.labels) == 1.0


def test_training_is_deterministic(rng):
    net = DiffractiveNetwork.create(TINY, 1, 20.0)
    data = synthetic(40, rng)
    hp = Hyperparams(batch_size=16)
    runs = [train_optical(net, data, data, PenaltySchedule(-1e-3, 1e-1, 2, 1), hp, seed=9, encoding=ONE)
            for _ in range(2)]
    assert runs[0][1].epochs == runs[1][1].epochs
    np.testing.assert_array_equal(runs[0][0].layers[0].weights, runs[1][0].layers[0].weights)
    other, _ = train_optical(net, data, data, PenaltySchedule(-1e-3, 1e-1, 2, 1), hp, seed=10, encoding=ONE)
    assert not np.array_equal(other.layers[0].weights, runs[0][0].layers[0].weights)


def test_callback_and_metrics(rng):
    net = DiffractiveNetwork.create(TINY, 1, 20.0)
    data = synthetic(20, rng)
    seen = []
    _, hist = train_optical(net, data, None, PenaltySchedule(-1.0, 1.0, 2, 1), Hyperparams(batch_size=8),
                            encoding=ONE, callback=seen.append)
    assert seen == hist.epochs
    assert [m.gamma for m in seen] == [-1.0, 0.0, 1.0]
    assert all(math.isnan(m.val_acc) for m in seen)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported(rng):
    net = DiffractiveNetwork.create(TINY, 1, 20.0)
    hp = Hyperparams(learning_rate=float("inf"), batch_size=4)
    with pytest.raises(TrainingDiverged, match="epoch 0"):
        train_optical(net, synthetic(12, rng), None, PenaltySchedule(-1.0, 1.0, 1, 0), hp, encoding=ONE)


def test_empty_training_set_rejected(rng):
    empty = synthetic(3, rng).subset(slice(0, 0))
    with pytest.raises(ValueError):
        train_optical(DiffractiveNetwork.create(TINY, 1, 20.0), empty, None, encoding=ONE)


def test_ste_gradient_on_targets_equals_plain_gradient(rng):
    # with the phase relaxation and weights already binary, binarize is the identity
    net = make_net(rng, 2)
    on_targets = net.with_weights([binarize(l.weights) for l in net.layers])
    samples = rng.standard_normal((3, 8, 8)) + 0j
    hp = Hyperparams(relaxation="phase")
    ste = ste_loss_and_gradient(on_targets, samples, [1, 2, 3], hp)
    plain = loss_and_gradient(on_targets, samples, [1, 2, 3], 0.0, hp)
    assert ste.loss == pytest.approx(plain.loss, rel=1e-12)
    for a, b in zip(ste.grads, plain.grads):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-15)


@pytest.mark.parametrize("relaxation", ["phase", "mixture"])
def test_ste_gradient_uses_binary_forward_and_latent_derivative(relaxation, rng):
    net = make_net(rng, 2)
    bin_net = binarize_network(net)
    samples = rng.standard_normal((3, 8, 8)) + 0j
    hp = Hyperparams(relaxation=relaxation)
    ste = ste_loss_and_gradient(net, samples, [1, 2, 3], hp)
    X, _ = forward_samples(bin_net, samples)
    np.testing.assert_allclose(ste.X, X, rtol=1e-12)
    want = loss_and_gradient(bin_net, samples, [1, 2, 3], 0.0, hp, coefficients=transmissions(bin_net),
                             derivatives=relaxed_coefficients(net, relaxation)[1])
    for a, b in zip(ste.grads, want.grads):
        np.testing.assert_array_equal(a, b)
    binary = ste_loss_and_gradient(net, samples, [1, 2, 3], replace(hp, ste_backward="binary"))
    plain = loss_and_gradient(bin_net.with_weights([l.weights for l in bin_net.layers]), samples, [1, 2, 3],
                              0.0, Hyperparams(relaxation="phase"))
    for a, b in zip(binary.grads, plain.grads):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-15)


def test_ste_training_on_targets_matches_penalty_forward(rng):
    w = [np.where(rng.random(TINY.shape) < 0.5, 0.0, math.pi) for _ in range(2)]
    net = DiffractiveNetwork.create(TINY, 2, 20.0, weights=w)
    data = synthetic(16, rng)
    ste_net, _ = ste_train_optical(net, data, None, Hyperparams(init="keep"), encoding=ONE, epochs=0)
    pen_net, _ = train_optical(net, data, None, PenaltySchedule(-1.0, 1.0, 0, 0), Hyperparams(init="keep"),
                               encoding=ONE)
    np.testing.assert_array_equal(detector_outputs(ste_net, data, ONE), detector_outputs(pen_net, data, ONE))
    fields = encode_batch(data.images, ONE, TINY)
    np.testing.assert_allclose(detector_outputs(ste_net, data, ONE), forward_samples(net, fields)[0], rtol=1e-12)


def test_ste_training_learns(rng):
    net = DiffractiveNetwork.create(TINY, 2, 20.0)
    data = synthetic(120, rng)
    _, hist = ste_train_optical(net, data, data, Hyperparams(batch_size=16, learning_rate=0.05), seed=1,
                                encoding=ONE, epochs=3)
    assert hist.epochs[-1].val_acc > 0.3


# -- correcting layer -------------------------------------------------------------------


def test_apply_correcting_examples(rng):
    X = rng.random((5, 10))
    np.testing.assert_array_equal(apply_correcting(CorrectingLayer.identity(), X), X)
    np.testing.assert_array_equal(np.argmax(apply_correcting(CorrectingLayer(2 * np.eye(10)), X), axis=1),
                                  np.argmax(X, axis=1))
    perm = rng.permutation(10)
    np.testing.assert_allclose(apply_correcting(CorrectingLayer(np.eye(10)[perm]), X), X[:, perm])
    bias = np.arange(10.0)
    L = apply_correcting(CorrectingLayer(np.eye(10), bias), X)
    np.testing.assert_allclose(L, X + X.mean(axis=1, keepdims=True) * bias)


def test_fit_correcting_separable(rng):
    labels = rng.integers(0, 10, 300)
    perm = rng.permutation(10)
    X = 0.2 + 0.05 * rng.random((300, 10))
    X[np.arange(300), perm[labels]] += 1.0
    layer = fit_correcting(X, labels, Hyperparams(correcting_lr=0.05), seed=0, epochs=30)
    assert accuracy(apply_correcting(layer, X), labels) == 1.0


def test_fit_correcting_with_bias_and_identity(rng):
    X = rng.random((50, 10))
    labels = np.argmax(X, axis=1)
    hp = Hyperparams(correcting_init="identity", correcting_bias=True)
    layer = fit_correcting(X, labels, hp, epochs=0)
    np.testing.assert_array_equal(layer.W, np.eye(10))
    np.testing.assert_array_equal(layer.bias, np.zeros(10))
    with pytest.raises(ValueError):
        fit_correcting(X[:0], labels[:0])


def test_train_correcting_refuses_real_network(rng):
    with pytest.raises(ValueError, match="binarized"):
        train_correcting(DiffractiveNetwork.create(TINY, 1, 20.0), synthetic(4, rng), encoding=ONE)


def test_identity_zero_epochs_equals_optical_only(rng):
    w = [np.where(rng.random(TINY.shape) < 0.5, 0.0, math.pi)]
    net = DiffractiveNetwork.create(TINY, 1, 20.0, weights=w, binary=True)
    data = synthetic(30, rng)
    layer = train_correcting(net, data, Hyperparams(correcting_init="identity"), encoding=ONE, epochs=0)
    X = detector_outputs(net, data, ONE)
    assert accuracy(apply_correcting(layer, X), data.labels) == accuracy(X, data.labels)


def test_correcting_improves_or_preserves(rng):
    w = [np.where(rng.random(TINY.shape) < 0.5, 0.0, math.pi) for _ in range(2)]
    net = DiffractiveNetwork.create(TINY, 2, 20.0, weights=w, binary=True)
    train, val = synthetic(400, rng), synthetic(200, rng)
    layer = train_correcting(net, train, Hyperparams(correcting_lr=0.05), encoding=ONE, epochs=40)
    Xv = detector_outputs(net, val, ONE)
    assert accuracy(apply_correcting(layer, Xv), val.labels) >= accuracy(Xv, val.labels)
