import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmse_audit.distributions import BSC, CCGGeneral, CCGDiag, NoisyDataset, RingMixture, eta_sigma, sample, true_mmse_mc
from mmse_audit.errors import ContractError, ParameterError, TrainingError
from mmse_audit.models import (
    Logistic,
    ShallowNet,
    TrainConfig,
    _Layout,
    compressed_size_bits,
    dump_weights,
    emp_mse,
    fit_logistic_closed_form,
    load_weights,
    loss_and_grad,
    predict,
    train,
)


def flat_params(h):
    return _Layout.from_hypothesis(h)


def finite_difference(h, xs, ss, step=1e-6):
    layout, flat = flat_params(h)
    num = np.empty_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = step
        up = loss_and_grad(layout.to_hypothesis(flat + e), xs, ss)[0]
        dn = loss_and_grad(layout.to_hypothesis(flat - e), xs, ss)[0]
        num[i] = (up - dn) / (2 * step)
    return num


def random_net(g, d, width):
    return ShallowNet(g.normal(size=(width, d)), g.normal(size=width), g.normal(size=width), float(g.normal()))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 5), st.integers(1, 6))
def test_gradients_match_finite_differences(seed, d, width):
    g = np.random.default_rng(seed)
    xs, ss = g.normal(size=(25, d)), g.random(25)
    for h in (Logistic(g.normal(size=d), float(g.normal())), random_net(g, d, width)):
        _, grad = loss_and_grad(h, xs, ss)
        analytic = flat_params(grad)[1]
        numeric = finite_difference(h, xs, ss)
        # central differences are exact to O(step^2) away from ReLU kinks
        scale = np.maximum(np.abs(analytic), 1e-4)
        assert np.all(np.abs(numeric - analytic) <= 1e-5 * scale + 1e-9)


def test_predict_examples():
    assert predict(Logistic([0.0], 0.0), np.array([3.7]))[0] == 0.5
    net = ShallowNet(np.ones((3, 2)), np.zeros(3), np.zeros(3), 0.0)
    np.testing.assert_array_equal(predict(net, np.random.default_rng(0).normal(size=(4, 2))), 0.5)
    assert predict(Logistic([1.0], 0.0), math.log(3))[0] == pytest.approx(0.75, abs=1e-15)


def test_predict_dimension_mismatch():
    with pytest.raises(ContractError):
        predict(Logistic([1.0, 2.0], 0.0), np.ones((3, 3)))


def test_hypothesis_requires_finite_parameters():
    with pytest.raises(ParameterError):
        Logistic([np.nan], 0.0)
    with pytest.raises(ParameterError):
        ShallowNet(np.ones((2, 1)), np.ones(3), np.ones(2), 0.0)


def test_emp_mse_examples():
    ds = sample(BSC(0.5, 0.0), 200, 0.0, seed=1)
    exact = Logistic([60.0], -30.0)  # saturates to S on the two atoms
    assert emp_mse(exact, ds) < 1e-20
    assert emp_mse(Logistic([0.0], 0.0), ds) == 0.25


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_emp_mse_in_unit_interval(seed):
    g = np.random.default_rng(seed)
    ds = NoisyDataset(g.normal(size=(30, 2)) * 10, g.random(30), 1.0, 0)
    assert 0.0 <= emp_mse(random_net(g, 2, 4), ds) <= 1.0


def test_closed_form_logistic_recovers_affine_log_odds():
    s = np.array([[1.0, 0.2], [0.2, 0.5]])
    m = CCGGeneral(0.3, [0.0, 0.0], [1.0, 0.5], s, s)
    ds = sample(m, 10**6, 0.5, seed=2)
    h = fit_logistic_closed_form(ds, m)
    qf = m.quadratic_form(0.5)
    # theta is exactly affine, so the regression is exact up to rounding
    np.testing.assert_allclose(h.a, qf.b, rtol=1e-9)
    assert h.b == pytest.approx(qf.c, abs=1e-9)


def test_closed_form_logistic_independent_features():
    m = CCGDiag(0.2, [1.0, -1.0], [1.0, -1.0], 1.0, 1.0)
    h = fit_logistic_closed_form(sample(m, 10_000, 1.0, seed=3), m)
    np.testing.assert_allclose(h.a, 0.0, atol=1e-12)
    assert h.b == pytest.approx(math.log(0.2 / 0.8), abs=1e-12)


def test_closed_form_logistic_needs_rows():
    m = CCGDiag(0.5, [0.0] * 3, [1.0] * 3, 1.0, 2.0)
    with pytest.raises(ContractError):
        fit_logistic_closed_form(sample(m, 4, 1.0, seed=0), m)


def test_decomposition_oracle_bsc():
    # E(S - h)^2 = MMSE + E(eta - h)^2 on fresh data
    m = BSC(0.25, 0.25)
    h = fit_logistic_closed_form(sample(m, 10**6, 1.0, seed=4), m)
    fresh = sample(m, 10**6, 1.0, seed=5)
    mse_h = emp_mse(h, fresh)
    mmse = true_mmse_mc(m, 1.0, 10**6, seed=6)
    gap = np.mean((eta_sigma(m, 1.0, fresh.xs) - predict(h, fresh.xs)) ** 2)
    sd = np.std((fresh.ss - predict(h, fresh.xs)) ** 2) / 1e3
    assert abs(mse_h - (mmse.value + gap)) <= 3 * math.hypot(sd, mmse.se)


def test_closed_form_logistic_mse_converges_on_equal_covariance():
    m = CCGDiag(0.25, -1.0, 1.0, 1.0, 1.0, 1)
    mmse = true_mmse_mc(m, 1.0, 4 * 10**6, seed=7).value
    test = sample(m, 10**5, 1.0, seed=8)
    mean_gaps = []
    for n in (10**3, 10**4, 10**5):
        gaps = []
        for r in range(20):
            ds = sample(m, n, 1.0, seed=1000 * n + r)
            h = fit_logistic_closed_form(ds, m)
            # theta is affine here, so h equals eta up to rounding
            assert np.max(np.abs(predict(h, test.xs) - eta_sigma(m, 1.0, test.xs))) < 1e-10
            gaps.append(abs(emp_mse(h, ds) - mmse))
        mean_gaps.append(np.mean(gaps))
    assert mean_gaps[0] > mean_gaps[1] > mean_gaps[2]
    assert mean_gaps[2] < 2e-3


def test_train_separable_logistic():
    m = CCGDiag(0.5, -4.0, 4.0, 1.0, 1.0, 1)
    ds = sample(m, 1000, 0.1, seed=10)
    h = train("logistic", TrainConfig.logistic(seed=1), ds)
    ref = emp_mse(fit_logistic_closed_form(ds, m), ds)
    assert emp_mse(h, ds) < 0.01
    assert abs(emp_mse(h, ds) - ref) < 0.005


def test_train_constant_labels():
    xs = np.random.default_rng(0).normal(size=(200, 2))
    ds = NoisyDataset(xs, np.ones(200), 1.0, 0)
    assert np.all(predict(train("shallow_net", TrainConfig.shallow_net(10), ds), xs) > 0.99)
    # With the default decay the logistic logit settles near 4.6 (h ~ 0.989):
    # the square-loss gradient vanishes like (1 - h)^2 and is balanced by decay.
    assert np.all(predict(train("logistic", TrainConfig.logistic(), ds), xs) > 0.98)
    assert np.all(predict(train("logistic", TrainConfig.logistic(weight_decay=0.0), ds), xs) > 0.99)


def test_train_overfits_small_ring_sample():
    m = RingMixture(3, 2.0)
    ds = sample(m, 500, 2.0, seed=11)
    h = train("shallow_net", TrainConfig.shallow_net(10, seed=2), ds)
    mmse = true_mmse_mc(m, 2.0, 200_000, seed=12)
    assert emp_mse(h, ds) < mmse.value - 0.005


def test_train_is_permutation_invariant_and_deterministic():
    m = RingMixture(2, 1.0)
    ds = sample(m, 150, 0.5, seed=13)
    perm = np.random.default_rng(1).permutation(150)
    shuffled = NoisyDataset(ds.xs[perm], ds.ss[perm], ds.sigma, ds.seed)
    cfg = TrainConfig.shallow_net(4, epochs=300, seed=5)
    a, b, c = train("shallow_net", cfg, ds), train("shallow_net", cfg, shuffled), train("shallow_net", cfg, ds)
    assert dump_weights(a) == dump_weights(b) == dump_weights(c)
    other = train("shallow_net", cfg.with_seed(6), ds)
    assert dump_weights(other) != dump_weights(a)


def test_train_divergence_reports_epoch():
    ds = NoisyDataset(np.array([[1e308], [-1e308]]), np.array([0.0, 1.0]), 0.0, 0)
    with pytest.raises(TrainingError) as info:
        train("shallow_net", TrainConfig(learning_rate=1e300, epochs=50, width=3, schedule="constant"), ds)
    assert 0 <= info.value.epoch <= 50


def test_train_config_defaults_and_validation():
    log, net = TrainConfig.logistic(), TrainConfig.shallow_net()
    assert (log.learning_rate, log.epochs) == (0.1, 5000)
    assert (net.learning_rate, net.epochs, net.width) == (0.01, 10000, 10)
    assert (log.beta1, log.beta2, log.weight_decay, log.schedule) == (0.9, 0.999, 0.01, "cosine")
    assert log.lr_at(0) == 0.1 and log.lr_at(2500) == pytest.approx(0.05)
    for bad in ({"learning_rate": 0}, {"epochs": 0}, {"beta1": 1.0}, {"schedule": "step"}):
        with pytest.raises(ParameterError):
            TrainConfig(**{"learning_rate": 0.1, "epochs": 10, **bad})


def test_weights_round_trip_and_format():
    g = np.random.default_rng(3)
    for h in (Logistic(g.normal(size=3), 0.5), random_net(g, 2, 10)):
        blob = dump_weights(h)
        assert blob[:6] == b"MMSEH1"
        back = load_weights(blob)
        assert dump_weights(back) == blob
    blob = dump_weights(random_net(g, 2, 10))
    assert blob[6] == 1 and int.from_bytes(blob[7:11], "little") == 2
    assert int.from_bytes(blob[11:15], "little") == 10
    assert len(blob) == 15 + 8 * (10 * 2 + 10 + 10 + 1)
    with pytest.raises(ContractError):
        load_weights(b"XXXXXX" + blob[6:])


def test_compressed_size():
    small = Logistic([0.3], -0.2)
    assert compressed_size_bits(small) < 2000
    assert compressed_size_bits(small) == compressed_size_bits(small)
    m = RingMixture(3, 2.0)
    net = train("shallow_net", TrainConfig.shallow_net(10, epochs=1000, seed=1), sample(m, 500, 2.0, seed=1))
    c = compressed_size_bits(net)
    # float64 weights barely compress: roughly 64 bits per parameter plus a header
    assert 1_000 <= c <= 100_000
    assert c >= 0.8 * 64 * 41
