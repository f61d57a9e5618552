import math

import numpy as np
import pytest

from lumina.data import base_scenes, synth_pairs
from lumina.errors import ConfigError, TrainingError
from lumina.losses import LossWeights
from lumina.networks import ModelParams
from lumina.autodiff import Tensor
from lumina.training import (LOG_FIELDS, AdamState, TrainConfig, adam_cosine_step, cosine_lr,
                             format_log, train)


def scalar_params(value=0.0):
    return ModelParams({"w": Tensor(np.array([value]), requires_grad=True)})


def test_config_defaults():
    c = TrainConfig()
    assert (c.lr, c.epochs, c.crop, c.batch, c.lam, c.clamp_floor) == (1e-4, 50, 64, 1, 0.2, 0.01)
    assert c.weights == LossWeights(5, 1, 1, 0.1)
    assert TrainConfig.for_profile("lol").lam == 0.10
    assert TrainConfig.for_profile("lol", lam=0.3).lam == 0.3


@pytest.mark.parametrize("kw", [{"lr": 0}, {"lam": 0}, {"lam": 1.5}, {"epochs": 0}, {"crop": 0}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_unknown_profile():
    with pytest.raises(ConfigError):
        TrainConfig.for_profile("sice")


def test_cosine_endpoints_and_monotone():
    assert cosine_lr(1e-4, 0, 100) == 1e-4
    assert cosine_lr(1e-4, 100, 100) == 0.0
    vals = [cosine_lr(1e-4, s, 100) for s in range(101)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert cosine_lr(1e-4, 50, 100) == pytest.approx(5e-5, rel=1e-12)


def test_adam_scalar_oracle():
    lr, eps = 1e-3, 1e-8
    p = scalar_params()
    state = AdamState()
    lr_t = adam_cosine_step(p, {"w": np.array([1.0])}, state, 0, 10, lr)
    assert lr_t == lr
    # m_hat = 1, v_hat = 1 after bias correction
    assert abs(p["w"].data[0] - (-lr * 1.0 / (math.sqrt(1.0) + eps))) < 1e-12


def test_adam_two_steps_hand_formula():
    lr = 0.01
    p = scalar_params(0.5)
    state = AdamState()
    g1, g2 = 0.3, -0.7
    adam_cosine_step(p, {"w": np.array([g1])}, state, 0, 4, lr)
    adam_cosine_step(p, {"w": np.array([g2])}, state, 1, 4, lr)
    w = 0.5
    m = v = 0.0
    for t, (g, step) in enumerate([(g1, 0), (g2, 1)], start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        lr_t = lr * 0.5 * (1 + math.cos(math.pi * step / 4))
        w -= lr_t * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert abs(p["w"].data[0] - w) < 1e-12


def test_adam_nan_names_path():
    p = scalar_params()
    with pytest.raises(TrainingError, match="'?w'?"):
        adam_cosine_step(p, {"w": np.array([np.nan])}, AdamState(), 0, 1, 1e-3)


@pytest.fixture(scope="module")
def tiny_pairs():
    return synth_pairs(base_scenes(2, 20, seed=0), 2, seed=0)


def test_train_deterministic_and_logged(tiny_pairs):
    cfg = TrainConfig(epochs=2, crop=16, seed=3)
    a = train(cfg, tiny_pairs)
    b = train(cfg, tiny_pairs)
    assert len(a.log) == 4
    assert format_log(a.log) == format_log(b.log)
    for k in a.params:
        assert a.params[k].data.tobytes() == b.params[k].data.tobytes()
    assert list(a.log[0]) == list(LOG_FIELDS)
    assert a.log[0]["lr"] == 1e-4
    text = format_log(a.log).splitlines()
    assert text[0].split("\t") == list(LOG_FIELDS) and len(text) == 5


def test_train_changes_with_seed(tiny_pairs):
    a = train(TrainConfig(epochs=1, crop=16, seed=0), tiny_pairs)
    b = train(TrainConfig(epochs=1, crop=16, seed=1), tiny_pairs)
    assert format_log(a.log) != format_log(b.log)


def test_train_rejects_bad_inputs(tiny_pairs):
    with pytest.raises(ConfigError):
        train(TrainConfig(epochs=1, crop=32), tiny_pairs)
    with pytest.raises(ConfigError):
        train(TrainConfig(epochs=1, crop=16), [])


def test_train_aborts_on_nan(tiny_pairs):
    params = ModelParams.init(0)
    params["l_net.conv1.weight"].data[0, 0, 0, 0] = np.nan
    with pytest.raises(TrainingError):
        train(TrainConfig(epochs=1, crop=16), tiny_pairs, params=params)
