import json

import numpy as np
import pytest

from spinorbit.config import DEFAULTS, ConfigError, RunConfig
from spinorbit.dynamics import DissipationSpec


def test_defaults_materialised():
    cfg = RunConfig.from_dict({})
    assert cfg.to_dict() == DEFAULTS
    assert cfg.p == 50.1
    assert cfg.params().elastic.epsilon == 1e-3
    assert cfg.params().kinetic.kappa == 0.05


@pytest.mark.parametrize("given, path", [
    ({"bogus": 1}, "bogus"),
    ({"elastic": {"bogus": 1}}, "elastic.bogus"),
    ({"experiment": {"thresholds": {"gama": 1e-6}}}, "experiment.thresholds.gama"),
])
def test_unknown_keys_rejected_with_path(given, path):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict(given)
    assert info.value.path == path
    assert str(info.value).startswith(path + ":")


@pytest.mark.parametrize("given, path", [
    ({"gravity": {"m": -1.0}}, "gravity"),
    ({"elastic": {"A": 0.1, "B": 0.4}}, "elastic"),
    ({"elastic": {"epsilon": "small"}}, "elastic.epsilon"),
    ({"kinetic": {"mass_beta": 0.0}}, "kinetic"),
    ({"dissipation": {"eta": [[1.0, 0.0], [0.0, 1.0]]}}, "dissipation.eta"),
    ({"dissipation": {"eta": -0.1}}, "dissipation.eta"),
    ({"integrator": {"method": "Euler"}}, "integrator.method"),
    ({"experiment": {"perturbation": {"components": ["theta"]}}}, "experiment.perturbation.components"),
    ({"experiment": {"t_end": 0}}, "experiment.t_end"),
    ({"p": 0}, "p"),
    ({"seed": 1.5}, "seed"),
    ({"sweep": {"epsilon": []}}, "sweep.epsilon"),
    ({"gravity": 3}, "gravity"),
])
def test_invalid_values_rejected_with_path(given, path):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict(given)
    assert info.value.path == path


def test_invalid_json():
    with pytest.raises(ConfigError):
        RunConfig.from_json("{not json")


def test_round_trip(tmp_path):
    cfg = RunConfig.from_dict({"elastic": {"epsilon": 1e-4}, "seed": 3, "dissipation": {"eta": 0.2}})
    again = RunConfig.from_json(cfg.to_json())
    assert again.to_dict() == cfg.to_dict()
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert RunConfig.load(path).to_dict() == cfg.to_dict()
    assert json.loads(cfg.to_json()) == cfg.to_dict()


def test_override():
    cfg = RunConfig.from_dict({}).override(**{"elastic.epsilon": 1e-4, "p": 40.0})
    assert cfg.params().elastic.epsilon == 1e-4
    assert cfg.p == 40.0
    with pytest.raises(ConfigError):
        RunConfig.from_dict({}).override(**{"elastic.nope": 1})


def test_dissipation_views():
    cfg = RunConfig.from_dict({})
    d = cfg.dissipation()
    assert isinstance(d, DissipationSpec)
    np.testing.assert_array_equal(d.eta, 0.1 * np.eye(5))
    assert cfg.dissipation(eta=0.0) is None
    full = RunConfig.from_dict({"dissipation": {"eta": np.diag([1, 2, 3, 4, 5.0]).tolist()}})
    assert full.dissipation().eta[4, 4] == 5.0
    cubic = RunConfig.from_dict({"dissipation": {"eta": 0.1, "cubic_coefficient": 0.5}}).dissipation()
    w = np.array([1.0, -2.0, 0, 0, 0])
    quad = 0.05 * w @ w
    assert cubic.value(w) == pytest.approx(quad + 0.5 * 9.0)
    assert w @ cubic.gradient(w) == pytest.approx(2 * quad + 3 * 0.5 * 9.0)
    # friction must have a nondegenerate minimum, so a purely cubic F is refused
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"dissipation": {"eta": 0.0, "cubic_coefficient": 0.5}})


def test_typed_views():
    cfg = RunConfig.from_dict({"seed": 4, "integrator": {"method": "DOP853", "max_step": 0.5}})
    tol = cfg.tolerances()
    assert tol.method == "DOP853" and tol.max_step == 0.5
    assert cfg.perturbation().seed == 4
    assert cfg.thresholds().manifold_distance == 1e-6
    assert cfg.sample_dt == 1.0
    assert cfg.t_end == 1e4
