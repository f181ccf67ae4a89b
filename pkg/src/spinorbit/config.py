"""Run configuration: a JSON document with every model constant spelled out.

Missing keys take the defaults below; unknown keys are rejected with their
key path. ``RunConfig.to_dict`` materialises every value, so reports carry
the complete set of numbers they were produced from.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .dynamics import DissipationSpec, KineticSpec, ModelParams, Tolerances
from .equilibrium import Perturbation, Thresholds
from .potentials import CubicTerm, ElasticCoeffs, GravityParams, symmetric_cubic


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


DEFAULTS: dict[str, Any] = {
    "gravity": {"GM": 1.0, "m": 50.0, "I0": 0.1},
    "elastic": {"A": 0.4, "B": 0.1, "C": [0.1], "D": [[1.0]], "epsilon": 1e-3, "cubic_coefficient": 0.0},
    "kinetic": {"kappa": 0.05, "mass_beta": 0.01, "mass_J": [5.0, 5.0, 5.0], "mass_z": [5.0]},
    "dissipation": {"eta": 0.1, "cubic_coefficient": 0.0},
    "p": 50.1,
    "integrator": {"method": "RK45", "rtol": 1e-10, "atol": 1e-12, "max_step": None, "sample_dt": 1.0},
    "experiment": {
        "t_end": 1e4,
        "perturbation": {"size": 1e-3, "components": ["R", "gamma", "Rdot", "chidot"]},
        "thresholds": {"manifold_distance": 1e-6, "gamma": 1e-6, "eccentricity": 1e-5,
                       "elastic_speed": 1e-8, "energy_step": 1e-9},
    },
    "sweep": {"epsilon": [1e-2, 1e-3, 1e-4], "p": None, "eta": None, "verify": False},
    "output": {"dir": "out"},
    "seed": None,
}


def _merge(defaults: dict, given: dict, path: str) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(path or "<root>", "expected an object")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        kp = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(kp, "unknown key")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, kp)
        else:
            out[key] = value
    return out


def _num(d: dict, key: str, path: str, positive: bool = False, allow_none: bool = False):
    v = d[key]
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{path}.{key}", "must be > 0")
    return float(v)


def _dissipative_cubic(c3: float, n: int) -> CubicTerm:
    def value(wb, wr):
        w = np.concatenate([wb, wr])
        return c3 * float(np.sum(np.abs(w) ** 3))

    def grad(wb, wr):
        w = np.concatenate([wb, wr])
        return 3.0 * c3 * w * np.abs(w)

    return CubicTerm(value, grad)


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def from_dict(cls, given: Optional[dict] = None) -> "RunConfig":
        cfg = cls(_merge(DEFAULTS, given or {}, ""))
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            given = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from None
        return cls.from_dict(given)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    def override(self, **changes) -> "RunConfig":
        """Copy with dotted-path overrides, e.g. ``override(**{"elastic.epsilon": 1e-4})``."""
        data = copy.deepcopy(self.data)
        for dotted, value in changes.items():
            node = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                node = node[key]
            if leaf not in node:
                raise ConfigError(dotted, "unknown key")
            node[leaf] = value
        cfg = RunConfig(data)
        cfg.validate()
        return cfg

    # --- typed views ---

    def validate(self):
        self.params()
        self.dissipation()
        self.tolerances()
        self.perturbation()
        self.thresholds()
        _num(self.data, "p", "", allow_none=False)
        if self.data["p"] == 0:
            raise ConfigError("p", "angular momentum must be nonzero")
        _num(self.data["experiment"], "t_end", "experiment", positive=True)
        seed = self.data["seed"]
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise ConfigError("seed", "expected an integer or null")
        sw = self.data["sweep"]
        for key in ("epsilon", "p", "eta"):
            vals = sw[key]
            if vals is not None and (not isinstance(vals, list) or not vals
                                     or not all(isinstance(v, (int, float)) for v in vals)):
                raise ConfigError(f"sweep.{key}", "expected a nonempty list of numbers or null")
        if not isinstance(sw["verify"], bool):
            raise ConfigError("sweep.verify", "expected true or false")
        if not isinstance(self.data["output"]["dir"], str) or not self.data["output"]["dir"]:
            raise ConfigError("output.dir", "expected a nonempty path string")

    @property
    def p(self) -> float:
        return float(self.data["p"])

    @property
    def t_end(self) -> float:
        return float(self.data["experiment"]["t_end"])

    @property
    def sample_dt(self) -> Optional[float]:
        return _num(self.data["integrator"], "sample_dt", "integrator", positive=True, allow_none=True)

    @property
    def out_dir(self) -> str:
        return self.data["output"]["dir"]

    @property
    def seed(self) -> Optional[int]:
        return self.data["seed"]

    def params(self) -> ModelParams:
        g, e, k = self.data["gravity"], self.data["elastic"], self.data["kinetic"]
        GM, m, I0 = (_num(g, key, "gravity") for key in ("GM", "m", "I0"))
        try:
            gp = GravityParams(GM, m, I0)
        except ValueError as exc:
            raise ConfigError("gravity", str(exc)) from None
        c3 = _num(e, "cubic_coefficient", "elastic")
        A, B = _num(e, "A", "elastic"), _num(e, "B", "elastic")
        eps = _num(e, "epsilon", "elastic", positive=True)
        try:
            co = ElasticCoeffs(
                A=A, B=B, C=np.asarray(e["C"], dtype=float), D=np.asarray(e["D"], dtype=float),
                epsilon=eps, cubic=symmetric_cubic(c3) if c3 else None,
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError("elastic", str(exc)) from None
        kappa, mass_beta = _num(k, "kappa", "kinetic"), _num(k, "mass_beta", "kinetic")
        try:
            ks = KineticSpec(I0=gp.I0, kappa=kappa, mass_beta=mass_beta,
                             mass_J=np.asarray(k["mass_J"], dtype=float),
                             mass_z=np.asarray(k["mass_z"], dtype=float))
        except (ValueError, TypeError) as exc:
            raise ConfigError("kinetic", str(exc)) from None
        try:
            return ModelParams(gp, co, ks)
        except ValueError as exc:
            raise ConfigError("kinetic.mass_z", str(exc)) from None

    def dissipation(self, eta: Any = None) -> Optional[DissipationSpec]:
        d = self.data["dissipation"]
        n = len(np.atleast_1d(self.data["elastic"]["C"]))
        eta = d["eta"] if eta is None else eta
        try:
            mat = np.asarray(eta, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError("dissipation.eta", "expected a number or a square matrix") from None
        if mat.ndim == 0:
            mat = float(mat) * np.eye(4 + n)
        if mat.shape != (4 + n, 4 + n):
            raise ConfigError("dissipation.eta", f"expected shape {(4 + n, 4 + n)}, got {mat.shape}")
        c3 = _num(d, "cubic_coefficient", "dissipation")
        if not np.any(mat) and not c3:
            return None
        try:
            spec = DissipationSpec(mat, _dissipative_cubic(c3, n) if c3 else None)
            spec.check_positive_definite()
        except ValueError as exc:
            raise ConfigError("dissipation.eta", str(exc)) from None
        return spec

    def tolerances(self) -> Tolerances:
        it = self.data["integrator"]
        if it["method"] not in ("RK45", "DOP853"):
            raise ConfigError("integrator.method", "expected RK45 or DOP853")
        max_step = _num(it, "max_step", "integrator", positive=True, allow_none=True)
        return Tolerances(rtol=_num(it, "rtol", "integrator", positive=True),
                          atol=_num(it, "atol", "integrator", positive=True),
                          method=it["method"], max_step=np.inf if max_step is None else max_step)

    def perturbation(self) -> Perturbation:
        pd = self.data["experiment"]["perturbation"]
        comps = pd["components"]
        if not isinstance(comps, list) or not all(c in Perturbation._SLOTS for c in comps):
            raise ConfigError("experiment.perturbation.components",
                              f"expected a list drawn from {sorted(Perturbation._SLOTS)}")
        size = _num(pd, "size", "experiment.perturbation")
        if size < 0:
            raise ConfigError("experiment.perturbation.size", "must be >= 0")
        return Perturbation(size=size, components=tuple(comps), seed=self.data["seed"])

    def thresholds(self) -> Thresholds:
        th = self.data["experiment"]["thresholds"]
        return Thresholds(**{k: _num(th, k, "experiment.thresholds", positive=True) for k in th})
