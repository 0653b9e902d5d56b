"""Run configuration: JSON formats for systems and certification runs.

A system file describes one generator (matrices row-major as nested
lists) and may attach a predictor.  A run configuration adds the
certification settings: confidence level, inverse temperatures, sample
path lengths, Monte-Carlo budgets, seeds, and one hypothesis class per
feature mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InputError
from .lti import FeatureMode, Generator, Predictor
from .posterior import ParamBox


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise InputError(f"{where} is missing required key {key!r}")
    return mapping[key]


def generator_from_dict(data: dict) -> Generator:
    where = "generator description"
    n_y = int(_require(data, "n_y", where))
    n_u = int(_require(data, "n_u", where))
    return Generator(
        A_g=np.array(_require(data, "A_g", where), dtype=float),
        K_g=np.array(_require(data, "K_g", where), dtype=float),
        C_g=np.array(_require(data, "C_g", where), dtype=float),
        Q_e=np.array(_require(data, "Q_e", where), dtype=float),
        n_y=n_y,
        n_u=n_u,
    )


def generator_to_dict(g: Generator) -> dict:
    return {
        "n_y": g.n_y,
        "n_u": g.n_u,
        "A_g": g.A_g.tolist(),
        "K_g": g.K_g.tolist(),
        "C_g": g.C_g.tolist(),
        "Q_e": g.Q_e.tolist(),
    }


def predictor_from_dict(data: dict) -> Predictor:
    where = "predictor description"
    return Predictor(
        A_hat=np.array(_require(data, "A", where), dtype=float),
        B_hat=np.array(_require(data, "B", where), dtype=float),
        C_hat=np.array(_require(data, "C", where), dtype=float),
        D_hat=np.array(_require(data, "D", where), dtype=float),
        mode=FeatureMode.parse(str(_require(data, "mode", where))),
    )


def load_system(source) -> tuple[Generator, Predictor | None]:
    """Read a system JSON file (or dict): a generator plus optional predictor."""
    if isinstance(source, (str, Path)):
        try:
            with open(source) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read system file {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"system file {source} is not valid JSON: {exc}") from exc
    else:
        data = source
    if not isinstance(data, dict):
        raise InputError("system description must be a JSON object")
    gen_data = data.get("generator", data)
    g = generator_from_dict(gen_data)
    f = None
    if "predictor" in data and data["predictor"] is not None:
        f = predictor_from_dict(data["predictor"])
    return g, f


def _box_from_dict(data: dict, where: str) -> ParamBox:
    mode = FeatureMode.parse(str(_require(data, "mode", where))) if "mode" in data else None
    if mode is None:
        raise InputError(f"{where} needs a 'mode'")
    return ParamBox.from_template(
        _require(data, "A", where),
        _require(data, "B", where),
        _require(data, "C", where),
        _require(data, "D", where),
        _require(data, "box", where),
        mode,
    )


@dataclass(frozen=True)
class RunConfig:
    """Everything one certification run needs."""

    generator: Generator
    classes: dict
    delta: float = 0.1
    r: int = 2
    kl_lambda: float | str = "auto"
    renyi_gibbs_lambda: float = 10.0
    N_values: tuple = (200,)
    data_seed: int = 0
    estimator_seed: int = 1
    prior_samples: int = 100_000
    posterior_samples: int = 10_000
    grid_points: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise InputError(f"delta must lie in (0, 0.5), got {self.delta}")
        if not (isinstance(self.r, int) and self.r >= 2 and self.r % 2 == 0):
            raise InputError(f"r must be an even integer >= 2, got {self.r}")
        if isinstance(self.kl_lambda, str):
            if self.kl_lambda != "auto":
                raise InputError(
                    f"lambda must be a positive number or 'auto', got {self.kl_lambda!r}"
                )
        elif self.kl_lambda <= 0:
            raise InputError(f"lambda must be positive, got {self.kl_lambda}")
        if self.renyi_gibbs_lambda < 0:
            raise InputError("renyi_gibbs_lambda must be nonnegative")
        if not self.N_values or any(int(N) < 1 for N in self.N_values):
            raise InputError("N_values must be a nonempty list of lengths >= 1")
        for name in ("data_seed", "estimator_seed"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be nonnegative")
        for name in ("prior_samples", "posterior_samples", "grid_points"):
            if getattr(self, name) < 2:
                raise InputError(f"{name} must be at least 2")
        if not self.classes:
            raise InputError("configuration defines no hypothesis class")
        for mode, cls in self.classes.items():
            if not isinstance(mode, FeatureMode) or not isinstance(cls, ParamBox):
                raise InputError("classes must map feature modes to parameter boxes")
            if cls.mode is not mode:
                raise InputError(f"class listed under {mode.value} has mode {cls.mode.value}")
        object.__setattr__(self, "N_values", tuple(int(N) for N in self.N_values))


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise InputError("run configuration must be a JSON object")
    g, _ = load_system(data)
    raw_classes = _require(data, "classes", "run configuration")
    if not isinstance(raw_classes, dict) or not raw_classes:
        raise InputError("'classes' must map feature modes to class templates")
    classes = {}
    for key, tmpl in raw_classes.items():
        mode = FeatureMode.parse(str(key))
        tmpl = dict(tmpl)
        tmpl.setdefault("mode", mode.value)
        box = _box_from_dict(tmpl, f"class {key!r}")
        if box.mode is not mode:
            raise InputError(f"class {key!r} declares mode {box.mode.value}")
        classes[mode] = box
    kwargs = {}
    for key, attr in [
        ("delta", "delta"),
        ("r", "r"),
        ("lambda", "kl_lambda"),
        ("renyi_gibbs_lambda", "renyi_gibbs_lambda"),
        ("N_values", "N_values"),
        ("data_seed", "data_seed"),
        ("estimator_seed", "estimator_seed"),
        ("prior_samples", "prior_samples"),
        ("posterior_samples", "posterior_samples"),
        ("grid_points", "grid_points"),
    ]:
        if key in data:
            kwargs[attr] = data[key]
    if "r" in kwargs:
        kwargs["r"] = int(kwargs["r"])
    if "N_values" in kwargs:
        kwargs["N_values"] = tuple(int(v) for v in kwargs["N_values"])
    for name in ("data_seed", "estimator_seed", "prior_samples", "posterior_samples", "grid_points"):
        if name in kwargs:
            kwargs[name] = int(kwargs[name])
    return RunConfig(generator=g, classes=classes, **kwargs)


def load_config(path) -> RunConfig:
    """Read a run-configuration JSON file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read configuration {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"configuration {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def example_config_path() -> Path:
    """Path of the bundled example configuration."""
    return Path(resources.files("ltibound.presets").joinpath("example.json"))
