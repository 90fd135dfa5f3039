"""Experiment configuration: INI files with per-experiment defaults.

Grammar (``configparser`` INI, ``#`` or ``;`` comments)::

    [run]
    seed = 1              # integer >= 0
    out = results         # output directory

    [model]
    kind = gaussian-pair  # model family, see MODEL_KINDS
    separation = 1.0      # kind-specific parameters

    [sizes]
    grid_resolution = 41  # integer counts >= 0

Only keys listed in the experiment's defaults are accepted.  Values given on
the command line (``--seed``, ``--out``, ``--set section.key=value``) win
over the file, which wins over the defaults.
"""

import configparser
from dataclasses import dataclass, field

from ..errors import ConfigError

EXPERIMENTS = (
    "reconstruct2", "multiclass", "classify-compare", "hierarchical-gap",
    "batched-nn", "discriminate", "threshold-sweep",
)

# section -> key -> default; the default's type fixes the parsed type
DEFAULTS = {
    "reconstruct2": {
        "run": {"seed": 1},
        "model": {"kind": "random-two-class", "max_components": 2,
                  "separation": 1.0, "variance": 1.0, "prior": 0.5},
        "sizes": {"model_count": 20, "grid_resolution": 41, "sample_count": 200},
    },
    "classify-compare": {
        "run": {"seed": 0},
        "model": {"kind": "gaussian-pair", "separation": 1.0, "variance": 1.0, "prior": 0.5},
        "sizes": {"grid_resolution": 2001, "sample_count": 200, "pair_count": 10_000,
                  "train_count": 10_000, "test_count": 10_000},
    },
    "multiclass": {
        "run": {"seed": 0},
        "model": {"kind": "random-simplex", "class_count": 3, "point_count": 7},
        "sizes": {"instance_count": 50, "restarts": 20},
    },
    "hierarchical-gap": {
        "run": {"seed": 0},
        "model": {"kind": "label-switch"},
        "sizes": {"grid_resolution": 21},
    },
    "batched-nn": {
        "run": {"seed": 0},
        "model": {"kind": "random-discrete", "support_size": 3, "theta_count": 2,
                  "batch_sizes": "2,3,4", "shift": 1.0, "separation": 1.0,
                  "variance": 0.25, "gaussian_batch_size": 5},
        "sizes": {"instance_count": 100, "batch_count": 1000},
    },
    "discriminate": {
        "run": {"seed": 0},
        "model": {"kind": "flip-noise", "flip": 0.1, "same_prior": 0.5},
        "sizes": {"threshold_count": 21},
    },
    "threshold-sweep": {
        "run": {"seed": 0},
        "model": {"kind": "gaussian-theta", "prior_std": 1.0, "noise_variance": 0.25,
                  "flip": 0.1, "same_prior": 0.5},
        "sizes": {"threshold_count": 21, "trial_count": 100_000},
    },
}

MODEL_KINDS = {
    "reconstruct2": ("random-two-class", "gaussian-pair"),
    "classify-compare": ("gaussian-pair",),
    "multiclass": ("random-simplex",),
    "hierarchical-gap": ("label-switch",),
    "batched-nn": ("random-discrete", "relabeling"),
    "discriminate": ("flip-noise",),
    "threshold-sweep": ("gaussian-theta", "flip-noise"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    out: str
    model: dict = field(default_factory=dict)
    sizes: dict = field(default_factory=dict)

    def echo(self):
        """Flat ``(key, value)`` pairs describing the configuration, sorted."""
        rows = [("experiment", self.experiment), ("seed", self.seed), ("out", self.out)]
        rows += [(f"model.{k}", v) for k, v in sorted(self.model.items())]
        rows += [(f"sizes.{k}", v) for k, v in sorted(self.sizes.items())]
        return rows


def _coerce(section, key, raw, default):
    name = f"{section}.{key}"
    if isinstance(default, bool):
        raise ConfigError(name, "boolean fields are not supported")
    if isinstance(default, int):
        try:
            value = int(str(raw).strip())
        except ValueError:
            raise ConfigError(name, f"expected an integer, got {raw!r}") from None
        if value < 0:
            raise ConfigError(name, "must be >= 0")
        return value
    if isinstance(default, float):
        try:
            return float(str(raw).strip())
        except ValueError:
            raise ConfigError(name, f"expected a number, got {raw!r}") from None
    return str(raw).strip()


def load_config(experiment, path=None, seed=None, out=None, overrides=()):
    """Build a validated :class:`ExperimentConfig`.

    ``overrides`` are ``"section.key=value"`` strings.
    """
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}; "
                          f"choose one of {', '.join(EXPERIMENTS)}")
    defaults = DEFAULTS[experiment]
    values = {s: dict(v) for s, v in defaults.items()}
    values["run"].setdefault("out", "results")

    raw = []
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError("config", f"malformed file: {exc}") from None
        for section in parser.sections():
            for key, value in parser.items(section):
                raw.append((section, key, value))
    for item in overrides:
        target, sep, value = item.partition("=")
        section, dot, key = target.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(item, "overrides must look like section.key=value")
        raw.append((section, key, value))
    if seed is not None:
        raw.append(("run", "seed", seed))
    if out is not None:
        raw.append(("run", "out", out))

    for section, key, value in raw:
        if section == "run" and key == "experiment":
            if str(value).strip() != experiment:
                raise ConfigError("run.experiment", f"file names {value!r} but "
                                  f"{experiment!r} was requested")
            continue
        if section not in values or key not in values[section]:
            raise ConfigError(f"{section}.{key}", "unknown field for this experiment")
        values[section][key] = _coerce(section, key, value, values[section][key])

    kind = values["model"]["kind"]
    if kind not in MODEL_KINDS[experiment]:
        raise ConfigError("model.kind", f"{kind!r} not available for {experiment}; "
                          f"choose one of {', '.join(MODEL_KINDS[experiment])}")
    return ExperimentConfig(experiment, values["run"]["seed"], values["run"]["out"],
                            values["model"], values["sizes"])
