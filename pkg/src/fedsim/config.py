"""Experiment files: a flat, line-oriented ``key = value`` format.

Grammar::

    file    := line*
    line    := blank | comment | entry
    comment := '#' anything
    entry   := key '=' value [comment]

Keys are case-sensitive and may appear at most once. Values are taken
verbatim after stripping whitespace; ``none`` clears an optional field.
Relative paths are resolved against the directory holding the file.

Recognised keys are the fields of :class:`~fedsim.federation.FederationConfig`
(``hidden_layers`` as a comma-separated list) plus

``dataset``
    ``synthetic`` (default), ``mnist`` or ``idx``
``mnist_dir``
    directory with the four standard MNIST files (``dataset = mnist``)
``train_images``, ``train_labels``, ``test_images``, ``test_labels``
    IDX files (``dataset = idx``)
``synthetic_classes``, ``synthetic_per_class``, ``synthetic_test_per_class``,
``synthetic_dim``, ``synthetic_seed``
    blob generator settings (``dataset = synthetic``)
``output_dir``
    where ``rounds.csv`` and ``summary.csv`` go (default ``fedsim-out``)

The ``FEDSIM_SEED`` environment variable, when set, overrides ``seed``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

from . import data as ds
from .federation import ConfigError, FederationConfig

DATASETS = ("synthetic", "mnist", "idx")
IDX_KEYS = ("train_images", "train_labels", "test_images", "test_labels")
SYNTHETIC_DEFAULTS = {
    "synthetic_classes": 10,
    "synthetic_per_class": 600,
    "synthetic_test_per_class": 100,
    "synthetic_dim": 64,
    "synthetic_seed": 0,
}
_FED_FIELDS = {f.name: f for f in dataclasses.fields(FederationConfig)}
_OPTIONAL = {"passes", "model_bytes"}
_PATH_KEYS = {"mnist_dir", "output_dir", *IDX_KEYS}
KNOWN_KEYS = frozenset(_FED_FIELDS) | {"dataset"} | _PATH_KEYS | set(SYNTHETIC_DEFAULTS)


class ConfigFileError(ConfigError):
    def __init__(self, path, line, key, message):
        self.path, self.line, self.key = path, line, key
        where = f"{path}:{line}" if line else str(path)
        field = f" [{key}]" if key else ""
        super().__init__(f"{where}:{field} {message}")


@dataclass(frozen=True)
class ExperimentFile:
    federation: FederationConfig
    dataset: str = "synthetic"
    paths: dict = dataclasses.field(default_factory=dict)
    synthetic: dict = dataclasses.field(default_factory=lambda: dict(SYNTHETIC_DEFAULTS))
    output_dir: Path = Path("fedsim-out")

    def load_data(self) -> tuple[ds.Dataset, ds.Dataset]:
        if self.dataset == "mnist":
            return ds.load_mnist(self.paths["mnist_dir"])
        if self.dataset == "idx":
            p = self.paths
            return (ds.load_idx(p["train_images"], p["train_labels"]),
                    ds.load_idx(p["test_images"], p["test_labels"]))
        s = self.synthetic
        return ds.generate_synthetic(
            s["synthetic_classes"], s["synthetic_per_class"], s["synthetic_dim"],
            seed=s["synthetic_seed"], test_per_class=s["synthetic_test_per_class"],
        )


def _split_lines(text: str, path):
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(path, lineno, None, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigFileError(path, lineno, key, f"unknown key {key!r}")
        if key in seen:
            raise ConfigFileError(path, lineno, key, f"duplicate key (first set on line {seen[key][0]})")
        if not value:
            raise ConfigFileError(path, lineno, key, "missing value")
        seen[key] = (lineno, value)
    return seen


def _convert(key: str, value: str):
    if key in _OPTIONAL and value.lower() == "none":
        return None
    if key == "hidden_layers":
        return tuple(int(v) for v in value.split(",") if v.strip())
    if key in _FED_FIELDS:
        default = _FED_FIELDS[key].default
        if isinstance(default, float):
            return float(value)
        if isinstance(default, int) or key in _OPTIONAL:
            return int(value)
        return value
    if key in SYNTHETIC_DEFAULTS:
        return int(value)
    return value


def parse(text: str, path="<config>", base_dir=None, env=None) -> ExperimentFile:
    """Parse an experiment file's text; paths are resolved against ``base_dir``."""
    env = os.environ if env is None else env
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    entries = _split_lines(text, path)
    values = {}
    for key, (lineno, raw) in entries.items():
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            raise ConfigFileError(path, lineno, key, f"invalid value {raw!r}") from None
    if env.get("FEDSIM_SEED"):
        try:
            values["seed"] = int(env["FEDSIM_SEED"])
        except ValueError:
            raise ConfigFileError(path, 0, "seed",
                                  f"FEDSIM_SEED={env['FEDSIM_SEED']!r} is not an integer") from None

    fed = {k: v for k, v in values.items() if k in _FED_FIELDS}
    try:
        federation = FederationConfig(**fed)
    except ConfigError as exc:
        key = next((k for k in fed if k in str(exc)), None)
        line = entries[key][0] if key in entries else 0
        raise ConfigFileError(path, line, key, str(exc)) from None

    dataset = values.get("dataset", "synthetic")
    if dataset not in DATASETS:
        raise ConfigFileError(path, entries["dataset"][0], "dataset",
                              f"must be one of {DATASETS}, got {dataset!r}")
    needed = {"mnist": ("mnist_dir",), "idx": IDX_KEYS, "synthetic": ()}[dataset]
    for key in needed:
        if key not in values:
            raise ConfigFileError(path, 0, key, f"required when dataset = {dataset}")
    paths = {k: (base / values[k]).resolve() for k in _PATH_KEYS if k in values}
    for key in needed:
        if not paths[key].exists():
            raise ConfigFileError(path, entries[key][0], key, f"no such path: {paths[key]}")
    synthetic = {k: values.get(k, d) for k, d in SYNTHETIC_DEFAULTS.items()}
    output_dir = paths.pop("output_dir", (base / "fedsim-out").resolve())
    return ExperimentFile(federation, dataset, paths, synthetic, output_dir)


def load(path, env=None) -> ExperimentFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigFileError(path, 0, None, f"cannot read config: {exc.strerror}") from None
    return parse(text, path, path.parent, env)
