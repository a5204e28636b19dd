"""Experiment configuration: parsing, validation, round-tripping.

Configs are YAML (or JSON, which YAML subsumes) trees; :func:`parse_config`
normalizes and validates them with field-level error messages, and
:func:`serialize_config` emits the normalized form, so parse -> serialize
-> parse is the identity on normalized configs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .datasets import DATASET_SHAPES

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "serialize_config",
]

TARGET_KINDS = {"gaussian", "logistic", "gp-classification", "log-cox",
                "student-t", "mixture", "perturbed-gaussian"}
SAMPLER_KINDS = {"gi-mala", "gi-rwm", "mala", "rwm", "pcn"}
GI_SAMPLERS = {"gi-mala", "gi-rwm", "pcn"}
ESTIMATOR_F_KINDS = {"identity", "quadratic", "indicator", "exp"}
ESTIMATOR_FITS = {"preconditioner", "burnin"}


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


@dataclass
class ExperimentConfig:
    target: dict
    samplers: list
    n_burnin: int = 1000
    n_samples: int = 5000
    seed: int = 0
    seeds: Optional[list] = None
    repeats: int = 2
    estimator: Optional[dict] = None
    scaling: Optional[dict] = None
    out_dir: Optional[str] = None
    threads: int = 1

    def seed_list(self, count: int) -> list:
        """Explicit seeds if configured, else a deterministic ladder."""
        if self.seeds is not None:
            _require(len(self.seeds) >= count,
                     f"seeds: need at least {count} entries, have {len(self.seeds)}")
            return list(self.seeds[:count])
        return [self.seed + 1000 * i for i in range(count)]

    def to_dict(self) -> dict:
        out = {
            "target": dict(self.target),
            "samplers": [dict(s) for s in self.samplers],
            "n_burnin": self.n_burnin,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "repeats": self.repeats,
            "threads": self.threads,
        }
        if self.seeds is not None:
            out["seeds"] = list(self.seeds)
        if self.estimator is not None:
            out["estimator"] = dict(self.estimator)
        if self.scaling is not None:
            out["scaling"] = dict(self.scaling)
        if self.out_dir is not None:
            out["out_dir"] = self.out_dir
        return out


def _validate_target(target: dict, base_dir: Path) -> dict:
    _require(isinstance(target, dict), "target: must be a mapping")
    kind = target.get("kind")
    _require(kind in TARGET_KINDS,
             f"target.kind: expected one of {sorted(TARGET_KINDS)}, got {kind!r}")
    out = dict(target)

    if kind in ("logistic", "gp-classification"):
        dataset = out.get("dataset", "heart")
        if dataset not in DATASET_SHAPES:
            path = (base_dir / dataset).expanduser()
            _require(path.exists(), f"target.dataset: file {dataset!r} does not exist")
            out["dataset"] = str(path)
        else:
            out["dataset"] = dataset
    elif kind == "log-cox":
        if "dataset" in out:
            path = (base_dir / out["dataset"]).expanduser()
            _require(path.exists(), f"target.dataset: file {out['dataset']!r} "
                                    "does not exist")
            out["dataset"] = str(path)
        else:
            grid = out.setdefault("grid_size", 16)
            _require(isinstance(grid, int) and grid >= 2,
                     "target.grid_size: must be an integer >= 2")
    elif kind == "gaussian":
        dim = out.setdefault("dim", 10)
        _require(isinstance(dim, int) and dim >= 1, "target.dim: must be >= 1")
    elif kind == "student-t":
        nu = out.setdefault("nu", 5.0)
        _require(nu > 0, "target.nu: degrees of freedom must be positive")
    elif kind == "perturbed-gaussian":
        out.setdefault("h_coeffs", [0.0, 0.0, 0.0, 0.0, -1.0])
        out.setdefault("epsilon", 0.05)
        out.setdefault("dim", 50)
    return out


def _validate_sampler(s, idx: int) -> dict:
    _require(isinstance(s, dict), f"samplers[{idx}]: must be a mapping")
    kind = s.get("kind")
    _require(kind in SAMPLER_KINDS,
             f"samplers[{idx}].kind: expected one of {sorted(SAMPLER_KINDS)}, "
             f"got {kind!r}")
    out = dict(s)
    step = out.setdefault("step_size", 0.5)
    _require(isinstance(step, (int, float)) and step > 0,
             f"samplers[{idx}].step_size: must be positive")
    if kind in GI_SAMPLERS:
        _require(step < 2.0,
                 f"samplers[{idx}].step_size: GI kinds need step_size in (0, 2)")
    rate = out.get("target_rate")
    if rate is not None:
        _require(0.0 < rate < 1.0,
                 f"samplers[{idx}].target_rate: must lie in (0, 1)")
    return out


def _validate_estimator(est: dict) -> dict:
    _require(isinstance(est, dict), "estimator: must be a mapping")
    out = dict(est)
    f_kind = out.setdefault("f", "identity")
    _require(f_kind in ESTIMATOR_F_KINDS,
             f"estimator.f: expected one of {sorted(ESTIMATOR_F_KINDS)}, "
             f"got {f_kind!r}")
    trunc = out.setdefault("truncation", 2)
    _require(isinstance(trunc, int) and trunc >= 1,
             "estimator.truncation: must be an integer >= 1")
    out.setdefault("b", 0.0)
    fit = out.setdefault("fit", "preconditioner")
    _require(fit in ESTIMATOR_FITS,
             f"estimator.fit: expected one of {sorted(ESTIMATOR_FITS)}, got {fit!r}")
    out.setdefault("split", False)
    return out


def _validate_scaling(sc: dict) -> dict:
    _require(isinstance(sc, dict), "scaling: must be a mapping")
    out = dict(sc)
    eps = out.setdefault("eps_grid", [0.0, 0.02, 0.04, 0.06, 0.08, 0.1])
    _require(isinstance(eps, list) and len(eps) > 0,
             "scaling.eps_grid: must be a non-empty list")
    ds = out.setdefault("d_grid", [10, 100, 1000, 10000])
    _require(isinstance(ds, list) and len(ds) > 0,
             "scaling.d_grid: must be a non-empty list")
    out.setdefault("K", 2.0)
    out.setdefault("M", 0.001)
    out.setdefault("kappa", "2/d")
    return out


def parse_config(data: dict, base_dir=".") -> ExperimentConfig:
    _require(isinstance(data, dict), "config root must be a mapping")
    base_dir = Path(base_dir)
    known = {"target", "samplers", "n_burnin", "n_samples", "seed", "seeds",
             "repeats", "estimator", "scaling", "out_dir", "threads"}
    for key in data:
        _require(key in known, f"{key}: unknown configuration field")

    _require("target" in data, "target: required field is missing")
    target = _validate_target(data["target"], base_dir)

    samplers_raw = data.get("samplers", [{"kind": "gi-mala", "step_size": 0.5}])
    _require(isinstance(samplers_raw, list) and samplers_raw,
             "samplers: must be a non-empty list")
    samplers_cfg = [_validate_sampler(s, i) for i, s in enumerate(samplers_raw)]

    n_burnin = data.get("n_burnin", 1000)
    _require(isinstance(n_burnin, int) and n_burnin >= 0,
             "n_burnin: must be a nonnegative integer")
    n_samples = data.get("n_samples", 5000)
    _require(isinstance(n_samples, int) and n_samples >= 1,
             "n_samples: must be a positive integer")
    repeats = data.get("repeats", 2)
    _require(isinstance(repeats, int) and repeats >= 1,
             "repeats: must be a positive integer")
    seed = data.get("seed", 0)
    _require(isinstance(seed, int), "seed: must be an integer")
    seeds = data.get("seeds")
    if seeds is not None:
        _require(isinstance(seeds, list) and all(isinstance(s, int) for s in seeds),
                 "seeds: must be a list of integers")
        _require(len(seeds) >= repeats,
                 f"seeds: need at least repeats={repeats} entries")
    threads = data.get("threads", 1)
    _require(isinstance(threads, int) and threads >= 1,
             "threads: must be a positive integer")

    estimator = _validate_estimator(data["estimator"]) if "estimator" in data else None
    scaling = _validate_scaling(data["scaling"]) if "scaling" in data else None

    return ExperimentConfig(target=target, samplers=samplers_cfg,
                            n_burnin=n_burnin, n_samples=n_samples, seed=seed,
                            seeds=seeds, repeats=repeats, estimator=estimator,
                            scaling=scaling, out_dir=data.get("out_dir"),
                            threads=threads)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    return parse_config(data, base_dir=path.parent)


def serialize_config(cfg: ExperimentConfig, fmt: str = "yaml") -> str:
    data = cfg.to_dict()
    if fmt == "json":
        return json.dumps(data, indent=2, sort_keys=True)
    return yaml.safe_dump(data, sort_keys=True)
