"""Experiment configuration: strict JSON schema, defaults, and instance building."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema

from .chain_model import (
    DiffusionSpec1D,
    FiniteChain,
    TargetSet,
    build_birth_death,
    discretize_diffusion_1d,
    require_valid,
)
from .errors import ConfigError, HitgapError
from .verify import SUITE_CHECKS, DEFAULT_SUITE

SEED_ENV = "HITGAP_SEED"

_num = {"type": "number"}
_int = {"type": "integer"}
_num_list = {"type": "array", "items": _num}

_chain_schema = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "Q": {"type": "array", "items": _num_list},
        "triplets": {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 3}},
        "labels": _num_list,
    },
}

_diffusion_schema = {
    "type": "object",
    "additionalProperties": False,
    "required": ["drift", "diffusion", "domain"],
    "properties": {
        "drift": {"type": "string"},
        "diffusion": {"type": "string"},
        "domain": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        "grid": {"type": "integer", "minimum": 3},
    },
}

_builder_schema = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["birth_death", "two_state", "random_reversible"]},
        "n": {"type": "integer", "minimum": 2},
        "up": _num_list,
        "down": _num_list,
        "seed": _int,
    },
}

_target_schema = {
    "oneOf": [
        {"type": "array", "items": {"type": "integer", "minimum": 0}},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["interval"],
            "properties": {"interval": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
        },
    ]
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "instance": {
            "type": "object",
            "additionalProperties": False,
            "minProperties": 1,
            "maxProperties": 1,
            "properties": {"chain": _chain_schema, "builder": _builder_schema, "diffusion": _diffusion_schema},
        },
        "targets": {"type": "array", "items": _target_schema},
        "alphas": {
            "oneOf": [
                _num_list,
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["fractions_of_threshold"],
                    "properties": {"fractions_of_threshold": _num_list},
                },
            ]
        },
        "z": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        "moments": {"type": "integer", "minimum": 0},
        "psi": {"type": "object"},
        "contour": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"sigmas": _num_list, "tol": _num},
        },
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_samples": {"type": "integer", "minimum": 1},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "time_cap": {"type": ["number", "null"]},
                "seed": _int,
                "x0": _num,
                "bridge": {"type": "boolean"},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "checks": {"type": "array", "items": {"type": "string"}},
        "suite": {"type": "object"},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"grid_points": {"type": "array", "items": {"type": "integer", "minimum": 3}}},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["json", "csv"]}, "minItems": 1},
            },
        },
        "seed": _int,
    },
}

DEFAULTS = {
    "instance": {"builder": {"kind": "two_state"}},
    "targets": [[0]],
    "alphas": {"fractions_of_threshold": [0.25, 0.5, 0.9]},
    "z": [1.0, 0.0],
    "moments": 3,
    "psi": {"family": "bump"},
    "contour": {"sigmas": [0.5, 1.0, 2.0], "tol": 1e-6},
    "mc": {"n_samples": 20000, "dt": 1e-3, "time_cap": None, "x0": 1, "bridge": True, "workers": 1},
    "checks": [],
    "suite": {},
    "sweep": {"grid_points": [250, 500, 1000, 2000]},
    "output": {"path": "hitgap_report", "formats": ["json", "csv"]},
}


@dataclass
class ExperimentConfig:
    raw: dict
    effective: dict
    source: Optional[str] = None
    _chain: Optional[FiniteChain] = field(default=None, repr=False)

    @property
    def digest(self) -> str:
        text = json.dumps(self.effective, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    @property
    def diffusion(self) -> Optional[DiffusionSpec1D]:
        d = self.effective["instance"].get("diffusion")
        return None if d is None else DiffusionSpec1D.from_dict(d)

    def chain(self) -> FiniteChain:
        if self._chain is None:
            self._chain = build_instance(self.effective["instance"])
        return self._chain

    def targets(self) -> list:
        chain = self.chain()
        out = []
        for t in self.effective["targets"]:
            if isinstance(t, dict):
                out.append(TargetSet.from_interval(chain, *t["interval"]))
            else:
                out.append(TargetSet(tuple(t), chain.n))
        return out


def build_instance(inst: dict) -> FiniteChain:
    if "chain" in inst:
        return require_valid(FiniteChain.from_dict(inst["chain"]))
    if "diffusion" in inst:
        spec = DiffusionSpec1D.from_dict(inst["diffusion"])
        return discretize_diffusion_1d(spec, spec.grid or 2000)
    b = inst["builder"]
    kind = b["kind"]
    if kind == "two_state":
        from .corpus import two_state
        return two_state()
    if kind == "birth_death":
        return build_birth_death(b["n"], b["up"], b["down"])
    from .corpus import random_reversible_chain
    import numpy as np
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(b.get("seed", 0))))
    return random_reversible_chain(b["n"], rng)


def _merge(defaults: dict, raw: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in raw.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("instance", "psi", "alphas"):
            out[k] = {**out[k], **copy.deepcopy(v)}
        else:
            out[k] = copy.deepcopy(v)
    return out


def _semantic_errors(cfg: dict) -> list:
    errors = []
    alphas = cfg["alphas"]
    if isinstance(alphas, dict):
        for f in alphas["fractions_of_threshold"]:
            if not 0 < f < 1:
                errors.append(f"alphas.fractions_of_threshold: {f} is not in (0, 1)")
    else:
        for a in alphas:
            if not a > 0:
                errors.append(f"alphas: {a} must be positive")
    for c in cfg["checks"]:
        if c not in SUITE_CHECKS:
            errors.append(f"checks: unknown check name {c!r}")
    unknown_suite = set(cfg["suite"]) - set(DEFAULT_SUITE)
    if unknown_suite:
        errors.append(f"suite: unknown keys {sorted(unknown_suite)}")
    inst = cfg["instance"]
    has_labels = "diffusion" in inst or ("chain" in inst and "labels" in inst["chain"])
    if any(isinstance(t, dict) for t in cfg["targets"]) and not has_labels:
        errors.append("targets: coordinate targets require labels")
    b = inst.get("builder")
    if b is not None and b["kind"] in ("birth_death", "random_reversible") and "n" not in b:
        errors.append(f"instance.builder: kind {b['kind']!r} needs 'n'")
    if b is not None and b["kind"] == "birth_death":
        for key in ("up", "down"):
            if key not in b:
                errors.append(f"instance.builder: birth_death needs {key!r}")
    if "psi" in cfg:
        from .psi import FAMILIES
        fam = cfg["psi"].get("family")
        if fam not in FAMILIES:
            errors.append(f"psi.family: {fam!r} is not one of {sorted(FAMILIES)}")
    return errors


def validate_config(raw: dict) -> dict:
    """Return the effective (defaults-filled) config or raise one ConfigError listing every problem."""
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path)):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        errors.append(f"{where}: {err.message}")
    cfg = _merge(DEFAULTS, raw)
    schema_failed = bool(errors)
    try:
        errors += _semantic_errors(cfg)
    except (KeyError, TypeError, AttributeError):
        # malformed sections are already reported by the schema pass
        if not schema_failed:
            raise
    if not errors:
        try:
            chain = build_instance(cfg["instance"])
            for t in cfg["targets"]:
                if isinstance(t, list):
                    TargetSet(tuple(t), chain.n)
        except HitgapError as exc:
            errors.append(f"instance: {exc}")
        except (ValueError, TypeError, KeyError) as exc:
            errors.append(f"instance: {exc}")
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
    return ExperimentConfig(raw, validate_config(raw), str(path))


def config_from_dict(raw: dict) -> ExperimentConfig:
    return ExperimentConfig(raw, validate_config(raw))


def resolve_seed(flag: Optional[int], cfg: Optional[dict]) -> tuple:
    """Seed and the source it came from: flag, environment, config, or default."""
    if flag is not None:
        return int(flag), "flag"
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env), "env"
        except ValueError:
            raise ConfigError([f"{SEED_ENV} must be an integer, got {env!r}"]) from None
    if cfg is not None:
        if cfg.get("mc", {}).get("seed") is not None:
            return int(cfg["mc"]["seed"]), "config"
        if cfg.get("seed") is not None:
            return int(cfg["seed"]), "config"
    return 0, "default"
