"""Flat dotted-key configuration with defaults for every tunable.

Config files are plain text, one ``key: value`` mapping (YAML subset).
Unknown keys are rejected; serialization is deterministic so parse ->
serialize -> parse is the identity.
"""
from __future__ import annotations

from typing import Any, Dict

import yaml

DEFAULTS: Dict[str, Any] = {
    # environment
    "env.map": "four_rooms",
    "env.map_seed": 0,
    "env.map_file": "",
    "env.noise": 0.0,
    "env.patch_size": 5,
    "env.variant": "cardinal",
    # frozen encoder
    "encoder.dim": 128,
    "encoder.seed": 0,
    # graph memory thresholds and housekeeping
    "graph.d_c": 1.5,
    "graph.d_s": -0.85,
    "graph.d_e": 1.0,
    "graph.alpha_sim": 1.0,
    "graph.d_locate": None,  # defaults to half the admission threshold
    "graph.prune_every": 10000,
    "graph.prune_min_count": 2,
    "graph.traj_cap": 64,
    # reward synthesis
    "reward.alpha": 0.2,
    "reward.novelty": 0.05,
    "reward.success": 1.0,
    "reward.radius": 1.0,
    # policy optimization
    "learner.clip": 0.1,
    "learner.nsteps": 256,
    "learner.minibatches": 1,
    "learner.epochs": 4,
    "learner.lr_start": 1e-4,
    "learner.lr_end": 1e-5,
    "learner.discount": 0.99,
    "learner.gae_lambda": 0.95,
    "learner.vf_coef": 0.5,
    "learner.ent_coef": 0.01,
    "learner.beta": 0.1,
    "learner.horizon": 100,
    "learner.il_edges": 48,
    "learner.il_steps": 16,
    "learner.il_lr": 0.03,
    "learner.il_max_detour": 0.0,  # 0 disables demo-efficiency filtering
    "learner.total_steps": 250000,
    "learner.episodic_respawn": False,
    # goal sampler
    "sampler.temperature": 1.0,
    # evaluation
    "eval.episodes": 100,
    "eval.max_steps": 200,
    "eval.subgoal_budget": 30,
    "eval.max_replans": 3,
    "eval.noise": 0.0,
    # seeds
    "seed": 0,
}


class ConfigError(ValueError):
    pass


def make_config(overrides: Dict[str, Any] | None = None) -> Dict[str, Any]:
    cfg = dict(DEFAULTS)
    if overrides:
        for key, value in overrides.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key: {key}")
            cfg[key] = value
    _check(cfg)
    return cfg


def _check(cfg: Dict[str, Any]) -> None:
    for key, value in cfg.items():
        if isinstance(value, float) and value != value:
            raise ConfigError(f"non-finite value for {key}")
    if cfg["learner.nsteps"] <= 0 or cfg["learner.horizon"] <= 0:
        raise ConfigError("nsteps and horizon must be positive")
    if cfg["sampler.temperature"] <= 0:
        raise ConfigError("sampler.temperature must be positive")


def loads(text: str) -> Dict[str, Any]:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad config syntax: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a flat key: value mapping")
    return make_config(doc)


def dumps(cfg: Dict[str, Any]) -> str:
    return yaml.safe_dump(dict(cfg), sort_keys=True, default_flow_style=False)


def load_file(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())
