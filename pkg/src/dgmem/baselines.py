"""Exploration baselines: random, straight-until-collision, and intrinsic
curiosity agents (forward-dynamics prediction and random network
distillation) trained with the same PPO machinery as the main agent.
"""
from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np

from .encoder import PatchEncoder
from .gridworld import AgentState, GridEnv
from .learner import compute_advantages, ppo_update
from .metrics import CoverageTracker
from .nn import MLP, ActorCritic, Adam


def random_policy(n_actions: int, rng: np.random.Generator) -> int:
    return int(rng.integers(n_actions))


class StraightPolicy:
    """Keep the last direction; pick a different random one on collision."""

    def __init__(self, n_actions: int, rng: np.random.Generator):
        self.n_actions = n_actions
        self.action = int(rng.integers(n_actions))

    def act(self, last_collision: bool, rng: np.random.Generator) -> int:
        if last_collision:
            others = [a for a in range(self.n_actions) if a != self.action]
            self.action = others[int(rng.integers(len(others)))]
        return self.action


class ForwardDynamicsModel:
    """Learned forward model; intrinsic reward is its prediction error."""

    def __init__(self, feature_dim: int, n_actions: int, seed: int = 0,
                 hidden: Tuple[int, int] = (64, 64), lr: float = 1e-3):
        self.n_actions = n_actions
        self.lr = lr
        self.net = MLP(feature_dim + n_actions, hidden, feature_dim, seed=seed)

    def intrinsic_reward(self, feature: np.ndarray, action: int,
                         next_feature: np.ndarray) -> float:
        x = np.concatenate([feature, np.eye(self.n_actions)[action]])[None, :]
        pred, acts = self.net.forward(x)
        err = pred[0] - next_feature
        reward = float(err @ err)
        grads = self.net.backward(acts, 2.0 * err[None, :] / len(err))
        for k, g in grads.items():
            self.net.params[k] -= self.lr * g
        return reward


class RNDModel:
    """Random network distillation: predictor error against a frozen target."""

    def __init__(self, feature_dim: int, seed: int = 0, out_dim: int = 32,
                 hidden: Tuple[int, int] = (64, 64), lr: float = 1e-3):
        self.lr = lr
        self.target = MLP(feature_dim, hidden, out_dim, seed=seed)
        self.predictor = MLP(feature_dim, hidden, out_dim, seed=seed + 1)

    def intrinsic_reward(self, feature: np.ndarray, action: int,
                         next_feature: np.ndarray) -> float:
        x = next_feature[None, :]
        target_out, _ = self.target.forward(x)
        pred_out, acts = self.predictor.forward(x)
        err = pred_out[0] - target_out[0]
        reward = float(err @ err)
        grads = self.predictor.backward(acts, 2.0 * err[None, :] / len(err))
        for k, g in grads.items():
            self.predictor.params[k] -= self.lr * g
        return reward


def explore_random(env: GridEnv, steps: int, rng: np.random.Generator,
                   spawn: Optional[AgentState] = None,
                   episode_len: int = 0) -> CoverageTracker:
    tracker = CoverageTracker(env.grid)
    state = spawn if spawn is not None else env.spawn(rng)
    home = (state.x, state.y)
    tracker.visit(state.x, state.y)
    for t in range(1, steps + 1):
        if episode_len and t % episode_len == 0:
            state = AgentState(x=home[0], y=home[1], start=home)
        state, _ = env.step(state, random_policy(env.n_actions, rng), rng)
        tracker.visit(state.x, state.y)
    return tracker


def explore_straight(env: GridEnv, steps: int, rng: np.random.Generator,
                     spawn: Optional[AgentState] = None,
                     episode_len: int = 0) -> CoverageTracker:
    tracker = CoverageTracker(env.grid)
    state = spawn if spawn is not None else env.spawn(rng)
    home = (state.x, state.y)
    tracker.visit(state.x, state.y)
    policy = StraightPolicy(env.n_actions, rng)
    collided = False
    for t in range(1, steps + 1):
        if episode_len and t % episode_len == 0:
            state = AgentState(x=home[0], y=home[1], start=home)
            collided = False
        state, obs = env.step(state, policy.act(collided, rng), rng)
        collided = obs.collided
        tracker.visit(state.x, state.y)
    return tracker


def explore_intrinsic(env: GridEnv, enc: PatchEncoder, kind: str, steps: int,
                      seed: int = 0, nsteps: int = 256,
                      episode_len: int = 100) -> CoverageTracker:
    """PPO agent driven purely by an intrinsic reward (DP or RND baseline).

    The policy reuses the actor-critic machinery with zeroed goal features.
    """
    rng = np.random.default_rng(seed)
    input_dim = 2 * enc.feature_dim + 3
    net = ActorCritic(input_dim, env.n_actions, seed=seed)
    opt = Adam(net.params)
    if kind == "dp":
        model = ForwardDynamicsModel(enc.feature_dim, env.n_actions, seed=seed)
    elif kind == "rnd":
        model = RNDModel(enc.feature_dim, seed=seed)
    else:
        raise ValueError(f"unknown intrinsic baseline {kind!r}")

    tracker = CoverageTracker(env.grid)
    state = env.spawn(rng)
    home = (state.x, state.y)
    tracker.visit(state.x, state.y)
    obs = env.observe(state)
    feat = enc.encode(obs.patch)
    pad = np.zeros(enc.feature_dim + 3)

    buf: Dict[str, list] = {k: [] for k in ("x", "a", "logp", "v", "r", "d")}
    for t in range(1, steps + 1):
        x = np.concatenate([feat, pad])
        action, logp, value = net.act(x, rng)
        state, obs = env.step(state, action, rng)
        next_feat = enc.encode(obs.patch)
        r = model.intrinsic_reward(feat, action, next_feat)
        done = bool(episode_len and t % episode_len == 0)
        for key, val in zip(("x", "a", "logp", "v", "r", "d"),
                            (x, action, logp, value, r, done)):
            buf[key].append(val)
        feat = next_feat
        tracker.visit(state.x, state.y)
        if done:
            state = AgentState(x=home[0], y=home[1], start=home)
            obs = env.observe(state)
            feat = enc.encode(obs.patch)
        if len(buf["x"]) >= nsteps:
            nx = np.concatenate([feat, pad])
            _, lv, _ = net.forward(nx)
            adv, ret = compute_advantages(
                np.array(buf["r"]), np.array(buf["v"]),
                np.array(buf["d"], bool), 0.0 if done else float(lv[0]),
                normalize=True)
            ppo_update(net, opt, np.stack(buf["x"]), np.array(buf["a"], int),
                       np.array(buf["logp"]), adv, ret, lr=1e-4)
            buf = {k: [] for k in buf}
    return tracker
