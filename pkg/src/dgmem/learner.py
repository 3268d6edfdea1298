"""Goal-conditioned actor-critic training: PPO plus imitation from edge data.

The training loop runs one infinite environment episode segmented into
goal-episodes. Each goal-episode pursues a graph node sampled by the
count-based softmax; rewards are synthesized from the graph (topological
progress, first-visit novelty, arrival flag). Every full rollout buffer
triggers a clipped PPO update followed by one imitation pass over trajectories
stored on sampled graph edges, regularized toward the pre-update policy.
"""
from __future__ import annotations

import json
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import reward as rw
from .encoder import PatchEncoder, semantic_score
from .graph import GraphMemory
from .gridworld import AgentState, GridEnv
from .nn import ActorCritic, Adam, log_probs, softmax

CKPT_HEADER = "dgmem-ckpt-v1"
POSE_SCALE = 10.0  # relative poses are divided by this before entering the net


def policy_input(obs_feat: np.ndarray, goal_feat: np.ndarray,
                 rel_pose: np.ndarray) -> np.ndarray:
    return np.concatenate([obs_feat, goal_feat,
                           np.asarray(rel_pose, float) / POSE_SCALE])


def lr_schedule(step: int, total: int, lr_start: float, lr_end: float) -> float:
    frac = min(max(step, 0), total) / max(total, 1)
    return lr_start + (lr_end - lr_start) * frac


# -- advantage estimation -----------------------------------------------------

def compute_advantages(rewards: np.ndarray, values: np.ndarray,
                       dones: np.ndarray, last_value: float,
                       gamma: float = 0.99, lam: float = 0.95,
                       normalize: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates with episode-boundary masking."""
    rewards = np.asarray(rewards, float)
    values = np.asarray(values, float)
    dones = np.asarray(dones, bool)
    n = len(rewards)
    adv = np.zeros(n)
    gae = 0.0
    for t in range(n - 1, -1, -1):
        nonterm = 0.0 if dones[t] else 1.0
        next_v = values[t + 1] if t + 1 < n else last_value
        delta = rewards[t] + gamma * next_v * nonterm - values[t]
        gae = delta + gamma * lam * nonterm * gae
        adv[t] = gae
    returns = adv + values
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


# -- PPO ----------------------------------------------------------------------

def ppo_loss_grads(net: ActorCritic, x: np.ndarray, actions: np.ndarray,
                   old_logp: np.ndarray, adv: np.ndarray, returns: np.ndarray,
                   clip: float, vf_coef: float,
                   ent_coef: float) -> Tuple[float, Dict[str, np.ndarray], dict]:
    """Clipped-surrogate loss value, parameter gradients, and diagnostics."""
    n = len(actions)
    logits, values, cache = net.forward(x)
    lp_all = log_probs(logits)
    probs = softmax(logits)
    idx = np.arange(n)
    logp = lp_all[idx, actions]
    ratio = np.exp(logp - old_logp)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    pol_loss = -np.minimum(unclipped, clipped).mean()
    v_err = values - returns
    v_loss = vf_coef * 0.5 * (v_err * v_err).mean()
    entropy = -(probs * lp_all).sum(axis=1)
    ent_loss = -ent_coef * entropy.mean()
    loss = pol_loss + v_loss + ent_loss

    # d(policy)/d(logits): gradient flows through the unclipped ratio only
    # where the unclipped term is the active minimum.
    active = unclipped <= clipped
    dlogp = np.where(active, -ratio * adv, 0.0) / n
    onehot = np.zeros_like(probs)
    onehot[idx, actions] = 1.0
    dlogits = dlogp[:, None] * (onehot - probs)
    dlogits += (ent_coef / n) * probs * (lp_all + entropy[:, None])
    dvalues = vf_coef * v_err / n
    grads = net.backward(cache, dlogits, dvalues)
    stats = {
        "policy_loss": float(pol_loss),
        "value_loss": float(v_loss),
        "entropy": float(entropy.mean()),
        "approx_kl": float((old_logp - logp).mean()),
        "clip_frac": float((np.abs(ratio - 1.0) > clip).mean()),
    }
    return float(loss), grads, stats


def ppo_update(net: ActorCritic, opt: Adam, x: np.ndarray, actions: np.ndarray,
               old_logp: np.ndarray, adv: np.ndarray, returns: np.ndarray,
               lr: float, clip: float = 0.1, epochs: int = 4,
               minibatches: int = 1, vf_coef: float = 0.5,
               ent_coef: float = 0.01) -> dict:
    """In-place PPO update; restores previous params on a non-finite loss."""
    backup = net.copy_params()
    n = len(actions)
    splits = np.array_split(np.arange(n), max(minibatches, 1))
    stats: dict = {}
    for _ in range(epochs):
        for sl in splits:
            loss, grads, stats = ppo_loss_grads(
                net, x[sl], actions[sl], old_logp[sl], adv[sl], returns[sl],
                clip, vf_coef, ent_coef)
            if not np.isfinite(loss):
                net.set_params(backup)
                stats["nan_abort"] = True
                return stats
            opt.step(net.params, grads, lr)
    if not net.params_finite():
        net.set_params(backup)
        stats["nan_abort"] = True
    stats["loss"] = stats.get("policy_loss", 0.0)
    return stats


# -- imitation with KL regularization ------------------------------------------

def il_update(net: ActorCritic, x: np.ndarray, actions: np.ndarray,
              lr: float, beta: float = 0.1, steps: int = 8) -> dict:
    """Cross-entropy on demonstrated actions plus a KL pull toward the
    pre-phase policy.

    Gradient steps are plain SGD with the step size divided by (1 + beta) so
    the update magnitude is invariant to the penalty weight; as beta grows the
    update vanishes and the policy stays at its phase-start value.
    """
    if len(actions) == 0:
        return {"ce": 0.0, "kl": 0.0, "n": 0}
    n = len(actions)
    idx = np.arange(n)
    onehot = np.zeros((n, net.n_actions))
    onehot[idx, np.asarray(actions, int)] = 1.0
    old_probs = None
    ce = kl = 0.0
    for k in range(max(steps, 1)):
        logits, _, cache = net.forward(x)
        probs = softmax(logits)
        lp = log_probs(logits)
        if old_probs is None:
            old_probs = probs.copy()
            old_lp = lp.copy()
        ce = float(-(onehot * lp).sum(axis=1).mean())
        kl = float((old_probs * (old_lp - lp)).sum(axis=1).mean())
        dlogits = ((probs - onehot) + beta * (probs - old_probs)) / (n * (1.0 + beta))
        grads = net.backward(cache, dlogits, np.zeros(len(x)))
        for key, g in grads.items():
            net.params[key] -= lr * g
    return {"ce": ce, "kl": kl, "n": n}


def _edge_detour(graph: GraphMemory, edge) -> float:
    """Stored trajectory length over the L1 distance between the endpoint
    node poses; ~1.0 for demonstrations that go straight, larger for ones
    that wander before connecting the nodes."""
    pi = graph.nodes[edge.i].pose
    pj = graph.nodes[edge.j].pose
    l1 = abs(float(pi[0] - pj[0])) + abs(float(pi[1] - pj[1]))
    return len(edge.actions) / max(l1, 1.0)


def build_il_batch(graph: GraphMemory, n_edges: int,
                   rng: np.random.Generator,
                   max_detour: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Flatten demo tuples from up to n_edges sampled stored trajectories.

    With max_detour > 0, trajectories much longer than the straight-line
    separation of their endpoints are excluded: wandering demonstrations
    teach the policy detours. Falls back to all edges if the filter would
    empty the pool.
    """
    keys = sorted(k for k, e in graph.edges.items() if e.samples)
    if max_detour > 0:
        tight = [k for k in keys
                 if _edge_detour(graph, graph.edges[k]) <= max_detour]
        if tight:
            keys = tight
    if not keys:
        return np.zeros((0, 1)), np.zeros(0, int)
    take = min(n_edges, len(keys))
    chosen = rng.choice(len(keys), size=take, replace=False)
    xs: List[np.ndarray] = []
    acts: List[int] = []
    for ki in sorted(int(c) for c in chosen):
        edge = graph.edges[keys[ki]]
        goal = graph.nodes[edge.terminal()]
        for (feat, pose), action in zip(edge.samples, edge.actions):
            xs.append(policy_input(feat, goal.feature, goal.pose - pose))
            acts.append(action)
    return np.stack(xs), np.array(acts, int)


# -- checkpoints -----------------------------------------------------------------

def save_checkpoint(path: str, net: ActorCritic) -> None:
    manifest = {
        "input_dim": net.input_dim,
        "n_actions": net.n_actions,
        "hidden": list(net.hidden),
        "layers": [{"name": k, "shape": list(v.shape)}
                   for k, v in net.params.items()],
    }
    with open(path, "wb") as fh:
        fh.write((CKPT_HEADER + "\n").encode())
        fh.write((json.dumps(manifest) + "\n").encode())
        for k, _ in ((d["name"], d["shape"]) for d in manifest["layers"]):
            fh.write(net.params[k].astype("<f8").tobytes())


class CheckpointError(Exception):
    pass


def load_checkpoint(path: str) -> ActorCritic:
    with open(path, "rb") as fh:
        header = fh.readline().decode().strip()
        if header != CKPT_HEADER:
            raise CheckpointError(f"bad checkpoint header {header!r}")
        try:
            manifest = json.loads(fh.readline().decode())
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"bad checkpoint manifest: {exc}") from exc
        net = ActorCritic(manifest["input_dim"], manifest["n_actions"],
                          tuple(manifest["hidden"]))
        for layer in manifest["layers"]:
            shape = tuple(layer["shape"])
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise CheckpointError("truncated checkpoint weights")
            net.params[layer["name"]] = np.frombuffer(
                buf, dtype="<f8").reshape(shape).copy()
    return net


# -- training loop -----------------------------------------------------------------

@dataclass
class TrainResult:
    net: ActorCritic
    best_params: Dict[str, np.ndarray]
    graph: GraphMemory
    steps: int
    coverage_curve: List[Tuple[int, float]] = field(default_factory=list)
    visit_hist: Dict[Tuple[int, int], int] = field(default_factory=dict)
    episodes: int = 0
    successes: int = 0
    best_success_rate: float = 0.0
    best_efficiency: float = 0.0
    update_stats: List[dict] = field(default_factory=list)


def training_loop(env: GridEnv, graph: GraphMemory, enc: PatchEncoder,
                  cfg: dict, net: Optional[ActorCritic] = None,
                  state: Optional[AgentState] = None,
                  log_writer=None, coverage_every: int = 500) -> TrainResult:
    """Run the self-supervised training loop for cfg['learner.total_steps'].

    Deterministic given (cfg, seed): two runs with the same inputs produce
    bit-identical parameters and graphs.
    """
    total = int(cfg["learner.total_steps"])
    nsteps = int(cfg["learner.nsteps"])
    horizon = int(cfg["learner.horizon"])
    gamma_temp = float(cfg["sampler.temperature"])
    alpha = float(cfg["reward.alpha"])
    novelty_c = float(cfg["reward.novelty"])
    success_mag = float(cfg["reward.success"])
    radius = float(cfg["reward.radius"])
    episodic = bool(cfg["learner.episodic_respawn"])

    seeds = np.random.SeedSequence(int(cfg["seed"])).spawn(4)
    env_rng = np.random.default_rng(seeds[0])
    policy_rng = np.random.default_rng(seeds[1])
    goal_rng = np.random.default_rng(seeds[2])
    il_rng = np.random.default_rng(seeds[3])

    input_dim = 2 * enc.feature_dim + 3
    if net is None:
        net = ActorCritic(input_dim, env.n_actions, seed=int(cfg["seed"]))
    opt = Adam(net.params)

    if state is None:
        state = env.spawn(env_rng)
    spawn_cell = (state.x, state.y)
    if graph.origin is None:
        graph.origin = (float(state.x), float(state.y), float(state.heading))
    obs = env.observe(state)
    feat = enc.encode(obs.patch)
    sem = semantic_score(obs.patch)
    if len(graph) == 0:
        graph.try_add_node(feat, obs.pose_est, sem, 0)
    elif len(graph) > 0:
        graph.localize(feat, obs.pose_est)

    result = TrainResult(net=net, best_params=net.copy_params(), graph=graph,
                         steps=0)
    visit = result.visit_hist
    visit[(state.x, state.y)] = visit.get((state.x, state.y), 0) + 1
    visited_cells = {(state.x, state.y)}
    n_free = len(env.grid.free_cells())

    goal_id: Optional[int] = None
    goal_feat = np.zeros(enc.feature_dim)
    goal_pose = np.zeros(3)
    visited_nodes: set = set()
    ep_steps = 0
    dist_map: Dict[int, int] = {}
    dist_version = -1
    recent = deque(maxlen=50)
    recent_eff: deque = deque(maxlen=50)
    goal_l0: Optional[int] = None

    buf_x: List[np.ndarray] = []
    buf_a: List[int] = []
    buf_logp: List[float] = []
    buf_v: List[float] = []
    buf_r: List[float] = []
    buf_done: List[bool] = []

    for step in range(1, total + 1):
        if len(graph) == 0:
            # No nodes yet: roam randomly until the first admission.
            action = int(policy_rng.integers(env.n_actions))
            state, obs = env.step(state, action, env_rng)
            feat = enc.encode(obs.patch)
            sem = semantic_score(obs.patch)
            graph.try_add_node(feat, obs.pose_est, sem, step)
            graph.record_transition(action, feat, obs.pose_est)
            _track(visit, visited_cells, state)
            _maybe_curve(result, step, coverage_every, visited_cells, n_free)
            continue

        if goal_id is None or goal_id not in graph.nodes:
            goal_id = graph.sample_goal(gamma_temp, goal_rng)
            goal_node = graph.nodes[goal_id]
            goal_feat = goal_node.feature
            goal_pose = goal_node.pose
            visited_nodes = set()
            if graph.current is not None:
                visited_nodes.add(graph.current)
                goal_l0 = graph.topo_distance(graph.current, goal_id)
            else:
                goal_l0 = None
            ep_steps = 0
            dist_version = -1

        x = policy_input(feat, goal_feat, goal_pose - obs.pose_est)
        action, logp, value = net.act(x, policy_rng)
        state, obs = env.step(state, action, env_rng)
        feat = enc.encode(obs.patch)
        sem = semantic_score(obs.patch)

        prev_node = graph.current
        graph.localize(feat, obs.pose_est)
        graph.try_add_node(feat, obs.pose_est, sem, step)
        graph.record_transition(action, feat, obs.pose_est)
        cur_node = graph.current

        if dist_version != graph.topology_version:
            dist_map = graph.distances_from(goal_id)
            dist_version = graph.topology_version
        r_d = rw.topo_progress_reward(graph, prev_node, cur_node, goal_id,
                                      alpha, dist_map)
        r_n = rw.novelty_reward(cur_node, visited_nodes, novelty_c)
        r_s, done = rw.success_reward(obs.pose_est, goal_pose, radius,
                                      success_mag)
        breakdown = rw.RewardBreakdown(r_d, r_n, r_s)
        ep_steps += 1
        timeout = ep_steps >= horizon
        terminal = done or timeout

        buf_x.append(x)
        buf_a.append(action)
        buf_logp.append(logp)
        buf_v.append(value)
        buf_r.append(breakdown.total)
        buf_done.append(terminal)

        if log_writer is not None:
            log_writer({"step": step, "goal": goal_id, **breakdown.as_dict(),
                        "done": done, "timeout": timeout,
                        "nodes": len(graph), "edges": graph.num_edges})

        if terminal:
            recent.append(1 if done else 0)
            # train-time efficiency: initial hop distance over steps taken,
            # zero on failure (an SPL analogue using graph knowledge only);
            # tracked for diagnostics alongside the success rate
            if done and goal_l0 is not None:
                recent_eff.append(min(1.0, max(goal_l0, 1) / ep_steps))
            else:
                recent_eff.append(0.0)
            result.episodes += 1
            result.successes += int(done)
            goal_id = None
            if len(recent) == recent.maxlen:
                sr = sum(recent) / len(recent)
                result.best_efficiency = max(
                    result.best_efficiency,
                    sum(recent_eff) / len(recent_eff))
                if sr >= result.best_success_rate:
                    result.best_success_rate = sr
                    result.best_params = net.copy_params()
            if episodic:
                state = AgentState(x=spawn_cell[0], y=spawn_cell[1],
                                   start=spawn_cell)
                obs = env.observe(state)
                feat = enc.encode(obs.patch)
                sem = semantic_score(obs.patch)
                graph.localize(feat, obs.pose_est)
                graph.break_trajectory()

        if len(buf_x) >= nsteps:
            if terminal or goal_id is None:
                last_value = 0.0
            else:
                nx = policy_input(feat, goal_feat, goal_pose - obs.pose_est)
                _, last_values, _ = net.forward(nx)
                last_value = float(last_values[0])
            adv, returns = compute_advantages(
                np.array(buf_r), np.array(buf_v), np.array(buf_done),
                last_value, float(cfg["learner.discount"]),
                float(cfg["learner.gae_lambda"]), normalize=True)
            lr = lr_schedule(step, total, float(cfg["learner.lr_start"]),
                             float(cfg["learner.lr_end"]))
            stats = ppo_update(
                net, opt, np.stack(buf_x), np.array(buf_a, int),
                np.array(buf_logp), adv, returns, lr,
                clip=float(cfg["learner.clip"]),
                epochs=int(cfg["learner.epochs"]),
                minibatches=int(cfg["learner.minibatches"]),
                vf_coef=float(cfg["learner.vf_coef"]),
                ent_coef=float(cfg["learner.ent_coef"]))
            il_x, il_a = build_il_batch(
                graph, int(cfg["learner.il_edges"]), il_rng,
                max_detour=float(cfg["learner.il_max_detour"]))
            il_stats = il_update(net, il_x, il_a,
                                 float(cfg["learner.il_lr"]),
                                 beta=float(cfg["learner.beta"]),
                                 steps=int(cfg["learner.il_steps"]))
            stats["il"] = il_stats
            stats["step"] = step
            result.update_stats.append(stats)
            buf_x.clear(); buf_a.clear(); buf_logp.clear()
            buf_v.clear(); buf_r.clear(); buf_done.clear()

        if step % int(cfg["graph.prune_every"]) == 0:
            graph.prune_edges(int(cfg["graph.prune_min_count"]))
            dist_version = -1

        _track(visit, visited_cells, state)
        _maybe_curve(result, step, coverage_every, visited_cells, n_free)

    result.steps = total
    if result.best_success_rate == 0.0:
        result.best_params = net.copy_params()
    return result


def _track(visit: dict, visited_cells: set, state: AgentState) -> None:
    cell = (state.x, state.y)
    visit[cell] = visit.get(cell, 0) + 1
    visited_cells.add(cell)


def _maybe_curve(result: TrainResult, step: int, every: int,
                 visited_cells: set, n_free: int) -> None:
    if step % every == 0 or step == 1:
        result.coverage_curve.append((step, len(visited_cells) / n_free))
