"""Test-time hierarchical navigation over the graph memory.

Start and goal observations are localized onto the graph with the combined
pose/visual similarity rule, a route is planned over stored trajectory
lengths, and the learned local policy executes it subgoal by subgoal,
finishing with a final leg toward the goal observation itself. Instead of
sampling, each step takes the action maximizing the policy probability minus
penalties for revisiting cells and for actions that previously collided from
the current cell (both computed from the agent's own pose estimate); the
penalties only break policy livelocks and carry no goal-directed signal of
their own. A stalled subgoal triggers replanning from the current node, at
most a fixed number of times.

Odometry drift is corrected online: whenever the current observation is an
unambiguous visual match to a stored node near the pose estimate, the pose
estimate is re-anchored to that node's recorded pose. The correction uses
only the agent's own memory, never ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .encoder import PatchEncoder
from .graph import GraphMemory, NoNodesError
from .gridworld import CARDINAL_DELTA, AgentState, GridEnv, Observation
from .learner import policy_input
from .nn import ActorCritic, softmax


@dataclass
class NavPlan:
    goal_node: int
    route: List[int]
    cursor: int = 0
    subgoal_budget: int = 30
    replans: int = 0


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    path_length: int
    final_distance: float
    reason: str = ""
    replans: int = 0
    final_state: Optional[AgentState] = field(default=None, repr=False)


def localize_goal(graph: GraphMemory, net: ActorCritic, goal_feat: np.ndarray,
                  goal_pose: np.ndarray) -> int:
    """Graph node closest to the goal observation.

    Uses the combined pose/feature similarity rule (the same scoring as
    self-localization, without the admission threshold). A critic-value
    argmax is unusable here: returns under the hop-progress reward grow
    with start-to-goal distance, so the value ranking favours *distant*
    nodes. Falls back to maximum feature cosine when the goal pose is
    non-finite.
    """
    if not graph.nodes:
        raise NoNodesError("graph has no nodes")
    goal_pose = np.asarray(goal_pose, float)
    if not np.isfinite(goal_pose).all():
        ids = sorted(graph.nodes)
        sims = np.array([float(graph.nodes[i].feature @ goal_feat)
                         for i in ids])
        return ids[int(np.argmax(sims))]
    _, _, nearest = graph.similarity(goal_feat, goal_pose)
    return nearest


def _self_localize(graph: GraphMemory, feat: np.ndarray,
                   pose: np.ndarray) -> int:
    """Nearest node by the combined pose/visual rule (no threshold at start)."""
    _, _, nearest = graph.similarity(feat, pose)
    return nearest


def _combined_to(graph: GraphMemory, node_id: int, feat: np.ndarray,
                 pose: np.ndarray) -> float:
    node = graph.nodes[node_id]
    d_pose = float(np.linalg.norm(node.pose - pose))
    d_vis = -float(node.feature @ feat)
    return d_pose + graph.alpha_sim * d_vis


def _at_subgoal(graph: GraphMemory, node_id: int, feat: np.ndarray,
                pose: np.ndarray, radius: float) -> bool:
    """Subgoal reached when the localization rule fires or the pose estimate
    is inside the arrival radius (tolerant to odometry drift)."""
    if _combined_to(graph, node_id, feat, pose) < graph.d_locate:
        return True
    node = graph.nodes[node_id]
    return float(np.linalg.norm(node.pose[:2] - np.asarray(pose)[:2])) < radius


def _advance_cursor(graph: GraphMemory, plan: "NavPlan", feat: np.ndarray,
                    pose: np.ndarray, radius: float) -> bool:
    """Move the cursor past every later route node already satisfied.

    Scanning the whole remaining route (not just the next subgoal) lets the
    executor skip waypoints it drifted past, so it never backtracks to touch
    a node the policy has already overshot.
    """
    best = None
    for idx in range(plan.cursor, len(plan.route)):
        if _at_subgoal(graph, plan.route[idx], feat, pose, radius):
            best = idx
    if best is None:
        return False
    plan.cursor = best + 1
    return True


def _select_action(net: ActorCritic, x: np.ndarray, pose: np.ndarray,
                   visits: dict, blocked: dict,
                   revisit_penalty: float) -> int:
    """Score each action and return the argmax.

    score(a) = policy probability - revisit_penalty * prior visits of the
    predicted next cell - a large penalty if the action collided from this
    cell before. The prediction uses only the agent's own pose estimate and
    the known action displacements; the penalties carry no information about
    the goal direction, so all goal-seeking comes from the policy.
    """
    probs = softmax(net.forward(x)[0])[0]
    cell = _pose_cell(pose)
    scores = np.empty(len(CARDINAL_DELTA))
    for action, (dx, dy) in CARDINAL_DELTA.items():
        nxt = (round(cell[0] + dx, 1), round(cell[1] + dy, 1))
        score = probs[action] - revisit_penalty * visits.get(nxt, 0)
        if action in blocked.get(cell, ()):
            score -= 10.0
        scores[action] = score
    return int(np.argmax(scores))


def _pose_cell(pose: np.ndarray) -> Tuple[float, float]:
    return (round(float(pose[0]), 1), round(float(pose[1]), 1))


def _drift_correction(graph: GraphMemory, feat: np.ndarray,
                      pose: np.ndarray, radius: float = 3.0,
                      min_cos: float = 0.999) -> Optional[np.ndarray]:
    """Pose correction from an unambiguous visual match to a memory node.

    Observations are deterministic in position, so a feature cosine of ~1
    against a stored node means the agent is standing on that node's cell;
    nodes sit at landmark-rich cells, which keeps such matches distinctive.
    Restricting candidates to the pose prior and requiring the match to be
    unique guards against visually aliased cells. Returns the offset that
    re-anchors the drifted pose estimate onto the node, or None.
    """
    match = None
    for node in graph.nodes.values():
        if float(np.linalg.norm(node.pose[:2] - pose[:2])) > radius:
            continue
        if float(node.feature @ feat) < min_cos:
            continue
        if match is not None:
            return None  # ambiguous: two nearby nodes look identical
        match = node
    if match is None:
        return None
    offset = match.pose - pose
    offset[2:] = 0.0
    return offset


def execute(env: GridEnv, state: AgentState, graph: GraphMemory,
            net: ActorCritic, enc: PatchEncoder, start_obs: Observation,
            goal_obs: Observation, rng: np.random.Generator,
            max_steps: int = 200, subgoal_budget: int = 30,
            max_replans: int = 3,
            success_radius: float = 1.0,
            subgoal_radius: float = 2.0,
            revisit_penalty: float = 0.1) -> EpisodeResult:
    """Run one hierarchical navigation episode; returns the outcome record.

    Pose estimates of start and goal observations must share the graph's
    coordinate frame.
    """
    goal_feat = enc.encode(goal_obs.patch)
    goal_pose = np.asarray(goal_obs.pose_est, float)

    def _dist_to_goal(pose) -> float:
        return float(np.linalg.norm(np.asarray(pose)[:2] - goal_pose[:2]))

    def _at_goal(feat, pose) -> bool:
        """Arrival requires visual confirmation: the current observation must
        match the goal observation, with the pose estimate merely gating out
        far-away visually aliased cells. A pose-only test would declare
        success one cell off whenever odometry drift exceeds half a cell."""
        return (float(goal_feat @ feat) >= 0.999
                and _dist_to_goal(pose) < success_radius + 1.5)

    feat = enc.encode(start_obs.patch)
    if _at_goal(feat, start_obs.pose_est):
        return EpisodeResult(True, 0, 0, _dist_to_goal(start_obs.pose_est),
                             "already_at_goal", final_state=state)
    if not graph.nodes:
        return EpisodeResult(False, 0, 0, _dist_to_goal(start_obs.pose_est),
                             "empty_graph", final_state=state)
    obs = start_obs
    # drift-corrected pose estimate: odometry plus the cumulative offset
    # from re-anchoring on visually recognized memory nodes
    corr = np.zeros_like(np.asarray(start_obs.pose_est, float))
    pose = np.asarray(obs.pose_est, float) + corr
    start_node = _self_localize(graph, feat, pose)
    goal_node = localize_goal(graph, net, goal_feat, goal_pose)
    route = graph.weighted_path(start_node, goal_node)
    if not route:
        return EpisodeResult(False, 0, 0, _dist_to_goal(pose),
                             "unreachable", final_state=state)
    plan = NavPlan(goal_node, route, subgoal_budget=subgoal_budget)
    # consume any route waypoints already satisfied at the start, so the
    # executor never walks back to touch a node behind it
    _advance_cursor(graph, plan, feat, pose, subgoal_radius)

    steps = 0
    steps_since_fix = 0
    budget_left = subgoal_budget
    visits: dict = {}
    blocked: dict = {}
    while steps < max_steps:
        if plan.cursor < len(plan.route):
            sub = graph.nodes[plan.route[plan.cursor]]
            sub_feat, sub_pose = sub.feature, sub.pose
        else:
            sub_feat, sub_pose = goal_feat, goal_pose  # final leg

        cell = _pose_cell(pose)
        visits[cell] = visits.get(cell, 0) + 1
        x = policy_input(feat, sub_feat, sub_pose - pose)
        action = _select_action(net, x, pose, visits, blocked,
                                revisit_penalty)
        state, obs = env.step(state, action, rng)
        feat = enc.encode(obs.patch)
        steps += 1
        budget_left -= 1
        if obs.collided:
            blocked.setdefault(cell, set()).add(action)

        pose = np.asarray(obs.pose_est, float) + corr
        # widen the matching prior as uncorrected steps accumulate, since
        # drift grows with time since the last re-anchor
        offset = _drift_correction(
            graph, feat, pose, radius=min(3.0 + 0.25 * steps_since_fix, 8.0))
        if offset is not None:
            corr = corr + offset
            pose = np.asarray(obs.pose_est, float) + corr
            steps_since_fix = 0
        else:
            steps_since_fix += 1

        if _at_goal(feat, pose):
            return EpisodeResult(True, steps, steps,
                                 _dist_to_goal(pose), "arrived",
                                 plan.replans, final_state=state)

        advanced = _advance_cursor(graph, plan, feat, pose,
                                   subgoal_radius)
        if advanced:
            budget_left = subgoal_budget
        elif budget_left <= 0:
            if plan.replans >= max_replans:
                return EpisodeResult(False, steps, steps,
                                     _dist_to_goal(pose),
                                     "replan_exhausted", plan.replans,
                                     final_state=state)
            here = _self_localize(graph, feat, pose)
            route = graph.weighted_path(here, plan.goal_node)
            if not route:
                return EpisodeResult(False, steps, steps,
                                     _dist_to_goal(pose),
                                     "unreachable", plan.replans,
                                     final_state=state)
            plan.route = route
            plan.cursor = 0
            plan.replans += 1
            budget_left = subgoal_budget

    return EpisodeResult(False, steps, steps, _dist_to_goal(pose),
                         "max_steps", plan.replans, final_state=state)
