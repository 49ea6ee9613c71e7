"""Beam-search planning over locally optimal gate sequences.

Two heuristics are provided: the average single-qubit entropy of the whole
state, and a qubit-by-qubit mode that repeatedly plans for one target
qubit's entropy on the still-entangled subsystem.
"""
from dataclasses import dataclass, field

import numpy as np

from .state import avg_entanglement, avg_entanglements, pairs, qubit_entropies, num_qubits
from .synthesis import Circuit, apply_action, apply_actions


@dataclass
class BeamResult:
    plan: list  # action indices into pairs(L)
    nodes_visited: int
    success: bool
    state: np.ndarray
    h: float
    targets: list = field(default_factory=list)


def h_avg(psi):
    """Standard heuristic: the average single-qubit entanglement."""
    return avg_entanglement(psi)


def expand(states, actions, L):
    """Children of every state under every allowed action.

    Returns child states in node-major, action-minor order together with the
    parent index and action of each child.
    """
    states = np.atleast_2d(states)
    F = states.shape[0]
    pl = pairs(L)
    children = np.empty((F, len(actions), states.shape[1]), dtype=complex)
    for c, a in enumerate(actions):
        children[:, c], _, _ = apply_actions(states, *pl[a])
    parent = np.repeat(np.arange(F), len(actions))
    act = np.tile(np.asarray(actions), F)
    return children.reshape(F * len(actions), -1), parent, act


def _search(psi, k, h_fn, goal_fn, actions, max_depth):
    L = num_qubits(psi)
    frontier = np.asarray(psi, dtype=complex)[None]
    plans = [[]]
    h_front = h_fn(frontier)
    if goal_fn(frontier)[0]:
        return BeamResult([], 0, True, frontier[0], float(h_front[0]))
    nodes = 0
    for _ in range(max_depth):
        nodes += frontier.shape[0]
        children, parent, act = expand(frontier, actions, L)
        h = h_fn(children)
        goal = goal_fn(children)
        if goal.any():
            cand = np.nonzero(goal)[0]
            best = cand[np.argmin(h[cand])]
            return BeamResult(plans[parent[best]] + [int(act[best])], nodes, True,
                              children[best], float(h[best]))
        keep = np.argsort(h, kind="stable")[:k]
        frontier = children[keep]
        plans = [plans[parent[c]] + [int(act[c])] for c in keep]
        h_front = h[keep]
    return BeamResult(plans[0], nodes, False, frontier[0], float(h_front[0]))


def beam_plan(psi, k, heuristic="avg", eps=1e-3, max_depth=100):
    """Beam search with the standard heuristic (``avg``) or the qubit-by-qubit one (``qbq``)."""
    if k < 1:
        raise ValueError("beam size must be at least 1")
    if heuristic == "qbq":
        return qubit_by_qubit_plan(psi, k, eps, max_depth)
    if heuristic != "avg":
        raise ValueError(f"unknown heuristic {heuristic!r}")
    psi = np.asarray(psi, dtype=complex)
    L = num_qubits(psi)
    s_fn = avg_entanglements
    return _search(psi, k, s_fn, lambda s: s_fn(s) < eps, list(range(len(pairs(L)))), max_depth)


def qubit_by_qubit_plan(psi, k, eps=1e-3, max_depth=100, order=None):
    """Disentangle one target qubit at a time, each with its own beam search.

    Targets are taken in ascending index (or ``order``) among qubits still
    above ``eps``; actions are restricted to pairs of qubits that have not
    been disentangled yet. Stops as soon as the whole state has ``S_avg < eps``.
    ``max_depth`` bounds each per-target search.
    """
    if k < 1:
        raise ValueError("beam size must be at least 1")
    psi = np.asarray(psi, dtype=complex)
    L = num_qubits(psi)
    order = list(range(L)) if order is None else list(order)
    pl = pairs(L)
    plan, nodes, targets = [], 0, []
    done = set()
    while avg_entanglement(psi) >= eps:
        ent = qubit_entropies(psi[None])[0]
        done |= {q for q in range(L) if ent[q] < eps}
        live = [q for q in order if q not in done]
        if len(live) < 2:
            break
        t = live[0]
        actions = [a for a, (i, j) in enumerate(pl) if i not in done and j not in done]
        h_fn = lambda s, t=t: qubit_entropies(s)[:, t]
        goal_fn = lambda s, t=t: (qubit_entropies(s)[:, t] < eps) | (avg_entanglements(s) < eps)
        res = _search(psi, k, h_fn, goal_fn, actions, max_depth)
        plan += res.plan
        nodes += res.nodes_visited
        targets.append(t)
        psi = res.state
        if not res.success:
            return BeamResult(plan, nodes, False, psi, avg_entanglement(psi), targets)
        done.add(t)
    s = avg_entanglement(psi)
    return BeamResult(plan, nodes, bool(s < eps), psi, s, targets)


def replay(psi, plan):
    """Apply a plan of action indices; returns the final state."""
    psi = np.asarray(psi, dtype=complex)
    pl = pairs(num_qubits(psi))
    for a in plan:
        psi, _, _ = apply_action(psi, pl[a])
    return psi


def plan_to_circuit(psi, plan):
    """Replay a plan and record it as a :class:`Circuit`."""
    from .bench import classify_gate
    psi = np.asarray(psi, dtype=complex)
    L = num_qubits(psi)
    pl = pairs(L)
    circ = Circuit(L, entropies_per_step=[avg_entanglement(psi)])
    for a in plan:
        psi, g, orient = apply_action(psi, pl[a])
        circ.append(orient, g, classify_gate(g), s_avg=avg_entanglement(psi))
    return circ


def shortest_plan_bfs(psi, eps, max_depth):
    """Exhaustive breadth-first search for the shortest plan reaching ``S_avg < eps``."""
    psi = np.asarray(psi, dtype=complex)
    L = num_qubits(psi)
    if avg_entanglement(psi) < eps:
        return []
    frontier, plans = psi[None], [[]]
    actions = list(range(len(pairs(L))))
    for _ in range(max_depth):
        children, parent, act = expand(frontier, actions, L)
        s = avg_entanglements(children)
        hit = np.nonzero(s < eps)[0]
        if hit.size:
            c = hit[0]
            return plans[parent[c]] + [int(act[c])]
        plans = [plans[p] + [int(a)] for p, a in zip(parent, act)]
        frontier = children
    return None
