"""Episode runners for random, greedy, universal and learned agents, plus ensemble statistics."""
from dataclasses import dataclass, field

import numpy as np

from .env import obs_encode_batch
from .state import (
    CNOT,
    avg_entanglement,
    avg_entanglements,
    haar_random,
    n_pairs,
    pairs,
    permute_qubits,
    product,
)
from .synthesis import (
    GENERAL,
    KIND_CNOT,
    REAL_ORTHOGONAL,
    SEQUENCE_4Q,
    Circuit,
    apply_action,
    apply_actions,
    locally_optimal_step,
)

DEFAULT_MAX_STEPS = 1000


def classify_gate(m, tol=1e-9):
    """Kind tag of a 4x4 unitary."""
    m = np.asarray(m)
    if np.allclose(m, CNOT, atol=tol, rtol=0):
        return KIND_CNOT
    if np.max(np.abs(m.imag)) < tol and np.linalg.det(m.real) > 0:
        return REAL_ORTHOGONAL
    return GENERAL


GATE_CNOTS = {KIND_CNOT: 1, REAL_ORTHOGONAL: 2, GENERAL: 3}


# ---------------------------------------------------------------------------
# Agents. ``act_batch`` maps a batch of states to action indices.
# ---------------------------------------------------------------------------

class RandomAgent:
    name = "random"
    oriented = True

    def __init__(self, rng):
        self.rng = rng

    def act_batch(self, psis):
        L = int(np.log2(psis.shape[1]))
        return self.rng.integers(0, n_pairs(L), size=psis.shape[0])

    def act(self, psi):
        return int(self.act_batch(np.asarray(psi)[None])[0])


def greedy_scores(psis):
    """``S_avg`` after every possible action, shape ``(B, n_pairs)``."""
    psis = np.atleast_2d(psis)
    L = int(np.log2(psis.shape[1]))
    out = np.empty((psis.shape[0], n_pairs(L)))
    for a, (i, j) in enumerate(pairs(L)):
        new, _, _ = apply_actions(psis, i, j)
        out[:, a] = avg_entanglements(new)
    return out


class GreedyAgent:
    """Picks the action with the lowest resulting ``S_avg``; ties go to the lowest pair index."""
    name = "greedy"
    oriented = True

    def act_batch(self, psis):
        return np.argmin(greedy_scores(psis), axis=1)

    def act(self, psi):
        return int(self.act_batch(np.asarray(psi)[None])[0])


class RLAgent:
    """Wraps a trained policy. ``mode`` is ``greedy`` (argmax) or ``sample``."""
    oriented = True

    def __init__(self, policy, mode="greedy", rng=None):
        if mode not in ("greedy", "sample"):
            raise ValueError(f"unknown mode {mode!r}")
        self.policy, self.mode, self.rng = policy, mode, rng
        self.name = f"rl-{mode}"
        self.last_probs = None

    def choose(self, probs):
        if self.mode == "greedy":
            return np.argmax(probs, axis=-1)
        from .ppo import sample_actions
        return sample_actions(np.atleast_2d(probs), self.rng)

    def act_batch(self, psis):
        from .nets import policy_probs
        probs = policy_probs(self.policy, obs_encode_batch(psis))
        self.last_probs = probs
        return self.choose(probs)

    def act(self, psi):
        return int(self.act_batch(np.asarray(psi)[None])[0])


class UniversalAgent:
    """Replays the fixed 3- or 4-qubit locally optimal sequence with raw orientation."""
    oriented = False

    def __init__(self, L):
        if L == 3:
            self.sequence = [(0, 1), (1, 2)]
        elif L == 4:
            self.sequence = list(SEQUENCE_4Q)
        else:
            raise ValueError("universal sequences exist for L = 3 and L = 4 only")
        self.name = f"universal-{L}q"
        self.t = 0

    def reset(self):
        self.t = 0

    def act(self, psi):
        pair = self.sequence[self.t % len(self.sequence)]
        self.t += 1
        return pair


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------

@dataclass
class EpisodeRecord:
    initial: str
    agent: str
    n_gates: int
    terminal_s_avg: float
    success: bool
    trace: list = field(default_factory=list)
    circuit: Circuit = None


def run_episode(agent, psi, eps=1e-3, max_steps=DEFAULT_MAX_STEPS, initial="state"):
    """Act until ``S_avg < eps`` or ``max_steps`` gates; records the full circuit."""
    psi = np.asarray(psi, dtype=complex)
    L = int(np.log2(psi.size))
    pair_list = pairs(L)
    if hasattr(agent, "reset"):
        agent.reset()
    s = avg_entanglement(psi)
    circ = Circuit(L, entropies_per_step=[s])
    while s >= eps and len(circ) < max_steps:
        if agent.oriented:
            a = agent.act(psi)
            prob = None
            if getattr(agent, "last_probs", None) is not None:
                prob = float(np.atleast_2d(agent.last_probs)[0, a])
            psi, g, orient = apply_action(psi, pair_list[a])
        else:
            orient = agent.act(psi)
            prob = None
            psi, g = locally_optimal_step(psi, orient)
        s = avg_entanglement(psi)
        circ.append(orient, g, classify_gate(g), prob, s_avg=s)
    return EpisodeRecord(initial, agent.name, len(circ), s, bool(s < eps),
                         list(circ.entropies_per_step), circ)


def run_batch(agent, psis, eps=1e-3, max_steps=DEFAULT_MAX_STEPS):
    """Run many episodes in lockstep for an oriented agent.

    Returns ``(n_gates, success, traces, cnots)`` where ``traces`` has shape
    ``(B, max_len + 1)`` and each row holds its final value after the episode ends.
    """
    psis = np.array(np.atleast_2d(psis), dtype=complex)
    B = psis.shape[0]
    L = int(np.log2(psis.shape[1]))
    pair_list = pairs(L)
    s = avg_entanglements(psis)
    traces = [s.copy()]
    n_gates = np.zeros(B, dtype=np.int64)
    cnots = np.zeros(B, dtype=np.int64)
    active = s >= eps
    while active.any() and n_gates.max(initial=0) < max_steps:
        idx = np.nonzero(active)[0]
        acts = np.asarray(agent.act_batch(psis[idx]))
        for a in np.unique(acts):
            sub = idx[acts == a]
            new, g, _ = apply_actions(psis[sub], *pair_list[a])
            psis[sub] = new
            cnots[sub] += [GATE_CNOTS[classify_gate(m)] for m in g]
        n_gates[idx] += 1
        s[idx] = avg_entanglements(psis[idx])
        traces.append(s.copy())
        active = (s >= eps) & (n_gates < max_steps)
    return n_gates, s < eps, np.stack(traces, axis=1), cnots


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

def parse_ensemble(ensemble):
    """Block sizes from an ensemble string such as ``"R:3;R:1"``."""
    sizes = []
    for tok in str(ensemble).replace(" ", "").split(";"):
        if not tok:
            continue
        kind, _, num = tok.partition(":")
        if kind != "R" or not num.isdigit() or int(num) < 1:
            raise ValueError(f"bad ensemble block {tok!r}; expected R:<size>")
        sizes.append(int(num))
    if not sizes:
        raise ValueError("empty ensemble description")
    return sizes


def sample_ensemble(ensemble, n_states, rng, permute=True):
    sizes = parse_ensemble(ensemble)
    L = sum(sizes)
    out = np.empty((n_states, 2 ** L), dtype=complex)
    for k in range(n_states):
        psi = product(*[haar_random(m, rng) for m in sizes])
        if permute:
            psi = permute_qubits(psi, rng.permutation(L))
        out[k] = psi
    return out


@dataclass
class EnsembleStats:
    ensemble: str
    agent: str
    L: int
    n_states: int
    success_rate: float
    mean_gates: float
    std_gates: float
    mean_cnots: float
    seed: int
    mean_trace: np.ndarray = None

    def row(self):
        return {k: getattr(self, k) for k in BENCH_COLUMNS}


BENCH_COLUMNS = ["ensemble", "agent", "L", "n_states", "success_rate", "mean_gates",
                 "std_gates", "mean_cnots", "seed"]


def make_agent(name, seed, policy=None):
    """Agent by name with its own RNG stream derived from ``seed``."""
    if name == "random":
        return RandomAgent(np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(11,))))
    if name == "greedy":
        return GreedyAgent()
    if name in ("rl", "rl-greedy", "rl-sample"):
        if policy is None:
            raise ValueError("the rl agent needs a trained policy")
        mode = "sample" if name == "rl-sample" else "greedy"
        return RLAgent(policy, mode, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(12,))))
    raise ValueError(f"unknown agent {name!r}")


def bench_ensemble(ensemble, n_states, agents, seed=0, eps=1e-3, max_steps=DEFAULT_MAX_STEPS,
                   permute=True, policy=None):
    """Statistics per agent over the same seeded set of initial states.

    Means and standard deviations are over successful episodes only.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(10,)))
    psis = sample_ensemble(ensemble, n_states, rng, permute)
    L = int(np.log2(psis.shape[1]))
    out = []
    for name in agents:
        agent = make_agent(name, seed, policy) if isinstance(name, str) else name
        n_gates, ok, traces, cnots = run_batch(agent, psis, eps, max_steps)
        good = n_gates[ok]
        out.append(EnsembleStats(
            ensemble=ensemble, agent=agent.name, L=L, n_states=n_states,
            success_rate=float(ok.mean()),
            mean_gates=float(good.mean()) if good.size else float("nan"),
            std_gates=float(good.std()) if good.size else float("nan"),
            mean_cnots=float(cnots[ok].mean()) if good.size else float("nan"),
            seed=seed, mean_trace=traces.mean(axis=0)))
    return out


@dataclass
class DecayFit:
    c: float
    slope: float
    intercept: float
    crossing: int  # first M with S_avg below threshold, or None
    window: tuple


def fit_decay(curve, threshold):
    """Exponential timescale ``c`` of a decaying ``S_avg(M)`` curve.

    Fits ``log S`` linearly over the tail ``threshold <= S < S(0)/2``.
    """
    curve = np.asarray(curve, dtype=float)
    M = np.arange(curve.size)
    mask = (curve >= threshold) & (curve < 0.5 * curve[0]) & (curve > 0)
    if mask.sum() < 2:
        raise ValueError("no decay: fewer than two points in the fit window")
    slope, intercept = np.polyfit(M[mask], np.log(curve[mask]), 1)
    if slope >= 0:
        raise ValueError("no decay: non-negative slope")
    below = np.nonzero(curve < threshold)[0]
    return DecayFit(float(-1.0 / slope), float(slope), float(intercept),
                    int(below[0]) if below.size else None, (int(M[mask][0]), int(M[mask][-1])))
