"""Two-qubit shot-noise tomography and the noisy disentangling protocol.

Each pair marginal is measured in the nine product bases {X, Y, Z}^2. The
fifteen Pauli expectations are inverted linearly and the eigenvalues of the
resulting matrix are projected onto the probability simplex, which is the
least-squares physical estimate.
"""
from dataclasses import dataclass, field

import numpy as np

from .env import encode_rdms
from .state import (
    apply_gates,
    avg_entanglement,
    binary_entropy,
    depolarize,
    dm_apply_gate,
    dm_from_state,
    dm_rdm_pair,
    entanglement_of_formation,
    num_qubits,
    pairs,
    _qubit_entropy_from_rdm1,
)
from .synthesis import oriented_gates, spectral_gates

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (I2, X, Y, Z)
LABELS = "IXYZ"

H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_DAG = np.diag([1, -1j])
# basis change taking the eigenbasis of X, Y or Z to the computational basis
ROTATION = {1: H, 2: H @ S_DAG, 3: I2}
SETTINGS = [(a, b) for a in (1, 2, 3) for b in (1, 2, 3)]

# two-qubit Paulis in order 4a + b, identity skipped
PAULI_INDEX = [(a, b) for a in range(4) for b in range(4)][1:]
PAULI2 = np.array([np.kron(PAULI[a], PAULI[b]) for a, b in PAULI_INDEX])

# +1 / -1 eigenvalue of each qubit for outcomes 00, 01, 10, 11
SIGN_1 = np.array([1, 1, -1, -1])
SIGN_2 = np.array([1, -1, 1, -1])


@dataclass
class MeasurementRecord:
    pair: tuple
    shots: int  # 0 means exact probabilities
    counts: np.ndarray  # (9, 4) integers, None in exact mode
    probs: np.ndarray  # (9, 4) exact outcome distribution

    @property
    def frequencies(self):
        if self.shots == 0:
            return self.probs
        return self.counts / self.shots


def setting_probabilities(rho):
    """Exact outcome distributions of the nine settings, shape ``(9, 4)``."""
    out = np.empty((9, 4))
    for s, (a, b) in enumerate(SETTINGS):
        r = np.kron(ROTATION[a], ROTATION[b])
        p = np.real(np.diagonal(r @ rho @ r.conj().T))
        p = np.clip(p, 0.0, None)
        out[s] = p / p.sum()
    return out


def measure_rdm(rho, shots, rng, pair=(0, 1)):
    if shots < 0:
        raise ValueError("shots must be positive (or 0 for exact mode)")
    probs = setting_probabilities(np.asarray(rho, dtype=complex))
    counts = None
    if shots > 0:
        counts = np.stack([rng.multinomial(shots, p) for p in probs])
    return MeasurementRecord(tuple(pair), int(shots), counts, probs)


def sample_pair_measurements(dm, pair, shots, rng):
    """Simulated measurement of the marginal of ``pair`` in all nine Pauli settings.

    ``shots = 0`` selects exact mode, where frequencies equal probabilities.
    """
    if shots is None or (shots != 0 and shots < 1):
        raise ValueError("shots must be >= 1, or 0 for exact mode")
    return measure_rdm(dm_rdm_pair(dm, *pair), shots, rng, pair)


def expectations(record):
    """Fifteen Pauli expectations in order ``4a + b`` over (I, X, Y, Z), identity skipped."""
    f = record.frequencies
    two = {st: float(f[s] @ (SIGN_1 * SIGN_2)) for s, st in enumerate(SETTINGS)}
    one_a = {a: np.mean([f[s] @ SIGN_1 for s, (x, _) in enumerate(SETTINGS) if x == a]) for a in (1, 2, 3)}
    one_b = {b: np.mean([f[s] @ SIGN_2 for s, (_, y) in enumerate(SETTINGS) if y == b]) for b in (1, 2, 3)}
    m = np.empty(15)
    for k, (a, b) in enumerate(PAULI_INDEX):
        if a == 0:
            m[k] = one_b[b]
        elif b == 0:
            m[k] = one_a[a]
        else:
            m[k] = two[(a, b)]
    return m


def exact_expectations(rho):
    return np.real(np.einsum("kij,ji->k", PAULI2, rho))


def simplex_project(v):
    """Euclidean projection onto ``{x : x >= 0, sum x = 1}`` by sort and threshold."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def linear_inversion(m):
    return (np.eye(4, dtype=complex) + np.einsum("k,kij->ij", np.asarray(m, dtype=float), PAULI2)) / 4


def reconstruct(m):
    """Least-squares physical two-qubit state from fifteen Pauli expectations."""
    mu = linear_inversion(m)
    lam, v = np.linalg.eigh((mu + mu.conj().T) / 2)
    lam = simplex_project(lam)
    return (v * lam) @ v.conj().T


# ---------------------------------------------------------------------------
# Noisy protocol
# ---------------------------------------------------------------------------

def marginal_entropies(rdms, L):
    """Per-qubit entropy from the average of the single-qubit marginals of all pair RDMs."""
    acc = np.zeros((L, 2, 2), dtype=complex)
    cnt = np.zeros(L)
    for (i, j), r in rdms.items():
        t = r.reshape(2, 2, 2, 2)
        acc[i] += np.einsum("abcb->ac", t)
        acc[j] += np.einsum("abad->bd", t)
        cnt[i] += 1
        cnt[j] += 1
    return _qubit_entropy_from_rdm1(acc / cnt[:, None, None])


class ObservationGreedyAgent:
    """Greedy choice computed from pair RDMs alone.

    The change in the summed entropies of qubits ``i, j`` under the action
    is ``h(l1 + l2) + h(l1 + l3) - S_i - S_j``; the lowest value wins, ties to
    the lowest pair index.
    """
    name = "greedy"

    def act_rdms(self, rhos, s):
        L = s.size
        lam, _ = spectral_gates(rhos)
        after = binary_entropy(lam[:, 0] + lam[:, 1]) + binary_entropy(lam[:, 0] + lam[:, 2])
        before = np.array([s[i] + s[j] for i, j in pairs(L)])
        return int(np.argmin(after - before))


class ObservationRLAgent:
    def __init__(self, policy, mode="greedy", rng=None):
        from .bench import RLAgent
        self.inner = RLAgent(policy, mode, rng)
        self.name = self.inner.name

    def act_rdms(self, rhos, s):
        from .nets import policy_probs
        return int(self.inner.choose(policy_probs(self.policy, encode_rdms(rhos))))

    @property
    def policy(self):
        return self.inner.policy


@dataclass
class NoisyRunRecord:
    shots: int
    lam: float
    actions: list = field(default_factory=list)
    noisy_s_avg: list = field(default_factory=list)  # from reconstructed marginals
    true_s_avg: list = field(default_factory=list)  # of the noisy density matrix
    exact_s_avg: list = field(default_factory=list)  # statevector replay
    noisy_ef_avg: list = field(default_factory=list)
    gates: list = field(default_factory=list)  # (orientation, 4x4 matrix) per step

    def to_dict(self):
        return {"shots": self.shots, "lambda": self.lam, "actions": [list(a) for a in self.actions],
                "noisy_s_avg": self.noisy_s_avg, "true_s_avg": self.true_s_avg,
                "exact_s_avg": self.exact_s_avg, "noisy_ef_avg": self.noisy_ef_avg}


def _dm_s_avg(dm, L):
    from .state import dm_rdm_single
    return float(np.mean([_qubit_entropy_from_rdm1(dm_rdm_single(dm, q)) for q in range(L)]))


def noisy_pipeline_run(initial, agent, shots, lam, rng, n_steps, stop_eps=None):
    """Run ``n_steps`` gates chosen from tomographic estimates under depolarizing noise.

    The true state is a density matrix; after every gate it passes through
    the depolarizing channel of strength ``lam``. The first step measures
    every pair, later steps only the ``2L - 3`` pairs touching the last
    action. Gates are computed from the reconstructed (noisy) marginals and
    also replayed on the noise-free statevector.
    """
    psi = np.asarray(initial, dtype=complex)
    L = num_qubits(psi)
    dm = dm_from_state(psi)
    pl = pairs(L)
    rec = NoisyRunRecord(int(shots), float(lam))
    rdms = {}

    def measure(which):
        for p in which:
            rdms[p] = reconstruct(expectations(sample_pair_measurements(dm, p, shots, rng)))

    def record():
        s = marginal_entropies(rdms, L)
        rec.noisy_s_avg.append(float(s.mean()))
        rec.noisy_ef_avg.append(float(np.mean([entanglement_of_formation(rdms[p]) for p in pl])))
        rec.true_s_avg.append(_dm_s_avg(dm, L))
        rec.exact_s_avg.append(avg_entanglement(psi))
        return s

    measure(pl)
    s = record()
    for _ in range(n_steps):
        if stop_eps is not None and rec.noisy_s_avg[-1] < stop_eps:
            break
        rhos = np.stack([rdms[p] for p in pl])
        a = agent.act_rdms(rhos, s)
        i, j = pl[a]
        g, _ = oriented_gates(rdms[(i, j)][None], s[i:i + 1], s[j:j + 1])
        dm = depolarize(dm_apply_gate(dm, g[0], (i, j)), lam)
        psi = apply_gates(psi[None], g, i, j)[0]
        rec.actions.append((i, j))
        rec.gates.append(((i, j), g[0]))
        measure([p for p in pl if i in p or j in p])
        s = record()
    return rec


@dataclass
class KappaFit:
    kappa: float
    intercept: float
    flat: bool


def fit_kappa(shots, values, flat_tol=0.05):
    """Magnitude of the log-log slope of final ``S_avg`` against shot count."""
    x = np.log(np.asarray(shots, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    return KappaFit(float(abs(slope)), float(intercept), bool(abs(slope) < flat_tol))


def bell_bell_state(rng=None):
    """Two Bell pairs on a random qubit pairing with random local unitaries.

    Without ``rng`` this is Bell(0,1) x Bell(2,3).
    """
    from .state import bell, haar_unitary, permute_qubits, product, apply_gate
    psi = product(bell(), bell())
    if rng is None:
        return psi
    for q in range(4):
        u = np.kron(haar_unitary(2, rng), I2)
        psi = apply_gate(psi, u, (q, (q + 1) % 4))
    return permute_qubits(psi, rng.permutation(4))
