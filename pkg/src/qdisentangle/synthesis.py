"""Locally optimal two-qubit gates and short universal disentangling circuits.

The locally optimal gate for a pair is the unitary that diagonalizes the
pair's reduced density matrix with eigenvalues in descending order. It
zeroes the pair's entanglement of formation and minimizes the sum of the
two single-qubit entropies.
"""
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .state import (
    CNOT,
    SWAP,
    apply_gates,
    avg_entanglement,
    binary_entropy,
    num_qubits,
    _qubit_entropy_from_rdm1,
    pair_index,
    rdm_pairs,
    rdm_singles,
    swap_order,
)

LIFT = 1e-13
HERMITIAN_TOL = 1e-9
TIE_TOL = 1e-12

GENERAL = "general"
REAL_ORTHOGONAL = "real-orthogonal"
KIND_CNOT = "cnot"
GATE_KINDS = (GENERAL, REAL_ORTHOGONAL, KIND_CNOT)


@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray  # descending
    gate: np.ndarray  # rows are phase-fixed eigenvectors (conjugated)


def spectral_gates(rhos):
    """Batched locally optimal gates for an array of 4x4 RDMs.

    Returns ``(eigenvalues, gates)`` with shapes ``(B, 4)`` and ``(B, 4, 4)``.
    """
    rhos = np.asarray(rhos, dtype=complex)
    # distinct offsets lift degeneracies; larger offsets on lower indices so
    # degenerate basis states keep their natural order
    lifted = rhos + np.diag(LIFT * np.arange(3, -1, -1))
    lam, vecs = np.linalg.eigh(lifted)
    vecs = vecs[:, :, ::-1]
    # phase fix: the largest-modulus entry of each eigenvector becomes real positive
    k = np.argmax(np.abs(vecs), axis=1)
    pivot = np.take_along_axis(vecs, k[:, None, :], axis=1)
    vecs = vecs * (pivot.conj() / np.abs(pivot))
    # undo the lift on the eigenvalues so they match the input matrix
    lam = np.einsum("bji,bjk,bki->bi", vecs.conj(), rhos, vecs).real
    return lam, vecs.conj().transpose(0, 2, 1)


def spectral_gate(rdm):
    """Locally optimal gate for one two-qubit RDM."""
    rdm = np.asarray(rdm, dtype=complex)
    if rdm.shape != (4, 4):
        raise ValueError(f"expected a 4x4 RDM, got shape {rdm.shape}")
    if not np.allclose(rdm, rdm.conj().T, atol=HERMITIAN_TOL, rtol=0):
        raise ValueError("RDM is not Hermitian")
    lam, gates = spectral_gates(rdm[None])
    return SpectralDecomposition(lam[0], gates[0])


def post_gate_entropies(dec):
    """Entropies ``(S_i, S_j)`` of the two qubits after applying the gate."""
    lam = dec.eigenvalues if isinstance(dec, SpectralDecomposition) else np.asarray(dec)
    return (float(binary_entropy(lam[0] + lam[1])), float(binary_entropy(lam[0] + lam[2])))


def _pair_entropies(psis, i, j):
    return (_qubit_entropy_from_rdm1(rdm_singles(psis, i)),
            _qubit_entropy_from_rdm1(rdm_singles(psis, j)))


def oriented_gates(rhos, s_i, s_j):
    """Action gates from ordered RDMs ``rho^(i,j)`` and the entropies of qubits ``i`` and ``j``.

    Per item: the gate is built in orientation ``(i, j)`` when qubit ``i`` is
    strictly more entangled than ``j`` (or the two are tied), otherwise in
    orientation ``(j, i)``. If the gate would reverse a strict entropy
    ordering of the two qubits a SWAP is appended so the ordering is kept.

    Returns ``(gates, flipped)``; ``gates[b]`` is the full 4x4 operator in
    the ``(i, j)`` ordering and ``flipped[b]`` tells whether the orientation
    was ``(j, i)``.
    """
    rhos = np.asarray(rhos, dtype=complex)
    diff = np.asarray(s_i, dtype=float) - np.asarray(s_j, dtype=float)
    tie = np.abs(diff) < TIE_TOL
    flipped = (~tie) & (diff < 0)
    rho = np.where(flipped[:, None, None], swap_order(rhos), rhos)
    lam, g = spectral_gates(rho)
    # post-gate entropies in orientation order; the first qubit was the more entangled one
    s_first = binary_entropy(lam[:, 0] + lam[:, 1])
    s_second = binary_entropy(lam[:, 0] + lam[:, 2])
    needs_swap = (~tie) & (s_first + TIE_TOL < s_second)
    g = np.where(needs_swap[:, None, None], SWAP @ g, g)
    g = np.where(flipped[:, None, None], SWAP @ g @ SWAP, g)
    return g, flipped


def apply_actions(psis, i, j):
    """Apply the action on unordered pair ``(i, j)`` to a batch of states.

    See :func:`oriented_gates` for the orientation rule. Returns
    ``(new_states, gates, flipped)`` with gates in the ``(i, j)`` ordering.
    """
    psis = np.atleast_2d(np.asarray(psis, dtype=complex))
    if i > j:
        i, j = j, i
    s_i, s_j = _pair_entropies(psis, i, j)
    g, flipped = oriented_gates(rdm_pairs(psis, i, j), s_i, s_j)
    return apply_gates(psis, g, i, j), g, flipped


def apply_action(psi, pair):
    """Single-state version of :func:`apply_actions`.

    Returns ``(new_state, gate, orientation)`` where ``gate`` acts on the
    ordered pair ``orientation``.
    """
    psi = np.asarray(psi, dtype=complex)
    L = num_qubits(psi)
    i, j = sorted(int(q) for q in pair)
    pair_index(i, j, L)
    new, g, flipped = apply_actions(psi[None], i, j)
    if flipped[0]:
        return new[0], SWAP @ g[0] @ SWAP, (j, i)
    return new[0], g[0], (i, j)


def locally_optimal_step(psi, pair):
    """Apply the raw locally optimal gate on the ordered ``pair``; no orientation logic."""
    i, j = pair
    rho = rdm_pairs(psi[None], i, j)
    lam, g = spectral_gates(rho)
    return apply_gates(psi[None], g, i, j)[0], g[0]


# ---------------------------------------------------------------------------
# Circuits
# ---------------------------------------------------------------------------

@dataclass
class GateOp:
    step: int
    pair: tuple  # unordered action pair (sorted)
    orientation: tuple  # ordered qubits the matrix acts on
    matrix: np.ndarray
    kind: str = GENERAL
    policy_prob: float = None


@dataclass
class Circuit:
    n_qubits: int
    gates: list = field(default_factory=list)
    entropies_per_step: list = field(default_factory=list)
    permutation: tuple = None

    def append(self, orientation, matrix, kind=GENERAL, policy_prob=None, s_avg=None):
        a, b = orientation
        self.gates.append(GateOp(len(self.gates) + 1, (min(a, b), max(a, b)), (a, b),
                                 np.asarray(matrix, dtype=complex), kind, policy_prob))
        if s_avg is not None:
            self.entropies_per_step.append(float(s_avg))

    def __len__(self):
        return len(self.gates)

    @property
    def terminal_s_avg(self):
        return self.entropies_per_step[-1] if self.entropies_per_step else None

    def run(self, psi):
        """Apply every gate of the circuit to ``psi``."""
        psi = np.asarray(psi, dtype=complex)
        for op in self.gates:
            psi = apply_gates(psi[None], op.matrix[None], *op.orientation)[0]
        return psi


def _run_sequence(psi, sequence):
    circ = Circuit(num_qubits(psi), entropies_per_step=[avg_entanglement(psi)])
    for pair in sequence:
        psi, g = locally_optimal_step(psi, pair)
        circ.append(pair, g, s_avg=avg_entanglement(psi))
    return psi, circ


def _require(psi, L):
    psi = np.asarray(psi, dtype=complex)
    if num_qubits(psi) != L:
        raise ValueError(f"expected a {L}-qubit state, got {num_qubits(psi)} qubits")
    return psi


def universal_3q(psi):
    """Two locally optimal gates, on (0, 1) then (1, 2), disentangle any 3-qubit state."""
    psi = _require(psi, 3)
    _, circ = _run_sequence(psi, [(0, 1), (1, 2)])
    return circ


SEQUENCE_4Q = [(0, 1), (2, 3), (0, 2), (1, 3), (2, 3)]


class DisentanglingFailure(RuntimeError):
    pass


def universal_4q(psi, tol=1e-6):
    """Five locally optimal gates for a 4-qubit state, with a relabeling fallback.

    The base sequence acts on (0,1), (2,3), (0,2), (1,3), (2,3). If it leaves
    ``S_avg >= tol`` the qubit-relabeled variants are tried in lexicographic
    order of the permutation; the one used is stored on ``circuit.permutation``.
    """
    psi = _require(psi, 4)
    best = None
    for perm in permutations(range(4)):
        seq = [(perm[a], perm[b]) for a, b in SEQUENCE_4Q]
        _, circ = _run_sequence(psi, seq)
        circ.permutation = perm
        if circ.terminal_s_avg < tol:
            return circ
        if best is None or circ.terminal_s_avg < best.terminal_s_avg:
            best = circ
    raise DisentanglingFailure(
        f"no relabeled 5-gate sequence reached S_avg < {tol}; best {best.terminal_s_avg:.3e} "
        f"with permutation {best.permutation}")


def universal_4q_cnot_form(psi):
    """Three locally optimal gates plus two CNOTs for a 4-qubit state.

    The first layer diagonalizes pairs (0,1) and (2,3). The rows of the (2,3)
    gate are re-phased so the state becomes ``sum_a L_a |a>|a>`` with real
    Schmidt coefficients; the two CNOTs then factor out qubits 0 and 1 and
    the final gate on (2,3) is real orthogonal with unit determinant.
    """
    psi = _require(psi, 4)
    circ = Circuit(4, entropies_per_step=[avg_entanglement(psi)])

    psi, g12 = locally_optimal_step(psi, (0, 1))
    circ.append((0, 1), g12, GENERAL, s_avg=avg_entanglement(psi))

    _, g34 = spectral_gates(rdm_pairs(psi[None], 2, 3))
    g34 = g34[0]
    trial = apply_gates(psi[None], g34[None], 2, 3)[0].reshape(4, 4)
    coeff = np.diagonal(trial)
    mag = np.abs(coeff)
    phase = np.where(mag > 1e-12, coeff.conj() / np.where(mag > 0, mag, 1), 1.0)
    g34 = phase[:, None] * g34
    psi = apply_gates(psi[None], g34[None], 2, 3)[0]
    circ.append((2, 3), g34, GENERAL, s_avg=avg_entanglement(psi))

    for control, target in ((2, 0), (3, 1)):
        psi = apply_gates(psi[None], CNOT[None], control, target)[0]
        circ.append((control, target), CNOT, KIND_CNOT, s_avg=avg_entanglement(psi))

    _, g = spectral_gates(rdm_pairs(psi[None], 2, 3))
    g = g[0]
    if np.max(np.abs(g.imag)) < 1e-9:
        g = g.real.astype(complex)
        if np.linalg.det(g.real) < 0:
            # any eigenvector may change sign; the last one belongs to the smallest eigenvalue
            g[3] *= -1
        kind = REAL_ORTHOGONAL
    else:
        kind = GENERAL
    psi = apply_gates(psi[None], g[None], 2, 3)[0]
    circ.append((2, 3), g, kind, s_avg=avg_entanglement(psi))
    return circ


def cnot_budget(circuit):
    """Upper bound on CNOTs: 1 per CNOT, 2 per real rotation in SO(4), 3 otherwise."""
    total = 0
    for op in circuit.gates:
        if op.kind == KIND_CNOT:
            total += 1
        elif op.kind == REAL_ORTHOGONAL:
            m = op.matrix
            if np.max(np.abs(m.imag)) > 1e-9 or np.linalg.det(m.real) < 0:
                total += 3
            else:
                total += 2
        else:
            total += 3
    return total
