"""Exact pure-state and density-matrix simulation for L-qubit systems.

States are plain complex128 numpy vectors of length ``2**L``. Qubits are
indexed from 0 and the amplitude index is big-endian: qubit 0 owns the most
significant bit, so ``psi.reshape((2,) * L)[b0, b1, ..., b_{L-1}]`` is the
amplitude of ``|b0 b1 ... b_{L-1}>``.

Entropies use the natural logarithm throughout.
"""
from itertools import combinations

import numpy as np

NORM_TOL = 1e-10
UNITARY_TOL = 1e-10
PSD_TOL = 1e-9

SWAP = np.array([[1, 0, 0, 0],
                 [0, 0, 1, 0],
                 [0, 1, 0, 0],
                 [0, 0, 0, 1]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0],
                 [0, 1, 0, 0],
                 [0, 0, 0, 1],
                 [0, 0, 1, 0]], dtype=complex)


# ---------------------------------------------------------------------------
# Pair bookkeeping shared by observations and actions
# ---------------------------------------------------------------------------

def pairs(L):
    """Unordered qubit pairs ``(i, j)``, ``i < j``, in lexicographic order.

    The position of a pair in this list is both its action index and the
    index of its observation token.
    """
    return list(combinations(range(L), 2))


def pair_index(i, j, L):
    """Inverse of :func:`pairs`."""
    if i > j:
        i, j = j, i
    if not (0 <= i < j < L):
        raise ValueError(f"invalid pair ({i}, {j}) for L={L}")
    return i * L - i * (i + 1) // 2 + (j - i - 1)


def n_pairs(L):
    return L * (L - 1) // 2


def pair_permutation(perm):
    """Token reindexing induced by a qubit permutation.

    If ``new = permute_qubits(psi, perm)`` then
    ``obs_encode(new) == obs_encode(psi)[pair_permutation(perm)]``.
    """
    perm = list(perm)
    L = len(perm)
    return np.array([pair_index(perm[a], perm[b], L) for a, b in pairs(L)])


# ---------------------------------------------------------------------------
# Construction and validation
# ---------------------------------------------------------------------------

def num_qubits(psi):
    dim = np.shape(psi)[-1]
    L = int(dim).bit_length() - 1
    if L < 1 or 2 ** L != dim:
        raise ValueError(f"state dimension {dim} is not a power of two")
    return L


def as_state(amplitudes, normalize=False):
    """Validate and return a state vector as complex128."""
    psi = np.asarray(amplitudes, dtype=complex).ravel()
    num_qubits(psi)
    norm = np.linalg.norm(psi)
    if normalize:
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return psi / norm
    if abs(norm ** 2 - 1) > NORM_TOL:
        raise ValueError(f"state is not normalized (|psi|^2 = {norm ** 2:.3e})")
    return psi


def basis_state(bits):
    """Computational basis state, e.g. ``basis_state('0110')``."""
    bits = [int(b) for b in bits]
    psi = np.zeros(2 ** len(bits), dtype=complex)
    psi[int("".join(map(str, bits)), 2) if bits else 0] = 1.0
    return psi


def product(*states):
    """Tensor product; the first argument owns the leading qubits."""
    out = np.ones(1, dtype=complex)
    for s in states:
        out = np.kron(out, s)
    return out


def bell():
    return np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


def ghz(L):
    psi = np.zeros(2 ** L, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return psi


def w_state(L):
    psi = np.zeros(2 ** L, dtype=complex)
    for q in range(L):
        psi[1 << (L - 1 - q)] = 1 / np.sqrt(L)
    return psi


def haar_random(n, rng):
    """Haar-random ``n``-qubit pure state (normalized complex Gaussian)."""
    z = rng.standard_normal(2 ** n) + 1j * rng.standard_normal(2 ** n)
    return z / np.linalg.norm(z)


def haar_unitary(dim, rng):
    """Haar-random unitary via QR with phase correction."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def block_sizes(L, p, rng):
    """Sizes of the Haar blocks drawn by :func:`generate_initial`."""
    if not 1 <= p <= L:
        raise ValueError(f"minimum support p={p} must satisfy 1 <= p <= L={L}")
    q = int(rng.integers(p, L + 1))
    sizes = [q]
    r = L - q
    while r > p:
        q = int(rng.integers(p, r + 1))
        sizes.append(q)
        r -= q
    if r > 0:
        sizes.append(r)
    return sizes


def generate_initial(L, p, rng):
    """Product of Haar-random blocks with randomly drawn support sizes.

    The first block has a size drawn uniformly from ``[p, L]``; further
    blocks are drawn from ``[p, r]`` while the remainder ``r`` exceeds ``p``,
    and whatever remains (possibly fewer than ``p`` qubits) forms the last
    block.
    """
    return product(*(haar_random(q, rng) for q in block_sizes(L, p, rng)))


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------

def _check_pair(pair, L):
    i, j = pair
    if not (0 <= i < L and 0 <= j < L):
        raise ValueError(f"qubit indices {pair} out of range for L={L}")
    if i == j:
        raise ValueError(f"gate needs two distinct qubits, got {pair}")
    return int(i), int(j)


def is_unitary(u, tol=UNITARY_TOL):
    u = np.asarray(u)
    return np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=tol, rtol=0)


def apply_gate(psi, gate, pair):
    """Apply a 4x4 gate to qubits ``pair = (i, j)``; ``i`` is the gate's high bit."""
    psi = np.asarray(psi, dtype=complex)
    L = num_qubits(psi)
    i, j = _check_pair(pair, L)
    gate = np.asarray(gate, dtype=complex)
    if gate.shape != (4, 4):
        raise ValueError(f"gate must be 4x4, got {gate.shape}")
    if not is_unitary(gate):
        raise ValueError("gate is not unitary")
    return apply_gates(psi[None], gate[None], i, j)[0]


def _front(psis, i, j):
    """View a batch of states as ``(B, 4, rest)`` with qubits (i, j) leading."""
    B = psis.shape[0]
    L = num_qubits(psis)
    t = psis.reshape((B,) + (2,) * L)
    t = np.moveaxis(t, (i + 1, j + 1), (1, 2))
    return t.reshape(B, 4, -1)


def _back(m, i, j, L):
    B = m.shape[0]
    t = m.reshape((B,) + (2,) * L)
    t = np.moveaxis(t, (1, 2), (i + 1, j + 1))
    return t.reshape(B, 2 ** L)


def apply_gates(psis, gates, i, j):
    """Batched, unchecked gate application: ``gates[b]`` acts on ``psis[b]``."""
    L = num_qubits(psis)
    return _back(np.matmul(gates, _front(psis, i, j)), i, j, L)


def permute_qubits(psi, perm):
    """Relabel qubits: qubit ``k`` of the result is qubit ``perm[k]`` of ``psi``.

    Composition: ``permute_qubits(permute_qubits(psi, p1), p2)`` equals
    ``permute_qubits(psi, np.asarray(p1)[p2])``.
    """
    psi = np.asarray(psi, dtype=complex)
    L = num_qubits(psi)
    perm = [int(k) for k in perm]
    if sorted(perm) != list(range(L)):
        raise ValueError(f"{perm} is not a permutation of {L} qubits")
    return np.transpose(psi.reshape((2,) * L), perm).reshape(-1)


# ---------------------------------------------------------------------------
# Reduced density matrices and entropies
# ---------------------------------------------------------------------------

def rdm_pairs(psis, i, j):
    """Batched ordered two-qubit RDMs ``rho^(i,j)``, shape ``(B, 4, 4)``."""
    m = _front(psis, i, j)
    return m @ m.conj().transpose(0, 2, 1)


def rdm_pair(psi, i, j):
    """Two-qubit reduced density matrix of qubits ``(i, j)`` in that order."""
    psi = np.asarray(psi, dtype=complex)
    _check_pair((i, j), num_qubits(psi))
    return rdm_pairs(psi[None], i, j)[0]


def rdm_singles(psis, i):
    """Batched single-qubit RDMs, shape ``(B, 2, 2)``."""
    B = psis.shape[0]
    L = num_qubits(psis)
    t = np.moveaxis(psis.reshape((B,) + (2,) * L), i + 1, 1).reshape(B, 2, -1)
    return t @ t.conj().transpose(0, 2, 1)


def rdm_single(psi, i):
    psi = np.asarray(psi, dtype=complex)
    if not 0 <= i < num_qubits(psi):
        raise ValueError(f"qubit {i} out of range")
    return rdm_singles(psi[None], i)[0]


def binary_entropy(x):
    """``h(x) = -x ln x - (1-x) ln(1-x)`` with ``0 ln 0 = 0``; vectorized."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    y = 1.0 - x
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(x > 0, -x * np.log(np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(y > 0, -y * np.log(np.where(y > 0, y, 1.0)), 0.0)
    return a + b


def _qubit_entropy_from_rdm1(rho):
    # closed-form eigenvalues of a 2x2 Hermitian matrix, batched over leading axes
    a = rho[..., 0, 0].real
    d = rho[..., 1, 1].real
    b = rho[..., 0, 1]
    tr = a + d
    r = np.sqrt((a - d) ** 2 + 4 * np.abs(b) ** 2)
    return binary_entropy((tr + r) / 2)


def qubit_entropies(psis):
    """Single-qubit entropies for a batch of states, shape ``(B, L)``."""
    psis = np.atleast_2d(psis)
    L = num_qubits(psis)
    return np.stack([_qubit_entropy_from_rdm1(rdm_singles(psis, q)) for q in range(L)], axis=1)


def single_qubit_entropies(psi):
    return qubit_entropies(np.asarray(psi, dtype=complex)[None])[0]


def entropy(dm):
    """Von Neumann entropy in nats of any density matrix."""
    dm = np.asarray(dm, dtype=complex)
    if dm.ndim != 2 or dm.shape[0] != dm.shape[1]:
        raise ValueError("density matrix must be square")
    if not np.allclose(dm, dm.conj().T, atol=PSD_TOL, rtol=0):
        raise ValueError("density matrix is not Hermitian")
    lam = np.linalg.eigvalsh((dm + dm.conj().T) / 2)
    if lam.min() < -PSD_TOL:
        raise ValueError(f"density matrix is not PSD (min eigenvalue {lam.min():.3e})")
    lam = np.clip(lam, 0.0, 1.0)
    nz = lam[lam > 0]
    return float(-np.sum(nz * np.log(nz)))


def avg_entanglement(psi):
    """Mean single-qubit von Neumann entropy."""
    return float(np.mean(single_qubit_entropies(psi)))


def avg_entanglements(psis):
    return qubit_entropies(psis).mean(axis=1)


def symmetrize_observation(psi):
    """Symmetrized pair RDMs ``(rho^(i,j) + rho^(j,i)) / 2`` for all ``i < j``.

    Returns an array of shape ``(L(L-1)/2, 4, 4)`` in :func:`pairs` order.
    """
    psi = np.asarray(psi, dtype=complex)
    return symmetrized_rdms(psi[None])[0]


def swap_order(rho):
    """``rho^(j,i)`` from ``rho^(i,j)``: swap rows and columns 1 and 2."""
    idx = [0, 2, 1, 3]
    return rho[..., idx, :][..., :, idx]


def symmetrized_rdms(psis):
    L = num_qubits(psis)
    out = np.empty((psis.shape[0], n_pairs(L), 4, 4), dtype=complex)
    for t, (i, j) in enumerate(pairs(L)):
        rho = rdm_pairs(psis, i, j)
        out[:, t] = (rho + swap_order(rho)) / 2
    return out


# ---------------------------------------------------------------------------
# Two-qubit entanglement measures
# ---------------------------------------------------------------------------

_YY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def concurrence(rho):
    """Wootters concurrence from the eigenvalues of ``rho (Y x Y) rho* (Y x Y)``."""
    rho = np.asarray(rho, dtype=complex)
    R = rho @ _YY @ rho.conj() @ _YY
    ev = np.clip(np.linalg.eigvals(R).real, 0.0, None)
    mu = np.sort(np.sqrt(ev))[::-1]
    return float(max(0.0, mu[0] - mu[1] - mu[2] - mu[3]))


def entanglement_of_formation(rho):
    c = min(concurrence(rho), 1.0)
    return float(binary_entropy((1 + np.sqrt(1 - c ** 2)) / 2))


def avg_entanglement_of_formation(rdms):
    """Mean E_f over a collection of pair RDMs, or over all pairs of a state vector."""
    rdms = np.asarray(rdms)
    if rdms.ndim == 1:
        psi = rdms
        L = num_qubits(psi)
        rdms = [rdm_pair(psi, i, j) for i, j in pairs(L)]
    return float(np.mean([entanglement_of_formation(r) for r in rdms]))


def schmidt_values(psi, subset, return_vectors=False):
    """Schmidt coefficients across the cut ``subset | rest`` (descending).

    With ``return_vectors=True`` also returns the factor matrices ``(u, vh)``
    from the SVD of the reshaped amplitude matrix: columns of ``u`` are the
    Schmidt vectors of ``subset``, rows of ``vh`` those of the complement.
    """
    psi = np.asarray(psi, dtype=complex)
    L = num_qubits(psi)
    subset = [int(q) for q in subset]
    rest = [q for q in range(L) if q not in subset]
    m = np.transpose(psi.reshape((2,) * L), subset + rest).reshape(2 ** len(subset), -1)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    if return_vectors:
        return s, u, vh
    return s


# ---------------------------------------------------------------------------
# Density matrices
# ---------------------------------------------------------------------------

def dm_from_state(psi):
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def _dm_qubits(dm):
    dm = np.asarray(dm, dtype=complex)
    return num_qubits(dm[0])


def dm_apply_gate(dm, gate, pair):
    """``U rho U^dagger`` with ``U`` acting on ``pair``."""
    dm = np.asarray(dm, dtype=complex)
    L = _dm_qubits(dm)
    i, j = _check_pair(pair, L)
    gate = np.asarray(gate, dtype=complex)
    if not is_unitary(gate):
        raise ValueError("gate is not unitary")
    # columns as a batch of vectors, then rows
    left = apply_gates(dm.T.copy(), np.broadcast_to(gate, (dm.shape[0], 4, 4)), i, j).T
    return apply_gates(left.conj(), np.broadcast_to(gate, (dm.shape[0], 4, 4)), i, j).T


def depolarize(dm, lam):
    """Global depolarizing channel ``(1 - lam) rho + lam I / 2^L``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"noise strength {lam} outside [0, 1]")
    dm = np.asarray(dm, dtype=complex)
    return (1 - lam) * dm + lam * np.eye(dm.shape[0]) / dm.shape[0]


def dm_rdm_pair(dm, i, j):
    """Ordered two-qubit marginal of a full density matrix."""
    dm = np.asarray(dm, dtype=complex)
    L = _dm_qubits(dm)
    i, j = _check_pair((i, j), L)
    t = dm.reshape((2,) * (2 * L))
    rest = [q for q in range(L) if q not in (i, j)]
    order = [i, j] + rest + [L + i, L + j] + [L + q for q in rest]
    t = np.transpose(t, order).reshape(4, 2 ** (L - 2), 4, 2 ** (L - 2))
    return np.einsum("arbr->ab", t)


def dm_rdm_single(dm, i):
    dm = np.asarray(dm, dtype=complex)
    L = _dm_qubits(dm)
    t = dm.reshape((2,) * (2 * L))
    rest = [q for q in range(L) if q != i]
    order = [i] + rest + [L + i] + [L + q for q in rest]
    t = np.transpose(t, order).reshape(2, 2 ** (L - 1), 2, 2 ** (L - 1))
    return np.einsum("arbr->ab", t)
