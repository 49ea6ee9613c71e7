"""Shared test oracles and generators."""
import numpy as np


def random_rdm(rng, rank=4):
    """Random two-qubit density matrix of the given rank."""
    z = rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))
    rho = z @ z.conj().T
    return rho / np.trace(rho).real


def brute_rdm(psi, keep):
    """Partial trace by explicit summation over basis indices (slow, independent oracle)."""
    L = int(np.log2(psi.size))
    keep = list(keep)
    d = 2 ** len(keep)
    rho = np.zeros((d, d), dtype=complex)
    for a in range(psi.size):
        for b in range(psi.size):
            ba = [(a >> (L - 1 - q)) & 1 for q in range(L)]
            bb = [(b >> (L - 1 - q)) & 1 for q in range(L)]
            if any(ba[q] != bb[q] for q in range(L) if q not in keep):
                continue
            r = int("".join(str(ba[q]) for q in keep), 2)
            c = int("".join(str(bb[q]) for q in keep), 2)
            rho[r, c] += psi[a] * np.conj(psi[b])
    return rho


def full_operator(gate, i, j, L):
    """Dense 2^L x 2^L matrix of a two-qubit gate on ordered qubits (i, j)."""
    dim = 2 ** L
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        bits = [(col >> (L - 1 - q)) & 1 for q in range(L)]
        sub = 2 * bits[i] + bits[j]
        for row_sub in range(4):
            amp = gate[row_sub, sub]
            if amp == 0:
                continue
            nb = list(bits)
            nb[i], nb[j] = row_sub >> 1, row_sub & 1
            out[int("".join(map(str, nb)), 2), col] += amp
    return out


def shannon(p):
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def gae_oracle(r, v, term, trunc, tv, gamma, lam):
    """Direct double sum over each step's remaining episode inside the segment."""
    B, T = r.shape
    adv = np.zeros((B, T))
    for b in range(B):
        for t in range(T):
            total, w = 0.0, 1.0
            for k in range(t, T):
                if term[b, k]:
                    nv = 0.0
                elif trunc[b, k]:
                    nv = tv[b, k]
                else:
                    nv = v[b, k + 1]
                total += w * (r[b, k] + gamma * nv - v[b, k])
                if term[b, k] or trunc[b, k]:
                    break
                w *= gamma * lam
            adv[b, t] = total
    return adv
