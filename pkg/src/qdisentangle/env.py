"""Batched disentangling environment.

Each of the ``B`` slots holds an ``L``-qubit pure state. An action is the
index of an unordered qubit pair; the environment applies the locally
optimal gate for that pair, scores the change in single-qubit entropies and
re-initializes slots whose episode ended.
"""
from dataclasses import dataclass, field, asdict

import numpy as np

from .state import (
    _qubit_entropy_from_rdm1,
    generate_initial,
    n_pairs,
    num_qubits,
    pairs,
    qubit_entropies,
    rdm_singles,
    swap_order,
    symmetrized_rdms,
)
from .synthesis import apply_actions

RATIO_GUARD = 1e-12
TOKEN_DIM = 32

# per-L defaults: (B, T_trunc, eps, p)
ENV_DEFAULTS = {
    3: (32, 10, 1e-3, 2),
    4: (64, 8, 1e-3, 2),
    5: (128, 40, 1e-3, 2),
    6: (512, 90, 1e-3, 3),
}


@dataclass
class EnvConfig:
    L: int = 4
    B: int = 64
    eps: float = 1e-3
    T_trunc: int = 8
    p: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.T_trunc < 1:
            raise ValueError("T_trunc must be at least 1")
        if not 1 <= self.p <= self.L:
            raise ValueError(f"need 1 <= p <= L, got p={self.p}, L={self.L}")
        if self.B < 1:
            raise ValueError("batch size must be positive")

    @classmethod
    def for_L(cls, L, **overrides):
        if L not in ENV_DEFAULTS:
            raise ValueError(f"no default environment settings for L={L}")
        B, T, eps, p = ENV_DEFAULTS[L]
        kw = dict(L=L, B=B, T_trunc=T, eps=eps, p=p)
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self):
        return asdict(self)


def reward(entropies_before, entropies_after, eps):
    """Relative entropy reduction summed over qubits minus the count still entangled.

    Works on a single transition (length-L vectors) or a batch ``(B, L)``.
    """
    s0 = np.asarray(entropies_before, dtype=float)
    s1 = np.asarray(entropies_after, dtype=float)
    denom = np.maximum(s0, s1)
    safe = denom >= RATIO_GUARD
    ratio = np.where(safe, (s0 - s1) / np.where(safe, denom, 1.0), 0.0)
    r = ratio.sum(axis=-1) - (s1 > eps).sum(axis=-1)
    return float(r) if np.ndim(r) == 0 else r


def is_terminal(psi, eps):
    """True iff the mean single-qubit entropy is strictly below ``eps``."""
    psi = np.asarray(psi, dtype=complex)
    return bool(qubit_entropies(psi[None]).mean() < eps)


def _flatten_tokens(rho):
    flat = rho.reshape(rho.shape[:-2] + (16,))
    return np.concatenate([flat.real, flat.imag], axis=-1)


def obs_encode_batch(psis):
    """Tokens of shape ``(B, L(L-1)/2, 32)``: real parts then imaginary parts, row-major."""
    return _flatten_tokens(symmetrized_rdms(np.atleast_2d(psis)))


def encode_rdms(rhos):
    """Tokens from ordered pair RDMs ``(..., n_pairs, 4, 4)``, symmetrized first."""
    rhos = np.asarray(rhos, dtype=complex)
    return _flatten_tokens((rhos + swap_order(rhos)) / 2)


def obs_encode(psi):
    return obs_encode_batch(np.asarray(psi, dtype=complex)[None])[0]


def obs_decode(tokens):
    """Inverse of :func:`obs_encode`: tokens ``(..., 32)`` to matrices ``(..., 4, 4)``."""
    tokens = np.asarray(tokens, dtype=float)
    m = tokens[..., :16] + 1j * tokens[..., 16:]
    return m.reshape(tokens.shape[:-1] + (4, 4))


@dataclass
class StepBatch:
    observation: np.ndarray
    reward: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    info: dict = field(default_factory=dict)


def slot_rng(seed, stream, slot):
    """Independent generator for ``(seed, stream, slot)`` via counter-based spawn keys."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, slot)))


class DisentangleEnv:
    """Vectorized environment with per-slot auto-reset.

    ``initial`` optionally replaces the random initial-state sampler; it is
    called as ``initial(rng)`` with the slot's generator.
    """

    def __init__(self, config, stream=0, initial=None):
        self.config = config
        self.L = config.L
        self.n_actions = n_pairs(config.L)
        self.pairs = pairs(config.L)
        self.initial = initial
        self.rngs = [slot_rng(config.seed, stream, b) for b in range(config.B)]
        self.states = None
        self.steps = np.zeros(config.B, dtype=np.int64)
        self.entropies = None

    def _sample(self, b):
        rng = self.rngs[b]
        if self.initial is not None:
            return np.asarray(self.initial(rng), dtype=complex)
        return generate_initial(self.L, self.config.p, rng)

    def reset(self):
        self.states = np.stack([self._sample(b) for b in range(self.config.B)])
        self.steps[:] = 0
        self.entropies = qubit_entropies(self.states)
        return self.observe()

    def set_states(self, states):
        """Install explicit states in every slot and zero the step counters."""
        states = np.atleast_2d(np.asarray(states, dtype=complex))
        if states.shape != (self.config.B, 2 ** self.L):
            raise ValueError(f"expected states of shape {(self.config.B, 2 ** self.L)}")
        self.states = states.copy()
        self.steps[:] = 0
        self.entropies = qubit_entropies(self.states)
        return self.observe()

    def observe(self):
        return obs_encode_batch(self.states)

    def s_avg(self):
        return self.entropies.mean(axis=1)

    def step(self, actions):
        actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        if actions.shape[0] != self.config.B:
            raise ValueError(f"expected {self.config.B} actions, got {actions.shape[0]}")
        if actions.min() < 0 or actions.max() >= self.n_actions:
            raise ValueError(f"action index out of range [0, {self.n_actions})")
        before = self.entropies.copy()
        after = before.copy()
        for a in np.unique(actions):
            idx = np.nonzero(actions == a)[0]
            i, j = self.pairs[a]
            new, _, _ = apply_actions(self.states[idx], i, j)
            self.states[idx] = new
            # only the acted-on qubits change
            after[idx, i] = _qubit_entropy_from_rdm1(rdm_singles(new, i))
            after[idx, j] = _qubit_entropy_from_rdm1(rdm_singles(new, j))
        self.entropies = after
        self.steps += 1
        r = reward(before, after, self.config.eps)
        terminated = after.mean(axis=1) < self.config.eps
        truncated = (~terminated) & (self.steps >= self.config.T_trunc)
        info = {
            "entropies": after.copy(),
            "episode_step": self.steps.copy(),
        }
        done = terminated | truncated
        if done.any():
            info["final_observation"] = obs_encode_batch(self.states)
            for b in np.nonzero(done)[0]:
                self.states[b] = self._sample(b)
                self.steps[b] = 0
            self.entropies[done] = qubit_entropies(self.states[done])
        return StepBatch(self.observe(), r, terminated, truncated, info)

    # checkpoint support
    def get_state(self):
        return {
            "states": self.states.copy(),
            "steps": self.steps.copy(),
            "entropies": self.entropies.copy(),
            "rngs": [r.bit_generator.state for r in self.rngs],
        }

    def set_state(self, snap):
        self.states = np.asarray(snap["states"], dtype=complex).copy()
        self.steps = np.asarray(snap["steps"], dtype=np.int64).copy()
        for r, s in zip(self.rngs, snap["rngs"]):
            r.bit_generator.state = s
        if "entropies" in snap:
            # restore rather than recompute: batched reductions are shape dependent in the last bit
            self.entropies = np.asarray(snap["entropies"], dtype=float).copy()
        else:
            self.entropies = qubit_entropies(self.states)
