import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdisentangle.env import (
    DisentangleEnv,
    EnvConfig,
    ENV_DEFAULTS,
    is_terminal,
    obs_decode,
    obs_encode,
    obs_encode_batch,
    reward,
)
from qdisentangle.state import (
    avg_entanglement,
    basis_state,
    bell,
    ghz,
    haar_random,
    pair_index,
    pair_permutation,
    pairs,
    permute_qubits,
    product,
    rdm_pair,
    single_qubit_entropies,
    swap_order,
)
from qdisentangle.synthesis import apply_action

LN2 = np.log(2)
EPS = 1e-3


def test_reward_examples():
    assert reward([LN2, LN2, 0, 0], [0, 0, 0, 0], EPS) == pytest.approx(2)
    assert reward([0, 0, 0], [0, 0, 0], EPS) == 0
    s = [0.3, 0.2, 0.5, 0.1]
    assert reward(s, s, EPS) == pytest.approx(-4)


def test_reward_ratio_guard():
    # both entropies below the guard contribute nothing even if they differ
    assert reward([1e-13, 0.0], [0.0, 0.0], EPS) == 0


def test_reward_batched():
    before = np.array([[LN2, LN2, 0], [0.5, 0.5, 0.5]])
    after = np.array([[0, 0, 0], [0.5, 0.5, 0.5]])
    assert np.allclose(reward(before, after, EPS), [2, -3])


def test_is_terminal_examples():
    assert is_terminal(basis_state("000"), EPS)
    assert not is_terminal(ghz(4), EPS)
    psi = product(haar_random(2, np.random.default_rng(3)), basis_state("0"))
    s = avg_entanglement(psi)
    assert not is_terminal(psi, s)  # strict inequality
    assert is_terminal(psi, np.nextafter(s, 1))


def test_config_defaults_and_validation():
    assert EnvConfig.for_L(4).B == 64 and EnvConfig.for_L(4).T_trunc == 8
    assert EnvConfig.for_L(6).p == 3 and EnvConfig.for_L(5).T_trunc == 40
    assert set(ENV_DEFAULTS) == {3, 4, 5, 6}
    for bad in (dict(eps=0), dict(T_trunc=0), dict(p=5), dict(B=0)):
        with pytest.raises(ValueError):
            EnvConfig(L=4, **bad)


# --- observations ---------------------------------------------------------------

def test_obs_shape_and_decode(rng):
    psi = haar_random(4, rng)
    tok = obs_encode(psi)
    assert tok.shape == (6, 32)
    m = obs_decode(tok)
    assert np.allclose(m, m.conj().transpose(0, 2, 1), atol=1e-12)
    for t, (i, j) in enumerate(pairs(4)):
        r = rdm_pair(psi, i, j)
        assert np.allclose(m[t], (r + swap_order(r)) / 2, atol=1e-14)
        assert np.array_equal(tok[t, :16], m[t].real.ravel())
        assert np.array_equal(tok[t, 16:], m[t].imag.ravel())


def test_obs_token_order_agrees_with_action_order():
    for L in (3, 4, 5, 6):
        for t, (i, j) in enumerate(pairs(L)):
            assert pair_index(i, j, L) == t


def test_obs_permutation_relabels_tokens(rng):
    for _ in range(20):
        psi = haar_random(5, rng)
        perm = rng.permutation(5)
        # explicit pair-relabel oracle
        sigma = [pairs(5).index(tuple(sorted((perm[a], perm[b])))) for a, b in pairs(5)]
        assert list(pair_permutation(perm)) == sigma
        assert np.allclose(obs_encode(permute_qubits(psi, perm)), obs_encode(psi)[sigma], atol=1e-12)


# --- stepping ----------------------------------------------------------------------

def _env(L=4, B=4, **kw):
    cfg = EnvConfig.for_L(L, B=B, **kw)
    env = DisentangleEnv(cfg)
    env.reset()
    return env


def test_step_bell_finishes():
    env = _env(B=1)
    env.set_states(product(bell(), basis_state("00"))[None])
    res = env.step([pair_index(0, 1, 4)])
    assert res.reward[0] == pytest.approx(2)
    assert res.terminated[0] and not res.truncated[0]
    assert "final_observation" in res.info


def test_step_truncation_resets(rng):
    env = _env(B=2, T_trunc=2)
    psi = haar_random(4, rng)
    env.set_states(np.stack([psi, psi]))
    env.step([0, 0])
    res = env.step([0, 0])
    # two gates on the same pair cannot disentangle a Haar state
    assert res.truncated.all() and not res.terminated.any()
    assert np.array_equal(env.steps, [0, 0])
    assert not np.allclose(res.info["final_observation"], res.observation)
    assert np.array_equal(res.info["episode_step"], [2, 2])


def test_step_rejects_bad_actions():
    env = _env(B=2)
    with pytest.raises(ValueError):
        env.step([0, 6])
    with pytest.raises(ValueError):
        env.step([0])


def test_identical_slots_identical_results(rng):
    psi = haar_random(4, rng)
    env = DisentangleEnv(EnvConfig.for_L(4, B=64), initial=lambda r: psi)
    env.reset()
    res = env.step(np.full(64, 3))
    assert np.all(res.observation == res.observation[0])
    assert np.all(res.reward == res.reward[0])


def test_same_seed_same_trajectory():
    a, b = _env(L=5, B=8, seed=7), _env(L=5, B=8, seed=7)
    assert np.array_equal(a.states, b.states)
    acts = np.random.default_rng(0).integers(0, 10, size=(30, 8))
    for row in acts:
        ra, rb = a.step(row), b.step(row)
        assert np.array_equal(ra.observation, rb.observation)
        assert np.array_equal(ra.reward, rb.reward)


def test_slot_independence():
    a, b = _env(L=4, B=6, seed=3, T_trunc=3), _env(L=4, B=6, seed=3, T_trunc=3)
    rng = np.random.default_rng(1)
    for _ in range(20):
        acts = rng.integers(0, 6, size=6)
        alt = acts.copy()
        alt[2] = (alt[2] + 1) % 6
        ra, rb = a.step(acts), b.step(alt)
        keep = np.arange(6) != 2
        assert np.array_equal(ra.observation[keep], rb.observation[keep])
        assert np.array_equal(ra.reward[keep], rb.reward[keep])
        assert np.array_equal(ra.terminated[keep], rb.terminated[keep])
        assert np.array_equal(ra.truncated[keep], rb.truncated[keep])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([3, 4, 5]))
def test_reward_bound_and_termination_consistency(seed, L):
    env = _env(L=L, B=8, seed=seed)
    rng = np.random.default_rng(seed)
    for _ in range(15):
        before = env.states.copy()
        acts = rng.integers(0, L * (L - 1) // 2, size=8)
        res = env.step(acts)
        n_ent = (res.info["entropies"] > env.config.eps).sum(axis=1)
        assert np.all(res.reward <= 2 - n_ent + 1e-12)
        for b in range(8):
            new, _, _ = apply_action(before[b], pairs(L)[acts[b]])
            assert np.allclose(single_qubit_entropies(new), res.info["entropies"][b], atol=1e-12)
            if res.terminated[b]:
                assert avg_entanglement(new) < env.config.eps


def test_state_snapshot_roundtrip():
    env = _env(L=4, B=4, seed=5)
    env.step([0, 1, 2, 3])
    snap = env.get_state()
    acts = [5, 4, 3, 2]
    r1 = env.step(acts)
    env2 = DisentangleEnv(env.config)
    env2.set_state(snap)
    r2 = env2.step(acts)
    assert np.array_equal(r1.observation, r2.observation)
    assert np.array_equal(r1.reward, r2.reward)


def test_observe_matches_encoding():
    env = _env(L=4, B=3)
    assert np.array_equal(env.observe(), obs_encode_batch(env.states))
