import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdisentangle.bench import GreedyAgent, run_episode
from qdisentangle.state import (
    avg_entanglement,
    basis_state,
    bell,
    dm_from_state,
    entanglement_of_formation,
    haar_random,
    rdm_pair,
)
from qdisentangle.tomography import (
    LABELS,
    PAULI_INDEX,
    ObservationGreedyAgent,
    bell_bell_state,
    exact_expectations,
    expectations,
    fit_kappa,
    measure_rdm,
    noisy_pipeline_run,
    reconstruct,
    sample_pair_measurements,
    simplex_project,
)

LN2 = np.log(2)


def _label(name):
    return PAULI_INDEX.index((LABELS.index(name[0]), LABELS.index(name[1])))


def _kkt_oracle(v):
    """Simplex projection by enumerating supports and solving the equality-constrained problem."""
    n = len(v)
    best, best_obj = None, np.inf
    for r in range(1, n + 1):
        for supp in itertools.combinations(range(n), r):
            x = np.zeros(n)
            idx = list(supp)
            x[idx] = v[idx] + (1 - v[idx].sum()) / r
            if np.all(x >= -1e-15):
                obj = np.sum((x - v) ** 2)
                if obj < best_obj:
                    best, best_obj = x, obj
    return best


def _random_dm(rng, rank=None):
    rank = rank or int(rng.integers(1, 5))
    a = rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


# --- measurement ----------------------------------------------------------------------

def test_zz_setting_on_00():
    rec = measure_rdm(rdm_pair(basis_state("00"), 0, 1), 1000, np.random.default_rng(0))
    zz = 8  # settings ordered (X,Y,Z) x (X,Y,Z)
    assert list(rec.counts[zz]) == [1000, 0, 0, 0]
    assert np.all(rec.counts.sum(axis=1) == 1000)


def test_maximally_mixed_counts():
    shots = 10_000
    rec = measure_rdm(np.eye(4) / 4, shots, np.random.default_rng(1))
    sigma = np.sqrt(shots * 0.25 * 0.75)  # binomial
    assert np.all(np.abs(rec.counts - shots / 4) <= 4 * sigma)


def test_exact_mode_and_errors():
    dm = dm_from_state(bell())
    rec = sample_pair_measurements(dm, (0, 1), 0, np.random.default_rng(0))
    assert rec.counts is None and np.array_equal(rec.frequencies, rec.probs)
    for bad in (-1, None):
        with pytest.raises(ValueError):
            sample_pair_measurements(dm, (0, 1), bad, np.random.default_rng(0))


def test_pair_marginal_is_measured(rng):
    psi = haar_random(4, rng)
    rec = sample_pair_measurements(dm_from_state(psi), (1, 3), 0, rng)
    assert rec.pair == (1, 3)
    assert np.allclose(expectations(rec), exact_expectations(rdm_pair(psi, 1, 3)), atol=1e-12)


# --- expectations -----------------------------------------------------------------------

def test_bell_expectations():
    m = expectations(measure_rdm(rdm_pair(bell(), 0, 1), 0, None))
    assert m[_label("XX")] == pytest.approx(1)
    assert m[_label("ZZ")] == pytest.approx(1)
    assert m[_label("YY")] == pytest.approx(-1)
    assert np.allclose(np.delete(m, [_label(p) for p in ("XX", "YY", "ZZ")]), 0, atol=1e-12)


def test_00_expectations():
    m = expectations(measure_rdm(rdm_pair(basis_state("00"), 0, 1), 0, None))
    ones = [_label(p) for p in ("ZI", "IZ", "ZZ")]
    assert np.allclose(m[ones], 1)
    assert np.allclose(np.delete(m, ones), 0, atol=1e-12)


def test_exact_mode_matches_trace(rng):
    for _ in range(20):
        rho = _random_dm(rng)
        m = expectations(measure_rdm(rho, 0, None))
        assert np.allclose(m, exact_expectations(rho), atol=1e-12)


def test_sampled_expectations_clt(rng):
    for shots in (100, 10_000):
        for _ in range(20):
            rho = _random_dm(rng)
            m = expectations(measure_rdm(rho, shots, rng))
            assert np.all(np.abs(m) <= 1)
            assert np.all(np.abs(m - exact_expectations(rho)) <= 5 / np.sqrt(shots))


# --- reconstruction ----------------------------------------------------------------------

def test_reconstruct_bell():
    psi = rdm_pair(bell(), 0, 1)
    assert np.allclose(reconstruct(exact_expectations(psi)), psi, atol=1e-10)


def test_reconstruct_zero():
    assert np.allclose(reconstruct(np.zeros(15)), np.eye(4) / 4, atol=1e-14)


def test_reconstruct_negative_eigenvalue(rng):
    q = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))[0]
    mu = (q * np.array([0.6, 0.5, -0.1, 0.0])) @ q.conj().T
    out = reconstruct(exact_expectations(mu))
    assert np.allclose(np.sort(np.linalg.eigvalsh(out))[::-1], [0.55, 0.45, 0, 0], atol=1e-12)
    assert np.allclose(simplex_project([0.6, 0.5, -0.1, 0.0]), [0.55, 0.45, 0, 0], atol=1e-15)


def test_simplex_examples():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    assert np.allclose(simplex_project(p), p, atol=1e-15)
    assert np.allclose(simplex_project(np.full(5, 0.2)), 0.2, atol=1e-15)


def test_simplex_matches_kkt_oracle(rng):
    for _ in range(2000):
        n = int(rng.integers(1, 7))
        v = rng.standard_normal(n) * rng.choice([0.1, 1, 5])
        assert np.allclose(simplex_project(v), _kkt_oracle(v), atol=1e-9)


def test_reconstruct_fixed_point(rng):
    for _ in range(200):
        rho = _random_dm(rng)
        assert np.allclose(reconstruct(exact_expectations(rho)), rho, atol=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=15, max_size=15))
def test_reconstruct_always_physical(m):
    rho = reconstruct(np.array(m))
    assert np.allclose(rho, rho.conj().T, atol=1e-12)
    assert np.trace(rho).real == pytest.approx(1, abs=1e-12)
    assert np.linalg.eigvalsh(rho).min() >= -1e-12


def test_bell_ef_at_1e4_shots():
    rng = np.random.default_rng(7)
    rho = rdm_pair(bell(), 0, 1)
    trials = 200
    good = sum(entanglement_of_formation(reconstruct(expectations(measure_rdm(rho, 10_000, rng))))
               > 0.5 * LN2 for _ in range(trials))
    assert good >= 0.95 * trials


# --- pipeline -------------------------------------------------------------------------------

def test_observation_greedy_matches_greedy(rng):
    from qdisentangle.state import pairs, qubit_entropies
    for _ in range(50):
        psi = haar_random(5, rng)
        rhos = np.stack([rdm_pair(psi, i, j) for i, j in pairs(5)])
        s = qubit_entropies(psi[None])[0]
        assert ObservationGreedyAgent().act_rdms(rhos, s) == GreedyAgent().act(psi)


def test_pipeline_exact_mode_matches_noise_free(rng):
    for L in (4, 5):
        psi = haar_random(L, rng)
        ref = run_episode(GreedyAgent(), psi, max_steps=60)
        rec = noisy_pipeline_run(psi, ObservationGreedyAgent(), 0, 0.0, rng, 60, stop_eps=1e-3)
        assert [tuple(op.pair) for op in ref.circuit.gates] == [tuple(sorted(a)) for a in rec.actions]
        assert np.allclose(rec.exact_s_avg, ref.trace, atol=1e-9)
        assert np.allclose(rec.true_s_avg, rec.exact_s_avg, atol=1e-9)
        assert np.allclose(rec.noisy_s_avg, rec.exact_s_avg, atol=1e-8)


def test_pipeline_bell_bell():
    rng = np.random.default_rng(3)
    psi = bell_bell_state(rng)
    rec = noisy_pipeline_run(psi, ObservationGreedyAgent(), 10_000, 0.0, rng, 2)
    assert len(rec.actions) == 2
    assert rec.noisy_s_avg[-1] < 0.1 * rec.noisy_s_avg[0]
    assert rec.exact_s_avg[-1] < 1e-2


def test_pipeline_full_depolarizing_no_crash(rng):
    rec = noisy_pipeline_run(haar_random(4, rng), ObservationGreedyAgent(), 100, 1.0, rng, 4)
    assert len(rec.actions) == 4
    assert rec.true_s_avg[-1] == pytest.approx(LN2, abs=1e-10)
    assert all(np.isfinite(rec.exact_s_avg))
    assert set(rec.to_dict()) >= {"actions", "noisy_s_avg", "exact_s_avg", "noisy_ef_avg"}


def test_pipeline_measures_touching_pairs_only(monkeypatch):
    from qdisentangle import tomography as tomo
    calls = []

    def spy(dm, pair, shots, rng):
        calls.append(pair)
        return sample_pair_measurements(dm, pair, shots, rng)

    monkeypatch.setattr(tomo, "sample_pair_measurements", spy)
    noisy_pipeline_run(haar_random(5, np.random.default_rng(0)), ObservationGreedyAgent(), 0, 0.0,
                       np.random.default_rng(0), 3)
    assert len(calls) == 10 + 3 * (2 * 5 - 3)


def test_bell_bell_default_layout():
    psi = bell_bell_state()
    assert avg_entanglement(psi) == pytest.approx(LN2)
    # pairs (0,1) and (2,3) are maximally entangled, cross pairs are product
    assert entanglement_of_formation(rdm_pair(psi, 0, 1)) == pytest.approx(LN2)
    assert entanglement_of_formation(rdm_pair(psi, 0, 2)) == pytest.approx(0, abs=1e-10)


# --- kappa ------------------------------------------------------------------------------------

def test_fit_kappa_synthetic():
    n = np.array([1e2, 1e3, 1e4, 1e5])
    fit = fit_kappa(n, 3.0 * n ** -0.7)
    assert fit.kappa == pytest.approx(0.7, abs=0.02) and not fit.flat


def test_fit_kappa_constant_flagged():
    fit = fit_kappa([1e2, 1e3, 1e4], [0.2, 0.2, 0.2])
    assert fit.kappa == pytest.approx(0, abs=1e-12) and fit.flat
