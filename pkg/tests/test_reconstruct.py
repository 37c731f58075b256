import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bandsplice import autocorr
from bandsplice import reconstruct as rc
from bandsplice import signal_model as sm
from oracles import brute_force_placements, same_up_to_reflection


def _lags(delays):
    d = np.sort(delays)
    return np.array([d[k] - d[l] for k in range(d.size) for l in range(k)])


def _pair_coeffs(gains):
    K = len(gains)
    return {(k, l): gains[k] * np.conj(gains[l]) for k in range(K) for l in range(k)}


def test_recover_support_example():
    np.testing.assert_allclose(rc.recover_support([1.0, 3.0, 4.0], 3, 0.0), [0, 1, 4])
    np.testing.assert_allclose(rc.recover_support([2.5], 2, 0.1), [0, 2.5])
    np.testing.assert_allclose(rc.recover_support([], 1, 0.1), [0])


def test_recover_support_validation():
    with pytest.raises(ValueError):
        rc.recover_support([1.0, 2.0], 3, 0.0)
    with pytest.raises(rc.NoConsistentPlacementError):
        rc.recover_support([1.0, 2.0, 7.0], 3, 0.01)


@given(seed=st.integers(0, 2**32 - 1))
def test_recover_support_random_k4(seed):
    rng = np.random.default_rng(seed)
    ch = sm.draw_channel(rng, 4, 45.0, min_gap=0.05)
    lags = rng.permutation(_lags(ch.delays))
    got = rc.recover_support(lags, 4, 0.0)
    assert same_up_to_reflection(got, ch.delays - ch.delays[0])
    assert any(same_up_to_reflection(got, b) for b in brute_force_placements(lags, 4))


@given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 5))
def test_support_reproduces_difference_set(seed, k):
    rng = np.random.default_rng(seed)
    ch = sm.draw_channel(rng, k, 45.0, min_gap=0.2)
    lags = _lags(ch.delays)
    eta = 0.05
    noisy = lags + rng.uniform(-eta / 4, eta / 4, lags.size)
    got = rc.recover_support(noisy, k, eta)
    pairs = rc.match_lags_to_pairs(got, noisy, eta)
    used = sorted(pairs.values())
    assert used == list(range(lags.size))
    for (a, b), i in pairs.items():
        assert abs(got[a] - got[b] - noisy[i]) <= eta


def test_match_lags_example():
    lags = np.array([1.0, 3.0, 4.0])
    m = rc.match_lags_to_pairs([0.0, 1.0, 4.0], lags, 0.0)
    assert m == {(1, 0): 0, (2, 0): 2, (2, 1): 1}
    assert rc.match_lags_to_pairs([0.0, 2.0], [2.0], 0.0) == {(1, 0): 0}


@given(seed=st.integers(0, 2**32 - 1))
def test_match_lags_stable_under_small_perturbation(seed):
    rng = np.random.default_rng(seed)
    ch = sm.draw_channel(rng, 4, 45.0, min_gap=0.5)
    d = ch.delays - ch.delays[0]
    lags = rng.permutation(_lags(d))
    eta = 0.2
    base = rc.match_lags_to_pairs(d, lags, eta)
    pert = rc.match_lags_to_pairs(d, lags + rng.uniform(-eta / 2, eta / 2, lags.size), eta)
    assert base == pert


def test_match_lags_rejects_collision():
    with pytest.raises(rc.AmbiguousMatchError):
        rc.match_lags_to_pairs([0.0, 1.0, 2.0], [1.0, 1.0, 2.0], 0.0)


def test_fit_positions_exact():
    d = np.array([0.0, 1.3, 4.1, 6.0])
    lags = _lags(d)
    pm = rc.match_lags_to_pairs(d, lags, 0.0)
    np.testing.assert_allclose(rc.fit_positions(4, pm, lags), d, atol=1e-12)


def test_magnitudes_hand_example():
    c = np.array([1.0, 0.5, 0.25])
    C = rc.log_pair_matrix({p: abs(v) for p, v in _pair_coeffs(c).items()}, 3)
    assert C[1, 0] == pytest.approx(np.log(0.5))
    assert C[2, 0] == pytest.approx(np.log(0.25))
    assert C[2, 1] == pytest.approx(np.log(0.125))
    got = rc.recover_magnitudes({p: abs(v) for p, v in _pair_coeffs(c).items()}, 3)
    np.testing.assert_allclose(got, c, rtol=1e-12)


def test_magnitudes_single_and_pair():
    assert rc.recover_magnitudes({}, 1, 4.0)[0] == pytest.approx(2.0)
    c = np.array([0.8, 0.3])
    got = rc.recover_magnitudes({(1, 0): c[0] * c[1]}, 2, float(np.sum(c ** 2)))
    np.testing.assert_allclose(got, c)
    with pytest.raises(ValueError):
        rc.recover_magnitudes({(1, 0): 0.1}, 2)


@given(seed=st.integers(0, 2**32 - 1))
def test_magnitudes_random_k4(seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    got = rc.recover_magnitudes({p: abs(v) for p, v in _pair_coeffs(c).items()}, 4)
    np.testing.assert_allclose(got, np.abs(c), rtol=1e-10)


def test_magnitudes_reject_zero_pair():
    with pytest.raises(rc.DegeneratePairError):
        rc.recover_magnitudes({(1, 0): 0.0, (2, 0): 1.0, (2, 1): 1.0}, 3)


def test_phases_with_real_first_gain():
    c = np.array([0.7, 0.2 - 0.4j])
    got = rc.recover_phases(_pair_coeffs(c), 0.7, 2)
    np.testing.assert_allclose(got, c)


@given(seed=st.integers(0, 2**32 - 1), phi=st.floats(0, 2 * np.pi))
def test_global_phase_does_not_change_output(seed, phi):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    a = rc.recover_phases(_pair_coeffs(c), abs(c[0]), 3)
    b = rc.recover_phases(_pair_coeffs(c * np.exp(1j * phi)), abs(c[0]), 3)
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(a, np.exp(-1j * np.angle(c[0])) * c, atol=1e-9)


def test_phases_reject_tiny_first_gain():
    with pytest.raises(rc.DegeneratePairError):
        rc.recover_phases({(1, 0): 1.0}, 0.0, 2)


def test_reconstruct_cir_from_exact_autocorrelation():
    d = np.array([0.0, 2.0, 7.0]) * 1e-9
    c = np.array([0.8, 0.5 * np.exp(0.4j), 0.3 * np.exp(-2j)])
    ac = {p: (d[p[0]] - d[p[1]], v) for p, v in _pair_coeffs(c).items()}
    order = sorted(ac, key=lambda p: ac[p][0])
    acf = autocorr.AutocorrEstimate(np.array([ac[p][0] for p in order]), np.array([ac[p][1] for p in order]),
                                    float(np.sum(np.abs(c) ** 2)))
    est = rc.reconstruct_cir(acf, 3, 1e-12)
    want = np.exp(-1j * np.angle(c[0])) * c
    if np.allclose(est.delays, d):
        np.testing.assert_allclose(est.gains, want, atol=1e-9)
    else:
        ref = rc.CirEstimate(d, want).reflected()
        np.testing.assert_allclose(est.delays, ref.delays, atol=1e-18)
        # the reflected member carries conjugated gains up to one global phase
        ratio = est.gains / ref.gains
        np.testing.assert_allclose(ratio, ratio[0], atol=1e-9)


def test_estimate_reflection_and_autocorrelation():
    est = rc.CirEstimate([0.0, 1.0, 3.0], [1.0, 0.5j, -0.2])
    ref = est.reflected()
    np.testing.assert_allclose(ref.delays, [0.0, 2.0, 3.0])
    np.testing.assert_allclose(ref.gains, [-0.2, -0.5j, 1.0])
    a = sorted((round(v[0], 9), complex(np.round(v[1], 12))) for v in est.autocorrelation().values())
    b = sorted((round(v[0], 9), complex(np.round(v[1], 12))) for v in ref.autocorrelation().values())
    assert a == b
    with pytest.raises(ValueError):
        rc.CirEstimate([1.0, 0.0], [1, 1])


def _magnitudes_for(delays, gains, plan):
    return autocorr.magnitudes(sm.sample_cfr(sm.MultipathChannel(delays, gains, 1.0), plan))


def test_enumerate_placements_contains_truth():
    d = np.array([0.0, 4.0, 11.0])
    cands = np.array([7.0, 11.0, 4.0, 20.0])  # one spurious lag
    found = rc.enumerate_placements(cands, 3, 0.1)
    assert any(np.allclose(p, d) for p in found)
    for p in found:
        for a, b in itertools.combinations(p, 2):
            assert np.min(np.abs(cands - abs(a - b))) <= 0.1
    assert rc.enumerate_placements(cands, 1, 0.1) == []
    assert rc.enumerate_placements([], 3, 0.1) == []


def test_enumerate_placements_tolerates_merged_lag():
    # lags 5 and 5.05 merged into one candidate: {0, 5, 10.05} still explained
    found = rc.enumerate_placements([5.02, 10.05], 3, 0.1)
    assert any(np.allclose(p, [0.0, 5.02, 10.05], atol=0.05) for p in found)


def test_fit_residual_vanishes_at_truth(full_plan):
    d = np.array([0.0, 6.1e-9, 17.4e-9])
    g = np.array([0.7, 0.5j, -0.3])
    u = _magnitudes_for(d + 3e-9, g, full_plan)
    f = full_plan.flat_freqs
    assert rc.fit_residual(u, f, d) < 1e-18 * np.sum(u ** 2)
    assert rc.fit_residual(u, f, d + [0, 0.2e-9, 0]) > 1e-6


def test_polish_delays_recovers_offset_start(full_plan):
    d = np.array([0.0, 6.1e-9, 17.4e-9])
    g = np.array([0.7, 0.5j, -0.3])
    u = _magnitudes_for(d, g, full_plan)
    f = full_plan.flat_freqs
    start = d + np.array([0.0, 0.4e-9, -0.5e-9])
    np.testing.assert_allclose(rc.polish_delays(u, f, start), d, atol=1e-13)
    np.testing.assert_allclose(rc.polish_delays(u, f, [2e-9]), [2e-9])


def test_rank_placements_prefers_truth(full_plan):
    d = np.array([0.0, 6.1e-9, 17.4e-9])
    u = _magnitudes_for(d, [0.7, 0.5j, -0.3], full_plan)
    f = full_plan.flat_freqs
    wrong = np.array([0.0, 9.0e-9, 17.4e-9])
    off = d + [0, 0.3e-9, 0]
    best, score = rc.rank_placements(u, f, [wrong, off], num_polish=2)
    np.testing.assert_allclose(best, d, atol=1e-13)
    best0, _ = rc.rank_placements(u, f, [wrong, off], num_polish=0)
    np.testing.assert_allclose(best0, off)
    with pytest.raises(rc.NoConsistentPlacementError):
        rc.rank_placements(u, f, [])


def test_cir_from_delays_exact(full_plan):
    d = np.array([0.0, 6.1e-9, 17.4e-9])
    g = np.array([0.7 * np.exp(0.5j), 0.5j, -0.3])
    u = _magnitudes_for(d, g, full_plan)
    est, acf = rc.cir_from_delays(u, full_plan.flat_freqs, d + 2e-9)
    np.testing.assert_allclose(est.delays, d)
    np.testing.assert_allclose(est.gains, np.exp(-0.5j) * g, atol=1e-9)
    assert acf.zero_lag == pytest.approx(np.sum(np.abs(g) ** 2))
    single, _ = rc.cir_from_delays(u, full_plan.flat_freqs, [0.0])
    assert abs(single.gains[0]) ** 2 == pytest.approx(np.mean(u), rel=1e-9)


def test_cir_from_delays_rejects_shared_difference(full_plan):
    u = _magnitudes_for([0.0, 5e-9, 12e-9], [1, 0.5, 0.2], full_plan)
    with pytest.raises(rc.AmbiguousMatchError):
        rc.cir_from_delays(u, full_plan.flat_freqs, [0.0, 5e-9, 10e-9])


def test_cir_from_delays_flags_unresolvable_paths(full_plan):
    # three paths inside a fraction of the resolution cell: gains blow up
    d = np.array([0.0, 0.2e-9, 0.45e-9])
    u = _magnitudes_for(d, [0.6, 0.6j, 0.5], full_plan)
    u = u + 1e-3 * np.random.default_rng(0).standard_normal(u.size)
    with pytest.raises(rc.DegeneratePairError):
        rc.cir_from_delays(u, full_plan.flat_freqs, d)
