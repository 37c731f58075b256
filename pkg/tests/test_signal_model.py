import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bandsplice import signal_model as sm
from oracles import direct_cfr


def test_plan_geometry(small_plan):
    assert small_plan.size == 36
    assert small_plan.zero_index == 4
    np.testing.assert_array_equal(small_plan.subcarrier_indices, np.arange(-4, 5))
    f = small_plan.freqs
    assert f.shape == (4, 9)
    np.testing.assert_allclose(f[:, 4], small_plan.carrier_freqs)
    # contiguous bands: the flat frequency list is an arithmetic progression
    np.testing.assert_allclose(np.diff(small_plan.flat_freqs), 312.5e3)


def test_plan_index_round_trip(small_plan):
    for i in range(small_plan.size):
        assert small_plan.flat_index(*small_plan.band_subcarrier(i)) == i
    assert sm.BandPlan.adjacent(2, 3).band_subcarrier(4) == (1, 0)


def test_plan_rejects_even_subcarrier_count():
    with pytest.raises(ValueError):
        sm.BandPlan.adjacent(2, 4)


def test_plan_dict_round_trip(small_plan):
    back = sm.BandPlan.from_dict(small_plan.to_dict())
    np.testing.assert_array_equal(back.flat_freqs, small_plan.flat_freqs)


def test_cfr_single_path_at_zero_is_flat(small_plan):
    ch = sm.MultipathChannel([0.0], [1.0], 1e-8)
    np.testing.assert_allclose(sm.sample_cfr(ch, small_plan), 1.0)


def test_cfr_single_path_has_constant_magnitude(small_plan):
    c = 0.3 - 0.4j
    ch = sm.MultipathChannel([7.3e-9], [c], 1e-8)
    np.testing.assert_allclose(np.abs(sm.sample_cfr(ch, small_plan)), abs(c), rtol=1e-12)


def test_cfr_matches_direct_evaluation():
    plan = sm.BandPlan.adjacent(1, 3)
    ch = sm.MultipathChannel([1.1e-9, 4.7e-9], [0.8, -0.2 + 0.5j], 1e-8)
    np.testing.assert_allclose(sm.sample_cfr(ch, plan), direct_cfr(ch.delays, ch.gains, plan.flat_freqs),
                               rtol=1e-12, atol=1e-12)


def test_channel_rejects_collisions():
    with pytest.raises(ValueError):
        sm.MultipathChannel([0.0, 1e-9, 2e-9], [1, 1, 1], 1e-8)
    with pytest.raises(ValueError):
        sm.MultipathChannel([2e-9, 1e-9], [1, 1], 1e-8)


def test_distortions_zero_subcarrier_is_constant_phase(small_plan, rng):
    ch = sm.draw_channel(rng, 3, 40e-9)
    h = sm.sample_cfr(ch, small_plan).reshape(4, 9)
    params = sm.draw_distortions(rng, small_plan, 0.0, 100e-9, 40e-9)
    snap = sm.apply_distortions(h, params, small_plan, rng)
    np.testing.assert_allclose(snap.values[:, 4], h[:, 4] * np.exp(-1j * params.phase_offsets), rtol=1e-12)
    assert not snap.observed[:, 4].any()
    assert snap.observed[:, [0, 1, 2, 3, 5, 6, 7, 8]].all()


def test_identity_distortion(small_plan, rng):
    h = sm.sample_cfr(sm.draw_channel(rng, 2, 40e-9), small_plan)
    params = sm.DistortionParams(np.zeros(4), np.zeros(4), 0.0)
    snap = sm.apply_distortions(h, params, small_plan, rng)
    np.testing.assert_allclose(snap.values.ravel(), h)


@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 5))
def test_magnitude_invariance(seed, k):
    rng = np.random.default_rng(seed)
    plan = sm.BandPlan.adjacent(3, 5)
    h = sm.sample_cfr(sm.draw_channel(rng, k, 40e-9), plan)
    params = sm.draw_distortions(rng, plan, 0.0, 500e-9, 40e-9)
    snap = sm.apply_distortions(h, params, plan, rng)
    np.testing.assert_allclose(np.abs(snap.values.ravel()), np.abs(h), rtol=1e-12, atol=1e-15)


def test_reciprocal_pair_example(small_plan, rng):
    ch = sm.MultipathChannel([0.0], [1.0], 1e-8)
    psi = np.full(4, np.pi / 3)
    rx = sm.DistortionParams(np.zeros(4), psi, 0.0)
    tx = sm.DistortionParams(np.zeros(4), -psi, 0.0)
    y_tx, y_rx = sm.make_reciprocal_pair(ch, small_plan, tx, rx, rng)
    np.testing.assert_allclose(y_tx, np.exp(1j * np.pi / 3))
    np.testing.assert_allclose(y_rx, np.exp(-1j * np.pi / 3))


def test_reciprocal_product_is_squared_cfr(small_plan, rng):
    ch = sm.draw_channel(rng, 3, 40e-9)
    tx, rx = sm.draw_reciprocal_distortions(rng, small_plan, 0.0, 100e-9, 40e-9)
    y_tx, y_rx = sm.make_reciprocal_pair(ch, small_plan, tx, rx, rng)
    h0 = sm.sample_cfr(ch, small_plan).reshape(4, 9)[:, 4]
    np.testing.assert_allclose(y_tx * y_rx, h0 ** 2, rtol=1e-12)
    np.testing.assert_allclose(np.abs(y_tx), np.abs(y_rx), rtol=1e-12)


def test_reciprocal_pair_requires_opposite_phases(small_plan, rng):
    ch = sm.MultipathChannel([0.0], [1.0], 1e-8)
    p = sm.DistortionParams(np.zeros(4), np.ones(4), 0.0)
    with pytest.raises(ValueError):
        sm.make_reciprocal_pair(ch, small_plan, p, p, rng)


def test_draw_channel_single_path(rng):
    ch = sm.draw_channel(rng, 1, 40e-9)
    assert ch.num_paths == 1
    assert 0 < ch.tof <= 40e-9
    np.testing.assert_allclose(np.linalg.norm(ch.gains), 1.0)


@given(seed=st.integers(0, 2**32 - 1))
def test_draw_channel_difference_set_is_collision_free(seed):
    ch = sm.draw_channel(np.random.default_rng(seed), 3, 40e-9, min_gap=0.1e-9)
    d = ch.delays
    lags = np.abs(d[:, None] - d[None, :])[np.triu_indices(3, 1)]
    assert np.all(lags > 0)
    assert np.unique(lags).size == 3
    assert np.all(sm.lag_gaps(d) > 0.1e-9)


def test_draw_channel_on_grid(rng):
    step = 1e-9
    ch = sm.draw_channel(rng, 4, 40e-9, grid_step=step)
    np.testing.assert_allclose(ch.delays / step, np.round(ch.delays / step), atol=1e-9)


def test_infinite_decay_gives_equal_variances():
    # with equal variances the normalized gains follow the unscaled Gaussian draw
    a = sm.draw_channel(np.random.default_rng(5), 3, 40e-9, decay_constant=np.inf)
    rng = np.random.default_rng(5)
    tau = np.sort(40e-9 - rng.uniform(0, 40e-9, 3))
    g = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    np.testing.assert_allclose(a.delays, tau)
    np.testing.assert_allclose(a.gains, g / np.linalg.norm(g))


def test_draw_channel_impossible_gap_raises(rng):
    with pytest.raises(ValueError):
        sm.draw_channel(rng, 5, 4e-9, grid_step=1e-9)


def test_draw_distortions_examples(small_plan):
    p = sm.draw_distortions(np.random.default_rng(1), small_plan, 0.0, 0.0)
    assert np.all(p.time_offsets == 0)
    assert p.noise_var == 0.0
    q = sm.draw_distortions(np.random.default_rng(2), small_plan, 0.0, 0.0)
    assert not np.allclose(p.phase_offsets, q.phase_offsets)


def test_draw_distortions_respects_cyclic_prefix(small_plan, rng):
    with pytest.raises(ValueError):
        sm.draw_distortions(rng, small_plan, 0.0, 3.2e-6, 40e-9)


def test_noise_level_matches_snr(small_plan):
    rng = np.random.default_rng(0)
    plan = sm.BandPlan.adjacent(32, 33)
    h = sm.sample_cfr(sm.draw_channel(rng, 3, 40e-9), plan)
    nv = sm.noise_var_for_snr(h, 10.0)
    params = sm.DistortionParams(np.zeros(32), np.zeros(32), nv)
    snap = sm.apply_distortions(h, params, plan, rng)
    z = snap.values.ravel() - h
    assert np.mean(np.abs(z) ** 2) == pytest.approx(nv, rel=0.1)
    assert sm.noise_var_for_snr(h, np.inf) == 0.0


def test_snapshot_arrays_are_read_only(small_plan, rng):
    h = sm.sample_cfr(sm.MultipathChannel([1e-9], [1.0], 1e-8), small_plan)
    snap = sm.apply_distortions(h, sm.DistortionParams(np.zeros(4), np.zeros(4), 0.0), small_plan, rng)
    with pytest.raises(ValueError):
        snap.values[0, 0] = 0
