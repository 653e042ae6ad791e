import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ruralv2x.channel import (ShadowingState, doppler_hz, ici_penalty_db, ici_ratio, link_gain, noise_power_dbm,
                              pathloss_db, sinr_db, update_shadowing)

# mpmath, 40 digits: 20 log10(d) + 20 log10(5.9) + 32.45
PL_100_59 = 87.86704023284288
PL_1_59 = 47.86704023284288
# (pi * f_d / 15 kHz)^2 / 3 with f_d = (110 / 3.6) * 5.9e9 / c
ICI_110KMH_15KHZ = 5.287360944588062e-3


def test_pathloss_values():
    assert pathloss_db(10, 1) == pytest.approx(52.45, abs=1e-12)
    assert pathloss_db(100, 5.9) == pytest.approx(87.8663, abs=1e-3)
    assert pathloss_db(100, 5.9) == pytest.approx(PL_100_59, abs=1e-9)
    assert pathloss_db(1, 5.9) == pytest.approx(PL_1_59, abs=1e-9)


@pytest.mark.parametrize("d, fc", [(100, 0), (100, -1), (0, 5.9)])
def test_pathloss_rejects(d, fc):
    with pytest.raises(ValueError):
        pathloss_db(d, fc)


def test_link_gain_clamps_distance():
    g = link_gain(0.0, 5.9, shadowing_db=1.5)
    assert g.pathloss_db == pytest.approx(PL_1_59)
    assert g.gain_total_db == pytest.approx(6.0 - PL_1_59 - 1.5)
    assert g.pathloss_db >= 32.45


@given(d=st.floats(1, 1e5), k=st.floats(1.01, 100))
def test_pathloss_monotone(d, k):
    assert pathloss_db(d * k, 5.9) > pathloss_db(d, 5.9)


def test_shadowing_zero_step_is_identity():
    rng = np.random.default_rng(0)
    s = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(update_shadowing(s, 0.0, rng), s)


def test_shadowing_long_step_is_fresh_draw():
    s = np.full(4, 100.0)
    a = update_shadowing(s, 2500.0, np.random.default_rng(3))
    b = 3.0 * np.random.default_rng(3).standard_normal(4)
    assert np.allclose(a, b, atol=1e-30)


def test_shadowing_weight_at_decorrelation_distance():
    # zero innovation isolates the AR weight
    class Zero:
        def standard_normal(self, shape):
            return np.zeros(shape)
    assert update_shadowing(1.0, 25.0, Zero()) == pytest.approx(0.36787944117144233, abs=1e-15)


def test_shadowing_scalar_and_broadcast():
    rng = np.random.default_rng(1)
    assert isinstance(update_shadowing(0.0, 5.0, rng), float)
    assert update_shadowing(np.zeros((2, 3)), 5.0, rng).shape == (2, 3)
    with pytest.raises(ValueError):
        update_shadowing(0.0, -1.0, rng)


def test_shadowing_state_uses_distance_change():
    rng = np.random.default_rng(2)
    d = np.array([[0.0, 100.0], [100.0, 0.0]])
    state = ShadowingState(d, rng)
    before = state.s_db.copy()
    state.advance(d, rng)
    assert np.array_equal(state.s_db, before)
    state.advance(d + 1e6 * (1 - np.eye(2)), rng)
    assert np.all(state.s_db[~np.eye(2, dtype=bool)] != before[~np.eye(2, dtype=bool)])
    assert np.all(np.diag(state.s_db) == 0)


def test_noise_values():
    assert noise_power_dbm(1.0, 0.0) == pytest.approx(-174.0)
    assert noise_power_dbm(20e6, 9.0) == pytest.approx(-91.98970004336019, abs=1e-9)
    assert noise_power_dbm(2 * 10 * 12 * 30e3, 9.0) == pytest.approx(-96.42667503568732, abs=1e-9)


def test_ici():
    assert ici_penalty_db(0.0, 5.9, 15e3, snr_db=20) == 0.0
    assert ici_ratio(110 / 3.6, 5.9, 15e3) == pytest.approx(ICI_110KMH_15KHZ, rel=1e-12)
    assert ici_ratio(110 / 3.6, 5.9, 15e3) == pytest.approx(5.28e-3, rel=2e-3)
    assert 10 * math.log10(ici_ratio(110 / 3.6, 5.9, 15e3)) == pytest.approx(-22.8, abs=0.05)
    assert ici_ratio(30.6, 5.9, 30e3) == pytest.approx(ici_ratio(30.6, 5.9, 15e3) / 4)
    assert doppler_hz(30.6, 5.9) == pytest.approx(602.2, abs=0.1)
    with pytest.raises(ValueError):
        ici_ratio(1.0, 5.9, 0.0)


def test_sinr_cases():
    assert sinr_db(-90.0, -90.0) == pytest.approx(0.0)
    assert sinr_db(-60.0, -90.0, [-90.0]) == pytest.approx(30.0 - 10 * math.log10(2))
    assert sinr_db(-60.0, -90.0, [-np.inf]) == sinr_db(-60.0, -90.0)


@given(p=st.floats(-120, 0), i1=st.floats(-130, -40), bump=st.floats(0.1, 20))
def test_sinr_monotone_in_interference(p, i1, bump):
    assert sinr_db(p, -95.0, [i1 + bump]) < sinr_db(p, -95.0, [i1])
