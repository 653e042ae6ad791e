import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ruralv2x.config import ScenarioConfig
from ruralv2x.phy_link import (McsEntry, ber_from_ebn0, ber_from_prr, data_rate_bps, decode, ebn0_from_ber,
                               ebn0_from_sinr, link_budget, load_mcs_table, n_data_symbols, per_from_ber,
                               per_from_sinr_db, q_function, q_inverse, rate_for)

# mpmath oracle values
Q_1_6449 = 0.04999521746834630
Q_2 = 0.022750131948179209
QINV_0_0228 = 1.9990772149717699
BER_PRR99_L2800 = 3.589399220056005e-6


def test_q_values():
    assert q_function(0.0) == 0.5
    assert q_function(1.6449) == pytest.approx(Q_1_6449, rel=1e-12)
    assert q_inverse(0.0228) == pytest.approx(QINV_0_0228, rel=1e-12)
    assert q_inverse(0.0228) == pytest.approx(2.00, abs=1e-2)
    for p in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            q_inverse(p)


@pytest.mark.parametrize("m, g, ber", [(4, 0.0, 0.5), (16, 0.0, 0.1875), (4, 4.0, Q_2),
                                       (4, 10.0, 7.827011290012748e-4), (16, 10.0, 8.770753089463623e-4)])
def test_ber_values(m, g, ber):
    assert ber_from_ebn0(g, m) == pytest.approx(ber, rel=1e-12)


def test_ebn0_inverse_values():
    assert ebn0_from_ber(Q_2, 4) == pytest.approx(4.0, abs=1e-3)
    assert ebn0_from_ber(0.1875 - 1e-12, 16) < 1e-6
    with pytest.raises(ValueError):
        ebn0_from_ber(0.6, 4)
    with pytest.raises(ValueError):
        ebn0_from_ber(0.2, 16)
    with pytest.raises(ValueError):
        ber_from_ebn0(1.0, 8)


def test_per_values():
    assert per_from_ber(0.0, 2800) == 0.0
    assert per_from_ber(0.013, 1) == pytest.approx(0.013)
    assert per_from_ber(1e-4, 2800) == pytest.approx(0.24422684014802964, rel=1e-12)
    assert ber_from_prr(0.99, 2800) == pytest.approx(BER_PRR99_L2800, rel=1e-10)


@given(b=st.floats(1e-9, 0.4), l1=st.integers(1, 2000), l2=st.integers(1, 2000))
def test_per_length_composition(b, l1, l2):
    lhs = 1 - per_from_ber(b, l1 + l2)
    rhs = (1 - per_from_ber(b, l1)) * (1 - per_from_ber(b, l2))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-15)


@given(g=st.floats(0.0, 200.0), dg=st.floats(0.01, 10.0), m=st.sampled_from([4, 16]))
def test_ber_strictly_decreasing(g, dg, m):
    assert ber_from_ebn0(g + dg, m) < ber_from_ebn0(g, m) or ber_from_ebn0(g, m) == 0.0


@given(b=st.floats(1e-8, 0.1), db=st.floats(1e-3, 0.5), l=st.integers(1, 3000))
def test_per_increasing_in_ber_and_length(b, db, l):
    assert per_from_ber(b * (1 + db), l) >= per_from_ber(b, l)
    assert per_from_ber(b, l + 1) >= per_from_ber(b, l)
    if per_from_ber(b, l + 1) < 1 - 1e-9:
        assert per_from_ber(b, l + 1) > per_from_ber(b, l)


def test_rates():
    assert data_rate_bps(20, 2, 0.5, 30000, 14) == pytest.approx(100_800_000)
    assert data_rate_bps(1, 2, 1, 15000, 1) == pytest.approx(360_000)
    assert n_data_symbols(24) == 12.0 and n_data_symbols(18) == 12.5
    with pytest.raises(ValueError):
        data_rate_bps(0, 2, 0.5, 30000, 14)
    mcs = load_mcs_table()[8]
    assert rate_for(ScenarioConfig(), mcs) == pytest.approx(79_200_000)
    assert rate_for(ScenarioConfig(scs_khz=15), mcs) == pytest.approx(38_016_000)


def test_ebn0_from_sinr():
    assert ebn0_from_sinr(7.0, 1e6, 1e6) == pytest.approx(7.0)
    assert ebn0_from_sinr(7.0, 2e6, 1e6) == pytest.approx(7.0 + 3.0102999566398)
    assert ebn0_from_sinr(7.0, 0.5e6, 1e6) == pytest.approx(7.0 - 3.0102999566398)


def test_mcs_table():
    table = load_mcs_table()
    assert sorted(table) == [8, 9, 10, 12, 13, 14, 15, 16, 17, 18]
    assert {table[i].modulation_order for i in (8, 9, 10)} == {4}
    assert {table[i].modulation_order for i in range(12, 19)} == {16}
    assert table[8].code_rate == 0.44 and table[18].code_rate == 0.68
    assert table[12].bits_per_symbol == 4


def test_mcs_table_rejects_non_monotone(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("index,modulation_order,code_rate\n8,4,0.5\n9,4,0.4\n")
    with pytest.raises(ValueError):
        load_mcs_table(path)


def test_link_budget_chain():
    mcs = McsEntry(8, 4, 0.44)
    lb = link_budget(30.0, mcs, 2800, 7.2e6, 79.2e6)
    assert lb.eb_n0_db == pytest.approx(30.0 - 10.41392685158225, abs=1e-9)
    assert lb.per == pytest.approx(per_from_sinr_db(30.0, mcs, 2800, 7.2e6, 79.2e6))
    assert lb.prr == pytest.approx(1 - lb.per)


def test_decode_extremes_and_rate():
    cfg = ScenarioConfig()
    mcs = load_mcs_table()[8]
    rng = np.random.default_rng(0)
    ok, per = decode(np.full(1000, 80.0), mcs, 2800, cfg, rng)
    assert ok.all() and np.all(per == 0.0)
    ok, per = decode(np.full(1000, -200.0), mcs, 2800, cfg, rng)
    assert not ok.any() and np.allclose(per, 1.0)
    fixed = cfg.replace(fixed_per=0.3)
    ok, per = decode(np.zeros(100_000), mcs, 2800, fixed, np.random.default_rng(1))
    assert 1 - ok.mean() == pytest.approx(0.3, abs=0.01)
    single = decode(80.0, mcs, 2800, cfg, rng)
    assert single == (True, 0.0)
