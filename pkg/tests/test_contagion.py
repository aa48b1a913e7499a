import numpy as np
import pytest
from scipy import stats

from reserve_shift import contagion
from reserve_shift.simcore import Currency, Graph, SimConfig, WorldState


def test_trigger_is_first_strict_crossing():
    assert contagion.detect_trigger([5, 5, 5, 5], [4, 5, 6, 7]) == 2
    assert contagion.detect_trigger([5, 5], [1, 2]) is None
    with pytest.raises(ValueError):
        contagion.detect_trigger([1, 2], [1])


def test_decay_anchor_points():
    assert contagion.decay(40, 40, 180) == 1.0
    assert contagion.decay(130, 40, 180) == 0.5
    assert contagion.decay(220, 40, 180) == 0.0
    assert contagion.decay(500, 40, 180) == 0.0
    assert contagion.decay(10, 40, 180) == 1.0


def _state(n, edges, d=None, config=SimConfig()):
    g = Graph(n, edges)
    st = WorldState.initial(g, np.ones(n), config)
    if d is not None:
        st.d[:] = d
    return st


def test_inherent_rate_matches_binomial():
    n = 2003
    st = _state(n, [(0, i) for i in range(1, n)])
    rng = np.random.default_rng(0)
    config = SimConfig(n_countries=n, min_degree=1)
    fired = 0
    steps = 50
    for _ in range(steps):
        fired += len(contagion.inherent_shock_step(st, 0.5, config, rng))
    trials = steps * (n - 3)
    test = stats.binomtest(fired, trials, 0.01)
    assert test.pvalue > 0.001


def test_increments_bounded_by_fer_share_and_clamped():
    n = 500
    st = _state(n, [(0, i) for i in range(1, n)])
    st.fer_dollar_share = 0.3
    st.d[3:] = 0.9
    config = SimConfig(n_countries=n, min_degree=1, p_inherent_scale=1.0)
    ev = contagion.inherent_shock_step(st, 1.0, config, np.random.default_rng(1))
    mags = np.array([e.magnitude for e in ev])
    assert len(ev) == n - 3 and mags.max() < 0.3 and mags.min() >= 0
    assert st.d.max() <= 1.0 and st.h.min() >= 0.0
    assert np.all(st.d[:3] == 0)


def test_no_shock_when_envelope_is_zero():
    st = _state(10, [(0, i) for i in range(1, 10)])
    assert contagion.inherent_shock_step(st, 0.0, SimConfig(n_countries=10, min_degree=1),
                                         np.random.default_rng(0)) == []


def test_neighbor_mean_excludes_hub():
    # node 3 links to the hub (d ignored), 4 (0.6) and 5 (0.2)
    st = _state(6, [(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (3, 4), (3, 5)],
                d=[0.9, 0, 0, 0, 0.6, 0.2])
    m = contagion.neighbor_mean_d(st)
    assert m[3] == pytest.approx(0.4)
    assert m[1] == 0.0  # only the hub as neighbour


def test_neighbor_influence_gates():
    n = 6
    edges = [(0, i) for i in range(1, n)] + [(3, 4), (3, 5)]
    config = SimConfig(n_countries=n, min_degree=1, p_neighbor_scale=1.0)
    st = _state(n, edges, d=[0, 0, 0, 0, 0.3, 0.3], config=config)
    st.fer_dollar_share = 0.5
    st.us_debt_interest = 0.0  # debt bill below military spending: gate shut
    assert contagion.neighbor_influence_step(st, 1.0, config, np.random.default_rng(0)) == []
    st.us_debt_interest = 1e9
    ev = contagion.neighbor_influence_step(st, 1.0, config, np.random.default_rng(0))
    assert [e.node for e in ev] == [3]  # 4 and 5 only see node 3 at d = 0
    st.d[4] = st.d[5] = 0.2
    ev = contagion.neighbor_influence_step(st, 1.0, config, np.random.default_rng(0))
    assert ev == []


def _switch_world(labels, d3=0.8, fallback="stay"):
    # node 3 is the candidate; nodes 4.. are its peers with the given labels
    n = 4 + len(labels)
    edges = [(0, i) for i in range(1, n)] + [(3, 4 + k) for k in range(len(labels))]
    config = SimConfig(n_countries=n, min_degree=1, switch_fallback=fallback)
    st = _state(n, edges, config=config)
    st.d[3] = d3
    st.currency[4:] = labels
    return st, config


def test_switch_adopts_modal_alternative():
    st, config = _switch_world([1, 2, 2, 0])
    ev = contagion.currency_switch_step(st, config, np.random.default_rng(0))
    assert st.currency[3] == Currency.RUB
    assert ev[0].kind == contagion.SWITCH and ev[0].new_currency is Currency.RUB


def test_switch_threshold_is_strict():
    st, config = _switch_world([1], d3=0.5)
    assert contagion.currency_switch_step(st, config, np.random.default_rng(0)) == []


def test_switch_tie_is_fair_coin():
    wins = 0
    for s in range(2000):
        st, config = _switch_world([1, 2])
        contagion.currency_switch_step(st, config, np.random.default_rng(s))
        wins += st.currency[3] == Currency.CNY
    assert stats.binomtest(wins, 2000, 0.5).pvalue > 0.001


def test_switch_fallback_modes():
    st, config = _switch_world([0, 0])
    assert contagion.currency_switch_step(st, config, np.random.default_rng(0)) == []
    assert st.currency[3] == Currency.USD
    st, config = _switch_world([0, 0], fallback="uniform")
    contagion.currency_switch_step(st, config, np.random.default_rng(0))
    assert st.currency[3] in (Currency.CNY, Currency.RUB)


def test_switch_chain_settles_in_one_month():
    # 3 - 4 - 5 chain with only 5 next to the renminbi node
    n = 6
    edges = [(0, i) for i in range(1, n)] + [(3, 4), (4, 5), (5, 1)]
    config = SimConfig(n_countries=n, min_degree=1)
    st = _state(n, edges, d=[0, 0, 0, 0.8, 0.8, 0.8], config=config)
    contagion.currency_switch_step(st, config, np.random.default_rng(0))
    assert list(st.currency[3:]) == [1, 1, 1]


def test_fer_share_uses_start_weights():
    st = _state(4, [(0, 1), (0, 2), (0, 3)])
    st.reserve_weights = np.array([3.0, 1.0, 0.0, 0.0])
    st.h[:] = [0.5, 0.1, 0.3, 0.3]
    st.gdp[:] = 100.0
    assert contagion.update_fer_share(st) == pytest.approx((1.5 + 0.1) / 4)


def test_events_csv_round_trip(tmp_path):
    ev = [contagion.CascadeEvent(3, 7, contagion.INHERENT, 0.123456789),
          contagion.CascadeEvent(4, 7, contagion.SWITCH, 0.0, Currency.CNY)]
    path = tmp_path / "ev.csv"
    contagion.write_events_csv(ev, path)
    assert contagion.read_events_csv(path) == ev
