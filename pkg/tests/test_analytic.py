import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from aoi_starve import analytic as an
from aoi_starve.config import SpsParams
from aoi_starve.experiments import geometric_moments_mc

from oracles import FROZEN, recompute


def test_frozen_values_match_independent_oracle():
    got = recompute()
    for k, v in FROZEN.items():
        assert np.allclose(got[k], v, rtol=0, atol=1e-9), k


@pytest.mark.parametrize("p,x,want", [(1.0, 0.0, 1.0), (0.8, 0.5, 0.4), (1.0, 0.9, 0.1)])
def test_effective_sch_prob(p, x, want):
    assert an.effective_sch_prob(p, x) == pytest.approx(want, abs=1e-15)


def test_full_starvation_is_rejected():
    with pytest.raises(an.AnalyticError, match="degenerate starvation"):
        an.effective_sch_prob(1.0, 1.0)


@pytest.mark.parametrize("g,phi,key", [(100, 0.5, "moments_g100_phi05"), (50, 0.25, "moments_g50_phi025")])
def test_moments(g, phi, key):
    assert an.inter_success_moments(g, phi) == pytest.approx(FROZEN[key], abs=1e-9)
    assert an.inter_success_moments(100, 1.0) == (100.0, 10000.0)


@pytest.mark.parametrize("g,phi", [(100, 0.5), (50, 0.25)])
def test_moments_against_monte_carlo(g, phi):
    m1, m2 = geometric_moments_mc(g, phi, 1_000_000)
    e1, e2 = an.inter_success_moments(g, phi)
    assert abs(m1 - e1) / e1 < 0.01 and abs(m2 - e2) / e2 < 0.01


def test_c0_and_reset():
    assert an.reset_aoi_c0(1.0, 100) == FROZEN["c0_p1_g100"]
    assert an.reset_aoi_c0(0.1, 100) == pytest.approx(FROZEN["c0_p01_g100"], abs=1e-12)
    assert an.reset_aoi_c0(1.0, 1) == FROZEN["c0_p1_g1"]
    assert an.expected_reset(1.0, 100, 1.0) == 151.5
    assert an.expected_reset(1.0, 100, 0.5) == 251.5
    assert an.expected_reset(0.1, 100, 1.0) == pytest.approx(160.5, abs=1e-12)


@pytest.mark.parametrize("x,phi,key", [(0.0, 1.0, "aoi_x0"), (0.9, 1.0, "aoi_x09"), (0.0, 0.5, "aoi_phi05")])
def test_average_aoi_examples(x, phi, key):
    p = an.average_aoi(1.0, x, 100, phi)
    assert abs(p.average_aoi_ms - FROZEN[key]) <= 1e-9
    assert abs(p.average_aoi_renewal_ms - FROZEN[key]) <= 1e-9


def test_prediction_dict_has_both_paths():
    d = an.average_aoi(1.0, 0.5, 100, 0.8).as_dict()
    assert {"average_aoi_ms", "average_aoi_renewal_ms", "c0_ms"} <= set(d)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.0, 0.95), st.integers(1, 1000), st.floats(0.02, 1.0))
def test_renewal_path_equals_closed_form(p, x, g, phi):
    r = an.average_aoi(p, x, g, phi)
    assert abs(r.average_aoi_renewal_ms - r.average_aoi_ms) <= 1e-9 * r.average_aoi_ms


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0.001, 0.05), st.integers(1, 500), st.floats(0.05, 0.95))
def test_monotone_in_x_and_phi(x, dx, g, phi):
    a = an.average_aoi(1.0, x, g, phi).average_aoi_ms
    assert an.average_aoi(1.0, x + dx, g, phi).average_aoi_ms > a
    assert an.average_aoi(1.0, x, g, min(1.0, phi + 0.05)).average_aoi_ms < a


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.0), st.integers(1, 1000))
def test_perfect_delivery_adds_half_period(p, g):
    r = an.average_aoi(p, 0.0, g, 1.0)
    assert r.average_aoi_ms - r.c0_ms == pytest.approx(g / 2, abs=1e-9)


def test_convex_in_x():
    xs = [0.0, 0.5, 0.8, 0.9]
    v = [an.average_aoi(1.0, x, 100, 1.0).average_aoi_ms for x in xs]
    slopes = np.diff(v) / np.diff(xs)
    assert np.all(np.diff(v) > 0) and np.all(np.diff(slopes) > 0)


# --- chain ---------------------------------------------------------------

def test_toy_chain_matches_hand_enumeration():
    from oracles import toy_chain
    m = an.build_sps_dtmc(SpsParams(gamma=2, rc_min=1, rc_max=1, p_keep=0.0), 1.0)
    want = np.array([[float(v) for v in row] for row in toy_chain()])
    assert m.n_states == 5
    assert np.array_equal(m.transition_matrix.toarray(), want)


def test_toy_stationary():
    m = an.build_sps_dtmc(SpsParams(gamma=2, rc_min=1, rc_max=1, p_keep=0.0), 1.0)
    pi = an.stationary_distribution(m)
    assert np.abs(pi - an.power_iteration(m.transition_matrix)).max() <= 1e-10
    assert np.abs(pi - np.array(FROZEN["toy_pi"])).max() <= 1e-12


def test_two_state_symmetric():
    P = sp.csr_matrix(np.array([[0.5, 0.5], [0.5, 0.5]]))
    assert np.allclose(an.stationary_distribution(P), [0.5, 0.5], atol=1e-14)


def test_reducible_chain_rejected():
    P = sp.csr_matrix(np.array([[1.0, 0.0], [0.5, 0.5]]))
    with pytest.raises(an.AnalyticError):
        an.stationary_distribution(P)


@pytest.mark.parametrize("g", [2, 10, 100])
@pytest.mark.parametrize("p", [1.0, 0.5, 0.1])
def test_first_passage_closed_form(g, p):
    m = an.build_sps_dtmc(SpsParams(gamma=g), p)
    assert abs(an.mean_first_passage_idle_to_tx(m) - (1 / p + (g - 1) / 2 + g)) <= 1e-9


@pytest.mark.parametrize("g,p,key", [(100, 1.0, "passage_p1_g100"), (100, 0.1, "passage_p01_g100"),
                                     (1, 1.0, "passage_p1_g1")])
def test_first_passage_examples(g, p, key):
    m = an.build_sps_dtmc(SpsParams(gamma=g, rc_min=5, rc_max=15), p)
    assert an.mean_first_passage_idle_to_tx(m) == pytest.approx(FROZEN[key], abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(1, 6), st.integers(0, 6), st.floats(0.0, 0.99), st.floats(0.05, 1.0))
def test_rows_stochastic(g, rcmin, span, pk, p):
    m = an.build_sps_dtmc(SpsParams(gamma=g, rc_min=rcmin, rc_max=rcmin + span, p_keep=pk), p)
    rows = np.asarray(m.transition_matrix.sum(axis=1)).ravel()
    assert np.abs(rows - 1).max() <= 1e-12
    pi = an.stationary_distribution(m)
    assert abs(pi.sum() - 1) <= 1e-12 and pi.min() >= -1e-15


def test_keep_forever_never_returns_to_idle():
    m = an.build_sps_dtmc(SpsParams(gamma=5, rc_min=2, rc_max=3, p_keep=1.0), 1.0)
    P = m.transition_matrix.tocsr()
    seen, frontier = set(), [m.active(2, 4)]
    while frontier:
        s = frontier.pop()
        if s in seen:
            continue
        seen.add(s)
        frontier.extend(P.indices[P.indptr[s]:P.indptr[s + 1]].tolist())
    assert m.idle not in seen


def test_stationary_tx_mass_is_one_per_period_when_keeping():
    # with P_keep close to one the chain spends almost all its time active,
    # so transmissions occupy 1/Gamma of the stationary mass
    m = an.build_sps_dtmc(SpsParams(gamma=20, rc_min=5, rc_max=15, p_keep=0.999), 1.0)
    pi = an.stationary_distribution(m)
    assert pi[m.tx_states()].sum() == pytest.approx(1 / 20, rel=1e-3)
