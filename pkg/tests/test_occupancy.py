import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import n1_occupancy_stationary, unit_delay
from osadelay import occupancy as oc
from osadelay.core import UndefinedDelayError
from osadelay.markov import steady_state

S = oc.OccupancyState


def test_single_node_small_buffer_states():
    got = [(s.n[0], s.b[0]) for s in oc.enumerate_states(1, 2)]
    assert got == [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1)]
    assert len(oc.enumerate_states(1, 1)) == 3


def test_two_nodes_within_unfiltered_count():
    states = oc.enumerate_states(2, 10)
    assert len(states) <= (2 * 11) ** 2 == 484
    assert len(states) == oc.count_states(2, 10)
    assert len(oc.enumerate_states(2, 10, s_max=1)) == oc.count_states(2, 10, 1) < len(states)


def test_enumeration_order_and_validity():
    states = oc.enumerate_states(2, 3, s_max=1)
    assert states == sorted(states)
    for s in states:
        assert sum(s.b) <= 1
        assert all(not (ni == 0 and bi) for ni, bi in zip(s.n, s.b))


def test_state_cap():
    with pytest.raises(oc.StateSpaceTooLarge, match="combined MC"):
        oc.enumerate_states(6, 10)


def test_buffering_single_node_edges(make_params):
    pr = make_params(N=1, M_C=1)
    lam, qpsi, pchi = pr.lam, pr.q * pr.psi, pr.p * pr.chi
    f = oc.transition_prob_buffering
    assert f(S((0,), (0,)), S((1,), (0,)), pr) == pytest.approx(lam)
    assert f(S((1,), (1,)), S((0,), (0,)), pr) == pytest.approx(qpsi * (1 - lam))
    assert f(S((1,), (0,)), S((1,), (1,)), pr) == pytest.approx(pchi * (1 - lam))
    assert f(S((1,), (0,)), S((1,), (0,)), pr) == pytest.approx((1 - pchi) * (1 - lam))


def test_switching_adds_eviction_edge(make_params):
    pr = make_params(N=1, M_C=1, protocol="switching")
    qeta, pc, lam = pr.q * pr.eta, pr.p_c, pr.lam
    got = oc.transition_prob_switching(S((1,), (1,)), S((1,), (0,)), pr)
    # eviction without arrival, or termination followed by an arrival
    assert got == pytest.approx((1 - qeta) * pc * (1 - lam) + qeta * lam)
    evicted = oc.transition_prob_switching(S((1,), (1,)), S((1,), (0,)), pr.with_(lam=0.0))
    assert evicted == pytest.approx((1 - qeta) * pc)
    stay = oc.transition_prob_switching(S((1,), (1,)), S((1,), (1,)), pr)
    assert stay == pytest.approx((1 - qeta) * (1 - pc) * (1 - lam))


def test_full_buffer_absorbs_arrivals(make_params):
    pr = make_params(N=1, M_C=1, Qs_max=2)
    f = oc.transition_prob_buffering
    assert f(S((2,), (1,)), S((2,), (1,)), pr) == pytest.approx(1 - pr.q * pr.psi)
    assert f(S((0,), (0,)), S((1,), (0,)), pr.with_(Qs_max=1)) == pytest.approx(pr.lam)


@pytest.mark.parametrize("protocol", ["buffering", "switching"])
@pytest.mark.parametrize("N,M_C,Qs", [(2, 1, 2), (2, 2, 2), (2, 2, 3), (3, 2, 2), (3, 3, 2)])
def test_rows_stochastic_and_impossible_pairs_zero(make_params, protocol, N, M_C, Qs):
    pr = make_params(N=N, M_C=M_C, Qs_max=Qs, protocol=protocol)
    P = oc.build_matrix(pr)
    assert np.allclose(P.row_sums(), 1.0, atol=1e-10)
    prob = oc.transition_prob_switching if pr.switching else oc.transition_prob_buffering
    for A, B in itertools.product(P.states, repeat=2):
        if oc.impossible(A, B, pr.s_max):
            assert prob(A, B, pr) == 0.0


def test_impossible_clauses():
    # two simultaneous channel grants
    assert oc.impossible(S((1, 1), (0, 0)), S((1, 1), (1, 1)), 2)
    # queue jumps by two
    assert oc.impossible(S((1,), (0,)), S((3,), (0,)), 1)
    # busy with an empty queue
    assert oc.impossible(S((0,), (0,)), S((0,), (1,)), 1)
    # all channels held and nobody leaves, yet a grant
    assert oc.impossible(S((1, 1), (1, 0)), S((1, 1), (1, 1)), 1)
    # a departure makes the grant possible
    assert not oc.impossible(S((1, 1), (1, 0)), S((0, 1), (0, 1)), 1)


@pytest.mark.parametrize("N,M_C", [(1, 1), (2, 1), (2, 2)])
def test_policies_coincide_without_primary_users(make_params, N, M_C):
    pr = make_params(N=N, M_C=M_C, Qs_max=3, p_c=0.0)
    a = oc.build_matrix(pr).dense()
    b = oc.build_matrix(pr.with_(protocol="switching")).dense()
    assert np.abs(a - b).max() <= 1e-12


@pytest.mark.parametrize("protocol", ["buffering", "switching"])
def test_single_node_matches_rational_solution(make_params, protocol):
    pr = make_params(N=1, M_C=1, Qs_max=6, lam=0.05, protocol=protocol)
    oracle = n1_occupancy_stationary(pr.lam, pr.q, pr.psi, pr.p, pr.chi, pr.Qs_max,
                                     switching=pr.switching, eta=pr.eta, pc=pr.p_c)
    P = oc.build_matrix(pr)
    pi = steady_state(P)
    idx = P.index()
    for (n, b), val in oracle.items():
        assert pi[idx[S((n,), (b,))]] == pytest.approx(float(val), abs=1e-12)


def test_unit_service_delay(unit_params):
    rep = oc.solve(unit_params(lam=0.01, Qs_max=12))
    assert rep.extras["full_prob"] < 1e-6
    assert rep.mean_system_time == pytest.approx(unit_delay(0.01), abs=1e-3)
    assert rep.method == "exact-mc"


def test_tiny_traffic_concentrates_on_empty_state(make_params):
    pr = make_params(N=2, M_C=1, Qs_max=3, lam=1e-9)
    P = oc.build_matrix(pr)
    pi = steady_state(P)
    empty = P.index()[S((0, 0), (0, 0))]
    assert pi[empty] == pytest.approx(1.0, abs=1e-7)
    rep = oc.delay_from_pi(pi, pr, P.states)
    assert rep.extras["mean_queue"] == pytest.approx(0.0, abs=1e-7)


def test_zero_throughput_is_undefined(make_params):
    pr = make_params(N=1, M_C=1, Qs_max=2, lam=0.0)
    P = oc.build_matrix(pr)
    pi = steady_state(P)
    with pytest.raises(UndefinedDelayError):
        oc.delay_from_pi(pi, pr, P.states)


@pytest.mark.parametrize("protocol", ["buffering", "switching"])
def test_delay_monotone_in_lambda(make_params, protocol):
    grid = np.linspace(0.005, 0.05, 10)
    delays = [oc.solve(make_params(N=2, M_C=1, Qs_max=6, lam=float(l), protocol=protocol))
              .mean_system_time for l in grid]
    assert all(b >= a for a, b in zip(delays, delays[1:]))


@given(lam=st.floats(0.001, 0.3), q=st.floats(0.1, 1.0), p=st.floats(0.1, 1.0),
       pc=st.floats(0.0, 0.6), switching=st.booleans())
def test_single_node_rows_always_stochastic(lam, q, p, pc, switching):
    from osadelay.core import derive
    pr = derive(N=1, M_C=1, p_c=pc, eta=0.9, eta_C=0.9, lam=lam, q=q, p=p, Qs_max=3,
                protocol="switching" if switching else "buffering")
    sums = oc.build_matrix(pr).row_sums()
    assert np.all(np.abs(sums - 1) < 1e-10)
    assert math.isfinite(sums.sum())
