import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import combined_row_bruteforce, unit_delay
from osadelay import combined as cb
from osadelay.core import DiscretePmf, NonConvergenceError, UnsupportedMethodError, derive
from osadelay.markov import steady_state

CS = cb.CombinedState


def _p(**kw):
    base = dict(N=4, M_C=2, p_c=0.2, eta=0.9, eta_C=0.85, lam=0.01, q=0.2, p=0.3)
    base.update(kw)
    return derive(**base)


# ---------------------------------------------------------------- building blocks

def test_competition_reference_values():
    pr = _p(N=5, M_C=5, p=0.2, p_c=0.0, eta_C=0.9)
    assert cb.competition_success(0, 3, pr)[0] == pytest.approx(0.3456)
    pr = _p(N=3, M_C=3, p=1.0, p_c=0.0, eta_C=1.0)
    assert cb.competition_success(0, 1, pr)[2] == pytest.approx(1.0)


def test_all_channels_held_needs_a_release():
    pr = _p(N=4, M_C=2, p=0.5, p_c=0.0, eta=1.0, eta_C=1.0, q=0.5)
    ps, ps_kg, psm = cb.competition_success(2, 2, pr)
    assert ps == pytest.approx(0.5)
    assert ps_kg == pytest.approx(0.375)
    assert psm == pytest.approx(0.1875)
    assert cb.competition_success(1, 0, pr) == (0.0, 0.0, 0.0)


def test_marked_success_is_deflated_when_switching():
    b = _p(N=3, M_C=3)
    s = b.with_(protocol="switching")
    assert cb.marked_success(0, 2, s) == pytest.approx(cb.marked_success(0, 2, b) * 0.8)


def test_aux_reference_values():
    aux = cb.aux_probs(_p(lam=0.3), 0.5)
    assert aux.Y(0, 0, 0) == 1.0
    assert aux.Y(1, 1, 1) == pytest.approx(0.5)
    assert aux.Y(3, 1, 1) == 0.0 and aux.Y(-1, 1, 1) == 0.0


def test_termination_binomials_complete():
    aux = cb.aux_probs(_p(N=6, M_C=6), 0.3)
    for k in range(7):
        assert math.fsum(aux.T(k, j) for j in range(k + 1)) == pytest.approx(1.0, abs=1e-14)
        assert aux.T(k, k + 1) == 0.0
    for n in range(7):
        assert math.fsum(aux.F(n, s) for s in range(n + 1)) == pytest.approx(1.0, abs=1e-14)


def test_aux_rejects_bad_p0():
    with pytest.raises(ValueError):
        cb.aux_probs(_p(), 1.5)


def test_other_competitor_wins():
    pr = _p(N=3, M_C=3, p=0.5, p_c=0.0, eta=1.0, eta_C=1.0)
    assert cb.other_wins_prob(2, pr) == pytest.approx(0.25)
    assert cb.other_wins_prob(1, pr) == 0.0
    lossy = _p(N=3, M_C=3, p=0.5, p_c=0.0, eta=0.6, eta_C=0.9)
    assert cb.other_wins_prob(2, lossy, "psi") == pytest.approx(0.25 * 0.6)
    assert cb.other_wins_prob(2, lossy, "chi") == pytest.approx(0.25 * 0.9)


# ---------------------------------------------------------------- chain structure

CASES = [(4, 2), (5, 3), (3, 3), (1, 1), (6, 1), (10, 10)]


@pytest.mark.parametrize("protocol", ["buffering", "switching"])
@pytest.mark.parametrize("N,M_C", CASES)
@pytest.mark.parametrize("P0", [0.0, 0.37, 1.0])
def test_rows_stochastic(protocol, N, M_C, P0):
    pr = _p(N=N, M_C=M_C, lam=0.05)
    for T in (cb.build_transitions(protocol, P0, pr), cb.build_marked_transitions(protocol, P0, pr)):
        D = T.dense()
        assert np.abs(T.row_sums() - 1).max() < 1e-10
        assert D.min() >= 0.0


@pytest.mark.parametrize("protocol", ["buffering", "switching"])
def test_structural_zeros(protocol):
    pr = _p(N=6, M_C=3, lam=0.1)
    T = cb.build_transitions(protocol, 0.4, pr)
    for a in T.states:
        for b in T.states:
            if b.k > a.k + 1 or b.g < a.g - 1:
                assert T[a, b] == 0.0


@pytest.mark.parametrize("protocol", ["buffering", "switching"])
@pytest.mark.parametrize("N,M_C", [(4, 2), (5, 3), (3, 3), (5, 1)])
@pytest.mark.parametrize("P0", [0.0, 0.6, 1.0])
def test_matches_event_enumeration(protocol, N, M_C, P0):
    pr = _p(N=N, M_C=M_C, lam=0.07, protocol=protocol)
    for marked in (False, True):
        if marked:
            T = cb.build_marked_transitions(protocol, P0, pr)
            s1 = lambda g: cb.other_wins_prob(g, pr)  # noqa: E731
        else:
            T = cb.build_transitions(protocol, P0, pr)
            s1 = lambda g: cb.success_prob(g, pr)  # noqa: E731
        D, idx = T.dense(), T.index()
        for st_ in T.states:
            want = np.zeros(T.size)
            for (z, h), w in combined_row_bruteforce(st_.k, st_.g, pr, P0, s1).items():
                want[idx[CS(z, h)]] += w
            assert np.abs(D[idx[st_]] - want).max() < 1e-14


@pytest.mark.parametrize("N,M_C", [(4, 2), (5, 5), (3, 1)])
def test_policies_coincide_without_primary_users(N, M_C):
    pr = _p(N=N, M_C=M_C, p_c=0.0, lam=0.05)
    for build in (cb.build_transitions, cb.build_marked_transitions):
        a = build("buffering", 0.3, pr).dense()
        b = build("switching", 0.3, pr).dense()
        assert np.abs(a - b).max() <= 1e-12


def test_lone_competitor_has_no_rival_to_lose_to():
    pr = _p(N=3, M_C=3, lam=0.0)
    Q = cb.build_marked_transitions("buffering", 1.0, pr)
    # from (0, 1) with no arrivals the marked node keeps competing alone
    assert Q[CS(0, 1), CS(0, 1)] == pytest.approx(1.0)


# ---------------------------------------------------------------- reservation period

def test_single_node_reservation_is_geometric():
    pr = _p(N=1, M_C=1, p=0.4)
    Q = cb.build_marked_transitions("buffering", 0.5, pr)
    pmf = cb.xr_conditional(0, 1, Q, pr)
    r = 0.4 * pr.chi
    i = np.arange(1, 40)
    assert np.allclose(pmf.probs[i], r * (1 - r) ** (i - 1), rtol=1e-12)
    assert pmf.tail_mass < 1e-8


@pytest.mark.parametrize("protocol", ["buffering", "switching"])
def test_conditional_pmf_properties(protocol):
    pr = _p(N=5, M_C=3, lam=0.02, protocol=protocol)
    Q = cb.build_marked_transitions(protocol, 0.7, pr)
    for k, g in [(0, 1), (1, 3), (3, 2)]:
        pmf = cb.xr_conditional(k, g, Q, pr)
        assert pmf.probs[1] == pytest.approx(cb.marked_success(k, g, pr))
        assert pmf.total >= 1 - 1e-8
        assert np.all(pmf.probs >= 0)
        assert np.all(np.diff(np.cumsum(pmf.probs)) >= 0)
    with pytest.raises(ValueError):
        cb.xr_conditional(1, 0, Q, pr)


def test_unconditional_is_weighted_mixture():
    pr = _p(N=4, M_C=2, lam=0.03)
    P = cb.build_transitions("buffering", 0.6, pr)
    pi = steady_state(P)
    Q = cb.build_marked_transitions("buffering", 0.6, pr)
    cond = {s: cb.xr_conditional(s.k, s.g, Q, pr) for s in P.states if s.g > 0}
    mix = cb.xr_unconditional(cond, pi, pr, P.states)
    means = [d.moments().m1 for d in cond.values()]
    assert min(means) <= mix.moments().m1 <= max(means)
    direct, _ = cb.xr_exact(0.6, pr)
    assert mix.moments().m1 == pytest.approx(direct.moments().m1, rel=1e-6)


def test_single_node_unconditional_equals_conditional():
    pr = _p(N=1, M_C=1)
    Q = cb.build_marked_transitions("buffering", 0.5, pr)
    pi = steady_state(cb.build_transitions("buffering", 0.5, pr))
    only = cb.xr_conditional(0, 1, Q, pr)
    mix = cb.xr_unconditional({CS(0, 1): only}, pi, pr)
    assert np.allclose(mix.probs, only.probs)


def test_no_competition_is_degenerate():
    pr = _p(N=2, M_C=2, lam=0.0)
    pi = steady_state(cb.build_transitions("buffering", 1.0, pr))
    with pytest.raises(cb.DegenerateScenarioError):
        cb.competing_weights(pi, cb.combined_states(pr))


@pytest.mark.parametrize("protocol", ["buffering", "switching"])
def test_linear_moments_agree_with_recursion(protocol):
    pr = _p(N=5, M_C=3, lam=0.02, protocol=protocol)
    w, Q, psm, _ = cb._marked_problem(0.7, pr, "chi")
    exact = cb.absorption_moments(w, Q, psm)
    trunc = cb.xr_exact(0.7, pr, tail_tol=1e-12)[0].moments()
    assert exact.m1 == pytest.approx(trunc.m1, rel=1e-8)
    assert exact.m2 == pytest.approx(trunc.m2, rel=1e-7)


def test_non_terminating_reservation_is_flagged():
    Q = np.eye(2)
    with pytest.raises(NonConvergenceError):
        cb._propagate(np.array([1.0, 0.0]), Q, np.zeros(2), 1e-8)
    with pytest.raises(NonConvergenceError):
        cb.absorption_moments(np.array([1.0, 0.0]), Q, np.zeros(2))


# ---------------------------------------------------------------- approximations

def test_approximations_exact_for_single_node():
    pr = _p(N=1, M_C=1, p=0.35)
    pi = steady_state(cb.build_transitions("buffering", 0.5, pr))
    apx = cb.xr_moment_approximations(pi, pr)
    exact = cb.xr_exact(0.5, pr)[0]
    assert np.allclose(apx.mixture.probs, exact.probs, atol=1e-15)
    assert np.allclose(apx.average.probs, exact.probs, atol=1e-15)
    red, _ = cb.reduced_chain_buffering(pr, 0.5)
    assert np.allclose(red.probs, exact.probs, atol=1e-15)


@given(P0=st.floats(0.0, 1.0), switching=st.booleans())
def test_busy_share_is_a_probability(P0, switching):
    pr = _p(N=4, M_C=2, lam=0.05, protocol="switching" if switching else "buffering")
    P = cb.build_transitions(pr.protocol, P0, pr)
    pi = steady_state(P)
    apx = cb.xr_moment_approximations(pi, pr, P.states)
    w = cb.competing_weights(pi, P.states)
    assert 0.0 <= apx.H_smax <= 1.0
    assert apx.H_smax == pytest.approx(sum(x for s, x in zip(P.states, w) if s.k == pr.s_max))
    assert apx.mixture_moments.m1 == pytest.approx(apx.mixture.moments().m1, rel=1e-6)
    assert apx.average_moments.m1 == pytest.approx(apx.average.moments().m1, rel=1e-6)


def test_mixture_close_to_exact_at_moderate_load():
    pr = _p(N=5, M_C=5, p_c=0.1, eta=0.95, eta_C=0.95, q=0.1, p=0.3, lam=0.01)
    fp = cb.fixed_point_p0("buffering", pr, "exact-recursion")
    exact = fp.xr.m1
    mix, _ = cb.xr_moments_at(fp.P0, pr, "mixture")
    assert mix.m1 == pytest.approx(exact, rel=0.10)


def test_reduced_chain_structure():
    pr = _p(N=5, M_C=3, lam=0.02)
    pmf, P = cb.reduced_chain_buffering(pr, 0.6)
    assert np.abs(P.row_sums() - 1).max() < 1e-12
    assert pmf.total >= 1 - 1e-8
    with pytest.raises(UnsupportedMethodError):
        cb.reduced_chain_buffering(pr.with_(protocol="switching"), 0.6)


def test_reduced_chain_tracks_combined_at_low_load():
    pr = _p(N=10, M_C=10, p_c=0.1, eta=0.95, eta_C=0.95, q=0.05, p=0.3, lam=0.002)
    a = cb.solve_delay(pr, "combined-exact").mean_system_time
    b = cb.solve_delay(pr, "pawelczak").mean_system_time
    assert b == pytest.approx(a, rel=0.05)


# ---------------------------------------------------------------- fixed point

def test_vanishing_traffic_empties_queue():
    pr = _p(N=4, M_C=2, lam=1e-7)
    fp = cb.fixed_point_p0("buffering", pr)
    assert fp.converged and fp.P0 == pytest.approx(1.0, abs=1e-4)
    zero = cb.fixed_point_p0("buffering", pr.with_(lam=0.0))
    assert zero.P0 == 1.0 and zero.rho == 0.0


@pytest.mark.parametrize("method", cb.METHODS)
def test_unit_service_fixed_point(method):
    pr = derive(N=1, M_C=1, p_c=0.0, eta=1.0, eta_C=1.0, lam=0.1, q=1.0, p=1.0)
    fp = cb.fixed_point_p0("buffering", pr, method)
    assert fp.converged
    assert fp.service.x1 == pytest.approx(2.0)
    assert fp.P0 == pytest.approx(0.8, abs=1e-7)
    rep = cb.solve_delay(pr, {v: k for k, v in cb.REPORT_METHODS.items()}[method])
    assert rep.mean_system_time == pytest.approx(unit_delay(0.1), abs=1e-9)


@pytest.mark.parametrize("protocol", ["buffering", "switching"])
@pytest.mark.parametrize("method", ["exact-recursion", "mixture", "average"])
def test_fixed_point_consistency(protocol, method):
    pr = _p(N=6, M_C=3, lam=0.01, p_c=0.1, q=0.1, p=0.3)
    fp = cb.fixed_point_p0(protocol, pr, method)
    assert fp.converged and not fp.unstable
    assert fp.consistency_gap < 1e-6
    assert 0.0 <= fp.P0 <= 1.0


def test_overload_is_flagged():
    pr = _p(N=6, M_C=3, lam=0.2, q=0.1)
    fp = cb.fixed_point_p0("buffering", pr)
    assert fp.unstable
    rep = cb.solve_delay(pr)
    assert not rep.stable and math.isinf(rep.mean_system_time)


def test_iteration_budget_exhaustion_is_reported():
    pr = _p(N=6, M_C=3, lam=0.01, q=0.1)
    fp = cb.fixed_point_p0("buffering", pr, max_iter=2)
    assert not fp.converged and fp.unstable and fp.iterations == 2


def test_switching_initial_guess_includes_availability():
    pr = _p(N=3, M_C=3, p=0.5, p_c=0.2)
    assert cb.initial_xr(pr).m1 == pytest.approx(1 / (0.5 * pr.chi))
    assert cb.initial_xr(pr.with_(protocol="switching")).m1 == pytest.approx(1 / (0.5 * pr.chi * 0.8))


def test_literal_substitution_option():
    pr = _p(N=5, M_C=3, lam=0.01, eta=0.6, eta_C=0.95)
    a = cb.solve_delay(pr, substitution="chi")
    b = cb.solve_delay(pr, substitution="psi")
    assert a.stable and b.stable and a.mean_system_time != b.mean_system_time


def test_bad_method_names():
    with pytest.raises(ValueError):
        cb.fixed_point_p0("buffering", _p(), "magic")
    with pytest.raises(UnsupportedMethodError):
        cb.fixed_point_p0("switching", _p(), "reduced")


def test_pmf_view_matches_untruncated_moments():
    pr = _p(N=5, M_C=3, lam=0.01)
    a, _ = cb.xr_moments_at(0.7, pr, "exact-recursion")
    b, _ = cb.xr_moments_at(0.7, pr, "exact-recursion", truncated=True)
    assert a.m1 == pytest.approx(b.m1, rel=1e-6)
    assert isinstance(cb.xr_exact(0.7, pr)[0], DiscretePmf)


def test_stability_limit_single_node():
    pr = derive(N=1, M_C=1, p_c=0.0, eta=1.0, eta_C=1.0, lam=0.1, q=1.0, p=1.0)
    assert cb.stability_limit(pr) == pytest.approx(0.5)
    assert cb.stability_limit(pr, "mixture") == pytest.approx(0.5)


@pytest.mark.parametrize("protocol", ["buffering", "switching"])
def test_stability_limit_separates_regimes(protocol):
    pr = _p(N=6, M_C=3, lam=0.01, q=0.1, p=0.3, protocol=protocol)
    lim = cb.stability_limit(pr)
    assert cb.fixed_point_p0(protocol, pr.with_(lam=0.9 * lim)).rho < 1.0
    assert cb.fixed_point_p0(protocol, pr.with_(lam=1.02 * lim)).unstable


def test_spurious_light_fixed_point_is_flagged():
    """Just above the limit the iteration settles lightly, yet the backlog is self-sustaining."""
    pr = _p(N=6, M_C=3, lam=0.01, q=0.1, p=0.3, protocol="switching")
    lam = 1.05 * cb.stability_limit(pr)
    fp = cb.fixed_point_p0("switching", pr.with_(lam=lam))
    assert fp.converged and fp.rho < 1.0 and fp.saturated_rho >= 1.0 and fp.unstable
    rep = cb.solve_delay(pr.with_(lam=lam))
    assert not rep.stable and "backlogged" in rep.error
