"""Combined (k, g) Markov chains, reservation-period laws and the P0 fixed point.

``k`` counts busy nodes (for switching: busy nodes whose channel is available
after sensing) and ``g`` idle nodes with a non-empty queue. Nodes are assumed
homogeneous, so a terminating node rejoins the competitors with probability
``1 - P0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .core import (
    PMF_CAP,
    TAIL_TOL,
    DelayReport,
    DiscretePmf,
    Moments,
    NonConvergenceError,
    Protocol,
    SystemParams,
    UndefinedDelayError,
    UnstableQueueError,
    UnsupportedMethodError,
    binom_pmf,
)
from .markov import TransitionMatrix, steady_state
from .queueing import ServiceMoments, geom_g1_delay, service_moments

DAMPING = 0.5
FP_TOL = 1e-8
FP_MAX_ITER = 500
STALL_WINDOW = 10_000

METHODS = ("exact-recursion", "mixture", "average", "reduced")
SUBSTITUTIONS = ("chi", "psi")


class DegenerateScenarioError(UndefinedDelayError):
    """No competition ever takes place, so the reservation period is undefined."""


class CombinedState(NamedTuple):
    k: int
    g: int


def combined_states(params: SystemParams) -> list[CombinedState]:
    """All (k, g) with k <= s_max and k + g <= N, ordered by (k, g)."""
    return [CombinedState(k, g) for k in range(params.s_max + 1) for g in range(params.N - k + 1)]


def success_prob(g: float, params: SystemParams) -> float:
    """Pr(exactly one of g competitors transmits and is captured)."""
    if g <= 0:
        return 0.0
    return g * params.p * (1.0 - params.p) ** (g - 1) * params.chi


def other_wins_prob(g: float, params: SystemParams, substitution: str = "chi") -> float:
    """Pr(one of the other g-1 competitors wins) as seen by a marked competitor."""
    if g <= 1:
        return 0.0
    factor = params.chi if substitution == "chi" else params.psi
    return (g - 1) * params.p * (1.0 - params.p) ** (g - 1) * factor


def no_termination_prob(k: int, params: SystemParams) -> float:
    return (1.0 - params.termination_prob) ** k


def competition_success(k: int, g: float, params: SystemParams) -> tuple[float, float, float]:
    """(P_s(g), P_s(k, g), P_s^m(k, g)); the switching availability factor is not applied."""
    if g <= 0:
        return 0.0, 0.0, 0.0
    ps = success_prob(g, params)
    ps_kg = ps if k < params.s_max else ps * (1.0 - no_termination_prob(k, params))
    return ps, ps_kg, ps_kg / g


def marked_success(k: int, g: float, params: SystemParams) -> float:
    """Per-slot probability that a marked competitor starts transmitting."""
    psm = competition_success(k, g, params)[2]
    return psm * (1.0 - params.p_c) if params.switching else psm


@dataclass(frozen=True, eq=False)
class AuxProbs:
    """Binomial building blocks T, S, Y and F of the combined transitions for one P0."""

    params: SystemParams
    P0: float
    _T: list = field(repr=False, default_factory=list)
    _F: list = field(repr=False, default_factory=list)
    _Y: dict = field(repr=False, default_factory=dict)

    @classmethod
    def build(cls, params: SystemParams, P0: float) -> "AuxProbs":
        if not 0.0 <= P0 <= 1.0:
            raise ValueError(f"P0={P0} outside [0, 1]")
        N = params.N
        T = [binom_pmf(k, params.termination_prob) for k in range(N + 1)]
        F = [binom_pmf(n, params.p_c) for n in range(N + 1)]
        rejoin = [binom_pmf(b, 1.0 - P0) for b in range(N + 1)]
        arrive = [binom_pmf(c, params.lam) for c in range(N + 1)]
        Y = {(b, c): np.convolve(rejoin[b], arrive[c]) for b in range(N + 1) for c in range(N + 1 - b)}
        return cls(params, P0, T, F, Y)

    def T(self, k: int, j: int) -> float:
        """Pr(j of k busy nodes terminate)."""
        return float(self._T[k][j]) if 0 <= j <= k else 0.0

    def S(self, g: int, j: int) -> float:
        ps = success_prob(g, self.params)
        return ps if j == 1 else 1.0 - ps if j == 0 else 0.0

    def F(self, n: int, stay: int) -> float:
        """Pr(stay of n ongoing sessions keep an available channel)."""
        return float(self._F[n][n - stay]) if 0 <= stay <= n else 0.0

    def Y(self, a: int, b: int, c: int) -> float:
        """Pr(a nodes join the competitors from b terminating and c empty idle nodes)."""
        if a < 0 or a > b + c:
            return 0.0
        return float(self._Y[(b, c)][a])

    def Y_vec(self, b: int, c: int) -> np.ndarray:
        return self._Y[(b, c)]


def aux_probs(params: SystemParams, P0: float) -> AuxProbs:
    return AuxProbs.build(params, P0)


def _scatter(row: np.ndarray, offset: int, coef: float, yv: np.ndarray, h_max: int) -> None:
    """row[offset + a] += coef * yv[a] over the valid h range."""
    if coef == 0.0:
        return
    lo = max(0, -offset)
    hi = min(yv.size, h_max + 1 - offset)
    if hi > lo:
        row[offset + lo: offset + hi] += coef * yv[lo:hi]


def _rows_buffering(aux: AuxProbs, s1: np.ndarray, states) -> list[dict]:
    p = aux.params
    N, s_max = p.N, p.s_max
    out = []
    for k, g in states:
        c = N - k - g
        S1 = s1[g]
        S0 = 1.0 - S1
        row = {}
        for z in range(0, min(k + 1, s_max) + 1):
            h_max = N - z
            vec = np.zeros(h_max + 1)
            if z == k + 1:
                _scatter(vec, g - 1, aux.T(k, 0) * S1, aux.Y_vec(0, c), h_max)
            elif z == 0:
                _scatter(vec, g, aux.T(k, k) * S0, aux.Y_vec(k, c), h_max)
            elif z == k == s_max:
                _scatter(vec, g - 1, aux.T(k, 1) * S1, aux.Y_vec(1, c), h_max)
                _scatter(vec, g, aux.T(k, 0), aux.Y_vec(0, c), h_max)
            else:
                _scatter(vec, g, aux.T(k, k - z) * S0, aux.Y_vec(k - z, c), h_max)
                _scatter(vec, g - 1, aux.T(k, k - z + 1) * S1, aux.Y_vec(k - z + 1, c), h_max)
            for h in np.flatnonzero(vec):
                row[(z, int(h))] = vec[h]
        out.append(row)
    return out


def _rows_switching(aux: AuxProbs, s1: np.ndarray, states) -> list[dict]:
    p = aux.params
    N, s_max, pc = p.N, p.s_max, p.p_c
    out = []
    for k, g in states:
        c = N - k - g
        win = s1[g] * (1.0 - pc)
        full = k == s_max
        row = {}
        for z in range(0, min(k + 1, s_max) + 1):
            h_max = N - z
            vec = np.zeros(h_max + 1)
            # i terminations; the other k - i either stay or are evicted at sensing
            for i in range(0, k - z + 1):
                # with every channel held, a winner needs a channel freed by termination
                lose = 1.0 if full and i == 0 else 1.0 - win
                coef = aux.T(k, i) * aux.F(k - i, z) * lose
                _scatter(vec, g + (k - i - z), coef, aux.Y_vec(i, c), h_max)
            if z >= 1:
                for i in range(0, k - z + 2):
                    if full and i == 0:
                        continue
                    coef = aux.T(k, i) * aux.F(k - i, z - 1) * win
                    _scatter(vec, g + (k - i - z), coef, aux.Y_vec(i, c), h_max)
            for h in np.flatnonzero(vec):
                row[(z, int(h))] = vec[h]
        out.append(row)
    return out


def _assemble(rows: list[dict], states, name: str) -> TransitionMatrix:
    index = {s: i for i, s in enumerate(states)}
    M = np.zeros((len(states), len(states)))
    for r, row in enumerate(rows):
        for key, val in row.items():
            M[r, index[key]] += val
    return TransitionMatrix(tuple(states), M, name=name)


def _build(params: SystemParams, P0: float, s1: np.ndarray, name: str) -> TransitionMatrix:
    states = combined_states(params)
    aux = aux_probs(params, P0)
    rows = (_rows_switching if params.switching else _rows_buffering)(aux, s1, states)
    return _assemble(rows, states, name)


def _with_protocol(protocol, params: SystemParams) -> SystemParams:
    protocol = Protocol.parse(protocol)
    return params if params.protocol is protocol else params.with_(protocol=protocol)


def build_transitions(protocol, P0: float, params: SystemParams) -> TransitionMatrix:
    """Transition matrix of the combined chain at a given P0."""
    params = _with_protocol(protocol, params)
    s1 = np.array([success_prob(g, params) for g in range(params.N + 1)])
    return _build(params, P0, s1, f"combined[{params.protocol.value}]")


def build_marked_transitions(protocol, P0: float, params: SystemParams,
                             substitution: str = "chi") -> TransitionMatrix:
    """Chain Q seen by a marked competitor that keeps failing; only others may win."""
    if substitution not in SUBSTITUTIONS:
        raise ValueError(f"substitution must be one of {SUBSTITUTIONS}")
    params = _with_protocol(protocol, params)
    s1 = np.array([other_wins_prob(g, params, substitution) for g in range(params.N + 1)])
    return _build(params, P0, s1, f"marked[{params.protocol.value}]")


def marked_success_vector(states, params: SystemParams) -> np.ndarray:
    return np.array([marked_success(k, g, params) for k, g in states])


def _propagate(v0: np.ndarray, Q: np.ndarray, psm: np.ndarray, tail_tol: float) -> DiscretePmf:
    """Failure-mass propagation: slot i succeeds with mass v_i . psm."""
    fail = 1.0 - psm
    masses = [0.0]
    v = np.asarray(v0, dtype=float)
    remaining = float(v.sum())
    checkpoint = remaining
    while remaining >= tail_tol:
        masses.append(float(v @ psm))
        v = (v * fail) @ Q
        remaining = float(v.sum())
        if len(masses) % STALL_WINDOW == 0:
            if remaining > checkpoint * (1.0 - 1e-6) or len(masses) >= PMF_CAP:
                raise NonConvergenceError(
                    f"reservation period does not terminate (residual mass {remaining:.3g}): unstable")
            checkpoint = remaining
    return DiscretePmf.from_masses(masses)


def xr_conditional(k: int, g: int, Q: TransitionMatrix, params: SystemParams,
                   tail_tol: float = TAIL_TOL) -> DiscretePmf:
    """Reservation-period pmf for a marked competitor entering in state (k, g)."""
    if g < 1:
        raise ValueError("a marked competitor needs g >= 1")
    idx = Q.index()
    v0 = np.zeros(Q.size)
    v0[idx[CombinedState(k, g)]] = 1.0
    psm = marked_success_vector(Q.states, params)
    return _propagate(v0, Q.dense(), psm, tail_tol)


def competing_weights(pi: np.ndarray, states) -> np.ndarray:
    """pi restricted to g > 0 and renormalised."""
    g = np.array([s.g for s in states])
    w = np.where(g > 0, pi, 0.0)
    total = w.sum()
    if total <= 0.0:
        raise DegenerateScenarioError("all stationary mass on g=0: no competition ever happens")
    return w / total


def xr_unconditional(conditionals: dict, pi: np.ndarray, params: SystemParams,
                     states=None) -> DiscretePmf:
    """Mix the per-state reservation laws with the renormalised stationary weights."""
    states = states if states is not None else combined_states(params)
    w = competing_weights(pi, states)
    weights, pmfs = [], []
    for s, ws in zip(states, w):
        if s.g > 0 and ws > 0.0:
            weights.append(ws)
            pmfs.append(conditionals[s])
    weights = np.asarray(weights)
    return DiscretePmf.mixture(weights / weights.sum(), pmfs)


def _marked_problem(P0: float, params: SystemParams, substitution: str):
    """(start weights, Q, per-state marked success, pi) of the exact recursion."""
    P = build_transitions(params.protocol, P0, params)
    pi = steady_state(P)
    Q = build_marked_transitions(params.protocol, P0, params, substitution)
    w = competing_weights(pi, P.states)
    return w, Q.dense(), marked_success_vector(P.states, params), pi


def xr_exact(P0: float, params: SystemParams, substitution: str = "chi",
             tail_tol: float = TAIL_TOL) -> tuple[DiscretePmf, np.ndarray]:
    """Unconditional reservation pmf by propagating the renormalised pi directly."""
    w, Q, psm, pi = _marked_problem(P0, params, substitution)
    return _propagate(w, Q, psm, tail_tol), pi


def absorption_moments(v0: np.ndarray, Q: np.ndarray, psm: np.ndarray) -> Moments:
    """Untruncated first two moments of the first-success slot.

    With D = diag(1 - psm): m1 = 1 + D Q m1 and m2 = 1 + D Q (2 m1 + m2).
    """
    n = psm.size
    DQ = (1.0 - psm)[:, None] * Q
    A = np.eye(n) - DQ
    ones = np.ones(n)
    try:
        m1 = np.linalg.solve(A, ones)
        m2 = np.linalg.solve(A, ones + 2.0 * DQ @ m1)
    except np.linalg.LinAlgError:
        raise NonConvergenceError("reservation period never ends from some state: unstable") from None
    live = v0 > 0
    if not (np.all(np.isfinite(m1[live])) and np.all(m1[live] >= 1.0 - 1e-9)
            and np.all(m2[live] > 0)):
        raise NonConvergenceError("reservation period moments diverge: unstable")
    return Moments(float(v0 @ m1), float(v0 @ m2))


def geometric_moments(r: float) -> Moments:
    return Moments(1.0 / r, (2.0 - r) / r**2)


@dataclass(frozen=True)
class XrApproximations:
    """Geometric approximations; pmfs are built on demand, moments in closed form."""

    H_smax: float
    G_bar: float
    g_weights: np.ndarray
    rates: dict
    average_rate: float
    tail_tol: float = TAIL_TOL

    @property
    def mixture(self) -> DiscretePmf:
        return DiscretePmf.mixture([self.g_weights[n] for n in self.rates],
                                   [DiscretePmf.geometric(r, self.tail_tol) for r in self.rates.values()])

    @property
    def average(self) -> DiscretePmf:
        return DiscretePmf.geometric(self.average_rate, self.tail_tol)

    @property
    def mixture_moments(self) -> Moments:
        w = self.g_weights
        return Moments(float(sum(w[n] / r for n, r in self.rates.items())),
                       float(sum(w[n] * (2.0 - r) / r**2 for n, r in self.rates.items())))

    @property
    def average_moments(self) -> Moments:
        return geometric_moments(self.average_rate)


def _approx_rate(n: float, H: float, params: SystemParams) -> float:
    below = competition_success(0, n, params)[2]
    at = competition_success(params.s_max, n, params)[2]
    r = (1.0 - H) * below + H * at
    return r * (1.0 - params.p_c) if params.switching else r


def xr_moment_approximations(pi: np.ndarray, params: SystemParams, states=None,
                             tail_tol: float = TAIL_TOL) -> XrApproximations:
    """Geometric mixture over Pr(g=n | g>0) and a single geometric at the mean g."""
    states = states if states is not None else combined_states(params)
    w = competing_weights(pi, states)
    H = float(sum(ws for s, ws in zip(states, w) if s.k == params.s_max))
    gw = np.zeros(params.N + 1)
    for s, ws in zip(states, w):
        gw[s.g] += ws
    G_bar = float(np.dot(np.arange(params.N + 1), gw))
    rates = {n: _approx_rate(n, H, params) for n in range(1, params.N + 1) if gw[n] > 0.0}
    return XrApproximations(H, G_bar, gw, rates, _approx_rate(G_bar, H, params), tail_tol)


def _reduced_problem(params: SystemParams, P0: float, substitution: str):
    """(start weights, Q, marked success, P) of the one-dimensional busy-count chain."""
    if params.switching:
        raise UnsupportedMethodError("the reduced busy-count chain applies to buffering only")
    N, s_max = params.N, params.s_max
    pm = params.p * (1.0 - P0)
    factor = params.chi if substitution == "chi" else params.psi
    T = [binom_pmf(k, params.termination_prob) for k in range(N + 1)]

    def chain(s1):
        P = np.zeros((s_max + 1, s_max + 1))
        for k in range(s_max + 1):
            S1 = s1(k)
            t = T[k]
            if k < s_max:
                P[k, k + 1] += t[0] * S1
            for z in range(0, k + 1):
                if z == k == s_max:
                    P[k, z] += t[0] + (t[1] * S1 if k >= 1 else 0.0)
                else:
                    P[k, z] += t[k - z] * (1.0 - S1)
                    if k - z + 1 <= k:
                        P[k, z] += t[k - z + 1] * S1
        return P

    def all_wins(k):
        m = N - k
        return m * pm * (1.0 - pm) ** (m - 1) * params.chi if m > 0 else 0.0

    def others_win(k):
        m = N - k - 1
        return m * pm * (1.0 - pm) ** m * factor if m > 0 else 0.0

    ks = tuple(range(s_max + 1))
    P = TransitionMatrix(ks, chain(all_wins), name="reduced")
    pi = steady_state(P)
    Q = chain(others_win)
    # a marked idle competitor needs k < N
    live = np.array([k < N for k in ks], dtype=float)
    w = pi * live
    if w.sum() <= 0.0:
        raise DegenerateScenarioError("no state with an idle marked node")
    w /= w.sum()
    psm = np.array([params.p * (1.0 - pm) ** (N - k - 1) * params.chi
                    * (1.0 if k < s_max else 1.0 - T[k][0]) if k < N else 0.0 for k in ks])
    return w, Q, psm, P


def reduced_chain_buffering(params: SystemParams, P0: float, substitution: str = "chi",
                            tail_tol: float = TAIL_TOL) -> tuple[DiscretePmf, TransitionMatrix]:
    """Reservation pmf from the one-dimensional busy-count chain with thinned access."""
    w, Q, psm, P = _reduced_problem(params, P0, substitution)
    return _propagate(w, Q, psm, tail_tol), P


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    P0: float
    iterations: int
    converged: bool
    rho: float
    unstable: bool
    method: str
    xr: Moments | None = None
    service: ServiceMoments | None = None
    pi: np.ndarray | None = None
    history: tuple = ()
    saturated_rho: float = math.nan

    @property
    def consistency_gap(self) -> float:
        """|(1 - P0) - lam E[X]| at the reported point."""
        return abs((1.0 - self.P0) - self.rho)


def initial_xr(params: SystemParams) -> Moments:
    """Lone-competitor reservation period: geometric with the single-node success rate."""
    r = params.p * params.chi * ((1.0 - params.p_c) if params.switching else 1.0)
    return Moments(1.0 / r, (2.0 - r) / r**2)


def xr_moments_at(P0: float, params: SystemParams, method: str, substitution: str = "chi",
                  tail_tol: float = TAIL_TOL, truncated: bool = False):
    """(reservation Moments, stationary pi or None) for one value of P0.

    By default the moments are the untruncated limits (linear solves and
    geometric closed forms); ``truncated=True`` reads them off the pmfs cut
    at ``tail_tol`` instead.
    """
    if method == "exact-recursion":
        w, Q, psm, pi = _marked_problem(P0, params, substitution)
        if truncated:
            return _propagate(w, Q, psm, tail_tol).moments(), pi
        return absorption_moments(w, Q, psm), pi
    if method in ("mixture", "average"):
        P = build_transitions(params.protocol, P0, params)
        pi = steady_state(P)
        approx = xr_moment_approximations(pi, params, P.states, tail_tol)
        if truncated:
            return getattr(approx, method).moments(), pi
        return getattr(approx, f"{method}_moments"), pi
    if method == "reduced":
        w, Q, psm, _ = _reduced_problem(params, P0, substitution)
        if truncated:
            return _propagate(w, Q, psm, tail_tol).moments(), None
        return absorption_moments(w, Q, psm), None
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def fixed_point_p0(protocol, params: SystemParams, method: str = "exact-recursion",
                   substitution: str = "chi", damping: float = DAMPING, tol: float = FP_TOL,
                   max_iter: int = FP_MAX_ITER) -> FixedPointResult:
    """Damped iteration P0 <- 1 - lam E[X(P0)], clamped to [0, 1].

    The result is flagged unstable when rho >= 1, when the iteration budget
    runs out, or when the fully backlogged state is itself self-sustaining.
    """
    params = _with_protocol(protocol, params)
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "reduced" and params.switching:
        raise UnsupportedMethodError("the reduced busy-count chain applies to buffering only")
    lam = params.lam

    if lam == 0.0:
        xr = initial_xr(params)
        sm = service_moments(params.protocol, xr, params)
        return FixedPointResult(1.0, 0, True, 0.0, False, method, xr, sm, saturated_rho=0.0)

    sm0 = service_moments(params.protocol, initial_xr(params), params)
    P0 = min(max(1.0 - lam * sm0.x1, 0.0), 1.0)
    history = [P0]
    xr = sm = pi = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        xr, pi = xr_moments_at(P0, params, method, substitution)
        sm = service_moments(params.protocol, xr, params)
        target = min(max(1.0 - lam * sm.x1, 0.0), 1.0)
        new = (1.0 - damping) * P0 + damping * target
        history.append(new)
        step = abs(new - P0)
        P0 = new
        if step < tol:
            converged = True
            break
    xr, pi = xr_moments_at(P0, params, method, substitution)
    sm = service_moments(params.protocol, xr, params)
    rho = lam * sm.x1
    sat = saturated_load(params, method, substitution)
    # a self-sustaining backlog makes any lighter fixed point spurious
    unstable = rho >= 1.0 or not converged or sat >= 1.0
    return FixedPointResult(P0, it, converged, rho, unstable, method, xr, sm, pi, tuple(history), sat)


def saturated_load(params: SystemParams, method: str = "exact-recursion",
                   substitution: str = "chi") -> float:
    """lam E[X] with every queue backlogged (P0 = 0).

    At or above 1 the fully backlogged state sustains itself, so the queue
    cannot drain even when the iteration also settles at a lighter point.
    """
    try:
        xr, _ = xr_moments_at(0.0, params, method, substitution)
    except NonConvergenceError:
        return math.inf
    return params.lam * service_moments(params.protocol, xr, params).x1


def stability_limit(params: SystemParams, method: str = "exact-recursion",
                    substitution: str = "chi", xtol: float = 1e-7) -> float:
    """Largest lam whose fully backlogged load stays below 1.

    The root of lam E[X(P0=0; lam)] = 1. Just above it the iteration may
    still settle at a lighter fixed point, but the backlog never drains.
    """
    def excess(lam):
        return saturated_load(params.with_(lam=lam), method, substitution) - 1.0

    hi = 1.0 / service_moments(params.protocol, initial_xr(params), params).x1
    if excess(hi) < 0.0:
        return hi
    return brentq(excess, hi * 1e-6, hi, xtol=xtol)


REPORT_METHODS = {
    "combined-exact": "exact-recursion",
    "combined-dist": "mixture",
    "combined-avg": "average",
    "pawelczak": "reduced",
}


def solve_delay(params: SystemParams, method: str = "combined-exact",
                substitution: str = "chi") -> DelayReport:
    """Mean system time from the fixed point and the Geom/G/1 formula."""
    fp = fixed_point_p0(params.protocol, params, REPORT_METHODS[method], substitution)
    extras = {"P0": fp.P0, "iterations": fp.iterations, "converged": fp.converged,
              "saturated_rho": fp.saturated_rho,
              "E[X_R]": fp.xr.m1, "E[X]": fp.service.x1}
    if fp.rho >= 1.0:
        return DelayReport(method, math.inf, stable=False, rho=fp.rho, service_m2=fp.service.x2,
                           error=str(UnstableQueueError(fp.rho)), extras=extras)
    if not fp.converged:
        return DelayReport(method, math.nan, stable=False, rho=fp.rho, service_m2=fp.service.x2,
                           error=f"non-convergence: fixed point did not settle in {fp.iterations} iterations",
                           extras=extras)
    if fp.saturated_rho >= 1.0:
        return DelayReport(method, math.inf, stable=False, rho=fp.rho, service_m2=fp.service.x2,
                           error=f"queue unstable: backlogged load {fp.saturated_rho:.6g} >= 1",
                           extras=extras)
    return DelayReport(method, geom_g1_delay(params.lam, fp.service), stable=True, rho=fp.rho,
                       service_m2=fp.service.x2, extras=extras)
