"""Exact truncated queue-occupancy Markov chains for both MAC protocols.

A state tracks every node: its queue length ``n_i`` (0..Qs_max) and whether it
holds a reserved data channel ``b_i``. Transition probabilities follow the
per-node factorisation with a single competition correction; for the
switching protocol the chain is observed right after the sensing period, so
``b_i = 1`` also means the reserved channel is available in that slot.
"""
from __future__ import annotations

import itertools
import math
from typing import NamedTuple

import numpy as np

from .core import DelayReport, SystemParams, UndefinedDelayError
from .markov import TransitionMatrix, csr_from_rows, steady_state

STATE_CAP = 10**5


class StateSpaceTooLarge(ValueError):
    pass


class OccupancyState(NamedTuple):
    n: tuple
    b: tuple

    @property
    def k(self) -> int:
        return sum(1 for ni, bi in zip(self.n, self.b) if bi == 1 and ni > 0)

    @property
    def g(self) -> int:
        return sum(1 for ni, bi in zip(self.n, self.b) if bi == 0 and ni > 0)

    @property
    def flat(self) -> tuple:
        return self.n + self.b


def count_states(N: int, Qs_max: int, s_max: int | None = None) -> int:
    s_max = N if s_max is None else s_max
    return sum(math.comb(N, j) * Qs_max**j * (Qs_max + 1) ** (N - j) for j in range(min(N, s_max) + 1))


def enumerate_states(N: int, Qs_max: int, s_max: int | None = None, cap: int = STATE_CAP) -> list[OccupancyState]:
    """All valid (n, b) states in lexicographic order."""
    s_max = N if s_max is None else s_max
    total = count_states(N, Qs_max, s_max)
    if total > cap:
        raise StateSpaceTooLarge(
            f"state-space too large ({total} states > cap {cap}), use combined MC")
    states = []
    for n in itertools.product(range(Qs_max + 1), repeat=N):
        for b in itertools.product((0, 1), repeat=N):
            if sum(b) > s_max or any(ni == 0 and bi == 1 for ni, bi in zip(n, b)):
                continue
            states.append(OccupancyState(n, b))
    return states


def _success(g: int, params: SystemParams) -> float:
    return g * params.p * (1.0 - params.p) ** (g - 1) * params.chi if g > 0 else 0.0


def _arrival_up(n, m, params):
    """m = n + (arrival); a full queue stays full whatever arrives."""
    if n == params.Qs_max:
        return 1.0 if m == n else 0.0
    if m == n + 1:
        return params.lam
    if m == n:
        return 1.0 - params.lam
    return 0.0


def _arrival_down(n, m, params):
    """m = n - 1 + (arrival) after a departure."""
    if m == n:
        return params.lam
    if m == n - 1:
        return 1.0 - params.lam
    return 0.0


def impossible(A: OccupancyState, B: OccupancyState, s_max: int) -> bool:
    """Membership of (A, B) in the set of impossible transitions."""
    num_s = num_t = 0
    for ni, bi, mi, ci in zip(A.n, A.b, B.n, B.b):
        if (ni == 0 and bi == 1) or (ni == 0 and ci == 1) or (mi == 0 and ci == 1):
            return True
        if not ni - 1 <= mi <= ni + 1:
            return True
        num_s += ci - bi == 1
        num_t += bi - ci == 1
    if num_s > 1:
        return True
    return A.k == s_max and num_s > 0 and num_t == 0


def transition_prob_buffering(A: OccupancyState, B: OccupancyState, params: SystemParams) -> float:
    if impossible(A, B, params.s_max):
        return 0.0
    qpsi = params.q * params.psi
    num_t = sum(bi - ci == 1 for bi, ci in zip(A.b, B.b))
    all_busy_no_ter = A.k == params.s_max and num_t == 0
    P = []
    group = []
    for i, (ni, bi, mi, ci) in enumerate(zip(A.n, A.b, B.n, B.b)):
        if ni == 0:
            P.append(_arrival_up(ni, mi, params))
        elif bi == 1:
            if ci == 1:
                P.append((1.0 - qpsi) * _arrival_up(ni, mi, params))
            else:
                P.append(qpsi * _arrival_down(ni, mi, params))
        else:
            group.append(i)
            P.append(_arrival_up(ni, mi, params))
    if group:
        g = len(group)
        ps = _success(g, params)
        winners = [i for i in group if B.b[i] == 1]
        if winners:
            P[winners[0]] *= ps / g
        elif not all_busy_no_ter:
            P[group[0]] *= 1.0 - ps
    return math.prod(P)


def transition_prob_switching(A: OccupancyState, B: OccupancyState, params: SystemParams) -> float:
    if impossible(A, B, params.s_max):
        return 0.0
    qeta = params.q * params.eta
    pc = params.p_c
    k_full = A.k == params.s_max
    num_t = sum(bi - ci == 1 for bi, ci in zip(A.b, B.b))
    all_busy_no_ter = k_full and num_t == 0
    P = []
    group = []
    p_t, p_m, p_mt = [], [], []
    for i, (ni, bi, mi, ci) in enumerate(zip(A.n, A.b, B.n, B.b)):
        if ni == 0:
            P.append(_arrival_up(ni, mi, params))
        elif bi == 1:
            if ci == 1:
                P.append((1.0 - qeta) * (1.0 - pc) * _arrival_up(ni, mi, params))
            else:
                evict = (1.0 - qeta) * pc * _arrival_up(ni, mi, params)
                term = qeta * _arrival_down(ni, mi, params)
                if not k_full:
                    P.append(evict + term)
                else:
                    P.append(1.0)
                    p_t.append(term)
                    p_m.append(evict)
                    p_mt.append(evict + term)
        else:
            group.append(i)
            P.append(_arrival_up(ni, mi, params))

    # at least one of the channel leavers terminated (rather than being evicted)
    p_10t = sum(math.prod(p_m[:h]) * p_t[h] * math.prod(p_mt[h + 1:]) for h in range(len(p_t)))
    p_allm = math.prod(p_m)
    leavers = math.prod(p_mt)
    if group:
        g = len(group)
        ps = _success(g, params)
        winners = [i for i in group if B.b[i] == 1]
        if winners:
            P[winners[0]] *= ps / g * (1.0 - pc)
            if k_full:
                leavers = p_10t
        elif not all_busy_no_ter:
            if not k_full:
                P[group[0]] *= 1.0 - ps * (1.0 - pc)
            else:
                # a won channel that is lost at the next sensing also leaves c = 0
                P[group[0]] *= p_allm + p_10t * (1.0 - ps) + p_10t * ps * pc
                leavers = 1.0
    return math.prod(P) * leavers


def _local_moves(ni: int, Qs_max: int):
    if ni == 0:
        return [(0, 0), (1, 0)]
    out = []
    for mi in (ni - 1, ni, ni + 1):
        if 0 <= mi <= Qs_max:
            out.append((mi, 0))
            if mi > 0:
                out.append((mi, 1))
    return out


def build_matrix(params: SystemParams, states: list[OccupancyState] | None = None) -> TransitionMatrix:
    """Sparse transition matrix of the occupancy chain for ``params.protocol``."""
    if states is None:
        states = enumerate_states(params.N, params.Qs_max, params.s_max)
    index = {s: i for i, s in enumerate(states)}
    prob = transition_prob_switching if params.switching else transition_prob_buffering
    rows = []
    for A in states:
        row = {}
        for combo in itertools.product(*(_local_moves(ni, params.Qs_max) for ni in A.n)):
            B = OccupancyState(tuple(c[0] for c in combo), tuple(c[1] for c in combo))
            j = index.get(B)
            if j is None:
                continue
            val = prob(A, B, params)
            if val > 0.0:
                row[j] = val
        rows.append(row)
    name = f"occupancy[{params.protocol.value}, N={params.N}, Qs_max={params.Qs_max}]"
    return TransitionMatrix(tuple(states), csr_from_rows(rows, len(states)), name=name)


def delay_from_pi(pi: np.ndarray, params: SystemParams, states) -> DelayReport:
    """Tagged-node mean system time via Little's law on the departure rate."""
    n1 = np.array([s.n[0] for s in states], dtype=float)
    busy1 = np.array([s.b[0] == 1 for s in states])
    mean_n = float(pi @ n1)
    theta = float(pi[busy1].sum()) * params.termination_prob
    if theta <= 0.0:
        raise UndefinedDelayError("zero throughput: mean delay undefined")
    empty = float(pi[n1 == 0].sum())
    full = float(pi[n1 == params.Qs_max].sum())
    return DelayReport(method="exact-mc", mean_system_time=mean_n / theta, rho=1.0 - empty,
                       extras={"mean_queue": mean_n, "throughput": theta, "P0": empty,
                               "full_prob": full})


def solve(params: SystemParams) -> DelayReport:
    P = build_matrix(params)
    pi = steady_state(P)
    return delay_from_pi(pi, params, P.states)
