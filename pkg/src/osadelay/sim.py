"""Slot-accurate simulator of the buffering and switching MAC protocols.

Per slot: sensing -> control-channel competition -> transmission ->
termination/release -> arrivals. A packet arriving in slot ``a`` competes
from slot ``a + 1``; its system time is ``departure_slot - a``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .core import ParameterError, SystemParams

WARMUP_FRACTION = 0.1
N_BATCHES = 20
MIN_HORIZON = 10**4

# layout of the scalar accumulator returned by the kernel
_S_T, _S_T2, _S_N = 0, 1, 2                 # system time sums, completed
_S_X, _S_X2 = 3, 4                         # service time sums
_S_XR, _S_XR2, _S_XRN = 5, 6, 7            # reservation periods
_S_RN, _S_RN2, _S_RM, _S_LE, _S_LE2, _S_LEN = 8, 9, 10, 11, 12, 13  # renewal sums
_S_OCC, _S_NONEMPTY, _S_SLOTS = 14, 15, 16
_S_ACC, _S_DROP = 17, 18
_S_Q2, _S_Q4 = 19, 20
_S_MAXBUSY, _S_OCCTX = 21, 22
_S_LEN_ALL = 23


@njit(cache=True)
def _geometric_length(rng, q):
    if q >= 1.0:
        return 1
    u = rng.random()
    return 1 + int(math.floor(math.log1p(-u) / math.log1p(-q)))


@njit(cache=True)
def _kernel(rng, N, M_C, p_c, eta, eta_C, lam, q, p, switching, horizon, warmup,
            truncated, qs_max, n_batches):
    acc = np.zeros(_S_LEN_ALL)
    hist = np.zeros(N + 1, np.int64)
    batch_t = np.zeros(n_batches)
    batch_n = np.zeros(n_batches)
    batch_occ = np.zeros(n_batches)
    batch_slots = np.zeros(n_batches)

    nq = np.zeros(N, np.int64)
    busy = np.zeros(N, np.bool_)
    done = np.zeros(N, np.bool_)
    ch = np.full(N, -1, np.int64)
    remaining = np.zeros(N, np.int64)
    svc_start = np.zeros(N, np.int64)
    res_start = np.zeros(N, np.int64)
    xr_open = np.zeros(N, np.bool_)
    op_on_ch = np.zeros(N, np.int64)
    pk_n = np.zeros(N, np.int64)
    pk_m = np.zeros(N, np.int64)
    pk_le = np.zeros(N, np.int64)
    owner = np.full(M_C, -1, np.int64)
    occ = np.zeros(M_C, np.bool_)

    cap = 64
    fifo = np.zeros((N, cap), np.int64)
    head = np.zeros(N, np.int64)

    span = horizon - warmup
    q2_lo, q2_hi = horizon // 4, horizon // 2
    q4_lo = (3 * horizon) // 4

    for t in range(horizon):
        measuring = t >= warmup
        total_q = 0
        for i in range(N):
            total_q += nq[i]
        if measuring:
            b = (t - warmup) * n_batches // span
            acc[_S_OCC] += total_q
            batch_occ[b] += total_q
            batch_slots[b] += 1.0
            acc[_S_SLOTS] += 1.0
            for i in range(N):
                if nq[i] > 0:
                    acc[_S_NONEMPTY] += 1.0
        if q2_lo <= t < q2_hi:
            acc[_S_Q2] += total_q
        elif t >= q4_lo:
            acc[_S_Q4] += total_q

        # sensing
        ctrl_occ = rng.random() < p_c
        for c in range(M_C):
            occ[c] = rng.random() < p_c
        if switching:
            for i in range(N):
                if busy[i] and occ[ch[i]]:
                    owner[ch[i]] = -1
                    ch[i] = -1
                    busy[i] = False
                    if op_on_ch[i] > 0:
                        # interrupted after transmitting: a new reservation period
                        pk_n[i] += 1
                        res_start[i] = t
                        xr_open[i] = True

        # competition
        u_ctrl = rng.random()
        g = 0
        ntx = 0
        tx_node = -1
        for i in range(N):
            u = rng.random()
            if not busy[i] and nq[i] > 0:
                g += 1
                if u < p:
                    ntx += 1
                    tx_node = i
        if measuring:
            hist[g] += 1
        winner = -1
        if ntx == 1 and not ctrl_occ and u_ctrl < eta_C:
            winner = tx_node

        # transmission
        n_busy = 0
        for i in range(N):
            u = rng.random()
            if not busy[i]:
                continue
            n_busy += 1
            if xr_open[i]:
                xr_open[i] = False
                pk_m[i] += 1
                if t >= warmup:
                    xr = t - res_start[i]
                    acc[_S_XR] += xr
                    acc[_S_XR2] += xr * xr
                    acc[_S_XRN] += 1.0
            if occ[ch[i]]:
                if switching:
                    acc[_S_OCCTX] += 1.0
                continue
            op_on_ch[i] += 1
            pk_le[i] += 1
            if u < eta:
                remaining[i] -= 1
                if remaining[i] == 0:
                    done[i] = True
        if n_busy > acc[_S_MAXBUSY]:
            acc[_S_MAXBUSY] = n_busy

        granted = -1
        if winner >= 0:
            for c in range(M_C):
                if owner[c] < 0:
                    granted = c
                    break

        # termination and release
        for i in range(N):
            if not done[i]:
                continue
            done[i] = False
            owner[ch[i]] = -1
            ch[i] = -1
            busy[i] = False
            arr = fifo[i, head[i]]
            head[i] = (head[i] + 1) % cap
            nq[i] -= 1
            if arr >= warmup:
                T = t - arr
                X = t - svc_start[i] + 1
                acc[_S_T] += T
                acc[_S_T2] += T * T
                acc[_S_N] += 1.0
                acc[_S_X] += X
                acc[_S_X2] += X * X
                acc[_S_RN] += pk_n[i]
                acc[_S_RN2] += pk_n[i] * pk_n[i]
                acc[_S_RM] += pk_m[i]
                acc[_S_LE] += pk_le[i]
                acc[_S_LE2] += pk_le[i] * pk_le[i]
                acc[_S_LEN] += pk_le[i] * pk_n[i]
                b = (t - warmup) * n_batches // span
                batch_t[b] += T
                batch_n[b] += 1.0
            if nq[i] > 0:
                svc_start[i] = t + 1
                res_start[i] = t + 1
                xr_open[i] = True
                remaining[i] = _geometric_length(rng, q)
                pk_n[i] = 0
                pk_m[i] = 0
                pk_le[i] = 0

        if winner >= 0 and granted < 0:
            # all channels were held: only a channel released this slot can be granted
            for c in range(M_C):
                if owner[c] < 0:
                    granted = c
                    break
        if granted >= 0:
            owner[granted] = winner
            ch[winner] = granted
            busy[winner] = True
            op_on_ch[winner] = 0

        # arrivals
        for i in range(N):
            u = rng.random()
            if u >= lam:
                continue
            if truncated and nq[i] >= qs_max:
                if measuring:
                    acc[_S_DROP] += 1.0
                continue
            if nq[i] == cap:
                bigger = np.zeros((N, 2 * cap), np.int64)
                for j in range(N):
                    for r in range(nq[j]):
                        bigger[j, r] = fifo[j, (head[j] + r) % cap]
                    head[j] = 0
                fifo = bigger
                cap *= 2
            fifo[i, (head[i] + nq[i]) % cap] = t
            nq[i] += 1
            if measuring:
                acc[_S_ACC] += 1.0
            if nq[i] == 1:
                svc_start[i] = t + 1
                res_start[i] = t + 1
                xr_open[i] = True
                remaining[i] = _geometric_length(rng, q)
                pk_n[i] = 0
                pk_m[i] = 0
                pk_le[i] = 0

    acc[_S_Q2] /= max(q2_hi - q2_lo, 1)
    acc[_S_Q4] /= max(horizon - q4_lo, 1)
    return acc, hist, batch_t, batch_n, batch_occ, batch_slots


@dataclass(frozen=True, eq=False)
class SimStats:
    """Summary of one replication or a pooled batch (times in slots)."""

    completed: int
    mean_system_time: float
    ci95_halfwidth: float
    mean_occupancy: float
    occupancy_ci95: float
    dropped: int
    accepted_rate: float
    busy_fraction: float
    competition_hist: np.ndarray
    unstable: bool
    defined: bool
    service_m1: float
    service_m2: float
    reservation_m1: float
    reservation_m2: float
    renewal: dict
    max_busy: int
    occupied_tx: int
    replications: int = 1
    replication_means: tuple = field(default=())

    def __eq__(self, other):
        if not isinstance(other, SimStats):
            return NotImplemented
        return _key(self) == _key(other)


def _key(s: SimStats):
    vals = []
    for name in SimStats.__dataclass_fields__:
        v = getattr(s, name)
        if isinstance(v, np.ndarray):
            v = tuple(v.tolist())
        elif isinstance(v, dict):
            v = tuple(sorted(v.items()))
        elif isinstance(v, float) and math.isnan(v):
            v = "nan"
        vals.append(v)
    return tuple(vals)


@dataclass
class _Raw:
    acc: np.ndarray
    hist: np.ndarray
    batch_t: np.ndarray
    batch_n: np.ndarray
    batch_occ: np.ndarray
    batch_slots: np.ndarray
    N: int
    truncated: bool

    @property
    def unstable(self) -> bool:
        if self.truncated:
            return False
        q2 = self.acc[_S_Q2] / self.N
        q4 = self.acc[_S_Q4] / self.N
        return bool(q4 > 2.0 * q2 and q4 >= 1.0)


def _t_halfwidth(samples) -> float:
    samples = np.asarray(samples, dtype=float)
    samples = samples[np.isfinite(samples)]
    if samples.size < 2:
        return math.nan
    return float(stats.t.ppf(0.975, samples.size - 1) * samples.std(ddof=1) / math.sqrt(samples.size))


def _ratio(a, b):
    return float(a / b) if b > 0 else math.nan


def _summarise(raws: list[_Raw]) -> SimStats:
    acc = np.sum([r.acc for r in raws], axis=0)
    N = raws[0].N
    completed = int(acc[_S_N])
    mean_t = _ratio(acc[_S_T], acc[_S_N])
    mean_occ = _ratio(acc[_S_OCC], acc[_S_SLOTS] * N)
    if len(raws) == 1:
        r = raws[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            t_means = r.batch_t / r.batch_n
            occ_means = r.batch_occ / (r.batch_slots * N)
        rep_means = (float(mean_t),)
    else:
        t_means = [_ratio(r.acc[_S_T], r.acc[_S_N]) for r in raws]
        occ_means = [_ratio(r.acc[_S_OCC], r.acc[_S_SLOTS] * N) for r in raws]
        rep_means = tuple(float(x) for x in t_means)
        if all(math.isfinite(x) for x in t_means):
            mean_t = float(np.mean(t_means))
        mean_occ = float(np.mean(occ_means))
    renewal = {
        "packets": completed,
        "n1": _ratio(acc[_S_RN], acc[_S_N]),
        "n2": _ratio(acc[_S_RN2], acc[_S_N]),
        "m1": _ratio(acc[_S_RM], acc[_S_N]),
        "le1": _ratio(acc[_S_LE], acc[_S_N]),
        "le2": _ratio(acc[_S_LE2], acc[_S_N]),
        "le_n": _ratio(acc[_S_LEN], acc[_S_N]),
    }
    slots = acc[_S_SLOTS]
    return SimStats(
        completed=completed,
        mean_system_time=float(mean_t),
        ci95_halfwidth=_t_halfwidth(t_means),
        mean_occupancy=float(mean_occ),
        occupancy_ci95=_t_halfwidth(occ_means),
        dropped=int(acc[_S_DROP]),
        accepted_rate=_ratio(acc[_S_ACC], slots * N),
        busy_fraction=_ratio(acc[_S_NONEMPTY], slots * N),
        competition_hist=np.sum([r.hist for r in raws], axis=0),
        unstable=any(r.unstable for r in raws),
        defined=completed > 0,
        service_m1=_ratio(acc[_S_X], acc[_S_N]),
        service_m2=_ratio(acc[_S_X2], acc[_S_N]),
        reservation_m1=_ratio(acc[_S_XR], acc[_S_XRN]),
        reservation_m2=_ratio(acc[_S_XR2], acc[_S_XRN]),
        renewal=renewal,
        max_busy=int(max(r.acc[_S_MAXBUSY] for r in raws)),
        occupied_tx=int(acc[_S_OCCTX]),
        replications=len(raws),
        replication_means=rep_means,
    )


def _run_raw(params: SystemParams, horizon: int, seed: int, truncated: bool) -> _Raw:
    if horizon < MIN_HORIZON:
        raise ParameterError("horizon", f"must be >= {MIN_HORIZON}, got {horizon}")
    warmup = int(horizon * WARMUP_FRACTION)
    rng = np.random.default_rng(seed)
    out = _kernel(rng, params.N, params.M_C, params.p_c, params.eta, params.eta_C,
                  params.lam, params.q, params.p, params.switching, int(horizon), warmup,
                  bool(truncated), params.Qs_max, N_BATCHES)
    return _Raw(*out, N=params.N, truncated=bool(truncated))


def run_replication(params: SystemParams, horizon: int, seed: int, truncated: bool = False) -> SimStats:
    """One independent run; the CI comes from batch means over the run."""
    return _summarise([_run_raw(params, horizon, seed, truncated)])


def run_batch(params: SystemParams, horizon: int, replications: int, base_seed: int,
              truncated: bool = False) -> SimStats:
    """Replications seeded ``base_seed + r``; Student-t CI over replication means."""
    if replications < 2:
        raise ParameterError("replications", f"need at least 2, got {replications}")
    raws = [_run_raw(params, horizon, base_seed + r, truncated) for r in range(replications)]
    return _summarise(raws)
