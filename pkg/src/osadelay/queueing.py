"""Service-time construction and the Geom/G/1 mean system time."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, xlogy

from .core import (
    PMF_CAP,
    TAIL_TOL,
    DelayReport,
    DiscretePmf,
    Moments,
    Protocol,
    SystemParams,
    UnstableQueueError,
    UnsupportedMethodError,
)


def xt_moments(params: SystemParams) -> Moments:
    """Closed-form first and second moment of the buffering transmission time."""
    r = params.q * params.psi
    if r <= 0.0:
        raise UnstableQueueError(math.inf, "q*psi = 0: transmission never completes")
    return Moments(1.0 / r, (2.0 - r) / r**2)


def xt_distribution(params: SystemParams, tail_tol: float = TAIL_TOL) -> tuple[DiscretePmf, Moments]:
    """Transmission-time pmf as a geometric mixture of negative binomials.

    Pr(X_T=k) = sum_n C(k-1, n-1) psi^n (1-psi)^(k-n) (1-q)^(n-1) q, evaluated
    term by term in log space and extended until the residual mass drops
    below ``tail_tol``. The returned moments are the closed forms.
    """
    moments = xt_moments(params)
    psi, q = params.psi, params.q
    masses = [0.0]
    acc = 0.0
    k = 0
    while 1.0 - acc >= tail_tol and k < PMF_CAP:
        k += 1
        n = np.arange(1, k + 1)
        log_c = gammaln(k) - gammaln(n) - gammaln(k - n + 1)
        log_terms = (log_c + xlogy(n, psi) + xlogy(k - n, 1.0 - psi)
                     + xlogy(n - 1, 1.0 - q) + math.log(q))
        mass = float(np.exp(log_terms).sum())
        masses.append(mass)
        acc += mass
    return DiscretePmf.from_masses(masses), moments


@dataclass(frozen=True)
class RenewalMoments:
    """Per-packet interruption statistics of the switching protocol.

    ``n`` counts interruptions, ``m = n + 1`` reservation periods and
    ``L_e`` the slots spent transmitting on an available channel.
    """

    p_complete: float
    n1: float
    n2: float
    le_n: float
    le1: float
    le2: float

    @property
    def m1(self) -> float:
        return self.n1 + 1.0

    @property
    def m2(self) -> float:
        return self.n2 + 2.0 * self.n1 + 1.0


def geometric_min_prob(p1: float, p2: float) -> float:
    """Pr(R1 <= R2) for independent geometrics on {1, 2, ...}."""
    return p1 / (1.0 - (1.0 - p1) * (1.0 - p2))


def renewal_moments(params: SystemParams) -> RenewalMoments:
    r = params.q * params.eta
    pc = params.p_c
    # per available slot: finish w.p. r, else interrupted next slot w.p. pc
    done = geometric_min_prob(r, pc)
    # 1 - done written out so that it is exactly zero when pc = 0
    not_done = (1.0 - r) * pc / (1.0 - (1.0 - r) * (1.0 - pc))
    n1 = pc * (1.0 - r) / r
    n2 = n1**2 + not_done / done**2
    le_n = 2.0 * pc * (1.0 - r) / r**2
    le1 = 1.0 / r
    return RenewalMoments(p_complete=done, n1=n1, n2=n2, le_n=le_n,
                          le1=le1, le2=le1**2 + (1.0 - r) / r**2)


@dataclass(frozen=True)
class ServiceMoments:
    x1: float
    x2: float
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.x2 < self.x1**2 * (1 - 1e-9):
            raise ValueError("service second moment below squared mean")
        if any(v < 0 for v in self.components.values()):
            raise ValueError("negative service component")


def service_moments(protocol, xr: Moments, params: SystemParams) -> ServiceMoments:
    """Compose E[X] and E[X^2] from the reservation-period moments.

    Buffering: X = X_R + X_T with independent parts. Switching:
    X = L_e + m X_R, a random sum of i.i.d. reservation periods whose count
    m = n + 1 is correlated with L_e only through E[L_e n].
    """
    protocol = Protocol.parse(protocol)
    if protocol is Protocol.BUFFERING:
        xt = xt_moments(params)
        x1 = xr.m1 + xt.m1
        x2 = xr.m2 + 2.0 * xr.m1 * xt.m1 + xt.m2
        comps = {"E[X_R]": xr.m1, "E[X_R^2]": xr.m2, "E[X_T]": xt.m1, "E[X_T^2]": xt.m2}
        return ServiceMoments(x1, x2, comps)

    rn = renewal_moments(params)
    x1 = rn.le1 + rn.m1 * xr.m1
    x2 = (rn.le2 + 2.0 * xr.m1 * (rn.le_n + rn.le1)
          + rn.m1 * (xr.m2 - xr.m1**2) + rn.m2 * xr.m1**2)
    comps = {"E[X_R]": xr.m1, "E[X_R^2]": xr.m2, "E[L_e]": rn.le1, "E[L_e^2]": rn.le2,
             "E[n]": rn.n1, "E[n^2]": rn.n2, "E[L_e n]": rn.le_n}
    return ServiceMoments(x1, x2, comps)


def geom_g1_delay(lam: float, sm: ServiceMoments) -> float:
    """Mean system time in slots of a late-arrival Geom/G/1 queue.

    E[T] = E[X] + lam (E[X^2] - E[X]) / (2 (1 - lam E[X])); arrivals at the
    end of a slot are served from the next slot on.
    """
    rho = lam * sm.x1
    if rho >= 1.0:
        raise UnstableQueueError(rho)
    return sm.x1 + lam * (sm.x2 - sm.x1) / (2.0 * (1.0 - rho))


def single_node_delay(params: SystemParams) -> DelayReport:
    """Exact mean system time for N = 1, where the reservation period is geometric."""
    if params.N != 1:
        raise UnsupportedMethodError("the single-node closed form needs N = 1")
    r = params.p * params.chi * ((1.0 - params.p_c) if params.switching else 1.0)
    sm = service_moments(params.protocol, Moments(1.0 / r, (2.0 - r) / r**2), params)
    rho = params.lam * sm.x1
    if rho >= 1.0:
        return DelayReport("closed-form-n1", math.inf, stable=False, rho=rho, service_m2=sm.x2,
                           error=str(UnstableQueueError(rho)))
    return DelayReport("closed-form-n1", geom_g1_delay(params.lam, sm), rho=rho, service_m2=sm.x2)
