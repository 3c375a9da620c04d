"""Scenario parameters, discrete distributions and shared exceptions."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

PROB_ATOL = 1e-12
TAIL_TOL = 1e-8
PMF_CAP = 10**6


class Protocol(str, enum.Enum):
    BUFFERING = "buffering"
    SWITCHING = "switching"

    @classmethod
    def parse(cls, value) -> "Protocol":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ParameterError("protocol", f"unknown protocol {value!r}") from None


class ParameterError(ValueError):
    """A scenario field is outside its admissible range."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class NonConvergenceError(RuntimeError):
    """An iterative numerical procedure did not converge."""


class UnstableQueueError(ArithmeticError):
    """The offered load is at or beyond the stability boundary."""

    def __init__(self, rho: float, message: str | None = None):
        super().__init__(message or f"queue unstable: rho={rho:.6g} >= 1")
        self.rho = rho


class UndefinedDelayError(ArithmeticError):
    """Mean delay cannot be formed (zero throughput)."""


class UnsupportedMethodError(ValueError):
    """A solution method was requested for a protocol it does not apply to."""


def _check_prob(name, value, lo=0.0, hi=1.0, lo_open=False, hi_open=False):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or math.isnan(value):
        raise ParameterError(name, f"expected a number, got {value!r}")
    if value < lo or value > hi or (lo_open and value == lo) or (hi_open and value == hi):
        left = "(" if lo_open else "["
        right = ")" if hi_open else "]"
        raise ParameterError(name, f"{value!r} not in {left}{lo}, {hi}{right}")


def _check_count(name, value, minimum=1):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ParameterError(name, f"expected an integer >= {minimum}, got {value!r}")


@dataclass(frozen=True)
class SystemParams:
    """All constants of one scenario.

    ``lam`` is the per-slot arrival probability, ``q`` the geometric
    packet-length parameter and ``p`` the Aloha access probability on the
    control channel. ``chi``, ``psi`` and ``s_max`` are derived.
    """

    N: int
    M_C: int
    p_c: float
    eta: float
    eta_C: float
    lam: float
    q: float
    p: float
    Qs_max: int = 10
    protocol: Protocol = Protocol.BUFFERING
    chi: float = field(init=False)
    psi: float = field(init=False)
    s_max: int = field(init=False)

    def __post_init__(self):
        _check_count("N", self.N)
        _check_count("M_C", self.M_C)
        _check_count("Qs_max", self.Qs_max)
        _check_prob("p_c", self.p_c)
        _check_prob("eta", self.eta, lo_open=True)
        _check_prob("eta_C", self.eta_C, lo_open=True)
        _check_prob("lam", self.lam, hi_open=True)
        _check_prob("q", self.q, lo_open=True)
        _check_prob("p", self.p, lo_open=True)
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "M_C", int(self.M_C))
        object.__setattr__(self, "Qs_max", int(self.Qs_max))
        object.__setattr__(self, "protocol", Protocol.parse(self.protocol))
        object.__setattr__(self, "chi", (1.0 - self.p_c) * self.eta_C)
        object.__setattr__(self, "psi", (1.0 - self.p_c) * self.eta)
        object.__setattr__(self, "s_max", min(self.N, self.M_C))

    @property
    def switching(self) -> bool:
        return self.protocol is Protocol.SWITCHING

    @property
    def termination_prob(self) -> float:
        """Per-slot probability that a busy node finishes its packet.

        Buffering counts every slot on the channel (q*psi); the switching
        chain is embedded after sensing, so only available slots count (q*eta).
        """
        return self.q * (self.eta if self.switching else self.psi)

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


def derive(N, M_C, p_c, eta, eta_C, lam, q, p, Qs_max=10, protocol=Protocol.BUFFERING) -> SystemParams:
    """Validate raw scenario fields and fill in chi, psi and s_max."""
    return SystemParams(N=N, M_C=M_C, p_c=p_c, eta=eta, eta_C=eta_C, lam=lam, q=q, p=p,
                        Qs_max=Qs_max, protocol=protocol)


@dataclass(frozen=True)
class Moments:
    m1: float
    m2: float

    def __post_init__(self):
        if self.m2 < self.m1 ** 2 * (1 - 1e-9) - 1e-12:
            raise ValueError(f"second moment {self.m2} below squared mean {self.m1 ** 2}")

    @property
    def variance(self) -> float:
        return max(self.m2 - self.m1 ** 2, 0.0)


@dataclass(frozen=True, eq=False)
class DiscretePmf:
    """Truncated pmf over 0, 1, 2, ... with the residual mass kept explicitly."""

    probs: np.ndarray
    tail_mass: float

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a non-empty 1-d array")
        if np.any(probs < -PROB_ATOL) or np.any(probs > 1 + PROB_ATOL):
            raise ValueError("pmf masses must lie in [0, 1]")
        probs = np.clip(probs, 0.0, 1.0)
        if not -PROB_ATOL <= self.tail_mass <= 1 + PROB_ATOL:
            raise ValueError(f"tail mass {self.tail_mass} outside [0, 1]")
        total = math.fsum(probs) + self.tail_mass
        if abs(total - 1.0) > PROB_ATOL:
            raise ValueError(f"pmf not normalised: total mass {total!r}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "tail_mass", float(min(max(self.tail_mass, 0.0), 1.0)))

    @classmethod
    def from_masses(cls, probs: Sequence[float]) -> "DiscretePmf":
        probs = np.asarray(probs, dtype=float)
        return cls(probs, max(0.0, 1.0 - math.fsum(probs)))

    @classmethod
    def point(cls, value: int) -> "DiscretePmf":
        probs = np.zeros(value + 1)
        probs[value] = 1.0
        return cls(probs, 0.0)

    @classmethod
    def geometric(cls, r: float, tail_tol: float = TAIL_TOL, cap: int = PMF_CAP) -> "DiscretePmf":
        """Geometric law on {1, 2, ...} with success probability ``r``."""
        if not 0.0 < r <= 1.0:
            raise ValueError(f"geometric parameter {r} not in (0, 1]")
        if r == 1.0:
            return cls.point(1)
        length = min(cap, max(1, math.ceil(math.log(tail_tol) / math.log1p(-r))))
        k = np.arange(1, length + 1)
        probs = np.concatenate(([0.0], r * np.exp((k - 1) * math.log1p(-r))))
        return cls.from_masses(probs)

    @classmethod
    def mixture(cls, weights: Sequence[float], pmfs: Sequence["DiscretePmf"]) -> "DiscretePmf":
        weights = np.asarray(weights, dtype=float)
        if len(weights) != len(pmfs) or len(pmfs) == 0:
            raise ValueError("need one weight per component")
        if abs(weights.sum() - 1.0) > 1e-10 or np.any(weights < 0):
            raise ValueError("mixture weights must be a probability vector")
        weights = weights / weights.sum()
        length = max(d.probs.size for d in pmfs)
        probs = np.zeros(length)
        for w, d in zip(weights, pmfs):
            probs[: d.probs.size] += w * d.probs
        return cls(probs, max(0.0, 1.0 - math.fsum(probs)))

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probs.size)

    @property
    def total(self) -> float:
        return math.fsum(self.probs)

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    @property
    def second_moment(self) -> float:
        k = self.support
        return float(np.dot(k * k, self.probs))

    def moments(self) -> Moments:
        # renormalise over the kept support; tail_mass says how much was dropped
        total = self.total
        return Moments(self.mean / total, self.second_moment / total)

    def __len__(self):
        return self.probs.size


def binom_pmf(n: int, prob: float) -> np.ndarray:
    """Binomial(n, prob) masses for 0..n, exact at prob in {0, 1}."""
    k = np.arange(n + 1)
    out = np.array([math.comb(n, int(j)) for j in k], dtype=float)
    if prob == 0.0:
        return (k == 0).astype(float)
    if prob == 1.0:
        return (k == n).astype(float)
    return out * prob ** k * (1.0 - prob) ** (n - k)


@dataclass
class DelayReport:
    """Mean system time (slots) produced by one solution method."""

    method: str
    mean_system_time: float
    stable: bool = True
    rho: float = math.nan
    service_m2: float = math.nan
    ci95: float = math.nan
    error: str = ""
    extras: dict = field(default_factory=dict)
