"""Multi-agent primitives: interim quantities, frictions, perceived terms.

A symmetric direct mechanism is stored per report as the pair of induced
outcome marginals over the opponents' truthful types: the distribution of
the allocation value v_i(q) and the distribution of the transfer t_i.
Separability of news utility across dimensions means these marginals carry
everything the agent's reporting-stage utility depends on.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .laws import cumtrapz
from .newsutil import DiscreteDistribution, GainLossSpec, gap_functional

TIMELINES = ("A", "B", "C")
CASES = ("inf", "sup")


def _check_timeline(timeline, allowed=TIMELINES):
    if timeline not in allowed:
        raise DomainError(f"unknown timeline {timeline!r}; expected one of {allowed}")


@dataclass(frozen=True, eq=False)
class DirectMechanism:
    """Symmetric direct mechanism in interim-marginal form.

    ``alloc[k]`` and ``transfer[k]`` are the distributions of v_i(q) and t_i
    when an agent reports ``types.support[k]`` and the other ``n - 1`` agents
    report truthfully.
    """

    n: int
    types: DiscreteDistribution
    alloc: tuple
    transfer: tuple
    v_outside: float = 0.0
    case: str = "inf"

    def __post_init__(self):
        k = len(self.types)
        if len(self.alloc) != k or len(self.transfer) != k:
            raise DomainError("need one allocation and one transfer marginal per type")
        if self.case not in CASES:
            raise DomainError(f"case must be one of {CASES}")
        lo = min(float(a.support[0]) for a in self.alloc)
        hi = max(float(a.support[-1]) for a in self.alloc)
        if self.case == "inf" and self.v_outside > lo + 1e-12:
            raise DomainError("inf case needs v(outside) below every allocation value")
        if self.case == "sup" and self.v_outside < hi - 1e-12:
            raise DomainError("sup case needs v(outside) above every allocation value")

    @property
    def theta(self):
        return self.types.support

    @classmethod
    def from_rule(cls, n, types, alloc_fn, transfer_fn, v_outside=0.0, case="inf"):
        """Enumerate opponents' profiles for rule functions on grid indices.

        ``alloc_fn(own, others)`` and ``transfer_fn(own, others)`` receive the
        own report index and a tuple of opponent indices. Exact enumeration,
        so keep ``len(types) ** (n - 1)`` small.
        """
        K = len(types)
        p = types.probs
        profiles = list(itertools.product(range(K), repeat=n - 1))
        weights = np.array([math.prod(p[j] for j in prof) for prof in profiles])
        alloc, transfer = [], []
        for own in range(K):
            a = np.array([alloc_fn(own, prof) for prof in profiles], dtype=float)
            t = np.array([transfer_fn(own, prof) for prof in profiles], dtype=float)
            alloc.append(DiscreteDistribution(a, weights))
            transfer.append(DiscreteDistribution(t, weights))
        return cls(n, types, tuple(alloc), tuple(transfer), v_outside, case)

    def with_transfers(self, transfer):
        return DirectMechanism(self.n, self.types, self.alloc, tuple(transfer), self.v_outside, self.case)

    def to_dict(self):
        return {
            "n": self.n,
            "types": self.types.to_dict(),
            "alloc": [a.to_dict() for a in self.alloc],
            "transfer": [t.to_dict() for t in self.transfer],
            "v_outside": self.v_outside,
            "case": self.case,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            int(d["n"]),
            DiscreteDistribution.from_dict(d["types"]),
            tuple(DiscreteDistribution.from_dict(a) for a in d["alloc"]),
            tuple(DiscreteDistribution.from_dict(t) for t in d["transfer"]),
            float(d["v_outside"]),
            d["case"],
        )


def interim_quantities(mech: DirectMechanism, report: int):
    """(V, T, T_plus) for a given report index, opponents truthful."""
    a, t = mech.alloc[report], mech.transfer[report]
    V = a.mean()
    T = t.mean()
    T_plus = float(t.probs @ np.maximum(t.support, 0.0))
    return V, T, T_plus


def realization_frictions(mech: DirectMechanism, report: int):
    """(Gamma_g, omega): raw gap functionals of the allocation and transfer marginals."""
    return gap_functional(mech.alloc[report]), gap_functional(mech.transfer[report])


def perceived_valuation(timeline, case, V, Gamma_g, v_outside, spec: GainLossSpec):
    _check_timeline(timeline)
    if case not in CASES:
        raise DomainError(f"case must be one of {CASES}")
    if timeline == "C":
        return V - spec.Lambda_g * Gamma_g
    weight = spec.mu_g if case == "inf" else spec.lambda_g * spec.mu_g
    W = (1.0 + weight) * V - weight * v_outside
    if timeline == "B":
        W = W - spec.Lambda_g * Gamma_g
    return W


def perceived_transfer(timeline, T, T_plus, omega, spec: GainLossSpec):
    _check_timeline(timeline)
    if timeline == "C":
        return T + spec.Lambda_m * omega
    U = (1.0 + spec.mu_m) * T + spec.Lambda_m * T_plus
    if timeline == "B":
        U = U + spec.Lambda_m * omega
    return U


@dataclass(frozen=True, eq=False)
class PerceivedProfile:
    timeline: str
    case: str
    theta: np.ndarray
    V: np.ndarray
    T: np.ndarray
    T_plus: np.ndarray
    Gamma_g: np.ndarray
    omega: np.ndarray
    W: np.ndarray
    Upsilon: np.ndarray
    v_outside: float
    spec: GainLossSpec

    def reporting_utility(self):
        return self.W * self.theta - self.Upsilon

    def forms(self, timeline):
        """(W, Upsilon) of another timeline on the same interim quantities."""
        W = perceived_valuation(timeline, self.case, self.V, self.Gamma_g, self.v_outside, self.spec)
        U = perceived_transfer(timeline, self.T, self.T_plus, self.omega, self.spec)
        return W, U


def perceived_profile(mech: DirectMechanism, timeline, spec: GainLossSpec) -> PerceivedProfile:
    _check_timeline(timeline)
    K = len(mech.types)
    rows = np.array([interim_quantities(mech, k) + realization_frictions(mech, k) for k in range(K)])
    V, T, T_plus, Gamma_g, omega = rows.T
    W = perceived_valuation(timeline, mech.case, V, Gamma_g, mech.v_outside, spec)
    U = perceived_transfer(timeline, T, T_plus, omega, spec)
    return PerceivedProfile(timeline, mech.case, mech.theta.copy(), V, T, T_plus, Gamma_g, omega, W, U,
                            mech.v_outside, spec)


def mirrlees_upsilon(W, theta, U0):
    """Perceived transfers implied by the envelope formula.

    Interim utility is ``U0 + int_{theta_0}^{theta} W`` (trapezoid), so the
    perceived transfer is ``W * theta - U0 - int W``. On a grid the trapezoid
    increments sit between the left and right Riemann sums of a monotone W,
    which keeps every pairwise deviation unprofitable.
    """
    W = np.asarray(W, dtype=float)
    return W * theta - U0 - cumtrapz(W, theta)


@dataclass(frozen=True)
class ICReport:
    ok: bool
    witness: tuple | None
    utilities: np.ndarray | None
    upsilon_mirrlees: np.ndarray | None


def check_ic(profile: PerceivedProfile, tol=1e-12) -> ICReport:
    """Monotonicity of W, plus the envelope utilities when it holds."""
    W, theta = profile.W, profile.theta
    drops = np.flatnonzero(np.diff(W) < -tol)
    if drops.size:
        k = int(drops[0])
        return ICReport(False, (float(theta[k]), float(theta[k + 1])), None, None)
    U0 = float(W[0] * theta[0] - profile.Upsilon[0])
    utilities = U0 + cumtrapz(W, theta)
    return ICReport(True, None, utilities, mirrlees_upsilon(W, theta, U0))


@dataclass(frozen=True)
class IRReport:
    ok: bool
    witness: float | None
    slack: np.ndarray


def check_ir(profile: PerceivedProfile, tol=1e-9) -> IRReport:
    """Participation check: A uses the A forms, B and C the B forms."""
    form = "A" if profile.timeline == "A" else "B"
    W, U = profile.forms(form)
    slack = W * profile.theta - U - profile.v_outside * profile.theta
    bad = np.flatnonzero(slack < -tol)
    witness = float(profile.theta[bad[0]]) if bad.size else None
    return IRReport(bad.size == 0, witness, slack)
