"""Optimal symmetric single-unit auctions with news-utility bidders.

Types live on the grid of a :class:`~newsmech.laws.GridLaw`; opponents'
types are the atoms of its ``discrete`` distribution. The highest report
wins (ties shared uniformly) when it clears a reserve index, so a bidder's
allocation marginal has atoms at 0, 1/(j+1) and 1. Everything downstream
(frictions, perceived valuations, audits) uses these exact marginals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .bayes import DirectMechanism, check_ic, mirrlees_upsilon, perceived_profile, perceived_valuation
from .errors import DomainError, ICViolationError, RegularityError, UnsupportedInstanceError, ValidationError
from .laws import GridLaw, cumtrapz
from .newsutil import DiscreteDistribution, GainLossSpec, binary_for_target, gap_functional
from .numerics import golden_section_min, is_nondecreasing

SUBSIDY_DOMAINS = ("full", "served")


@dataclass(frozen=True, eq=False)
class AuctionEnv:
    n: int
    law: GridLaw
    spec: GainLossSpec

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError("an auction needs at least two bidders")
        if self.law.lo < 0:
            raise ValidationError("types must be nonnegative")

    @property
    def theta(self):
        return self.law.grid

    @property
    def probs(self):
        return self.law.discrete.probs

    def require_a2(self):
        if self.spec.Lambda_g > 1.0 + 1e-12:
            raise UnsupportedInstanceError(
                f"Lambda_g = {self.spec.Lambda_g:.6g} > 1 violates Assumption (A2)"
            )

    def with_spec(self, spec):
        return AuctionEnv(self.n, self.law, spec)


def myerson_virtual(law: GridLaw):
    """(gamma on the grid, theta_star) with gamma(t) = t - (1 - F(t)) / f(t)."""
    if np.any(law.pdf <= 0):
        raise RegularityError("density must be positive on the grid")
    gamma = law.grid - (1.0 - law.cdf) / law.pdf
    if np.any(np.diff(gamma) <= 0):
        raise RegularityError("virtual valuation is not strictly increasing")
    idx = int(np.argmax(gamma >= -1e-12)) if np.any(gamma >= -1e-12) else law.size - 1
    return gamma, float(law.grid[idx])


def discrete_virtual(env: AuctionEnv):
    """Per-atom virtual coefficients c_k whose weighted sum against W gives revenue.

    On the grid, revenue with perceived valuations W and a binding bottom is
    ``sum_k p_k (W_k theta_k - int_0^k W) = sum_k W_k c_k`` with the
    trapezoid rent; ``c_k / p_k`` approximates the continuous virtual value.
    """
    theta, p = env.theta, env.probs
    d = np.diff(theta)
    tail = np.concatenate((np.cumsum(p[::-1])[::-1], [0.0]))  # tail[k] = P(type >= k)
    c = p * theta
    c[:-1] -= 0.5 * d * tail[1:-1]
    c[1:] -= 0.5 * d * tail[1:-1]
    return c


def highest_wins_marginals(probs, n, reserve):
    """Allocation marginals for 'highest report wins, ties shared' above ``reserve``."""
    probs = np.asarray(probs, dtype=float)
    K = probs.size
    below = np.concatenate(([0.0], np.cumsum(probs)[:-1]))
    out = []
    for k in range(K):
        if k < reserve:
            out.append(DiscreteDistribution.degenerate(0.0))
            continue
        j = np.arange(n)
        mass = np.array([comb(n - 1, int(i)) for i in j], dtype=float) * probs[k] ** j * below[k] ** (n - 1 - j)
        values = 1.0 / (j + 1.0)
        rest = max(0.0, 1.0 - float(mass.sum()))
        keep = mass > 0
        support = np.concatenate((values[keep], [0.0]))
        weights = np.concatenate((mass[keep], [rest]))
        out.append(DiscreteDistribution(support, weights))
    return tuple(out)


def _alloc_stats(env, reserve):
    alloc = highest_wins_marginals(env.probs, env.n, reserve)
    V = np.array([a.mean() for a in alloc])
    Gamma = np.array([gap_functional(a) for a in alloc])
    return alloc, V, Gamma


def deterministic_transfers(timeline, Upsilon, spec: GainLossSpec):
    """Per-type sure payments reproducing ``Upsilon`` (omega = 0)."""
    Upsilon = np.asarray(Upsilon, dtype=float)
    if timeline == "C":
        return Upsilon.copy()
    pos = (1.0 + spec.mu_m) + spec.Lambda_m
    return np.where(Upsilon > 0, Upsilon / pos, Upsilon / (1.0 + spec.mu_m))


@dataclass(frozen=True, eq=False)
class AuctionSolution:
    timeline: str
    reserve_index: int
    theta_star: float
    V: np.ndarray
    Gamma_g: np.ndarray
    W: np.ndarray
    Upsilon: np.ndarray
    T: np.ndarray
    revenue: float
    mechanism: DirectMechanism
    info: dict = field(default_factory=dict)

    @property
    def omega(self):
        return np.zeros_like(self.T)


def solve_auction(timeline, env: AuctionEnv) -> AuctionSolution:
    """Revenue-maximising symmetric auction for timelines A and B (all-pay)."""
    if timeline not in ("A", "B"):
        raise DomainError("solve_auction handles timelines A and B; use solve_auction_C for C")
    env.require_a2()
    gamma, theta_star = myerson_virtual(env.law)
    coef = discrete_virtual(env)
    served = np.flatnonzero(coef >= 0)
    reserve = int(served[0]) if served.size else env.theta.size
    # the rule serves a suffix, so the discrete coefficients must change sign once
    if served.size and not np.all(coef[reserve:] >= 0):
        raise RegularityError("discrete virtual coefficients change sign more than once")
    alloc, V, Gamma = _alloc_stats(env, reserve)
    W = perceived_valuation(timeline, "inf", V, Gamma, 0.0, env.spec)
    if not is_nondecreasing(W, tol=1e-12):
        raise ICViolationError("perceived valuation is not monotone under the Myersonian rule")
    Upsilon = mirrlees_upsilon(W, env.theta, 0.0)
    T = deterministic_transfers(timeline, Upsilon, env.spec)
    transfers = tuple(DiscreteDistribution.degenerate(x) for x in T)
    mech = DirectMechanism(env.n, env.law.discrete, alloc, transfers, 0.0, "inf")
    revenue = env.n * float(env.probs @ T)
    info = {"discrete_virtual_revenue": env.n * float(W @ coef) / _upsilon_per_T(timeline, env.spec)}
    if timeline == "A":
        s = env.spec
        scale = (1.0 + s.mu_g) / (1.0 + s.lambda_m * s.mu_m)
        Q = np.where(env.theta >= theta_star, env.law.cdf ** (env.n - 1), 0.0)
        info["virtual_surplus_revenue"] = scale * env.n * env.law.integrate(Q * gamma)
    return AuctionSolution(timeline, reserve, theta_star, V, Gamma, W, Upsilon, T, revenue, mech, info)


def _upsilon_per_T(timeline, spec):
    return (1.0 + spec.mu_m) + spec.Lambda_m if timeline in ("A", "B") else 1.0


# ---------------------------------------------------------------------------
# timeline C


@dataclass(frozen=True)
class PrimitivesC:
    Q: np.ndarray
    W: np.ndarray
    h: np.ndarray
    g: np.ndarray
    s_m: np.ndarray
    Gamma_g: np.ndarray


def _unreserved_stats(env):
    _, V, Gamma = _alloc_stats(env, 0)
    return V, Gamma


def auction_primitives_C(env: AuctionEnv, reserve: int, base=None) -> PrimitivesC:
    """Q, W, h, g and s_m for serving every type at index ``reserve`` and above.

    Marginals of served types do not depend on the reserve, so ``base``
    (the unreserved (V, Gamma) pair) can be passed in to avoid rebuilding them.
    """
    env.require_a2()
    V, Gamma = base if base is not None else _unreserved_stats(env)
    mask = np.arange(V.size) >= reserve
    V = np.where(mask, V, 0.0)
    Gamma = np.where(mask, Gamma, 0.0)
    s = env.spec
    theta = env.theta
    W = V - s.Lambda_g * Gamma
    if not is_nondecreasing(W, tol=1e-12):
        raise ICViolationError("perceived valuation W^C is not monotone")
    h = W * theta - cumtrapz(W, theta)
    g = W * theta + s.mu_g * V * theta
    lm = s.lambda_m * s.mu_m
    s_m = h - g / (1.0 + lm)
    return PrimitivesC(V, W, h, g, s_m, Gamma)


def _inner_objective(c, s_m, p, served, kappa, domain):
    friction = kappa * np.maximum(s_m[served] - c, 0.0)
    total = float(p[served] @ (c + friction))
    if domain == "full":
        total += c * float(p[~served].sum())
    return total


def minimise_subsidy(prim: PrimitivesC, p, reserve, spec: GainLossSpec, domain="full", tol=1e-10):
    """Inner problem: the lowest-type utility c and the friction schedule."""
    K = p.size
    served = np.arange(K) >= reserve
    if not served.any():
        return 0.0, np.zeros(K), 0.0
    lm = spec.lambda_m * spec.mu_m
    s_served = prim.s_m[served]
    lower_ir = domain == "full" and reserve > 0
    if spec.Lambda_m <= 0.0 or lm <= 0.0:
        # frictions buy no slack: participation needs c >= s_m everywhere
        c = float(s_served.max())
        if lower_ir:
            c = max(c, 0.0)
        return c, np.zeros(K), _inner_objective(c, prim.s_m, p, served, 0.0, domain)
    kappa = (1.0 + lm) / lm
    lo = float(s_served.min()) - 1.0
    hi = float(s_served.max()) + 1.0
    if lower_ir:
        lo = max(lo, 0.0)
        hi = max(hi, lo + 1.0)
    res = golden_section_min(lambda c: _inner_objective(c, prim.s_m, p, served, kappa, domain), lo, hi, tol=tol)
    c = res["x"]
    friction = np.where(served, kappa * np.maximum(prim.s_m - c, 0.0), 0.0)
    return c, friction, res["fun"]


@dataclass(frozen=True, eq=False)
class AuctionSolutionC:
    theta_hat: float
    reserve_index: int
    c: float
    omega: np.ndarray
    friction: np.ndarray
    T: np.ndarray
    Q: np.ndarray
    W: np.ndarray
    h: np.ndarray
    g: np.ndarray
    s_m: np.ndarray
    revenue: float
    revenue_by_threshold: np.ndarray
    mechanism: DirectMechanism
    subsidy_domain: str = "full"

    @property
    def timeline(self):
        return "C"

    @property
    def all_pay(self):
        return bool(np.all(self.omega <= 1e-12))

    @property
    def served(self):
        return np.arange(self.T.size) >= self.reserve_index

    def ir_report(self, spec: GainLossSpec, tol=1e-9):
        """Participation inequality at served types; the lower ones need c >= 0 in full mode."""
        lm = spec.lambda_m * spec.mu_m
        rhs = self.s_m - lm / (1.0 + lm) * self.friction
        slack = np.where(self.served, self.c - rhs, self.c if self.reserve_index > 0 else 0.0)
        if self.subsidy_domain == "served":
            slack = np.where(self.served, slack, 0.0)
        return bool(np.all(slack >= -tol)), slack

    def identity_residual(self):
        r = self.c + self.friction + self.T - self.h
        return float(np.max(np.abs(r[self.served]))) if self.served.any() else 0.0


def solve_auction_C(env: AuctionEnv, subsidy_domain="full", tol=1e-10) -> AuctionSolutionC:
    """Threshold, subsidy and friction schedule maximising revenue in timeline C."""
    if subsidy_domain not in SUBSIDY_DOMAINS:
        raise DomainError(f"subsidy_domain must be one of {SUBSIDY_DOMAINS}")
    env.require_a2()
    p = env.probs
    K = p.size
    revenues = np.zeros(K + 1)
    cache = {}
    base = _unreserved_stats(env)
    for r in range(K + 1):
        if r == K:
            revenues[r] = 0.0
            continue
        prim = auction_primitives_C(env, r, base)
        c, friction, H = minimise_subsidy(prim, p, r, env.spec, subsidy_domain, tol)
        served = np.arange(K) >= r
        revenues[r] = env.n * (float(p[served] @ prim.h[served]) - H)
        cache[r] = (prim, c, friction)
    best = float(revenues.max())
    r = int(np.flatnonzero(revenues >= best - 1e-12 * max(1.0, abs(best)))[0])
    if r == K:
        prim = PrimitivesC(*(np.zeros(K) for _ in range(6)))
        c, friction = 0.0, np.zeros(K)
    else:
        prim, c, friction = cache[r]
    served = np.arange(K) >= r
    T = np.where(served, prim.h - c - friction, -c if subsidy_domain == "full" else 0.0)
    Lm = env.spec.Lambda_m
    omega = friction / Lm if Lm > 0 else np.zeros(K)
    alloc = highest_wins_marginals(p, env.n, r)
    transfers = tuple(binary_for_target(float(o), float(t), 1.0) for o, t in zip(omega, T))
    mech = DirectMechanism(env.n, env.law.discrete, alloc, transfers, 0.0, "inf")
    theta_hat = float(env.theta[r]) if r < K else float("inf")
    return AuctionSolutionC(theta_hat, r, float(c), omega, friction, T, prim.Q, prim.W, prim.h, prim.g,
                            prim.s_m, float(revenues[r]), revenues, mech, subsidy_domain)


def solve(timeline, env: AuctionEnv, **kw):
    if timeline == "C":
        return solve_auction_C(env, **kw)
    return solve_auction(timeline, env)


def check_solution_ic(solution, env: AuctionEnv):
    """Closed-form IC check of the materialised mechanism (monotone W, Mirrlees transfers)."""
    prof = perceived_profile(solution.mechanism, solution.timeline, env.spec)
    report = check_ic(prof)
    if not report.ok:
        return report, np.inf
    return report, float(np.max(np.abs(report.upsilon_mirrlees - prof.Upsilon)))


def split_money_friction(product, lambda_m=2.0):
    """(mu_m, lambda_m) with mu_m * lambda_m equal to ``product``."""
    if product < 0:
        raise DomainError("mu_m * lambda_m must be nonnegative")
    return product / lambda_m, lambda_m


@dataclass(frozen=True)
class RevenueTable:
    products: np.ndarray
    rev_A: np.ndarray
    rev_C: np.ndarray
    sign_changes: int
    crossing: float | None

    @property
    def diff(self):
        return self.rev_C - self.rev_A

    def rows(self):
        return [(float(x), float(a), float(c)) for x, a, c in zip(self.products, self.rev_A, self.rev_C)]


def count_sign_changes(x, tol=0.0):
    signs = [np.sign(v) for v in x if abs(v) > tol]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def revenue_compare(env: AuctionEnv, products, lambda_m=2.0, subsidy_domain="full") -> RevenueTable:
    """rev_A and rev_C over a sweep of mu_m * lambda_m; other parameters fixed."""
    products = np.asarray(products, dtype=float)
    rev_A, rev_C = [], []
    for x in products:
        mu_m, lam_m = split_money_friction(x, lambda_m)
        s = env.spec
        e = env.with_spec(GainLossSpec(s.mu_g, mu_m, s.lambda_g, lam_m))
        rev_A.append(solve_auction("A", e).revenue)
        rev_C.append(solve_auction_C(e, subsidy_domain).revenue)
    rev_A, rev_C = np.array(rev_A), np.array(rev_C)
    d = rev_C - rev_A
    crossing = None
    idx = np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)
    if idx.size:
        i = int(idx[0])
        crossing = float(products[i] - d[i] * (products[i + 1] - products[i]) / (d[i + 1] - d[i]))
    return RevenueTable(products, rev_A, rev_C, count_sign_changes(d), crossing)
