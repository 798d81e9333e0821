"""Monopolistic screening of buyers who differ in loss aversion.

A buyer of type ``lam`` values quantity ``q`` at ``v(q) * theta`` with
``v(q) = q ** alpha`` and ``theta ~ F`` unknown at contracting time. The
seller faces marginal cost ``c`` and a type distribution ``G`` on
``[1, lam_bar]``. Timelines A and B are solved pointwise from the virtual
valuations; timeline C is a finite-dimensional concave program.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from .errors import ConvergenceError, DomainError, ICViolationError, RegularityError, ValidationError
from .laws import GridLaw
from .newsutil import DiscreteDistribution, positive_gap_mean
from .numerics import is_nonincreasing
from . import oracle

SCREENING_TIMELINES = ("A", "B", "C")
QUADRATURE_RTOL = 1e-2
CALM_GAP_RTOL = 1e-6


@dataclass(frozen=True, eq=False)
class ScreeningEnv:
    F: DiscreteDistribution
    G: GridLaw
    alpha: float = 0.5
    c: float = 1.0
    density_floor: float = 1e-9
    m: float = field(init=False)
    M: float = field(init=False)

    def __post_init__(self):
        if np.any(self.F.support < 0):
            raise ValidationError("F must have nonnegative support (Assumption (S))")
        m = self.F.mean()
        M = positive_gap_mean(self.F)
        if m <= 0:
            raise ValidationError("mean of F must be positive (Assumption (S))")
        if not M < m:
            raise ValidationError("positive-gap mean M must be below the mean m")
        if abs(self.G.lo - 1.0) > 1e-12:
            raise ValidationError("loss-aversion support must start at 1 (Assumption (S))")
        if not 1.0 < self.G.hi <= 2.0 + 1e-12:
            raise ValidationError("lambda_bar must lie in (1, 2] per Assumption (S)")
        if np.min(self.G.pdf) < self.density_floor:
            raise ValidationError("density of G must stay above the positive floor (Assumption (S))")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1) for v(q) = q**alpha")
        if not self.c > 0:
            raise ValidationError("marginal cost c must be positive")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "M", M)

    @property
    def grid(self):
        return self.G.grid

    @property
    def lam_bar(self):
        return self.G.hi

    def v(self, q):
        return np.power(np.asarray(q, dtype=float), self.alpha)

    def v_inv(self, x):
        return np.power(np.maximum(np.asarray(x, dtype=float), 0.0), 1.0 / self.alpha)

    def with_grid(self, G):
        return ScreeningEnv(self.F, G, self.alpha, self.c, self.density_floor)


@dataclass(frozen=True, eq=False)
class ScreeningMenu:
    timeline: str
    lambda_grid: np.ndarray
    q: np.ndarray
    t: np.ndarray
    f: float | None = None
    threshold: float | None = None
    info: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "timeline": self.timeline,
            "lambda_grid": self.lambda_grid.tolist(),
            "q": self.q.tolist(),
            "t": self.t.tolist(),
            "f": self.f,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["timeline"], np.asarray(d["lambda_grid"], float), np.asarray(d["q"], float),
                   np.asarray(d["t"], float), d.get("f"), d.get("threshold"))


def _check_lambda(lam, env):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 1.0 - 1e-12) or np.any(lam > env.lam_bar + 1e-12):
        raise DomainError(f"loss-aversion type outside [1, {env.lam_bar}]")
    return lam


def virtual_type(timeline, lam, env: ScreeningEnv):
    lam = _check_lambda(lam, env)
    m, M = env.m, env.M
    if timeline == "A":
        return 2.0 * m / (1.0 + lam)
    if timeline == "B":
        return (2.0 * m + (1.0 - lam) * M) / (1.0 + lam)
    if timeline == "C":
        return m + (1.0 - lam) * M
    raise DomainError(f"unknown timeline {timeline!r}")


def wedge(lam, env: ScreeningEnv):
    """Gamma^B - Gamma^C in closed form."""
    lam = _check_lambda(lam, env)
    return (1.0 - lam) * (env.m - lam * env.M) / (1.0 + lam)


def _law_at(env, s):
    s = np.asarray(s, dtype=float)
    G = np.interp(s, env.G.grid, env.G.cdf)
    g = np.interp(s, env.G.grid, env.G.pdf)
    dg = np.interp(s, env.G.grid, env.G.dpdf)
    return G, g, dg


def virtual_valuation(timeline, s, env: ScreeningEnv):
    """Psi^A or Psi^B: virtual type minus the information-rent term."""
    s = _check_lambda(s, env)
    G, g, _ = _law_at(env, s)
    if timeline == "A":
        k = 2.0 * env.m
    elif timeline == "B":
        k = 2.0 * (env.m + env.M)
    else:
        raise DomainError("virtual valuations are defined for timelines A and B")
    return virtual_type(timeline, s, env) - k * G / ((1.0 + s) ** 2 * g)


@dataclass(frozen=True)
class RegularityReport:
    ok: bool
    witness: float | None
    margin: np.ndarray


def check_regularity(timeline, env: ScreeningEnv) -> RegularityReport:
    lam = env.grid
    G, g, dg = env.G.cdf, env.G.pdf, env.G.dpdf
    if timeline == "A":
        lhs = 2.0
    elif timeline == "B":
        lhs = (4.0 * env.m + 7.0 * env.M) / (2.0 * (env.m + env.M))
    else:
        raise DomainError("regularity conditions are stated for timelines A and B")
    rhs = G / g * (2.0 / (1.0 + lam) + dg / g)
    margin = lhs - rhs
    bad = np.flatnonzero(margin < -1e-12)
    return RegularityReport(bad.size == 0, float(lam[bad[0]]) if bad.size else None, margin)


def _stieltjes_increments(v, Gamma):
    """Trapezoid pieces of the integral of v against -dGamma between grid points."""
    return 0.5 * (v[:-1] + v[1:]) * (Gamma[:-1] - Gamma[1:])


def mirrlees_payments(timeline, q, env: ScreeningEnv, constant=0.0):
    """Transfers pinned by the envelope condition up to ``constant``.

    For A and B ``constant`` is the top type's net value Gamma*v - t (zero
    makes participation bind at the top). For C it is the fixed fee f, so
    ``t(1) = f + Gamma^C(1) v(q(1))``. The envelope integral is taken as a
    trapezoid sum against the virtual type, which keeps every pairwise
    deviation on the grid unprofitable.
    """
    q = np.asarray(q, dtype=float)
    if not is_nonincreasing(q, tol=1e-12):
        raise ICViolationError("quantity schedule must be nonincreasing in the loss-aversion type")
    lam = env.grid
    v = env.v(q)
    Gamma = virtual_type(timeline, lam, env)
    inc = _stieltjes_increments(v, Gamma)
    below = np.concatenate(([0.0], np.cumsum(inc)))
    if timeline == "C":
        return constant + Gamma * v + below
    net = constant + (below[-1] - below)
    return Gamma * v - net


def profit(menu: ScreeningMenu, env: ScreeningEnv) -> float:
    return env.G.integrate(menu.t - env.c * menu.q)


def _threshold_of(q, lam, tol=0.0):
    served = np.flatnonzero(q > tol)
    return float(lam[served[-1]]) if served.size else None


def solve_pointwise(timeline, env: ScreeningEnv) -> ScreeningMenu:
    if timeline not in ("A", "B"):
        raise DomainError("pointwise solution applies to timelines A and B")
    reg = check_regularity(timeline, env)
    if not reg.ok:
        raise RegularityError(
            f"timeline {timeline} regularity fails at lambda={reg.witness:.6g}; "
            "ironing is not implemented"
        )
    lam = env.grid
    psi = virtual_valuation(timeline, lam, env)
    a = env.alpha
    q = np.where(psi > 0, (a * np.maximum(psi, 0.0) / env.c) ** (1.0 / (1.0 - a)), 0.0)
    if not is_nonincreasing(q, tol=1e-12):
        raise RegularityError("pointwise quantities are not monotone; ironing is not implemented")
    t = mirrlees_payments(timeline, q, env, 0.0)
    virtual_profit = env.G.integrate(psi * env.v(q) - env.c * q)
    direct = env.G.integrate(t - env.c * q)
    if abs(direct - virtual_profit) > QUADRATURE_RTOL * max(abs(virtual_profit), 1e-12) + 1e-12:
        raise AssertionError("profit and virtual-valuation integral disagree beyond quadrature error")
    return ScreeningMenu(timeline, lam.copy(), q, t, None, _threshold_of(q, lam),
                         {"virtual_profit": virtual_profit})


# ---------------------------------------------------------------------------
# timeline C


def _cum_apply(v, d):
    """S = cumulative trapezoid of v with spacings d (S_0 = 0)."""
    out = np.zeros(v.size)
    out[1:] = np.cumsum(0.5 * d * (v[:-1] + v[1:]))
    return out


def _cum_adjoint(y, d):
    """Transpose of :func:`_cum_apply` applied to y."""
    n = y.size
    tail = np.cumsum(y[::-1])[::-1]  # tail[j] = sum_{k >= j} y_k
    out = np.zeros(n)
    # v_j enters piece j (for S_k, k > j) and piece j-1 (for S_k, k >= j)
    out[:-1] += 0.5 * d * tail[1:]
    out[1:] += 0.5 * d * tail[1:]
    return out


@dataclass
class _Program:
    """Served-range data of the timeline-C program for a fixed threshold."""

    w: np.ndarray
    gamma_c: np.ndarray
    wedge: np.ndarray
    d: np.ndarray
    M: float
    c: float
    p: float
    boundary_step: float | None  # grid spacing to the first excluded type

    @property
    def n(self):
        return self.w.size

    def S(self, v):
        return _cum_apply(v, self.d)

    def primal(self, v):
        """Profit with the largest fee the participation constraints allow.

        With exclusion the empty bundle is on the menu, so served types must
        also weakly prefer their own bundle to it: f + M * S_last <= 0.
        """
        S = self.S(v)
        phi = self.wedge * v - self.M * S
        f = float(phi.min())
        if self.boundary_step is not None:
            f = min(f, -self.M * float(S[-1]))
        t = f + self.gamma_c * v + self.M * S
        value = float(self.w @ (t - self.c * v**self.p))
        feasible = True
        if self.boundary_step is not None:
            feasible = f + self.M * (S[-1] + self.boundary_step * v[-1]) >= -1e-12
        return value, f, feasible


def _project_dual(z, sigma, total):
    """Projection onto {y >= 0, sigma . y = total} by bisection on the multiplier."""

    def resid(tau):
        return sigma @ np.maximum(z - tau * sigma, 0.0) - total

    lo, hi = -1.0, 1.0
    while resid(lo) < 0:
        lo *= 2.0
    while resid(hi) > 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if resid(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(lo)):
            break
    return np.maximum(z - 0.5 * (lo + hi) * sigma, 0.0)


def _solve_program(prog: _Program, tol=1e-10, patience=50, budget=200_000):
    """Maximise the timeline-C objective for one threshold.

    The program is linear in the fee f and in the participation constraints,
    and separable concave in v = u'/M under a monotone constraint. For fixed
    multipliers the inner maximisation is an exact weighted PAV fit, so the
    multipliers are found by accelerated projected gradient on the dual and
    the duality gap certifies convergence.
    """
    n, w, M = prog.n, prog.w, prog.M
    d = prog.d
    has_b = prog.boundary_step is not None
    # multipliers: one per served type (participation, scaled by w); with exclusion
    # also the excluded type's no-envy row and the served types' empty-bundle row
    sigma = np.concatenate((w, [-1.0, 1.0])) if has_b else w.copy()
    wsum = float(w.sum())
    lin = w * prog.gamma_c + M * _cum_adjoint(w, d)
    e_last = np.zeros(n)
    e_last[-1] = 1.0
    row_b = None
    if has_b:
        # d/dv of M * (S_last + step * v_last)
        row_b = M * (_cum_adjoint(e_last, d) + prog.boundary_step * e_last)
        row_e = -M * _cum_adjoint(e_last, d)

    def inner(y):
        yi = y[:n]
        coef = lin + yi * w * prog.wedge - M * _cum_adjoint(yi * w, d)
        if has_b:
            coef = coef + y[n] * row_b + y[n + 1] * row_e
        r = coef / w
        rbar = isotonic_regression(r, weights=w, increasing=False).x
        v = np.where(rbar > 0, (np.maximum(rbar, 0.0) / (prog.c * prog.p)) ** (1.0 / (prog.p - 1.0)), 0.0)
        value = float(coef @ v - prog.c * (w @ v**prog.p))
        S = prog.S(v)
        grad = w * (prog.wedge * v - M * S)
        if has_b:
            grad = np.concatenate((grad, [M * (S[-1] + prog.boundary_step * v[-1]), -M * S[-1]]))
        return value, grad, v

    y = _project_dual(np.ones(sigma.size), sigma, wsum)
    x_prev = y.copy()
    L = 1.0
    best_primal, best_v, best_f = -np.inf, None, 0.0
    best_dual = np.inf
    last_primal = -np.inf
    calm = 0
    it = 0
    tk = 1.0
    while it < budget:
        it += 1
        dval, grad, v = inner(y)
        # backtracking on the smoothness constant
        while True:
            cand = _project_dual(y - grad / L, sigma, wsum)
            cval, _, _ = inner(cand)
            step = cand - y
            if cval <= dval + grad @ step + 0.5 * L * (step @ step) + 1e-15 * abs(dval):
                break
            L *= 2.0
            if L > 1e16:
                break
        best_dual = min(best_dual, cval, dval)
        pval, f, feasible = prog.primal(v)
        if feasible and pval > best_primal:
            best_primal, best_v, best_f = pval, v, f
        gap = best_dual - best_primal
        # relative tests: profits scale like 1/c, so an absolute floor stops tiny programs early
        scale = max(abs(best_primal), abs(best_dual), 1e-300) if np.isfinite(best_primal) else np.inf
        if abs(pval - last_primal) < tol * scale:
            calm += 1
        else:
            calm = 0
        last_primal = pval
        # when p is near 1 the dual flattens below double precision before the
        # gap closes; a calm objective with a small relative gap is accepted
        if gap <= tol * scale or (calm >= patience and np.isfinite(gap) and gap < CALM_GAP_RTOL * scale):
            return best_v, best_f, best_primal, gap, it
        # Nesterov momentum with function-value restart
        tk_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        mom = (tk - 1.0) / tk_next
        if cval > dval:
            tk_next, mom = 1.0, 0.0
        y = _project_dual(cand + mom * (cand - x_prev), sigma, wsum)
        x_prev = cand
        tk = tk_next
        L *= 0.9
    gap = best_dual - best_primal
    raise ConvergenceError(
        f"timeline C program did not converge in {budget} steps (duality gap {gap:.3e})", gap, it
    )


def solve_timeline_C(env: ScreeningEnv, tol=1e-10, budget=200_000) -> ScreeningMenu:
    """Optimal menu when participation and play are separated by a delay.

    Served thresholds are searched on the grid. Excluding the types above
    index J with (0, 0) is incentive compatible only if type J+1 does not
    envy bundle J, which forces v at J to zero whenever the wedge at J is
    below -M times the grid step; such thresholds are dominated by the
    no-exclusion program and are skipped.
    """
    started = time.perf_counter()
    lam = env.grid
    K = lam.size
    w_all = env.G.weights
    gamma_c = virtual_type("C", lam, env)
    wg = wedge(lam, env)
    d_all = np.diff(lam)
    p = 1.0 / env.alpha

    candidates = []
    for J in range(K - 1):
        if wg[J] + env.M * d_all[J] >= 0:
            candidates.append(J)
    candidates.append(K - 1)

    results = {}
    for J in candidates:
        step = None if J == K - 1 else float(d_all[J])
        prog = _Program(w_all[: J + 1], gamma_c[: J + 1], wg[: J + 1], d_all[:J], env.M, env.c, p, step)
        if J == 0:
            # a single served type: phi_0 = wedge(1) * v_0 = 0 forces f <= 0
            v = np.zeros(1)
            results[J] = (v, 0.0, 0.0, 0.0, 0)
            continue
        results[J] = _solve_program(prog, tol=tol, budget=budget)

    best_J = max(results, key=lambda J: (results[J][2], -J))
    top = max(r[2] for r in results.values())
    for J in sorted(results):
        if results[J][2] >= top - 1e-12 * max(1.0, abs(top)):
            best_J = J
            break
    v_served, f, value, gap, iters = results[best_J]
    v = np.zeros(K)
    v[: best_J + 1] = v_served
    q = env.v_inv(v)
    if best_J == K - 1:
        t = mirrlees_payments("C", q, env, f)
    else:
        t = np.zeros(K)
        t[: best_J + 1] = mirrlees_payments("C", q, env, f)[: best_J + 1]
    prof = env.G.integrate(t - env.c * q)
    if prof > 1e-12 and not f < 0:
        raise AssertionError("positive profit with a nonnegative fee contradicts the fee-sign property")
    info = {
        "duality_gap": gap,
        "iterations": iters,
        "program_value": value,
        "thresholds_solved": len(results),
        "seconds": time.perf_counter() - started,
    }
    threshold = float(lam[best_J]) if best_J < K - 1 else _threshold_of(q, lam)
    return ScreeningMenu("C", lam.copy(), q, t, float(f), threshold, info)


def solve(timeline, env: ScreeningEnv) -> ScreeningMenu:
    if timeline == "C":
        return solve_timeline_C(env)
    return solve_pointwise(timeline, env)


# ---------------------------------------------------------------------------
# audits and comparisons


def decision_utility_table(menu: ScreeningMenu, env: ScreeningEnv):
    """Reporting-stage utility of type j for bundle k (rows j, columns k)."""
    lam = env.grid[:, None]
    v = env.v(menu.q)[None, :]
    t = menu.t[None, :]
    Gamma = virtual_type(menu.timeline, lam, env)
    if menu.timeline == "C":
        return Gamma * v - t
    return (1.0 + lam) * (Gamma * v - t)


@dataclass(frozen=True)
class MenuAudit:
    max_gain: float
    ic_ok: bool
    ir_ok: bool
    min_ir_slack: float

    def summary(self):
        return {"max_gain": self.max_gain, "ic_pass": self.ic_ok, "ir_pass": self.ir_ok,
                "min_participation_slack": self.min_ir_slack}


def audit_menu(menu: ScreeningMenu, env: ScreeningEnv, tol=1e-8) -> MenuAudit:
    """IC over all grid pairs and IR at served types, from the closed forms."""
    U = decision_utility_table(menu, env)
    own = np.diag(U)
    gain = float(np.max(U.max(axis=1) - own))
    ir_form = "B" if menu.timeline == "C" else menu.timeline
    slack = virtual_type(ir_form, env.grid, env) * env.v(menu.q) - menu.t
    served = menu.q > 0
    min_slack = float(slack[served].min()) if served.any() else 0.0
    return MenuAudit(gain, gain <= tol, min_slack >= -tol, min_slack)


def oracle_audit(menu: ScreeningMenu, env: ScreeningEnv) -> oracle.AuditReport:
    """Brute-force audit through the agent oracle.

    Bundle k is the product lottery (v(q_k) * theta with theta ~ F, -t_k);
    the prior is a sure zero in both dimensions. Type j has
    mu = 1 and lambda_g = lambda_m = lam_j.
    """
    zero = DiscreteDistribution.degenerate(0.0)
    unit_good = oracle.lottery_terms(env.F, zero, zero, zero)
    v = env.v(menu.q)
    K = v.size
    terms = np.zeros((K, K, 10))
    for k in range(K):
        money = DiscreteDistribution.degenerate(-menu.t[k])
        row = oracle.lottery_terms(zero, money, zero, zero)
        for col in oracle.GOOD_COLS:
            row[col] = unit_good[col] * v[k]
        terms[:, k, :] = row
    lam = env.grid[:, None]
    ones = np.ones_like(lam)
    spec = (ones, lam, ones, lam)
    outside = np.zeros(K)
    timeline = menu.timeline
    return oracle.audit_terms(terms, spec, timeline, outside)


def grid_refinement(timeline, env: ScreeningEnv):
    """Profit on the grid and on the doubled grid; returns (profit, refined, rel_change)."""
    base = profit(solve(timeline, env), env)
    fine_env = env.with_grid(env.G.refined())
    fine = profit(solve(timeline, fine_env), fine_env)
    rel = abs(fine - base) / max(abs(fine), 1e-12)
    return base, fine, rel


@dataclass(frozen=True)
class TimelineComparison:
    profits: dict
    menus: dict
    ordered: bool
    slack: float


def compare_timelines(env: ScreeningEnv, rel_tol=1e-6, grid_error=0.0) -> TimelineComparison:
    menus = {T: solve(T, env) for T in SCREENING_TIMELINES}
    profits = {T: profit(menus[T], env) for T in SCREENING_TIMELINES}
    scale = max(abs(profits["A"]), 1e-12)
    slack = rel_tol * scale + grid_error
    ordered = profits["A"] >= profits["B"] - slack and profits["B"] >= profits["C"] - slack
    return TimelineComparison(profits, menus, bool(ordered), slack)
