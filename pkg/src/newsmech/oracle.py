"""Brute-force agent: the multi-self decision procedure over finite menus.

This module deliberately avoids the closed-form perceived valuations of
:mod:`newsmech.bayes`. Every news term is evaluated from percentile
comparisons of the actual lotteries, and the timelines are described by
their delay structure rather than by formulas, so the two code paths can
audit each other.

Money marginals are expressed in utility units, i.e. a transfer ``t`` paid
by the agent appears as the outcome ``-t``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .newsutil import DiscreteDistribution, GainLossSpec, news_components

ORACLE_TIMELINES = ("A", "B", "C", "D")

# (delay between participation and choice, delay between choice and realization)
_DELAYS = {
    "A": (False, False),
    "B": (False, True),
    "C": (True, True),
    "D": (True, False),
}

# column layout of a lottery's term vector
EV_G, EV_M, SG_GAIN, SG_LOSS, SM_GAIN, SM_LOSS, RG_GAIN, RG_LOSS, RM_GAIN, RM_LOSS = range(10)
GOOD_COLS = (EV_G, SG_GAIN, SG_LOSS, RG_GAIN, RG_LOSS)
MONEY_COLS = (EV_M, SM_GAIN, SM_LOSS, RM_GAIN, RM_LOSS)


@dataclass(frozen=True, eq=False)
class MenuProblem:
    good0: DiscreteDistribution
    money0: DiscreteDistribution
    menu: tuple
    spec: GainLossSpec
    timeline: str

    def __post_init__(self):
        if self.timeline not in ORACLE_TIMELINES:
            raise DomainError(f"timeline must be one of {ORACLE_TIMELINES}")
        if len(self.menu) == 0:
            raise DomainError("menu must be non-empty")
        object.__setattr__(self, "menu", tuple(tuple(entry) for entry in self.menu))

    def with_timeline(self, timeline):
        return MenuProblem(self.good0, self.money0, self.menu, self.spec, timeline)

    def with_spec(self, spec):
        return MenuProblem(self.good0, self.money0, self.menu, spec, self.timeline)


def _expected_components(L: DiscreteDistribution, ref: DiscreteDistribution):
    """E over realizations u ~ L of the news components of delta_u against ref."""
    gains = losses = 0.0
    for u, p in zip(L.support, L.probs):
        g, l = news_components(DiscreteDistribution.degenerate(u), ref)
        gains += p * g
        losses += p * l
    return gains, losses


def lottery_terms(good, money, good0, money0):
    """Term vector of one product lottery relative to the prior (good0, money0)."""
    out = np.empty(10)
    out[EV_G] = good.mean()
    out[EV_M] = money.mean()
    out[SG_GAIN], out[SG_LOSS] = _expected_components(good, good0)
    out[SM_GAIN], out[SM_LOSS] = _expected_components(money, money0)
    out[RG_GAIN], out[RG_LOSS] = _expected_components(good, good)
    out[RM_GAIN], out[RM_LOSS] = _expected_components(money, money)
    return out


def _stage_groups(timeline):
    """Self index owning each stage; a delay starts a new self."""
    delay_pc, delay_cr = _DELAYS[timeline]
    participate = 0
    choose = participate + int(delay_pc)
    realize = choose + int(delay_cr)
    return participate, choose, realize


def _spec_arrays(spec):
    if isinstance(spec, GainLossSpec):
        return spec.mu_g, spec.lambda_g, spec.mu_m, spec.lambda_m
    return spec


def compose(terms, spec, timeline):
    """Choice-stage and participation-stage utilities from term vectors.

    ``terms`` has shape (..., 10). ``spec`` is a GainLossSpec or a tuple
    ``(mu_g, lambda_g, mu_m, lambda_m)`` of arrays broadcastable against
    ``terms[..., 0]``.
    """
    if timeline not in ORACLE_TIMELINES:
        raise DomainError(f"timeline must be one of {ORACLE_TIMELINES}")
    mu_g, lam_g, mu_m, lam_m = _spec_arrays(spec)
    t = np.asarray(terms)
    intrinsic = t[..., EV_G] + t[..., EV_M]
    # E_{u~F} N(u | F0) and E_{u~F} N(u | F)
    against_prior = mu_g * (t[..., SG_GAIN] - lam_g * t[..., SG_LOSS]) + mu_m * (
        t[..., SM_GAIN] - lam_m * t[..., SM_LOSS]
    )
    against_self = mu_g * (t[..., RG_GAIN] - lam_g * t[..., RG_LOSS]) + mu_m * (
        t[..., RM_GAIN] - lam_m * t[..., RM_LOSS]
    )
    participate, choose, realize = _stage_groups(timeline)
    if participate == realize:
        # no delay anywhere: a single news term against the prior at realization
        events = [(realize, intrinsic), (realize, against_prior)]
    else:
        events = [(participate, against_prior), (realize, intrinsic), (realize, against_self)]

    def utility_of_self(self_index):
        total = np.zeros(np.shape(intrinsic))
        for stage, value in events:
            if stage >= self_index:
                total = total + value
        return total

    return utility_of_self(choose), utility_of_self(participate)


def outside_value(good0, money0, spec: GainLossSpec):
    """O(F0): expected intrinsic utility plus expected news against F0 itself."""
    g_gain, g_loss = _expected_components(good0, good0)
    m_gain, m_loss = _expected_components(money0, money0)
    return (
        good0.mean()
        + money0.mean()
        + spec.mu_g * (g_gain - spec.lambda_g * g_loss)
        + spec.mu_m * (m_gain - spec.lambda_m * m_loss)
    )


@dataclass(frozen=True)
class DecisionUtilities:
    choice: np.ndarray
    participation: np.ndarray
    outside: float
    realization: np.ndarray


def decision_utilities(problem: MenuProblem) -> DecisionUtilities:
    terms = np.array([lottery_terms(g, m, problem.good0, problem.money0) for g, m in problem.menu])
    choice, participation = compose(terms, problem.spec, problem.timeline)
    s = problem.spec
    realization = s.mu_g * (terms[:, RG_GAIN] - s.lambda_g * terms[:, RG_LOSS]) + s.mu_m * (
        terms[:, RM_GAIN] - s.lambda_m * terms[:, RM_LOSS]
    )
    return DecisionUtilities(choice, participation, outside_value(problem.good0, problem.money0, s), realization)


def simulate(problem: MenuProblem):
    """(accept, chosen index). Ties go to the lowest index; indifference accepts."""
    du = decision_utilities(problem)
    idx = int(np.argmax(du.choice))
    return bool(du.participation[idx] >= du.outside), idx


@dataclass(frozen=True)
class EquivalenceReport:
    ok: bool
    decision_C: tuple
    decision_D: tuple
    realization_terms: np.ndarray
    degenerate: np.ndarray
    message: str = ""


def verify_timeline_equivalence(problem: MenuProblem) -> EquivalenceReport:
    """Timelines C and D behave identically; realization terms are <= 0, zero iff degenerate."""
    dec_c = simulate(problem.with_timeline("C"))
    dec_d = simulate(problem.with_timeline("D"))
    real = decision_utilities(problem).realization
    degenerate = np.array([g.is_degenerate and m.is_degenerate for g, m in problem.menu])
    s = problem.spec
    strict = s.mu_g > 0 and s.lambda_g > 1 and s.mu_m > 0 and s.lambda_m > 1
    problems = []
    if dec_c != dec_d:
        problems.append(f"C chose {dec_c} but D chose {dec_d}")
    if np.any(real > 1e-12):
        problems.append(f"positive realization term {real.max()!r}")
    if np.any(real[degenerate] != 0.0):
        problems.append("degenerate lottery with nonzero realization term")
    if strict and np.any(real[~degenerate] >= 0.0):
        problems.append("non-degenerate lottery with zero realization term")
    return EquivalenceReport(not problems, dec_c, dec_d, real, degenerate, "; ".join(problems))


@dataclass(frozen=True)
class AuditReport:
    max_gain: float
    worst_type: int
    worst_report: int
    gains: np.ndarray
    participation_slack: np.ndarray

    @property
    def ic_ok(self):
        return self.max_gain <= 1e-8

    @property
    def ir_ok(self):
        return bool(np.all(self.participation_slack >= -1e-8))

    def summary(self):
        return {
            "max_gain": float(self.max_gain),
            "worst_type_index": int(self.worst_type),
            "worst_report_index": int(self.worst_report),
            "ic_pass": bool(self.ic_ok),
            "min_participation_slack": float(self.participation_slack.min()),
            "ir_pass": bool(self.ir_ok),
        }


def audit_terms(terms, spec, timeline, outside, truthful=None) -> AuditReport:
    """Exhaustive misreport search given per-(type, report) term vectors.

    ``terms[j, k]`` describes the lottery type ``j`` faces when reporting
    ``k``; ``truthful[j]`` is the report index of truth-telling (default
    ``j``).
    """
    choice, participation = compose(terms, spec, timeline)
    J = choice.shape[0]
    own = np.arange(J) if truthful is None else np.asarray(truthful)
    rows = np.arange(J)
    best = choice.max(axis=1)
    gains = best - choice[rows, own]
    j = int(np.argmax(gains))
    slack = participation[rows, own] - outside
    return AuditReport(float(gains[j]), j, int(np.argmax(choice[j])), gains, slack)


def _scale_good(terms, scale):
    """Multiply the good-dimension columns by ``scale`` (broadcast over leading axes)."""
    scale = np.asarray(scale, dtype=float)
    shape = np.broadcast_shapes(np.shape(terms)[:-1], scale.shape) + (10,)
    out = np.array(np.broadcast_to(terms, shape), dtype=float)
    for col in GOOD_COLS:
        out[..., col] *= scale
    return out


def best_response_audit(mech, timeline, spec: GainLossSpec) -> AuditReport:
    """Audit a symmetric :class:`~newsmech.bayes.DirectMechanism`.

    Each own type faces, for each possible report, the product lottery of
    its allocation value times its type and minus the transfer. Good-side
    terms are computed once per report at unit scale and rescaled by the
    (nonnegative) type, which is exact because the gain-loss function is
    positively homogeneous.
    """
    theta = np.asarray(mech.theta, dtype=float)
    if np.any(theta < 0):
        raise DomainError("types must be nonnegative for the scaled audit")
    g0 = DiscreteDistribution.degenerate(mech.v_outside)
    m0 = DiscreteDistribution.degenerate(0.0)
    unit = np.array([
        lottery_terms(a, t.scale(-1.0), g0, m0) for a, t in zip(mech.alloc, mech.transfer)
    ])
    terms = _scale_good(unit[None, :, :], theta[:, None])
    outside = np.array([outside_value(g0.scale(th), m0, spec) for th in theta])
    return audit_terms(terms, spec, timeline, outside)
