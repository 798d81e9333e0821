"""News-utility primitives on finite distributions.

Everything here works with :class:`DiscreteDistribution`, a sorted finite
support with probabilities. Percentile comparisons are evaluated exactly on
the merged CDF breakpoints of the two distributions, so no sampling
tolerance is involved.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleError, ResourceError

MERGE_TOL = 1e-12
PROB_TOL = 1e-9
DEFAULT_SUPPORT_CAP = 2_000_000


def _merge_atoms(values, probs, tol=MERGE_TOL):
    order = np.argsort(values, kind="stable")
    values = values[order]
    probs = probs[order]
    if values.size <= 1:
        return values, probs
    # start a new atom whenever the gap to the previous value exceeds tol
    new_atom = np.empty(values.size, dtype=bool)
    new_atom[0] = True
    new_atom[1:] = np.diff(values) > tol
    starts = np.flatnonzero(new_atom)
    return values[starts], np.add.reduceat(probs, starts)


class DiscreteDistribution:
    """Finite distribution with strictly ascending support.

    Atoms closer than ``MERGE_TOL`` are merged and zero-probability atoms are
    dropped. Probabilities must sum to one up to ``PROB_TOL``; the remaining
    float dust is absorbed by renormalisation.
    """

    __slots__ = ("support", "probs", "_cum")

    def __init__(self, support, probs):
        x = np.atleast_1d(np.asarray(support, dtype=float)).ravel()
        p = np.atleast_1d(np.asarray(probs, dtype=float)).ravel()
        if x.size == 0 or x.size != p.size:
            raise DomainError("support and probs must be non-empty and of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise DomainError("support and probs must be finite")
        if np.any(p < 0):
            raise DomainError("probabilities must be nonnegative")
        total = p.sum()
        if abs(total - 1.0) > PROB_TOL:
            raise DomainError(f"probabilities sum to {total!r}, not 1")
        keep = p > 0
        x, p = _merge_atoms(x[keep], p[keep] / total)
        x.flags.writeable = False
        p.flags.writeable = False
        self.support = x
        self.probs = p
        cum = np.cumsum(p)
        cum[-1] = 1.0
        cum.flags.writeable = False
        self._cum = cum

    @classmethod
    def degenerate(cls, value):
        return cls([value], [1.0])

    @classmethod
    def uniform_atoms(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(values, np.full(values.size, 1.0 / values.size))

    def __len__(self):
        return self.support.size

    def __repr__(self):
        if len(self) <= 6:
            atoms = ", ".join(f"{x:g}: {p:g}" for x, p in zip(self.support, self.probs))
            return f"DiscreteDistribution({{{atoms}}})"
        return f"DiscreteDistribution(<{len(self)} atoms on [{self.support[0]:g}, {self.support[-1]:g}]>)"

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return (
            self.support.shape == other.support.shape
            and np.array_equal(self.support, other.support)
            and np.array_equal(self.probs, other.probs)
        )

    __hash__ = None

    @property
    def cum(self):
        return self._cum

    @property
    def is_degenerate(self):
        return self.support.size == 1

    def mean(self):
        return float(self.probs @ self.support)

    def var(self):
        mu = self.mean()
        return float(self.probs @ (self.support - mu) ** 2)

    def cdf(self, x):
        """P(X <= x), vectorised over ``x``."""
        idx = np.searchsorted(self.support, np.asarray(x, dtype=float), side="right")
        padded = np.concatenate(([0.0], self._cum))
        return padded[idx]

    def quantile(self, p):
        return quantile(self, p)

    def expect(self, fn):
        return float(self.probs @ fn(self.support))

    def scale(self, a):
        """Distribution of ``a * X``."""
        return DiscreteDistribution(a * self.support, self.probs)

    def shift(self, b):
        return DiscreteDistribution(self.support + b, self.probs)

    def to_dict(self):
        return {"support": self.support.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["support"], d["probs"])


@dataclass(frozen=True)
class GainLossSpec:
    """Behavioural parameters for the good (g) and money (m) dimensions."""

    mu_g: float
    mu_m: float
    lambda_g: float
    lambda_m: float

    def __post_init__(self):
        for name in ("mu_g", "mu_m"):
            if not np.isfinite(getattr(self, name)) or getattr(self, name) < 0:
                raise DomainError(f"{name} must be a nonnegative real")
        for name in ("lambda_g", "lambda_m"):
            if not np.isfinite(getattr(self, name)) or getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")

    @property
    def Lambda_g(self):
        return self.mu_g * (self.lambda_g - 1.0)

    @property
    def Lambda_m(self):
        return self.mu_m * (self.lambda_m - 1.0)

    @classmethod
    def news_free(cls):
        return cls(0.0, 0.0, 1.0, 1.0)


def quantile(D: DiscreteDistribution, p: float) -> float:
    """Smallest support point whose CDF reaches ``p``."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {p!r}")
    idx = int(np.searchsorted(D.cum, p - MERGE_TOL, side="left"))
    return float(D.support[min(idx, D.support.size - 1)])


def gain_loss(y, mu, lam):
    """Piecewise-linear gain-loss valuation; vectorised over ``y``."""
    y = np.asarray(y, dtype=float)
    out = np.where(y >= 0, mu * y, mu * lam * y)
    return float(out) if out.ndim == 0 else out


def news_components(G: DiscreteDistribution, H: DiscreteDistribution):
    """Integrated positive and negative parts of ``c_G(p) - c_H(p)`` over p.

    Returns ``(gains, losses)``, both nonnegative, so that the news utility of
    G relative to H is ``mu * (gains - lam * losses)``.
    """
    breaks = np.union1d(G.cum, H.cum)
    lo = np.concatenate(([0.0], breaks[:-1]))
    width = breaks - lo
    keep = width > 0
    mid = 0.5 * (lo[keep] + breaks[keep])
    width = width[keep]
    ig = np.minimum(np.searchsorted(G.cum, mid, side="left"), G.support.size - 1)
    ih = np.minimum(np.searchsorted(H.cum, mid, side="left"), H.support.size - 1)
    diff = G.support[ig] - H.support[ih]
    gains = float(width @ np.maximum(diff, 0.0))
    losses = float(width @ np.maximum(-diff, 0.0))
    return gains, losses


def news_utility(G: DiscreteDistribution, H: DiscreteDistribution, mu, lam) -> float:
    """Percentile-by-percentile news utility from moving beliefs H -> G."""
    gains, losses = news_components(G, H)
    return mu * (gains - lam * losses)


def gap_functional(H: DiscreteDistribution) -> float:
    """sum over pairs z > w of p_z p_w (z - w)."""
    x, p = H.support, H.probs
    if x.size == 1:
        return 0.0
    below_mass = np.concatenate(([0.0], np.cumsum(p)[:-1]))
    below_first_moment = np.concatenate(([0.0], np.cumsum(p * x)[:-1]))
    val = float(p @ (x * below_mass - below_first_moment))
    return max(val, 0.0)


def expected_realization_penalty(H: DiscreteDistribution, Lambda) -> float:
    if Lambda < 0:
        raise DomainError("Lambda must be nonnegative")
    return Lambda * gap_functional(H)


def positive_gap_mean(F: DiscreteDistribution) -> float:
    """E[(theta - s)^+] for two independent draws from F."""
    return gap_functional(F)


def binary_for_target(x, y, Lambda) -> DiscreteDistribution:
    """Fair coin over ``y +- 2x/Lambda``: mean ``y`` and penalty ``x``."""
    if x < 0:
        raise DomainError("target penalty must be nonnegative")
    if x == 0:
        return DiscreteDistribution.degenerate(y)
    if Lambda <= 0:
        raise InfeasibleError("a positive penalty needs Lambda > 0")
    half_spread = 2.0 * x / Lambda
    return DiscreteDistribution([y - half_spread, y + half_spread], [0.5, 0.5])


def _lattice_step(x, rel_tol=1e-9):
    """Return the spacing h if every support point is x[0] + h*integer."""
    if x.size < 2:
        return None
    h = float(np.min(np.diff(x)))
    k = (x - x[0]) / h
    if np.all(np.abs(k - np.round(k)) <= rel_tol * np.maximum(1.0, np.abs(k))):
        return h
    return None


def n_fold_convolution(D: DiscreteDistribution, k: int, support_cap: int = DEFAULT_SUPPORT_CAP):
    """Distribution of the sum of ``k`` independent draws from ``D``."""
    if int(k) != k or k < 1:
        raise DomainError("k must be a positive integer")
    k = int(k)
    if k == 1:
        return D
    x, p = D.support, D.probs
    if x.size == 1:
        return DiscreteDistribution.degenerate(k * x[0])

    h = _lattice_step(x)
    if h is not None:
        idx = np.round((x - x[0]) / h).astype(np.int64)
        span = int(idx[-1]) * k + 1
        if span > support_cap:
            raise ResourceError(
                f"convolution support of {span} points exceeds cap {support_cap}; use a coarser grid"
            )
        dense = np.zeros(int(idx[-1]) + 1)
        dense[idx] = p
        out = np.array([1.0])
        base = dense
        # binary powering keeps the number of convolutions logarithmic in k
        m = k
        while m:
            if m & 1:
                out = np.convolve(out, base)
            m >>= 1
            if m:
                base = np.convolve(base, base)
        out = np.maximum(out, 0.0)
        values = k * x[0] + h * np.arange(out.size)
        return DiscreteDistribution(values, out / out.sum())

    values, probs = x, p
    for _ in range(k - 1):
        if values.size * x.size > support_cap:
            raise ResourceError(
                f"convolution needs {values.size * x.size} intermediate atoms, cap is {support_cap}; "
                "use a coarser grid"
            )
        values, probs = _merge_atoms(
            (values[:, None] + x[None, :]).ravel(), (probs[:, None] * p[None, :]).ravel()
        )
    return DiscreteDistribution(values, probs / probs.sum())
