"""Continuous laws discretised on a uniform grid.

A :class:`GridLaw` keeps the analytic density, CDF and density slope at the
grid points (needed for hazard-rate style formulas) together with trapezoid
quadrature weights. Its ``discrete`` attribute is the normalised atom
distribution used wherever an honest finite distribution is required, so
expectations over ``discrete`` coincide with trapezoid integrals.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError
from .newsutil import DiscreteDistribution


def trapezoid_weights(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.size == 1:
        return np.ones(1)
    d = np.diff(grid)
    w = np.zeros(grid.size)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def cumtrapz(y, grid):
    """Cumulative trapezoid integral starting at 0 on the first grid point."""
    y = np.asarray(y, dtype=float)
    d = np.diff(grid)
    out = np.zeros(y.size)
    out[1:] = np.cumsum(0.5 * d * (y[:-1] + y[1:]))
    return out


@dataclass(frozen=True, eq=False)
class GridLaw:
    kind: str
    params: dict
    grid: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    dpdf: np.ndarray
    weights: np.ndarray = field(init=False, repr=False)
    discrete: DiscreteDistribution = field(init=False, repr=False)

    def __post_init__(self):
        w = trapezoid_weights(self.grid) * self.pdf
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "discrete", DiscreteDistribution(self.grid, w / w.sum()))

    @property
    def lo(self):
        return float(self.grid[0])

    @property
    def hi(self):
        return float(self.grid[-1])

    @property
    def size(self):
        return self.grid.size

    def integrate(self, values):
        """Trapezoid approximation of the integral of ``values`` against the law."""
        return float(self.weights @ np.asarray(values, dtype=float))

    def to_dict(self):
        return {"kind": self.kind, **self.params, "n": int(self.grid.size)}

    def refined(self):
        """Same law on a grid with twice as many intervals."""
        return make_law(self.kind, n=2 * (self.grid.size - 1) + 1, **self.params)


def _grid(lo, hi, n):
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise DomainError(f"need lo < hi, got [{lo}, {hi}]")
    if n < 3:
        raise DomainError("grid needs at least 3 points")
    return np.linspace(lo, hi, int(n))


def uniform_law(lo, hi, n=201):
    x = _grid(lo, hi, n)
    L = hi - lo
    return GridLaw(
        "uniform", {"lo": lo, "hi": hi}, x, np.full(x.size, 1.0 / L), (x - lo) / L, np.zeros(x.size)
    )


def linear_law(lo, hi, slope, n=201):
    """Density proportional to ``1 + slope * (x - lo) / (hi - lo)``; needs slope > -1."""
    if slope <= -1:
        raise DomainError("linear density needs slope > -1 to stay positive")
    x = _grid(lo, hi, n)
    L = hi - lo
    z = (x - lo) / L
    norm = L * (1.0 + 0.5 * slope)
    pdf = (1.0 + slope * z) / norm
    cdf = L * (z + 0.5 * slope * z**2) / norm
    dpdf = np.full(x.size, slope / (L * norm))
    return GridLaw("linear", {"lo": lo, "hi": hi, "slope": slope}, x, pdf, cdf, dpdf)


def truncexp_law(lo, hi, rate, n=201):
    """Exponential with the given rate truncated to [lo, hi]."""
    if rate <= 0:
        raise DomainError("rate must be positive")
    x = _grid(lo, hi, n)
    mass = -np.expm1(-rate * (hi - lo))
    pdf = rate * np.exp(-rate * (x - lo)) / mass
    cdf = -np.expm1(-rate * (x - lo)) / mass
    return GridLaw("truncexp", {"lo": lo, "hi": hi, "rate": rate}, x, pdf, cdf, -rate * pdf)


_FACTORIES = {"uniform": uniform_law, "linear": linear_law, "truncexp": truncexp_law}
LAW_KINDS = tuple(_FACTORIES)


def make_law(kind, n=201, **params):
    try:
        factory = _FACTORIES[kind]
    except KeyError:
        raise ValidationError(f"unknown distribution kind {kind!r}; choose from {LAW_KINDS}") from None
    return factory(n=n, **params)


def spike_law(lo, hi, mass_at_lo, n=201):
    """Discrete law with ``mass_at_lo`` on ``lo`` and the rest uniform on the grid.

    Used to build the concentrated-type instances; it has no density, so the
    returned object is a plain :class:`DiscreteDistribution`.
    """
    if not 0 < mass_at_lo < 1:
        raise DomainError("mass_at_lo must lie in (0, 1)")
    x = _grid(lo, hi, n)
    p = np.full(x.size, (1.0 - mass_at_lo) / (x.size - 1))
    p[0] = mass_at_lo
    return DiscreteDistribution(x, p)
