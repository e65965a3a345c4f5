"""Channel power-gain distributions: densities, moments, and quadrature.

Three model kinds are supported: Nakagami-m (Gamma-distributed power gain,
covering Rayleigh at m = 1 and one-sided Gaussian at m = 0.5), Rician with
K-factor (noncentral chi-square power gain), and empirical sample sets.

Expectations are taken with Gauss-Laguerre rules matched to the exponential
kernel of each density.  Integrands produced by power-control policies have
a kink at the cutoff gain, so a second, shifted rule integrating over
[alpha, inf) is provided; it keeps the quadrature exponentially accurate
where a fixed full-range grid would lose several digits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .errors import ConfigurationError

_QUANTILE_SPAN = 1e-6   # policy grids span [q(1e-6), q(1 - 1e-6)]


@lru_cache(maxsize=64)
def _laguerre_rule(n: int):
    return special.roots_laguerre(n)


@lru_cache(maxsize=256)
def _gen_laguerre_rule(n: int, alpha: float):
    return special.roots_genlaguerre(n, alpha)


def upper_incomplete_gamma(a: float, x: float) -> float:
    """Upper incomplete gamma Gamma(a, x), valid for any real a (x > 0 when a <= 0).

    scipy only exposes the regularized function for a > 0; nonpositive orders
    are reached by the downward recurrence
    Gamma(a, x) = (Gamma(a+1, x) - x^a e^-x) / a, seeding Gamma(0, x) = E1(x).
    """
    if x < 0.0:
        raise ValueError("x must be nonnegative")
    if a > 0.0:
        if x == 0.0:
            return float(special.gamma(a))
        return float(special.gammaincc(a, x) * special.gamma(a))
    if x == 0.0:
        raise ValueError("Gamma(a, 0) diverges for a <= 0")
    steps = int(math.floor(-a)) + 1
    aa = a + steps              # in (0, 1]
    if abs(aa) < 1e-13:
        g = float(special.exp1(x))
    else:
        g = float(special.gammaincc(aa, x) * special.gamma(aa))
    for _ in range(steps):
        aa -= 1.0
        if abs(aa) < 1e-13:
            g = float(special.exp1(x))
            aa = 0.0
        else:
            g = (g - x**aa * math.exp(-x)) / aa
    return g


@dataclass(frozen=True)
class Moments:
    mean: float
    second: float
    inv_mean: float   # E{1/z}; +inf when the density does not vanish fast enough at 0


@dataclass(frozen=True)
class GainGrid:
    """Probability-mass discretization of a gain distribution for expectations."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValueError("nodes and weights must be matching 1-D arrays")
        if np.any(nodes <= 0) or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly ascending and positive")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-8:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def expect(self, fn) -> float:
        return float(self.weights @ fn(self.nodes))


class FadingModel:
    """Common surface of the channel-power-gain models."""

    def pdf(self, z):
        raise NotImplementedError

    def moments(self) -> Moments:
        raise NotImplementedError

    def expectation_grid(self, n: int = 128) -> GainGrid:
        raise NotImplementedError

    def tail_grid(self, alpha: float, n: int = 128) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights for integrals over (alpha, inf); weights sum to P(z > alpha)."""
        raise NotImplementedError

    def quantile(self, p: float) -> float:
        raise NotImplementedError

    def policy_grid(self, n: int = 512) -> np.ndarray:
        """Log-spaced gain nodes spanning the central quantile range, for policy tabulation."""
        lo = self.quantile(_QUANTILE_SPAN)
        hi = self.quantile(1.0 - _QUANTILE_SPAN)
        if not (hi > lo * (1.0 + 1e-12)):
            return np.array([lo])
        return np.geomspace(lo, hi, n)

    @staticmethod
    def _check_grid_size(n: int):
        if n < 8:
            raise ValueError(f"expectation grid needs n >= 8 nodes, got {n}")


@dataclass(frozen=True)
class Nakagami(FadingModel):
    """Nakagami-m fading: the power gain follows a Gamma(m, omega/m) law."""

    m: float
    omega: float = 1.0

    def __post_init__(self):
        if not self.m >= 0.5:
            raise ValueError(f"Nakagami m must be >= 0.5, got {self.m}")
        if not self.omega > 0:
            raise ValueError("omega must be positive")

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        m, om = self.m, self.omega
        rate = m / om
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(
                z > 0,
                np.exp(
                    (m - 1.0) * np.log(np.where(z > 0, z, 1.0))
                    + m * math.log(rate)
                    - rate * z
                    - special.gammaln(m)
                ),
                _gamma_pdf_at_zero(m, rate),
            )
        return out if out.ndim else float(out)

    def moments(self) -> Moments:
        inv = self.m / (self.omega * (self.m - 1.0)) if self.m > 1.0 else math.inf
        return Moments(self.omega, self.omega**2 * (1.0 + 1.0 / self.m), inv)

    def expectation_grid(self, n: int = 128) -> GainGrid:
        self._check_grid_size(n)
        t, w = _gen_laguerre_rule(n, self.m - 1.0)
        nodes = self.omega * t / self.m
        weights = w / w.sum()
        return GainGrid(nodes, weights)

    def tail_grid(self, alpha: float, n: int = 128):
        if alpha <= 0.0:
            g = self.expectation_grid(n)
            return g.nodes, g.weights
        t, w = _laguerre_rule(n)
        m, om = self.m, self.omega
        z = alpha + om * t / m
        logw = (
            np.log(w)
            + (m - 1.0) * np.log(m * z / om)
            - m * alpha / om
            - special.gammaln(m)
        )
        return z, np.exp(logw)

    def quantile(self, p: float) -> float:
        return float(stats.gamma.ppf(p, a=self.m, scale=self.omega / self.m))


def _gamma_pdf_at_zero(m: float, rate: float) -> float:
    if m > 1.0:
        return 0.0
    if m == 1.0:
        return rate
    return math.inf


@dataclass(frozen=True)
class Rician(FadingModel):
    """Rician fading with linear K-factor; the power gain is scaled noncentral chi-square."""

    k: float
    omega: float = 1.0

    def __post_init__(self):
        if not self.k >= 0:
            raise ValueError("Rician K-factor must be nonnegative")
        if not self.omega > 0:
            raise ValueError("omega must be positive")

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        k, om = self.k, self.omega
        arg = 2.0 * np.sqrt(k * (k + 1.0) * z / om)
        out = (
            (1.0 + k)
            / om
            * np.exp(-k - (k + 1.0) * z / om + arg)
            * special.i0e(arg)
        )
        return out if out.ndim else float(out)

    def moments(self) -> Moments:
        k, om = self.k, self.omega
        second = (2.0 + 4.0 * k + k**2) * om**2 / (k + 1.0) ** 2
        # density is positive at z = 0, so E{1/z} diverges
        return Moments(om, second, math.inf)

    def expectation_grid(self, n: int = 128) -> GainGrid:
        self._check_grid_size(n)
        t, w = _laguerre_rule(n)
        k = self.k
        nodes = self.omega * t / (k + 1.0)
        arg = 2.0 * np.sqrt(k * t)
        weights = w * np.exp(-k + arg) * special.i0e(arg)
        return GainGrid(nodes, weights / weights.sum())

    def tail_grid(self, alpha: float, n: int = 128):
        if alpha <= 0.0:
            g = self.expectation_grid(n)
            return g.nodes, g.weights
        t, w = _laguerre_rule(n)
        k, om = self.k, self.omega
        z = alpha + om * t / (k + 1.0)
        arg = 2.0 * np.sqrt(k * (k + 1.0) * z / om)
        logw = np.log(w) - k - (k + 1.0) * alpha / om + arg + np.log(special.i0e(arg))
        return z, np.exp(logw)

    def quantile(self, p: float) -> float:
        k = self.k
        return float(self.omega / (2.0 * (k + 1.0)) * stats.ncx2.ppf(p, df=2, nc=2.0 * k))


@dataclass(frozen=True)
class Empirical(FadingModel):
    """Gain distribution given by observed positive samples, weighted uniformly."""

    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.samples, dtype=float))
        if s.size == 0 or np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ValueError("empirical samples must be positive and finite")
        object.__setattr__(self, "samples", s)

    def pdf(self, z):
        raise NotImplementedError(
            "empirical models have no closed-form density; expectations use the samples"
        )

    def moments(self) -> Moments:
        s = self.samples
        return Moments(float(s.mean()), float((s**2).mean()), float((1.0 / s).mean()))

    def expectation_grid(self, n: int = 128) -> GainGrid:
        self._check_grid_size(n)
        nodes, counts = np.unique(self.samples, return_counts=True)
        return GainGrid(nodes, counts / self.samples.size)

    def tail_grid(self, alpha: float, n: int = 128):
        nodes, counts = np.unique(self.samples[self.samples > alpha], return_counts=True)
        return nodes, counts / self.samples.size

    def quantile(self, p: float) -> float:
        return float(np.quantile(self.samples, p))


def from_config(cfg) -> FadingModel:
    """Build a fading model from its JSON description.

    Accepted forms: {"nakagami": {"m": .., "omega": ..}},
    {"rician": {"k_db": .., "omega": ..}} (or linear "k"), and
    {"empirical": {"path": <csv of gains>}} (or inline "samples").
    """
    if isinstance(cfg, FadingModel):
        return cfg
    if not isinstance(cfg, dict) or len(cfg) != 1:
        raise ConfigurationError(
            f"fading spec must be a single-key mapping, got {cfg!r}"
        )
    (kind, params), = cfg.items()
    kind = kind.lower()
    params = dict(params or {})
    try:
        if kind == "nakagami":
            return Nakagami(m=float(params.pop("m")), omega=float(params.pop("omega", 1.0)))
        if kind == "rician":
            if "k" in params:
                k = float(params.pop("k"))
                params.pop("k_db", None)
            else:
                k = 10.0 ** (float(params.pop("k_db")) / 10.0)
            return Rician(k=k, omega=float(params.pop("omega", 1.0)))
        if kind == "empirical":
            if "samples" in params:
                return Empirical(np.asarray(params.pop("samples"), dtype=float))
            path = params.pop("path")
            return Empirical(np.loadtxt(path, delimiter=",").ravel())
    except KeyError as exc:
        raise ConfigurationError(f"fading spec {kind!r} is missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad fading spec {cfg!r}: {exc}") from exc
    raise ConfigurationError(f"unknown fading kind {kind!r}")
