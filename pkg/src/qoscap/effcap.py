"""Effective capacity of a power policy, and the policy representation.

The effective capacity of an i.i.d. service process at QoS exponent theta is
-(1/(theta*TB)) * log E{ exp(-theta*TB*I(mu(z)*z)) }, the expectation taken
over the channel power gain z.  The exponent product theta*TB is what enters
everywhere, so TB defaults to 1.

Policies are tabulated on a gain grid and interpolated monotonically in
(log z, mu*z) with a hard zero below the cutoff alpha; mu*z is the smooth,
monotone quantity for every optimal policy family handled here, and the
cutoff is structural rather than numerical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .constellation import Constellation, L2E, get_rate_table
from .errors import ZeroThetaError
from .fading import FadingModel

EXPECTATION_NODES = 128


@dataclass(frozen=True)
class QosParams:
    """QoS exponent theta (1/bits) and frame-duration x bandwidth product TB."""

    theta: float
    tb: float = 1.0

    def __post_init__(self):
        if not self.theta >= 0.0:
            raise ValueError("theta must be nonnegative")
        if not self.tb > 0.0:
            raise ValueError("tb must be positive")

    @property
    def beta(self) -> float:
        """The exponent theta*TB*log2(e) that appears in the optimality conditions."""
        return self.theta * self.tb * L2E

    @property
    def exponent(self) -> float:
        """theta*TB, multiplying the rate in bits inside the expectation."""
        return self.theta * self.tb


class PowerPolicy:
    """Normalized transmit power mu(z) tabulated on a gain grid.

    ``mu`` is zero at every node at or below the cutoff ``alpha``; off-grid
    queries interpolate mu*z monotonically in log z, anchored at (alpha, 0).
    """

    def __init__(self, nodes, mu, alpha: float = 0.0, meta: dict | None = None):
        nodes = np.atleast_1d(np.asarray(nodes, dtype=float))
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if nodes.shape != mu.shape or nodes.ndim != 1:
            raise ValueError("nodes and mu must be matching 1-D arrays")
        if np.any(nodes <= 0) or np.any(np.diff(nodes) <= 0):
            raise ValueError("policy nodes must be positive and strictly ascending")
        if not np.all(np.isfinite(mu)) or np.any(mu < 0):
            raise ValueError("mu must be finite and nonnegative")
        if not alpha >= 0.0:
            raise ValueError("alpha must be nonnegative")
        mu = mu.copy()
        mu[nodes <= alpha] = 0.0
        self.nodes = nodes
        self.mu = mu
        self.alpha = float(alpha)
        self.meta = dict(meta or {})
        self._interp = self._build_interp()

    def _build_interp(self):
        keep = self.nodes > self.alpha
        x = np.log(self.nodes[keep])
        v = self.mu[keep] * self.nodes[keep]
        if self.alpha > 0.0 and x.size and math.log(self.alpha) < x[0] - 1e-14:
            # anchor the cutoff so the kink at alpha is represented exactly
            x = np.concatenate(([math.log(self.alpha)], x))
            v = np.concatenate(([0.0], v))
        if x.size >= 2:
            interp = PchipInterpolator(x, v, extrapolate=False)
            lo, hi = x[0], x[-1]
            # beyond the tabulated range hold mu*z at its edge value: exact for
            # channel inversion, bounded and positive for everything else
            return lambda u: interp(np.clip(u, lo, hi))
        value = float(v[-1]) if v.size else 0.0
        return lambda u: np.full(np.shape(u), value, dtype=float)

    def mu_at(self, z):
        """Interpolated normalized power at gains ``z``."""
        z = np.asarray(z, dtype=float)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        out = np.zeros_like(z)
        live = z > self.alpha
        if np.any(live):
            vals = np.maximum(np.asarray(self._interp(np.log(z[live])), dtype=float), 0.0)
            out[live] = vals / z[live]
        return float(out[0]) if scalar else out

    def rho_at(self, z):
        """Received SNR mu(z)*z at gains ``z``."""
        z = np.asarray(z, dtype=float)
        return self.mu_at(z) * z

    def save(self, path):
        """Write the policy as a CSV of (z, mu) with a JSON header comment."""
        header = {"alpha": self.alpha, **self.meta}
        lines = ["# " + json.dumps(header, sort_keys=True), "z,mu"]
        lines += [f"{z:.17g},{m:.17g}" for z, m in zip(self.nodes, self.mu)]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "PowerPolicy":
        meta = {}
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    try:
                        meta.update(json.loads(line[1:].strip()))
                    except json.JSONDecodeError:
                        pass
                    continue
                if line.lower().startswith("z,"):
                    continue
                z, m = line.split(",")
                rows.append((float(z), float(m)))
        arr = np.asarray(rows, dtype=float)
        alpha = float(meta.pop("alpha", 0.0))
        return cls(arr[:, 0], arr[:, 1], alpha=alpha, meta=meta)


def constant_power_policy(f: FadingModel, snr: float, n: int = 512,
                          meta: dict | None = None) -> PowerPolicy:
    """mu(z) = snr everywhere: the no-CSIT baseline."""
    if not snr >= 0.0:
        raise ValueError("snr must be nonnegative")
    nodes = f.policy_grid(n)
    info = {"policy": "constant-power", "snr": snr, **(meta or {})}
    return PowerPolicy(nodes, np.full(nodes.shape, float(snr)), alpha=0.0, meta=info)


def _tail_rates(p: PowerPolicy, f: FadingModel, c: Constellation, n: int, q=None):
    """Gain nodes above the policy cutoff, their weights, and rates I(mu z) there."""
    nodes, weights = f.tail_grid(p.alpha, n)
    table = get_rate_table(c) if q is None else get_rate_table(c, q)
    rates = table.mi(p.rho_at(nodes))
    return nodes, weights, rates


def log_expected_exp_neg_rate(rates: np.ndarray, weights: np.ndarray, exponent: float) -> float:
    """log E{exp(-exponent * I)} over a tail grid whose weights sum to P(z > alpha).

    The below-cutoff mass contributes exp(0) = 1.  Written as log1p of a sum
    of expm1 terms so that vanishing exponents keep full precision, with a
    log-sum-exp fallback once the linear form underflows.
    """
    inner = float(np.sum(weights * np.expm1(-exponent * rates)))
    if inner > -0.999999:
        return math.log1p(inner)
    # essentially all mass decayed: shift by the largest exponent
    atoms = np.concatenate((-exponent * rates, [0.0]))
    wts = np.concatenate((weights, [max(1.0 - weights.sum(), 0.0)]))
    m = atoms.max()
    return m + math.log(float(np.sum(wts * np.exp(atoms - m))))


def effective_capacity(p: PowerPolicy, f: FadingModel, q: QosParams, c: Constellation,
                       n: int = EXPECTATION_NODES) -> float:
    """Effective capacity in bits per symbol of policy ``p`` at QoS exponent theta."""
    if q.theta == 0.0:
        raise ZeroThetaError(
            "effective capacity is undefined at theta = 0; use average_rate()"
        )
    _, weights, rates = _tail_rates(p, f, c, n)
    return -log_expected_exp_neg_rate(rates, weights, q.exponent) / q.exponent


def average_rate(p: PowerPolicy, f: FadingModel, c: Constellation,
                 n: int = EXPECTATION_NODES) -> float:
    """Ergodic rate E{I(mu(z) z)} in bits per symbol (the theta -> 0 objective)."""
    _, weights, rates = _tail_rates(p, f, c, n)
    return float(weights @ rates)


def average_snr(p: PowerPolicy, f: FadingModel, n: int = EXPECTATION_NODES) -> float:
    """E{mu(z)}: the average transmit power consumed by the policy."""
    nodes, weights = f.tail_grid(p.alpha, n)
    return float(weights @ p.mu_at(nodes))
