"""Low-power-regime analysis: minimum energy per bit, wideband slope, the
linear throughput approximation, and the closed-form low-power policy.

All exponent-domain quantities are carried in nats internally: the policy
denominator is beta + |curvature_bits| * ln 2, which collapses the recurring
log-base bookkeeping into one conversion at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constellation import Constellation, mi_second_derivative_at_zero
from .effcap import PowerPolicy, QosParams
from .fading import FadingModel, Nakagami, upper_incomplete_gamma

_LN2 = math.log(2.0)
_DB_PER_UNIT = 10.0 * math.log10(2.0)   # dB step corresponding to one slope unit


@dataclass(frozen=True)
class LowPowerMetrics:
    """First-order energy-efficiency figures in the vanishing-power limit."""

    eb_n0_min: float
    s0: float
    curvature_bits: float
    theta: float

    @property
    def eb_n0_min_db(self) -> float:
        return 10.0 * math.log10(self.eb_n0_min)


def min_energy_per_bit(f: FadingModel) -> float:
    """ln2 / E{z}: independent of the input distribution and of theta."""
    mean = f.moments().mean
    if not (mean > 0 and math.isfinite(mean)):
        raise ValueError("E{z} must be finite and positive")
    return _LN2 / mean


def wideband_slope(f: FadingModel, c: Constellation, q: QosParams) -> float:
    """Slope of the capacity-vs-energy-per-bit (dB) curve at the minimum.

    2 / ((|curvature| ln2 + beta) E{z^2}/E{z}^2 - beta) with the curvature of
    I at zero in bits and beta = theta TB log2(e).
    """
    mom = f.moments()
    if not math.isfinite(mom.second):
        raise ValueError("E{z^2} must be finite")
    curv_nats = -mi_second_derivative_at_zero(c) * _LN2   # = 1 or 2 for the built-ins
    ratio = mom.second / mom.mean**2
    return 2.0 / ((curv_nats + q.beta) * ratio - q.beta)


def nakagami_wideband_slope(f: Nakagami, c: Constellation, q: QosParams) -> float:
    """Shape-parameter form of the slope, used to cross-check the general one."""
    curv_nats = -mi_second_derivative_at_zero(c) * _LN2
    return 2.0 / ((1.0 + 1.0 / f.m) * curv_nats + q.beta / f.m)


def rician_wideband_slope(k: float, c: Constellation, q: QosParams) -> float:
    """K-factor form of the slope; increasing in K."""
    curv_nats = -mi_second_derivative_at_zero(c) * _LN2
    return 2.0 * (k + 1.0) ** 2 / ((2.0 + 4.0 * k + k**2) * curv_nats + (2.0 * k + 1.0) * q.beta)


def low_power_metrics(f: FadingModel, c: Constellation, q: QosParams) -> LowPowerMetrics:
    return LowPowerMetrics(
        eb_n0_min=min_energy_per_bit(f),
        s0=wideband_slope(f, c, q),
        curvature_bits=mi_second_derivative_at_zero(c),
        theta=q.theta,
    )


def capacity_linear_approx(f: FadingModel, c: Constellation, q: QosParams,
                           eb_n0_db) -> float | np.ndarray:
    """First-order throughput at an energy per bit given in dB, clipped at zero."""
    metrics = low_power_metrics(f, c, q)
    offset = np.asarray(eb_n0_db, dtype=float) - metrics.eb_n0_min_db
    out = np.maximum(metrics.s0 / _DB_PER_UNIT * offset, 0.0)
    return float(out) if out.ndim == 0 else out


def _policy_denominator(c: Constellation, q: QosParams) -> float:
    return q.beta - mi_second_derivative_at_zero(c) * _LN2


def low_power_policy(f: FadingModel, c: Constellation, q: QosParams, snr: float,
                     n: int = 512, quad_points: int = 128) -> PowerPolicy:
    """Closed-form low-power allocation mu = (z - alpha) / (D z^2), clipped at 0.

    D folds the QoS exponent and the input curvature (in nats); the cutoff
    alpha is bisected on the monotone average-power constraint.  Accuracy
    degrades as snr grows; this is the vanishing-power expansion.
    """
    if not snr > 0:
        raise ValueError("snr must be positive")
    d_coeff = _policy_denominator(c, q)

    def expected_power(alpha: float) -> float:
        nodes, weights = f.tail_grid(alpha, quad_points)
        if nodes.size == 0:
            return 0.0
        return float(weights @ ((nodes - alpha) / (d_coeff * nodes**2)))

    a_lo = a_hi = f.moments().mean
    for _ in range(600):
        if expected_power(a_lo) >= snr:
            break
        a_lo *= 0.5
    else:
        raise ValueError(
            "average power constraint unreachable by the low-power form; "
            "snr is too large for this approximation"
        )
    for _ in range(600):
        if expected_power(a_hi) <= snr:
            break
        a_hi *= 2.0
    else:  # pragma: no cover
        raise ValueError("failed to bracket the low-power cutoff from above")
    while (a_hi - a_lo) > 1e-13 * a_hi:
        mid = 0.5 * (a_lo + a_hi)
        if expected_power(mid) >= snr:
            a_lo = mid
        else:
            a_hi = mid
    alpha = 0.5 * (a_lo + a_hi)

    nodes = f.policy_grid(n)
    mu = np.maximum((nodes - alpha) / (d_coeff * nodes**2), 0.0)
    meta = {"policy": "low-power", "fading": repr(f), "constellation": c.name,
            "theta": q.theta, "tb": q.tb, "snr": snr}
    return PowerPolicy(nodes, mu, alpha=alpha, meta=meta)


def nakagami_lowpower_cutoff(f: Nakagami, c: Constellation, q: QosParams,
                             snr: float) -> float:
    """Cutoff of the low-power policy from the incomplete-gamma identity.

    For a Gamma-distributed gain the constraint integral evaluates in closed
    form, giving (m Omega G(m-1, m a/O) - m^2 a G(m-2, m a/O)) / (O^2 G(m))
    = D snr; this solves it for the cutoff as an independent cross-check of
    the quadrature-based bisection.
    """
    from scipy.optimize import brentq

    m, om = f.m, f.omega
    d_coeff = _policy_denominator(c, q)
    gamma_m = math.gamma(m)

    def residual(alpha: float) -> float:
        x = m * alpha / om
        lhs = (
            -(m**2) * alpha * upper_incomplete_gamma(m - 2.0, x)
            + om * m * upper_incomplete_gamma(m - 1.0, x)
        ) / (om**2 * gamma_m)
        return lhs - d_coeff * snr

    lo = hi = om
    for _ in range(400):
        if residual(lo) >= 0:
            break
        lo *= 0.5
    for _ in range(400):
        if residual(hi) <= 0:
            break
        hi *= 2.0
    return float(brentq(residual, lo, hi, xtol=1e-300, rtol=8.9e-16))
