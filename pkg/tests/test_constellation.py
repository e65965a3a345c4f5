import math

import numpy as np
import pytest

from qoscap import constellation as cn
from qoscap.errors import ConfigurationError

L2E = math.log2(math.e)

BUILTINS = [cn.bpsk(), cn.qpsk(), cn.pam4(), cn.qam16()]


def test_quadrature_spec_validation():
    with pytest.raises(ConfigurationError):
        cn.QuadratureSpec(nodes_per_dim=1)
    q = cn.QuadratureSpec(40)
    assert np.all(q.weights > 0)
    assert np.allclose(q.nodes, -q.nodes[::-1], atol=1e-12)
    assert abs(q.weights.sum() - math.sqrt(math.pi)) < 1e-10


def test_builtin_unit_power():
    for c in BUILTINS:
        assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12
        assert c.points.size >= 2


def test_from_points_renormalizes():
    c = cn.from_points([-3.0, -1.0, 1.0, 3.0])
    assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-14
    np.testing.assert_allclose(c.points.real, cn.pam4().points.real, atol=1e-14)


def test_constellation_validation():
    with pytest.raises(ValueError):
        cn.Constellation(cn.DISCRETE, np.array([1.0 + 0j]), "single")
    with pytest.raises(ValueError):
        cn.Constellation(cn.DISCRETE, np.array([2.0, -2.0], dtype=complex), "unnormalized")
    with pytest.raises(ValueError):
        cn.from_points([0.0, 0.0])


def test_from_spec():
    assert cn.from_spec("16qam").family == "qam16"
    assert cn.from_spec("Gaussian").is_gaussian
    c = cn.from_spec([[1.0, 1.0], [-1.0, -1.0]])
    assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-14
    with pytest.raises(ConfigurationError):
        cn.from_spec("8psk-exact")


def test_mi_zero_rho_is_zero():
    for c in BUILTINS + [cn.gaussian()]:
        assert cn.mutual_information(c, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_mi_gaussian_closed_form():
    assert cn.mutual_information(cn.gaussian(), 1.0) == pytest.approx(1.0, abs=1e-14)
    assert cn.mutual_information(cn.gaussian(), 3.0) == pytest.approx(2.0, abs=1e-14)


def test_qpsk_factors_into_two_bpsk():
    # direct 2-D evaluation against two independent half-power BPSK branches
    for rho in (0.5, 2.0, 8.0):
        lhs = cn.mutual_information_2d(cn.qpsk(), rho)
        rhs = 2.0 * cn.mutual_information(cn.bpsk(), rho / 2.0)
        assert lhs == pytest.approx(rhs, abs=1e-6)


def test_bpsk_mi_saturates():
    assert cn.mutual_information(cn.bpsk(), 100.0) == pytest.approx(1.0, abs=1e-3)


def test_mmse_at_zero_is_one():
    for c in BUILTINS + [cn.gaussian()]:
        assert cn.mmse(c, 0.0) == pytest.approx(1.0, abs=1e-12)


def test_mmse_gaussian_closed_form():
    assert cn.mmse(cn.gaussian(), 3.0) == pytest.approx(0.25, abs=1e-14)


def test_qam16_delegates_to_pam4():
    assert cn.mmse(cn.qam16(), 4.0) == pytest.approx(cn.mmse(cn.pam4(), 2.0), abs=1e-10)


def test_qpsk_delegates_to_bpsk():
    assert cn.mmse(cn.qpsk(), 3.0) == pytest.approx(cn.mmse(cn.bpsk(), 1.5), abs=1e-10)


def test_bpsk_mmse_matches_mi_derivative():
    rho, h = 1.0, 1e-4
    fd = (cn.mutual_information(cn.bpsk(), rho + h) - cn.mutual_information(cn.bpsk(), rho - h)) / (2 * h)
    assert fd / L2E == pytest.approx(cn.mmse(cn.bpsk(), rho), abs=1e-5)


def test_general_paths_match_specialized():
    # the same point sets pushed through the generic machinery
    bp = cn.from_points([-1.0, 1.0])
    p4 = cn.from_points([-3.0, -1.0, 1.0, 3.0])
    qp = cn.from_points(np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / math.sqrt(2))
    for rho in (0.3, 1.0, 4.0, 20.0):
        assert cn.mmse(bp, rho) == pytest.approx(cn.mmse(cn.bpsk(), rho), abs=1e-9)
        assert cn.mmse(p4, rho) == pytest.approx(cn.mmse(cn.pam4(), rho), abs=1e-9)
        assert cn.mmse(qp, rho) == pytest.approx(cn.mmse(cn.qpsk(), rho), abs=1e-9)
        assert cn.mutual_information(qp, rho) == pytest.approx(
            cn.mutual_information(cn.qpsk(), rho), abs=1e-9
        )


def test_mmse_inverse_trivial():
    assert cn.mmse_inverse(cn.gaussian(), 0.5) == pytest.approx(1.0, abs=1e-8)
    for c in BUILTINS + [cn.gaussian()]:
        assert cn.mmse_inverse(c, 1.0) == 0.0


def test_mmse_inverse_roundtrip_bpsk():
    rho = cn.mmse_inverse(cn.bpsk(), 0.2)
    assert cn.mmse(cn.bpsk(), rho) == pytest.approx(0.2, abs=1e-8)


def test_mmse_inverse_domain():
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            cn.mmse_inverse(cn.bpsk(), bad)


def test_mmse_inverse_identity_on_targets():
    targets = np.linspace(0.05, 1.0, 12)
    for c in BUILTINS:
        for t in targets:
            rho = cn.mmse_inverse(c, float(t))
            assert cn.mmse(c, rho) == pytest.approx(float(t), abs=1e-8)


def test_curvature_values():
    assert cn.mi_second_derivative_at_zero(cn.qpsk()) == pytest.approx(-L2E)
    assert cn.mi_second_derivative_at_zero(cn.qam16()) == pytest.approx(-L2E)
    assert cn.mi_second_derivative_at_zero(cn.gaussian()) == pytest.approx(-L2E)
    assert cn.mi_second_derivative_at_zero(cn.bpsk()) == pytest.approx(-2 * L2E)
    assert cn.mi_second_derivative_at_zero(cn.pam4()) == pytest.approx(-2 * L2E)
    # 8-PSK is quadrature symmetric
    psk8 = cn.from_points(np.exp(2j * math.pi * np.arange(8) / 8))
    assert cn.mi_second_derivative_at_zero(psk8) == pytest.approx(-L2E)


def test_curvature_unclassifiable():
    lopsided = cn.from_points([1.0, 1j, -1.0])
    with pytest.raises(ValueError, match="curvature_bits"):
        cn.mi_second_derivative_at_zero(lopsided)
    supplied = cn.from_points([1.0, 1j, -1.0], curvature_bits=-1.9)
    assert cn.mi_second_derivative_at_zero(supplied) == pytest.approx(-1.9)


def test_i_mmse_identity_grid():
    rhos = np.geomspace(1e-3, 1e2, 25)
    for c in BUILTINS + [cn.gaussian()]:
        for rho in rhos:
            h = 1e-4 * max(rho, 1.0)
            fd = (cn.mutual_information(c, rho + h) - cn.mutual_information(c, rho - h)) / (2 * h)
            assert abs(fd - cn.mmse(c, rho) * L2E) <= 1e-4


def test_mi_concave_mmse_decreasing():
    rhos = np.geomspace(1e-3, 1e2, 40)
    for c in BUILTINS + [cn.gaussian()]:
        mi = cn.mutual_information(c, rhos)
        mm = cn.mmse(c, rhos)
        # strictly decreasing until the values underflow
        alive = mm[:-1] > 1e-13
        assert np.all(np.diff(mm)[alive] < 0)
        assert np.all(np.diff(mm) <= 0)
        # increasing until saturation
        sat = c.bits_per_symbol
        rising = mi[:-1] < sat - 1e-6
        assert np.all(np.diff(mi)[rising] > 0)
        # concavity: I as a function of rho has nonincreasing slope
        slopes = np.diff(mi) / np.diff(rhos)
        assert np.all(np.diff(slopes) <= 1e-8)


def test_ranges():
    rhos = np.geomspace(1e-3, 1e2, 30)
    for c in BUILTINS:
        mi = cn.mutual_information(c, rhos)
        mm = cn.mmse(c, rhos)
        assert np.all((mi >= 0) & (mi <= c.bits_per_symbol + 1e-12))
        assert np.all((mm >= 0) & (mm <= 1.0))


def test_quadrature_convergence_40_vs_60():
    q40, q60 = cn.QuadratureSpec(40), cn.QuadratureSpec(60)
    rhos = np.geomspace(1e-3, 100.0, 50)
    for c in BUILTINS:
        assert np.abs(
            cn.mutual_information(c, rhos, q40) - cn.mutual_information(c, rhos, q60)
        ).max() <= 1e-8
        assert np.abs(cn.mmse(c, rhos, q40) - cn.mmse(c, rhos, q60)).max() <= 1e-8


def test_rate_table_matches_direct():
    rng = np.random.default_rng(7)
    rhos = np.exp(rng.uniform(math.log(1e-8), math.log(1e6), 40))
    for c in BUILTINS:
        tab = cn.get_rate_table(c)
        assert np.abs(tab.mi(rhos) - cn.mutual_information(c, rhos)).max() <= 1e-9
        assert np.abs(tab.mmse(rhos) - cn.mmse(c, rhos)).max() <= 1e-9


def test_rate_table_cache_shared():
    assert cn.get_rate_table(cn.bpsk()) is cn.get_rate_table(cn.bpsk())


def test_rate_table_inverse():
    tab = cn.get_rate_table(cn.qpsk())
    targets = np.array([0.9, 0.4, 0.05])
    rho = tab.mmse_inverse(targets)
    assert np.abs(tab.mmse(rho) - targets).max() <= 1e-9
    gtab = cn.get_rate_table(cn.gaussian())
    assert gtab.mmse_inverse(0.25) == pytest.approx(3.0, abs=1e-12)


def test_mmse_values_against_highprecision():
    # frozen references computed with 30-digit adaptive quadrature of the
    # conditional-mean integrals
    assert cn.mmse(cn.bpsk(), 1.0) == pytest.approx(0.2310182219, abs=1e-9)
    assert cn.mmse(cn.pam4(), 2.0) == pytest.approx(0.1765153922, abs=1e-9)
    assert cn.mutual_information(cn.bpsk(), 1.0) == pytest.approx(0.7214515908, abs=1e-9)
