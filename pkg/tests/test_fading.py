import math

import numpy as np
import pytest
from scipy import integrate

from qoscap import fading as fd
from qoscap.errors import ConfigurationError


def test_pdf_examples():
    ray = fd.Nakagami(m=1.0, omega=1.0)
    assert ray.pdf(0.0) == pytest.approx(1.0)
    ric0 = fd.Rician(k=0.0, omega=1.0)
    for z in (0.1, 0.7, 3.0):
        assert ric0.pdf(z) == pytest.approx(math.exp(-z), rel=1e-12)
    nak2 = fd.Nakagami(m=2.0, omega=1.0)
    assert nak2.pdf(1.0) == pytest.approx(0.54134113294645077, rel=1e-12)


def test_nakagami_equals_rician_k0():
    ray = fd.Nakagami(m=1.0, omega=1.3)
    ric = fd.Rician(k=0.0, omega=1.3)
    z = np.geomspace(1e-3, 8.0, 50)
    np.testing.assert_allclose(ray.pdf(z), ric.pdf(z), atol=1e-10)


def test_parameter_validation():
    with pytest.raises(ValueError):
        fd.Nakagami(m=0.4)
    with pytest.raises(ValueError):
        fd.Nakagami(m=1.0, omega=0.0)
    with pytest.raises(ValueError):
        fd.Rician(k=-0.1)
    with pytest.raises(ValueError):
        fd.Empirical(np.array([1.0, -2.0]))


def test_moments_examples():
    m = fd.Nakagami(m=1.0, omega=1.0).moments()
    assert (m.mean, m.second, m.inv_mean) == (1.0, 2.0, math.inf)
    r = fd.Rician(k=0.0, omega=1.0).moments()
    assert r.second == pytest.approx(2.0)
    assert r.inv_mean == math.inf
    e = fd.Empirical(np.array([1.0, 1.0, 1.0])).moments()
    assert (e.mean, e.second, e.inv_mean) == (1.0, 1.0, 1.0)
    # channel-inversion constant source: E{1/z} for m > 1
    assert fd.Nakagami(m=2.0, omega=1.0).moments().inv_mean == pytest.approx(2.0)


def test_expectation_grid_matches_moments():
    for m in (0.5, 1.0, 2.0, 5.0):
        model = fd.Nakagami(m=m, omega=1.4)
        g = model.expectation_grid(128)
        mom = model.moments()
        assert abs(g.weights.sum() - 1.0) <= 1e-8
        assert g.expect(lambda z: z) == pytest.approx(mom.mean, rel=1e-6)
        assert g.expect(lambda z: z**2) == pytest.approx(mom.second, rel=1e-6)
    for k in (0.0, 1.0, 3.16):
        model = fd.Rician(k=k, omega=0.8)
        g = model.expectation_grid(128)
        mom = model.moments()
        assert abs(g.weights.sum() - 1.0) <= 1e-8
        assert g.expect(lambda z: z) == pytest.approx(mom.mean, rel=1e-6)
        assert g.expect(lambda z: z**2) == pytest.approx(mom.second, rel=1e-6)


def test_empirical_grid_is_sample_frequencies():
    model = fd.Empirical(np.array([2.0, 1.0, 2.0, 3.0]))
    g = model.expectation_grid(8)
    np.testing.assert_allclose(g.nodes, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(g.weights, [0.25, 0.5, 0.25])


def test_grid_size_validation():
    with pytest.raises(ValueError):
        fd.Nakagami(m=1.0).expectation_grid(4)


def test_pdf_normalization_trapezoid():
    for model in (fd.Nakagami(m=1.0), fd.Nakagami(m=3.0, omega=2.0), fd.Rician(k=2.5)):
        z = np.linspace(1e-9, model.quantile(1 - 1e-9), 400_000)
        mass = np.trapezoid(model.pdf(z), z)
        assert mass == pytest.approx(1.0, abs=1e-5)
    # m < 1 has a z^(m-1) singularity at the origin; compare over an interior
    # window against the exact Gamma CDF instead
    model = fd.Nakagami(m=0.5)
    lo, hi = model.quantile(0.01), model.quantile(0.99)
    z = np.linspace(lo, hi, 400_000)
    assert np.trapezoid(model.pdf(z), z) == pytest.approx(0.98, abs=1e-5)


def test_tail_grid_against_adaptive_quadrature():
    cases = [
        (fd.Nakagami(m=1.0), 0.8, 1e-9),
        (fd.Nakagami(m=3.0, omega=1.5), 2.0, 1e-9),
        # m < 1: the z^(m-1) branch point just left of the shifted origin slows
        # the rule; still far tighter than any solver tolerance
        (fd.Nakagami(m=0.5), 0.3, 5e-7),
        (fd.Rician(k=1.8, omega=0.7), 1.1, 1e-9),
    ]
    for model, alpha, rel in cases:
        nodes, weights = model.tail_grid(alpha, 128)
        for fn in (lambda z: np.ones_like(z), lambda z: z, lambda z: np.log1p(z) / z):
            want, _ = integrate.quad(
                lambda z: fn(np.array(z)) * model.pdf(z), alpha, np.inf, limit=200
            )
            got = float(weights @ fn(nodes))
            assert got == pytest.approx(want, rel=rel, abs=1e-12)


def test_tail_grid_zero_alpha_is_full_grid():
    model = fd.Nakagami(m=2.0)
    nodes, weights = model.tail_grid(0.0, 64)
    g = model.expectation_grid(64)
    np.testing.assert_allclose(nodes, g.nodes)
    assert weights.sum() == pytest.approx(1.0, abs=1e-10)


def test_empirical_tail_grid():
    model = fd.Empirical(np.array([0.5, 1.0, 2.0, 4.0]))
    nodes, weights = model.tail_grid(0.9)
    np.testing.assert_allclose(nodes, [1.0, 2.0, 4.0])
    assert weights.sum() == pytest.approx(0.75)


def test_quantiles_and_policy_grid():
    model = fd.Nakagami(m=1.0)
    assert model.quantile(1 - math.exp(-1)) == pytest.approx(1.0, rel=1e-10)
    grid = model.policy_grid(512)
    assert grid.size == 512
    assert np.all(np.diff(grid) > 0)
    assert grid[0] == pytest.approx(model.quantile(1e-6), rel=1e-9)
    # degenerate empirical support collapses to one node
    assert fd.Empirical(np.array([1.0, 1.0, 1.0])).policy_grid().size == 1


def test_rician_quantile_consistency():
    model = fd.Rician(k=2.0, omega=1.0)
    p = 0.7
    q = model.quantile(p)
    z = np.linspace(1e-9, q, 200_000)
    assert np.trapezoid(model.pdf(z), z) == pytest.approx(p, abs=1e-5)


def test_empirical_pdf_unsupported():
    with pytest.raises(NotImplementedError):
        fd.Empirical(np.array([1.0, 2.0])).pdf(1.0)


def test_upper_incomplete_gamma_reference_values():
    # frozen 30-digit references
    cases = {
        (2.5, 1.3): 1.0121136007032034,
        (-0.5, 2.0): 0.030098757100186466,
        (0.0, 0.7): 0.37376884323350918,
        (-2.5, 0.3): 5.1158057368143206,
        (-1.0, 1.2): 0.092586739742039195,
        (1.0, 4.0): 0.01831563888873418,
    }
    for (a, x), want in cases.items():
        assert fd.upper_incomplete_gamma(a, x) == pytest.approx(want, rel=1e-10)
    assert fd.upper_incomplete_gamma(0.5, 0.0) == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    with pytest.raises(ValueError):
        fd.upper_incomplete_gamma(-1.0, 0.0)


def test_bessel_i0_reference_values():
    from scipy.special import i0

    cases = {0.1: 1.0025015629340956, 1.0: 1.2660658777520083, 10.0: 2815.7166284662545,
             50.0: 2.9325537838493363e20}
    for x, want in cases.items():
        assert i0(x) == pytest.approx(want, rel=1e-10)


def test_gain_grid_validation():
    with pytest.raises(ValueError):
        fd.GainGrid(np.array([1.0, 0.5]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        fd.GainGrid(np.array([0.5, 1.0]), np.array([0.7, 0.7]))


def test_from_config():
    m = fd.from_config({"nakagami": {"m": 2.0, "omega": 1.5}})
    assert isinstance(m, fd.Nakagami) and m.m == 2.0
    r = fd.from_config({"rician": {"k_db": 5.0}})
    assert isinstance(r, fd.Rician)
    assert r.k == pytest.approx(10 ** 0.5)
    e = fd.from_config({"empirical": {"samples": [1.0, 2.0]}})
    assert isinstance(e, fd.Empirical)
    for bad in ({"nakagami": {}}, {"weibull": {"k": 1}}, "rayleigh", {"nakagami": {"m": 0.1}}):
        with pytest.raises(ConfigurationError):
            fd.from_config(bad)


def test_empirical_from_csv(tmp_path):
    path = tmp_path / "gains.csv"
    path.write_text("0.5\n1.5\n2.5\n")
    model = fd.from_config({"empirical": {"path": str(path)}})
    assert model.moments().mean == pytest.approx(1.5)
