import numpy as np
import pytest

from cfskit.bitensor import (box_sigma, build_frames, covariant_expansion_remainder, group_residual,
                             spin_inner_product_residual, spin_transport_derivative_check,
                             van_vleck_transport_residual)


def ds_delta(sigma):
    """de Sitter (H = 1): Delta = (s / sinh s)^3 for timelike, (s / sin s)^3 for spacelike."""
    s = np.sqrt(2 * abs(sigma))
    return (s / np.sinh(s)) ** 3 if sigma > 0 else (s / np.sin(s)) ** 3


def test_desitter_van_vleck_closed_form(charts, rng):
    ch = charts("desitter")
    X = rng.uniform(-0.05, 0.05, (10, 4))
    Y = X + rng.uniform(-0.2, 0.2, (10, 4))
    fr = build_frames(ch, X, Y)
    ref = np.array([ds_delta(s) for s in fr.wf.sigma])
    assert np.abs(fr.delta - ref).max() < 1e-10


def test_minkowski_trivial(charts, rng):
    ch = charts("minkowski")
    X = rng.uniform(-1, 1, (10, 4))
    fr = build_frames(ch, X, X + rng.uniform(-0.5, 0.5, (10, 4)))
    assert np.abs(fr.delta - 1).max() < 1e-14
    assert np.abs(fr.U - np.eye(4)).max() < 1e-14


@pytest.mark.parametrize("name", ["desitter", "schwarzschild", "flrw"])
def test_spin_transport_properties(charts, rng, name):
    ch = charts(name)
    R = ch.normal_radius
    X = ch.base_point + rng.uniform(-0.2, 0.2, (5, 4)) * R
    Y = X + rng.uniform(-0.5, 0.5, (5, 4)) * R
    fr = build_frames(ch, X, Y)
    fr2 = build_frames(ch, Y, X)
    assert np.abs(fr.delta - fr2.delta).max() < 1e-12
    assert spin_inner_product_residual(fr) < 1e-12
    assert group_residual(fr) < 1e-12
    assert np.abs(fr.U - fr2.U_rev).max() < 1e-12


def test_van_vleck_transport_equation(charts):
    ch = charts("flrw")
    fr = build_frames(ch, np.zeros((1, 4)), np.array([[0.05, 0.08, -0.03, 0.02]]))
    assert van_vleck_transport_residual(fr, ch) < 1e-8


def test_box_sigma_flat(charts):
    assert box_sigma(charts("minkowski"), np.zeros(4), np.array([0.3, 0.1, 0.2, 0.0])) == pytest.approx(4.0, abs=1e-9)


def test_covariant_expansion_shrinks(charts):
    ch = charts("flrw")
    d = np.array([1, 0.3, 0.2, 0.1])
    ss = np.array([1e-2, 2e-2, 4e-2])
    fr = build_frames(ch, np.zeros((3, 4)), ss[:, None] * d, check_radius=False)
    rem = covariant_expansion_remainder(fr, ch)
    assert np.all(np.diff(rem) > 0) and rem[0] < 1e-5


def test_spin_derivative_leading_term(charts):
    ch = charts("desitter")
    d = np.array([1, 0.3, 0.2, 0.1])
    r = [spin_transport_derivative_check(ch, np.full(4, 0.01), d, h) for h in (2e-2, 1e-2)]
    assert r[1] < r[0] < 0.1


def test_desitter_remainder_quartic_coefficient(charts):
    # (s / sinh s)^(3/2) = 1 - s^2/4 + (19/480) s^4 + ...; the quadratic term is the Ricci term
    ch = charts("desitter")
    d = np.array([1.0, 0.3, 0.2, 0.1])
    d = d / np.sqrt(d[0] ** 2 - np.sum(d[1:] ** 2))
    s = np.array([2e-3, 4e-3])
    fr = build_frames(ch, np.zeros((2, 4)), s[:, None] * d, check_radius=False)
    rem = covariant_expansion_remainder(fr, ch)
    assert rem / s ** 4 == pytest.approx(19 / 480, rel=2e-3)
