import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfskit.geometry import (CATALOGUE, ETA, GAMMA, GAMMA5, ID4, DomainError, SignatureError,
                             bianchi_residual, check_signature, christoffel, christoffel_and_deriv,
                             chart_from_callable, clifford_residual, curvature_at, dirac_matrices,
                             frame_and_derivative, frame_field, gamma_at, make_chart, sigma_matrices,
                             spin_adjoint, tetrad_at)


@pytest.mark.parametrize("rep", ["dirac", "weyl"])
def test_flat_clifford(rep):
    g = dirac_matrices(rep)
    anti = np.einsum("aij,bjk->abik", g, g)
    anti = anti + np.swapaxes(anti, 0, 1)
    assert np.abs(anti - 2 * ETA[:, :, None, None] * ID4).max() < 1e-15
    g5 = 1j * g[0] @ g[1] @ g[2] @ g[3]
    assert np.abs(g5 @ g5 - ID4).max() < 1e-15
    assert np.abs(spin_adjoint(g, g[0]) - g).max() < 1e-15


def test_sigma_antisymmetric_and_selfadjoint():
    S = sigma_matrices()
    assert np.abs(S + np.swapaxes(S, 0, 1)).max() < 1e-15
    assert np.abs(spin_adjoint(S) - S).max() < 1e-15
    assert np.abs(GAMMA5 @ GAMMA[0] + GAMMA[0] @ GAMMA5).max() < 1e-15


def test_unknown_metric_and_rep():
    with pytest.raises(ValueError):
        make_chart("anti-desitter")
    with pytest.raises(ValueError):
        dirac_matrices("majorana")


# curvature closed forms in the (+,-,-,-), MTW-Riemann convention used here
def _flrw_scalar(t):
    a, ad, add = 1 + 0.4 * t + 0.3 * t * t, 0.4 + 0.6 * t, 0.6
    return -6 * (add / a + ad * ad / (a * a))


@pytest.mark.parametrize("name,check", [
    ("minkowski", lambda cb, p: (cb.scalar, 0.0)),
    ("desitter", lambda cb, p: (cb.scalar, -12.0)),
    ("flrw", lambda cb, p: (cb.scalar, _flrw_scalar(p[0]))),
    ("schwarzschild", lambda cb, p: (np.abs(cb.ricci).max(), 0.0)),
])
def test_curvature_closed_forms(charts, name, check):
    ch = charts(name)
    p = ch.base_point + 0.1 * ch.normal_radius * np.array([0.3, -0.2, 0.5, 0.1])
    cb = curvature_at(ch, p)
    got, want = check(cb, p)
    assert got == pytest.approx(want, abs=1e-10)
    assert bianchi_residual(cb) < 1e-10


def test_desitter_einstein_and_flrw_not(charts):
    assert np.abs(curvature_at(charts("desitter"), np.zeros(4)).ricci_tf).max() < 1e-12
    assert np.abs(curvature_at(charts("flrw"), np.zeros(4)).ricci_tf).max() > 1e-1


def test_ultrastatic_scalar(charts):
    # R x S^3 of radius a: R_{ij} on the sphere gives |R| = 6 / a^2
    ch = charts("ultrastatic")
    assert abs(curvature_at(ch, ch.base_point).scalar) == pytest.approx(6.0, rel=1e-10)


def test_christoffel_derivative_fd(charts):
    ch = charts("schwarzschild")
    p = ch.base_point + np.array([0.1, 0.2, 0.05, 0.1])
    _, dG = christoffel_and_deriv(ch, p)
    h = 1e-5
    for l in range(4):
        e = np.zeros(4)
        e[l] = h
        fd = (christoffel(ch, p + e) - christoffel(ch, p - e)) / (2 * h)
        assert np.abs(fd - dG[l]).max() < 1e-7


def test_batched_matches_pointwise(charts):
    ch = charts("flrw")
    P = np.random.default_rng(0).uniform(-0.1, 0.1, (5, 4))
    G, dG = christoffel_and_deriv(ch, P)
    for i in range(5):
        Gi, dGi = christoffel_and_deriv(ch, P[i])
        assert np.array_equal(G[i], Gi) and np.allclose(dG[i], dGi, rtol=0, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(sorted(CATALOGUE)), st.lists(st.floats(-0.5, 0.5), min_size=4, max_size=4))
def test_frame_orthonormal_and_clifford(name, off):
    ch = make_chart(name)
    p = ch.base_point + np.array(off) * ch.normal_radius
    tet = tetrad_at(ch, p)
    g = ch.metric(p)
    assert np.abs(tet.frame.T @ g @ tet.frame - ETA).max() < 1e-12
    assert clifford_residual(gamma_at(tet), g) < 1e-12


def test_frame_derivative_fd(charts):
    ch = charts("schwarzschild")
    p = ch.base_point + 0.1
    _, dF = frame_and_derivative(ch, p)
    h = 1e-6
    for l in range(4):
        e = np.zeros(4)
        e[l] = h
        fd = (frame_field(ch.metric(p + e)) - frame_field(ch.metric(p - e))) / (2 * h)
        assert np.abs(fd - dF[l]).max() < 1e-8


def test_domain_and_signature_errors(charts):
    with pytest.raises(DomainError):
        curvature_at(charts("desitter"), np.array([5.0, 0, 0, 0]))
    with pytest.raises(SignatureError):
        check_signature(np.eye(4))


def test_callable_chart_fd_matches_sympy(charts):
    ref = charts("desitter")
    fc = chart_from_callable("ds-fd", ref.metric_fn, ref.domain, base_point=np.zeros(4))
    p = np.array([0.05, 0.1, -0.1, 0.2])
    assert np.abs(curvature_at(fc, p).scalar - curvature_at(ref, p).scalar) < 1e-5
