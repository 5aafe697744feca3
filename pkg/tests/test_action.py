import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfskit.action import (CTensors, IllConditionedError, delta_chain, delta_p_geom,
                           delta_p_matter_direct, delta_p_matter_vec, delta_spectrum,
                           dirac_current_stress, einstein_residual, fd_delta_spectrum, kappa_extract,
                           lagrangian, lambda_reconstruct, leading_criticality_check, plane_waves,
                           spectral_weight, stress_divergence, tangent_integrals, zero_field)
from cfskit.bitensor import build_frames
from cfskit.geometry import ETA
from cfskit.projector import DegenerateChainError, closed_chain, p_leading, spin_adjoint
from cfskit.regfield import CauchyData, regfield_batch
from cfskit.sampling import sample_pairs


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
                min_size=4, max_size=4))
def test_lagrangian_brute_force(eigs):
    a = np.abs(np.array(eigs))
    ref = sum((a[i] - a[j]) ** 2 for i in range(4) for j in range(4)) / 8
    assert lagrangian(eigs) == pytest.approx(ref, abs=1e-12)
    assert spectral_weight(eigs) == pytest.approx(a.sum() ** 2)


def test_lagrangian_vanishes_on_conjugate_pairs():
    z = 0.3 + 1.7j
    assert lagrangian([z, z, np.conj(z), np.conj(z)]) == 0.0


@pytest.fixture(scope="module")
def flrw_chain(charts):
    ch = charts("flrw")
    X, Y = sample_pairs(ch, 8, np.random.default_rng(2), kind="spacelike", t_sigma=0.0)
    fr = build_frames(ch, X, Y)
    rf = regfield_batch(ch, X, Y, CauchyData(0.0), N=0, eps=1e-2, both_slots=False)
    k = p_leading(fr, rf, 1.0)
    return ch, fr, rf, k, closed_chain(k.P)


def test_delta_spectrum_vs_fd(flrw_chain):
    ch, fr, rf, k, cs = flrw_chain
    rng = np.random.default_rng(3)
    for _ in range(5):
        M = rng.normal(size=(8, 4, 4)) + 1j * rng.normal(size=(8, 4, 4))
        dA = (M + spin_adjoint(M)) * np.abs(cs.lambda_plus)[:, None, None]
        pr = delta_spectrum(cs, dA, fr, rf)
        fp, fm = fd_delta_spectrum(cs.A, dA)
        assert np.max(np.abs(pr.delta_lambda[0] - fp) / np.abs(fp)) < 1e-5
        assert np.max(np.abs(pr.delta_lambda[1] - fm) / np.abs(fm)) < 1e-5


def test_delta_spectrum_scaling_identity(flrw_chain):
    ch, fr, rf, k, cs = flrw_chain
    pr = delta_spectrum(cs, cs.A, fr, rf)
    assert np.max(np.abs(pr.delta_lambda[0] - cs.lambda_plus) / np.abs(cs.lambda_plus)) < 1e-10
    assert np.max(np.abs(pr.delta_abs[0] - np.abs(cs.lambda_plus)) / np.abs(cs.lambda_plus)) < 1e-10


def test_geometric_perturbation_real_coefficients(flrw_chain):
    ch, fr, rf, k, cs = flrw_chain
    dP = delta_p_geom(fr, rf, ch, None, 1.0)
    pr = delta_spectrum(cs, delta_chain(k.P, dP), fr, rf)
    assert np.abs(pr.deltaA_coeffs.imag).max() < 1e-10 * np.abs(pr.deltaA_coeffs).max()


def test_degenerate_perturbation(flrw_chain):
    ch, fr, rf, k, cs = flrw_chain
    rf0 = regfield_batch(ch, fr.wf.x, fr.wf.y, CauchyData(0.0), N=0, eps=0.0, both_slots=False)
    with pytest.raises(DegenerateChainError):
        delta_spectrum(cs, cs.A, fr, rf0)


def test_criticality_needs_100_pairs(charts):
    ch = charts("minkowski")
    with pytest.raises(ValueError):
        leading_criticality_check(ch, np.zeros((5, 4)), np.ones((5, 4)), [1e-2])


# plane waves
MF = plane_waves([[0.3, 0.1, -0.2], [-0.5, 0.2, 0.4]], 1.0, [1.0, 0.7j],
                 zetas=[[1, 0, 0, 0], [0, 1, 0.5j, 0]])
X0 = np.array([0.1, 0.2, -0.3, 0.05])


def test_plane_wave_onshell_and_conserved():
    assert MF.onshell_residual(X0[None]) < 1e-14
    assert np.abs(stress_divergence(MF, X0)).max() < 1e-9
    cs = dirac_current_stress(MF, X0)
    assert not cs.offshell
    assert abs(np.einsum("mn,mn->", ETA, cs.T_tf)) < 1e-14


def test_single_plane_wave_stress():
    mf = plane_waves([[0.3, 0.1, -0.2]], 1.0)
    cs = dirac_current_stress(mf, X0)
    p = np.array([np.sqrt(1.14), 0.3, 0.1, -0.2]) @ ETA
    assert np.abs(cs.T - np.outer(cs.j, p)).max() < 1e-14
    # j is proportional to p for a single mode
    r = cs.j / p
    assert np.ptp(r) < 1e-14


def test_offshell_flag():
    mf = plane_waves([[0.3, 0.1, -0.2]], 1.0)
    mf.m = 1.5
    assert dirac_current_stress(mf, X0).offshell


def test_matter_vector_matches_direct(charts):
    ch = charts("minkowski")
    errs = []
    for h in (1e-1, 1e-2):
        y = X0 + h * np.array([0.3, 1, -0.5, 0.7])
        fr = build_frames(ch, X0[None], y[None])
        errs.append(np.abs(delta_p_matter_vec(MF, fr)[0] - delta_p_matter_direct(MF, X0, y)).max())
    assert errs[1] < errs[0] / 50


@pytest.fixture(scope="module")
def ctens(charts):
    ch = charts("desitter")
    return tangent_integrals(ch, ch.base_point, 1e-2, 1.0)


def test_tangent_integrals_frozen(ctens):
    # independent (v0, rho) double quadrature, eps = 1e-2, m = 1, L = 1
    assert ctens.C0_frame[0, 0] == pytest.approx(-3.45457, rel=1e-5)
    assert ctens.C1_frame[0, 0] == pytest.approx(-7.91923, rel=1e-5)
    assert ctens.trace_ok()
    assert ctens.spatial_isotropy() < 1e-6 * np.abs(ctens.C0_frame).max()


def test_tangent_coordinates(charts, ctens):
    ch = charts("desitter")
    p = np.array([0.3, 0.1, 0.0, 0.0])
    C = tangent_integrals(ch, p, 1e-2, 1.0)
    assert np.allclose(C.C0_frame, ctens.C0_frame)
    assert abs(np.trace(C.C0) - np.trace(C.C0_frame)) < 1e-9


def test_kappa_extract_validation(ctens):
    with pytest.raises(ValueError):
        kappa_extract([ctens] * 3)
    with pytest.raises(ValueError):
        kappa_extract([ctens] * 4)
    noisy = CTensors(ctens.C0, ctens.C1, 0.1, ctens.x, np.full((4, 4), 1e3), ctens.C0_frame,
                     ctens.C1_frame)
    with pytest.raises(IllConditionedError):
        kappa_extract([ctens, noisy, ctens, noisy])


@pytest.mark.parametrize("name,tf_zero", [("minkowski", True), ("desitter", True),
                                          ("schwarzschild", True), ("flrw", False)])
def test_einstein_residual_vacuum(charts, name, tf_zero):
    ch = charts(name)
    r = einstein_residual(ch, ch.base_point)
    assert (r.norm < 1e-8) == tf_zero


def test_lambda_reconstruct(charts):
    ch = charts("desitter")
    pts = ch.base_point + np.random.default_rng(0).uniform(-0.2, 0.2, (5, 4))
    lr = lambda_reconstruct(ch, pts)
    assert lr.constancy < 1e-10 and lr.Lambda == pytest.approx(-3.0, abs=1e-10)
    assert lambda_reconstruct(charts("minkowski"), pts).Lambda == 0.0
    assert lambda_reconstruct(charts("minkowski"), pts, 1.0, zero_field()).Lambda == 0.0
