"""Regularised fermionic projector kernel, closed chain and its spectrum.

Leading kernel   P0(x, y) = (i/2) xi-slash U(x, y) T^(-1),
next degree      dP(x, y) = -(i/6) Rtf_{mu nu} gamma^mu xi^nu U(x, y) T^(0),
with xi_mu = -d_mu sigma_eps = -sigma_mu - s i eps d_mu f (lowered, at x).

The partner kernel P(y, x) is taken as the spin adjoint of P(x, y).  The
closed chain is A = P(x, y) P(y, x); at leading degree

    A = (|T^(-1)|^2 / 4) (xi.conj(xi) + c_{mu nu} Sigma^{mu nu}),
    c_{mu nu} = (xi_mu conj(xi_nu) - xi_nu conj(xi_mu)) / (2i),

with two doubly degenerate eigenvalues (|T^(-1)|^2/4)(xi.conj(xi) +- 2 i eps r).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bitensor import BiTensorFrame
from .geometry import GAMMA, ID4, MetricChart, curvature_at, frame_field
from .geometry import spin_adjoint as _spin_adjoint
from .regfield import RegField, temporal_radial
from .symbols import t_value


class DegenerateChainError(ValueError):
    """Closed chain with coinciding eigenvalue clusters (r = 0)."""


def spin_adjoint(M, gam=GAMMA):
    """Adjoint with respect to the spin inner product of the representation ``gam``."""
    return _spin_adjoint(M, gam[0])


def gamma5_of(gam=GAMMA):
    return 1j * gam[0] @ gam[1] @ gam[2] @ gam[3]


def coordinate_gammas(gx, gam=GAMMA):
    """gamma^mu = e_a^mu gamma^a at the base points (batched)."""
    return np.einsum("...ma,aij->...mij", frame_field(gx), gam)


def regularized_xi(rf: RegField, eps: float | None = None):
    """xi_mu = -sigma_mu - s i eps d_mu f at x (lowered), batched."""
    e = rf.eps if eps is None else eps
    s = rf.cauchy_data.sign
    return -rf.wf.lowered1() - s * 1j * e * rf.gradient1(e)


def regularized_sigma(rf: RegField, eps: float | None = None):
    e = rf.eps if eps is None else eps
    return rf.wf.sigma + rf.cauchy_data.sign * 1j * e * rf.value(e)


def bilinear_c(xi, gx):
    """c_{mu nu} (lowered) and c_{mu nu} c^{mu nu}."""
    c = (xi[..., :, None] * np.conj(xi[..., None, :]) - xi[..., None, :] * np.conj(xi[..., :, None])) / 2j
    c = np.real(c)
    ginv = np.linalg.inv(gx)
    cc = np.einsum("...ab,...ac,...bd,...cd->...", c, ginv, ginv, c)
    return c, cc


@dataclass
class ProjectorKernel:
    """P maps the spinor fibre at y to the fibre at x (batched, (n, 4, 4))."""

    P: np.ndarray
    xi: np.ndarray
    parts: dict = field(default_factory=dict)
    gam: np.ndarray = field(default=GAMMA, repr=False)

    def adjoint(self) -> np.ndarray:
        return spin_adjoint(self.P, self.gam)


def _check_pairs(frame: BiTensorFrame, rf: RegField):
    if frame.wf.x.shape != rf.wf.x.shape or not (
            np.allclose(frame.wf.x, rf.wf.x) and np.allclose(frame.wf.y, rf.wf.y)):
        raise ValueError("frame and regularising field refer to different pairs")


def p_leading(frame: BiTensorFrame, rf: RegField, m: float, eps: float | None = None, *,
              gam=GAMMA, include_mass: bool = False) -> ProjectorKernel:
    """(i/2) xi-slash U(x, y) T^(-1); optionally + m T^(0) U (flat closed-form comparison)."""
    _check_pairs(frame, rf)
    e = rf.eps if eps is None else eps
    xi = regularized_xi(rf, e)
    se = regularized_sigma(rf, e)
    gmu = coordinate_gammas(frame.wf.gx, gam)
    xs = np.einsum("nm,nmij->nij", xi, gmu)
    tm1 = t_value(-1, se, m)
    P = 0.5j * (xs @ frame.U) * tm1[:, None, None]
    parts = {"leading": (P.copy(), -1)}
    if include_mass:
        pm = m * t_value(0, se, m)[:, None, None] * frame.U
        parts["mass"] = (pm, 0)
        P = P + pm
    return ProjectorKernel(P, xi, parts, gam)


def ricci_tf_term(frame: BiTensorFrame, rf: RegField, chart: MetricChart, m: float,
                  eps: float | None = None, *, gam=GAMMA):
    """-(i/6) Rtf_{mu nu} gamma^mu xi^nu U(x, y) T^(0), and the coefficient matrix Rtf."""
    e = rf.eps if eps is None else eps
    xi = regularized_xi(rf, e)
    se = regularized_sigma(rf, e)
    cb = curvature_at(chart, frame.wf.x)
    ginv = np.linalg.inv(frame.wf.gx)
    xi_up = np.einsum("nmk,nk->nm", ginv, xi)
    gmu = coordinate_gammas(frame.wf.gx, gam)
    M = np.einsum("nmk,nmij,nk->nij", cb.ricci_tf, gmu, xi_up)
    t0 = t_value(0, se, m)
    return -(1j / 6) * (M @ frame.U) * t0[:, None, None], cb.ricci_tf


def p_next(frame: BiTensorFrame, rf: RegField, chart: MetricChart, m: float,
           eps: float | None = None, *, gam=GAMMA) -> ProjectorKernel:
    """Leading kernel plus the trace-free Ricci term (zero on Einstein spaces)."""
    k = p_leading(frame, rf, m, eps, gam=gam)
    dP, rtf = ricci_tf_term(frame, rf, chart, m, eps, gam=gam)
    parts = dict(k.parts)
    parts["ricci_tf"] = (dP, 0)
    parts["ricci_tf_coeff"] = (rtf, None)
    return ProjectorKernel(k.P + dP, k.xi, parts, gam)


# ---------------------------------------------------------------------------
# closed chain
# ---------------------------------------------------------------------------


@dataclass
class ChainSpectrum:
    """Spectral data of closed chains, batched over pairs."""

    A: np.ndarray
    eigenvalues: np.ndarray          # raw eigenvalues sorted by imaginary part
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    proj_plus: np.ndarray | None
    proj_minus: np.ndarray | None
    chiral: dict | None
    degenerate: np.ndarray
    eigvec_mismatch: np.ndarray | None = None
    gam: np.ndarray = field(default=GAMMA, repr=False)


def _eigen_projectors(A, w, sel):
    """Spectral projector onto the eigenvectors selected by ``sel`` from a direct eigensolve."""
    w2, V = np.linalg.eig(A)
    out = np.zeros_like(A)
    Vi = np.linalg.inv(V)
    for n in range(A.shape[0]):
        # match eigenvalues from the sorted list to the eig output
        order = np.argsort(w2[n].imag, kind="stable")
        idx = order[sel]
        out[n] = V[n][:, idx] @ Vi[n][idx, :]
    return out


def closed_chain(Pxy, Pyx=None, *, gam=GAMMA, rel_tol: float = 1e-12) -> ChainSpectrum:
    """A = P(x,y) P(y,x), its eigenvalue clusters and eigenspace projectors.

    Eigenvalues come from a direct eigensolve and are ordered by imaginary part;
    the upper two form lambda_plus, the lower two lambda_minus (cluster means).
    Projectors are (A - lambda_minus)/(lambda_plus - lambda_minus) and its
    complement, cross-checked against the eigenvector projectors.  Pairs whose
    clusters coincide to ``rel_tol`` are flagged degenerate and get no projectors.
    """
    Pxy = np.asarray(Pxy)
    single = Pxy.ndim == 2
    Pxy = Pxy[None] if single else Pxy
    if Pyx is None:
        Pyx = spin_adjoint(Pxy, gam)
    else:
        Pyx = np.asarray(Pyx)
        Pyx = Pyx[None] if Pyx.ndim == 2 else Pyx
    A = Pxy @ Pyx
    w = np.linalg.eigvals(A)
    w = np.take_along_axis(w, np.argsort(w.imag, axis=-1, kind="stable"), axis=-1)
    lm = w[:, :2].mean(axis=1)
    lp = w[:, 2:].mean(axis=1)
    scale = np.maximum(np.abs(lp), np.abs(lm))
    gap = lp - lm
    degenerate = np.abs(gap) <= rel_tol * np.maximum(scale, 1e-300)
    proj_p = proj_m = chiral = mismatch = None
    if not np.any(degenerate):
        proj_p = (A - lm[:, None, None] * ID4) / gap[:, None, None]
        proj_m = ID4 - proj_p
        g5 = gamma5_of(gam)
        chi_l = 0.5 * (ID4 - g5)
        chi_r = 0.5 * (ID4 + g5)
        chiral = {"L+": chi_l @ proj_p, "R+": chi_r @ proj_p, "L-": chi_l @ proj_m, "R-": chi_r @ proj_m}
        direct = _eigen_projectors(A, w, slice(2, 4))
        mismatch = np.max(np.abs(direct - proj_p), axis=(1, 2))
    if single:
        sq = lambda a: None if a is None else a[0]
        return ChainSpectrum(A[0], w[0], lp[0], lm[0], sq(proj_p), sq(proj_m),
                             None if chiral is None else {k: v[0] for k, v in chiral.items()},
                             degenerate[0], sq(mismatch), gam)
    return ChainSpectrum(A, w, lp, lm, proj_p, proj_m, chiral, degenerate, mismatch, gam)


def analytic_eigenvalues(frame: BiTensorFrame, rf: RegField, eps: float | None, m: float):
    """(|T^(-1)|^2/4)(xi.conj(xi) +- 2 i eps r) with r from the temporal/radial split."""
    e = rf.eps if eps is None else eps
    xi = regularized_xi(rf, e)
    se = regularized_sigma(rf, e)
    ginv = np.linalg.inv(frame.wf.gx)
    xx = np.real(np.einsum("nm,nmk,nk->n", xi, ginv, np.conj(xi)))
    tr = temporal_radial(frame.wf, rf)
    k = np.abs(t_value(-1, se, m)) ** 2 / 4
    return k * (xx + 2j * e * tr.r), k * (xx - 2j * e * tr.r)


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def conjugate_kernel_residual(Pxy, Pyx, gam=GAMMA) -> np.ndarray:
    """max |P(y,x) - adjoint(P(x,y))| / max|P(x,y)| per pair."""
    d = np.abs(np.asarray(Pyx) - spin_adjoint(np.asarray(Pxy), gam))
    return np.max(d, axis=(-1, -2)) / np.max(np.abs(Pxy), axis=(-1, -2))


def clifford_components(M, gx, gam=GAMMA):
    """Scalar, pseudoscalar, vector, axial and bivector parts of spin matrices at x.

    Returns a dict of coefficient arrays with M = s + p g5 + v_mu g^mu + a_mu g^mu g5
    + B_{mu nu} Sigma^{mu nu} (B antisymmetric, lowered indices).
    """
    gmu = coordinate_gammas(gx, gam)
    g = np.asarray(gx)
    glow = np.einsum("...mk,...kij->...mij", g, gmu)
    g5 = gamma5_of(gam)
    Sig = sigma_matrices_at(gmu)
    Slow = np.einsum("...ma,...nb,...abij->...mnij", g, g, Sig)
    tr = lambda X, Y: np.einsum("...ij,...ji->...", X, Y) / 4
    s = tr(M, ID4)
    p = tr(M, g5)
    v = np.einsum("...mij,...ji->...m", glow, M) / 4
    a = np.einsum("...mij,...ji->...m", g5 @ glow, M) / 4
    B = np.einsum("...mnij,...ji->...mn", Slow, M) / 8
    return {"scalar": s, "pseudoscalar": p, "vector": v, "axial": a, "bivector": B}


def sigma_matrices_at(gmu):
    """Sigma^{mu nu} = (i/2)[gamma^mu, gamma^nu] for batched coordinate gammas."""
    ab = np.einsum("...aij,...bjk->...abik", gmu, gmu)
    return 0.5j * (ab - np.swapaxes(ab, -3, -4))


def slash_trace_residual(kernel: ProjectorKernel, frame: BiTensorFrame, part: str = "leading") -> float:
    """Largest non-vector Clifford component of a kernel part relative to its vector part.

    The U factor is stripped first (P U^{-1} is a matrix at x).
    """
    P = kernel.parts[part][0] @ np.linalg.inv(frame.U)
    comp = clifford_components(P, frame.wf.gx, kernel.gam)
    vec = np.max(np.abs(comp["vector"]))
    other = max(np.max(np.abs(comp[k])) for k in ("scalar", "pseudoscalar", "axial", "bivector"))
    return float(other / vec)


def representation_change(M, S):
    """Transform spin matrices under psi -> S psi: M -> S M S^{-1}."""
    return S @ M @ np.linalg.inv(S)
