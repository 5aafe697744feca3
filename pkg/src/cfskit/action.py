"""Causal Lagrangian, spectral perturbations, matter fields and the tangent-space integrals.

Perturbation of the closed chain.  Any spin matrix decomposes as
    dA = ds 1 + B_{mu nu} Sigma^{mu nu} + (vector, axial, pseudoscalar parts),
    ds = Tr(dA)/4,   B_{ab} = Tr(Sigma_{ab} dA)/8.
Only ds and B shift the eigenvalue clusters to first order:
    d lambda_pm = ds -+ (i / (eps r)) c_{mu nu} B^{mu nu},
    d|lambda_pm| = Re(conj(lambda_pm) d lambda_pm) / |lambda_pm|,
with eps r = sqrt(-c.c / 2).

Tangent integrals.  In an orthonormal frame at x with chi = e_0 and real v,
xi = v + s i eps chi, t = chi.v, r = |v_spatial|,
    w0 = |T^(-1)|^2 (xi.conj(xi)) / r^2 Re[T^(-1) conj T^(0)],
    w1 = |T^(-1)|^2 (xi.conj(xi)) / r^2 Re[T^(-1)],
    S^{ac} = sym[(v.v) chi^a v^c] - t v^a v^c,
    Q^a_b = S^{ac} (chi_b v_c - v_b chi_c),
    C0 = (1/6) int w0 Q d^4v,   C1 = -(1/(8 pi)) int w1 Q d^4v
over the Euclidean ball |v| < L.  kappa is the least-squares ratio C1 / C0.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .bitensor import BiTensorFrame
from .geometry import DIM, ETA, GAMMA, ID4, MetricChart, curvature_at, frame_field
from .projector import (
    ChainSpectrum,
    DegenerateChainError,
    bilinear_c,
    coordinate_gammas,
    ricci_tf_term,
    sigma_matrices_at,
    spin_adjoint,
)
from .regfield import RegField
from .symbols import t_value

FD4_OFFS = np.array([2.0, 1.0, -1.0, -2.0])
FD4_WTS = np.array([-1.0, 8.0, -8.0, 1.0]) / 12.0


class IllConditionedError(ValueError):
    """C0 is below its quadrature noise; kappa cannot be extracted."""


class AccuracyError(RuntimeError):
    """Quadrature error estimate above the configured threshold."""


# ---------------------------------------------------------------------------
# Lagrangian
# ---------------------------------------------------------------------------


def lagrangian(eigs) -> np.ndarray:
    """(1/(4n)) sum_{i,j} (|l_i| - |l_j|)^2 over the 2n eigenvalues (last axis)."""
    a = np.abs(np.asarray(eigs))
    n2 = a.shape[-1]
    d = a[..., :, None] - a[..., None, :]
    return np.sum(d * d, axis=(-1, -2)) / (2 * n2)


def spectral_weight(eigs) -> np.ndarray:
    """(sum_i |l_i|)^2."""
    return np.sum(np.abs(np.asarray(eigs)), axis=-1) ** 2


@dataclass
class CriticalityReport:
    pairs: int
    max_modulus_gap: float        # max | |l+| - |l-| | / |l+|
    max_lagrangian: float         # max L / |l|^2
    eps: list
    passed: bool


def leading_criticality_check(chart: MetricChart, X, Y, eps_list, m: float = 1.0, *, N: int = 0,
                              cauchy_data=None, cfg=None, gam=GAMMA,
                              gap_tol: float = 1e-8, lag_tol: float = 1e-16) -> CriticalityReport:
    """Conjugate-pair test of the leading closed chain over pairs and an eps sweep."""
    from .bitensor import build_frames
    from .projector import closed_chain, p_leading
    from .regfield import CauchyData, regfield_batch

    X = np.atleast_2d(X)
    if X.shape[0] < 100:
        raise ValueError("criticality check needs at least 100 pairs")
    cd = cauchy_data or CauchyData(float(chart.base_point[0]))
    fr = build_frames(chart, X, Y, gam=gam)
    rf = regfield_batch(chart, X, Y, cd, N=N, eps=float(eps_list[0]), cfg=cfg, both_slots=False)
    gap = lag = 0.0
    for e in eps_list:
        cs = closed_chain(p_leading(fr, rf, m, e, gam=gam).P, gam=gam)
        lp = np.abs(cs.lambda_plus)
        gap = max(gap, float(np.max(np.abs(lp - np.abs(cs.lambda_minus)) / lp)))
        lag = max(lag, float(np.max(lagrangian(cs.eigenvalues) / lp ** 2)))
    return CriticalityReport(X.shape[0], gap, lag, list(eps_list), gap < gap_tol and lag < lag_tol)


# ---------------------------------------------------------------------------
# perturbations of the kernel
# ---------------------------------------------------------------------------


def delta_p_geom(frame: BiTensorFrame, rf: RegField, chart: MetricChart, eps: float | None, m: float,
                 gam=GAMMA) -> np.ndarray:
    """-(i/6) Rtf_{mu nu} gamma^mu xi^nu U(x, y) T^(0)."""
    return ricci_tf_term(frame, rf, chart, m, eps, gam=gam)[0]


def delta_chain(P, dP, gam=GAMMA):
    """First-order change of A = P P* under P -> P + dP."""
    return dP @ spin_adjoint(P, gam) + P @ spin_adjoint(dP, gam)


@dataclass
class PerturbationResult:
    """deltaA_coeffs: (ds/4) g_{mu nu} + B_{mu nu} (Sigma-basis bivector part)."""

    deltaA_coeffs: np.ndarray
    ds: np.ndarray
    B: np.ndarray
    delta_lambda: tuple
    delta_abs: tuple
    eps_r: np.ndarray


def delta_spectrum(chain: ChainSpectrum, deltaA, frame: BiTensorFrame, rf: RegField,
                   eps: float | None = None, *, gam=GAMMA, lam=None) -> PerturbationResult:
    """First-order shifts of the eigenvalue clusters from the c-B contraction.

    ``lam`` optionally supplies (lambda_plus, lambda_minus) for the modulus
    formula (defaults to the chain's own cluster means).
    """
    from .projector import regularized_xi

    e = rf.eps if eps is None else eps
    xi = regularized_xi(rf, e)
    gx = frame.wf.gx
    c, cc = bilinear_c(xi, gx)
    er = np.sqrt(np.maximum(-cc / 2, 0.0))
    if np.any(er <= 1e-14 * np.abs(np.einsum("...m,...m->...", xi, np.conj(xi)))):
        raise DegenerateChainError("r = 0: the eigenvalue clusters coincide")
    dA = np.asarray(deltaA)
    gmu = coordinate_gammas(gx, gam)
    Sig = sigma_matrices_at(gmu)
    Slow = np.einsum("...ma,...nb,...abij->...mnij", gx, gx, Sig)
    ds = np.einsum("...ii->...", dA) / 4
    B = np.einsum("...mnij,...ji->...mn", Slow, dA) / 8
    ginv = np.linalg.inv(gx)
    cB = np.einsum("...ab,...ac,...bd,...cd->...", c, ginv, ginv, B)
    dlp = ds - 1j * cB / er
    dlm = ds + 1j * cB / er
    lp, lm = (chain.lambda_plus, chain.lambda_minus) if lam is None else lam
    dap = np.real(np.conj(lp) * dlp) / np.abs(lp)
    dam = np.real(np.conj(lm) * dlm) / np.abs(lm)
    coeffs = (ds[..., None, None] / 4) * gx + B
    return PerturbationResult(coeffs, ds, B, (dlp, dlm), (dap, dam), er)


def fd_delta_spectrum(A, dA, t: float | None = None):
    """Cluster-mean eigenvalue derivatives of A + t dA by a 4th-order central difference."""
    A = np.asarray(A)
    dA = np.asarray(dA)

    def clusters(M):
        w = np.linalg.eigvals(M)
        w = np.take_along_axis(w, np.argsort(w.imag, axis=-1, kind="stable"), axis=-1)
        return w[..., 2:].mean(-1), w[..., :2].mean(-1)

    if t is None:
        lp, lm = clusters(A)
        t = 1e-3 * np.min(np.abs(lp - lm)) / max(np.max(np.abs(dA)), 1e-300)
    f = {k: clusters(A + k * t * dA) for k in (2, 1, -1, -2)}
    out = []
    for j in range(2):
        d = (8 * (f[1][j] - f[-1][j]) - (f[2][j] - f[-2][j])) / (12 * t)
        out.append(d)
    return tuple(out)


# ---------------------------------------------------------------------------
# matter fields
# ---------------------------------------------------------------------------


def _bar(u, gam=GAMMA):
    return np.conj(u) @ gam[0]


@dataclass
class MatterField:
    """Dirac field with its covariant derivative; du(x)[nu] = nabla_nu u(x)."""

    u: Callable
    du: Callable
    m: float
    chart: MetricChart | None = None
    gam: np.ndarray = field(default=GAMMA, repr=False)
    onshell_tol: float = 1e-6

    def gammas(self, x):
        g = ETA if self.chart is None else self.chart.metric(x)
        return coordinate_gammas(g, self.gam), g

    def onshell_residual(self, points) -> float:
        """max |(i gamma^mu nabla_mu - m) u| / max(|m u|, |nabla u|) at the points."""
        out = 0.0
        for x in np.atleast_2d(points):
            gmu, _ = self.gammas(x)
            u = self.u(x)
            du = self.du(x)
            res = 1j * np.einsum("mij,mj->i", gmu, du) - self.m * u
            scale = max(np.max(np.abs(self.m * u)), np.max(np.abs(du)), 1e-300)
            out = max(out, float(np.max(np.abs(res)) / scale))
        return out


def onshell_spinor(p_low, m: float, zeta, gam=GAMMA):
    """(p-slash + m) zeta, normalised; solves (p-slash - m) w = 0 when p.p = m^2."""
    ps = np.einsum("m,mij->ij", p_low, gam)
    w = (ps + m * ID4) @ np.asarray(zeta, complex)
    return w / np.linalg.norm(w)


def plane_waves(momenta, m: float, amplitudes=None, zetas=None, gam=GAMMA) -> MatterField:
    """Minkowski superposition sum_k a_k w_k exp(-i p_k.x) with p_k = (omega_k, k)."""
    ks = np.atleast_2d(np.asarray(momenta, float))
    n = ks.shape[0]
    P = np.column_stack([np.sqrt(m * m + np.sum(ks * ks, axis=1)), ks])
    Plow = P @ ETA
    amps = np.ones(n, complex) if amplitudes is None else np.asarray(amplitudes, complex)
    if zetas is None:
        zetas = np.tile(np.array([1.0, 0.0, 0.0, 0.0], complex), (n, 1))
    W = np.array([onshell_spinor(Plow[k], m, zetas[k], gam) for k in range(n)]) * amps[:, None]

    def phase(x):
        return np.exp(-1j * (Plow @ np.asarray(x, float)))

    def u(x):
        return phase(x) @ W

    def du(x):
        return np.einsum("k,km,ki->mi", phase(x), -1j * Plow, W)

    return MatterField(u, du, m, None, gam)


def zero_field(m: float = 1.0) -> MatterField:
    return MatterField(lambda x: np.zeros(4, complex), lambda x: np.zeros((4, 4), complex), m)


@dataclass
class CurrentStress:
    j: np.ndarray
    T: np.ndarray
    T_tf: np.ndarray
    offshell: bool


def dirac_current_stress(mf: MatterField, x) -> CurrentStress:
    """j_mu = <u|gamma_mu u>, T_{mu nu} = (i/2)(<u|gamma_mu nabla_nu u> - <nabla_nu u|gamma_mu u>)."""
    x = np.asarray(x, float)
    gmu, g = mf.gammas(x)
    glow = np.einsum("mk,kij->mij", g, gmu)
    u = mf.u(x)
    du = mf.du(x)
    ub = _bar(u, mf.gam)
    dub = np.conj(du) @ mf.gam[0]
    j = np.real(np.einsum("i,mij,j->m", ub, glow, u))
    T = 0.5j * (np.einsum("i,mij,nj->mn", ub, glow, du) - np.einsum("ni,mij,j->mn", dub, glow, u))
    T = np.real(T)
    tr = np.einsum("mn,mn->", np.linalg.inv(g), T)
    off = mf.onshell_residual(x[None]) > mf.onshell_tol
    return CurrentStress(j, T, T - tr / DIM * g, bool(off))


def stress_divergence(mf: MatterField, x, h: float = 1e-3) -> np.ndarray:
    """d^mu T_{mu nu} at x by 4th-order differences (flat charts)."""
    x = np.asarray(x, float)
    g = ETA if mf.chart is None else mf.chart.metric(x)
    ginv = np.linalg.inv(g)
    dT = np.zeros((DIM, DIM, DIM))
    for l in range(DIM):
        vals = []
        for o in FD4_OFFS:
            e = np.zeros(DIM)
            e[l] = o * h
            vals.append(dirac_current_stress(mf, x + e).T)
        dT[l] = np.tensordot(FD4_WTS, np.array(vals), axes=(0, 0)) / h
    return np.einsum("lm,lmn->n", ginv, dT)


def delta_p_matter_vec(mf: MatterField, frame: BiTensorFrame) -> np.ndarray:
    """(1/(8 pi)) (j_mu + zeta^nu <nabla_nu u|gamma_mu u>) gamma^mu U(x, y), batched.

    zeta^nu = -sigma^nu is the separation vector from x towards y.  The
    bracket equals j_mu + (1/2) zeta^nu nabla_nu j_mu + i zeta^nu T_{mu nu}.
    """
    out = []
    for n in range(len(frame)):
        x = frame.wf.x[n]
        gmu, g = mf.gammas(x)
        glow = np.einsum("mk,kij->mij", g, gmu)
        u = mf.u(x)
        du = mf.du(x)
        dub = np.conj(du) @ mf.gam[0]
        j = np.einsum("i,mij,j->m", _bar(u, mf.gam), glow, u)
        zeta = -frame.wf.grad1[n]
        corr = np.einsum("n,ni,mij,j->m", zeta, dub, glow, u)
        out.append(np.einsum("m,mij->ij", j + corr, gmu) @ frame.U[n] / (8 * np.pi))
    return np.array(out)


def delta_p_matter_direct(mf: MatterField, x, y) -> np.ndarray:
    """Vector part of (1/(2 pi)) u(x) <u(y)|, in the flat chart (U = id)."""
    gmu, g = mf.gammas(x)
    glow = np.einsum("mk,kij->mij", g, gmu)
    M = np.outer(mf.u(x), _bar(mf.u(y), mf.gam)) / (2 * np.pi)
    coef = np.einsum("mij,ji->m", glow, M) / 4
    return np.einsum("m,mij->ij", coef, gmu)


# ---------------------------------------------------------------------------
# tangent-space integrals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TangentConfig:
    """Ball radius L, inner radius r_min (in units of eps) and quadrature tolerances."""

    L: float = 1.0
    r_min: float = 1e-4
    epsrel_outer: float = 1e-9
    epsrel_inner: float = 1e-10
    sign: int = 1
    max_rel_error: float = 1e-4


@dataclass
class CTensors:
    """Mixed tensors C^mu_nu in coordinates at x (frame components in ``*_frame``)."""

    C0: np.ndarray
    C1: np.ndarray
    eps: float
    x: np.ndarray
    quadrature_error: np.ndarray
    C0_frame: np.ndarray
    C1_frame: np.ndarray
    err1: float = 0.0

    def traces(self):
        return float(np.trace(self.C0)), float(np.trace(self.C1))

    def trace_ok(self, factor: float = 3.0) -> bool:
        t0, t1 = self.traces()
        e0 = float(np.max(self.quadrature_error))
        return abs(t0) <= factor * e0 and abs(t1) <= factor * max(self.err1, 0.0)

    def spatial_isotropy(self) -> float:
        """Deviation of the spatial frame blocks from multiples of the identity."""
        out = 0.0
        for C in (self.C0_frame, self.C1_frame):
            blk = C[1:, 1:]
            out = max(out, float(np.max(np.abs(blk - np.trace(blk) / 3 * np.eye(3)))))
        return out


def _sphere_rule():
    """Product rule on S^2, exact for polynomials of degree <= 7."""
    z, wz = np.polynomial.legendre.leggauss(4)
    ph = 2 * np.pi * np.arange(8) / 8
    n = np.array([[np.sqrt(1 - a * a) * np.cos(p), np.sqrt(1 - a * a) * np.sin(p), a] for a in z for p in ph])
    w = np.array([b * (2 * np.pi / 8) for b in wz for _ in ph])
    return n, w


_SPHERE_N, _SPHERE_W = _sphere_rule()


def _structure(v0, rho):
    """Integral of Q^a_b over directions of the spatial part (magnitude rho)."""
    v = np.column_stack([np.full(len(_SPHERE_W), v0), rho * _SPHERE_N])
    vl = v * np.diag(ETA)
    chi = np.array([1.0, 0.0, 0.0, 0.0])
    vv = np.einsum("ka,ka->k", v, vl)
    t = v[:, 0]
    S = 0.5 * vv[:, None, None] * (chi[None, :, None] * v[:, None, :] + v[:, :, None] * chi[None, None, :])
    S = S - t[:, None, None] * v[:, :, None] * v[:, None, :]
    anti = chi[None, :, None] * vl[:, None, :] - vl[:, :, None] * chi[None, None, :]   # [k, b, c]
    Q = np.einsum("kac,kbc->kab", S, anti)
    return np.einsum("k,kab->ab", _SPHERE_W, Q)


def _weights(v0, rho, eps, m, sign):
    xi0 = v0 + sign * 1j * eps
    se = 0.5 * (xi0 * xi0 - rho * rho)
    tm1 = t_value(-1, se, m)
    t0 = t_value(0, se, m)
    xx = abs(xi0) ** 2 - rho * rho
    base = abs(tm1) ** 2 * xx / rho ** 2
    return base * np.real(tm1 * np.conj(t0)), base * np.real(tm1)


@functools.lru_cache(maxsize=64)
def _frame_integrals(eps: float, m: float, cfg: TangentConfig):
    """(C0, C1, err0, err1) in the chi-adapted frame."""
    quarter = (np.pi / 4, np.pi / 2, 3 * np.pi / 4)

    def inner(lnR):
        R = np.exp(lnR)

        def g(psi):
            v0 = R * np.cos(psi)
            rho = R * np.sin(psi)
            w0, w1 = _weights(v0, rho, eps, m, cfg.sign)
            A = _structure(v0, rho).ravel()
            jac = R ** 4 * np.sin(psi) ** 2
            return np.concatenate([w0 * A, w1 * A]) * jac

        val, err = integrate.quad_vec(g, 0.0, np.pi, epsrel=cfg.epsrel_inner, epsabs=0.0,
                                      points=quarter, limit=2000)
        return np.concatenate([val, [err]])

    lo = np.log(cfg.r_min * eps)
    hi = np.log(cfg.L)
    cand = np.log(eps * np.array([0.1, 1.0, 10.0, 100.0]))
    pts = tuple(cand[(cand > lo) & (cand < hi)])
    val, err = integrate.quad_vec(inner, lo, hi, epsrel=cfg.epsrel_outer, epsabs=0.0, points=pts,
                                  limit=2000)
    I0 = val[:16].reshape(4, 4) / 6.0
    I1 = -val[16:32].reshape(4, 4) / (8 * np.pi)
    inner_err = val[32]
    e0 = (err + inner_err) / 6.0
    e1 = (err + inner_err) / (8 * np.pi)
    return I0, I1, e0, e1


def tangent_integrals(chart: MetricChart, x, eps: float, m: float = 1.0,
                      cfg: TangentConfig | None = None) -> CTensors:
    """C0 and C1 at x with the flat tangent-space approximation (Delta = 1).

    The frame integrals do not depend on x; the chart only supplies the frame
    for the conversion to coordinate components.
    """
    cfg = cfg or TangentConfig()
    I0, I1, e0, e1 = _frame_integrals(float(eps), float(m), cfg)
    scale = max(np.max(np.abs(I0)), 1e-300)
    if e0 > cfg.max_rel_error * scale:
        raise AccuracyError(f"tangent integral error {e0:.3g} above threshold")
    x = np.asarray(x, float)
    F = frame_field(chart.metric(x))
    Fi = np.linalg.inv(F)
    to_coord = lambda C: F @ C @ Fi
    err = np.full((4, 4), e0)
    return CTensors(to_coord(I0), to_coord(I1), float(eps), x, err, I0, I1, float(e1))


def kappa_extract(Cs) -> tuple:
    """kappa(eps) = <C1, C0> / <C0, C0> per eps and the log-log slope against eps."""
    Cs = list(Cs)
    if len(Cs) < 4:
        raise ValueError("kappa extraction needs at least 4 eps values")
    eps = np.array([c.eps for c in Cs])
    if eps.max() / eps.min() < 10 * (1 - 1e-12):
        raise ValueError("eps values must span a decade")
    kap = []
    for c in Cs:
        n0 = np.sum(c.C0_frame * c.C0_frame)
        if np.sqrt(n0) < 10 * np.max(c.quadrature_error):
            raise IllConditionedError("C0 below quadrature noise")
        kap.append(float(np.sum(c.C1_frame * c.C0_frame) / n0))
    kap = np.array(kap)
    slope = float(np.polyfit(np.log(eps), np.log(np.abs(kap)), 1)[0])
    return kap, slope


# ---------------------------------------------------------------------------
# Einstein residual and Lambda
# ---------------------------------------------------------------------------


@dataclass
class EinsteinResidual:
    residual: np.ndarray          # Rtf - kappa Ttf (lowered, coordinates)
    linearized: np.ndarray | None  # C0 (.) Rtf - C1 (.) Ttf, elementwise
    ricci_tf: np.ndarray
    stress_tf: np.ndarray
    current_norm: float           # |j| reported separately, excluded from the residual
    kappa: float

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.residual)))


def einstein_residual(chart: MetricChart, x, mf: MatterField | None = None, C: CTensors | None = None,
                      kappa: float | None = None) -> EinsteinResidual:
    x = np.asarray(x, float)
    cb = curvature_at(chart, x)
    g = cb.metric
    if kappa is None:
        kappa = 0.0 if C is None else float(np.sum(C.C1_frame * C.C0_frame) / np.sum(C.C0_frame ** 2))
    if mf is not None:
        cs = dirac_current_stress(mf, x)
        Ttf = cs.T_tf
        jn = float(np.max(np.abs(cs.j)))
    else:
        Ttf = np.zeros((DIM, DIM))
        jn = 0.0
    res = cb.ricci_tf - kappa * Ttf
    lin = None
    if C is not None:
        low = lambda M: g @ M          # C^mu_nu -> C_{mu nu}
        lin = low(C.C0) * cb.ricci_tf - low(C.C1) * Ttf
    return EinsteinResidual(res, lin, cb.ricci_tf, Ttf, jn, float(kappa))


@dataclass
class LambdaResult:
    Lambda: float
    constancy: float
    values: np.ndarray
    scalar_curvature: np.ndarray


def lambda_reconstruct(chart: MetricChart, points, kappa: float = 0.0,
                       mf: MatterField | None = None) -> LambdaResult:
    """Lambda = (d-2)/(2d) R + (kappa/d) T at each point; constancy = max deviation."""
    P = np.atleast_2d(np.asarray(points, float))
    vals, Rs = [], []
    for p in P:
        R = float(curvature_at(chart, p).scalar)
        T = 0.0
        if mf is not None:
            cs = dirac_current_stress(mf, p)
            g = ETA if mf.chart is None else mf.chart.metric(p)
            T = float(np.einsum("mn,mn->", np.linalg.inv(g), cs.T))
        vals.append((DIM - 2) / (2 * DIM) * R + kappa / DIM * T)
        Rs.append(R)
    vals = np.array(vals)
    return LambdaResult(float(vals.mean()), float(np.max(np.abs(vals - vals[0]))), vals, np.array(Rs))
