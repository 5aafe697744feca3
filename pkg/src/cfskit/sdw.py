"""Schwinger-DeWitt coefficients of the spinorial Klein-Gordon operator.

G(x, y) = Delta^{1/2}(x, y) sum_n a_n(x, y) T^(n)(x, y) solves
(-Box^S + V - m^2) G = 0 order by order when

    sigma^mu nabla_mu a_n + n a_n = Delta^{-1/2} (Box^S - V)(Delta^{1/2} a_{n-1}),
    a_0 = U(x, y).

Along the geodesic gamma(0) = y, gamma(1) = x the regular solution is

    a_{n+1}(x, y) = int_0^1 s^n U(x, gamma(s)) h_n(gamma(s), y) ds,
    h_n = Delta^{-1/2} (Box^S - V)(Delta^{1/2} a_n),

with Box^S acting on the first slot by finite differences over re-solved
geodesics.  The spinor potential is V = R/4 (Lichnerowicz); scalar
potentials are accepted for flat-space checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import (
    DIM,
    GAMMA,
    MetricChart,
    christoffel,
    curvature_at,
    spin_connection_at,
)
from .bitensor import build_frames
from .symbols import box_stencil, t_value
from .worldfunc import integrate

MAX_SDW_ORDER = 2


class QuadratureError(RuntimeError):
    """Path quadrature did not reach the requested tolerance."""


def lichnerowicz_potential(chart: MetricChart) -> Callable:
    """V(p) = R(p)/4 as a scalar multiple of the identity."""
    def V(P):
        return curvature_at(chart, np.atleast_2d(P)).scalar / 4.0
    return V


def zero_potential(P):
    return np.zeros(np.atleast_2d(P).shape[0])


@dataclass(frozen=True)
class SDWConfig:
    nodes: int = 8                 # Gauss-Legendre nodes on the path
    fd_step: float | None = None   # default 1e-3 * chart.normal_radius
    tol: float | None = None       # if set, rerun with doubled nodes and compare
    gam: np.ndarray = field(default_factory=lambda: GAMMA, compare=False)


@dataclass
class SDWCoefficients:
    x: np.ndarray
    y: np.ndarray
    coeffs: list                   # a_n(x, y), each (4, 4)
    potential: Callable
    delta: float

    @property
    def N(self):
        return len(self.coeffs) - 1


class SDWSolver:
    """Batched recursive evaluation of a_n(X, Y) by nested path quadrature."""

    def __init__(self, chart: MetricChart, potential: Callable | None = None,
                 cfg: SDWConfig | None = None):
        self.chart = chart
        self.V = potential if potential is not None else lichnerowicz_potential(chart)
        self.cfg = cfg or SDWConfig()
        x, w = np.polynomial.legendre.leggauss(self.cfg.nodes)
        self.s = 0.5 * (x + 1.0)
        self.w = 0.5 * w

    @property
    def h(self):
        return self.cfg.fd_step if self.cfg.fd_step is not None else 1e-3 * self.chart.normal_radius

    def frames(self, X, Y):
        return build_frames(self.chart, X, Y, check_radius=False, gam=self.cfg.gam)

    def coefficient(self, n: int, X, Y):
        """a_n(X, Y), shape (N, 4, 4); also returns Delta^{1/2}(X, Y)."""
        X = np.atleast_2d(np.asarray(X, float))
        Y = np.atleast_2d(np.asarray(Y, float))
        fr = self.frames(X, Y)
        return self._coeff(n, X, Y, fr), fr.delta_sqrt

    def _coeff(self, n, X, Y, fr):
        if n == 0:
            return fr.U
        N = X.shape[0]
        q = self.s.size
        # nodes gamma(s) on the geodesic from y (s = 0) to x (s = 1): parameter 1 - s from x
        Xr = np.repeat(X, q, axis=0)
        Vr = np.repeat(fr.geo.v0, q, axis=0)
        r = integrate(self.chart, Xr, Vr, np.tile(1.0 - self.s, N))
        P = r["x"]
        Yr = np.repeat(Y, q, axis=0)
        hk = self.source(n - 1, P, Yr)                          # h_{n-1}(gamma(s), y)
        frP = self.frames(P, Yr)
        # U(x, gamma(s)) = U(x, y) U(y, gamma(s)) = U(x, y) U(gamma(s), y)^{-1}
        Uxp = np.repeat(fr.U, q, axis=0) @ frP.U_rev
        wts = np.tile(self.w * self.s ** (n - 1), N)
        integ = (Uxp @ hk) * wts[:, None, None]
        return integ.reshape(N, q, 4, 4).sum(axis=1)

    def source(self, k, P, Y):
        """h_k(P, Y) = Delta^{-1/2} (Box^S - V)(Delta^{1/2} a_k)(P, Y)."""
        M = P.shape[0]
        h = self.h
        ginv = np.linalg.inv(self.chart.metric(P))
        out = np.empty((M, 4, 4), dtype=complex)
        # stencils differ only through mixed terms; group by pattern
        patterns = {}
        for i in range(M):
            _, mixed = box_stencil(P[i], h, ginv[i])
            patterns.setdefault(tuple(mixed), []).append(i)
        for mixed, idx in patterns.items():
            idx = np.array(idx)
            stencils = np.stack([box_stencil(P[i], h, ginv[i])[0] for i in idx])  # (m, S, 4)
            S = stencils.shape[1]
            flatP = stencils.reshape(-1, DIM)
            flatY = np.repeat(Y[idx], S, axis=0)
            fr = self.frames(flatP, flatY)
            ak = self._coeff(k, flatP, flatY, fr)
            F = (fr.delta_sqrt[:, None, None] * ak).reshape(idx.size, S, 4, 4)
            box = self._box_spinor(P[idx], F, h, list(mixed))
            Vp = self.V(P[idx])
            Vp = np.asarray(Vp)
            VF = (Vp[:, None, None] * F[:, 0]) if Vp.ndim == 1 else Vp @ F[:, 0]
            out[idx] = (box - VF) / fr.delta_sqrt.reshape(idx.size, S)[:, 0, None, None]
        return out

    def _box_spinor(self, P, F, h, mixed):
        """g^{mn}[d d F + (d Om) F + 2 Om d F + Om Om F - G (d F + Om F)] from stencil values."""
        chart = self.chart
        gam = self.cfg.gam
        m = P.shape[0]
        ginv = np.linalg.inv(chart.metric(P))
        Gam = christoffel(chart, P)
        Om = spin_connection_at(chart, P, gam)                   # (m, 4, 4, 4)
        # derivative of the spin connection by central differences
        dOm = np.empty((m, DIM, DIM, 4, 4), dtype=complex)
        for l in range(DIM):
            e = np.zeros(DIM)
            e[l] = h
            dOm[:, l] = (spin_connection_at(chart, P + e, gam) - spin_connection_at(chart, P - e, gam)) / (2 * h)
        F0 = F[:, 0]
        d1 = np.stack([(F[:, 1 + 2 * a] - F[:, 2 + 2 * a]) / (2 * h) for a in range(DIM)], axis=1)
        d2 = np.zeros((m, DIM, DIM, 4, 4), dtype=complex)
        for a in range(DIM):
            d2[:, a, a] = (F[:, 1 + 2 * a] - 2 * F0 + F[:, 2 + 2 * a]) / (h * h)
        k = 1 + 2 * DIM
        for (a, b) in mixed:
            fpp, fpm, fmp, fmm = (F[:, k + j] for j in range(4))
            k += 4
            d2[:, a, b] = d2[:, b, a] = (fpp - fpm - fmp + fmm) / (4 * h * h)
        cov = d1 + Om @ F0[:, None]                              # nabla_l F
        # nabla_m nabla_n F = d_m(nabla_n F) + Om_m nabla_n F - G^l_{mn} nabla_l F
        dcov = d2 + dOm @ F0[:, None, None] + Om[:, None] @ d1[:, :, None]
        second = dcov + Om[:, :, None] @ cov[:, None, :]
        second = second - np.einsum("plmn,plij->pmnij", Gam, cov)
        return np.einsum("pmn,pmnij->pij", ginv, second)


def b_operator(geodesic, s: float, chart: MetricChart, potential: Callable | None = None,
               cfg: SDWConfig | None = None, F=None):
    """B(s) applied to the identity of End(S_y): Delta^{-1/2} U(y,g(s)) (Box - V) U(g(s),y) Delta^{1/2}.

    ``geodesic`` runs from x (index 0) to y; gamma(s) here is measured from y.
    """
    sol = SDWSolver(chart, potential, cfg)
    x, y = np.asarray(geodesic.x, float), np.asarray(geodesic.y, float)
    v0 = np.asarray(geodesic.v0, float)
    p = integrate(chart, x[None], v0[None], 1.0 - s)["x"]
    hk = sol.source(0, p, y[None])
    fr = sol.frames(p, y[None])
    return fr.U_rev[0] @ hk[0]


def sdw_coefficients(geodesic, chart: MetricChart, N: int = 1, potential: Callable | None = None,
                     cfg: SDWConfig | None = None) -> SDWCoefficients:
    """a_0..a_N at the pair (x, y) joined by ``geodesic``."""
    if N > MAX_SDW_ORDER:
        raise ValueError(f"N <= {MAX_SDW_ORDER} required")
    sol = SDWSolver(chart, potential, cfg)
    X = np.asarray(geodesic.x, float)[None]
    Y = np.asarray(geodesic.y, float)[None]
    fr = sol.frames(X, Y)
    coeffs = [sol._coeff(n, X, Y, fr)[0] for n in range(N + 1)]
    if sol.cfg.tol is not None and N >= 1:
        fine = SDWSolver(chart, potential, replace(sol.cfg, nodes=2 * sol.cfg.nodes, tol=None))
        for n in range(1, N + 1):
            ref = fine._coeff(n, X, Y, fr)[0]
            diff = float(np.max(np.abs(ref - coeffs[n])))
            if diff > sol.cfg.tol * max(1.0, float(np.max(np.abs(ref)))):
                raise QuadratureError(f"a_{n} changes by {diff:.3g} when the path nodes are doubled")
    return SDWCoefficients(X[0], Y[0], coeffs, sol.V, float(fr.delta[0]))


def coincidence_a1(chart: MetricChart, x, potential: Callable | None = None,
                   cfg: SDWConfig | None = None) -> np.ndarray:
    """a_1(x, x) = h_0(x, x) by the same FD machinery (U = id, Delta = 1 at x)."""
    sol = SDWSolver(chart, potential, cfg)
    x = np.asarray(x, float)[None]
    return sol.source(0, x, x)[0]


def first_order_minkowski(V_box_powers: Callable, x, y, n: int, nodes: int = 40) -> float:
    """-(1/n!) int_0^1 (s - s^2)^n (Box^n V)(s x + (1 - s) y) ds by Gauss-Legendre."""
    from math import factorial
    t, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (t + 1.0)
    w = 0.5 * w
    pts = s[:, None] * np.asarray(x, float) + (1 - s)[:, None] * np.asarray(y, float)
    vals = V_box_powers(n, pts)
    return float(-np.sum(w * (s - s * s) ** n * vals) / factorial(n))


# ---------------------------------------------------------------------------
# truncated kernel and Klein-Gordon residual
# ---------------------------------------------------------------------------


def truncated_g(delta_sqrt, coeffs, sig_eps, m: float):
    """G_N = Delta^{1/2} sum_n a_n T^(n)(sigma_eps); batch-aware."""
    delta_sqrt = np.asarray(delta_sqrt)
    out = 0.0
    for n, a in enumerate(coeffs):
        T = np.asarray(t_value(n, sig_eps, m))
        out = out + a * T[..., None, None]
    return delta_sqrt[..., None, None] * out


def kg_residual(chart: MetricChart, x, y, N: int, eps: float, m: float, h: float | None = None,
                cauchy_data=None, rf_order: int = 1, cfg: SDWConfig | None = None) -> float:
    """|| (-Box^S + R/4 - m^2) G_N || at (x, y) by finite differences in x."""
    from .regfield import CauchyData, RegFieldSolver

    sol = SDWSolver(chart, None, cfg)
    hh = h if h is not None else sol.h
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ginv = np.linalg.inv(chart.metric(x))
    P, mixed = box_stencil(x, hh, ginv)
    Y = np.broadcast_to(y, P.shape).copy()
    fr = sol.frames(P, Y)
    coeffs = [sol._coeff(n, P, Y, fr) for n in range(N + 1)]
    cd = cauchy_data or CauchyData(float(chart.base_point[0]))
    rs = RegFieldSolver(chart, cd)
    vals = rs.orders(P, Y, rf_order)
    f = sum(v * eps ** k for k, v in enumerate(vals))
    se = fr.wf.sigma + cd.sign * 1j * eps * f
    G = truncated_g(fr.delta_sqrt, coeffs, se, m)
    box = sol._box_spinor(x[None], G[None], hh, mixed)[0]
    V = sol.V(x[None])[0]
    res = -box + (V - m * m) * G[0]
    return float(np.max(np.abs(res)))
