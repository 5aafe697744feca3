"""Van Vleck-Morette determinant and spin parallel transport.

Slot convention: U(x, y) maps the spinor fibre at y to the fibre at x.  The
BVP integrates the transport equation from x (s = 0) to y (s = 1), which
yields U(y, x); U(x, y) is its inverse.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    MetricChart,
    DIM,
    GAMMA,
    ID4,
    curvature_at,
    frame_and_derivative,
    spin_connection_at,
    sigma_matrices,
)
from .worldfunc import (
    Geodesic,
    GeodesicBatch,
    WorldFunctionData,
    solve_bvp,
    world_function_batch,
)

FD4_OFFS = np.array([2.0, 1.0, -1.0, -2.0])
FD4_WTS = np.array([-1.0, 8.0, -8.0, 1.0]) / 12.0


class GeometryError(RuntimeError):
    """Non-positive van Vleck determinant (probably past a conjugate point)."""


@dataclass
class BiTensorFrame:
    """Per-pair bundle.  Arrays carry a leading batch axis."""

    wf: WorldFunctionData
    delta: np.ndarray
    delta_sqrt: np.ndarray
    U: np.ndarray        # U(x, y): S_y -> S_x
    U_rev: np.ndarray    # U(y, x): S_x -> S_y
    geo: GeodesicBatch

    def __len__(self):
        return self.delta.shape[0]

    def pick(self, i):
        """Single-pair view (keeps a batch axis of length one)."""
        sl = slice(i, i + 1)
        w = self.wf
        wf = WorldFunctionData(w.sigma[sl], w.grad1[sl], w.grad2[sl], w.transport[sl], w.x[sl],
                               w.y[sl], w.gx[sl], w.gy[sl], w.jac_v[sl])
        g = self.geo
        geo = GeodesicBatch(g.chart, g.x[sl], g.y[sl], g.v0[sl], g.v1[sl], g.Phi[sl],
                            g.iterations[sl], W=None if g.W is None else g.W[sl])
        return BiTensorFrame(wf, self.delta[sl], self.delta_sqrt[sl], self.U[sl], self.U_rev[sl], geo)


def van_vleck(w: WorldFunctionData, chart: MetricChart | None = None) -> np.ndarray:
    """Delta(x, y) = det(-sigma_{mu nu'}) / (sqrt|g(x)| sqrt|g(y)|).

    In terms of the transport map this is det(Lambda) sqrt|g(y)| / sqrt|g(x)|,
    which equals one at coincidence.
    """
    dx = np.abs(np.linalg.det(w.gx))
    dy = np.abs(np.linalg.det(w.gy))
    return np.linalg.det(w.transport) * np.sqrt(dy / dx)


def build_frames(chart: MetricChart, X, Y, *, check_positive: bool = True, gam=GAMMA, **kw) -> BiTensorFrame:
    """Solve the BVPs and assemble sigma, Delta and U for a batch of pairs."""
    b = solve_bvp(chart, X, Y, spin=True, gam=gam, **kw)
    w = world_function_batch(b)
    delta = np.atleast_1d(van_vleck(w))
    if check_positive and np.any(delta <= 0):
        raise GeometryError("non-positive van Vleck determinant inside the neighbourhood")
    U_rev = b.W
    U = np.linalg.inv(U_rev)
    return BiTensorFrame(w, delta, np.sqrt(np.abs(delta)), U, U_rev, b)


def spin_transport(g: Geodesic, tetrads=None) -> np.ndarray:
    """U(x, y) for the geodesic x = gamma(0), y = gamma(1).

    ``tetrads`` is accepted for interface symmetry; the frame along the path is
    recomputed from the chart.
    """
    return np.linalg.inv(g.W)


def _stencil(x, h):
    pts = []
    for m in range(DIM):
        for o in FD4_OFFS:
            e = np.zeros(DIM)
            e[m] = o * h
            pts.append(x + e)
    return np.array(pts)


def box_sigma(chart: MetricChart, x, y, h: float = 1e-4) -> float:
    """Box sigma at x by a 4th-order difference of sqrt|g| sigma^mu over base points."""
    P = _stencil(np.asarray(x, float), h)
    b = solve_bvp(chart, P, np.broadcast_to(y, P.shape), check_radius=False)
    w = world_function_batch(b)
    vol = np.sqrt(np.abs(np.linalg.det(w.gx)))
    flux = (vol[:, None] * w.grad1).reshape(DIM, 4, DIM)
    div = sum(flux[m, :, m] @ FD4_WTS for m in range(DIM)) / h
    vol0 = np.sqrt(abs(np.linalg.det(chart.metric(x))))
    return float(div / vol0)


def van_vleck_transport_residual(frame: BiTensorFrame, chart: MetricChart, h: float = 1e-4) -> float:
    """Max over pairs of |sigma^mu d_mu Delta^{1/2} - (1/2)(d - Box sigma) Delta^{1/2}|."""
    out = []
    for i in range(len(frame)):
        x = frame.wf.x[i]
        y = frame.wf.y[i]
        P = _stencil(x, h)
        b = solve_bvp(chart, P, np.broadcast_to(y, P.shape), check_radius=False)
        w = world_function_batch(b)
        ds = np.sqrt(np.abs(van_vleck(w))).reshape(DIM, 4) @ FD4_WTS / h
        lhs = frame.wf.grad1[i] @ ds
        vol = np.sqrt(np.abs(np.linalg.det(w.gx)))
        flux = (vol[:, None] * w.grad1).reshape(DIM, 4, DIM)
        box = sum(flux[m, :, m] @ FD4_WTS for m in range(DIM)) / h
        box /= np.sqrt(abs(np.linalg.det(frame.wf.gx[i])))
        rhs = 0.5 * (DIM - box) * frame.delta_sqrt[i]
        out.append(abs(lhs - rhs))
    return float(max(out))


def covariant_expansion_remainder(frame: BiTensorFrame, chart: MetricChart) -> np.ndarray:
    """|Delta^{1/2} - 1 - (1/12) R_{mu nu} sigma^mu sigma^nu| per pair."""
    cb = curvature_at(chart, frame.wf.x)
    s = frame.wf.grad1
    quad = np.einsum("nm,nmk,nk->n", s, cb.ricci, s)
    return np.abs(frame.delta_sqrt - 1.0 - quad / 12.0)


def covariant_derivative_U(chart: MetricChart, x, y, delta: float, gam=GAMMA):
    """nabla^{(1)}_mu U(x, y) by 4th-order differences in x (y held fixed)."""
    P = _stencil(np.asarray(x, float), delta)
    b = solve_bvp(chart, P, np.broadcast_to(y, P.shape), spin=True, check_radius=False, gam=gam)
    U = np.linalg.inv(b.W).reshape(DIM, 4, 4, 4)
    dU = np.einsum("mkij,k->mij", U, FD4_WTS) / delta
    b0 = solve_bvp(chart, np.asarray(x, float)[None], np.asarray(y, float)[None], spin=True,
                   check_radius=False, gam=gam)
    U0 = np.linalg.inv(b0.W[0])
    Om = spin_connection_at(chart, np.asarray(x, float), gam)
    return dU + Om @ U0, U0, world_function_batch(b0)


def spin_transport_derivative_check(chart: MetricChart, x, direction, h: float, gam=GAMMA) -> float:
    """Relative residual of nabla^{(1)}_mu U(x,y) against its leading curvature term.

    The leading term is (+i/8) R_{ab mu nu} sigma^nu Sigma^{ab} U(x,y) in the
    curvature and Sigma conventions of this package (the opposite overall sign
    to the (-i/8) form appears under the other Riemann sign convention).
    y = x + h * direction.  The residual is O(h) when the leading term is right.
    """
    x = np.asarray(x, float)
    y = x + h * np.asarray(direction, float)
    lhs, U0, w = covariant_derivative_U(chart, x, y, 0.05 * h, gam)
    cb = curvature_at(chart, x)
    g = cb.metric
    Rlow = np.einsum("ak,kbmn->abmn", g, cb.riemann)
    F, _ = frame_and_derivative(chart, x)
    gmu = np.einsum("ma,aij->mij", F, gam)
    Sig = sigma_matrices(gmu)
    s_up = w.grad1[0]
    rhs = (1j / 8) * np.einsum("abmn,n,abij,jk->mik", Rlow, s_up, Sig, U0)
    den = np.max(np.abs(rhs))
    if den == 0.0:
        return float(np.max(np.abs(lhs)))
    return float(np.max(np.abs(lhs - rhs)) / den)


def spin_inner_product_residual(frame: BiTensorFrame, gam0=GAMMA[0]) -> float:
    """max | U^dagger gamma0 U - gamma0 | (U preserves the spin inner product)."""
    U = frame.U
    M = np.conj(np.swapaxes(U, -1, -2)) @ gam0 @ U
    return float(np.max(np.abs(M - gam0)))


def group_residual(frame: BiTensorFrame) -> float:
    return float(np.max(np.abs(frame.U @ frame.U_rev - ID4)))
