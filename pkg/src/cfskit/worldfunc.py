"""Geodesic boundary value problem and Synge's world function.

Geodesics are affinely parametrised on [0, 1] with gamma(0) = x, gamma(1) = y.
All integrations use a fixed-step DOP853 Runge-Kutta scheme applied to whole
batches of geodesics at once, so results never depend on wall-clock driven
adaptivity.  The 8x8 variational matrix

    Phi(s) = d(gamma(s), gamma'(s)) / d(x, v0)

is integrated alongside when derivatives with respect to the endpoints are
needed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .geometry import (
    MetricChart,
    DomainError,
    christoffel_from,
    christoffel_and_deriv,
    frame_and_derivative,
    spin_connection_coeffs,
    spin_connection_matrices,
    GAMMA,
    DIM,
)

_NS = _dop.N_STAGES
_A = _dop.A[:_NS, :_NS]
_B = _dop.B
_C = _dop.C[:_NS]

DEFAULT_STEPS = 16


class GeodesicError(RuntimeError):
    """No unique geodesic found within tolerance (shrink the separation)."""


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------


def _rhs_factory(chart: MetricChart, variational: bool, spin: bool, gam=GAMMA):
    def rhs(state):
        x, v = state[0], state[1]
        out = [v]
        if variational:
            Gam, dGam = christoffel_and_deriv(chart, x)
        else:
            g = chart.metric(x)
            Gam = christoffel_from(np.linalg.inv(g), chart.metric_deriv(x))
        Gv = (Gam @ v[:, None, :, None])[..., 0]            # [r, a] = G^r_{ab} v^b
        out.append(-(Gv @ v[:, :, None])[..., 0])
        k = 2
        if variational:
            P = state[k]
            Px, Pv = P[:, :DIM, :], P[:, DIM:, :]
            dGv = (dGam @ v[:, None, None, :, None])[..., 0]
            K = np.swapaxes((dGv @ v[:, None, :, None])[..., 0], 1, 2)
            dPv = -(K @ Px) - 2.0 * (Gv @ Pv)
            out.append(np.concatenate([Pv, dPv], axis=1))
            k += 1
        if spin:
            W = state[k]
            F, dF = frame_and_derivative(chart, x)
            Om = spin_connection_matrices(spin_connection_coeffs(F, dF, Gam), gam)
            A = (v[:, None, :].astype(complex) @ Om.reshape(-1, DIM, 16)).reshape(-1, 4, 4)
            out.append(-(A @ W))
        return out

    return rhs


def _bcast(h, a):
    return h.reshape(h.shape + (1,) * (a.ndim - 1))


def integrate(chart: MetricChart, x0, v0, s_end=1.0, n_steps: int = DEFAULT_STEPS, *,
              variational: bool = False, spin: bool = False, record: bool = False, gam=GAMMA):
    """Integrate a batch of geodesics from s = 0 to s = s_end (per row).

    Returns a dict with final ``x``, ``v`` and optionally ``Phi`` (N, 8, 8),
    ``W`` (spin transport from gamma(0) to gamma(s_end)) and the recorded
    ``path``/``vel`` on the n_steps + 1 uniform nodes.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    N = x0.shape[0]
    if chart.flat:
        return _integrate_flat(x0, v0, s_end, n_steps, variational, spin, record)
    h = np.broadcast_to(np.asarray(s_end, dtype=float), (N,)) / n_steps
    state = [x0.copy(), v0.copy()]
    if variational:
        state.append(np.broadcast_to(np.eye(2 * DIM), (N, 2 * DIM, 2 * DIM)).copy())
    if spin:
        state.append(np.broadcast_to(np.eye(4, dtype=complex), (N, 4, 4)).copy())
    rhs = _rhs_factory(chart, variational, spin, gam)
    path = [state[0].copy()] if record else None
    vel = [state[1].copy()] if record else None
    for _ in range(n_steps):
        K = []
        for i in range(_NS):
            if i == 0:
                yi = state
            else:
                yi = [y + _bcast(h, y) * sum(_A[i, j] * K[j][c] for j in range(i) if _A[i, j] != 0)
                      for c, y in enumerate(state)]
            K.append(rhs(yi))
        state = [y + _bcast(h, y) * sum(_B[i] * K[i][c] for i in range(_NS) if _B[i] != 0)
                 for c, y in enumerate(state)]
        if record:
            path.append(state[0].copy())
            vel.append(state[1].copy())
    out = {"x": state[0], "v": state[1]}
    k = 2
    if variational:
        out["Phi"] = state[k]
        k += 1
    if spin:
        out["W"] = state[k]
    if record:
        out["path"] = np.stack(path, axis=1)
        out["vel"] = np.stack(vel, axis=1)
    return out


def _integrate_flat(x0, v0, s_end, n_steps, variational, spin, record):
    """Closed form for constant metrics in Cartesian-type charts."""
    N = x0.shape[0]
    s = np.broadcast_to(np.asarray(s_end, dtype=float), (N,))
    out = {"x": x0 + s[:, None] * v0, "v": v0.copy()}
    if variational:
        Phi = np.broadcast_to(np.eye(2 * DIM), (N, 2 * DIM, 2 * DIM)).copy()
        Phi[:, :DIM, DIM:] = s[:, None, None] * np.eye(DIM)
        out["Phi"] = Phi
    if spin:
        out["W"] = np.broadcast_to(np.eye(4, dtype=complex), (N, 4, 4)).copy()
    if record:
        frac = np.linspace(0.0, 1.0, n_steps + 1)
        out["path"] = x0[:, None, :] + (s[:, None] * frac[None, :])[..., None] * v0[:, None, :]
        out["vel"] = np.broadcast_to(v0[:, None, :], out["path"].shape).copy()
    return out


# ---------------------------------------------------------------------------
# boundary value problem
# ---------------------------------------------------------------------------


@dataclass
class GeodesicBatch:
    """Batch of solved geodesics; Phi is the variational matrix at s = 1."""

    chart: MetricChart
    x: np.ndarray
    y: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    Phi: np.ndarray
    iterations: np.ndarray
    W: np.ndarray | None = None  # spin transport gamma(0) -> gamma(1), i.e. U(y, x)
    path: np.ndarray | None = None
    vel: np.ndarray | None = None

    def __len__(self):
        return self.x.shape[0]

    @property
    def jac_v(self):
        """d y / d v0 at fixed x."""
        return self.Phi[:, :DIM, DIM:]

    @property
    def jac_x(self):
        """d y / d x at fixed v0."""
        return self.Phi[:, :DIM, :DIM]


def solve_bvp(chart: MetricChart, X, Y, *, n_steps: int = DEFAULT_STEPS, v_guess=None,
              tol: float = 1e-13, max_iter: int = 40, spin: bool = False, record: bool = False,
              check_radius: bool = True, gam=GAMMA) -> GeodesicBatch:
    """Shooting with chord-Newton updates on the initial velocity.

    The Jacobian d y/d v0 is taken from the variational equations at the
    first two iterates and refreshed every 6 iterations; converged rows are frozen
    so every geodesic's result is independent of the batch it sits in.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X, Y = np.broadcast_arrays(X, Y)
    X, Y = X.copy(), Y.copy()
    chart.check_domain(X)
    chart.check_domain(Y)
    if check_radius:
        sep = np.max(np.abs(Y - X), axis=-1)
        if np.any(sep > chart.normal_radius):
            raise DomainError(
                f"separation {sep.max():.3g} exceeds the normal-neighbourhood radius "
                f"{chart.normal_radius:.3g} of chart {chart.name!r}")
    N = X.shape[0]
    v = (Y - X).copy() if v_guess is None else np.array(v_guess, dtype=float).reshape(N, DIM)
    scale = 1.0 + np.max(np.abs(Y), axis=-1)
    active = np.ones(N, dtype=bool)
    iters = np.zeros(N, dtype=int)
    Jinv = None
    # rows that converge on an iterate with the variational matrix available keep it
    reuse = not (spin or record)
    Phi_done = np.full((N, 2 * DIM, 2 * DIM), np.nan)
    v1_done = np.full((N, DIM), np.nan)
    have = np.zeros(N, dtype=bool)
    for it in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        need_jac = it < 2 or it % 6 == 0
        res = integrate(chart, X[idx], v[idx], 1.0, n_steps, variational=need_jac, gam=gam)
        if need_jac:
            Jfull = np.full((N, DIM, DIM), np.nan)
            Jfull[idx] = res["Phi"][:, :DIM, DIM:]
            Jinv_full = np.full((N, DIM, DIM), np.nan) if Jinv is None else Jinv
            Jinv_full[idx] = np.linalg.inv(Jfull[idx])
            Jinv = Jinv_full
        r = res["x"] - Y[idx]
        done = np.max(np.abs(r), axis=-1) <= tol * scale[idx]
        if need_jac and reuse:
            fin_rows = idx[done]
            Phi_done[fin_rows] = res["Phi"][done]
            v1_done[fin_rows] = res["v"][done]
            have[fin_rows] = True
        step = np.einsum("nij,nj->ni", Jinv[idx], r)
        upd = idx[~done]
        v[upd] -= step[~done]
        iters[idx] += ~done
        active[idx[done]] = False
    if np.any(active):
        bad = np.nonzero(active)[0]
        raise GeodesicError(f"no unique geodesic in tolerance for {bad.size} pair(s); "
                            "shrink the separation")
    if reuse:
        rest = np.nonzero(~have)[0]
        if rest.size:
            fin = integrate(chart, X[rest], v[rest], 1.0, n_steps, variational=True, gam=gam)
            Phi_done[rest] = fin["Phi"]
            v1_done[rest] = fin["v"]
        return GeodesicBatch(chart, X, Y, v, v1_done, Phi_done, iters)
    fin = integrate(chart, X, v, 1.0, n_steps, variational=True, spin=spin, record=record, gam=gam)
    return GeodesicBatch(chart, X, Y, v, fin["v"], fin["Phi"], iters,
                         W=fin.get("W"), path=fin.get("path"), vel=fin.get("vel"))


# ---------------------------------------------------------------------------
# single-geodesic API
# ---------------------------------------------------------------------------


@dataclass
class Geodesic:
    chart: MetricChart
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    path: np.ndarray
    vel: np.ndarray
    v0: np.ndarray
    Phi: np.ndarray
    W: np.ndarray
    affine: bool = True

    def speed_residual(self) -> float:
        g = self.chart.metric(self.path)
        n = np.einsum("kmn,km,kn->k", g, self.vel, self.vel)
        return float(np.max(np.abs(n - n[0])) / max(abs(n[0]), 1e-300)) if n[0] != 0 else float(np.max(np.abs(n)))

    def batch(self) -> GeodesicBatch:
        return GeodesicBatch(self.chart, self.x[None], self.y[None], self.v0[None], self.vel[-1][None],
                             self.Phi[None], np.zeros(1, int), W=self.W[None])


def solve_geodesic(chart: MetricChart, x, y, *, n_steps: int = DEFAULT_STEPS, **kw) -> Geodesic:
    """Affinely parametrised geodesic from x (s=0) to y (s=1)."""
    b = solve_bvp(chart, x, y, n_steps=n_steps, spin=True, record=True, **kw)
    s = np.linspace(0.0, 1.0, n_steps + 1)
    return Geodesic(chart, b.x[0], b.y[0], s, b.path[0], b.vel[0], b.v0[0], b.Phi[0], b.W[0])


@dataclass
class WorldFunctionData:
    """sigma, its raised gradients at x (grad1) and y (grad2), and the transport map.

    ``transport[nu, mu]`` maps vectors at x to vectors at y and satisfies
    transport @ grad1 = -grad2; it is the identity at coincidence.
    """

    sigma: np.ndarray
    grad1: np.ndarray
    grad2: np.ndarray
    transport: np.ndarray
    x: np.ndarray
    y: np.ndarray
    gx: np.ndarray
    gy: np.ndarray
    jac_v: np.ndarray

    def lowered1(self):
        return np.einsum("...mn,...n->...m", self.gx, self.grad1)

    def lowered2(self):
        return np.einsum("...mn,...n->...m", self.gy, self.grad2)


def world_function_batch(b: GeodesicBatch) -> WorldFunctionData:
    chart = b.chart
    gx = chart.metric(b.x)
    gy = chart.metric(b.y)
    sigma = 0.5 * np.einsum("nmk,nm,nk->n", gx, b.v0, b.v0)
    Jinv = np.linalg.inv(b.jac_v)
    transport = np.linalg.inv(gy) @ np.swapaxes(Jinv, -1, -2) @ gx
    return WorldFunctionData(sigma, -b.v0, b.v1.copy(), transport, b.x, b.y, gx, gy, b.jac_v)


def world_function(g: Geodesic) -> WorldFunctionData:
    """World function data of a single geodesic (scalar sigma, (4,) gradients)."""
    w = world_function_batch(g.batch())
    return WorldFunctionData(float(w.sigma[0]), w.grad1[0], w.grad2[0], w.transport[0],
                             w.x[0], w.y[0], w.gx[0], w.gy[0], w.jac_v[0])


def sigma_path_integral(g: Geodesic) -> float:
    """(1/2) int_0^1 g(gamma', gamma') ds by composite Simpson on the stored nodes."""
    from scipy.integrate import simpson
    gm = g.chart.metric(g.path)
    L = np.einsum("kmn,km,kn->k", gm, g.vel, g.vel)
    return 0.5 * float(simpson(L, x=g.s))


def fundamental_identity_residuals(w: WorldFunctionData):
    """(identity residual, eikonal residual), scaled by the gradient magnitude."""
    s2 = 2 * np.asarray(w.sigma)
    n1 = np.einsum("...m,...mn,...n->...", w.grad1, w.gx, w.grad1)
    n2 = np.einsum("...m,...mn,...n->...", w.grad2, w.gy, w.grad2)
    scale = np.maximum(1e-300, np.sum(np.abs(w.lowered1() * w.grad1), axis=-1))
    fund = np.maximum(np.abs(s2 - n1), np.abs(s2 - n2)) / np.maximum(scale, 1e-12)
    eik = np.max(np.abs(np.einsum("...nm,...m->...n", w.transport, w.grad1) + w.grad2), axis=-1)
    return fund, eik


def check_fundamental_identity(w: WorldFunctionData, chart: MetricChart | None = None) -> float:
    """Max of the relative fundamental-identity residual and the eikonal residual."""
    fund, eik = fundamental_identity_residuals(w)
    return float(max(np.max(fund), np.max(eik)))


def fd_gradients(chart: MetricChart, x, y, h: float = 1e-5, **kw):
    """Lowered gradients of sigma in both slots by 4th-order central differences."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    offs = np.array([2, 1, -1, -2]) * h
    wts = np.array([-1, 8, -8, 1]) / (12 * h)
    X, Y = [], []
    for slot in (0, 1):
        for m in range(DIM):
            for o in offs:
                e = np.zeros(DIM)
                e[m] = o
                X.append(x + (e if slot == 0 else 0))
                Y.append(y + (e if slot == 1 else 0))
    b = solve_bvp(chart, np.array(X), np.array(Y), check_radius=False, **kw)
    s = world_function_batch(b).sigma.reshape(2, DIM, 4)
    return s[0] @ wts, s[1] @ wts
