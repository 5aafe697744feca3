"""Regularising scalar field f(x, y) = sum_n eps^n f^(n)(x, y).

The field enters as sigma_eps = sigma + s i eps f (s = ``sign``) and is fixed
by requiring sigma_eps to obey the same eikonal identity as sigma,

    f = g(grad sigma, grad f) + s (i eps / 2) g(grad f, grad f)   (both slots).

Order by order along the geodesic gamma(a) = x, gamma(b) = y this is the
transport ODE

    (a - b) d_a f^(n) - f^(n) = G^(n),
    G^(n) = -s (i/2) sum_{k<n} g(grad f^(k), grad f^(n-1-k)),

whose solutions are (a - b)(c + int G / (t - b)^2).  Cauchy data live on the
surface Sigma = {t = t_Sigma}:

* order 0: f^(0)(x, y) = g(gamma', n) at the point p where the extended
  geodesic through x and y crosses Sigma (n the unit normal e_0).  Its
  gradients follow from the variational matrix and the sensitivity of the
  crossing parameter.
* order n >= 1: f^(n) is fixed by regularity at coincidence.  It is obtained
  by transport from the coincident pair (p, p): one slot is moved from p to
  its endpoint (singular leg, started from the coincidence limit), then the
  other slot (regular leg).  The order of the legs is chosen to keep the
  regular leg away from its singular point.

In Minkowski space with Sigma = {t = 0} this gives f = y0 - x0 + s i eps / 2
with every order n >= 2 vanishing.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as sint

from .geometry import DIM, MetricChart, christoffel
from .worldfunc import (
    DEFAULT_STEPS,
    WorldFunctionData,
    integrate,
    solve_bvp,
    world_function_batch,
)

FD4_OFFS = np.array([2.0, 1.0, -1.0, -2.0])
FD4_WTS = np.array([-1.0, 8.0, -8.0, 1.0]) / 12.0
MAX_ORDER = 4


class InitialDataError(ValueError):
    """The geodesic does not cross the Cauchy surface usably."""


class SingularEndpointError(RuntimeError):
    """Quadrature toward the singular endpoint did not converge."""


class RadialError(ValueError):
    """Negative radicand in the radial field beyond tolerance."""


# ---------------------------------------------------------------------------
# scalar transport ODE
# ---------------------------------------------------------------------------


def _cquad(fun, lo, hi, **kw):
    """Complex quad on ordered bounds (``complex_func`` ignores reversed limits).

    Integration warnings (divergence, roundoff) are raised as SingularEndpointError.
    """
    sgn = 1.0
    if hi < lo:
        lo, hi, sgn = hi, lo, -1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", sint.IntegrationWarning)
        try:
            re, e1 = sint.quad(lambda t: complex(fun(t)).real, lo, hi, **kw)
            im, e2 = sint.quad(lambda t: complex(fun(t)).imag, lo, hi, **kw)
        except sint.IntegrationWarning as exc:
            raise SingularEndpointError(str(exc)) from exc
    return sgn * complex(re, im), float(np.hypot(e1, e2))


def solve_order_ode(a: float, b: float, s0: float, c: complex, g: Callable, *,
                    epsabs: float = 1e-13, epsrel: float = 1e-12) -> Callable:
    """Unique differentiable solution of (s - a) f' - f = g on [a, b].

    f(s) = (s - a) (c + int_{s0}^{s} g(t) / (t - a)^2 dt), a < s0 < b.
    Raises SingularEndpointError when the integral fails to converge (the case
    s -> a with g(a) != 0).
    """
    if not a < s0 < b:
        raise ValueError("need a < s0 < b")

    def integrand(t):
        return complex(g(t)) / (t - a) ** 2

    def f(s):
        s = float(s)
        if s == a:
            return -complex(g(a))
        if not a < s <= b:
            raise ValueError("s outside (a, b]")
        with np.errstate(all="raise"):
            try:
                val, err = _cquad(integrand, s0, s, epsabs=epsabs, epsrel=epsrel, limit=200)
            except (FloatingPointError, ZeroDivisionError) as exc:
                raise SingularEndpointError(str(exc)) from exc
        scale = max(1.0, abs(val))
        if not np.isfinite(val) or err > 1e-8 * scale:
            raise SingularEndpointError(f"quadrature error estimate {err:.3g} near s = a")
        return (s - a) * (c + val)

    return f


def order_ode_residual(f: Callable, g: Callable, a: float, s: float, h: float = 1e-4) -> float:
    """|(s - a) f'(s) - f(s) - g(s)| with a 4th-order central derivative."""
    d = sum(w * f(s + o * h) for o, w in zip(FD4_OFFS, FD4_WTS)) / h
    return abs((s - a) * d - f(s) - g(s))


# ---------------------------------------------------------------------------
# Cauchy data and configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CauchyData:
    """Surface Sigma = {t = t_sigma} with unit normal e_0 and the sign switch s.

    beta: f^(0) on Sigma is the component of the geodesic velocity along e_0.
    alpha: the coincidence value f^(1)(x, x) = s i / 2 forced by the transport
    equation at first order.
    """

    t_sigma: float = 0.0
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def alpha(self) -> complex:
        return self.sign * 0.5j

    def coincidence_source(self, n: int) -> complex:
        """Limit of G^(n) at coincidence: -s i/2 for n = 1 and zero beyond."""
        return -self.sign * 0.5j if n == 1 else 0.0

    def shifted(self, dt: float) -> "CauchyData":
        return CauchyData(self.t_sigma + dt, self.sign)


@dataclass(frozen=True)
class RegFieldConfig:
    nodes: int = 12               # Gauss-Legendre nodes per leg
    fd_step: float | None = None  # default 1e-3 * chart.normal_radius
    n_steps: int = DEFAULT_STEPS
    s_max: float = 6.0            # largest |crossing parameter| accepted
    tol: float = 1e-14
    chunk: int = 2048             # pairs per batch at each recursion level


# ---------------------------------------------------------------------------
# order 0
# ---------------------------------------------------------------------------


def _normal_projection(chart: MetricChart, p, u):
    """F(p, u) = g(u, e_0) with e_0 = d_t / sqrt(g_00), and its partials."""
    g = chart.metric(p)
    dg = chart.metric_deriv(p)                    # [n, l, m, k]
    g00 = g[:, 0, 0]
    rt = np.sqrt(g00)
    Fu = g[:, 0, :] / rt[:, None]
    F = np.einsum("nm,nm->n", Fu, u)
    Fp = np.einsum("nlm,nm->nl", dg[:, :, 0, :], u) / rt[:, None] - 0.5 * F[:, None] * dg[:, :, 0, 0] / g00[:, None]
    return F, Fu, Fp


@dataclass
class Order0:
    f: np.ndarray          # (N,)
    dfx: np.ndarray        # (N, 4) lowered gradient in x
    dfy: np.ndarray        # (N, 4) lowered gradient in y
    v0: np.ndarray         # geodesic initial velocity
    s_star: np.ndarray     # crossing parameter
    p: np.ndarray          # crossing point
    u: np.ndarray          # velocity at the crossing
    wf: WorldFunctionData


@dataclass
class RegFieldSolver:
    """Batched evaluation of the hierarchy for a chart and a Cauchy surface."""

    chart: MetricChart
    cauchy: CauchyData = field(default_factory=CauchyData)
    cfg: RegFieldConfig = field(default_factory=RegFieldConfig)

    def __post_init__(self):
        if self.chart.time_index != 0:
            raise ValueError("the Cauchy surface assumes coordinate 0 is time")
        self._gl = np.polynomial.legendre.leggauss(self.cfg.nodes)
        tau = 0.5 * (self._gl[0] + 1.0)
        self._tau = tau
        self._wtau = 0.5 * self._gl[1]
        # Lagrange weights extrapolating node values to tau = 0
        lam = np.empty_like(tau)
        for j in range(tau.size):
            others = np.delete(tau, j)
            lam[j] = np.prod(others / (others - tau[j]))
        self._lag0 = lam

    @property
    def h(self) -> float:
        return self.cfg.fd_step if self.cfg.fd_step is not None else 1e-3 * self.chart.normal_radius

    # -- crossing ---------------------------------------------------------

    def crossing(self, X, V, s_guess=None):
        """Parameter s* with t(gamma(s*)) = t_Sigma, and the variational matrix there."""
        ts = self.cauchy.t_sigma
        N = X.shape[0]
        if s_guess is None:
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.where(X[:, 0] == ts, 0.0, (ts - X[:, 0]) / V[:, 0])
        else:
            s = np.array(s_guess, dtype=float)
        if np.any(~np.isfinite(s)):
            raise InitialDataError("geodesic tangent to the Cauchy surface")
        active = np.ones(N, dtype=bool)
        for _ in range(30):
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            if np.any(np.abs(s[idx]) > self.cfg.s_max):
                raise InitialDataError("geodesic misses the Cauchy surface within the chart")
            r = integrate(self.chart, X[idx], V[idx], s[idx], self.cfg.n_steps)
            res = r["x"][:, 0] - ts
            ok = np.abs(res) <= self.cfg.tol * (1.0 + abs(ts))
            step = res / r["v"][:, 0]
            s[idx[~ok]] -= step[~ok]
            active[idx[ok]] = False
        if np.any(active):
            raise InitialDataError("crossing search did not converge")
        fin = integrate(self.chart, X, V, s, self.cfg.n_steps, variational=True)
        if np.any(np.abs(fin["v"][:, 0]) < 1e-12):
            raise InitialDataError("geodesic tangent to the Cauchy surface")
        self.chart.check_domain(fin["x"])
        return s, fin

    def order0(self, X, Y, v_guess=None, s_guess=None) -> Order0:
        chart = self.chart
        X = np.atleast_2d(np.asarray(X, float))
        Y = np.atleast_2d(np.asarray(Y, float))
        b = solve_bvp(chart, X, Y, n_steps=self.cfg.n_steps, v_guess=v_guess, check_radius=False)
        wf = world_function_batch(b)
        N = X.shape[0]
        ts = self.cauchy.t_sigma
        sg = np.full(N, np.nan) if s_guess is None else np.asarray(s_guess, float).copy()
        # crossings at an endpoint need no extra integration
        at0 = (X[:, 0] == ts) | (sg == 0.0)
        at1 = ~at0 & ((Y[:, 0] == ts) | (sg == 1.0))
        mid = ~(at0 | at1)
        s = np.where(at0, 0.0, 1.0)
        p = np.where(at0[:, None], X, Y)
        u = np.where(at0[:, None], b.v0, b.v1)
        Phi = np.where(at0[:, None, None], np.eye(2 * DIM), b.Phi)
        if np.any(mid):
            sm, fin = self.crossing(X[mid], b.v0[mid], None if s_guess is None else sg[mid])
            s[mid], p[mid], u[mid], Phi[mid] = sm, fin["x"], fin["v"], fin["Phi"]
        if np.any(np.abs(u[:, 0]) < 1e-12):
            raise InitialDataError("geodesic tangent to the Cauchy surface")
        F, Fu, Fp = _normal_projection(chart, p, u)
        acc = -np.einsum("nrab,na,nb->nr", christoffel(chart, p), u, u)
        ds = -Phi[:, 0, :] / u[:, :1]                            # d s* / d(x, v0)
        dp = Phi[:, :DIM, :] + u[:, :, None] * ds[:, None, :]
        du = Phi[:, DIM:, :] + acc[:, :, None] * ds[:, None, :]
        dF = np.einsum("nl,nlk->nk", Fp, dp) + np.einsum("nl,nlk->nk", Fu, du)
        Yx, Yv = b.Phi[:, :DIM, :DIM], b.Phi[:, :DIM, DIM:]
        Yv_inv = np.linalg.inv(Yv)
        dfy = np.einsum("nk,nkl->nl", dF[:, DIM:], Yv_inv)
        dfx = dF[:, :DIM] - np.einsum("nl,nlk->nk", dfy, Yx)
        return Order0(F, dfx, dfy, b.v0, s, p, u, wf)

    # -- higher orders ----------------------------------------------------

    def _legs(self, X, o0: Order0):
        """Node pairs of both legs, flattened to (N * 2q, 4).

        Leg 1 (singular) starts at the coincident pair (p, p); option A moves
        the x slot toward x, option B the y slot toward y.  Leg 2 (regular)
        then moves the other slot.  Returns the pairs, the moving slot, node
        parameters and exact BVP / crossing guesses for every node pair.
        """
        N = X.shape[0]
        q = self.cfg.nodes
        s = o0.s_star
        optA = s > 0.5
        e1 = np.where(optA, 0.0, 1.0)
        e2 = np.where(optA, 1.0, 0.0)
        t1 = s[:, None] + self._tau[None, :] * (e1 - s)[:, None]
        # regular leg in w = 1/(t - a): the weight 1/(t - a)^2 becomes constant
        a_sing = np.where(optA, 0.0, 1.0)
        w1 = 1.0 / (s - a_sing)
        w2 = 1.0 / (e2 - a_sing)
        t2 = a_sing[:, None] + 1.0 / (w1[:, None] + self._tau[None, :] * (w2 - w1)[:, None])
        tt = np.concatenate([t1, t2], axis=1)
        r = integrate(self.chart, np.repeat(X, 2 * q, axis=0), np.repeat(o0.v0, 2 * q, axis=0),
                      tt.ravel(), self.cfg.n_steps)
        pts = r["x"].reshape(N, 2 * q, DIM)
        vel = r["v"].reshape(N, 2 * q, DIM)

        def fill(a_val, b_val):
            return np.where(optA[:, None, None], a_val, b_val)

        def rep(v):
            return np.broadcast_to(v[:, None, :], (N, q, DIM))

        P1, P2 = pts[:, :q], pts[:, q:]
        V1, V2 = vel[:, :q], vel[:, q:]
        sq = np.broadcast_to(s[:, None], (N, q))
        # leg 1: A -> (gamma(t), p), B -> (p, gamma(t)); leg 2: A -> (x, gamma(t)), B -> (gamma(t), y)
        A = np.concatenate([fill(P1, rep(o0.p)), fill(rep(X), P2)], axis=1)
        B = np.concatenate([fill(rep(o0.p), P1), fill(P2, rep(o0.wf.y))], axis=1)
        VA = np.concatenate([fill(V1, rep(o0.u)), fill(rep(o0.v0), V2)], axis=1)
        ta = np.concatenate([np.where(optA[:, None], t1, sq), np.where(optA[:, None], 0.0, t2)], axis=1)
        tb = np.concatenate([np.where(optA[:, None], sq, t1), np.where(optA[:, None], t2, 1.0)], axis=1)
        slot = np.concatenate([np.broadcast_to(np.where(optA, 1, 2)[:, None], (N, q)),
                               np.broadcast_to(np.where(optA, 2, 1)[:, None], (N, q))], axis=1)
        dt = tb - ta
        active = np.concatenate([np.ones((N, q), bool),
                                 np.broadcast_to((e2 != s)[:, None], (N, q))], axis=1)
        dt = np.where(active, dt, 1.0)
        return dict(active=active.ravel(), A=A.reshape(-1, DIM), B=B.reshape(-1, DIM), slot=slot.ravel(),
                    t2=t2, e1=e1, e2=e2, optA=optA, w1=w1, w2=w2, a_sing=a_sing,
                    v_guess=(VA * dt[..., None]).reshape(-1, DIM),
                    s_guess=((s[:, None] - ta) / dt).ravel())

    def _fd_grads(self, A, B, slot, m):
        """Lowered FD gradients of orders 1..m in the given slot (4th order)."""
        M = A.shape[0]
        h = self.h
        XA = np.repeat(A, DIM * 4, axis=0).reshape(M, DIM, 4, DIM).copy()
        XB = np.repeat(B, DIM * 4, axis=0).reshape(M, DIM, 4, DIM).copy()
        off = np.zeros((DIM, 4, DIM))
        for mu in range(DIM):
            off[mu, :, mu] = FD4_OFFS * h
        s1 = (slot == 1)[:, None, None, None]
        XA = XA + np.where(s1, off[None], 0.0)
        XB = XB + np.where(s1, 0.0, off[None])
        vals = self.orders(XA.reshape(-1, DIM), XB.reshape(-1, DIM), m)
        out = []
        for k in range(1, m + 1):
            v = vals[k].reshape(M, DIM, 4)
            out.append(v @ FD4_WTS / h)
        return out

    def orders(self, X, Y, n: int, o0: Order0 | None = None):
        """Values [f^(0), ..., f^(n)] at the pairs (X, Y)."""
        if n > MAX_ORDER:
            raise ValueError(f"orders above {MAX_ORDER} are not supported")
        X = np.atleast_2d(np.asarray(X, float))
        Y = np.atleast_2d(np.asarray(Y, float))
        if o0 is None and n >= 1 and X.shape[0] > self.cfg.chunk:
            # bounded memory; rows are independent so chunking does not change results
            parts = [self.orders(X[i:i + self.cfg.chunk], Y[i:i + self.cfg.chunk], n)
                     for i in range(0, X.shape[0], self.cfg.chunk)]
            return [np.concatenate([p[k] for p in parts]) for k in range(n + 1)]
        if o0 is None:
            o0 = self.order0(X, Y)
        out = [o0.f.astype(complex)]
        if n == 0:
            return out
        N = X.shape[0]
        q = self.cfg.nodes
        L = self._legs(X, o0)
        act = L["active"]
        A, B, slot = L["A"][act], L["B"][act], L["slot"][act]
        n0 = self.order0(A, B, v_guess=L["v_guess"][act], s_guess=L["s_guess"][act])
        grads = [np.where((slot == 1)[:, None], n0.dfx, n0.dfy).astype(complex)]
        if n >= 2:
            grads += self._fd_grads(A, B, slot, n - 1)
        gpt = np.where((slot == 1)[:, None, None], n0.wf.gx, n0.wf.gy)
        ginv = np.linalg.inv(gpt)
        sgn = self.cauchy.sign
        s = o0.s_star
        for k in range(1, n + 1):
            acc = sum(np.einsum("nm,nmk,nk->n", grads[j], ginv, grads[k - 1 - j]) for j in range(k))
            Gk = np.zeros(N * 2 * q, dtype=complex)
            Gk[act] = -sgn * 0.5j * acc
            Gk = Gk.reshape(N, 2 * q)
            G1, G2 = Gk[:, :q], Gk[:, q:]
            Gs = self.cauchy.coincidence_source(k)
            # singular leg: f(e1) = -G* + (e1 - s*) FP int_{s*}^{e1} (G - G*)/(t - s*)^2 dt
            Lg = L["e1"] - s
            qv = (G1 - Gs) / self._tau[None, :]
            d1 = qv @ self._lag0
            reg = ((qv - d1[:, None]) / self._tau[None, :]) @ self._wtau
            # finite-part reference: coordinate-time extent of the leg, reparametrisation invariant
            logs = np.log(np.abs(Lg * o0.u[:, 0]))
            f_mid = -Gs + reg + np.where(d1 == 0, 0.0, d1 * logs)
            # regular leg: int_{s*}^{e2} G / (t - a)^2 dt = (w1 - w2) int_0^1 G dtau
            a_sing = L["a_sing"]
            integ = (G2 @ self._wtau) * (L["w1"] - L["w2"])
            fk = (L["e2"] - a_sing) * (f_mid / (s - a_sing) + integ)
            out.append(fk)
        return out

    # -- gradients --------------------------------------------------------

    def gradients(self, X, Y, n: int, slot: int = 1, o0: Order0 | None = None):
        """Lowered gradients of orders 0..n in one slot (order 0 analytic)."""
        X = np.atleast_2d(np.asarray(X, float))
        Y = np.atleast_2d(np.asarray(Y, float))
        if o0 is None:
            o0 = self.order0(X, Y)
        out = [(o0.dfx if slot == 1 else o0.dfy).astype(complex)]
        if n >= 1:
            out += self._fd_grads(X, Y, np.full(X.shape[0], slot), n)
        return out


def _assemble(parts, eps):
    return sum(p * eps ** k for k, p in enumerate(parts))


# ---------------------------------------------------------------------------
# public single-geodesic API
# ---------------------------------------------------------------------------


@dataclass
class RegField:
    """f^(n) and their lowered gradients at the pairs of a batch."""

    orders: list
    grad1: list
    grad2: list | None
    eps: float
    cauchy_data: CauchyData
    wf: WorldFunctionData
    s_star: np.ndarray

    @property
    def N(self) -> int:
        return len(self.orders) - 1

    def value(self, eps: float | None = None):
        return _assemble(self.orders, self.eps if eps is None else eps)

    def gradient1(self, eps: float | None = None):
        return _assemble(self.grad1, self.eps if eps is None else eps)

    def gradient2(self, eps: float | None = None):
        return _assemble(self.grad2, self.eps if eps is None else eps)


def regfield_batch(chart: MetricChart, X, Y, cauchy_data: CauchyData | None = None, N: int = 1,
                   eps: float = 0.1, *, cfg: RegFieldConfig | None = None, both_slots: bool = True,
                   grad_order: int | None = None) -> RegField:
    """Evaluate f^(0..N) and gradients up to ``grad_order`` (default N) at pairs."""
    cd = cauchy_data or CauchyData(float(chart.base_point[0]))
    solver = RegFieldSolver(chart, cd, cfg or RegFieldConfig())
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    o0 = solver.order0(X, Y)
    vals = solver.orders(X, Y, N, o0)
    m = N if grad_order is None else grad_order
    g1 = solver.gradients(X, Y, m, 1, o0)
    g2 = solver.gradients(X, Y, m, 2, o0) if both_slots else None
    return RegField(vals, g1, g2, eps, cd, o0.wf, o0.s_star)


def solve_regfield(chart: MetricChart, geodesic, cauchy_data: CauchyData | None = None, N: int = 1,
                   eps: float = 0.1, **kw) -> RegField:
    """Hierarchy up to order N for the pair joined by ``geodesic``."""
    if N > MAX_ORDER:
        raise ValueError(f"N <= {MAX_ORDER} required")
    return regfield_batch(chart, geodesic.x[None], geodesic.y[None], cauchy_data, N, eps, **kw)


# ---------------------------------------------------------------------------
# checks and derived fields
# ---------------------------------------------------------------------------


def nonlinear_residual(rf: RegField, eps: float | None = None, slot: int = 1) -> np.ndarray:
    """|f - g(grad sigma, grad f) - s (i eps/2) g(grad f, grad f)| per pair."""
    e = rf.eps if eps is None else eps
    w = rf.wf
    f = rf.value(e)
    if slot == 1:
        df, sg, g = rf.gradient1(e), w.grad1, w.gx
    else:
        df, sg, g = rf.gradient2(e), w.grad2, w.gy
    ginv = np.linalg.inv(g)
    lin = np.einsum("nm,nm->n", sg, df)
    quad = np.einsum("nm,nmk,nk->n", df, ginv, df)
    return np.abs(f - lin - rf.cauchy_data.sign * 0.5j * e * quad)


def order_residuals(rf: RegField, slot: int = 1) -> list:
    """Per-order transport residual g(grad sigma, grad f^(n)) - f^(n) - G^(n)."""
    w = rf.wf
    sg, g = (w.grad1, w.gx) if slot == 1 else (w.grad2, w.gy)
    grads = rf.grad1 if slot == 1 else rf.grad2
    ginv = np.linalg.inv(g)
    out = []
    for n in range(min(len(grads), len(rf.orders))):
        Gn = 0.0
        if n >= 1:
            acc = sum(np.einsum("nm,nmk,nk->n", grads[j], ginv, grads[n - 1 - j]) for j in range(n))
            Gn = -rf.cauchy_data.sign * 0.5j * acc
        out.append(np.abs(np.einsum("nm,nm->n", sg, grads[n]) - rf.orders[n] - Gn))
    return out


def sigma_eps_of(rf: RegField, eps: float | None = None):
    e = rf.eps if eps is None else eps
    return rf.wf.sigma + rf.cauchy_data.sign * 1j * e * rf.value(e)


@dataclass
class TemporalRadial:
    t: np.ndarray
    r: np.ndarray
    chi: np.ndarray       # lowered chi_mu = -d_mu Re f at x
    radicand: np.ndarray


def temporal_radial(w: WorldFunctionData, rf: RegField, tol: float = 1e-9) -> TemporalRadial:
    """t = sigma^mu chi_mu and r = sqrt(t^2 - 2 sigma g(chi, chi)), chi = -grad_x Re f."""
    chi = -np.real(rf.gradient1())
    ginv = np.linalg.inv(w.gx)
    t = np.einsum("nm,nm->n", w.grad1, chi)
    cc = np.einsum("nm,nmk,nk->n", chi, ginv, chi)
    rad = t * t - 2.0 * w.sigma * cc
    scale = np.maximum(1.0, t * t)
    if np.any(rad < -tol * scale):
        raise RadialError(f"negative radicand {rad.min():.3g}")
    return TemporalRadial(t, np.sqrt(np.maximum(rad, 0.0)), chi, rad)


def temporal_radial_closed(sigma_up, g, chi_low, sigma):
    """Plain evaluation of the definitions for given sigma^mu, metric, chi_mu and sigma."""
    t = float(np.dot(sigma_up, chi_low))
    cc = float(chi_low @ np.linalg.inv(g) @ chi_low)
    rad = t * t - 2.0 * sigma * cc
    return t, float(np.sqrt(max(rad, 0.0))), rad


def cc_closed(w: WorldFunctionData, rf: RegField, eps: float | None = None):
    """(c.c + 2 eps^2 r^2) with c from the full complex gradient.

    xi_mu = -d_mu sigma_eps / (unit factor) = -sigma_mu - s i eps d_mu f, and
    c_{mu nu} = (xi_mu conj(xi_nu) - xi_nu conj(xi_mu)) / (2i).  Returns the
    per-pair value and the literal linearised form eps (sigma_nu chi_mu - sigma_mu chi_nu).
    """
    e = rf.eps if eps is None else eps
    s = rf.cauchy_data.sign
    tr = temporal_radial(w, rf)
    sig_low = w.lowered1()
    xi = -sig_low - s * 1j * e * rf.gradient1(e)
    c = (xi[:, :, None] * np.conj(xi[:, None, :]) - xi[:, None, :] * np.conj(xi[:, :, None])) / 2j
    ginv = np.linalg.inv(w.gx)
    cup = ginv @ c @ ginv
    exact = np.real(np.einsum("nab,nab->n", c, cup)) + 2 * e * e * tr.r ** 2
    cl = e * (sig_low[:, None, :] * tr.chi[:, :, None] - sig_low[:, :, None] * tr.chi[:, None, :])
    lin = np.einsum("nab,nab->n", cl, ginv @ cl @ ginv) + 2 * e * e * tr.r ** 2
    return exact, lin


def check_cc_nonpositive(w: WorldFunctionData, rf: RegField, eps: float | None = None) -> float:
    """max over pairs |c.c + 2 eps^2 r^2| with c built from the full gradient of sigma_eps."""
    exact, _ = cc_closed(w, rf, eps)
    return float(np.max(np.abs(exact)))


def antisymmetry_residual(chart: MetricChart, X, Y, cauchy_data: CauchyData, N: int, eps: float,
                          cfg: RegFieldConfig | None = None) -> float:
    """max |f(x,y) + conj f(y,x)| over the pairs."""
    solver = RegFieldSolver(chart, cauchy_data, cfg or RegFieldConfig())
    a = _assemble(solver.orders(X, Y, N), eps)
    b = _assemble(solver.orders(Y, X, N), eps)
    return float(np.max(np.abs(a + np.conj(b))))


def timelike_gradient_ok(rf: RegField) -> np.ndarray:
    """g(grad Re f, grad Re f) > 0 with past-directed time component at x."""
    d = np.real(rf.gradient1())
    ginv = np.linalg.inv(rf.wf.gx)
    nrm = np.einsum("nm,nmk,nk->n", d, ginv, d)
    up = np.einsum("nmk,nk->nm", ginv, d)
    return (nrm > 0) & (up[:, 0] < 0)


def symbol_context(chart: MetricChart, x, y, eps: float, m: float,
                   cauchy_data: CauchyData | None = None, N: int = 1,
                   cfg: RegFieldConfig | None = None):
    """SymbolContext for curved pairs: sigma_eps(x', y) evaluated by the hierarchy."""
    from .symbols import SymbolContext

    cd = cauchy_data or CauchyData(float(chart.base_point[0]))
    solver = RegFieldSolver(chart, cd, cfg or RegFieldConfig())
    y = np.asarray(y, float)
    s = cd.sign

    def se(P):
        P = np.atleast_2d(P)
        Yb = np.broadcast_to(y, P.shape)
        o0 = solver.order0(P, Yb)
        f = _assemble(solver.orders(P, Yb, N, o0), eps)
        return o0.wf.sigma + s * 1j * eps * f

    def grad(xp):
        rf = regfield_batch(chart, np.asarray(xp, float)[None], y[None], cd, N, eps, cfg=cfg,
                            both_slots=False)
        return (rf.wf.lowered1() + s * 1j * eps * rf.gradient1())[0]

    return SymbolContext(np.asarray(x, float), se, grad,
                         lambda p: np.linalg.inv(chart.metric(p)),
                         lambda p: christoffel(chart, p), m)
