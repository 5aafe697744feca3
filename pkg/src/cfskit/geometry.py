"""Metrics, curvature, tetrads, curved Dirac matrices and spin connection.

Conventions: d = 4, signature (+,-,-,-).  Riemann tensor

    R^r_{s m n} = d_m G^r_{n s} - d_n G^r_{m s} + G^r_{m l} G^l_{n s} - G^r_{n l} G^l_{m s},

Ricci R_{s n} = R^r_{s r n}.  With this choice the spin Laplacian obeys the
Lichnerowicz identity (i D)^2 = -Box^S + R/4, so de Sitter in these signs has
R = -12 H^2.

All pointwise routines accept a single point (4,) or a batch (..., 4).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import sympy as sp

DIM = 4
ETA = np.diag([1.0, -1.0, -1.0, -1.0])


class DomainError(ValueError):
    """Point outside the chart domain."""


class SignatureError(ValueError):
    """Metric is degenerate or has the wrong signature."""


# ---------------------------------------------------------------------------
# flat Dirac algebra
# ---------------------------------------------------------------------------

_PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


def dirac_matrices(rep: str = "dirac") -> np.ndarray:
    """Flat gamma^a, shape (4,4,4).  ``rep`` is 'dirac' or 'weyl'."""
    I2 = np.eye(2, dtype=complex)
    Z = np.zeros((2, 2), dtype=complex)
    g = np.empty((4, 4, 4), dtype=complex)
    if rep == "dirac":
        g[0] = np.block([[I2, Z], [Z, -I2]])
        for i in range(3):
            g[i + 1] = np.block([[Z, _PAULI[i]], [-_PAULI[i], Z]])
    elif rep == "weyl":
        g[0] = np.block([[Z, I2], [I2, Z]])
        for i in range(3):
            g[i + 1] = np.block([[Z, _PAULI[i]], [-_PAULI[i], Z]])
    else:
        raise ValueError(f"unknown representation {rep!r}")
    return g


GAMMA = dirac_matrices("dirac")
GAMMA5 = 1j * GAMMA[0] @ GAMMA[1] @ GAMMA[2] @ GAMMA[3]
ID4 = np.eye(4, dtype=complex)


def sigma_matrices(gam: np.ndarray = GAMMA) -> np.ndarray:
    """Sigma^{ab} = (i/2)[gamma^a, gamma^b], shape (4,4,4,4)."""
    return 0.5j * (np.einsum("aij,bjk->abik", gam, gam) - np.einsum("bij,ajk->abik", gam, gam))


SIGMA = sigma_matrices()


def spin_adjoint(M: np.ndarray, gamma0: np.ndarray = GAMMA[0]) -> np.ndarray:
    """Adjoint with respect to the spin inner product u^dagger gamma^0 v."""
    Mh = np.conj(np.swapaxes(M, -1, -2))
    return gamma0 @ Mh @ gamma0


def slash(v: np.ndarray, gam: np.ndarray = GAMMA) -> np.ndarray:
    """v_a gamma^a for frame components v^a (lowered with eta)."""
    v = np.asarray(v)
    return np.einsum("...a,aij->...ij", v * np.diag(ETA), gam)


# ---------------------------------------------------------------------------
# metric charts
# ---------------------------------------------------------------------------


@dataclass
class MetricChart:
    """Coordinate chart with metric and its first two coordinate derivatives.

    ``metric_deriv(p)[..., r, m, n] = d_r g_{mn}`` and
    ``metric_deriv2(p)[..., r, s, m, n] = d_r d_s g_{mn}``.
    """

    name: str
    domain: np.ndarray
    metric_fn: Callable[[np.ndarray], np.ndarray]
    deriv_fn: Callable[[np.ndarray], np.ndarray] | None = None
    deriv2_fn: Callable[[np.ndarray], np.ndarray] | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    base_point: np.ndarray | None = None
    normal_radius: float = 0.25
    time_index: int = 0
    dim: int = DIM
    flat: bool = False   # constant metric: geodesics are straight lines

    def __post_init__(self):
        self.domain = np.asarray(self.domain, dtype=float)
        if self.base_point is None:
            self.base_point = self.domain.mean(axis=1)
        self.base_point = np.asarray(self.base_point, dtype=float)
        extent = float(np.max(self.domain[:, 1] - self.domain[:, 0]))
        self.fd_step = 1e-4 * extent if np.isfinite(extent) else 1e-4

    @property
    def analytic(self) -> bool:
        return self.deriv_fn is not None

    def check_domain(self, p, margin: float = 0.0):
        p = np.asarray(p, dtype=float)
        lo = self.domain[:, 0] + margin
        hi = self.domain[:, 1] - margin
        bad = np.any((p < lo) | (p > hi), axis=-1)
        if np.any(bad):
            raise DomainError(f"point outside domain of chart {self.name!r}")

    def metric(self, p) -> np.ndarray:
        return self.metric_fn(np.asarray(p, dtype=float))

    def metric_deriv(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.deriv_fn is not None:
            return self.deriv_fn(p)
        return _fd_first(self.metric_fn, p, self.fd_step)

    def metric_deriv2(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.deriv2_fn is not None:
            return self.deriv2_fn(p)
        if self.deriv_fn is not None:
            return _fd_first(self.deriv_fn, p, self.fd_step)
        return _fd_first(lambda q: _fd_first(self.metric_fn, q, self.fd_step), p, self.fd_step)


def _fd_first(fn, p, h):
    """4th-order central difference; derivative index inserted after the batch axes."""
    out = []
    for r in range(DIM):
        e = np.zeros(DIM)
        e[r] = h
        d = (-fn(p + 2 * e) + 8 * fn(p + e) - 8 * fn(p - e) + fn(p - 2 * e)) / (12 * h)
        out.append(d)
    return np.stack(out, axis=p.ndim - 1)


def _component_evaluator(coords, exprs: dict, shape: tuple):
    """Vectorized evaluation of a sparse set of sympy component expressions."""
    keys = list(exprs)
    if keys:
        fn = sp.lambdify(coords, [exprs[k] for k in keys], modules="numpy", cse=True)
    else:
        fn = None

    def evaluate(p):
        p = np.asarray(p, dtype=float)
        batch = p.shape[:-1]
        out = np.zeros(batch + shape)
        if fn is None:
            return out
        vals = fn(*[p[..., i] for i in range(DIM)])
        for k, v in zip(keys, vals):
            out[(Ellipsis,) + k] = v
        return out

    return evaluate


def chart_from_sympy(name, coords: Sequence[sp.Symbol], g: sp.Matrix, domain, *,
                     params=None, base_point=None, normal_radius=0.25, flat=None) -> MetricChart:
    """Build a chart with exact derivatives from a symbolic metric.

    ``flat`` defaults to True exactly when the metric components are constant,
    which enables closed-form straight geodesics; pass False to force the
    numerical integrator.
    """
    g = sp.Matrix(g)
    if g.shape != (DIM, DIM) or g != g.T:
        raise SignatureError("metric must be a symmetric 4x4 matrix")
    G, D1, D2 = {}, {}, {}
    for m in range(DIM):
        for n in range(DIM):
            e = g[m, n]
            if e != 0:
                G[(m, n)] = e
            for r in range(DIM):
                d = sp.diff(e, coords[r])
                if d != 0:
                    D1[(r, m, n)] = d
                for s in range(DIM):
                    dd = sp.diff(d, coords[s]) if d != 0 else 0
                    if dd != 0:
                        D2[(r, s, m, n)] = dd
    return MetricChart(
        name=name,
        domain=domain,
        metric_fn=_component_evaluator(coords, G, (DIM, DIM)),
        deriv_fn=_component_evaluator(coords, D1, (DIM,) * 3),
        deriv2_fn=_component_evaluator(coords, D2, (DIM,) * 4),
        params=dict(params or {}),
        base_point=base_point,
        normal_radius=normal_radius,
        flat=(not D1) if flat is None else bool(flat),
    )


def chart_from_callable(name, metric_fn, domain, **kw) -> MetricChart:
    """User chart without analytic derivatives (finite-difference fallback)."""
    return MetricChart(name=name, domain=domain, metric_fn=metric_fn, **kw)


_T, _X, _Y, _Z = sp.symbols("t x y z", real=True)


def minkowski() -> MetricChart:
    g = sp.diag(1, -1, -1, -1)
    return chart_from_sympy("minkowski", (_T, _X, _Y, _Z), g, [[-10, 10]] * 4,
                            base_point=np.zeros(4), normal_radius=1.0)


def de_sitter(H: float = 1.0) -> MetricChart:
    """Flat slicing dt^2 - e^{2Ht} dx^2."""
    a2 = sp.exp(2 * sp.Float(H) * _T)
    g = sp.diag(1, -a2, -a2, -a2)
    return chart_from_sympy("desitter", (_T, _X, _Y, _Z), g,
                            [[-1.5 / H, 1.5 / H]] + [[-5 / H, 5 / H]] * 3,
                            params={"H": H}, base_point=np.zeros(4), normal_radius=0.25 / H)


DEFAULT_SCALE_FACTOR = "1 + 0.4*t + 0.3*t**2"


def flrw(scale_factor: str = DEFAULT_SCALE_FACTOR) -> MetricChart:
    """Spatially flat FLRW with a(t) given as an expression in t."""
    a = sp.sympify(scale_factor, locals={"t": _T})
    g = sp.diag(1, -a ** 2, -a ** 2, -a ** 2)
    return chart_from_sympy("flrw", (_T, _X, _Y, _Z), g, [[-0.5, 0.5]] + [[-5, 5]] * 3,
                            params={"a": scale_factor}, base_point=np.zeros(4),
                            normal_radius=0.2)


def schwarzschild(M: float = 1.0, r0: float = 10.0) -> MetricChart:
    """Exterior Schwarzschild in (t, r, theta, phi); base point at r = r0 M."""
    t, r, th, ph = sp.symbols("t r theta phi", real=True)
    Mf = sp.Float(M)
    f = 1 - 2 * Mf / r
    g = sp.diag(f, -1 / f, -r ** 2, -r ** 2 * sp.sin(th) ** 2)
    dom = [[-50 * M, 50 * M], [3 * M, 60 * M], [0.2, np.pi - 0.2], [-np.pi, np.pi]]
    return chart_from_sympy("schwarzschild", (t, r, th, ph), g, dom, params={"M": M},
                            base_point=np.array([0.0, r0 * M, np.pi / 2, 0.0]),
                            normal_radius=0.5 * M)


def ultrastatic(radius: float = 1.0) -> MetricChart:
    """Static product R x S^3 with sphere radius ``radius`` (non-Einstein)."""
    t, chi, th, ph = sp.symbols("t chi theta phi", real=True)
    a2 = sp.Float(radius) ** 2
    g = sp.diag(1, -a2, -a2 * sp.sin(chi) ** 2, -a2 * sp.sin(chi) ** 2 * sp.sin(th) ** 2)
    dom = [[-5.0, 5.0], [0.3, np.pi - 0.3], [0.3, np.pi - 0.3], [-np.pi, np.pi]]
    return chart_from_sympy("ultrastatic", (t, chi, th, ph), g, dom, params={"radius": radius},
                            base_point=np.array([0.0, np.pi / 2, np.pi / 2, 0.0]),
                            normal_radius=0.2 * radius)


CATALOGUE = {
    "minkowski": minkowski,
    "desitter": de_sitter,
    "flrw": flrw,
    "schwarzschild": schwarzschild,
    "ultrastatic": ultrastatic,
}


def make_chart(name: str, **params) -> MetricChart:
    try:
        builder = CATALOGUE[name]
    except KeyError:
        raise ValueError(f"unknown metric {name!r}; choose from {sorted(CATALOGUE)}") from None
    return builder(**params)


# ---------------------------------------------------------------------------
# connection and curvature (batched)
# ---------------------------------------------------------------------------


def _lowered_christoffel(dg):
    """G_{k m n} = (1/2)(d_m g_{kn} + d_n g_{km} - d_k g_{mn})."""
    a = np.swapaxes(dg, -3, -2)                     # [k, m, n] <- d_m g_{kn}
    return 0.5 * (a + np.swapaxes(a, -1, -2) - dg)


def christoffel_from(ginv, dg):
    """G^r_{mn} from g^{-1} and d_r g_{mn}."""
    low = _lowered_christoffel(dg)
    sh = low.shape
    return (ginv @ low.reshape(sh[:-3] + (DIM, DIM * DIM))).reshape(sh)


def christoffel(chart: MetricChart, p):
    g = chart.metric(p)
    return christoffel_from(np.linalg.inv(g), chart.metric_deriv(p))


def christoffel_and_deriv(chart: MetricChart, p):
    """(G^r_{mn}, d_l G^r_{mn}) with the derivative index first after the batch axes."""
    g = chart.metric(p)
    dg = chart.metric_deriv(p)
    ddg = chart.metric_deriv2(p)
    ginv = np.linalg.inv(g)
    low = _lowered_christoffel(dg)
    a = np.swapaxes(ddg, -3, -2)                    # [l, k, m, n] <- d_l d_m g_{kn}
    dlow = 0.5 * (a + np.swapaxes(a, -1, -2) - ddg)
    gi = ginv[..., None, :, :]
    dginv = -(gi @ dg @ gi)                         # [l, r, k]
    bsh = low.shape[:-3]
    flat = low.reshape(bsh + (1, DIM, DIM * DIM))
    Gam = (ginv @ low.reshape(bsh + (DIM, DIM * DIM))).reshape(low.shape)
    dGam = (dginv @ flat + gi @ dlow.reshape(bsh + (DIM, DIM, DIM * DIM))).reshape(ddg.shape)
    return Gam, dGam


@dataclass
class CurvatureBundle:
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    ricci_tf: np.ndarray
    metric: np.ndarray


def riemann_from(Gam, dGam):
    """R^r_{s m n} from G and dG (dG[l, r, m, n] = d_l G^r_{mn})."""
    t1 = np.einsum("...mrns->...rsmn", dGam)
    R = t1 - np.swapaxes(t1, -1, -2)
    q = np.einsum("...rml,...lns->...rsmn", Gam, Gam)
    return R + q - np.swapaxes(q, -1, -2)


def curvature_at(chart: MetricChart, p) -> CurvatureBundle:
    """Christoffel symbols, Riemann, Ricci, scalar and trace-free Ricci at p."""
    p = np.asarray(p, dtype=float)
    chart.check_domain(p)
    g = chart.metric(p)
    check_signature(g)
    Gam, dGam = christoffel_and_deriv(chart, p)
    Riem = riemann_from(Gam, dGam)
    Ric = np.einsum("...rsrn->...sn", Riem)
    ginv = np.linalg.inv(g)
    R = np.einsum("...mn,...mn->...", ginv, Ric)
    tf = Ric - (np.asarray(R)[..., None, None] / DIM) * g
    return CurvatureBundle(Gam, Riem, Ric, R, tf, g)


def check_signature(g):
    w = np.linalg.eigvalsh(g)
    npos = np.sum(w > 0, axis=-1)
    nneg = np.sum(w < 0, axis=-1)
    if np.any(npos != 1) or np.any(nneg != 3):
        raise SignatureError("metric does not have signature (+,-,-,-)")


def bianchi_residual(cb: CurvatureBundle) -> float:
    """First Bianchi identity R^r_{[smn]} = 0, max abs residual."""
    R = cb.riemann
    b = R + np.einsum("...rsmn->...rmns", R) + np.einsum("...rsmn->...rnsm", R)
    return float(np.max(np.abs(b)))


# ---------------------------------------------------------------------------
# tetrad and spin connection
# ---------------------------------------------------------------------------


@dataclass
class Tetrad:
    """frame[mu, a] = e_a^mu, coframe[a, mu] = e^a_mu, spin_conn[mu, a, b] = omega_mu^{ab}."""

    frame: np.ndarray
    coframe: np.ndarray
    spin_conn: np.ndarray
    point: np.ndarray | None = None


def frame_field(g):
    """Upper-triangular orthonormal frame by Gram-Schmidt from d_t.

    Returns F with F[..., mu, a] = e_a^mu and F^T g F = eta.
    """
    g = np.asarray(g, dtype=float)
    batch = g.shape[:-2]
    F = np.zeros(batch + (DIM, DIM))
    basis = np.broadcast_to(np.eye(DIM), batch + (DIM, DIM))
    for a in range(DIM):
        v = basis[..., :, a].copy()
        for b in range(a):
            eb = F[..., :, b]
            v = v - ETA[b, b] * np.einsum("...m,...mn,...n->...", eb, g, v)[..., None] * eb
        n2 = np.einsum("...m,...mn,...n->...", v, g, v)
        if np.any(n2 * ETA[a, a] <= 0):
            raise SignatureError("Gram-Schmidt orthonormalization failed")
        F[..., :, a] = v / np.sqrt(np.abs(n2))[..., None]
    return F


def frame_and_derivative(chart: MetricChart, p):
    """Frame F and its coordinate derivative dF[..., l, mu, a] = d_l e_a^mu (exact)."""
    g = chart.metric(p)
    dg = chart.metric_deriv(p)
    F = frame_field(g)
    Fb = F[..., None, :, :]
    S = np.swapaxes(Fb, -1, -2) @ dg @ Fb
    U = np.triu(S, 1) + 0.5 * np.diagonal(S, axis1=-2, axis2=-1)[..., None] * np.eye(DIM)
    X = np.diag(ETA)[:, None] * U
    dF = -(Fb @ X)
    return F, dF


def spin_connection_coeffs(F, dF, Gam):
    """omega_mu^{ab} from the frame, its derivative and the Christoffel symbols."""
    L = np.linalg.inv(F)[..., None, :, :]
    Fb = F[..., None, :, :]
    cov = dF + np.swapaxes(Gam, -3, -2) @ Fb       # [m, n, b]
    return (L @ cov) * np.diag(ETA)


def tetrad_at(chart: MetricChart, p) -> Tetrad:
    p = np.asarray(p, dtype=float)
    chart.check_domain(p)
    F, dF = frame_and_derivative(chart, p)
    Gam = christoffel(chart, p)
    omega = spin_connection_coeffs(F, dF, Gam)
    return Tetrad(F, np.linalg.inv(F), omega, p)


def spin_connection_matrices(omega, gam: np.ndarray = GAMMA):
    """Omega_mu = (1/4) omega_mu^{ab} gamma_a gamma_b, shape (..., 4, 4, 4)."""
    gl = np.einsum("ab,bij->aij", ETA, gam).astype(complex)
    gg = np.einsum("aij,bjk->abik", gl, gl).reshape(DIM * DIM, 16)
    sh = omega.shape[:-2]
    return 0.25 * (omega.reshape(sh + (DIM * DIM,)) @ gg).reshape(sh + (4, 4))


def spin_connection_at(chart: MetricChart, p, gam: np.ndarray = GAMMA):
    """Spinor connection matrices Omega_mu at p (batched)."""
    F, dF = frame_and_derivative(chart, p)
    Gam = christoffel(chart, p)
    return spin_connection_matrices(spin_connection_coeffs(F, dF, Gam), gam)


def gamma_at(tetrad: Tetrad, gam: np.ndarray = GAMMA) -> np.ndarray:
    """Curved Dirac matrices gamma^mu = e_a^mu gamma^a."""
    return np.einsum("...ma,aij->...mij", tetrad.frame, gam)


def clifford_residual(gmu: np.ndarray, g: np.ndarray) -> float:
    anti = np.einsum("...mij,...njk->...mnik", gmu, gmu)
    anti = anti + np.swapaxes(anti, -3, -4)
    ginv = np.linalg.inv(g)
    target = 2 * ginv[..., :, :, None, None] * ID4
    return float(np.max(np.abs(anti - target)))
