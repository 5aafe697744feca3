"""Regularised light-cone expansion symbols T^(n).

    T^(n)(x, y) = -((-2 m^2)^nu / (16 pi^3)) K_nu(z) / z^nu,
    nu = d/2 - 1 - n = 1 - n,   z = m sqrt(-2 sigma_eps)  (principal branch).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

D = 4
NORM = 16.0 * np.pi ** 3


class BranchCutError(ValueError):
    """Argument on the negative real axis of the principal branch."""


class RegularizationError(ValueError):
    """sigma_eps vanished; the regularisation failed."""


def bessel_k(nu, z):
    """Modified Bessel function of the second kind K_nu(z), principal branch.

    Thin wrapper over ``scipy.special.kv`` (AMOS) with explicit rejection of
    the branch cut z in (-inf, 0].
    """
    z = np.asarray(z, dtype=complex)
    on_cut = (z.imag == 0) & (z.real <= 0)
    if np.any(on_cut):
        raise BranchCutError("K_nu evaluated on the branch cut (-inf, 0]")
    out = special.kv(nu, z)
    return out if out.ndim else complex(out)


def sigma_eps(sigma, f_value, eps, sign: int = -1):
    """Regularised interval sigma + sign * i eps f.

    The default ``sign = -1`` gives the literal sigma - i eps f.  The
    regularising-field hierarchy in :mod:`cfskit.regfield` uses ``sign = +1``
    together with f^(1) = +i/2, which reproduces f = y0 - x0 + i eps/2 in
    Minkowski space (see that module).
    """
    val = np.asarray(sigma) + sign * 1j * eps * np.asarray(f_value)
    if np.any(val == 0):
        raise RegularizationError("sigma_eps vanished")
    return val if np.ndim(val) else complex(val)


def nu_of(n: int) -> int:
    return D // 2 - 1 - n


@dataclass(frozen=True)
class SymbolValue:
    n: int
    value: complex
    nu: int
    degree: float

    def __mul__(self, other: "SymbolValue"):
        return ProductValue(self.value * other.value, self.degree + other.degree)


@dataclass(frozen=True)
class ProductValue:
    value: complex
    degree: float


def z_of(sig_eps, m):
    """z = m sqrt(-2 sigma_eps), principal square root."""
    w = -2.0 * np.asarray(sig_eps, dtype=complex)
    if np.any((w.imag == 0) & (w.real < 0)):
        raise BranchCutError("-2 sigma_eps on the negative real axis; the branch is ambiguous")
    if np.any(w == 0):
        raise RegularizationError("sigma_eps vanished")
    return m * np.sqrt(w)


def t_value(n: int, sig_eps, m: float):
    """Vectorised T^(n) values (complex array)."""
    if m <= 0:
        raise ValueError("mass must be positive")
    nu = nu_of(n)
    z = z_of(sig_eps, m)
    return -((-2.0 * m * m) ** nu / NORM) * special.kv(nu, z) / z ** nu


def t_symbol(n: int, sig_eps: complex, m: float) -> SymbolValue:
    val = t_value(n, sig_eps, m)
    nu = nu_of(n)
    return SymbolValue(n, complex(val), nu, float(nu))


def check_t_recurrence(n: int, sig_eps, m: float) -> float:
    """Residual of -(s/2) T^(n-1) = (n + 1 - d/2) T^(n) + m^2 T^(n+1), relative to the largest term."""
    lhs = -0.5 * np.asarray(sig_eps) * t_value(n - 1, sig_eps, m)
    a = (n + 1 - D / 2) * t_value(n, sig_eps, m)
    b = m * m * t_value(n + 1, sig_eps, m)
    rhs = a + b
    # scale by the largest term: the right side cancels for small |sigma_eps|
    scale = np.maximum.reduce([np.abs(lhs), np.abs(a), np.abs(b), np.full(np.shape(lhs), 1e-300)])
    return float(np.max(np.abs(lhs - rhs) / scale))


@dataclass
class SymbolContext:
    """Pair context for the differential identities (y held fixed, x varies).

    ``sigma_eps_at(X)`` returns sigma_eps(x', y) for base points X (N, 4);
    ``grad(x)`` the lowered gradient d_mu sigma_eps at x; ``ginv(x)`` and
    ``christoffel(x)`` describe the metric at x.
    """

    x: np.ndarray
    sigma_eps_at: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    ginv: Callable[[np.ndarray], np.ndarray]
    christoffel: Callable[[np.ndarray], np.ndarray]
    m: float


_ETA = np.diag([1.0, -1.0, -1.0, -1.0])


def minkowski_context(x, y, eps: float, m: float, sign: int = 1) -> SymbolContext:
    """Closed-form Minkowski context with f = y0 - x0 + sign * i eps/2."""
    y = np.asarray(y, float)

    def se(X):
        X = np.atleast_2d(X)
        v = y - X
        sig = 0.5 * np.einsum("nm,mk,nk->n", v, _ETA, v)
        f = v[:, 0] + sign * 0.5j * eps
        return sig + sign * 1j * eps * f

    def grad(X):
        v = y - np.asarray(X, float)
        g = -(_ETA @ v).astype(complex)
        g[0] += sign * 1j * eps * (-1.0)
        return g

    return SymbolContext(np.asarray(x, float), se, grad, lambda X: _ETA.copy(),
                         lambda X: np.zeros((D, D, D)), m)


def box_stencil(x, h, ginv):
    """Points for a second-order Laplacian: centre, +-h e_mu, and mixed corners where g^{mn} != 0."""
    x = np.asarray(x, float)
    pts = [x]
    for mu in range(D):
        e = np.zeros(D)
        e[mu] = h
        pts += [x + e, x - e]
    mixed = []
    for mu in range(D):
        for nu in range(mu + 1, D):
            if ginv[mu, nu] != 0.0:
                e = np.zeros(D)
                e[mu] = h
                f = np.zeros(D)
                f[nu] = h
                pts += [x + e + f, x + e - f, x - e + f, x - e - f]
                mixed.append((mu, nu))
    return np.array(pts), mixed


def box_from_stencil(F, h, ginv, gam, mixed):
    """g^{mn} (d_m d_n F - G^l_{mn} d_l F) from values on ``box_stencil`` points.

    F has the stencil axis first; trailing axes are carried through.
    """
    F = np.asarray(F)
    f0 = F[0]
    d1 = np.stack([(F[1 + 2 * m] - F[2 + 2 * m]) / (2 * h) for m in range(D)])
    out = np.zeros_like(f0)
    for m in range(D):
        d2 = (F[1 + 2 * m] - 2 * f0 + F[2 + 2 * m]) / (h * h)
        out = out + ginv[m, m] * d2
    k = 1 + 2 * D
    for (m, n) in mixed:
        fpp, fpm, fmp, fmm = F[k:k + 4]
        k += 4
        out = out + 2 * ginv[m, n] * (fpp - fpm - fmp + fmm) / (4 * h * h)
    contr = np.einsum("mn,lmn->l", ginv, gam)
    out = out - np.tensordot(contr, d1, axes=(0, 0))
    return out


def check_t_derivative(n: int, ctx: SymbolContext, h: float) -> float:
    """Relative residual of the central difference of T^(n) against -(d sigma_eps / 2) T^(n-1)."""
    P, _ = box_stencil(ctx.x, h, np.eye(D))
    T = t_value(n, ctx.sigma_eps_at(P), ctx.m)
    fd = np.array([(T[1 + 2 * mu] - T[2 + 2 * mu]) / (2 * h) for mu in range(D)])
    se0 = ctx.sigma_eps_at(ctx.x[None])[0]
    exact = -0.5 * ctx.grad(ctx.x) * t_value(n - 1, se0, ctx.m)
    return float(np.max(np.abs(fd - exact)) / np.max(np.abs(exact)))


def check_t_kleingordon(n: int, ctx: SymbolContext, h: float) -> float:
    """Residual of (-Box - m^2) T^(n) = (n + (Box sigma_eps - d)/2) T^(n-1), all by FD.

    Scaled by max(|rhs|, m^2 |T^(n)|, |T^(n-1)|) since the right side vanishes
    identically for n = 0 in flat space.
    """
    ginv = ctx.ginv(ctx.x)
    gam = ctx.christoffel(ctx.x)
    P, mixed = box_stencil(ctx.x, h, ginv)
    se = ctx.sigma_eps_at(P)
    T = t_value(n, se, ctx.m)
    lhs = -box_from_stencil(T, h, ginv, gam, mixed) - ctx.m ** 2 * T[0]
    box_se = box_from_stencil(se, h, ginv, gam, mixed)
    tm1 = t_value(n - 1, se[0], ctx.m)
    rhs = (n + (box_se - D) / 2) * tm1
    scale = max(abs(rhs), ctx.m ** 2 * abs(T[0]), abs(tm1))
    return float(abs(lhs - rhs) / scale)
