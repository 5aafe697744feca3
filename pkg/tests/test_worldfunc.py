import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfskit.geometry import DomainError, ETA
from cfskit.worldfunc import (GeodesicError, check_fundamental_identity, fd_gradients,
                              sigma_path_integral, solve_bvp,
                              solve_geodesic, world_function, world_function_batch)


def ds_sigma(x, y):
    """Closed form for de Sitter (H = 1) via the embedding inner product."""
    Z = np.cosh(y[0] - x[0]) - 0.5 * np.exp(x[0] + y[0]) * np.sum((y[1:] - x[1:]) ** 2)
    if Z >= 1:
        return 0.5 * np.arccosh(Z) ** 2
    return -0.5 * np.arccos(Z) ** 2


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.1, 0.1), min_size=4, max_size=4),
       st.lists(st.floats(-0.2, 0.2), min_size=4, max_size=4))
def test_desitter_closed_form(charts, xo, d):
    ch = charts("desitter")
    x = np.array(xo)
    y = x + np.array(d)
    if np.linalg.norm(d) < 1e-3:
        return
    w = world_function(solve_geodesic(ch, x, y))
    assert w.sigma == pytest.approx(ds_sigma(x, y), rel=1e-9, abs=1e-14)


def test_minkowski_exact(charts, rng):
    ch = charts("minkowski")
    X = rng.uniform(-1, 1, (20, 4))
    Y = X + rng.uniform(-0.5, 0.5, (20, 4))
    w = world_function_batch(solve_bvp(ch, X, Y))
    D = Y - X
    assert np.abs(w.sigma - 0.5 * np.einsum("ni,ij,nj->n", D, ETA, D)).max() < 1e-14
    assert np.abs(w.grad1 + D).max() < 1e-14 and np.abs(w.grad2 - D).max() < 1e-14


@pytest.mark.parametrize("name", ["desitter", "schwarzschild", "flrw", "ultrastatic"])
def test_identities_and_symmetry(charts, rng, name):
    ch = charts(name)
    R = ch.normal_radius
    X = ch.base_point + rng.uniform(-0.3, 0.3, (8, 4)) * R
    Y = X + rng.uniform(-0.6, 0.6, (8, 4)) * R
    w = world_function_batch(solve_bvp(ch, X, Y))
    w2 = world_function_batch(solve_bvp(ch, Y, X))
    assert check_fundamental_identity(w) < 1e-10
    assert np.abs(w.sigma - w2.sigma).max() < 1e-12 * max(1.0, np.abs(w.sigma).max())
    assert np.abs(w.grad1 - w2.grad2).max() < 1e-10 * max(1.0, np.abs(w.grad1).max())


def test_fd_gradients(charts):
    ch = charts("schwarzschild")
    x = ch.base_point
    y = x + np.array([0.1, 0.05, -0.02, 0.03])
    w = world_function_batch(solve_bvp(ch, x, y))
    g1, g2 = fd_gradients(ch, x, y, h=1e-4)
    assert np.abs(g1 - w.lowered1()[0]).max() < 1e-9
    assert np.abs(g2 - w.lowered2()[0]).max() < 1e-9


def test_path_integral_and_affine_speed(charts):
    g = solve_geodesic(charts("desitter"), [0, 0, 0, 0], [0.1, 0.05, 0, 0])
    assert g.speed_residual() < 1e-12
    assert abs(sigma_path_integral(g) - world_function(g).sigma) < 1e-12


def test_batch_independence(charts, rng):
    ch = charts("flrw")
    X = rng.uniform(-0.05, 0.05, (6, 4))
    Y = X + rng.uniform(-0.1, 0.1, (6, 4))
    full = solve_bvp(ch, X, Y).v0
    single = np.array([solve_bvp(ch, X[i], Y[i]).v0[0] for i in range(6)])
    assert np.array_equal(full, single)


def test_errors(charts):
    ch = charts("desitter")
    with pytest.raises(DomainError):
        solve_bvp(ch, np.zeros(4), np.array([0.0, 1.0, 0, 0]))
    with pytest.raises(GeodesicError):
        solve_bvp(ch, np.zeros(4), np.array([0.2, 0.2, 0, 0]), max_iter=1)
