import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfskit.symbols import (BranchCutError, RegularizationError, bessel_k, check_t_derivative,
                            check_t_kleingordon, check_t_recurrence, minkowski_context,
                            sigma_eps, t_symbol, t_value, z_of)

# frozen mpmath values (30 digits)
K_FROZEN = [
    (1, 2.0, 0.139865881816522427284598807035),
    (0, 0.5 + 0.3j, 0.760679778665956539583589053838 - 0.434104569821073250354593195396j),
    (2, 1 - 2j, -0.483438976481457533886552242772 - 0.00354813051044889617251019755267j),
]
T_FROZEN = {
    -1: -0.0114338075962011703048338152627 - 0.0052687809330930515131301277762j,
    0: 0.00228923772086737765163133529908 + 0.000626503930192277941493329734285j,
    1: -0.000832653224837567514857429664469 - 0.000119000923270926389812320315538j,
}


@pytest.mark.parametrize("nu,z,ref", K_FROZEN)
def test_bessel_frozen(nu, z, ref):
    assert abs(bessel_k(nu, z) - ref) <= 1e-13 * abs(ref)


@settings(max_examples=60, deadline=None)
@given(nu=st.integers(-3, 3), re=st.floats(0.01, 20), im=st.floats(-20, 20))
def test_bessel_vs_mpmath(nu, re, im):
    z = complex(re, im)
    ref = complex(mp.besselk(nu, z))
    assert abs(bessel_k(nu, z) - ref) <= 1e-11 * abs(ref)


@pytest.mark.parametrize("z", [-1.0, 0.0, -3.0 + 0j])
def test_bessel_branch_cut(z):
    with pytest.raises(BranchCutError):
        bessel_k(1, z)


@pytest.mark.parametrize("n", [-1, 0, 1])
def test_t_frozen(n):
    v = t_value(n, -0.5 + 0.1j, 1.0)
    assert abs(v - T_FROZEN[n]) <= 1e-13 * abs(T_FROZEN[n])
    s = t_symbol(n, -0.5 + 0.1j, 1.0)
    assert s.nu == 1 - n and s.value == pytest.approx(v)


def test_sigma_eps_sign_and_zero():
    assert sigma_eps(1.0, 2.0, 0.1) == pytest.approx(1.0 - 0.2j)
    assert sigma_eps(1.0, 2.0, 0.1, sign=1) == pytest.approx(1.0 + 0.2j)
    with pytest.raises(RegularizationError):
        sigma_eps(0.0, 0.0, 0.1)
    with pytest.raises(BranchCutError):
        z_of(0.5, 1.0)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(-2, 3), re=st.floats(-5, 5), im=st.floats(1e-3, 5),
       m=st.floats(0.1, 3), flip=st.booleans())
def test_recurrence_property(n, re, im, m, flip):
    s = complex(re, -im if flip else im)
    assert check_t_recurrence(n, s, m) < 1e-12


@pytest.mark.parametrize("n", [0, 1])
def test_fd_identities_second_order(n):
    x = np.array([0.1, 0.2, -0.1, 0.3])
    ctx = minkowski_context(x, x + np.array([0.3, 0.5, 0.1, -0.2]), 0.05, 1.0)
    hs = np.array([1e-2, 5e-3, 2.5e-3])
    for fn in (check_t_derivative, check_t_kleingordon):
        r = [fn(n, ctx, h) for h in hs]
        assert abs(np.polyfit(np.log(hs), np.log(r), 1)[0] - 2) < 0.3
