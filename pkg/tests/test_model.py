import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iontrap.errors import BasisMismatchError, GridError
from iontrap.model import (
    Basis,
    GridSpec,
    IonTrapParams,
    SpinorState,
    build_grid,
    momentum_norm_squared,
    norm_squared,
    normalized,
    overlap,
    refine_state,
)


def test_lamb_dicke_parameter(fig2a):
    # k / sqrt(2 m omega) = 0.2 / sqrt(80) ; the alternative printed form is 40x larger
    assert fig2a.eta == pytest.approx(0.022360679774997897, rel=1e-14)
    assert fig2a.eta_printed == pytest.approx(0.2 * math.sqrt(20.0), rel=1e-14)
    assert fig2a.sigma_coherent == pytest.approx(1 / math.sqrt(80.0), rel=1e-14)


@pytest.mark.parametrize("bad", [dict(m=0.0), dict(omega=-1.0), dict(lam=-0.1), dict(k=-1.0), dict(phi=math.nan)])
def test_params_reject_invalid(fig2a, bad):
    with pytest.raises(ValueError):
        fig2a.with_(**bad)


@pytest.mark.parametrize("n", [0, 7, 100, 1000])
def test_grid_requires_power_of_two(n):
    with pytest.raises(GridError):
        GridSpec(-1.0, 1.0, n)


def test_grid_axes():
    g = GridSpec(-9.0, 9.0, 2048)
    assert g.dx == 0.0087890625
    assert g.x[0] == -9.0 and g.x[-1] == pytest.approx(9.0 - g.dx)
    assert g.p_max == pytest.approx(math.pi / g.dx)
    assert g.p[1] == pytest.approx(2 * math.pi / g.length)
    assert g.p.min() == pytest.approx(-g.p_max)


def test_build_grid_default_policy(fig2a):
    g = build_grid(fig2a, 0.0, 9.0, 2048)
    assert (g.x_min, g.x_max, g.n_points) == (-9.0, 9.0, 2048)


def test_build_grid_rejects_unresolved_momentum(fig2a):
    with pytest.raises(GridError):
        build_grid(fig2a, 0.0, 9.0, 256)
    with pytest.raises(GridError):
        build_grid(fig2a, 0.0, -1.0, 2048)


def test_overlap_checks_basis_and_grid(small_grid):
    a = SpinorState(np.ones((2, 64)), small_grid, Basis.DIABATIC)
    b = SpinorState(np.ones((2, 64)), small_grid, Basis.BARE)
    with pytest.raises(BasisMismatchError):
        overlap(a, b)
    c = SpinorState(np.ones((2, 64)), GridSpec(-5.0, 5.0, 64), Basis.DIABATIC)
    with pytest.raises(GridError):
        overlap(a, c)
    with pytest.raises(GridError):
        SpinorState(np.ones((2, 32)), small_grid)


def _random_state(seed, grid):
    r = np.random.default_rng(seed)
    x = grid.x
    env = np.exp(-x**2 / 2)
    psi = (r.normal(size=(2, grid.n_points)) + 1j * r.normal(size=(2, grid.n_points))) * env
    return normalized(SpinorState(psi, grid))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_parseval(seed):
    s = _random_state(seed, GridSpec(-6.0, 6.0, 128))
    assert norm_squared(s) == pytest.approx(1.0, abs=1e-12)
    assert momentum_norm_squared(s) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_overlap_is_hermitian(seed):
    g = GridSpec(-6.0, 6.0, 64)
    a, b = _random_state(seed, g), _random_state(seed + 1, g)
    assert overlap(a, b) == pytest.approx(np.conj(overlap(b, a)), abs=1e-14)


def test_refine_state_interpolates_band_limited_functions():
    g = GridSpec(-8.0, 8.0, 128)
    f = np.exp(-g.x**2) * np.exp(2j * g.x)
    s = SpinorState(np.vstack([f, 0.5 * f]), g)
    fine = refine_state(s)
    exact = np.exp(-fine.grid.x**2) * np.exp(2j * fine.grid.x)
    assert np.max(np.abs(fine.psi[0] - exact)) < 1e-12
    assert np.allclose(fine.psi[:, ::2], s.psi, atol=1e-13)
    assert norm_squared(fine) == pytest.approx(norm_squared(s), rel=1e-12)
