import math

import numpy as np
import pytest
from scipy.special import eval_hermite, gammaln

from iontrap.errors import GridError, SupportError
from iontrap.initial import (
    InitialStateSpec,
    coherent_amplitude,
    coherent_wavefunction,
    fock_wavefunctions,
    make_fock,
    make_gaussian,
    make_initial,
)
from iontrap.model import GridSpec, norm_squared


def test_squeezed_packet_is_normalized_on_requested_channel(fig3, grid2048):
    s = make_gaussian(InitialStateSpec("gaussian", x0=6.0, sigma=0.047, channel="-"), fig3, grid2048)
    assert norm_squared(s) == pytest.approx(1.0, abs=1e-14)
    assert np.all(s.psi[0] == 0)
    assert s.meta["initial_channel"] == "-"
    rho = np.abs(s.psi[1]) ** 2
    mean = np.sum(grid2048.x * rho) * grid2048.dx
    var = np.sum((grid2048.x - mean) ** 2 * rho) * grid2048.dx
    assert mean == pytest.approx(6.0, abs=1e-12)
    assert math.sqrt(var) == pytest.approx(0.047, rel=1e-6)


def test_displacement_and_mean_phonon_number(fig3):
    alpha = coherent_amplitude(6.0, fig3)
    assert alpha.real == pytest.approx(26.832815729997478, rel=1e-14)
    assert abs(alpha) ** 2 == pytest.approx(720.0, rel=1e-14)


def test_coherent_width(fig3):
    spec = InitialStateSpec("coherent", x0=1.0)
    assert spec.width(fig3) == pytest.approx(0.11180339887498948, rel=1e-14)


def test_coherent_gaussian_matches_closed_form(fig3, grid2048):
    s = make_initial(InitialStateSpec("coherent", x0=6.0), fig3, grid2048)
    phi = coherent_wavefunction(coherent_amplitude(6.0, fig3), fig3, grid2048)
    ov = abs(np.vdot(phi, s.psi[0]) * grid2048.dx)
    assert ov > 1 - 1e-10


def test_coherent_state_fock_weights_are_poissonian(fig3):
    # oracle: |<n|alpha>|^2 = e^{-|a|^2} |a|^{2n} / n!
    g = GridSpec(-3.0, 3.0, 1024)
    x0 = 0.4
    alpha = coherent_amplitude(x0, fig3)
    phi = coherent_wavefunction(alpha, fig3, g)
    basis = fock_wavefunctions(40, fig3, g.x)
    w = np.abs(basis @ phi * g.dx) ** 2
    n = np.arange(41)
    poisson = np.exp(-abs(alpha) ** 2 + 2 * n * math.log(abs(alpha)) - gammaln(n + 1))
    assert np.allclose(w, poisson, atol=1e-12)


def test_gaussian_with_momentum(fig3):
    g = GridSpec(-4.0, 4.0, 512)
    s = make_gaussian(InitialStateSpec("gaussian", x0=0.0, sigma=0.2, p0=30.0), fig3, g)
    phi = np.fft.fft(s.psi[0])
    pw = np.abs(phi) ** 2
    assert np.sum(g.p * pw) / np.sum(pw) == pytest.approx(30.0, rel=1e-10)


def test_support_and_resolution_errors(fig3, grid2048):
    with pytest.raises(SupportError):
        make_gaussian(InitialStateSpec("gaussian", x0=8.9, sigma=0.047), fig3, grid2048)
    with pytest.raises(GridError):
        make_gaussian(InitialStateSpec("gaussian", x0=0.0, sigma=0.001), fig3, grid2048)
    with pytest.raises(ValueError):
        InitialStateSpec("gaussian", x0=0.0)
    with pytest.raises(ValueError):
        InitialStateSpec("fock", n=-1)
    with pytest.raises(ValueError):
        InitialStateSpec("gaussian", sigma=0.1, channel="x")


def test_fock_ground_state_is_coherent_width_gaussian(fig3, grid2048):
    s = make_fock(0, fig3, grid2048)
    g = (2 * math.pi * fig3.sigma_coherent**2) ** -0.25 * np.exp(-grid2048.x**2 / (4 * fig3.sigma_coherent**2))
    assert np.allclose(s.psi[0].real, g, atol=1e-12)


def test_fock_orthonormality(fig3, grid2048):
    basis = fock_wavefunctions(20, fig3, grid2048.x)
    gram = basis @ basis.T * grid2048.dx
    assert np.max(np.abs(gram - np.eye(21))) < 1e-10


def test_fock_against_hermite_polynomials(fig3):
    g = GridSpec(-1.0, 1.0, 512)
    mw = fig3.m * fig3.omega
    xi = math.sqrt(mw) * g.x
    rec = fock_wavefunctions(12, fig3, g.x)
    for n in (0, 1, 5, 12):
        ref = (mw / math.pi) ** 0.25 / math.sqrt(2.0**n * math.factorial(n)) * eval_hermite(n, xi) * np.exp(-xi**2 / 2)
        assert np.allclose(rec[n], ref, atol=1e-12)


@pytest.mark.parametrize("n", [0, 3, 50, 150])
def test_fock_position_variance(fig3, grid2048, n):
    s = make_fock(n, fig3, grid2048)
    x2 = np.sum(grid2048.x**2 * np.abs(s.psi[0]) ** 2) * grid2048.dx
    assert x2 == pytest.approx((n + 0.5) / (fig3.m * fig3.omega), abs=1e-8)


def test_fock_guards(fig3, grid2048):
    with pytest.raises(ValueError):
        make_fock(201, fig3, grid2048)
    with pytest.raises(SupportError):
        make_fock(150, fig3, GridSpec(-1.0, 1.0, 512))
