import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from iontrap.bases import change_basis
from iontrap.errors import NumericalError, SupportError
from iontrap.initial import InitialStateSpec, gaussian_profile, make_fock
from iontrap.model import Basis, GridSpec, IonTrapParams, SpinorState, normalized
from iontrap.observables import (
    SERIES_COLUMNS,
    ObservableRecord,
    ObservableSeries,
    WignerGrid,
    autocorrelation,
    binary_entropy,
    classical_trajectory,
    entropy,
    gaussian_wigner,
    inversion,
    observe,
    observe_full,
    populations,
    reduced_density,
    total_energy,
    trajectory_period,
    wigner,
    wigner_lobes,
)
from iontrap.propagation import DiabaticHamiltonian

FIG3 = IonTrapParams(80000.0, 0.0005, 0.02514 / 5, 0.05, 0.2, 1.07249074)


def _two_packets(grid, a=1.5, sigma=0.3, c_plus=1.0, c_minus=1.0):
    up = c_plus * gaussian_profile(grid.x, -a, sigma)
    lo = c_minus * gaussian_profile(grid.x, a, sigma)
    return normalized(SpinorState(np.vstack([up, lo]).astype(complex), grid))


def _random_state(seed, grid, basis=Basis.DIABATIC):
    r = np.random.default_rng(seed)
    env = np.exp(-grid.x**2 / 2)
    psi = (r.normal(size=(2, grid.n_points)) + 1j * r.normal(size=(2, grid.n_points))) * env
    return normalized(SpinorState(psi, grid, basis))


# populations / inversion


def test_single_channel_populations():
    g = GridSpec(-6.0, 6.0, 256)
    f = gaussian_profile(g.x, 0.0, 0.5)
    s = SpinorState(np.vstack([f, 0 * f]).astype(complex), g)
    assert populations(s) == pytest.approx((1.0, 0.0, 0.5, 0.5), abs=1e-14)
    assert inversion(s) == pytest.approx(0.0, abs=1e-14)


def test_orthogonal_split_populations():
    s = _two_packets(GridSpec(-8.0, 8.0, 512), a=3.0, sigma=0.3)
    assert populations(s) == pytest.approx((0.5, 0.5, 0.5, 0.5), abs=1e-12)
    assert reduced_density(s) == pytest.approx(0.5 * np.eye(2), abs=1e-12)
    assert entropy(reduced_density(s)) == pytest.approx(math.log(2), abs=1e-12)


def test_bare_lower_level_has_inversion_minus_one():
    g = GridSpec(-6.0, 6.0, 256)
    f = gaussian_profile(g.x, 0.0, 0.5)
    s = SpinorState(np.vstack([0 * f, f]).astype(complex), g, Basis.BARE)
    assert inversion(s, FIG3) == pytest.approx(-1.0, abs=1e-14)
    p_plus, p_minus, p1, p2 = populations(s, FIG3)
    assert (p1, p2) == pytest.approx((1.0, 0.0), abs=1e-14)
    assert p_plus == pytest.approx(0.5, abs=1e-14) and p_minus == pytest.approx(0.5, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_inversion_identity_and_bound(seed):
    s = _random_state(seed, GridSpec(-6.0, 6.0, 64))
    p_plus, p_minus, p1, p2 = populations(s)
    w = inversion(s)
    assert w == pytest.approx(p2 - p1, abs=1e-12)
    assert abs(w) <= 2 * math.sqrt(p_plus * p_minus) + 1e-12
    assert p_plus + p_minus == pytest.approx(1.0, abs=1e-12)
    assert p1 + p2 == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(Basis)))
def test_reduced_density_is_a_density_matrix(seed, basis):
    rho = reduced_density(_random_state(seed, GridSpec(-6.0, 6.0, 64), basis))
    assert np.allclose(rho, rho.conj().T, atol=1e-14)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    assert 0.0 <= entropy(rho) <= math.log(2) + 1e-15


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_entropy_is_invariant_between_bare_and_diabatic(seed):
    s = _random_state(seed, GridSpec(-6.0, 6.0, 64))
    bare = change_basis(s, Basis.BARE, FIG3)
    assert entropy(reduced_density(bare)) == pytest.approx(entropy(reduced_density(s)), abs=1e-10)


# entropy


def test_entropy_examples():
    assert entropy(0.5 * np.eye(2)) == pytest.approx(0.6931471805599453, abs=1e-15)
    assert entropy(np.diag([1.0, 0.0])) == 0.0
    # -(0.6 ln 0.6 + 0.4 ln 0.4)
    assert binary_entropy(0.6) == pytest.approx(0.6730116670092565, rel=1e-14)
    assert entropy(0.5 * np.eye(2), base=2) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        entropy(np.zeros((2, 2)))


def test_entropy_clamps_slightly_unphysical_input():
    rho = np.array([[0.5, 0.5 + 1e-12], [0.5 + 1e-12, 0.5]])
    assert entropy(rho) == 0.0


@pytest.mark.parametrize("c", [1.0, -0.3, 0.2 + 0.7j, 1e-3j])
def test_proportional_components_are_unentangled(c):
    g = GridSpec(-6.0, 6.0, 256)
    f = gaussian_profile(g.x, 0.4, 0.6, p0=2.0)
    s = normalized(SpinorState(np.vstack([f, c * f]), g))
    assert entropy(reduced_density(s)) < 1e-10


# autocorrelation / energy


def test_autocorrelation_at_zero_is_one():
    s = _random_state(7, GridSpec(-6.0, 6.0, 64))
    assert autocorrelation(s, s) == pytest.approx(1.0, abs=1e-14)


def test_harmonic_ground_state_energy():
    p = FIG3.with_(lam=0.0, delta=0.0)
    s = make_fock(0, p, GridSpec(-1.5, 1.5, 128))
    assert total_energy(s, p) == pytest.approx(0.5 * p.omega, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_energy_decomposition_matches_expectation(seed):
    g = GridSpec(-6.0, 6.0, 64)
    s = _random_state(seed, g)
    ham = DiabaticHamiltonian(FIG3, g)
    assert total_energy(s, FIG3, ham) == pytest.approx(ham.expectation(s.psi).real, rel=1e-12)


# records and series


def test_observe_record(tmp_path):
    g = GridSpec(-6.0, 6.0, 64)
    s0 = _random_state(1, g)
    s = _random_state(2, g)
    rec, extra = observe_full(s, s0, FIG3)
    assert rec.norm2 == pytest.approx(1.0, abs=1e-12)
    assert rec.A == pytest.approx(autocorrelation(s, s0), abs=1e-15)
    assert extra["S_bare"] == pytest.approx(rec.S, abs=1e-10)
    assert math.isnan(observe(s, s0, FIG3, with_energy=False).E_tot)
    assert ObservableRecord.from_row(rec.row()) == rec


def test_series_round_trip(tmp_path):
    g = GridSpec(-6.0, 6.0, 64)
    s0 = _random_state(1, g)
    series = ObservableSeries(meta={"initial_channel": "-", "preset": "demo"})
    for i in range(5):
        s = _random_state(10 + i, g)
        series.append(observe(s.evolved(s.psi, 100.0 * i), s0, FIG3))
    path = tmp_path / "series.tsv"
    series.write(path)
    lines = path.read_text().splitlines()
    assert lines[2] == "\t".join(SERIES_COLUMNS)
    back = ObservableSeries.read(path)
    assert np.array_equal(back.data, series.data)
    assert back.initial_channel == "-"
    assert np.array_equal(back.population_of("-"), series.column("P_minus"))
    assert back.nearest(190.0).t == 200.0
    assert np.array_equal(back.column("A"), series.column("ReA") + 1j * series.column("ImA"))
    (tmp_path / "bad.tsv").write_text("a\tb\n1\t2\n")
    with pytest.raises(ValueError):
        ObservableSeries.read(tmp_path / "bad.tsv")


def test_series_from_array_append():
    data = np.arange(2 * len(SERIES_COLUMNS), dtype=float).reshape(2, -1)
    s = ObservableSeries.from_array(data)
    rec = ObservableRecord.from_row(data[0])
    s.append(rec)
    assert len(s) == 3 and np.array_equal(s.data[2], rec.row())
    assert s.data[2, SERIES_COLUMNS.index("absA")] == abs(complex(2.0, 3.0))


# Wigner distribution


def test_gaussian_wigner_matches_analytic_form():
    g = GridSpec(-4.0, 4.0, 256)
    sigma, x0, p0 = 0.3, 0.5, 4.0
    f = gaussian_profile(g.x, x0, sigma, p0=p0)
    s = SpinorState(np.vstack([f, 0 * f]).astype(complex), g)
    wg = wigner(s)
    ref = gaussian_wigner(wg.x_axis, wg.p_axis, x0, p0, sigma)
    assert np.max(np.abs(wg.values - ref)) < 1e-10
    assert wg.values.min() >= -1e-10
    assert wg.total() == pytest.approx(1.0, abs=1e-6)
    lobes = wigner_lobes(wg)
    assert len(lobes) == 1
    assert lobes[0] == pytest.approx((x0, p0), abs=0.02)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_wigner_marginal_equals_density(seed):
    g = GridSpec(-8.0, 8.0, 128)
    r = np.random.default_rng(seed)
    env = np.exp(-g.x**2)
    s = normalized(SpinorState((r.normal(size=(2, 128)) + 1j * r.normal(size=(2, 128))) * env, g))
    wg = wigner(s)
    dens = np.sum(np.abs(s.psi) ** 2, axis=0)
    assert np.max(np.abs(wg.x_marginal() - dens)) < 1e-6


def _cat_wigner_oracle(x, p, a, sigma):
    def psi(u):
        return math.exp(-((u - a) ** 2) / (4 * sigma**2)) + math.exp(-((u + a) ** 2) / (4 * sigma**2))

    def re(y):
        return math.cos(2 * p * y) * psi(x - y) * psi(x + y)

    val, _ = quad(re, -12, 12, points=[x - a, x + a, a - x, -a - x], limit=400, epsabs=1e-13)
    return val / math.pi


def test_cat_state_fringes_match_quadrature():
    g = GridSpec(-8.0, 8.0, 256)
    a, sigma = 2.0, 0.4
    raw = np.exp(-((g.x - a) ** 2) / (4 * sigma**2)) + np.exp(-((g.x + a) ** 2) / (4 * sigma**2))
    s = SpinorState(np.vstack([0 * raw, raw]).astype(complex), g)  # unnormalized to compare with the oracle
    p_axis = np.array([0.0, 0.4, 0.785398, 1.2, 2.0])
    wg = wigner(s, p_axis=p_axis, x_window=(-0.5, 0.5))
    for i, x in enumerate(wg.x_axis[::4]):
        for j, p in enumerate(p_axis):
            assert wg.values[4 * i, j] == pytest.approx(_cat_wigner_oracle(x, p, a, sigma), abs=1e-9)
    assert wg.values.min() < -0.1  # fringes at the origin reach negative values


def test_wigner_rejects_edge_support():
    g = GridSpec(-4.0, 4.0, 128)
    f = gaussian_profile(g.x, 3.6, 0.2)
    with pytest.raises(SupportError):
        wigner(SpinorState(np.vstack([f, 0 * f]).astype(complex), g))


def test_wigner_grid_round_trip(tmp_path):
    g = GridSpec(-4.0, 4.0, 64)
    f = gaussian_profile(g.x, 0.0, 0.5)
    wg = wigner(SpinorState(np.vstack([f, f]).astype(complex) / math.sqrt(2), g, time=42.0), x_stride=2)
    assert wg.x_axis.size == 32
    wg.write(tmp_path / "w.tsv")
    back = WignerGrid.read(tmp_path / "w.tsv")
    assert back.time == 42.0
    assert np.array_equal(back.x_axis, wg.x_axis) and np.array_equal(back.p_axis, wg.p_axis)
    assert np.allclose(back.values, wg.values, rtol=1e-9, atol=1e-300)
    # numpy scalar times (as produced by the runner) read back as plain floats
    WignerGrid(wg.x_axis, wg.p_axis, wg.values, np.float64(10995.5)).write(tmp_path / "v.tsv")
    assert WignerGrid.read(tmp_path / "v.tsv").time == 10995.5


# classical trajectories


def test_harmonic_trajectory_period():
    p = FIG3
    t0 = p.period
    traj = classical_trajectory(6.0, 0.0, "H", p, 3 * t0, t0 / 1e4)
    assert trajectory_period(traj) == pytest.approx(t0, rel=1e-6)


def test_leapfrog_energy_has_no_secular_drift():
    p = FIG3
    t0 = p.period
    traj = classical_trajectory(6.0, 0.0, "D-", p, 100 * t0, t0 / 1e4, record_every=10)
    e = traj.energy
    per = 1000  # records per period
    first, last = e[:per].mean(), e[-per:].mean()
    assert abs(last - first) < 1e-8 * abs(first)


def test_trajectory_guards():
    with pytest.raises(ValueError):
        classical_trajectory(1.0, 0.0, "X+", FIG3, 10.0, 1.0)
    traj = classical_trajectory(1.0, 0.0, "H", FIG3, 100.0, 1.0)
    with pytest.raises(NumericalError):
        trajectory_period(traj)


@pytest.mark.parametrize("kind", ["A+", "A-", "D+", "D-"])
def test_trajectory_energy_bounded_on_every_curve(kind):
    traj = classical_trajectory(6.0, 0.0, kind, FIG3, 3 * FIG3.period, FIG3.period / 2000)
    assert np.ptp(traj.energy) < 1e-5 * abs(traj.energy[0])
