"""Time scales, period detection, splitting, revival prediction, the JC reference and parameter scans."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .bases import PotentialMatrix, curve
from .errors import BudgetExhaustedError, NoPeakFoundError, NumericalError
from .model import GridSpec, IonTrapParams, SpinorState
from .propagation import DiabaticHamiltonian, SpectrumTable

DEFAULT_PROMINENCE = 0.2


@dataclass(frozen=True)
class TimeScales:
    T_cl: float
    T_rev: float
    T_sup: float
    n0: int
    E1: float = math.nan
    E2: float = math.nan
    E3: float = math.nan

    @property
    def has_revival(self) -> bool:
        return math.isfinite(self.T_rev)

    @property
    def has_superrevival(self) -> bool:
        return math.isfinite(self.T_sup)


def _period(derivative: float, factorial: int, scale: float, zero_tol: float) -> float:
    if abs(derivative) <= zero_tol * scale:
        return math.inf
    return 2.0 * math.pi / (abs(derivative) / factorial)


def timescales_from_spectrum(spec: SpectrumTable, n0: int, zero_tol: float = 1e-9) -> TimeScales:
    """T_cl, T_rev, T_sup from centered differences of E(n) at n0.

    Stencils of width 3, 5 and 7 are used for the first, second and third
    derivative.  A derivative smaller than ``zero_tol * |E'(n0)|`` is treated
    as zero and the corresponding time is reported as infinite.
    """
    e = spec.energies
    if n0 < 3 or n0 + 3 > spec.n_max:
        raise ValueError(f"spectrum must cover n0 +- 3 (n0={n0}, n_max={spec.n_max})")
    d1 = 0.5 * (e[n0 + 1] - e[n0 - 1])
    d2 = (-e[n0 + 2] + 16 * e[n0 + 1] - 30 * e[n0] + 16 * e[n0 - 1] - e[n0 - 2]) / 12.0
    d3 = (-e[n0 + 3] + 8 * e[n0 + 2] - 13 * e[n0 + 1] + 13 * e[n0 - 1] - 8 * e[n0 - 2] + e[n0 - 3]) / 8.0
    if d1 == 0:
        raise NumericalError("vanishing level spacing at n0")
    scale = abs(d1)
    return TimeScales(
        T_cl=2.0 * math.pi / abs(d1),
        T_rev=_period(d2, 2, scale, zero_tol),
        T_sup=_period(d3, 6, scale, zero_tol),
        n0=int(n0),
        E1=float(d1),
        E2=float(d2),
        E3=float(d3),
    )


def channel_energy(profile: np.ndarray, curve_values: np.ndarray, params: IonTrapParams, grid: GridSpec) -> float:
    """<phi| p^2/2m + V |phi> / <phi|phi> for a single-channel profile."""
    phi = np.asarray(profile, dtype=complex)
    kin = np.fft.ifft(grid.p**2 / (2.0 * params.m) * np.fft.fft(phi))
    num = np.vdot(phi, kin + curve_values * phi).real
    return float(num / np.vdot(phi, phi).real)


def mean_index(spec: SpectrumTable, energy: float) -> int:
    """Nearest integer to the fractional level index of ``energy``."""
    if not spec.energies[0] <= energy <= spec.energies[-1]:
        raise ValueError("energy outside the tabulated spectrum")
    return int(round(spec.fractional_index(energy)))


def _parabolic_vertex(t, y, i):
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = y0 - 2 * y1 + y2
    if denom == 0:
        return float(t[i]), float(y1)
    shift = 0.5 * (y0 - y2) / denom
    h = t[i + 1] - t[i]
    return float(t[i] + shift * h), float(y1 - 0.25 * (y0 - y2) * shift)


def detect_classical_period(series, prominence: float = DEFAULT_PROMINENCE) -> float:
    """Time of the first prominent maximum of |A(t)| after t = 0, parabolically refined."""
    t = series.column("t")
    a = series.column("absA")
    if t.size < 5:
        raise NoPeakFoundError("series too short for period detection")
    peaks, _ = find_peaks(a, prominence=prominence)
    peaks = peaks[t[peaks] > t[0]]
    if peaks.size == 0:
        raise NoPeakFoundError(f"no |A| maximum with prominence >= {prominence}")
    return _parabolic_vertex(t, a, int(peaks[0]))[0]


def splitting_fraction(series, T_cl: float, channel: str | None = None) -> float:
    """P_sp = 1 - P_i(T_cl/2) for the initially populated diabatic channel ``i``."""
    t = series.column("t")
    channel = channel or series.initial_channel
    target = 0.5 * T_cl
    i = int(np.argmin(np.abs(t - target)))
    dt = np.median(np.diff(t)) if t.size > 1 else math.inf
    if abs(t[i] - target) > dt * (1 + 1e-9):
        raise ValueError(f"no record within one sampling interval of T_cl/2 = {target:g}")
    return float(1.0 - series.population_of(channel)[i])


def predicted_revival(P_sp: float, T_rev_A: float, T_rev_D: float) -> float:
    """Harmonic-mean combination 1/T = P_sp/T_A + (1 - P_sp)/T_D."""
    if not (T_rev_A > 0 and T_rev_D > 0):
        raise ValueError("revival times must be positive")
    if not 0 <= P_sp <= 1:
        raise ValueError("P_sp must lie in [0, 1]")
    return 1.0 / (P_sp / T_rev_A + (1.0 - P_sp) / T_rev_D)


def _convergents(x: float, max_terms: int = 64):
    h0, h1, k0, k1 = 0, 1, 1, 0
    for _ in range(max_terms):
        a = math.floor(x)
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        yield h1, k1
        frac = x - a
        if frac < 1e-15:
            return
        x = 1.0 / frac


def combined_period(omega1: float, omega2: float, tol: float = 1e-9, max_denominator: int = 10**6):
    """Smallest (k, l) with |k omega2 - l omega1| <= tol * omega1; returns (2 pi k / omega1, k, l).

    The smallest such l is always a continued-fraction convergent denominator of omega1/omega2.
    """
    if omega1 <= 0 or omega2 <= 0:
        raise ValueError("frequencies must be positive")
    for k, l in _convergents(omega1 / omega2):
        if l > max_denominator:
            break
        if k >= 1 and abs(k * omega2 - l * omega1) <= tol * omega1:
            return 2.0 * math.pi * k / omega1, int(k), int(l)
    raise NumericalError(f"no rational approximant with denominator <= {max_denominator}")


def rabi_frequency(n, Delta, omega, g):
    return np.sqrt(0.25 * (Delta - omega) ** 2 + g * g * np.asarray(n, dtype=float))


def jc_reference(n, Delta: float, omega: float, g: float):
    """(E_plus(n), E_minus(n), T_rev_JC(n)) of the resonant-form Jaynes-Cummings model."""
    if g < 0:
        raise ValueError("g must be non-negative")
    if np.any(np.asarray(n) < 0):
        raise ValueError("n must be non-negative")
    big = rabi_frequency(n, Delta, omega, g)
    base = omega * np.asarray(n, dtype=float)
    gap = g * g / (rabi_frequency(np.asarray(n) + 1, Delta, omega, g) + big)  # Omega_{n+1} - Omega_n
    with np.errstate(divide="ignore"):
        t_rev = np.where(gap > 0, np.pi / np.where(gap > 0, gap, 1.0), np.inf)
    if np.ndim(big) == 0:
        return float(base + big), float(base - big), float(t_rev)
    return base + big, base - big, t_rev


def jc_dense_hamiltonian(n_fock: int, Delta: float, omega: float, g: float) -> np.ndarray:
    """omega a^dag a + (Delta/2) sigma_z + g (a^dag sigma^- + sigma^+ a), basis |2,n>, |1,n>."""
    dim = 2 * n_fock
    h = np.zeros((dim, dim))
    up = lambda n: 2 * n          # noqa: E731  |2, n>
    dn = lambda n: 2 * n + 1      # noqa: E731  |1, n>
    for n in range(n_fock):
        h[up(n), up(n)] = omega * n + 0.5 * Delta
        h[dn(n), dn(n)] = omega * n - 0.5 * Delta
        if n + 1 < n_fock:
            # sigma^+ a : |1, n+1> -> sqrt(n+1) |2, n>
            h[up(n), dn(n + 1)] = h[dn(n + 1), up(n)] = g * math.sqrt(n + 1)
    return h


def jc_dense_check(n_fock: int, Delta: float, omega: float, g: float) -> float:
    """Max deviation between dense eigenvalues and the closed form, over complete doublets.

    The dense spectrum equals E_JC(n) - omega/2 for n = 1..n_fock-1, plus the
    ground level -Delta/2; the lone state |2, n_fock-1> is excluded.
    """
    ev = np.linalg.eigvalsh(jc_dense_hamiltonian(n_fock, Delta, omega, g))
    n = np.arange(1, n_fock)
    ep, em = jc_reference(n, Delta, omega, g)[:2]
    expected = np.concatenate([[-0.5 * Delta], ep - 0.5 * omega, em - 0.5 * omega])
    lone = omega * (n_fock - 1) + 0.5 * Delta
    got = list(ev)
    got.pop(int(np.argmin(np.abs(ev - lone))))
    return float(np.max(np.abs(np.sort(got) - np.sort(expected))))


def ld_expanded_model(params: IonTrapParams, grid_or_x) -> PotentialMatrix:
    """Diabatic interaction block with cos(kx+phi) linearized: lam (cos phi - k x sin phi)."""
    x = grid_or_x.x if isinstance(grid_or_x, GridSpec) else np.asarray(grid_or_x, dtype=float)
    v = params.lam * (math.cos(params.phi) - params.k * x * math.sin(params.phi))
    return PotentialMatrix(v, -v, np.full(x.shape, 0.5 * params.delta, dtype=complex))


def ld_deviation(params: IonTrapParams, x) -> float:
    """max |linearized - full| / lam over the sample points."""
    x = np.asarray(x, dtype=float)
    full = params.lam * np.cos(params.k * x + params.phi)
    lin = ld_expanded_model(params, x).v11
    return float(np.max(np.abs(lin - full)) / params.lam)


def autocorrelation_envelope(acorr, T_cl: float, t_end: float, stride: int = 50, samples: int = 256):
    """Peak |A| within one classical period around every ``stride``-th multiple of T_cl.

    ``acorr`` maps an array of times to complex A(t).  Returns (times, heights)
    with the parabolically refined peak position in each window.
    """
    centers = np.arange(0, int(t_end / T_cl) + 1, stride) * T_cl
    times, heights = np.empty(centers.size), np.empty(centers.size)
    offs = (np.arange(samples) / samples - 0.5) * T_cl
    for i, c in enumerate(centers):
        t = c + offs
        a = np.abs(acorr(t))
        j = int(np.argmax(a))
        if 0 < j < samples - 1:
            times[i], heights[i] = _parabolic_vertex(t, a, j)
        else:
            times[i], heights[i] = t[j], a[j]
    return times, heights


@dataclass(frozen=True)
class RevivalReport:
    collapse_time: float
    peaks: tuple  # ((time, height), ...) after the collapse, in time order
    dominant_time: float
    dominant_height: float

    @property
    def measured_T_rev(self) -> float:
        """Full revivals recur at multiples of T_rev/2, so the first dominant cluster sits at T_rev/2."""
        return 2.0 * self.dominant_time


def revival_analysis(times, heights, collapse_level: float = 0.3, prominence: float = 0.1) -> RevivalReport:
    """Collapse time and revival clusters of an |A| envelope."""
    times = np.asarray(times)
    heights = np.asarray(heights)
    below = np.nonzero(heights < collapse_level)[0]
    if below.size == 0:
        raise NoPeakFoundError("the envelope never collapses below the threshold")
    start = int(below[0])
    padded = np.concatenate([[0.0], heights[start:], [0.0]])
    idx, _ = find_peaks(padded, prominence=prominence)
    idx = idx - 1 + start
    idx = idx[heights[idx] > collapse_level]
    if idx.size == 0:
        raise NoPeakFoundError("no revival cluster after the collapse")
    best = int(idx[np.argmax(heights[idx])])
    peaks = tuple((float(times[i]), float(heights[i])) for i in idx)
    return RevivalReport(float(times[start]), peaks, float(times[best]), float(heights[best]))


@dataclass(frozen=True)
class ScanResult:
    point: tuple  # ((name, value), ...)
    P_sp: float
    T_cl_A: float
    T_cl_D: float
    mismatch: float
    score: float

    def as_row(self):
        return [v for _, v in self.point] + [self.P_sp, self.T_cl_A, self.T_cl_D, self.mismatch, self.score]


SCAN_KEYS = ("delta", "lam", "k", "phi", "omega", "m")


def _scan_point(args):
    from .initial import InitialStateSpec, make_initial
    from .model import build_grid
    from .observables import classical_trajectory, trajectory_period
    from .propagation import ChebyshevPropagator, PropagatorConfig

    params, init, n_points, extent = args
    x0 = init.x0
    period_dt = params.period / 1e4
    t_a = trajectory_period(classical_trajectory(x0, 0.0, "A+", params, 1.3 * params.period, period_dt))
    t_d = trajectory_period(classical_trajectory(x0, 0.0, "D-", params, 1.3 * params.period, period_dt))
    t_cl = 0.5 * (t_a + t_d)
    grid = build_grid(params, 0.0, extent, n_points)
    s0 = make_initial(init, params, grid)
    ham = DiabaticHamiltonian(params, grid)
    prop = ChebyshevPropagator(ham, PropagatorConfig(dt_report=t_cl / 2, t_end=t_cl))
    dx = grid.dx
    psi = prop.step(s0.psi, 0.5 * t_cl)
    p_init = float(np.sum(np.abs(psi[init.channel_index]) ** 2) * dx)
    # |A| near T_cl: step to 0.9 T_cl and scan a window of 0.2 T_cl
    psi = prop.step(psi, 0.4 * t_cl)
    best = 0.0
    n_win = 40
    for _ in range(n_win + 1):
        best = max(best, abs(np.vdot(psi, s0.psi) * dx))
        psi = prop.step(psi, 0.2 * t_cl / n_win)
    return 1.0 - p_init, t_a, t_d, best


def bistability_scan(base: IonTrapParams, vary: dict, target_P_sp: float, budget: int, initial=None,
                     n_points: int = 2048, extent: float = 9.0, threads: int = 1):
    """Evaluate every point of the Cartesian grid ``vary`` (name -> values) in deterministic order.

    Each point runs one classical period from ``initial`` (default: the packet
    at x0 = 6 on the '-' diabatic channel with sigma = 0.034).  Results are
    sorted by |P_sp - target| and then by decreasing |A(T_cl)|.
    """
    from .initial import InitialStateSpec

    for name in vary:
        if name not in SCAN_KEYS:
            raise ValueError(f"cannot scan {name!r}; choose from {SCAN_KEYS}")
    names = list(vary)
    values = [list(map(float, vary[n])) for n in names]
    for name, vals in zip(names, values):
        if not vals or not all(math.isfinite(v) for v in vals):
            raise ValueError(f"range for {name!r} must be finite and non-empty")
    points = list(itertools.product(*values))
    if len(points) > budget:
        raise BudgetExhaustedError(f"scan needs {len(points)} propagations, budget is {budget}")
    init = initial or InitialStateSpec("gaussian", x0=6.0, sigma=0.0340999659, channel="-")
    jobs = [(base.with_(**dict(zip(names, p))), init, n_points, extent) for p in points]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(_scan_point, jobs))
    else:
        raw = [_scan_point(j) for j in jobs]
    results = []
    for p, (p_sp, t_a, t_d, score) in zip(points, raw):
        results.append(ScanResult(tuple(zip(names, p)), min(max(p_sp, 0.0), 1.0), t_a, t_d,
                                  abs(t_a - t_d) / (0.5 * (t_a + t_d)), score))
    results.sort(key=lambda r: (abs(r.P_sp - target_P_sp), -r.score))
    return results


def write_scan(path, results):
    if not results:
        open(path, "w").close()
        return
    names = [n for n, _ in results[0].point]
    with open(path, "w") as fh:
        fh.write("\t".join(names + ["P_sp", "T_cl_A+", "T_cl_D-", "mismatch", "score"]) + "\n")
        for r in results:
            fh.write("\t".join(repr(float(v)) for v in r.as_row()) + "\n")


def single_channel_timescales(curve_name: str, params: IonTrapParams, grid: GridSpec, state: SpinorState,
                              n0: int | None = None, channel_index: int | None = None):
    """Spectrum of one curve plus time scales at n0 (default: the packet's mean-energy index)."""
    from .propagation import single_channel_spectrum

    v = curve(curve_name, params, grid)
    ch = state.meta.get("initial_channel", "+") if channel_index is None else channel_index
    idx = ch if isinstance(ch, int) else (0 if ch == "+" else 1)
    e_mean = channel_energy(state.psi[idx], v, params, grid)
    e_guess = max(n0 or 0, 0)
    n_hi = max(e_guess, int(1.25 * (e_mean - v.min()) / params.omega)) + 8
    n_hi = min(n_hi, grid.n_points - 1)
    spec = single_channel_spectrum(v, params, grid, n_hi, curve_name)
    if n0 is None:
        n0 = mean_index(spec, e_mean)
    return spec, timescales_from_spectrum(spec, n0), e_mean
