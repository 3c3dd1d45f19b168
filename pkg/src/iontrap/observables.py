"""Populations, inversion, autocorrelation, entanglement entropy, energy and the Wigner distribution."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .bases import change_basis, curve
from .errors import NumericalError, SupportError
from .model import Basis, IonTrapParams, SpinorState, overlap, refine_state
from .propagation import DiabaticHamiltonian

CROSS_CHECK_TOL = 1e-10


def _gram(s: SpinorState) -> np.ndarray:
    """G[i, j] = <psi_i|psi_j> over the spatial coordinate."""
    return (s.psi.conj() @ s.psi.T) * s.grid.dx


def _as_diabatic(s: SpinorState, params: IonTrapParams | None) -> SpinorState:
    if s.basis is Basis.DIABATIC:
        return s
    if s.basis is Basis.ADIABATIC and params is None:
        raise ValueError("params are required to rotate an adiabatic state")
    return change_basis(s, Basis.DIABATIC, params)


def populations(s: SpinorState, params: IonTrapParams | None = None):
    """(P_plus, P_minus, P1, P2): diabatic channel norms and bare-level norms."""
    d = _as_diabatic(s, params)
    g = _gram(d)
    bare = change_basis(d, Basis.BARE, params)
    gb = _gram(bare)
    return float(g[0, 0].real), float(g[1, 1].real), float(gb[1, 1].real), float(gb[0, 0].real)


def inversion(s: SpinorState, params: IonTrapParams | None = None) -> float:
    """W = <sigma_z> = P2 - P1, cross-checked against 2 Re<psi_+|psi_->."""
    d = _as_diabatic(s, params)
    _, _, p1, p2 = populations(d)
    coherence = 2.0 * float(_gram(d)[0, 1].real)
    if abs((p2 - p1) - coherence) > CROSS_CHECK_TOL:
        raise NumericalError(f"inversion cross-check failed: {p2 - p1!r} vs {coherence!r}")
    return p2 - p1


def autocorrelation(s_t: SpinorState, s_0: SpinorState) -> complex:
    return overlap(s_t, s_0)


def reduced_density(s: SpinorState) -> np.ndarray:
    """rho[i, j] = <psi_j|psi_i> in the state's own basis."""
    return _gram(s).T.copy()


def entropy(rho, base: float = math.e) -> float:
    """Von Neumann entropy of a 2x2 density matrix (natural log by default)."""
    rho = np.asarray(rho, dtype=complex)
    tr = float(rho[0, 0].real + rho[1, 1].real)
    if tr <= 0:
        raise ValueError("density matrix must have positive trace")
    a, d, b = rho[0, 0].real / tr, rho[1, 1].real / tr, rho[0, 1] / tr
    r = math.sqrt(0.25 * (a - d) ** 2 + abs(b) ** 2)
    out = 0.0
    for p in (0.5 + r, 0.5 - r):
        p = min(max(p, 0.0), 1.0)
        if p > 0.0:
            out -= p * math.log(p)
    return out / math.log(base)


def binary_entropy(p: float, base: float = math.e) -> float:
    return entropy(np.diag([p, 1.0 - p]), base)


def total_energy(s: SpinorState, params: IonTrapParams, ham: DiabaticHamiltonian | None = None) -> float:
    """Diabatic-diagonal energy plus (delta/2) W, cross-checked against <s|H|s>."""
    d = _as_diabatic(s, params)
    ham = ham or DiabaticHamiltonian(params, d.grid)
    psi = d.psi
    kin = np.fft.ifft(ham.kinetic * np.fft.fft(psi, axis=1), axis=1)
    dx = d.grid.dx
    diag_part = (np.vdot(psi[0], kin[0] + ham.v11 * psi[0]) + np.vdot(psi[1], kin[1] + ham.v22 * psi[1])) * dx
    w = 2.0 * float(_gram(d)[0, 1].real)
    e_tot = float(diag_part.real) + 0.5 * params.delta * w
    full = ham.expectation(psi).real
    if abs(e_tot - full) > CROSS_CHECK_TOL * max(1.0, abs(full)):
        raise NumericalError(f"energy decomposition disagrees with <H>: {e_tot!r} vs {full!r}")
    return e_tot


SERIES_COLUMNS = ("t", "W", "ReA", "ImA", "absA", "S", "P_plus", "P_minus", "P1", "P2", "E_tot", "norm2")


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    W: float
    A: complex
    S: float
    P_plus: float
    P_minus: float
    P1: float
    P2: float
    E_tot: float
    norm2: float

    def row(self):
        return (self.t, self.W, self.A.real, self.A.imag, abs(self.A), self.S, self.P_plus, self.P_minus,
                self.P1, self.P2, self.E_tot, self.norm2)

    @classmethod
    def from_row(cls, v) -> ObservableRecord:
        v = [float(x) for x in v]
        return cls(v[0], v[1], complex(v[2], v[3]), *v[5:])


def observe_full(s: SpinorState, s0: SpinorState, params: IonTrapParams,
                 ham: DiabaticHamiltonian | None = None, with_energy: bool = True):
    """Observable record plus the bare-basis entropy used for the basis-invariance check."""
    d = _as_diabatic(s, params)
    g = _gram(d)
    gb = _gram(change_basis(d, Basis.BARE, params))
    p1, p2 = float(gb[1, 1].real), float(gb[0, 0].real)
    w = 2.0 * float(g[0, 1].real)
    if abs((p2 - p1) - w) > CROSS_CHECK_TOL:
        raise NumericalError(f"inversion cross-check failed: {p2 - p1!r} vs {w!r}")
    rec = ObservableRecord(
        t=d.time,
        W=w,
        A=autocorrelation(d, _as_diabatic(s0, params)),
        S=entropy(g.T),
        P_plus=float(g[0, 0].real),
        P_minus=float(g[1, 1].real),
        P1=p1,
        P2=p2,
        E_tot=total_energy(d, params, ham) if with_energy else float("nan"),
        norm2=float((g[0, 0] + g[1, 1]).real),
    )
    return rec, {"S_bare": entropy(gb.T)}


def observe(s: SpinorState, s0: SpinorState, params: IonTrapParams,
            ham: DiabaticHamiltonian | None = None, with_energy: bool = True) -> ObservableRecord:
    return observe_full(s, s0, params, ham, with_energy)[0]


class ObservableSeries:
    """Time-ordered observables stored as rows of the fixed column layout ``SERIES_COLUMNS``."""

    def __init__(self, records=None, meta=None):
        self._rows = [r.row() for r in (records or [])]
        self._array = None
        self.meta = dict(meta or {})

    @classmethod
    def from_array(cls, data, meta=None) -> ObservableSeries:
        out = cls(meta=meta)
        out._array = np.asarray(data, dtype=float).reshape(-1, len(SERIES_COLUMNS))
        out._rows = None
        return out

    @property
    def data(self) -> np.ndarray:
        if self._array is None:
            self._array = np.array(self._rows, dtype=float).reshape(-1, len(SERIES_COLUMNS))
        return self._array

    def append(self, rec: ObservableRecord):
        if self._rows is None:
            self._rows = [tuple(r) for r in self._array]
        self._rows.append(rec.row())
        self._array = None

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, i) -> ObservableRecord:
        return ObservableRecord.from_row(self.data[i])

    def __iter__(self):
        return (ObservableRecord.from_row(r) for r in self.data)

    def column(self, name: str) -> np.ndarray:
        if name == "A":
            return self.data[:, 2] + 1j * self.data[:, 3]
        return self.data[:, SERIES_COLUMNS.index(name)]

    @property
    def t(self):
        return self.column("t")

    @property
    def initial_channel(self) -> str:
        return self.meta.get("initial_channel", "+")

    def population_of(self, channel: str) -> np.ndarray:
        return self.column("P_plus" if channel == "+" else "P_minus")

    def nearest(self, t: float) -> ObservableRecord:
        return self[int(np.argmin(np.abs(self.t - t)))]

    def write(self, path):
        with open(path, "w") as fh:
            for key in sorted(self.meta):
                fh.write(f"# {key} = {self.meta[key]}\n")
            fh.write("\t".join(SERIES_COLUMNS) + "\n")
            for row in self.data:
                fh.write("\t".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def read(cls, path) -> ObservableSeries:
        meta = {}
        skip = 0
        with open(path) as fh:
            for line in fh:
                skip += 1
                if line.startswith("#"):
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = value.strip()
                    continue
                header = tuple(line.rstrip("\n").split("\t"))
                if header != SERIES_COLUMNS:
                    raise ValueError(f"{path}: unexpected series header {header}")
                break
        data = np.loadtxt(path, delimiter="\t", skiprows=skip, ndmin=2)
        return cls.from_array(data, meta)


@dataclass(frozen=True)
class WignerGrid:
    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray  # shape (len(x_axis), len(p_axis))
    time: float = 0.0

    def x_marginal(self) -> np.ndarray:
        return np.trapz(self.values, self.p_axis, axis=1) if not _uniform(self.p_axis) else \
            self.values.sum(axis=1) * (self.p_axis[1] - self.p_axis[0])

    def total(self) -> float:
        dx = self.x_axis[1] - self.x_axis[0]
        return float(self.x_marginal().sum() * dx)

    def write(self, path):
        np.savetxt(path, self.values, delimiter="\t", fmt="%.10e")
        with open(f"{path}.axes", "w") as fh:
            fh.write(f"# time = {float(self.time)!r}\n")
            fh.write("x_axis\t" + "\t".join(repr(float(v)) for v in self.x_axis) + "\n")
            fh.write("p_axis\t" + "\t".join(repr(float(v)) for v in self.p_axis) + "\n")

    @classmethod
    def read(cls, path) -> WignerGrid:
        values = np.loadtxt(path, delimiter="\t", ndmin=2)
        axes, time = {}, 0.0
        with open(f"{path}.axes") as fh:
            for line in fh:
                if line.startswith("# time"):
                    time = float(line.split("=")[1])
                    continue
                name, *vals = line.rstrip("\n").split("\t")
                axes[name] = np.array([float(v) for v in vals])
        return cls(axes["x_axis"], axes["p_axis"], values, time)


def _uniform(a) -> bool:
    d = np.diff(a)
    return d.size > 0 and np.allclose(d, d[0], rtol=1e-9, atol=0)


def wigner(s: SpinorState, p_axis=None, x_stride: int = 1, x_window=None,
           edge_tol: float = 1e-10, batch: int = 128) -> WignerGrid:
    """Channel-traced Wigner distribution W(p, x) on the grid's x points.

    The state is first interpolated onto a grid of spacing dx/2 so that x +- y
    stay on grid nodes over the full momentum range; the y-window spans half
    the box with zero padding outside.  Without ``p_axis`` the natural FFT
    momenta (spacing pi/(N dx), covering [-pi/dx, pi/dx)) are used, for which
    the p-marginal equals the channel density to rounding error.
    """
    n = s.grid.n_points
    dens = np.sum(np.abs(s.psi) ** 2, axis=0)
    w = max(1, n // 16)
    if dens[:w].sum() + dens[-w:].sum() > edge_tol * dens.sum():
        raise SupportError("state reaches the outer 1/16 of the grid; Wigner window would be truncated")

    fine = refine_state(s)
    psi = fine.psi
    nf = 2 * n
    dy = fine.grid.dx
    cols = np.arange(0, n, x_stride)
    if x_window is not None:
        x = s.grid.x[cols]
        cols = cols[(x >= x_window[0]) & (x <= x_window[1])]
    lags = np.concatenate([np.arange(0, n), np.arange(-n, 0)])  # FFT ordering of y / dy

    natural = p_axis is None
    if natural:
        q = np.fft.fftshift(np.fft.fftfreq(nf, d=1.0 / nf))
        p_out = np.pi * q / (n * s.grid.dx)
    else:
        p_out = np.asarray(p_axis, dtype=float)
        phase = np.exp(-2j * np.outer(lags * dy, p_out))

    out = np.empty((cols.size, p_out.size))
    for start in range(0, cols.size, batch):
        centers = 2 * cols[start:start + batch]
        plus = centers[:, None] + lags[None, :]
        minus = centers[:, None] - lags[None, :]
        ok = (plus >= 0) & (plus < nf) & (minus >= 0) & (minus < nf)
        pc, mc = np.where(ok, plus, 0), np.where(ok, minus, 0)
        f = np.zeros((centers.size, nf), dtype=complex)
        for ch in range(2):
            f += np.conj(psi[ch][mc]) * psi[ch][pc]
        f *= ok
        if natural:
            vals = np.fft.fftshift(np.fft.fft(f, axis=1), axes=1) * (dy / np.pi)
        else:
            vals = (f @ phase) * (dy / np.pi)
        scale = max(np.abs(vals.real).max(), 1e-300)
        if np.abs(vals.imag).max() > 1e-12 * max(scale, 1.0) and np.abs(vals.imag).max() > 1e-9 * scale:
            raise NumericalError("Wigner transform has a non-negligible imaginary part")
        out[start:start + centers.size] = vals.real
    return WignerGrid(s.grid.x[cols], p_out, out, s.time)


def gaussian_wigner(x, p, x0, p0, sigma):
    """Analytic Wigner function of a minimum-uncertainty Gaussian."""
    x = np.asarray(x)[:, None]
    p = np.asarray(p)[None, :]
    return np.exp(-((x - x0) ** 2) / (2 * sigma**2) - 2 * sigma**2 * (p - p0) ** 2) / np.pi


def wigner_lobes(wg: WignerGrid, level: float = 0.05):
    """Connected regions where W exceeds ``level`` * max(W); returns (x, p) centroids sorted by x."""
    mask = wg.values > level * wg.values.max()
    labels, count = ndimage.label(mask)
    if count == 0:
        return []
    weights = np.where(mask, wg.values, 0.0)
    centroids = ndimage.center_of_mass(weights, labels, range(1, count + 1))
    out = []
    for ix, ip in centroids:
        out.append((float(np.interp(ix, np.arange(wg.x_axis.size), wg.x_axis)),
                    float(np.interp(ip, np.arange(wg.p_axis.size), wg.p_axis))))
    return sorted(out)


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    curve_kind: str


def _force_fn(curve_kind: str, params: IonTrapParams):
    mw2 = params.m * params.omega**2
    lam, k, phi, d = params.lam, params.k, params.phi, params.delta
    sign = 1.0 if curve_kind.endswith("+") else -1.0
    if curve_kind in ("H", "B+", "B-"):
        return lambda x: -mw2 * x
    if curve_kind in ("D+", "D-"):
        return lambda x: -(mw2 * x - sign * lam * k * math.sin(k * x + phi))

    def adiabatic(x):
        c, s = math.cos(k * x + phi), math.sin(k * x + phi)
        eps = math.sqrt(0.25 * d * d + lam * lam * c * c)
        deps = -lam * lam * k * c * s / eps if eps > 0 else 0.0
        return -(mw2 * x + sign * deps)
    if curve_kind in ("A+", "A-"):
        return adiabatic
    raise ValueError(f"unknown curve kind {curve_kind!r}")


def classical_trajectory(x0: float, p0: float, curve_kind: str, params: IonTrapParams, t_end: float,
                         dt: float, record_every: int = 1) -> Trajectory:
    """Velocity-Verlet integration of Hamilton's equations on one potential curve."""
    force = _force_fn(curve_kind, params)
    m = params.m
    n_steps = int(math.ceil(t_end / dt - 1e-12))
    n_rec = n_steps // record_every + 1
    ts, xs, ps = np.empty(n_rec), np.empty(n_rec), np.empty(n_rec)
    x, p = float(x0), float(p0)
    f = force(x)
    ts[0], xs[0], ps[0] = 0.0, x, p
    r = 1
    half = 0.5 * dt
    for i in range(1, n_steps + 1):
        p += half * f
        x += dt * p / m
        f = force(x)
        p += half * f
        if i % record_every == 0:
            ts[r], xs[r], ps[r] = i * dt, x, p
            r += 1
    ts, xs, ps = ts[:r], xs[:r], ps[:r]
    energy = ps**2 / (2 * m) + curve(curve_kind, params, xs)
    return Trajectory(ts, xs, ps, energy, curve_kind)


def trajectory_period(traj: Trajectory) -> float:
    """Mean spacing of the outer turning points (p crossing zero from + to -).

    A trajectory released at rest from its outer turning point counts t=0 as the first turn.
    """
    p, t = traj.p, traj.t
    idx = np.nonzero((p[:-1] > 0) & (p[1:] <= 0))[0]
    times = t[idx] + (t[idx + 1] - t[idx]) * p[idx] / (p[idx] - p[idx + 1])
    if p[0] == 0 and p[1] < 0:
        times = np.concatenate([[0.0], times])
    if times.size < 2:
        raise NumericalError("trajectory too short to measure a period")
    return float((times[-1] - times[0]) / (times.size - 1))


