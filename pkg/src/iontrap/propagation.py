"""Time evolution in the diabatic representation.

The Hamiltonian is

    H = p^2/2m + m omega^2 x^2/2 + [[ lam cos(kx+phi),  delta/2        ],
                                    [ delta/2,          -lam cos(kx+phi)]]

with the kinetic term applied spectrally on the periodic grid.  Two
propagators are provided: a Chebyshev expansion of exp(-i H dt) (the
workhorse) and an eigenbasis propagator built from a dense diagonalization,
which is exact for this time-independent H and is used for very long
horizons.  ``exact_step_oracle`` is the small-grid dense reference.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import linalg
from scipy.special import jv

from .bases import diabatic_matrix
from .errors import BasisMismatchError, ConvergenceError, GridError, NumericalError, SupportError
from .model import Basis, GridSpec, IonTrapParams, SpinorState

ORACLE_MAX_DIM = 512
SPECTRAL_MAX_DIM = 8192


@dataclass(frozen=True)
class PropagatorConfig:
    dt_report: float
    t_end: float
    spectral_margin: float = 1.1
    cheb_tail_tol: float = 1e-14
    max_order: int = 2_000_000
    method: str = "chebyshev"

    def __post_init__(self):
        if not self.dt_report > 0:
            raise ValueError("dt_report must be positive")
        if self.t_end < self.dt_report:
            raise ValueError("t_end must be at least dt_report")
        if self.spectral_margin < 1:
            raise ValueError("spectral_margin must be >= 1")
        if not 0 < self.cheb_tail_tol <= 1e-8:
            raise ValueError("cheb_tail_tol must lie in (0, 1e-8]")
        if self.method not in ("chebyshev", "spectral"):
            raise ValueError(f"unknown propagation method {self.method!r}")

    @property
    def n_reports(self) -> int:
        return int(math.floor(self.t_end / self.dt_report + 1e-9))


class DiabaticHamiltonian:
    """Grid representation of H acting on (2, N) diabatic amplitude arrays."""

    def __init__(self, params: IonTrapParams, grid: GridSpec):
        self.params = params
        self.grid = grid
        self.kinetic = grid.p**2 / (2.0 * params.m)
        h = params.harmonic(grid.x)
        block = diabatic_matrix(params, grid)
        self.v11 = h + block.v11
        self.v22 = h + block.v22
        self.coupling = 0.5 * params.delta

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = np.fft.ifft(self.kinetic * np.fft.fft(psi, axis=1), axis=1)
        out[0] += self.v11 * psi[0] + self.coupling * psi[1]
        out[1] += self.v22 * psi[1] + self.coupling * psi[0]
        return out

    def expectation(self, psi: np.ndarray) -> complex:
        return complex(np.vdot(psi, self.apply(psi)) * self.grid.dx)

    def bounds(self, margin: float = 1.0):
        """Interval bracketing the spectrum, widened by ``margin`` about its midpoint."""
        mean = 0.5 * (self.v11 + self.v22)
        half_gap = np.sqrt(0.25 * (self.v11 - self.v22) ** 2 + self.coupling**2)
        # kinetic energy is >= 0, so the lowest potential eigenvalue bounds from below
        e_min = float((mean - half_gap).min())
        e_max = float(self.kinetic.max()) + float((mean + half_gap).max())
        mid, half = 0.5 * (e_max + e_min), 0.5 * (e_max - e_min)
        return mid - margin * half, mid + margin * half

    def kinetic_matrix(self) -> np.ndarray:
        n = self.grid.n_points
        t = np.fft.ifft(self.kinetic[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0)
        if np.abs(t.imag).max() > 1e-12 * max(1.0, np.abs(t.real).max()):
            raise NumericalError("kinetic matrix is not real")
        return t.real

    def dense(self) -> np.ndarray:
        """Full real symmetric 2N x 2N matrix, upper-channel block first."""
        n = self.grid.n_points
        t = self.kinetic_matrix()
        h = np.zeros((2 * n, 2 * n))
        h[:n, :n] = t + np.diag(self.v11)
        h[n:, n:] = t + np.diag(self.v22)
        idx = np.arange(n)
        h[idx, idx + n] = self.coupling
        h[idx + n, idx] = self.coupling
        return h


def _require_diabatic(s: SpinorState):
    if s.basis is not Basis.DIABATIC:
        raise BasisMismatchError(f"propagation works in the diabatic basis, got {s.basis.value}")


def apply_hamiltonian(s: SpinorState, params: IonTrapParams, grid: GridSpec | None = None) -> SpinorState:
    _require_diabatic(s)
    ham = DiabaticHamiltonian(params, grid or s.grid)
    return s.evolved(ham.apply(s.psi), s.time)


def spectral_bounds(params: IonTrapParams, grid: GridSpec, spectral_margin: float = 1.0):
    return DiabaticHamiltonian(params, grid).bounds(spectral_margin)


def chebyshev_coefficients(alpha: float, tol: float = 1e-14, max_order: int = 2_000_000) -> np.ndarray:
    """a_k = (2 - delta_k0) (-i)^k J_k(alpha), truncated past the Bessel tail.

    The cut is the first k > alpha with |J_k(alpha)| < tol, plus ten terms.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    chunk = int(alpha + 10 * alpha ** (1.0 / 3.0) + 64)
    while True:
        if chunk > max_order:
            raise ConvergenceError(f"Chebyshev order would exceed {max_order} (alpha={alpha:.4g})")
        k = np.arange(chunk + 1)
        j = jv(k, alpha)
        small = np.nonzero((k > alpha) & (np.abs(j) < tol))[0]
        if small.size:
            order = int(small[0]) + 10
            break
        chunk *= 2
    k = np.arange(order + 1)
    j = jv(k, alpha)
    coef = (-1j) ** (k % 4) * j
    coef[1:] *= 2.0
    return coef


class ChebyshevPropagator:
    def __init__(self, ham: DiabaticHamiltonian, cfg: PropagatorConfig):
        self.ham = ham
        self.cfg = cfg
        self.e_min, self.e_max = ham.bounds(cfg.spectral_margin)
        self.center = 0.5 * (self.e_max + self.e_min)
        self.radius = 0.5 * (self.e_max - self.e_min)
        # operator 2*H_s with H_s = (H - center)/radius, the form the recurrence needs
        two_over_r = 2.0 / self.radius
        self._k2 = ham.kinetic * two_over_r
        self._v2 = np.vstack([(ham.v11 - self.center) * two_over_r, (ham.v22 - self.center) * two_over_r])
        self._c2 = ham.coupling * two_over_r
        self._coef_cache = {}
        self.terms_used = 0

    def coefficients(self, dt: float) -> np.ndarray:
        coef = self._coef_cache.get(dt)
        if coef is None:
            coef = chebyshev_coefficients(self.radius * dt, self.cfg.cheb_tail_tol, self.cfg.max_order)
            self._coef_cache[dt] = coef
        return coef

    def _two_scaled(self, psi):
        out = sfft.ifft(self._k2 * sfft.fft(psi, axis=1), axis=1, overwrite_x=True)
        out += self._v2 * psi
        out[0] += self._c2 * psi[1]
        out[1] += self._c2 * psi[0]
        return out

    def step(self, psi: np.ndarray, dt: float) -> np.ndarray:
        if dt == 0:
            return psi.copy()
        coef = self.coefficients(dt)
        prev = psi
        cur = 0.5 * self._two_scaled(psi)
        acc = coef[0] * prev + coef[1] * cur
        for a in coef[2:]:
            nxt = self._two_scaled(cur)
            nxt -= prev
            acc += a * nxt
            prev, cur = cur, nxt
        self.terms_used += len(coef)
        out = np.exp(-1j * self.center * dt) * acc
        n_in = np.vdot(psi, psi).real
        n_out = np.vdot(out, out).real
        if not np.isfinite(n_out) or abs(n_out - n_in) > 1e-6 * max(n_in, 1e-300):
            raise ConvergenceError("Chebyshev step lost unitarity; spectral bounds are inadequate")
        return out


def chebyshev_step(s: SpinorState, dt: float, params: IonTrapParams, grid: GridSpec | None = None,
                   cfg: PropagatorConfig | None = None) -> SpinorState:
    _require_diabatic(s)
    if dt < 0:
        raise ValueError("dt must be non-negative")
    cfg = cfg or PropagatorConfig(dt_report=max(dt, 1e-300), t_end=max(dt, 1e-300))
    prop = ChebyshevPropagator(DiabaticHamiltonian(params, grid or s.grid), cfg)
    return s.evolved(prop.step(s.psi, dt), s.time + dt)


def exact_step_oracle(s: SpinorState, dt: float, params: IonTrapParams, grid: GridSpec | None = None) -> SpinorState:
    """exp(-i H dt) s by dense diagonalization; small grids only."""
    _require_diabatic(s)
    grid = grid or s.grid
    if 2 * grid.n_points > ORACLE_MAX_DIM:
        raise GridError(f"dense oracle limited to 2N <= {ORACLE_MAX_DIM}")
    energies, vectors = np.linalg.eigh(DiabaticHamiltonian(params, grid).dense())
    vec = s.psi.reshape(-1)
    out = vectors @ (np.exp(-1j * energies * dt) * (vectors.T @ vec))
    return s.evolved(out.reshape(2, -1), s.time + dt)


class SpectralPropagator:
    """Eigenbasis propagation of one initial state under the time-independent H.

    Only eigenvectors whose weight in the initial state exceeds ``weight_tol``
    are retained; the discarded weight is reported in ``discarded``.
    """

    def __init__(self, ham: DiabaticHamiltonian, psi0: np.ndarray, weight_tol: float = 1e-24):
        n = ham.grid.n_points
        if 2 * n > SPECTRAL_MAX_DIM:
            raise GridError(f"spectral propagator limited to 2N <= {SPECTRAL_MAX_DIM}")
        energies, vectors = np.linalg.eigh(ham.dense())
        coeff = vectors.T @ psi0.reshape(-1)
        weight = np.abs(coeff) ** 2
        total = weight.sum()
        keep = weight > weight_tol * total
        self.energies = energies[keep]
        self.coeff = coeff[keep]
        self.vectors = np.ascontiguousarray(vectors[:, keep])
        self.discarded = float(weight[~keep].sum() / total)
        self.n = n

    @property
    def weights(self):
        return np.abs(self.coeff) ** 2

    def states(self, times) -> np.ndarray:
        """Amplitudes at each time, shape (len(times), 2, N)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        z = self.coeff[:, None] * np.exp(-1j * np.outer(self.energies, times))
        out = self.vectors @ np.ascontiguousarray(z.real) + 1j * (self.vectors @ np.ascontiguousarray(z.imag))
        return out.T.reshape(len(times), 2, self.n)

    def autocorrelation(self, times) -> np.ndarray:
        """<psi(t)|psi(0)> over the retained components."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return np.exp(1j * np.outer(times, self.energies)) @ self.weights


def propagate(state: SpinorState, params: IonTrapParams, cfg: PropagatorConfig,
              engine: SpectralPropagator | None = None):
    """Yield the state at t0 + j*dt_report for j = 1..n_reports.

    The Chebyshev route doubles the grid (spectral interpolation) whenever the
    high-momentum tail of the state exceeds 1e-10 of its norm.  For the
    spectral route a prebuilt ``engine`` for this initial state may be passed.
    """
    _require_diabatic(state)
    if cfg.method == "spectral":
        if engine is None:
            ham = DiabaticHamiltonian(params, state.grid)
            engine = SpectralPropagator(ham, state.psi * math.sqrt(state.grid.dx))
        spec = engine
        t0 = state.time
        scale = 1.0 / math.sqrt(state.grid.dx)
        batch = 256
        n = cfg.n_reports
        for start in range(1, n + 1, batch):
            idx = np.arange(start, min(start + batch, n + 1))
            psis = spec.states(idx * cfg.dt_report) * scale
            for j, psi in zip(idx, psis):
                yield state.evolved(psi, t0 + j * cfg.dt_report)
        return

    from .model import momentum_tail, refine_state

    current = state
    ham = DiabaticHamiltonian(params, current.grid)
    prop = ChebyshevPropagator(ham, cfg)
    t0 = state.time
    for j in range(1, cfg.n_reports + 1):
        psi = prop.step(current.psi, cfg.dt_report)
        current = current.evolved(psi, t0 + j * cfg.dt_report)
        if momentum_tail(current) > 1e-10:
            current = refine_state(current)
            ham = DiabaticHamiltonian(params, current.grid)
            prop = ChebyshevPropagator(ham, cfg)
        yield current


@dataclass(frozen=True)
class SpectrumTable:
    energies: np.ndarray
    channel_label: str = ""

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        if e.ndim != 1 or e.size < 1:
            raise ValueError("spectrum needs a 1-D array of energies")
        if np.any(np.diff(e) <= 0):
            raise ValueError("spectrum energies must be strictly increasing")
        object.__setattr__(self, "energies", e)

    @property
    def n_max(self) -> int:
        return self.energies.size - 1

    def fractional_index(self, energy: float) -> float:
        return float(np.interp(energy, self.energies, np.arange(self.energies.size)))

    def write(self, path):
        data = np.column_stack([np.arange(self.energies.size), self.energies])
        np.savetxt(path, data, delimiter="\t", header=f"n\tE\t# {self.channel_label}", comments="",
                   fmt=["%d", "%.17e"])


def single_channel_spectrum(curve: np.ndarray, params: IonTrapParams, grid: GridSpec, n_max: int,
                            label: str = "") -> SpectrumTable:
    """Lowest n_max+1 eigenvalues of p^2/2m + V(x) with the Fourier-exact kinetic matrix."""
    curve = np.asarray(curve, dtype=float)
    if curve.shape != (grid.n_points,):
        raise GridError("curve must be sampled on the grid")
    if n_max + 1 > grid.n_points:
        raise GridError("n_max exceeds the number of grid points")
    t = DiabaticHamiltonian(params, grid).kinetic_matrix()
    energies = linalg.eigvalsh(t + np.diag(curve), subset_by_index=[0, n_max])
    e_top = energies[-1]
    v_min = curve.min()
    edge = min(curve[0], curve[-1])
    # the top state's classically allowed region must stay clear of the box edges
    if edge - e_top < 0.25 * (e_top - v_min):
        raise SupportError(f"window too small for n_max={n_max}: edge potential {edge:.4g} vs E={e_top:.4g}")
    return SpectrumTable(energies, label)


CHECKPOINT_MAGIC = b"IONTRPCK"
_BASIS_CODES = {Basis.BARE: 0.0, Basis.DIABATIC: 1.0, Basis.ADIABATIC: 2.0}


def write_checkpoint(path, state: SpinorState, params: IonTrapParams):
    """Binary restart file: 8-byte magic, 12 little-endian float64 header words, amplitudes.

    Header: version, m, omega, delta, lam, k, phi, x_min, x_max, n_points, basis, time.
    Amplitudes follow as interleaved (re, im) float64 pairs, upper channel first.
    """
    g = state.grid
    header = [1.0, params.m, params.omega, params.delta, params.lam, params.k, params.phi,
              g.x_min, g.x_max, float(g.n_points), _BASIS_CODES[state.basis], state.time]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<12d", *header))
        fh.write(np.ascontiguousarray(state.psi, dtype="<c16").tobytes())


def read_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    header = struct.unpack("<12d", raw[8:8 + 96])
    if header[0] != 1.0:
        raise ValueError(f"{path}: unsupported checkpoint version {header[0]}")
    params = IonTrapParams(*header[1:7])
    grid = GridSpec(header[7], header[8], int(header[9]))
    basis = {v: k for k, v in _BASIS_CODES.items()}[header[10]]
    psi = np.frombuffer(raw[104:], dtype="<c16")
    if psi.size != 2 * grid.n_points:
        raise ValueError(f"{path}: truncated amplitude block")
    state = SpinorState(psi.reshape(2, grid.n_points).astype(complex), grid, basis, header[11])
    return state, params


def check_support(s: SpinorState, edge_fraction: float = 0.05, tol: float = 1e-10):
    """Raise if more than ``tol`` of the norm sits in the outer ``edge_fraction`` of the box."""
    n = s.grid.n_points
    w = max(1, int(edge_fraction * n))
    dens = np.sum(np.abs(s.psi) ** 2, axis=0)
    edge = dens[:w].sum() + dens[-w:].sum()
    if edge > tol * dens.sum():
        raise SupportError(f"{edge / dens.sum():.2e} of the norm lies at the grid edge")
