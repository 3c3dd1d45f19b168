"""Initial wave packets: minimum-uncertainty Gaussians and harmonic-oscillator Fock states."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import GridError, SupportError
from .model import Basis, GridSpec, IonTrapParams, SpinorState

KINDS = ("gaussian", "coherent", "fock")
FOCK_N_MAX = 200


@dataclass(frozen=True)
class InitialStateSpec:
    kind: str = "gaussian"
    x0: float = 0.0
    sigma: float | None = None
    n: int = 0
    basis: Basis = Basis.DIABATIC
    channel: str = "+"
    p0: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "gaussian" and not (self.sigma is not None and self.sigma > 0):
            raise ValueError("gaussian initial state needs sigma > 0")
        if self.kind == "fock" and self.n < 0:
            raise ValueError("fock quantum number must be >= 0")
        if self.channel not in ("+", "-"):
            raise ValueError("channel must be '+' or '-'")
        object.__setattr__(self, "basis", Basis(self.basis))

    @property
    def channel_index(self) -> int:
        return 0 if self.channel == "+" else 1

    def width(self, params: IonTrapParams) -> float:
        if self.kind == "gaussian":
            return self.sigma
        return params.sigma_coherent


def _place(profile, spec: InitialStateSpec, grid: GridSpec) -> SpinorState:
    psi = np.zeros((2, grid.n_points), dtype=complex)
    psi[spec.channel_index] = profile
    return SpinorState(psi, grid, spec.basis, 0.0, {"initial_channel": spec.channel})


def gaussian_tail_mass(x0: float, sigma: float, grid: GridSpec) -> float:
    # |psi|^2 is a normal density with standard deviation sigma
    left = 0.5 * erfc((x0 - grid.x_min) / (math.sqrt(2.0) * sigma))
    right = 0.5 * erfc((grid.x_max - x0) / (math.sqrt(2.0) * sigma))
    return float(left + right)


def gaussian_profile(x, x0, sigma, p0=0.0):
    x = np.asarray(x, dtype=float)
    g = (2.0 * np.pi * sigma**2) ** -0.25 * np.exp(-((x - x0) ** 2) / (4.0 * sigma**2))
    return g * np.exp(1j * p0 * x) if p0 else g.astype(complex)


def make_gaussian(spec: InitialStateSpec, params: IonTrapParams, grid: GridSpec) -> SpinorState:
    """Normalized Gaussian (2 pi sigma^2)^(-1/4) exp(-(x-x0)^2 / 4 sigma^2) on one channel.

    ``kind="coherent"`` uses the ground-state width 1/sqrt(2 m omega).
    """
    sigma = spec.width(params)
    tail = gaussian_tail_mass(spec.x0, sigma, grid)
    if tail > 1e-12:
        raise SupportError(f"Gaussian tail mass outside the grid is {tail:.2e} (> 1e-12)")
    if abs(spec.p0) + 8.0 / (2.0 * sigma) > grid.p_max:
        raise GridError(f"sigma={sigma:g} is not resolved by dx={grid.dx:g}")
    g = gaussian_profile(grid.x, spec.x0, sigma, spec.p0)
    g /= math.sqrt(np.sum(np.abs(g) ** 2) * grid.dx)
    return _place(g, spec, grid)


def coherent_amplitude(x0: float, params: IonTrapParams, p0: float = 0.0) -> complex:
    """alpha = sqrt(m omega / 2) x0 + i p0 / sqrt(2 m omega)."""
    return complex(math.sqrt(params.m * params.omega / 2.0) * x0, p0 / math.sqrt(2.0 * params.m * params.omega))


def coherent_wavefunction(alpha: complex, params: IonTrapParams, grid: GridSpec) -> np.ndarray:
    """Coherent state <x|alpha> in closed form (momentum alpha.imag * sqrt(2 m omega))."""
    mw = params.m * params.omega
    x = grid.x
    xc = math.sqrt(2.0 / mw) * alpha.real
    pc = math.sqrt(2.0 * mw) * alpha.imag
    return (mw / math.pi) ** 0.25 * np.exp(-0.5 * mw * (x - xc) ** 2 + 1j * pc * (x - xc / 2.0))


def fock_wavefunctions(n_max: int, params: IonTrapParams, x) -> np.ndarray:
    """Rows phi_0..phi_n_max from the normalized three-term Hermite-function recurrence."""
    mw = params.m * params.omega
    xi = math.sqrt(mw) * np.asarray(x, dtype=float)
    out = np.empty((n_max + 1, xi.size))
    out[0] = (mw / math.pi) ** 0.25 * np.exp(-0.5 * xi**2)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * xi * out[0]
    for n in range(2, n_max + 1):
        out[n] = math.sqrt(2.0 / n) * xi * out[n - 1] - math.sqrt((n - 1) / n) * out[n - 2]
    return out


def make_fock(n: int, params: IonTrapParams, grid: GridSpec, channel: str = "+",
              basis: Basis = Basis.DIABATIC, n_limit: int = FOCK_N_MAX) -> SpinorState:
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > n_limit:
        raise ValueError(f"Fock state n={n} above the recurrence limit {n_limit}")
    turning = math.sqrt((2 * n + 1) / (params.m * params.omega))
    decay = 6.0 / math.sqrt(params.m * params.omega)
    if turning + decay > min(-grid.x_min, grid.x_max):
        raise SupportError(f"Fock state n={n} does not fit inside the grid")
    if math.sqrt(2.0 * (n + 1) * params.m * params.omega) * 1.5 > grid.p_max:
        raise GridError(f"Fock state n={n} is not resolved by dx={grid.dx:g}")
    profile = fock_wavefunctions(n, params, grid.x)[n]
    spec = InitialStateSpec(kind="fock", n=n, channel=channel, basis=basis)
    return _place(profile.astype(complex), spec, grid)


def make_initial(spec: InitialStateSpec, params: IonTrapParams, grid: GridSpec) -> SpinorState:
    if spec.kind == "fock":
        return make_fock(spec.n, params, grid, spec.channel, spec.basis)
    return make_gaussian(spec, params, grid)
