"""Physical parameters, the periodic position/momentum grid and the two-channel state.

Atomic units (hbar = 1) are used throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import BasisMismatchError, GridError


class Basis(str, Enum):
    """Internal-state representation of a two-channel wave function.

    In every basis the first ("upper") component belongs to the ``+`` curve of
    that representation: |2> (energy +delta/2) for bare, the channel with
    ``+lam*cos(kx+phi)`` for diabatic and the ``+eps(x)`` branch for adiabatic.
    """

    BARE = "bare"
    DIABATIC = "diabatic"
    ADIABATIC = "adiabatic"


@dataclass(frozen=True)
class IonTrapParams:
    m: float
    omega: float
    delta: float
    lam: float
    k: float
    phi: float

    def __post_init__(self):
        for name in ("m", "omega", "delta", "lam", "k", "phi"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.m <= 0 or self.omega <= 0:
            raise ValueError("m and omega must be positive")
        if self.lam < 0 or self.k < 0:
            raise ValueError("lam and k must be non-negative")

    @property
    def eta(self) -> float:
        """Lamb-Dicke parameter k * x_zpf with x_zpf = 1/sqrt(2 m omega)."""
        return self.k / math.sqrt(2.0 * self.m * self.omega)

    @property
    def eta_printed(self) -> float:
        """The alternative form k*sqrt(m*omega/2); kept for comparison only."""
        return self.k * math.sqrt(self.m * self.omega / 2.0)

    @property
    def sigma_coherent(self) -> float:
        return 1.0 / math.sqrt(2.0 * self.m * self.omega)

    @property
    def period(self) -> float:
        """Bare trap period 2*pi/omega."""
        return 2.0 * math.pi / self.omega

    def harmonic(self, x):
        return 0.5 * self.m * self.omega**2 * np.asarray(x, dtype=float) ** 2

    def with_(self, **changes) -> IonTrapParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid x_j = x_min + j*dx, j = 0..n_points-1."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise GridError(f"n_points must be a power of two >= 8, got {n!r}")
        if not self.x_max > self.x_min:
            raise GridError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def p(self) -> np.ndarray:
        """Conjugate momenta in FFT ordering, covering [-pi/dx, pi/dx)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def p_max(self) -> float:
        return math.pi / self.dx

    def refined(self) -> GridSpec:
        return GridSpec(self.x_min, self.x_max, 2 * self.n_points)


def characteristic_momentum(params: IonTrapParams, turning_point: float) -> float:
    e_char = 0.5 * params.m * params.omega**2 * turning_point**2 + params.lam + abs(params.delta) / 2
    return math.sqrt(2.0 * params.m * e_char)


# extent = 1.5 * turning point by the default grid policy
EXTENT_MARGIN = 1.5
MOMENTUM_SAFETY = 1.25


def build_grid(params: IonTrapParams, x_center: float, x_extent_hint: float, n_points: int) -> GridSpec:
    """Grid on [x_center - extent, x_center + extent) with a momentum-cutoff check.

    The cutoff pi/dx must exceed ``MOMENTUM_SAFETY`` times the classical momentum
    of the most excited branch at the turning point ``extent / EXTENT_MARGIN``.
    """
    if x_extent_hint <= 0:
        raise GridError("x_extent_hint must be positive")
    grid = GridSpec(x_center - x_extent_hint, x_center + x_extent_hint, n_points)
    p_char = characteristic_momentum(params, abs(x_center) + x_extent_hint / EXTENT_MARGIN)
    if grid.p_max < MOMENTUM_SAFETY * p_char:
        raise GridError(
            f"momentum cutoff {grid.p_max:.4g} below {MOMENTUM_SAFETY} x characteristic "
            f"momentum {p_char:.4g}; increase n_points"
        )
    return grid


def default_extent(params: IonTrapParams, x0: float, energy: float) -> float:
    """1.5 x the larger of |x0| and the harmonic turning point at ``energy``."""
    turning = math.sqrt(max(2.0 * energy, 0.0) / (params.m * params.omega**2))
    return EXTENT_MARGIN * max(abs(x0), turning)


@dataclass
class SpinorState:
    """Two complex components sampled on ``grid``; ``psi[0]`` is the upper channel."""

    psi: np.ndarray
    grid: GridSpec
    basis: Basis = Basis.DIABATIC
    time: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != (2, self.grid.n_points):
            raise GridError(f"state shape {self.psi.shape} does not match grid ({self.grid.n_points} points)")
        self.basis = Basis(self.basis)

    @classmethod
    def from_components(cls, upper, lower, grid, basis=Basis.DIABATIC, time=0.0):
        return cls(np.vstack([upper, lower]).astype(complex), grid, basis, time)

    @property
    def upper(self) -> np.ndarray:
        return self.psi[0]

    @property
    def lower(self) -> np.ndarray:
        return self.psi[1]

    def copy(self) -> SpinorState:
        return SpinorState(self.psi.copy(), self.grid, self.basis, self.time, dict(self.meta))

    def evolved(self, psi: np.ndarray, time: float) -> SpinorState:
        return SpinorState(psi, self.grid, self.basis, time, self.meta)


def _check_compatible(a: SpinorState, b: SpinorState):
    if a.basis != b.basis:
        raise BasisMismatchError(f"basis mismatch: {a.basis.value} vs {b.basis.value}")
    if a.grid != b.grid:
        raise GridError("states live on different grids")


def norm_squared(s: SpinorState) -> float:
    return float(np.vdot(s.psi, s.psi).real * s.grid.dx)


def overlap(a: SpinorState, b: SpinorState) -> complex:
    """<a|b> = sum_j (a_upper* b_upper + a_lower* b_lower) dx."""
    _check_compatible(a, b)
    return complex(np.vdot(a.psi, b.psi) * a.grid.dx)


def normalized(s: SpinorState) -> SpinorState:
    n2 = norm_squared(s)
    if n2 == 0:
        raise ValueError("cannot normalize the zero state")
    return s.evolved(s.psi / math.sqrt(n2), s.time)


def momentum_norm_squared(s: SpinorState) -> float:
    """Norm from the Fourier-transformed components (Parseval)."""
    phi = np.fft.fft(s.psi, axis=1)
    return float(np.sum(np.abs(phi) ** 2) * s.grid.dx / s.grid.n_points)


def momentum_tail(s: SpinorState, fraction: float = 2.0 / 3.0) -> float:
    """Share of the norm carried by momenta with |p| > fraction * p_max."""
    phi = np.fft.fft(s.psi, axis=1)
    weight = np.abs(phi) ** 2
    total = weight.sum()
    if total == 0:
        return 0.0
    mask = np.abs(s.grid.p) > fraction * s.grid.p_max
    return float(weight[:, mask].sum() / total)


def refine_state(s: SpinorState) -> SpinorState:
    """Spectral (zero-padding) interpolation onto a grid with twice the points."""
    n = s.grid.n_points
    fine = s.grid.refined()
    phi = np.fft.fft(s.psi, axis=1)
    padded = np.zeros((2, 2 * n), dtype=complex)
    half = n // 2
    padded[:, :half] = phi[:, :half]
    padded[:, -half:] = phi[:, -half:]
    # split the Nyquist bin so the interpolant stays symmetric
    padded[:, half] = 0.5 * phi[:, half]
    padded[:, -half] = 0.5 * phi[:, half]
    psi = np.fft.ifft(padded, axis=1) * 2.0
    return SpinorState(psi, fine, s.basis, s.time, dict(s.meta))
