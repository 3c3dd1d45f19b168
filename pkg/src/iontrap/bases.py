"""Potential curves and the bare / diabatic / adiabatic representations.

Component conventions (see :class:`~iontrap.model.Basis`)::

    bare      (psi_2, psi_1)           potentials h +- delta/2
    diabatic  (psi_+, psi_-)           potentials h +- lam*cos(kx+phi), coupling delta/2
    adiabatic (psi_A+, psi_A-)         potentials h +- eps(x)

with h = m omega^2 x^2 / 2.  Bare and diabatic amplitudes are related by the
constant involution (sigma_x + sigma_z)/sqrt(2); bare and adiabatic by the
pointwise rotation [[cos t, -sin t], [sin t, cos t]] of angle t = theta(x).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularPointError
from .model import Basis, GridSpec, IonTrapParams, SpinorState

PotentialKind = Basis

_SQRT_HALF = np.sqrt(0.5)
# cos(kx+phi) below this (relative to 1) counts as an exact crossing
_SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class PotentialMatrix:
    """Hermitian 2x2 interaction block sampled on a grid (v21 = conj(v12))."""

    v11: np.ndarray
    v22: np.ndarray
    v12: np.ndarray

    @property
    def v21(self):
        return np.conj(self.v12)

    def eigenvalues(self):
        mean = 0.5 * (self.v11 + self.v22)
        half_gap = np.sqrt(0.25 * (self.v11 - self.v22) ** 2 + np.abs(self.v12) ** 2)
        return mean - half_gap, mean + half_gap


def _cos_sin(params: IonTrapParams, x):
    arg = params.k * np.asarray(x, dtype=float) + params.phi
    return np.cos(arg), np.sin(arg)


def adiabatic_gap(params: IonTrapParams, x):
    """Half splitting eps(x) = sqrt(delta^2/4 + lam^2 cos^2(kx+phi))."""
    c, _ = _cos_sin(params, x)
    return np.sqrt(0.25 * params.delta**2 + (params.lam * c) ** 2)


def potential_curves(kind, params: IonTrapParams, grid_or_x):
    """(V_plus, V_minus) of the requested representation on a grid or x array."""
    x = grid_or_x.x if isinstance(grid_or_x, GridSpec) else np.asarray(grid_or_x, dtype=float)
    h = params.harmonic(x)
    kind = Basis(kind)
    if kind is Basis.BARE:
        shift = np.full_like(h, 0.5 * params.delta)
    elif kind is Basis.DIABATIC:
        shift = params.lam * _cos_sin(params, x)[0]
    else:
        shift = adiabatic_gap(params, x)
    return h + shift, h - shift


def curve(name: str, params: IonTrapParams, grid_or_x):
    """Single curve by label, e.g. ``"A+"``, ``"D-"``, ``"B+"``, ``"H"`` (pure harmonic)."""
    if name == "H":
        x = grid_or_x.x if isinstance(grid_or_x, GridSpec) else grid_or_x
        return params.harmonic(x)
    kinds = {"B": Basis.BARE, "D": Basis.DIABATIC, "A": Basis.ADIABATIC}
    if len(name) != 2 or name[0] not in kinds or name[1] not in "+-":
        raise ValueError(f"unknown curve label {name!r}")
    plus, minus = potential_curves(kinds[name[0]], params, grid_or_x)
    return plus if name[1] == "+" else minus


def diabatic_matrix(params: IonTrapParams, grid_or_x) -> PotentialMatrix:
    """Interaction block of the diabatic Hamiltonian; the harmonic term is not included."""
    x = grid_or_x.x if isinstance(grid_or_x, GridSpec) else np.asarray(grid_or_x, dtype=float)
    c, _ = _cos_sin(params, x)
    v = params.lam * c
    return PotentialMatrix(v, -v, np.full(v.shape, 0.5 * params.delta, dtype=complex))


def bare_matrix(params: IonTrapParams, grid_or_x) -> PotentialMatrix:
    x = grid_or_x.x if isinstance(grid_or_x, GridSpec) else np.asarray(grid_or_x, dtype=float)
    c, _ = _cos_sin(params, x)
    half = np.full(x.shape, 0.5 * params.delta)
    return PotentialMatrix(half, -half, (params.lam * c).astype(complex))


def mixing_angle(params: IonTrapParams, x):
    """theta(x) = atan2(2 lam cos(kx+phi), delta) / 2.

    Arrays are treated as an ordered sweep and unwrapped, so the angle is
    continuous across crossings even for negative detuning.
    """
    c, _ = _cos_sin(params, x)
    y = 2.0 * params.lam * c
    if params.delta == 0 and np.any(np.abs(y) <= _SINGULAR_TOL * max(params.lam, 1e-300)):
        raise SingularPointError("mixing angle undefined: delta = 0 at a diabatic crossing")
    two_theta = np.arctan2(y, params.delta)
    if np.ndim(two_theta) == 0:
        return float(0.5 * two_theta)
    return 0.5 * np.unwrap(two_theta)


def nonadiabatic_couplings(params: IonTrapParams, x):
    """First and second x-derivatives of the mixing angle.

    Obtained by differentiating theta(x) exactly:
        d theta   = -delta k lam s / D
        d2 theta  = -delta [lam k^2 c D + 8 lam^3 k^2 c s^2] / D^2
    with c, s = cos, sin(kx+phi) and D = delta^2 + 4 lam^2 c^2.
    """
    c, s = _cos_sin(params, x)
    d, lam, k = params.delta, params.lam, params.k
    denom = d * d + 4.0 * lam * lam * c * c
    if np.any(denom <= (_SINGULAR_TOL * max(lam, abs(d), 1e-300)) ** 2):
        if lam == 0 or k == 0:
            zero = np.zeros_like(denom)
            return (float(zero), float(zero)) if np.ndim(zero) == 0 else (zero, zero)
        raise SingularPointError("non-adiabatic couplings singular: delta = 0 at a crossing")
    dtheta = -d * k * lam * s / denom
    d2theta = -d * (lam * k * k * c * denom + 8.0 * lam**3 * k * k * c * s * s) / denom**2
    if np.ndim(dtheta) == 0:
        return float(dtheta), float(d2theta)
    return dtheta, d2theta


def _diabatic_to_bare(psi):
    return _SQRT_HALF * np.vstack([psi[0] + psi[1], psi[0] - psi[1]])


_bare_to_diabatic = _diabatic_to_bare


def _bare_to_adiabatic(psi, theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.vstack([c * psi[0] + s * psi[1], -s * psi[0] + c * psi[1]])


def _adiabatic_to_bare(psi, theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.vstack([c * psi[0] - s * psi[1], s * psi[0] + c * psi[1]])


def change_basis(s: SpinorState, target, params: IonTrapParams) -> SpinorState:
    """Re-express ``s`` in the ``target`` representation (norm preserving)."""
    target = Basis(target)
    if s.basis is target:
        return s.copy()
    psi = s.psi
    theta = None
    if Basis.ADIABATIC in (s.basis, target):
        theta = mixing_angle(params, s.grid.x)

    if s.basis is Basis.DIABATIC:
        psi = _diabatic_to_bare(psi)
    elif s.basis is Basis.ADIABATIC:
        psi = _adiabatic_to_bare(psi, theta)

    if target is Basis.DIABATIC:
        psi = _bare_to_diabatic(psi)
    elif target is Basis.ADIABATIC:
        psi = _bare_to_adiabatic(psi, theta)
    return SpinorState(psi, s.grid, target, s.time, dict(s.meta))


def crossing_points(params: IonTrapParams, x_lo: float, x_hi: float):
    """Diabatic crossings (cos(kx+phi) = 0) inside [x_lo, x_hi], ascending."""
    if params.k == 0:
        return np.array([])
    lo = params.k * x_lo + params.phi
    hi = params.k * x_hi + params.phi
    j = np.arange(np.ceil((lo - np.pi / 2) / np.pi), np.floor((hi - np.pi / 2) / np.pi) + 1)
    return ((np.pi / 2 + j * np.pi) - params.phi) / params.k


def write_curves_table(path, x, v_plus, v_minus, header=None):
    data = np.column_stack([x, v_plus, v_minus])
    head = header or "x\tV_plus\tV_minus"
    np.savetxt(path, data, delimiter="\t", header=head, comments="", fmt="%.16e")
