"""Run orchestration: propagate, record observables, analyse and write every artifact."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os

import numpy as np

from .analysis import (
    autocorrelation_envelope,
    detect_classical_period,
    predicted_revival,
    revival_analysis,
    single_channel_timescales,
    splitting_fraction,
)
from .bases import potential_curves, write_curves_table
from .config import RunSpec, resolved_extent, resolved_text
from .errors import IonTrapError, NumericalError
from .initial import make_initial
from .model import Basis, build_grid, refine_state
from .observables import (
    SERIES_COLUMNS,
    ObservableSeries,
    observe_full,
    wigner,
)
from .propagation import DiabaticHamiltonian, PropagatorConfig, SpectralPropagator, propagate, write_checkpoint

log = logging.getLogger(__name__)

# coarser sampling than this (per bare period) cannot resolve |A| peaks; a probe run is added
PROBE_SAMPLES = 200
PROBE_PERIODS = 2.2
MIN_SAMPLES_PER_PERIOD = 50


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class IdentityMonitor:
    """Tracks the worst violation of the observable identities over a run."""

    def __init__(self):
        self.max_inversion_gap = 0.0
        self.max_entropy_gap = 0.0
        self.max_w_excess = -math.inf
        self.max_a_excess = -math.inf
        self.entropy_range = (math.inf, -math.inf)
        self.initial_channel = None

    def check(self, rec, s_bare):
        self.max_entropy_gap = max(self.max_entropy_gap, abs(s_bare - rec.S))
        self.max_inversion_gap = max(self.max_inversion_gap, abs((rec.P2 - rec.P1) - rec.W))
        # the bounds use the population of the channel that starts empty
        other = rec.P_minus if self.initial_channel == "+" else rec.P_plus
        init = rec.P_plus if self.initial_channel == "+" else rec.P_minus
        self.max_w_excess = max(self.max_w_excess, abs(rec.W) - 2.0 * math.sqrt(max(init * other, 0.0)))
        self.max_a_excess = max(self.max_a_excess, abs(rec.A) ** 2 - init)
        lo, hi = self.entropy_range
        self.entropy_range = (min(lo, rec.S), max(hi, rec.S))

    def summary(self):
        return {
            "max_inversion_gap": self.max_inversion_gap,
            "max_entropy_basis_gap": self.max_entropy_gap,
            "max_W_bound_excess": self.max_w_excess,
            "max_A2_bound_excess": self.max_a_excess,
            "entropy_min": self.entropy_range[0],
            "entropy_max": self.entropy_range[1],
        }


def _record_loop(spec: RunSpec, s0, params, cfg, ham, series_path, engine=None, wigner_cb=None,
                 checkpoint_cb=None, keep_every=1):
    """Propagate, write the series table row by row and return (columns array, monitor)."""
    monitor = IdentityMonitor()
    monitor.initial_channel = s0.meta.get("initial_channel", spec.initial.channel)
    n = cfg.n_reports + 1
    rows = np.empty(((n - 1) // keep_every + 2, len(SERIES_COLUMNS)))
    kept = 0
    fh = open(series_path, "w") if series_path else None
    try:
        if fh:
            fh.write(f"# initial_channel = {monitor.initial_channel}\n")
            fh.write("\t".join(SERIES_COLUMNS) + "\n")

        ref = {"s0": s0, "ham": ham}

        def handle(j, s):
            nonlocal kept
            if s.grid != ref["s0"].grid:
                # the propagator refined its grid; follow with the reference state
                while ref["s0"].grid.n_points < s.grid.n_points:
                    ref["s0"] = refine_state(ref["s0"])
                ref["ham"] = DiabaticHamiltonian(params, s.grid)
            rec, diag = observe_full(s, ref["s0"], params, ref["ham"])
            monitor.check(rec, diag["S_bare"])
            row = rec.row()
            if fh:
                fh.write("\t".join(repr(float(v)) for v in row) + "\n")
            if j % keep_every == 0:
                rows[kept] = row
                kept += 1
            if wigner_cb:
                wigner_cb(s)
            if checkpoint_cb:
                checkpoint_cb(s)

        handle(0, s0)
        for j, s in enumerate(propagate(s0, params, cfg, engine=engine), start=1):
            handle(j, s)
    finally:
        if fh:
            fh.close()
    return rows[:kept], monitor


def execute(spec: RunSpec, out_dir, threads: int = 1) -> dict:
    """Run ``spec`` and write outputs into ``out_dir``; returns the manifest (also saved as manifest.json)."""
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    headline = {}
    status = "ok"
    error = None

    def add(path, kind):
        files[os.path.basename(path)] = {"kind": kind, "path": path}

    params = spec.params
    cfg_path = os.path.join(out_dir, "resolved.ini")
    with open(cfg_path, "w") as fh:
        fh.write(resolved_text(spec))
    add(cfg_path, "config")

    try:
        for family in spec.outputs.curves:
            x = np.linspace(*spec.outputs.curves_range, spec.outputs.curves_points)
            vp, vm = potential_curves(family, params, x)
            path = os.path.join(out_dir, f"curves_{family}.tsv")
            write_curves_table(path, x, vp, vm)
            add(path, "curves")

        extent = resolved_extent(spec)
        grid = build_grid(params, spec.grid.x_center, extent, spec.grid.n_points)
        s0 = make_initial(spec.initial, params, grid)
        if s0.basis is not Basis.DIABATIC:
            from .bases import change_basis
            s0 = change_basis(s0, Basis.DIABATIC, params)
            s0.meta["initial_channel"] = spec.initial.channel
        headline["grid"] = {"x_min": grid.x_min, "x_max": grid.x_max, "n_points": grid.n_points}

        if spec.outputs.propagate:
            headline.update(_run_dynamics(spec, s0, params, grid, out_dir, add))

        for name in spec.outputs.spectra:
            table, ts, e_mean = single_channel_timescales(name, params, grid, s0, spec.outputs.spectra_n0)
            path = os.path.join(out_dir, f"spectrum_{name}.tsv")
            table.write(path)
            add(path, "spectrum")
            headline.setdefault("timescales", {})[name] = {
                "n0": ts.n0, "mean_energy": e_mean, "T_cl": ts.T_cl, "T_rev": ts.T_rev, "T_sup": ts.T_sup}

        rev = headline.get("revival")
        scales = headline.get("timescales", {})
        if rev and "A+" in scales and "D-" in scales and headline.get("P_sp") is not None:
            pred = predicted_revival(headline["P_sp"], scales["A+"]["T_rev"], scales["D-"]["T_rev"])
            rev["predicted_T_rev"] = pred
            rev["relative_difference"] = abs(rev["measured_T_rev"] - pred) / pred
    except IonTrapError as exc:
        status, error = "failed", f"{type(exc).__name__}: {exc}"
        log.error("run failed: %s", error)

    for entry in files.values():
        entry["sha256"] = sha256(entry["path"]) if os.path.exists(entry["path"]) else None
        entry["path"] = os.path.relpath(entry["path"], out_dir)
    manifest = {"status": status, "error": error, "preset": spec.preset, "files": files, "headline": headline}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
    if status != "ok":
        raise RunFailed(manifest, error)
    return manifest


class RunFailed(NumericalError):
    def __init__(self, manifest, message):
        super().__init__(message)
        self.manifest = manifest


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def _run_dynamics(spec: RunSpec, s0, params, grid, out_dir, add) -> dict:
    cfg = spec.propagator
    ham = DiabaticHamiltonian(params, grid)
    engine = None
    if cfg.method == "spectral" or spec.outputs.envelope:
        engine = SpectralPropagator(ham, s0.psi * math.sqrt(grid.dx))
    out = {}

    # Wigner snapshots at the report times nearest to the requested ones
    pending = sorted(spec.outputs.wigner_times)
    p_axis = None
    if spec.outputs.wigner_p is not None:
        lo, hi, count = spec.outputs.wigner_p
        p_axis = np.linspace(lo, hi, int(count))

    def wigner_cb(s):
        while pending and s.time >= pending[0] - 0.5 * cfg.dt_report:
            target = pending.pop(0)
            wg = wigner(s, p_axis=p_axis, x_stride=spec.outputs.wigner_x_stride)
            path = os.path.join(out_dir, f"wigner_t{target:.6e}.tsv")
            wg.write(path)
            add(path, "wigner")
            add(path + ".axes", "wigner-axes")
            # the state itself, so marginals can be checked against channel densities
            ck = os.path.join(out_dir, f"wigner_t{target:.6e}.bin")
            write_checkpoint(ck, s, params)
            add(ck, "checkpoint")

    next_ck = [spec.outputs.checkpoint_every]

    def checkpoint_cb(s):
        every = spec.outputs.checkpoint_every
        if every and s.time >= next_ck[0] - 0.5 * cfg.dt_report:
            path = os.path.join(out_dir, f"checkpoint_{int(round(s.time / every)):06d}.bin")
            write_checkpoint(path, s, params)
            add(path, "checkpoint")
            next_ck[0] += every

    series_path = os.path.join(out_dir, "series.tsv") if spec.outputs.series else None
    rows, monitor = _record_loop(spec, s0, params, cfg, ham, series_path, engine,
                                 wigner_cb if pending else None,
                                 checkpoint_cb if spec.outputs.checkpoint_every else None)
    if series_path:
        add(series_path, "series")
    series = ObservableSeries.from_array(rows, {"initial_channel": s0.meta.get("initial_channel", "+")})
    out["identities"] = monitor.summary()
    norm = series.column("norm2")
    energy = series.column("E_tot")
    out["norm_drift"] = float(np.max(np.abs(norm - norm[0])))
    out["energy_drift"] = float(np.max(np.abs(energy - energy[0])) / max(abs(energy[0]), 1e-300))

    # classical period and splitting need >= 50 samples per period; otherwise probe
    probe = series
    if cfg.dt_report > params.period / MIN_SAMPLES_PER_PERIOD:
        probe_cfg = PropagatorConfig(params.period / PROBE_SAMPLES, PROBE_PERIODS * params.period,
                                     cfg.spectral_margin, cfg.cheb_tail_tol, cfg.max_order, cfg.method)
        probe_path = os.path.join(out_dir, "probe_series.tsv")
        probe_rows, probe_monitor = _record_loop(spec, s0, params, probe_cfg, ham, probe_path, engine)
        add(probe_path, "series")
        probe = ObservableSeries.from_array(probe_rows, series.meta)
        out["probe_identities"] = probe_monitor.summary()
    try:
        t_cl = detect_classical_period(probe)
        out["T_cl"] = t_cl
        out["P_sp"] = splitting_fraction(probe, t_cl)
    except (NumericalError, ValueError) as exc:
        out["T_cl"] = out["P_sp"] = None
        out["period_detection"] = str(exc)

    if spec.outputs.envelope and out["T_cl"]:
        t_end = spec.outputs.envelope_t_end or cfg.t_end
        times, heights = autocorrelation_envelope(engine.autocorrelation, out["T_cl"], t_end,
                                                  spec.outputs.envelope_stride)
        path = os.path.join(out_dir, "envelope.tsv")
        np.savetxt(path, np.column_stack([times, heights]), delimiter="\t", header="t\tabsA_peak",
                   comments="", fmt="%.17g")
        add(path, "envelope")
        try:
            rep = revival_analysis(times, heights)
            out["revival"] = {
                "collapse_time": rep.collapse_time,
                "dominant_time": rep.dominant_time,
                "dominant_height": rep.dominant_height,
                "measured_T_rev": rep.measured_T_rev,
                "peaks": [list(p) for p in rep.peaks],
            }
        except NumericalError as exc:
            out["revival"] = None
            out["revival_detection"] = str(exc)
    return out
