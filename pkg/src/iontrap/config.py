"""Run configuration: an INI-style ``key = value`` format, figure presets and overrides.

Numeric fields accept plain arithmetic with the constants ``T0`` (bare trap
period 2 pi / omega) and ``pi``, e.g. ``dt_report = T0/200``.  The resolved
echo always writes plain floats, so parsing it reproduces the same RunSpec.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .initial import InitialStateSpec
from .model import Basis, IonTrapParams
from .propagation import PropagatorConfig


@dataclass(frozen=True)
class GridPolicy:
    n_points: int = 2048
    x_extent: float | None = None  # None: 1.5 x the classical turning point
    x_center: float = 0.0


@dataclass(frozen=True)
class OutputSpec:
    propagate: bool = True
    series: bool = True
    wigner_times: tuple = ()
    wigner_p: tuple | None = None  # (p_min, p_max, count); None: natural FFT axis
    wigner_x_stride: int = 1
    curves: tuple = ()
    curves_range: tuple = (-9.0, 9.0)
    curves_points: int = 1801
    spectra: tuple = ()
    spectra_n0: int | None = None
    envelope: bool = False
    envelope_t_end: float | None = None
    envelope_stride: int = 50
    checkpoint_every: float | None = None


@dataclass(frozen=True)
class RunSpec:
    params: IonTrapParams
    grid: GridPolicy
    initial: InitialStateSpec
    propagator: PropagatorConfig
    outputs: OutputSpec = field(default_factory=OutputSpec)
    preset: str | None = None


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def _eval_expr(text: str, names: dict) -> float:
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in names:
            return float(names[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {text!r}")
    return ev(ast.parse(text.strip(), mode="eval"))


# -- raw INI handling ---------------------------------------------------------

def _parse_ini(text: str):
    """{section: {key: (value, line)}} with comments (#, ;) and blank lines ignored."""
    out: dict = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any section", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        if key in out[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", lineno)
        out[section][key] = (value, lineno)
    return out


_BOOL = {"yes": True, "true": True, "on": True, "1": True, "no": False, "false": False, "off": False, "0": False}

# section -> key -> kind
SCHEMA = {
    "run": {"preset": "str"},
    "params": {"m": "num", "omega": "num", "delta": "num", "lam": "num", "k": "num", "phi": "num"},
    "grid": {"n_points": "int", "x_extent": "num?", "x_center": "num"},
    "initial": {"kind": "str", "x0": "num", "sigma": "num?", "n": "int", "basis": "str", "channel": "str",
                "p0": "num"},
    "propagator": {"method": "str", "dt_report": "num", "t_end": "num", "spectral_margin": "num",
                   "cheb_tail_tol": "num"},
    "outputs": {"propagate": "bool", "series": "bool", "wigner_times": "nums", "wigner_p": "nums?",
                "wigner_x_stride": "int", "curves": "strs", "curves_range": "nums", "curves_points": "int",
                "spectra": "strs", "spectra_n0": "int?", "envelope": "bool", "envelope_t_end": "num?",
                "envelope_stride": "int", "checkpoint_every": "num?"},
}
REQUIRED = {"params": ("m", "omega", "delta", "lam", "k", "phi")}


def _convert(kind: str, value: str, names: dict, line: int):
    try:
        optional = kind.endswith("?")
        kind = kind.rstrip("?")
        if optional and value.lower() in ("none", "auto", ""):
            return None
        if kind == "str":
            return value
        if kind == "bool":
            return _BOOL[value.lower()]
        if kind == "int":
            v = _eval_expr(value, names)
            if v != int(v):
                raise ValueError(f"{value!r} is not an integer")
            return int(v)
        if kind == "num":
            v = _eval_expr(value, names)
            if not math.isfinite(v):
                raise ValueError(f"{value!r} is not finite")
            return v
        if kind == "nums":
            return tuple(_eval_expr(v, names) for v in value.replace(",", " ").split())
        if kind == "strs":
            return tuple(v for v in value.replace(",", " ").split())
    except (KeyError, ValueError, SyntaxError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad value {value!r}: {exc}", line) from None
    raise AssertionError(kind)


def _merge(base: dict, extra: dict) -> dict:
    out = {s: dict(v) for s, v in base.items()}
    for section, items in extra.items():
        out.setdefault(section, {}).update(items)
    return out


def _build(raw: dict, preset: str | None) -> RunSpec:
    def line_of(section, key=None):
        items = raw.get(section, {})
        if key is not None and key in items:
            return items[key][1]
        return min((ln for _, ln in items.values()), default=None)

    for section, keys in REQUIRED.items():
        for key in keys:
            if key not in raw.get(section, {}):
                raise ConfigError(f"missing required key {key!r} in [{section}]", line_of(section))

    def get(section, key, names, default=None):
        if key not in raw.get(section, {}):
            return default
        value, line = raw[section][key]
        return _convert(SCHEMA[section][key], value, names, line)

    consts = {"pi": math.pi}
    pvals = {k: get("params", k, consts) for k in REQUIRED["params"]}
    try:
        params = IonTrapParams(**pvals)
    except ValueError as exc:
        raise ConfigError(str(exc), line_of("params")) from None
    names = {"pi": math.pi, "T0": params.period}

    grid = GridPolicy(
        n_points=get("grid", "n_points", names, 2048),
        x_extent=get("grid", "x_extent", names, None),
        x_center=get("grid", "x_center", names, 0.0),
    )
    try:
        initial = InitialStateSpec(
            kind=get("initial", "kind", names, "gaussian"),
            x0=get("initial", "x0", names, 0.0),
            sigma=get("initial", "sigma", names, None),
            n=get("initial", "n", names, 0),
            basis=Basis(get("initial", "basis", names, "diabatic")),
            channel=get("initial", "channel", names, "+"),
            p0=get("initial", "p0", names, 0.0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), line_of("initial")) from None
    try:
        prop = PropagatorConfig(
            dt_report=get("propagator", "dt_report", names, params.period / 200),
            t_end=get("propagator", "t_end", names, params.period),
            spectral_margin=get("propagator", "spectral_margin", names, 1.1),
            cheb_tail_tol=get("propagator", "cheb_tail_tol", names, 1e-14),
            method=get("propagator", "method", names, "chebyshev"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), line_of("propagator")) from None

    defaults = OutputSpec()
    out_kw = {}
    for f in fields(OutputSpec):
        out_kw[f.name] = get("outputs", f.name, names, getattr(defaults, f.name))
    outputs = OutputSpec(**out_kw)
    spec = RunSpec(params, grid, initial, prop, outputs, preset)
    _validate(spec, line_of)
    return spec


def _validate(spec: RunSpec, line_of):
    g, ini, out, prop = spec.grid, spec.initial, spec.outputs, spec.propagator
    if g.n_points < 8 or g.n_points & (g.n_points - 1):
        raise ConfigError("grid.n_points must be a power of two >= 8", line_of("grid", "n_points"))
    extent = g.x_extent if g.x_extent is not None else resolved_extent(spec)
    if extent <= 0:
        raise ConfigError("grid.x_extent must be positive", line_of("grid", "x_extent"))
    width = ini.width(spec.params)
    if abs(ini.x0 - g.x_center) + 6.0 * width >= extent:
        raise ConfigError(f"initial x0={ini.x0:g} is outside the grid [{g.x_center - extent:g}, "
                          f"{g.x_center + extent:g}]", line_of("initial", "x0") or line_of("grid", "x_extent"))
    for t in out.wigner_times:
        if t < 0 or t > prop.t_end * (1 + 1e-12):
            raise ConfigError(f"wigner time {t:g} outside [0, t_end]", line_of("outputs", "wigner_times"))
    if out.wigner_p is not None and (len(out.wigner_p) != 3 or out.wigner_p[2] < 2):
        raise ConfigError("outputs.wigner_p must be 'p_min p_max count'", line_of("outputs", "wigner_p"))
    for name in out.curves:
        if name not in ("bare", "diabatic", "adiabatic"):
            raise ConfigError(f"unknown curve family {name!r}", line_of("outputs", "curves"))
    for name in out.spectra:
        if name not in ("A+", "A-", "D+", "D-", "B+", "B-", "H"):
            raise ConfigError(f"unknown curve label {name!r}", line_of("outputs", "spectra"))
    if len(out.curves_range) != 2 or out.curves_range[0] >= out.curves_range[1]:
        raise ConfigError("outputs.curves_range must be 'x_min x_max'", line_of("outputs", "curves_range"))


def resolved_extent(spec: RunSpec) -> float:
    """Grid half-width actually used (auto: 1.5 x the turning point at the initial energy)."""
    from .bases import curve
    from .model import default_extent

    if spec.grid.x_extent is not None:
        return spec.grid.x_extent
    ini = spec.initial
    name = ("D" if ini.basis is Basis.DIABATIC else "A" if ini.basis is Basis.ADIABATIC else "B") + ini.channel
    energy = float(curve(name, spec.params, [ini.x0])[0]) + spec.params.lam + abs(spec.params.delta)
    return default_extent(spec.params, ini.x0 - spec.grid.x_center, energy)


def parse_config(text: str, overrides=()) -> RunSpec:
    """Parse INI text (optionally naming a preset in [run]) and apply ``section.key=value`` overrides."""
    raw = _parse_ini(text)
    preset = raw.get("run", {}).get("preset", (None, None))[0]
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}", raw["run"]["preset"][1])
        raw = _merge(_parse_ini(PRESETS[preset]), raw)
    raw = _merge(raw, _parse_overrides(overrides))
    return _build(raw, preset)


def _parse_overrides(overrides) -> dict:
    out: dict = {}
    for i, item in enumerate(overrides, start=1):
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value", None)
        if section not in SCHEMA or name not in SCHEMA[section]:
            raise ConfigError(f"override {item!r}: unknown key {key.strip()!r}", None)
        # overrides have no source line; tag them with a negative index for error messages
        out.setdefault(section, {})[name] = (value.strip(), -i)
    return out


def load_preset(name: str, overrides=()) -> RunSpec:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return parse_config(f"[run]\npreset = {name}\n", overrides)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, Basis):
        return v.value
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def resolved_text(spec: RunSpec) -> str:
    """Every field written out explicitly; parse_config(resolved_text(s)) == s up to the preset tag."""
    lines = ["# resolved configuration"]
    if spec.preset:
        lines.append(f"# from preset {spec.preset}")
    p = spec.params
    sections = [
        ("params", [(n, getattr(p, n)) for n in REQUIRED["params"]]),
        ("grid", [("n_points", spec.grid.n_points), ("x_extent", spec.grid.x_extent), ("x_center", spec.grid.x_center)]),
        ("initial", [("kind", spec.initial.kind), ("x0", spec.initial.x0), ("sigma", spec.initial.sigma),
                     ("n", spec.initial.n), ("basis", spec.initial.basis), ("channel", spec.initial.channel),
                     ("p0", spec.initial.p0)]),
        ("propagator", [("method", spec.propagator.method), ("dt_report", spec.propagator.dt_report),
                        ("t_end", spec.propagator.t_end), ("spectral_margin", spec.propagator.spectral_margin),
                        ("cheb_tail_tol", spec.propagator.cheb_tail_tol)]),
        ("outputs", [(f.name, getattr(spec.outputs, f.name)) for f in fields(OutputSpec)]),
    ]
    for name, items in sections:
        lines.append(f"\n[{name}]")
        for key, value in items:
            if isinstance(value, tuple) and not value:
                value = ""
            lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def strip_preset(spec: RunSpec) -> RunSpec:
    return replace(spec, preset=None)


# -- presets --------------------------------------------------------------------

_FIG2_BASE = """
[params]
m = 80000
omega = 0.0005
lam = 0.05
k = 0.2
phi = 1.07249074
delta = 0.02514

[grid]
n_points = 2048
x_extent = 9
"""

_FIG3_BASE = _FIG2_BASE.replace("delta = 0.02514", "delta = 0.02514/5") + """
[initial]
kind = gaussian
x0 = 6
sigma = 0.047
channel = -
basis = diabatic

[propagator]
method = chebyshev
dt_report = T0/200
t_end = 10*T0
"""

_FIG5_PARAMS = """
[params]
m = 80000
omega = 0.0005
lam = 0.064727653164347
k = 0.2
phi = 1.07244080531656
delta = 0.005025343787836

[grid]
n_points = 2048
x_extent = 9

[initial]
kind = gaussian
x0 = 6
sigma = 0.0340999659
channel = -
basis = diabatic
"""

PRESETS = {
    "fig2a": _FIG2_BASE + """
[initial]
x0 = 6
sigma = 0.047

[outputs]
propagate = no
curves = diabatic adiabatic bare
""",
    "fig2b": _FIG2_BASE.replace("k = 0.2", "k = 1").replace("phi = 1.07249074", "phi = 0") + """
[initial]
x0 = 6
sigma = 0.047

[outputs]
propagate = no
curves = diabatic adiabatic bare
""",
    "fig3-coherent": _FIG3_BASE.replace("kind = gaussian\n", "kind = coherent\n").replace("sigma = 0.047\n", ""),
    "fig3-squeezed": _FIG3_BASE,
    "fig4": _FIG3_BASE.replace("method = chebyshev", "method = spectral")
    .replace("dt_report = T0/200", "dt_report = T0/8").replace("t_end = 10*T0", "t_end = 2000*T0") + """
[outputs]
wigner_times = 0 T0/8 2*T0/8 3*T0/8 4*T0/8 5*T0/8 6*T0/8 7*T0/8 T0 2000*T0
wigner_p = -300 300 601
wigner_x_stride = 2
""",
    "fig4-coherent": _FIG3_BASE.replace("kind = gaussian\n", "kind = coherent\n").replace("sigma = 0.047\n", "")
    .replace("dt_report = T0/200", "dt_report = T0/8").replace("t_end = 10*T0", "t_end = T0") + """
[outputs]
wigner_times = 0 T0/8 2*T0/8 3*T0/8 4*T0/8 5*T0/8 6*T0/8 7*T0/8 T0
wigner_p = -300 300 601
wigner_x_stride = 2
""",
    "fig5": _FIG5_PARAMS + """
[propagator]
method = spectral
dt_report = T0/8
t_end = 96000*T0

[outputs]
spectra = A+ D-
envelope = yes
envelope_stride = 50
checkpoint_every = 500*T0
""",
}
