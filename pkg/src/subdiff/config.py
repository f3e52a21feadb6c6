"""TOML experiment configuration.

Physics parameters are always explicit; only tolerances and output switches
have defaults. A minimal PDE config::

    seed = 7

    [orders]
    nu = 0.7
    nus = [0.3]

    [fdo]
    type = "II"

    [operators]
    rho = { kind = "plateau_ramp", base = 1.0, slope = 1.0, t_plateau = 1.0 }
    rho_i = [{ kind = "plateau_ramp", base = 0.5, slope = 0.5, t_plateau = 1.0 }]
    a1 = { kind = "x_affine", c0 = 0.0, c1 = 1.0 }
    a0 = { kind = "exp_decay", c = -3.0, d = -1.0 }
    b = [0.0]
    b0 = 0.0

    [kernel]
    kind = "algebraic"          # or "zero"
    coefficient = 0.1
    exponent = 0.2

    [nonlinearity]
    form = "odd_polynomial"     # or "saturating_power" with a, b
    coefficients = [0.0, 0.0, 0.0, 1.0]

    [domain]
    lower = [1.0]
    upper = [2.0]
    bc = "dirichlet"

    [grid]
    nodes = [81]

    [time_mesh]
    kind = "graded"             # or "uniform"
    T = 50.0
    steps = 2000

    [[initial_conditions]]
    kind = "sine_mode"          # or "constant", "random_smooth"
    amplitude = 1.0
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .fode import FodeSpec, FractionalOrders
from .frac_calculus import AlgebraicKernel, TimeMesh, ZeroKernel
from .pde import ConstantField, Grid, OddPolynomial, SaturatingPower, ProblemSpec, RandomSmooth, SineMode, ZeroNonlinearity

__all__ = ["ExperimentConfig", "FodeConfig", "load_toml", "load_experiment", "load_fode", "flatten"]

TOLERANCE_DEFAULTS = {
    "delta_star": None,
    "monitor_rel_tol": 0.05,
    "monitor_fraction": 0.95,
    "tail_fraction": 0.2,
    "violation_mass": 0.05,
}
OUTPUT_DEFAULTS = {"svg": True}


def load_toml(path) -> dict:
    """Parse a TOML file; syntax errors become ConfigError with line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"line (\d+), column (\d+)", msg)
        loc = f"{m.group(1)}:{m.group(2)}" if m else "?:?"
        raise ConfigError(f"{path}:{loc}: {msg}") from exc


def flatten(d: dict, prefix: str = "") -> list:
    """(dotted key, value) pairs in document order; list entries get [i] suffixes."""
    out = []
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.extend(flatten(v, key + "."))
        elif isinstance(v, list) and v and all(isinstance(e, dict) for e in v):
            for i, e in enumerate(v):
                out.extend(flatten(e, f"{key}[{i}]."))
        else:
            out.append((key, v))
    return out


def _section(raw: dict, name: str, path) -> dict:
    if name not in raw:
        raise ConfigError(f"{path}: missing section [{name}]")
    sec = raw[name]
    if not isinstance(sec, dict):
        raise ConfigError(f"{path}: [{name}] must be a table")
    return sec


def _need(sec: dict, key: str, where: str):
    if key not in sec:
        raise ConfigError(f"{where}: missing key '{key}'")
    return sec[key]


def _float(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def parse_orders(sec: dict) -> FractionalOrders:
    try:
        return FractionalOrders(_float(_need(sec, "nu", "[orders]"), "orders.nu"),
                                tuple(_float(v, "orders.nus") for v in sec.get("nus", [])))
    except ValueError as exc:
        raise ConfigError(f"[orders]: {exc}") from exc


def parse_kernel(sec: dict):
    kind = _need(sec, "kind", "[kernel]")
    if kind == "zero":
        return ZeroKernel()
    if kind == "algebraic":
        exponent = _float(_need(sec, "exponent", "[kernel]"), "kernel.exponent")
        if not 0 <= exponent < 1:
            raise ConfigError("[kernel]: exponent must lie in [0, 1)")
        return AlgebraicKernel(_float(_need(sec, "coefficient", "[kernel]"), "kernel.coefficient"), exponent)
    raise ConfigError(f"[kernel]: unknown kind {kind!r} (known: zero, algebraic)")


def parse_nonlinearity(sec: dict):
    form = _need(sec, "form", "[nonlinearity]")
    if form == "odd_polynomial":
        return OddPolynomial(tuple(_float(v, "nonlinearity.coefficients")
                                   for v in _need(sec, "coefficients", "[nonlinearity]")))
    if form in ("saturating_power", "paper_example"):
        return SaturatingPower(_float(_need(sec, "a", "[nonlinearity]"), "nonlinearity.a"),
                            _float(_need(sec, "b", "[nonlinearity]"), "nonlinearity.b"))
    if form == "zero":
        return ZeroNonlinearity()
    raise ConfigError(f"[nonlinearity]: unknown form {form!r} (known: odd_polynomial, saturating_power, zero)")


def parse_mesh(sec: dict, nu: float) -> TimeMesh:
    kind = _need(sec, "kind", "[time_mesh]")
    T = _float(_need(sec, "T", "[time_mesh]"), "time_mesh.T")
    steps = _need(sec, "steps", "[time_mesh]")
    if not isinstance(steps, int) or steps < 1:
        raise ConfigError("[time_mesh]: steps must be a positive integer")
    if T <= 0:
        raise ConfigError("[time_mesh]: T must be positive")
    if kind == "uniform":
        return TimeMesh.uniform(T, steps)
    if kind == "graded":
        r = _float(sec.get("grading", (2 - nu) / nu), "time_mesh.grading")
        return TimeMesh.graded(T, steps, r)
    raise ConfigError(f"[time_mesh]: unknown kind {kind!r} (known: uniform, graded)")


def parse_initial(entry: dict, seed: Optional[int], bc: str, where: str):
    kind = _need(entry, "kind", where)
    if kind == "sine_mode":
        return SineMode(_float(_need(entry, "amplitude", where), where + ".amplitude"),
                        tuple(int(m) for m in entry.get("modes", [1])))
    if kind == "constant":
        return ConstantField(_float(_need(entry, "value", where), where + ".value"))
    if kind == "random_smooth":
        s = entry.get("seed", seed)
        if s is None:
            raise ConfigError(f"{where}: random_smooth needs a seed (top-level 'seed' or per entry)")
        return RandomSmooth(_float(_need(entry, "amplitude", where), where + ".amplitude"),
                            int(_need(entry, "n_modes", where)), int(s), bc)
    raise ConfigError(f"{where}: unknown initial condition kind {kind!r}")


@dataclass
class ExperimentConfig:
    raw: dict
    problems: list
    grid: Grid
    mesh: TimeMesh
    tolerances: dict
    outputs: dict
    seed: Optional[int] = None
    path: Optional[str] = None

    @property
    def problem(self) -> ProblemSpec:
        return self.problems[0]

    def echo(self) -> list:
        return flatten(self.raw)


def build_experiment(raw: dict, path="<config>") -> ExperimentConfig:
    seed = raw.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ConfigError(f"{path}: seed must be an integer")
    try:
        orders = parse_orders(_section(raw, "orders", path))
        fdo = _need(_section(raw, "fdo", path), "type", "[fdo]")
        ops = _section(raw, "operators", path)
        kernel = parse_kernel(_section(raw, "kernel", path))
        f = parse_nonlinearity(_section(raw, "nonlinearity", path))
        dom = _section(raw, "domain", path)
        lower = _need(dom, "lower", "[domain]")
        upper = _need(dom, "upper", "[domain]")
        if not isinstance(lower, list) or not isinstance(upper, list) or not lower or len(lower) != len(upper):
            raise ConfigError("[domain]: lower and upper must be nonempty lists of equal length")
        domain = tuple((_float(a, "domain.lower"), _float(b, "domain.upper")) for a, b in zip(lower, upper))
        bc = _need(dom, "bc", "[domain]")
        gsec = _section(raw, "grid", path)
        nodes = _need(gsec, "nodes", "[grid]")
        nodes = tuple(nodes) if isinstance(nodes, list) else (nodes,) * len(domain)
        if len(nodes) != len(domain):
            raise ConfigError("[grid]: nodes must have one entry per axis")
        grid = Grid.box(domain, nodes)
        mesh = parse_mesh(_section(raw, "time_mesh", path), orders.nu)
        ics = raw.get("initial_conditions")
        if not isinstance(ics, list) or not ics:
            raise ConfigError(f"{path}: need at least one [[initial_conditions]] entry")
        problems = []
        for i, entry in enumerate(ics):
            u0 = parse_initial(entry, seed, bc, f"initial_conditions[{i}]")
            problems.append(ProblemSpec(
                orders=orders, fdo=fdo,
                rho=_need(ops, "rho", "[operators]"), rho_i=tuple(ops.get("rho_i", [])),
                a1=_need(ops, "a1", "[operators]"), a0=_need(ops, "a0", "[operators]"),
                b=tuple(_need(ops, "b", "[operators]")), b0=_need(ops, "b0", "[operators]"),
                kernel=kernel, f=f, domain=domain, bc=bc, u0=u0))
    except ConfigError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(str(path)) else f"{path}: {msg}") from exc
    tol = dict(TOLERANCE_DEFAULTS)
    tol.update(raw.get("tolerances", {}))
    unknown = set(tol) - set(TOLERANCE_DEFAULTS)
    if unknown:
        raise ConfigError(f"{path}: unknown tolerance keys {sorted(unknown)}")
    out = dict(OUTPUT_DEFAULTS)
    out.update(raw.get("outputs", {}))
    return ExperimentConfig(raw, problems, grid, mesh, tol, out, seed, str(path))


def load_experiment(path) -> ExperimentConfig:
    return build_experiment(load_toml(path), path)


@dataclass
class FodeConfig:
    raw: dict
    spec: FodeSpec
    mesh: TimeMesh
    path: Optional[str] = None


def load_fode(path) -> FodeConfig:
    """Config for a scalar problem: [orders], [fode], [time_mesh] and optionally [kernel]."""
    raw = load_toml(path)
    try:
        orders = parse_orders(_section(raw, "orders", path))
        sec = _section(raw, "fode", path)
        memory = parse_kernel(raw["kernel"]) if "kernel" in raw else None
        if isinstance(memory, ZeroKernel):
            memory = None
        spec = FodeSpec(orders, _need(sec, "leading", "[fode]"), tuple(sec.get("lower", [])),
                        damping=_float(_need(sec, "damping", "[fode]"), "fode.damping"),
                        memory=memory,
                        forcing=_float(_need(sec, "forcing", "[fode]"), "fode.forcing"),
                        initial=_float(_need(sec, "initial", "[fode]"), "fode.initial"))
        mesh = parse_mesh(_section(raw, "time_mesh", path), orders.nu)
    except ValueError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(str(path)) else f"{path}: {msg}") from exc
    return FodeConfig(raw, spec, mesh, str(path))
