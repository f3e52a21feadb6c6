"""Reproduction suites: each returns measured values against fixed thresholds.

Every suite is deterministic and sized to finish within a few minutes on a
single core. Independent runs inside a suite fan out over a thread pool
whose size is capped by the ``SUBDIFF_THREADS`` environment variable.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Callable

import numpy as np
from scipy import integrate

from .analysis import (absorbing_time, fit_bound_constant, fit_decay_exponent, monitor_energy_inequality,
                       validate_hypotheses, violation_mass)
from .coefficients import ExpDecay, PlateauRamp, XAffine
from .fode import FodeSpec, FractionalOrders, decay_g, solve_const_multiterm, step_fode_numeric
from .frac_calculus import (AlgebraicKernel, History, TimeMesh, caputo_l1_all, caputo_product, jtheta,
                            rl_integral)
from .pde import Grid, OddPolynomial, ProblemSpec, SineMode, ZeroNonlinearity, run
from .special_fn import MLParams, calE, gamma, ml_multinomial, omega, omega_convolution

__all__ = ["Check", "SUITES", "run_suite", "log2_slopes", "thread_count"]


@dataclass
class Check:
    criterion: int
    name: str
    value: float
    threshold: float
    relation: str  # "<=" or ">="
    detail: str = ""

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value <= self.threshold if self.relation == "<=" else self.value >= self.threshold

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{tag} [{self.criterion}] {self.name}: {self.value:.4g} {self.relation} {self.threshold:.4g}{extra}"


def thread_count() -> int:
    env = os.environ.get("SUBDIFF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def _pmap(fn: Callable, items) -> list:
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def log2_slopes(errors) -> np.ndarray:
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


# ---------------------------------------------------------------------------
# 1. identities
# ---------------------------------------------------------------------------

def semigroup_error() -> float:
    """Worst relative error of omega_a * omega_b = omega_{a+b}, by quadrature and by exact product integration."""
    worst = 0.0
    for a, b in [(0.3, 0.5), (0.5, 0.5), (0.7, 0.9), (1.2, 0.4), (0.25, 1.6)]:
        for t in (0.1, 1.0, 3.0):
            exact = omega(a + b, t)
            worst = max(worst, abs(omega_convolution(a, b, t) - exact) / exact)
    # piecewise-linear samples are reproduced exactly: omega_1 = 1 and omega_2 = t
    for kind in ("uniform", "graded"):
        mesh = TimeMesh.uniform(2.0, 200) if kind == "uniform" else TimeMesh.graded(2.0, 200, 2.5)
        t = mesh.nodes[1:]
        for theta in (0.3, 0.6, 1.0):
            for b in (1.0, 2.0):
                h = History(mesh, mesh.nodes ** (b - 1) / gamma(b))
                got = rl_integral(h, theta).values[1:]
                worst = max(worst, float(np.max(np.abs(got - omega(theta + b, t)) / omega(theta + b, t))))
    return worst


def inverse_identity_slopes(theta: float, T: float = 1.0, Ms=(50, 100, 200, 400, 800)):
    errs = []
    for M in Ms:
        mesh = TimeMesh.uniform(T, M)
        v = History.sample(mesh, lambda s: 1.0 - np.cos(s))
        d = caputo_l1_all(v, theta)
        d[0] = 0.0
        back = rl_integral(History(mesh, d), theta).values + v.values[0]
        errs.append(float(np.max(np.abs(back - v.values))))
    return errs, log2_slopes(errs)


def product_rule_residual(theta: float = 0.5, dt: float = 1e-3, T: float = 2.0) -> float:
    """Direct L1 value of D(rho u) against rho D u + u(0) D rho + theta/Gamma(1-theta) J."""
    mesh = TimeMesh.uniform(T, int(round(T / dt)))
    rho = History.sample(mesh, lambda s: 1.0 + np.minimum(s, 1.0))
    u = History.sample(mesh, lambda s: s * s)
    du = caputo_l1_all(u, theta)
    drho = caputo_l1_all(rho, theta)
    c = theta / gamma(1.0 - theta)
    worst = 0.0
    for n in range(1, len(mesh)):
        direct = caputo_product(rho, u, theta, n)
        split = rho.values[n] * du[n] + u.values[0] * drho[n] + c * jtheta(rho, u, theta, n)
        worst = max(worst, abs(direct - split))
    return worst


def chain_inequality_min(p: int, theta: float, T: float = 10.0, M: int = 1000) -> float:
    """min over nodes of p v^(p-1) D v - D v^p for v = 1 + sin t (relative to the scale of D v^p)."""
    mesh = TimeMesh.uniform(T, M)
    v = History.sample(mesh, lambda s: 1.0 + np.sin(s))
    dv = caputo_l1_all(v, theta)[1:]
    dvp = caputo_l1_all(History(mesh, v.values ** p), theta)[1:]
    gap = p * v.values[1:] ** (p - 1) * dv - dvp
    return float(np.min(gap) / max(1.0, np.max(np.abs(dvp))))


def suite_identities() -> list:
    out = [Check(1, "omega semigroup, max relative error", semigroup_error(), 1e-8, "<=")]
    for theta in (0.3, 0.5, 0.7):
        errs, sl = inverse_identity_slopes(theta)
        out.append(Check(1, f"I^th D^th v = v slope, theta={theta}", float(np.min(sl[-2:])), 1.8 - theta, ">=",
                         f"errors {errs[0]:.2e}..{errs[-1]:.2e}"))
    out.append(Check(1, "product decomposition residual, dt=1e-3, theta=0.5", product_rule_residual(), 1e-3, "<="))
    worst = min(chain_inequality_min(p, th) for p in (2, 4) for th in (0.3, 0.5, 0.7))
    out.append(Check(1, "chain inequality min gap, v=1+sin t, p in {2,4}", worst, -1e-12, ">="))
    return out


# ---------------------------------------------------------------------------
# 2. Mittag-Leffler
# ---------------------------------------------------------------------------

def load_ml_oracle() -> dict:
    """Frozen multiprecision reference values shipped with the package."""
    return json.loads(resources.files("subdiff").joinpath("data/ml_oracle.json").read_text())


def oracle_cases(sections=("ml", "grid")) -> list:
    data = load_ml_oracle()
    return [(r["beta_bar"], r["beta0"], r["z_bar"], float(r["value"])) for s in sections for r in data[s]]


def ml_oracle_error(cases) -> float:
    """Worst relative error of ml_multinomial over (beta_bar, beta0, z, value) records."""
    worst = 0.0
    for beta, beta0, z, ref in cases:
        got = ml_multinomial(MLParams(tuple(beta), beta0, tuple(0.0 for _ in beta)), tuple(z))
        worst = max(worst, abs(got - ref) / abs(ref))
    return worst


def shift_identity_error(theta: float = 0.5) -> float:
    """I^theta calE_{b0} = calE_{b0+theta}, quadrature with the algebraic end weights."""
    worst = 0.0
    for beta, b0, d in [((0.8, 0.4), 0.8, (1.0, 0.5)), ((0.6,), 0.6, (2.0,)), ((0.7, 0.5), 0.9, (0.5, 1.5))]:
        P = MLParams(beta, b0, d)
        for t in (0.5, 2.0, 6.0):
            # calE_{b0}(s) = s^(b0-1) * smooth(s): move both end singularities into the weight
            smooth = lambda s: calE(s, P) * s ** (1.0 - b0) if s > 0 else 1.0 / gamma(b0)
            val, _ = integrate.quad(smooth, 0.0, t, weight="alg", wvar=(b0 - 1.0, theta - 1.0),
                                    epsabs=0.0, epsrel=1e-11, limit=200)
            lhs = val / gamma(theta)
            rhs = calE(t, MLParams(beta, b0 + theta, d))
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return worst


def complete_monotonicity_violations(kmax: int = 4) -> int:
    """Count sign violations of (-1)^k Delta^k calE on sampled grids (0 < beta_i < beta0 < 1)."""
    bad = 0
    for beta, b0, d in [((0.8, 0.4), 0.9, (1.0, 0.5)), ((0.5,), 0.7, (2.0,)), ((0.9, 0.3), 0.95, (0.3, 3.0))]:
        P = MLParams(beta, b0, d)
        for lo, hi in [(0.05, 1.0), (0.5, 10.0), (5.0, 60.0)]:
            t = np.linspace(lo, hi, 41)
            y = np.asarray(calE(t, P))
            for k in range(kmax + 1):
                dk = (-1) ** k * np.diff(y, k)
                bad += int(np.count_nonzero(dk < -1e-11 * 2 ** k * np.max(np.abs(y))))
    return bad


def suite_ml() -> list:
    grid = oracle_cases(("grid",))
    out = [Check(2, f"ML vs multiprecision oracle, {len(grid)}-point grid, z in [-5,0]",
                 ml_oracle_error(grid), 1e-10, "<=")]
    out.append(Check(2, "shift identity I^th calE = calE_{+th}", shift_identity_error(), 1e-6, "<="))
    out.append(Check(2, "complete monotonicity sign violations", float(complete_monotonicity_violations()), 0.0, "<="))
    return out


# ---------------------------------------------------------------------------
# 3. scalar problems
# ---------------------------------------------------------------------------

def two_term_gap(nu=0.5, nu1=0.2, T=20.0, M=4000) -> float:
    spec = FodeSpec(FractionalOrders(nu, (nu1,)), 1.0, (0.5,), damping=1.0, forcing=0.5, initial=1.0)
    mesh = TimeMesh.graded(T, M, (2 - nu) / nu)
    exact = solve_const_multiterm(spec, mesh).values
    num = step_fode_numeric(spec, mesh).values
    return float(np.max(np.abs(num - exact) / np.abs(exact)))


def relaxation_gap(nu=0.4, lam=1.0, T=20.0, M=4000) -> float:
    spec = FodeSpec(FractionalOrders(nu), 1.0, (), damping=lam, initial=1.0)
    mesh = TimeMesh.graded(T, M, (2 - nu) / nu)
    num = step_fode_numeric(spec, mesh).values
    ref = np.ones(len(mesh))
    ref[1:] = calE(mesh.nodes[1:], MLParams((nu,), 1.0, (lam,)))
    return float(np.max(np.abs(num - ref)))


def suite_fode() -> list:
    return [
        Check(3, "two-term analytic vs L1 stepper, max relative gap", two_term_gap(), 1e-4, "<=",
              "nu=0.5, nu1=0.2, graded mesh, dt=T/4000"),
        Check(3, "single-term relaxation vs E_nu(-t^nu)", relaxation_gap(), 1e-5, "<=", "nu=0.4"),
    ]


# ---------------------------------------------------------------------------
# 4. decay envelope
# ---------------------------------------------------------------------------

def corollary_problem(amplitude: float) -> ProblemSpec:
    return ProblemSpec(orders=FractionalOrders(0.8, (0.3,)), fdo="I", rho=1.0, rho_i=(0.5,), a1=1.0, a0=-1.0,
                       b=(0.0,), b0=0.0, kernel=None, f=OddPolynomial((0.0, 0.0, 0.0, 1.0)),
                       domain=((0.0, 1.0),), bc="dirichlet", u0=SineMode(amplitude))


def envelope_certificate(spec_of: Callable, grid: Grid, mesh: TimeMesh, scales, g: np.ndarray):
    """Fit C0 on the unit-scale run, then the violation mass of each rescaled run."""
    trajs = _pmap(lambda a: run(spec_of(a), grid, mesh), (1.0,) + tuple(scales))
    base = trajs[0]
    env = lambda tr: 1.0 + math.sqrt(tr.V[0]) * g
    C0 = fit_bound_constant(np.sqrt(base.V), env(base))
    masses = [violation_mass(mesh.nodes, np.sqrt(tr.V), C0 * env(tr)) for tr in trajs[1:]]
    return C0, masses


def suite_corollary1() -> list:
    orders = FractionalOrders(0.8, (0.3,))
    out = [Check(4, "decay_g(1e-8) vs 2", abs(float(decay_g(1e-8, orders, 1.0, (0.5,), 1.0)) - 2.0), 1e-3, "<=")]
    tt = np.geomspace(1e4, 1e6, 41)
    fit = fit_decay_exponent(History(TimeMesh(np.concatenate([[0.0], tt]), "graded", 1.0),
                                     np.concatenate([[2.0], decay_g(tt, orders, 1.0, (0.5,), 1.0)])), (1e4, 1e6))
    out.append(Check(4, "decay_g tail slope + nu1", abs(fit.slope + 0.3), 0.1, "<=", f"slope {fit.slope:.4f}"))
    mesh = TimeMesh.graded(20.0, 1000, (2 - 0.8) / 0.8)
    grid = Grid.box(((0.0, 1.0),), 41)
    rep = validate_hypotheses(corollary_problem(1.0), horizon=mesh.T)
    g = np.empty(len(mesh))
    g[0] = 2.0
    g[1:] = decay_g(mesh.nodes[1:], orders, 1.0, (0.5,), rep["C4"])
    C0, masses = envelope_certificate(corollary_problem, grid, mesh, (0.5, 2.0, 4.0), g)
    out.append(Check(4, "W12 envelope violation mass under u0 scaling {0.5,2,4}", max(masses), 0.05, "<=",
                     f"C0={C0:.4g}"))
    return out


# ---------------------------------------------------------------------------
# 5-6. bounded energy
# ---------------------------------------------------------------------------

def example_problem(amplitude: float) -> ProblemSpec:
    """Coefficients of the one-dimensional example: Omega=(1,2), a1 = x, a0 = -3 - exp(-t)."""
    return ProblemSpec(orders=FractionalOrders(0.7, (0.3,)), fdo="II",
                       rho=PlateauRamp(1.0, 1.0, 1.0), rho_i=(PlateauRamp(0.5, 0.5, 1.0),),
                       a1=XAffine(0.0, 1.0), a0=ExpDecay(-3.0, -1.0), b=(0.2,), b0=0.5,
                       kernel=AlgebraicKernel(0.1, 0.2), f=OddPolynomial((0.0, 0.0, 0.0, 1.0)),
                       domain=((1.0, 2.0),), bc="dirichlet", u0=SineMode(amplitude))


def energy_certificate(trajs):
    """Fit V <= C (1 + V0) on the first trajectory; violation masses of the others."""
    base = trajs[0]
    t = base.mesh.nodes
    C = fit_bound_constant(base.V, np.full(t.size, 1.0 + base.V[0]))
    return C, [violation_mass(t, tr.V, C * (1.0 + tr.V[0])) for tr in trajs[1:]]


def suite_theorem31(T: float = 50.0, M: int = 2000, nodes: int = 81) -> list:
    spec = example_problem(1.0)
    rep = validate_hypotheses(spec, horizon=T, delta_star=0.5)
    out = [
        Check(5, "validator |delta0 - 3|", abs(rep["delta0"] - 3.0), 1e-12, "<="),
        Check(5, "validator |delta1 - 1|", abs(rep["delta1"] - 1.0), 1e-12, "<="),
        Check(5, "coercivity margin at delta*=0.5", rep["coercivity_margin"], 0.0, ">=",
              f"status {rep.status['coercivity']}"),
    ]
    mesh = TimeMesh.graded(T, M, (2 - 0.7) / 0.7)
    grid = Grid.box(((1.0, 2.0),), nodes)
    trajs = _pmap(lambda a: run(example_problem(a), grid, mesh), (1.0, 0.5, 2.0, 4.0))
    C, masses = energy_certificate(trajs)
    out.append(Check(5, "V <= C(1+V0) violation mass under scaling", max(masses), 0.05, "<=", f"C={C:.4g}"))
    mon = monitor_energy_inequality(trajs[0], rep, spec)
    out.append(Check(5, "energy inequality: fraction of nodes within 5% of max F", mon.fraction_ok, 0.95, ">=",
                     f"min margin {mon.min_margin:.4g}"))
    return out


def planar_problem(amplitude: float) -> ProblemSpec:
    return ProblemSpec(orders=FractionalOrders(0.7, (0.3,)), fdo="I",
                       rho=PlateauRamp(1.0, 1.0, 1.0), rho_i=(PlateauRamp(0.5, 0.5, 1.0),),
                       a1=1.0, a0=ExpDecay(-3.0, -1.0), b=(0.2, 0.2), b0=0.5,
                       kernel=AlgebraicKernel(0.1, 0.2), f=OddPolynomial((0.0, 0.0, 0.0, 1.0)),
                       domain=((0.0, 1.0), (0.0, 1.0)), bc="neumann", u0=SineMode(amplitude, (1, 1)))


# The memory bound is fitted where the cubic term dominates: in the linear
# regime k*u grows exactly like ||u0|| and no constant fitted at one
# amplitude can cover a larger one.
PLANAR_BASE_AMPLITUDE = 4.0


def suite_theorem32(T: float = 10.0, M: int = 400, nodes: int = 40) -> list:
    mesh = TimeMesh.graded(T, M, (2 - 0.7) / 0.7)
    grid = Grid.box(((0.0, 1.0), (0.0, 1.0)), nodes)
    a0 = PLANAR_BASE_AMPLITUDE
    amps = (a0, 0.5 * a0, 2 * a0, 4 * a0)
    rep = validate_hypotheses(planar_problem(a0), horizon=T)
    trajs = _pmap(lambda a: run(planar_problem(a), grid, mesh), amps)
    C, masses = energy_certificate(trajs)
    base = trajs[0]
    C1 = fit_bound_constant(base.mem_norm, np.full(len(mesh), 1.0 + math.sqrt(base.V[0])))
    mem_masses = [violation_mass(mesh.nodes, tr.mem_norm, C1 * (1.0 + math.sqrt(tr.V[0]))) for tr in trajs[1:]]
    return [
        Check(6, "hypotheses hold (failures)", float(len(rep.failures())), 0.0, "<="),
        Check(6, "V <= C(1+V0) violation mass under scaling", max(masses), 0.05, "<=", f"C={C:.4g}"),
        Check(6, "||k*u||_W12 <= C1(1+||u0||) violation mass", max(mem_masses), 0.05, "<=", f"C1={C1:.4g}"),
    ]


# ---------------------------------------------------------------------------
# 7. absorbing ball
# ---------------------------------------------------------------------------

def absorbing_problem(amplitude: float) -> ProblemSpec:
    return ProblemSpec(orders=FractionalOrders(0.7, (0.3,)), fdo="I", rho=1.0, rho_i=(0.5,), a1=1.0, a0=-3.0,
                       b=(0.2,), b0=0.5, kernel=AlgebraicKernel(0.1, 0.2), f=OddPolynomial((0.0, 0.0, 0.0, 1.0)),
                       domain=((0.0, 1.0),), bc="dirichlet", u0=SineMode(amplitude))


def absorbing_family(T: float = 100.0, M: int = 2000, nodes: int = 81, amps=(1.0, 2.0, 4.0, 8.0)):
    """Entry times into the ball V <= C2/C4 built from the structural constants."""
    rep = validate_hypotheses(absorbing_problem(1.0), horizon=T)
    radius_sq = rep["C2"] / rep["C4"]
    mesh = TimeMesh.graded(T, M, (2 - 0.7) / 0.7)
    grid = Grid.box(((0.0, 1.0),), nodes)
    trajs = _pmap(lambda a: run(absorbing_problem(a), grid, mesh), amps)
    entries = absorbing_time([(math.sqrt(tr.V[0]), History(mesh, tr.V)) for tr in trajs], radius_sq)
    return radius_sq, entries


def suite_absorbing() -> list:
    radius_sq, entries = absorbing_family()
    finite = [e for e in entries if e is not None]
    monotone = all(b >= a for a, b in zip(finite, finite[1:]))
    txt = ", ".join("not entered" if e is None else f"{e:.4g}" for e in entries)
    return [
        Check(7, "trajectories not entering the ball V <= C2/C4", float(len(entries) - len(finite)), 0.0, "<=",
              f"radius^2={radius_sq:.4g}; entry times {txt}"),
        Check(7, "entry times nondecreasing in c", 1.0 if monotone else 0.0, 1.0, ">="),
    ]


# ---------------------------------------------------------------------------
# 8. convergence
# ---------------------------------------------------------------------------

def heat_mode_problem(nu: float) -> ProblemSpec:
    return ProblemSpec(orders=FractionalOrders(nu), fdo="I", rho=1.0, rho_i=(), a1=1.0, a0=0.0, b=(), b0=0.0,
                       kernel=None, f=ZeroNonlinearity(), domain=((0.0, 1.0),), bc="dirichlet", u0=SineMode(1.0))


def spatial_errors(nu: float = 0.6, T: float = 1.0, M: int = 4000, Js=(10, 20, 40, 80)):
    spec = heat_mode_problem(nu)
    mesh = TimeMesh.graded(T, M, (2 - nu) / nu)
    ref = float(calE(T, MLParams((nu,), 1.0, (math.pi ** 2,))))

    def err(J):
        grid = Grid.box(((0.0, 1.0),), J + 1)
        tr = run(spec, grid, mesh, force=True, mem_diagnostic=False)
        return float(np.max(np.abs(tr.u[-1] - np.sin(math.pi * grid.axes[0]) * ref)))

    return _pmap(err, Js)


def temporal_differences(nu: float = 0.6, T: float = 1.0, J: int = 40, Ms=(250, 500, 1000, 2000)):
    spec = heat_mode_problem(nu)
    grid = Grid.box(((0.0, 1.0),), J + 1)
    finals = _pmap(lambda M: run(spec, grid, TimeMesh.graded(T, M, (2 - nu) / nu), force=True,
                                 mem_diagnostic=False).u[-1], Ms)
    return [float(np.max(np.abs(a - b))) for a, b in zip(finals, finals[1:])]


def suite_convergence(nu: float = 0.6) -> list:
    se = spatial_errors(nu)
    td = temporal_differences(nu)
    return [
        Check(8, "spatial slope under grid halving", float(np.min(log2_slopes(se))), 1.9, ">=",
              f"errors {se[0]:.2e}..{se[-1]:.2e}"),
        Check(8, f"temporal self-convergence slope, graded, nu={nu}", float(np.min(log2_slopes(td))), 1.8 - nu, ">="),
    ]


SUITES = {
    "identities": suite_identities,
    "ml": suite_ml,
    "fode": suite_fode,
    "corollary1": suite_corollary1,
    "theorem31": suite_theorem31,
    "theorem32": suite_theorem32,
    "absorbing": suite_absorbing,
    "convergence": suite_convergence,
}


def run_suite(name: str) -> list:
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()
