"""Diagnostics for subdiffusion runs.

Structural hypothesis checks with the constants of the energy estimate,
the Sobolev energy V(t), power-law fits of decay tails, a monitor for the
differential energy inequality, and detection of absorbing balls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .frac_calculus import AlgebraicKernel, History, ZeroKernel, caputo_l1_all, convolution_weights
from .special_fn import gamma, omega

__all__ = [
    "sobolev_energy",
    "HypothesisReport",
    "validate_hypotheses",
    "DecayFit",
    "fit_decay_exponent",
    "EnergyMonitor",
    "monitor_energy_inequality",
    "absorbing_time",
    "fit_bound_constant",
    "violation_mass",
]

PASS, FAIL, NA = "pass", "fail", "n/a"


def sobolev_energy(field_, grid=None) -> float:
    """V = integral of u^2 + |grad u|^2 by the trapezoid rule.

    Gradients are second-order central differences (one-sided at the edges).
    """
    grid = field_.grid if grid is None else grid
    u = np.asarray(field_.values, dtype=float)
    dens = u * u
    for ax, h in enumerate(grid.h):
        g = np.gradient(u, h, axis=ax, edge_order=2)
        dens = dens + g * g
    out = dens
    for h in reversed(grid.h):
        out = np.trapezoid(out, dx=h, axis=-1)
    return float(out)


# ---------------------------------------------------------------------------
# Hypothesis validation
# ---------------------------------------------------------------------------

@dataclass
class HypothesisReport:
    """Status per check ('pass', 'fail' or 'n/a'), constants and notes."""

    status: dict
    constants: dict
    notes: dict = field(default_factory=dict)
    regime: str = ""

    @property
    def ok(self) -> bool:
        return all(s != FAIL for s in self.status.values())

    def failures(self) -> list:
        return [k for k, s in self.status.items() if s == FAIL]

    def __getitem__(self, key):
        return self.constants[key]

    def to_text(self) -> str:
        lines = [f"regime = {self.regime}"]
        for k, s in self.status.items():
            note = self.notes.get(k)
            lines.append(f"status.{k} = {s}" + (f"  # {note}" if note else ""))
        for k, v in self.constants.items():
            lines.append(f"const.{k} = {v!r}")
        return "\n".join(lines) + "\n"


def _time_samples(t_span: float, samples: int) -> np.ndarray:
    far = np.geomspace(1e-3, max(1e4, 10 * t_span), samples // 3 + 2)
    return np.unique(np.concatenate([np.linspace(0.0, t_span, samples), far]))


def _sup_abs(coef, X, T) -> float:
    return float(np.max(np.abs(coef(X, T))))


def _h5_holds(f, samples: int = 4001) -> bool:
    s = np.linspace(-0.999, 0.999, samples)
    u = 50.0 * s / (1.0 - np.abs(s))
    fu = f(u)
    tol = 1e-9 * (1.0 + np.abs(u) ** (f.gamma + 1))
    c1 = np.abs(fu) <= f.L1 * (1.0 + np.abs(u) ** f.gamma) + tol
    c2 = u * fu >= -f.L2 + f.L3 * np.abs(u) ** (f.gamma + 1) - tol
    c3 = f.derivative(u) >= -f.L4 - 1e-9 * (1.0 + np.abs(u) ** max(f.gamma - 1, 0.0))
    return bool(np.all(c1) and np.all(c2) and np.all(c3))


def validate_hypotheses(spec, horizon: Optional[float] = None, delta_star: Optional[float] = None,
                        samples: int = 201, kernel_bound: float = 1.0) -> HypothesisReport:
    """Check the structural hypotheses of a problem and compute the energy-estimate constants.

    Parameters
    ----------
    spec : ProblemSpec
    horizon : float, optional
        Time horizon used to truncate the kernel's L1 norm and to extend the
        sampling window. Defaults to 2 T* (twice the plateau time).
    delta_star : float, optional
        Splitting parameter in (0, delta_1). When omitted it is placed in the
        middle of the admissible interval.
    samples : int
        Points per axis of the (x, t) sampling grid.
    kernel_bound : float
        Constant C in |K| <= C t^(-nu*); the closed-form kernels are checked against it.

    Notes
    -----
    Coefficients are sampled, not bounded symbolically, so the reported
    infima and suprema are those of the sampling grid.
    """
    status, notes, K = {}, {}, {}
    orders = spec.orders
    nu, nus = orders.nu, orders.nus
    n_dim = spec.ndim

    status["h1"] = PASS  # FractionalOrders enforces the ordering on construction

    T0 = spec.rho.plateau_time
    Tk = [c.plateau_time for c in spec.rho_i]
    plateaus = [T0] + Tk
    T_star = max([1.0] + [p for p in plateaus if p is not None])
    span = max(T_star, horizon or 0.0) + 1.0
    ts = _time_samples(span, samples)
    lo, hi = spec.domain[0]
    xs = np.linspace(lo, hi, samples)
    X, T = np.meshgrid(xs, ts, indexing="ij")

    # h2: sign conditions
    delta0 = float(np.min(-spec.a0(X, T)))
    delta1 = float(np.min(spec.a1(X, T))) if n_dim == 1 else 1.0
    rho_vals = spec.rho.at(ts)
    delta = float(np.min(rho_vals))
    rho_i_min = [float(np.min(c.at(ts))) for c in spec.rho_i]
    h2_ok = delta0 > 0 and delta1 > 0 and delta > 0 and all(r >= 0 for r in rho_i_min)
    status["h2"] = PASS if h2_ok else FAIL
    if not h2_ok:
        bad = []
        if delta0 <= 0:
            bad.append(f"-a0 >= delta0 > 0 fails (inf -a0 = {delta0:.4g})")
        if delta1 <= 0:
            bad.append(f"a1 >= delta1 > 0 fails (inf a1 = {delta1:.4g})")
        if delta <= 0:
            bad.append(f"rho >= delta > 0 fails (inf rho = {delta:.4g})")
        if any(r < 0 for r in rho_i_min):
            bad.append("rho_k >= 0 fails")
        notes["h2"] = "; ".join(bad)
    K.update(delta=delta, delta0=delta0, delta1=delta1)

    # h3: monotone plateau coefficients, bounded operator coefficients
    h3_bad = []
    for name, c in [("rho", spec.rho)] + [(f"rho_{i + 1}", c) for i, c in enumerate(spec.rho_i)]:
        if not c.nondecreasing or np.any(np.diff(c.at(ts)) < -1e-14):
            h3_bad.append(f"{name} decreases")
        if c.plateau_time is None:
            h3_bad.append(f"{name} has no plateau")
    coefs = [spec.a0, spec.a1, spec.b0] + list(spec.b)
    if not all(np.all(np.isfinite(c(X, T))) for c in coefs):
        h3_bad.append("operator coefficient not finite")
    status["h3"] = FAIL if h3_bad else PASS
    if h3_bad:
        notes["h3"] = "; ".join(h3_bad)
    rho_prime = float(np.max(np.abs(spec.rho.dt(0.0, ts))))
    rho_i_prime = [float(np.max(np.abs(c.dt(0.0, ts)))) for c in spec.rho_i]
    K.update(T0=T0 if T0 is not None else math.inf, T_star=T_star, rho_prime_sup=rho_prime)
    for i, (tk, rp) in enumerate(zip(Tk, rho_i_prime)):
        K[f"T{i + 1}"] = tk if tk is not None else math.inf
        K[f"rho{i + 1}_prime_sup"] = rp

    # h4: kernel bound and integrability over the horizon
    horizon_eff = horizon if horizon is not None else 2.0 * T_star
    kern = spec.kernel
    if isinstance(kern, ZeroKernel):
        knorm, nu_star = 0.0, 0.0
        status["h4"] = PASS
    elif isinstance(kern, AlgebraicKernel):
        nu_star = kern.exponent
        knorm = kern.l1_norm(horizon_eff)
        ok = 0.0 <= nu_star <= nu and abs(kern.coefficient) <= kernel_bound
        status["h4"] = PASS if ok else FAIL
        notes["h4"] = f"L1 norm taken over [0, {horizon_eff:.6g}]"
        if not ok:
            notes["h4"] = f"need |K| <= {kernel_bound} t^(-nu*) with nu* in [0, nu]; got {kern.coefficient} t^(-{nu_star})"
    else:
        knorm = kern.l1_norm(horizon_eff)
        s = np.geomspace(1e-6, horizon_eff, 400)
        nu_star = nu
        ok = bool(np.all(np.abs(kern(s)) <= kernel_bound * s ** (-nu) * (1 + 1e-12)))
        status["h4"] = PASS if ok else FAIL
        notes["h4"] = f"sampled kernel; L1 norm over [0, {horizon_eff:.6g}]"
    K.update(kernel_l1=knorm, nu_star=nu_star, kernel_C=kernel_bound)

    # h5 and the regime
    f = spec.f
    K.update(L1=f.L1, L2=f.L2, L3=f.L3, L4=f.L4, gamma=f.gamma)
    status["h5"] = PASS if _h5_holds(f) else FAIL
    gam = f.gamma
    if gam >= 1:
        regime = "gamma>=1: bounded-energy estimates in one and several dimensions"
    elif gam > 0:
        regime = "gamma in (0,1): sublinear variant, needs the extra coefficient condition"
    else:
        regime = "gamma <= 0: outside every admissible regime"
        status["h5"] = FAIL

    # sup-norms of derivatives and drift coefficients
    a1x = _sup_abs(spec.a1.dx, X, T) if n_dim == 1 else 0.0
    a0x = _sup_abs(spec.a0.dx, X, T)
    b_sup = [_sup_abs(spec.b0, X, T)] + [_sup_abs(c, X, T) for c in spec.b]
    K.update(a1x_sup=a1x, a0x_sup=a0x, b_sq_sum=float(sum(v * v for v in b_sup)))

    # splitting parameter and the coercivity condition
    if n_dim == 1:
        lower = a1x ** 2 / (delta1 + delta0) if delta1 + delta0 > 0 else math.inf
        if delta_star is None:
            delta_star = 0.5 * (lower + delta1) if a1x > 0 else 0.5 * delta1
        margin31 = delta_star * (delta1 + delta0) - a1x ** 2
        if a1x > 0:
            status["coercivity"] = PASS if (0 < delta_star < delta1 and margin31 > 0) else FAIL
            if status["coercivity"] == FAIL:
                notes["coercivity"] = f"need delta* in ({lower:.4g}, {delta1:.4g}); got {delta_star:.4g}"
        else:
            status["coercivity"] = NA
        gap = delta1 - delta_star
        eps1 = margin31 / (4 * delta_star) if delta_star > 0 else math.nan
        K.update(delta_star=delta_star, coercivity_margin=margin31, eps0=delta_star, eps1=eps1)
        C4 = min(3 * eps1, 7 * delta0 / 8)
        a0_coupling = a0x ** 2 / eps1 if eps1 > 0 else math.inf
    else:
        delta_star = 0.0
        gap = 1.0
        status["coercivity"] = NA
        C4 = min((1 + delta0) / 2, 7 * delta0 / 8)
        a0_coupling = 2 * a0x ** 2 / (1 + delta0)
        K.update(delta_star=delta_star)
    K["gap"] = gap
    K["C4"] = C4
    K["eps3"] = delta0 / (8 * knorm) if knorm > 0 else math.inf
    K["eps4"] = gap / (8 * knorm) if knorm > 0 else math.inf
    K["K0_coefficient"] = 8 * K["b_sq_sum"] * knorm * (1 / gap + 1 / delta0) if knorm > 0 else 0.0

    # sublinear regime conditions
    if 0 < gam < 1:
        if n_dim == 1:
            d1s = margin31 / delta_star if delta_star > 0 else math.nan
            d2s_sup = gap if a1x > 0 else delta1
            m = delta0 - f.L4 ** 2 / d2s_sup - (a0x ** 2 / d1s if d1s > 0 else math.inf)
            K.update(delta1_star=d1s, delta2_star=d2s_sup, sublinear_margin=m)
            status["sublinear_condition"] = PASS if (d1s > 0 and m > 0) else FAIL
            notes["sublinear_condition"] = "delta2* taken at the supremum of its interval"
        else:
            m = delta0 - f.L4 ** 2 / 1.0 - a0x ** 2 / (1 + delta0)
            K.update(delta3_star=1 + delta0, delta4_star=1.0, sublinear_margin=m)
            status["sublinear_condition"] = PASS if m > 0 else FAIL
            notes["sublinear_condition"] = "delta3*, delta4* taken at the suprema of their intervals"
    else:
        status["sublinear_condition"] = NA

    # dissipation constants C2 and C3
    inv_eps = 2.0 / (f.L3 * (1 + gam)) * (8 * f.L4 ** 2 / gap + a0_coupling) if f.L3 > 0 else math.inf
    if gam > 1:
        if inv_eps == 0:
            young = 0.0
        else:
            young = f.L3 * inv_eps ** ((3 * gam + 1) / (gam - 1)) * (gam - 1) / 2
    else:
        young = 0.0
        if gam < 1:
            notes["C2"] = "Young term not defined for gamma < 1; set to 0"
    vol = float(np.prod([b - a for a, b in spec.domain]))
    C2 = vol * (f.L2 + young + 8 * f.L1 ** 2 / gap)
    nu1 = nus[0] if nus else nu
    C3 = T_star ** (1 - nu1) * (nu + 1) / gamma(2 - nu) * (rho_prime + sum(rho_i_prime))
    K.update(inv_eps=inv_eps, C2=C2, C3=C3, rho0=float(spec.rho.at(0.0)),
             **{f"rho{i + 1}_0": float(c.at(0.0)) for i, c in enumerate(spec.rho_i)})
    return HypothesisReport(status, K, notes, regime)


# ---------------------------------------------------------------------------
# Decay fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    window: tuple
    slope: float
    intercept: float
    residual: float


def fit_decay_exponent(series: History, window: Sequence[float]) -> DecayFit:
    """Least-squares slope of log V against log t over ``window``."""
    t_lo, t_hi = float(window[0]), float(window[1])
    if not (0 < t_lo < t_hi):
        raise DomainError(f"window must satisfy 0 < t_lo < t_hi, got {window}")
    t = series.t
    v = np.asarray(series.values)
    sel = (t >= t_lo) & (t <= t_hi)
    if np.count_nonzero(sel) < 2:
        raise DomainError("fewer than two samples in the window")
    if np.any(v[sel] <= 0):
        raise DomainError("non-positive values in the fitting window")
    x, y = np.log(t[sel]), np.log(v[sel])
    (slope, intercept), res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(np.sqrt(res[0] / x.size)) if res.size else 0.0
    return DecayFit((t_lo, t_hi), float(slope), float(intercept), resid)


# ---------------------------------------------------------------------------
# Energy inequality monitor
# ---------------------------------------------------------------------------

@dataclass
class EnergyMonitor:
    t: np.ndarray
    lhs: np.ndarray
    F: np.ndarray
    margin: np.ndarray
    tolerance: float
    fraction_ok: float
    min_margin: float
    required_fraction: float

    @property
    def ok(self) -> bool:
        return self.fraction_ok >= self.required_fraction


def monitor_energy_inequality(traj, report: HypothesisReport, spec, rel_tol: float = 0.05,
                              required_fraction: float = 0.95) -> EnergyMonitor:
    """Margins F - LHS of the differential energy inequality at the positive mesh nodes.

    LHS = (rho/2) D^nu V + sum (rho_i/2) D^nu_i V - K0 * V + C4 V, with the
    Caputo derivatives from the L1 scheme and K0 = const * |K|.
    The tolerance is ``rel_tol`` times the largest F on the monitored nodes.
    """
    mesh = traj.mesh
    t = mesh.nodes
    V = History(mesh, traj.V)
    lhs = np.zeros(t.size)
    for theta, c in spec.terms:
        lhs += 0.5 * c.at(t) * caputo_l1_all(V, theta)
    kern = spec.kernel
    k0 = report["K0_coefficient"]
    if k0 > 0 and not isinstance(kern, ZeroKernel):
        absk = AlgebraicKernel(abs(kern.coefficient) * k0, kern.exponent) if isinstance(kern, AlgebraicKernel) else None
        for n in range(1, t.size):
            if absk is not None:
                w = convolution_weights(absk, t, n)
            else:
                w = k0 * np.abs(convolution_weights(kern, t, n))
            lhs[n] -= w @ traj.V[: n + 1]
    lhs += report["C4"] * traj.V
    V0 = traj.V[0]
    F = np.full(t.size, np.nan)
    tp = t[1:]
    Fp = report["rho0"] * omega(1 - spec.orders.nu, tp) + report["C3"]
    for i, nui in enumerate(spec.orders.nus):
        Fp = Fp + report[f"rho{i + 1}_0"] * omega(1 - nui, tp)
    F[1:] = report["C2"] + V0 * Fp
    margin = F - lhs
    tol = rel_tol * float(np.max(F[1:]))
    ok = margin[1:] >= -tol
    return EnergyMonitor(t, lhs, F, margin, tol, float(np.mean(ok)), float(np.min(margin[1:])), required_fraction)


# ---------------------------------------------------------------------------
# Bounds, violation mass and absorbing balls
# ---------------------------------------------------------------------------

def fit_bound_constant(lhs: np.ndarray, envelope: np.ndarray) -> float:
    """Smallest C with lhs <= C * envelope at every node."""
    envelope = np.asarray(envelope, dtype=float)
    if np.any(envelope <= 0):
        raise DomainError("envelope must be positive")
    return float(np.max(np.asarray(lhs) / envelope))


def violation_mass(t: np.ndarray, lhs: np.ndarray, bound: np.ndarray) -> float:
    """Fraction of the time horizon on which lhs exceeds bound (trapezoid measure)."""
    t = np.asarray(t, dtype=float)
    bad = (np.asarray(lhs) > np.asarray(bound)).astype(float)
    total = t[-1] - t[0]
    if total <= 0:
        return float(bad[0])
    return float(np.trapezoid(bad, t) / total)


def absorbing_time(trajectories, radius_sq: float, tail_fraction: float = 0.2):
    """Entry time of each trajectory into the ball V <= radius_sq.

    ``trajectories`` is a list of (initial norm, V history) pairs sharing one
    mesh. The entry time is the first node after which V stays inside up to
    the horizon; None means V leaves the ball somewhere in the final
    ``tail_fraction`` of the horizon ("not entered").
    """
    if radius_sq <= 0:
        raise DomainError("radius_sq must be positive")
    out = []
    mesh0 = None
    for norm, hist in trajectories:
        if mesh0 is None:
            mesh0 = hist.mesh
        elif not hist.mesh.same_as(mesh0):
            raise DomainError("trajectories must share the mesh")
        t = hist.t
        v = np.asarray(hist.values)
        t_tail = t[0] + (1 - tail_fraction) * (t[-1] - t[0])
        if np.any(v[t >= t_tail] > radius_sq):
            out.append(None)
            continue
        outside = np.flatnonzero(v > radius_sq)
        out.append(float(t[0]) if outside.size == 0 else float(t[outside[-1] + 1]))
    return out
