"""Scalar multi-term fractional Cauchy problems.

The problem is

    rho D^nu V + sum_i rho_i D^{nu_i} V - (K0 * V) + d0 V = F,   V(0) = V0,

with Caputo derivatives. For constant coefficients the solution is written
with the kernels calE_{beta0}(t) = t^{beta0-1} E_{beta_bar,beta0}(-d_bar t^beta_bar),
beta_bar = (nu, nu - nu_1, ...), d_bar = (d0/rho, rho_1/rho, ...):

    V = V0 [calE_1 + sum_i (rho_i/rho) calE_{1+nu-nu_i}] + (1/rho) calE_nu * (F + K0 * V).

The memory part is a second-kind Volterra equation with kernel
G1 = (1/rho) K0 * calE_nu, solved by Picard iteration. The numerical
solver steps the same equation with the L1 scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .coefficients import Coefficient, coefficient_from_config
from .errors import ConvergenceError, DomainError, SolverError
from .frac_calculus import (AlgebraicKernel, History, Kernel, SampledKernel, TimeMesh, ZeroKernel,
                            convolution_weights, l1_weights, product_weights, rl_integral)
from .special_fn import DEFAULT_POLICY, MLParams, SeriesPolicy, calE, gamma

__all__ = [
    "FractionalOrders",
    "FodeSpec",
    "solve_const_multiterm",
    "step_fode_numeric",
    "memory_kernel_g1",
    "decay_g",
    "GronwallReport",
    "gronwall_check",
]

Forcing = Union[float, Callable]


@dataclass(frozen=True)
class FractionalOrders:
    """Leading order nu and lower orders nu_1 < ... < nu_M < nu, all in (0, 1)."""

    nu: float
    nus: tuple = ()

    def __post_init__(self):
        nus = tuple(float(v) for v in self.nus)
        object.__setattr__(self, "nus", nus)
        chain = (0.0,) + nus + (float(self.nu), 1.0)
        if any(b <= a for a, b in zip(chain, chain[1:])):
            raise DomainError(f"orders must satisfy 0 < nu_1 < ... < nu_M < nu < 1, got nu={self.nu}, nus={nus}")

    @property
    def M(self) -> int:
        return len(self.nus)

    @property
    def beta_bar(self) -> tuple:
        return (self.nu,) + tuple(self.nu - v for v in self.nus)


@dataclass(frozen=True)
class FodeSpec:
    orders: FractionalOrders
    leading: Coefficient
    lower: tuple = ()
    damping: float = 0.0
    memory: Optional[Kernel] = None
    forcing: Forcing = 0.0
    initial: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "leading", coefficient_from_config(self.leading, "leading"))
        lower = tuple(coefficient_from_config(c, f"lower[{i}]") for i, c in enumerate(self.lower))
        object.__setattr__(self, "lower", lower)
        if len(lower) != self.orders.M:
            raise DomainError(f"{self.orders.M} lower orders but {len(lower)} lower coefficients")
        if self.damping < 0:
            raise DomainError("damping d0 must be >= 0")
        if self.initial < 0:
            raise DomainError("initial value V(0) must be >= 0")
        if not callable(self.forcing) and self.forcing < 0:
            raise DomainError("forcing must be nonnegative")
        for name, c in [("leading", self.leading)] + [(f"lower[{i}]", c) for i, c in enumerate(lower)]:
            if not c.nondecreasing:
                raise DomainError(f"{name} coefficient must be nondecreasing in t")

    @property
    def constant_coefficients(self) -> bool:
        return self.leading.time_constant and all(c.time_constant for c in self.lower)

    def forcing_values(self, t: np.ndarray) -> np.ndarray:
        if callable(self.forcing):
            return np.broadcast_to(np.asarray(self.forcing(t), dtype=float), t.shape).copy()
        return np.full(t.shape, float(self.forcing))

    def ml_params(self, beta0: float) -> MLParams:
        rho = float(self.leading.at(0.0))
        d = (self.damping / rho,) + tuple(float(c.at(0.0)) / rho for c in self.lower)
        return MLParams(self.orders.beta_bar, beta0, d)


def _lagged_conv(c_left: np.ndarray, c_right: np.ndarray, f: np.ndarray) -> np.ndarray:
    """out[n] = sum_{L=1..n} c_right[L] f[n-L+1] + c_left[L] f[n-L] on a uniform mesh."""
    N = f.size
    out = np.zeros(N)
    out[1:] = np.convolve(c_right[1:], f[1:])[: N - 1] + np.convolve(c_left[1:], f)[: N - 1]
    return out


def _primitive_weights(P1: np.ndarray, P2: np.ndarray, h: float):
    """Left/right weights for int G(t_n - s) f(s) ds with f piecewise linear.

    P1, P2 are the first two primitives of G at lags L*h (index L, P(0) = 0).
    """
    A1, B1 = P1[1:], P1[:-1]
    dP2 = P2[1:] - P2[:-1]
    c_left = np.zeros_like(P1)
    c_right = np.zeros_like(P1)
    c_left[1:] = (h * A1 - dP2) / h
    c_right[1:] = (dP2 - h * B1) / h
    return c_left, c_right


def memory_kernel_g1(spec: FodeSpec, t, policy: SeriesPolicy = DEFAULT_POLICY):
    """G1 = (1/rho) K0 * calE_nu for an algebraic K0 = c t^-nu_star (closed form)."""
    kern = spec.memory
    rho = float(spec.leading.at(0.0))
    if kern is None or isinstance(kern, ZeroKernel):
        return np.zeros_like(np.asarray(t, dtype=float))
    if not isinstance(kern, AlgebraicKernel):
        raise DomainError("closed-form G1 needs an algebraic memory kernel")
    scale = kern.coefficient * gamma(1.0 - kern.exponent) / rho
    return scale * calE(t, spec.ml_params(spec.orders.nu + 1.0 - kern.exponent), policy)


@dataclass
class PicardInfo:
    iterations: int = 0
    last_change: float = 0.0
    g1_l1_norm: float = 0.0


def solve_const_multiterm(spec: FodeSpec, mesh: TimeMesh, tol: float = 1e-10, max_iter: int = 200,
                          policy: SeriesPolicy = DEFAULT_POLICY, info: Optional[PicardInfo] = None) -> History:
    """Mittag-Leffler representation of the constant-coefficient solution on ``mesh``.

    Constant forcing without memory is evaluated pointwise on any mesh. A
    time-dependent forcing or a memory kernel needs a uniform mesh, where
    every lag t_n - t_j is itself a node.
    """
    if not spec.constant_coefficients:
        raise DomainError("solve_const_multiterm needs time-constant coefficients")
    nu = spec.orders.nu
    rho = float(spec.leading.at(0.0))
    t = mesh.nodes
    tp = t[1:]
    V = np.empty(t.size)
    V[0] = spec.initial
    hom = np.zeros(tp.size)
    if spec.initial != 0.0:
        hom = calE(tp, spec.ml_params(1.0), policy)
        for nui, c in zip(spec.orders.nus, spec.lower):
            ri = float(c.at(0.0)) / rho
            if ri:
                hom = hom + ri * calE(tp, spec.ml_params(1.0 + nu - nui), policy)
        hom = spec.initial * hom
    has_memory = spec.memory is not None and not isinstance(spec.memory, ZeroKernel)
    if not callable(spec.forcing) and not has_memory:
        forced = np.zeros(tp.size)
        if spec.forcing:
            forced = float(spec.forcing) / rho * calE(tp, spec.ml_params(nu + 1.0), policy)
        V[1:] = hom + forced
        return History(mesh, V)

    if mesh.kind != "uniform":
        raise DomainError("time-dependent forcing or memory needs a uniform mesh (lags must be nodes)")
    h = float(t[1] - t[0])
    lags = h * np.arange(t.size)
    known = np.zeros(t.size)
    known[0] = spec.initial
    known[1:] = hom
    if callable(spec.forcing):
        P1 = np.zeros(t.size)
        P2 = np.zeros(t.size)
        P1[1:] = calE(lags[1:], spec.ml_params(nu + 1.0), policy)
        P2[1:] = calE(lags[1:], spec.ml_params(nu + 2.0), policy)
        cl, cr = _primitive_weights(P1, P2, h)
        known += _lagged_conv(cl, cr, spec.forcing_values(t)) / rho
    elif spec.forcing:
        known[1:] += float(spec.forcing) / rho * calE(tp, spec.ml_params(nu + 1.0), policy)
    if not has_memory:
        return History(mesh, known)

    kern = spec.memory
    if not isinstance(kern, AlgebraicKernel):
        raise DomainError("the analytic memory path needs an algebraic kernel c t^-nu_star")
    scale = kern.coefficient * gamma(1.0 - kern.exponent) / rho
    b0 = nu + 1.0 - kern.exponent
    Q1 = np.zeros(t.size)
    Q2 = np.zeros(t.size)
    Q1[1:] = scale * calE(lags[1:], spec.ml_params(b0 + 1.0), policy)
    Q2[1:] = scale * calE(lags[1:], spec.ml_params(b0 + 2.0), policy)
    cl, cr = _primitive_weights(Q1, Q2, h)
    g1_norm = abs(Q1[-1])
    V = known.copy()
    change = math.inf
    for it in range(1, max_iter + 1):
        V_new = known + _lagged_conv(cl, cr, V)
        change = float(np.max(np.abs(V_new - V)))
        V = V_new
        if change < tol:
            if info is not None:
                info.iterations, info.last_change, info.g1_l1_norm = it, change, g1_norm
            return History(mesh, V)
    raise ConvergenceError(
        f"Picard iteration stalled after {max_iter} sweeps (change {change:.3g}); "
        f"||G1||_L1 on the horizon = {g1_norm:.4g}"
    )


def step_fode_numeric(spec: FodeSpec, mesh: TimeMesh) -> History:
    """Implicit L1 stepping; history sums and the memory lag are explicit."""
    t = mesh.nodes
    N = t.size
    nu = spec.orders.nu
    rho = spec.leading.at(t)
    rhos = [c.at(t) for c in spec.lower]
    F = spec.forcing_values(t)
    kern = spec.memory if spec.memory is not None else ZeroKernel()
    V = np.empty(N)
    V[0] = spec.initial
    scale = max(1.0, abs(spec.initial), float(np.max(np.abs(F))))
    for n in range(1, N):
        a = l1_weights(t, n, nu)
        lead = rho[n] * a[-1]
        hist = rho[n] * (a[:-1] @ np.diff(V[:n])) - lead * V[n - 1]
        for nui, r in zip(spec.orders.nus, rhos):
            ai = l1_weights(t, n, nui)
            lead += r[n] * ai[-1]
            hist += r[n] * (ai[:-1] @ np.diff(V[:n])) - r[n] * ai[-1] * V[n - 1]
        mem = 0.0
        if not isinstance(kern, ZeroKernel):
            w = convolution_weights(kern, t, n)
            mem = w[:-1] @ V[:n] + w[-1] * V[n - 1]
        coeff = lead + spec.damping
        if not coeff > 0:
            raise SolverError(f"nonpositive implicit coefficient {coeff} at node {n}")
        V[n] = (F[n] + mem - hist) / coeff
    if np.all(F >= 0) and spec.initial >= 0 and np.min(V) < -1e-12 * scale:
        raise SolverError(f"positivity lost: min V = {np.min(V):.3g}")
    return History(mesh, V)


def decay_g(t, orders: FractionalOrders, rho: float, rho_i: Sequence[float], c0_star: float,
            policy: SeriesPolicy = DEFAULT_POLICY):
    """Decay function |1 - (c0/rho) calE*1| + sum (rho_i/rho) calE*omega_{1-nu_i} + calE*omega_{1-nu}.

    All three convolutions collapse to shifted kernels calE_{beta0}.
    """
    if rho <= 0 or c0_star <= 0 or any(r <= 0 for r in rho_i):
        raise DomainError("decay_g needs positive constant coefficients")
    if len(rho_i) != orders.M:
        raise DomainError(f"{orders.M} lower orders but {len(rho_i)} coefficients")
    nu = orders.nu
    d = (c0_star / rho,) + tuple(r / rho for r in rho_i)
    P = lambda b0: MLParams(orders.beta_bar, b0, d)
    g = np.abs(1.0 - d[0] * np.asarray(calE(t, P(1.0 + nu), policy)))
    for nui, r in zip(orders.nus, rho_i):
        g = g + (r / rho) * np.asarray(calE(t, P(1.0 + nu - nui), policy))
    g = g + np.asarray(calE(t, P(1.0), policy))
    return float(g) if np.ndim(g) == 0 else g


@dataclass
class GronwallReport:
    holds: bool
    first_violation: Optional[int]
    first_violation_time: Optional[float]
    premise_ok: bool
    multiplier: float
    empirical: float
    margin: np.ndarray = field(repr=False)


def _sampled_conv_weights(k: np.ndarray, t: np.ndarray, n: int) -> np.ndarray:
    kern = SampledKernel(lambda s: np.interp(s, t, k))
    return convolution_weights(kern, t, n)


def gronwall_check(v: History, k1: History, k2: History, theta: float,
                   C0: float, C1: float, C2: float, rtol: float = 1e-9) -> GronwallReport:
    """Check |v| <= C0 + C1 I^theta|k1 v| + C2 (|k2| * |v|) on the mesh.

    The multiplier is max(w)/C0 where w solves the same relation with
    equality; by comparison |v| <= w, so it is a computable stand-in for the
    existential constant of the Gronwall-type bound.
    """
    if not (C0 > 0 and C1 >= 0 and C2 >= 0):
        raise DomainError("need C0 > 0 and C1, C2 >= 0")
    if not (v.mesh.same_as(k1.mesh) and v.mesh.same_as(k2.mesh)):
        raise DomainError("histories live on different meshes")
    t = v.mesh.nodes
    av, ak1, ak2 = np.abs(v.values), np.abs(k1.values), np.abs(k2.values)
    Ik1 = rl_integral(History(v.mesh, ak1), theta).values
    premise_ok = bool(np.all(np.isfinite(Ik1))) and abs(Ik1[0]) == 0.0
    N = t.size
    rhs = np.full(N, C0)
    w = np.empty(N)
    w[0] = C0
    g = 1.0 / gamma(theta)
    multiplier = 0.0
    for n in range(1, N):
        W1 = g * product_weights(t, n, theta) * ak1[: n + 1]
        W2 = _sampled_conv_weights(ak2, t, n)
        rhs[n] = C0 + C1 * (W1 @ av[: n + 1]) + C2 * (W2 @ av[: n + 1])
        denom = 1.0 - C1 * W1[-1] - C2 * W2[-1]
        if denom <= 0 or not np.isfinite(w[n - 1]):
            w[n] = np.inf
            continue
        w[n] = (C0 + C1 * (W1[:-1] @ w[:n]) + C2 * (W2[:-1] @ w[:n])) / denom
    multiplier = float(np.max(w) / C0)
    margin = rhs - av
    bad = np.nonzero(margin < -rtol * np.maximum(rhs, 1.0))[0]
    first = int(bad[0]) if bad.size else None
    return GronwallReport(
        holds=first is None,
        first_violation=first,
        first_violation_time=float(t[first]) if first is not None else None,
        premise_ok=premise_ok,
        multiplier=multiplier,
        empirical=float(np.max(av) / C0),
        margin=margin,
    )
