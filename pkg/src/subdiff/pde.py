"""Finite-difference solver for the semilinear multi-term subdiffusion problem.

    D_t u - L1 u - K * (L2 u) + f(u) = 0   in a box,   u = 0 or du/dN = 0 on the boundary,

with L1 = d/dx(a1 d/dx) + a0 in 1D (Laplacian + a0 in higher dimension),
L2 = sum_i b_i d/dx_i + b0, and D_t either sum_theta c_theta D^theta u
(type I) or sum_theta D^theta(c_theta u) (type II). Time is discretized with
the L1 scheme, space with second-order differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .analysis import sobolev_energy
from .coefficients import Coefficient, Constant, coefficient_from_config
from .errors import ConfigError, DomainError, HypothesisError, SolverError
from .fode import FractionalOrders
from .frac_calculus import History, TimeMesh, ZeroKernel, convolution_weights, l1_weights

__all__ = [
    "Grid",
    "Field",
    "Nonlinearity",
    "OddPolynomial",
    "SaturatingPower",
    "ZeroNonlinearity",
    "SineMode",
    "ConstantField",
    "RandomSmooth",
    "ProblemSpec",
    "Trajectory",
    "assemble_operators",
    "step",
    "run",
]


# ---------------------------------------------------------------------------
# Grids and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Tensor grid on a box; ``nodes`` counts points per axis including both ends."""

    lower: tuple
    upper: tuple
    nodes: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        nn = tuple(int(v) for v in self.nodes)
        if not (len(lo) == len(hi) == len(nn) >= 1):
            raise ConfigError("grid lower, upper and nodes must have the same length")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ConfigError("grid box must have upper > lower on every axis")
        if any(n < 3 for n in nn):
            raise ConfigError("each axis needs at least 3 nodes")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "nodes", nn)

    @classmethod
    def box(cls, domain: Sequence, nodes) -> "Grid":
        if isinstance(nodes, int):
            nodes = (nodes,) * len(domain)
        return cls(tuple(d[0] for d in domain), tuple(d[1] for d in domain), tuple(nodes))

    @property
    def ndim(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple:
        return self.nodes

    @property
    def h(self) -> tuple:
        return tuple((b - a) / (n - 1) for a, b, n in zip(self.lower, self.upper, self.nodes))

    @property
    def axes(self) -> list:
        return [np.linspace(a, b, n) for a, b, n in zip(self.lower, self.upper, self.nodes)]

    @property
    def coords(self) -> list:
        return np.meshgrid(*self.axes, indexing="ij")

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in zip(self.lower, self.upper)]))

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    def unknown_mask(self, bc: str) -> np.ndarray:
        if bc == "dirichlet":
            return ~self.boundary_mask()
        return np.ones(self.shape, dtype=bool)


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise DomainError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

class Nonlinearity:
    """f(u) with its derivative and the structural constants L1..L4, gamma."""

    L1: float
    L2: float
    L3: float
    L4: float
    gamma: float

    def __call__(self, u):
        raise NotImplementedError

    def derivative(self, u):
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


def _poly_max(p: np.polynomial.Polynomial) -> float:
    """Maximum over the real line of a polynomial bounded above."""
    crit = p.deriv().roots()
    crit = crit[np.abs(crit.imag) < 1e-9].real
    if crit.size == 0:
        return -math.inf
    return float(np.max(p(crit)))


@dataclass(frozen=True)
class OddPolynomial(Nonlinearity):
    """f(u) = sum_k c_k u^k of odd degree with positive leading coefficient.

    L3 is taken as half the leading coefficient; L2 and L4 are then exact
    extrema found from polynomial critical points, and L1 is sampled.
    """

    coefficients: tuple
    kind = "odd_polynomial"

    def __post_init__(self):
        c = tuple(float(v) for v in self.coefficients)
        while len(c) > 1 and c[-1] == 0.0:
            c = c[:-1]
        deg = len(c) - 1
        if deg < 1 or deg % 2 == 0 or c[-1] <= 0:
            raise ConfigError(f"odd_polynomial needs odd degree and positive leading coefficient, got {c}")
        object.__setattr__(self, "coefficients", c)
        P = np.polynomial.Polynomial(c)
        L3 = 0.5 * c[-1]
        g = np.polynomial.Polynomial([0.0] * (deg + 1) + [L3]) - np.polynomial.Polynomial([0.0, 1.0]) * P
        L2 = max(0.0, _poly_max(g))
        dP = P.deriv()
        L4 = max(0.0, _poly_max(-dP)) if deg > 1 else max(0.0, -float(c[1]))
        s = np.linspace(-1.0, 1.0, 40001)[1:-1]
        u = s / (1.0 - np.abs(s))
        L1 = max(c[-1], float(np.max(np.abs(P(u)) / (1.0 + np.abs(u) ** deg)))) * (1.0 + 1e-9)
        object.__setattr__(self, "_poly", P)
        object.__setattr__(self, "_dpoly", dP)
        object.__setattr__(self, "L1", L1)
        object.__setattr__(self, "L2", L2)
        object.__setattr__(self, "L3", L3)
        object.__setattr__(self, "L4", L4)
        object.__setattr__(self, "gamma", float(deg))

    def __call__(self, u):
        return self._poly(u)

    def derivative(self, u):
        return self._dpoly(u)

    def describe(self):
        return {"form": "odd_polynomial", "coefficients": list(self.coefficients)}


@dataclass(frozen=True)
class ZeroNonlinearity(Nonlinearity):
    """f = 0; satisfies the growth conditions with L1 = L2 = L3 = L4 = 0, gamma = 1."""

    kind = "zero"
    L1 = L2 = L3 = L4 = 0.0
    gamma = 1.0

    def __call__(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def derivative(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def describe(self):
        return {"form": "zero"}


@dataclass(frozen=True)
class SaturatingPower(Nonlinearity):
    """f(u) = u (1 + u^2)^(a - b) with max(0, b - 1/2) < a < b < 1."""

    a: float
    b: float
    kind = "saturating_power"

    def __post_init__(self):
        if not (max(0.0, self.b - 0.5) < self.a < self.b < 1.0):
            raise ConfigError(f"need max(0, b-1/2) < a < b < 1, got a={self.a}, b={self.b}")
        object.__setattr__(self, "L1", 1.0)
        object.__setattr__(self, "L2", 1.0)
        object.__setattr__(self, "L3", 1.0)
        object.__setattr__(self, "L4", 0.0)
        object.__setattr__(self, "gamma", 1.0 - 2.0 * self.b + 2.0 * self.a)

    def __call__(self, u):
        return u * (1.0 + u * u) ** (self.a - self.b)

    def derivative(self, u):
        q = 1.0 + u * u
        return q ** (self.a - self.b - 1.0) * (q + 2.0 * (self.a - self.b) * u * u)

    def describe(self):
        return {"form": "saturating_power", "a": self.a, "b": self.b}


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SineMode:
    """amplitude * prod_i sin(mode_i pi (x_i - lower_i)/(upper_i - lower_i))."""

    amplitude: float
    modes: tuple = (1,)

    def __call__(self, grid: Grid) -> np.ndarray:
        modes = tuple(self.modes) + (1,) * (grid.ndim - len(self.modes))
        out = np.full(grid.shape, float(self.amplitude))
        for X, k, a, b in zip(grid.coords, modes, grid.lower, grid.upper):
            out = out * np.sin(k * np.pi * (X - a) / (b - a))
        return out

    def scaled(self, c: float) -> "SineMode":
        return replace(self, amplitude=self.amplitude * c)

    def describe(self):
        return {"kind": "sine_mode", "amplitude": self.amplitude, "modes": list(self.modes)}


@dataclass(frozen=True)
class ConstantField:
    value: float

    def __call__(self, grid: Grid) -> np.ndarray:
        return np.full(grid.shape, float(self.value))

    def scaled(self, c: float) -> "ConstantField":
        return replace(self, value=self.value * c)

    def describe(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class RandomSmooth:
    """Random trigonometric sum with coefficients ~ N(0,1)/k^2, reproducible from ``seed``.

    The coefficients are scaled to unit l1 norm, so sup|u0| <= amplitude and
    the field does not depend on the sampling grid. Uses sine modes (zero trace) for Dirichlet problems and cosine modes
    for Neumann problems.
    """

    amplitude: float
    n_modes: int
    seed: int
    bc: str = "dirichlet"

    def __call__(self, grid: Grid) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        out = np.zeros(grid.shape)
        total = 0.0
        ks = np.arange(1, self.n_modes + 1)
        ranges = [ks] * grid.ndim
        for combo in np.array(np.meshgrid(*ranges, indexing="ij")).reshape(grid.ndim, -1).T:
            coef = rng.standard_normal() / float(np.sum(combo ** 2))
            total += abs(coef)
            term = np.ones(grid.shape)
            for X, k, a, b in zip(grid.coords, combo, grid.lower, grid.upper):
                xi = (X - a) / (b - a)
                term = term * (np.sin(k * np.pi * xi) if self.bc == "dirichlet" else np.cos(k * np.pi * xi))
            out += coef * term
        return self.amplitude * out / total

    def scaled(self, c: float) -> "RandomSmooth":
        return replace(self, amplitude=self.amplitude * c)

    def describe(self):
        return {"kind": "random_smooth", "amplitude": self.amplitude, "n_modes": self.n_modes, "seed": self.seed}


# ---------------------------------------------------------------------------
# Problem specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    orders: FractionalOrders
    fdo: str
    rho: Coefficient
    rho_i: tuple
    a1: Coefficient
    a0: Coefficient
    b: tuple
    b0: Coefficient
    kernel: object
    f: Nonlinearity
    domain: tuple
    bc: str
    u0: Callable

    def __post_init__(self):
        if self.fdo not in ("I", "II"):
            raise ConfigError(f"fdo must be 'I' or 'II', got {self.fdo!r}")
        if self.bc not in ("dirichlet", "neumann"):
            raise ConfigError(f"bc must be 'dirichlet' or 'neumann', got {self.bc!r}")
        dom = tuple((float(a), float(b)) for a, b in self.domain)
        if not dom:
            raise ConfigError("domain must have at least one axis")
        if any(b <= a for a, b in dom):
            raise ConfigError("domain intervals must have upper > lower")
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "rho", coefficient_from_config(self.rho, "rho"))
        rho_i = tuple(coefficient_from_config(c, f"rho_i[{i}]") for i, c in enumerate(self.rho_i))
        if len(rho_i) != self.orders.M:
            raise ConfigError(f"{self.orders.M} lower orders but {len(rho_i)} rho_i coefficients")
        object.__setattr__(self, "rho_i", rho_i)
        object.__setattr__(self, "a1", coefficient_from_config(self.a1, "a1"))
        object.__setattr__(self, "a0", coefficient_from_config(self.a0, "a0"))
        object.__setattr__(self, "b0", coefficient_from_config(self.b0, "b0"))
        b = tuple(coefficient_from_config(c, f"b[{i}]") for i, c in enumerate(self.b))
        if len(b) not in (0, len(dom)):
            raise ConfigError(f"need {len(dom)} drift coefficients b_i, got {len(b)}")
        object.__setattr__(self, "b", b or tuple(Constant(0.0) for _ in dom))
        if self.kernel is None:
            object.__setattr__(self, "kernel", ZeroKernel())
        if len(dom) > 1 and not (self.a1.time_constant and isinstance(self.a1, Constant) and self.a1.c == 1.0):
            raise ConfigError("in dimension >= 2 the principal part is the Laplacian (a1 must be the constant 1)")

    @property
    def ndim(self) -> int:
        return len(self.domain)

    @property
    def terms(self) -> list:
        """(order, coefficient) pairs of the fractional operator, leading term first."""
        return [(self.orders.nu, self.rho)] + list(zip(self.orders.nus, self.rho_i))

    def grid(self, nodes) -> Grid:
        return Grid.box(self.domain, nodes)


# ---------------------------------------------------------------------------
# Spatial operators
# ---------------------------------------------------------------------------

def _second_diff_1d(a_half: np.ndarray, h: float, neumann: bool) -> sp.csr_matrix:
    """Flux-form d/dx(a du/dx) on all nodes; a_half[i] sits at x_{i+1/2}.

    Neumann rows use the ghost value u_{-1} = u_1 with a reflected
    coefficient, which keeps the operator symmetric in the trapezoid inner
    product. Dirichlet boundary rows are left at zero (they are eliminated).
    """
    n = a_half.size + 1
    main = np.zeros(n)
    lo = np.zeros(n - 1)
    up = np.zeros(n - 1)
    main[1:-1] = -(a_half[:-1] + a_half[1:])
    lo[:-1] = a_half[:-1]
    up[1:] = a_half[1:]
    if neumann:
        main[0] = -2 * a_half[0]
        up[0] = 2 * a_half[0]
        main[-1] = -2 * a_half[-1]
        lo[-1] = 2 * a_half[-1]
    return sp.diags([lo, main, up], [-1, 0, 1], format="csr") / (h * h)


def _first_diff_1d(n: int, h: float, neumann: bool) -> sp.csr_matrix:
    lo = np.full(n - 1, -1.0)
    up = np.full(n - 1, 1.0)
    lo[-1] = 0.0 if neumann else lo[-1]
    up[0] = 0.0 if neumann else up[0]
    D = sp.diags([lo, up], [-1, 1], format="lil")
    if not neumann:
        D[0, :] = 0.0
        D[-1, :] = 0.0
    return sp.csr_matrix(D) / (2 * h)


def _kron_axis(op: sp.spmatrix, axis: int, shape: tuple) -> sp.csr_matrix:
    mats = [sp.identity(n, format="csr") for n in shape]
    mats[axis] = op
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def check_signs(spec: ProblemSpec, grid: Grid, t: float) -> None:
    """Raise ConfigError if -a0 > 0 or a1 > 0 fails at a grid node at time t."""
    X = grid.coords[0]
    a0 = spec.a0(X, t)
    if np.any(-a0 <= 0):
        raise ConfigError(f"h2 violated at t={t}: -a0 must be positive (min -a0 = {np.min(-a0):.4g})")
    if grid.ndim == 1:
        xs = grid.axes[0]
        a1 = spec.a1(np.concatenate([xs, 0.5 * (xs[1:] + xs[:-1])]), t)
        if np.any(a1 <= 0):
            raise ConfigError(f"h2 violated at t={t}: a1 must be positive (min a1 = {np.min(a1):.4g})")


def assemble_operators(spec: ProblemSpec, grid: Grid, t: float, check: bool = True):
    """Sparse (L1h, L2h) acting on the unknowns of ``grid`` at time t.

    Unknowns are the interior nodes (Dirichlet) or all nodes (Neumann), in
    C order of the grid array.
    """
    if grid.ndim != spec.ndim or any(abs(g - d[0]) > 1e-12 or abs(G - d[1]) > 1e-12
                                     for g, G, d in zip(grid.lower, grid.upper, spec.domain)):
        raise ConfigError("grid does not cover the problem domain")
    if check:
        check_signs(spec, grid, t)
    neumann = spec.bc == "neumann"
    shape = grid.shape
    X = grid.coords[0].ravel()
    if grid.ndim == 1:
        xs = grid.axes[0]
        a_half = np.asarray(spec.a1(0.5 * (xs[1:] + xs[:-1]), t), dtype=float)
        L1 = _second_diff_1d(a_half, grid.h[0], neumann)
    else:
        L1 = sp.csr_matrix((X.size, X.size))
        for ax, (n, h) in enumerate(zip(shape, grid.h)):
            L1 = L1 + _kron_axis(_second_diff_1d(np.ones(n - 1), h, neumann), ax, shape)
    L1 = L1 + sp.diags(np.asarray(spec.a0(X, t), dtype=float).ravel())
    L2 = sp.diags(np.broadcast_to(np.asarray(spec.b0(X, t), dtype=float), X.shape).ravel())
    for ax, (n, h) in enumerate(zip(shape, grid.h)):
        bvals = np.broadcast_to(np.asarray(spec.b[ax](X, t), dtype=float), X.shape).ravel()
        if np.any(bvals != 0):
            L2 = L2 + sp.diags(bvals) @ _kron_axis(_first_diff_1d(n, h, neumann), ax, shape)
    idx = np.flatnonzero(grid.unknown_mask(spec.bc).ravel())
    L1 = sp.csr_matrix(L1)[idx][:, idx]
    L2 = sp.csr_matrix(L2)[idx][:, idx]
    return L1.tocsr(), L2.tocsr()


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------

NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 50


@dataclass
class Trajectory:
    """Full time history of a run plus per-node diagnostics."""

    mesh: TimeMesh
    grid: Grid
    u: np.ndarray
    V: np.ndarray
    sup_norm: np.ndarray
    mem_norm: np.ndarray
    newton_iters: np.ndarray

    def field(self, n: int) -> Field:
        return Field(self.grid, self.u[n])

    def energy(self) -> History:
        return History(self.mesh, self.V)

    def w12_norm(self) -> np.ndarray:
        return np.sqrt(self.V)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,V,sup_norm,mem_norm,newton_iters\n")
            for row in zip(self.mesh.nodes, self.V, self.sup_norm, self.mem_norm, self.newton_iters):
                fh.write(",".join(f"{v:.17g}" for v in row[:4]) + f",{int(row[4])}\n")


class _Stepper:
    """Carries the discrete history needed by the nonlocal terms."""

    def __init__(self, spec: ProblemSpec, grid: Grid, mesh: TimeMesh, check: bool):
        self.spec, self.grid, self.mesh, self.check = spec, grid, mesh, check
        self.idx = np.flatnonzero(grid.unknown_mask(spec.bc).ravel())
        N = len(mesh)
        self.U = np.zeros((N, self.idx.size))
        self.coef = [np.asarray(c.at(mesh.nodes), dtype=float) for _, c in spec.terms]
        self.memory = not isinstance(spec.kernel, ZeroKernel)
        self.Z = np.zeros((N, self.idx.size)) if self.memory else None
        self.const_ops = all(c.time_constant for c in (spec.a1, spec.a0, spec.b0) + spec.b)
        self._ops_cache = None
        self.filled = 0

    def ops(self, t: float):
        if self.const_ops:
            if self._ops_cache is None:
                self._ops_cache = assemble_operators(self.spec, self.grid, t, self.check)
            return self._ops_cache
        return assemble_operators(self.spec, self.grid, t, self.check)

    def set_initial(self, u0_full: np.ndarray):
        self.U[0] = u0_full.ravel()[self.idx]
        if self.memory:
            self.Z[0] = self.ops(0.0)[1] @ self.U[0]
        self.filled = 1

    def advance(self, n: int) -> int:
        if n != self.filled:
            raise SolverError(f"step {n} requested but nodes 0..{self.filled - 1} are populated")
        spec, t = self.spec, self.mesh.nodes
        U = self.U
        lead = 0.0
        rhs = np.zeros(U.shape[1])
        dU = np.diff(U[:n], axis=0)
        for (theta, _), c in zip(spec.terms, self.coef):
            a = l1_weights(t, n, theta)
            lead += c[n] * a[-1]
            if spec.fdo == "I":
                hist = c[n] * (a[:-1] @ dU) - c[n] * a[-1] * U[n - 1]
            else:
                P = c[:n, None] * U[:n]
                hist = a[:-1] @ np.diff(P, axis=0) - a[-1] * P[n - 1]
            rhs -= hist
        L1, L2 = self.ops(float(t[n]))
        if self.memory:
            w = convolution_weights(spec.kernel, t, n)
            rhs += w[:-1] @ self.Z[:n] + w[-1] * self.Z[n - 1]
        A = sp.identity(U.shape[1], format="csc") * lead - L1.tocsc()
        u, iters = _newton(A, spec.f, rhs, U[n - 1].copy())
        if not np.all(np.isfinite(u)):
            raise SolverError(f"non-finite state at node {n}")
        U[n] = u
        if self.memory:
            self.Z[n] = L2 @ u
        self.filled = n + 1
        return iters

    def full(self, n: int) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        out.ravel()[self.idx] = self.U[n]
        return out


def _newton(A: sp.csc_matrix, f: Nonlinearity, rhs: np.ndarray, u: np.ndarray):
    """Solve A u + f(u) = rhs by damped Newton; halve the step while the residual grows."""
    linear = isinstance(f, ZeroNonlinearity) or (isinstance(f, OddPolynomial) and f.gamma == 1.0)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    res = A @ u + f(u) - rhs
    rnorm = float(np.max(np.abs(res)))
    if rnorm <= NEWTON_TOL * scale:
        return u, 0
    for it in range(1, NEWTON_MAX_ITER + 1):
        J = (A + sp.diags(f.derivative(u))).tocsc()
        try:
            du = splu(J).solve(-res)
        except RuntimeError as exc:
            raise SolverError(f"linear solve failed: {exc}") from exc
        lam = 1.0
        for _ in range(30):
            trial = u + lam * du
            tres = A @ trial + f(trial) - rhs
            tnorm = float(np.max(np.abs(tres)))
            if tnorm <= rnorm or linear:
                break
            lam *= 0.5
        u, res, rnorm = trial, tres, tnorm
        step_norm = lam * float(np.max(np.abs(du)))
        if rnorm <= NEWTON_TOL * scale or step_norm <= NEWTON_TOL * max(1.0, float(np.max(np.abs(u)))):
            return u, it
    raise SolverError(f"Newton did not converge in {NEWTON_MAX_ITER} iterations (residual {rnorm:.3g})")


def step(traj_u: np.ndarray, spec: ProblemSpec, grid: Grid, mesh: TimeMesh, n: int, check: bool = True) -> Field:
    """Compute node n from a populated prefix traj_u[0..n-1] (full grid arrays)."""
    if n < 1 or traj_u.shape[0] < n:
        raise SolverError(f"step {n} needs nodes 0..{n - 1}")
    st = _Stepper(spec, grid, mesh, check)
    st.set_initial(np.asarray(traj_u[0]))
    for j in range(1, n):
        st.U[j] = np.asarray(traj_u[j]).ravel()[st.idx]
        if st.memory:
            st.Z[j] = st.ops(float(mesh.nodes[j]))[1] @ st.U[j]
    st.filled = n
    st.advance(n)
    return Field(grid, st.full(n))


def run(spec: ProblemSpec, grid: Grid, mesh: TimeMesh, force: bool = False, mem_diagnostic: bool = True) -> Trajectory:
    """March from u0 over the whole mesh and collect diagnostics.

    Without ``force`` the structural hypotheses are checked first and a
    HypothesisError is raised when they fail.
    """
    from .analysis import validate_hypotheses

    if not force:
        report = validate_hypotheses(spec, horizon=mesh.T)
        if not report.ok:
            raise HypothesisError("structural hypotheses fail: " + ", ".join(report.failures()), report)
    u0 = np.asarray(spec.u0(grid), dtype=float)
    if u0.shape != grid.shape:
        raise ConfigError("initial condition does not match the grid")
    if spec.bc == "dirichlet" and np.max(np.abs(u0[grid.boundary_mask()])) > 1e-12 * max(1.0, np.max(np.abs(u0))):
        raise ConfigError("Dirichlet problems need u0 = 0 on the boundary")
    st = _Stepper(spec, grid, mesh, check=not force)
    st.set_initial(u0)
    N = len(mesh)
    u = np.zeros((N,) + grid.shape)
    u[0] = st.full(0)
    iters = np.zeros(N, dtype=int)
    for n in range(1, N):
        iters[n] = st.advance(n)
        u[n] = st.full(n)
    V = np.array([sobolev_energy(Field(grid, u[n])) for n in range(N)])
    sup = np.max(np.abs(u.reshape(N, -1)), axis=1)
    mem = np.zeros(N)
    if mem_diagnostic and st.memory:
        t = mesh.nodes
        flat = u.reshape(N, -1)
        for n in range(1, N):
            w = convolution_weights(spec.kernel, t, n)
            conv = (w @ flat[: n + 1]).reshape(grid.shape)
            mem[n] = math.sqrt(sobolev_energy(Field(grid, conv)))
    if not (np.all(np.isfinite(V)) and np.all(np.isfinite(sup))):
        raise SolverError("non-finite diagnostics")
    return Trajectory(mesh, grid, u, V, sup, mem, iters)
