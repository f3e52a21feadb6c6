"""Discrete fractional operators on sampled time histories.

Everything here works on a :class:`History` (a mesh plus one value, or one
spatial array, per node). Integrals use product integration: the sampled
function is reconstructed piecewise linearly and the algebraic kernel is
integrated exactly over each subinterval. The Caputo derivative is the L1
scheme built on the same reconstruction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .errors import DomainError
from .special_fn import gamma

__all__ = [
    "TimeMesh",
    "History",
    "AlgebraicKernel",
    "ZeroKernel",
    "SampledKernel",
    "power_diff",
    "l1_weights",
    "product_weights",
    "rl_integral",
    "caputo_l1",
    "caputo_l1_all",
    "convolve_singular",
    "caputo_product",
    "jtheta",
]


@dataclass(frozen=True, eq=False)
class TimeMesh:
    """Strictly increasing time nodes starting at 0.

    ``kind`` is ``uniform`` or ``graded`` (t_j = T (j/M)^r).
    """

    nodes: np.ndarray
    kind: str = "uniform"
    grading_exponent: Optional[float] = None

    def __post_init__(self):
        t = np.array(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise DomainError("a time mesh needs at least two nodes")
        if t[0] != 0.0:
            raise DomainError("time mesh must start at 0")
        if np.any(np.diff(t) <= 0):
            raise DomainError("time mesh nodes must be strictly increasing")
        if self.kind not in ("uniform", "graded"):
            raise DomainError(f"unknown mesh kind {self.kind!r}")
        if self.kind == "graded":
            if self.grading_exponent is None or self.grading_exponent < 1:
                raise DomainError("graded meshes need grading_exponent >= 1")
        t.setflags(write=False)
        object.__setattr__(self, "nodes", t)

    @classmethod
    def uniform(cls, T: float, M: int) -> "TimeMesh":
        return cls(np.linspace(0.0, T, M + 1), "uniform")

    @classmethod
    def graded(cls, T: float, M: int, r: float) -> "TimeMesh":
        nodes = T * (np.arange(M + 1) / M) ** r
        nodes[-1] = T
        return cls(nodes, "graded", float(r))

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def __len__(self):
        return self.nodes.size

    def same_as(self, other: "TimeMesh") -> bool:
        return self is other or (self.nodes.shape == other.nodes.shape and np.array_equal(self.nodes, other.nodes))


@dataclass(frozen=True, eq=False)
class History:
    """Values on a time mesh; row n holds the value (scalar or spatial array) at node n.

    Prefixes are allowed while stepping: ``values`` may be shorter than the mesh.
    """

    mesh: TimeMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 0 or v.shape[0] < 1:
            raise DomainError("history needs at least one value")
        if v.shape[0] > len(self.mesh):
            raise DomainError(f"history has {v.shape[0]} values for {len(self.mesh)} nodes")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, mesh: TimeMesh, fn: Callable) -> "History":
        return cls(mesh, np.asarray(fn(mesh.nodes), dtype=float))

    @property
    def complete(self) -> bool:
        return self.values.shape[0] == len(self.mesh)

    @property
    def t(self) -> np.ndarray:
        return self.mesh.nodes[: self.values.shape[0]]

    def to_csv(self, path: Union[str, Path]) -> None:
        """Two-column (t, value) CSV with round-trip precision; scalar histories only."""
        if self.values.ndim != 1:
            raise DomainError("only scalar histories serialize to two-column CSV")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "value"])
            for ti, vi in zip(self.t, self.values):
                w.writerow([f"{ti:.17g}", f"{vi:.17g}"])

    @classmethod
    def from_csv(cls, path: Union[str, Path], kind: str = "uniform",
                 grading_exponent: Optional[float] = None) -> "History":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(TimeMesh(data[:, 0], kind, grading_exponent), data[:, 1])


def _require_complete(h: History, n: Optional[int] = None) -> None:
    if n is None:
        if not h.complete:
            raise DomainError("operation needs a complete history")
    elif not 0 <= n < h.values.shape[0]:
        raise DomainError(f"node {n} outside history of length {h.values.shape[0]}")


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

def power_diff(a, b, p: float):
    """a^p - b^p for a > b >= 0 without cancellation when b is close to a."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore"):
        return -(a ** p) * np.expm1(p * np.log1p(-(a - b) / a))


def l1_weights(nodes: np.ndarray, n: int, theta: float) -> np.ndarray:
    """Weights a_{n,j}, j < n, with D^theta v(t_n) ~ sum_j a_{n,j} (v_{j+1} - v_j)."""
    t = nodes[: n + 1]
    A = t[n] - t[:-1]
    B = t[n] - t[1:]
    return power_diff(A, B, 1.0 - theta) / (gamma(2.0 - theta) * np.diff(t))


def product_weights(nodes: np.ndarray, n: int, theta: float) -> np.ndarray:
    """Weights W_j, j <= n, with int_0^{t_n} (t_n - s)^{theta-1} v(s) ds ~ sum_j W_j v_j.

    v is reconstructed piecewise linearly; the kernel moments are exact.
    """
    if not theta > 0:
        raise DomainError(f"product integration needs theta > 0, got {theta}")
    t = nodes[: n + 1]
    W = np.zeros(n + 1)
    if n == 0:
        return W
    A = t[n] - t[:-1]
    B = t[n] - t[1:]
    dt = np.diff(t)
    m0 = power_diff(A, B, theta) / theta
    # int (t_n - s)^{theta-1} (s - t_j) ds over [t_j, t_{j+1}]
    m1 = A * m0 - power_diff(A, B, theta + 1.0) / (theta + 1.0)
    right = m1 / dt
    W[:-1] += m0 - right
    W[1:] += right
    return W


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def rl_integral(h: History, theta: float) -> History:
    """Riemann-Liouville integral I^theta v = (omega_theta * v) at every node."""
    if not 0 < theta:
        raise DomainError(f"rl_integral needs theta > 0, got {theta}")
    _require_complete(h)
    t = h.mesh.nodes
    out = np.zeros_like(h.values)
    scale = 1.0 / gamma(theta)
    for n in range(1, t.size):
        out[n] = scale * np.tensordot(product_weights(t, n, theta), h.values[: n + 1], axes=(0, 0))
    return History(h.mesh, out)


def caputo_l1(h: History, theta: float, n: int):
    """L1 value of the Caputo derivative of order theta at node n >= 1."""
    if not 0 < theta < 1:
        raise DomainError(f"caputo_l1 needs theta in (0, 1), got {theta}")
    if n < 1:
        raise DomainError("the Caputo derivative is evaluated at nodes n >= 1")
    _require_complete(h, n)
    a = l1_weights(h.mesh.nodes, n, theta)
    return np.tensordot(a, np.diff(h.values[: n + 1], axis=0), axes=(0, 0))


def caputo_l1_all(h: History, theta: float) -> np.ndarray:
    """caputo_l1 at every node; row 0 is NaN (undefined at t = 0)."""
    _require_complete(h)
    out = np.empty_like(h.values)
    out[0] = np.nan
    for n in range(1, len(h.mesh)):
        out[n] = caputo_l1(h, theta, n)
    return out


@dataclass(frozen=True)
class AlgebraicKernel:
    """k(t) = coefficient * t^(-exponent) with exponent < 1."""

    coefficient: float
    exponent: float

    def __post_init__(self):
        if self.exponent >= 1:
            raise DomainError(f"kernel t^-{self.exponent} is not integrable at 0")

    def __call__(self, t):
        return self.coefficient * np.asarray(t, dtype=float) ** (-self.exponent)

    def l1_norm(self, horizon: float) -> float:
        """Integral of |k| over (0, horizon)."""
        return abs(self.coefficient) * horizon ** (1 - self.exponent) / (1 - self.exponent)


@dataclass(frozen=True)
class ZeroKernel:
    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def l1_norm(self, horizon: float) -> float:
        return 0.0


@dataclass(frozen=True)
class SampledKernel:
    """Kernel given as a callable, finite at every positive lag.

    The subinterval touching s = t uses the kernel at its midpoint, so a mild
    singularity at 0 is tolerated.
    """

    fn: Callable

    def __call__(self, t):
        return np.asarray(self.fn(np.asarray(t, dtype=float)), dtype=float)

    def l1_norm(self, horizon: float, points: int = 4001) -> float:
        s = np.geomspace(horizon * 1e-9, horizon, points)
        return float(np.trapezoid(np.abs(self(s)), s))


Kernel = Union[AlgebraicKernel, ZeroKernel, SampledKernel]


def convolution_weights(kernel: Kernel, nodes: np.ndarray, n: int) -> np.ndarray:
    """Weights W_j with (k * v)(t_n) ~ sum_{j<=n} W_j v_j."""
    if isinstance(kernel, ZeroKernel) or n == 0:
        return np.zeros(n + 1)
    if isinstance(kernel, AlgebraicKernel):
        return kernel.coefficient * product_weights(nodes, n, 1.0 - kernel.exponent)
    t = nodes[: n + 1]
    dt = np.diff(t)
    lag = t[n] - t
    k = np.empty(n + 1)
    k[:-1] = kernel(lag[:-1])
    if not np.all(np.isfinite(k[:-1])):
        raise DomainError("sampled kernel is not finite at a positive lag")
    W = np.zeros(n + 1)
    W[:-1] += 0.5 * dt * k[:-1]
    W[1:] += 0.5 * dt * k[:-1]
    # last interval: replace the trapezoid with a midpoint kernel value
    kmid = float(kernel(0.5 * dt[-1]))
    W[n - 1] += 0.5 * dt[-1] * (kmid - k[n - 1])
    W[n] = 0.5 * dt[-1] * kmid
    return W


def convolve_singular(kernel: Kernel, h: History) -> History:
    """(k * v)(t_n) at every node of a complete history."""
    _require_complete(h)
    t = h.mesh.nodes
    out = np.zeros_like(h.values)
    if isinstance(kernel, ZeroKernel):
        return History(h.mesh, out)
    for n in range(1, t.size):
        out[n] = np.tensordot(convolution_weights(kernel, t, n), h.values[: n + 1], axes=(0, 0))
    return History(h.mesh, out)


def _check_same_mesh(a: History, b: History) -> None:
    if not a.mesh.same_as(b.mesh):
        raise DomainError("histories live on different meshes")


def caputo_product(rho_h: History, u_h: History, theta: float, n: int):
    """L1 value of D^theta(rho u) at node n, taken on the pointwise product history."""
    _check_same_mesh(rho_h, u_h)
    m = min(rho_h.values.shape[0], u_h.values.shape[0])
    rho = rho_h.values[:m]
    u = u_h.values[:m]
    prod = rho.reshape(rho.shape + (1,) * (u.ndim - rho.ndim)) * u
    return caputo_l1(History(u_h.mesh, prod), theta, n)


def jtheta(w1_h: History, w2_h: History, theta: float, n: int) -> float:
    """Quadrature value at t_n of int_0^t [w1(t)-w1(s)] (t-s)^(-1-theta) [w2(s)-w2(0)] ds.

    The difference quotient q(s) = [w1(t)-w1(s)]/(t-s) is formed at the nodes
    and absorbs one power of the singularity; on the last subinterval it is
    held at the one-sided quotient. The remaining weight (t-s)^(-theta) is
    integrated exactly against the piecewise-linear reconstruction of
    q(s)[w2(s)-w2(0)].
    """
    _check_same_mesh(w1_h, w2_h)
    if not 0 < theta < 1:
        raise DomainError(f"jtheta needs theta in (0, 1), got {theta}")
    if n < 1:
        return 0.0
    _require_complete(w1_h, n)
    _require_complete(w2_h, n)
    t = w1_h.mesh.nodes[: n + 1]
    w1 = w1_h.values[: n + 1]
    w2 = w2_h.values[: n + 1]
    q = np.empty(n + 1)
    q[:-1] = (w1[n] - w1[:-1]) / (t[n] - t[:-1])
    q[n] = q[n - 1]
    g = q * (w2 - w2[0])
    return float(product_weights(t, n, 1.0 - theta) @ g)
