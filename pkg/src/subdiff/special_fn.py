"""Gamma, power kernels and multinomial Mittag-Leffler functions.

The multinomial Mittag-Leffler function

    E_{(b_1..b_m), b_0}(z_1..z_m) = sum_k sum_{|k|=k} k!/(k_1!..k_m!) prod z_j^{k_j} / Gamma(b_0 + sum b_j k_j)

is summed by total degree in double precision while the argument is small.
For nonpositive arguments the function is also a Laplace transform,

    t^{b_0-1} E(-d_1 t^{b_1}, ..., -d_m t^{b_m})  <->  s^{-b_0} / (1 + sum d_j s^{-b_j}),

and collapsing the Bromwich line onto the negative real axis gives a real
integral against exp(-r t). That integral is smooth in log r and is summed by
the trapezoid rule; it takes over when the power series would lose accuracy
to cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConvergenceError, DomainError

__all__ = [
    "GAMMA_MAX_ARG",
    "MLParams",
    "SeriesPolicy",
    "DEFAULT_POLICY",
    "gamma",
    "rgamma",
    "omega",
    "omega_convolution",
    "ml_multinomial",
    "ml_classic",
    "calE",
    "calE_asymptotic",
    "crossover_time",
    "series_growth_exponent",
]

GAMMA_MAX_ARG = 171.6
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class MLParams:
    """Parameters (beta_bar, beta0, d_bar) of the kernel t^{beta0-1} E(-d t^beta).

    With ``monotone=True`` the ordering 0 < beta_m < ... < beta_1 <= beta0
    required by the decay estimates is asserted.
    """

    beta_bar: tuple[float, ...]
    beta0: float
    d_bar: tuple[float, ...]
    monotone: bool = False

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta_bar)
        d = tuple(float(x) for x in self.d_bar)
        object.__setattr__(self, "beta_bar", beta)
        object.__setattr__(self, "d_bar", d)
        object.__setattr__(self, "beta0", float(self.beta0))
        if len(beta) < 1:
            raise DomainError("beta_bar must have at least one entry")
        if len(d) != len(beta):
            raise DomainError(f"d_bar has {len(d)} entries, beta_bar has {len(beta)}")
        if any(b <= 0 for b in beta):
            raise DomainError(f"all beta_j must be positive, got {beta}")
        if self.monotone:
            if any(beta[i] <= beta[i + 1] for i in range(len(beta) - 1)):
                raise DomainError(f"monotone params need strictly decreasing beta_bar, got {beta}")
            if beta[0] > self.beta0:
                raise DomainError(f"monotone params need beta_1 <= beta0, got {beta[0]} > {self.beta0}")

    @property
    def m(self) -> int:
        return len(self.beta_bar)

    def shifted(self, theta: float) -> "MLParams":
        """Parameters of I^theta applied to the kernel (beta0 -> beta0 + theta)."""
        return MLParams(self.beta_bar, self.beta0 + theta, self.d_bar, monotone=False)


@dataclass(frozen=True)
class SeriesPolicy:
    abs_tol: float = 1e-14
    rel_tol: float = 1e-12
    max_total_degree: int = 500
    asymptotic_switch_radius: float = 1e-3

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("series tolerances must be positive")
        if self.max_total_degree < 1:
            raise DomainError("max_total_degree must be >= 1")
        if not self.asymptotic_switch_radius > 0:
            raise DomainError("asymptotic_switch_radius must be positive")

    def tolerance(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


DEFAULT_POLICY = SeriesPolicy()


# ---------------------------------------------------------------------------
# Gamma and power kernels
# ---------------------------------------------------------------------------

def gamma(x):
    """Euler Gamma function; arguments above ~171.6 overflow and are rejected."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa > GAMMA_MAX_ARG):
        raise DomainError(f"Gamma overflows for arguments > {GAMMA_MAX_ARG}")
    if xa.ndim == 0:
        xf = float(xa)
        if xf <= 0 and xf == math.floor(xf):
            raise DomainError(f"Gamma has a pole at {xf}")
        return math.gamma(xf)
    if np.any((xa <= 0) & (xa == np.floor(xa))):
        raise DomainError("Gamma has poles at nonpositive integers")
    return special.gamma(xa)


def rgamma(x):
    """1/Gamma(x), entire: zero at the poles of Gamma."""
    out = special.rgamma(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def omega(theta: float, t):
    """Power kernel omega_theta(t) = t^(theta-1) / Gamma(theta) for t > 0."""
    if not theta > 0:
        raise DomainError(f"omega needs theta > 0, got {theta}")
    ta = np.asarray(t, dtype=float)
    if np.any(ta <= 0):
        raise DomainError("omega is evaluated only at t > 0; the endpoint singularity belongs to quadrature")
    out = ta ** (theta - 1.0) / gamma(theta)
    return float(out) if out.ndim == 0 else out


def omega_convolution(theta1: float, theta2: float, t: float) -> float:
    """(omega_theta1 * omega_theta2)(t) by adaptive quadrature with algebraic end weights."""
    if t <= 0:
        raise DomainError("convolution evaluated at t > 0 only")
    scale = 1.0 / (gamma(theta1) * gamma(theta2))
    val, _ = integrate.quad(
        lambda s: 1.0, 0.0, t, weight="alg", wvar=(theta2 - 1.0, theta1 - 1.0),
        epsabs=0.0, epsrel=1e-13, limit=200,
    )
    return scale * val


# ---------------------------------------------------------------------------
# Series by total degree
# ---------------------------------------------------------------------------

@lru_cache(maxsize=4096)
def _compositions(k: int, m: int) -> np.ndarray:
    """All (k_1..k_m) >= 0 with sum k, as an int array of shape (count, m)."""
    if m == 1:
        return np.array([[k]], dtype=np.int64)
    blocks = []
    for first in range(k, -1, -1):
        rest = _compositions(k - first, m - 1)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def _degree_terms(k: int, beta: np.ndarray, beta0: float, z: np.ndarray) -> np.ndarray:
    K = _compositions(k, len(beta))
    logw = special.gammaln(k + 1.0) - special.gammaln(K + 1.0).sum(axis=1)
    absz = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        logz = np.where(absz > 0, np.log(np.where(absz > 0, absz, 1.0)), -np.inf)
        powers = np.where(K > 0, K * logz, 0.0).sum(axis=1)
    arg = beta0 + K @ beta
    with np.errstate(over="ignore"):
        lg = special.gammaln(arg)
    sign = np.prod(np.where((z < 0) & (K % 2 == 1), -1.0, 1.0), axis=1) * special.gammasgn(arg)
    with np.errstate(over="ignore", invalid="ignore"):
        mag = np.exp(logw + powers - lg)
    mag = np.where(np.isfinite(lg), mag, 0.0)
    return sign * mag


def _series(beta: np.ndarray, beta0: float, z: np.ndarray, policy: SeriesPolicy):
    """Sum by total degree; returns (value, error_estimate, converged)."""
    degree_sums: list[float] = []
    abs_sums: list[float] = []
    prev_ratio = math.inf
    for k in range(policy.max_total_degree + 1):
        terms = _degree_terms(k, beta, beta0, z)
        s_abs = math.fsum(np.abs(terms))
        degree_sums.append(math.fsum(terms))
        abs_sums.append(s_abs)
        if k < 2 or abs_sums[-2] == 0.0:
            continue
        ratio = s_abs / abs_sums[-2]
        value = math.fsum(degree_sums)
        if ratio < 1.0 and ratio <= prev_ratio:
            tail = s_abs * ratio / (1.0 - ratio)
            if tail <= policy.tolerance(value) or s_abs == 0.0:
                rounding = 4.0 * _EPS * math.fsum(abs_sums)
                return value, tail + rounding, True
        prev_ratio = ratio
    value = math.fsum(degree_sums)
    return value, math.inf, False


def series_growth_exponent(z: Sequence[float], beta: Sequence[float]) -> float:
    """Positive root s of sum |z_j| s^(-beta_j) = 1.

    The sum of absolute series terms behaves like exp(s), so this measures the
    cancellation a double-precision summation must absorb for negative z.
    """
    absz = np.abs(np.asarray(z, dtype=float))
    beta = np.asarray(beta, dtype=float)
    if not np.any(absz > 0):
        return 0.0
    fn = lambda s: float(np.sum(absz * s ** (-beta))) - 1.0
    hi = 1.0
    while fn(hi) > 0:
        hi *= 2.0
    lo = hi / 2.0
    while fn(lo) < 0 and lo > 1e-300:
        lo /= 2.0
    return optimize.brentq(fn, lo, hi, xtol=1e-12, rtol=1e-10)


# ---------------------------------------------------------------------------
# Real-axis Laplace (spectral) representation
# ---------------------------------------------------------------------------

def _spectral_applicable(beta: np.ndarray, beta0: float, d: np.ndarray) -> bool:
    active = d > 0
    if np.any(d < 0) or not np.any(active):
        return False
    return bool(np.all(beta[active] < 1.0)) and beta0 > 0.0


def _psi(k: int, x: np.ndarray) -> np.ndarray:
    """psi_k(x) = sum_i (-x)^i / (i+k)!, so that I^k of exp(-r t) is t^k psi_k(r t)."""
    if k == 0:
        return np.exp(-x)
    out = np.empty_like(x)
    small = x < 1.0
    xs = x[small]
    acc = np.zeros_like(xs)
    for i in range(24, -1, -1):
        acc = acc * (-xs) + 1.0 / math.factorial(i + k)
    out[small] = acc
    xl = x[~small]
    taylor = sum((-xl) ** i / math.factorial(i) for i in range(k))
    out[~small] = (-1) ** k * (np.exp(-xl) - taylor) / xl ** k
    return out


def _spectral(t: np.ndarray, beta: np.ndarray, beta0: float, d: np.ndarray, step: float = 0.02) -> np.ndarray:
    """t^{beta0-1} E(-d t^beta) for d >= 0 via the negative-axis Laplace integral.

    With s = r e^{-i pi} the inverse transform of s^{-gamma}/D(s) collapses to
    (1/pi) int_0^inf exp(-r t) Im[...] dr when gamma = beta0 - beta_top <= 1.
    Larger beta0 is reduced to that case by integrating k times in t, which
    replaces exp(-r t) by t^k psi_k(r t).
    """
    active = d > 0
    b_act, d_act = beta[active], d[active]
    itop = int(np.argmax(b_act))
    btop = float(b_act[itop])
    k = max(0, math.ceil(beta0 - btop - 1.0 - 1e-12))
    base = beta0 - k
    gam = base - btop
    if abs(gam - 1.0) < 1e-12:
        gam = 1.0
    expo = btop - b_act
    others = [float(e) for i, e in enumerate(expo) if i != itop and e > 0]
    decay = 1.0 - gam if gam < 1.0 else min([btop] + others)
    t_min = float(t.min())
    x_lo = max(-700.0, math.log(1e-18) / decay)
    if k == 0:
        x_hi = math.log(60.0 / t_min)
    else:
        # psi_k(x) ~ 1/x for large x: the integrand falls off like r^(-base)
        x_hi = min(700.0, math.log(1.0 / t_min) + max(math.log(60.0), math.log(1e17) / base))
    if x_hi <= x_lo:
        x_lo = x_hi - 50.0
    x = np.arange(x_lo, x_hi + step, step)
    r = np.exp(x)
    phase = np.exp(-1j * np.pi * expo)
    den = np.exp(btop * x) * np.exp(-1j * np.pi * btop) + (
        d_act[:, None] * np.exp(np.outer(expo, x)) * phase[:, None]
    ).sum(axis=0)
    dens = (np.exp((1.0 - gam) * x) * np.exp(1j * np.pi * gam) / den).imag / np.pi
    wts = np.full(x.size, step)
    wts[0] = wts[-1] = 0.5 * step
    dw = dens * wts
    out = np.empty(t.size)
    chunk = max(1, int(2e7 // x.size))
    for i in range(0, t.size, chunk):
        tt = t[i:i + chunk]
        out[i:i + chunk] = _psi(k, np.outer(tt, r)) @ dw
    tk = t ** k / math.factorial(k)
    if k:
        out *= t ** k
        # r^(-base) remainder above x_hi
        out += t ** (k - 1) / math.factorial(k - 1) * dens[-1] / (r[-1] * base)
    # small-r remainder: the integrand behaves like c * r^decay below x_lo
    out += tk * dens[0] / decay
    if gam == 1.0:
        out += tk / d_act[itop]
    return out


# ---------------------------------------------------------------------------
# Public Mittag-Leffler evaluations
# ---------------------------------------------------------------------------

_SPECTRAL_GROWTH = 4.0


def ml_multinomial(params: MLParams, z_bar: Sequence[float], policy: SeriesPolicy = DEFAULT_POLICY) -> float:
    """Multinomial Mittag-Leffler function E_{beta_bar, beta0}(z_bar).

    ``params.d_bar`` is ignored; the arguments come from ``z_bar``.
    Raises ConvergenceError when the series cannot meet the policy and the
    arguments do not admit the negative-axis integral.
    """
    z = np.asarray(z_bar, dtype=float)
    beta = np.asarray(params.beta_bar)
    if z.shape != beta.shape:
        raise DomainError(f"expected {beta.size} arguments, got {z.size}")
    if not np.all(np.isfinite(z)):
        raise DomainError("arguments must be finite")
    if np.all(z == 0):
        return rgamma(params.beta0)
    d = -z
    spectral_ok = _spectral_applicable(beta, params.beta0, d)
    if spectral_ok and series_growth_exponent(z, beta) > _SPECTRAL_GROWTH:
        return float(_spectral(np.array([1.0]), beta, params.beta0, d)[0])
    value, err, converged = _series(beta, params.beta0, z, policy)
    if converged and err <= policy.tolerance(value):
        return value
    if spectral_ok:
        return float(_spectral(np.array([1.0]), beta, params.beta0, d)[0])
    if not converged:
        raise ConvergenceError(
            f"series not converged by degree {policy.max_total_degree}; use the asymptotic regime"
        )
    raise ConvergenceError(f"series cancellation error {err:.3g} exceeds tolerance")


def ml_classic(alpha: float, beta: float, z: float, policy: SeriesPolicy = DEFAULT_POLICY) -> float:
    """Two-parameter Mittag-Leffler function E_{alpha,beta}(z)."""
    return ml_multinomial(MLParams((alpha,), beta, (0.0,)), [z], policy)


def calE(t, params: MLParams, policy: SeriesPolicy = DEFAULT_POLICY):
    """Kernel t^{beta0-1} E_{beta_bar,beta0}(-d_1 t^{beta_1}, ..., -d_m t^{beta_m}) for t > 0."""
    ta = np.asarray(t, dtype=float)
    scalar = ta.ndim == 0
    ta = np.atleast_1d(ta)
    if np.any(ta <= 0):
        raise DomainError("calE is defined for t > 0")
    beta = np.asarray(params.beta_bar)
    d = np.asarray(params.d_bar)
    out = np.empty(ta.size)
    if not np.any(d != 0):
        out[:] = ta ** (params.beta0 - 1.0) * rgamma(params.beta0)
        return float(out[0]) if scalar else out.reshape(np.shape(t))
    spectral_ok = _spectral_applicable(beta, params.beta0, d)
    use_spec = np.zeros(ta.size, dtype=bool)
    for i, ti in enumerate(ta):
        z = -d * ti ** beta
        if spectral_ok and series_growth_exponent(z, beta) > _SPECTRAL_GROWTH:
            use_spec[i] = True
            continue
        value, err, converged = _series(beta, params.beta0, z, policy)
        if converged and err <= policy.tolerance(value):
            out[i] = ti ** (params.beta0 - 1.0) * value
        elif spectral_ok:
            use_spec[i] = True
        elif not converged:
            raise ConvergenceError(f"series not converged at t={ti}; use the asymptotic regime")
        else:
            raise ConvergenceError(f"series cancellation error {err:.3g} exceeds tolerance at t={ti}")
    if np.any(use_spec):
        out[use_spec] = _spectral(ta[use_spec], beta, params.beta0, d)
    return float(out[0]) if scalar else out.reshape(np.shape(t))


def calE_asymptotic(t, params: MLParams, regime: str, policy: SeriesPolicy = DEFAULT_POLICY):
    """Leading-order behaviour of calE near t = 0 or t = infinity."""
    ta = np.asarray(t, dtype=float)
    if np.any(ta <= 0):
        raise DomainError("calE_asymptotic is defined for t > 0")
    b0 = params.beta0
    beta, d = params.beta_bar, params.d_bar
    radius = policy.asymptotic_switch_radius
    if regime == "zero":
        if np.any(ta > radius):
            raise DomainError(f"zero regime needs t <= {radius}")
        out = ta ** (b0 - 1.0) * rgamma(b0)
        for bi, di in zip(beta, d):
            out = out - di * ta ** (b0 + bi - 1.0) * rgamma(b0 + bi)
    elif regime == "infinity":
        if np.any(ta < 1.0 / radius):
            raise DomainError(f"infinity regime needs t >= {1.0 / radius}")
        b1, d1 = beta[0], d[0]
        if d1 == 0:
            raise DomainError("infinity regime needs d_1 != 0")
        if b0 != b1:
            out = ta ** (b0 - b1 - 1.0) * rgamma(b0 - b1) / d1
        else:
            if params.m < 2:
                raise DomainError("the beta0 = beta1 branch needs m >= 2 (uses d_2, beta_2)")
            b2, d2 = beta[1], d[1]
            out = -d2 * ta ** (b2 - b1 - 1.0) * rgamma(b2 - b1) / d1
    else:
        raise DomainError(f"unknown regime {regime!r}")
    return float(out) if np.ndim(out) == 0 else out


def crossover_time(params: MLParams, rel_gap: float = 1e-2, t_min: float = 1.0,
                   t_max: float = 1e8, points: int = 161, policy: SeriesPolicy = DEFAULT_POLICY):
    """Smallest scanned t beyond which the infinity expansion stays within rel_gap of calE.

    Returns None if the gap never settles below rel_gap on the scan.
    """
    grid = np.geomspace(t_min, t_max, points)
    exact = calE(grid, params, policy)
    probe = SeriesPolicy(policy.abs_tol, policy.rel_tol, policy.max_total_degree, 1.0 / t_min)
    approx = calE_asymptotic(grid, params, "infinity", probe)
    gap = np.abs(exact - approx) / np.abs(exact)
    bad = np.nonzero(gap >= rel_gap)[0]
    if bad.size == 0:
        return float(grid[0])
    if bad[-1] == grid.size - 1:
        return None
    return float(grid[bad[-1] + 1])
