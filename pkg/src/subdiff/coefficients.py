"""Closed-form coefficient catalog.

Every coefficient is a function of (x, t) that broadcasts over numpy arrays.
Time-only coefficients (the FDO weights rho, rho_i) simply ignore x. Each
entry knows its derivatives, whether it is constant in time and, where
relevant, the time after which it stops changing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Optional

import numpy as np

from .errors import ConfigError

__all__ = [
    "Coefficient",
    "Constant",
    "ExpDecay",
    "XAffine",
    "PlateauRamp",
    "Tabulated",
    "coefficient_from_config",
]


class Coefficient:
    """Base class; subclasses implement value, dt and dx."""

    kind = "abstract"

    def __call__(self, x, t):
        return self.value(np.asarray(x, dtype=float), np.asarray(t, dtype=float))

    def value(self, x, t):
        raise NotImplementedError

    def dt(self, x, t):
        raise NotImplementedError

    def dx(self, x, t):
        raise NotImplementedError

    @property
    def time_constant(self) -> bool:
        return False

    @property
    def plateau_time(self) -> Optional[float]:
        """Time after which the coefficient no longer changes (0 for constants, None if never)."""
        return None

    @property
    def nondecreasing(self) -> bool:
        """True when the coefficient is nondecreasing in t everywhere."""
        return False

    def at(self, t) -> np.ndarray:
        """Time-only evaluation (x is ignored by the coefficients used this way)."""
        return np.broadcast_to(self(0.0, t), np.shape(t)).astype(float)

    def describe(self) -> dict:
        raise NotImplementedError


def _full(x, t, v):
    return np.full(np.broadcast(x, t).shape, float(v))


@dataclass(frozen=True)
class Constant(Coefficient):
    c: float
    kind = "constant"

    def value(self, x, t):
        return _full(x, t, self.c)

    def dt(self, x, t):
        return _full(x, t, 0.0)

    def dx(self, x, t):
        return _full(x, t, 0.0)

    @property
    def time_constant(self):
        return True

    @property
    def plateau_time(self):
        return 0.0

    @property
    def nondecreasing(self):
        return True

    def describe(self):
        return {"kind": "constant", "value": self.c}


@dataclass(frozen=True)
class ExpDecay(Coefficient):
    """c + d * exp(-rate * t)."""

    c: float
    d: float
    rate: float = 1.0
    kind = "exp_decay"

    def value(self, x, t):
        return self.c + self.d * np.exp(-self.rate * t) + 0.0 * x

    def dt(self, x, t):
        return -self.rate * self.d * np.exp(-self.rate * t) + 0.0 * x

    def dx(self, x, t):
        return _full(x, t, 0.0)

    @property
    def time_constant(self):
        return self.d == 0 or self.rate == 0

    @property
    def nondecreasing(self):
        return self.d * self.rate <= 0

    def describe(self):
        return {"kind": "exp_decay", "c": self.c, "d": self.d, "rate": self.rate}


@dataclass(frozen=True)
class XAffine(Coefficient):
    """c0 + c1 * x, constant in time."""

    c0: float
    c1: float
    kind = "x_affine"

    def value(self, x, t):
        return self.c0 + self.c1 * x + 0.0 * t

    def dt(self, x, t):
        return _full(x, t, 0.0)

    def dx(self, x, t):
        return _full(x, t, self.c1)

    @property
    def time_constant(self):
        return True

    @property
    def plateau_time(self):
        return 0.0

    @property
    def nondecreasing(self):
        return True

    def describe(self):
        return {"kind": "x_affine", "c0": self.c0, "c1": self.c1}


@dataclass(frozen=True)
class PlateauRamp(Coefficient):
    """base + slope * min(t, t_plateau): a linear ramp that freezes at t_plateau."""

    base: float
    slope: float
    t_plateau: float
    kind = "plateau_ramp"

    def __post_init__(self):
        if self.t_plateau < 0:
            raise ConfigError("plateau_ramp needs t_plateau >= 0")

    def value(self, x, t):
        return self.base + self.slope * np.minimum(t, self.t_plateau) + 0.0 * x

    def dt(self, x, t):
        return np.where(t < self.t_plateau, self.slope, 0.0) + 0.0 * x

    def dx(self, x, t):
        return _full(x, t, 0.0)

    @property
    def time_constant(self):
        return self.slope == 0 or self.t_plateau == 0

    @property
    def plateau_time(self):
        return 0.0 if self.time_constant else self.t_plateau

    @property
    def nondecreasing(self):
        return self.slope >= 0

    def describe(self):
        return {"kind": "plateau_ramp", "base": self.base, "slope": self.slope, "t_plateau": self.t_plateau}


@dataclass(frozen=True)
class Tabulated(Coefficient):
    """Piecewise-linear interpolation in t through (times, values); constant past the last time."""

    times: tuple
    values: tuple
    kind = "tabulated"

    def __post_init__(self):
        ts = tuple(float(v) for v in self.times)
        vs = tuple(float(v) for v in self.values)
        if len(ts) < 1 or len(ts) != len(vs):
            raise ConfigError("tabulated coefficient needs matching, nonempty times and values")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("tabulated times must be strictly increasing")
        object.__setattr__(self, "times", ts)
        object.__setattr__(self, "values", vs)

    def value(self, x, t):
        return np.interp(t, self.times, self.values) + 0.0 * x

    def dt(self, x, t):
        ts, vs = np.asarray(self.times), np.asarray(self.values)
        if ts.size == 1:
            return _full(x, t, 0.0)
        slopes = np.diff(vs) / np.diff(ts)
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, slopes.size - 1)
        inside = (np.asarray(t) >= ts[0]) & (np.asarray(t) < ts[-1])
        return np.where(inside, slopes[idx], 0.0) + 0.0 * x

    def dx(self, x, t):
        return _full(x, t, 0.0)

    @property
    def time_constant(self):
        return len(set(self.values)) == 1

    @property
    def plateau_time(self):
        return 0.0 if self.time_constant else self.times[-1]

    @property
    def nondecreasing(self):
        return all(b >= a for a, b in zip(self.values, self.values[1:]))

    def describe(self):
        return {"kind": "tabulated", "times": list(self.times), "values": list(self.values)}


_REQUIRED = {
    "constant": ("value",),
    "exp_decay": ("c", "d"),
    "x_affine": ("c0", "c1"),
    "plateau_ramp": ("base", "slope", "t_plateau"),
    "tabulated": ("times", "values"),
}


def coefficient_from_config(spec: Any, where: str = "coefficient") -> Coefficient:
    """Build a catalog coefficient from a number or a table with a ``kind`` key."""
    if isinstance(spec, Coefficient):
        return spec
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return Constant(float(spec))
    if not isinstance(spec, Mapping):
        raise ConfigError(f"{where}: expected a number or a table with 'kind', got {spec!r}")
    kind = spec.get("kind")
    if kind not in _REQUIRED:
        raise ConfigError(f"{where}: unknown coefficient kind {kind!r}; known: {sorted(_REQUIRED)}")
    missing = [k for k in _REQUIRED[kind] if k not in spec]
    if missing:
        raise ConfigError(f"{where}: {kind} coefficient is missing {missing}")
    extra = set(spec) - set(_REQUIRED[kind]) - {"kind", "rate"}
    if extra:
        raise ConfigError(f"{where}: unexpected keys {sorted(extra)} for {kind}")
    try:
        if kind == "constant":
            return Constant(float(spec["value"]))
        if kind == "exp_decay":
            return ExpDecay(float(spec["c"]), float(spec["d"]), float(spec.get("rate", 1.0)))
        if kind == "x_affine":
            return XAffine(float(spec["c0"]), float(spec["c1"]))
        if kind == "plateau_ramp":
            return PlateauRamp(float(spec["base"]), float(spec["slope"]), float(spec["t_plateau"]))
        return Tabulated(tuple(spec["times"]), tuple(spec["values"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
