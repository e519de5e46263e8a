"""Periodic scalar fields on the unit torus.

Model coefficients are declared through a small catalog (constants, single
harmonics, finite Fourier sums) or as tabulated grid values.  Closed forms
evaluate and differentiate exactly; tabulated fields interpolate linearly
and differentiate by periodic central differences.
"""
from __future__ import annotations

import numbers
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FourierField:
    """Finite Fourier sum ``const + sum_k [cos_k cos(2 pi k x) + sin_k sin(2 pi k x)]``.

    Coefficient tuples are indexed from k = 1.  Period is fixed to 1.
    """

    const: float = 0.0
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, float(self.const))
        for k, c in enumerate(self.cos, start=1):
            if c:
                out += c * np.cos(_TWO_PI * k * x)
        for k, c in enumerate(self.sin, start=1):
            if c:
                out += c * np.sin(_TWO_PI * k * x)
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k, c in enumerate(self.cos, start=1):
            if c:
                out -= c * _TWO_PI * k * np.sin(_TWO_PI * k * x)
        for k, c in enumerate(self.sin, start=1):
            if c:
                out += c * _TWO_PI * k * np.cos(_TWO_PI * k * x)
        return out

    @property
    def max_harmonic(self) -> int:
        k = 0
        for i, c in enumerate(self.cos, start=1):
            if c:
                k = max(k, i)
        for i, c in enumerate(self.sin, start=1):
            if c:
                k = max(k, i)
        return k

    @property
    def is_constant(self) -> bool:
        return self.max_harmonic == 0

    def shifted(self, offset: float) -> "FourierField":
        """Return the field plus a constant."""
        return replace(self, const=float(self.const) + float(offset))

    def uniform_mean(self) -> float:
        return float(self.const)


@dataclass(frozen=True)
class TabulatedField:
    """Grid values at ``x_i = i / n`` for one period, linearly interpolated."""

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) < 4:
            raise ConfigError("tabulated field needs at least 4 samples")

    @property
    def n(self) -> int:
        return len(self.values)

    def _table(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __call__(self, x):
        return _periodic_interp(np.asarray(x, dtype=float), self._table())

    def derivative(self, x):
        tab = self._table()
        n = self.n
        dtab = (np.roll(tab, -1) - np.roll(tab, 1)) * (0.5 * n)
        return _periodic_interp(np.asarray(x, dtype=float), dtab)

    @property
    def max_harmonic(self) -> int:
        # resolved content is bounded by the table's own Nyquist frequency
        return self.n // 2

    @property
    def is_constant(self) -> bool:
        tab = self._table()
        return bool(np.ptp(tab) == 0.0)

    def shifted(self, offset: float) -> "TabulatedField":
        return TabulatedField(tuple(v + float(offset) for v in self.values))

    def uniform_mean(self) -> float:
        return float(np.mean(self._table()))


Field = FourierField | TabulatedField


def _periodic_interp(x, table):
    n = table.shape[0]
    pos = (x - np.floor(x)) * n
    i0 = np.floor(pos).astype(np.intp)
    frac = pos - i0
    i0 = np.mod(i0, n)
    i1 = np.mod(i0 + 1, n)
    return (1.0 - frac) * table[i0] + frac * table[i1]


def constant(value: float) -> FourierField:
    return FourierField(const=float(value))


def zero() -> FourierField:
    return FourierField()


def harmonic(kind: str, k: int = 1, amplitude: float = 1.0, phase: float = 0.0) -> FourierField:
    """``amplitude * cos(2 pi k x + phase)`` or the sine analogue."""
    if kind not in ("cos", "sin"):
        raise ConfigError(f"harmonic kind must be 'cos' or 'sin', got {kind!r}")
    if k < 1:
        raise ConfigError("harmonic index k must be >= 1")
    a, p = float(amplitude), float(phase)
    coef_cos = np.zeros(k)
    coef_sin = np.zeros(k)
    if kind == "cos":
        coef_cos[k - 1] = a * np.cos(p)
        coef_sin[k - 1] = -a * np.sin(p)
    else:
        coef_sin[k - 1] = a * np.cos(p)
        coef_cos[k - 1] = a * np.sin(p)
    return FourierField(const=0.0, cos=tuple(coef_cos), sin=tuple(coef_sin))


def field_from_config(obj) -> Field:
    """Parse a field descriptor from a config value (number or typed dict)."""
    if isinstance(obj, numbers.Number):
        return constant(float(obj))
    if not isinstance(obj, dict):
        raise ConfigError(f"field descriptor must be a number or an object, got {type(obj).__name__}")
    kind = obj.get("type")
    if kind == "constant":
        _require_keys(obj, {"type", "value"})
        return constant(obj["value"])
    if kind == "zero":
        _require_keys(obj, {"type"})
        return zero()
    if kind == "harmonic":
        _require_keys(obj, {"type", "kind", "k", "amplitude", "phase"}, optional={"k", "amplitude", "phase"})
        return harmonic(obj["kind"], int(obj.get("k", 1)),
                        float(obj.get("amplitude", 1.0)), float(obj.get("phase", 0.0)))
    if kind == "fourier":
        _require_keys(obj, {"type", "const", "cos", "sin"}, optional={"const", "cos", "sin"})
        return FourierField(const=float(obj.get("const", 0.0)),
                            cos=tuple(float(c) for c in obj.get("cos", ())),
                            sin=tuple(float(c) for c in obj.get("sin", ())))
    if kind == "tabulated":
        _require_keys(obj, {"type", "values"})
        return TabulatedField(tuple(float(v) for v in obj["values"]))
    raise ConfigError(f"unknown field type {kind!r}")


def field_to_config(f: Field) -> dict:
    if isinstance(f, FourierField):
        if f.is_constant:
            return {"type": "constant", "value": f.const}
        return {"type": "fourier", "const": f.const, "cos": list(f.cos), "sin": list(f.sin)}
    return {"type": "tabulated", "values": list(f.values)}


def _require_keys(obj: dict, allowed: set, optional: set = frozenset()):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown field key(s): {', '.join(sorted(unknown))}")
    missing = (allowed - optional - {"type"}) - set(obj)
    if missing:
        raise ConfigError(f"missing field key(s): {', '.join(sorted(missing))}")
