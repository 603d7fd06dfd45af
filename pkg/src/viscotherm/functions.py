"""Scalar material functions and the named built-in function table.

Every free-energy component and material coefficient used by the package is
built from a small table of named, parametrised families. Configurations refer
to families by name, so loading a model never executes user code. Families
also carry their parameters, which lets the compiled kernels recognise them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "DomainError",
    "ParameterError",
    "ScalarFunction",
    "MaterialFunction",
    "make_psi0",
    "make_psi1",
    "make_psi2",
    "make_coefficient",
    "make_reaction",
    "PSI0_FAMILIES",
    "PSI1_FAMILIES",
    "PSI2_FAMILIES",
    "COEFFICIENT_FAMILIES",
    "REACTION_FAMILIES",
]


class DomainError(ValueError):
    """Argument outside the domain of a thermodynamic function."""


class ParameterError(ValueError):
    """Invalid parameter for a preset or function family."""


ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScalarFunction:
    """A real function of one variable with analytic first and second derivatives.

    ``energy`` is the Legendre-type combination ``f(s) - s f'(s)``; families
    supply it in closed form to avoid cancellation, otherwise it is formed
    from ``value`` and ``d1``.
    """

    value: ArrayFn
    d1: ArrayFn
    d2: ArrayFn
    lower: float = 0.0
    lower_closed: bool = False
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)
    energy_fn: ArrayFn | None = None

    def __call__(self, s):
        return self.value(s)

    def energy(self, s):
        if self.energy_fn is not None:
            return self.energy_fn(s)
        s = np.asarray(s, dtype=float)
        return self.value(s) - s * self.d1(s)

    def in_domain(self, s) -> bool:
        s = np.asarray(s, dtype=float)
        if self.lower_closed:
            return bool(np.all(s >= self.lower))
        return bool(np.all(s > self.lower))

    def check(self, s, what: str = "argument"):
        if not self.in_domain(s):
            bound = ">=" if self.lower_closed else ">"
            raise DomainError(f"{self.name}: {what} must be {bound} {self.lower}")

    @property
    def spec(self) -> dict:
        return {"name": self.name, **dict(self.params)}


@dataclass(frozen=True)
class MaterialFunction:
    """A coefficient ``f(theta, b)`` (viscosity, conductivity, mobility or h)."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    def __call__(self, theta, b):
        theta = np.asarray(theta, dtype=float)
        b = np.asarray(b, dtype=float)
        out = self.fn(theta, b)
        return np.broadcast_to(out, np.broadcast_shapes(theta.shape, b.shape)).astype(float)

    @property
    def spec(self) -> dict:
        return {"name": self.name, **dict(self.params)}


def _positive(name: str, **values: float) -> None:
    for key, val in values.items():
        if not np.isfinite(val) or val <= 0:
            raise ParameterError(f"{name}: parameter {key} must be > 0, got {val!r}")


def _nonnegative(name: str, **values: float) -> None:
    for key, val in values.items():
        if not np.isfinite(val) or val < 0:
            raise ParameterError(f"{name}: parameter {key} must be >= 0, got {val!r}")


# --- psi0: purely thermal part -------------------------------------------------

def _psi0_ideal(c_V: float, theta_ref: float = 1.0) -> ScalarFunction:
    _positive("ideal", c_V=c_V, theta_ref=theta_ref)

    def value(s):
        s = np.asarray(s, dtype=float)
        return -c_V * s * (np.log(s / theta_ref) - 1.0)

    def d1(s):
        return -c_V * np.log(np.asarray(s, dtype=float) / theta_ref)

    def d2(s):
        return -c_V / np.asarray(s, dtype=float)

    def energy(s):
        return c_V * np.asarray(s, dtype=float)

    return ScalarFunction(value, d1, d2, name="ideal",
                          params={"c_V": c_V, "theta_ref": theta_ref}, energy_fn=energy)


def _psi0_ideal_plus(c_V: float, theta_ref: float = 1.0, c_a: float = 0.0,
                     theta_c: float = 1.0) -> ScalarFunction:
    # heat capacity c_V + c_a * s / (s + theta_c), bounded in [c_V, c_V + c_a]
    _positive("ideal_plus", c_V=c_V, theta_ref=theta_ref, theta_c=theta_c)
    _nonnegative("ideal_plus", c_a=c_a)
    k = theta_ref + theta_c

    def value(s):
        s = np.asarray(s, dtype=float)
        lin = -c_V * s * (np.log(s / theta_ref) - 1.0)
        sat = (s + theta_c) * np.log((s + theta_c) / k) - theta_c * np.log(theta_c / k) - s
        return lin - c_a * sat

    def d1(s):
        s = np.asarray(s, dtype=float)
        return -c_V * np.log(s / theta_ref) - c_a * np.log((s + theta_c) / k)

    def d2(s):
        s = np.asarray(s, dtype=float)
        return -c_V / s - c_a / (s + theta_c)

    def energy(s):
        s = np.asarray(s, dtype=float)
        return (c_V + c_a) * s - c_a * theta_c * np.log1p(s / theta_c)

    return ScalarFunction(value, d1, d2, name="ideal_plus",
                          params={"c_V": c_V, "theta_ref": theta_ref, "c_a": c_a, "theta_c": theta_c},
                          energy_fn=energy)


# --- psi1: thermal modulus multiplying the elastic part --------------------------

def _psi1_constant(value: float) -> ScalarFunction:
    _nonnegative("constant", value=value)
    g = float(value)

    def val(s):
        return np.full_like(np.asarray(s, dtype=float), g)

    def zero(s):
        return np.zeros_like(np.asarray(s, dtype=float))

    return ScalarFunction(val, zero, zero, lower=0.0, lower_closed=True, name="constant",
                          params={"value": g}, energy_fn=val)


def _psi1_saturating(g0: float, g1: float, s_c: float) -> ScalarFunction:
    # g0 + g1 s/(s+s_c): nondecreasing, concave, with finite integral of -s psi1''
    _nonnegative("saturating", g0=g0, g1=g1)
    _positive("saturating", s_c=s_c)

    def val(s):
        s = np.asarray(s, dtype=float)
        return g0 + g1 * s / (s + s_c)

    def d1(s):
        s = np.asarray(s, dtype=float)
        return g1 * s_c / (s + s_c) ** 2

    def d2(s):
        s = np.asarray(s, dtype=float)
        return -2.0 * g1 * s_c / (s + s_c) ** 3

    def energy(s):
        s = np.asarray(s, dtype=float)
        return g0 + g1 * (s / (s + s_c)) ** 2

    return ScalarFunction(val, d1, d2, lower=0.0, lower_closed=True, name="saturating",
                          params={"g0": g0, "g1": g1, "s_c": s_c}, energy_fn=energy)


# --- psi2: elastic stretch energy ----------------------------------------------

def _psi2_log_stretch() -> ScalarFunction:
    def val(b):
        b = np.asarray(b, dtype=float)
        return b - 1.0 - np.log(b)

    def d1(b):
        return 1.0 - 1.0 / np.asarray(b, dtype=float)

    def d2(b):
        return 1.0 / np.asarray(b, dtype=float) ** 2

    return ScalarFunction(val, d1, d2, name="log_stretch", params={})


def _psi2_quadratic() -> ScalarFunction:
    def val(b):
        b = np.asarray(b, dtype=float)
        return 0.5 * (b - 1.0) ** 2

    def d1(b):
        return np.asarray(b, dtype=float) - 1.0

    def d2(b):
        return np.ones_like(np.asarray(b, dtype=float))

    return ScalarFunction(val, d1, d2, name="quadratic", params={})


def _psi2_neg_log() -> ScalarFunction:
    # deliberately inadmissible: psi2'(1) = -1
    def val(b):
        return -np.log(np.asarray(b, dtype=float))

    def d1(b):
        return -1.0 / np.asarray(b, dtype=float)

    def d2(b):
        return 1.0 / np.asarray(b, dtype=float) ** 2

    return ScalarFunction(val, d1, d2, name="neg_log", params={})


# --- coefficients nu, kappa, alpha ------------------------------------------------

def _coef_constant(value: float) -> MaterialFunction:
    _positive("constant", value=value)
    v = float(value)
    return MaterialFunction(lambda theta, b: np.full(np.broadcast_shapes(np.shape(theta), np.shape(b)), v),
                            name="constant", params={"value": v})


def _coef_thermal(low: float, high: float, theta_c: float) -> MaterialFunction:
    # low at theta = 0 rising monotonically to high as theta -> infinity
    _positive("thermal", low=low, high=high, theta_c=theta_c)

    def fn(theta, b):
        t = np.maximum(theta, 0.0)
        return low + (high - low) * t / (t + theta_c) + 0.0 * b

    return MaterialFunction(fn, name="thermal", params={"low": low, "high": high, "theta_c": theta_c})


# --- reaction term h(theta, b) ----------------------------------------------------

def _h_oldroyd_b(ratio: float) -> MaterialFunction:
    _positive("oldroyd_b", ratio=ratio)
    return MaterialFunction(lambda theta, b: ratio * (b - 1.0) + 0.0 * theta,
                            name="oldroyd_b", params={"ratio": ratio})


def _h_giesekus(ratio: float, a_g: float) -> MaterialFunction:
    _positive("giesekus", ratio=ratio)
    if not (0.0 <= a_g <= 1.0):
        raise ParameterError(f"giesekus: mobility parameter a_g must lie in [0, 1], got {a_g!r}")

    def fn(theta, b):
        # factored form keeps the sign of (b - 1) exact in floating point
        return ratio * (b - 1.0) * (a_g * b + 1.0 - a_g) + 0.0 * theta

    return MaterialFunction(fn, name="giesekus", params={"ratio": ratio, "a_g": a_g})


def _h_linear(slope: float) -> MaterialFunction:
    # slope < 0 gives a sign-violating closure, useful for negative tests
    return MaterialFunction(lambda theta, b: slope * (b - 1.0) + 0.0 * theta,
                            name="linear", params={"slope": slope})


def _h_zero() -> MaterialFunction:
    return MaterialFunction(lambda theta, b: 0.0 * (theta + b), name="zero", params={})


PSI0_FAMILIES = {"ideal": _psi0_ideal, "ideal_plus": _psi0_ideal_plus}
PSI1_FAMILIES = {"constant": _psi1_constant, "saturating": _psi1_saturating}
PSI2_FAMILIES = {"log_stretch": _psi2_log_stretch, "quadratic": _psi2_quadratic,
                 "neg_log": _psi2_neg_log}
COEFFICIENT_FAMILIES = {"constant": _coef_constant, "thermal": _coef_thermal}
REACTION_FAMILIES = {"oldroyd_b": _h_oldroyd_b, "giesekus": _h_giesekus,
                     "linear": _h_linear, "zero": _h_zero}


def _build(table: dict, kind: str, spec: Mapping):
    spec = dict(spec)
    try:
        name = spec.pop("name")
    except KeyError:
        raise ParameterError(f"{kind}: missing 'name' (one of {sorted(table)})") from None
    if name not in table:
        raise ParameterError(f"{kind}: unknown family {name!r} (one of {sorted(table)})")
    try:
        return table[name](**{k: float(v) for k, v in spec.items()})
    except TypeError as exc:
        raise ParameterError(f"{kind} family {name!r}: {exc}") from None


def make_psi0(spec: Mapping) -> ScalarFunction:
    return _build(PSI0_FAMILIES, "psi0", spec)


def make_psi1(spec: Mapping) -> ScalarFunction:
    return _build(PSI1_FAMILIES, "psi1", spec)


def make_psi2(spec: Mapping) -> ScalarFunction:
    return _build(PSI2_FAMILIES, "psi2", spec)


def make_coefficient(spec: Mapping) -> MaterialFunction:
    return _build(COEFFICIENT_FAMILIES, "coefficient", spec)


def make_reaction(spec: Mapping) -> MaterialFunction:
    return _build(REACTION_FAMILIES, "h", spec)
