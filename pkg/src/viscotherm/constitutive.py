"""Free-energy models, derived thermodynamics and admissibility checks.

The Helmholtz free energy has the separable form

    psi(theta, b) = psi0(theta) + psi1(theta) * psi2(b)

with unit density. Entropy, internal energy and heat capacity follow from
analytic derivatives; finite differences appear only in tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from numpy.polynomial.legendre import leggauss

from .functions import (
    DomainError,
    MaterialFunction,
    ParameterError,
    ScalarFunction,
    make_coefficient,
    make_psi0,
    make_psi1,
    make_psi2,
    make_reaction,
)

__all__ = [
    "DomainError",
    "ParameterError",
    "FreeEnergyModel",
    "MaterialCoefficients",
    "SampleSpec",
    "ValidationRow",
    "ValidationReport",
    "psi",
    "eta",
    "e0",
    "e1",
    "internal_energy",
    "heat_capacity",
    "validate_assumptions",
    "entropy_upper_bound",
    "estimate_constants",
    "preset_oldroyd_b",
    "preset_giesekus",
    "model_from_dict",
]


@dataclass(frozen=True)
class FreeEnergyModel:
    psi0: ScalarFunction
    psi1: ScalarFunction
    psi2: ScalarFunction
    rho: float = 1.0

    def __post_init__(self):
        if self.rho != 1.0:
            raise ParameterError("mass density is fixed to 1")

    @property
    def spec(self) -> dict:
        return {"psi0": self.psi0.spec, "psi1": self.psi1.spec, "psi2": self.psi2.spec}


@dataclass(frozen=True)
class MaterialCoefficients:
    """Transport coefficients and the reaction term of the b equation.

    ``h`` is stored directly; ``cfun`` recovers the relaxation coefficient
    ``h / psi2'`` away from b = 1 when it is needed for reporting.
    """

    nu: MaterialFunction
    kappa: MaterialFunction
    alpha: MaterialFunction
    h: MaterialFunction
    C1: float
    C2: float
    b_min: float
    b_max: float

    def __post_init__(self):
        if not (0.0 < self.b_min < 1.0 < self.b_max) or not np.isfinite(self.b_max):
            raise ParameterError(
                f"stretch bounds must satisfy 0 < b_min < 1 < b_max, got [{self.b_min}, {self.b_max}]")
        if not (0.0 < self.C1 <= self.C2) or not np.isfinite(self.C2):
            raise ParameterError(f"need 0 < C1 <= C2, got C1={self.C1}, C2={self.C2}")

    def cfun(self, model: FreeEnergyModel, theta, b):
        b = np.asarray(b, dtype=float)
        dp2 = model.psi2.d1(b)
        h = self.h(theta, b)
        safe = np.where(np.abs(dp2) > 1e-8, dp2, 1.0)
        # near b = 1 use a centred difference quotient of h against psi2'
        db = 1e-4
        lim = (self.h(theta, 1.0 + db) - self.h(theta, 1.0 - db)) / (
            model.psi2.d1(1.0 + db) - model.psi2.d1(1.0 - db))
        return np.where(np.abs(dp2) > 1e-8, h / safe, lim)

    @property
    def spec(self) -> dict:
        return {"nu": self.nu.spec, "kappa": self.kappa.spec, "alpha": self.alpha.spec,
                "h": self.h.spec, "C1": self.C1, "C2": self.C2,
                "b_min": self.b_min, "b_max": self.b_max}


def _check_theta(theta, strict: bool = True):
    theta = np.asarray(theta, dtype=float)
    bad = ~(theta > 0) if strict else ~(theta >= 0)
    if np.any(bad):
        raise DomainError("temperature must be > 0" if strict else "temperature must be >= 0")
    return theta


def _check_b(b):
    b = np.asarray(b, dtype=float)
    if np.any(~(b > 0)):
        raise DomainError("stretch b must be > 0")
    return b


def psi(model: FreeEnergyModel, theta, b):
    theta = _check_theta(theta)
    b = _check_b(b)
    return model.psi0(theta) + model.psi1(theta) * model.psi2(b)


def eta(model: FreeEnergyModel, theta, b):
    theta = _check_theta(theta)
    b = _check_b(b)
    return -model.psi0.d1(theta) - model.psi1.d1(theta) * model.psi2(b)


def e0(model: FreeEnergyModel, theta):
    return model.psi0.energy(_check_theta(theta))


def e1(model: FreeEnergyModel, theta):
    return model.psi1.energy(_check_theta(theta, strict=False))


def internal_energy(model: FreeEnergyModel, theta, b):
    theta = _check_theta(theta)
    b = _check_b(b)
    return model.psi0.energy(theta) + model.psi1.energy(theta) * model.psi2(b)


def heat_capacity(model: FreeEnergyModel, theta, b):
    theta = _check_theta(theta)
    b = _check_b(b)
    return -theta * model.psi0.d2(theta) - theta * model.psi1.d2(theta) * model.psi2(b)


# --- admissibility ---------------------------------------------------------------

@dataclass(frozen=True)
class SampleSpec:
    theta_lo: float = 1e-6
    theta_hi: float = 1e6
    n_theta: int = 256
    n_b: int = 64
    limit_points: tuple = (1e-6, 1e-8, 1e-10)
    integral_upper: float = 1e6
    # tolerance for sign checks that should hold with equality allowed
    sign_tol: float = 1e-12
    limit_tol: float = 1e-6

    def thetas(self):
        return np.logspace(np.log10(self.theta_lo), np.log10(self.theta_hi), self.n_theta)

    def bs(self, b_min, b_max):
        return np.linspace(b_min, b_max, self.n_b)


@dataclass(frozen=True)
class ValidationRow:
    assumption: str
    check: str
    point: dict
    passed: bool
    value: float
    note: str = ""

    def as_dict(self) -> dict:
        return {"assumption": self.assumption, "check": self.check, "point": self.point,
                "passed": bool(self.passed), "value": float(self.value), "note": self.note}


@dataclass
class ValidationReport:
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self):
        return [r for r in self.rows if not r.passed]

    def as_dict(self) -> dict:
        return {"passed": self.passed, "rows": [r.as_dict() for r in self.rows]}

    def add(self, assumption, check, point, passed, value, note=""):
        self.rows.append(ValidationRow(assumption, check, point, bool(passed), float(value), note))


def _worst(values, grid_points, mode):
    """Index and value of the worst sample (``mode`` 'max' or 'min')."""
    values = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(values)):
        i = int(np.flatnonzero(~np.isfinite(values).ravel())[0])
    else:
        i = int(np.argmax(values) if mode == "max" else np.argmin(values))
    pt = {k: float(np.ravel(v)[i]) for k, v in grid_points.items()}
    return pt, float(np.ravel(values)[i])


def psi1_tail_integral(psi1: ScalarFunction, upper: float = 1e6, order: int = 8):
    """Composite Gauss estimate of the integral of -s psi1''(s) over [0, upper].

    Panels are log-graded from 1e-12 upward; the piece below 1e-12 is
    negligible for any psi1 with bounded second derivative near zero.
    """
    x, w = leggauss(order)
    edges = np.concatenate([[0.0], np.logspace(-12, np.log10(upper), 19 * 8 + 1)])
    a, b = edges[:-1, None], edges[1:, None]
    s = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    vals = -s * psi1.d2(s)
    return float(np.sum(0.5 * (b - a) * w[None, :] * vals))


def validate_assumptions(model: FreeEnergyModel, coeffs: MaterialCoefficients,
                         sample_spec: SampleSpec | None = None) -> ValidationReport:
    sp = sample_spec or SampleSpec()
    rep = ValidationReport()
    tol = sp.sign_tol
    s = sp.thetas()
    # psi2 convexity is asked for all b > 0; sample a wide log grid plus the working interval
    bw = np.unique(np.concatenate([np.logspace(-3, 3, sp.n_b), sp.bs(coeffs.b_min, coeffs.b_max)]))

    with np.errstate(all="ignore"):
        p0dd = model.psi0.d2(s)
        p1d = model.psi1.d1(s)
        p1dd = model.psi1.d2(s)
        p2dd = model.psi2.d2(bw)

    pt, v = _worst(p0dd, {"theta": s}, "max")
    rep.add("A1", "psi0'' < 0", pt, v < 0, v)
    pt, v = _worst(p1dd, {"theta": s}, "max")
    rep.add("A1", "psi1'' <= 0", pt, v <= tol, v)
    pt, v = _worst(p1d, {"theta": s}, "min")
    rep.add("A1", "psi1' >= 0", pt, v >= -tol, v)
    pt, v = _worst(p2dd, {"b": bw}, "min")
    rep.add("A1", "psi2'' >= 0", pt, v >= -tol, v)

    # A2
    with np.errstate(all="ignore"):
        v = float(model.psi1(0.0))
    rep.add("A2", "psi1(0) >= 0", {"theta": 0.0}, np.isfinite(v) and v >= -tol, v)
    v = float(model.psi2(1.0))
    rep.add("A2", "psi2(1) = 0", {"b": 1.0}, abs(v) <= 1e-12, v)
    v = float(model.psi2.d1(1.0))
    rep.add("A2", "psi2'(1) = 0", {"b": 1.0}, abs(v) <= 1e-12, v)
    s0 = np.concatenate([[0.0], s])
    with np.errstate(all="ignore"):
        q = -s0 ** 2 * model.psi1.d2(s0)
    pt, v = _worst(q, {"theta": s0}, "max")
    tail = float(q[-1])
    head = float(np.max(q[:-sp.n_theta // 8]))
    bounded = np.all(np.isfinite(q)) and tail <= max(1.01 * head, head + tol)
    rep.add("A2", "sup -s^2 psi1'' < inf", pt, bounded, v,
            "bounded on the sample and not growing over the top octave of the range")

    # A3: limits at zero by monotone trend over the probe points
    lp = np.asarray(sp.limit_points, dtype=float)
    with np.errstate(all="ignore"):
        d1 = model.psi0.d1(lp)
        td1 = lp * d1
        p0 = model.psi0(lp)
    grows = bool(np.all(np.diff(d1) > 0) and d1[-1] > 0)
    rep.add("A3", "psi0'(theta) -> +inf as theta -> 0", {"theta": float(lp[-1])}, grows, d1[-1],
            "increasing along theta = " + ", ".join(f"{x:g}" for x in lp))
    shrink = bool(np.all(np.diff(np.abs(td1)) <= 0) and abs(td1[-1]) <= sp.limit_tol)
    rep.add("A3", "theta psi0'(theta) -> 0", {"theta": float(lp[-1])}, shrink, td1[-1],
            f"decreasing in magnitude, last value within {sp.limit_tol:g}")
    shrink = bool(np.all(np.diff(np.abs(p0)) <= 0) and abs(p0[-1]) <= sp.limit_tol)
    rep.add("A3", "psi0(theta) -> 0", {"theta": float(lp[-1])}, shrink, p0[-1],
            f"decreasing in magnitude, last value within {sp.limit_tol:g}")

    # A4
    cap = -s * p0dd
    pt, v = _worst(cap, {"theta": s}, "min")
    rep.add("A4", "C1 <= -s psi0''", pt, v >= coeffs.C1 * (1 - 1e-12), v)
    pt, v = _worst(cap, {"theta": s}, "max")
    rep.add("A4", "-s psi0'' <= C2", pt, v <= coeffs.C2 * (1 + 1e-12), v)
    integral = psi1_tail_integral(model.psi1, sp.integral_upper)
    rep.add("A4", "int_0^inf -s psi1'' ds <= C2", {"upper": sp.integral_upper},
            np.isfinite(integral) and integral <= coeffs.C2 * (1 + 1e-9), integral,
            f"composite Gauss-Legendre on [0, {sp.integral_upper:g}], tail beyond not included")

    # A5 over theta >= 0 and the working b interval
    th = np.concatenate([[0.0], s])
    T, B = np.meshgrid(th, sp.bs(coeffs.b_min, coeffs.b_max), indexing="ij")
    grid = {"theta": T, "b": B}
    rep.add("A5", "0 < b_min < 1 < b_max", {"b_min": coeffs.b_min, "b_max": coeffs.b_max},
            0 < coeffs.b_min < 1 < coeffs.b_max, coeffs.b_max - coeffs.b_min)
    for name in ("nu", "kappa", "alpha"):
        with np.errstate(all="ignore"):
            vals = getattr(coeffs, name)(T, B)
        pt, v = _worst(vals, grid, "min")
        rep.add("A5", f"C1 <= {name}", pt, np.all(np.isfinite(vals)) and v >= coeffs.C1 * (1 - 1e-12), v)
        pt, v = _worst(vals, grid, "max")
        rep.add("A5", f"{name} <= C2", pt, np.all(np.isfinite(vals)) and v <= coeffs.C2 * (1 + 1e-12), v)
    with np.errstate(all="ignore"):
        h = coeffs.h(T, B)
    pt, v = _worst(h * (B - 1.0), grid, "min")
    rep.add("A5", "h (b - 1) >= 0", pt, v >= -tol, v)
    pt, v = _worst(np.abs(h), grid, "max")
    rep.add("A5", "|h| <= C2", pt, v <= coeffs.C2 * (1 + 1e-12), v)
    return rep


def estimate_constants(model: FreeEnergyModel, sample_spec: SampleSpec | None = None):
    """Sampled (C1, C2) for the heat-capacity and psi1 parts of the growth bounds."""
    sp = sample_spec or SampleSpec()
    s = sp.thetas()
    cap = -s * model.psi0.d2(s)
    return float(np.min(cap)), float(max(np.max(cap), psi1_tail_integral(model.psi1, sp.integral_upper)))


def entropy_upper_bound(model: FreeEnergyModel, s, b, C1: float | None = None,
                        C2: float | None = None):
    """Return ``(eta(s, b), -C1 |ln s| + C (1 + s))`` with C = max(C1 + C2, |psi0'(1)|)."""
    if C1 is None or C2 is None:
        c1, c2 = estimate_constants(model)
        C1 = c1 if C1 is None else C1
        C2 = c2 if C2 is None else C2
    s = _check_theta(s)
    lhs = eta(model, s, b)
    C = max(C1 + C2, abs(float(model.psi0.d1(1.0))))
    rhs = -C1 * np.abs(np.log(s)) + C * (1.0 + s)
    return lhs, np.broadcast_to(rhs, np.shape(lhs)).copy() if np.ndim(lhs) else rhs


# --- presets -----------------------------------------------------------------------

def _preset(c_V, theta_ref, mu_elastic, nu1, mu_tilde, nu_visc, kappa_heat, h, b_min, b_max,
            C1=None, C2=None):
    model = FreeEnergyModel(
        make_psi0({"name": "ideal", "c_V": c_V, "theta_ref": theta_ref}),
        make_psi1({"name": "constant", "value": 1.5 * mu_elastic}),
        make_psi2({"name": "log_stretch"}),
    )
    alpha = mu_tilde / nu1
    bb = np.linspace(b_min, b_max, 1025)
    hmax = float(np.max(np.abs(h(0.0, bb))))
    lo = min(c_V, nu_visc, kappa_heat, alpha)
    hi = max(c_V, nu_visc, kappa_heat, alpha, hmax)
    coeffs = MaterialCoefficients(
        nu=make_coefficient({"name": "constant", "value": nu_visc}),
        kappa=make_coefficient({"name": "constant", "value": kappa_heat}),
        alpha=make_coefficient({"name": "constant", "value": alpha}),
        h=h,
        C1=lo if C1 is None else C1,
        C2=hi if C2 is None else C2,
        b_min=b_min,
        b_max=b_max,
    )
    return model, coeffs


def _positive_params(**kw):
    for k, v in kw.items():
        if not np.isfinite(v) or v <= 0:
            raise ParameterError(f"parameter {k} must be > 0, got {v!r}")


def preset_oldroyd_b(c_V=1.0, theta_ref=1.0, mu_elastic=1.0, nu1=1.0, mu_tilde=1.0,
                     nu_visc=1.0, kappa_heat=1.0, b_min=0.5, b_max=2.0, C1=None, C2=None):
    """Scalar diffusive Oldroyd-B fluid with ideal-gas-like heat capacity."""
    _positive_params(c_V=c_V, theta_ref=theta_ref, mu_elastic=mu_elastic, nu1=nu1,
                     mu_tilde=mu_tilde, nu_visc=nu_visc, kappa_heat=kappa_heat)
    h = make_reaction({"name": "oldroyd_b", "ratio": mu_elastic / nu1})
    return _preset(c_V, theta_ref, mu_elastic, nu1, mu_tilde, nu_visc, kappa_heat, h,
                   b_min, b_max, C1, C2)


def preset_giesekus(c_V=1.0, theta_ref=1.0, mu_elastic=1.0, nu1=1.0, mu_tilde=1.0,
                    nu_visc=1.0, kappa_heat=1.0, a_g=0.5, b_min=0.5, b_max=2.0,
                    C1=None, C2=None):
    """Scalar diffusive Giesekus fluid; ``a_g = 0`` is the Oldroyd-B preset."""
    _positive_params(c_V=c_V, theta_ref=theta_ref, mu_elastic=mu_elastic, nu1=nu1,
                     mu_tilde=mu_tilde, nu_visc=nu_visc, kappa_heat=kappa_heat)
    if not (0.0 <= a_g <= 1.0):
        raise ParameterError(f"a_g must lie in [0, 1], got {a_g!r}")
    h = make_reaction({"name": "giesekus", "ratio": mu_elastic / nu1, "a_g": a_g})
    return _preset(c_V, theta_ref, mu_elastic, nu1, mu_tilde, nu_visc, kappa_heat, h,
                   b_min, b_max, C1, C2)


PRESETS = {"oldroyd_b": preset_oldroyd_b, "giesekus": preset_giesekus}


def model_from_dict(doc: Mapping):
    """Build ``(model, coeffs)`` from a JSON-style description.

    Either ``{"preset": name, "params": {...}}`` or
    ``{"functions": {"psi0": ..., "psi1": ..., "psi2": ...},
       "coefficients": {"nu": ..., "kappa": ..., "alpha": ..., "h": ...},
       "C1": .., "C2": .., "b_min": .., "b_max": ..}``.
    """
    if not isinstance(doc, Mapping):
        raise ParameterError("model must be an object")
    if "preset" in doc:
        name = doc["preset"]
        if name not in PRESETS:
            raise ParameterError(f"unknown preset {name!r} (one of {sorted(PRESETS)})")
        params = dict(doc.get("params", {}))
        try:
            params = {k: float(v) for k, v in params.items()}
            return PRESETS[name](**params)
        except TypeError as exc:
            raise ParameterError(f"preset {name!r}: {exc}") from None
    try:
        fn = doc["functions"]
        co = doc["coefficients"]
        model = FreeEnergyModel(make_psi0(fn["psi0"]), make_psi1(fn["psi1"]), make_psi2(fn["psi2"]))
        coeffs = MaterialCoefficients(
            nu=make_coefficient(co["nu"]), kappa=make_coefficient(co["kappa"]),
            alpha=make_coefficient(co["alpha"]), h=make_reaction(co["h"]),
            C1=float(doc["C1"]), C2=float(doc["C2"]),
            b_min=float(doc["b_min"]), b_max=float(doc["b_max"]),
        )
    except KeyError as exc:
        raise ParameterError(f"model: missing field {exc.args[0]!r}") from None
    return model, coeffs
