"""Regularized free energy, temperature inversion, cut-offs and stick-slip laws.

The regularized modulus psi1_eps vanishes at zero, is linear on [0, eps/2],
joins psi1 at eps through a C2 quintic, and coincides with psi1 beyond eps.
With it the regularized internal energy maps [0, inf) onto [0, inf) and the
temperature can be recovered from any real energy density.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constitutive import FreeEnergyModel, ParameterError, DomainError
from .functions import ScalarFunction
from . import kernels

__all__ = [
    "RegularizationError",
    "ConvergenceError",
    "RegularizedModel",
    "build_psi1_eps",
    "CutoffSpec",
    "StickSlipParams",
    "clamp_b",
    "smooth_step",
    "master_cutoff",
    "convective_cutoff",
    "clamp_initial_energy",
    "stick_slip_mollified",
    "stick_slip_graph",
    "tangential_traction",
]

# blend parameter: sigma = P/eps + lam (P/eps - P'), tried in this order
BLEND_LAMBDAS = (1.0 / 3.0, 0.25, 0.4, 0.3, 0.2, 0.15, 0.1, 0.45)
CONCAVITY_SAMPLES = 64


class RegularizationError(ValueError):
    """The regularized modulus could not be constructed."""


ConvergenceError = kernels.ConvergenceError


def _quintic(h, v0, d0, v1, d1, s1):
    """Coefficients in t = (s - s0)/h of the quintic with value/slope/curvature
    (v0, d0, 0) at t = 0 and (v1, d1, s1) at t = 1 (derivatives in s)."""
    c0, c1, c2 = v0, d0 * h, 0.0
    r0 = v1 - (c0 + c1 + c2)
    r1 = d1 * h - (c1 + 2.0 * c2)
    r2 = s1 * h * h - 2.0 * c2
    c3 = 10.0 * r0 - 4.0 * r1 + 0.5 * r2
    c4 = -15.0 * r0 + 7.0 * r1 - r2
    c5 = 6.0 * r0 - 3.0 * r1 + 0.5 * r2
    return np.array([c0, c1, c2, c3, c4, c5])


def _blend_eval(coef, h, t):
    c0, c1, c2, c3, c4, c5 = coef
    v = c0 + t * (c1 + t * (c2 + t * (c3 + t * (c4 + t * c5))))
    d1 = (c1 + t * (2 * c2 + t * (3 * c3 + t * (4 * c4 + t * 5 * c5)))) / h
    d2 = (2 * c2 + t * (6 * c3 + t * (12 * c4 + t * 20 * c5))) / (h * h)
    return v, d1, d2


@dataclass(frozen=True)
class Psi1Blend:
    epsilon: float
    sigma: float
    coef: np.ndarray
    lam: float
    domination: str  # "full", "half" or "none"


def _make_blend(psi1: ScalarFunction, eps: float) -> Psi1Blend:
    if not (np.isfinite(eps) and eps > 0):
        raise RegularizationError(f"epsilon must be > 0, got {eps!r}")
    P = float(psi1(eps))
    dP = float(psi1.d1(eps))
    d2P = float(psi1.d2(eps))
    if not (P >= 0 and dP >= 0):
        raise RegularizationError(
            f"psi1 must be nonnegative and nondecreasing at eps (psi1={P!r}, psi1'={dP!r})")
    lo, hi = P / eps, 2.0 * P / eps - dP
    if hi < lo - 1e-15 * max(1.0, abs(lo)):
        branch = "psi1(0) = 0" if float(psi1(0.0)) == 0.0 else "psi1(0) > 0"
        raise RegularizationError(
            f"no concave linear extension exists below eps={eps:g} ({branch} branch): "
            f"slope window [{lo:.6g}, {hi:.6g}] is empty")
    h = 0.5 * eps
    t = np.linspace(0.0, 1.0, CONCAVITY_SAMPLES)
    for lam in BLEND_LAMBDAS:
        sigma = lo + lam * (hi - lo)
        coef = _quintic(h, sigma * h, sigma, P, dP, d2P)
        _, d1, d2 = _blend_eval(coef, h, t)
        scale = max(abs(sigma), abs(d2P) * h, 1e-300) / h
        if np.all(d2 <= 1e-12 * scale) and np.all(d1 >= -1e-12 * max(sigma, 1e-300)):
            break
    else:
        raise RegularizationError(f"quintic blend is not concave on [eps/2, eps] for eps={eps:g}")
    # record how well (psi1_eps)' dominates psi1'
    s = np.linspace(1e-9 * eps, eps, 257)
    ref = psi1.d1(s)
    mine = np.where(s <= h, sigma, _blend_eval(coef, h, np.clip(s / h - 1.0, 0.0, 1.0))[1])
    slack = 1e-10 * max(sigma, 1.0)
    if np.all(mine >= ref - slack):
        dom = "full"
    elif np.all(mine >= 0.5 * ref - slack):
        dom = "half"
    else:
        dom = "none"
    return Psi1Blend(eps, sigma, coef, lam, dom)


def build_psi1_eps(base: FreeEnergyModel, eps: float) -> ScalarFunction:
    return _psi1_eps_function(base.psi1, _make_blend(base.psi1, eps))


def _psi1_eps_function(psi1: ScalarFunction, blend: Psi1Blend) -> ScalarFunction:
    eps, sigma, coef = blend.epsilon, blend.sigma, blend.coef
    h = 0.5 * eps

    def pieces(s):
        s = np.asarray(s, dtype=float)
        lin = s <= h
        mid = (s > h) & (s < eps)
        t = np.clip(s / h - 1.0, 0.0, 1.0)
        return s, lin, mid, t

    def value(s):
        s, lin, mid, t = pieces(s)
        with np.errstate(all="ignore"):
            out = np.where(s >= eps, psi1(np.maximum(s, eps)), _blend_eval(coef, h, t)[0])
        return np.where(lin, sigma * s, out)

    def d1(s):
        s, lin, mid, t = pieces(s)
        out = np.where(s >= eps, psi1.d1(np.maximum(s, eps)), _blend_eval(coef, h, t)[1])
        return np.where(lin, sigma, out)

    def d2(s):
        s, lin, mid, t = pieces(s)
        out = np.where(s >= eps, psi1.d2(np.maximum(s, eps)), _blend_eval(coef, h, t)[2])
        return np.where(lin, 0.0, out)

    def energy(s):
        s, lin, mid, t = pieces(s)
        v, dv, _ = _blend_eval(coef, h, t)
        out = np.where(s >= eps, psi1.energy(np.maximum(s, eps)), v - s * dv)
        return np.where(lin, 0.0, out)

    return ScalarFunction(value, d1, d2, lower=0.0, lower_closed=True,
                          name=f"{psi1.name}_eps",
                          params={**dict(psi1.params), "epsilon": eps, "sigma": sigma},
                          energy_fn=energy)


@dataclass(frozen=True)
class RegularizedModel:
    """A free-energy model with the eps-regularized modulus.

    ``epsilon = 0`` keeps the unregularized model; inversion then needs
    e above the zero-temperature limit of the energy.
    """

    base: FreeEnergyModel
    epsilon: float
    psi1_eps: ScalarFunction = field(init=False)
    blend: Psi1Blend | None = field(init=False)

    def __post_init__(self):
        eps = float(self.epsilon)
        if not np.isfinite(eps) or eps < 0:
            raise ParameterError(f"epsilon must be >= 0, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)
        if eps == 0.0:
            object.__setattr__(self, "blend", None)
            object.__setattr__(self, "psi1_eps", self.base.psi1)
        else:
            blend = _make_blend(self.base.psi1, eps)
            object.__setattr__(self, "blend", blend)
            object.__setattr__(self, "psi1_eps", _psi1_eps_function(self.base.psi1, blend))

    @property
    def regularized(self) -> bool:
        return self.epsilon > 0

    # node-level helpers taking p2 = psi2(b) directly
    def energy_p2(self, theta, p2):
        return self.base.psi0.energy(theta) + self.psi1_eps.energy(theta) * p2

    def heat_capacity_p2(self, theta, p2):
        theta = np.asarray(theta, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            cap0 = -theta * self.base.psi0.d2(theta)
        return cap0 - theta * self.psi1_eps.d2(theta) * p2

    def e1_eps(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < 0):
            raise DomainError("temperature must be >= 0")
        return self.psi1_eps.energy(theta)

    def e_eps(self, theta, b):
        theta = np.asarray(theta, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(~(b > 0)):
            raise DomainError("stretch b must be > 0")
        if np.any(theta < 0) or (not self.regularized and np.any(theta <= 0)):
            raise DomainError("temperature out of range")
        with np.errstate(invalid="ignore"):
            out = self.energy_p2(theta, self.base.psi2(b))
        return np.where(theta == 0.0, 0.0, out) if self.regularized else out

    def eta_eps(self, theta, b):
        theta = np.asarray(theta, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(~(theta > 0)) or np.any(~(b > 0)):
            raise DomainError("entropy needs theta > 0 and b > 0")
        return -self.base.psi0.d1(theta) - self.psi1_eps.d1(theta) * self.base.psi2(b)

    def heat_capacity_eps(self, theta, b):
        return self.heat_capacity_p2(theta, self.base.psi2(np.asarray(b, dtype=float)))

    def invert_p2(self, e, p2):
        """Temperature, heat capacity and e1_eps at the root, given psi2 values."""
        return kernels.invert(self, e, p2)

    def theta_from_e(self, e, b):
        b = np.asarray(b, dtype=float)
        if np.any(~(b > 0)):
            raise DomainError("stretch b must be > 0")
        e, p2 = np.broadcast_arrays(np.asarray(e, dtype=float), self.base.psi2(b))
        theta, _, _ = self.invert_p2(e, p2)
        return theta if np.ndim(theta) else float(theta)

    def certificate(self, n: int = 4001) -> dict:
        """Sampled checks of the regularized modulus on (0, 4 eps)."""
        if not self.regularized:
            raise RegularizationError("certificate needs epsilon > 0")
        eps = self.epsilon
        f = self.psi1_eps
        s_in = np.linspace(0.0, eps, n)[1:-1]
        s_out = eps * np.logspace(0.0, 3.0, n)
        s_lin = np.linspace(0.0, 0.5 * eps, n)
        boundapp = float(np.max(eps * np.abs(f.d1(s_in)) + eps ** 2 * np.abs(f.d2(s_in))))
        s_all = np.concatenate([s_in, s_out])
        return {
            "epsilon": eps,
            "sigma": self.blend.sigma,
            "lambda": self.blend.lam,
            "domination": self.blend.domination,
            "match": float(np.max(np.abs(f(s_out) - self.base.psi1(s_out)))),
            "value_at_zero": float(f(0.0)),
            "linear": float(np.max(np.abs(f(s_lin) - self.blend.sigma * s_lin))),
            "max_d2": float(np.max(f.d2(s_all))),
            "min_d1": float(np.min(f.d1(s_all))),
            "boundapp": boundapp,
            "boundapp1": float(np.max(-s_all ** 2 * f.d2(s_all))),
        }


def theta_from_e_plain(model: FreeEnergyModel, e, b):
    return RegularizedModel(model, 0.0).theta_from_e(e, b)


# --- cut-offs ------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffSpec:
    k: float | None
    b_min: float
    b_max: float

    def __post_init__(self):
        if self.k is not None and not (self.k >= 1):
            raise ParameterError(f"cut-off level k must be >= 1 or off, got {self.k!r}")
        if not (0 < self.b_min < self.b_max):
            raise ParameterError("need 0 < b_min < b_max")


def clamp_b(b, spec: CutoffSpec):
    return np.clip(b, spec.b_min, spec.b_max)


def smooth_step(t):
    """6t^5 - 15t^4 + 10t^3 on [0, 1], clamped outside."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def master_cutoff(r):
    """G(r): 1 on [0, 1], 0 on [2, inf), quintic smoothstep between."""
    return 1.0 - smooth_step(np.asarray(r, dtype=float) - 1.0)


def convective_cutoff(s, spec: CutoffSpec):
    if spec.k is None:
        return np.ones_like(np.asarray(s, dtype=float))
    return master_cutoff(np.asarray(s, dtype=float) / spec.k)


def clamp_initial_energy(theta0, b0, reg: RegularizedModel, b_bounds=None):
    theta0 = np.asarray(theta0, dtype=float)
    b0 = np.asarray(b0, dtype=float)
    if np.any(~(theta0 > 0)):
        raise DomainError("initial temperature must be > 0")
    if b_bounds is not None:
        lo, hi = b_bounds
        if np.any(b0 < lo) or np.any(b0 > hi):
            raise DomainError(f"initial stretch must lie in [{lo}, {hi}]")
    if reg.regularized:
        eps = reg.epsilon
        theta0 = np.clip(theta0, eps, 1.0 / eps)
    return reg.e_eps(theta0, b0)


# --- stick-slip ----------------------------------------------------------------------

@dataclass(frozen=True)
class StickSlipParams:
    s_star: float = 0.0
    gamma_star: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        for k in ("s_star", "gamma_star", "epsilon"):
            v = getattr(self, k)
            if not np.isfinite(v) or v < 0:
                raise ParameterError(f"stick-slip {k} must be finite and >= 0, got {v!r}")

    @property
    def free_slip(self) -> bool:
        return self.s_star == 0.0 and self.gamma_star == 0.0


def tangential_traction(vt, params: StickSlipParams):
    """Traction for a scalar tangential velocity component (signed)."""
    vt = np.asarray(vt, dtype=float)
    if params.epsilon > 0:
        return params.s_star * vt / (params.epsilon + np.abs(vt)) + params.gamma_star * vt
    return params.s_star * np.sign(vt) + params.gamma_star * vt


def stick_slip_mollified(v_tau, params: StickSlipParams):
    v = np.asarray(v_tau, dtype=float)
    speed = np.linalg.norm(v, axis=-1, keepdims=True)
    if params.epsilon > 0:
        return params.s_star * v / (params.epsilon + speed) + params.gamma_star * v
    unit = np.divide(v, speed, out=np.zeros_like(v), where=speed > 0)
    return params.s_star * unit + params.gamma_star * v


def stick_slip_graph(s, params: StickSlipParams):
    if not params.gamma_star > 0:
        raise ParameterError("the slip graph needs gamma_star > 0")
    s = np.asarray(s, dtype=float)
    mag = np.linalg.norm(s, axis=-1, keepdims=True)
    excess = np.maximum(mag - params.s_star, 0.0)
    factor = np.divide(excess, mag, out=np.zeros_like(mag), where=mag > 0)
    return factor * s / params.gamma_star
