"""Constitutive closure: stress, fluxes, reaction term and entropy production.

All functions are vectorised. Vectors carry a trailing axis of length 2 and
the symmetric velocity gradient D trailing axes (2, 2). Passing a
RegularizedModel instead of a FreeEnergyModel substitutes the regularized
modulus for psi1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import DomainError, FreeEnergyModel, MaterialCoefficients

__all__ = [
    "StateGradients",
    "FluxSet",
    "DissipationBreakdown",
    "deviatoric_stress",
    "energy_flux",
    "entropy_flux",
    "fluxes",
    "reaction",
    "entropy_production",
    "scalar_oldroyd_heating",
]


@dataclass(frozen=True)
class StateGradients:
    grad_theta: np.ndarray
    grad_b: np.ndarray
    D: np.ndarray

    @classmethod
    def build(cls, grad_theta=(0.0, 0.0), grad_b=(0.0, 0.0), D=None):
        gt = np.asarray(grad_theta, dtype=float)
        gb = np.asarray(grad_b, dtype=float)
        if D is None:
            D = np.zeros(np.broadcast_shapes(gt.shape, gb.shape)[:-1] + (2, 2))
        return cls(gt, gb, np.asarray(D, dtype=float))


@dataclass(frozen=True)
class FluxSet:
    j_e: np.ndarray
    j_eta: np.ndarray


@dataclass(frozen=True)
class DissipationBreakdown:
    thermal: np.ndarray
    viscous: np.ndarray
    relaxation: np.ndarray
    stress_diffusion: np.ndarray

    @property
    def total(self):
        return self.thermal + self.viscous + self.relaxation + self.stress_diffusion

    def fields(self):
        return {"thermal": self.thermal, "viscous": self.viscous,
                "relaxation": self.relaxation, "stress_diffusion": self.stress_diffusion}


def _split(model):
    """(free-energy model, psi1 to use) for plain or regularized input."""
    if isinstance(model, FreeEnergyModel):
        return model, model.psi1
    return model.base, model.psi1_eps


def _check(theta, b, allow_zero=False):
    theta = np.asarray(theta, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(~(b > 0)):
        raise DomainError("stretch b must be > 0")
    if np.any(~(theta >= 0) if allow_zero else ~(theta > 0)):
        raise DomainError("temperature out of range")
    return theta, b


def deviatoric_stress(nu_value, D):
    return 2.0 * np.asarray(nu_value, dtype=float)[..., None, None] * np.asarray(D, dtype=float)


def energy_flux(model, coeffs: MaterialCoefficients, theta, b, grads: StateGradients):
    base, p1 = _split(model)
    theta, b = _check(theta, b)
    kap = coeffs.kappa(theta, b)[..., None]
    alp = coeffs.alpha(theta, b)[..., None]
    cross = (p1.energy(theta) * base.psi2.d1(b))[..., None]
    return -kap * grads.grad_theta - cross * alp * grads.grad_b


def entropy_flux(model, coeffs: MaterialCoefficients, theta, b, grads: StateGradients):
    base, p1 = _split(model)
    theta, b = _check(theta, b)
    kap = coeffs.kappa(theta, b)[..., None]
    alp = coeffs.alpha(theta, b)[..., None]
    cross = (p1.d1(theta) * base.psi2.d1(b))[..., None]
    return -kap * grads.grad_theta / theta[..., None] + cross * alp * grads.grad_b


def fluxes(model, coeffs, theta, b, grads) -> FluxSet:
    return FluxSet(energy_flux(model, coeffs, theta, b, grads),
                   entropy_flux(model, coeffs, theta, b, grads))


def reaction(model, coeffs: MaterialCoefficients, theta, b):
    theta, b = _check(theta, b, allow_zero=True)
    return coeffs.h(theta, b)


def entropy_production(model, coeffs: MaterialCoefficients, theta, b,
                       grads: StateGradients) -> DissipationBreakdown:
    """The four nonnegative terms of theta * zeta."""
    base, p1 = _split(model)
    theta, b = _check(theta, b)
    gt = np.sum(grads.grad_theta ** 2, axis=-1)
    gb = np.sum(grads.grad_b ** 2, axis=-1)
    dd = np.sum(grads.D ** 2, axis=(-2, -1))
    g1 = p1(theta)
    thermal = coeffs.kappa(theta, b) * gt / theta
    viscous = 2.0 * coeffs.nu(theta, b) * dd
    # C psi1 (psi2')^2 written as psi1 h psi2' so C is never formed
    relax = g1 * coeffs.h(theta, b) * base.psi2.d1(b)
    sdiff = g1 * base.psi2.d2(b) * coeffs.alpha(theta, b) * gb
    return DissipationBreakdown(thermal, viscous, relax, sdiff)


def scalar_oldroyd_heating(mu_elastic, nu1, b):
    b = np.asarray(b, dtype=float)
    return 3.0 * mu_elastic ** 2 / (2.0 * nu1) * (b + 1.0 / b - 2.0)
