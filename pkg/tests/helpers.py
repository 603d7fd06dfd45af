"""Configuration builders shared by the test modules."""
import copy

import numpy as np

from viscotherm.constitutive import FreeEnergyModel, MaterialCoefficients
from viscotherm.functions import make_coefficient, make_psi0, make_psi1, make_psi2, make_reaction

OB_PARAMS = {"c_V": 1.0, "mu_elastic": 0.1, "nu1": 1.0, "mu_tilde": 0.01, "nu_visc": 0.01,
             "kappa_heat": 0.01}

# isolated dynamic run used by the conservation studies
DYNAMIC = {
    "domain": {"Lx": 1.0, "Ly": 1.0},
    "velocity_modes": [16, 16],
    "scalar_modes": [24, 24],
    "model": {"preset": "oldroyd_b", "params": OB_PARAMS},
    "reg_epsilon": 0.0,
    "mode": "dynamic",
    "t_span": [0.0, 0.5],
    "ode": {"rel_tol": 1e-8, "abs_tol": 1e-10},
    "initial": {
        "theta0": {"kind": "gaussian", "base": 1.0, "amplitude": 0.5, "width": 0.15},
        "b0": {"kind": "gaussian", "base": 1.0, "amplitude": 0.3, "width": 0.2, "center": [0.3, 0.6]},
        "v0": {"kind": "random", "seed": 1, "amplitude": 1.0, "shape": [4, 4]},
    },
}

# b equation as a pure heat equation: v = 0, h = 0, constant alpha
HEAT = {
    "velocity_modes": [2, 2],
    "scalar_modes": [6, 6],
    "mode": "kinematic",
    "model": {
        "functions": {"psi0": {"name": "ideal", "c_V": 1.0}, "psi1": {"name": "constant", "value": 1.0},
                      "psi2": {"name": "log_stretch"}},
        "coefficients": {"nu": {"name": "constant", "value": 0.1},
                         "kappa": {"name": "constant", "value": 0.1},
                         "alpha": {"name": "constant", "value": 0.05}, "h": {"name": "zero"}},
        "C1": 0.05, "C2": 1.0, "b_min": 0.5, "b_max": 2.0,
    },
    "t_span": [0.0, 1.0],
    "ode": {"rel_tol": 1e-8, "abs_tol": 1e-12},
    "initial": {"b0": {"kind": "cosine", "mean": 1.0, "amplitude": 0.2, "mode": [2, 1]}},
}

# kinematic Oldroyd-B run for the b bounds
KINEMATIC_B = {
    "velocity_modes": [2, 2],
    "scalar_modes": [16, 16],
    "model": {"preset": "oldroyd_b",
              "params": {"c_V": 1.0, "mu_elastic": 1.0, "nu1": 1.0, "mu_tilde": 0.01, "nu_visc": 0.01,
                         "kappa_heat": 0.01, "b_min": 0.7, "b_max": 1.5}},
    "mode": "kinematic",
    "prescribed_velocity": {"kind": "taylor_green", "amplitude": 1.0},
    "t_span": [0.0, 1.0],
    "ode": {"rel_tol": 1e-8, "abs_tol": 1e-10},
    "initial": {"theta0": {"kind": "constant", "value": 1.0},
                "b0": {"kind": "gaussian", "base": 0.7, "amplitude": 0.8, "width": 0.15}},
}

# regularized run whose initial temperature dips below eps, so the clamp acts
FLOOR = {
    "velocity_modes": [16, 16],
    "scalar_modes": [48, 48],
    "model": {"preset": "oldroyd_b", "params": OB_PARAMS},
    "reg_epsilon": 0.01,
    "mode": "dynamic",
    "t_span": [0.0, 0.5],
    "ode": {"rel_tol": 1e-8, "abs_tol": 1e-10},
    "initial": {"theta0": {"kind": "gaussian", "base": 1.0, "amplitude": -0.999, "width": 0.15},
                "b0": {"kind": "constant", "value": 1.0},
                "v0": {"kind": "taylor_green", "amplitude": 0.5}},
}

# small and fast, for CLI round trips
SMALL = {
    **DYNAMIC,
    "velocity_modes": [4, 4],
    "scalar_modes": [6, 6],
    "t_span": [0.0, 0.1],
    "snapshots": [0.05, 0.1],
    "plot_grid": [9, 7],
}


def doc(base, **changes):
    out = copy.deepcopy(base)
    out.update(copy.deepcopy(changes))
    return out


def with_modes(base, velocity, scalar):
    return doc(base, velocity_modes=[velocity, velocity], scalar_modes=[scalar, scalar])


def random_model(seed: int):
    """An admissible model with temperature dependent psi1 and coefficients."""
    rng = np.random.default_rng(seed)
    c_V = rng.uniform(0.5, 3.0)
    psi0 = make_psi0({"name": "ideal_plus", "c_V": c_V, "theta_ref": rng.uniform(0.5, 2.0),
                      "c_a": rng.uniform(0.0, 1.0), "theta_c": rng.uniform(0.5, 5.0)})
    g0 = rng.uniform(0.2, 2.0)
    psi1 = make_psi1({"name": "saturating", "g0": g0, "g1": rng.uniform(0.0, g0),
                      "s_c": rng.uniform(0.5, 5.0)})
    psi2 = make_psi2({"name": rng.choice(["log_stretch", "quadratic"])})
    model = FreeEnergyModel(psi0, psi1, psi2)
    coeffs = MaterialCoefficients(
        nu=make_coefficient({"name": "thermal", "low": 0.1, "high": 0.5, "theta_c": 1.0}),
        kappa=make_coefficient({"name": "constant", "value": 0.2}),
        alpha=make_coefficient({"name": "constant", "value": 0.3}),
        h=make_reaction({"name": "giesekus", "ratio": 0.5, "a_g": rng.uniform(0.0, 1.0)}),
        C1=0.05, C2=10.0, b_min=0.5, b_max=2.0)
    return model, coeffs
