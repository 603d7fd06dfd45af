"""Galerkin semi-discretisation and time integration.

The state holds velocity streamfunction coefficients c, stretch coefficients
d and internal-energy coefficients e_c. Temperature is recovered from (e, b)
at every quadrature node and every stage. Four running integrals ride along
as extra ODE components: boundary work, body power, integrated entropy
production and the quadrature residual of the convective term.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .config import SimulationConfig, body_force_field, scalar_profile, velocity_profile
from .constitutive import DomainError
from .integrator import StepSizeUnderflow, dopri5
from .regularization import (
    CutoffSpec,
    RegularizedModel,
    clamp_initial_energy,
    convective_cutoff,
    tangential_traction,
)
from .spectral import Discretization

__all__ = ["SimState", "NodeFields", "Simulation", "Trajectory", "SolverError",
           "InitialDataError", "N_ACC", "project_initial", "assemble_rhs", "integrate"]

N_ACC = 4
ACC_NAMES = ("work_integral", "power_integral", "production_integral", "convective_integral")


class SolverError(RuntimeError):
    """The time integration could not be completed."""


class InitialDataError(ValueError):
    """Initial data violate their preconditions."""


@dataclass
class SimState:
    t: float
    c: np.ndarray
    d: np.ndarray
    e_c: np.ndarray
    acc: np.ndarray = field(default_factory=lambda: np.zeros(N_ACC))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.c.ravel(), self.d.ravel(), self.e_c.ravel(), self.acc])

    def copy(self) -> "SimState":
        return SimState(self.t, self.c.copy(), self.d.copy(), self.e_c.copy(), self.acc.copy())


@dataclass
class NodeFields:
    """Everything evaluated at the quadrature nodes for one state."""

    t: float
    b: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    e: np.ndarray
    ex: np.ndarray
    ey: np.ndarray
    b_m: np.ndarray
    theta: np.ndarray
    cv: np.ndarray
    e1: np.ndarray
    tx: np.ndarray
    ty: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D22: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    alpha: np.ndarray
    h: np.ndarray
    p2: np.ndarray
    dp2: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    trace: dict
    traction: dict
    boundary_work: float
    body_power: float
    convective: float
    diss: dict
    zeta: float
    rates: tuple | None = None  # (cdot, ddot, edot)


class Simulation:
    def __init__(self, config: SimulationConfig):
        self.cfg = config
        self.disc = Discretization(config.rect, config.velocity_modes, config.scalar_modes,
                                   config.quadrature)
        self.reg = RegularizedModel(config.model, config.reg_epsilon)
        co = config.coeffs
        self.cut = CutoffSpec(config.cutoff_k, co.b_min, co.b_max)
        q = self.disc.quad
        self.X, self.Y = np.meshgrid(q.x, q.y, indexing="ij")
        self.fx, self.fy = body_force_field(config.body_force, self.X, self.Y, config.rect)
        self.force_free = not (np.any(self.fx) or np.any(self.fy))
        self.kinematic = config.mode == "kinematic"
        vs = self.disc.velocity.shape
        self.prescribed = velocity_profile(config.prescribed_velocity, vs) if self.kinematic else None
        nv, ns = self.disc.sizes
        self._slices = (slice(0, nv), slice(nv, nv + ns), slice(nv + ns, nv + 2 * ns),
                        slice(nv + 2 * ns, nv + 2 * ns + N_ACC))

    # --- state packing -------------------------------------------------------------
    def unpack(self, t, y) -> SimState:
        sc, sd, se, sa = self._slices
        return SimState(t, y[sc].reshape(self.disc.velocity.shape), y[sd].reshape(self.disc.scalar.shape),
                        y[se].reshape(self.disc.scalar.shape), y[sa].copy())

    # --- initial data ----------------------------------------------------------------
    def initial_nodal(self):
        cfg = self.cfg
        th0 = scalar_profile(cfg.initial["theta0"], self.X, self.Y, cfg.rect)
        b0 = scalar_profile(cfg.initial["b0"], self.X, self.Y, cfg.rect)
        return th0, b0

    def project_initial(self) -> SimState:
        cfg = self.cfg
        co = cfg.coeffs
        th0, b0 = self.initial_nodal()
        errors = []
        if np.any(~(th0 > 0)):
            errors.append(f"theta0 must be > 0 (min {float(np.min(th0))!r})")
        lo, hi = float(np.min(b0)), float(np.max(b0))
        if lo < co.b_min or hi > co.b_max:
            errors.append(f"b0 range [{lo!r}, {hi!r}] not inside [{co.b_min!r}, {co.b_max!r}]")
        if errors:
            raise InitialDataError("; ".join(errors))
        if self.reg.regularized:
            e0 = clamp_initial_energy(th0, b0, self.reg)
        else:
            e0 = self.reg.e_eps(th0, b0)
        sb = self.disc.scalar
        c = velocity_profile(cfg.initial["v0"], self.disc.velocity.shape)
        if self.kinematic:
            c = self.prescribed.copy()
        return SimState(cfg.t_span[0], c, sb.project(b0), sb.project(e0))

    # --- right-hand side ---------------------------------------------------------------
    def evaluate(self, state: SimState, rates: bool = True) -> NodeFields:
        cfg = self.cfg
        co = cfg.coeffs
        sb, vb = self.disc.scalar, self.disc.velocity
        base = self.reg.base
        W = self.disc.quad.W

        b, bx, by = sb.synthesize(state.d, grad=True)
        e, ex, ey = sb.synthesize(state.e_c, grad=True)
        vx, vy, (dxvx, dyvx, dxvy, dyvy) = vb.synthesize(state.c, grad=True)

        b_m = np.clip(b, co.b_min, co.b_max)
        inside = ((b > co.b_min) & (b < co.b_max)).astype(float)
        p2 = base.psi2(b_m)
        dp2 = base.psi2.d1(b_m)
        theta, cv, e1 = self.reg.invert_p2(e, p2)
        th_c = np.maximum(theta, 0.0)
        # implicit-function gradient of theta(e, b_M)
        g = e1 * dp2 * inside
        tx = (ex - g * bx) / cv
        ty = (ey - g * by) / cv

        nu = co.nu(th_c, b_m)
        kap = co.kappa(th_c, b_m)
        alp = co.alpha(th_c, b_m)
        h = co.h(th_c, b_m)

        D11, D22 = dxvx, dyvy
        D12 = 0.5 * (dyvx + dxvy)
        DD = D11 * D11 + D22 * D22 + 2.0 * D12 * D12

        speed = np.sqrt(vx * vx + vy * vy)
        G = convective_cutoff(speed, self.cut)
        conv = float(np.sum(W * G * (vx * vx * D11 + vy * vy * D22 + 2.0 * vx * vy * D12)))

        trace = vb.boundary_trace(state.c)
        traction = {k: tangential_traction(v, cfg.stickslip) for k, (v, _) in trace.items()}
        bwork = float(sum(np.sum(w * traction[k] * v) for k, (v, w) in trace.items()))
        bpower = float(np.sum(W * (self.fx * vx + self.fy * vy)))

        # theta * zeta, term by term; only defined where theta > 0
        pos = theta > 0
        th_s = np.where(pos, theta, 1.0)
        g1 = self.reg.psi1_eps(th_c)
        d_th = np.where(pos, kap * (tx * tx + ty * ty) / th_s, 0.0)
        d_vi = 2.0 * nu * DD
        d_re = g1 * h * dp2
        d_sd = g1 * base.psi2.d2(b_m) * alp * (bx * bx + by * by)
        diss = {
            "thermal": float(np.sum(W * d_th)),
            "viscous": float(np.sum(W * d_vi)),
            "relaxation": float(np.sum(W * d_re)),
            "stress_diffusion": float(np.sum(W * d_sd)),
            "min_pointwise": float(min(np.min(d_th), np.min(d_vi), np.min(d_re), np.min(d_sd))),
        }
        zeta = float(np.sum(W * np.where(pos, (d_th + d_vi + d_re + d_sd) / th_s, 0.0)))

        nf = NodeFields(state.t, b, bx, by, e, ex, ey, b_m, theta, cv, e1, tx, ty, vx, vy,
                        D11, D12, D22, nu, kap, alp, h, p2, dp2, self.fx, self.fy,
                        trace, traction, bwork, bpower, conv, diss, zeta)
        if not rates:
            return nf

        # b equation
        rb = -sb.grad_rows(alp * bx, alp * by) + sb.grad_rows(b * vx, b * vy) - sb.rows(h)
        # e equation
        mu = cfg.elliptic_mu
        cross = alp * e1 * dp2
        qx = mu * ex + kap * tx + cross * bx - e * vx
        qy = mu * ey + kap * ty + cross * by - e * vy
        re = -sb.grad_rows(qx, qy) + sb.rows(2.0 * nu * DD)
        ddot = rb / sb.mass
        edot = re / sb.mass
        if self.kinematic:
            cdot = np.zeros(vb.shape)
        else:
            t11 = 2.0 * nu * D11 - G * vx * vx
            t22 = 2.0 * nu * D22 - G * vy * vy
            t12 = 2.0 * nu * D12 - G * vx * vy
            rc = -vb.tensor_rows(t11, t12, t22) - vb.boundary_rows(traction)
            if not self.force_free:
                rc = rc + vb.vector_rows(self.fx, self.fy)
            cdot = vb.solve(rc)
        nf.rates = (cdot, ddot, edot)
        bad = ~(np.isfinite(rb) & np.isfinite(re))
        if np.any(bad) or not np.all(np.isfinite(cdot)):
            raise SolverError(f"non-finite right-hand side at t = {state.t!r}")
        return nf

    def assemble_rhs(self, state: SimState):
        return self.evaluate(state).rates

    def rhs(self, t, y):
        st = self.unpack(t, y)
        nf = self.evaluate(st)
        cdot, ddot, edot = nf.rates
        acc = np.array([nf.boundary_work, nf.body_power, nf.zeta, nf.convective])
        return np.concatenate([cdot.ravel(), ddot.ravel(), edot.ravel(), acc])

    # --- diagnostics ---------------------------------------------------------------------
    def entropy(self, nf: NodeFields) -> float:
        base = self.reg.base
        pos = nf.theta > 0
        if not np.all(pos):
            return float("nan")
        eta = -base.psi0.d1(nf.theta) - self.reg.psi1_eps.d1(nf.theta) * nf.p2
        return float(np.sum(self.disc.quad.W * eta))

    def entropy_rate(self, nf: NodeFields) -> float:
        """dS/dt by the chain rule through the Galerkin rates."""
        if not np.all(nf.theta > 0):
            return float("nan")
        _, ddot, edot = nf.rates
        sb = self.disc.scalar
        bdot = sb.synthesize(ddot)
        edot_n = sb.synthesize(edot)
        inside = (nf.b > self.cfg.coeffs.b_min) & (nf.b < self.cfg.coeffs.b_max)
        psib = self.reg.psi1_eps(nf.theta) * nf.dp2 * inside
        return float(np.sum(self.disc.quad.W * (edot_n - psib * bdot) / nf.theta))

    def budget(self, state: SimState, nf: NodeFields | None = None) -> dict:
        nf = nf or self.evaluate(state)
        W = self.disc.quad.W
        ke = self.disc.velocity.kinetic(state.c)
        internal = float(np.sum(W * nf.e))
        row = {
            "t": float(state.t),
            "kinetic": ke,
            "internal": internal,
            "total": ke + internal,
            "entropy": self.entropy(nf),
            "diss_thermal": nf.diss["thermal"],
            "diss_viscous": nf.diss["viscous"],
            "diss_relax": nf.diss["relaxation"],
            "diss_stressdiff": nf.diss["stress_diffusion"],
            "boundary_work": nf.boundary_work,
            "body_power": nf.body_power,
            "min_b": float(np.min(nf.b)),
            "max_b": float(np.max(nf.b)),
            "min_e": float(np.min(nf.e)),
            "min_theta": float(np.min(nf.theta)),
        }
        extra = dict(zip(ACC_NAMES, (float(a) for a in state.acc)))
        extra["zeta"] = nf.zeta
        extra["entropy_rate"] = self.entropy_rate(nf) if nf.rates is not None else float("nan")
        extra["convective"] = nf.convective
        extra["min_dissipation_pointwise"] = nf.diss["min_pointwise"]
        extra["mass_b"] = float(np.sum(W * nf.b))
        extra["h_integral"] = float(np.sum(W * nf.h))
        extra["viscous_heating"] = float(np.sum(W * 2.0 * nf.nu * (nf.D11 ** 2 + nf.D22 ** 2 + 2 * nf.D12 ** 2)))
        if nf.rates is not None:
            area = self.cfg.rect.area
            extra["mass_b_rate"] = float(nf.rates[1][0, 0] * area)
            extra["internal_rate"] = float(nf.rates[2][0, 0] * area)
        extra["inversion_residual"] = inversion_residual(self.reg, nf.theta, nf.e, nf.p2)
        row["extra"] = extra
        return row

    # --- integration -------------------------------------------------------------------
    def integrate(self, state0: SimState, output_times: Sequence[float] | None = None,
                  observers: Sequence[Callable] = (), record_budgets: bool = True):
        cfg = self.cfg
        t0, t1 = cfg.t_span
        times = sorted(set([t0, t1, *(output_times or ()), *cfg.snapshots]))
        budgets = []
        if record_budgets or observers:
            nf0 = self.evaluate(state0)
            if record_budgets:
                budgets.append(self.budget(state0, nf0))
            for obs in observers:
                obs(state0, nf0)

        def on_step(t, y):
            if not (record_budgets or observers):
                return
            st = self.unpack(t, y)
            nf = self.evaluate(st)
            if record_budgets:
                budgets.append(self.budget(st, nf))
            for obs in observers:
                obs(st, nf)

        try:
            ts, ys, stats = dopri5(self.rhs, (t0, t1), state0.vector(), t_eval=times,
                                   opts=cfg.ode, on_step=on_step)
        except (StepSizeUnderflow, kernels.ConvergenceError, DomainError) as exc:
            raise SolverError(str(exc)) from exc
        states = [self.unpack(t, y) for t, y in zip(ts, ys)]
        return Trajectory(states=states, budgets=budgets, stats=stats)


def inversion_residual(reg: RegularizedModel, theta, e, p2) -> float:
    """Largest relative residual of the energy-temperature relation at nodes."""
    theta = np.asarray(theta, dtype=float)
    e = np.asarray(e, dtype=float)
    pos = theta > 0
    with np.errstate(all="ignore"):
        fwd = reg.energy_p2(np.where(pos, theta, 1.0), p2)
    res = np.where(pos, np.abs(fwd - e), np.abs(theta - e))
    if not reg.regularized:
        res = np.where(pos, res, np.inf)
    return float(np.max(res / np.maximum(1.0, np.abs(e))))


@dataclass
class Trajectory:
    states: list
    budgets: list
    stats: dict

    def at(self, t: float) -> SimState:
        for s in self.states:
            if s.t == t:
                return s
        raise KeyError(t)


def project_initial(config: SimulationConfig) -> SimState:
    return Simulation(config).project_initial()


def assemble_rhs(state: SimState, config: SimulationConfig):
    return Simulation(config).assemble_rhs(state)


def integrate(config: SimulationConfig, state0: SimState | None = None, observers=(),
              output_times=None):
    sim = Simulation(config)
    if state0 is None:
        state0 = sim.project_initial()
    return sim.integrate(state0, output_times=output_times, observers=observers)


def with_overrides(doc: dict, axis: str, value) -> dict:
    """Configuration document for one sweep point."""
    out = copy.deepcopy(doc)
    if axis in ("epsilon", "eps", "reg_epsilon"):
        out["reg_epsilon"] = float(value)
    elif axis in ("k", "cutoff_k"):
        out["cutoff_k"] = "off" if value in ("off", None) else float(value)
    elif axis in ("mu", "elliptic_mu"):
        out["elliptic_mu"] = float(value)
    elif axis in ("modes", "resolution"):
        r = float(value)
        for key, default in (("velocity_modes", [8, 8]), ("scalar_modes", [12, 12])):
            v = out.get(key, default)
            v = [v, v] if isinstance(v, int) else v
            out[key] = [max(1, int(round(r * n))) for n in v]
        out.pop("quadrature", None)
    else:
        raise ValueError(f"unknown sweep axis {axis!r} (epsilon, k, mu, modes)")
    return out
