"""Thermodynamic budgets and invariant checks over a simulated trajectory.

Budgets are recomputed here from the node fields with their own quadrature
sums and with the closure module's dissipation terms, so they form a second
code path next to the solver's internal accounting. Checks are pure
functions of a sequence of BudgetSample rows and return CheckResult
verdicts that carry the measured violation and the tolerance used.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .closure import StateGradients, entropy_production
from .regularization import RegularizedModel

__all__ = [
    "BUDGET_COLUMNS",
    "INTEGRAL_COLUMNS",
    "AuditError",
    "BudgetSample",
    "CheckResult",
    "AuditReport",
    "sample_budgets",
    "check_energy_conservation",
    "check_entropy_monotone",
    "check_dissipation",
    "check_balance_laws",
    "check_b_bounds",
    "check_positivity",
    "check_inversion_roundtrip",
    "inversion_roundtrip_fields",
    "floors",
    "audit_samples",
    "StrictMonitor",
]

BUDGET_COLUMNS = ("t", "kinetic", "internal", "total", "entropy", "diss_thermal", "diss_viscous",
                  "diss_relax", "diss_stressdiff", "boundary_work", "body_power", "min_b", "max_b",
                  "min_e", "min_theta")
INTEGRAL_COLUMNS = ("t", "work_integral", "power_integral", "production_integral",
                    "convective_integral", "zeta", "entropy_rate", "convective", "mass_b_rate",
                    "mass_b_rate_nodal", "h_integral", "internal_rate", "internal_rate_nodal",
                    "viscous_heating", "min_dissipation_pointwise", "inversion_residual")

ENERGY_TOL = 1e-6
ROUNDTRIP_TOL = 1e-10
POINTWISE_DISS_TOL = 1e-14
BALANCE_TOL = 1e-12


class AuditError(ValueError):
    """Budget integrand is not finite."""


@dataclass
class BudgetSample:
    t: float
    kinetic: float
    internal: float
    total: float
    entropy: float
    diss_thermal: float
    diss_viscous: float
    diss_relax: float
    diss_stressdiff: float
    boundary_work: float
    body_power: float
    min_b: float
    max_b: float
    min_e: float
    min_theta: float
    integrals: dict = field(default_factory=dict)

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in BUDGET_COLUMNS)

    def integral_row(self) -> tuple:
        return (self.t,) + tuple(self.integrals.get(c, float("nan")) for c in INTEGRAL_COLUMNS[1:])

    @property
    def dissipation(self) -> float:
        return self.diss_thermal + self.diss_viscous + self.diss_relax + self.diss_stressdiff

    @classmethod
    def from_rows(cls, budget: dict, integrals: dict | None = None) -> "BudgetSample":
        vals = {c: float(budget[c]) for c in BUDGET_COLUMNS}
        extra = {k: float(v) for k, v in (integrals or {}).items() if k != "t"}
        return cls(**vals, integrals=extra)


def _finite(name, arr, X=None, Y=None):
    arr = np.asarray(arr)
    if np.all(np.isfinite(arr)):
        return
    idx = tuple(int(i) for i in np.unravel_index(int(np.argmax(~np.isfinite(arr))), arr.shape))
    where = f" at node {idx}"
    if X is not None:
        where += f" (x={float(X[idx])!r}, y={float(Y[idx])!r})"
    raise AuditError(f"non-finite {name} integrand{where}")


def sample_budgets(sim, state, nf=None) -> BudgetSample:
    """One budget row for ``state``; ``nf`` are its node fields if already known."""
    if nf is None:
        nf = sim.evaluate(state)
    W = sim.disc.quad.W
    X, Y = sim.X, sim.Y
    reg: RegularizedModel = sim.reg

    kin_density = 0.5 * (nf.vx ** 2 + nf.vy ** 2)
    _finite("kinetic", kin_density, X, Y)
    _finite("energy", nf.e, X, Y)
    kinetic = float(np.sum(W * kin_density))
    internal = float(np.sum(W * nf.e))

    pos = nf.theta > 0
    if np.all(pos):
        eta = reg.eta_eps(nf.theta, nf.b_m)
        _finite("entropy", eta, X, Y)
        entropy = float(np.sum(W * eta))
        D = np.stack([np.stack([nf.D11, nf.D12], -1), np.stack([nf.D12, nf.D22], -1)], -2)
        grads = StateGradients(np.stack([nf.tx, nf.ty], -1), np.stack([nf.bx, nf.by], -1), D)
        br = entropy_production(reg, sim.cfg.coeffs, nf.theta, nf.b_m, grads)
        parts = [float(np.sum(W * v)) for v in (br.thermal, br.viscous, br.relaxation,
                                                 br.stress_diffusion)]
        pointwise = float(min(np.min(v) for v in br.fields().values()))
    else:
        # entropy and the thermal term are undefined; reported as nan
        entropy = float("nan")
        parts = [float("nan"), nf.diss["viscous"], float("nan"), float("nan")]
        pointwise = float("nan")

    integrals = {
        "work_integral": float(state.acc[0]),
        "power_integral": float(state.acc[1]),
        "production_integral": float(state.acc[2]),
        "convective_integral": float(state.acc[3]),
        "zeta": nf.zeta,
        "convective": nf.convective,
        "h_integral": float(np.sum(W * nf.h)),
        "viscous_heating": float(np.sum(W * 2.0 * nf.nu
                                        * (nf.D11 ** 2 + nf.D22 ** 2 + 2.0 * nf.D12 ** 2))),
        "min_dissipation_pointwise": pointwise,
        "inversion_residual": inversion_roundtrip_fields(reg, nf.theta, nf.e, nf.b_m),
    }
    if nf.rates is not None:
        _, ddot, edot = nf.rates
        sb = sim.disc.scalar
        area = sim.cfg.rect.area
        integrals["entropy_rate"] = sim.entropy_rate(nf)
        integrals["mass_b_rate"] = float(ddot[0, 0] * area)
        integrals["mass_b_rate_nodal"] = float(np.sum(W * sb.synthesize(ddot)))
        integrals["internal_rate"] = float(edot[0, 0] * area)
        integrals["internal_rate_nodal"] = float(np.sum(W * sb.synthesize(edot)))

    return BudgetSample(
        t=float(state.t), kinetic=kinetic, internal=internal, total=kinetic + internal,
        entropy=entropy, diss_thermal=parts[0], diss_viscous=parts[1], diss_relax=parts[2],
        diss_stressdiff=parts[3], boundary_work=nf.boundary_work, body_power=nf.body_power,
        min_b=float(np.min(nf.b)), max_b=float(np.max(nf.b)), min_e=float(np.min(nf.e)),
        min_theta=float(np.min(nf.theta)), integrals=integrals)


# --- verdicts -----------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: measured {self.measured!r} tolerance {self.tolerance!r}"


@dataclass
class AuditReport:
    checks: list = field(default_factory=list)

    def add(self, result: CheckResult) -> CheckResult:
        self.checks.append(result)
        return result

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, allow_nan=True)


def _series(samples, attr):
    return np.array([getattr(s, attr) for s in samples], dtype=float)


def _integral(samples, key, fallback_attr):
    """Running time integral: ODE accumulator when present, trapezoid otherwise."""
    if all(key in s.integrals and np.isfinite(s.integrals[key]) for s in samples):
        return np.array([s.integrals[key] for s in samples])
    t = _series(samples, "t")
    f = _series(samples, fallback_attr)
    out = np.zeros_like(t)
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
    return out


def check_energy_conservation(samples: Sequence[BudgetSample], tol: float = ENERGY_TOL) -> CheckResult:
    """|E(t) + boundary work - body power - E(0)| / max(E(0), 1) over all samples."""
    E = _series(samples, "total")
    work = _integral(samples, "work_integral", "boundary_work")
    power = _integral(samples, "power_integral", "body_power")
    drift = E + work - power - E[0]
    scale = max(abs(E[0]), 1.0)
    rel = float(np.max(np.abs(drift)) / scale)
    raw = float(np.max(np.abs(E - E[0])) / scale)
    return CheckResult("energy_conservation", bool(rel <= tol), rel, tol,
                       {"raw_drift": raw, "accumulated_work": float(work[-1]),
                        "accumulated_power": float(power[-1])})


def check_entropy_monotone(samples: Sequence[BudgetSample], slack_rel: float = 1e-8) -> CheckResult:
    S = _series(samples, "entropy")
    if not np.all(np.isfinite(S)):
        return CheckResult("entropy_monotone", False, float("inf"), slack_rel,
                           {"reason": "entropy undefined at some sample"})
    slack = slack_rel * max(1.0, float(np.max(np.abs(S))))
    drop = float(np.max(np.maximum.accumulate(S) - S))
    detail = {"slack": slack, "increase": float(S[-1] - S[0])}
    # interval form: S(t) - S(0) against the time integral of the production
    if all("production_integral" in s.integrals for s in samples):
        P = np.array([s.integrals["production_integral"] for s in samples])
        detail["production_gap"] = float(np.max(np.abs(S - S[0] - P)))
    # instantaneous form: chain-rule dS/dt against the integrated production
    rates = [(s.integrals.get("entropy_rate"), s.integrals.get("zeta")) for s in samples]
    rates = [(a, b) for a, b in rates if a is not None and b is not None]
    if rates:
        r = np.array(rates, dtype=float)
        detail["rate_residual"] = float(np.max(np.abs(r[:, 0] - r[:, 1])))
        detail["max_zeta"] = float(np.max(np.abs(r[:, 1])))
    return CheckResult("entropy_monotone", bool(drop <= slack), drop, slack, detail)


def check_dissipation(samples: Sequence[BudgetSample], area: float) -> CheckResult:
    """Integrated dissipation terms and, when recorded, their pointwise minimum."""
    cols = ("diss_thermal", "diss_viscous", "diss_relax", "diss_stressdiff")
    vals = np.array([[getattr(s, c) for c in cols] for s in samples])
    tol = 1e-12 * area
    worst = float(-np.min(vals)) if np.all(np.isfinite(vals)) else float("inf")
    ok = worst <= tol
    detail = {"integrated_min": -worst}
    pw = [s.integrals["min_dissipation_pointwise"] for s in samples
          if "min_dissipation_pointwise" in s.integrals]
    if pw:
        m = float(np.min(pw))
        detail["pointwise_min"] = m
        ok = ok and bool(m >= -POINTWISE_DISS_TOL)
    return CheckResult("dissipation_nonnegative", bool(ok), max(worst, 0.0), tol, detail)


def check_balance_laws(samples: Sequence[BudgetSample], tol: float = BALANCE_TOL) -> CheckResult:
    """Mass law of b and energy law of e, nodal quadrature against modal rates.

    d/dt int b = -int h and d/dt int e = int 2 nu |D|^2 follow from testing
    with the constant mode; both sides are compared relative to their size.
    """
    worst = 0.0
    detail = {}
    for s in samples:
        g = s.integrals
        if "mass_b_rate" not in g:
            continue
        pairs = {
            "mass_modal_vs_nodal": (g["mass_b_rate"], g["mass_b_rate_nodal"]),
            "mass_law": (g["mass_b_rate_nodal"], -g["h_integral"]),
            "energy_modal_vs_nodal": (g["internal_rate"], g["internal_rate_nodal"]),
            "energy_law": (g["internal_rate_nodal"], g["viscous_heating"]),
        }
        for k, (a, b) in pairs.items():
            r = abs(a - b) / max(1.0, abs(a), abs(b))
            detail[k] = max(detail.get(k, 0.0), r)
            worst = max(worst, r)
    if not detail:
        return CheckResult("balance_laws", True, 0.0, tol, {"reason": "no rates recorded"})
    return CheckResult("balance_laws", bool(worst <= tol), worst, tol, detail)


def check_b_bounds(samples: Sequence[BudgetSample], b_min: float, b_max: float,
                   tol_b: float | None = None) -> CheckResult:
    if tol_b is None:
        tol_b = 5e-3 * (b_max - b_min)
    lo = float(np.min(_series(samples, "min_b")))
    hi = float(np.max(_series(samples, "max_b")))
    viol = max(0.0, b_min - lo, hi - b_max)
    return CheckResult("b_bounds", bool(viol <= tol_b), viol, tol_b,
                       {"min_b": lo, "max_b": hi, "b_min": b_min, "b_max": b_max})


def floors(reg: RegularizedModel) -> tuple[float, float, float]:
    """(energy floor, temperature floor, tol_floor) of a regularized model."""
    half = 0.5 * reg.epsilon
    e_floor = float(reg.base.psi0.energy(half))
    return e_floor, half, 1e-3 * e_floor


def check_positivity(samples: Sequence[BudgetSample], reg: RegularizedModel) -> CheckResult:
    min_e = float(np.min(_series(samples, "min_e")))
    min_th = float(np.min(_series(samples, "min_theta")))
    if reg.regularized:
        e_floor, th_floor, tol = floors(reg)
        viol = max(0.0, e_floor - min_e, th_floor - min_th)
        return CheckResult("positivity", bool(viol <= tol), viol, tol,
                           {"min_e": min_e, "min_theta": min_th, "e_floor": e_floor,
                            "theta_floor": th_floor})
    ok = min_e > 0 and min_th > 0
    return CheckResult("positivity", bool(ok), max(0.0, -min(min_e, min_th)), 0.0,
                       {"min_e": min_e, "min_theta": min_th, "strict": True})


def inversion_roundtrip_fields(reg: RegularizedModel, theta, e, b_m) -> float:
    """max |e_eps(theta, b) - e| / max(1, |e|) over the given points."""
    theta = np.asarray(theta, dtype=float)
    e = np.asarray(e, dtype=float)
    p2 = reg.base.psi2(np.asarray(b_m, dtype=float))
    ok = theta > 0
    with np.errstate(all="ignore"):
        fwd = reg.energy_p2(np.where(ok, theta, 1.0), p2)
    if reg.regularized:
        # the linear branch below zero maps theta to itself
        fwd = np.where(ok, fwd, theta)
    else:
        fwd = np.where(ok, fwd, np.inf)
    res = np.abs(fwd - e) / np.maximum(1.0, np.abs(e))
    res = np.where(np.isnan(res), np.inf, res)
    return float(np.max(res))


def check_inversion_roundtrip(samples: Sequence[BudgetSample] = (), tol: float = ROUNDTRIP_TOL,
                              extra: Iterable[float] = ()) -> CheckResult:
    vals = [s.integrals["inversion_residual"] for s in samples if "inversion_residual" in s.integrals]
    vals += list(extra)
    worst = float(max(vals)) if vals else 0.0
    return CheckResult("inversion_roundtrip", bool(worst <= tol), worst, tol, {"points": len(vals)})


def audit_samples(samples: Sequence[BudgetSample], config, reg: RegularizedModel | None = None,
                  snapshot_residuals: Iterable[float] = ()) -> AuditReport:
    """Every check over a budget series, in a fixed order."""
    reg = reg or RegularizedModel(config.model, config.reg_epsilon)
    co = config.coeffs
    rep = AuditReport()
    rep.add(check_energy_conservation(samples))
    rep.add(check_entropy_monotone(samples))
    rep.add(check_dissipation(samples, config.rect.area))
    rep.add(check_balance_laws(samples))
    rep.add(check_b_bounds(samples, co.b_min, co.b_max))
    rep.add(check_positivity(samples, reg))
    rep.add(check_inversion_roundtrip(samples, extra=snapshot_residuals))
    return rep


class StrictMonitor:
    """Observer that raises on the first per-step invariant violation."""

    class Violation(RuntimeError):
        pass

    def __init__(self, sim):
        self.sim = sim
        self.reg = sim.reg
        self.samples: list[BudgetSample] = []

    def __call__(self, state, nf):
        s = sample_budgets(self.sim, state, nf)
        self.samples.append(s)
        co = self.sim.cfg.coeffs
        window = self.samples[-2:]
        for res in (check_entropy_monotone(window),
                    check_b_bounds([s], co.b_min, co.b_max),
                    check_positivity([s], self.reg),
                    check_inversion_roundtrip([s])):
            if not res.passed:
                raise StrictMonitor.Violation(f"t = {s.t!r}: {res.line()}")
