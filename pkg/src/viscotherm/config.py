"""Simulation configuration and its JSON schema.

A configuration document looks like::

    {
      "domain": {"Lx": 1.0, "Ly": 1.0},
      "velocity_modes": [8, 8],
      "scalar_modes": [12, 12],
      "quadrature": null,
      "model": {"preset": "oldroyd_b", "params": {"nu_visc": 0.01}},
      "reg_epsilon": 0.01,
      "cutoff_k": "off",
      "elliptic_mu": 0.0,
      "stickslip": {"s_star": 0.0, "gamma_star": 0.0, "epsilon": 0.0},
      "body_force": {"kind": "zero"},
      "mode": "dynamic",
      "prescribed_velocity": {"kind": "zero"},
      "t_span": [0.0, 0.5],
      "ode": {"rel_tol": 1e-8, "abs_tol": 1e-10, "max_step": 0.05, "safety": 0.9},
      "initial": {"theta0": {...}, "b0": {...}, "v0": {...}},
      "snapshots": [0.25, 0.5],
      "plot_grid": [128, 128]
    }

Field profiles (``theta0``, ``b0``) have ``kind`` constant, cosine or
gaussian. Velocity profiles (``v0``, ``prescribed_velocity``) have kind
zero, mode, modes, taylor_green, random or coefficients.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .constitutive import FreeEnergyModel, MaterialCoefficients, ParameterError, model_from_dict
from .integrator import OdeOptions
from .regularization import StickSlipParams
from .spectral import Rectangle

__all__ = ["ConfigError", "SimulationConfig", "load_config", "parse_config",
           "scalar_profile", "velocity_profile", "body_force_field"]


class ConfigError(ValueError):
    """Malformed configuration document."""


@dataclass
class SimulationConfig:
    rect: Rectangle
    velocity_modes: tuple
    scalar_modes: tuple
    model: FreeEnergyModel
    coeffs: MaterialCoefficients
    reg_epsilon: float = 0.0
    cutoff_k: float | None = None
    elliptic_mu: float = 0.0
    stickslip: StickSlipParams = field(default_factory=StickSlipParams)
    body_force: dict = field(default_factory=lambda: {"kind": "zero"})
    mode: str = "dynamic"
    prescribed_velocity: dict = field(default_factory=lambda: {"kind": "zero"})
    t_span: tuple = (0.0, 1.0)
    ode: OdeOptions = field(default_factory=OdeOptions)
    initial: dict = field(default_factory=dict)
    quadrature: tuple | None = None
    snapshots: tuple = ()
    plot_grid: tuple = (128, 128)
    doc: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Fully resolved configuration echo for manifests."""
        out = copy.deepcopy(self.doc)
        out["model_resolved"] = {**self.model.spec, **self.coeffs.spec}
        out["quadrature_resolved"] = list(self.quadrature) if self.quadrature else None
        return out


def _get(doc, key, path, default=None, required=False):
    if key not in doc:
        if required:
            raise ConfigError(f"{path}{key}: required field missing")
        return default
    return doc[key]


def _num(v, path, positive=False, nonneg=False):
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a number, got {v!r}") from None
    if not np.isfinite(x):
        raise ConfigError(f"{path}: must be finite")
    if positive and not x > 0:
        raise ConfigError(f"{path}: must be > 0, got {x!r}")
    if nonneg and x < 0:
        raise ConfigError(f"{path}: must be >= 0, got {x!r}")
    return x


def _pair(v, path):
    if isinstance(v, int):
        v = [v, v]
    if not (isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(i, int) and i >= 1 for i in v)):
        raise ConfigError(f"{path}: expected two positive integers, got {v!r}")
    return (int(v[0]), int(v[1]))


_SCALAR_KINDS = {"constant", "cosine", "gaussian"}
_VELOCITY_KINDS = {"zero", "mode", "modes", "taylor_green", "random", "coefficients"}
_FORCE_KINDS = {"zero", "constant", "taylor_green_like"}


def _check_profile(p, path, kinds):
    if not isinstance(p, Mapping) or "kind" not in p:
        raise ConfigError(f"{path}: expected an object with 'kind'")
    if p["kind"] not in kinds:
        raise ConfigError(f"{path}.kind: unknown kind {p['kind']!r} (one of {sorted(kinds)})")
    return dict(p)


def parse_config(doc: Mapping) -> SimulationConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("config: top level must be an object")
    dom = _get(doc, "domain", "", {"Lx": 1.0, "Ly": 1.0})
    rect = Rectangle(_num(_get(dom, "Lx", "domain.", 1.0), "domain.Lx", positive=True),
                     _num(_get(dom, "Ly", "domain.", 1.0), "domain.Ly", positive=True))
    vm = _pair(_get(doc, "velocity_modes", "", [8, 8]), "velocity_modes")
    sm = _pair(_get(doc, "scalar_modes", "", [12, 12]), "scalar_modes")
    quad = _get(doc, "quadrature", "", None)
    if quad is not None:
        quad = _pair(quad, "quadrature")
    try:
        model, coeffs = model_from_dict(_get(doc, "model", "", None, required=True))
    except ParameterError as exc:
        raise ConfigError(f"model: {exc}") from None
    eps = _num(_get(doc, "reg_epsilon", "", 0.0), "reg_epsilon", nonneg=True)
    k = _get(doc, "cutoff_k", "", "off")
    if k in ("off", None):
        k = None
    else:
        k = _num(k, "cutoff_k")
        if k < 1:
            raise ConfigError("cutoff_k: must be >= 1 or \"off\"")
    mu = _num(_get(doc, "elliptic_mu", "", 0.0), "elliptic_mu", nonneg=True)
    ss = _get(doc, "stickslip", "", {})
    try:
        stick = StickSlipParams(*(_num(_get(ss, key, "stickslip.", 0.0), f"stickslip.{key}", nonneg=True)
                                  for key in ("s_star", "gamma_star", "epsilon")))
    except ParameterError as exc:
        raise ConfigError(f"stickslip: {exc}") from None
    force = _check_profile(_get(doc, "body_force", "", {"kind": "zero"}), "body_force", _FORCE_KINDS)
    mode = _get(doc, "mode", "", "dynamic")
    if mode not in ("dynamic", "kinematic"):
        raise ConfigError(f"mode: expected 'dynamic' or 'kinematic', got {mode!r}")
    pv = _check_profile(_get(doc, "prescribed_velocity", "", {"kind": "zero"}),
                        "prescribed_velocity", _VELOCITY_KINDS)
    ts = _get(doc, "t_span", "", [0.0, 1.0])
    if not (isinstance(ts, (list, tuple)) and len(ts) == 2):
        raise ConfigError("t_span: expected [t0, T]")
    t_span = (_num(ts[0], "t_span[0]"), _num(ts[1], "t_span[1]"))
    if not t_span[1] > t_span[0]:
        raise ConfigError("t_span: need T > t0")
    od = _get(doc, "ode", "", {})
    try:
        ode = OdeOptions(
            rel_tol=_num(_get(od, "rel_tol", "ode.", 1e-6), "ode.rel_tol", positive=True),
            abs_tol=_num(_get(od, "abs_tol", "ode.", 1e-9), "ode.abs_tol", positive=True),
            max_step=float(_get(od, "max_step", "ode.", np.inf) or np.inf),
            safety=_num(_get(od, "safety", "ode.", 0.9), "ode.safety", positive=True),
        )
    except ValueError as exc:
        raise ConfigError(f"ode: {exc}") from None
    ini = _get(doc, "initial", "", {})
    initial = {
        "theta0": _check_profile(_get(ini, "theta0", "initial.", {"kind": "constant", "value": 1.0}),
                                 "initial.theta0", _SCALAR_KINDS),
        "b0": _check_profile(_get(ini, "b0", "initial.", {"kind": "constant", "value": 1.0}),
                             "initial.b0", _SCALAR_KINDS),
        "v0": _check_profile(_get(ini, "v0", "initial.", {"kind": "zero"}), "initial.v0", _VELOCITY_KINDS),
    }
    snaps = tuple(sorted(_num(t, "snapshots") for t in _get(doc, "snapshots", "", []) or []))
    for t in snaps:
        if not (t_span[0] <= t <= t_span[1]):
            raise ConfigError(f"snapshots: time {t!r} outside t_span")
    pg = _pair(_get(doc, "plot_grid", "", [128, 128]), "plot_grid")
    return SimulationConfig(rect, vm, sm, model, coeffs, eps, k, mu, stick, force, mode, pv,
                            t_span, ode, initial, quad, snaps, pg, doc=copy.deepcopy(dict(doc)))


def load_config(path) -> SimulationConfig:
    return parse_config(load_document(path))


def load_document(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


# --- profiles ------------------------------------------------------------------------

def scalar_profile(p: Mapping, X, Y, rect: Rectangle):
    kind = p["kind"]
    try:
        if kind == "constant":
            return np.full(np.broadcast_shapes(np.shape(X), np.shape(Y)), float(p["value"]))
        if kind == "cosine":
            i, j = p.get("mode", [1, 1])
            return float(p["mean"]) + float(p["amplitude"]) * (
                np.cos(i * np.pi * X / rect.Lx) * np.cos(j * np.pi * Y / rect.Ly))
        if kind == "gaussian":
            x0, y0 = p.get("center", [0.5 * rect.Lx, 0.5 * rect.Ly])
            w = float(p["width"])
            r2 = (X - x0) ** 2 + (Y - y0) ** 2
            return float(p["base"]) + float(p["amplitude"]) * np.exp(-0.5 * r2 / (w * w))
    except KeyError as exc:
        raise ConfigError(f"profile {kind!r}: missing field {exc.args[0]!r}") from None
    raise ConfigError(f"unknown profile kind {kind!r}")


def velocity_profile(p: Mapping, shape) -> np.ndarray:
    """Streamfunction-mode coefficients (Nx, Ny) for a velocity profile."""
    Nx, Ny = shape
    c = np.zeros(shape)
    kind = p["kind"]
    if kind == "zero":
        return c
    if kind == "mode":
        i, j = p.get("mode", [1, 1])
        if not (1 <= i <= Nx and 1 <= j <= Ny):
            raise ConfigError(f"velocity mode {(i, j)} outside basis {shape}")
        c[i - 1, j - 1] = float(p.get("amplitude", 1.0))
        return c
    if kind == "taylor_green":
        c[0, 0] = float(p.get("amplitude", 1.0))
        return c
    if kind == "random":
        # drawn on a fixed shape, then embedded, so refinement keeps the same field
        gx, gy = p.get("shape", [Nx, Ny])
        rng = np.random.default_rng(int(p.get("seed", 0)))
        decay = float(p.get("decay", 2.0))
        i = np.arange(1, gx + 1)[:, None]
        j = np.arange(1, gy + 1)[None, :]
        full = float(p.get("amplitude", 1.0)) * rng.standard_normal((gx, gy)) / (i * i + j * j) ** (decay / 2)
        mx, my = min(gx, Nx), min(gy, Ny)
        c[:mx, :my] = full[:mx, :my]
        return c
    if kind == "modes":
        for i, j, a in p["modes"]:
            if 1 <= i <= Nx and 1 <= j <= Ny:
                c[int(i) - 1, int(j) - 1] += float(a)
        return c
    if kind == "coefficients":
        vals = np.asarray(p["values"], dtype=float)
        if vals.size != Nx * Ny:
            raise ConfigError(f"expected {Nx * Ny} velocity coefficients, got {vals.size}")
        return vals.reshape(shape)
    raise ConfigError(f"unknown velocity kind {kind!r}")


def body_force_field(p: Mapping, X, Y, rect: Rectangle):
    kind = p["kind"]
    shape = np.broadcast_shapes(np.shape(X), np.shape(Y))
    if kind == "zero":
        return np.zeros(shape), np.zeros(shape)
    if kind == "constant":
        fx, fy = p.get("vector", [0.0, 0.0])
        return np.full(shape, float(fx)), np.full(shape, float(fy))
    if kind == "taylor_green_like":
        a = float(p.get("amplitude", 1.0))
        sx, cx = np.sin(np.pi * X / rect.Lx), np.cos(np.pi * X / rect.Lx)
        sy, cy = np.sin(np.pi * Y / rect.Ly), np.cos(np.pi * Y / rect.Ly)
        return a * sx * cy, -a * cx * sy
    raise ConfigError(f"unknown body force kind {kind!r}")


def dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float)
