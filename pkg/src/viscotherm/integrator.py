"""Adaptive Dormand-Prince 5(4) integrator with first-same-as-last stages.

Written for this package so that step acceptance, output-time landing and
observer hooks are explicit and deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .functions import DomainError

__all__ = ["StepSizeUnderflow", "OdeOptions", "dopri5"]


class StepSizeUnderflow(ArithmeticError):
    """Step size fell below the representable resolution of t."""


@dataclass(frozen=True)
class OdeOptions:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    max_step: float = np.inf
    safety: float = 0.9
    first_step: float | None = None
    max_steps: int = 1_000_000

    def __post_init__(self):
        for k in ("rel_tol", "abs_tol", "max_step", "safety"):
            v = getattr(self, k)
            if not v > 0:
                raise ValueError(f"ODE option {k} must be > 0, got {v!r}")
        if self.safety >= 1:
            raise ValueError("safety factor must be < 1")


# Butcher tableau
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between the 5th and embedded 4th order weights
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


def _initial_step(f, t0, y0, f0, opts, direction_span):
    scale = opts.abs_tol + opts.rel_tol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, direction_span, opts.max_step)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span, opts.max_step)


def dopri5(f: Callable, t_span, y0, t_eval=None, opts: OdeOptions | None = None,
           on_step: Callable | None = None):
    """Integrate y' = f(t, y) over t_span.

    ``t_eval`` lists output times; the integrator lands on each exactly.
    ``on_step(t, y)`` is called after every accepted step. Returns
    ``(ts, ys, stats)`` at the output times (``t_span`` ends if none given).
    """
    opts = opts or OdeOptions()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    if t_eval is None:
        t_eval = [t0, t1]
    t_eval = np.asarray(sorted(set(float(t) for t in t_eval)))
    if t_eval[0] < t0 or t_eval[-1] > t1:
        raise ValueError("output times must lie inside t_span")
    y = np.array(y0, dtype=float)
    t = t0
    fy = f(t, y)
    ts, ys = [], []
    k = 0
    while k < len(t_eval) and t_eval[k] <= t0:
        ts.append(t0)
        ys.append(y.copy())
        k += 1
    h = opts.first_step or _initial_step(f, t, y, fy, opts, t1 - t0)
    stats = {"accepted": 0, "rejected": 0, "nfev": 2}
    K = np.empty((7, y.size))
    steps = 0
    while k < len(t_eval):
        target = t_eval[k]
        h = min(h, opts.max_step)
        h_free = h
        land = False
        if t + h >= target or (target - (t + h)) < 1e-12 * max(1.0, abs(target)):
            h = target - t
            land = True
        if h <= 16 * np.spacing(max(abs(t), 1.0)):
            raise StepSizeUnderflow(
                f"step size {h:.3e} underflows at t = {t!r}; the system is probably stiff")
        K[0] = fy
        try:
            for s in range(1, 7):
                ys_ = y + h * (np.asarray(A[s]) @ K[:s])
                K[s] = f(t + C[s] * h, ys_)
            stats["nfev"] += 6
            ynew = ys_  # stage 7 is evaluated at the 5th order solution
            err = h * (E @ K)
            scale = opts.abs_tol + opts.rel_tol * np.maximum(np.abs(y), np.abs(ynew))
            en = float(np.sqrt(np.mean((err / scale) ** 2)))
        except DomainError:
            # a trial stage left the domain of the right-hand side; shrink
            en = np.inf
        if not np.isfinite(en):
            en = np.inf
        if en <= 1.0:
            t = target if land else t + h
            y = ynew
            fy = K[6].copy()
            stats["accepted"] += 1
            if on_step is not None:
                on_step(t, y)
            if land:
                ts.append(t)
                ys.append(y.copy())
                k += 1
            fac = 5.0 if en == 0 else min(5.0, opts.safety * en ** (-0.2))
            h = h * fac if not land else max(h * fac, h_free)
        else:
            stats["rejected"] += 1
            fac = 0.2 if not np.isfinite(en) else max(0.2, opts.safety * en ** (-0.2))
            h = h * fac
        steps += 1
        if steps > opts.max_steps:
            raise StepSizeUnderflow(f"exceeded {opts.max_steps} steps at t = {t!r}")
    return np.asarray(ts), np.asarray(ys), stats
