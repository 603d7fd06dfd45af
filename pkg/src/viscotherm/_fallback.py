"""Pure numpy implementation of the node kernels.

Works for any model built from ScalarFunction objects. The compiled module
implements the same algorithm for the built-in families.
"""
from __future__ import annotations

import numpy as np

from .functions import DomainError

MAX_ITER = 200
MAX_DOUBLINGS = 2100


class ConvergenceError(ArithmeticError):
    """Temperature inversion did not reach its residual tolerance."""


class InversionDomainError(DomainError):
    """No temperature corresponds to the requested energy."""


def _solve(reg, E, P, elo):
    """Safeguarded Newton for energy_p2(theta, P) = E with E > elo = energy at 0+."""
    f = lambda th, p, e: reg.energy_p2(th, p) - e
    hi = np.maximum(np.abs(E), 1.0)
    for _ in range(MAX_DOUBLINGS):
        with np.errstate(all="ignore"):
            m = ~(f(hi, P, E) > 0)
        if not m.any():
            break
        hi[m] *= 2.0
    else:
        raise ConvergenceError("could not bracket the temperature")
    lo = np.zeros_like(E)
    with np.errstate(all="ignore"):
        ehi = reg.energy_p2(hi, P)
    th = hi * (E - elo) / (ehi - elo)
    th = np.where((th > lo) & (th < hi), th, 0.5 * hi)
    out = th.copy()
    idx = np.arange(E.size)
    for _ in range(MAX_ITER):
        val = f(th, P, E)
        lo = np.where(val < 0, th, lo)
        hi = np.where(val > 0, th, hi)
        d = reg.heat_capacity_p2(th, P)
        with np.errstate(all="ignore"):
            tn = th - val / d
        bad = ~((tn > lo) & (tn < hi))
        tn = np.where(bad, 0.5 * (lo + hi), tn)
        done = (val == 0) | (np.abs(tn - th) <= 4.0 * np.spacing(tn))
        tn = np.where(val == 0, th, tn)
        out[idx[done]] = tn[done]
        keep = ~done
        if not keep.any():
            return out
        idx, th, lo, hi, P, E = idx[keep], tn[keep], lo[keep], hi[keep], P[keep], E[keep]
    raise ConvergenceError(f"temperature inversion did not converge in {MAX_ITER} iterations "
                           f"for e = {E[0]!r}")


def invert(reg, e, p2):
    e, p2 = np.broadcast_arrays(np.asarray(e, dtype=float), np.asarray(p2, dtype=float))
    shape = e.shape
    e = e.ravel()
    p2 = p2.ravel()
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(p2))):
        i = int(np.flatnonzero(~(np.isfinite(e) & np.isfinite(p2)))[0])
        raise InversionDomainError(f"non-finite input at flat index {i}")
    theta = np.empty_like(e)
    cv = np.empty_like(e)
    e1 = np.zeros_like(e)
    if reg.regularized:
        act = e > 0
        theta[~act] = e[~act]
        cv[~act] = 1.0
        elo = np.zeros(int(act.sum()))
    else:
        floor = float(reg.base.psi1.energy(0.0)) * p2
        act = np.ones(e.shape, dtype=bool)
        if np.any(e <= floor):
            i = int(np.flatnonzero(e <= floor)[0])
            raise InversionDomainError(
                f"energy {e[i]!r} is not above the zero-temperature limit {floor[i]!r}")
        elo = floor
    if act.any():
        E, P = e[act], p2[act]
        th = _solve(reg, E, P, elo)
        res = np.abs(reg.energy_p2(th, P) - E)
        tol = 1e-12 * np.maximum(1.0, np.abs(E))
        if np.any(res > tol):
            i = int(np.argmax(res / tol))
            raise ConvergenceError(f"inversion residual {res[i]:.3e} exceeds {tol[i]:.3e} at e = {E[i]!r}")
        theta[act] = th
        cv[act] = reg.heat_capacity_p2(th, P)
        e1[act] = reg.psi1_eps.energy(th)
    return theta.reshape(shape), cv.reshape(shape), e1.reshape(shape)
