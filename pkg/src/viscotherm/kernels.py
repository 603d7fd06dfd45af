"""Backend selection for the node kernels.

The compiled extension is used when it imports and the model is built from
families it knows; otherwise the numpy fallback runs. Setting
``VISCOTHERM_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _fallback
from ._fallback import ConvergenceError, InversionDomainError

try:  # pragma: no cover - depends on the build
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

__all__ = ["ConvergenceError", "InversionDomainError", "backend", "available",
           "set_threads", "get_threads", "invert", "use_backend"]

_state = {
    "backend": "python" if (_compiled is None or os.environ.get("VISCOTHERM_BACKEND") == "python")
    else "compiled",
    "threads": 1,
}

_PSI0_KIND = {"ideal": 0, "ideal_plus": 1}
_PSI1_KIND = {"constant": 0, "saturating": 1}


def available() -> bool:
    return _compiled is not None


def backend() -> str:
    return _state["backend"]


def use_backend(name: str) -> None:
    if name not in ("python", "compiled"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _compiled is None:
        raise RuntimeError("compiled kernels are not built")
    _state["backend"] = name


def set_threads(n: int | None) -> None:
    if n is None or n <= 0:
        n = os.cpu_count() or 1
    _state["threads"] = int(n)


def get_threads() -> int:
    return _state["threads"]


def _pack(reg):
    """Parameter arrays for the compiled kernel, or None if unsupported."""
    cached = getattr(reg, "_kernel_pack", None)
    if cached is not None:
        return cached or None
    p0s, p1s = reg.base.psi0, reg.base.psi1
    out = False
    if p0s.name in _PSI0_KIND and p1s.name in _PSI1_KIND:
        pp = p0s.params
        # the reference temperature does not enter energies
        p0 = np.array([pp["c_V"], pp.get("c_a", 0.0), pp.get("theta_c", 1.0)])
        qq = p1s.params
        if p1s.name == "constant":
            p1 = np.array([qq["value"], 0.0, 1.0])
        else:
            p1 = np.array([qq["g0"], qq["g1"], qq["s_c"]])
        rg = np.zeros(8)
        if reg.regularized:
            rg[0] = reg.epsilon
            rg[1] = reg.blend.sigma
            rg[2:] = reg.blend.coef
        out = (_PSI0_KIND[p0s.name], p0, _PSI1_KIND[p1s.name], p1, rg)
    object.__setattr__(reg, "_kernel_pack", out)
    return out or None


def invert(reg, e, p2):
    """Temperature, regularized heat capacity and e1_eps at each node."""
    pack = _pack(reg) if _state["backend"] == "compiled" else None
    if pack is None:
        return _fallback.invert(reg, e, p2)
    e, p2 = np.broadcast_arrays(np.asarray(e, dtype=float), np.asarray(p2, dtype=float))
    shape = e.shape
    k0, p0, k1, p1, rg = pack
    th, cv, e1, st = _compiled.invert(k0, p0, k1, p1, rg, np.ascontiguousarray(e.ravel()),
                                      np.ascontiguousarray(p2.ravel()), _state["threads"])
    if st.any():
        i = int(np.flatnonzero(st)[0])
        code = int(st[i])
        ef, pf = e.ravel()[i], p2.ravel()[i]
        if code in (2, 3):
            raise InversionDomainError(f"no temperature for e = {ef!r}, psi2 = {pf!r} (code {code})")
        raise ConvergenceError(f"temperature inversion failed for e = {ef!r}, psi2 = {pf!r}")
    return th.reshape(shape), cv.reshape(shape), e1.reshape(shape)
