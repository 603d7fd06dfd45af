import subprocess
import sys

import numpy as np
import pytest

from viscotherm import kernels
from viscotherm.constitutive import FreeEnergyModel
from viscotherm.functions import ScalarFunction, make_psi0, make_psi1, make_psi2
from viscotherm.regularization import RegularizedModel

from helpers import random_model

needs_compiled = pytest.mark.skipif(not kernels.available(), reason="compiled kernels not built")


@pytest.fixture(autouse=True)
def restore():
    old, threads = kernels.backend(), kernels.get_threads()
    yield
    kernels.use_backend(old)
    kernels.set_threads(threads)


def constant_psi1_model():
    return FreeEnergyModel(make_psi0({"name": "ideal", "c_V": 1.0}),
                           make_psi1({"name": "constant", "value": 1.0}),
                           make_psi2({"name": "log_stretch"}))


def test_backend_selection():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")
    kernels.use_backend("python")
    assert kernels.backend() == "python"
    kernels.set_threads(0)
    assert kernels.get_threads() >= 1
    kernels.set_threads(3)
    assert kernels.get_threads() == 3


def test_environment_forces_the_fallback():
    code = "from viscotherm import kernels; print(kernels.backend())"
    out = subprocess.run([sys.executable, "-c", code], env={"VISCOTHERM_BACKEND": "python", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("eps", [0.0, 1e-2, 1e-1])
def test_compiled_matches_fallback(seed, eps):
    reg = RegularizedModel(random_model(seed)[0], eps)
    rng = np.random.default_rng(seed)
    th = 10.0 ** rng.uniform(-3, 3, 4000)
    if eps > 0:
        th = np.concatenate([th, rng.uniform(-1.0, eps, 500)])
    p2 = reg.base.psi2(rng.uniform(0.5, 2.0, th.size))
    e = reg.energy_p2(np.where(th > 0, th, 1.0), p2)
    e = np.where(th > 0, e, th)
    kernels.use_backend("python")
    ref = kernels.invert(reg, e, p2)
    kernels.use_backend("compiled")
    got = kernels.invert(reg, e, p2)
    for a, b in zip(ref, got):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-15)
    pos = th > 0
    assert np.max(np.abs(got[0][pos] - th[pos]) / th[pos]) <= 1e-12


@needs_compiled
def test_thread_count_does_not_change_results():
    reg = RegularizedModel(random_model(1)[0], 1e-2)
    rng = np.random.default_rng(3)
    e = 10.0 ** rng.uniform(-3, 3, 20000)
    p2 = rng.uniform(0.0, 0.5, 20000)
    kernels.use_backend("compiled")
    outs = []
    for n in (1, 2, 8):
        kernels.set_threads(n)
        outs.append(kernels.invert(reg, e, p2))
    for o in outs[1:]:
        for a, b in zip(outs[0], o):
            assert np.array_equal(a, b)


@needs_compiled
def test_shape_is_preserved():
    reg = RegularizedModel(random_model(0)[0], 0.0)
    e = np.full((3, 5), 2.0)
    kernels.use_backend("compiled")
    th, cv, e1 = kernels.invert(reg, e, 0.1)
    assert th.shape == cv.shape == e1.shape == (3, 5)


@pytest.mark.parametrize("name", ["python", "compiled"])
def test_domain_error_below_the_floor(name):
    if name == "compiled" and not kernels.available():
        pytest.skip("compiled kernels not built")
    kernels.use_backend(name)
    reg = RegularizedModel(constant_psi1_model(), 0.0)
    # psi1 = 1 so the zero-temperature energy is psi2
    with pytest.raises(kernels.InversionDomainError):
        kernels.invert(reg, np.array([0.05]), np.array([0.1]))


def test_custom_functions_fall_back():
    # psi1(s) = 1 + s / (1 + s), written by hand so the compiled kernel cannot know it
    psi1 = ScalarFunction(lambda s: 1.0 + np.asarray(s) / (1.0 + np.asarray(s)),
                          lambda s: 1.0 / (1.0 + np.asarray(s)) ** 2,
                          lambda s: -2.0 / (1.0 + np.asarray(s)) ** 3, lower_closed=True)
    m = FreeEnergyModel(make_psi0({"name": "ideal", "c_V": 1.0}), psi1, make_psi2({"name": "quadratic"}))
    reg = RegularizedModel(m, 0.0)
    assert kernels._pack(reg) is None
    if kernels.available():
        kernels.use_backend("compiled")
    th = np.array([0.3, 2.0, 40.0])
    p2 = np.array([0.0, 0.2, 1.0])
    back, _, _ = kernels.invert(reg, reg.energy_p2(th, p2), p2)
    assert np.allclose(back, th, rtol=1e-12)
