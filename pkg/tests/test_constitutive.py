import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viscotherm import constitutive as cst
from viscotherm.functions import (
    DomainError,
    ParameterError,
    make_coefficient,
    make_psi0,
    make_psi1,
    make_psi2,
    make_reaction,
)

from helpers import random_model


def default_model(c_V=1.0, psi1=1.0):
    return cst.FreeEnergyModel(make_psi0({"name": "ideal", "c_V": c_V}),
                               make_psi1({"name": "constant", "value": psi1}),
                               make_psi2({"name": "log_stretch"}))


def unit_coeffs(h=None, **kw):
    one = make_coefficient({"name": "constant", "value": 1.0})
    base = dict(nu=one, kappa=one, alpha=one, h=h or make_reaction({"name": "oldroyd_b", "ratio": 1.0}),
                C1=1.0, C2=1.0, b_min=0.5, b_max=2.0)
    base.update(kw)
    return cst.MaterialCoefficients(**base)


# --- function families ------------------------------------------------------------------

FAMILIES = [
    make_psi0({"name": "ideal", "c_V": 2.0, "theta_ref": 1.5}),
    make_psi0({"name": "ideal_plus", "c_V": 1.0, "c_a": 0.7, "theta_c": 2.0}),
    make_psi1({"name": "saturating", "g0": 1.0, "g1": 0.5, "s_c": 0.3}),
    make_psi2({"name": "log_stretch"}),
    make_psi2({"name": "quadratic"}),
    make_psi2({"name": "neg_log"}),
]


@pytest.mark.parametrize("f", FAMILIES, ids=lambda f: f.name)
def test_derivatives_match_central_differences(f):
    # step 1e-5 max(1, |s|) away from the singular end, relative step near it
    s = np.concatenate([np.logspace(-1, 2, 41), np.logspace(-4, -1, 20)])
    h = np.where(s >= 0.1, 1e-5 * np.maximum(1.0, np.abs(s)), 1e-5 * s)
    fd1 = (f(s + h) - f(s - h)) / (2 * h)
    fd2 = (f.d1(s + h) - f.d1(s - h)) / (2 * h)
    scale1 = np.maximum(np.abs(f.d1(s)), 1e-3)
    scale2 = np.maximum(np.abs(f.d2(s)), 1e-3)
    assert np.max(np.abs(fd1 - f.d1(s)) / scale1) <= 1e-6
    assert np.max(np.abs(fd2 - f.d2(s)) / scale2) <= 1e-6


@pytest.mark.parametrize("f", FAMILIES, ids=lambda f: f.name)
def test_closed_form_energy_is_f_minus_s_fprime(f):
    s = np.logspace(-3, 3, 41)
    direct = f(s) - s * f.d1(s)
    assert np.allclose(f.energy(s), direct, rtol=1e-12, atol=1e-12)


def test_unknown_family_and_bad_parameters():
    with pytest.raises(ParameterError, match="unknown family"):
        make_psi0({"name": "nope"})
    with pytest.raises(ParameterError, match="missing 'name'"):
        make_psi1({"value": 1.0})
    with pytest.raises(ParameterError):
        make_psi0({"name": "ideal", "c_V": -1.0})
    with pytest.raises(ParameterError):
        make_reaction({"name": "giesekus", "ratio": 1.0, "a_g": 1.5})


# --- thermodynamic quantities ----------------------------------------------------------------

def test_psi_examples():
    m = default_model()
    assert cst.psi(m, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert cst.psi(m, 1.0, 2.0) == pytest.approx(1.0 + (1.0 - np.log(2.0)), abs=1e-15)
    th = np.logspace(-2, 2, 9)
    assert np.array_equal(cst.psi(m, th, 1.0), m.psi0(th))


def test_eta_examples():
    m = default_model()
    assert cst.eta(m, 1.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert cst.eta(m, np.e, 1.0) == pytest.approx(1.0, abs=1e-15)
    th = np.logspace(-2, 2, 9)
    assert np.array_equal(cst.eta(m, th, 0.5), cst.eta(m, th, 2.0))


def test_internal_energy_examples():
    assert cst.e0(default_model(c_V=2.0), 3.0) == pytest.approx(6.0, rel=1e-15)
    m = default_model(c_V=2.0, psi1=3.0)
    e = cst.internal_energy(m, 1.0, 2.0)
    assert e == pytest.approx(2.0 + 3.0 * (1.0 - np.log(2.0)), rel=1e-15)
    assert round(float(e), 4) == 2.9206
    th = np.logspace(-2, 2, 9)
    assert np.array_equal(cst.internal_energy(m, th, 1.0), cst.e0(m, th))


def test_heat_capacity_examples():
    m = default_model()
    th, b = np.meshgrid(np.logspace(-3, 3, 11), np.linspace(0.5, 2, 5))
    assert np.allclose(cst.heat_capacity(m, th, b), 1.0, rtol=1e-14)
    m2, _ = random_model(3)
    th = np.logspace(-3, 3, 11)
    assert np.allclose(cst.heat_capacity(m2, th, 1.0), -th * m2.psi0.d2(th), rtol=1e-14)


def test_domain_errors():
    m = default_model()
    for bad in ((0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0)):
        with pytest.raises(DomainError):
            cst.psi(m, *bad)
        with pytest.raises(DomainError):
            cst.eta(m, *bad)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), th=st.floats(1e-3, 1e3), b=st.floats(0.5, 2.0))
def test_gibbs_relations_property(seed, th, b):
    m, _ = random_model(seed)
    h = 1e-5 * th
    fd = -(cst.psi(m, th + h, b) - cst.psi(m, th - h, b)) / (2 * h)
    eta = cst.eta(m, th, b)
    assert abs(fd - eta) <= 1e-6 * max(abs(eta), 1e-2)
    e = cst.internal_energy(m, th, b)
    assert e == pytest.approx(cst.psi(m, th, b) + th * eta, rel=1e-12, abs=1e-12)
    assert cst.heat_capacity(m, th, b) > 0


@pytest.mark.parametrize("seed", range(4))
def test_monotonicity_and_linear_bounds(seed):
    m, co = random_model(seed)
    s = np.logspace(-4, 4, 400)
    e0 = cst.e0(m, s)
    e1 = cst.e1(m, s)
    assert np.all(np.diff(e0) > 0)
    assert np.all(np.diff(e1) >= -1e-14)
    c1, c2 = cst.estimate_constants(m)[:2]
    assert np.all(c1 * s <= e0 * (1 + 1e-12)) and np.all(e0 <= c2 * s * (1 + 1e-12))
    e10 = float(m.psi1.energy(0.0))
    assert np.all(e1 >= e10 - 1e-14) and np.all(e1 <= e10 + c2)
    assert np.all(m.psi2(np.logspace(-3, 3, 200)) >= 0)


# --- validation --------------------------------------------------------------------------------

def test_default_model_validates():
    rep = cst.validate_assumptions(default_model(), unit_coeffs())
    assert rep.passed, rep.failures()
    ids = {r.assumption for r in rep.rows}
    assert ids == {"A1", "A2", "A3", "A4", "A5"}
    assert rep.as_dict()["passed"] is True


def test_neg_log_psi2_fails_a2():
    m = cst.FreeEnergyModel(make_psi0({"name": "ideal", "c_V": 1.0}),
                            make_psi1({"name": "constant", "value": 1.0}),
                            make_psi2({"name": "neg_log"}))
    rep = cst.validate_assumptions(m, unit_coeffs())
    bad = [r for r in rep.failures() if r.assumption == "A2"]
    assert bad and any(r.value == pytest.approx(-1.0) for r in bad)


def test_wrong_sign_reaction_fails_a5():
    h = make_reaction({"name": "linear", "slope": -1.0})
    rep = cst.validate_assumptions(default_model(), unit_coeffs(h=h))
    bad = [r for r in rep.failures() if r.assumption == "A5"]
    assert bad
    assert min(r.value for r in bad) == pytest.approx(-1.0)


def test_report_passes_iff_every_row_passes():
    rep = cst.ValidationReport()
    rep.add("A1", "x", {}, True, 0.0)
    assert rep.passed
    rep.add("A2", "y", {}, False, 1.0)
    assert not rep.passed and len(rep.failures()) == 1


def test_coefficient_record_checks():
    with pytest.raises(ParameterError):
        unit_coeffs(b_min=1.2)
    with pytest.raises(ParameterError):
        unit_coeffs(C1=2.0, C2=1.0)


# --- entropy bound ------------------------------------------------------------------------------

def test_entropy_upper_bound_example():
    lhs, rhs = cst.entropy_upper_bound(default_model(), 1.0, 1.0, C1=1.0, C2=1.0)
    assert lhs == pytest.approx(0.0, abs=1e-15)
    assert rhs == pytest.approx(4.0)


@pytest.mark.parametrize("seed", range(3))
def test_entropy_upper_bound_sampled(seed):
    m, co = random_model(seed)
    s, b = np.meshgrid(np.logspace(-4, 4, 200), np.linspace(co.b_min, co.b_max, 16))
    lhs, rhs = cst.entropy_upper_bound(m, s, b)
    assert np.all(lhs <= rhs)


# --- presets -------------------------------------------------------------------------------------

def test_oldroyd_b_preset():
    m, co = cst.preset_oldroyd_b(c_V=1.0, mu_elastic=1.0, nu1=1.0, mu_tilde=0.5)
    assert float(co.h(1.0, 1.0)) == 0.0
    assert float(co.h(1.0, 2.0)) == pytest.approx(1.0, rel=1e-15)
    assert float(m.psi1(0.3)) == pytest.approx(1.5)
    assert float(co.alpha(1.0, 1.3)) == pytest.approx(0.5)
    assert cst.validate_assumptions(m, co).passed
    with pytest.raises(ParameterError):
        cst.preset_oldroyd_b(nu1=0.0)


def test_giesekus_preset():
    b = np.linspace(0.5, 2.0, 31)
    _, ob = cst.preset_oldroyd_b(mu_elastic=0.7, nu1=1.3)
    _, g0 = cst.preset_giesekus(mu_elastic=0.7, nu1=1.3, a_g=0.0)
    assert np.allclose(g0.h(1.0, b), ob.h(1.0, b), rtol=1e-15, atol=1e-15)
    for a in (0.0, 0.3, 1.0):
        _, g = cst.preset_giesekus(a_g=a)
        assert float(g.h(2.0, 1.0)) == 0.0
    _, g1 = cst.preset_giesekus(mu_elastic=1.0, nu1=1.0, a_g=1.0)
    assert float(g1.h(1.0, 2.0)) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(ParameterError):
        cst.preset_giesekus(a_g=1.5)


def test_model_from_dict_routes():
    m, co = cst.model_from_dict({"preset": "giesekus", "params": {"a_g": 0.5}})
    assert co.h.name == "giesekus"
    m2, co2 = cst.model_from_dict({
        "functions": {"psi0": {"name": "ideal", "c_V": 1.0}, "psi1": {"name": "constant", "value": 1.0},
                      "psi2": {"name": "quadratic"}},
        "coefficients": {"nu": {"name": "constant", "value": 1.0}, "kappa": {"name": "constant", "value": 1.0},
                         "alpha": {"name": "constant", "value": 1.0}, "h": {"name": "zero"}},
        "C1": 1.0, "C2": 1.0, "b_min": 0.5, "b_max": 2.0})
    assert m2.psi2.name == "quadratic"
    with pytest.raises(ParameterError, match="unknown preset"):
        cst.model_from_dict({"preset": "maxwell"})
    with pytest.raises(ParameterError, match="missing field"):
        cst.model_from_dict({"functions": {}})
