import numpy as np
import pytest
from scipy.integrate import solve_ivp

from viscotherm.functions import DomainError
from viscotherm.integrator import OdeOptions, StepSizeUnderflow, dopri5


def test_tableau_consistency():
    from viscotherm.integrator import A, B, C, E
    for s in range(1, 7):
        assert sum(A[s]) == pytest.approx(C[s], abs=1e-15)
    assert B.sum() == pytest.approx(1.0, abs=1e-15)
    assert E.sum() == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(A[6], B[:6])


def test_exponential_decay():
    ts, ys, st = dopri5(lambda t, y: -2.0 * y, (0.0, 3.0), [1.0, -4.0],
                        t_eval=[0.0, 1.0, 2.5, 3.0], opts=OdeOptions(1e-10, 1e-12))
    assert np.array_equal(ts, [0.0, 1.0, 2.5, 3.0])
    ref = np.exp(-2.0 * ts)[:, None] * np.array([1.0, -4.0])
    assert np.max(np.abs(ys - ref)) <= 1e-10
    assert st["accepted"] > 0 and st["nfev"] >= 6 * st["accepted"]


def test_oscillator_matches_reference_solver():
    def f(t, y):
        return np.array([y[1], -y[0] - 0.1 * y[1] + np.sin(t)])
    te = np.linspace(0, 10, 11)
    _, ys, _ = dopri5(f, (0.0, 10.0), [1.0, 0.0], t_eval=te, opts=OdeOptions(1e-11, 1e-13))
    ref = solve_ivp(f, (0, 10), [1.0, 0.0], method="DOP853", t_eval=te, rtol=1e-12, atol=1e-14).y.T
    assert np.max(np.abs(ys - ref)) <= 1e-9


def test_tightening_the_tolerance_reduces_the_error():
    exact = np.cos(5.0)
    errs = []
    for tol in (1e-5, 1e-7, 1e-9):
        _, ys, _ = dopri5(lambda t, y: np.array([y[1], -y[0]]), (0.0, 5.0), [1.0, 0.0],
                          opts=OdeOptions(tol, tol * 1e-2))
        errs.append(abs(ys[-1, 0] - exact))
    assert errs[0] > 5 * errs[1] > 25 * errs[2]


def test_observer_sees_every_accepted_step():
    seen = []
    _, _, st = dopri5(lambda t, y: -y, (0.0, 1.0), [1.0], t_eval=[0.3, 1.0],
                      on_step=lambda t, y: seen.append(t))
    assert len(seen) == st["accepted"]
    assert np.all(np.diff(seen) > 0)
    assert 0.3 in seen and seen[-1] == 1.0


def test_domain_error_in_a_trial_stage_rejects_the_step():
    # the exact solution stays positive; large trial steps would overshoot below zero
    def f(t, y):
        if np.any(y <= 0):
            raise DomainError("negative")
        return -50.0 * y
    _, ys, st = dopri5(f, (0.0, 1.0), [1.0], opts=OdeOptions(1e-3, 1e-8, first_step=0.5))
    assert st["rejected"] >= 1
    assert ys[-1, 0] == pytest.approx(np.exp(-50.0), rel=1e-2)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        OdeOptions(rel_tol=0.0)
    with pytest.raises(ValueError):
        OdeOptions(safety=1.5)
    with pytest.raises(ValueError):
        dopri5(lambda t, y: y, (1.0, 0.0), [1.0])
    with pytest.raises(ValueError):
        dopri5(lambda t, y: y, (0.0, 1.0), [1.0], t_eval=[2.0])


def test_step_budget_exhaustion():
    with pytest.raises(StepSizeUnderflow):
        dopri5(lambda t, y: -1e6 * y, (0.0, 1.0), [1.0], opts=OdeOptions(1e-10, 1e-12, max_steps=50))


def test_deterministic():
    f = lambda t, y: np.array([np.sin(t * y[1]), -y[0] * y[1]])
    a = dopri5(f, (0.0, 4.0), [0.3, 1.2], t_eval=np.linspace(0, 4, 9))
    b = dopri5(f, (0.0, 4.0), [0.3, 1.2], t_eval=np.linspace(0, 4, 9))
    assert np.array_equal(a[1], b[1]) and a[2] == b[2]
