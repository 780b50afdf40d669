"""Tier-2 flows: equivalent forms, fixed points, linearisation, dissipation,
the stability guard and agreement of the two schemes on vortex positions."""

from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nematic2d import ComplexField, Grid2D, NumericalInstabilityError, make_params
from nematic2d.closure import (
    ClosureConfig,
    closure_coefficient,
    closure_rhs,
    gradient_form_rhs,
    ldg_rhs,
    pin_order_parameter,
    run_closure,
    stable_dt,
    step_closure,
)
from nematic2d.experiments import compare_closure_schemes
from nematic2d.grid import (
    apply_elastic_operator,
    equilibrium_state,
    multi_vortex_field,
    reduced_energy_derivative,
)
from nematic2d.kinetic import KineticConfig, hierarchy_rhs
from nematic2d.specfun import lambda_of

P6 = make_params(6.0, 0.1)


def smooth(grid, amp, a, b, c):
    z = grid.z
    return amp * (1 + 0.25 * np.sin(a * z.real + b * z.imag)) * np.exp(1j * (c * z.real * z.imag + np.cos(b * z.real)))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.75), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_closure_equals_gradient_form(amp, a, b, c):
    g = Grid2D.square(16, 1.0)
    n = ComplexField(g, smooth(g, amp, a, b, c))
    assert np.max(np.abs(closure_rhs(n, P6).values - gradient_form_rhs(n, P6).values)) <= 1e-8


def test_closure_matches_first_hierarchy_row():
    # the closed equation is row k = 1 of the hierarchy with n^(2) on the exponential family
    g = Grid2D.square(12, 1.0)
    n = ComplexField(g, smooth(g, 0.4, 1.0, 2.0, 0.5))
    assert np.abs(n.values).max() <= 0.5
    st_ = equilibrium_state(n, 12)
    row = hierarchy_rhs(st_, KineticConfig(P6, g, k_max=12, pin_boundary=False))[1]
    got = closure_rhs(n, P6).values
    assert np.linalg.norm(got - row) <= 0.05 * np.linalg.norm(row)
    assert np.allclose(got, row, atol=1e-12)


def test_uniform_equilibrium_is_fixed():
    g = Grid2D.square(8, 1.0)
    n = ComplexField(g, np.full(g.shape, P6.r_eq * np.exp(-0.4j)))
    assert np.max(np.abs(closure_rhs(n, P6).values)) <= 1e-10
    assert np.max(np.abs(ldg_rhs(n, P6).values)) <= 1e-10


def test_conjugation_symmetry():
    g = Grid2D.square(10, 1.0)
    n = ComplexField(g, smooth(g, 0.6, 1.0, -2.0, 1.5))
    nc = ComplexField(g, np.conj(n.values))
    assert np.allclose(closure_rhs(nc, P6).values, np.conj(closure_rhs(n, P6).values), atol=1e-14)


def test_small_amplitude_limits():
    g = Grid2D.square(6, 1.0)
    for r in (1e-4, 1e-6):
        n = ComplexField(g, np.full(g.shape, r * np.exp(0.3j)))
        assert np.max(np.abs(closure_coefficient(n.values))) <= r * r
        ln = apply_elastic_operator(n, P6).values
        assert np.allclose(closure_rhs(n, P6).values, 2 * ln - 4 * n.values, rtol=r)
    n = ComplexField(g, np.full(g.shape, 1e-6 + 0j))
    assert closure_rhs(n, P6).values[2, 2].real / 1e-6 == pytest.approx(2 * 6 - 4, rel=1e-6)
    assert ldg_rhs(n, P6).values[2, 2].real / 1e-6 == pytest.approx(6 / 2 - 1, rel=1e-6)


def test_transition_limit_recovers_four_times_ldg():
    p2 = make_params(2.0, 0.1)
    g = Grid2D.square(12, 1.0)
    gaps = []
    for amp in (1e-2, 1e-4):
        n = ComplexField(g, smooth(g, amp, 1.0, 1.0, 1.0))
        lhs = closure_rhs(n, p2).values
        gaps.append(np.max(np.abs(lhs - 4 * ldg_rhs(n, p2).values)) / np.max(np.abs(lhs)))
        assert np.allclose(ldg_rhs(n, p2).values, -reduced_energy_derivative(n, p2).values)
    assert gaps[1] < 1e-3 * gaps[0] and gaps[1] <= 1e-7


def test_ldg_grows_amplitude_below_r_eq():
    g = Grid2D.square(5, 1.0)
    c = 0.5
    n = ComplexField(g, np.full(g.shape, c + 0j))
    want = -(lambda_of(c) - 6.0 * c) / 2
    assert want > 0
    assert np.allclose(ldg_rhs(n, P6).values, want)


@pytest.mark.parametrize("scheme", ["maxent", "ldg"])
@pytest.mark.parametrize("method", ["euler", "if"])
def test_reduced_energy_decreases(scheme, method):
    g = Grid2D.square(16, 1.0, boundary_psi=lambda z: 2 * np.angle(z + 2))
    n = pin_order_parameter(ComplexField(g, smooth(g, 0.5, 2.0, -1.0, 2.0)), P6)
    dt = stable_dt(g, P6, scheme)
    tr = run_closure(n, ClosureConfig(P6, g, dt, 40 * dt, scheme, method), output_every=1)
    e = tr.series("E_reduced")
    assert np.all(np.diff(e) <= dt ** 2) and e[-1] < e[0]
    assert np.allclose(tr.states[-1].values[g.boundary_mask], n.values[g.boundary_mask])


def test_stability_guard():
    g = Grid2D.square(16, 1.0)
    n = ComplexField(g, smooth(g, 0.5, 1.0, 1.0, 1.0))
    assert stable_dt(g, P6, "maxent") == pytest.approx(g.h ** 2 / (16 * 0.01))
    assert stable_dt(g, P6, "ldg") == pytest.approx(g.h ** 2 / (8 * 0.01))
    assert stable_dt(g, P6, "ldg", rescaled_time=True) == pytest.approx(g.h ** 2 / 8)
    with pytest.raises(NumericalInstabilityError):
        step_closure(n, P6, 1.01 * stable_dt(g, P6, "maxent"))
    with pytest.raises(ValueError):
        step_closure(n, P6, 1e-6, scheme="other")


def test_rescaled_clock_is_a_relabelling():
    g = Grid2D.square(10, 1.0)
    n = ComplexField(g, smooth(g, 0.5, 1.0, 1.0, 1.0))
    dt = 0.5 * stable_dt(g, P6, "maxent")
    a = step_closure(n, P6, dt)
    b = step_closure(n, P6, dt * P6.epsilon ** 2, rescaled_time=True)
    assert np.allclose(a.values, b.values, atol=1e-14)


def test_single_vortex_relaxes_to_same_position():
    p = make_params(6.0, 0.15)
    g = Grid2D.square(20, 1.0, boundary_psi=lambda z: np.angle(z))
    z0 = complex(-0.5 + 11.5 * g.h, -0.5 + 10.5 * g.h)
    n = multi_vortex_field(SimpleNamespace(positions=[z0], degrees=[1]), None, p, g, core=p.epsilon)
    runs = {}
    for scheme, t_end in (("maxent", 0.2), ("ldg", 0.8)):
        dt = stable_dt(g, p, scheme, rescaled_time=True)
        runs[scheme] = run_closure(n, ClosureConfig(p, g, dt, t_end, scheme, rescaled_time=True))
    assert compare_closure_schemes(runs["maxent"], runs["ldg"]) <= g.h
    (zm, dm), = runs["maxent"].diagnostics["vortices"][-1]
    assert dm == 1 and abs(zm) < abs(z0)
