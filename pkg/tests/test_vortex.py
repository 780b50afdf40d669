"""Vortex potential and dynamics, harmonic phase, heat flow and the mobility integral."""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from nematic2d import DomainError, Grid2D, make_params
from nematic2d.grid import winding_phase
from nematic2d.vortex import (
    PhaseField,
    VortexConfiguration,
    boundary_distance,
    mobility_integral,
    mobility_log_divergence,
    multivortex_potential,
    phase_boundary_trace,
    phase_diffusivity,
    potential_gradient,
    rectangle_polygon,
    run_vortex_dynamics,
    solve_dirichlet_laplace,
    solve_harmonic_phase,
    step_heat_phase,
    t_from_t_prime,
    t_prime_from_t,
)

P6 = make_params(6.0, 0.05)


def fd_gradient(cfg, k, h=1e-5):
    def u(dz):
        z = cfg.positions.copy()
        z[k] += dz
        return multivortex_potential(cfg.moved(z))
    return 0.5 * ((u(h) - u(-h)) / (2 * h) + 1j * (u(1j * h) - u(-1j * h)) / (2 * h))


# ---------------------------------------------------------------- configuration

def test_configuration_validation():
    with pytest.raises(DomainError):
        VortexConfiguration.free([0j, 1], [2, 1])
    with pytest.raises(DomainError):
        VortexConfiguration.free([0j, 0j], [1, 1])
    with pytest.raises(DomainError):
        VortexConfiguration([0j], [1])
    with pytest.raises(DomainError):
        VortexConfiguration.on_disk([0j], [1], lambda w: np.zeros(w.shape))  # winding 0 vs degree 1


def test_rectangle_polygon():
    w = rectangle_polygon(-0.5, -0.5, 1.0, 1.0, 16)
    assert w[0] == -0.5 - 0.5j and w[4] == 0.5 - 0.5j and w[8] == 0.5 + 0.5j
    assert np.allclose(np.abs(np.diff(np.append(w, w[0]))), 0.25)


def test_boundary_distance():
    g = Grid2D.square(9, 1.0, boundary_psi=lambda z: np.angle(z))
    cfg = VortexConfiguration.on_grid([0.3 + 0.1j], [1], g)
    assert boundary_distance(cfg)[0] == pytest.approx(0.2)
    assert np.isinf(boundary_distance(VortexConfiguration.free([0j], [1]))[0])


# ---------------------------------------------------------------- potential and gradient

def test_free_pair_potential_and_gradient():
    cfg = VortexConfiguration.free([0.1 + 0.2j, -0.3 + 0.5j], [1, 1])
    s = abs(cfg.positions[0] - cfg.positions[1])
    assert multivortex_potential(cfg) == pytest.approx(-2 * np.pi * np.log(s))
    g = potential_gradient(cfg)
    want = -np.pi / np.conj(cfg.positions[0] - cfg.positions[1])
    assert g[0] == pytest.approx(want)
    assert g[0] == pytest.approx(fd_gradient(cfg, 0), rel=1e-8)
    sym = potential_gradient(VortexConfiguration.free([-0.3, 0.3], [1, 1]))
    assert sym[0] == pytest.approx(-sym[1])


def test_centered_vortex_on_disk_has_zero_gradient():
    cfg = VortexConfiguration.on_disk([0j], [1], np.angle, m_b=512)
    assert abs(potential_gradient(cfg)[0]) <= 1e-10


def test_rotation_invariance_on_disk():
    pos = np.array([0.3 + 0.1j, -0.2 + 0.25j])
    a = VortexConfiguration.on_disk(pos, [1, -1], lambda w: 0.3 * np.real(w), m_b=2048)
    rot = np.exp(0.7j)
    b = VortexConfiguration.on_disk(pos * rot, [1, -1], lambda w: 0.3 * np.real(w / rot), m_b=2048)
    assert multivortex_potential(a) == pytest.approx(multivortex_potential(b), rel=1e-9)


def test_quadrature_converges_at_second_order():
    pos = [0.3 + 0.1j, -0.2 + 0.25j, -0.1 - 0.35j]
    psi = lambda w: np.angle(w) + 0.2 * np.real(w)
    u = [multivortex_potential(VortexConfiguration.on_disk(pos, [1, 1, -1], psi, m_b=m)) for m in (256, 512, 1024)]
    assert (u[0] - u[1]) / (u[1] - u[2]) == pytest.approx(4.0, rel=0.05)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.tuples(st.floats(0.05, 0.7), st.floats(0, 2 * np.pi)), min_size=2, max_size=3),
       st.floats(-1, 1))
def test_gradient_against_differences_on_disk(polar, coef):
    pos = np.array([r * np.exp(1j * a) for r, a in polar])
    d = np.array([1, -1, 1][: len(pos)])
    pair = np.abs(pos[:, None] - pos[None, :]) + np.eye(len(pos))
    assume(pair.min() >= 0.1)
    cfg = VortexConfiguration.on_disk(pos, d, lambda w: d.sum() * np.angle(w) + coef * np.imag(w * w), m_b=2048)
    grad = potential_gradient(cfg)
    for k in range(len(pos)):
        assert abs(grad[k] - fd_gradient(cfg, k)) <= 1e-6 * abs(grad[k]) + 1e-8


def test_gradient_against_differences_on_square():
    g = Grid2D.square(33, 1.0, boundary_psi=lambda z: winding_phase([0.1j], [1], z) + 0.4 * np.real(z))
    cfg = VortexConfiguration.on_grid([0.2 + 0.1j, -0.15 - 0.2j, 0.05 + 0.3j], [1, -1, 1], g, m_b=2048)
    grad = potential_gradient(cfg)
    for k in range(3):
        assert grad[k] == pytest.approx(fd_gradient(cfg, k), rel=1e-6)


# ---------------------------------------------------------------- dynamics

def test_opposite_pair_collapse():
    s0 = 0.6
    t_col = s0 ** 2 / (4 * np.pi)
    tr = run_vortex_dynamics(VortexConfiguration.free([-0.3, 0.3], [1, -1]), 2 * t_col, t_col / 1000)
    assert tr.status == "close-approach"
    assert tr.times[-1] == pytest.approx(t_col, rel=0.01) and tr.times[-1] < t_col
    z = np.asarray(tr.states)
    s2 = np.abs(z[:, 0] - z[:, 1]) ** 2
    assert np.allclose(s2, s0 ** 2 - 4 * np.pi * np.asarray(tr.times), atol=1e-3 * s0 ** 2)
    assert np.all(np.diff(tr.series("U")) <= 0)


def test_same_sign_pair_separates():
    tr = run_vortex_dynamics(VortexConfiguration.free([-0.5, 0.5], [1, 1]), 1.0, 1e-3)
    z = tr.states[-1]
    assert abs(z[0] - z[1]) ** 2 == pytest.approx(1 + 4 * np.pi, rel=0.01)
    assert tr.status == "completed"


def test_potential_decreases_with_boundary():
    cfg = VortexConfiguration.on_disk([0.3 + 0.1j, -0.2 + 0.25j, -0.1 - 0.35j], [1, 1, -1],
                                      lambda w: np.angle(w) + 0.2 * np.real(w), m_b=1024)
    tr = run_vortex_dynamics(cfg, 0.01, 1e-4, margin=0.05, output_every=5)
    assert np.all(np.diff(tr.series("U")) <= 1e-12)
    assert tr.meta["clock"] == "t_prime" and tr.meta["degrees"] == [1, 1, -1]


def test_margin_halts_near_boundary():
    cfg = VortexConfiguration.on_disk([0.9], [1], np.angle, m_b=512)
    tr = run_vortex_dynamics(cfg, 1.0, 1e-3, margin=0.2)
    assert tr.status == "close-approach" and len(tr) == 1


def test_clock_conversion():
    t = np.array([0.0, 0.3, 2.0])
    assert np.allclose(t_from_t_prime(t_prime_from_t(t, P6), P6), t)
    assert t_prime_from_t(1.0, P6) == pytest.approx(-8 / (np.pi * P6.tau_gamma * np.log(0.05)))


# ---------------------------------------------------------------- phase field

def test_harmonic_extension_of_quadratic():
    g = Grid2D.square(17, 1.0)
    exact = np.real(g.z ** 2)
    got = solve_dirichlet_laplace(np.where(g.boundary_mask, exact, 0.0))
    assert np.max(np.abs(got - exact)) <= 1e-9


def test_maximum_principle():
    rng = np.random.default_rng(0)
    b = rng.uniform(-1, 2, (12, 15))
    got = solve_dirichlet_laplace(b)
    edge = np.concatenate([b[0], b[-1], b[:, 0], b[:, -1]])
    assert edge.min() - 1e-12 <= got.min() and got.max() <= edge.max() + 1e-12


def test_winding_boundary_gives_zero_phase():
    pos, deg = [0.1 + 0.05j, -0.2j], [1, 1]
    g = Grid2D.square(21, 1.0, boundary_psi=lambda z: winding_phase(pos, deg, z))
    cfg = VortexConfiguration.on_grid(pos, deg, g)
    assert np.max(np.abs(solve_harmonic_phase(cfg, g).values)) <= 1e-9


def test_incompatible_trace_rejected():
    g = Grid2D.square(9, 1.0, boundary_psi=lambda z: 2 * np.angle(z))
    cfg = VortexConfiguration.free([0.1], [1])
    with pytest.raises(DomainError):
        phase_boundary_trace(cfg, g)


def test_heat_decay_rate_and_limits():
    g = Grid2D.square(33, 1.0, center=0.5 + 0.5j)
    z = g.z
    phi = PhaseField(g, np.sin(np.pi * z.real) * np.sin(np.pi * z.imag))
    d0 = phase_diffusivity(P6, g)
    assert d0 == pytest.approx(4 / P6.tau_gamma)
    later = step_heat_phase(phi, None, P6, 0.01)
    rate = -np.log(later.values[16, 16] / phi.values[16, 16]) / 0.01
    assert rate == pytest.approx(2 * np.pi ** 2 * d0, rel=0.02)
    harmonic = PhaseField(g, np.real(z ** 2))
    assert np.allclose(step_heat_phase(harmonic, None, P6, 0.05).values, harmonic.values, atol=1e-12)
    start = PhaseField(g, np.where(g.boundary_mask, np.real(z ** 2), 0.3))
    assert np.max(np.abs(step_heat_phase(start, None, P6, 0.5).values - np.real(z ** 2))) <= 1e-6
    with pytest.raises(DomainError):
        phase_diffusivity(make_params(2.0, 0.1), g)


def test_heat_reimposes_trace():
    pos, deg = [0.1j], [1]
    g = Grid2D.square(17, 1.0, boundary_psi=lambda z: winding_phase(pos, deg, z) + 0.2 * np.real(z))
    cfg = VortexConfiguration.on_grid(pos, deg, g)
    out = step_heat_phase(PhaseField(g, np.zeros(g.shape)), cfg, P6, 1e-3)
    trace = phase_boundary_trace(cfg, g)
    assert np.allclose(out.values[g.boundary_mask], trace[g.boundary_mask])


# ---------------------------------------------------------------- mobility integral

def test_mobility_slope():
    slope = mobility_log_divergence(P6, [0.08, 0.04, 0.02])
    assert slope == pytest.approx(np.pi * P6.tau_gamma / 8, rel=0.1)


def test_mobility_slope_vanishes_near_transition():
    p = make_params(2.05, 0.05)
    assert mobility_log_divergence(p, [0.08, 0.04]) < 0.1 * np.pi / 8


def test_mobility_integrand_bound_and_resolution():
    # the core contributes at most ∫_{|z|<ε} C r̂²/(16|z|²) with r̂ = r_eq|z|/ε: finite and ε-independent
    core = [mobility_integral(P6, e, box=2 * e) for e in (0.04, 0.02)]
    assert core[0] == pytest.approx(core[1], rel=1e-6)
    assert 0 < core[0] < math.pi * P6.tau_gamma / 8
    with pytest.raises(DomainError):
        mobility_integral(P6, 0.04, h=0.04 / 4)
    with pytest.raises(DomainError):
        mobility_integral(make_params(1.5, 0.1), 0.04)
