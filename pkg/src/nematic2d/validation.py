"""The cross-tier acceptance suite.

Each check returns a :class:`CheckResult`; ``run_checks`` runs a selection
and ``write_report`` stores the pass/fail table as CSV.  The φ-grid solver
of the homogeneous kinetic equation used by check 4 lives here as an
independent oracle for the moment hierarchy.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from types import SimpleNamespace
from typing import Callable, List, Optional

import numpy as np

from .closure import closure_rhs, gradient_form_rhs, ldg_rhs, step_closure
from .grid import (
    ComplexField,
    Grid2D,
    MomentState,
    equilibrium_moments,
    equilibrium_state,
    multi_vortex_field,
    reduced_energy,
    reduced_energy_derivative,
    total_energy,
    winding_phase,
)
from .kinetic import KineticConfig, homogeneous_state, run_kinetic, step_kinetic
from .maxslope import (
    SampledCurve,
    assemble_block_matrix,
    block_inverse_asymptotic,
    circle_problem,
    generalized_inverse,
    maximal_slope_residual,
    reduction_demo,
)
from .specfun import bessel_ratio, lambda_of, make_params, w_gamma, w_gamma_prime
from .trajectory import Trajectory
from .vortex import (
    PhaseField,
    VortexConfiguration,
    mobility_log_divergence,
    multivortex_potential,
    potential_gradient,
    run_vortex_dynamics,
    step_heat_phase,
)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.2f}s / {self.budget:g}s)"


# ---------------------------------------------------------------- helpers

def _dissipation_profile(energies, dt):
    """Largest per-step increase of an energy series, scaled by dt²."""
    inc = np.diff(np.asarray(energies))
    return max(float(np.max(inc)), 0.0) / dt ** 2


def _defect_ratio(energy: Callable, step: Callable, x, rate: Callable, dt):
    """One-step energy defects |E(step) - E - dt Ė| at dt and dt/2, and their ratio."""
    e0 = energy(x)
    edot = rate(x)
    out = []
    for h in (dt, 0.5 * dt):
        out.append(abs(energy(step(x, h)) - e0 - h * edot))
    return out[0], out[1], out[0] / out[1]


def _rate_along(energy, field_rhs, x, eta=1e-5):
    """Ė = dE/ds along x + s f(x), by a centered difference."""
    f = field_rhs(x)
    return (energy(x + eta * f) - energy(x - eta * f)) / (2.0 * eta)


def _smooth_field(grid: Grid2D, amp=0.4, seed=0):
    rng = np.random.default_rng(seed)
    z = grid.z
    a, b, c = rng.uniform(-2, 2, 3)
    r = amp * (1.0 + 0.25 * np.sin(a * z.real + b * z.imag))
    th = c * z.real * z.imag + np.cos(b * z.real) + rng.uniform(0, 2 * np.pi)
    return r * np.exp(1j * th)


def _uniform_psi(angle):
    return lambda z: np.full(np.shape(z), angle)


def phi_grid_oracle(n1: complex, gamma: float, t_end: float, m: int = 256, dt: float = 2e-4) -> complex:
    """Homogeneous kinetic equation ∂_t ρ = ∂²_φ ρ + ∂_φ(ρ ∂_φ U), U = -γ Re(n̄ e^{2iφ}),
    by fourth-order centered differences in φ and classical RK4 in time.

    Starts from ρ = (1 + 2 Re(n̄₁ e^{2iφ}))/(2π) and returns n = ∫ e^{2iφ} ρ dφ at t_end.
    """
    h = 2.0 * math.pi / m
    phi = h * np.arange(m)
    e2 = np.exp(2j * phi)
    rho = (1.0 + 2.0 * np.real(np.conj(n1) * e2)) / (2.0 * math.pi)

    def d1(f):
        return (-np.roll(f, -2) + 8 * np.roll(f, -1) - 8 * np.roll(f, 1) + np.roll(f, 2)) / (12 * h)

    def d2(f):
        return (-np.roll(f, -2) + 16 * np.roll(f, -1) - 30 * f + 16 * np.roll(f, 1) - np.roll(f, 2)) / (12 * h * h)

    def rhs(f):
        n = np.sum(f * e2) * h
        du = 2.0 * gamma * np.imag(np.conj(n) * e2)
        return d2(f) + d1(f * du)

    steps = int(round(t_end / dt))
    for _ in range(steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return complex(np.sum(rho * e2) * h)


# ---------------------------------------------------------------- checks

def check_specfun(seed=0):
    rng = np.random.default_rng(seed)
    r = rng.uniform(-0.999, 0.999, 200)
    roundtrip = float(np.max(np.abs(bessel_ratio(1, lambda_of(r)) - r)))
    worst_w = worst_wp = 0.0
    for g in (3.0, 4.0, 6.0, 10.0):
        p = make_params(g, 0.1)
        worst_w = max(worst_w, abs(w_gamma(p.r_eq, p)))
        worst_wp = max(worst_wp, abs(w_gamma_prime(p.r_eq, p)))
    p2 = make_params(2.0, 0.1)
    ok = roundtrip <= 1e-10 and worst_w <= 1e-10 and worst_wp <= 1e-10 and p2.r_eq == 0.0 and p2.tau_gamma == 0.0
    return ok, (f"roundtrip {roundtrip:.1e}, |W(r_eq)| {worst_w:.1e}, |W'(r_eq)| {worst_wp:.1e}, "
                f"r_eq(γ=2) = {p2.r_eq}")


def check_stationarity(seed=0):
    p = make_params(6.0, 0.1)
    theta = 0.7
    g = Grid2D.square(32, 1.0, boundary_psi=_uniform_psi(theta))
    n = ComplexField(g, np.full(g.shape, p.r_eq * np.exp(1j * theta)))
    st = equilibrium_state(n, 8)
    kc = KineticConfig(p, g, k_max=8, dt=1e-3, t_end=1e-3)
    kin = float(np.max(np.abs(step_kinetic(st, kc).moments - st.moments)))
    dt2 = 0.5 * g.h ** 2 / (16 * p.epsilon ** 2)
    mx = float(np.max(np.abs(step_closure(n, p, dt2, "maxent").values - n.values)))
    ld = float(np.max(np.abs(step_closure(n, p, dt2, "ldg").values - n.values)))
    ok = max(kin, mx, ld) <= 1e-9
    return ok, f"per-step change: kinetic {kin:.1e}, maxent {mx:.1e}, ldg {ld:.1e}"


def _kinetic_dissipation():
    p = make_params(3.0, 0.1)
    g = Grid2D.square(16, 1.0)
    n = ComplexField(g, _smooth_field(g, 0.35, seed=3))
    st = equilibrium_state(n, 8)
    st.moments[2] += 0.05 * np.exp(1j * 2.0 * np.real(g.z))
    st.moments[3] += 0.03

    def cfg(dt):
        return KineticConfig(p, g, k_max=8, dt=dt, t_end=dt, pin_boundary=False)

    def energy(m):
        return total_energy(MomentState(g, m), p, tail="equilibrium")[0]

    def step(m, h):
        return step_kinetic(MomentState(g, m), cfg(h)).moments

    def rhs(m):
        from .kinetic import hierarchy_rhs
        out = hierarchy_rhs(MomentState(g, m), cfg(1e-3))
        out[0] = 0.0
        return out

    return energy, step, rhs, st.moments


def _closure_dissipation(scheme):
    p = make_params(3.0, 0.1)
    g = Grid2D.square(24, 1.0)
    v0 = _smooth_field(g, 0.4, seed=5)

    def energy(v):
        return reduced_energy(ComplexField(g, v), p)

    def step(v, h):
        return step_closure(ComplexField(g, v), p, h, scheme).values

    def rhs(v):
        f = ComplexField(g, v)
        return (closure_rhs(f, p) if scheme == "maxent" else ldg_rhs(f, p)).values

    return energy, step, rhs, v0


def _vortex_dissipation():
    cfg = VortexConfiguration.on_disk([0.3 + 0.1j, -0.2 + 0.25j, -0.1 - 0.35j], [1, 1, -1],
                                      lambda w: np.angle(w) + 0.2 * np.real(w), m_b=1024)

    def energy(z):
        return multivortex_potential(cfg.moved(z))

    def step(z, h):
        tr = run_vortex_dynamics(cfg.moved(z), h, h)
        return tr.states[-1]

    def rhs(z):
        return -potential_gradient(cfg.moved(z))

    return energy, step, rhs, cfg.positions


def _series(energy, step, x, dt, n):
    out = [energy(x)]
    for _ in range(n):
        x = step(x, dt)
        out.append(energy(x))
    return out


def check_dissipation(seed=0):
    cases = {
        "kinetic": (_kinetic_dissipation(), 2e-3, 40),
        "maxent": (_closure_dissipation("maxent"), 1e-3, 40),
        "ldg": (_closure_dissipation("ldg"), 4e-3, 40),
        "vortex": (_vortex_dissipation(), 2e-4, 40),
    }
    ok = True
    parts = []
    for name, ((energy, step, rhs, x0), dt, n) in cases.items():
        c_fit = _dissipation_profile(_series(energy, step, x0, dt, n), dt)
        c_half = _dissipation_profile(_series(energy, step, x0, 0.5 * dt, 2 * n), 0.5 * dt)
        rate = _rate_along(energy, rhs, x0)
        _, _, ratio = _defect_ratio(energy, step, x0, lambda x: rate, dt)
        noise = 1e-12 / dt ** 2
        confirmed = c_half <= max(c_fit, noise) * 1.0 + noise
        this = confirmed and 3.5 <= ratio <= 4.5 and rate < 0
        ok &= this
        parts.append(f"{name}: C {c_fit:.1e}->{c_half:.1e}, Ė {rate:.2e}, ratio {ratio:.2f}")
    return ok, "; ".join(parts)


def check_hierarchy_oracle(seed=0):
    p = make_params(6.0, 0.1)
    n1 = 0.2 * np.exp(0.4j)
    st = homogeneous_state(n1, 16)
    kc = KineticConfig(p, st.grid, k_max=16, dt=1e-3, t_end=1.0, pin_boundary=False)
    tr = run_kinetic(st, kc, diagnostics=False)
    hier = complex(tr.states[-1].moments[1][0, 0])
    oracle = phi_grid_oracle(n1, p.gamma, 1.0)
    err = abs(hier - oracle)
    return err <= 1e-4, f"|n¹_hier - n¹_φgrid| = {err:.1e} at t = 1 (|n¹| = {abs(oracle):.4f})"


def check_vortex_pair_laws(seed=0):
    s0 = 1.0
    t_col = s0 ** 2 / (4 * math.pi)
    tr = run_vortex_dynamics(VortexConfiguration.free([-0.5, 0.5], [1, -1]), 1.2 * t_col, t_col / 2000)
    z = np.asarray(tr.states)
    t = np.asarray(tr.times)
    s2 = np.abs(z[:, 0] - z[:, 1]) ** 2
    opp = float(np.max(np.abs(s2 - (s0 ** 2 - 4 * math.pi * t)))) / s0 ** 2
    t_err = abs(t[-1] - t_col) / t_col
    tr2 = run_vortex_dynamics(VortexConfiguration.free([-0.5, 0.5], [1, 1]), 1.0, 1e-3)
    z2 = np.asarray(tr2.states)
    s2b = np.abs(z2[:, 0] - z2[:, 1]) ** 2
    same = float(np.max(np.abs(s2b - (s0 ** 2 + 4 * math.pi * np.asarray(tr2.times))) / (s0 ** 2 + 4 * math.pi * np.asarray(tr2.times))))
    ok = tr.status == "close-approach" and opp <= 0.01 and t_err <= 0.01 and same <= 0.01
    return ok, (f"opposite: law err {opp:.1e}, halt at {t[-1]:.5f} vs s0²/4π = {t_col:.5f} ({t_err:.1e}); "
                f"same-sign law err {same:.1e}")


def check_gradient_oracle(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    h = 1e-5
    for _ in range(10):
        d = rng.choice([-1, 1], 3)
        pos = 0.6 * np.sqrt(rng.uniform(0.05, 1, 3)) * np.exp(2j * np.pi * rng.uniform(0, 1, 3))
        cfg = VortexConfiguration.on_disk(pos, d, lambda w, s=d.sum(): s * np.angle(w) + 0.3 * np.real(w * w),
                                          m_b=2048)
        grad = potential_gradient(cfg)
        for k in range(3):
            def u(dz):
                zz = pos.copy()
                zz[k] += dz
                return multivortex_potential(cfg.moved(zz))
            fd = 0.5 * ((u(h) - u(-h)) / (2 * h) + 1j * (u(1j * h) - u(-1j * h)) / (2 * h))
            worst = max(worst, abs(grad[k] - fd) / abs(fd))
    return worst <= 1e-6, f"max relative gap analytic vs central differences {worst:.1e}"


def check_heat_phase(seed=0):
    p = make_params(6.0, 0.05)
    g = Grid2D.square(129, 1.0, 0.5 + 0.5j)
    z = g.z
    phi = PhaseField(g, np.sin(np.pi * z.real) * np.sin(np.pi * z.imag))
    d0 = 4.0 / (g.area * p.tau_gamma)
    ts, amps = [], []
    for i in range(11):
        ts.append(i * 2e-3)
        amps.append(phi.values[64, 64])
        phi = step_heat_phase(phi, None, p, 2e-3)
    rate = -np.polyfit(ts, np.log(amps), 1)[0]
    rel = abs(rate / (2 * math.pi ** 2 * d0) - 1)
    return rel <= 0.02, f"decay rate {rate:.4f} vs 2π²·4/(|Ω|τ_γ) = {2 * math.pi ** 2 * d0:.4f} (rel {rel:.1e})"


def check_mobility(seed=0):
    p = make_params(6.0, 0.05)
    slope = mobility_log_divergence(p, [0.08, 0.04, 0.02])
    target = math.pi * p.tau_gamma / 8
    rel = abs(slope / target - 1)
    return rel <= 0.10, f"slope {slope:.5f} vs πτ_γ/8 = {target:.5f} (rel {rel:.1e})"


def tempered_energies(gamma=6.0, eps_list=(0.1, 0.05, 0.025)):
    out = []
    for eps in eps_list:
        p = make_params(gamma, eps)
        n_nodes = int(round(8.0 / eps)) + 1
        g = Grid2D.square(n_nodes, 1.0, 0.5 * g_h(n_nodes) * (1 + 1j))
        spec = SimpleNamespace(positions=[0j], degrees=[1])
        n = multi_vortex_field(spec, None, p, g, core=eps)
        out.append(reduced_energy(n, p) / eps ** 2)
    return np.asarray(out)


def g_h(n_nodes):
    return 1.0 / (n_nodes - 1)


def check_tempered_energy(seed=0):
    eps = np.array([0.1, 0.05, 0.025])
    p = make_params(6.0, 0.1)
    e = tempered_energies(6.0, eps)
    slope = np.polyfit(-np.log(eps), e, 1)[0]
    target = math.pi * p.r_eq ** 2
    rel = abs(slope / target - 1)
    return rel <= 0.10, f"slope of N/ε² vs |ln ε| {slope:.4f} vs π r_eq² = {target:.4f} (rel {rel:.1e})"


def frozen_vortex_run(eps=0.05, nodes=64, t_end=1.0, dt=5e-3, amplitude=0.5, gamma=6.0):
    """Tier-1 two-vortex run on the kinetic clock; returns (trajectory, params, positions, degrees)."""
    p = make_params(gamma, eps)
    h = 1.0 / (nodes - 1)
    x0 = -0.5
    # vortices on plaquette centres about ±0.2
    i = int(round((0.2 - x0) / h - 0.5))
    j = int(round((0.0 - x0) / h - 0.5))
    pos = [x0 + (nodes - 2 - i + 0.5) * h + 1j * (x0 + (j + 0.5) * h), x0 + (i + 0.5) * h + 1j * (x0 + (j + 0.5) * h)]
    deg = [1, -1]
    g = Grid2D.square(nodes, 1.0, boundary_psi=lambda z: winding_phase(pos, deg, z))
    z = g.z
    bump = amplitude * np.sin(np.pi * (z.real + 0.5)) * np.sin(np.pi * (z.imag + 0.5))
    n = multi_vortex_field(SimpleNamespace(positions=pos, degrees=deg), bump, p, g, core=eps)
    kc = KineticConfig(p, g, k_max=8, dt=dt, t_end=t_end)
    tr = run_kinetic(equilibrium_state(n, 8), kc, output_every=max(1, int(round(t_end / dt / 10))))
    return tr, p, pos, deg


def check_frozen_vortices(seed=0):
    from .experiments import compare_tiers

    tr, p, pos, deg = frozen_vortex_run()
    static = Trajectory(meta={"clock": "t_prime", "degrees": deg})
    static.record(0.0, np.asarray(pos, dtype=complex))
    static.record(1e9, np.asarray(pos, dtype=complex))
    rep = compare_tiers(tr, None, static, p)
    g = tr.states[0].grid
    mask = ~g.boundary_mask
    for zk in pos:
        mask &= np.abs(g.z - zk) > 5 * p.epsilon

    def dev(s):
        ph = np.angle(s.moments[1] * np.exp(-1j * winding_phase(pos, deg, g.z)))
        return float(np.sqrt(np.mean(ph[mask] ** 2)))

    d0, d1 = dev(tr.states[0]), dev(tr.states[-1])
    relaxed = (d0 - d1) / d0
    counts = set(tr.diagnostics["n_vortices"])
    ok = rep.frozen and relaxed >= 0.05 and counts == {2}
    return ok, (f"max displacement {rep.kinetic_displacement:.4f} < 2h = {2 * g.h:.4f}; "
                f"phase deviation {d0:.4f} -> {d1:.4f} ({100 * relaxed:.1f}% relaxed); "
                f"tier-1/heat phase-rate ratio {rep.phase_rate_ratio:.3f}")


def check_maxslope(seed=0):
    rng = np.random.default_rng(seed)
    mp = 0.0
    for i in range(50):
        n = 6
        rank = 1 + i % n
        a = rng.standard_normal((n, rank))
        m = a @ a.T
        g = generalized_inverse(m)
        scale = max(1.0, np.max(np.abs(m)), np.max(np.abs(g)))
        mp = max(mp, np.max(np.abs(m @ g @ m - m)) / scale, np.max(np.abs(g @ m @ g - g)) / scale,
                 np.max(np.abs(g - g.T)))
    energy = lambda x: 0.5 * float(x @ x)
    mob = lambda x: np.eye(2)
    grad = lambda x: x
    x0 = np.array([1.0, 2.0])
    res = []
    for dt in (1e-2, 5e-3):
        t = np.arange(0.0, 2.0 + dt / 2, dt)
        res.append(maximal_slope_residual(SampledCurve(t, x0 * np.exp(-t)[:, None]), energy, mob, grad))
    t = np.linspace(0, 2, 401)
    line = SampledCurve(t, x0 + (x0 * math.exp(-2) - x0) * (t / 2)[:, None])
    neg = maximal_slope_residual(line, energy, mob, grad)
    a11 = rng.standard_normal((3, 3))
    a11 = a11 @ a11.T + np.eye(3)
    b11 = rng.standard_normal((3, 3))
    b11 = b11 + b11.T
    b12 = rng.standard_normal((3, 2))
    b22 = rng.standard_normal((2, 2))
    b22 = b22 @ b22.T + np.eye(2)
    c11 = rng.standard_normal((3, 3))
    c11 = c11 + c11.T
    c12 = rng.standard_normal((3, 2))
    c22 = rng.standard_normal((2, 2))
    c22 = c22 + c22.T
    errs = []
    for delta in (1e-3, 5e-4):
        full = np.linalg.inv(assemble_block_matrix(a11, (b11, b12, b22), (c11, c12, c22), delta))
        errs.append(np.linalg.norm(full - block_inverse_asymptotic(a11, (b11, b12, b22), (c11, c12, c22), delta)))
    ratio = errs[0] / errs[1]
    rep = reduction_demo(circle_problem(), [1e-1, 1e-2, 1e-3], [math.cos(1.0), math.sin(1.0)])
    exact_ok = abs(res[0]) <= 10 * 1e-4 and abs(res[1]) <= 10 * 0.25e-4
    ok = mp <= 1e-10 and exact_ok and neg < 0 and 3.5 <= ratio <= 4.5 and rep.monotone
    dist = ", ".join(f"{d:.1e}" for d in rep.distances)
    return ok, (f"MP {mp:.1e}; exact-flow residual {res[0]:.1e}/{res[1]:.1e}; straight line {neg:.3f}; "
                f"block ratio {ratio:.2f}; reduction distances {dist}")


def check_closure(seed=0):
    p = make_params(6.0, 0.1)
    g = Grid2D.square(32, 1.0)
    worst = 0.0
    for s in range(5):
        n = ComplexField(g, _smooth_field(g, 0.5, seed=seed + s))
        worst = max(worst, float(np.max(np.abs(closure_rhs(n, p).values - gradient_form_rhs(n, p).values))))
    p2 = make_params(2.0, 0.1)
    gaps = []
    coefs = []
    for amp in (1e-2, 1e-4):
        n = ComplexField(g, _smooth_field(g, amp, seed=seed))
        lhs = closure_rhs(n, p2).values
        rhs = -4.0 * reduced_energy_derivative(n, p2).values
        gaps.append(float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs))))
        coefs.append(float(np.max(np.abs(equilibrium_moments(n.values, 2)))))
    ok = worst <= 1e-8 and gaps[1] < gaps[0] and gaps[1] <= 1e-6 and coefs[1] < coefs[0]
    return ok, (f"form identity {worst:.1e}; |c| {coefs[0]:.1e} -> {coefs[1]:.1e}; "
                f"gap to -4δN/δn̄ {gaps[0]:.1e} -> {gaps[1]:.1e}")


CHECKS = [
    (1, "special functions", check_specfun, 1.0),
    (2, "stationarity", check_stationarity, 10.0),
    (3, "gradient-flow dissipation", check_dissipation, 60.0),
    (4, "hierarchy vs φ-grid oracle", check_hierarchy_oracle, 30.0),
    (5, "two-vortex laws", check_vortex_pair_laws, 5.0),
    (6, "potential gradient oracle", check_gradient_oracle, 30.0),
    (7, "heat-phase coefficient", check_heat_phase, 30.0),
    (8, "mobility log-divergence", check_mobility, 120.0),
    (9, "tempered energy scaling", check_tempered_energy, 60.0),
    (10, "frozen vortices", check_frozen_vortices, 600.0),
    (11, "maximal-slope suite", check_maxslope, 30.0),
    (12, "closure consistency", check_closure, 10.0),
]


def run_check(number: int, seed: int = 0) -> CheckResult:
    for num, name, fn, budget in CHECKS:
        if num == number:
            t0 = time.perf_counter()
            ok, detail = fn(seed)
            sec = time.perf_counter() - t0
            within = sec <= budget
            if not within:
                detail += f"; over the {budget:g}s budget"
            return CheckResult(num, name, bool(ok) and within, detail, sec, budget)
    raise KeyError(f"no acceptance check {number}")


def run_checks(numbers: Optional[List[int]] = None, seed: int = 0) -> List[CheckResult]:
    numbers = numbers or [c[0] for c in CHECKS]
    return [run_check(n, seed) for n in numbers]


def write_report(path, results: List[CheckResult]):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["criterion", "name", "passed", "seconds", "detail"])
        for r in results:
            w.writerow([r.number, r.name, "pass" if r.passed else "fail", "%.3f" % r.seconds, r.detail])
