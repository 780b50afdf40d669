"""Experiment orchestration: build solvers from a configuration, run them,
write artifacts, and compare the three tiers."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .closure import ClosureConfig, run_closure
from .config import ExperimentConfig
from .errors import ConfigError, DomainError
from .fieldio import fmt, read_snapshot, write_snapshot
from .grid import (
    ComplexField,
    Grid2D,
    MomentState,
    equilibrium_state,
    multi_vortex_field,
    winding_phase,
)
from .kinetic import KineticConfig, run_kinetic
from .maxslope import circle_problem, reduction_demo
from .specfun import NematicParams, make_params, specfun_table
from .trajectory import Trajectory
from .vortex import (
    PhaseField,
    VortexConfiguration,
    run_vortex_dynamics,
    solve_dirichlet_laplace,
    solve_harmonic_phase,
    step_heat_phase,
    t_from_t_prime,
    t_prime_from_t,
)

log = logging.getLogger(__name__)

OUT_ENV = "NEMATIC_OUT_DIR"


# ---------------------------------------------------------------- builders

def build_params(cfg: ExperimentConfig) -> NematicParams:
    return make_params(cfg["params.gamma"], cfg["params.epsilon"])


def sampled_boundary(path):
    """ψ(z) interpolated from a CSV with columns x,y,psi, by polar angle about the samples' centroid."""
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    try:
        pts = np.array([float(r["x"]) + 1j * float(r["y"]) for r in rows])
        psi = np.array([float(r["psi"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise ConfigError([f"boundary.file: expected numeric columns x,y,psi ({exc})"]) from exc
    if pts.size < 3:
        raise ConfigError(["boundary.file: need at least 3 samples"])
    center = pts.mean()
    theta = np.angle(pts - center)
    order = np.argsort(theta)
    theta, psi = theta[order], np.unwrap(psi[order])
    # close the loop carrying the total winding across the branch cut
    closing = np.angle(np.exp(1j * (psi[0] - psi[-1])))
    turns = psi[-1] + closing - psi[0]
    t_ext = np.concatenate([theta, [theta[0] + 2.0 * np.pi]])
    p_ext = np.concatenate([psi, [psi[0] + turns]])

    def fn(z):
        a = np.angle(np.asarray(z) - center)
        a = np.where(a < theta[0], a + 2.0 * np.pi, a)
        return np.interp(a, t_ext, p_ext)

    return fn


def boundary_function(cfg: ExperimentConfig):
    kind = cfg["boundary.type"]
    center = 0j  # grids built from a config are centred on the origin
    if kind == "none":
        return None
    if kind == "uniform":
        angle = cfg["boundary.angle"]
        return lambda z: np.full(np.shape(z), angle)
    if kind == "winding":
        anchors = cfg["boundary.anchors"]
        angle = cfg["boundary.angle"]
        if anchors:
            pos = [a for a, _ in anchors]
            deg = [d for _, d in anchors]
            return lambda z: angle + winding_phase(pos, deg, z)
        d = cfg["boundary.degree"]
        return lambda z: angle + d * np.angle(np.asarray(z) - center)
    return sampled_boundary(cfg.resolve_path(cfg["boundary.file"]))


def build_grid(cfg: ExperimentConfig) -> Grid2D:
    return Grid2D(cfg["grid.nx"], cfg["grid.ny"], cfg["grid.lx"], cfg["grid.ly"],
                  boundary_psi=boundary_function(cfg))


def _phase_bump(grid: Grid2D, amplitude):
    x = (grid.z.real - grid.x0) / grid.lx
    y = (grid.z.imag - grid.y0) / grid.ly
    return amplitude * np.sin(np.pi * x) * np.sin(np.pi * y)


def initial_order_parameter(cfg: ExperimentConfig, params: NematicParams, grid: Grid2D) -> np.ndarray:
    kind = cfg["initial.type"]
    if kind == "equilibrium":
        phase = cfg["boundary.angle"] + _phase_bump(grid, cfg["initial.phase_amplitude"])
        return params.r_eq * np.exp(1j * phase)
    if kind == "isotropic":
        rng = np.random.default_rng(cfg["seed"])
        noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        return cfg["initial.perturbation"] * noise / math.sqrt(2.0)
    if kind == "multivortex":
        vort = cfg["initial.vortices"]
        spec = SimpleNamespace(positions=[z for z, _ in vort], degrees=[d for _, d in vort])
        phase = cfg["boundary.angle"] + _phase_bump(grid, cfg["initial.phase_amplitude"])
        return multi_vortex_field(spec, phase, params, grid, core=params.epsilon).values
    data = read_snapshot(cfg.resolve_path(cfg["initial.file"]))
    if data.shape[1:] != grid.shape:
        raise ConfigError([f"initial.file: snapshot grid {data.shape[1:]} differs from {grid.shape}"])
    return data[1] if data.shape[0] > 1 else data[0]


def initial_moments(cfg: ExperimentConfig, params: NematicParams, grid: Grid2D) -> MomentState:
    k_max = cfg["kinetic.k_max"]
    if cfg["initial.type"] == "snapshot":
        data = read_snapshot(cfg.resolve_path(cfg["initial.file"]))
        if data.shape[0] == k_max + 1 and data.shape[1:] == grid.shape:
            return MomentState(grid, data)
    n = initial_order_parameter(cfg, params, grid)
    if cfg["initial.type"] == "isotropic":
        moments = np.zeros((k_max + 1,) + grid.shape, dtype=complex)
        moments[0] = 1.0
        moments[1] = n
        return MomentState(grid, moments)
    return equilibrium_state(ComplexField(grid, n), k_max)


def vortex_configuration(cfg: ExperimentConfig, grid: Optional[Grid2D] = None) -> VortexConfiguration:
    vort = cfg["initial.vortices"]
    pos = [z for z, _ in vort]
    deg = [d for _, d in vort]
    if cfg["vortex.free_space"]:
        return VortexConfiguration.free(pos, deg)
    grid = grid or build_grid(cfg)
    return VortexConfiguration.on_grid(pos, deg, grid, m_b=cfg["vortex.m_b"])


# ---------------------------------------------------------------- running

@dataclass
class RunResult:
    tier: str
    status: str
    out_dir: str
    artifacts: List[str] = field(default_factory=list)
    trajectory: Optional[Trajectory] = None
    extra: Dict = field(default_factory=dict)


def output_dir(cfg: ExperimentConfig, out_root: Optional[str] = None) -> str:
    root = out_root or os.environ.get(OUT_ENV) or cfg.resolve_path(cfg["output.dir"])
    path = os.path.join(root, cfg["name"] or cfg.tier)
    os.makedirs(path, exist_ok=True)
    return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(r if isinstance(r, str) else fmt(r) for r in row) + "\n")


def _diag_rows(traj: Trajectory):
    d = traj.diagnostics
    for i, t in enumerate(traj.times):
        e_red = d["E_reduced"][i]
        e_tot = d.get("E_total", d["E_reduced"])[i]
        s_rel = d.get("S_rel", [0.0] * len(traj))[i]
        yield [t, e_tot, e_red, s_rel, str(d["n_vortices"][i])]


def _vortex_rows(traj: Trajectory):
    for t, found in zip(traj.times, traj.diagnostics["vortices"]):
        for k, (z, deg) in enumerate(found):
            yield [t, str(k), z.real, z.imag, str(deg)]


def _field_outputs(out, traj: Trajectory, components):
    artifacts = []
    for i, state in enumerate(traj.states):
        name = f"snapshot_{i:05d}.nemf"
        write_snapshot(os.path.join(out, name), components(state))
        artifacts.append(name)
    _write_csv(os.path.join(out, "diagnostics.csv"), "t,E_total,E_reduced,S_rel,n_vortices", _diag_rows(traj))
    _write_csv(os.path.join(out, "vortices.csv"), "t,k,re_z,im_z,degree", _vortex_rows(traj))
    return artifacts + ["diagnostics.csv", "vortices.csv"]


def _n_steps_every(cfg):
    every = cfg["time.output_every"]
    return every if every > 0 else None


def run_kinetic_tier(cfg: ExperimentConfig, out: str) -> RunResult:
    params = build_params(cfg)
    grid = build_grid(cfg)
    kc = KineticConfig(params, grid, k_max=cfg["kinetic.k_max"], dt=cfg["time.dt"], t_end=cfg["time.t_end"],
                       rescaled_time=cfg["time.rescaled"], truncation=cfg["kinetic.truncation"],
                       scheme=cfg["kinetic.scheme"], pin_boundary=grid.boundary_psi is not None)
    traj = run_kinetic(initial_moments(cfg, params, grid), kc, output_every=_n_steps_every(cfg))
    arts = _field_outputs(out, traj, lambda s: s.moments)
    return RunResult("kinetic", traj.status, out, arts, traj)


def run_closure_tier(cfg: ExperimentConfig, out: str) -> RunResult:
    params = build_params(cfg)
    grid = build_grid(cfg)
    cc = ClosureConfig(params, grid, dt=cfg["time.dt"], t_end=cfg["time.t_end"], scheme=cfg["tier2.scheme"],
                       method=cfg["tier2.method"], rescaled_time=cfg["time.rescaled"])
    n0 = ComplexField(grid, initial_order_parameter(cfg, params, grid))
    traj = run_closure(n0, cc, output_every=_n_steps_every(cfg))
    arts = _field_outputs(out, traj, lambda f: f.values)
    return RunResult("closure", traj.status, out, arts, traj)


def run_vortex_tier(cfg: ExperimentConfig, out: str) -> RunResult:
    params = build_params(cfg)
    grid = None if cfg["vortex.free_space"] else build_grid(cfg)
    vc = vortex_configuration(cfg, grid)
    margin = 0.0 if grid is None else cfg["vortex.margin_cells"] * grid.h
    traj = run_vortex_dynamics(vc, cfg["time.t_end"], cfg["time.dt"], margin=margin,
                               output_every=cfg["time.output_every"] or 1)
    # both clocks: t' drives the ODE, t is the phase-relaxation clock (undefined when τ_γ = 0)
    per = float(t_from_t_prime(1.0, params)) if params.tau_gamma > 0 else math.nan
    lines = []
    for t, z, u in zip(traj.times, traj.states, traj.diagnostics["U"]):
        for k, (zk, dk) in enumerate(zip(z, vc.degrees)):
            lines.append([t, t * per, str(k), zk.real, zk.imag, str(int(dk)), u])
    path = os.path.join(out, "vortex-trajectory.csv")
    _write_csv(path, "t_prime,t,k,re_z,im_z,degree,U", lines)
    with open(path, "a") as fh:
        fh.write(f"# status={traj.status},t_prime_end={fmt(traj.times[-1])}\n")
    arts = ["vortex-trajectory.csv"]
    extra = {"t_per_t_prime": per} if params.tau_gamma > 0 else {}
    if grid is not None:
        for label, z in (("initial", traj.states[0]), ("final", traj.states[-1])):
            phi = solve_harmonic_phase(vc.moved(z), grid)
            name = f"phase_{label}.nemf"
            write_snapshot(os.path.join(out, name), phi.values.astype(complex))
            arts.append(name)
    return RunResult("vortex", traj.status, out, arts, traj, extra)


def run_specfun_tier(cfg: ExperimentConfig, out: str) -> RunResult:
    params = build_params(cfg)
    name = "specfun-table.csv"
    write_specfun_table(os.path.join(out, name), params, cfg["specfun.r_min"], cfg["specfun.r_max"], cfg["specfun.n"])
    return RunResult("specfun-table", "completed", out, [name])


def write_specfun_table(path, params: NematicParams, r_min=0.0, r_max=0.99, n=100, include_r_eq=True):
    """CSV r,lambda,w_gamma,w_gamma_prime; the row r = r_eq is inserted when in range."""
    table = specfun_table(params, r_min, r_max, n)
    if include_r_eq and r_min <= params.r_eq <= r_max and not np.any(table[:, 0] == params.r_eq):
        extra = specfun_table(params, params.r_eq, params.r_eq, 1)
        table = np.vstack([table, extra])
        table = table[np.argsort(table[:, 0], kind="stable")]
    _write_csv(path, "r,lambda,w_gamma,w_gamma_prime", table)


def run_maxslope_tier(cfg: ExperimentConfig, out: str) -> RunResult:
    name = "maxslope-demo.csv"
    write_maxslope_demo(os.path.join(out, name))
    return RunResult("maxslope-demo", "completed", out, [name])


def write_maxslope_demo(path, epsilons=(1e-1, 1e-2, 1e-3)):
    rep = reduction_demo(circle_problem(), list(epsilons), [math.cos(1.0), math.sin(1.0)])
    with open(path, "w") as fh:
        for line in rep.csv_lines():
            fh.write(line + "\n")
    return rep


def run_validate_tier(cfg: ExperimentConfig, out: str) -> RunResult:
    from .validation import run_checks, write_report

    which = cfg["validate.criteria"]
    numbers = None if which.strip() == "all" else [int(t) for t in which.replace(",", " ").split()]
    results = run_checks(numbers, seed=cfg["seed"])
    name = "validation.csv"
    write_report(os.path.join(out, name), results)
    status = "passed" if all(r.passed for r in results) else "failed"
    return RunResult("validate", status, out, [name], extra={"results": results})


_RUNNERS = {
    "kinetic": run_kinetic_tier,
    "closure": run_closure_tier,
    "vortex": run_vortex_tier,
    "specfun-table": run_specfun_tier,
    "maxslope-demo": run_maxslope_tier,
    "validate": run_validate_tier,
}


def run(cfg: ExperimentConfig, out_root: Optional[str] = None) -> RunResult:
    """Run the configured tier and write run.json plus the tier's artifacts."""
    out = output_dir(cfg, out_root)
    result = _RUNNERS[cfg.tier](cfg, out)
    meta = {
        "version": __version__,
        "tier": cfg.tier,
        "status": result.status,
        "config": cfg.as_dict(),
        "artifacts": result.artifacts,
    }
    if cfg.tier in ("kinetic", "closure", "vortex"):
        params = build_params(cfg)
        meta["derived"] = {"r_eq": params.r_eq, "tau_gamma": params.tau_gamma, "c_gamma": params.c_gamma}
        meta["clock"] = ("t_prime" if cfg.tier == "vortex"
                         else "rescaled" if cfg["time.rescaled"] else "kinetic")
    meta.update({k: v for k, v in result.extra.items() if k != "results"})
    with open(os.path.join(out, "run.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result


# ---------------------------------------------------------------- cross-tier comparison

@dataclass
class TierComparison:
    times: np.ndarray
    kinetic_track_error: float
    closure_track_error: float
    kinetic_displacement: float
    phase_discrepancy: float
    kinetic_phase_rate: float
    heat_phase_rate: float
    energy_discrepancy: float
    h: float

    @property
    def phase_rate_ratio(self) -> float:
        return self.kinetic_phase_rate / self.heat_phase_rate

    @property
    def frozen(self) -> bool:
        return self.kinetic_displacement < 2.0 * self.h

    @property
    def phase_rate_ok(self) -> bool:
        return abs(self.phase_rate_ratio - 1.0) <= 0.15


def _rescaled_times(traj: Trajectory, params: NematicParams):
    t = np.asarray(traj.times)
    clock = traj.meta.get("clock")
    if clock == "kinetic":
        return t * params.epsilon ** 2
    if clock == "rescaled":
        return t
    raise DomainError(f"unknown clock {clock!r}")


def _track_at(vortex_run: Trajectory, t_prime):
    tp = np.asarray(vortex_run.times)
    zs = np.asarray(vortex_run.states)
    return np.array([np.interp(t_prime, tp, zs[:, k].real) + 1j * np.interp(t_prime, tp, zs[:, k].imag)
                     for k in range(zs.shape[1])])


def _match(found, positions, degrees):
    worst = 0.0
    for zk, dk in zip(positions, degrees):
        cands = [abs(z - zk) for z, d in found if d == dk]
        worst = max(worst, min(cands) if cands else math.inf)
    return worst


def _far_mask(grid, positions, radius):
    mask = ~grid.boundary_mask
    for zk in positions:
        mask &= np.abs(grid.z - zk) > radius
    return mask


def _decay_rate(t, values):
    values = np.asarray(values)
    ok = values > 0
    if ok.sum() < 2:
        return float("nan")
    return float(-np.polyfit(np.asarray(t)[ok], np.log(values[ok]), 1)[0])


def compare_tiers(kinetic_run: Trajectory, closure_run: Optional[Trajectory], vortex_run: Trajectory,
                  params: NematicParams) -> TierComparison:
    """Vortex tracks, phase field and energies of tier 1 (and 2) against tier 3."""
    if vortex_run.meta.get("clock") != "t_prime":
        raise DomainError("vortex run must be on the t' clock")
    grid = kinetic_run.states[0].grid
    t_kin = _rescaled_times(kinetic_run, params)
    if closure_run is not None:
        if closure_run.states[0].grid.shape != grid.shape or closure_run.states[0].grid.h != grid.h:
            raise DomainError("kinetic and closure runs use different grids")
        t_clo = _rescaled_times(closure_run, params)
        if kinetic_run.meta.get("clock") != closure_run.meta.get("clock") or len(t_clo) != len(t_kin) \
                or not np.allclose(t_clo, t_kin):
            raise DomainError("kinetic and closure runs are on different clocks or output times")
    degrees = np.asarray(vortex_run.meta["degrees"])
    z0 = np.asarray(vortex_run.states[0])

    kin_err = clo_err = disp = 0.0
    for i, t in enumerate(t_kin):
        zt = _track_at(vortex_run, float(t_prime_from_t(t, params)))
        kin_err = max(kin_err, _match(kinetic_run.diagnostics["vortices"][i], zt, degrees))
        disp = max(disp, _match(kinetic_run.diagnostics["vortices"][i], z0, degrees))
        if closure_run is not None:
            clo_err = max(clo_err, _match(closure_run.diagnostics["vortices"][i], zt, degrees))

    # phase: tier-1 phase relative to the vortex winding vs heat evolution of the same start
    mask = _far_mask(grid, z0, 5.0 * params.epsilon)

    def phase_of(state):
        return np.angle(state.moments[1] * np.exp(-1j * winding_phase(z0, degrees, grid.z)))

    phi1 = [phase_of(s) for s in kinetic_run.states]
    harmonic = solve_dirichlet_laplace(np.where(grid.boundary_mask, phi1[0], 0.0))
    phi3 = [PhaseField(grid, phi1[0])]
    for a, b in zip(t_kin[:-1], t_kin[1:]):
        phi3.append(step_heat_phase(phi3[-1], None, params, b - a))
    gap = max(float(np.max(np.abs(np.angle(np.exp(1j * (p1 - p3.values))))[mask])) for p1, p3 in zip(phi1, phi3))
    dev1 = [np.sqrt(np.mean((p - harmonic)[mask] ** 2)) for p in phi1]
    dev3 = [np.sqrt(np.mean((p.values - harmonic)[mask] ** 2)) for p in phi3]

    e_gap = float("nan")
    if closure_run is not None:
        e1 = np.asarray(kinetic_run.diagnostics["E_reduced"])
        e2 = np.asarray(closure_run.diagnostics["E_reduced"])
        e_gap = float(np.max(np.abs(e1 - e2) / np.maximum(np.abs(e1), 1e-300)))
    return TierComparison(t_kin, kin_err, clo_err, disp, gap,
                          _decay_rate(t_kin[1:], dev1[1:]), _decay_rate(t_kin[1:], dev3[1:]), e_gap, grid.h)


def compare_closure_schemes(maxent_run: Trajectory, ldg_run: Trajectory) -> float:
    """Largest distance between matched final vortices of two closure runs."""
    a = maxent_run.diagnostics["vortices"][-1]
    b = ldg_run.diagnostics["vortices"][-1]
    if len(a) != len(b):
        return math.inf
    return _match(a, [z for z, _ in b], [d for _, d in b])
