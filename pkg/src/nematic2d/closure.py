"""Tier-2 solvers: the maximal-entropy closure and the Landau-de Gennes flow.

Both act on the order parameter n alone.  The closed equation keeps the
first moment equation of the hierarchy and replaces n^(2) by its value on
the exponential family,

    ∂_t n = -4n + 2[L n - c(n) L n̄],   c(n) = (n²/r²)(1 - 2r/Λ(r)),

while the Landau-de Gennes flow is the L² gradient flow ∂_t n = -δN/δn̄.
Variational derivatives use δ/δn̄ ∫ (ε²/2)|∇n|² = -(ε²/2)Δn throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, NumericalInstabilityError
from .grid import (
    ComplexField,
    Grid2D,
    boundary_order_parameter,
    detect_vortices,
    equilibrium_moments,
    laplacian,
    potential_force,
    reduced_energy,
    reduced_energy_derivative,
)
from .specfun import NematicParams
from .trajectory import Trajectory

log = logging.getLogger(__name__)

SCHEMES = ("maxent", "ldg")
METHODS = ("euler", "if")


def closure_coefficient(n):
    """c(n) = (n²/r²)(1 - 2r/Λ(r)), the second moment on the exponential family."""
    return equilibrium_moments(n, 2)


def _elastic(v, grid: Grid2D, params: NematicParams):
    return params.epsilon ** 2 * laplacian(v, grid.h) + params.gamma * v


def closure_rhs(n: ComplexField, params: NematicParams) -> ComplexField:
    """-4n + 2[L n - c(n) L n̄] with L = ε²Δ + γ."""
    v = n.values
    ln = _elastic(v, n.grid, params)
    c = closure_coefficient(v)
    return ComplexField(n.grid, -4.0 * v + 2.0 * (ln - c * np.conj(ln)))


def ldg_rhs(n: ComplexField, params: NematicParams) -> ComplexField:
    """-δN/δn̄ = (ε²/2)Δn - (Λ(r) - γr) n/(2r)."""
    v = n.values
    return ComplexField(n.grid, 0.5 * params.epsilon ** 2 * laplacian(v, n.grid.h) - potential_force(v, params))


def gradient_form_rhs(n: ComplexField, params: NematicParams) -> ComplexField:
    """4 c(n) δN/δn - 4 δN/δn̄; algebraically identical to closure_rhs."""
    d = reduced_energy_derivative(n, params).values
    c = closure_coefficient(n.values)
    return ComplexField(n.grid, 4.0 * c * np.conj(d) - 4.0 * d)


def _linear_rate(scheme, params: NematicParams):
    # the r -> 0 linearisation of the pointwise part, used by the integrating factor
    if scheme == "maxent":
        return 2.0 * params.gamma - 4.0
    return 0.5 * params.gamma - 1.0


def stable_dt(grid: Grid2D, params: NematicParams, scheme: str, rescaled_time: bool = False) -> float:
    """Largest dt allowed by the explicit-diffusion guard."""
    bound = grid.h ** 2 / ((16.0 if scheme == "maxent" else 8.0) * params.epsilon ** 2)
    return bound * (params.epsilon ** 2 if rescaled_time else 1.0)


def _rhs(n: ComplexField, params, scheme):
    if scheme == "maxent":
        return closure_rhs(n, params).values
    return ldg_rhs(n, params).values


def step_closure(n: ComplexField, params: NematicParams, dt: float, scheme: str = "maxent",
                 method: str = "euler", rescaled_time: bool = False,
                 pinned: Optional[bool] = None) -> ComplexField:
    """One explicit step of the closed flow.

    ``method="if"`` integrates the linear rate of the pointwise part exactly
    (first-order exponential Euler).  Boundary nodes are held fixed when
    ``pinned`` (default: the grid carries boundary data).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    limit = stable_dt(n.grid, params, scheme, rescaled_time)
    if dt > limit * (1 + 1e-12):
        raise NumericalInstabilityError(f"dt = {dt:g} exceeds the stability limit {limit:g}")
    scale = params.epsilon ** 2 if rescaled_time else 1.0
    if pinned is None:
        pinned = n.grid.boundary_psi is not None
    try:
        rhs = _rhs(n, params, scheme) / scale
    except DomainError as exc:
        raise NumericalInstabilityError(f"|n| reached 1; reduce dt ({exc})") from exc
    v = n.values
    if method == "euler":
        inc = dt * rhs
    else:
        a = _linear_rate(scheme, params) / scale
        x = a * dt
        phi1 = np.expm1(x) / a if abs(x) > 1e-12 else dt
        inc = np.expm1(x) * v + phi1 * (rhs - a * v)
    if pinned:
        inc[n.grid.boundary_mask] = 0.0
    new = v + inc
    worst = np.max(np.abs(new))
    if not np.isfinite(worst) or worst >= 1.0:
        raise NumericalInstabilityError(f"|n| = {worst:.6g} reached 1; reduce dt")
    return ComplexField(n.grid, new)


@dataclass(frozen=True)
class ClosureConfig:
    params: NematicParams
    grid: Grid2D
    dt: float
    t_end: float
    scheme: str = "maxent"
    method: str = "euler"
    rescaled_time: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")


def pin_order_parameter(n: ComplexField, params: NematicParams) -> ComplexField:
    """Impose n = r_eq e^{iψ} on the boundary nodes (no-op without ψ)."""
    nb = boundary_order_parameter(n.grid, params)
    if nb is None:
        return n
    v = n.values.copy()
    mask = n.grid.boundary_mask
    v[mask] = nb[mask]
    return ComplexField(n.grid, v)


def closure_diagnostics(n: ComplexField, params: NematicParams):
    vort = detect_vortices(n)
    return {"E_reduced": reduced_energy(n, params), "n_vortices": len(vort), "vortices": vort}


def run_closure(initial: ComplexField, cfg: ClosureConfig, output_every: Optional[int] = None,
                diagnostics: bool = True) -> Trajectory:
    """Integrate the closed flow from ``initial`` (boundary pinned to ψ if the grid has it)."""
    n_steps = int(round(cfg.t_end / cfg.dt))
    if n_steps < 1:
        raise ValueError("t_end shorter than one step")
    every = output_every or n_steps
    n = pin_order_parameter(ComplexField(cfg.grid, initial.values), cfg.params)
    traj = Trajectory(meta={"clock": "rescaled" if cfg.rescaled_time else "kinetic",
                            "dt": cfg.dt, "scheme": cfg.scheme})

    def record(step, f):
        diag = closure_diagnostics(f, cfg.params) if diagnostics else {}
        traj.record(step * cfg.dt, f, **diag)

    record(0, n)
    for step in range(1, n_steps + 1):
        n = step_closure(n, cfg.params, cfg.dt, cfg.scheme, cfg.method, cfg.rescaled_time)
        if step % every == 0 or step == n_steps:
            record(step, n)
            log.debug("closure step %d/%d", step, n_steps)
    return traj
