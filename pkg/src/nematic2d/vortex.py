"""Tier-3 asymptotic dynamics: the multi-vortex potential, the vortex ODE,
the harmonic and heat evolution of the phase φ, and the mobility diagnostic.

Complex derivatives follow ∂_z̄ = (∂_x + i∂_y)/2, so the vortex law
ż_k = -∂_{z̄_k} U moves z_k along -(∇U)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import DomainError
from .grid import Grid2D, winding_phase
from .specfun import NematicParams, mobility_factor
from .trajectory import Trajectory


def _wrap(a):
    """Map angles to (-π, π]."""
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


@dataclass(frozen=True)
class VortexConfiguration:
    """Vortex positions and degrees plus the boundary data entering U.

    ``boundary_points`` are the vertices of a closed counterclockwise
    polygon approximating ∂Ω (the last vertex connects back to the first)
    and ``boundary_psi`` the anchoring phase ψ at those vertices.
    """

    positions: np.ndarray
    degrees: np.ndarray
    boundary_points: Optional[np.ndarray] = None
    boundary_psi: Optional[np.ndarray] = None
    free_space: bool = False

    def __post_init__(self):
        pos = np.atleast_1d(np.asarray(self.positions, dtype=complex))
        deg = np.atleast_1d(np.asarray(self.degrees, dtype=int))
        if pos.shape != deg.shape or pos.ndim != 1:
            raise DomainError("positions and degrees must be 1-D and of equal length")
        if np.any(np.abs(deg) != 1):
            raise DomainError("degrees must be +1 or -1")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "degrees", deg)
        _check_distinct(pos)
        if self.free_space:
            return
        if self.boundary_points is None or self.boundary_psi is None:
            raise DomainError("boundary data required unless free_space is set")
        w = np.asarray(self.boundary_points, dtype=complex)
        psi = np.asarray(self.boundary_psi, dtype=float)
        if w.shape != psi.shape or w.ndim != 1 or w.size < 3:
            raise DomainError("boundary points and ψ samples must be matching 1-D arrays")
        object.__setattr__(self, "boundary_points", w)
        object.__setattr__(self, "boundary_psi", psi)
        winding = np.sum(_wrap(np.roll(psi, -1) - psi)) / (2.0 * np.pi)
        if abs(winding - deg.sum()) > 1e-6:
            raise DomainError(
                f"boundary winding {winding:.3g} differs from the total degree {deg.sum()}"
            )

    @property
    def n_vortices(self) -> int:
        return self.positions.size

    def moved(self, positions) -> "VortexConfiguration":
        return replace(self, positions=np.asarray(positions, dtype=complex))

    @classmethod
    def free(cls, positions, degrees):
        return cls(positions, degrees, free_space=True)

    @classmethod
    def on_disk(cls, positions, degrees, psi: Callable, radius=1.0, center=0j, m_b=1024):
        w = center + radius * np.exp(2j * np.pi * np.arange(m_b) / m_b)
        return cls(positions, degrees, w, psi(w))

    @classmethod
    def on_grid(cls, positions, degrees, grid: Grid2D, psi: Optional[Callable] = None, m_b=1024):
        """Boundary polygon along the grid rectangle, m_b points of uniform arclength."""
        psi = psi or grid.boundary_psi
        if psi is None:
            raise DomainError("grid carries no boundary phase")
        w = rectangle_polygon(grid.x0, grid.y0, grid.lx, grid.ly, m_b)
        return cls(positions, degrees, w, psi(w))


def rectangle_polygon(x0, y0, lx, ly, m_b):
    """m_b counterclockwise points of uniform arclength on a rectangle, starting at (x0, y0)."""
    s = np.arange(m_b) * (2.0 * (lx + ly) / m_b)
    corners = np.array([x0 + 1j * y0, x0 + lx + 1j * y0, x0 + lx + 1j * (y0 + ly), x0 + 1j * (y0 + ly)])
    edges = np.array([lx, ly, lx, ly])
    starts = np.concatenate([[0.0], np.cumsum(edges)[:-1]])
    directions = np.array([1, 1j, -1, -1j])
    side = np.minimum(np.searchsorted(starts, s, side="right") - 1, 3)
    return corners[side] + directions[side] * (s - starts[side])


def _check_distinct(pos):
    if pos.size > 1:
        d = np.abs(pos[:, None] - pos[None, :])
        np.fill_diagonal(d, np.inf)
        if np.min(d) == 0.0:
            raise DomainError("vortex positions must be pairwise distinct")


def _segments(cfg: VortexConfiguration):
    w = cfg.boundary_points
    w_next = np.roll(w, -1)
    mid = 0.5 * (w + w_next)
    dpsi = _wrap(np.roll(cfg.boundary_psi, -1) - cfg.boundary_psi)
    return w, w_next, mid, dpsi


def multivortex_potential(cfg: VortexConfiguration) -> float:
    """U = -π Σ_{j≠k} d_k d_j ln|z_k - z_j| + Σ_k d_k ∮ ln|z - z_k| dψ
    - ½ Σ_{j,k} d_k d_j ∮ ln|z - z_k| d arg(z - z_j), by the midpoint rule."""
    z, d = cfg.positions, cfg.degrees
    _check_distinct(z)
    diff = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(diff, 1.0)
    u = -np.pi * np.sum(np.outer(d, d) * np.log(diff))
    if cfg.free_space:
        return float(u)
    w, w_next, mid, dpsi = _segments(cfg)
    logs = np.log(np.abs(mid[None, :] - z[:, None]))                  # (N, m_b)
    darg = np.angle((w_next[None, :] - z[:, None]) / (w[None, :] - z[:, None]))
    u += np.sum(d[:, None] * logs * dpsi[None, :])
    winding_weights = d @ darg                                         # Σ_j d_j Δarg_j
    u -= 0.5 * np.sum(d[:, None] * logs * winding_weights[None, :])
    return float(u)


def potential_gradient(cfg: VortexConfiguration) -> np.ndarray:
    """∂_{z̄_k} U for every vortex (complex array)."""
    z, d = cfg.positions, cfg.degrees
    _check_distinct(z)
    diff = np.conj(z[:, None] - z[None, :])
    np.fill_diagonal(diff, np.inf)
    grad = -np.pi * d * np.sum(d[None, :] / diff, axis=1)
    if cfg.free_space:
        return grad
    w, w_next, mid, dpsi = _segments(cfg)
    inv_mid = 1.0 / np.conj(mid[None, :] - z[:, None])               # 1/(m̄ - z̄_k)
    darg = np.angle((w_next[None, :] - z[:, None]) / (w[None, :] - z[:, None]))
    winding_weights = d @ darg
    logs = np.log(np.abs(mid[None, :] - z[:, None]))
    # Σ_k d_k ∮ ln|z - z_k| dψ
    grad += d * np.sum(-0.5 * inv_mid * dpsi[None, :], axis=1)
    # -½ Σ_{j,k}: through ln|z - z_q|
    grad += -0.5 * d * np.sum(-0.5 * inv_mid * winding_weights[None, :], axis=1)
    # -½ Σ_{j,k}: through the weights Δarg(z - z_q)
    ddarg = (1.0 / (2j * np.conj(w_next[None, :] - z[:, None]))
             - 1.0 / (2j * np.conj(w[None, :] - z[:, None])))
    log_weights = d @ logs                                             # Σ_k d_k ln|m_s - z_k|
    grad += -0.5 * d * np.sum(log_weights[None, :] * ddarg, axis=1)
    return grad


def boundary_distance(cfg: VortexConfiguration, z=None) -> np.ndarray:
    """Distance from each vortex to the boundary polygon (inf in free space)."""
    z = cfg.positions if z is None else np.asarray(z, dtype=complex)
    if cfg.free_space:
        return np.full(z.shape, np.inf)
    a = cfg.boundary_points
    b = np.roll(a, -1)
    seg = b - a
    t = np.real((z[:, None] - a[None, :]) * np.conj(seg[None, :])) / np.abs(seg[None, :]) ** 2
    t = np.clip(t, 0.0, 1.0)
    return np.min(np.abs(z[:, None] - (a[None, :] + t * seg[None, :])), axis=1)


def t_prime_from_t(t, params: NematicParams):
    """Vortex clock t' = -8t/(π τ_γ ln ε) from the phase-relaxation clock t."""
    return -8.0 * np.asarray(t) / (math.pi * params.tau_gamma * math.log(params.epsilon))


def t_from_t_prime(t_prime, params: NematicParams):
    return -np.asarray(t_prime) * math.pi * params.tau_gamma * math.log(params.epsilon) / 8.0


def _velocity(cfg, z):
    return -potential_gradient(cfg.moved(z))


def run_vortex_dynamics(cfg: VortexConfiguration, t_end: float, dt: float,
                        margin: float = 0.0, output_every: int = 1) -> Trajectory:
    """RK4 integration of ż_k = -∂_{z̄_k} U on the t' clock.

    Halts with status ``close-approach`` when a pair distance drops below
    four times the distance a vortex covers in one step, or when a vortex
    comes within ``margin`` of the boundary (use 3h for grid-coupled runs).
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    n_steps = int(round(t_end / dt))
    z = cfg.positions.copy()
    traj = Trajectory(meta={"clock": "t_prime", "dt": dt, "degrees": cfg.degrees.tolist()})
    traj.record(0.0, z.copy(), U=multivortex_potential(cfg))
    t = 0.0
    for step in range(1, n_steps + 1):
        v = _velocity(cfg, z)
        halt = _too_close(z, v, dt) or np.any(boundary_distance(cfg, z) < margin)
        if halt:
            traj.status = "close-approach"
            if not traj.times or traj.times[-1] != t:
                traj.record(t, z.copy(), U=multivortex_potential(cfg.moved(z)))
            break
        k1 = v
        k2 = _velocity(cfg, z + 0.5 * dt * k1)
        k3 = _velocity(cfg, z + 0.5 * dt * k2)
        k4 = _velocity(cfg, z + dt * k3)
        z = z + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        t = step * dt
        if step % output_every == 0 or step == n_steps:
            traj.record(t, z.copy(), U=multivortex_potential(cfg.moved(z)))
    return traj


def _too_close(z, v, dt):
    if z.size < 2:
        return False
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    return bool(np.min(d) <= 4.0 * np.max(np.abs(v)) * dt)


@dataclass
class PhaseField:
    """Real phase φ on the grid nodes (radians)."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise DomainError("phase shape does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("phase must be finite")


def phase_boundary_trace(cfg: VortexConfiguration, grid: Grid2D) -> np.ndarray:
    """φ = ψ - Σ d_k arg(z - z_k) on the grid boundary, made single-valued.

    Returns an nx x ny array with the trace on the boundary nodes (zero
    inside).  Raises DomainError when the trace winds, i.e. the degrees do
    not match the boundary data.
    """
    if grid.boundary_psi is None:
        raise DomainError("grid carries no boundary phase ψ")
    ii, jj = grid.boundary_indices()
    zb = grid.z[ii, jj]
    raw = np.asarray(grid.boundary_psi(zb), dtype=float) - winding_phase(cfg.positions, cfg.degrees, zb)
    inc = _wrap(np.diff(np.concatenate([raw, raw[:1]])))
    if abs(inc.sum()) > 1e-6:
        raise DomainError(
            f"boundary trace winds by {inc.sum() / (2 * np.pi):.3g} turns: degrees incompatible with ψ"
        )
    trace = raw[0] + np.concatenate([[0.0], np.cumsum(inc[:-1])])
    trace -= 2.0 * np.pi * np.round(np.mean(trace) / (2.0 * np.pi))
    out = np.zeros(grid.shape)
    out[ii, jj] = trace
    return out


def _interior_laplacian(nx, ny):
    """Sparse -Δ_h·h² on the (nx-2) x (ny-2) interior nodes (Dirichlet)."""
    mx, my = nx - 2, ny - 2
    tx = sp.diags([-np.ones(mx - 1), 2.0 * np.ones(mx), -np.ones(mx - 1)], [-1, 0, 1])
    ty = sp.diags([-np.ones(my - 1), 2.0 * np.ones(my), -np.ones(my - 1)], [-1, 0, 1])
    return (sp.kron(tx, sp.identity(my)) + sp.kron(sp.identity(mx), ty)).tocsr()


def solve_dirichlet_laplace(boundary_values: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Discrete harmonic extension of the boundary values of an nx x ny array."""
    b = np.asarray(boundary_values, dtype=float)
    nx, ny = b.shape
    out = b.copy()
    if nx < 3 or ny < 3:
        return out
    rhs = np.zeros((nx - 2, ny - 2))
    rhs[0, :] += b[0, 1:-1]
    rhs[-1, :] += b[-1, 1:-1]
    rhs[:, 0] += b[1:-1, 0]
    rhs[:, -1] += b[1:-1, -1]
    a = _interior_laplacian(nx, ny)
    f = rhs.ravel()
    scale = max(np.linalg.norm(f), 1e-300)
    x, info = cg(a, f, rtol=min(tol / scale, 1e-10) if scale > 1 else tol, atol=0.0, maxiter=20 * nx * ny)
    if info != 0 or np.linalg.norm(a @ x - f) > tol * max(1.0, scale):
        raise DomainError("conjugate gradient did not reach the requested residual")
    out[1:-1, 1:-1] = x.reshape(nx - 2, ny - 2)
    return out


def solve_harmonic_phase(cfg: VortexConfiguration, grid: Grid2D) -> PhaseField:
    """Harmonic φ with the trace ψ - Σ d_k arg(z - z_k) on ∂Ω."""
    return PhaseField(grid, solve_dirichlet_laplace(phase_boundary_trace(cfg, grid)))


def phase_diffusivity(params: NematicParams, grid: Grid2D) -> float:
    """D_0 = 4/(|Ω| τ_γ)."""
    if params.tau_gamma <= 0.0:
        raise DomainError("phase diffusion needs γ > 2 (τ_γ = 0 otherwise)")
    return 4.0 / (grid.area * params.tau_gamma)


def step_heat_phase(phi: PhaseField, cfg: Optional[VortexConfiguration], params: NematicParams,
                    dt: float, cfl: float = 0.9) -> PhaseField:
    """Advance ∂_t φ = D_0 Δφ by dt (explicit, substepped below the stability limit).

    Boundary nodes keep their values, which hold the trace of ``cfg`` when
    φ came from :func:`solve_harmonic_phase` or :func:`phase_boundary_trace`;
    pass ``cfg`` to reimpose that trace explicitly.
    """
    g = phi.grid
    diff = phase_diffusivity(params, g)
    v = phi.values.copy()
    if cfg is not None:
        trace = phase_boundary_trace(cfg, g)
        v[g.boundary_mask] = trace[g.boundary_mask]
    limit = cfl * g.h ** 2 / (4.0 * diff)
    n_sub = max(1, int(math.ceil(dt / limit)))
    tau = dt / n_sub
    c = diff * tau / g.h ** 2
    for _ in range(n_sub):
        v[1:-1, 1:-1] += c * (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2] - 4.0 * v[1:-1, 1:-1])
    return PhaseField(g, v)


def mobility_integral(params: NematicParams, eps: float, h: Optional[float] = None, box: float = 1.0) -> float:
    """(1/16) ∫ [1 - 1/I_0²(Λ(r̂))]/|z|² over the square of side ``box`` centred on the vortex.

    r̂ = r_eq min(1, |z|/ε) is the linear-ramp core; midpoint rule on cells of
    size h (default ε/8) with the vortex on a cell corner.
    """
    if params.r_eq <= 0.0:
        raise DomainError("mobility diagnostic needs γ > 2")
    h = eps / 8.0 if h is None else h
    if h > eps / 8.0 * (1 + 1e-12):
        raise DomainError(f"core under-resolved: h = {h:g} > ε/8 = {eps / 8:g}")
    half = int(round(0.5 * box / h))
    c = (np.arange(-half, half) + 0.5) * h
    x, y = np.meshgrid(c, c, indexing="ij")
    rho2 = x * x + y * y
    rho = np.sqrt(rho2)
    core = rho < eps
    mob = np.full(rho.shape, params.tau_gamma)
    mob[core] = mobility_factor(params.r_eq * rho[core] / eps)
    return float(np.sum(mob / rho2) * h * h / 16.0)


def mobility_log_divergence(params: NematicParams, eps_list, h: Optional[float] = None,
                            box: float = 1.0) -> float:
    """Least-squares slope of the mobility integral against -ln ε (expected π τ_γ/8)."""
    eps = np.asarray(list(eps_list), dtype=float)
    if eps.size < 2:
        raise DomainError("need at least two values of ε")
    vals = [mobility_integral(params, e, h, box) for e in eps]
    return float(np.polyfit(-np.log(eps), vals, 1)[0])
