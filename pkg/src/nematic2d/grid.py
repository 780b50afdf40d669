"""Rectangular grids, complex fields, energies and vortex bookkeeping.

Arrays are indexed ``[i, j]`` with ``i`` along x and ``j`` along y
(``numpy.meshgrid(..., indexing="ij")``).  Moment stacks carry the moment
index first: ``moments[k, i, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError
from .specfun import NematicParams, bessel_ratio, lambda_of, log_i0, w_gamma

_SMALL_R = 1e-6


@dataclass(frozen=True)
class Grid2D:
    """Uniform node grid on [x0, x0 + lx] x [y0, y0 + ly] with square cells.

    ``boundary_psi`` maps complex boundary positions to the anchoring phase
    ψ(z) (radians); ``None`` means the boundary keeps whatever values the
    initial state carries.
    """

    nx: int
    ny: int
    lx: float
    ly: float
    x0: Optional[float] = None
    y0: Optional[float] = None
    boundary_psi: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise DomainError("grid needs at least 2 nodes per direction")
        if self.lx <= 0 or self.ly <= 0:
            raise DomainError("grid extents must be positive")
        hx = self.lx / (self.nx - 1)
        hy = self.ly / (self.ny - 1)
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            raise DomainError(f"cells must be square: hx={hx:g}, hy={hy:g}")
        if self.x0 is None:
            object.__setattr__(self, "x0", -0.5 * self.lx)
        if self.y0 is None:
            object.__setattr__(self, "y0", -0.5 * self.ly)

    @classmethod
    def square(cls, n, length, center=0j, boundary_psi=None):
        return cls(n, n, length, length, center.real - 0.5 * length,
                   center.imag - 0.5 * length, boundary_psi)

    def with_boundary(self, boundary_psi):
        return Grid2D(self.nx, self.ny, self.lx, self.ly, self.x0, self.y0, boundary_psi)

    @property
    def h(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def x(self):
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def y(self):
        return self.y0 + self.h * np.arange(self.ny)

    @property
    def z(self):
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return X + 1j * Y

    @property
    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask

    def boundary_indices(self):
        """Boundary node indices (i, j) in counterclockwise order, starting at (0, 0)."""
        nx, ny = self.nx, self.ny
        idx = [(i, 0) for i in range(nx - 1)]
        idx += [(nx - 1, j) for j in range(ny - 1)]
        idx += [(i, ny - 1) for i in range(nx - 1, 0, -1)]
        idx += [(0, j) for j in range(ny - 1, 0, -1)]
        ii, jj = zip(*idx)
        return np.array(ii), np.array(jj)

    def quadrature_weights(self):
        """Trapezoidal weights (including h^2) for integrals over the rectangle."""
        wx = np.ones(self.nx)
        wy = np.ones(self.ny)
        wx[[0, -1]] = 0.5
        wy[[0, -1]] = 0.5
        return self.h * self.h * np.outer(wx, wy)

    def integrate(self, values) -> float:
        return float(np.sum(self.quadrature_weights() * values))

    def distance_to_boundary(self, z) -> np.ndarray:
        z = np.asarray(z)
        return np.minimum.reduce([
            z.real - self.x0, self.x0 + self.lx - z.real,
            z.imag - self.y0, self.y0 + self.ly - z.imag,
        ])


@dataclass
class ComplexField:
    """Complex values sampled on the nodes of a grid."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise DomainError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")

    def conj(self) -> "ComplexField":
        return ComplexField(self.grid, np.conj(self.values))

    @property
    def amplitude(self):
        return np.abs(self.values)

    @property
    def phase(self):
        return np.angle(self.values)


@dataclass
class MomentState:
    """Truncated stack of orientation moments n^(k), k = 0..K."""

    grid: Grid2D
    moments: np.ndarray

    def __post_init__(self):
        self.moments = np.asarray(self.moments, dtype=complex)
        if self.moments.ndim != 3 or self.moments.shape[1:] != self.grid.shape:
            raise DomainError("moments must have shape (K+1, nx, ny)")
        if self.moments.shape[0] < 2:
            raise DomainError("need at least the moments k = 0 and k = 1")

    @property
    def k_max(self) -> int:
        return self.moments.shape[0] - 1

    def field(self, k) -> ComplexField:
        return ComplexField(self.grid, self.moments[k])

    @property
    def order_parameter(self) -> ComplexField:
        return self.field(1)

    def copy(self) -> "MomentState":
        return MomentState(self.grid, self.moments.copy())


def _values(f):
    return f.values if isinstance(f, ComplexField) else np.asarray(f)


def laplacian(f, h):
    """Five-point Laplacian; boundary nodes use the mirrored interior neighbour as ghost.

    The mirror ghost makes -h²Δ_h, weighted by the trapezoid rule, the exact
    derivative of :func:`gradient_energy`.
    """
    p = np.pad(f, 1, mode="reflect")
    return (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4.0 * f) / (h * h)


def apply_elastic_operator(f: ComplexField, params: NematicParams) -> ComplexField:
    """L f = ε² Δf + γ f with the five-point Laplacian."""
    v = f.values
    return ComplexField(f.grid, params.epsilon ** 2 * laplacian(v, f.grid.h) + params.gamma * v)


def _check_amplitudes(r):
    if np.any(~np.isfinite(r)) or np.any(r >= 1.0):
        raise DomainError("order parameter must satisfy |n| < 1 everywhere")


def gradient_energy(values, grid: Grid2D) -> float:
    """∫ |∇n|² dv from edge differences, trapezoidal in the transverse direction."""
    wx = np.ones(grid.nx)
    wy = np.ones(grid.ny)
    wx[[0, -1]] = 0.5
    wy[[0, -1]] = 0.5
    dx = np.abs(np.diff(values, axis=0)) ** 2
    dy = np.abs(np.diff(values, axis=1)) ** 2
    return float(np.sum(dx * wy[None, :]) + np.sum(dy * wx[:, None]))


def reduced_energy(n: ComplexField, params: NematicParams) -> float:
    """N(n) = ∫ [ε²/2 |∇n|² + W^γ(|n|)] dv."""
    r = np.abs(n.values)
    _check_amplitudes(r)
    grad = 0.5 * params.epsilon ** 2 * gradient_energy(n.values, n.grid)
    return grad + n.grid.integrate(w_gamma(r, params))


def potential_force(values, params: NematicParams):
    """(Λ(r) - γr) n / (2r): the δ/δn̄ derivative of W^γ(|n|), finite at r = 0."""
    r = np.abs(values)
    _check_amplitudes(r)
    lam = lambda_of(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(r > _SMALL_R, (lam - params.gamma * r) / r, 2.0 - params.gamma + r * r)
    return 0.5 * slope * values


def reduced_energy_derivative(n: ComplexField, params: NematicParams) -> ComplexField:
    """δN/δn̄ = -(ε²/2) Δn + (Λ(r) - γr) n / (2r)."""
    v = n.values
    out = -0.5 * params.epsilon ** 2 * laplacian(v, n.grid.h) + potential_force(v, params)
    return ComplexField(n.grid, out)


def equilibrium_moments(n, k: int):
    """k-th moment of the locally equilibrated density: I_k(Λ(r))/I_0(Λ(r)) e^{ik arg n}.

    Accepts a ComplexField or a plain array and returns the same kind.
    """
    v = _values(n)
    r = np.abs(v)
    _check_amplitudes(r)
    if k == 0:
        out = np.ones_like(v, dtype=complex)
    else:
        ratio = bessel_ratio(k, lambda_of(r))
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(r > 0, v / np.where(r > 0, r, 1.0), 0.0)
        out = ratio * unit ** k
    return ComplexField(n.grid, out) if isinstance(n, ComplexField) else out


def equilibrium_state(n: ComplexField, k_max: int) -> MomentState:
    moments = np.stack([equilibrium_moments(n.values, k) for k in range(k_max + 1)])
    return MomentState(n.grid, moments)


def phi_nodes(m: int):
    return 2.0 * np.pi * np.arange(m) / m


def equilibrium_density(n, m: int):
    """Samples of the exponential-family density ρ̂[n](φ) at m uniform angles (last axis)."""
    v = _values(n)
    r = np.abs(v)
    _check_amplitudes(r)
    lam = lambda_of(r)[..., None]
    phi = phi_nodes(m)
    c = np.cos(2.0 * phi - np.angle(v)[..., None])
    return np.exp(lam * c - log_i0(lam)) / (2.0 * np.pi)


def density_from_moments(moments, m: int = 128, negative_tol: float = 1e-8, tail: Optional[str] = None):
    """Reconstruct ρ(φ) = (1/2π)[1 + 2 Σ_k Re(conj(n^(k)) e^{2ikφ})] on m angles.

    With ``tail="equilibrium"`` the moments above K are taken from the
    exponential family of n^(1) instead of zero, i.e. the density is ρ̂[n]
    corrected by the deviations of the retained moments.  Small negative
    overshoots (above -negative_tol) are clipped and the density
    renormalised; anything larger raises DomainError.
    """
    moments = np.asarray(moments)
    k_max = moments.shape[0] - 1
    if m <= 2 * k_max:
        raise DomainError("need more angles than twice the highest moment")
    phi = phi_nodes(m)
    k = np.arange(1, k_max + 1)
    basis = np.exp(2j * np.outer(k, phi))  # (K, m)
    if tail == "equilibrium":
        ref = np.stack([equilibrium_moments(moments[1], kk) for kk in k])
        series = np.tensordot(np.conj(moments[1:] - ref), basis, axes=(0, 0)).real
        rho = equilibrium_density(moments[1], m) + series / np.pi
    elif tail is None:
        series = np.tensordot(np.conj(moments[1:]), basis, axes=(0, 0)).real
        rho = (1.0 + 2.0 * series) / (2.0 * np.pi)
    else:
        raise ValueError(f"unknown tail {tail!r}")
    low = rho.min()
    if low < -negative_tol:
        raise DomainError(f"reconstructed density is negative ({low:.3g})")
    if low < 0:
        rho = np.clip(rho, 0.0, None)
        rho /= rho.sum(axis=-1, keepdims=True) * (2.0 * np.pi / m)
    return rho


def relative_entropy_density(density, n_values):
    """Pointwise S(ρ|ρ̂[n]) = ∫ ln(ρ/ρ̂) ρ dφ on the uniform angle quadrature."""
    density = np.asarray(density, dtype=float)
    if np.any(density < 0):
        raise DomainError("density samples must be nonnegative")
    m = density.shape[-1]
    v = np.asarray(n_values)
    r = np.abs(v)
    _check_amplitudes(r)
    lam = lambda_of(r)[..., None]
    log_ref = lam * np.cos(2.0 * phi_nodes(m) - np.angle(v)[..., None]) - log_i0(lam) - np.log(2.0 * np.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(density > 0, density * (np.log(density) - log_ref), 0.0)
    return integrand.sum(axis=-1) * (2.0 * np.pi / m)


def relative_entropy(density, n: ComplexField) -> float:
    """∫_Ω S(ρ|ρ̂[n]) dv; ``density`` has shape (nx, ny, M)."""
    return n.grid.integrate(relative_entropy_density(density, n.values))


def density_order_parameter(density):
    m = density.shape[-1]
    return (density * np.exp(2j * phi_nodes(m))).sum(axis=-1) * (2.0 * np.pi / m)


def onsager_energy_direct(density, grid: Grid2D, params: NematicParams) -> float:
    """Total free energy straight from the Onsager entropy, the double-angle
    interaction sum and the elastic term (O(M²) per node)."""
    density = np.asarray(density, dtype=float)
    m = density.shape[-1]
    dphi = 2.0 * np.pi / m
    phi = phi_nodes(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(density > 0, density * np.log(2.0 * np.pi * density), 0.0).sum(axis=-1) * dphi
    kernel = np.cos(2.0 * (phi[:, None] - phi[None, :]))
    inter = np.einsum("...a,ab,...b->...", density, kernel, density) * dphi * dphi
    local = ent - 0.5 * params.gamma * inter + params.c_gamma
    n = density_order_parameter(density)
    elastic = 0.5 * params.epsilon ** 2 * gradient_energy(n, grid)
    return grid.integrate(local) + elastic


def total_energy(state: MomentState, params: NematicParams, m: int = 128, tail: Optional[str] = None):
    """Total energy through the decomposition E = N(n) + ∫ S(ρ|ρ̂[n]).

    Returns (E_total, E_reduced, S_rel).
    """
    n = state.order_parameter
    e_red = reduced_energy(n, params)
    rho = density_from_moments(state.moments, m, tail=tail)
    s_rel = relative_entropy(rho, n)
    return e_red + s_rel, e_red, s_rel


def winding_phase(positions, degrees, z):
    """Σ d_k arg(z - z_k) (each term in (-π, π])."""
    z = np.asarray(z)
    total = np.zeros(z.shape)
    for zk, dk in zip(positions, degrees):
        total = total + dk * np.angle(z - zk)
    return total


def multi_vortex_field(cfg, phase, params: NematicParams, grid: Grid2D, core: Optional[float] = None) -> ComplexField:
    """r_eq exp{iφ(z) + i Σ d_k arg(z - z_k)} on the grid.

    ``cfg`` needs ``positions`` and ``degrees``.  With ``core`` set, the
    amplitude is multiplied by Π_k min(1, |z - z_k|/core), a linear-ramp
    core that keeps |n| < 1 and makes the energy finite.
    """
    positions = np.asarray(cfg.positions, dtype=complex)
    for a in range(len(positions)):
        for b in range(a + 1, len(positions)):
            if abs(positions[a] - positions[b]) == 0.0:
                raise DomainError("vortex positions must be pairwise distinct")
    z = grid.z
    phi = np.zeros(grid.shape) if phase is None else np.broadcast_to(_values(phase).real, grid.shape)
    amp = np.full(grid.shape, params.r_eq)
    if core is not None:
        for zk in positions:
            amp = amp * np.minimum(1.0, np.abs(z - zk) / core)
    return ComplexField(grid, amp * np.exp(1j * (phi + winding_phase(positions, cfg.degrees, z))))


def plaquette_winding(values):
    """Winding number of arg n around every grid plaquette, shape (nx-1, ny-1)."""
    a = values[:-1, :-1]
    b = values[1:, :-1]
    c = values[1:, 1:]
    d = values[:-1, 1:]
    turn = (np.angle(b * np.conj(a)) + np.angle(c * np.conj(b))
            + np.angle(d * np.conj(c)) + np.angle(a * np.conj(d)))
    return np.rint(turn / (2.0 * np.pi)).astype(int)


def detect_vortices(n: ComplexField):
    """Plaquettes with winding ±1, reported as (center position, degree)."""
    w = plaquette_winding(n.values)
    g = n.grid
    out = []
    for i, j in zip(*np.nonzero(w)):
        zc = complex(g.x0 + (i + 0.5) * g.h, g.y0 + (j + 0.5) * g.h)
        out.append((zc, int(w[i, j])))
    return out


def boundary_order_parameter(grid: Grid2D, params: NematicParams):
    """r_eq e^{iψ} on the boundary nodes (zeros elsewhere); None without ψ."""
    if grid.boundary_psi is None:
        return None
    out = np.zeros(grid.shape, dtype=complex)
    mask = grid.boundary_mask
    psi = np.asarray(grid.boundary_psi(grid.z[mask]), dtype=float)
    out[mask] = params.r_eq * np.exp(1j * psi)
    return out
