"""Finite-dimensional gradient flows: generalized inverses, the maximal-slope
residual, induced metrics, the block-inverse expansion and the reduction of
a stiff flow onto its slow manifold.

The flow is ẋ = -D(x) ∂E(x) with D symmetric positive semi-definite and
G its generalized inverse; ‖v‖²_D = vᵀDv and ‖ẋ‖²_G = ẋᵀGẋ.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError

SYMMETRY_TOL = 1e-12


def _check_symmetric(m):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise DomainError("matrix must be square")
    scale = max(1.0, np.max(np.abs(m)))
    if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * scale:
        raise DomainError("matrix must be symmetric")
    return 0.5 * (m + m.T)


def generalized_inverse(m, rank_tol: float = 1e-10) -> np.ndarray:
    """Inverse of a symmetric matrix on its range (eigenvalues below
    rank_tol·λ_max in magnitude are treated as kernel)."""
    m = _check_symmetric(m)
    w, v = np.linalg.eigh(m)
    top = np.max(np.abs(w)) if w.size else 0.0
    keep = np.abs(w) > rank_tol * top if top > 0 else np.zeros(w.shape, dtype=bool)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (v * inv) @ v.T


@dataclass(frozen=True)
class SampledCurve:
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.points, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if t.ndim != 1 or t.size < 2 or x.shape[0] != t.size:
            raise DomainError("need at least two samples with matching times")
        if np.any(np.diff(t) <= 0):
            raise DomainError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", x)

    def velocity(self) -> np.ndarray:
        """Centered differences inside, one-sided at the ends."""
        return np.gradient(self.points, self.times, axis=0, edge_order=1)


def _fd_gradient(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2.0 * e[i])
    return g


def maximal_slope_residual(curve: SampledCurve, energy: Callable, mobility: Callable,
                           gradient: Optional[Callable] = None, range_tol: float = 1e-8) -> float:
    """E(0) - E(T) - ½∫(‖∂E‖²_D + ‖ẋ‖²_G) dt along a sampled curve.

    Nonpositive for every admissible curve (up to quadrature error) and
    zero exactly on solutions of ẋ = -D ∂E.  Raises DomainError when the
    velocity leaves the range of D.
    """
    grad = gradient or (lambda x: _fd_gradient(energy, x))
    vel = curve.velocity()
    integrand = np.empty(curve.times.size)
    for i, (x, v) in enumerate(zip(curve.points, vel)):
        d = _check_symmetric(mobility(x))
        g = generalized_inverse(d)
        leak = v - d @ (g @ v)
        if np.linalg.norm(leak) > range_tol * max(1.0, np.linalg.norm(v)):
            raise DomainError(f"velocity leaves the range of D at sample {i}")
        de = np.asarray(grad(x), dtype=float)
        integrand[i] = de @ d @ de + v @ g @ v
    dissipation = 0.5 * np.trapezoid(integrand, curve.times)
    return float(energy(curve.points[0]) - energy(curve.points[-1]) - dissipation)


def induced_metric(jacobian, g) -> np.ndarray:
    """G̃ = Jᵀ G J for the embedding Jacobian J = ∂χ/∂y (n x m, full column rank)."""
    j = np.atleast_2d(np.asarray(jacobian, dtype=float))
    if j.shape[0] < j.shape[1]:
        j = j.reshape(-1, j.shape[-1])
    g = _check_symmetric(g)
    if g.shape[0] != j.shape[0]:
        raise DomainError("metric and Jacobian dimensions differ")
    if np.linalg.matrix_rank(j) < j.shape[1]:
        raise DomainError("Jacobian is rank deficient")
    out = j.T @ g @ j
    return 0.5 * (out + out.T)


def _blocks(a11, b_blocks, c_blocks):
    a11 = np.atleast_2d(np.asarray(a11, dtype=float))
    b11, b12, b22 = (np.atleast_2d(np.asarray(b, dtype=float)) for b in b_blocks)
    if c_blocks is None:
        c11, c12, c22 = np.zeros_like(b11), np.zeros_like(b12), np.zeros_like(b22)
    else:
        c11, c12, c22 = (np.atleast_2d(np.asarray(c, dtype=float)) for c in c_blocks)
    for m in (a11, b11, b22, c11, c22):
        _check_symmetric(m)
    if b12.shape != (a11.shape[0], b22.shape[0]) or c12.shape != b12.shape:
        raise DomainError("off-diagonal blocks must be p x q")
    return a11, (b11, b12, b22), (c11, c12, c22)


def assemble_block_matrix(a11, b_blocks, c_blocks, delta: float) -> np.ndarray:
    """A = (1/δ)[A11 0; 0 0] + [B11 B12; B21 B22] + δ[C11 C12; C21 C22], B21 = B12ᵀ."""
    a11, (b11, b12, b22), (c11, c12, c22) = _blocks(a11, b_blocks, c_blocks)
    p = a11.shape[0]
    q = b22.shape[0]
    a = np.zeros((p + q, p + q))
    a[:p, :p] = a11 / delta
    a += np.block([[b11, b12], [b12.T, b22]])
    a += delta * np.block([[c11, c12], [c12.T, c22]])
    return a


def block_inverse_asymptotic(a11, b_blocks, c_blocks, delta: float) -> np.ndarray:
    """First-order expansion of A⁻¹ for the block matrix of assemble_block_matrix:

        A⁻¹ = [0 0; 0 B22⁻¹] + δ[A11⁻¹ D12; D21 D22] + O(δ²),
        D12 = -A11⁻¹ B12 B22⁻¹ = D21ᵀ,
        D22 = -B22⁻¹ (C22 - B21 A11⁻¹ B12) B22⁻¹.

    ``b_blocks`` is (B11, B12, B22) and ``c_blocks`` (C11, C12, C22) or None.
    """
    a11, (b11, b12, b22), (c11, c12, c22) = _blocks(a11, b_blocks, c_blocks)
    try:
        a_inv = np.linalg.inv(a11)
        b_inv = np.linalg.inv(b22)
    except np.linalg.LinAlgError as exc:
        raise DomainError("A11 and B22 must be invertible") from exc
    if np.linalg.cond(a11) > 1e14 or np.linalg.cond(b22) > 1e14:
        raise DomainError("A11 and B22 must be invertible")
    d12 = -a_inv @ b12 @ b_inv
    d22 = -b_inv @ (c22 - b12.T @ a_inv @ b12) @ b_inv
    p = a11.shape[0]
    q = b22.shape[0]
    lead = np.zeros((p + q, p + q))
    lead[p:, p:] = b_inv
    return lead + delta * np.block([[a_inv, d12], [d12.T, d22]])


@dataclass(frozen=True)
class ReductionProblem:
    """E^ε(x) = U(x) + V(ζ(x))/ε with slow manifold M = {ζ = 0} = χ(chart).

    ``eta`` maps points near M to chart coordinates (η(χ(y)) = y) and
    ``in_chart`` says whether a point is still inside the chart domain.
    ``mobility`` defaults to the identity.
    """

    u: Callable
    grad_u: Callable
    v: Callable
    grad_v: Callable
    zeta: Callable
    jac_zeta: Callable
    chi: Callable
    jac_chi: Callable
    eta: Callable
    jac_eta: Callable
    in_chart: Callable = lambda x: True
    mobility: Optional[Callable] = None

    def d(self, x):
        return np.eye(np.size(x)) if self.mobility is None else np.asarray(self.mobility(x), dtype=float)


def circle_problem() -> ReductionProblem:
    """M = unit circle in R², U = x₁, V(ζ) = ζ², ζ = |x| - 1; reduced flow θ̇ = sin θ."""
    return ReductionProblem(
        u=lambda x: x[0],
        grad_u=lambda x: np.array([1.0, 0.0]),
        v=lambda z: float(np.sum(np.square(z))),
        grad_v=lambda z: 2.0 * np.atleast_1d(z),
        zeta=lambda x: np.array([np.hypot(x[0], x[1]) - 1.0]),
        jac_zeta=lambda x: (np.asarray(x) / np.hypot(x[0], x[1]))[None, :],
        chi=lambda y: np.array([np.cos(y[0]), np.sin(y[0])]),
        jac_chi=lambda y: np.array([[-np.sin(y[0])], [np.cos(y[0])]]),
        eta=lambda x: np.array([np.arctan2(x[1], x[0])]),
        jac_eta=lambda x: (np.array([-x[1], x[0]]) / (x[0] ** 2 + x[1] ** 2))[None, :],
        in_chart=lambda x: np.hypot(x[0], x[1]) > 0.25,
    )


@dataclass
class ReductionReport:
    epsilons: list
    distances: list
    orthogonality: float
    times: np.ndarray
    reduced: np.ndarray

    @property
    def monotone(self) -> bool:
        """Distances nonincreasing as ε decreases along the requested list."""
        order = np.argsort(self.epsilons)[::-1]
        d = np.asarray(self.distances)[order]
        return bool(np.all(np.diff(d) <= 0.0))

    def csv_lines(self):
        yield "epsilon,sup_distance"
        for e, dist in zip(self.epsilons, self.distances):
            yield "%.12e,%.12e" % (e, dist)


def reduced_rhs(problem: ReductionProblem, y):
    """ẏ = -D̃ ∂_y Ũ with D̃ the generalized inverse of the induced metric."""
    j = problem.jac_chi(y)
    x = problem.chi(y)
    g_tilde = induced_metric(j, generalized_inverse(problem.d(x)))
    return -generalized_inverse(g_tilde) @ (j.T @ problem.grad_u(x))


def reduction_demo(problem: ReductionProblem, epsilon_list, x0, t_end: float = 2.0,
                   n_samples: int = 201, ortho_tol: float = 1e-8) -> ReductionReport:
    """Compare the stiff flow ẋ = -D ∂E^ε with the reduced flow on M for each ε."""
    x0 = np.asarray(x0, dtype=float)
    times = np.linspace(0.0, t_end, n_samples)
    y0 = problem.eta(x0)
    red = solve_ivp(lambda t, y: reduced_rhs(problem, y), (0.0, t_end), y0,
                    t_eval=times, method="DOP853", rtol=1e-12, atol=1e-12)
    if not red.success:
        raise DomainError(f"reduced flow failed: {red.message}")
    on_m = np.array([problem.chi(y) for y in red.y.T])

    ortho = 0.0
    for y in red.y.T[:: max(1, n_samples // 20)]:
        x = problem.chi(y)
        ortho = max(ortho, float(np.max(np.abs(problem.jac_zeta(x) @ problem.d(x) @ problem.jac_eta(x).T))))
    if ortho > ortho_tol:
        raise DomainError(f"∂ζ D ∂ηᵀ = {ortho:.3g} is not zero: fast and slow directions are not orthogonal")

    distances = []
    for eps in epsilon_list:
        def rhs(t, x, eps=eps):
            dz = problem.grad_v(problem.zeta(x)) @ problem.jac_zeta(x)
            return -problem.d(x) @ (problem.grad_u(x) + dz / eps)

        full = solve_ivp(rhs, (0.0, t_end), x0, t_eval=times, method="Radau", rtol=1e-10, atol=1e-12)
        if not full.success:
            raise DomainError(f"full flow failed at ε = {eps:g}: {full.message}")
        if not all(problem.in_chart(x) for x in full.y.T):
            raise DomainError(f"trajectory left the chart at ε = {eps:g}")
        distances.append(float(np.max(np.linalg.norm(full.y.T - on_m, axis=1))))
    return ReductionReport(list(epsilon_list), distances, ortho, times, red.y.T)
