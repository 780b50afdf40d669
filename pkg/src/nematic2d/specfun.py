"""Modified Bessel functions, the inverse Bessel ratio Λ and the potential W^γ.

Only integer orders and real arguments are supported.  Everything is
vectorised over the argument so that the field solvers can evaluate Λ(|n|)
on a whole grid at once.

Evaluation strategy for I_ν(x), x >= 0:

* x < 20: power series Σ (x/2)^{2m+ν} / (m! (m+ν)!), summed until the
  terms fall below machine precision (all terms are positive, so there is
  no cancellation).
* x >= 20: the exponentially scaled Hankel expansion for I_0, and for
  I_ν either the same expansion (when x >= ν², where it converges to full
  precision) or a backward ratio recurrence anchored on I_0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import BesselOverflowError, DomainError

SERIES_CUTOFF = 20.0
MAX_ORDER = 64
_LOG_MAX = math.log(np.finfo(float).max)
_R_LIMIT = 1.0 - 1e-12


def _series(nu, x):
    """Unscaled I_nu(x) by its power series, x >= 0 and moderate."""
    x = np.asarray(x, dtype=float)
    q = 0.25 * x * x
    term = (0.5 * x) ** nu / math.factorial(nu)
    total = np.array(term, dtype=float, copy=True)
    m = 0
    while True:
        m += 1
        term = term * q / (m * (m + nu))
        total = total + term
        if m % 4 == 0 and (np.all(term <= 1e-17 * total) or m > 500):
            break
    return total


def _hankel_scaled(nu, x):
    """e^{-x} I_nu(x) from the large-argument expansion; needs x >= max(20, nu^2)."""
    x = np.asarray(x, dtype=float)
    mu = 4.0 * nu * nu
    term = np.ones_like(x)
    total = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, 80):
        new = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        # asymptotic series: stop once terms stop shrinking
        active &= np.abs(new) < np.abs(term)
        term = np.where(active, new, 0.0)
        total = total + term
        if not np.any(active & (np.abs(term) > 1e-17 * np.abs(total))):
            break
    return total / np.sqrt(2.0 * np.pi * x)


def _ratio_backward(nu, x):
    """I_nu(x)/I_0(x) by backward recurrence of consecutive ratios, x > 0."""
    x = np.asarray(x, dtype=float)
    if nu == 0:
        return np.ones_like(x)
    start = nu + int(2 * np.max(x, initial=0.0) ** 0.5 * 4 + np.max(x, initial=0.0)) + 40
    ratio = np.zeros_like(x)
    prod = np.ones_like(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        for m in range(start, 0, -1):
            # I_m / I_{m-1} = 1 / (2m/x + I_{m+1}/I_m)
            ratio = x / (2.0 * m + x * ratio)
            if m <= nu:
                prod = prod * ratio
    return np.where(x == 0.0, 0.0, prod)


def _ive_nonneg(nu, x):
    """e^{-x} I_nu(x) for x >= 0 (array)."""
    out = np.empty_like(x)
    small = x < SERIES_CUTOFF
    if np.any(small):
        xs = x[small]
        out[small] = _series(nu, xs) * np.exp(-xs)
    big = ~small
    if np.any(big):
        xb = x[big]
        i0 = _hankel_scaled(0, xb)
        if nu == 0:
            out[big] = i0
        else:
            direct = xb >= nu * nu
            vals = np.empty_like(xb)
            if np.any(direct):
                vals[direct] = _hankel_scaled(nu, xb[direct])
            if np.any(~direct):
                vals[~direct] = i0[~direct] * _ratio_backward(nu, xb[~direct])
            out[big] = vals
    return out


def _check_order(nu):
    if int(nu) != nu or nu < 0:
        raise DomainError(f"order must be a nonnegative integer, got {nu!r}")
    if nu > MAX_ORDER:
        raise DomainError(f"order {nu} exceeds the supported maximum {MAX_ORDER}")
    return int(nu)


def ive(nu, x):
    """Exponentially scaled modified Bessel function e^{-|x|} I_nu(x)."""
    nu = _check_order(nu)
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise DomainError("argument must be finite")
    ax = np.abs(np.atleast_1d(xa))
    val = _ive_nonneg(nu, ax)
    if nu % 2 == 1:
        val = np.where(np.atleast_1d(xa) < 0, -val, val)
    return val.reshape(xa.shape) if xa.ndim else float(val[0])


def bessel_i(nu, x):
    """Modified Bessel function of the first kind I_nu(x) for integer nu <= 64.

    Raises BesselOverflowError when the value does not fit in a float64.
    """
    scaled = np.asarray(ive(nu, x), dtype=float)
    ax = np.abs(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        log_mag = ax + np.log(np.abs(scaled))
    if np.any(log_mag > _LOG_MAX):
        raise BesselOverflowError(f"I_{nu}(x) overflows float64 for |x| = {np.max(ax):g}")
    val = scaled * np.exp(ax)
    return val if val.ndim else float(val)


def log_i0(x):
    """ln I_0(x), valid for arbitrarily large |x|."""
    ax = np.abs(np.asarray(x, dtype=float))
    return ax + np.log(ive(0, ax))


def bessel_ratio(nu, x):
    """I_nu(x) / I_0(x), computed without overflow (vectorised)."""
    nu = _check_order(nu)
    xa = np.asarray(x, dtype=float)
    ax = np.abs(np.atleast_1d(xa))
    if nu == 0:
        out = np.ones_like(ax)
    else:
        out = np.empty_like(ax)
        small = ax < SERIES_CUTOFF
        if np.any(small):
            out[small] = _series(nu, ax[small]) / _series(0, ax[small])
        big = ~small
        if np.any(big):
            xb = ax[big]
            direct = xb >= nu * nu
            vals = np.empty_like(xb)
            if np.any(direct):
                vals[direct] = _hankel_scaled(nu, xb[direct]) / _hankel_scaled(0, xb[direct])
            if np.any(~direct):
                vals[~direct] = _ratio_backward(nu, xb[~direct])
            out[big] = vals
        if nu % 2 == 1:
            out = np.where(np.atleast_1d(xa) < 0, -out, out)
    return out.reshape(xa.shape) if xa.ndim else float(out[0])


def _a10(x):
    """I_1/I_0 and its derivative 1 - A/x - A^2 on x >= 0 (arrays)."""
    a = bessel_ratio(1, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        da = np.where(x > 1e-8, 1.0 - a / x - a * a, 0.5 - 0.1875 * x * x)
    return a, da


def lambda_of(r):
    """Inverse of the Bessel ratio: Λ(r) solves I_1(Λ)/I_0(Λ) = r, |r| < 1.

    Odd and increasing, with vertical asymptotes at r = ±1.  Solved by
    Newton iteration safeguarded by a bisection bracket.
    """
    ra = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(ra)) or np.any(np.abs(ra) >= 1.0):
        raise DomainError("Λ(r) requires |r| < 1")
    if np.any(np.abs(ra) > _R_LIMIT):
        raise DomainError("Λ(r) requires |r| < 1 - 1e-12")
    s = np.abs(np.atleast_1d(ra))
    # starting guess r(2 - r^2)/(1 - r^2): exact to O(r^3) at 0 and
    # matches the 1/(2(1-r)) asymptote at 1
    x = s * (2.0 - s * s) / (1.0 - s * s)
    lo = np.zeros_like(s)
    hi = np.maximum(2.0 * x + 1.0, 1.0)
    a_hi, _ = _a10(hi)
    while np.any(a_hi < s):
        grow = a_hi < s
        hi = np.where(grow, 2.0 * hi, hi)
        a_hi, _ = _a10(hi)
    x = np.clip(x, lo, hi)
    for _ in range(100):
        a, da = _a10(x)
        f = a - s
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(da > 0, f / da, np.inf)
        new = x - step
        bad = ~np.isfinite(new) | (new <= lo) | (new >= hi)
        new = np.where(bad, 0.5 * (lo + hi), new)
        done = (np.abs(new - x) <= 1e-15 * np.maximum(1.0, x)) | (np.abs(f) <= 2e-16 * s) | (
            hi - lo <= 1e-14 * np.maximum(1.0, x)
        )
        x = np.where(f == 0, x, new)
        if np.all(done):
            break
    x = np.where(s == 0.0, 0.0, x)
    out = np.sign(np.atleast_1d(ra)) * x
    return out.reshape(ra.shape) if ra.ndim else float(out[0])


def mobility_factor(r):
    """1 - 1/I_0^2(Λ(r)); vanishes like 2r^2 at 0 and tends to 1 as r -> 1."""
    lam = lambda_of(r)
    return -np.expm1(-2.0 * log_i0(lam))


@dataclass(frozen=True)
class NematicParams:
    """Concentration, elastic modulus and the derived equilibrium quantities.

    Build instances with :func:`make_params`.
    """

    gamma: float
    epsilon: float
    r_eq: float
    tau_gamma: float
    c_gamma: float

    @property
    def lambda_eq(self) -> float:
        return self.gamma * self.r_eq


def _w_shape(r, gamma):
    lam = lambda_of(r)
    return -0.5 * gamma * r * r + r * lam - log_i0(lam)


def _check_amplitude(r):
    ra = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(ra)) or np.any(ra < 0.0) or np.any(ra >= 1.0):
        raise DomainError("W^γ is defined for r in [0, 1)")
    return ra


def w_gamma(r, params: NematicParams):
    """The potential W^γ(r) = -γr²/2 + rΛ(r) - ln I_0(Λ(r)) + C_γ on [0, 1)."""
    ra = _check_amplitude(r)
    val = _w_shape(ra, params.gamma) + params.c_gamma
    return val if np.ndim(val) else float(val)


def w_gamma_prime(r, params: NematicParams):
    """dW^γ/dr = Λ(r) - γr."""
    ra = _check_amplitude(r)
    val = lambda_of(ra) - params.gamma * ra
    return val if np.ndim(val) else float(val)


def _equilibrium_amplitude(gamma):
    if gamma <= 2.0:
        return 0.0
    # nonzero root of I_1(x)/I_0(x) = x/γ, solved for x = Λ(r_eq)
    def h(x):
        return bessel_ratio(1, x) - x / gamma

    hi = gamma
    lo = min(0.5 * gamma, 2.0 * math.sqrt(max(4.0 * (0.5 - 1.0 / gamma), 0.0)))
    while h(lo) <= 0.0:
        lo *= 0.5
        if lo < 1e-300:
            return 0.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if h(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return float(bessel_ratio(1, 0.5 * (lo + hi)))


def _normalising_constant(gamma, r_eq):
    grid = np.arange(0.0, 1.0 - 1e-4, 1e-4)
    vals = _w_shape(grid, gamma)
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    best = vals[i]
    if b > a:
        res = minimize_scalar(
            lambda t: float(_w_shape(t, gamma)),
            bracket=None,
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-13},
        )
        best = min(best, float(res.fun))
    best = min(best, float(_w_shape(r_eq, gamma)))
    return -best


def make_params(gamma: float, epsilon: float) -> NematicParams:
    """Derive r_eq, τ_γ and C_γ for concentration ``gamma`` and modulus ``epsilon``."""
    if not (gamma > 0 and math.isfinite(gamma)):
        raise DomainError(f"gamma must be positive, got {gamma!r}")
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise DomainError(f"epsilon must be positive, got {epsilon!r}")
    r_eq = _equilibrium_amplitude(float(gamma))
    x = gamma * r_eq
    tau = float(-np.expm1(-2.0 * log_i0(x))) if r_eq > 0 else 0.0
    c_gamma = _normalising_constant(float(gamma), r_eq)
    return NematicParams(float(gamma), float(epsilon), r_eq, tau, c_gamma)


def specfun_table(params: NematicParams, r_min=0.0, r_max=0.99, n=100):
    """Rows (r, Λ(r), W^γ(r), W^γ'(r)) on a uniform grid of r."""
    r = np.linspace(r_min, r_max, n)
    return np.column_stack(
        [r, lambda_of(r), w_gamma(r, params), w_gamma_prime(r, params)]
    )
