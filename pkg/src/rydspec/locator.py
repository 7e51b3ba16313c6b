"""Self-consistent resolvent approximations for the ensemble-averaged
spectral density.

Two families are implemented, both solving a fixed-point problem for the
averaged diagonal resolvent G(z) at z = lambda + i*eps with eps walked down a
continuation schedule:

* low-concentration orders 1 and 2: z G = 1 + F1(G) [+ F2(G)], where F1 sums
  all repeated two-center loops (closed form) and F2 adds irreducible
  three-center loops (a 6-D integral, quasi-Monte Carlo for r_b > 0 and a
  fixed quadratic coefficient for r_b = 0);
* the high-concentration limit: z - 1/G = Sigma(G) with a Fourier-space
  kernel built from the second spherical Bessel function.

The spectral density is -Im(G)/pi.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special
from scipy.stats import qmc

from .analytic import COUPLING_AMP

__all__ = [
    "BranchDiscontinuityError",
    "F2_ZERO_RB_COEFF",
    "F2Integrator",
    "NonConvergence",
    "ResolventSolution",
    "SolverSettings",
    "check_f1_zero_blockade_limit",
    "dos_from_resolvent",
    "f1",
    "f2",
    "fourier_w",
    "p1",
    "p2_kernel",
    "solve_high",
    "solve_low",
]

# quadratic coefficient of the three-center generator at r_b = 0
F2_ZERO_RB_COEFF = -1.22338 + 1.63759j

_SQ3 = math.sqrt(3.0)


class BranchDiscontinuityError(ArithmeticError):
    """Closed-form two-center generator disagrees with its r_b -> 0 limit."""


class NonConvergence(RuntimeError):
    """A grid point failed to reach the residual tolerance."""


@dataclass(frozen=True)
class SolverSettings:
    """Continuation and quadrature knobs shared by the solvers."""

    eps_schedule: tuple[float, ...] = (0.2, 0.1, 0.05, 0.03, 0.02)
    residual_tol: float = 1e-10
    fp_max_iter: int = 2000
    cma_popsize: int = 10
    cma_max_iter: int = 600
    f2_samples_log2: int = 16
    f2_scrambles: int = 8
    f2_seed: int = 20_240_901
    highcon_xmax: float = 200.0
    highcon_panels: int = 128
    highcon_panel_nodes: int = 12
    highcon_u_nodes: int = 64
    stability_rel: float = 0.01
    stability_floor: float = 0.10

    def __post_init__(self):
        eps = self.eps_schedule
        if len(eps) < 1 or any(e < 0 for e in eps):
            raise ValueError("eps schedule must be nonnegative")
        if any(nxt >= cur for nxt, cur in zip(eps[1:], eps)):
            raise ValueError("eps schedule must be strictly descending")


@dataclass
class ResolventSolution:
    """Solved resolvent curve at the final continuation offset."""

    lambda_grid: np.ndarray
    epsilon: float
    g_values: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    method: str
    order: int
    blockade_radius: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def dos(self) -> np.ndarray:
        return -self.g_values.imag / math.pi

    def validate(self, residual_tol: float = 1e-8) -> None:
        if np.any(self.g_values.imag > 1e-12):
            raise AssertionError("resolvent must have Im G <= 0")
        ok = self.converged
        if np.any(np.abs(self.residuals[ok]) >= residual_tol):
            raise AssertionError("accepted point above residual tolerance")


def dos_from_resolvent(solution: ResolventSolution):
    """Spectral density curve (lambda, dos) with dos = -Im(G)/pi >= 0."""
    dos = -solution.g_values.imag / math.pi
    return solution.lambda_grid.copy(), np.clip(dos, 0.0, None)


# ----------------------------------------------------------------------
# two-center generator F1
# ----------------------------------------------------------------------

def f1(g: complex, r_b: float) -> complex:
    """Generator of all repeated two-center loops.

    Closed form for r_b > 0 (principal square root and arcoth branches,
    continuous with the r_b -> 0 limit for Im g < 0); -i pi g at r_b = 0.
    """
    if r_b == 0.0:
        return -1j * math.pi * g
    a = COUPLING_AMP
    out = 8.0 * math.pi * r_b**3 / 9.0
    acc = 0j
    for sgn in (1.0, -1.0):
        w = cmath.sqrt(1.0 / 3.0 + sgn * r_b**3 / (a * g))
        arc = 0.5 * cmath.log((w + 1.0) / (w - 1.0))
        acc += (r_b**3 / (2.0 * a * g) - sgn / 3.0) * w * arc
    return out - 3.0 * _SQ3 * g * acc


_F1_GL_NODES, _F1_GL_WEIGHTS = np.polynomial.legendre.leggauss(400)


def _f1_quadrature(g: complex, r_b: float) -> complex:
    """Independent route: u-quadrature of the radially integrated kernel.

    With c = g * anisotropy(u) and s = r_b^3, the radial sum of loops
    integrates to (c/2) Log((s+c)/(s-c)), which never crosses the principal
    cut for Im c != 0.
    """
    u = _F1_GL_NODES
    c = g * (COUPLING_AMP / 3.0) * (3.0 * u * u - 1.0)
    s = r_b**3
    if s == 0.0:
        vals = 0.5j * math.pi * c * np.where(c.imag < 0, -1.0, 1.0)
    else:
        vals = 0.5 * c * np.log((s + c) / (s - c))
    return (2.0 * math.pi / 3.0) * np.sum(_F1_GL_WEIGHTS * vals)


def check_f1_zero_blockade_limit(g_values, r_b: float = 1e-3,
                                 tol: float = 1e-3) -> None:
    """Branch-discontinuity detector: the closed form must approach
    -i pi g as r_b -> 0+ on a validation sweep with Im g < 0."""
    for g in np.atleast_1d(np.asarray(g_values, dtype=complex)):
        if abs(f1(complex(g), r_b) + 1j * math.pi * g) > tol * abs(g):
            raise BranchDiscontinuityError(
                f"f1({g!r}; r_b={r_b}) is off the -i pi g branch")


# ----------------------------------------------------------------------
# three-center generator F2
# ----------------------------------------------------------------------

def p1(a_val):
    """Geometric loop sum A / (1 - A)."""
    return a_val / (1.0 - a_val)


def p2_kernel(a1, a12, a2, a123):
    """Irreducible three-center kernel; reducible two-center journeys are
    subtracted so F1's diagrams are not double counted."""
    s = a1 + a12 + a2 + 2.0 * a123
    return 0.5 * ((a1 + a2 + 2.0 * a123) / (1.0 - s)
                  - p1(a1)
                  - p1(a1) / (1.0 - a1) * (p1(a12) + p1(a2))
                  - (p1(a1) + p1(a12)) * p1(a2) / (1.0 - a2)
                  - p1(a2))


def _mixture_radial_map(xi: np.ndarray, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Map uniforms to radial-cubed offsets t with density
    0.5 * theta/(theta+t)^2 + 0.25/theta * (1+t/theta)^(-3/2).

    The t^(-3/2) tail keeps the estimator variance finite against the
    sign-cancelling long-range triangle contributions; the t^(-2) component
    concentrates points near the saturation shells.  Returns (t, weight)
    with weight = dt/(3 dxi) = 1/(3 p(t)).
    """
    lo = np.zeros_like(xi)
    hi = np.full_like(xi, 1e30 * theta)

    def cdf(t):
        return 0.5 * t / (theta + t) + 0.5 * (1.0 - 1.0 / np.sqrt(1.0 + t / theta))

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < xi
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    t = 0.5 * (lo + hi)
    pdf = 0.5 * theta / (theta + t) ** 2 + 0.25 / theta * (1.0 + t / theta) ** -1.5
    return t, 1.0 / (3.0 * pdf)


class F2Integrator:
    """Quasi-Monte-Carlo evaluator of the three-center integral.

    The 6-D integral is reduced to 5-D by the rotational symmetry around the
    field axis (the first azimuth integrates to 2 pi).  Scrambled Sobol point
    sets are drawn once and their cloud geometry cached, so re-evaluation at
    a new G costs only kernel arithmetic and the self-consistency map stays
    deterministic.
    """

    def __init__(self, r_b: float, theta: float, n_log2: int = 16,
                 n_scrambles: int = 8, seed: int = 20_240_901):
        self.r_b = r_b
        self.theta = theta
        self.batches = []
        amp = COUPLING_AMP / 3.0
        for k in range(n_scrambles):
            eng = qmc.Sobol(d=5, scramble=True, seed=seed + k)
            x = eng.random(2**n_log2)
            x = np.clip(x, 2**-50, 1.0 - 2**-50)
            t1, w1 = _mixture_radial_map(x[:, 0], theta)
            t2, w2 = _mixture_radial_map(x[:, 2], theta)
            t1 = t1 + r_b**3
            t2 = t2 + r_b**3
            u1 = 2.0 * x[:, 1] - 1.0
            u2 = 2.0 * x[:, 3] - 1.0
            dphi = 2.0 * math.pi * x[:, 4]
            r1, r2 = t1 ** (1.0 / 3.0), t2 ** (1.0 / 3.0)
            s1 = np.sqrt(1.0 - u1 * u1)
            s2 = np.sqrt(1.0 - u2 * u2)
            dx = r1 * s1 - r2 * s2 * np.cos(dphi)
            dy = -r2 * s2 * np.sin(dphi)
            dz = r1 * u1 - r2 * u2
            r12sq = dx * dx + dy * dy + dz * dz
            r12 = np.sqrt(r12sq)
            v1 = amp * (3.0 * u1 * u1 - 1.0) / t1
            v2 = amp * (3.0 * u2 * u2 - 1.0) / t2
            cos12 = dz / r12
            v12 = amp * (3.0 * cos12 * cos12 - 1.0) / (r12sq * r12)
            jac = w1 * w2 * 16.0 * math.pi**2
            if r_b > 0:
                jac = np.where(r12 > r_b, jac, 0.0)
            self.batches.append((v1, v2, v12, jac))

    def __call__(self, g: complex) -> tuple[complex, float]:
        """Integral estimate and its scramble-level standard error."""
        vals = np.empty(len(self.batches), dtype=complex)
        g2, g3 = g * g, g * g * g
        for k, (v1, v2, v12, jac) in enumerate(self.batches):
            a1 = g2 * v1 * v1
            a2 = g2 * v2 * v2
            a12 = g2 * v12 * v12
            a123 = g3 * v1 * v12 * v2
            vals[k] = np.mean(p2_kernel(a1, a12, a2, a123) * jac)
        mean = vals.mean()
        if len(vals) > 1:
            se = math.sqrt(
                (np.var(vals.real, ddof=1) + np.var(vals.imag, ddof=1))
                / len(vals))
        else:
            se = float("nan")
        return complex(mean), se


def f2(g: complex, r_b: float, settings: SolverSettings | None = None,
       integrator: F2Integrator | None = None) -> complex:
    """Three-center generator.

    r_b = 0 returns the fixed quadratic law F2 = c g^2; r_b > 0 evaluates
    the 6-D integral with a (cached) quasi-Monte-Carlo point set.
    """
    if r_b == 0.0:
        return F2_ZERO_RB_COEFF * g * g
    if integrator is None:
        settings = settings or SolverSettings()
        integrator = F2Integrator(
            r_b, COUPLING_AMP * max(abs(g), 1e-2),
            settings.f2_samples_log2, settings.f2_scrambles, settings.f2_seed)
    value, _ = integrator(g)
    return value


# ----------------------------------------------------------------------
# high-concentration kernel
# ----------------------------------------------------------------------

def fourier_w(k_mag, u, r_b: float):
    """Fourier transform of the blockade-truncated coupling at radial
    wavenumber K and direction cosine u = K_Z/K.

    (9 sqrt3 / 2)(1/3 - u^2) * 3 j1(K r_b)/(K r_b); the K -> 0 limit of the
    Bessel factor is 1.
    """
    if r_b <= 0:
        raise ValueError("defined for r_b > 0 only")
    k_arr = np.asarray(k_mag, dtype=float)
    u_arr = np.asarray(u, dtype=float)
    x = k_arr * r_b
    with np.errstate(invalid="ignore", divide="ignore"):
        bessel = np.where(x > 1e-8, 3.0 * special.spherical_jn(1, x) / np.where(
            x > 1e-8, x, 1.0), 1.0 - 0.1 * x * x)
    out = 4.5 * _SQ3 * (1.0 / 3.0 - u_arr * u_arr) * bessel
    return out if out.ndim else float(out)


class HighConKernel:
    """Fixed quadrature grids for the high-concentration self-energy.

    Sigma(G) = r_b^-3 [ 81 G/(20 pi) + (3/(2 pi^2)) Psi(G) ],
    Psi(G) = int_0^1 du alpha(u) int_0^xmax dx x j1(x) (G W)^2/(1 - G W),
    W(x, u) = 3 alpha(u) j1(x)/x, alpha(u) = (9 sqrt3/2)(1/3 - u^2).

    The first-order (Born) term is the exact analytic value of the linear
    part, which also removes the slowly decaying K^-2 oscillatory tail; the
    remaining integrand falls off like x^-4, so truncation at xmax is
    certified by an analytic bound.
    """

    def __init__(self, r_b: float, settings: SolverSettings):
        if r_b <= 0:
            raise ValueError("high-concentration kernel needs r_b > 0")
        self.r_b = r_b
        ug, wu = np.polynomial.legendre.leggauss(settings.highcon_u_nodes)
        u = 0.5 * (ug + 1.0)
        wu = 0.5 * wu
        xg, wx = np.polynomial.legendre.leggauss(settings.highcon_panel_nodes)
        edges = np.linspace(0.0, settings.highcon_xmax, settings.highcon_panels + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        halves = 0.5 * np.diff(edges)
        x = (mids[:, None] + halves[:, None] * xg[None, :]).ravel()
        wxs = (halves[:, None] * wx[None, :]).ravel()
        alpha = 4.5 * _SQ3 * (1.0 / 3.0 - u * u)
        j1x = special.spherical_jn(1, x)
        self.w_grid = 3.0 * np.outer(alpha, j1x / x)
        self.base = np.outer(alpha * wu, x * j1x * wxs)
        self.xmax = settings.highcon_xmax
        # |j1(x)| <= 1.1/x for x >= 1: bound for the x^-4 remainder
        self.tail_coeff = (3.0 / (2.0 * math.pi**2)) * (27.0 / 5.0) \
            * 9.0 * 1.1**3 / (3.0 * settings.highcon_xmax**3)

    def sigma(self, g: complex) -> complex:
        gw = g * self.w_grid
        nonlinear = np.sum(self.base * (gw * gw / (1.0 - gw)))
        born = 81.0 * g / (20.0 * math.pi)
        return (born + 1.5 / math.pi**2 * nonlinear) / self.r_b**3

    def sigma_vec(self, g: np.ndarray, chunk: int = 16) -> np.ndarray:
        """Vectorized self-energy for a batch of resolvent values."""
        g = np.asarray(g, dtype=complex)
        out = np.empty(g.shape, dtype=complex)
        for lo in range(0, g.size, chunk):
            gs = g[lo:lo + chunk, None, None]
            gw = gs * self.w_grid[None, :, :]
            nonlinear = np.sum(self.base[None, :, :] * (gw * gw / (1.0 - gw)),
                               axis=(1, 2))
            out[lo:lo + chunk] = 81.0 * g[lo:lo + chunk] / (20.0 * math.pi) \
                + 1.5 / math.pi**2 * nonlinear
        return out / self.r_b**3

    def sigma_prime_vec(self, g: np.ndarray, chunk: int = 16) -> np.ndarray:
        """d Sigma / dG, used by the stalled-point Newton accelerator."""
        g = np.asarray(g, dtype=complex)
        out = np.empty(g.shape, dtype=complex)
        for lo in range(0, g.size, chunk):
            gs = g[lo:lo + chunk, None, None]
            gw = gs * self.w_grid[None, :, :]
            w2 = self.w_grid[None, :, :] ** 2
            deriv = np.sum(self.base[None, :, :] * w2 * gs * (2.0 - gw)
                           / (1.0 - gw) ** 2, axis=(1, 2))
            out[lo:lo + chunk] = 81.0 / (20.0 * math.pi) \
                + 1.5 / math.pi**2 * deriv
        return out / self.r_b**3

    def tail_estimate(self, g: complex) -> float:
        return self.tail_coeff * abs(g) ** 2 / self.r_b**3


# ----------------------------------------------------------------------
# CMA-ES (derivative-free fallback for stubborn grid points)
# ----------------------------------------------------------------------

def _cma_minimize(fun, x0, sigma0, rng, popsize=10, max_iter=600,
                  f_target=0.0):
    """Compact (mu/mu_w, lambda) covariance-matrix-adaptation minimizer."""
    n = len(x0)
    mu = popsize // 2
    w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mu_eff = 1.0 / np.sum(w**2)
    cc = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
    cs = (mu_eff + 2) / (n + mu_eff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mu_eff)
    cmu = min(1 - c1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
    ds = 1 + 2 * max(0.0, math.sqrt((mu_eff - 1) / (n + 1)) - 1) + cs
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))

    mean = np.asarray(x0, dtype=float)
    sigma = float(sigma0)
    cov = np.eye(n)
    ps = np.zeros(n)
    pc = np.zeros(n)
    best_x, best_f = mean.copy(), fun(mean)
    for it in range(max_iter):
        try:
            d_eig, b_eig = np.linalg.eigh(cov)
        except np.linalg.LinAlgError:
            break
        d_eig = np.sqrt(np.clip(d_eig, 1e-20, None))
        z = rng.standard_normal((popsize, n))
        y = z * d_eig[None, :] @ b_eig.T
        xs = mean[None, :] + sigma * y
        fs = np.array([fun(x) for x in xs])
        order = np.argsort(fs)
        if fs[order[0]] < best_f:
            best_f = fs[order[0]]
            best_x = xs[order[0]].copy()
        if best_f <= f_target or sigma < 1e-16:
            break
        ysel = y[order[:mu]]
        ymean = w @ ysel
        mean = mean + sigma * ymean
        c_inv_sqrt = b_eig @ np.diag(1.0 / d_eig) @ b_eig.T
        ps = (1 - cs) * ps + math.sqrt(cs * (2 - cs) * mu_eff) * (c_inv_sqrt @ ymean)
        hsig = (np.linalg.norm(ps)
                / math.sqrt(1 - (1 - cs) ** (2 * (it + 1)))) < (1.4 + 2 / (n + 1)) * chi_n
        pc = (1 - cc) * pc + hsig * math.sqrt(cc * (2 - cc) * mu_eff) * ymean
        rank1 = np.outer(pc, pc)
        rankmu = ysel.T @ (w[:, None] * ysel)
        cov = ((1 - c1 - cmu) * cov + c1 * (rank1 + (not hsig) * cc * (2 - cc) * cov)
               + cmu * rankmu)
        sigma *= math.exp(cs / ds * (np.linalg.norm(ps) / chi_n - 1))
    return best_x, best_f


# ----------------------------------------------------------------------
# grid solvers with eps continuation
# ----------------------------------------------------------------------

def _solve_point(z: complex, g_init: complex, lhs_minus_rhs, fixed_point_map,
                 settings: SolverSettings, rng) -> tuple[complex, float, dict]:
    """Damped fixed-point iteration with a CMA-ES fallback.

    lhs_minus_rhs(G) is the self-consistency residual; fixed_point_map(G)
    returns the next iterate candidate.
    """
    g = complex(g_init)
    beta = 0.5
    res = abs(lhs_minus_rhs(g))
    n_fp = 0
    for n_fp in range(1, settings.fp_max_iter + 1):
        try:
            with np.errstate(divide="ignore", invalid="ignore"):
                g_new = complex((1.0 - beta) * g + beta * fixed_point_map(g))
        except ZeroDivisionError:
            break
        if not (math.isfinite(g_new.real) and math.isfinite(g_new.imag)):
            break
        if g_new.imag > 0.0:
            g_new = complex(g_new.real, -abs(g_new.imag) * 1e-3)
        res_new = abs(lhs_minus_rhs(g_new))
        if res_new < res:
            g, res = g_new, res_new
            beta = min(1.0, beta * 1.15)
        else:
            beta *= 0.5
            if beta < 1e-6:
                break
        if res < settings.residual_tol:
            return g, res, {"fp_iterations": n_fp, "used_cma": False}
    # derivative-free fallback on (Re G, Im G)
    scale = max(abs(g), 1e-3)

    def objective(x):
        val = lhs_minus_rhs(complex(x[0], min(x[1], 0.0)))
        return abs(val) ** 2

    best_x, best_f = _cma_minimize(
        objective, np.array([g.real, min(g.imag, -1e-12)]), 0.3 * scale, rng,
        popsize=settings.cma_popsize, max_iter=settings.cma_max_iter,
        f_target=(0.3 * settings.residual_tol) ** 2)
    g_cma = complex(best_x[0], min(best_x[1], 0.0))
    res_cma = math.sqrt(best_f)
    if res_cma < res:
        g, res = g_cma, res_cma
    return g, res, {"fp_iterations": n_fp, "used_cma": True}


def _sweep_order(lambda_grid: np.ndarray) -> list[int]:
    """Deterministic center-out ordering per sign for warm-start chains."""
    idx = np.argsort(np.abs(lambda_grid), kind="stable")
    return list(idx)


def _solve_grid(lambda_grid, settings, make_residual, make_fp_map, label,
                order, r_b, extra_diagnostics=None):
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence((settings.f2_seed, 17)))
    eps_hist = {}
    g_prev_eps = None
    res_final = None
    for eps in settings.eps_schedule:
        g_vals = np.empty(lambda_grid.size, dtype=complex)
        res_vals = np.empty(lambda_grid.size)
        conv = np.zeros(lambda_grid.size, dtype=bool)
        info = []
        solved = {}
        for i in _sweep_order(lambda_grid):
            lam = lambda_grid[i]
            z = lam + 1j * eps
            if g_prev_eps is not None:
                g0 = g_prev_eps[i]
            elif solved:
                j = min(solved, key=lambda k: abs(lambda_grid[k] - lam))
                g0 = solved[j]
            else:
                g0 = 1.0 / (z + 1j * math.pi)
            residual = make_residual(z)
            fp_map = make_fp_map(z)
            g, res, meta = _solve_point(z, g0, residual, fp_map, settings, rng)
            g_vals[i] = g
            res_vals[i] = res
            conv[i] = res < max(settings.residual_tol, 1e-8)
            solved[i] = g
            info.append(meta)
        eps_hist[eps] = -g_vals.imag / math.pi
        g_prev_eps = g_vals
        res_final = res_vals
        conv_final = conv
        info_final = info
    diagnostics = {
        "eps_history": eps_hist,
        "fp_iterations": [m["fp_iterations"] for m in info_final],
        "cma_points": int(sum(m["used_cma"] for m in info_final)),
    }
    if extra_diagnostics:
        diagnostics.update(extra_diagnostics)
    # eps-stability gate on the last two offsets, restricted to the core
    # region dos >= stability_floor * peak: outside the support the DOS is
    # pure eps-broadening (it changes by exactly d_eps/eps), so a pointwise
    # relative gate is only meaningful where the curve carries its mass
    eps_list = list(settings.eps_schedule)
    if len(eps_list) >= 2:
        d1 = eps_hist[eps_list[-2]]
        d2 = eps_hist[eps_list[-1]]
        floor = settings.stability_floor * max(d2.max(), 1e-300)
        mask = d2 >= floor
        rel = np.max(np.abs(d1[mask] - d2[mask]) / d2[mask]) if mask.any() else 0.0
        diagnostics["eps_stability_rel"] = float(rel)
        diagnostics["eps_stable"] = bool(rel < settings.stability_rel)
    sol = ResolventSolution(
        lambda_grid=lambda_grid,
        epsilon=eps_list[-1],
        g_values=g_prev_eps,
        residuals=res_final,
        converged=conv_final,
        method=label,
        order=order,
        blockade_radius=r_b,
        diagnostics=diagnostics,
    )
    return sol


def solve_low(order: int, r_b: float, lambda_grid,
              settings: SolverSettings | None = None) -> ResolventSolution:
    """Low-concentration approximation of order 1 or 2.

    Solves z G = 1 + F1(G) [+ F2(G)] per grid point with eps continuation;
    the damped map G <- (1 - beta) G + beta (1 + F(G))/z is tried first and
    CMA-ES picks up stubborn points.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    settings = settings or SolverSettings()
    extra = {}
    if order == 2 and r_b > 0:
        # fixed point set reused across the whole grid solve; the scale is
        # set by the largest |G| expected (the spectral-center magnitude)
        integrator = F2Integrator(
            r_b, COUPLING_AMP * 0.5, settings.f2_samples_log2,
            settings.f2_scrambles, settings.f2_seed)
        _, f2_se = integrator(-0.5j)
        extra["f2_stderr_probe"] = f2_se

        def total_f(g):
            return f1(g, r_b) + integrator(g)[0]
    elif order == 2:
        def total_f(g):
            return f1(g, r_b) + F2_ZERO_RB_COEFF * g * g
    else:
        def total_f(g):
            return f1(g, r_b)

    def make_residual(z):
        return lambda g: z * g - 1.0 - total_f(g)

    def make_fp_map(z):
        return lambda g: (1.0 + total_f(g)) / z

    return _solve_grid(lambda_grid, settings, make_residual, make_fp_map,
                       "low_concentration", order, r_b, extra)


def solve_high(r_b: float, lambda_grid,
               settings: SolverSettings | None = None) -> ResolventSolution:
    """High-concentration (non-recurring loop) approximation, r_b > 0 only.

    Solves z - 1/G = Sigma(G); the damped inverse map
    G <- (1 - beta) G + beta / (z - Sigma(G)) is the cheap path (same fixed
    points as the direct form, far better conditioned near the band center),
    iterated for the whole grid at once.  Points the damped map cannot close
    fall back to the per-point CMA-ES path.
    """
    if r_b <= 0:
        raise ValueError("high-concentration limit requires r_b > 0")
    settings = settings or SolverSettings()
    kernel = HighConKernel(r_b, settings)
    lam = np.asarray(lambda_grid, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence((settings.f2_seed, 31)))
    eps_hist = {}
    g_prev = None
    for eps in settings.eps_schedule:
        z = lam + 1j * eps
        g = g_prev.copy() if g_prev is not None else 1.0 / (z + 1j)
        beta = np.full(lam.shape, 0.5)
        sig = kernel.sigma_vec(g)
        res = np.abs(z * g - 1.0 - g * sig)
        live = np.ones(lam.shape, dtype=bool)
        for it in range(settings.fp_max_iter):
            idx = np.nonzero(live)[0]
            if idx.size == 0:
                break
            g_l = g[idx]
            # after a few damped fixed-point warmup steps, try a guarded
            # Newton step on R(G) = zG - 1 - G Sigma(G) first: in the
            # strongly coupled regime the inverse map contracts too slowly
            accepted = np.zeros(idx.size, dtype=bool)
            if it >= 6:
                r_val = z[idx] * g_l - 1.0 - g_l * sig[idx]
                r_prime = z[idx] - sig[idx] - g_l * kernel.sigma_prime_vec(g_l)
                step = np.where(np.abs(r_prime) > 1e-300, r_val / r_prime, 0.0)
                cand = g_l - step
                cand = np.where(cand.imag > 0,
                                cand.real - 1e-3j * np.abs(cand.imag), cand)
                sig_cand = kernel.sigma_vec(cand)
                res_new = np.abs(z[idx] * cand - 1.0 - cand * sig_cand)
                accepted = res_new < res[idx]
                sel = idx[accepted]
                g[sel] = cand[accepted]
                sig[sel] = sig_cand[accepted]
                res[sel] = res_new[accepted]
            rest = idx[~accepted]
            if rest.size:
                cand = (1.0 - beta[rest]) * g[rest] \
                    + beta[rest] / (z[rest] - sig[rest])
                cand = np.where(cand.imag > 0,
                                cand.real - 1e-3j * np.abs(cand.imag), cand)
                sig_cand = kernel.sigma_vec(cand)
                res_new = np.abs(z[rest] * cand - 1.0 - cand * sig_cand)
                improve = res_new < res[rest]
                g[rest] = np.where(improve, cand, g[rest])
                sig[rest] = np.where(improve, sig_cand, sig[rest])
                res[rest] = np.where(improve, res_new, res[rest])
                beta[rest] = np.where(improve, np.minimum(1.0, beta[rest] * 1.15),
                                      beta[rest] * 0.5)
            live[idx] = (res[idx] >= settings.residual_tol) & (beta[idx] > 1e-8)
        for i in np.nonzero(res >= settings.residual_tol)[0]:
            z_i = complex(z[i])
            g_i, res_i, _ = _solve_point(
                z_i, complex(g[i]),
                lambda gg: z_i * gg - 1.0 - gg * kernel.sigma(gg),
                lambda gg: 1.0 / (z_i - kernel.sigma(gg)),
                settings, rng)
            g[i], res[i] = g_i, res_i
        eps_hist[eps] = -g.imag / math.pi
        g_prev = g
        res_final = res
    diagnostics = {"eps_history": eps_hist,
                   "cma_points": int(np.sum(res_final >= settings.residual_tol))}
    eps_list = list(settings.eps_schedule)
    if len(eps_list) >= 2:
        d1 = eps_hist[eps_list[-2]]
        d2 = eps_hist[eps_list[-1]]
        floor = settings.stability_floor * max(d2.max(), 1e-300)
        mask = d2 >= floor
        rel = np.max(np.abs(d1[mask] - d2[mask]) / d2[mask]) if mask.any() else 0.0
        diagnostics["eps_stability_rel"] = float(rel)
        diagnostics["eps_stable"] = bool(rel < settings.stability_rel)
    sol = ResolventSolution(
        lambda_grid=lam, epsilon=eps_list[-1], g_values=g_prev,
        residuals=res_final,
        converged=res_final < max(settings.residual_tol, 1e-8),
        method="high_concentration", order=0, blockade_radius=r_b,
        diagnostics=diagnostics)
    tails = np.array([kernel.tail_estimate(g) for g in sol.g_values])
    sigmas = np.abs(kernel.sigma_vec(sol.g_values)) + 1e-300
    sol.diagnostics["quadrature_tail_flags"] = (tails > 0.01 * sigmas)
    return sol
