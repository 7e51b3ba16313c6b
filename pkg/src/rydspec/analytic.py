"""Closed-form reference densities, moments, and spacing laws.

Everything here is exact (up to quadrature/series truncation at the stated
tolerances) and serves as the oracle layer for the Monte-Carlo ensembles:
pair-distance density of a blockaded uniform cloud, the induced coupling
density with its hypergeometric branches, coupling moments, the universal
spacing laws, and the semicircle overlay.

Units: number density rho = 1, dipolar amplitude beta = 1.  All lengths are
in units of rho^(-1/3), all energies in units of beta*rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

__all__ = [
    "ANISO_AMP",
    "COUPLING_AMP",
    "GeometryParams",
    "anisotropy",
    "anisotropy_pdf",
    "ball_radius",
    "coupling_bounds",
    "coupling_pdf",
    "coupling_variance",
    "goe_sigma_matched",
    "hyp2f1_special",
    "lambda_w",
    "pair_distance_cdf",
    "pair_distance_pdf",
    "poisson_spacing",
    "sample_pair_distances",
    "semicircle",
    "semicircle_cdf",
    "wigner_spacing",
]

# Amplitude of the angular factor (9 sqrt3 / 8 pi) and of the full coupling
# at contact, a = 3 * ANISO_AMP = 27 sqrt3 / 8 pi.
ANISO_AMP = 9.0 * math.sqrt(3.0) / (8.0 * math.pi)
COUPLING_AMP = 3.0 * ANISO_AMP


def ball_radius(n_atoms: int) -> float:
    """Radius of the unit-density ball holding `n_atoms`, (3N/4pi)^(1/3)."""
    return (3.0 * n_atoms / (4.0 * math.pi)) ** (1.0 / 3.0)


def anisotropy(u):
    """Angular coupling factor (9 sqrt3 / 8 pi) (3 u^2 - 1) for u = cos(theta).

    Raises ValueError outside |u| <= 1.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(np.abs(u_arr) > 1.0 + 1e-12):
        raise ValueError("anisotropy argument must satisfy |u| <= 1")
    out = ANISO_AMP * (3.0 * u_arr * u_arr - 1.0)
    return out if out.ndim else float(out)


def anisotropy_pdf(x):
    """Density of the angular factor for isotropic orientations.

    The projection u is uniform on [-1, 1]; the factor x = anisotropy(u)
    therefore has density 1 / (2 a sqrt(1/3 + x/a)) on [-a/3, 2a/3].
    """
    a = COUPLING_AMP
    x_arr = np.asarray(x, dtype=float)
    inside = (x_arr >= -a / 3.0) & (x_arr <= 2.0 * a / 3.0)
    arg = np.clip(1.0 / 3.0 + x_arr / a, 0.0, None)
    with np.errstate(divide="ignore"):
        dens = 1.0 / (2.0 * a * np.sqrt(arg))
    out = np.where(inside, dens, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class GeometryParams:
    """Cloud geometry entering the closed-form densities.

    Attributes
    ----------
    n_atoms : int
        Number of atoms N in the unit-density ball.
    blockade_radius : float
        Hard-sphere exclusion distance r_b >= 0.
    """

    n_atoms: int
    blockade_radius: float = 0.0

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if self.blockade_radius < 0.0:
            raise ValueError("blockade_radius must be >= 0")
        if self.blockade_radius > 0.0 and self.b <= 1.0:
            raise ValueError("blockade_radius exceeds the cloud diameter")

    @property
    def diameter(self) -> float:
        """Cloud diameter d = 2 (3N/4pi)^(1/3)."""
        return 2.0 * ball_radius(self.n_atoms)

    @property
    def b(self) -> float:
        """Diameter in blockade units, b = (6N/pi)^(1/3) / r_b."""
        if self.blockade_radius == 0.0:
            return math.inf
        return (6.0 * self.n_atoms / math.pi) ** (1.0 / 3.0) / self.blockade_radius

    @property
    def chi(self) -> float:
        """Mass of the unconstrained pair-distance density above r_b."""
        rb, d = self.blockade_radius, self.diameter
        return 1.0 - rb**3 * (8.0 * d**3 - 9.0 * d**2 * rb + 2.0 * rb**3) / d**6


# ----------------------------------------------------------------------
# pair distances
# ----------------------------------------------------------------------

def _pair_cdf_raw(r, d):
    # int_0^r 12 s^2 (d-s)^2 (2d+s) ds / d^6, before exclusion renormalisation
    return (8.0 * d**3 * r**3 - 9.0 * d**2 * r**4 + 2.0 * r**6) / d**6


def pair_distance_pdf(r, params: GeometryParams):
    """Density of the distance between two uniform points in the cloud ball,
    conditioned on the pair exceeding the blockade radius."""
    d, rb, chi = params.diameter, params.blockade_radius, params.chi
    r_arr = np.asarray(r, dtype=float)
    inside = (r_arr > rb) & (r_arr <= d)
    dens = 12.0 * r_arr**2 * (d - r_arr) ** 2 * (2.0 * d + r_arr) / (chi * d**6)
    out = np.where(inside, dens, 0.0)
    return out if out.ndim else float(out)


def pair_distance_cdf(r, params: GeometryParams):
    """Cumulative distribution matching `pair_distance_pdf`."""
    d, rb, chi = params.diameter, params.blockade_radius, params.chi
    r_arr = np.clip(np.asarray(r, dtype=float), rb, d)
    out = (_pair_cdf_raw(r_arr, d) - _pair_cdf_raw(rb, d)) / chi
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def sample_pair_distances(params: GeometryParams, rng: np.random.Generator,
                          size: int) -> np.ndarray:
    """Draw `size` distances from the exact pair-distance law.

    Inverts the degree-6 polynomial CDF by bisection to 1e-12 absolute
    tolerance, bracketed by a monotone lookup table.
    """
    d, rb = params.diameter, params.blockade_radius
    grid = np.linspace(rb, d, 4097)
    cdf_grid = pair_distance_cdf(grid, params)
    u = rng.random(size)
    idx = np.searchsorted(cdf_grid, u)
    idx = np.clip(idx, 1, len(grid) - 1)
    lo = grid[idx - 1].copy()
    hi = grid[idx].copy()
    # bracket width d/4096; 35 halvings push it below 1e-12 * d
    for _ in range(35):
        mid = 0.5 * (lo + hi)
        below = pair_distance_cdf(mid, params) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------
# hypergeometric special cases
# ----------------------------------------------------------------------

_HYP_TRIPLES = {
    "radial": (Fraction(-1, 6), Fraction(1), Fraction(1, 3)),
    "angular": (Fraction(-2, 3), Fraction(1, 2), Fraction(1, 3)),
}


def _hyp_series(a, b, c, x, tol=1e-16, max_terms=600):
    term = 1.0
    total = 1.0
    for k in range(max_terms):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * x
        total += term
        if abs(term) < tol * max(1.0, abs(total)):
            return total
    raise ArithmeticError(f"2F1 series failed to converge at x={x!r}")


def _hyp_pfaff(a, b, c, x, swap=False):
    # Pfaff transforms map x < 0 into (0, 1); the two variants give
    # independent evaluation routes.
    y = x / (x - 1.0)
    if swap:
        return (1.0 - x) ** (-b) * _hyp_series(c - a, b, c, y)
    return (1.0 - x) ** (-a) * _hyp_series(a, c - b, c, y)


def _hyp_near_one(a, b, c, x):
    # linear 1-x connection formula; valid for 0 < 1-x < 1
    y = 1.0 - x
    g = math.gamma
    s = c - a - b
    t1 = g(c) * g(s) / (g(c - a) * g(c - b)) * _hyp_series(a, b, 1.0 - s, y)
    t2 = y**s * g(c) * g(-s) / (g(a) * g(b)) * _hyp_series(c - a, c - b, 1.0 + s, y)
    return t1 + t2


def hyp2f1_special(case: str, x: float, route: str = "auto") -> float:
    """Gauss 2F1 for the two parameter triples used by `coupling_pdf`.

    Parameters
    ----------
    case : {"radial", "angular"}
        "radial" is 2F1(-1/6, 1; 1/3; x), "angular" is 2F1(-2/3, 1/2; 1/3; x).
    x : float
        Argument; the coupling-density branches only produce x in (-2, 1).
    route : {"auto", "series", "pfaff", "pfaff_swap", "near_one"}
        Evaluation strategy; non-auto routes exist so tests can cross-check
        independent evaluations.

    Accurate to ~1e-12 relative on the supported domain.
    """
    if case not in _HYP_TRIPLES:
        raise ValueError(f"unknown 2F1 case {case!r}")
    a, b, c = (float(v) for v in _HYP_TRIPLES[case])
    if x >= 1.0:
        raise ValueError("argument must be < 1")
    if route == "series":
        return _hyp_series(a, b, c, x)
    if route == "pfaff":
        return _hyp_pfaff(a, b, c, x)
    if route == "pfaff_swap":
        return _hyp_pfaff(a, b, c, x, swap=True)
    if route == "near_one":
        return _hyp_near_one(a, b, c, x)
    if route != "auto":
        raise ValueError(f"unknown route {route!r}")
    if abs(x) <= 0.5:
        return _hyp_series(a, b, c, x)
    if x < 0.0:
        return _hyp_pfaff(a, b, c, x)
    return _hyp_near_one(a, b, c, x)


def _hyp_radial_vec(x: np.ndarray) -> np.ndarray:
    return np.array([hyp2f1_special("radial", float(v)) for v in np.atleast_1d(x)])


def _hyp_angular_vec(x: np.ndarray) -> np.ndarray:
    return np.array([hyp2f1_special("angular", float(v)) for v in np.atleast_1d(x)])


# ----------------------------------------------------------------------
# coupling density
# ----------------------------------------------------------------------

def _zero_rb_series_coeffs(n_terms: int = 14):
    """Taylor coefficients of T(w)/w^3 about w = 0, exact rationals.

    T(w) = 8 sqrt(1+w) (65 - 6w + w^2) - 88 + 220 w
           - 432 * 2F1(-2/3, 1/2; 1/3; -w);
    the constant..quadratic terms cancel identically and T/w^3 -> 55/14.
    """
    n = n_terms + 3
    # sqrt(1+w) binomial coefficients
    sq = [Fraction(1)]
    for k in range(1, n):
        sq.append(sq[-1] * (Fraction(1, 2) - (k - 1)) / k)
    poly = [Fraction(65), Fraction(-6), Fraction(1)]
    prod = [Fraction(0)] * n
    for i, p in enumerate(poly):
        for j in range(n - i):
            prod[i + j] += p * sq[j]
    # 2F1 coefficients at argument -w
    hyp = [Fraction(1)]
    a, b, c = _HYP_TRIPLES["angular"]
    for k in range(1, n):
        hyp.append(hyp[-1] * (a + k - 1) * (b + k - 1) / ((c + k - 1) * k))
    t = [8 * prod[k] - 432 * hyp[k] * (-1) ** k for k in range(n)]
    t[0] -= 88
    t[1] += 220
    assert t[0] == 0 and t[1] == 0 and t[2] == 0
    return np.array([float(v) for v in t[3:]])


_ZERO_RB_SERIES = _zero_rb_series_coeffs()
_GAMMA_RATIO = math.gamma(4.0 / 3.0) / math.gamma(5.0 / 6.0)


def _coupling_pdf_zero_rb(h: float, n_atoms: int) -> float:
    """Unblockaded coupling density (the r_b -> 0 limit of the bounded law).

    Derivation: docs/zero_blockade_coupling_density.md.  The reduced variable
    is w = 3 d^3 h / a = (16 sqrt3 / 9) N h.
    """
    n = float(n_atoms)
    w = 16.0 * math.sqrt(3.0) / 9.0 * n * h
    pref = 64.0 * n / 1485.0
    if abs(w) < 0.1:
        return pref * float(np.polynomial.polynomial.polyval(w, _ZERO_RB_SERIES))
    if w <= -1.0:
        bracket = 216.0 * math.sqrt(math.pi) * _GAMMA_RATIO * (-w) ** (2.0 / 3.0) \
            - 88.0 + 220.0 * w
    elif w < 2.0:
        bracket = 8.0 * math.sqrt(1.0 + w) * (65.0 - 6.0 * w + w * w) - 88.0 \
            + 220.0 * w - 432.0 * hyp2f1_special("angular", -w)
    else:
        f2 = hyp2f1_special("radial", -2.0)
        bracket = 132.0 * math.sqrt(3.0) \
            - 54.0 * 2.0 ** (1.0 / 3.0) * math.sqrt(3.0) * (4.0 * f2 - 3.0) * w ** (2.0 / 3.0) \
            - 88.0 + 220.0 * w
    return pref * bracket / w**3


def _coupling_pdf_blockaded_mp(u, b, n_atoms, dps=45):
    # high-precision rescue for the cancellation-prone neighbourhood of u = 0
    with mpmath.workdps(dps):
        u_mp, b_mp = mpmath.mpf(u), mpmath.mpf(b)
        pref = 64 * n_atoms / (1485 * b_mp**3 * (2 - b_mp**2 * (9 - 8 * b_mp + b_mp**4)))
        hyp = mpmath.hyp2f1
        br = (-8 * mpmath.sqrt(1 + b_mp**3 * u_mp)
              * (65 + b_mp**3 * u_mp * (-6 + b_mp**3 * u_mp))
              + mpmath.sqrt(1 + u_mp)
              * (11 * (8 + u_mp * (-4 + 3 * u_mp + 10 * b_mp**3 * (-2 + u_mp)))
                 + 27 * b_mp**2 * (16 + (8 - 5 * u_mp) * u_mp))
              + 432 * (-b_mp**2 * hyp(mpmath.mpf(-2) / 3, mpmath.mpf(1) / 2,
                                      mpmath.mpf(1) / 3, -u_mp)
                       + hyp(mpmath.mpf(-2) / 3, mpmath.mpf(1) / 2,
                             mpmath.mpf(1) / 3, -b_mp**3 * u_mp)))
        return float(pref * br / u_mp**3)


def _coupling_pdf_blockaded(h: float, params: GeometryParams) -> float:
    """Bounded coupling density for r_b > 0 (piecewise hypergeometric form).

    Note: the central-branch limit fixes the u = 0 value to
    -(55/14)(-7 + b^2 (27 - 21 b + b^7)) inside the bracket; see
    docs/zero_blockade_coupling_density.md for the sign analysis.
    """
    rb = params.blockade_radius
    a = COUPLING_AMP
    b = params.b
    n = float(params.n_atoms)
    u = 3.0 * rb**3 * h / a
    if u <= -1.0 or u >= 2.0:
        return 0.0
    pref = 64.0 * n / (1485.0 * b**3 * (2.0 - b**2 * (9.0 - 8.0 * b + b**4)))
    if u == 0.0:
        return pref * (-55.0 / 14.0) * (-7.0 + b**2 * (27.0 - 21.0 * b + b**7))
    if u <= -1.0 / b**3:
        bracket = (-216.0 * math.sqrt(math.pi) * b**2 * (-u) ** (2.0 / 3.0) * _GAMMA_RATIO
                   + math.sqrt(1.0 + u)
                   * (11.0 * (8.0 + u * (-4.0 + 3.0 * u + 10.0 * b**3 * (-2.0 + u)))
                      + 27.0 * b**2 * (16.0 + (8.0 - 5.0 * u) * u
                                       - 16.0 * hyp2f1_special("radial", -u))))
        return pref * bracket / u**3
    if u >= 2.0 / b**3:
        f2 = hyp2f1_special("radial", -2.0)
        bracket = (-132.0 * math.sqrt(3.0)
                   + 54.0 * 2.0 ** (1.0 / 3.0) * math.sqrt(3.0) * b**2 * u ** (2.0 / 3.0)
                   * (-3.0 + 4.0 * f2)
                   + math.sqrt(1.0 + u)
                   * (11.0 * (8.0 + u * (-4.0 + 3.0 * u + 10.0 * b**3 * (-2.0 + u)))
                      + 27.0 * b**2 * (16.0 + (8.0 - 5.0 * u) * u
                                       - 16.0 * hyp2f1_special("radial", -u))))
        return pref * bracket / u**3
    # central branch; the bracket is analytic around u = 0 with relative slope
    # ~ 0.17 b^3, so below |b^3 u| ~ 1e-8 the limit value is exact to 1e-9
    limit_val = pref * (-55.0 / 14.0) * (-7.0 + b**2 * (27.0 - 21.0 * b + b**7))
    if abs(b**3 * u) < 1e-8:
        return limit_val
    # the float form loses ~ (520 + 432 b^2) eps / |result| to cancellation
    result_scale = abs(u) ** 3 * max(1.0, 55.0 / 14.0 * abs(b**9 - 21.0 * b**3
                                                            + 27.0 * b**2 - 7.0))
    term_scale = 520.0 + 432.0 * b**2
    if result_scale < 1e-9 * term_scale:
        dps = 25 + int(math.log10(term_scale / result_scale))
        return _coupling_pdf_blockaded_mp(u, b, params.n_atoms, dps=dps)
    bracket = (-8.0 * math.sqrt(1.0 + b**3 * u) * (65.0 + b**3 * u * (-6.0 + b**3 * u))
               + math.sqrt(1.0 + u)
               * (11.0 * (8.0 + u * (-4.0 + 3.0 * u + 10.0 * b**3 * (-2.0 + u)))
                  + 27.0 * b**2 * (16.0 + (8.0 - 5.0 * u) * u))
               + 432.0 * (-(b**2) * hyp2f1_special("angular", -u)
                          + hyp2f1_special("angular", -b**3 * u)))
    return pref * bracket / u**3


def coupling_pdf(h, params: GeometryParams):
    """Probability density of a single off-diagonal coupling element.

    For r_b > 0 the support is exactly [-a/(3 r_b^3), 2a/(3 r_b^3)]; for
    r_b = 0 the density is heavy-tailed, ~ 1/(N h^2) for |h| -> infinity.
    """
    h_arr = np.atleast_1d(np.asarray(h, dtype=float))
    if params.blockade_radius == 0.0:
        out = np.array([_coupling_pdf_zero_rb(v, params.n_atoms) for v in h_arr])
    else:
        out = np.array([_coupling_pdf_blockaded(v, params) for v in h_arr])
    return out if np.ndim(h) else float(out[0])


def coupling_bounds(params: GeometryParams) -> tuple[float, float]:
    """Support of the coupling density for r_b > 0."""
    rb = params.blockade_radius
    if rb == 0.0:
        raise ValueError("couplings are unbounded at r_b = 0")
    a = COUPLING_AMP
    return (-a / (3.0 * rb**3), 2.0 * a / (3.0 * rb**3))


def coupling_variance(params: GeometryParams) -> float:
    """Second moment of the coupling element (the mean vanishes).

    Diverges like r_b^-3 as r_b -> 0, hence only defined for r_b > 0.
    """
    if params.blockade_radius == 0.0:
        raise ValueError("coupling variance diverges at r_b = 0 (r_b^-3 law)")
    b = params.b
    n = float(params.n_atoms)
    num = 27.0 * b**6 * (5.0 + b**2 * (-9.0 + 4.0 * b) + 6.0 * math.log(b))
    den = 160.0 * n**2 * (-2.0 + b**2 * (9.0 - 8.0 * b + b**4))
    return num / den


def goe_sigma_matched(params: GeometryParams) -> float:
    """GOE width whose off-diagonal variance sigma^2/2 equals the coupling
    variance."""
    return math.sqrt(2.0 * coupling_variance(params))


# ----------------------------------------------------------------------
# spacing laws and semicircle
# ----------------------------------------------------------------------

def poisson_spacing(s):
    """Spacing density of uncorrelated levels, exp(-s)."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("spacings must be >= 0")
    out = np.exp(-s_arr)
    return out if out.ndim else float(out)


def wigner_spacing(s):
    """Rayleigh spacing density (pi/2) s exp(-pi s^2 / 4) of level repulsion."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("spacings must be >= 0")
    out = 0.5 * math.pi * s_arr * np.exp(-0.25 * math.pi * s_arr**2)
    return out if out.ndim else float(out)


def poisson_spacing_cdf(s):
    s_arr = np.asarray(s, dtype=float)
    out = 1.0 - np.exp(-np.clip(s_arr, 0.0, None))
    return out if out.ndim else float(out)


def wigner_spacing_cdf(s):
    s_arr = np.asarray(s, dtype=float)
    out = 1.0 - np.exp(-0.25 * math.pi * np.clip(s_arr, 0.0, None) ** 2)
    return out if out.ndim else float(out)


def semicircle(lam, lambda_w: float):
    """Semicircular eigenvalue density with support [-lambda_w, lambda_w]."""
    if lambda_w <= 0.0:
        raise ValueError("lambda_w must be > 0")
    lam_arr = np.asarray(lam, dtype=float)
    inside = np.abs(lam_arr) <= lambda_w
    val = 2.0 / (math.pi * lambda_w**2) * np.sqrt(
        np.clip(lambda_w**2 - lam_arr**2, 0.0, None))
    out = np.where(inside, val, 0.0)
    return out if out.ndim else float(out)


def semicircle_cdf(lam, lambda_w: float):
    lam_arr = np.clip(np.asarray(lam, dtype=float), -lambda_w, lambda_w)
    x = lam_arr / lambda_w
    out = 0.5 + (x * np.sqrt(1.0 - x**2) + np.arcsin(x)) / math.pi
    return out if out.ndim else float(out)


def lambda_w(params: GeometryParams) -> float:
    """Semicircle half-width matched to the coupling variance.

    Equals sqrt(2N) sigma with sigma^2/2 the coupling variance; diverges as
    r_b -> 0.
    """
    if params.blockade_radius == 0.0:
        raise ValueError("semicircle width diverges at r_b = 0")
    b = params.b
    n = float(params.n_atoms)
    num = 3.0 * b**6 * (5.0 + b**2 * (-9.0 + 4.0 * b) + 6.0 * math.log(b))
    den = 10.0 * n * (-2.0 + b**2 * (9.0 - 8.0 * b + b**4))
    return 1.5 * math.sqrt(num / den)
