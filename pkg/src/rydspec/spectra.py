"""Spectral statistics: diagonalization, pooled DOS accumulation, unfolded
nearest-neighbor spacings, RMS deviations from the universal spacing laws,
tail exponents, and the Poisson/Wigner-Dyson transition energies.

Accumulators are mergeable (associative and commutative on counts) so
disorder realizations can be processed in any sharding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import analytic

__all__ = [
    "EmptyWindow",
    "InsufficientTailData",
    "InsufficientWindows",
    "SpacingAccumulator",
    "SpectrumAccumulator",
    "TransitionResult",
    "Window",
    "XI_SPACING_NORM",
    "default_windows",
    "dichotomy_windows",
    "eigenvalues",
    "rms_deviation",
    "tail_exponent",
    "transition_energies",
    "unfold",
]

# 1/XI normalizes the L2 distance between spacing densities so that
# distance(poisson, wigner) == 1; quadrature-frozen, 10 digits
XI_SPACING_NORM = 0.4730437247


class EmptyWindow(ValueError):
    """No spacings fell inside a requested energy window."""


class InsufficientTailData(ValueError):
    """Too few populated log bins to fit a tail exponent."""


class InsufficientWindows(ValueError):
    """Too few populated windows to interpolate transition curves."""


def eigenvalues(matrix) -> np.ndarray:
    """Full ascending spectrum of a real symmetric matrix.

    Accepts a `SymmetricMatrix` or a bare ndarray.
    """
    values = getattr(matrix, "values", matrix)
    return np.linalg.eigvalsh(values)


# ----------------------------------------------------------------------
# density-of-states accumulation
# ----------------------------------------------------------------------

@dataclass
class SpectrumAccumulator:
    """Mergeable pooled-eigenvalue histograms and running central moments.

    Linear bins cover ``lin_range``; log bins (per sign) cover
    |lambda| from the linear edge to 10**log_max_decade.  Moments (mean,
    variance, skewness) are accumulated over |lambda| <= moment_halfwidth:
    the heavy-tailed ensembles have non-converging raw third moments, and
    the asymmetry statements under test live in the spectral center.
    """

    lin_range: tuple[float, float] = (-25.0, 25.0)
    lin_bins: int = 1000
    log_bins_per_decade: int = 40
    log_max_decade: float = 6.0
    moment_halfwidth: float = 10.0

    def __post_init__(self):
        lo, hi = self.lin_range
        if not (lo < hi):
            raise ValueError("bad linear range")
        self.lin_edges = np.linspace(lo, hi, self.lin_bins + 1)
        log_lo = math.log10(max(abs(lo), abs(hi)))
        n_log = int(round((self.log_max_decade - log_lo) * self.log_bins_per_decade))
        self.log_edges = np.logspace(log_lo, self.log_max_decade, n_log + 1)
        self.lin_counts = np.zeros(self.lin_bins, dtype=np.int64)
        self.pos_log_counts = np.zeros(n_log, dtype=np.int64)
        self.neg_log_counts = np.zeros(n_log, dtype=np.int64)
        self.overflow = 0          # |lambda| beyond the log range
        self.n_realizations = 0
        self.n_eigenvalues = 0
        # running central moments over the linear window
        self.m_count = 0
        self.m_mean = 0.0
        self.m_m2 = 0.0
        self.m_m3 = 0.0

    def _binning_key(self):
        return (self.lin_range, self.lin_bins, self.log_bins_per_decade,
                self.log_max_decade, self.moment_halfwidth)

    def add(self, eigs: np.ndarray) -> None:
        eigs = np.asarray(eigs, dtype=float)
        lo, hi = self.lin_range
        self.lin_counts += np.histogram(eigs, bins=self.lin_edges)[0]
        pos = eigs[eigs > hi]
        neg = -eigs[eigs < lo]
        self.pos_log_counts += np.histogram(pos, bins=self.log_edges)[0]
        self.neg_log_counts += np.histogram(neg, bins=self.log_edges)[0]
        top = self.log_edges[-1]
        self.overflow += int(np.sum(pos > top) + np.sum(neg > top))
        self.n_realizations += 1
        self.n_eigenvalues += eigs.size
        w = self.moment_halfwidth
        central = eigs[(eigs >= -w) & (eigs <= w)]
        self._update_moments(central)

    def _update_moments(self, x: np.ndarray) -> None:
        n_b = x.size
        if n_b == 0:
            return
        mean_b = float(x.mean())
        d = x - mean_b
        m2_b = float(np.sum(d * d))
        m3_b = float(np.sum(d**3))
        self._combine_moments(n_b, mean_b, m2_b, m3_b)

    def _combine_moments(self, n_b, mean_b, m2_b, m3_b) -> None:
        n_a, mean_a, m2_a, m3_a = self.m_count, self.m_mean, self.m_m2, self.m_m3
        n = n_a + n_b
        delta = mean_b - mean_a
        self.m_count = n
        self.m_mean = mean_a + delta * n_b / n
        self.m_m2 = m2_a + m2_b + delta**2 * n_a * n_b / n
        self.m_m3 = (m3_a + m3_b
                     + delta**3 * n_a * n_b * (n_a - n_b) / n**2
                     + 3.0 * delta * (n_a * m2_b - n_b * m2_a) / n)

    def merge(self, other: "SpectrumAccumulator") -> "SpectrumAccumulator":
        if self._binning_key() != other._binning_key():
            raise ValueError("accumulator binning mismatch")
        out = SpectrumAccumulator(self.lin_range, self.lin_bins,
                                  self.log_bins_per_decade, self.log_max_decade,
                                  self.moment_halfwidth)
        out.lin_counts = self.lin_counts + other.lin_counts
        out.pos_log_counts = self.pos_log_counts + other.pos_log_counts
        out.neg_log_counts = self.neg_log_counts + other.neg_log_counts
        out.overflow = self.overflow + other.overflow
        out.n_realizations = self.n_realizations + other.n_realizations
        out.n_eigenvalues = self.n_eigenvalues + other.n_eigenvalues
        out.m_count, out.m_mean = self.m_count, self.m_mean
        out.m_m2, out.m_m3 = self.m_m2, self.m_m3
        out._combine_moments(other.m_count, other.m_mean, other.m_m2, other.m_m3)
        return out

    @property
    def skewness(self) -> float:
        """Moment skewness of the pooled eigenvalues, |lambda| <= moment_halfwidth."""
        if self.m_count < 2 or self.m_m2 == 0.0:
            return float("nan")
        var = self.m_m2 / self.m_count
        return (self.m_m3 / self.m_count) / var**1.5

    @property
    def variance(self) -> float:
        if self.m_count < 2:
            return float("nan")
        return self.m_m2 / self.m_count

    @property
    def mean(self) -> float:
        return self.m_mean

    def dos_density(self):
        """Normalized linear-bin density; total mass + tail mass = 1.

        Returns (edges, density, counts, tail_mass).
        """
        if self.n_eigenvalues == 0:
            raise ValueError("empty accumulator")
        widths = np.diff(self.lin_edges)
        dens = self.lin_counts / (self.n_eigenvalues * widths)
        tail = 1.0 - self.lin_counts.sum() / self.n_eigenvalues
        return self.lin_edges, dens, self.lin_counts.copy(), tail

    def log_density(self, sign: int):
        """Normalized density on the log bins of one sign (+1 or -1)."""
        counts = self.pos_log_counts if sign > 0 else self.neg_log_counts
        widths = np.diff(self.log_edges)
        dens = counts / (self.n_eigenvalues * widths)
        return self.log_edges, dens, counts.copy()


def tail_exponent(acc: SpectrumAccumulator, decade_range: tuple[float, float],
                  min_bins: int = 10) -> dict:
    """Least-squares slope of log10(density) vs log10|lambda| per sign.

    Returns {"plus": (slope, stderr), "minus": (slope, stderr)} over the
    decade range [10**lo, 10**hi].
    """
    out = {}
    lo, hi = 10.0 ** decade_range[0], 10.0 ** decade_range[1]
    for label, sign in (("plus", +1), ("minus", -1)):
        edges, dens, counts = acc.log_density(sign)
        centers = np.sqrt(edges[:-1] * edges[1:])
        sel = (centers >= lo) & (centers <= hi) & (counts > 0)
        if sel.sum() < min_bins:
            raise InsufficientTailData(
                f"{int(sel.sum())} populated bins on {label} side, "
                f"need {min_bins}")
        x = np.log10(centers[sel])
        y = np.log10(dens[sel])
        coef, cov = np.polyfit(x, y, 1, cov=True)
        out[label] = (float(coef[0]), float(math.sqrt(cov[0, 0])))
    return out


# ----------------------------------------------------------------------
# spacing windows and unfolding
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    """Energy window: a union of disjoint half-open intervals [lo, hi)."""

    name: str
    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for lo, hi in self.intervals:
            if not lo < hi:
                raise ValueError(f"bad interval in window {self.name}")

    @property
    def center_abs(self) -> float:
        """Geometric-mean |lambda| of the window, for plotting/fitting."""
        vals = []
        for lo, hi in self.intervals:
            a, b = abs(lo), abs(hi)
            a, b = min(a, b), max(a, b)
            vals.append(math.sqrt(max(a, 1e-12) * b))
        return float(np.mean(vals))

    def select(self, eigs: np.ndarray) -> list[np.ndarray]:
        return [eigs[(eigs >= lo) & (eigs < hi)] for lo, hi in self.intervals]


def _check_disjoint(windows: list[Window]) -> None:
    ivals = sorted(iv for w in windows for iv in w.intervals)
    for (lo1, hi1), (lo2, hi2) in zip(ivals, ivals[1:]):
        if lo2 < hi1:
            raise ValueError("windows overlap")


def default_windows(abs_min: float = 0.05, abs_max: float = 1000.0,
                    n_windows: int = 14) -> dict[str, list[Window]]:
    """Per-sign log-spaced window sets for the transition analysis."""
    edges = np.geomspace(abs_min, abs_max, n_windows + 1)
    plus = [Window(f"p{k}", ((edges[k], edges[k + 1]),))
            for k in range(n_windows)]
    minus = [Window(f"m{k}", ((-edges[k + 1], -edges[k]),))
             for k in range(n_windows)]
    _check_disjoint(plus)
    _check_disjoint(minus)
    return {"plus": plus, "minus": minus}


def dichotomy_windows(center_halfwidth: float = 0.2, wing_start: float = 100.0,
                      wing_cap: float = 1e9) -> list[Window]:
    """The two literal comparison windows: |lambda| <= 0.2 and >= 100."""
    windows = [
        Window("center", ((-center_halfwidth, center_halfwidth),)),
        Window("wings", ((-wing_cap, -wing_start), (wing_start, wing_cap))),
    ]
    _check_disjoint(windows)
    return windows


def _staircase_grid(pooled: np.ndarray, abs_min: float = 0.05) -> np.ndarray:
    """Log-spaced grid (both signs, dense linear center) for the smoothed
    integrated DOS."""
    lo, hi = pooled[0], pooled[-1]
    parts = [np.array([lo - 1e-9])]
    if lo < -abs_min:
        parts.append(-np.geomspace(-lo, abs_min, 120))
    parts.append(np.linspace(-abs_min, abs_min, 41))
    if hi > abs_min:
        parts.append(np.geomspace(abs_min, hi, 120))
    parts.append(np.array([hi + 1e-9]))
    grid = np.concatenate(parts)
    return np.unique(grid)


@dataclass
class UnfoldedSpacings:
    """Per-window unfolded nearest-neighbor spacings (window mean rescaled
    to exactly 1) plus pre-rescale diagnostics."""

    windows: list[Window]
    spacings: list[np.ndarray]
    raw_means: list[float] = field(default_factory=list)


def unfold(eigs_per_realization: list[np.ndarray], windows: list[Window],
           grid_abs_min: float = 0.05, min_levels_per_gap: int = 64) -> UnfoldedSpacings:
    """Ensemble unfolding via the smoothed cumulative of the pooled spectrum.

    A monotone piecewise-cubic (PCHIP) is fitted to the empirical integrated
    DOS on a log-spaced grid; each realization's eigenvalues are mapped
    through it, nearest-neighbor differences are taken within each window
    (eigenvalues inside an interval are consecutive in the sorted spectrum),
    and every window's spacings are rescaled to unit mean.

    Grid nodes holding fewer than ``min_levels_per_gap`` pooled levels per
    gap are pruned: the empirical cumulative is quantized in half-level
    steps, so gaps must hold enough levels for the fitted slope to be
    smooth.

    Raises EmptyWindow if a window receives no spacings at all.
    """
    sorted_eigs = [np.sort(np.asarray(e, dtype=float))
                   for e in eigs_per_realization]
    pooled = np.sort(np.concatenate(sorted_eigs))
    n_real = len(sorted_eigs)
    grid = _staircase_grid(pooled, grid_abs_min)
    counts = np.searchsorted(pooled, grid, side="right")
    keep = [0]
    for i in range(1, len(grid) - 1):
        if counts[i] - counts[keep[-1]] >= min_levels_per_gap:
            keep.append(i)
    keep.append(len(grid) - 1)
    grid = grid[np.asarray(keep)]
    # mean number of levels <= lambda per realization
    cum = counts[np.asarray(keep)] / n_real
    # PCHIP needs strictly increasing x; cum may plateau, which is fine
    nbar = PchipInterpolator(grid, cum, extrapolate=True)

    per_window = [[] for _ in windows]
    for eigs in sorted_eigs:
        mapped = nbar(eigs)
        for wi, w in enumerate(windows):
            for sel in w.select(eigs):
                if sel.size >= 2:
                    lo_idx = np.searchsorted(eigs, sel[0])
                    hi_idx = lo_idx + sel.size
                    s = np.diff(mapped[lo_idx:hi_idx])
                    per_window[wi].append(s)

    spacings, raw_means = [], []
    for w, chunks in zip(windows, per_window):
        if not chunks:
            raise EmptyWindow(f"window {w.name} received no spacings")
        s = np.concatenate(chunks)
        raw = float(s.mean())
        raw_means.append(raw)
        spacings.append(s / raw if raw > 0 else s)
    return UnfoldedSpacings(list(windows), spacings, raw_means)


@dataclass
class SpacingAccumulator:
    """Per-window histograms of unfolded spacings on s in [0, s_max]."""

    windows: list[Window]
    s_max: float = 5.0
    n_bins: int = 100

    def __post_init__(self):
        _check_disjoint(self.windows)
        self.edges = np.linspace(0.0, self.s_max, self.n_bins + 1)
        self.counts = np.zeros((len(self.windows), self.n_bins), dtype=np.int64)
        self.beyond = np.zeros(len(self.windows), dtype=np.int64)
        self.totals = np.zeros(len(self.windows), dtype=np.int64)
        self.sums = np.zeros(len(self.windows))

    def _key(self):
        return ([w.name for w in self.windows],
                [w.intervals for w in self.windows], self.s_max, self.n_bins)

    def add(self, window_index: int, s: np.ndarray) -> None:
        s = np.asarray(s, dtype=float)
        self.counts[window_index] += np.histogram(s, bins=self.edges)[0]
        self.beyond[window_index] += int(np.sum(s >= self.s_max))
        self.totals[window_index] += s.size
        self.sums[window_index] += float(s.sum())

    def add_unfolded(self, unfolded: UnfoldedSpacings) -> None:
        for wi, s in enumerate(unfolded.spacings):
            self.add(wi, s)

    def merge(self, other: "SpacingAccumulator") -> "SpacingAccumulator":
        if self._key() != other._key():
            raise ValueError("spacing accumulator schema mismatch")
        out = SpacingAccumulator(self.windows, self.s_max, self.n_bins)
        out.counts = self.counts + other.counts
        out.beyond = self.beyond + other.beyond
        out.totals = self.totals + other.totals
        out.sums = self.sums + other.sums
        return out

    def density(self, window_index: int):
        """Normalized spacing density on the grid; mass beyond s_max is the
        complement."""
        total = self.totals[window_index]
        if total == 0:
            raise EmptyWindow(self.windows[window_index].name)
        widths = np.diff(self.edges)
        return self.edges, self.counts[window_index] / (total * widths)

    def mean_spacing(self, window_index: int) -> float:
        if self.totals[window_index] == 0:
            raise EmptyWindow(self.windows[window_index].name)
        return self.sums[window_index] / self.totals[window_index]


def _binned_reference(cdf, edges: np.ndarray) -> np.ndarray:
    mass = np.diff(cdf(edges))
    return mass / np.diff(edges)


def rms_deviation(edges: np.ndarray, density: np.ndarray, reference: str) -> float:
    """Normalized L2 deviation of a binned spacing density from a reference.

    reference is "poisson" or "wigner"; the reference is bin-averaged on the
    same grid and the distance is normalized so that
    deviation(poisson, wigner) = 1.
    """
    if reference == "poisson":
        ref = _binned_reference(analytic.poisson_spacing_cdf, edges)
    elif reference == "wigner":
        ref = _binned_reference(analytic.wigner_spacing_cdf, edges)
    else:
        raise ValueError(f"unknown reference {reference!r}")
    widths = np.diff(edges)
    val = math.sqrt(float(np.sum((density - ref) ** 2 * widths)))
    return val / XI_SPACING_NORM


# ----------------------------------------------------------------------
# transition energies
# ----------------------------------------------------------------------

@dataclass
class TransitionResult:
    """Intersection energies of the Poisson/Wigner deviation curves.

    ``lambda_minus``/``lambda_plus`` are None when the curves do not cross
    inside the scanned range; ``dominant_*`` then names the closer statistic.
    """

    lambda_minus: float | None
    lambda_plus: float | None
    dominant_minus: str | None
    dominant_plus: str | None
    curves: dict
    poly_degree: int = 3

    def __post_init__(self):
        if self.lambda_minus is not None and self.lambda_plus is not None:
            if not (self.lambda_minus < 0.0 < self.lambda_plus):
                raise ValueError("transition energies must straddle zero")


def _fit_and_intersect(centers_abs, d_p, d_wd, degree: int):
    """Fit Delta curves as polynomials in log10|lambda|; return the root of
    their difference nearest the spectrum center, or the dominant statistic."""
    x = np.log10(centers_abs)
    order = np.argsort(x)
    x = x[order]
    diff_pts = (np.asarray(d_p) - np.asarray(d_wd))[order]
    deg = min(degree, len(x) - 1)
    coeffs = np.polyfit(x, diff_pts, deg)
    poly = np.poly1d(coeffs)
    fine = np.linspace(x[0], x[-1], 2001)
    vals = poly(fine)
    sign_change = np.nonzero(np.diff(np.sign(vals)) != 0)[0]
    if sign_change.size == 0:
        dominant = "wigner_dyson" if np.all(diff_pts > 0) or vals.mean() > 0 \
            else "poisson"
        return None, dominant, coeffs
    # bisection on each bracket, keep the root closest to the spectrum center
    roots = []
    for idx in sign_change:
        lo, hi = fine[idx], fine[idx + 1]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if np.sign(poly(mid)) == np.sign(poly(lo)):
                lo = mid
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    root = min(roots)
    return 10.0 ** root, None, coeffs


def transition_energies(spacing_acc: SpacingAccumulator,
                        window_signs: list[int],
                        min_spacings: int = 200,
                        degree: int = 3,
                        min_windows: int = 6) -> TransitionResult:
    """Locate the per-sign energies where the deviation-from-Poisson and
    deviation-from-Wigner curves intersect.

    ``window_signs`` labels each accumulator window +1/-1.  Windows with
    fewer than ``min_spacings`` spacings are dropped.
    """
    curves = {}
    results = {}
    for label, sign in (("plus", +1), ("minus", -1)):
        centers, dps, dwds = [], [], []
        for wi, w in enumerate(spacing_acc.windows):
            if window_signs[wi] != sign:
                continue
            if spacing_acc.totals[wi] < min_spacings:
                continue
            edges, dens = spacing_acc.density(wi)
            centers.append(w.center_abs)
            dps.append(rms_deviation(edges, dens, "poisson"))
            dwds.append(rms_deviation(edges, dens, "wigner"))
        if len(centers) < min_windows:
            raise InsufficientWindows(
                f"{len(centers)} usable windows on {label} side, "
                f"need {min_windows}")
        centers = np.asarray(centers)
        lam_abs, dominant, coeffs = _fit_and_intersect(
            centers, dps, dwds, degree)
        curves[label] = {
            "centers_abs": centers,
            "delta_poisson": np.asarray(dps),
            "delta_wigner": np.asarray(dwds),
            "diff_poly_coeffs": coeffs,
        }
        results[label] = (lam_abs, dominant)
    lam_plus, dom_plus = results["plus"]
    lam_minus, dom_minus = results["minus"]
    return TransitionResult(
        lambda_minus=None if lam_minus is None else -lam_minus,
        lambda_plus=lam_plus,
        dominant_minus=dom_minus,
        dominant_plus=dom_plus,
        curves=curves,
        poly_degree=degree,
    )
