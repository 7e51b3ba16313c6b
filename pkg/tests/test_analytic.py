import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, special

from rydspec import analytic
from rydspec.analytic import (
    COUPLING_AMP,
    GeometryParams,
    anisotropy,
    coupling_bounds,
    coupling_pdf,
    coupling_variance,
    hyp2f1_special,
    lambda_w,
    pair_distance_cdf,
    pair_distance_pdf,
    poisson_spacing,
    sample_pair_distances,
    semicircle,
    semicircle_cdf,
    wigner_spacing,
)


def test_anisotropy_values():
    assert anisotropy(1.0) == pytest.approx(9 * math.sqrt(3) / (4 * math.pi), rel=1e-14)
    assert anisotropy(1.0) == pytest.approx(1.2405, abs=1e-4)
    assert anisotropy(1 / math.sqrt(3)) == pytest.approx(0.0, abs=1e-14)
    assert anisotropy(0.0) == pytest.approx(-9 * math.sqrt(3) / (8 * math.pi), rel=1e-14)
    assert anisotropy(0.0) == pytest.approx(-0.6202, abs=1e-4)
    with pytest.raises(ValueError):
        anisotropy(1.5)


def test_anisotropy_pdf_normalized():
    a = COUPLING_AMP
    val, _ = integrate.quad(lambda x: analytic.anisotropy_pdf(x), -a / 3, 2 * a / 3,
                            points=[-a / 3], limit=200)
    assert val == pytest.approx(1.0, abs=1e-9)


class TestPairDistance:
    def test_vanishes_at_diameter(self):
        p = GeometryParams(100, 0.0)
        assert pair_distance_pdf(p.diameter, p) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("n,rb", [(100, 0.0), (1000, 0.5), (10000, 0.75)])
    def test_normalization(self, n, rb):
        p = GeometryParams(n, rb)
        val, err = integrate.quad(lambda r: pair_distance_pdf(r, p),
                                  rb, p.diameter, limit=200)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_small_r_quadratic(self):
        # pdf ~ 24 r^2 / d^3 for r -> 0 at rb = 0; the finite-size correction
        # factor is (1 - r/d)^2 (1 + r/2d) = 1 - 1.5 r/d + O((r/d)^2)
        p = GeometryParams(1000, 0.0)
        d = p.diameter
        r = d / 100
        assert pair_distance_pdf(r, p) == pytest.approx(24 * r**2 / d**3, rel=2e-2)
        r = d / 1000
        assert pair_distance_pdf(2 * r, p) / pair_distance_pdf(r, p) == pytest.approx(
            4.0, rel=2e-3)

    def test_cdf_matches_quadrature(self):
        p = GeometryParams(500, 0.3)
        for r in (0.5, 1.0, 4.0, 0.9 * p.diameter):
            val, _ = integrate.quad(lambda s: pair_distance_pdf(s, p), p.blockade_radius,
                                    r, limit=200)
            assert pair_distance_cdf(r, p) == pytest.approx(val, abs=1e-10)

    def test_sampling_inversion_tolerance(self):
        p = GeometryParams(1000, 0.5)
        rng = np.random.default_rng(7)
        r = sample_pair_distances(p, rng, 2000)
        assert np.all(r > p.blockade_radius)
        assert np.all(r <= p.diameter)
        # round trip: cdf(sample) reproduces uniforms to inversion tolerance
        rng2 = np.random.default_rng(7)
        u = rng2.random(2000)
        assert np.max(np.abs(pair_distance_cdf(r, p) - u)) < 1e-9


class TestHyp2f1:
    @pytest.mark.parametrize("case", ["radial", "angular"])
    def test_at_zero(self, case):
        assert hyp2f1_special(case, 0.0) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("case,abc", [("radial", (-1 / 6, 1, 1 / 3)),
                                          ("angular", (-2 / 3, 1 / 2, 1 / 3))])
    @pytest.mark.parametrize("x", [-2.0, -1.3, -0.7, -0.2, 0.3, 0.7, 0.95])
    def test_against_mpmath(self, case, abc, x):
        ref = float(mpmath.hyp2f1(*abc, x))
        assert hyp2f1_special(case, x) == pytest.approx(ref, rel=1e-11)

    def test_two_independent_routes_at_minus_two(self):
        # independent evaluation strategies must agree to 1e-10
        v1 = hyp2f1_special("radial", -2.0, route="pfaff")
        v2 = hyp2f1_special("radial", -2.0, route="pfaff_swap")
        assert v1 == pytest.approx(v2, rel=1e-10)
        ref = float(special.hyp2f1(-1 / 6, 1, 1 / 3, -2.0))
        assert v1 == pytest.approx(ref, rel=1e-8)

    def test_euler_style_connection(self):
        # near-one connection vs direct series on overlapping domain
        for x in (0.55, 0.8):
            assert hyp2f1_special("angular", x, route="near_one") == pytest.approx(
                hyp2f1_special("angular", x, route="series"), rel=1e-10)


class TestCouplingPdf:
    def test_tail_law_unblockaded(self):
        # pdf * N * h^2 -> 1; the approach is slow, ~ |w|^(-1/3)
        p = GeometryParams(1000, 0.0)
        for h, tol in ((1e7, 2e-3), (1e10, 2e-4)):
            val = coupling_pdf(h, p) * p.n_atoms * h * h
            assert val == pytest.approx(1.0, abs=tol)
            val = coupling_pdf(-h, p) * p.n_atoms * h * h
            assert val == pytest.approx(1.0, abs=tol)

    def test_zero_rb_center_value(self):
        # limit value at h = 0 is 32 N / 189 (independent moment computation)
        for n in (10, 1000):
            p = GeometryParams(n, 0.0)
            assert coupling_pdf(0.0, p) == pytest.approx(32 * n / 189, rel=1e-12)

    def test_normalization_unblockaded(self):
        p = GeometryParams(200, 0.0)
        lo, hi = -4000.0 / p.n_atoms, 8000.0 / p.n_atoms
        val, _ = integrate.quad(lambda h: coupling_pdf(h, p), lo, hi, limit=400)
        # tail mass ~ 1/(N|h|) per side with the slow |w|^(-1/3) correction
        tail_lo, _ = integrate.quad(lambda h: coupling_pdf(-1 / h, p) / h**2, 1e-9,
                                    -1 / lo, limit=200)
        tail_hi, _ = integrate.quad(lambda h: coupling_pdf(1 / h, p) / h**2, 1e-9,
                                    1 / hi, limit=200)
        assert val + tail_lo + tail_hi == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("n,rb", [(1000, 0.5), (10000, 0.75)])
    def test_normalization_blockaded(self, n, rb):
        p = GeometryParams(n, rb)
        lo, hi = coupling_bounds(p)
        seam = 2.0 * COUPLING_AMP / (3.0 * p.diameter**3)
        pts = [-seam, 0.0, seam, 2 * seam]
        val, _ = integrate.quad(lambda h: coupling_pdf(h, p), lo, hi,
                                points=pts, limit=400)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_support_blockaded(self):
        p = GeometryParams(1000, 0.5)
        lo, hi = coupling_bounds(p)
        assert lo == pytest.approx(-COUPLING_AMP / (3 * 0.125), rel=1e-14)
        assert hi == pytest.approx(2 * COUPLING_AMP / (3 * 0.125), rel=1e-14)
        assert coupling_pdf(lo - 1e-9, p) == 0.0
        assert coupling_pdf(hi + 1e-9, p) == 0.0
        assert coupling_pdf(0.5 * lo, p) > 0.0
        assert coupling_pdf(0.5 * hi, p) > 0.0

    @pytest.mark.parametrize("n,rb", [(1000, 0.5), (10000, 0.75), (300, 0.25)])
    def test_branch_seam_continuity(self, n, rb):
        # one-sided limits at each interior branch seam agree to 1e-6 relative;
        # the non-central seams are sqrt cusps, so steps must be tiny
        p = GeometryParams(n, rb)
        a = COUPLING_AMP
        u_seams = [-1.0 / p.b**3, 0.0, 2.0 / p.b**3]
        u_scale = 1.0 / p.b**3
        for useam in u_seams:
            h = useam * a / (3 * rb**3)
            step = u_scale * 1e-13 * a / (3 * rb**3)
            left = coupling_pdf(h - step, p)
            right = coupling_pdf(h + step, p)
            center = coupling_pdf(h, p)
            assert left == pytest.approx(right, rel=1e-6)
            assert center == pytest.approx(right, rel=1e-6)

    @pytest.mark.parametrize("n,rb", [(1000, 0.5)])
    def test_against_direct_marginalization(self, n, rb):
        # oracle: f(h) = int (1/y) f_X(h/y) f_Y(y) dy over the radial factor
        p = GeometryParams(n, rb)
        a = COUPLING_AMP
        d, chi = p.diameter, p.chi
        ymin, ymax = 1.0 / d**3, 1.0 / rb**3

        def f_x(x):
            if x < -a / 3 or x > 2 * a / 3:
                return 0.0
            return 1.0 / (2 * a * math.sqrt(1 / 3 + x / a))

        def f_y(y):
            return 4 * (d * y**(1 / 3) - 1)**2 * (2 * d * y**(1 / 3) + 1) / (
                d**6 * chi * y**3)

        useam = 1.0 / p.b**3
        for u in (-0.7, -1.2 * useam, -0.4 * useam, 1e-6, 0.9 * useam,
                  3.0 * useam, 0.8):
            h = u * a / (3 * rb**3)
            lo = ymin if h == 0 else max(ymin, -3 * h / a if h < 0 else 3 * h / (2 * a))
            val, _ = integrate.quad(lambda y: f_x(h / y) * f_y(y) / y, lo, ymax,
                                    limit=800)
            assert coupling_pdf(h, p) == pytest.approx(val, rel=1e-8)

    def test_lopsided_near_zero(self):
        # anisotropy makes the density asymmetric around h = 0
        p = GeometryParams(10000, 0.0)
        h = 1.0 / p.n_atoms
        assert coupling_pdf(h, p) != pytest.approx(coupling_pdf(-h, p), rel=1e-3)

    def test_first_moment_vanishes(self):
        p = GeometryParams(300, 0.5)
        lo, hi = coupling_bounds(p)
        val, _ = integrate.quad(lambda h: h * coupling_pdf(h, p), lo, hi,
                                points=[0.0], limit=400)
        assert val == pytest.approx(0.0, abs=1e-8)

    def test_blockaded_matches_zero_rb_in_core(self):
        # for small |h| the bounded and unbounded laws coincide
        n = 10000
        pb = GeometryParams(n, 0.75)
        p0 = GeometryParams(n, 0.0)
        for h in (0.3 / n, -0.2 / n, 5.0 / n):
            assert coupling_pdf(h, pb) == pytest.approx(coupling_pdf(h, p0), rel=1e-3)


class TestCouplingVariance:
    def test_quoted_value(self):
        # 2.86e-4 for N = 1e4, rb = 0.75
        assert coupling_variance(GeometryParams(10000, 0.75)) == pytest.approx(
            2.86e-4, rel=0.01)

    def test_against_pdf_quadrature(self):
        p = GeometryParams(500, 0.5)
        lo, hi = coupling_bounds(p)
        val, _ = integrate.quad(lambda h: h * h * coupling_pdf(h, p), lo, hi,
                                points=[0.0], limit=400)
        assert coupling_variance(p) == pytest.approx(val, rel=1e-7)

    def test_rb_cubed_scaling(self):
        # variance * rb^3 approaches a constant as rb -> 0
        n = 2000
        vals = [coupling_variance(GeometryParams(n, rb)) * rb**3
                for rb in (0.2, 0.1, 0.05)]
        assert vals[1] == pytest.approx(vals[2], rel=0.02)

    def test_domain_error_at_zero_rb(self):
        with pytest.raises(ValueError):
            coupling_variance(GeometryParams(100, 0.0))


class TestSpacingLaws:
    def test_values_at_zero(self):
        assert poisson_spacing(0.0) == 1.0
        assert wigner_spacing(0.0) == 0.0

    @pytest.mark.parametrize("law", [poisson_spacing, wigner_spacing])
    def test_normalized_unit_mean(self, law):
        norm, _ = integrate.quad(law, 0, np.inf)
        mean, _ = integrate.quad(lambda s: s * law(s), 0, np.inf)
        assert norm == pytest.approx(1.0, abs=1e-9)
        assert mean == pytest.approx(1.0, abs=1e-9)

    def test_cdfs(self):
        s = np.linspace(0, 4, 9)
        for pdf, cdf in ((poisson_spacing, analytic.poisson_spacing_cdf),
                         (wigner_spacing, analytic.wigner_spacing_cdf)):
            for v in s[1:]:
                q, _ = integrate.quad(pdf, 0, v)
                assert cdf(v) == pytest.approx(q, abs=1e-10)


class TestSemicircle:
    def test_normalized_support(self):
        lw = 3.2
        val, _ = integrate.quad(lambda x: semicircle(x, lw), -lw, lw)
        assert val == pytest.approx(1.0, abs=1e-9)
        assert semicircle(lw * 1.0001, lw) == 0.0
        assert semicircle(-lw * 1.0001, lw) == 0.0
        assert semicircle_cdf(-lw, lw) == pytest.approx(0.0, abs=1e-12)
        assert semicircle_cdf(lw, lw) == pytest.approx(1.0, abs=1e-12)

    def test_lambda_w_sigma_identification(self):
        # lambda_w == sqrt(2N) sigma with sigma^2/2 the coupling variance
        for n, rb in ((10000, 0.5), (1000, 0.75)):
            p = GeometryParams(n, rb)
            sigma = analytic.goe_sigma_matched(p)
            assert lambda_w(p) == pytest.approx(math.sqrt(2 * n) * sigma, rel=1e-12)

    def test_lambda_w_domain(self):
        with pytest.raises(ValueError):
            lambda_w(GeometryParams(100, 0.0))
