import math

import numpy as np
import pytest
from scipy import integrate

from rydspec import analytic, spectra
from rydspec.cloud import AtomCloud, CloudConfig, sample_cloud
from rydspec.ensembles import build_rydberg, sample_goe
from rydspec.spectra import (
    EmptyWindow,
    InsufficientTailData,
    SpacingAccumulator,
    SpectrumAccumulator,
    Window,
    XI_SPACING_NORM,
    default_windows,
    dichotomy_windows,
    eigenvalues,
    rms_deviation,
    tail_exponent,
    transition_energies,
    unfold,
)


class TestEigenvalues:
    def test_two_by_two(self):
        x = 0.37
        ev = eigenvalues(np.array([[0.0, x], [x, 0.0]]))
        assert ev[0] == pytest.approx(-x, rel=1e-14)
        assert ev[1] == pytest.approx(x, rel=1e-14)

    def test_trace_and_frobenius(self):
        rng = np.random.default_rng(3)
        cloud = sample_cloud(CloudConfig(120, 0.3, seed=0), rng)
        m = build_rydberg(cloud)
        ev = eigenvalues(m)
        hmax = np.abs(m.values).max()
        assert abs(ev.sum()) < 1e-8 * m.order * hmax
        # unitary invariance: sum lambda^2 == sum_(i!=j) H_ij^2
        assert np.sum(ev**2) == pytest.approx(np.sum(m.values**2), rel=1e-10)

    def test_residual_backward_stability(self):
        rng = np.random.default_rng(4)
        m = sample_goe(60, 1.0, rng).values
        ev, vec = np.linalg.eigh(m)
        norm = np.linalg.norm(m, 2)
        for k in (0, 30, 59):
            res = np.linalg.norm(m @ vec[:, k] - ev[k] * vec[:, k])
            assert res <= 1e-10 * norm

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(5)
        cloud = sample_cloud(CloudConfig(80, 0.0, seed=0), rng)
        m1 = build_rydberg(cloud)
        perm = np.random.default_rng(6).permutation(80)
        cloud2 = AtomCloud(cloud.positions[perm], cloud.cloud_radius, 0.0)
        m2 = build_rydberg(cloud2)
        e1, e2 = eigenvalues(m1), eigenvalues(m2)
        scale = np.abs(e1).max()
        assert np.max(np.abs(e1 - e2)) < 1e-10 * scale


class TestSpectrumAccumulator:
    def _filled(self, seed, n_real=10):
        acc = SpectrumAccumulator()
        rng = np.random.default_rng(seed)
        for _ in range(n_real):
            acc.add(rng.standard_cauchy(300) * 3)
        return acc

    def test_merge_identity(self):
        a = self._filled(1)
        empty = SpectrumAccumulator()
        m = a.merge(empty)
        assert np.array_equal(m.lin_counts, a.lin_counts)
        assert m.n_eigenvalues == a.n_eigenvalues

    def test_merge_commutes_bitwise_on_counts(self):
        a, b = self._filled(1), self._filled(2)
        ab, ba = a.merge(b), b.merge(a)
        assert np.array_equal(ab.lin_counts, ba.lin_counts)
        assert np.array_equal(ab.pos_log_counts, ba.pos_log_counts)
        assert np.array_equal(ab.neg_log_counts, ba.neg_log_counts)
        assert ab.overflow == ba.overflow

    def test_merge_associative_exact_counts(self):
        a, b, c = self._filled(1), self._filled(2), self._filled(3)
        left = a.merge(b).merge(c)
        right = a.merge(b.merge(c))
        assert np.array_equal(left.lin_counts, right.lin_counts)
        assert left.n_eigenvalues == right.n_eigenvalues

    def test_sharded_equals_sequential(self):
        rng = np.random.default_rng(11)
        eigs = [rng.standard_normal(200) * 4 for _ in range(100)]
        seq = SpectrumAccumulator()
        for e in eigs:
            seq.add(e)
        shards = [SpectrumAccumulator() for _ in range(4)]
        for i, e in enumerate(eigs):
            shards[i % 4].add(e)
        merged = shards[0]
        for s in shards[1:]:
            merged = merged.merge(s)
        assert np.array_equal(merged.lin_counts, seq.lin_counts)
        assert merged.n_realizations == seq.n_realizations
        assert merged.skewness == pytest.approx(seq.skewness, rel=1e-9)

    def test_binning_mismatch_rejected(self):
        with pytest.raises(ValueError):
            SpectrumAccumulator().merge(SpectrumAccumulator(lin_bins=500))

    def test_density_normalization(self):
        acc = self._filled(7)
        edges, dens, counts, tail = acc.dos_density()
        assert np.sum(dens * np.diff(edges)) + tail == pytest.approx(1.0, abs=1e-12)
        assert tail > 0  # cauchy tails leave the linear window

    def test_moments_match_numpy(self):
        rng = np.random.default_rng(12)
        data = [rng.standard_normal(500) for _ in range(6)]
        acc = SpectrumAccumulator()
        for e in data:
            acc.add(e)
        pooled = np.concatenate(data)
        assert acc.mean == pytest.approx(pooled.mean(), abs=1e-12)
        assert acc.variance == pytest.approx(pooled.var(), rel=1e-10)
        skew = np.mean((pooled - pooled.mean()) ** 3) / pooled.var() ** 1.5
        assert acc.skewness == pytest.approx(skew, rel=1e-9)


class TestTailExponent:
    def test_recovers_synthetic_power_law(self):
        # |lambda|^-2 tail: sample via inverse transform on both signs
        rng = np.random.default_rng(8)
        acc = SpectrumAccumulator()
        for _ in range(60):
            u = rng.random(4000)
            vals = 1.0 / u  # pdf ~ x^-2 on [1, inf)
            signs = rng.choice([-1.0, 1.0], size=vals.size)
            acc.add(vals * signs)
        fit = tail_exponent(acc, (1.5, 3.0))
        for side in ("plus", "minus"):
            slope, err = fit[side]
            assert slope == pytest.approx(-2.0, abs=0.15)

    def test_insufficient_data(self):
        acc = SpectrumAccumulator()
        acc.add(np.array([0.1, -0.2, 0.3]))
        with pytest.raises(InsufficientTailData):
            tail_exponent(acc, (1.5, 3.0))


class TestUnfold:
    def test_poisson_process_gives_exponential(self):
        # uncorrelated levels with a smooth nonuniform density: unfolded
        # spacings must follow exp(-s), KS < 0.02
        rng = np.random.default_rng(21)
        eigs = [np.tan(np.pi * (rng.random(400) - 0.5)) * 2.0
                for _ in range(300)]
        win = [Window("mid", ((-3.0, 3.0),))]
        unf = unfold(eigs, win)
        s = np.sort(unf.spacings[0])
        assert s.mean() == pytest.approx(1.0, abs=1e-12)
        emp = np.arange(1, s.size + 1) / s.size
        ks = np.max(np.abs(emp - analytic.poisson_spacing_cdf(s)))
        assert ks < 0.02

    def test_picket_fence_unit_spacings(self):
        base = np.arange(-100, 101, 1.0) * 0.37
        eigs = [base.copy() for _ in range(5)]
        win = [Window("all", ((-30.0, 30.0),))]
        unf = unfold(eigs, win)
        s = unf.spacings[0]
        assert s.mean() == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(s - 1.0)) < 0.05

    def test_window_mean_unity_and_raw_mean_close(self):
        rng = np.random.default_rng(22)
        eigs = [np.sort(rng.standard_cauchy(500)) for _ in range(200)]
        wins = [Window("a", ((-0.5, 0.5),)), Window("b", ((2.0, 8.0),))]
        unf = unfold(eigs, wins)
        for s, raw in zip(unf.spacings, unf.raw_means):
            assert s.mean() == pytest.approx(1.0, abs=1e-12)
            assert raw == pytest.approx(1.0, abs=0.05)

    def test_empty_window(self):
        eigs = [np.array([0.0, 0.1, 0.2])] * 3
        with pytest.raises(EmptyWindow):
            unfold(eigs, [Window("far", ((50.0, 60.0),))])


class TestRmsDeviation:
    def test_xi_constant_matches_quadrature(self):
        val, _ = integrate.quad(
            lambda s: (analytic.poisson_spacing(s) - analytic.wigner_spacing(s)) ** 2,
            0, np.inf)
        assert XI_SPACING_NORM == pytest.approx(math.sqrt(val), abs=1e-10)

    def _hist_from_pdf(self, cdf, edges):
        return np.diff(cdf(edges)) / np.diff(edges)

    def test_self_distance_zero(self):
        edges = np.linspace(0, 5, 101)
        f = self._hist_from_pdf(analytic.poisson_spacing_cdf, edges)
        assert rms_deviation(edges, f, "poisson") == pytest.approx(0.0, abs=1e-12)

    def test_poisson_wigner_distance_unity(self):
        edges = np.linspace(0, 5, 101)
        f = self._hist_from_pdf(analytic.poisson_spacing_cdf, edges)
        # binned on [0, 5]: truncation + binning cost < 1.5%
        assert rms_deviation(edges, f, "wigner") == pytest.approx(1.0, abs=0.015)


def _make_spacing_acc(mixtures, n_per_window, centers, rng):
    """Windows at given |lambda| centers filled with Poisson/Wigner mixture
    draws (weight = wigner fraction)."""
    wins = [Window(f"w{k}", ((c * 0.9, c * 1.1),)) for k, c in enumerate(centers)]
    acc = SpacingAccumulator(wins)
    for k, frac in enumerate(mixtures):
        n_w = int(n_per_window * frac)
        wig = rng.rayleigh(scale=math.sqrt(2.0 / math.pi), size=n_w)
        poi = rng.exponential(size=n_per_window - n_w)
        acc.add(k, np.concatenate([wig, poi]))
    return acc, wins


class TestTransitionEnergies:
    def test_crossing_recovered_from_synthetic_mixture(self):
        # wigner-dominated center, poisson-dominated wings; the crossing of
        # the two deviation curves should land near the 50/50 point
        rng = np.random.default_rng(33)
        centers = np.geomspace(0.1, 100.0, 8)
        cross_at = 3.0
        fracs = 1.0 / (1.0 + (centers / cross_at) ** 1.5)
        acc, wins = _make_spacing_acc(fracs, 40_000, centers, rng)
        signs = [1] * len(wins)
        # mirror windows for the negative side
        neg_wins = [Window(f"n{k}", ((-c * 1.1, -c * 0.9),))
                    for k, c in enumerate(centers)]
        both = SpacingAccumulator(wins + neg_wins)
        both.counts[:len(wins)] = acc.counts
        both.totals[:len(wins)] = acc.totals
        both.sums[:len(wins)] = acc.sums
        both.counts[len(wins):] = acc.counts
        both.totals[len(wins):] = acc.totals
        both.sums[len(wins):] = acc.sums
        res = transition_energies(both, [1] * len(wins) + [-1] * len(neg_wins),
                                  min_windows=6)
        assert res.lambda_plus == pytest.approx(cross_at, rel=0.5)
        assert res.lambda_minus == pytest.approx(-cross_at, rel=0.5)

    def test_no_crossing_reports_dominant(self):
        rng = np.random.default_rng(34)
        centers = np.geomspace(0.1, 100.0, 8)
        acc, wins = _make_spacing_acc(np.full(8, 0.97), 30_000, centers, rng)
        neg_wins = [Window(f"n{k}", ((-c * 1.1, -c * 0.9),))
                    for k, c in enumerate(centers)]
        both = SpacingAccumulator(wins + neg_wins)
        both.counts[:len(wins)] = acc.counts
        both.totals[:len(wins)] = acc.totals
        both.sums[:len(wins)] = acc.sums
        both.counts[len(wins):] = acc.counts
        both.totals[len(wins):] = acc.totals
        both.sums[len(wins):] = acc.sums
        res = transition_energies(both, [1] * 8 + [-1] * 8, min_windows=6)
        assert res.lambda_plus is None
        assert res.dominant_plus == "wigner_dyson"

    def test_insufficient_windows(self):
        rng = np.random.default_rng(35)
        centers = np.geomspace(1.0, 10.0, 3)
        acc, wins = _make_spacing_acc([0.5] * 3, 1000, centers, rng)
        with pytest.raises(spectra.InsufficientWindows):
            transition_energies(acc, [1, 1, 1], min_windows=6)


class TestWindows:
    def test_default_windows_disjoint_and_log_spaced(self):
        wins = default_windows()
        assert len(wins["plus"]) == 14
        assert len(wins["minus"]) == 14
        edges = [w.intervals[0][0] for w in wins["plus"]]
        ratios = np.diff(np.log(edges))
        assert np.allclose(ratios, ratios[0])

    def test_dichotomy_windows(self):
        wins = dichotomy_windows()
        assert wins[0].intervals == ((-0.2, 0.2),)
        assert len(wins[1].intervals) == 2

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            SpacingAccumulator([Window("a", ((0.0, 2.0),)),
                                Window("b", ((1.0, 3.0),))])

    def test_spacing_merge_matches_single(self):
        rng = np.random.default_rng(40)
        wins = [Window("a", ((0.0, 1.0),))]
        one = SpacingAccumulator(wins)
        sh1, sh2 = SpacingAccumulator(wins), SpacingAccumulator(wins)
        s1, s2 = rng.exponential(size=500), rng.exponential(size=700)
        one.add(0, np.concatenate([s1, s2]))
        sh1.add(0, s1)
        sh2.add(0, s2)
        merged = sh1.merge(sh2)
        assert np.array_equal(merged.counts, one.counts)
        assert merged.mean_spacing(0) == pytest.approx(one.mean_spacing(0), rel=1e-12)
