import math

import mpmath
import numpy as np
import pytest

from ebpoisson import (
    CHI_SQ,
    DISTANCES,
    HELLINGER_SQ,
    KL,
    DiscretePrior,
    EmpiricalPMF,
    eval_distance,
    get_distance,
    hellinger_sq_mixtures,
    mixture_pmf,
)
from conftest import philox, random_pmf, random_prior

mpmath.mp.dps = 50

ALL = [KL, HELLINGER_SQ, CHI_SQ]


class TestPointwiseLoss:
    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
    def test_zero_observed_mass_contributes_nothing(self, spec):
        for b in (1e-8, 0.3, 1.0):
            assert spec.ell(0.0, b) == 0.0
            assert spec.ell_db(0.0, b) == 0.0

    def test_derivative_hand_values(self):
        assert KL.ell_db(0.5, 0.5) == pytest.approx(-1.0)
        assert HELLINGER_SQ.ell_db(0.25, 1.0) == pytest.approx(-0.5)
        assert CHI_SQ.ell_db(0.5, 0.5) == pytest.approx(-1.0)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
    def test_decreasing_and_convex_in_b(self, spec):
        bs = np.linspace(1e-3, 1.0, 200)
        for a in (1e-4, 0.1, 0.9):
            vals = spec.ell(a, bs)
            assert np.all(np.diff(vals) < 0)
            assert np.all(np.diff(vals, 2) > -1e-12)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
    def test_derivatives_match_finite_differences(self, spec):
        rng = philox(21)
        pts = rng.uniform(1e-4, 1.0, size=(100, 2))
        h = 1e-6
        for a, b in pts:
            fd1 = (spec.ell(a, b + h) - spec.ell(a, b - h)) / (2 * h)
            assert spec.ell_db(a, b) == pytest.approx(fd1, rel=1e-6, abs=1e-9)
            fd2 = (spec.ell_db(a, b + h) - spec.ell_db(a, b - h)) / (2 * h)
            assert spec.ell_d2b(a, b) == pytest.approx(fd2, rel=1e-5, abs=1e-7)


class TestEvalDistance:
    def test_hellinger_hand_value(self):
        emp = EmpiricalPMF.from_sample([0])
        prior = DiscretePrior((1.0,), (1.0,))
        want = 2.0 * (1.0 - math.exp(-0.5))
        assert eval_distance(HELLINGER_SQ, emp, prior) == pytest.approx(want, rel=1e-12)
        assert want == pytest.approx(0.7869387, abs=5e-8)

    def test_kl_entropy_offset_constant_across_priors(self):
        rng = philox(22)
        emp = random_pmf(rng)
        ys, ps = emp.support_arrays()
        entropy_part = float(np.sum(ps * np.log(ps)))
        for _ in range(10):
            prior = random_prior(rng)
            f = np.array([mixture_pmf(prior, int(y)) for y in ys])
            cross = float(np.sum(ps * np.log(f)))
            assert eval_distance(KL, emp, prior) + cross == pytest.approx(
                entropy_part, abs=1e-10)

    def test_chi_sq_matches_direct_formula(self):
        rng = philox(23)
        for _ in range(5):
            emp = random_pmf(rng)
            prior = random_prior(rng)
            ys, ps = emp.support_arrays()
            f = np.array([mixture_pmf(prior, int(y)) for y in ys])
            assert eval_distance(CHI_SQ, emp, prior) == pytest.approx(
                float(np.sum(ps**2 / f)) - 1.0, rel=1e-12)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
    def test_nonnegative(self, spec, rng):
        for _ in range(20):
            assert eval_distance(spec, random_pmf(rng), random_prior(rng)) >= 0.0

    def test_sandwich(self):
        # The squared Hellinger here sums (sqrt(p) - sqrt(f))^2 without the
        # conventional 1/2, so the classical bound 2*(H^2/2) <= KL reads
        # H2 <= KL in this normalization.  KL <= chi2 is normalization-free.
        rng = philox(24)
        for _ in range(100):
            emp = random_pmf(rng)
            prior = random_prior(rng)
            h2 = eval_distance(HELLINGER_SQ, emp, prior)
            kl = eval_distance(KL, emp, prior)
            chi2 = eval_distance(CHI_SQ, emp, prior)
            assert h2 <= kl + 1e-12
            assert kl <= chi2 + 1e-12


class TestHellingerBetweenMixtures:
    def test_identical_priors(self, rng):
        prior = random_prior(rng)
        assert hellinger_sq_mixtures(prior, prior) <= 1e-12

    def test_far_apart_point_masses(self):
        a = DiscretePrior((0.0,), (1.0,))
        b = DiscretePrior((50.0,), (1.0,))
        assert hellinger_sq_mixtures(a, b) == pytest.approx(2.0, abs=1e-10)

    def test_against_long_summation(self):
        one = DiscretePrior((1.0,), (1.0,))
        two = DiscretePrior((2.0,), (1.0,))
        acc = mpmath.mpf(0)
        for y in range(1000):
            f1 = mpmath.exp(-1) / mpmath.factorial(y)
            f2 = mpmath.exp(y * mpmath.log(2) - 2) / mpmath.factorial(y)
            acc += (mpmath.sqrt(f1) - mpmath.sqrt(f2)) ** 2
        assert hellinger_sq_mixtures(one, two) == pytest.approx(float(acc), rel=1e-10)

    def test_random_pairs_against_long_summation(self):
        rng = philox(25)
        for _ in range(5):
            p1, p2 = random_prior(rng), random_prior(rng)
            acc = mpmath.mpf(0)
            for y in range(400):
                f1 = mpmath.mpf(mixture_pmf(p1, y))
                f2 = mpmath.mpf(mixture_pmf(p2, y))
                acc += (mpmath.sqrt(f1) - mpmath.sqrt(f2)) ** 2
            assert hellinger_sq_mixtures(p1, p2) == pytest.approx(float(acc), abs=1e-9)

    def test_bounds(self, rng):
        for _ in range(20):
            v = hellinger_sq_mixtures(random_prior(rng), random_prior(rng))
            assert 0.0 <= v <= 2.0


class TestRegistry:
    def test_lookup_is_case_insensitive(self):
        assert get_distance("KL") is KL
        assert get_distance("h2") is HELLINGER_SQ
        assert get_distance("Chi2") is CHI_SQ

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="chi2"):
            get_distance("wasserstein")

    def test_t_constants(self):
        assert DISTANCES["kl"].t_const == 0.0
        assert DISTANCES["h2"].t_const == 2.0
        assert DISTANCES["chi2"].t_const == -1.0
