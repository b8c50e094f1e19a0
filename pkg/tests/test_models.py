import math

import numpy as np
import pytest
from scipy import integrate, stats

from streamcp.models import (
    ChainedGammaPrior,
    EventWindow,
    PoissonGammaModel,
    chained_gamma_reweight,
    cp_prior_log_density,
    gamma_segment_log_evidence,
    independent_gamma_log_density,
    sample_segment_intensity,
)
from streamcp.particles import ChangepointConfiguration, InvalidConfigurationError


def _quad_log_evidence(r, delta, alpha, beta):
    """Numerical integral of lam^r e^{-lam delta} against the gamma prior."""
    shape = alpha + r
    rate = beta + delta
    scale = shape / rate  # posterior mean, used to stabilize

    def log_f(lam):
        return (
            (shape - 1.0) * math.log(lam * scale)
            - rate * lam * scale
            + alpha * math.log(beta)
            - math.lgamma(alpha)
        )

    # factor out the peak so quad works at unit magnitude
    mode = max((shape - 1.0) / shape, 1e-6)  # in transformed coordinates
    peak = log_f(mode)
    f = lambda lam: math.exp(log_f(lam) - peak)  # noqa: E731
    v1, e1 = integrate.quad(f, 0.0, mode, limit=200, epsabs=0.0, epsrel=1e-12)
    v2, e2 = integrate.quad(f, mode, np.inf, limit=200, epsabs=0.0, epsrel=1e-12)
    val, err = v1 + v2, e1 + e2
    assert err < 1e-9 * val  # relative error well below the 1e-8 log tolerance
    return math.log(val) + peak + math.log(scale)


class TestGammaSegmentLogEvidence:
    def test_matches_quadrature(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            alpha = rng.uniform(0.05, 20.0)
            beta = rng.uniform(0.05, 20.0)
            r = int(rng.integers(0, 60))
            delta = rng.uniform(0.01, 100.0)
            got = gamma_segment_log_evidence(r, delta, alpha, beta)
            want = _quad_log_evidence(r, delta, alpha, beta)
            assert got == pytest.approx(want, abs=1e-8)

    def test_frozen_values(self):
        # independently computed: log(beta^a Gamma(a+r) / (Gamma(a) (beta+d)^(a+r)))
        assert gamma_segment_log_evidence(0, 1.0, 1.0, 1.0) == pytest.approx(
            -math.log(2.0)
        )
        assert gamma_segment_log_evidence(3, 2.0, 0.1, 0.1) == pytest.approx(
            0.1 * math.log(0.1)
            + math.lgamma(3.1)
            - math.lgamma(0.1)
            - 3.1 * math.log(2.1)
        )

    def test_input_validation(self):
        with pytest.raises(ValueError):
            gamma_segment_log_evidence(1, 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            gamma_segment_log_evidence(-1, 1.0, 1.0, 1.0)


class TestCpPrior:
    def test_k_zero(self):
        assert cp_prior_log_density(0, (), (0.0, 5.0), 2.0) == pytest.approx(-10.0)

    def test_general(self):
        nu = 0.3
        got = cp_prior_log_density(2, (1.0, 2.0), (0.0, 4.0), nu)
        assert got == pytest.approx(2 * math.log(nu) - nu * 4.0)

    def test_rejects_bad_configs(self):
        with pytest.raises(InvalidConfigurationError):
            cp_prior_log_density(1, (), (0.0, 1.0), 1.0)
        with pytest.raises(InvalidConfigurationError):
            cp_prior_log_density(2, (2.0, 1.0), (0.0, 4.0), 1.0)
        with pytest.raises(InvalidConfigurationError):
            cp_prior_log_density(1, (5.0,), (0.0, 4.0), 1.0)
        with pytest.raises(InvalidConfigurationError):
            cp_prior_log_density(1, (0.0,), (0.0, 4.0), 1.0)


class TestEventWindow:
    def test_counts(self):
        w = EventWindow(np.array([0.5, 1.5, 2.5, 3.0]), 0.0, 4.0)
        assert w.count(0.0, 1.0) == 1
        assert w.count(1.0, 3.0) == 3
        assert w.count(3.0, 4.0) == 0
        assert list(w.counts([0.0, 1.0, 3.0, 4.0])) == [1, 3, 0]

    def test_half_open_boundaries(self):
        w = EventWindow(np.array([1.0, 2.0]), 0.0, 2.0)
        assert w.count(0.0, 1.0) == 1  # right endpoint included
        assert w.count(1.0, 2.0) == 1  # left endpoint excluded

    def test_restrict(self):
        w = EventWindow(np.array([0.5, 1.5, 2.5]), 0.0, 3.0)
        sub = w.restrict(1.0, 3.0)
        assert list(sub.events) == [1.5, 2.5]
        assert (sub.start, sub.end) == (1.0, 3.0)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            EventWindow(np.array([5.0]), 0.0, 4.0)
        with pytest.raises(ValueError):
            EventWindow(np.array([0.0]), 0.0, 4.0)
        with pytest.raises(ValueError):
            EventWindow(np.array([2.0, 1.0]), 0.0, 4.0)
        with pytest.raises(ValueError):
            EventWindow(np.array([]), 2.0, 1.0)


class TestPoissonGammaModel:
    def test_log_gamma_is_prior_plus_evidences(self):
        m = PoissonGammaModel(nu=0.5, alpha=1.2, beta=0.8)
        w = EventWindow(np.array([0.5, 1.2, 2.7]), 0.0, 3.0)
        cfg = ChangepointConfiguration((1.0, 2.0))
        want = (
            cp_prior_log_density(2, (1.0, 2.0), (0.0, 3.0), 0.5)
            + gamma_segment_log_evidence(1, 1.0, 1.2, 0.8)
            + gamma_segment_log_evidence(1, 1.0, 1.2, 0.8)
            + gamma_segment_log_evidence(1, 1.0, 1.2, 0.8)
        )
        assert m.log_gamma(cfg, w) == pytest.approx(want)

    def test_prior_only_ignores_data(self):
        m = PoissonGammaModel(nu=0.5, alpha=1.2, beta=0.8, prior_only=True)
        w1 = EventWindow(np.array([0.5, 1.2, 2.7]), 0.0, 3.0)
        w2 = EventWindow(np.array([]), 0.0, 3.0)
        cfg = ChangepointConfiguration((1.0,))
        assert m.log_gamma(cfg, w1) == m.log_gamma(cfg, w2)
        assert m.segment_log_evidence(5, 2.0) == 0.0

    def test_window_start_before_cp_interval(self):
        # data window starts before the changepoint interval: first segment spans it
        m = PoissonGammaModel(nu=0.5, alpha=1.0, beta=1.0)
        w = EventWindow(np.array([0.5, 2.5]), 0.0, 3.0)
        cfg = ChangepointConfiguration((2.2,))
        got = m.log_gamma(cfg, w, cp_interval=(2.0, 3.0))
        want = (
            math.log(0.5)
            - 0.5 * 1.0
            + gamma_segment_log_evidence(1, 2.2, 1.0, 1.0)
            + gamma_segment_log_evidence(1, 0.8, 1.0, 1.0)
        )
        assert got == pytest.approx(want)

    def test_intensity_at_end(self):
        m = PoissonGammaModel(nu=0.5, alpha=2.0, beta=1.0)
        w = EventWindow(np.array([0.5, 2.5, 2.8]), 0.0, 3.0)
        shape, rate, mean = m.intensity_at_end(ChangepointConfiguration((2.0,)), w)
        assert shape == pytest.approx(2.0 + 2)
        assert rate == pytest.approx(1.0 + 1.0)
        assert mean == pytest.approx(2.0)

    def test_rejects_nonpositive_params(self):
        with pytest.raises(ValueError):
            PoissonGammaModel(nu=0.0, alpha=1.0, beta=1.0)


class TestIntensitySampling:
    def test_posterior_moments(self):
        rng = np.random.default_rng(5)
        alpha, beta, r, delta = 0.7, 0.4, 9, 3.0
        draws = np.array(
            [sample_segment_intensity(r, delta, alpha, beta, rng) for _ in range(40_000)]
        )
        shape, rate = alpha + r, beta + delta
        assert draws.mean() == pytest.approx(shape / rate, rel=0.02)
        assert draws.var() == pytest.approx(shape / rate**2, rel=0.05)

    def test_joint_draw_shapes(self):
        rng = np.random.default_rng(6)
        m = PoissonGammaModel(nu=0.5, alpha=1.0, beta=1.0)
        w = EventWindow(np.array([0.5, 1.5]), 0.0, 3.0)
        lams = m.sample_intensities(ChangepointConfiguration((1.0, 2.0)), w, rng)
        assert lams.shape == (3,)
        assert np.all(lams > 0)


class TestChainedGammaPrior:
    def test_log_density_matches_scipy(self):
        prior = ChainedGammaPrior(alpha=2.0, beta=1.5, chi=0.5)
        lam = np.array([1.3, 0.8, 2.1])
        want = stats.gamma.logpdf(lam[0], a=2.0, scale=1 / 1.5)
        for prev, cur in zip(lam[:-1], lam[1:]):
            want += stats.gamma.logpdf(cur, a=prev**2 / 0.5, scale=0.5 / prev)
        assert prior.log_density(lam) == pytest.approx(float(want))

    def test_reweight_ratio(self):
        prior = ChainedGammaPrior(alpha=2.0, beta=1.5, chi=0.5)
        lam = np.array([1.3, 0.8])
        lw = -0.7
        got = chained_gamma_reweight(lam, lw, (0.9, 1.1), prior)
        want = (
            lw
            + prior.log_density(lam)
            - independent_gamma_log_density(lam, 0.9, 1.1)
        )
        assert got == pytest.approx(want)

    def test_single_segment_reduces_to_marginal(self):
        # with one segment the chained and independent densities share the
        # gamma(alpha, beta) marginal, so reweighting by matching parameters
        # is a no-op
        prior = ChainedGammaPrior(alpha=2.0, beta=1.5, chi=0.5)
        assert chained_gamma_reweight([1.7], 0.3, (2.0, 1.5), prior) == pytest.approx(0.3)

    def test_rejects_nonpositive(self):
        prior = ChainedGammaPrior(alpha=2.0, beta=1.5, chi=0.5)
        with pytest.raises(ValueError):
            prior.log_density([1.0, -0.5])
        with pytest.raises(ValueError):
            ChainedGammaPrior(alpha=0.0, beta=1.0, chi=1.0)
