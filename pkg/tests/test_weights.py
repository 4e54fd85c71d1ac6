import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from confident_crowd.errors import EmptyInput, NoSignalInControl
from confident_crowd.sim import WeightMixture, draw_weights
from confident_crowd.weights import (
    Condition,
    SocialSignal,
    SocialWeight,
    SubjectResponse,
    WeightStatus,
    second_estimate,
    social_signal,
    social_weight,
    social_weight_values,
    weight_histogram,
)

log_x = st.floats(-12, 12, allow_nan=False)


def response(log_x1, log_x2, mu_s, condition=Condition.AGGREGATED_MEAN):
    return SubjectResponse(math.exp(log_x1), math.exp(log_x2), SocialSignal(mu_s, condition))


class TestSocialSignal:
    def test_mean_of_constants(self):
        assert social_signal("mean", [10, 10, 10]).mu_s == pytest.approx(math.log(10))

    def test_full_information_is_mean_log(self):
        sig = social_signal(Condition.FULL_INFORMATION, [math.e, math.e ** 3])
        assert sig.mu_s == pytest.approx(2.0)
        assert sig.condition is Condition.FULL_INFORMATION

    def test_mean_shifts_up(self):
        mu = social_signal("mean", [math.e, math.e ** 3]).mu_s
        assert mu == pytest.approx(math.log((math.e + math.e ** 3) / 2), rel=1e-14)
        assert mu == pytest.approx(2.4338, abs=1e-4)
        assert mu > 2

    def test_leave_one_out(self):
        assert social_signal("mean", [10, 1000, 1000], exclude_index=0).mu_s == pytest.approx(math.log(1000))

    def test_errors(self):
        with pytest.raises(NoSignalInControl):
            social_signal("control", [1, 2])
        with pytest.raises(EmptyInput):
            social_signal("mean", [])


class TestSecondEstimate:
    def test_private_only(self):
        assert second_estimate(37.0, 5.0, 0.0) == pytest.approx(37.0, rel=1e-15)

    def test_social_only(self):
        assert second_estimate(37.0, 5.0, 1.0) == pytest.approx(math.exp(5.0), rel=1e-15)

    def test_log_midpoint(self):
        assert second_estimate(math.e ** 2, 4.0, 0.5) == pytest.approx(math.e ** 3, rel=1e-14)

    @given(log_x, log_x, st.floats(-2, 2))
    def test_distance_to_signal(self, lx1, mu_s, w):
        lx2 = math.log(second_estimate(math.exp(lx1), mu_s, w))
        assert abs(lx2 - mu_s) == pytest.approx(abs(1 - w) * abs(lx1 - mu_s), abs=1e-9)


class TestSocialWeight:
    def test_unchanged_answer(self):
        w = social_weight(response(2.0, 2.0, 4.0))
        assert w == SocialWeight(0.0)
        assert w.valid

    def test_full_adoption(self):
        assert social_weight(response(2.0, 4.0, 4.0)).value == pytest.approx(1.0)

    def test_substitution(self):
        assert social_weight(response(2.0, 3.0, 4.0)).value == pytest.approx(0.5)

    def test_degenerate_signal(self):
        w = social_weight(response(2.0, 3.0, 2.0 + 1e-12))
        assert w.status is WeightStatus.UNDEFINED_SIGNAL
        assert w.value is None and not w.valid

    def test_out_of_range_kept(self):
        assert social_weight(response(2.0, 5.0, 4.0)).value == pytest.approx(1.5)
        assert social_weight(response(2.0, 1.0, 4.0)).value == pytest.approx(-0.5)

    @given(log_x, log_x, st.floats(-2, 2))
    def test_round_trip(self, lx1, mu_s, w):
        assume(abs(mu_s - lx1) > 1e-6)
        x1 = math.exp(lx1)
        x2 = second_estimate(x1, mu_s, w)
        got = social_weight(SubjectResponse(x1, x2, SocialSignal(mu_s, Condition.AGGREGATED_MEAN)))
        assert got.valid
        assert got.value == pytest.approx(w, abs=1e-9)

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-6, 6))
    def test_unit_invariance(self, lx1, lx2, mu_s, log_c):
        assume(abs(mu_s - lx1) > 1e-3)
        a = social_weight(response(lx1, lx2, mu_s))
        b = social_weight(response(lx1 + log_c, lx2 + log_c, mu_s + log_c))
        assert b.value == pytest.approx(a.value, abs=1e-9 * max(1.0, abs(a.value)))

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(5)
        x1 = np.exp(rng.normal(3, 1, 200))
        mu = rng.normal(3, 1, 200)
        mu[7] = math.log(x1[7])
        x2 = second_estimate(x1, mu, rng.uniform(-1, 2, 200))
        vals = social_weight_values(x1, x2, mu)
        for i in range(200):
            w = social_weight(SubjectResponse(x1[i], x2[i], SocialSignal(mu[i], Condition.AGGREGATED_MEAN)))
            if w.valid:
                assert vals[i] == w.value
            else:
                assert math.isnan(vals[i])
        assert math.isnan(vals[7])


def test_population_shrinkage_is_linear():
    logs = np.random.default_rng(2).normal(5, 1.3, 1000)
    for w in (0.0, 0.3, 0.5, 0.9):
        x2 = second_estimate(np.exp(logs), 4.2, w)
        assert np.std(np.log(x2), ddof=1) == pytest.approx((1 - w) * np.std(logs, ddof=1), abs=1e-12)


class TestWeightHistogram:
    def test_direct_count(self):
        hist, excluded = weight_histogram([SocialWeight(0.0), SocialWeight(0.0), SocialWeight(1.0)])
        assert excluded == 0
        assert hist.frequency_at(0.0) == pytest.approx(2 / 3)
        assert hist.frequency_at(1.0) == pytest.approx(1 / 3)
        assert hist.lefts[-1] == pytest.approx(1.0)

    def test_undefined_excluded(self):
        hist, excluded = weight_histogram([SocialWeight(0.5), SocialWeight.undefined()])
        assert excluded == 1 and hist.n == 1

    def test_all_undefined(self):
        with pytest.raises(EmptyInput):
            weight_histogram([SocialWeight.undefined()] * 3)

    def test_mixture_spikes(self):
        w = draw_weights(WeightMixture(), 10_000, np.random.default_rng(8))
        hist, _ = weight_histogram([SocialWeight(float(v)) for v in w])
        for spike in (0.0, 1.0):
            f = hist.frequency_at(spike)
            assert f > hist.frequency_at(spike - 0.1)
            assert f > hist.frequency_at(spike + 0.1)
