import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrogate_rates.errors import DomainError, PsiProfileError
from surrogate_rates.losses import (
    DEFAULT_ETA_GRID,
    SurrogateLoss,
    exponential,
    hinge,
    logistic,
    make_modified_hinge,
    scale_loss,
)
from surrogate_rates.psi import (
    CLOSED_FORM,
    NUMERIC,
    PsiProfile,
    build_psi_profile,
    c_star_function,
    conditional_risk,
    midpoint_convex,
    optimal_conditional_risk,
    psi,
)

BUILTINS = [hinge(), exponential(), logistic()] + [make_modified_hinge(d) for d in (0.5, 1.0, 2.0)]
GRID_101 = np.linspace(0.0, 0.99, 101)


def binary_entropy(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def brute_min(loss, eta, lo, hi, points=2_000_001):
    # dense grid oracle, independent of the bracketing search
    z = np.linspace(lo, hi, points)
    c = eta * loss(z) + (1 - eta) * loss(-z)
    k = int(np.argmin(c))
    return float(z[k]), float(c[k])


class TestConditionalRisk:
    def test_hinge(self):
        assert conditional_risk(hinge(), 0.75, 1.0) == 0.5

    def test_exponential_at_origin(self):
        assert conditional_risk(exponential(), 0.5, 0.0) == 1.0

    @pytest.mark.parametrize("eta", [-0.1, 1.1, math.nan])
    def test_eta_domain(self, eta):
        with pytest.raises(DomainError):
            conditional_risk(hinge(), eta, 0.0)

    def test_margin_domain(self):
        with pytest.raises(DomainError):
            conditional_risk(hinge(), 0.5, math.inf)

    def test_vectorized(self):
        out = conditional_risk(hinge(), 0.25, np.array([-1.0, 0.0, 1.0]))
        assert np.allclose(out, [0.5, 1.0, 1.5])

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from(BUILTINS), st.floats(-20, 20))
    def test_symmetric_at_half(self, loss, z):
        assert conditional_risk(loss, 0.5, z) == pytest.approx(conditional_risk(loss, 0.5, -z), rel=1e-15)


class TestOptimum:
    def test_hinge(self):
        point = optimal_conditional_risk(hinge(), 0.75)
        assert point.c_star == pytest.approx(0.5, abs=1e-10)
        assert point.z_star == pytest.approx(1.0, abs=1e-8)
        assert point.c_star_minus == pytest.approx(1.0, abs=1e-10)

    def test_hinge_constrained_matches_brute_force(self):
        _, c = brute_min(hinge(), 0.75, -16.0, 0.0)
        assert optimal_conditional_risk(hinge(), 0.75).c_star_minus == pytest.approx(c, abs=1e-9)

    def test_exponential(self):
        point = optimal_conditional_risk(exponential(), 0.75)
        assert point.c_star == pytest.approx(2 * math.sqrt(0.1875), abs=1e-12)
        assert point.c_star == pytest.approx(0.86603, abs=1e-5)
        assert point.z_star == pytest.approx(0.5 * math.log(3), abs=1e-8)
        assert point.z_star == pytest.approx(0.54931, abs=1e-5)

    def test_logistic_entropy(self):
        point = optimal_conditional_risk(logistic(), 0.8)
        assert point.c_star == pytest.approx(binary_entropy(0.8), abs=1e-12)
        assert point.z_star == pytest.approx(math.log(4), abs=1e-7)

    @pytest.mark.parametrize("loss", BUILTINS, ids=lambda l: l.name)
    @pytest.mark.parametrize("eta", [0.1, 0.3, 0.62, 0.9])
    def test_against_brute_force(self, loss, eta):
        z_b, c_b = brute_min(loss, eta, -16.0, 16.0)
        point = optimal_conditional_risk(loss, eta)
        assert point.c_star <= c_b + 1e-12
        assert point.c_star == pytest.approx(c_b, abs=1e-9)
        half = (-16.0, 0.0) if eta > 0.5 else (0.0, 16.0)
        assert point.c_star_minus == pytest.approx(brute_min(loss, eta, *half)[1], abs=1e-9)

    @pytest.mark.parametrize("loss", BUILTINS, ids=lambda l: l.name)
    def test_closed_form_minimizer(self, loss):
        eta = np.array([0.2, 0.4, 0.6, 0.85])
        cf = loss.closed_forms
        for e, z, c in zip(eta, cf.z_star(eta), cf.c_star(eta)):
            point = optimal_conditional_risk(loss, e)
            assert point.c_star == pytest.approx(c, abs=1e-12)
            assert point.z_star == pytest.approx(z, abs=1e-5)

    def test_half_has_no_gap(self):
        point = optimal_conditional_risk(logistic(), 0.5)
        assert point.calibration_gap == 0.0
        # a quadratic floor resolves z only to about sqrt(machine eps)
        assert point.z_star == pytest.approx(0.0, abs=1e-6)

    def test_window_must_straddle_zero(self):
        with pytest.raises(DomainError):
            optimal_conditional_risk(hinge(), 0.7, z_window=(0.5, 2.0))

    def test_convexity_flag_carried(self):
        assert not optimal_conditional_risk(hinge(), 0.7).convexity_verified
        assert optimal_conditional_risk(hinge(), 0.7, convexity_verified=True).convexity_verified

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from(BUILTINS), st.floats(0.0, 1.0).filter(lambda e: abs(e - 0.5) > 1e-3))
    def test_calibration_gap_positive(self, loss, eta):
        point = optimal_conditional_risk(loss, eta)
        assert point.c_star <= point.c_star_minus
        assert point.calibration_gap > 0

    @pytest.mark.parametrize("loss", BUILTINS, ids=lambda l: l.name)
    def test_calibration_gap_on_default_grid(self, loss):
        for eta in DEFAULT_ETA_GRID:
            assert optimal_conditional_risk(loss, eta).calibration_gap > 0


class TestPsi:
    def test_hinge(self):
        assert psi(hinge(), 0.5) == 0.5

    def test_exponential(self):
        assert psi(exponential(), 0.5) == pytest.approx(1 - math.sqrt(0.75), abs=1e-15)
        assert psi(exponential(), 0.5) == pytest.approx(0.13397, abs=1e-5)

    def test_logistic(self):
        # oracle: the expanded two-term form
        t = 0.5
        expected = 1 - (1 + t) / 2 * math.log2(2 / (1 + t)) - (1 - t) / 2 * math.log2(2 / (1 - t))
        assert psi(logistic(), t) == pytest.approx(expected, abs=1e-14)
        assert psi(logistic(), t) == pytest.approx(0.18872, abs=1e-5)
        assert psi(logistic(), t, method="numeric") == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("loss", BUILTINS, ids=lambda l: l.name)
    @pytest.mark.parametrize("method", ["closed_form", "numeric"])
    def test_zero_at_origin(self, loss, method):
        assert abs(psi(loss, 0.0, method=method)) <= 1e-12

    @pytest.mark.parametrize("loss", BUILTINS, ids=lambda l: l.name)
    def test_numeric_matches_closed_form(self, loss):
        numeric = psi(loss, GRID_101, method="numeric")
        closed = psi(loss, GRID_101, method="closed_form")
        assert np.max(np.abs(numeric - closed)) <= 1e-7

    def test_scaled_loss_is_numeric(self):
        loss = scale_loss(exponential(), 2.0, 3.0)
        # k2 * phi(k1 z) has psi scaled by k2
        assert psi(loss, 0.4) == pytest.approx(3 * (1 - math.sqrt(1 - 0.16)), abs=1e-9)
        with pytest.raises(DomainError):
            psi(loss, 0.4, method="closed_form")

    @pytest.mark.parametrize("theta", [-0.01, 1.01, math.nan])
    def test_theta_domain(self, theta):
        with pytest.raises(DomainError):
            psi(hinge(), theta)

    def test_unknown_method(self):
        with pytest.raises(DomainError):
            psi(hinge(), 0.1, method="magic")

    def test_array_shape_preserved(self):
        out = psi(hinge(), np.array([[0.1, 0.2], [0.3, 0.4]]), method="numeric")
        assert out.shape == (2, 2)

    def test_large_negative_is_an_error(self):
        # a loss whose registered C* is wrong produces psi < 0
        from surrogate_rates.losses import ClosedForms

        bogus = SurrogateLoss(
            "bogus",
            lambda z: np.maximum(0.0, 1.0 - z),
            closed_forms=ClosedForms(lambda e: e, lambda e: e, lambda t: -np.asarray(t)),
        )
        with pytest.raises(PsiProfileError, match="negative"):
            psi(bogus, 0.5)
        assert psi(bogus, 1e-13) == 0.0


class TestProfile:
    def test_hinge_values(self):
        profile = build_psi_profile(hinge(), [0, 0.25, 0.5, 0.75, 1])
        assert profile.psi_values == (0, 0.25, 0.5, 0.75, 1)
        assert profile.source == CLOSED_FORM
        assert profile.z_window is None

    def test_exponential_endpoints(self):
        assert build_psi_profile(exponential(), [0, 1]).psi_values == (0.0, 1.0)

    def test_numeric_hinge_matches(self):
        grid = np.linspace(0, 1, 41)
        numeric = build_psi_profile(hinge(), grid, method="numeric")
        closed = build_psi_profile(hinge(), grid)
        assert numeric.source == NUMERIC
        assert numeric.z_window == (-16.0, 16.0)
        assert np.max(np.abs(numeric.values - closed.values)) <= 1e-8

    @pytest.mark.parametrize("loss", BUILTINS, ids=lambda l: l.name)
    def test_convex(self, loss):
        assert midpoint_convex(build_psi_profile(loss, np.linspace(0, 0.99, 100)))
        assert midpoint_convex(build_psi_profile(loss, np.linspace(0, 0.99, 100), method="numeric"))

    def test_midpoint_convex_detects_concave(self):
        grid = np.linspace(0, 1, 11)
        profile = PsiProfile("sqrt", tuple(grid), tuple(np.sqrt(grid)), CLOSED_FORM)
        assert not midpoint_convex(profile)

    def test_midpoint_convex_needs_uniform_grid(self):
        profile = build_psi_profile(hinge(), [0.0, 0.1, 0.5])
        with pytest.raises(DomainError):
            midpoint_convex(profile)

    def test_decreasing_profile_names_point(self):
        with pytest.raises(PsiProfileError, match="theta=0.2"):
            PsiProfile("x", (0.0, 0.1, 0.2), (0.0, 0.5, 0.4), NUMERIC)

    def test_nonzero_origin(self):
        with pytest.raises(PsiProfileError, match="psi\\(0\\)"):
            PsiProfile("x", (0.0, 0.1), (1e-6, 0.5), NUMERIC)

    def test_negative_value(self):
        with pytest.raises(PsiProfileError, match="negative"):
            PsiProfile("x", (0.1, 0.2), (-1e-6, 0.5), NUMERIC)

    @pytest.mark.parametrize("grid", [[0.2, 0.1], [0.1, 0.1], [], [0.5, 1.5]])
    def test_bad_grid(self, grid):
        with pytest.raises(DomainError):
            build_psi_profile(hinge(), grid)

    def test_csv(self):
        text = build_psi_profile(hinge(), [0.0, 0.5]).to_csv()
        assert text == "theta,psi,source\n0.0,0.0,closed_form\n0.5,0.5,closed_form\n"

    def test_json_round_trip(self):
        profile = build_psi_profile(make_modified_hinge(2.0), np.linspace(0, 0.9, 7), method="numeric")
        data = json.loads(profile.to_json())
        assert data["loss_params"] == {"delta": 2.0}
        assert data["z_window"] == [-16.0, 16.0]
        again = PsiProfile.from_dict(data)
        assert again == profile
        assert again.to_json() == profile.to_json()


class TestCStarFunction:
    def test_closed_form_passthrough(self):
        loss = exponential()
        f = c_star_function(loss)
        assert f is loss.closed_forms.c_star
        assert f(np.array([0.5]))[0] == pytest.approx(1.0)

    def test_interpolated_scaled_loss(self):
        loss = scale_loss(logistic(), 1.5, 2.0)
        f = c_star_function(loss)
        eta = np.array([0.0, 0.07, 0.3, 0.5, 0.81, 0.999])
        expected = [2.0 * binary_entropy(e) if 0 < e < 1 else 0.0 for e in eta]
        assert np.allclose(f(eta), expected, atol=2e-6)
