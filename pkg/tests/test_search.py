import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrogate_rates.search import bracketed_minimize, golden_section


def test_golden_section_quadratic():
    z = golden_section(lambda t: (t - 0.3) ** 2, -2.0, 5.0, tol=1e-10)
    assert z == pytest.approx(0.3, abs=1e-9)


def test_golden_section_reversed_bracket():
    assert golden_section(lambda t: (t + 1) ** 2, 3.0, -4.0) == pytest.approx(-1.0, abs=1e-9)


def test_golden_section_tiny_bracket_returns_midpoint():
    assert golden_section(lambda t: t, 1.0, 1.0 + 1e-12) == pytest.approx(1.0 + 5e-13)


def test_flat_region_resolves_left():
    # min(|t|, ...) with a flat floor on [-1, 1]: the leftmost grid minimum wins
    f = lambda t: np.maximum(np.abs(t) - 1.0, 0.0)
    z, fz = bracketed_minimize(f, -4.0, 4.0)
    assert fz == 0.0
    assert -1.0 <= z <= -0.8


def test_edge_minimum_is_exact():
    z, fz = bracketed_minimize(lambda t: np.exp(-t), -1.0, 2.0)
    assert z == 2.0 and fz == math.exp(-2.0)


def test_empty_window():
    with pytest.raises(ValueError):
        bracketed_minimize(lambda t: t, 1.0, 1.0)


def test_returns_python_floats():
    z, fz = bracketed_minimize(lambda t: (t - 0.1) ** 2, -1.0, 1.0)
    assert type(z) is float and type(fz) is float


@settings(max_examples=60, deadline=None)
@given(st.floats(-10, 10), st.floats(0.1, 10))
def test_convex_quadratics(center, curvature):
    z, fz = bracketed_minimize(lambda t: curvature * (t - center) ** 2, -16.0, 16.0)
    assert abs(z - center) < 1e-6
    assert fz <= 1e-10
