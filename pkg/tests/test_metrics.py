import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tactile_compliance.errors import ConstantTruths, LengthMismatch, NonPositiveValue
from tactile_compliance.metrics import log10_accuracy, mean_std, n_mse, r_squared
from tactile_compliance.physics import ModulusBounds

moduli = st.floats(1e3, 1e12)


def test_accuracy_examples():
    assert log10_accuracy([1e5, 3e7], [1e5, 3e7]) == 1.0
    assert log10_accuracy([1e7], [1e6]) == 1.0
    assert log10_accuracy([1e5], [1e6]) == 1.0
    assert log10_accuracy([1.1e7], [1e6]) == 0.0
    assert log10_accuracy([1e7, 1.1e7, 2e6, 1e3], [1e6] * 4) == 0.5


def test_nmse_examples():
    assert n_mse([1e4, 1e9], [1e4, 1e9]) == 0.0
    assert n_mse([1e12], [1e3]) == 1.0
    assert n_mse([1e5, 1e8], [1e6, 1e6]) == pytest.approx((1 / 81 + 4 / 81) / 2, rel=1e-12)
    assert n_mse([1e5, 1e8], [1e6, 1e6]) == pytest.approx(0.03086, abs=1e-5)


def test_r_squared_examples():
    assert r_squared([0, 0.5, 1], [0, 0.5, 1]) == 1.0
    assert r_squared([0.5, 0.5, 0.5], [0, 0.5, 1]) == 0.0
    assert r_squared([0.1, 0.5, 0.9], [0, 0.5, 1]) == pytest.approx(0.96, abs=1e-12)


def test_metric_errors():
    with pytest.raises(LengthMismatch):
        log10_accuracy([1e5], [1e5, 1e6])
    with pytest.raises(LengthMismatch):
        n_mse([], [])
    with pytest.raises(NonPositiveValue):
        log10_accuracy([0.0], [1e5])
    with pytest.raises(NonPositiveValue):
        n_mse([1e5], [-1.0])
    with pytest.raises(ConstantTruths):
        r_squared([0.1, 0.2], [0.5, 0.5])
    with pytest.raises(LengthMismatch):
        r_squared([0.1], [0.5])


def test_mean_std():
    assert mean_std([0.7]) == (0.7, 0.0)
    mean, std = mean_std([0.8, 0.9])
    assert mean == pytest.approx(0.85) and std == pytest.approx(0.0707, abs=1e-4)
    assert mean_std([0.8, None, float("nan"), 0.9])[0] == pytest.approx(0.85)
    assert all(math.isnan(v) for v in mean_std([]))


@settings(max_examples=200)
@given(st.lists(st.tuples(moduli, moduli), min_size=1, max_size=30))
def test_metric_ranges(pairs):
    p, t = zip(*pairs)
    assert 0.0 <= log10_accuracy(p, t) <= 1.0
    assert 0.0 <= n_mse(p, t) <= 1.0


@settings(max_examples=200)
@given(st.lists(st.tuples(moduli, moduli), min_size=1, max_size=30))
def test_accuracy_matches_brute_force(pairs):
    p, t = zip(*pairs)
    hits = sum(abs(math.log10(a) - math.log10(b)) <= 1.0 + 1e-12 for a, b in pairs)
    assert log10_accuracy(p, t) == hits / len(pairs)


@settings(max_examples=100)
@given(st.lists(moduli, min_size=1, max_size=20), st.floats(-2, 2))
def test_nmse_constant_log_offset(truths, offset):
    # a uniform log error inside the bounds gives (offset / span)^2
    bounds = ModulusBounds(0, 15)
    preds = [t * 10**offset for t in truths]
    assert n_mse(preds, truths, bounds) == pytest.approx((offset / 15) ** 2, abs=1e-12)


@settings(max_examples=100)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=20).filter(lambda v: np.ptp(v) > 1e-3))
def test_r_squared_perfect_and_bounded(truths):
    assert r_squared(truths, truths) == 1.0
    assert r_squared(list(reversed(truths)), truths) <= 1.0
