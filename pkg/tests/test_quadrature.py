import math

import numpy as np
import pytest

from lcmatch.errors import QuadratureError
from lcmatch.quadrature import adaptive_simpson, adaptive_simpson_batch


def test_polynomial_exact():
    # Simpson is exact for cubics
    assert adaptive_simpson(lambda x: 3 * x ** 3 - x + 2, 0.0, 2.0) == pytest.approx(14.0, rel=1e-14)


def test_smooth_functions():
    assert adaptive_simpson(math.sin, 0.0, math.pi) == pytest.approx(2.0, rel=1e-9)
    assert adaptive_simpson(math.exp, -1.0, 1.0) == pytest.approx(math.e - 1 / math.e, rel=1e-9)


def test_lorentzian():
    gamma = 0.05
    val = adaptive_simpson(lambda x: gamma / (x * x + gamma * gamma), -1.0, 1.0)
    assert val == pytest.approx(2 * math.atan(1 / gamma), rel=1e-9)


def test_sharp_lorentzian():
    # error control is local, so a peak 1000x narrower than the interval
    # accumulates a little above rtol
    gamma = 1e-3
    val = adaptive_simpson(lambda x: gamma / (x * x + gamma * gamma), -1.0, 1.0)
    assert val == pytest.approx(2 * math.atan(1 / gamma), rel=2e-8)


def test_batch_matches_scalar_bitwise():
    widths = np.array([0.5, 0.01, 0.2, 1e-3])

    def batched(x, idx):
        w = widths[idx]
        return w / (x * x + w * w)

    together = adaptive_simpson_batch(batched, -1.0, 1.0, widths.size)
    for i, w in enumerate(widths):
        alone = adaptive_simpson(lambda x, w=w: w / (x * x + w * w), -1.0, 1.0)
        assert together[i] == alone
    # reordering the batch does not change any element
    perm = np.array([2, 0, 3, 1])
    shuffled = adaptive_simpson_batch(lambda x, idx: batched(x, perm[idx]), -1.0, 1.0, 4)
    assert np.array_equal(shuffled, together[perm])


def test_non_convergence_raises_with_achieved():
    with pytest.raises(QuadratureError) as info:
        adaptive_simpson(lambda x: math.sin(1 / x) if x else 0.0, 1e-6, 1.0, rtol=1e-12, max_depth=6)
    assert info.value.achieved > 1e-12
    assert "achieved" in str(info.value)
