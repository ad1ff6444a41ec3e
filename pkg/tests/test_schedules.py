from __future__ import annotations

import numpy as np
import pytest

from riskgrad import StepSchedule


def test_default_exponents_satisfy_conditions():
    s = StepSchedule()
    # non-summable and square-summable, symbolically: 0.5 < e <= 1
    for e in (s.e1, s.e2, s.e3, s.e4):
        assert 0.5 < e <= 1.0
    # strict timescale separation
    assert s.e1 > s.e2 > s.e3 > s.e4
    # sum (zeta2/delta)^2 finite: 2 * (e2 - e_delta) > 1
    assert 2.0 * (s.e2 - s.e_delta) > 1.0
    assert s.e_delta > 0.0


def test_pointwise_ordering_from_k_ten():
    s = StepSchedule()
    for k in np.unique(np.geomspace(10, 1_000_000, 200).astype(int)):
        assert s.zeta1(k) < s.zeta2(k) < s.zeta3(k) < s.zeta4(k)


def test_perturbation_shrinks():
    s = StepSchedule()
    widths = [s.delta(k) for k in (1, 10, 100, 10_000)]
    assert all(a > b for a, b in zip(widths, widths[1:]))


def test_invalid_exponent_combinations_rejected():
    with pytest.raises(ValueError):
        StepSchedule(e2=0.4)  # not square-summable
    with pytest.raises(ValueError):
        StepSchedule(e1=0.7, e2=0.85)  # ordering broken
    with pytest.raises(ValueError):
        StepSchedule(e_delta=0.6)  # (zeta2/delta)^2 not summable
    with pytest.raises(ValueError):
        StepSchedule(c2=0.0)
