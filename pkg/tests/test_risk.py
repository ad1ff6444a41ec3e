from __future__ import annotations

import numpy as np
import pytest

from riskgrad import EmptyBatch, SampleBatch, cvar_alpha, h_alpha, var_alpha


def test_var_midpoint():
    assert var_alpha(SampleBatch([1, 2, 3, 4]), 0.5) == 2.0


def test_var_constant_batch():
    for alpha in (0.1, 0.5, 0.99):
        assert var_alpha(SampleBatch([3.0, 3.0, 3.0]), alpha) == 3.0


def test_var_weighted_boundary():
    batch = SampleBatch([0.0, 10.0], weights=[0.95, 0.05])
    assert var_alpha(batch, 0.95) == 0.0


def test_cvar_constant():
    assert cvar_alpha(SampleBatch([2.5]), 0.3) == 2.5


def test_cvar_single_tail_sample():
    assert cvar_alpha(SampleBatch([1, 2, 3, 4]), 0.75) == pytest.approx(4.0)


def test_cvar_half_tail():
    assert cvar_alpha(SampleBatch([1, 2, 3, 4]), 0.5) == pytest.approx(3.5)


def test_h_alpha_hand_value():
    batch = SampleBatch([0, 1, 2, 3])
    assert h_alpha(batch, 1.0, 0.5) == pytest.approx(2.5)


def test_h_alpha_above_max_equals_nu():
    batch = SampleBatch([1.0, 4.0, 2.0])
    assert h_alpha(batch, 7.0, 0.5) == 7.0


def test_h_alpha_single_value():
    assert h_alpha(SampleBatch([5.0]), 0.0, 0.9) == pytest.approx(50.0)


def test_empty_batch_raises():
    with pytest.raises(EmptyBatch):
        SampleBatch([])


def test_alpha_range_validation():
    batch = SampleBatch([1.0, 2.0])
    for bad in (0.0, 1.0, -0.1, 1.5, 1.0 - 1e-16):
        with pytest.raises(ValueError):
            cvar_alpha(batch, bad)
        with pytest.raises(ValueError):
            var_alpha(batch, bad)
        with pytest.raises(ValueError):
            h_alpha(batch, 0.0, bad)


def test_weights_validation():
    with pytest.raises(ValueError):
        SampleBatch([1.0, 2.0], weights=[0.7, 0.4])
    with pytest.raises(ValueError):
        SampleBatch([1.0, 2.0], weights=[1.1, -0.1])


def _random_batches(n, rng):
    for _ in range(n):
        size = rng.integers(1, 12)
        values = np.round(rng.normal(size=size) * 3, 2)  # rounding forces ties
        if rng.random() < 0.5:
            yield SampleBatch(values)
        else:
            w = rng.random(size) + 0.05
            yield SampleBatch(values, weights=w / w.sum())


def test_rockafellar_uryasev_consistency(rng):
    """cvar == min over sample-point nu of h, minimized at var."""
    alphas = [0.05, 0.25, 0.5, 0.75, 0.9, 0.95]
    for batch in _random_batches(300, rng):
        w = batch.effective_weights()
        for alpha in alphas:
            cvar = cvar_alpha(batch, alpha)
            hs = np.array([h_alpha(batch, nu, alpha) for nu in batch.values])
            assert abs(cvar - hs.min()) <= 1e-9
            var = var_alpha(batch, alpha)
            assert abs(h_alpha(batch, var, alpha) - cvar) <= 1e-9
            # no sample point resolvably below the quantile level minimizes:
            # h descends strictly while the cdf sits below alpha
            for z, hz in zip(batch.values, hs):
                cdf = float(np.sum(w[batch.values <= z]))
                if z < var and cdf < alpha - 1e-6:
                    assert hz > cvar + 1e-12


def test_cvar_dominates_var_and_mean(rng):
    for batch in _random_batches(200, rng):
        w = batch.effective_weights()
        mean = float(np.dot(w, batch.values))
        for alpha in (0.1, 0.5, 0.9):
            cvar = cvar_alpha(batch, alpha)
            assert cvar >= var_alpha(batch, alpha) - 1e-12
            assert cvar >= mean - 1e-12


def test_translation_and_positive_homogeneity(rng):
    for batch in _random_batches(100, rng):
        for alpha in (0.2, 0.5, 0.8):
            base = cvar_alpha(batch, alpha)
            shifted = SampleBatch(batch.values + 1.7, weights=batch.weights)
            assert cvar_alpha(shifted, alpha) == pytest.approx(base + 1.7, abs=1e-10)
            scaled = SampleBatch(batch.values * 2.5, weights=batch.weights)
            assert cvar_alpha(scaled, alpha) == pytest.approx(2.5 * base, abs=1e-10)
            zeroed = SampleBatch(batch.values * 0.0, weights=batch.weights)
            assert cvar_alpha(zeroed, alpha) == pytest.approx(0.0, abs=1e-12)
