"""Regularity weights: exponent identities, homogeneity, admissibility probe."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evlab import spectral, weights
from evlab.errors import UsageError
from evlab.spectral import GridSpec


class TestConstruction:
    def test_serrin_exponent_identity(self):
        # d=3, r=6 forces s=4 via 2/s + 3/6 = 1
        assert weights.serrin_exponent(6.0, 3) == pytest.approx(4.0)
        # d=2, r=4 forces s=4
        assert weights.serrin_exponent(4.0, 2) == pytest.approx(4.0)
        w = weights.serrin(6.0, 4.0, c=1.0, dim=3)
        assert w.homogeneity_rank == 4.0

    def test_serrin_rejects_violated_identity(self):
        with pytest.raises(UsageError):
            weights.serrin(6.0, 3.9, c=1.0, dim=3)

    def test_serrin_rejects_r_below_d(self):
        with pytest.raises(UsageError):
            weights.serrin(2.0, 4.0, c=1.0, dim=3)

    def test_lipschitz_is_rank_one(self):
        w = weights.lipschitz()
        assert w.rank_one_homogeneous and w.homogeneity_rank == 1.0
        assert not weights.serrin(4.0, 4.0, 1.0, dim=2).rank_one_homogeneous

    def test_serrin_regime_guard(self):
        w = weights.serrin(4.0, 4.0, 1.0, dim=2)
        with pytest.raises(UsageError):
            w.check_regime(0.0)
        w.check_regime(0.1)
        weights.lipschitz().check_regime(0.0)


class TestEvaluation:
    def test_zero_field_maps_to_zero(self, grid16):
        z = spectral.zero_field(grid16)
        for w in (weights.serrin(4.0, 4.0, 2.0, dim=2), weights.lipschitz(),
                  weights.zero_weight()):
            assert w.evaluate(z) == 0.0

    def test_serrin_constant_field(self, grid16):
        # K = c (a (2pi)^{d/r})^s for a constant field of magnitude a
        a, c, r, s = 0.8, 1.7, 4.0, 4.0
        f = spectral.constant_field(grid16, [a, 0.0])
        w = weights.serrin(r, s, c, dim=2)
        assert w.evaluate(f) == pytest.approx(c * (a * (2 * np.pi) ** (2 / r)) ** s,
                                              rel=1e-12)

    def test_lipschitz_single_mode(self, grid32):
        f = spectral.single_mode_field(grid32, [0, 2])
        assert weights.lipschitz().evaluate(f) == pytest.approx(2 * 2.0, rel=1e-12)

    @given(alpha=st.floats(0.1, 10.0), seed=st.integers(0, 100))
    @settings(max_examples=10, deadline=None)
    def test_homogeneity(self, alpha, seed):
        grid = GridSpec(dim=2, n=16)
        f = spectral.random_solenoidal_field(grid, 4, seed)
        lip = weights.lipschitz()
        assert lip.evaluate(alpha * f) == pytest.approx(alpha * lip.evaluate(f), rel=1e-10)
        ser = weights.serrin(4.0, 4.0, 1.3, dim=2)
        assert ser.evaluate(alpha * f) == pytest.approx(
            alpha**4 * ser.evaluate(f), rel=1e-9
        )


class TestAdmissibilityProbe:
    def test_zero_weight_inviscid_finds_negative_w(self, grid16):
        report = weights.admissibility_probe(
            weights.zero_weight(), nu=0.0, grid=grid16, sample_count=50, rng_seed=1
        )
        assert report.min_w < 0.0
        assert report.negative_samples > 0

    def test_large_c_makes_all_samples_nonnegative(self, grid16):
        report = weights.admissibility_probe(
            weights.serrin(4.0, 4.0, c=1e6, dim=2), nu=0.1, grid=grid16,
            sample_count=50, rng_seed=1,
        )
        assert report.min_w >= 0.0
        assert report.negative_samples == 0

    def test_deterministic_given_seed(self, grid16):
        kw = dict(nu=0.1, grid=grid16, sample_count=30, rng_seed=7)
        a = weights.admissibility_probe(weights.lipschitz(), **kw)
        b = weights.admissibility_probe(weights.lipschitz(), **kw)
        assert a == b

    def test_lipschitz_inviscid_admissible_by_construction(self, grid16):
        # |w^T (grad vt)_sym w| <= sigma_max(grad vt) |w|^2 pointwise, so the
        # factor-2 weight dominates the quadratic form sample by sample
        report = weights.admissibility_probe(
            weights.lipschitz(), nu=0.0, grid=grid16, sample_count=100, rng_seed=3
        )
        assert report.min_w >= -1e-10

    def test_calibration_makes_probe_pass(self, grid16):
        w = weights.calibrate_serrin(grid16, nu=0.05, sample_count=80, rng_seed=5)
        assert w.calibration is not None and w.c > 0
        report = weights.admissibility_probe(
            w, nu=0.05, grid=grid16, sample_count=80, rng_seed=5
        )
        assert report.min_w >= -1e-10 * max(1.0, abs(report.min_w))
        # the safety factor means half the constant was the sampled minimum
        assert w.c == pytest.approx(2.0 * max(w.calibration["c_min_sampled"], 1e-6))

    def test_probe_d3_serrin(self, grid16_3d):
        w = weights.calibrate_serrin(grid16_3d, nu=0.1, r=6.0, sample_count=40,
                                     rng_seed=11)
        assert w.s == pytest.approx(4.0)
        report = weights.admissibility_probe(w, nu=0.1, grid=grid16_3d,
                                             sample_count=40, rng_seed=11)
        assert report.min_w >= -1e-10 * max(1.0, abs(report.min_w))
