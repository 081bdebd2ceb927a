import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats as sps

from metaeval.effects import (
    cohens_d_paired,
    compute_effect,
    correlation_variance,
    effect_corr,
    effect_md,
    effect_smd,
    fisher_backtransform,
    fisher_z,
    hedges_j,
    paired_stats,
)
from metaeval.errors import DegenerateSamplesError, DomainError, InsufficientPairsError
from metaeval.metrics import PairedSamples


def samples(t, c):
    t, c = list(t), list(c)
    return PairedSamples(tuple(f"i{i}" for i in range(len(t))), t, c)


T = [0.9, 0.6, 0.3]
C = [0.8, 0.4, 0.3]


class TestPairedStats:
    def test_example_against_scipy(self):
        s = paired_stats(samples(T, C))
        assert s.n == 3
        assert s.mean_diff == pytest.approx(0.1, abs=1e-12)
        assert s.s_diff == pytest.approx(0.1, abs=1e-12)
        assert s.r_pair == pytest.approx(0.9449, abs=1e-4)
        assert s.r_pair == pytest.approx(sps.pearsonr(T, C)[0], abs=1e-12)
        assert s.s_diff == pytest.approx(np.std(np.subtract(T, C), ddof=1), abs=1e-15)

    def test_identical(self):
        s = paired_stats(samples([1, 2, 3], [1, 2, 3]))
        assert s.mean_diff == 0 and s.s_diff == 0
        assert s.r_pair == pytest.approx(1.0)

    def test_constant_vector_leaves_r_undefined(self):
        s = paired_stats(samples([1, 1, 1], [0, 1, 2]))
        assert s.r_pair is None and not s.correlation_defined

    def test_constant_shift(self):
        s = paired_stats(samples([1, 2], [0, 1]))
        assert (s.mean_diff, s.s_diff, s.r_pair) == (1.0, 0.0, 1.0)


class TestMD:
    def test_example(self):
        e = effect_md(paired_stats(samples(T, C)))
        assert e.family == "MD"
        assert e.value == pytest.approx(0.1)
        assert e.variance == pytest.approx(0.01 / 3, abs=1e-7)

    def test_zero(self):
        e = effect_md(paired_stats(samples([1, 2, 3], [1, 2, 3])))
        assert (e.value, e.variance) == (0.0, 0.0)

    def test_swap_negates(self):
        a = effect_md(paired_stats(samples(T, C)))
        b = effect_md(paired_stats(samples(C, T)))
        assert a.value == -b.value and a.variance == b.variance


class TestSMD:
    def test_example_step_by_step(self):
        # spreadsheet-style recomputation, one quantity per line
        r = sps.pearsonr(T, C)[0]
        s_within = 0.1 / math.sqrt(2 * (1 - r))
        d = 0.1 / s_within
        v_d = (1 / 3 + d**2 / 6) * 2 * (1 - r)
        j = 1 - 3 / (4 * 2 - 1)
        assert j == pytest.approx(0.571429, abs=1e-6)
        # exact r = 0.944911; the rounded r = 0.9449 gives d = 0.33197, V_d = 0.038757
        assert d == pytest.approx(0.331930, abs=1e-6)
        assert v_d == pytest.approx(0.038749, abs=1e-6)
        assert d == pytest.approx(0.33197, abs=1e-4)
        assert v_d == pytest.approx(0.038757, abs=1e-4)

        stats = paired_stats(samples(T, C))
        d_impl, v_d_impl = cohens_d_paired(stats)
        assert d_impl == pytest.approx(d, rel=1e-12)
        assert v_d_impl == pytest.approx(v_d, rel=1e-12)
        e = effect_smd(stats)
        assert e.family == "SMD"
        assert e.value == pytest.approx(0.189674, abs=1e-6)
        assert e.variance == pytest.approx(0.012653, abs=1e-6)
        assert e.value == pytest.approx(0.18970, abs=1e-4)
        assert e.variance == pytest.approx(0.012656, abs=1e-5)
        assert e.value == pytest.approx(j * d, rel=1e-12)

    def test_zero_effect(self):
        e = effect_smd(paired_stats(samples([1, 3, 2, 5], [2, 2, 3, 4])))
        assert e.value == 0.0

    @pytest.mark.parametrize(
        "t, c",
        [([1, 2, 3], [1, 2, 3]), ([1, 2, 4], [0, 1, 3]), ([1, 1, 1], [0, 2, 1]), ([1, 2, 3], [0, 2, 4])],
    )
    def test_degenerate(self, t, c):
        with pytest.raises(DegenerateSamplesError):
            effect_smd(paired_stats(samples(t, c)))

    def test_hedges_j(self):
        assert hedges_j(2) == pytest.approx(1 - 3 / 7)
        assert hedges_j(1) == 0.0  # n = 2 pairs: the correction zeroes g
        assert all(0 < hedges_j(df) < 1 for df in range(2, 500))


class TestCorr:
    def test_zero(self):
        e = effect_corr(0.0, 10)
        assert (e.value, e.variance, e.display_value) == (0.0, pytest.approx(1 / 7), 0.0)

    def test_half(self):
        e = effect_corr(0.5, 12)
        assert e.value == pytest.approx(0.5 * math.log(1.5 / 0.5), abs=1e-15)
        assert e.value == pytest.approx(0.549306, abs=1e-6)
        assert e.variance == pytest.approx(0.111111, abs=1e-6)
        assert e.display_value == 0.5

    @pytest.mark.parametrize("r", [1.0, -1.0, 1.5])
    def test_out_of_domain(self, r):
        with pytest.raises(DomainError):
            effect_corr(r, 20)

    @pytest.mark.parametrize("n", [0, 2, 3])
    def test_too_few(self, n):
        with pytest.raises(InsufficientPairsError):
            effect_corr(0.3, n)

    def test_backtransform(self):
        assert fisher_backtransform(0.0) == 0.0
        assert fisher_backtransform(0.549306) == pytest.approx(0.5, abs=1e-6)
        z = 0.3
        assert fisher_backtransform(z) == pytest.approx((math.exp(2 * z) - 1) / (math.exp(2 * z) + 1), abs=1e-15)

    @pytest.mark.parametrize("r", [-0.99, -0.5, 0.0, 0.5, 0.99])
    def test_round_trip(self, r):
        assert abs(fisher_backtransform(fisher_z(r)) - r) <= 1e-12

    def test_reported_variance(self):
        assert correlation_variance(0.5, 11) == pytest.approx(0.5625 / 10)

    def test_from_paired_vectors(self):
        t, c = T + [0.5], C + [0.6]
        e = compute_effect("CORR", samples(t, c))
        assert e.display_value == pytest.approx(sps.pearsonr(t, c)[0], abs=1e-12)
        assert (e.n, e.variance) == (4, 1.0)


def test_corr_from_pairs_needs_four():
    with pytest.raises(InsufficientPairsError):
        compute_effect("CORR", samples(T, C))


# --- properties -----------------------------------------------------------

vec = st.integers(2, 60).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(-100, 100, allow_subnormal=False)),
        arrays(np.float64, n, elements=st.floats(-100, 100, allow_subnormal=False)),
    )
)
# Well-conditioned values: shifting them cannot wipe out their spread.
grid_vec = st.integers(2, 60).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.integers(-400, 400).map(lambda x: x / 8)),
        arrays(np.float64, n, elements=st.integers(-400, 400).map(lambda x: x / 8)),
    )
)


@given(vec)
def test_md_antisymmetry(tc):
    t, c = tc
    a = effect_md(paired_stats(samples(t, c)))
    b = effect_md(paired_stats(samples(c, t)))
    assert a.value == -b.value
    assert a.variance == b.variance


@given(grid_vec, st.floats(0.01, 100), st.floats(-50, 50))
def test_smd_scale_and_shift_invariance(tc, scale, shift):
    t, c = tc
    try:
        base = effect_smd(paired_stats(samples(t, c)))
    except DegenerateSamplesError:
        assume(False)
    s = paired_stats(samples(t, c))
    assume(1 - s.r_pair > 1e-6)
    scaled = effect_smd(paired_stats(samples(t * scale + shift, c * scale + shift)))
    assert scaled.value == pytest.approx(base.value, rel=1e-8, abs=1e-8)
    assert scaled.variance == pytest.approx(base.variance, rel=1e-8, abs=1e-8)


@given(vec)
def test_g_shrinks_d_and_variances_non_negative(tc):
    t, c = tc
    stats = paired_stats(samples(t, c))
    assert effect_md(stats).variance >= 0
    try:
        d, v_d = cohens_d_paired(stats)
    except DegenerateSamplesError:
        return
    g = effect_smd(stats)
    assert abs(g.value) <= abs(d)
    assert v_d >= 0 and g.variance >= 0


@given(st.floats(-0.999, 0.999), st.floats(-0.999, 0.999))
def test_fisher_monotone(r1, r2):
    assume(r1 < r2)
    assert fisher_z(r1) < fisher_z(r2)
