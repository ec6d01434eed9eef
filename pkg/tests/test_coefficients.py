import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from stereounif.coefficients import (
    KernelSpec,
    alpha,
    build_table,
    expected_h0,
    gegenbauer_coef,
    gegenbauer_coef_oracle,
    harmonic_dim,
    orthogonality_constant,
    series_variance,
    tail_variance,
    write_table_csv,
)

A_GRID = [-1.0, -0.5, 0.0, 0.5, 1.0]


@pytest.mark.parametrize("k, q, expected", [
    (0, 2, math.pi / 2),
    (0, 3, 2 / math.pi),
    (1, 3, 2 / (9 * math.pi)),
])
def test_alpha_values(k, q, expected):
    assert alpha(k, q) == pytest.approx(expected, rel=1e-13)


def test_alpha_large_k_no_overflow():
    val = alpha(10_000, 5)
    assert np.isfinite(val) and val > 0


@pytest.mark.parametrize("k, q, a, expected", [
    (0, 3, 1.0, 8 / math.pi),
    (1, 3, 0.0, 8 / (3 * math.pi)),
    (1, 2, 1.0, 0.0),
    (1, 5, 1.0, 0.0),
])
def test_gegenbauer_coef_values(k, q, a, expected):
    assert gegenbauer_coef(k, KernelSpec(a, q)) == pytest.approx(expected, rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("q", [2, 3, 4, 5])
@pytest.mark.parametrize("a", A_GRID)
def test_closed_form_matches_quadrature(q, a):
    spec = KernelSpec(a, q)
    for k in range(21):
        assert abs(gegenbauer_coef(k, spec) - gegenbauer_coef_oracle(k, spec)) <= 1e-7


def test_oracle_examples():
    assert gegenbauer_coef_oracle(0, KernelSpec(0.0, 2)) == pytest.approx(math.pi / 2, abs=1e-7)
    assert abs(gegenbauer_coef_oracle(1, KernelSpec(1.0, 3))) <= 1e-7


@pytest.mark.parametrize("q, a, expected", [(2, 0.0, math.pi / 2), (3, 1.0, 8 / math.pi), (3, -1.0, 0.0)])
def test_expected_h0_values(q, a, expected):
    assert expected_h0(KernelSpec(a, q)) == pytest.approx(expected, rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("q", [2, 3, 4, 7])
@pytest.mark.parametrize("a", A_GRID)
def test_expected_h0_is_b0(q, a):
    spec = KernelSpec(a, q)
    assert expected_h0(spec) == gegenbauer_coef(0, spec)
    # the textbook closed form (1 + a)(q - 1) Gamma((q-1)/2)^2 / (2 Gamma(q/2)^2)
    direct = (1 + a) * (q - 1) * math.gamma((q - 1) / 2) ** 2 / (2 * math.gamma(q / 2) ** 2)
    assert expected_h0(spec) == pytest.approx(direct, rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("k, q, expected", [(1, 2, 3), (2, 2, 5), (0, 2, 1), (0, 6, 1), (1, 3, 4)])
def test_harmonic_dim_values(k, q, expected):
    assert harmonic_dim(k, q) == expected


@pytest.mark.parametrize("q", [2, 3, 4, 5, 8])
def test_harmonic_dim_formula(q):
    for k in range(1, 80):
        expected = (2 * k + q - 1) * math.factorial(k + q - 2) // (math.factorial(k) * math.factorial(q - 1))
        assert harmonic_dim(k, q) == expected


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec(1.5, 3)
    with pytest.raises(ValueError):
        KernelSpec(0.0, 1)
    with pytest.raises(ValueError):
        KernelSpec(0.0, 3, K=0)


class TestTable:
    def test_w1_example(self):
        t = build_table(KernelSpec(0.0, 3), 6)
        assert t.w[1] == pytest.approx(4 / (3 * math.pi), rel=1e-13)

    def test_even_terms_vanish_at_minus_one(self):
        t = build_table(KernelSpec(-1.0, 3), 40)
        assert np.all(t.b[0::2] == 0)
        assert np.all(t.b[1::2] > 0)

    @pytest.mark.parametrize("q", [2, 3, 5])
    @pytest.mark.parametrize("a", A_GRID)
    def test_invariants(self, q, a):
        t = build_table(KernelSpec(a, q), 200)
        k = np.arange(201)
        assert t.e_h0 == t.b[0]
        assert np.all(t.b >= 0)
        zero = ((k % 2 == 1) & (a == 1.0)) | ((k % 2 == 0) & (a == -1.0))
        assert np.all((t.b == 0) == zero)
        assert_allclose(t.w, t.b / (1 + 2 * k / (q - 1)), rtol=1e-15)
        assert t.d.dtype.kind == "i" and np.all(t.d >= 1)
        if abs(a) < 1:
            assert np.all(t.w[1:] > 0)
        for kk in (0, 1, 7, 30):
            assert t.c[kk] == pytest.approx(orthogonality_constant(kk, q), rel=1e-12)

    def test_read_only(self):
        t = build_table(KernelSpec(0.0, 3), 10)
        with pytest.raises(ValueError):
            t.b[1] = 0.0
        with pytest.raises(AttributeError):
            t.e_h0 = 1.0

    def test_csv_dump(self, tmp_path):
        t = build_table(KernelSpec(0.5, 4), 5)
        path = write_table_csv(t, tmp_path / "table.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "k,b,w,d,c"
        assert len(lines) == 7
        assert float(lines[3].split(",")[1]) == t.b[2]


class TestTailVariance:
    def test_decreasing_and_nonnegative(self):
        t = build_table(KernelSpec(0.0, 3), 500)
        vals = np.array([tail_variance(t, K) for K in range(0, 501, 10)])
        assert np.all(vals >= 0)
        assert np.all(np.diff(vals) < 0)

    @pytest.mark.parametrize("q, a", [(3, 0.0), (3, 0.5), (4, -1.0), (5, 1.0)])
    def test_bound_against_brute_force(self, q, a):
        # direct summation to k = 10^5 as oracle for the analytic remainder
        small = build_table(KernelSpec(a, q), 1000)
        big = build_table(KernelSpec(a, q), 100_000)
        brute = 2.0 * float(np.sum(big.w[1001:] ** 2 * big.d[1001:]))
        bound = tail_variance(small, 1000)
        assert bound >= brute
        assert bound <= 1.05 * brute

    def test_series_variance_q3(self):
        t = build_table(KernelSpec(0.0, 3), 1000)
        big = build_table(KernelSpec(0.0, 3), 100_000)
        brute = 2.0 * float(np.sum(big.w[1:] ** 2 * big.d[1:]))
        assert series_variance(t) == pytest.approx(brute, rel=1e-4)

    @pytest.mark.parametrize("a", A_GRID[:-1])
    def test_q2_diverges(self, a):
        t = build_table(KernelSpec(a, 2), 100)
        assert tail_variance(t, 10) == math.inf

    def test_truncated_is_exact(self):
        t = build_table(KernelSpec(0.0, 2, K=6), 100)
        expected = 2.0 * float(np.sum(t.w[3:7] ** 2 * t.d[3:7]))
        assert tail_variance(t, 2) == pytest.approx(expected, rel=1e-15)
        assert tail_variance(t, 6) == 0.0

    def test_out_of_range(self):
        t = build_table(KernelSpec(0.0, 3), 10)
        with pytest.raises(ValueError):
            tail_variance(t, 11)
