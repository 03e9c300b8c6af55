import math

import numpy as np
import pytest

from qgles.field import Field, Grid, GridMismatchError, l2_norm, zeros
from qgles.filters import FilterSpec, gaussian_filter, perturb_field, restrict
from qgles.operators import laplacian, sine_mode

from conftest import random_dirichlet, smooth_field


class TestFilterSpec:
    def test_negative_width_rejected(self):
        with pytest.raises(ValueError):
            FilterSpec(-0.1)

    def test_zero_width_allowed(self):
        assert FilterSpec(0.0).delta == 0.0


class TestGaussianFilter:
    def test_identity_at_zero_width(self, grid65):
        f = random_dirichlet(grid65, 1)
        out = gaussian_filter(f, FilterSpec(0.0))
        assert l2_norm(Field(grid65, out.values - f.values)) <= 1e-13 * l2_norm(f)

    def test_single_mode_transfer(self, grid129):
        # mode (1,1) on the unit square: attenuation exp(-delta^2 * 2 pi^2 / 4)
        delta = 0.1
        expected = math.exp(-(delta**2) * 2.0 * math.pi**2 / 4.0)
        f = sine_mode(grid129, 1, 1)
        out = gaussian_filter(f, delta)
        ratio = out.values[64, 32] / f.values[64, 32]
        assert ratio == pytest.approx(expected, abs=1e-6)

    def test_double_filtering_differs(self, grid65):
        f = smooth_field(grid65, 2)
        once = gaussian_filter(f, 0.1)
        twice = gaussian_filter(once, 0.1)
        assert l2_norm(Field(grid65, twice.values - once.values)) > 0.0

    def test_linear(self, grid65):
        f = random_dirichlet(grid65, 3)
        g = random_dirichlet(grid65, 4)
        combo = gaussian_filter(Field(grid65, 2.0 * f.values - 0.5 * g.values), 0.07)
        parts = 2.0 * gaussian_filter(f, 0.07).values - 0.5 * gaussian_filter(g, 0.07).values
        assert np.max(np.abs(combo.values - parts)) <= 1e-12 * max(1.0, np.max(np.abs(parts)))

    def test_contracts_norm(self, grid65):
        f = random_dirichlet(grid65, 5)
        assert l2_norm(gaussian_filter(f, 0.2)) <= l2_norm(f)

    def test_convergence_order_two(self, grid65):
        # error after filtering a smooth field is O(delta^2): halving delta
        # divides the error by about four
        f = smooth_field(grid65, 6, kmax=3)
        deltas = [0.08, 0.04, 0.02]
        errors = [l2_norm(Field(grid65, gaussian_filter(f, d).values - f.values)) for d in deltas]
        for e_coarse, e_fine in zip(errors, errors[1:]):
            assert 3.5 <= e_coarse / e_fine <= 4.5

    def test_commutes_with_laplacian(self, grid65):
        f = smooth_field(grid65, 7)
        lap = laplacian(f)
        a = gaussian_filter(lap, 0.1).values
        b = laplacian(gaussian_filter(f, 0.1)).values
        assert l2_norm(Field(grid65, a - b)) <= 1e-10 * l2_norm(lap)

    def test_negative_width_rejected(self, grid65):
        with pytest.raises(ValueError):
            gaussian_filter(zeros(grid65), -1.0)

    def test_dirichlet_preserved(self, grid65):
        out = gaussian_filter(random_dirichlet(grid65, 8), 0.1)
        v = out.values
        assert not (v[0].any() or v[-1].any() or v[:, 0].any() or v[:, -1].any())


class TestRestrict:
    def test_zero(self, grid65):
        out = restrict(zeros(grid65), Grid(17, 17))
        assert not out.values.any()

    def test_coarse_representable_mode(self, grid65):
        coarse = Grid(17, 17)
        fine_mode = sine_mode(grid65, 1, 1)
        out = restrict(fine_mode, coarse)
        expected = sine_mode(coarse, 1, 1)
        assert np.max(np.abs(out.values - expected.values)) <= 1e-14

    def test_matches_stride_oracle(self, grid65):
        rng = np.random.default_rng(9)
        f = Field(grid65, rng.standard_normal(grid65.shape))
        coarse = Grid(17, 17)
        out = restrict(f, coarse)
        stride = (grid65.nx - 1) // (coarse.nx - 1)
        for j in range(coarse.ny):
            for i in range(coarse.nx):
                assert out.values[j, i] == f.values[j * stride, i * stride]

    def test_non_nested_rejected(self, grid65):
        with pytest.raises(GridMismatchError):
            restrict(zeros(grid65), Grid(18, 18))
        with pytest.raises(GridMismatchError):
            restrict(zeros(grid65), Grid(17, 17, 2.0, 1.0))


class TestPerturbField:
    def test_zero_amplitude_unchanged(self, grid65):
        f = random_dirichlet(grid65, 10)
        out = perturb_field(f, 0.0, 3)
        assert np.array_equal(out.values, f.values)

    def test_deterministic(self, grid65):
        f = random_dirichlet(grid65, 11)
        a = perturb_field(f, 1e-4, 42)
        b = perturb_field(f, 1e-4, 42)
        assert np.array_equal(a.values, b.values)

    def test_different_seeds_differ(self, grid65):
        f = random_dirichlet(grid65, 12)
        a = perturb_field(f, 1e-4, 1)
        b = perturb_field(f, 1e-4, 2)
        assert not np.array_equal(a.values, b.values)

    def test_normalization(self, grid65):
        f = random_dirichlet(grid65, 13)
        out = perturb_field(f, 1e-4, 5)
        rel = l2_norm(Field(grid65, out.values - f.values)) / l2_norm(f)
        assert rel == pytest.approx(1e-4, abs=1e-10)

    def test_zero_field_stays_zero(self, grid65):
        out = perturb_field(zeros(grid65), 1e-4, 5)
        assert not out.values.any()

    def test_boundary_stays_zero(self, grid65):
        out = perturb_field(random_dirichlet(grid65, 14), 1e-2, 6)
        v = out.values
        assert not (v[0].any() or v[-1].any() or v[:, 0].any() or v[:, -1].any())

    def test_negative_amplitude_rejected(self, grid65):
        with pytest.raises(ValueError):
            perturb_field(zeros(grid65), -1e-4, 0)
