import math

import numpy as np
import pytest

from qgles.field import (
    Field,
    Grid,
    GridMismatchError,
    NonFiniteFieldError,
    SnapshotFormatError,
    Trajectory,
    inner_product,
    is_dirichlet,
    l2_norm,
    read_snapshot,
    write_snapshot,
    zeros,
)
from qgles.operators import gradient, sine_mode

from conftest import random_dirichlet


def loop_l2(f: Field) -> float:
    # independent brute-force quadrature
    total = 0.0
    ny, nx = f.values.shape
    for j in range(ny):
        for i in range(nx):
            total += f.values[j, i] ** 2
    return math.sqrt(total * f.grid.dx * f.grid.dy)


class TestGrid:
    def test_spacings_and_area(self):
        g = Grid(5, 9, 2.0, 1.0)
        assert g.dx == 0.5
        assert g.dy == 0.125
        assert g.area == 2.0
        assert g.shape == (9, 5)

    @pytest.mark.parametrize("nx,ny", [(2, 5), (5, 2), (1, 1)])
    def test_too_small(self, nx, ny):
        with pytest.raises(ValueError):
            Grid(nx, ny)

    @pytest.mark.parametrize("lx,ly", [(0.0, 1.0), (1.0, -1.0)])
    def test_bad_extent(self, lx, ly):
        with pytest.raises(ValueError):
            Grid(5, 5, lx, ly)


class TestField:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            Field(Grid(5, 5), np.zeros((4, 5)))

    def test_dirichlet_detection(self, grid65):
        assert is_dirichlet(zeros(grid65))
        v = np.zeros(grid65.shape)
        v[0, 3] = 1.0
        assert not is_dirichlet(Field(grid65, v))


class TestL2Norm:
    def test_zero_field(self, grid65):
        assert l2_norm(zeros(grid65)) == 0.0

    def test_sine_mode_analytic(self, grid129):
        # integral of sin^2 sin^2 over the unit square is 1/4
        assert l2_norm(sine_mode(grid129, 1, 1)) == pytest.approx(0.5, abs=1e-4)

    def test_matches_loop_oracle(self, grid65):
        f = random_dirichlet(grid65, 7)
        assert l2_norm(f) == pytest.approx(loop_l2(f), rel=1e-13)

    def test_non_finite_rejected(self, grid65):
        v = np.zeros(grid65.shape)
        v[3, 3] = np.nan
        with pytest.raises(NonFiniteFieldError):
            l2_norm(Field(grid65, v))


class TestInnerProduct:
    def test_zero(self, grid65):
        f = random_dirichlet(grid65, 1)
        assert inner_product(f, zeros(grid65)) == 0.0

    def test_consistent_with_norm(self, grid65):
        f = random_dirichlet(grid65, 2)
        assert inner_product(f, f) == pytest.approx(l2_norm(f) ** 2, rel=1e-13)

    def test_orthogonal_sine_modes(self, grid65):
        f = sine_mode(grid65, 1, 1)
        g = sine_mode(grid65, 2, 1)
        assert abs(inner_product(f, g)) <= 1e-12 * l2_norm(f) * l2_norm(g)

    def test_grid_mismatch(self, grid65):
        with pytest.raises(GridMismatchError):
            inner_product(zeros(grid65), zeros(Grid(33, 33)))

    def test_bilinear(self, grid65):
        f = random_dirichlet(grid65, 3)
        g = random_dirichlet(grid65, 4)
        h = random_dirichlet(grid65, 5)
        lhs = inner_product(Field(grid65, 2.0 * f.values + 3.0 * g.values), h)
        rhs = 2.0 * inner_product(f, h) + 3.0 * inner_product(g, h)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_cauchy_schwarz(grid65):
    for seed in range(20):
        f = random_dirichlet(grid65, 2 * seed)
        g = random_dirichlet(grid65, 2 * seed + 1)
        assert abs(inner_product(f, g)) <= l2_norm(f) * l2_norm(g) * (1 + 1e-12)


@pytest.mark.parametrize("lx,ly", [(1.0, 1.0), (2.0, 1.0)])
def test_discrete_poincare(lx, ly):
    # |g|^2 <= (|D|/pi) |grad g|^2 with the centered-difference gradient
    grid = Grid(65, 65, lx, ly)
    for seed in range(10):
        g = random_dirichlet(grid, seed)
        gx, gy = gradient(g)
        grad_sq = inner_product(gx, gx) + inner_product(gy, gy)
        assert l2_norm(g) ** 2 <= (grid.area / math.pi) * grad_sq


class TestSnapshotIO:
    def test_round_trip_bit_exact(self, tmp_path, grid65):
        f = random_dirichlet(grid65, 11)
        t = 0.1 + 0.2  # not exactly representable as a short decimal
        path = tmp_path / "snap.qgf"
        write_snapshot(f, t, path)
        g, t2 = read_snapshot(path)
        assert t2 == t
        assert g.grid == grid65
        assert np.array_equal(g.values, f.values)

    def test_header_is_ascii_line(self, tmp_path, grid65):
        path = tmp_path / "snap.qgf"
        write_snapshot(zeros(grid65), 0.0, path)
        with open(path, "rb") as fh:
            header = fh.readline().decode("ascii")
        assert header.startswith("QGF1 65 65 ")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.qgf"
        path.write_bytes(b"NOPE 3 3 1.0 1.0 0.0\n" + b"\x00" * 72)
        with pytest.raises(SnapshotFormatError):
            read_snapshot(path)

    def test_truncated_payload(self, tmp_path, grid65):
        path = tmp_path / "snap.qgf"
        write_snapshot(zeros(grid65), 0.0, path)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(SnapshotFormatError):
            read_snapshot(path)


class TestTrajectory:
    def test_times_must_increase(self, grid65):
        with pytest.raises(ValueError):
            Trajectory(
                grid=grid65,
                times=np.array([0.0, 0.0]),
                snapshots=[zeros(grid65), zeros(grid65)],
                diagnostics={"t": np.array([0.0, 0.0])},
            )

    def test_snapshot_count(self, grid65):
        with pytest.raises(ValueError):
            Trajectory(
                grid=grid65,
                times=np.array([0.0, 1.0]),
                snapshots=[zeros(grid65)],
                diagnostics={"t": np.array([0.0])},
            )

    def test_shared_grid(self, grid65):
        with pytest.raises(GridMismatchError):
            Trajectory(
                grid=grid65,
                times=np.array([0.0]),
                snapshots=[zeros(Grid(33, 33))],
                diagnostics={"t": np.array([0.0])},
            )
