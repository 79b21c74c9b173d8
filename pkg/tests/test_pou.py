import numpy as np
import pytest

from exbound.fd import MarketParams
from exbound.neural import audit_class, mlp_forward
from exbound.pou import (CenterGrid, approx_mul, approx_square,
                         bump_network_spec, mul_accuracy, mul_network,
                         partition_sum, path_approx_error, phi_center,
                         piecewise_const_approx, product_bump_network, psi,
                         psi_network, psi_piecewise, square_accuracy,
                         square_network)
from exbound.sde import simulate_gbm


class TestPsi:
    @pytest.mark.parametrize("a,expected", [
        (0.5, 1.0), (1.5, 0.5), (-3.0, 0.0), (0.0, 1.0), (2.0, 0.0),
        (-1.0, 1.0), (1.0, 1.0), (-1.75, 0.25),
    ])
    def test_values(self, a, expected):
        assert psi(a) == expected

    def test_relu_form_equals_piecewise(self, rng):
        a = rng.uniform(-4, 4, 5000)
        assert np.array_equal(psi(a), psi_piecewise(a))

    def test_network_realization(self):
        net = psi_network()
        xs = np.linspace(-3, 3, 1201)
        out = mlp_forward(net, xs[:, None]).ravel()
        assert np.max(np.abs(out - psi(xs))) < 1e-15


class TestPhiCenter:
    def test_plateau_at_center(self):
        grid = CenterGrid(2.0, 9, 3)
        c = grid.centers[100]
        assert phi_center(c, c, grid) == 1.0

    def test_support_cutoff_exact(self, rng):
        grid = CenterGrid(1.5, 7, 2)
        c = grid.centers[24]
        cutoff = 2.0 * grid.radius_r / (grid.n_per_dim - 1)
        for _ in range(100):
            direction = rng.standard_normal(2)
            direction /= np.abs(direction).max()
            x = c + direction * cutoff * rng.uniform(1.0, 3.0)
            assert phi_center(x, c, grid) == 0.0

    def test_partition_of_unity(self, rng):
        for d, n_per, r in ((1, 5, 1.0), (1, 33, 80.0), (2, 7, 2.0),
                            (3, 4, 1.0)):
            grid = CenterGrid(r, n_per, d)
            pts = rng.uniform(-r, r, size=(1000, d))
            s = partition_sum(pts, grid)
            assert np.max(np.abs(s - 1.0)) < 1e-12

    def test_matches_explicit_center_sum(self, rng):
        grid = CenterGrid(2.0, 5, 2)
        pts = rng.uniform(-2, 2, size=(50, 2))
        total = np.zeros(50)
        for c in grid.centers:
            total += phi_center(pts, c, grid)
        assert np.allclose(total, 1.0, atol=1e-12)


class TestApproxSquare:
    def test_endpoints_exact(self):
        for m in (1, 3, 7):
            assert approx_square(0.0, m) == 0.0
            assert approx_square(1.0, m) == 1.0

    def test_level_one_dyadic(self):
        assert approx_square(0.5, 1) == 0.25

    def test_error_bound_m8(self):
        xs = np.linspace(0.0, 1.0, 10_000)
        err = np.max(np.abs(approx_square(xs, 8) - xs**2))
        assert err <= 2.0**-18

    def test_error_quarters_per_level(self):
        xs = np.linspace(0.0, 1.0, 10_000)
        sups = [float(np.max(np.abs(approx_square(xs, m) - xs**2)))
                for m in (3, 4, 5)]
        for a, b in zip(sups, sups[1:]):
            assert 3.8 <= a / b <= 4.2

    def test_domain_error(self):
        with pytest.raises(ValueError):
            approx_square(1.2, 4)
        with pytest.raises(ValueError):
            approx_square(-0.1, 4)

    @pytest.mark.parametrize("m", [1, 2, 5])
    def test_network_matches_function(self, m):
        net = square_network(m)
        assert net.n_layers == m + 1
        xs = np.linspace(0.0, 1.0, 3001)
        out = mlp_forward(net, xs[:, None]).ravel()
        assert np.max(np.abs(out - approx_square(xs, m))) < 1e-14


class TestApproxMul:
    def test_annihilator(self, rng):
        ys = rng.uniform(-1, 1, 100)
        out = approx_mul(np.zeros(100), ys, m=6, bound_M=1.0)
        assert np.max(np.abs(out)) <= mul_accuracy(6, 1.0)

    def test_identity_column(self):
        xs = np.linspace(-1, 1, 500)
        out = approx_mul(xs, np.ones_like(xs), m=8, bound_M=1.0)
        assert np.max(np.abs(out - xs)) <= mul_accuracy(8, 1.0)

    def test_grid_supremum_within_declared(self):
        xs = np.linspace(-1, 1, 200)
        xx, yy = np.meshgrid(xs, xs, indexing="ij")
        err = np.abs(approx_mul(xx.ravel(), yy.ravel(), 10, 1.0)
                     - xx.ravel() * yy.ravel())
        assert err.max() <= mul_accuracy(10, 1.0)

    def test_scales_with_bound(self):
        out = approx_mul(3.0, -2.0, m=10, bound_M=4.0)
        assert abs(out - (-6.0)) <= mul_accuracy(10, 4.0)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            approx_mul(1.5, 0.2, m=4, bound_M=1.0)

    def test_network_matches_function(self):
        net = mul_network(5, bound_M=1.0)
        xs = np.linspace(-1, 1, 60)
        xx, yy = np.meshgrid(xs, xs, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        out = mlp_forward(net, pts).ravel()
        ref = approx_mul(pts[:, 0], pts[:, 1], 5, 1.0)
        assert np.max(np.abs(out - ref)) < 1e-13


class TestProductBump:
    def test_d1_is_exact_hat(self):
        grid = CenterGrid(2.0, 9, 1)
        c = np.array([grid.axis_coords[2]])
        net = product_bump_network(c, grid, m=1)
        xs = np.linspace(-2, 2, 2001)
        out = mlp_forward(net, xs[:, None]).ravel()
        ref = phi_center(xs[:, None], c, grid)
        assert np.max(np.abs(out - ref)) < 1e-14

    def test_d2_within_telescoped_error(self):
        grid = CenterGrid(1.5, 7, 2)
        c = grid.centers[24]
        m = 10
        net = product_bump_network(c, grid, m)
        xs = np.linspace(-1.5, 1.5, 100)
        pts = np.stack(np.meshgrid(xs, xs, indexing="ij"),
                       axis=-1).reshape(-1, 2)
        out = mlp_forward(net, pts).ravel()
        ref = phi_center(pts, c, grid)
        assert np.max(np.abs(out - ref)) <= 2.0 * mul_accuracy(m, 1.0)

    def test_center_value_near_one(self):
        grid = CenterGrid(1.0, 5, 3)
        c = grid.centers[31]
        m = 8
        net = product_bump_network(c, grid, m)
        out = float(mlp_forward(net, c[None, :]))
        assert abs(out - 1.0) <= 3.0 * mul_accuracy(m, 1.0)

    @pytest.mark.parametrize("d,m", [(1, 1), (2, 6), (3, 4)])
    def test_conforms_to_declared_class(self, d, m, rng):
        grid = CenterGrid(1.5, 5, d)
        c = grid.centers[len(grid.centers) // 2]
        net = product_bump_network(c, grid, m)
        sample = rng.uniform(-1.5, 1.5, size=(500, d))
        report = audit_class(net, bump_network_spec(grid, m), sample)
        assert report.passed, report.checks


class TestPiecewiseConst:
    def test_reproduces_constants(self, rng):
        grid = CenterGrid(2.0, 9, 1)
        approx = piecewise_const_approx(
            lambda z: np.full_like(np.asarray(z, float), 7.0), grid)
        xs = rng.uniform(-2, 2, 500)
        assert np.allclose(approx(xs), 7.0, atol=1e-12)

    def test_exact_at_centers_for_linear(self):
        grid = CenterGrid(2.0, 9, 1)
        g = lambda z: 3.0 * np.asarray(z) - 1.0  # noqa: E731
        approx = piecewise_const_approx(g, grid)
        for c in grid.axis_coords:
            assert approx(np.array([c]))[0] == pytest.approx(g(c), abs=1e-12)

    def test_put_payoff_error_bound(self):
        # recentered put on a cube covering [45, 180] around 100
        grid = CenterGrid(80.0, 33, 1)
        g = lambda z: np.maximum(-np.asarray(z, float), 0.0)  # noqa: E731
        approx = piecewise_const_approx(g, grid)
        xs = np.linspace(-80, 80, 10_000)
        sup = np.max(np.abs(approx(xs) - g(xs)))
        assert sup <= 2.0 * grid.radius_r * 1.0 / (grid.n_per_dim - 1)

    def test_zero_outside_cube(self):
        grid = CenterGrid(1.0, 5, 1)
        approx = piecewise_const_approx(
            lambda z: np.ones_like(np.asarray(z, float)), grid)
        assert approx(np.array([1.5]))[0] == 0.0

    def test_2d_error_bound_linear(self):
        grid = CenterGrid(1.5, 9, 2)
        g = lambda v: 0.5 * v[0] - 0.25 * v[1]  # noqa: E731
        lip = float(np.hypot(0.5, 0.25))
        approx = piecewise_const_approx(g, grid)
        xs = np.linspace(-1.5, 1.5, 150)
        pts = np.stack(np.meshgrid(xs, xs, indexing="ij"),
                       axis=-1).reshape(-1, 2)
        ref = np.array([g(p) for p in pts])
        sup = np.max(np.abs(approx(pts) - ref))
        bound = 2.0 * grid.radius_r * lip * np.sqrt(2) / (grid.n_per_dim - 1)
        assert sup <= bound


@pytest.fixture(scope="module")
def put_batch():
    return simulate_gbm(100.0, MarketParams(0.1, 0.2), 1.0, n_steps=50,
                        n_paths=4000, seed=314)


class TestPathApproxError:
    def test_zero_function(self, put_batch):
        grid = CenterGrid(80.0, 17, 1)
        res = path_approx_error(
            lambda z: np.zeros_like(np.asarray(z, float)), grid, put_batch)
        assert res.total == 0.0
        assert res.interior == 0.0 and res.tail == 0.0

    def test_interior_quarters_when_n_doubles(self, put_batch):
        g = lambda z: np.maximum(-np.asarray(z, float), 0.0)  # noqa: E731
        coarse = path_approx_error(g, CenterGrid(80.0, 33, 1), put_batch)
        fine = path_approx_error(g, CenterGrid(80.0, 65, 1), put_batch)
        assert 3.0 <= coarse.interior / fine.interior <= 5.0

    def test_tail_shrinks_with_radius(self, put_batch):
        g = lambda z: np.maximum(-np.asarray(z, float), 0.0)  # noqa: E731
        small = path_approx_error(g, CenterGrid(30.0, 31, 1), put_batch)
        large = path_approx_error(g, CenterGrid(60.0, 61, 1), put_batch)
        assert small.tail > 0.0
        assert large.tail < small.tail
