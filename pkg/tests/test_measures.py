import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from prw.measures import (
    DiscreteMeasure,
    add_noise,
    cost_matrix,
    fragmented_hypercube,
    hypercube_shift,
    load_measure,
    save_measure,
    wishart_gaussian_pair,
)

def measure_pair():
    return st.integers(1, 4).flatmap(
        lambda d: st.tuples(
            arrays(np.float64, st.tuples(st.integers(1, 6), st.just(d)),
                   elements=st.floats(-50, 50)),
            arrays(np.float64, st.tuples(st.integers(1, 6), st.just(d)),
                   elements=st.floats(-50, 50)),
        )
    )


class TestDiscreteMeasure:
    def test_uniform_weights(self):
        m = DiscreteMeasure.uniform(np.zeros((4, 2)))
        assert np.allclose(m.weights, 0.25)
        assert abs(m.weights.sum() - 1.0) <= 1e-12

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure(np.zeros((2, 1)), np.array([1.5, -0.5]))

    def test_weight_sum_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure(np.zeros((2, 1)), np.array([0.7, 0.7]))

    def test_nonfinite_point_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure(np.array([[np.inf]]), np.array([1.0]))

    def test_immutable(self):
        m = DiscreteMeasure.uniform(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            m.points[0, 0] = 1.0


class TestCostMatrix:
    def test_three_four_five(self):
        mu = DiscreteMeasure.uniform(np.array([[0.0, 0.0]]))
        nu = DiscreteMeasure.uniform(np.array([[3.0, 4.0]]))
        ctx = cost_matrix(mu, nu)
        assert np.allclose(ctx.cost, [[25.0]])
        assert ctx.max_abs == pytest.approx(25.0)

    def test_identical_measure_zero_diagonal(self):
        pts = np.random.default_rng(0).normal(size=(5, 3))
        m = DiscreteMeasure.uniform(pts)
        ctx = cost_matrix(m, m)
        assert np.allclose(np.diag(ctx.cost), 0.0)

    def test_one_dimensional_hand_values(self):
        mu = DiscreteMeasure.uniform(np.array([[0.0], [1.0]]))
        nu = DiscreteMeasure.uniform(np.array([[0.0], [2.0]]))
        ctx = cost_matrix(mu, nu)
        assert np.allclose(ctx.cost, [[0.0, 4.0], [1.0, 1.0]])

    def test_dimension_mismatch(self):
        mu = DiscreteMeasure.uniform(np.zeros((2, 2)))
        nu = DiscreteMeasure.uniform(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            cost_matrix(mu, nu)

    @settings(max_examples=50, deadline=None)
    @given(measure_pair())
    def test_transpose_symmetry_and_nonnegativity(self, pair):
        x, y = pair
        mu = DiscreteMeasure.uniform(x)
        nu = DiscreteMeasure.uniform(y)
        forward = cost_matrix(mu, nu).cost
        backward = cost_matrix(nu, mu).cost
        assert np.array_equal(forward, backward.T)
        assert np.all(forward >= 0)


class TestFragmentedHypercube:
    def test_shift_formula_kstar_one(self):
        out = hypercube_shift(np.array([[0.5, -0.3]]), 1)
        assert np.allclose(out, [[2.5, -0.3]])

    def test_shift_formula_kstar_two(self):
        out = hypercube_shift(np.array([[0.5, -0.3]]), 2)
        assert np.allclose(out, [[2.5, -2.3]])

    def test_coordinate_ranges(self):
        mu, nu = fragmented_hypercube(200, 10, 3, 7)
        assert np.all(np.abs(mu.points) <= 1.0)
        shifted = np.abs(nu.points[:, :3])
        assert np.all((shifted >= 1.0) & (shifted <= 3.0))
        assert np.all(np.abs(nu.points[:, 3:]) <= 1.0)

    def test_uniform_weights_and_shape(self):
        mu, nu = fragmented_hypercube(50, 4, 2, 0)
        assert mu.points.shape == (50, 4)
        assert np.allclose(mu.weights, 1 / 50)
        assert np.allclose(nu.weights, 1 / 50)

    def test_deterministic(self):
        a = fragmented_hypercube(30, 5, 2, 42)
        b = fragmented_hypercube(30, 5, 2, 42)
        assert np.array_equal(a[0].points, b[0].points)
        assert np.array_equal(a[1].points, b[1].points)

    def test_kstar_out_of_range(self):
        with pytest.raises(ValueError):
            fragmented_hypercube(10, 3, 4, 0)


class TestWishartPair:
    def test_points_lie_in_kstar_subspace(self):
        mu, nu = wishart_gaussian_pair(100, 20, 5, 3)
        for m in (mu, nu):
            s = np.linalg.svd(m.points, compute_uv=False)
            assert np.all(s[5:] <= 1e-10)

    def test_deterministic(self):
        a = wishart_gaussian_pair(20, 8, 3, 11)
        b = wishart_gaussian_pair(20, 8, 3, 11)
        assert np.array_equal(a[0].points, b[0].points)

    def test_different_seeds_differ(self):
        a = wishart_gaussian_pair(20, 8, 3, 1)
        b = wishart_gaussian_pair(20, 8, 3, 2)
        assert not np.array_equal(a[0].points, b[0].points)


class TestAddNoise:
    def test_zero_sigma_identity(self):
        m = DiscreteMeasure.uniform(np.ones((5, 3)))
        out = add_noise(m, 0.0, 0)
        assert np.array_equal(out.points, m.points)

    def test_negative_sigma_rejected(self):
        m = DiscreteMeasure.uniform(np.ones((2, 2)))
        with pytest.raises(ValueError):
            add_noise(m, -1.0, 0)

    def test_empirical_variance(self):
        m = DiscreteMeasure.uniform(np.zeros((10_000, 2)))
        sigma = 0.7
        out = add_noise(m, sigma, 5)
        var = (out.points - m.points).var()
        assert var == pytest.approx(sigma**2, rel=0.05)

    def test_weights_unchanged(self):
        w = np.array([0.2, 0.8])
        m = DiscreteMeasure(np.zeros((2, 3)), w)
        out = add_noise(m, 1.0, 0)
        assert np.array_equal(out.weights, w)


class TestFileIo:
    def test_csv_uniform_default(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("0,0\n1,1\n")
        m = load_measure(str(path), "csv")
        assert m.points.shape == (2, 2)
        assert np.allclose(m.weights, 0.5)

    def test_csv_weight_column_renormalized(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("x0,x1,weight\n0,0,0.5025\n1,1,0.5025\n")
        m = load_measure(str(path), "csv")
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_csv_weight_sum_out_of_tolerance(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("x0,weight\n0,0.6\n1,0.6\n")
        with pytest.raises(ValueError):
            load_measure(str(path), "csv")

    def test_csv_negative_weight(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("x0,weight\n0,1.5\n1,-0.5\n")
        with pytest.raises(ValueError):
            load_measure(str(path), "csv")

    def test_csv_ragged_rows(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("0,0\n1\n")
        with pytest.raises(ValueError):
            load_measure(str(path), "csv")

    def test_jsonl_round(self, tmp_path):
        path = tmp_path / "m.jsonl"
        rows = [{"point": [0.0, 1.0], "weight": 0.25}, {"point": [2.0, 3.0], "weight": 0.75}]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        m = load_measure(str(path), "jsonl")
        assert np.allclose(m.points, [[0, 1], [2, 3]])
        assert np.allclose(m.weights, [0.25, 0.75])

    def test_save_load_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        m = DiscreteMeasure.uniform(rng.normal(size=(7, 3)))
        path = tmp_path / "m.csv"
        save_measure(m, str(path))
        back = load_measure(str(path), "csv")
        assert np.array_equal(back.points, m.points)
        assert np.allclose(back.weights, m.weights, atol=1e-15)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_measure(str(tmp_path / "nope.csv"), "csv")
