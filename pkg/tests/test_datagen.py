import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from umaplens.datagen import (
    Dataset,
    gen_ring,
    gen_uniform_square,
    load_csv,
    save_csv,
)


class TestGenRing:
    def test_radii_within_annulus(self):
        ds = gen_ring(1000, radius=4.0, half_width=0.25, seed=3)
        radii = np.linalg.norm(ds.points, axis=1)
        assert ds.n == 1000
        assert radii.min() >= 3.75
        assert radii.max() <= 4.25

    def test_zero_width_annulus_is_circle(self):
        ds = gen_ring(2, radius=1.0, half_width=0.0, seed=9)
        radii = np.linalg.norm(ds.points, axis=1)
        np.testing.assert_allclose(radii, 1.0, rtol=0, atol=1e-12)

    def test_deterministic_per_seed(self):
        a = gen_ring(500, 4.0, 0.25, seed=7)
        b = gen_ring(500, 4.0, 0.25, seed=7)
        assert np.array_equal(a.points, b.points)

    def test_different_seeds_differ(self):
        a = gen_ring(100, 4.0, 0.25, seed=1)
        b = gen_ring(100, 4.0, 0.25, seed=2)
        assert not np.array_equal(a.points, b.points)

    def test_invalid_geometry_rejected(self):
        with pytest.raises(ValueError):
            gen_ring(10, radius=1.0, half_width=1.0, seed=0)
        with pytest.raises(ValueError):
            gen_ring(10, radius=1.0, half_width=-0.1, seed=0)
        with pytest.raises(ValueError):
            gen_ring(1, radius=1.0, half_width=0.1, seed=0)

    @settings(max_examples=30, deadline=None)
    @given(
        n=st.integers(2, 200),
        radius=st.floats(0.5, 50.0),
        rel_width=st.floats(0.0, 0.9),
        seed=st.integers(0, 2**31),
    )
    def test_radii_bounds_property(self, n, radius, rel_width, seed):
        hw = radius * rel_width
        ds = gen_ring(n, radius, hw, seed)
        radii = np.linalg.norm(ds.points, axis=1)
        assert radii.min() >= radius - hw - 1e-9
        assert radii.max() <= radius + hw + 1e-9


class TestGenUniformSquare:
    def test_support(self):
        ds = gen_uniform_square(1000, seed=0)
        assert ds.points.min() >= 0.0
        assert ds.points.max() <= 1.0

    def test_mean_near_half(self):
        ds = gen_uniform_square(1000, seed=0)
        # law of large numbers: SE of the mean is ~0.009 here
        np.testing.assert_allclose(ds.points.mean(axis=0), 0.5, atol=0.05)

    def test_deterministic(self):
        assert np.array_equal(
            gen_uniform_square(64, seed=5).points, gen_uniform_square(64, seed=5).points
        )


class TestDatasetInvariants:
    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            Dataset(np.array([[0.0, 1.0], [2.0, 3.0], [0.0, 1.0]]))

    def test_rejects_single_point(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[0.0, 1.0]]))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[0.0, np.nan], [1.0, 2.0]]))


class TestCsvRoundTrip:
    def test_save_load_exact(self, tmp_path):
        ds = Dataset(np.array([[1.25, -3.5], [0.1, 0.2], [7.0, 1e-17]]))
        path = tmp_path / "pts.csv"
        save_csv(ds, path)
        back = load_csv(path)
        assert np.array_equal(back.points, ds.points)

    def test_roundtrip_random(self, tmp_path):
        ds = gen_ring(200, 4.0, 0.25, seed=11)
        path = tmp_path / "ring.csv"
        save_csv(ds, path)
        assert np.array_equal(load_csv(path).points, ds.points)

    def test_header_autodetected(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("x,y\n1.0,2.0\n3.0,4.0\n")
        ds = load_csv(path)
        assert np.array_equal(ds.points, [[1.0, 2.0], [3.0, 4.0]])

    def test_duplicate_row_names_rows(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text("1.0,2.0\n3.0,4.0\n1.0,2.0\n")
        with pytest.raises(ValueError, match="duplicate points at data rows 0 and 2"):
            load_csv(path)

    def test_single_row_rejected(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("1.0,2.0\n")
        with pytest.raises(ValueError, match="at least 2"):
            load_csv(path)

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("1.0,2.0\n3.0\n")
        with pytest.raises(ValueError, match="line 2"):
            load_csv(path)

    def test_non_numeric_cell_names_position(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,2.0\n3.0,oops\n")
        with pytest.raises(ValueError, match="line 2, column 2"):
            load_csv(path)
