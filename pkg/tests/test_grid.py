import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdd.grid import (
    BadMagicError,
    GeoExtent,
    Grid,
    NonFiniteDataError,
    Shape,
    TruncatedPayloadError,
    UNIT_EXTENT,
    UnsupportedVersionError,
    area_weights,
    downsample,
    read_grid,
    upsample,
    write_grid,
)

from .oracles import bilinear_reference


def grid_of(arr, extent=UNIT_EXTENT):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    return Grid(arr, [f"c{i}" for i in range(arr.shape[0])], extent)


class TestGridType:
    def test_rejects_nan(self):
        data = np.ones((1, 2, 2))
        data[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            Grid(data, ["a"])

    def test_rejects_duplicate_names(self):
        with pytest.raises(ValueError, match="unique"):
            Grid(np.ones((2, 2, 2)), ["a", "a"])

    def test_rejects_empty_name(self):
        with pytest.raises(ValueError, match="nonempty"):
            Grid(np.ones((1, 2, 2)), [""])

    def test_data_is_immutable(self):
        g = grid_of(np.ones((2, 2)))
        with pytest.raises(ValueError):
            g.data[0, 0, 0] = 5.0

    def test_extent_validation(self):
        with pytest.raises(ValueError):
            GeoExtent(10, 5, 0, 1)
        with pytest.raises(ValueError):
            GeoExtent(-100, 5, 0, 1)
        with pytest.raises(ValueError):
            GeoExtent(0, 1, 0, 361)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            Shape(0, 3)


class TestResampling:
    def test_downsample_constant_is_constant(self):
        g = grid_of(np.full((7, 9), 3.0))
        out = downsample(g, Shape(3, 4))
        assert np.array_equal(out.data, np.full((1, 3, 4), 3.0))

    def test_downsample_identity_shape_exact(self):
        rng = np.random.default_rng(0)
        g = grid_of(rng.normal(size=(4, 4)))
        out = downsample(g, Shape(4, 4))
        assert np.array_equal(out.data, g.data)

    def test_checkerboard_halves_to_uniform(self):
        # 2x2-period checkerboard averaged at cell centers is flat 0.5
        rows, cols = np.indices((8, 8))
        board = ((rows + cols) % 2).astype(float)
        out = downsample(grid_of(board), Shape(4, 4))
        expected = bilinear_reference(board, 4, 4)
        assert np.allclose(out.data[0], expected, atol=1e-15)
        assert np.allclose(out.data[0], 0.5, atol=1e-15)

    def test_downsample_rejects_larger_target(self):
        g = grid_of(np.ones((4, 4)))
        with pytest.raises(ValueError, match="exceeds"):
            downsample(g, Shape(5, 4))

    def test_upsample_constant(self):
        g = grid_of(np.full((2, 2), 3.0))
        out = upsample(g, Shape(8, 8))
        assert np.allclose(out.data, 3.0, atol=1e-6)
        assert abs(out.data.mean() - 3.0) < 1e-6

    def test_upsample_identity_exact(self):
        rng = np.random.default_rng(1)
        g = grid_of(rng.normal(size=(5, 6)))
        assert np.array_equal(upsample(g, Shape(5, 6)).data, g.data)

    def test_upsample_linear_ramp_matches_closed_form(self):
        ramp = np.arange(4.0).reshape(4, 1)
        out = upsample(grid_of(ramp), Shape(8, 1))
        expected = bilinear_reference(ramp, 8, 1)
        assert np.allclose(out.data[0], expected, atol=1e-15)

    def test_upsample_rejects_smaller_target(self):
        g = grid_of(np.ones((4, 4)))
        with pytest.raises(ValueError, match="smaller"):
            upsample(g, Shape(3, 4))

    def test_matches_scalar_reference_on_random_fields(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            h, w = rng.integers(2, 12, size=2)
            th = int(rng.integers(1, h + 1))
            tw = int(rng.integers(1, w + 1))
            plane = rng.normal(size=(int(h), int(w)))
            out = downsample(grid_of(plane), Shape(th, tw))
            assert np.allclose(out.data[0], bilinear_reference(plane, th, tw), atol=1e-12)

    def test_down_then_up_constant_round_trip(self):
        g = grid_of(np.full((16, 16), 2.5))
        back = upsample(downsample(g, Shape(4, 4)), Shape(16, 16))
        assert np.array_equal(back.data, g.data)

    def test_projection_consistency_smooth_field(self):
        # two-stage vs direct downsampling agree on gently varying fields
        y, x = np.meshgrid(np.linspace(0, 1, 256), np.linspace(0, 1, 256), indexing="ij")
        field = 10.0 + 3.0 * x + 2.0 * y + 0.01 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
        g = grid_of(field)
        two_step = downsample(downsample(g, Shape(64, 64)), Shape(16, 16))
        direct = downsample(g, Shape(16, 16))
        rel = np.max(np.abs(two_step.data - direct.data)) / np.max(np.abs(direct.data))
        assert rel < 1e-5


class TestAreaWeights:
    def test_sentinel_extent_uniform(self):
        g = grid_of(np.ones((3, 4)))
        assert np.array_equal(area_weights(g), np.ones((3, 4)))

    def test_equator_row_weight_one(self):
        g = grid_of(np.ones((1, 4)), extent=GeoExtent(-1.0, 1.0, 0.0, 10.0))
        assert np.allclose(area_weights(g), 1.0, atol=1e-6)

    def test_sixty_degrees_weight_half(self):
        g = grid_of(np.ones((1, 2)), extent=GeoExtent(59.0, 61.0, 0.0, 10.0))
        assert np.allclose(area_weights(g), 0.5, atol=1e-12)

    def test_constant_along_rows_and_positive(self):
        g = grid_of(np.ones((6, 5)), extent=GeoExtent(-43.5, -7.75, 109.0, 176.75))
        w = area_weights(g)
        assert np.all(w > 0)
        assert np.allclose(w, w[:, :1])

    def test_pole_touching_rejected(self):
        g = grid_of(np.ones((1, 4)), extent=GeoExtent(90.0 - 2e-9, 90.0, 0.0, 10.0))
        with pytest.raises(ValueError, match="pole"):
            area_weights(g)


class TestHddgFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(2, 3, 4)).astype(np.float32).astype(np.float64)
        g = Grid(data, ["tas", "pr"], GeoExtent(-43.5, -7.75, 109.0, 176.75))
        path = tmp_path / "field.hddg"
        write_grid(g, path)
        assert read_grid(path) == g

    def test_bad_magic(self):
        with pytest.raises(BadMagicError):
            read_grid(io.BytesIO(b"XXXX" + b"\x00" * 64))

    def test_bad_version(self):
        g = grid_of(np.ones((2, 2)))
        buf = io.BytesIO()
        write_grid(g, buf)
        raw = bytearray(buf.getvalue())
        raw[4:6] = (99).to_bytes(2, "little")
        with pytest.raises(UnsupportedVersionError):
            read_grid(io.BytesIO(bytes(raw)))

    def test_truncated_payload(self):
        g = grid_of(np.ones((2, 2)))
        buf = io.BytesIO()
        write_grid(g, buf)
        raw = buf.getvalue()
        with pytest.raises(TruncatedPayloadError):
            read_grid(io.BytesIO(raw[:-4]))  # drop one f32 of the 2x2 payload

    def test_non_finite_payload(self):
        g = grid_of(np.ones((2, 2)))
        buf = io.BytesIO()
        write_grid(g, buf)
        raw = bytearray(buf.getvalue())
        raw[-4:] = np.array([np.inf], dtype="<f4").tobytes()
        with pytest.raises(NonFiniteDataError):
            read_grid(io.BytesIO(bytes(raw)))

    def test_trailing_bytes_rejected(self):
        g = grid_of(np.ones((2, 2)))
        buf = io.BytesIO()
        write_grid(g, buf)
        with pytest.raises(ValueError, match="trailing"):
            read_grid(io.BytesIO(buf.getvalue() + b"zz"))

    @settings(max_examples=25, deadline=None)
    @given(
        c=st.integers(1, 3),
        h=st.integers(1, 6),
        w=st.integers(1, 6),
        seed=st.integers(0, 2**31),
    )
    def test_round_trip_property(self, c, h, w, seed):
        # f32 on disk: generate f32-representable values so the trip is exact
        rng = np.random.default_rng(seed)
        data = rng.normal(scale=10.0, size=(c, h, w)).astype(np.float32).astype(np.float64)
        g = Grid(data, [f"ch{i}" for i in range(c)], UNIT_EXTENT)
        buf = io.BytesIO()
        write_grid(g, buf)
        assert read_grid(io.BytesIO(buf.getvalue())) == g
