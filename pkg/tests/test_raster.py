import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from mapkurator.exceptions import ConfigurationError, FormatError, InputError
from mapkurator.raster import PatchWindow, RasterImage, crop, load_raster, plan_tiles, save_png


def _image(w, h, seed=0):
    rng = np.random.default_rng(seed)
    return RasterImage("img", rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def _covered(windows, w, h):
    hits = np.zeros((h, w), dtype=int)
    for win in windows:
        hits[win.origin_y_px:win.origin_y_px + win.height_px, win.origin_x_px:win.origin_x_px + win.width_px] += 1
    return hits


def test_exact_grid_division():
    wins = plan_tiles(2000, 2000, 1000, 1000)
    assert [(w.origin_x_px, w.origin_y_px) for w in wins] == [(0, 0), (1000, 0), (0, 1000), (1000, 1000)]
    assert all((w.width_px, w.height_px) == (1000, 1000) for w in wins)


def test_single_tile():
    assert plan_tiles(1000, 1000, 1000, 1000) == [PatchWindow(0, 0, 0, 0, 1000, 1000)]


def test_overlapping_stride_clips_edges():
    wins = plan_tiles(2500, 1000, 1000, 750)
    first_row = [w for w in wins if w.row_index == 0]
    assert [w.origin_x_px for w in first_row] == [0, 750, 1500, 2250]
    assert [w.width_px for w in first_row] == [1000, 1000, 1000, 250]
    # brute-force pixel scan
    assert _covered(wins, 2500, 1000).min() >= 1


def test_default_stride_is_patch_size():
    assert plan_tiles(3000, 2000, 1000) == plan_tiles(3000, 2000, 1000, 1000)


def test_stride_larger_than_patch_rejected():
    with pytest.raises(ConfigurationError):
        plan_tiles(100, 100, 10, 11)


@pytest.mark.parametrize("args", [(0, 10, 5, 5), (10, -1, 5, 5), (10, 10, 0, 1), (10, 10, 5, 0)])
def test_nonpositive_dimensions_rejected(args):
    with pytest.raises(InputError):
        plan_tiles(*args)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 60), st.integers(1, 60), st.integers(1, 25), st.data())
def test_plan_properties(w, h, p, data):
    s = data.draw(st.integers(1, p))
    wins = plan_tiles(w, h, p, s)
    assert wins == plan_tiles(w, h, p, s)
    assert _covered(wins, w, h).min() >= 1
    keys = [(win.row_index, win.col_index) for win in wins]
    assert keys == sorted(keys)
    assert len({(win.origin_x_px, win.origin_y_px) for win in wins}) == len(wins)
    for win in wins:
        assert win.origin_x_px % s == 0 and win.origin_y_px % s == 0
        assert win.origin_x_px + win.width_px <= w and win.origin_y_px + win.height_px <= h
        assert 1 <= win.width_px <= p and 1 <= win.height_px <= p


def test_crop_full_window_is_identity():
    img = _image(40, 30)
    out = crop(img, PatchWindow(0, 0, 0, 0, 40, 30))
    assert out.tobytes() == img.tobytes()


def test_crop_right_half():
    img = _image(2000, 1000)
    out = crop(img, PatchWindow(0, 1, 1000, 0, 1000, 1000))
    assert np.array_equal(out.pixels, img.pixels[:, 1000:])
    assert out.id == "img_r0_c1"
    assert out.pixels[5, 7].tolist() == img.pixels[5, 1007].tolist()


def test_crop_out_of_bounds():
    with pytest.raises(InputError):
        crop(_image(10, 10), PatchWindow(0, 0, 5, 0, 6, 10))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 50), st.integers(1, 50), st.integers(1, 20))
def test_crops_reassemble(w, h, p):
    img = _image(w, h, seed=w * 100 + h)
    canvas = np.zeros_like(img.pixels)
    for win in plan_tiles(w, h, p, p):
        canvas[win.origin_y_px:win.origin_y_px + win.height_px,
               win.origin_x_px:win.origin_x_px + win.width_px] = crop(img, win).pixels
    assert canvas.tobytes() == img.tobytes()


def test_raster_is_immutable():
    img = _image(4, 4)
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1


def test_raster_invariants():
    with pytest.raises(InputError):
        RasterImage("x", np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(InputError):
        RasterImage("x", np.zeros((0, 4, 3), dtype=np.uint8))
    with pytest.raises(InputError):
        RasterImage("x", np.zeros((4, 4, 3), dtype=np.float32))


def test_png_round_trip(tmp_path):
    img = _image(17, 9)
    save_png(img, tmp_path / "a.png")
    back = load_raster(tmp_path / "a.png")
    assert back.id == "a"
    assert back.tobytes() == img.tobytes()


def test_uncompressed_tiff_accepted(tmp_path):
    img = _image(8, 6)
    Image.fromarray(np.ascontiguousarray(img.pixels)).save(tmp_path / "m.tif", compression="raw")
    assert load_raster(tmp_path / "m.tif").tobytes() == img.tobytes()


def test_compressed_tiff_rejected(tmp_path):
    Image.fromarray(np.ascontiguousarray(_image(8, 6).pixels)).save(tmp_path / "m.tif", compression="tiff_lzw")
    with pytest.raises(FormatError):
        load_raster(tmp_path / "m.tif")


@pytest.mark.parametrize("mode,fmt,name", [("RGB", "JPEG", "m.jpg"), ("L", "PNG", "g.png"), ("RGBA", "PNG", "a.png")])
def test_other_formats_rejected(tmp_path, mode, fmt, name):
    Image.new(mode, (5, 5)).save(tmp_path / name, format=fmt)
    with pytest.raises(FormatError):
        load_raster(tmp_path / name)
