import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anonypipe.errors import InvalidGeometryError
from anonypipe.imaging import (
    BoundingBox,
    SizeCategory,
    crop,
    list_images,
    pad_and_clip,
    paste,
    read_image,
    resize,
    size_category,
    write_image,
)


def img4():
    return np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3)


class TestBoundingBox:
    def test_degenerate_rejected(self):
        with pytest.raises(InvalidGeometryError):
            BoundingBox(5, 5, 5, 10)
        with pytest.raises(InvalidGeometryError):
            BoundingBox(5, 6, 9, 2)

    def test_non_integer_rejected(self):
        with pytest.raises(InvalidGeometryError):
            BoundingBox(0.5, 0, 2, 2)

    def test_area_and_iou(self):
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(5, 0, 15, 10)
        assert a.area == 100
        assert a.iou(b) == pytest.approx(50 / 150)
        assert a.iou(BoundingBox(20, 20, 30, 30)) == 0.0

    def test_clip(self):
        assert BoundingBox(-5, -5, 5, 5).clip(10, 10) == BoundingBox(0, 0, 5, 5)
        assert BoundingBox(12, 0, 15, 5).clip(10, 10) is None


class TestPadAndClip:
    @pytest.mark.parametrize(
        "box, expected",
        [
            ((100, 100, 150, 160), (68, 68, 182, 192)),
            ((0, 0, 40, 40), (0, 0, 72, 72)),
            ((2040, 1000, 2048, 1024), (2008, 968, 2048, 1024)),
        ],
    )
    def test_examples(self, box, expected):
        assert pad_and_clip(BoundingBox(*box), 32, 2048, 1024).as_tuple() == expected

    def test_zero_pad_is_identity(self):
        b = BoundingBox(3, 4, 9, 11)
        assert pad_and_clip(b, 0, 20, 20) == b

    def test_out_of_bounds_input(self):
        with pytest.raises(InvalidGeometryError):
            pad_and_clip(BoundingBox(0, 0, 30, 30), 4, 20, 20)

    def test_negative_pad(self):
        with pytest.raises(InvalidGeometryError):
            pad_and_clip(BoundingBox(0, 0, 3, 3), -1, 20, 20)


class TestCropPaste:
    def test_full_crop_is_copy(self):
        img = img4()
        out = crop(img, BoundingBox(0, 0, 4, 4))
        assert np.array_equal(out, img)
        out[0, 0] = 99
        assert img[0, 0, 0] == 0

    def test_inner_crop(self):
        img = img4()
        assert np.array_equal(crop(img, BoundingBox(1, 1, 3, 3)), img[1:3, 1:3])

    def test_crop_out_of_bounds(self):
        with pytest.raises(InvalidGeometryError):
            crop(img4(), BoundingBox(2, 2, 5, 4))

    def test_round_trip(self):
        img = img4()
        b = BoundingBox(1, 0, 4, 3)
        assert np.array_equal(paste(img, crop(img, b), b), img)

    def test_zero_patch_into_white(self):
        white = np.full((4, 4, 3), 255, np.uint8)
        out = paste(white, np.zeros((2, 2, 3), np.uint8), BoundingBox(1, 1, 3, 3))
        assert int(np.all(out == 0, axis=2).sum()) == 4
        assert np.all(white == 255)

    def test_last_writer_wins(self):
        img = np.zeros((6, 6, 3), np.uint8)
        img = paste(img, np.full((3, 3, 3), 10, np.uint8), BoundingBox(0, 0, 3, 3))
        img = paste(img, np.full((3, 3, 3), 20, np.uint8), BoundingBox(2, 2, 5, 5))
        assert img[2, 2, 0] == 20
        assert img[1, 1, 0] == 10

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidGeometryError):
            paste(img4(), np.zeros((2, 3, 3), np.uint8), BoundingBox(0, 0, 2, 2))


class TestResize:
    def test_constant(self):
        img = np.full((7, 5, 3), 37, np.uint8)
        for w, h in [(1, 1), (3, 11), (512, 512), (5, 7)]:
            out = resize(img, w, h)
            assert out.shape == (h, w, 3)
            assert np.all(out == 37)

    def test_same_size_is_exact(self, rng):
        img = rng.integers(0, 256, (9, 13, 3), dtype=np.uint8)
        assert np.array_equal(resize(img, 13, 9), img)

    def test_two_to_four_hand_computed(self):
        # source x = (i + 0.5) / 2 - 0.5 -> -0.25, 0.25, 0.75, 1.25, clamped to [0, 1]
        # values 0, 63.75, 191.25, 255 -> rounded 0, 64, 191, 255
        img = np.zeros((1, 2, 3), np.uint8)
        img[0, 1] = 255
        out = resize(img, 4, 1)
        assert out[0, :, 0].tolist() == [0, 64, 191, 255]
        assert np.all(np.diff(out[0, :, 0].astype(int)) >= 0)

    def test_half_rounds_away_from_zero(self):
        # downscale 2 -> 1 samples at x = 0.5: mean of 0 and 1 is 0.5 -> 1
        img = np.zeros((1, 2, 3), np.uint8)
        img[0, 1] = 1
        assert resize(img, 1, 1)[0, 0, 0] == 1

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(1, 12), st.integers(1, 12), st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**32 - 1)
    )
    def test_within_input_range(self, w, h, ow, oh, seed):
        img = np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)
        out = resize(img, ow, oh)
        assert out.min() >= img.min() and out.max() <= img.max()

    def test_bad_target(self):
        with pytest.raises(InvalidGeometryError):
            resize(img4(), 0, 3)


class TestSizeCategory:
    @pytest.mark.parametrize(
        "side, expected",
        [(30, SizeCategory.SMALL), (32, SizeCategory.MEDIUM), (96, SizeCategory.LARGE)],
    )
    def test_examples(self, side, expected):
        assert size_category(BoundingBox(0, 0, side, side)) is expected

    @pytest.mark.parametrize(
        "area, expected",
        [(1023, "S"), (1024, "M"), (9215, "M"), (9216, "L")],
    )
    def test_boundaries(self, area, expected):
        assert size_category(BoundingBox(0, 0, area, 1)).value == expected


class TestIO:
    def test_png_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, (10, 12, 3), dtype=np.uint8)
        write_image(img, tmp_path / "a" / "x.png")
        assert np.array_equal(read_image(tmp_path / "a" / "x.png"), img)

    def test_jpeg_decode_deterministic(self, tmp_path, rng):
        write_image(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8), tmp_path / "x.jpg")
        assert np.array_equal(read_image(tmp_path / "x.jpg"), read_image(tmp_path / "x.jpg"))

    def test_list_images(self, tmp_path):
        for rel in ["b/2.PNG", "a/1.jpg", "c.txt", "d.jpeg"]:
            (tmp_path / rel).parent.mkdir(parents=True, exist_ok=True)
            (tmp_path / rel).write_bytes(b"")
        assert list_images(tmp_path) == ["a/1.jpg", "b/2.PNG", "d.jpeg"]
