import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from salfer.cascade import HaarCascade, default_cascade_path, group_rectangles
from salfer.dataset import Emotion, Gaze
from salfer.face import FaceBox, NoFaceFound, crop_resize_gray, detect_face, preprocess_file
from salfer.imaging import load_image, resize_bilinear, save_gray_png, to_gray
from salfer.synthetic import render_face, two_face_scene


def test_luma_weights_and_rounding():
    px = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255], [10, 20, 30]]], np.uint8)
    # 76.245 -> 76, 149.685 -> 150, 29.07 -> 29, 2.99+11.74+3.42 = 18.15 -> 18
    assert to_gray(px).tolist() == [[76, 150, 29, 18]]


@given(st.integers(0, 255))
def test_gray_of_gray_is_identity(k):
    img = np.full((9, 11, 3), k, np.uint8)
    assert np.all(to_gray(img) == k)


def test_resize_identity_and_shapes():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (256, 256)).astype(np.uint8)
    out = crop_resize_gray(img, FaceBox.full_frame(img))
    assert out.dtype == np.uint8 and out.shape == (256, 256)
    assert np.array_equal(out, img)
    for shape in [(40, 90), (300, 200), (256, 1000)]:
        im = rng.integers(0, 256, shape + (3,)).astype(np.uint8)
        assert crop_resize_gray(im, FaceBox.full_frame(im)).shape == (256, 256)


def test_uniform_color_maps_to_uniform_gray():
    img = np.full((120, 80, 3), 173, np.uint8)
    out = crop_resize_gray(img, FaceBox(5, 7, 60, 90))
    assert np.all(out == 173)


def test_checkerboard_mean_preserved():
    board = ((np.indices((512, 512)) // 8).sum(axis=0) % 2 * 255).astype(np.uint8)
    out = crop_resize_gray(board, FaceBox.full_frame(board))
    # input mean is exactly 127.5; a 2:1 bilinear downsample averages pixel pairs
    assert abs(out.mean() - board.mean()) <= 1.0


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(8, 60), st.integers(8, 60))))
def test_resize_range_preserved(img):
    out = crop_resize_gray(img, FaceBox.full_frame(img))
    assert out.min() >= int(img.min()) - 1 and out.max() <= int(img.max()) + 1


def test_resize_bilinear_same_shape_returns_copy():
    a = np.arange(20.0).reshape(4, 5)
    b = resize_bilinear(a, 4, 5)
    assert np.array_equal(a, b) and b is not a


def test_degenerate_and_outside_boxes():
    img = np.zeros((50, 50), np.uint8)
    with pytest.raises(ValueError, match="smaller"):
        crop_resize_gray(img, FaceBox(0, 0, 7, 20))
    with pytest.raises(ValueError, match="inside"):
        crop_resize_gray(img, FaceBox(30, 30, 30, 30))


def test_faceBox_iou():
    a = FaceBox(0, 0, 10, 10)
    assert a.iou(a) == 1.0
    assert a.iou(FaceBox(5, 0, 10, 10)) == pytest.approx(50 / 150)
    assert a.iou(FaceBox(20, 20, 5, 5)) == 0.0


@pytest.mark.parametrize("emotion", list(Emotion))
def test_detects_synthetic_face(emotion):
    img, truth = render_face(emotion, subject=int(emotion) * 3, size=200, seed=int(emotion))
    box = detect_face(img)
    assert box.iou(FaceBox(*truth)) >= 0.5


@pytest.mark.parametrize("gaze", list(Gaze))
def test_detects_gaze_variants(gaze):
    img, truth = render_face(Emotion.NEUTRAL, subject=510, gaze=gaze, size=200, seed=4)
    assert detect_face(img).iou(FaceBox(*truth)) >= 0.5


def test_blank_image_has_no_face():
    with pytest.raises(NoFaceFound):
        detect_face(np.full((200, 200), 128, np.uint8), path="blank.png")
    with pytest.raises(NoFaceFound) as info:
        detect_face(np.zeros((120, 120, 3), np.uint8), path="x.png")
    assert info.value.path == "x.png"


def test_two_faces_larger_returned():
    img, small, large = two_face_scene(seed=0)
    box = detect_face(img)
    assert box.iou(FaceBox(*large)) >= 0.5
    assert box.iou(FaceBox(*small)) == 0.0


def test_detection_deterministic():
    img, _ = render_face(Emotion.HAPPY, subject=2, size=220, seed=9)
    assert detect_face(img) == detect_face(img.copy())


def test_preprocess_file_policies(tmp_path):
    blank = tmp_path / "blank.png"
    save_gray_png(blank, np.full((100, 100), 90, np.uint8))
    assert preprocess_file(blank, on_no_face="skip") is None
    full = preprocess_file(blank, on_no_face="full-frame")
    assert full.shape == (256, 256) and np.all(full == 90)
    with pytest.raises(NoFaceFound):
        preprocess_file(blank, on_no_face="raise")
    img, _ = render_face(Emotion.SAD, size=200, seed=3)
    from PIL import Image

    Image.fromarray(img).save(tmp_path / "face.png")
    a = preprocess_file(tmp_path / "face.png")
    assert a.shape == (256, 256) and a.dtype == np.uint8
    assert np.array_equal(a, preprocess_file(tmp_path / "face.png"))


def test_cascade_file_and_grouping():
    c = HaarCascade.load(default_cascade_path())
    assert (c.win_w, c.win_h) == (24, 24)
    assert len(c.stage_thr) == 25
    # clusters need more members than the threshold: four near-identical boxes survive, three do not
    four = [(10, 10, 40, 40), (11, 10, 40, 40), (10, 11, 41, 41), (11, 11, 40, 40)]
    three = [(200, 200, 40, 40), (201, 200, 40, 40), (200, 201, 40, 40)]
    out = group_rectangles(four + three, 3)
    assert len(out) == 1 and out[0][4] == 4
    assert abs(out[0][0] - 10) <= 1 and abs(out[0][2] - 40) <= 1


def test_load_image_modes(tmp_path):
    from PIL import Image

    Image.fromarray(np.zeros((5, 6, 3), np.uint8)).save(tmp_path / "c.png")
    Image.fromarray(np.zeros((5, 6), np.uint8)).save(tmp_path / "g.png")
    assert load_image(tmp_path / "c.png").shape == (5, 6, 3)
    assert load_image(tmp_path / "g.png").shape == (5, 6)
