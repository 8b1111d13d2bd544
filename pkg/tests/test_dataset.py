from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from salfer.dataset import (CLASS_NAMES, DatasetError, Emotion, Gaze, ImageSample, ManifestError, Policy,
                            SplitManifest, dumps_manifest, load_manifest, make_split, save_manifest,
                            scan_dataset, split_sizes)
from salfer.synthetic import synthetic_samples


def test_emotion_order_and_parse():
    assert CLASS_NAMES == ("Angry", "Disgusted", "Fearful", "Happy", "Neutral", "Sad", "Surprised")
    assert len(Emotion) == 7
    assert Emotion.parse("  Surprise ") is Emotion.SURPRISED
    assert Emotion.parse("disgusted") is Emotion.DISGUSTED
    with pytest.raises(ValueError):
        Emotion.parse("contemptuous")


def test_scan_cfee_layout(cfee_small):
    rep = scan_dataset(cfee_small, "cfee")
    assert len(rep.samples) == 42
    assert rep.n_subjects == 6
    assert rep.class_counts == [6] * 7
    assert all(s.gaze is None for s in rep.samples)
    assert [s.image_path for s in rep.samples] == sorted(s.image_path for s in rep.samples)


def test_scan_rafd_layout_with_gaze_and_exclusions(rafd_small, tmp_path):
    rep = scan_dataset(rafd_small, "rafd")
    assert len(rep.samples) == 63 and rep.n_subjects == 3
    assert {s.gaze for s in rep.samples} == set(Gaze)
    # other camera angles and the contemptuous expression are outside scope
    root = tmp_path / "r"
    root.mkdir()
    src = next(rafd_small.glob("Rafd090_01_*_happy_frontal.png"))
    (root / src.name).write_bytes(src.read_bytes())
    (root / src.name.replace("Rafd090", "Rafd045")).write_bytes(src.read_bytes())
    (root / src.name.replace("happy", "contemptuous")).write_bytes(src.read_bytes())
    (root / "Rafd090_garbage.png").write_bytes(src.read_bytes())
    (root / "Rafd090_02_Caucasian_male_sad_left.png").write_bytes(b"not an image")
    rep = scan_dataset(root, "rafd")
    assert len(rep.samples) == 1
    assert rep.excluded == 2
    assert len(rep.skipped) == 2


def test_scan_errors(tmp_path):
    rep = scan_dataset(tmp_path, "cfee")
    assert rep.samples == []
    with pytest.raises(DatasetError):
        scan_dataset(tmp_path / "nope", "cfee")
    with pytest.raises(DatasetError, match="known"):
        scan_dataset(tmp_path, "jaffe")


def test_split_size_rule():
    # floor(0.7*1610)=1127, floor(0.152*1610)=244 (.72), floor(0.148*1610)=238 (.28): val takes the spare image
    assert split_sizes(1610, (0.70, 0.152, 0.148)) == (1127, 245, 238)
    assert split_sizes(1407, (0.7, 0.15, 0.15)) == (985, 211, 211)  # 984.9 / 211.05 / 211.05
    assert split_sizes(10, (1 / 3, 1 / 3, 1 / 3)) == (4, 3, 3)  # tie goes to train
    assert split_sizes(0, (0.7, 0.15, 0.15)) == (0, 0, 0)


@given(st.integers(1, 3000), st.floats(0.05, 0.9), st.floats(0.0, 1.0))
def test_split_sizes_sum_and_closeness(n, a, frac):
    b = (1 - a) * frac
    ratios = (a, b, 1 - a - b)
    sizes = split_sizes(n, ratios)
    assert sum(sizes) == n
    assert all(abs(s - r * n) < 1 for s, r in zip(sizes, ratios))


def test_cfee_and_rafd_split_presets():
    cfee = synthetic_samples("cfee")
    rafd = synthetic_samples("rafd")
    assert len(cfee) == 1610 and len(rafd) == 1407
    assert make_split(cfee, (0.70, 0.152, 0.148), "by-image", 0).sizes == (1127, 245, 238)
    m = make_split(rafd, (0.7, 0.15, 0.15), "by-subject", 0)
    assert m.sizes == (987, 210, 210)


def test_full_train_and_errors():
    s = synthetic_samples("cfee", subjects=2)
    m = make_split(s, policy="full-train")
    assert m.train == tuple(s) and m.val == () and m.test == ()
    with pytest.raises(DatasetError):
        make_split([], policy="by-image")
    with pytest.raises(DatasetError, match="subjects"):
        make_split(synthetic_samples("rafd", subjects=2), (0.4, 0.3, 0.3), "by-subject")
    with pytest.raises(ValueError):
        make_split(s, (0.5, 0.5, 0.5))


def test_split_determinism_and_seed_sensitivity():
    s = synthetic_samples("rafd", subjects=10)
    a = dumps_manifest(make_split(s, (0.7, 0.15, 0.15), "by-subject", 7))
    b = dumps_manifest(make_split(s, (0.7, 0.15, 0.15), "by-subject", 7))
    c = dumps_manifest(make_split(s, (0.7, 0.15, 0.15), "by-subject", 8))
    assert a == b and a != c


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["by-image", "by-subject"]))
def test_partition_property(seed, policy):
    s = synthetic_samples("rafd", subjects=9)
    m = make_split(s, (0.6, 0.2, 0.2), policy, seed)
    assert sorted(m.all_samples()) == s
    if policy == "by-subject":
        subj = [{x.subject_id for x in part} for part in (m.train, m.val, m.test)]
        assert not (subj[0] & subj[1] or subj[0] & subj[2] or subj[1] & subj[2])


def test_manifest_round_trip(tmp_path):
    s = synthetic_samples("rafd", subjects=4)
    m = make_split(s, (0.5, 0.25, 0.25), "by-subject", 3)
    save_manifest(m, tmp_path / "m.csv")
    back = load_manifest(tmp_path / "m.csv")
    assert back == m
    assert dumps_manifest(back) == (tmp_path / "m.csv").read_text()
    assert len(back.missing) == len(s)  # the in-memory paths do not exist


def test_manifest_errors(tmp_path):
    s = synthetic_samples("cfee", subjects=2)
    m = make_split(s, (0.5, 0.25, 0.25), "by-image", 0)
    text = dumps_manifest(m)
    lines = text.splitlines()
    # duplicate a train row into test
    row = next(ln for ln in lines if ",train," in ln)
    bad = tmp_path / "dup.csv"
    bad.write_text(text + row.replace(",train,", ",test,") + "\n")
    with pytest.raises(ManifestError, match="more than one split"):
        load_manifest(bad)
    bad.write_text(text + "cfee,S000,Joyful,,train,/x.png\n")
    with pytest.raises(ManifestError, match=f":{len(lines) + 1}:"):
        load_manifest(bad)
    bad.write_text("\n".join(lines[:3]) + "\nwrong,header\n")
    with pytest.raises(ManifestError, match="header"):
        load_manifest(bad)


def test_manifest_missing_image_flag(cfee_small, tmp_path):
    import shutil

    root = tmp_path / "copy"
    shutil.copytree(cfee_small, root)
    m = make_split(scan_dataset(root, "cfee").samples, (0.5, 0.25, 0.25), "by-image", 0)
    save_manifest(m, tmp_path / "m.csv")
    victim = m.test[0].image_path
    Path(victim).unlink()
    back = load_manifest(tmp_path / "m.csv")
    assert back.missing == (victim,)
    assert back == m


def test_by_subject_validation():
    a = ImageSample("/a.png", "d", "s1", Emotion.HAPPY)
    b = ImageSample("/b.png", "d", "s1", Emotion.SAD)
    with pytest.raises(ManifestError, match="subject"):
        SplitManifest((a,), (b,), (), (0.5, 0.5, 0.0), Policy.BY_SUBJECT, 0)
    SplitManifest((a,), (b,), (), (0.5, 0.5, 0.0), Policy.BY_IMAGE, 0)


def test_output_key():
    s = ImageSample("/data/x/S001_happy.jpg", "cfee", "S001", Emotion.HAPPY)
    assert s.output_key() == "cfee/Happy/S001_happy.png"
    assert np.all([Emotion(i).label == n for i, n in enumerate(CLASS_NAMES)])
