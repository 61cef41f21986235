"""End-to-end smoke tests for the Python bindings."""

import math

import pytest

import winmatch


def test_interaction_schedule_growth():
    sched = winmatch.interaction_schedule(4)
    assert sched == [(1, 1), (4, 2), (16, 4), (64, 8)]


def test_gen_pair_shapes_and_determinism():
    pair = winmatch.gen_pair(32, 32, "translate", 8, seed=5)
    assert len(pair["a"]) == 32 and len(pair["a"][0]) == 32
    assert len(pair["homography"]) == 9
    assert pair["homography"][2] == 8.0  # pure x-shift
    again = winmatch.gen_pair(32, 32, "translate", 8, seed=5)
    assert again["a"] == pair["a"] and again["b"] == pair["b"]
    other = winmatch.gen_pair(32, 32, "translate", 8, seed=6)
    assert other["a"] != pair["a"]


def test_match_pair_recovers_translation():
    pair = winmatch.gen_pair(64, 64, "translate", 8, seed=21)
    result = winmatch.match_pair(pair["a"], pair["b"], features="handcrafted")
    assert result["num_coarse"] >= 20
    good = sum(
        1
        for m in result["matches"]
        if abs(m["bx"] - (m["ax"] + 8)) <= 1.0 and abs(m["by"] - m["ay"]) <= 1.0
    )
    assert good >= 0.9 * len(result["matches"])


def test_match_pair_learned_mode_runs():
    pair = winmatch.gen_pair(32, 32, "translate", 4, seed=3)
    result = winmatch.match_pair(
        pair["a"], pair["b"], features="learned", seed=11, match_threshold=0.0
    )
    assert result["num_coarse"] >= 0  # fresh model: structure, not quality
    assert set(result.keys()) >= {"coarse", "matches", "dropped_at_margin"}


def test_match_pair_rejects_bad_extents():
    pair = winmatch.gen_pair(32, 32, "translate", 4, seed=3)
    short = pair["a"][:24]
    with pytest.raises(Exception):
        winmatch.match_pair(short, short)


def test_window_partition_roundtrip():
    f = [[[float(10 * r + c), float(r - c)] for c in range(6)] for r in range(4)]
    windows = winmatch.window_partition(f, 2)
    assert len(windows) == 6 and len(windows[0]) == 4 and len(windows[0][0]) == 2
    assert windows[0][0] == [0.0, 0.0] and windows[0][3] == [11.0, 0.0]
    assert winmatch.window_reverse(windows, 4, 6) == f


def test_attention_identity_params_mixes_x2():
    x1 = [[[1.0, 0.0] for _ in range(4)] for _ in range(4)]
    x2 = [[[0.5, 2.0] for _ in range(4)] for _ in range(4)]
    out = winmatch.top_k_window_attention(x1, x2, side=2, top_k=1)
    # constant value rows make attention output constant regardless of weights
    for row in out:
        for cell in row:
            assert cell[0] == pytest.approx(0.5, abs=1e-12)
            assert cell[1] == pytest.approx(2.0, abs=1e-12)


def test_patch_confidence_and_mutual_nn():
    ga = [[[1.0, 0.0]], [[0.0, 1.0]]]  # two patches, orthogonal descriptors
    gb = [[[1.0, 0.0]], [[0.0, 1.0]]]
    conf = winmatch.patch_confidence(ga, gb, temperature=0.1)
    assert len(conf) == 2 and len(conf[0]) == 2
    total = sum(sum(row) for row in conf)
    assert 0.0 < total <= 2.0 + 1e-9
    picks = winmatch.mutual_nn(conf, threshold=0.0)
    assert [(a, b) for a, b, _ in picks] == [(0, 0), (1, 1)]


def test_estimate_homography_direct_and_ransac():
    pts = []
    for ax, ay in [(0, 0), (10, 0), (0, 10), (10, 10), (3, 7), (8, 2), (6, 9), (2, 4)]:
        pts.append([ax, ay, ax + 4, ay - 2])
    fit = winmatch.estimate_homography(pts, method="direct")
    h = fit["h"]
    assert h[2] / h[8] == pytest.approx(4.0, abs=1e-9)
    assert h[5] / h[8] == pytest.approx(-2.0, abs=1e-9)

    # junk follows a *different* translation, so it is consistently wrong
    junk = [
        [ax + 0.5, ay + 0.25, ax - 12.5, ay + 9.25]
        for ax, ay in [(1, 5), (9, 1), (2, 9), (7, 6), (5, 3), (0, 8)]
    ]
    rr = winmatch.estimate_homography(pts + junk, method="ransac", seed=9)
    assert len(rr["inliers"]) >= 8
    assert all(i < len(pts) for i in rr["inliers"])
    hr = rr["h"]
    assert hr[2] / hr[8] == pytest.approx(4.0, abs=1e-6)


def test_invalid_arguments_raise():
    with pytest.raises(Exception):
        winmatch.interaction_schedule(0)
    with pytest.raises(Exception):
        winmatch.gen_pair(32, 32, "sheared", 4, seed=1)
    with pytest.raises(Exception):
        winmatch.estimate_homography([[0, 0, 1]], method="direct")
    with pytest.raises(Exception):
        winmatch.estimate_homography([[0, 0, 1, 1]], method="warp")
