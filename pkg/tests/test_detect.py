import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kprefine import detect
from kprefine.detect import DetectorConfig, load_external_keypoints, select_top_n
from kprefine.errors import MissingField, ParseError, UnsupportedDetector
from kprefine.keypoints import Keypoint


def naive_harris(img, k=0.06, sigma=1.0):
    """Brute-force response map: explicit Sobel + Gaussian window loops."""
    h, w = img.shape
    pad = np.pad(img, 1, mode="reflect")
    ix = np.zeros_like(img)
    iy = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            win = pad[y:y + 3, x:x + 3]
            ix[y, x] = (win[0, 2] + 2 * win[1, 2] + win[2, 2]
                        - win[0, 0] - 2 * win[1, 0] - win[2, 0]) / 8.0
            iy[y, x] = (win[2, 0] + 2 * win[2, 1] + win[2, 2]
                        - win[0, 0] - 2 * win[0, 1] - win[0, 2]) / 8.0
    r = int(np.ceil(4 * sigma))
    ax = np.arange(-r, r + 1)
    g1 = np.exp(-ax * ax / (2.0 * sigma * sigma))
    g1 /= g1.sum()
    kernel = np.outer(g1, g1)

    def window(channel):
        padc = np.pad(channel, r, mode="reflect")
        out = np.zeros_like(channel)
        for y in range(h):
            for x in range(w):
                out[y, x] = np.sum(padc[y:y + 2 * r + 1, x:x + 2 * r + 1]
                                   * kernel)
        return out

    ixx = window(ix * ix)
    ixy = window(ix * iy)
    iyy = window(iy * iy)
    return (ixx * iyy - ixy * ixy) - k * (ixx + iyy) ** 2


class TestDetect:
    def test_constant_image_empty(self):
        img = np.full((32, 32), 0.7)
        assert detect.detect(img, DetectorConfig(kind="harris")) == []
        assert detect.detect(img, DetectorConfig(kind="shi_tomasi")) == []

    def test_unsupported_kind(self):
        with pytest.raises(UnsupportedDetector):
            detect.detect(np.zeros((8, 8)), DetectorConfig(kind="external"))

    def test_harris_square_corners(self, corner_square):
        img, corners = corner_square
        # oracle: the brute-force response map's top maxima sit within 1 px
        # of the geometric corners
        resp = naive_harris(img)
        oracle_peaks = []
        for cx, cy in corners:
            region = resp[int(cy) - 3:int(cy) + 4, int(cx) - 3:int(cx) + 4]
            dy, dx = np.unravel_index(np.argmax(region), region.shape)
            oracle_peaks.append((int(cx) - 3 + dx, int(cy) - 3 + dy))
        for (px, py), (cx, cy) in zip(oracle_peaks, corners):
            assert np.hypot(px - cx, py - cy) <= 1.0

        kps = detect.detect(img, DetectorConfig(kind="harris"))
        top4 = select_top_n(kps, 4)
        found = {tuple(np.round([p.x, p.y]).astype(int)) for p in top4}
        for cx, cy in corners:
            assert any(np.hypot(p.x - cx, p.y - cy) <= 1.0 for p in top4), \
                f"no detection within 1 px of corner ({cx},{cy}); got {found}"

    def test_shi_tomasi_square_corners(self, corner_square):
        img, corners = corner_square
        kps = detect.detect(img, DetectorConfig(kind="shi_tomasi"))
        top4 = select_top_n(kps, 4)
        for cx, cy in corners:
            assert any(np.hypot(p.x - cx, p.y - cy) <= 1.0 for p in top4)

    def test_intensity_offset_invariance(self, corner_square):
        img, _ = corner_square
        base = detect.detect(img, DetectorConfig())
        shifted = detect.detect(img + 0.05, DetectorConfig())
        assert len(base) == len(shifted)
        for a, b in zip(base, shifted):
            assert abs(a.x - b.x) < 1e-6
            assert abs(a.y - b.y) < 1e-6

    def test_subpixel_within_half_pixel(self, corner_square):
        img, _ = corner_square
        sub = detect.detect(img, DetectorConfig(subpixel=True))
        grid = detect.detect(img, DetectorConfig(subpixel=False))
        assert len(sub) == len(grid)
        gridpos = {(p.x, p.y) for p in grid}
        for p in sub:
            assert any(max(abs(p.x - gx), abs(p.y - gy)) <= 0.5
                       for gx, gy in gridpos)

    def test_valid_mask_filters(self, corner_square):
        img, corners = corner_square
        mask = np.ones_like(img, dtype=bool)
        mask[:, :32] = False  # reject the left half
        kps = detect.detect(img, DetectorConfig(), valid_mask=mask)
        assert kps and all(p.x >= 32 - 0.5 for p in kps)


class TestSelectTopN:
    def test_orders_by_score(self):
        kps = [Keypoint(0, 0, 5.0), Keypoint(1, 0, 2.0), Keypoint(2, 0, 9.0)]
        top = select_top_n(kps, 2)
        assert [p.score for p in top] == [9.0, 5.0]

    def test_underfull_returns_all(self):
        kps = [Keypoint(0, 0, 1.0), Keypoint(1, 0, 2.0)]
        assert len(select_top_n(kps, 10)) == 2

    def test_tie_breaks_by_y_then_x(self):
        # equal scores at (y=1, x=1) and (y=0, x=2): the y=0 one wins
        kps = [Keypoint(1.0, 1.0, 3.0), Keypoint(2.0, 0.0, 3.0)]
        top = select_top_n(kps, 1)
        assert top[0].y == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100),
                              st.floats(-5, 5)), max_size=30),
           st.integers(0, 10))
    def test_idempotent(self, triples, n):
        kps = [Keypoint(x, y, s) for x, y, s in triples]
        once = select_top_n(kps, n)
        assert select_top_n(once, n) == once


class TestExternalKeypoints:
    def test_single_record(self, tmp_path):
        path = tmp_path / "a.warp0.kpts.jsonl"
        path.write_text('{"x": 1.5, "y": 2.5, "score": 0.9}\n')
        kps = load_external_keypoints(path, warp_id=4)
        assert kps == [Keypoint(1.5, 2.5, 0.9, 4)]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "e.kpts.jsonl"
        path.write_text("")
        assert load_external_keypoints(path, 0) == []

    def test_missing_score(self, tmp_path):
        path = tmp_path / "m.kpts.jsonl"
        path.write_text('{"x": 1.0, "y": 2.0}\n')
        with pytest.raises(MissingField):
            load_external_keypoints(path, 0)

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "b.kpts.jsonl"
        path.write_text('{"x": 1, "y": 2, "score": 3}\nnot json\n')
        with pytest.raises(ParseError) as err:
            load_external_keypoints(path, 0)
        assert err.value.line == 2

    def test_descriptor_roundtrip(self, tmp_path):
        path = tmp_path / "d.kpts.jsonl"
        rec = {"x": 1.0, "y": 2.0, "score": 0.5, "desc": [0.1, 0.2]}
        path.write_text(json.dumps(rec) + "\n")
        kps = load_external_keypoints(path, 0)
        assert kps[0].desc == (0.1, 0.2)
