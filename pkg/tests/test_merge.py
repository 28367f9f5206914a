import random

import pytest
from hypothesis import given, settings, strategies as st

from mapkurator.merge import MergedDetection, PatchMerger, bbox_iou, dedupe, to_map_coords
from mapkurator.raster import PatchWindow, plan_tiles
from mapkurator.spotter import GroundTruthLabel, OracleSpotter, TextDetection, resample_polygon


def box_det(x0, y0, x1, y1, score=1.0, prov=(0, 0, 0), text="T"):
    ring = tuple(resample_polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)]))
    return MergedDetection(ring, text, score, prov)


def test_identity_shift():
    det = TextDetection(resample_polygon([(0, 0), (4, 0), (4, 2), (0, 2)]), "A", 0.7, 1, 2, 3)
    m = to_map_coords(det, PatchWindow(0, 0, 0, 0, 10, 10))
    assert m.polygon_map_px == det.polygon_px
    assert (m.text, m.score, m.provenance) == ("A", 0.7, (1, 2, 3))


def test_translation_and_inverse():
    poly = [(10.0, 20.0)] + resample_polygon([(10, 20), (30, 20), (30, 40), (10, 40)])[1:]
    det = TextDetection(poly, "A", 0.5)
    m = to_map_coords(det, PatchWindow(0, 1, 1000, 0, 1000, 1000))
    assert m.polygon_map_px[0] == (1010.0, 20.0)
    back = [(x - 1000, y - 0) for x, y in m.polygon_map_px]
    assert back == list(det.polygon_px)


def test_iou_examples():
    a = box_det(0, 0, 10, 10)
    assert bbox_iou(a, a) == 1.0
    assert bbox_iou(a, box_det(20, 20, 30, 30)) == 0.0
    # hand computed: intersection 5x5, union 100 + 100 - 25
    assert bbox_iou(a, box_det(5, 5, 15, 15)) == pytest.approx(25 / 175)


def test_identical_duplicates_keep_higher_score():
    hi = box_det(0, 0, 10, 10, 0.9, (0, 1, 0))
    lo = box_det(0, 0, 10, 10, 0.8, (0, 0, 0))
    assert dedupe([lo, hi]) == [hi]


def test_disjoint_both_survive():
    a, b = box_det(0, 0, 10, 10, prov=(0, 0, 0)), box_det(50, 0, 60, 10, prov=(0, 0, 1))
    assert dedupe([b, a]) == [a, b]


def test_three_box_example():
    a = box_det(0, 0, 10, 10, 0.9, (0, 0, 0))
    b = box_det(5, 0, 15, 10, 0.8, (0, 0, 1))
    c = box_det(20, 0, 30, 10, 0.7, (0, 0, 2))
    assert bbox_iou(a, b) == pytest.approx(50 / 150)
    assert dedupe([a, b, c], 0.3) == [a, c]


def test_equal_scores_tie_break_on_provenance():
    first = box_det(0, 0, 10, 10, 0.5, (0, 0, 4), text="ONE")
    second = box_det(0, 0, 10, 10, 0.5, (1, 0, 0), text="TWO")
    assert dedupe([second, first]) == [first]


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(1, 20), st.integers(1, 20),
                          st.sampled_from([0.2, 0.5, 0.8, 1.0])), min_size=0, max_size=15),
       st.floats(0.05, 1.0), st.randoms())
def test_dedupe_order_independent_subset(boxes, thr, rnd):
    dets = [box_det(x, y, x + w, y + h, s, (0, 0, i)) for i, (x, y, w, h, s) in enumerate(boxes)]
    out = dedupe(dets, thr)
    shuffled = list(dets)
    rnd.shuffle(shuffled)
    assert dedupe(shuffled, thr) == out
    assert all(d in dets for d in out)
    for i, a in enumerate(out):
        for b in out[i + 1:]:
            assert bbox_iou(a, b) < thr


def _truth(n=40, seed=2):
    rng = random.Random(seed)
    labels = []
    for i in range(n):
        x, y = rng.uniform(0, 2800), rng.uniform(0, 1900)
        labels.append(GroundTruthLabel(f"L{i}", [(x, y), (x + 150, y), (x + 150, y + 30), (x, y + 30)]))
    return labels


def _merged(truth, stride):
    spotter = OracleSpotter(truth)
    out = []
    for w in plan_tiles(3000, 2000, 1000, stride):
        for d in spotter.spot(None, w):
            out.append(to_map_coords(TextDetection(d.polygon_px, d.text, d.score, w.row_index, w.col_index,
                                                   len(out)), w))
    return out


def test_dedupe_is_identity_without_overlap():
    merged = _merged(_truth(), 1000)
    assert sorted(dedupe(merged), key=lambda d: d.provenance) == sorted(merged, key=lambda d: d.provenance)


def test_half_stride_duplicates_collapse():
    truth = _truth()
    merged = _merged(truth, 500)
    assert len(merged) > len(truth)
    out = dedupe(merged, 0.5)
    assert sorted(d.text for d in out) == sorted(t.text for t in truth)


def test_patch_merger_estimator():
    w = PatchWindow(0, 1, 1000, 0, 1000, 1000)
    det = TextDetection(resample_polygon([(0, 0), (4, 0), (4, 2), (0, 2)]), "A", 0.7, 0, 1, 0)
    merger = PatchMerger(iou_threshold=0.4)
    assert merger.get_params() == {"iou_threshold": 0.4}
    (m,) = merger.fit_transform([(det, w), (det, w)])
    assert m.polygon_map_px[0] == (1000.0, 0.0)
