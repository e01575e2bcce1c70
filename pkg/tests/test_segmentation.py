import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ecoscope.segmentation import SegmentationParams, as_image, felzenszwalb_segment, segment_batch


def gray(values):
    v = np.asarray(values, dtype=np.uint8)
    return np.repeat(v[..., None], 3, axis=2)


def naive_segment(image, tau):
    """Reference merge loop over explicit pixel sets (no union-find)."""
    img = np.asarray(image, dtype=np.float64)
    h, w, _ = img.shape
    edges = []
    for r in range(h):
        for c in range(w):
            u = r * w + c
            if c + 1 < w:
                edges.append((float(np.linalg.norm(img[r, c] - img[r, c + 1])), u, u + 1))
            if r + 1 < h:
                edges.append((float(np.linalg.norm(img[r, c] - img[r + 1, c])), u, u + w))
    edges.sort()
    comp = {p: frozenset([p]) for p in range(h * w)}
    internal = {frozenset([p]): 0.0 for p in range(h * w)}
    for wt, u, v in edges:
        a, b = comp[u], comp[v]
        if a == b:
            continue
        if wt <= min(internal[a] + tau / len(a), internal[b] + tau / len(b)):
            merged = a | b
            internal[merged] = max(internal.pop(a), internal.pop(b), wt)
            for p in merged:
                comp[p] = merged
    labels = np.empty(h * w, dtype=np.int64)
    names = {}
    for p in range(h * w):
        labels[p] = names.setdefault(comp[p], len(names))
    return labels.reshape(h, w)


def count_regions(labels):
    """Number of 4-connected same-label regions, by flood fill."""
    h, w = labels.shape
    seen = np.zeros_like(labels, dtype=bool)
    n = 0
    for r in range(h):
        for c in range(w):
            if seen[r, c]:
                continue
            n += 1
            q = deque([(r, c)])
            seen[r, c] = True
            while q:
                y, x = q.popleft()
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and not seen[yy, xx] and labels[yy, xx] == labels[y, x]:
                        seen[yy, xx] = True
                        q.append((yy, xx))
    return n


def test_uniform_image_is_one_part():
    seg = felzenszwalb_segment(np.full((6, 7, 3), 90, dtype=np.uint8))
    assert seg.num_parts == 1
    assert (seg.labels == 0).all()


def test_two_halves():
    img = np.zeros((4, 4, 3), dtype=np.uint8)
    img[:, 2:] = 255
    seg = felzenszwalb_segment(img, SegmentationParams(tau=10))
    assert seg.num_parts == 2
    np.testing.assert_array_equal(seg.labels, [[0, 0, 1, 1]] * 4)


# Hand trace with gray levels (edge weight = level difference * sqrt(3)):
# zero-weight edges form {0-block}, {1-strip}, {20-block}, {40-row}.
# 0|1 edges weigh 1.73 <= min(0 + 10/4, 0 + 10/2) = 2.5 -> merge.
# 1|20, 0|20, 20|40 and 1|40 all exceed every threshold.
TRACE_IMAGE = [[0, 0, 20, 20], [0, 0, 20, 20], [1, 1, 20, 20], [40, 40, 40, 40]]


def test_hand_traced_three_regions():
    seg = felzenszwalb_segment(gray(TRACE_IMAGE), SegmentationParams(tau=10))
    expected = [[0, 0, 1, 1], [0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 2, 2]]
    np.testing.assert_array_equal(seg.labels, expected)
    np.testing.assert_array_equal(seg.labels, naive_segment(gray(TRACE_IMAGE), 10))


def test_hand_trace_small_tau_keeps_strip_apart():
    # tau = 1: threshold min(1/4, 1/2) = 0.25 < 1.73
    seg = felzenszwalb_segment(gray(TRACE_IMAGE), SegmentationParams(tau=1))
    expected = [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 1, 1], [3, 3, 3, 3]]
    np.testing.assert_array_equal(seg.labels, expected)


@settings(max_examples=60, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3)),
              elements=st.sampled_from([0, 3, 8, 40, 200])),
       st.sampled_from([0.0, 1.0, 10.0, 50.0]))
def test_matches_naive_reference(image, tau):
    seg = felzenszwalb_segment(image, SegmentationParams(tau=tau))
    np.testing.assert_array_equal(seg.labels, naive_segment(image, tau))


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(3))),
       st.integers(1, 6))
def test_partition_invariants(image, min_size):
    seg = felzenszwalb_segment(image, SegmentationParams(tau=10, min_size=min_size))
    labels = seg.labels
    assert labels.shape == image.shape[:2]
    assert set(np.unique(labels)) == set(range(seg.num_parts))
    # each label is one connected region
    assert count_regions(labels) == seg.num_parts
    sizes = np.bincount(labels.ravel())
    if labels.size >= min_size:
        assert sizes.min() >= min_size
    # first-pixel scan order numbering
    firsts = [np.flatnonzero(labels.ravel() == k)[0] for k in range(seg.num_parts)]
    assert firsts == sorted(firsts)


def test_tau_extremes():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
    assert felzenszwalb_segment(img, SegmentationParams(tau=math.inf)).num_parts == 1
    # all neighbours differ -> every pixel alone at tau = 0
    checker = gray((np.indices((5, 5)).sum(0) % 2) * 100)
    assert felzenszwalb_segment(checker, SegmentationParams(tau=0)).num_parts == 25


def test_min_size_merges_small_components():
    img = gray([[0, 0, 0, 0], [0, 250, 0, 0], [0, 0, 0, 0]])
    assert felzenszwalb_segment(img).num_parts == 2
    seg = felzenszwalb_segment(img, SegmentationParams(min_size=2))
    assert seg.num_parts == 1


def test_deterministic():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 40, (20, 20, 3), dtype=np.uint8)
    a = felzenszwalb_segment(img)
    b = felzenszwalb_segment(img.copy())
    np.testing.assert_array_equal(a.labels, b.labels)


def test_smoothing_reduces_parts():
    rng = np.random.default_rng(4)
    img = rng.integers(0, 30, (16, 16, 3), dtype=np.uint8)
    raw = felzenszwalb_segment(img).num_parts
    smooth = felzenszwalb_segment(img, SegmentationParams(smoothing_sigma=1.0)).num_parts
    assert smooth <= raw


def test_segment_batch():
    img = gray(TRACE_IMAGE)
    out = segment_batch([img, img.copy()])
    np.testing.assert_array_equal(out[0].labels, out[1].labels)
    assert segment_batch([]) == []
    imgs = [gray(TRACE_IMAGE), np.zeros((3, 3, 3), np.uint8)]
    assert sum(s.num_parts for s in segment_batch(imgs)) == 3 + 1


@pytest.mark.parametrize("bad", [np.zeros((4, 4)), np.zeros((4, 4, 4)), np.zeros((0, 3, 3)),
                                 np.full((2, 2, 3), 300)])
def test_rejects_invalid_images(bad):
    with pytest.raises(ValueError):
        as_image(bad)


@pytest.mark.parametrize("kw", [dict(tau=-1), dict(min_size=0), dict(smoothing_sigma=-0.5)])
def test_rejects_invalid_params(kw):
    with pytest.raises(ValueError):
        SegmentationParams(**kw)
