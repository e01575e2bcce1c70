import json

import numpy as np
import pytest

from ecoscope import scene_gen as sg
from ecoscope.scene_gen import (
    GenerationError,
    ObjectTemplate,
    SceneSpec,
    gen_multipart_scene,
    gen_occluded_scene,
    gen_ood_scene,
    gen_tetromino_scene,
    multipart_library,
    read_image,
    read_manifest,
    read_sample_masks,
    render_texture,
    tetromino_library,
    write_dataset,
)


def check_sample(s, min_visibility=1.0):
    fg = np.zeros(s.image.shape[:2], dtype=int)
    for m, a in zip(s.modal_masks, s.amodal_masks):
        assert not (m & ~a).any()  # modal within amodal
        assert m.sum() >= min_visibility * a.sum()
        fg += m
    assert fg.max() <= 1  # modal masks disjoint
    assert sorted(s.depth_order) == list(range(len(s.modal_masks)))


def test_tetromino_library():
    lib = tetromino_library()
    assert len(lib) == 17
    shapes = {frozenset(map(tuple, t.offsets)) for t in lib}
    assert len(shapes) == 17
    for t in tetromino_library(tile_size=2):
        assert len(t.parts) == 1 and len(t.offsets) == 16
    assert len(sg.TETROMINO_COLORS) == 6


def test_tetromino_scene():
    s = gen_tetromino_scene(SceneSpec((35, 35), 3, tetromino_library(), rng_seed=7))
    assert s.image.shape == (35, 35, 3)
    assert len(s.modal_masks) == 3
    assert all(m.sum() == 4 * 25 for m in s.modal_masks)
    check_sample(s)
    for m, a in zip(s.modal_masks, s.amodal_masks):
        np.testing.assert_array_equal(m, a)
    for m in s.modal_masks:
        assert tuple(s.image[m][0]) in sg.TETROMINO_COLORS
        assert len(np.unique(s.image[m], axis=0)) == 1


def test_single_object_two_pixel_classes():
    s = gen_tetromino_scene(SceneSpec((35, 35), 1, tetromino_library(), rng_seed=3))
    assert len(np.unique(s.image.reshape(-1, 3), axis=0)) == 2


def test_determinism():
    spec = SceneSpec((64, 64), 5, multipart_library(), rng_seed=99)
    a, b = gen_multipart_scene(spec), gen_multipart_scene(spec)
    np.testing.assert_array_equal(a.image, b.image)
    assert a.object_ids == b.object_ids and a.depth_order == b.depth_order
    for x, y in zip(a.amodal_masks, b.amodal_masks):
        np.testing.assert_array_equal(x, y)


def test_multipart_library():
    lib = multipart_library()
    assert len(lib) == 10
    assert all(2 <= len(t.parts) <= 4 for t in lib)
    colors = [c for t in lib for c, _ in t.parts]
    assert len(set(colors)) == len(colors)  # part colours are globally distinct


def test_multipart_scene_parts_are_color_regions():
    from scipy import ndimage

    lib = {t.template_id: t for t in multipart_library()}
    s = gen_multipart_scene(SceneSpec((64, 64), 5, list(lib.values()), rng_seed=5))
    assert len(s.modal_masks) == 5
    check_sample(s)
    for m, tid, anchor in zip(s.amodal_masks, s.object_ids, s.anchors):
        tpl = lib[tid]
        expected = np.zeros_like(m)
        offs = tpl.offsets + np.asarray(anchor)
        expected[offs[:, 0], offs[:, 1]] = True
        np.testing.assert_array_equal(m, expected)
        colors = np.unique(s.image[m], axis=0)
        assert 2 <= len(colors) <= 4
        for c in colors:
            _, n = ndimage.label(m & (s.image == c).all(-1))
            assert n == 1


def test_single_part_template():
    tpl = ObjectTemplate(0, [((200, 10, 10), frozenset((r, c) for r in range(3) for c in range(4)))], "block")
    s = gen_multipart_scene(SceneSpec((20, 20), 2, [tpl], rng_seed=1))
    for m in s.modal_masks:
        assert m.sum() == 12


def test_template_ids_closed_over_library():
    ids = {t.template_id for t in multipart_library()}
    for i in range(100):
        s = sg.generate_one("multipart", i)
        assert set(s.object_ids) <= ids


def test_template_validation():
    with pytest.raises(ValueError):
        ObjectTemplate(0, [], "empty")
    with pytest.raises(ValueError):
        ObjectTemplate(0, [((1, 1, 1), frozenset({(0, 0), (0, 2)}))], "split")
    with pytest.raises(ValueError):
        ObjectTemplate(0, [((1, 1, 1), frozenset({(0, 0)})), ((2, 2, 2), frozenset({(0, 0)}))], "overlap")


def test_occluded_visibility_1000_scenes():
    lib = multipart_library()
    worst = 1.0
    occluded = 0
    for i in range(1000):
        s = gen_occluded_scene(SceneSpec((64, 64), 5, lib, min_visibility=0.25, rng_seed=i))
        check_sample(s, 0.25)
        for m, a in zip(s.modal_masks, s.amodal_masks):
            worst = min(worst, m.sum() / a.sum())
            occluded += int(m.sum() < a.sum())
    assert worst >= 0.25
    assert occluded > 0  # occlusion actually happens


def test_occluded_depth_order_front_wins():
    s = gen_occluded_scene(SceneSpec((64, 64), 5, multipart_library(), min_visibility=0.25, rng_seed=4))
    owner = np.full((64, 64), -1)
    for k in s.depth_order:
        owner[s.amodal_masks[k]] = k
    for k, m in enumerate(s.modal_masks):
        np.testing.assert_array_equal(m, owner == k)


def test_occluded_no_overlap_keeps_modal_equal_amodal():
    small = ObjectTemplate(0, [((250, 0, 0), frozenset({(0, 0), (0, 1)}))], "dash")
    s = gen_occluded_scene(SceneSpec((40, 40), 2, [small], min_visibility=0.5, rng_seed=2))
    if not (s.amodal_masks[0] & s.amodal_masks[1]).any():
        for m, a in zip(s.modal_masks, s.amodal_masks):
            np.testing.assert_array_equal(m, a)


def test_occluded_rejects_bad_visibility():
    with pytest.raises(ValueError):
        gen_occluded_scene(SceneSpec((64, 64), 5, multipart_library(), min_visibility=1.0))
    with pytest.raises(ValueError):
        gen_occluded_scene(SceneSpec((64, 64), 5, multipart_library(), min_visibility=0.2))
    with pytest.raises(ValueError):
        SceneSpec(min_visibility=0)


def test_crowded_scene_raises():
    big = ObjectTemplate(0, [((9, 9, 9), frozenset((r, c) for r in range(8) for c in range(8)))], "big")
    with pytest.raises(GenerationError):
        gen_multipart_scene(SceneSpec((10, 10), 2, [big], rng_seed=0))
    with pytest.raises(GenerationError):
        gen_multipart_scene(SceneSpec((5, 5), 1, [big], rng_seed=0))


def test_ood_layout_matches_clean():
    lib = multipart_library()
    clean = gen_multipart_scene(SceneSpec((64, 64), 5, lib, rng_seed=21))
    ood = gen_ood_scene(SceneSpec((64, 64), 5, lib, background=0, rng_seed=21))
    for a, b in zip(clean.amodal_masks, ood.amodal_masks):
        np.testing.assert_array_equal(a, b)
    fg = np.any(clean.modal_masks, axis=0)
    np.testing.assert_array_equal(clean.image[fg], ood.image[fg])
    assert (clean.image[~fg] != ood.image[~fg]).any()


def test_ood_bounds():
    lib = multipart_library()
    with pytest.raises(ValueError):
        gen_ood_scene(SceneSpec((64, 64), 5, lib, background=15))
    with pytest.raises(ValueError):
        gen_ood_scene(SceneSpec((64, 64), 5, lib, background=(0, 0, 0)))
    with pytest.raises(ValueError):
        render_texture(-1, (8, 8), np.random.default_rng(0))


def test_fifteen_distinct_textures():
    hists = []
    for t in range(sg.NUM_TEXTURES):
        img = render_texture(t, (64, 64), np.random.default_rng(t))
        assert img.shape == (64, 64, 3) and img.dtype == np.uint8
        h = np.concatenate([np.histogram(img[..., c], bins=32, range=(0, 256))[0] for c in range(3)])
        hists.append(h / h.sum())
    for i in range(len(hists)):
        for j in range(i + 1, len(hists)):
            assert np.abs(hists[i] - hists[j]).sum() > 0.05, (i, j)


def test_write_and_read_round_trip(tmp_path):
    samples = sg.generate_dataset("occluded", 6, 3)
    manifest = write_dataset(samples, tmp_path, "occluded")
    assert len(list((tmp_path / "images").glob("*.png"))) == 6
    assert read_manifest(tmp_path) == json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["image_size"] == [64, 64]
    for s, entry in zip(samples, manifest["samples"]):
        assert entry["template_ids"] == s.object_ids
        assert entry["seed"] == s.seed
        assert entry["background"] == {"type": "solid", "rgb": [0, 0, 0]}
        for f in [entry["files"]["image"], entry["files"]["modal"], *entry["files"]["amodal"]]:
            assert (tmp_path / f).exists()
        np.testing.assert_array_equal(read_image(tmp_path, entry["id"]), s.image)
        modal, amodal = read_sample_masks(tmp_path, entry)
        np.testing.assert_array_equal(modal, s.modal_index_map())
        for a, b in zip(amodal, s.amodal_masks):
            np.testing.assert_array_equal(a, b)


def test_ood_manifest_records_texture(tmp_path):
    manifest = write_dataset(sg.generate_dataset("ood", 2, 0, texture=4), tmp_path, "ood")
    assert all(e["background"] == {"type": "texture", "id": 4} for e in manifest["samples"])


def test_empty_dataset(tmp_path):
    manifest = write_dataset([], tmp_path)
    assert manifest["samples"] == []
    assert read_manifest(tmp_path)["samples"] == []


def test_manifest_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_manifest(tmp_path)
    (tmp_path / "manifest.json").write_text(json.dumps({"version": 99, "samples": []}))
    with pytest.raises(ValueError):
        read_manifest(tmp_path)


def test_dataset_seeds_reproducible():
    a = sg.generate_dataset("tetromino", 5, 42)
    b = sg.generate_dataset("tetromino", 5, 42)
    c = sg.generate_dataset("tetromino", 5, 43)
    assert all((x.image == y.image).all() for x, y in zip(a, b))
    assert any((x.image != y.image).any() for x, y in zip(a, c))


def test_unknown_family():
    with pytest.raises(ValueError):
        sg.family_spec("nope", 0)
