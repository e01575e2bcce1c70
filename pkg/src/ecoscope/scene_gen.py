"""Procedural scene families with modal and amodal ground truth.

Four families are provided: clean tetrominoes, clean multi-part objects,
occluded multi-part objects and multi-part objects over procedural
textures. Every sample is a pure function of its spec and seed.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

__all__ = [
    "GenerationError",
    "ObjectTemplate",
    "SceneSpec",
    "SceneSample",
    "TETROMINO_COLORS",
    "NUM_TEXTURES",
    "tetromino_library",
    "multipart_library",
    "gen_tetromino_scene",
    "gen_multipart_scene",
    "gen_occluded_scene",
    "gen_ood_scene",
    "save_index_png",
    "render_texture",
    "generate_dataset",
    "write_dataset",
    "read_manifest",
    "read_sample_masks",
    "sample_seed",
]

MANIFEST_VERSION = 1
MAX_ATTEMPTS = 1000
NUM_TEXTURES = 15

TETROMINO_COLORS = [
    (255, 0, 0),
    (0, 255, 0),
    (0, 0, 255),
    (255, 255, 0),
    (255, 0, 255),
    (0, 255, 255),
]


class GenerationError(RuntimeError):
    """Raised when a scene cannot be placed within the retry bound."""


@dataclass
class ObjectTemplate:
    template_id: int
    parts: list  # [(rgb tuple, frozenset of (dr, dc))]
    name: str = ""

    def __post_init__(self):
        if not self.parts:
            raise ValueError("template needs at least one part")
        seen: set = set()
        for _, offs in self.parts:
            if seen & set(offs):
                raise ValueError(f"template {self.name!r}: parts overlap")
            seen |= set(offs)
            if not _is_connected(offs):
                raise ValueError(f"template {self.name!r}: part is not 4-connected")

    @property
    def offsets(self) -> np.ndarray:
        return np.array(sorted(set().union(*(set(o) for _, o in self.parts))), dtype=np.int64)

    @property
    def extent(self) -> tuple[int, int]:
        offs = self.offsets
        return int(offs[:, 0].max()) + 1, int(offs[:, 1].max()) + 1


@dataclass
class SceneSpec:
    image_size: tuple[int, int] = (64, 64)
    num_objects: int = 5
    template_library: list = field(default_factory=list)
    min_visibility: float = 1.0
    background: object = (0, 0, 0)  # RGB triple or texture id
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.min_visibility <= 1:
            raise ValueError(f"min_visibility must lie in (0, 1], got {self.min_visibility}")
        if self.num_objects < 1:
            raise ValueError("num_objects must be >= 1")


@dataclass
class SceneSample:
    image: np.ndarray  # (H, W, 3) uint8
    modal_masks: list  # per-object (H, W) bool
    amodal_masks: list
    object_ids: list  # template ids
    depth_order: list  # object indices, back to front
    anchors: list = field(default_factory=list)
    seed: int = 0
    min_visibility: float = 1.0
    background: object = (0, 0, 0)

    def modal_index_map(self) -> np.ndarray:
        out = np.zeros(self.image.shape[:2], dtype=np.uint8)
        for k, m in enumerate(self.modal_masks):
            out[m] = k + 1
        return out


def _is_connected(offsets) -> bool:
    offs = np.array(sorted(offsets), dtype=np.int64).reshape(-1, 2)
    if len(offs) == 0:
        return False
    lo = offs.min(axis=0)
    grid = np.zeros(tuple(offs.max(axis=0) - lo + 1), dtype=bool)
    grid[offs[:, 0] - lo[0], offs[:, 1] - lo[1]] = True
    _, n = ndimage.label(grid)
    return n == 1


# ---------------------------------------------------------------------------
# template libraries

_TETROMINO_CELLS = {
    "I_h": [(0, 0), (0, 1), (0, 2), (0, 3)],
    "I_v": [(0, 0), (1, 0), (2, 0), (3, 0)],
    "O": [(0, 0), (0, 1), (1, 0), (1, 1)],
    "T_up": [(0, 1), (1, 0), (1, 1), (1, 2)],
    "T_down": [(0, 0), (0, 1), (0, 2), (1, 1)],
    "T_left": [(0, 1), (1, 0), (1, 1), (2, 1)],
    "T_right": [(0, 0), (1, 0), (1, 1), (2, 0)],
    "S_h": [(0, 1), (0, 2), (1, 0), (1, 1)],
    "Z_h": [(0, 0), (0, 1), (1, 1), (1, 2)],
    "J_0": [(0, 0), (1, 0), (1, 1), (1, 2)],
    "J_90": [(0, 0), (0, 1), (1, 0), (2, 0)],
    "J_180": [(0, 0), (0, 1), (0, 2), (1, 2)],
    "J_270": [(0, 1), (1, 1), (2, 0), (2, 1)],
    "L_0": [(0, 2), (1, 0), (1, 1), (1, 2)],
    "L_90": [(0, 0), (1, 0), (2, 0), (2, 1)],
    "L_180": [(0, 0), (0, 1), (0, 2), (1, 0)],
    "L_270": [(0, 0), (0, 1), (1, 1), (2, 1)],
}


def tetromino_library(tile_size: int = 5) -> list[ObjectTemplate]:
    """The 17 fixed tetromino shapes as single-part templates."""
    lib = []
    for tid, (name, cells) in enumerate(_TETROMINO_CELLS.items()):
        offs = frozenset(
            (r * tile_size + dr, c * tile_size + dc)
            for r, c in cells
            for dr in range(tile_size)
            for dc in range(tile_size)
        )
        lib.append(ObjectTemplate(tid, [(TETROMINO_COLORS[0], offs)], name))
    return lib


def _rect(r, c, h, w):
    return {(r + i, c + j) for i in range(h) for j in range(w)}


def _disc(cr, cc, rad):
    n = int(np.ceil(rad))
    return {
        (cr + i, cc + j)
        for i in range(-n, n + 1)
        for j in range(-n, n + 1)
        if i * i + j * j <= rad * rad
    }


def _ellipse(cr, cc, a, b):
    return {
        (cr + i, cc + j)
        for i in range(-a, a + 1)
        for j in range(-b, b + 1)
        if (i / a) ** 2 + (j / b) ** 2 <= 1.0
    }


def _tri_up(r, c, h):
    return {(r + i, c + j) for i in range(h) for j in range(-i, i + 1)}


def _tri_down(r, c, h):
    return {(r + i, c + j) for i in range(h) for j in range(-(h - 1 - i), h - i)}


def _tri_left(r, c, w):
    # apex at (r, c), opening to the right
    return {(r + i, c + j) for j in range(w) for i in range(-j, j + 1)}


def _palette() -> list[tuple[int, int, int]]:
    cols = []
    for s, v in ((1.0, 1.0), (1.0, 0.6), (0.5, 1.0)):
        for h in range(12):
            r, g, b = colorsys.hsv_to_rgb(h / 12, s, v)
            cols.append((round(r * 255), round(g * 255), round(b * 255)))
    return cols


MULTIPART_COLORS = _palette()


def _multipart_shapes():
    # parts listed in drawing priority: later parts never overwrite earlier ones
    return [
        ("house", [_tri_up(0, 7, 7), _rect(7, 2, 9, 11)]),
        ("tree", [_disc(5, 5, 5.2), _rect(11, 4, 5, 3)]),
        ("snowman", [_rect(0, 2, 2, 5), _disc(5, 4, 3), _disc(12, 4, 4.2)]),
        ("car", [_rect(0, 4, 3, 7), _rect(3, 0, 5, 16), _rect(8, 2, 2, 12)]),
        ("flag", [_rect(0, 2, 14, 2), _rect(0, 4, 6, 9), _rect(14, 0, 2, 6)]),
        ("mushroom", [{p for p in _disc(7, 7, 7.2) if p[0] <= 6}, _rect(7, 5, 7, 5)]),
        ("rocket", [_tri_up(0, 5, 5), _rect(5, 2, 12, 7), _rect(13, 0, 5, 2), _rect(13, 9, 5, 2)]),
        ("cup", [{p for p in _disc(0, 6, 6.2) if p[0] >= 0}, _rect(1, 13, 4, 3), _rect(7, 1, 2, 11)]),
        ("tv", [_rect(0, 0, 9, 14), _rect(9, 5, 3, 4), _rect(12, 2, 2, 10)]),
        ("fish", [_ellipse(6, 9, 4, 7), _tri_left(6, 17, 5), _tri_down(0, 9, 3)]),
    ]


def multipart_library() -> list[ObjectTemplate]:
    """Ten surrogate multi-part templates with fixed, globally distinct part colours."""
    lib = []
    color_iter = iter(
        # interleave hues so parts inside one template are far apart in colour
        [MULTIPART_COLORS[(7 * i) % len(MULTIPART_COLORS)] for i in range(len(MULTIPART_COLORS))]
    )
    for tid, (name, raw_parts) in enumerate(_multipart_shapes()):
        taken: set = set()
        parts = []
        for offs in raw_parts:
            offs = set(offs) - taken
            taken |= offs
            parts.append(offs)
        allp = np.array(sorted(taken))
        lo = allp.min(axis=0)
        parts = [
            (next(color_iter), frozenset((r - lo[0], c - lo[1]) for r, c in offs)) for offs in parts
        ]
        lib.append(ObjectTemplate(tid, parts, name))
    return lib


# ---------------------------------------------------------------------------
# textures

def _smooth_noise(rng, shape, scale):
    field_ = rng.random(shape)
    field_ = ndimage.gaussian_filter(field_, scale, mode="wrap")
    field_ -= field_.min()
    return field_ / max(field_.max(), 1e-12)


def render_texture(texture_id: int, shape, rng: np.random.Generator) -> np.ndarray:
    """Procedural background texture in muted tones, as (H, W, 3) uint8."""
    if not 0 <= texture_id < NUM_TEXTURES:
        raise ValueError(f"texture id must lie in 0..{NUM_TEXTURES - 1}, got {texture_id}")
    h, w = shape
    rr, cc = np.mgrid[0:h, 0:w].astype(np.float64)
    phase = rng.random() * 2 * np.pi
    family, variant = divmod(texture_id, 3)
    if family == 0:  # smooth value noise
        t = _smooth_noise(rng, shape, (1.0, 2.5, 5.0)[variant])
    elif family == 1:  # stripes
        period = (4.0, 7.0, 11.0)[variant]
        direction = (cc, rr, (rr + cc) / np.sqrt(2))[variant]
        t = 0.5 + 0.5 * np.sin(2 * np.pi * direction / period + phase)
    elif family == 2:  # checker
        cell = (3, 6, 9)[variant]
        off = rng.integers(0, cell, size=2)
        t = (((rr + off[0]) // cell + (cc + off[1]) // cell) % 2).astype(np.float64)
        t = 0.15 + 0.7 * t + 0.15 * rng.random(shape)
    elif family == 3:  # gradients
        if variant == 2:
            cr, ccn = rng.random(2) * (h, w)
            t = np.hypot(rr - cr, cc - ccn)
        else:
            ang = phase if variant == 0 else phase / 4
            t = rr * np.sin(ang) + cc * np.cos(ang)
        t = (t - t.min()) / max(np.ptp(t), 1e-12)
    else:  # speckle, blotches, wood grain
        if variant == 0:
            t = rng.random(shape)
        elif variant == 1:
            pts = rng.random((12, 2)) * (h, w)
            d = np.min(np.hypot(rr[..., None] - pts[:, 0], cc[..., None] - pts[:, 1]), axis=-1)
            t = d / max(d.max(), 1e-12)
        else:
            warp = 3.0 * _smooth_noise(rng, shape, 4.0)
            t = 0.5 + 0.5 * np.sin(np.hypot(rr - h / 2, cc - w / 2) / 1.7 + warp * 2 * np.pi)
    lo, hi = _TEXTURE_TONES[texture_id]
    img = np.asarray(lo)[None, None, :] * (1 - t[..., None]) + np.asarray(hi)[None, None, :] * t[..., None]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# low-saturation colour pairs keep textures far from the saturated object palette
_TEXTURE_TONES = [
    ((70, 65, 60), (190, 180, 165)),
    ((90, 95, 85), (170, 175, 160)),
    ((60, 70, 80), (150, 160, 175)),
    ((100, 90, 80), (200, 185, 170)),
    ((75, 75, 90), (165, 165, 185)),
    ((85, 100, 90), (185, 200, 190)),
    ((60, 60, 60), (185, 185, 185)),
    ((110, 100, 95), (160, 150, 140)),
    ((80, 85, 100), (140, 145, 160)),
    ((95, 80, 75), (195, 170, 160)),
    ((65, 80, 70), (175, 195, 180)),
    ((120, 115, 105), (195, 190, 175)),
    ((70, 70, 75), (200, 195, 200)),
    ((105, 95, 110), (175, 165, 180)),
    ((80, 70, 55), (165, 145, 120)),
]


# ---------------------------------------------------------------------------
# placement

def _place(template_offsets, anchor, shape):
    mask = np.zeros(shape, dtype=bool)
    offs = template_offsets + np.asarray(anchor)
    mask[offs[:, 0], offs[:, 1]] = True
    return mask


def _random_anchor(rng, extent, shape):
    h, w = shape
    eh, ew = extent
    if eh > h or ew > w:
        raise GenerationError(f"template extent {extent} exceeds image size {shape}")
    return int(rng.integers(0, h - eh + 1)), int(rng.integers(0, w - ew + 1))


_CROSS = ndimage.generate_binary_structure(2, 1)


_TRIES_PER_OBJECT = 50


def _try_layout_clean(rng, templates, shape):
    occupied = np.zeros(shape, dtype=bool)
    anchors = []
    for tpl in templates:
        for _ in range(_TRIES_PER_OBJECT):
            anchor = _random_anchor(rng, tpl.extent, shape)
            mask = _place(tpl.offsets, anchor, shape)
            if not (ndimage.binary_dilation(mask, _CROSS) & occupied).any():
                occupied |= mask
                anchors.append(anchor)
                break
        else:
            return None
    return anchors


def _layout_clean(rng, templates, shape):
    """Non-overlapping, non-touching placements (touching would merge parts).

    A layout that gets stuck is restarted from scratch.
    """
    for _ in range(MAX_ATTEMPTS // _TRIES_PER_OBJECT):
        anchors = _try_layout_clean(rng, templates, shape)
        if anchors is not None:
            return anchors
    raise GenerationError(f"could not place {len(templates)} objects in an image of size {shape}")


def _visible(amodal, depth_order):
    """Modal masks given a back-to-front painting order."""
    owner = np.full(amodal[0].shape, -1, dtype=np.int64)
    for k in depth_order:
        owner[amodal[k]] = k
    return [owner == k for k in range(len(amodal))]


def _layout_occluded(rng, templates, shape, depth_order, min_visibility):
    amodal: list = []
    anchors = []
    sub_order = []
    for k, tpl in enumerate(templates):
        offs = tpl.offsets
        order_k = [j for j in depth_order if j <= k]
        for _ in range(MAX_ATTEMPTS):
            anchor = _random_anchor(rng, tpl.extent, shape)
            cand = amodal + [_place(offs, anchor, shape)]
            modal = _visible(cand, order_k)
            if all(m.sum() >= min_visibility * a.sum() for m, a in zip(modal, cand)):
                amodal = cand
                anchors.append(anchor)
                break
        else:
            raise GenerationError(
                f"visibility >= {min_visibility} unsatisfiable for object {k} after {MAX_ATTEMPTS} attempts"
            )
        sub_order = order_k
    return anchors, sub_order


def _paint(templates, anchors, colors, shape, background, depth_order, bg_rng):
    h, w = shape
    if isinstance(background, (int, np.integer)):
        image = render_texture(int(background), shape, bg_rng)
    else:
        image = np.empty((h, w, 3), dtype=np.uint8)
        image[:] = np.asarray(background, dtype=np.uint8)
    amodal = []
    for tpl, anchor in zip(templates, anchors):
        amodal.append(_place(tpl.offsets, anchor, shape))
    for k in depth_order:
        tpl, anchor = templates[k], anchors[k]
        for p, (color, offs) in enumerate(tpl.parts):
            pix = np.array(sorted(offs)) + np.asarray(anchor)
            image[pix[:, 0], pix[:, 1]] = colors[k][p]
    modal = _visible(amodal, depth_order)
    return image, modal, amodal


def _generate(spec: SceneSpec, occluded: bool, tetromino: bool) -> SceneSample:
    if not spec.template_library:
        raise ValueError("template_library is empty")
    shape = tuple(spec.image_size)
    rng = np.random.default_rng(spec.rng_seed)
    lib = spec.template_library
    picks = rng.integers(0, len(lib), size=spec.num_objects)
    templates = [lib[i] for i in picks]
    if tetromino:
        color_idx = rng.integers(0, len(TETROMINO_COLORS), size=spec.num_objects)
        colors = [[TETROMINO_COLORS[c]] * len(t.parts) for c, t in zip(color_idx, templates)]
    else:
        colors = [[c for c, _ in t.parts] for t in templates]
    depth_order = [int(i) for i in rng.permutation(spec.num_objects)]
    if occluded:
        anchors, _ = _layout_occluded(rng, templates, shape, depth_order, spec.min_visibility)
    else:
        anchors = _layout_clean(rng, templates, shape)
    bg = spec.background
    if isinstance(bg, (int, np.integer)) and not 0 <= bg < NUM_TEXTURES:
        raise ValueError(f"texture id must lie in 0..{NUM_TEXTURES - 1}, got {bg}")
    bg_rng = np.random.default_rng([spec.rng_seed, 7919, int(bg) if isinstance(bg, (int, np.integer)) else 0])
    image, modal, amodal = _paint(templates, anchors, colors, shape, bg, depth_order, bg_rng)
    return SceneSample(
        image=image,
        modal_masks=modal,
        amodal_masks=amodal,
        object_ids=[t.template_id for t in templates],
        depth_order=depth_order,
        anchors=[tuple(a) for a in anchors],
        seed=spec.rng_seed,
        min_visibility=spec.min_visibility,
        background=bg,
    )


def gen_tetromino_scene(spec: SceneSpec) -> SceneSample:
    """Clean tetromino scene; each object gets one of six colours."""
    if spec.min_visibility != 1:
        raise ValueError("tetromino scenes are unoccluded (min_visibility must be 1)")
    return _generate(spec, occluded=False, tetromino=True)


def gen_multipart_scene(spec: SceneSpec) -> SceneSample:
    if spec.min_visibility != 1:
        raise ValueError("clean multi-part scenes require min_visibility = 1")
    return _generate(spec, occluded=False, tetromino=False)


def gen_occluded_scene(spec: SceneSpec) -> SceneSample:
    """Overlapping objects; rejection sampling keeps every object >= min_visibility visible."""
    if not 0.25 <= spec.min_visibility < 1:
        raise ValueError(f"occluded scenes need min_visibility in [0.25, 1), got {spec.min_visibility}")
    return _generate(spec, occluded=True, tetromino=False)


def gen_ood_scene(spec: SceneSpec) -> SceneSample:
    """Clean multi-part layout over a procedural texture; layout ignores the texture."""
    bg = spec.background
    if not isinstance(bg, (int, np.integer)):
        raise ValueError("out-of-distribution scenes need a texture id background")
    if not 0 <= bg < NUM_TEXTURES:
        raise ValueError(f"texture id must lie in 0..{NUM_TEXTURES - 1}, got {bg}")
    return _generate(spec, occluded=False, tetromino=False)


# ---------------------------------------------------------------------------
# datasets

FAMILIES = ("tetromino", "multipart", "occluded", "ood")


def sample_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def family_spec(family: str, seed: int, min_visibility: float | None = None,
                texture: int | None = None, num_objects: int | None = None) -> SceneSpec:
    if family == "tetromino":
        return SceneSpec((35, 35), num_objects or 3, tetromino_library(), 1.0, (0, 0, 0), seed)
    if family == "multipart":
        return SceneSpec((64, 64), num_objects or 5, multipart_library(), 1.0, (0, 0, 0), seed)
    if family == "occluded":
        vis = 0.25 if min_visibility is None else min_visibility
        return SceneSpec((64, 64), num_objects or 5, multipart_library(), vis, (0, 0, 0), seed)
    if family == "ood":
        if texture is None:
            texture = int(np.random.default_rng([seed, 104729]).integers(0, NUM_TEXTURES))
        return SceneSpec((64, 64), num_objects or 5, multipart_library(), 1.0, int(texture), seed)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


_GENERATORS = {
    "tetromino": gen_tetromino_scene,
    "multipart": gen_multipart_scene,
    "occluded": gen_occluded_scene,
    "ood": gen_ood_scene,
}


def generate_one(family: str, seed: int, **kw) -> SceneSample:
    return _GENERATORS[family](family_spec(family, seed, **kw))


def generate_dataset(family: str, count: int, seed: int, **kw) -> list[SceneSample]:
    return [generate_one(family, sample_seed(seed, i), **kw) for i in range(count)]


def _sample_id(i: int) -> str:
    return f"{i:06d}"


def save_index_png(arr, path) -> None:
    """Write a uint8 index map (0 = background) as a palette PNG."""
    _save_png(np.asarray(arr, dtype=np.uint8), Path(path), palette=True)


def _save_png(arr, path: Path, palette=False):
    img = Image.fromarray(arr)
    if palette:
        img = img.convert("P")
        img.putpalette(_MASK_PALETTE)
    try:
        img.save(path)
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc


def _make_mask_palette():
    pal = [0, 0, 0]
    rng = np.random.default_rng(0)
    for _ in range(255):
        pal.extend(int(x) for x in rng.integers(40, 256, size=3))
    return pal


_MASK_PALETTE = _make_mask_palette()


def _background_record(bg):
    if isinstance(bg, (int, np.integer)):
        return {"type": "texture", "id": int(bg)}
    return {"type": "solid", "rgb": [int(x) for x in bg]}


def write_dataset(samples, out_dir, family: str = "custom") -> dict:
    """Write images, indexed modal masks, per-object amodal masks and manifest.json."""
    out = Path(out_dir)
    try:
        for sub in ("images", "masks_modal", "masks_amodal"):
            (out / sub).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out}: {exc}") from exc
    entries = []
    image_size = None
    for i, s in enumerate(samples):
        sid = _sample_id(i)
        image_size = list(s.image.shape[:2])
        if len(s.modal_masks) > 255:
            raise ValueError("indexed masks hold at most 255 objects")
        _save_png(s.image, out / "images" / f"{sid}.png")
        _save_png(s.modal_index_map(), out / "masks_modal" / f"{sid}.png", palette=True)
        for k, m in enumerate(s.amodal_masks):
            _save_png(m.astype(np.uint8) * (k + 1), out / "masks_amodal" / f"{sid}_{k}.png", palette=True)
        entries.append({
            "id": sid,
            "files": {
                "image": f"images/{sid}.png",
                "modal": f"masks_modal/{sid}.png",
                "amodal": [f"masks_amodal/{sid}_{k}.png" for k in range(len(s.amodal_masks))],
            },
            "seed": int(s.seed),
            "template_ids": [int(t) for t in s.object_ids],
            "min_visibility": float(s.min_visibility),
            "background": _background_record(s.background),
            "num_objects": len(s.modal_masks),
            "depth_order": [int(d) for d in s.depth_order],
            "anchors": [[int(a), int(b)] for a, b in s.anchors],
            "centroids": [[float(x) for x in np.argwhere(m).mean(axis=0)] for m in s.amodal_masks],
        })
    manifest = {
        "version": MANIFEST_VERSION,
        "family": family,
        "image_size": image_size,
        "samples": entries,
    }
    path = out / "manifest.json"
    try:
        path.write_text(json.dumps(manifest, indent=1))
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
    return manifest


def read_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('version')!r} in {path}")
    return manifest


def read_image(dataset_dir, sample_id: str) -> np.ndarray:
    return np.array(Image.open(Path(dataset_dir) / "images" / f"{sample_id}.png").convert("RGB"))


def read_sample_masks(dataset_dir, entry: dict):
    """(modal index map, list of amodal bool masks) for one manifest entry."""
    root = Path(dataset_dir)
    sid = entry["id"]
    modal = np.array(Image.open(root / "masks_modal" / f"{sid}.png"))
    amodal = [
        np.array(Image.open(root / "masks_amodal" / f"{sid}_{k}.png")) != 0
        for k in range(entry["num_objects"])
    ]
    return modal, amodal
