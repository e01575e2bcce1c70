"""Memory-driven discovery on unseen images, amodal fill-in and the train/test pipeline."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .copart import DiscoveryConfig, discover_objects
from .memory import (
    MemoryEntry,
    ObjectFeatures,
    ObjectMemory,
    finalize,
    load_memory,
    memory_update,
    save_memory,
    summarize_object,
    summarize_part,
)
from .part_graph import Part, build_part_graph, extract_parts, sample_shape_descriptor, similarity_matrix
from .scene_gen import read_image, read_manifest, save_index_png
from .segmentation import SegmentationParams, felzenszwalb_segment

__all__ = [
    "PipelineConfig",
    "Prediction",
    "discover_in_image",
    "fill_occluded",
    "rasterize_polygon",
    "segment_parts",
    "train_memory",
    "predict_dataset",
    "read_prediction",
    "prediction_features",
    "run_pipeline",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    epsilon: float = 0.99
    K: int = 64
    tau: float = 10.0
    min_size: int = 1
    batch_size: int = 2
    rng_seed: int = 0
    deterministic_order: bool = True
    magnitude_gate: bool = False
    single_part_objects: bool = True
    max_views: int = 8
    color_tolerance: float = 30.0
    offset_tolerance: float = 0.1
    min_count: int = 1
    min_relative_count: float = 0.1
    amodal: bool = True
    fragment_overlap: float = 0.5
    threads: int = 1

    @property
    def segmentation(self) -> SegmentationParams:
        return SegmentationParams(tau=self.tau, min_size=self.min_size)

    def discovery(self, batch_index: int = 0) -> DiscoveryConfig:
        return DiscoveryConfig(
            epsilon=self.epsilon,
            rng_seed=self.rng_seed + batch_index,
            deterministic_order=self.deterministic_order,
            magnitude_gate=self.magnitude_gate,
            magnitude_delta=self.offset_tolerance,
        )


@dataclass
class Prediction:
    modal_masks: list = field(default_factory=list)
    amodal_masks: list = field(default_factory=list)
    matched_entry_ids: list = field(default_factory=list)
    scores: list = field(default_factory=list)

    def modal_index_map(self, shape) -> np.ndarray:
        out = np.zeros(shape, dtype=np.uint8)
        for k, m in enumerate(self.modal_masks):
            out[m] = k + 1
        return out


def segment_parts(image, config: PipelineConfig, image_index: int = 0, first_id: int = 0) -> list[Part]:
    labeling = felzenszwalb_segment(image, config.segmentation)
    return extract_parts(labeling, image_index, config.K, image, first_id)


# ---------------------------------------------------------------------------
# rasterisation and fill-in

def rasterize_polygon(vertices, shape) -> np.ndarray:
    """Pixels whose centres lie inside (even-odd) or on the closed polygon."""
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
    h, w = shape
    mask = np.zeros(shape, dtype=bool)
    if len(v) == 0:
        return mask
    r0, c0 = np.maximum(np.floor(v.min(axis=0)).astype(int), 0)
    r1, c1 = np.minimum(np.ceil(v.max(axis=0)).astype(int), (h - 1, w - 1))
    if r1 < r0 or c1 < c0:
        return mask
    rr, cc = np.mgrid[r0:r1 + 1, c0:c1 + 1].astype(np.float64)
    inside = np.zeros(rr.shape, dtype=bool)
    on_edge = np.zeros(rr.shape, dtype=bool)
    nxt = np.roll(v, -1, axis=0)
    for (pr, pc), (qr, qc) in zip(v, nxt):
        if pr != qr:
            crosses = (pr > rr) != (qr > rr)
            x_at = pc + (rr - pr) * (qc - pc) / (qr - pr)
            inside ^= crosses & (cc < x_at)
        dr, dc = qr - pr, qc - pc
        seg2 = dr * dr + dc * dc
        if seg2 == 0:
            t = np.zeros(rr.shape)
        else:
            t = np.clip(((rr - pr) * dr + (cc - pc) * dc) / seg2, 0, 1)
        dist2 = (rr - pr - t * dr) ** 2 + (cc - pc - t * dc) ** 2
        on_edge |= dist2 <= 1e-9
    mask[r0:r1 + 1, c0:c1 + 1] = inside | on_edge
    return mask


def template_mask(template, centroid, shape) -> np.ndarray:
    """Filled polygon through a template's boundary samples placed at ``centroid``."""
    # short boundaries are sampled cyclically; one lap is the polygon
    vecs = np.asarray(template.shape)
    _, first = np.unique(vecs, axis=0, return_index=True)
    return rasterize_polygon(np.asarray(centroid) + vecs[np.sort(first)], shape)


def fill_occluded(modal_mask, entry: MemoryEntry, anchor, visible_templates) -> np.ndarray:
    """Amodal mask: visible pixels plus every template with no visible part,
    rasterised at ``anchor + rel_offset`` and clipped to the image."""
    amodal = np.asarray(modal_mask, dtype=bool).copy()
    if not visible_templates:
        return amodal
    for t, tpl in enumerate(entry.templates):
        if t not in visible_templates:
            amodal |= template_mask(tpl, np.asarray(anchor) + tpl.rel_offset, amodal.shape)
    return amodal


# ---------------------------------------------------------------------------
# matching

def _color_ok(entry: MemoryEntry, colors: np.ndarray, tol: float) -> np.ndarray:
    """(n_templates, n_parts) mask of parts whose colour fits a stored view."""
    ok = np.zeros((len(entry.templates), len(colors)), dtype=bool)
    for t, tpl in enumerate(entry.templates):
        refs = [v.part_colors[t] for v in entry.views if len(v.part_colors) == len(entry.templates)]
        refs = np.array(refs or [tpl.color_summary], dtype=np.float64)
        d = np.linalg.norm(colors[:, None, :] - refs[None, :, :], axis=-1)
        ok[t] = (d <= tol).any(axis=1)
    return ok


def _offset_agrees(obs, want, eps, delta) -> bool:
    diff = float(np.hypot(*(obs - want)))
    if diff <= 0.5:
        return True
    no, nw = float(np.hypot(*obs)), float(np.hypot(*want))
    if no == 0 or nw == 0:
        return False
    if min(no, nw) / max(no, nw) < 1 - delta:
        return False
    return float(obs @ want) / (no * nw) > eps


class _EntryMatcher:
    def __init__(self, entry: MemoryEntry, rank: int, descs, cents, colors, config: PipelineConfig):
        self.entry = entry
        self.rank = rank
        self.cents = cents
        self.config = config
        shapes = np.stack([t.shape for t in entry.templates])
        self.sims = similarity_matrix(shapes, descs)
        if len(entry.templates) == 1:
            # a lone part carries no relational evidence; require an exact shape
            hit = self.sims >= 1 - 1e-6
        else:
            hit = self.sims > config.epsilon
        self.match = hit & _color_ok(entry, colors, config.color_tolerance)
        self.rel = np.stack([t.rel_offset for t in entry.templates])

    def hypotheses(self, pool: set[int]):
        n_t = len(self.entry.templates)
        cfg = self.config
        seen = set()
        for t, m in zip(*np.nonzero(self.match)):
            t, m = int(t), int(m)
            if m not in pool:
                continue
            assign = {t: m}
            for u in range(n_t):
                if u == t:
                    continue
                want = self.rel[u] - self.rel[t]
                best = None
                for q in np.flatnonzero(self.match[u]):
                    q = int(q)
                    if q not in pool or q in assign.values():
                        continue
                    obs = self.cents[q] - self.cents[m]
                    if not _offset_agrees(obs, want, cfg.epsilon, cfg.offset_tolerance):
                        continue
                    key = (-self.sims[u, q], float(np.hypot(*(obs - want))), q)
                    if best is None or key < best[0]:
                        best = (key, q)
                if best is not None:
                    assign[u] = best[1]
            frozen = frozenset(assign.items())
            if frozen in seen:
                continue
            seen.add(frozen)
            yield assign

    def best(self, pool: set[int]):
        out = None
        for assign in self.hypotheses(pool):
            key = (self.rank, -len(assign), tuple(sorted(assign.values())))
            if out is None or key < out[0]:
                out = (key, assign)
        return out


def discover_in_image(image, memory: ObjectMemory, config: PipelineConfig | None = None) -> Prediction:
    """Assemble memorised objects from the parts of one image.

    Entries are visited in occurrence order. A hypothesis anchors an entry
    on a part matching one of its templates and collects parts that match
    the other templates at the stored relative offsets. The hypothesis
    explaining the most parts is accepted, its parts leave the pool, and the
    search repeats until the entry finds nothing more. Unclaimed parts are
    background.
    """
    config = config or PipelineConfig()
    img = np.asarray(image)
    shape = img.shape[:2]
    pred = Prediction()
    # rare entries are chance recurrences (mostly background pieces)
    top = max((e.occurrence_count for e in memory.entries), default=0)
    floor = max(config.min_count, config.min_relative_count * top)
    entries = [e for e in memory.entries if e.occurrence_count >= floor]
    if not entries:
        return pred
    parts = segment_parts(img, config)
    descs = np.stack([p.descriptor for p in parts])
    cents = np.stack([p.centroid for p in parts])
    colors = np.stack([p.color for p in parts])
    matchers = [_EntryMatcher(e, r, descs, cents, colors, config) for r, e in enumerate(entries)]
    matchers = [m for m in matchers if m.match.any()]

    pool = set(range(len(parts)))
    accepted = []
    for matcher in matchers:
        while (cand := matcher.best(pool)) is not None:
            assign = cand[1]
            pool -= set(assign.values())
            accepted.append((matcher, assign))

    owner = np.full(shape, -1, dtype=np.int64)
    for p in parts:
        owner[p.pixels[:, 0], p.pixels[:, 1]] = p.part_id
    fills = []
    for matcher, assign in accepted:
        entry = matcher.entry
        modal = np.zeros(shape, dtype=bool)
        for q in assign.values():
            modal[parts[q].pixels[:, 0], parts[q].pixels[:, 1]] = True
        anchor = np.mean([cents[q] - matcher.rel[u] for u, q in assign.items()], axis=0)
        missing = {}
        if config.amodal:
            for u, tpl in enumerate(entry.templates):
                if u not in assign:
                    missing[u] = template_mask(tpl, anchor + tpl.rel_offset, shape)
        fills.append(missing)
        pred.modal_masks.append(modal)
        pred.matched_entry_ids.append(entry.entry_id)
        pred.scores.append(float(np.mean([matcher.sims[u, q] for u, q in assign.items()])))

    # visible fragments of partly hidden parts join the object whose fill covers them
    if any(fills):
        for q in sorted(pool):
            part = parts[q]
            for k, missing in enumerate(fills):
                entry = accepted[k][0].entry
                hit = False
                for u, region in missing.items():
                    inside = region[part.pixels[:, 0], part.pixels[:, 1]].mean()
                    ok = _color_ok(entry, part.color[None], config.color_tolerance)[u, 0]
                    if inside >= config.fragment_overlap and ok:
                        hit = True
                        break
                if hit:
                    pred.modal_masks[k][part.pixels[:, 0], part.pixels[:, 1]] = True
                    break

    for k, missing in enumerate(fills):
        amodal = pred.modal_masks[k].copy()
        for region in missing.values():
            amodal |= region
        pred.amodal_masks.append(amodal)
    return pred


def prediction_features(pred: Prediction, image, K: int = 64) -> list[ObjectFeatures]:
    """Descriptor, centroid and mean colour of each predicted object."""
    img = np.asarray(image)
    rows = []
    for modal, amodal, eid in zip(pred.modal_masks, pred.amodal_masks, pred.matched_entry_ids):
        pix = np.argwhere(amodal)
        color = img[modal].mean(axis=0) if modal.any() else np.zeros(3)
        rows.append(ObjectFeatures(sample_shape_descriptor(pix, K), eid, tuple(pix.mean(axis=0)), tuple(color)))
    return rows


# ---------------------------------------------------------------------------
# training

def _recurring_singletons(parts, clusters, eps):
    clustered = set().union(*(c.members for c in clusters)) if clusters else set()
    if len(parts) < 2:
        return []
    S = similarity_matrix(np.stack([p.descriptor for p in parts]))
    image = np.array([p.image_index for p in parts])
    S[image[:, None] == image[None, :]] = -np.inf
    return [p for p in parts if p.part_id not in clustered and (S[p.part_id] > eps).any()]


def train_memory(images, config: PipelineConfig | None = None, memory: ObjectMemory | None = None,
                 on_batch=None) -> ObjectMemory:
    """Run co-part discovery batch by batch and integrate the objects into memory.

    ``on_batch(batch_index, parts, clusters, stats)`` is called after each batch.
    The returned memory is not finalized.
    """
    config = config or PipelineConfig()
    if memory is None:
        memory = ObjectMemory(match_threshold=config.epsilon, max_views=config.max_views, K=config.K,
                              color_tolerance=config.color_tolerance)
    images = list(images)
    bs = config.batch_size
    for b, start in enumerate(range(0, len(images), bs)):
        parts: list[Part] = []
        for i, img in enumerate(images[start:start + bs]):
            parts += segment_parts(img, config, image_index=i, first_id=len(parts))
        graph = build_part_graph(parts)
        clusters, stats = discover_objects(graph, config.discovery(b))
        discovered = [summarize_object(c, parts, config.K) for c in clusters]
        if config.single_part_objects:
            discovered += [summarize_part(p, config.K) for p in _recurring_singletons(parts, clusters, config.epsilon)]
        memory_update(memory, discovered)
        if on_batch is not None:
            on_batch(b, parts, clusters, stats)
    return memory


# ---------------------------------------------------------------------------
# dataset-level pipeline

PREDICTIONS_VERSION = 1


def _predict_one(args):
    image, memory, config = args
    return discover_in_image(image, memory, config)


def predict_dataset(dataset_dir, memory: ObjectMemory, out_dir, config: PipelineConfig | None = None) -> dict:
    """Predict every manifest sample; write masks and predictions.json."""
    config = config or PipelineConfig()
    manifest = read_manifest(dataset_dir)
    out = Path(out_dir)
    (out / "pred_modal").mkdir(parents=True, exist_ok=True)
    (out / "pred_amodal").mkdir(parents=True, exist_ok=True)
    ids = [s["id"] for s in manifest["samples"]]
    images = [read_image(dataset_dir, i) for i in ids]
    jobs = [(img, memory, config) for img in images]
    if config.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as ex:
            preds = list(ex.map(_predict_one, jobs, chunksize=8))
    else:
        preds = [_predict_one(j) for j in jobs]
    records = []
    for sid, img, pred in zip(ids, images, preds):
        save_index_png(pred.modal_index_map(img.shape[:2]), out / "pred_modal" / f"{sid}.png")
        for k, m in enumerate(pred.amodal_masks):
            save_index_png(m.astype(np.uint8) * (k + 1), out / "pred_amodal" / f"{sid}_{k}.png")
        records.append({
            "id": sid,
            "entry_ids": [int(e) for e in pred.matched_entry_ids],
            "scores": [float(s) for s in pred.scores],
        })
    result = {"version": PREDICTIONS_VERSION, "config": asdict(config), "samples": records}
    (out / "predictions.json").write_text(json.dumps(result, indent=1))
    log.info("stage=infer samples=%d objects=%d", len(records), sum(len(r["entry_ids"]) for r in records))
    return result


def read_prediction(pred_dir, sample_id: str) -> Prediction:
    """Reload one sample's prediction written by :func:`predict_dataset`."""
    root = Path(pred_dir)
    data = json.loads((root / "predictions.json").read_text())
    record = next((r for r in data["samples"] if r["id"] == sample_id), None)
    if record is None:
        raise KeyError(f"sample {sample_id!r} not in {root / 'predictions.json'}")
    index = np.array(Image.open(root / "pred_modal" / f"{sample_id}.png"))
    n = len(record["entry_ids"])
    return Prediction(
        modal_masks=[index == k + 1 for k in range(n)],
        amodal_masks=[np.array(Image.open(root / "pred_amodal" / f"{sample_id}_{k}.png")) != 0 for k in range(n)],
        matched_entry_ids=list(record["entry_ids"]),
        scores=list(record["scores"]),
    )


def run_pipeline(dataset_dir, memory_path, config: PipelineConfig | None = None, train: bool = False,
                 out_dir=None, on_batch=None):
    """Train mode builds, finalizes and saves a memory; test mode predicts into ``out_dir``.

    Returns the memory (train) or ``(predictions, report)`` (test); the
    report is None when ground-truth masks are absent.
    """
    from .metrics import evaluate_dataset

    config = config or PipelineConfig()
    manifest = read_manifest(dataset_dir)
    if train:
        images = (read_image(dataset_dir, s["id"]) for s in manifest["samples"])
        memory = finalize(train_memory(images, config, on_batch=on_batch))
        save_memory(memory, memory_path)
        log.info("stage=train samples=%d entries=%d objects=%d", len(manifest["samples"]),
                 len(memory.entries), memory.total_count)
        return memory
    if not os.path.exists(memory_path):
        raise FileNotFoundError(f"memory file {memory_path} does not exist")
    if out_dir is None:
        raise ValueError("test mode needs an output directory")
    memory = load_memory(memory_path)
    preds = predict_dataset(dataset_dir, memory, out_dir, config)
    report = None
    if (Path(dataset_dir) / "masks_modal").is_dir():
        report = evaluate_dataset(out_dir, dataset_dir, "modal")
    return preds, report
