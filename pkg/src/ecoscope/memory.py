"""Object memory: view summaries, part templates and occurrence counts."""

from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .copart import ObjectCluster
from .part_graph import Part, sample_shape_descriptor, similarity_matrix

__all__ = [
    "ObjectView",
    "PartTemplate",
    "MemoryEntry",
    "ObjectMemory",
    "MemoryStateError",
    "MemoryFormatError",
    "MemoryVersionError",
    "ObjectFeatures",
    "summarize_object",
    "summarize_part",
    "memory_match",
    "memory_update",
    "finalize",
    "save_memory",
    "load_memory",
    "export_object_features",
    "feature_header",
]

MAGIC = b"ECOSMEM\x00"
FORMAT_VERSION = 1
_SAME = 1e-9


class MemoryStateError(RuntimeError):
    pass


class MemoryFormatError(ValueError):
    pass


class MemoryVersionError(MemoryFormatError):
    pass


@dataclass
class ObjectView:
    descriptor: np.ndarray  # (K, 2)
    mask_size: int
    part_colors: list = field(default_factory=list)  # mean RGB per template, template order


@dataclass
class PartTemplate:
    shape: np.ndarray  # (K, 2)
    rel_offset: np.ndarray  # part centroid - object centroid
    color_summary: np.ndarray  # mean RGB
    neighbors: tuple = ()  # indices of adjacent templates


@dataclass
class MemoryEntry:
    entry_id: int
    views: list
    templates: list
    occurrence_count: int = 1

    @property
    def size(self) -> int:
        return len(self.templates)


@dataclass
class ObjectMemory:
    entries: list = field(default_factory=list)
    match_threshold: float = 0.99
    max_views: int = 8
    K: int = 64
    finalized: bool = False
    next_id: int = 0
    color_tolerance: float = 30.0

    def entry(self, entry_id: int) -> MemoryEntry:
        for e in self.entries:
            if e.entry_id == entry_id:
                return e
        raise KeyError(entry_id)

    @property
    def total_count(self) -> int:
        return sum(e.occurrence_count for e in self.entries)


def summarize_object(cluster: ObjectCluster, parts: list[Part], K: int = 64):
    """Position-invariant view of the union mask plus one template per member part."""
    members = sorted(cluster.members, key=lambda m: (tuple(parts[m].centroid), m))
    pixels = np.concatenate([parts[m].pixels for m in members])
    centroid = pixels.mean(axis=0)
    index = {m: t for t, m in enumerate(members)}
    nbrs: dict[int, set[int]] = {t: set() for t in range(len(members))}
    for a, b in cluster.internal_edges:
        if a in index and b in index:
            nbrs[index[a]].add(index[b])
            nbrs[index[b]].add(index[a])
    templates = [
        PartTemplate(
            shape=parts[m].descriptor.copy(),
            rel_offset=parts[m].centroid - centroid,
            color_summary=np.zeros(3) if parts[m].color is None else np.asarray(parts[m].color, dtype=np.float64),
            neighbors=tuple(sorted(nbrs[t])),
        )
        for t, m in enumerate(members)
    ]
    view = ObjectView(
        descriptor=sample_shape_descriptor(pixels, K),
        mask_size=len(pixels),
        part_colors=[t.color_summary.copy() for t in templates],
    )
    return view, templates


def summarize_part(part: Part, K: int = 64):
    """Summary of an object made of a single part."""
    color = np.zeros(3) if part.color is None else np.asarray(part.color, dtype=np.float64)
    template = PartTemplate(part.descriptor.copy(), np.zeros(2), color, ())
    view = ObjectView(sample_shape_descriptor(part.pixels, K), part.size, [color.copy()])
    return view, [template]


def memory_match(memory: ObjectMemory, view: ObjectView):
    """Best (entry_id, score) whose stored views exceed the match threshold, else None."""
    best = None
    for e in memory.entries:
        sims = similarity_matrix(np.stack([v.descriptor for v in e.views]), view.descriptor[None])
        score = float(sims.max())
        if best is None or score > best[1] or (score == best[1] and e.entry_id < best[0]):
            best = (e.entry_id, score)
    if best is None or not best[1] > memory.match_threshold:
        return None
    return best


def _align_colors(entry: MemoryEntry, templates) -> list | None:
    """New instance colours reordered to the entry's template order."""
    if len(templates) != len(entry.templates):
        return None
    new = np.stack([t.rel_offset for t in templates])
    out = []
    for t in entry.templates:
        k = int(np.argmin(np.linalg.norm(new - t.rel_offset, axis=1)))
        out.append(np.asarray(templates[k].color_summary, dtype=np.float64))
    return out


def _colors_known(entry: MemoryEntry, colors, tol: float) -> bool:
    for v in entry.views:
        if len(v.part_colors) == len(colors) and all(
            np.linalg.norm(np.asarray(a) - b) <= tol for a, b in zip(v.part_colors, colors)
        ):
            return True
    return False


def memory_update(memory: ObjectMemory, discovered) -> ObjectMemory:
    """Integrate (view, templates) pairs: count matches, insert new objects.

    A matched object whose shape differs (score < 1) or whose part colours
    are unseen is kept as an extra view while the entry holds fewer than
    ``max_views`` views.
    """
    if memory.finalized:
        raise MemoryStateError("memory is finalized; no further updates")
    for view, templates in discovered:
        m = memory_match(memory, view)
        if m is None:
            view = ObjectView(view.descriptor, view.mask_size,
                              [np.asarray(t.color_summary, dtype=np.float64) for t in templates])
            memory.entries.append(MemoryEntry(memory.next_id, [view], list(templates), 1))
            memory.next_id += 1
            continue
        entry = memory.entry(m[0])
        entry.occurrence_count += 1
        if len(entry.views) >= memory.max_views:
            continue
        colors = _align_colors(entry, templates)
        new_shape = m[1] < 1 - _SAME
        new_colors = colors is not None and not _colors_known(entry, colors, memory.color_tolerance)
        if new_shape or new_colors:
            entry.views.append(ObjectView(view.descriptor, view.mask_size, colors or []))
    return memory


def finalize(memory: ObjectMemory) -> ObjectMemory:
    """Sort entries by non-increasing occurrence count (ties by entry id)."""
    if memory.finalized:
        raise MemoryStateError("memory is already finalized")
    memory.entries.sort(key=lambda e: (-e.occurrence_count, e.entry_id))
    memory.finalized = True
    return memory


# ---------------------------------------------------------------------------
# binary format: magic, version, then little-endian records and a CRC32 trailer

class _Writer:
    def __init__(self):
        self.buf = bytearray()

    def pack(self, fmt, *vals):
        self.buf += struct.pack("<" + fmt, *vals)

    def array(self, arr, n):
        arr = np.asarray(arr, dtype="<f8").ravel()
        if arr.size != n:
            raise ValueError(f"expected {n} values, got {arr.size}")
        self.buf += arr.tobytes()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def unpack(self, fmt):
        fmt = "<" + fmt
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise MemoryFormatError("memory file is truncated")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals if len(vals) > 1 else vals[0]

    def array(self, n, shape=None):
        size = 8 * n
        if self.pos + size > len(self.data):
            raise MemoryFormatError("memory file is truncated")
        arr = np.frombuffer(self.data, dtype="<f8", count=n, offset=self.pos).astype(np.float64)
        self.pos += size
        return arr.reshape(shape) if shape else arr


def save_memory(memory: ObjectMemory, path) -> None:
    K = memory.K
    w = _Writer()
    w.pack("IdIdB", K, memory.match_threshold, memory.max_views, memory.color_tolerance, memory.finalized)
    w.pack("QI", memory.next_id, len(memory.entries))
    for e in memory.entries:
        w.pack("QQI", e.entry_id, e.occurrence_count, len(e.views))
        for v in e.views:
            w.pack("QI", v.mask_size, len(v.part_colors))
            w.array(v.descriptor, 2 * K)
            for c in v.part_colors:
                w.array(c, 3)
        w.pack("I", len(e.templates))
        for t in e.templates:
            w.array(t.shape, 2 * K)
            w.array(t.rel_offset, 2)
            w.array(t.color_summary, 3)
            w.pack("I", len(t.neighbors))
            for nb in t.neighbors:
                w.pack("I", nb)
    payload = bytes(w.buf)
    blob = MAGIC + struct.pack("<I", FORMAT_VERSION) + struct.pack("<Q", len(payload)) + payload
    blob += struct.pack("<I", zlib.crc32(payload))
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise OSError(f"failed to write memory file {path}: {exc}") from exc


def load_memory(path) -> ObjectMemory:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 12 or data[: len(MAGIC)] != MAGIC:
        raise MemoryFormatError(f"{path} is not a memory file (bad magic or truncated header)")
    (version,) = struct.unpack_from("<I", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise MemoryVersionError(f"{path}: unsupported memory format version {version}")
    (length,) = struct.unpack_from("<Q", data, len(MAGIC) + 4)
    start = len(MAGIC) + 12
    payload = data[start:start + length]
    trailer = data[start + length:]
    if len(payload) != length or len(trailer) != 4:
        raise MemoryFormatError(f"{path}: memory file is truncated")
    if struct.unpack("<I", trailer)[0] != zlib.crc32(payload):
        raise MemoryFormatError(f"{path}: checksum mismatch, file is corrupt")
    r = _Reader(payload)
    K, thr, max_views, tol, fin = r.unpack("IdIdB")
    next_id, n_entries = r.unpack("QI")
    entries = []
    for _ in range(n_entries):
        eid, count, n_views = r.unpack("QQI")
        views = []
        for _ in range(n_views):
            size, n_cols = r.unpack("QI")
            desc = r.array(2 * K, (K, 2))
            cols = [r.array(3) for _ in range(n_cols)]
            views.append(ObjectView(desc, size, cols))
        templates = []
        for _ in range(r.unpack("I")):
            shape = r.array(2 * K, (K, 2))
            rel = r.array(2)
            col = r.array(3)
            nbrs = tuple(r.unpack("I") for _ in range(r.unpack("I")))
            templates.append(PartTemplate(shape, rel, col, nbrs))
        entries.append(MemoryEntry(eid, views, templates, count))
    if r.pos != len(payload):
        raise MemoryFormatError(f"{path}: trailing bytes in memory file")
    return ObjectMemory(entries, thr, max_views, K, bool(fin), next_id, tol)


# ---------------------------------------------------------------------------
# feature export

@dataclass
class ObjectFeatures:
    descriptor: np.ndarray  # (K, 2)
    entry_id: int
    centroid: tuple  # (row, col)
    color: tuple  # RGB


def feature_header(K: int) -> list[str]:
    cols = []
    for k in range(K):
        cols += [f"v{k}_row", f"v{k}_col"]
    return cols + ["entry_id", "x", "y", "color"]


def _hex(color) -> str:
    r, g, b = (int(np.clip(round(float(c)), 0, 255)) for c in color)
    return f"#{r:02x}{g:02x}{b:02x}"


def _memory_features(memory: ObjectMemory) -> list[ObjectFeatures]:
    rows = []
    for e in memory.entries:
        color = np.mean([t.color_summary for t in e.templates], axis=0)
        rows.append(ObjectFeatures(e.views[0].descriptor, e.entry_id, (float("nan"), float("nan")), tuple(color)))
    return rows


def export_object_features(source, path, K: int | None = None) -> int:
    """Write one CSV row per object: 2K descriptor values, entry id, x, y, colour.

    ``source`` is an :class:`ObjectMemory` or an iterable of
    :class:`ObjectFeatures`. Returns the number of rows written.
    """
    if isinstance(source, ObjectMemory):
        if not source.finalized:
            raise MemoryStateError("export requires a finalized memory")
        K = source.K
        rows = _memory_features(source)
    else:
        rows = list(source)
        if K is None:
            K = len(rows[0].descriptor) if rows else 64
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(feature_header(K))
            for f in rows:
                desc = np.asarray(f.descriptor, dtype=np.float64).reshape(K, 2).ravel()
                writer.writerow(
                    [repr(float(x)) for x in desc]
                    + [int(f.entry_id), repr(float(f.centroid[1])), repr(float(f.centroid[0])), _hex(f.color)]
                )
    except OSError as exc:
        raise OSError(f"failed to write feature table {path}: {exc}") from exc
    return len(rows)
