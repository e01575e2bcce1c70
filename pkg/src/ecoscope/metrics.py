"""Foreground ARI, Dice, IoU, optimal mask matching and dataset reports."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.optimize import linear_sum_assignment

from .scene_gen import read_manifest, read_sample_masks

__all__ = [
    "ContingencyTable",
    "MatchResult",
    "contingency",
    "fg_ari",
    "dice",
    "iou",
    "best_match",
    "evaluate_dataset",
    "write_report",
]

log = logging.getLogger(__name__)


@dataclass
class ContingencyTable:
    counts: np.ndarray  # (n_pred_clusters, n_gt_clusters)

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MatchResult:
    pairs: list = field(default_factory=list)  # (pred_id, gt_id, iou, dice)
    unmatched_pred: list = field(default_factory=list)
    unmatched_gt: list = field(default_factory=list)

    @property
    def total_iou(self) -> float:
        return float(sum(p[2] for p in self.pairs))


def contingency(pred, gt) -> ContingencyTable:
    pred = np.asarray(pred).ravel()
    gt = np.asarray(gt).ravel()
    _, p_inv = np.unique(pred, return_inverse=True)
    _, g_inv = np.unique(gt, return_inverse=True)
    table = np.zeros((p_inv.max(initial=-1) + 1, g_inv.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (p_inv, g_inv), 1)
    return ContingencyTable(table)


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2


def fg_ari(pred_labels, gt_labels, gt_foreground=None) -> float:
    """Adjusted Rand index over ground-truth foreground pixels.

    ``gt_foreground`` defaults to ``gt_labels > 0``. Returns 1.0 when the
    index is degenerate (both labelings a single cluster, or < 2 pixels).
    """
    pred = np.asarray(pred_labels)
    gt = np.asarray(gt_labels)
    if pred.shape != gt.shape:
        raise ValueError(f"label maps differ in shape: {pred.shape} vs {gt.shape}")
    fg = gt > 0 if gt_foreground is None else np.asarray(gt_foreground, dtype=bool)
    if fg.shape != gt.shape:
        raise ValueError("foreground mask shape differs from the label maps")
    table = contingency(pred[fg], gt[fg])
    n = table.total
    if n < 2:
        return 1.0
    index = _comb2(table.counts).sum()
    a = _comb2(table.row_sums).sum()
    b = _comb2(table.col_sums).sum()
    expected = a * b / _comb2(n)
    max_index = (a + b) / 2
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def _sizes(x, y):
    if isinstance(x, (set, frozenset)) or isinstance(y, (set, frozenset)):
        x, y = set(x), set(y)
        return len(x & y), len(x), len(y)
    x = np.asarray(x, dtype=bool)
    y = np.asarray(y, dtype=bool)
    return int((x & y).sum()), int(x.sum()), int(y.sum())


def dice(x, y) -> float:
    inter, nx, ny = _sizes(x, y)
    if nx + ny == 0:
        log.warning("dice of two empty masks defined as 1")
        return 1.0
    return 2 * inter / (nx + ny)


def iou(x, y) -> float:
    inter, nx, ny = _sizes(x, y)
    union = nx + ny - inter
    if union == 0:
        log.warning("iou of two empty masks defined as 1")
        return 1.0
    return inter / union


def _iou_matrix(pred_masks, gt_masks) -> tuple[np.ndarray, np.ndarray]:
    if not len(pred_masks) or not len(gt_masks):
        z = np.zeros((len(pred_masks), len(gt_masks)))
        return z, z
    p = np.stack([np.asarray(m, dtype=bool).ravel() for m in pred_masks]).astype(np.float64)
    g = np.stack([np.asarray(m, dtype=bool).ravel() for m in gt_masks]).astype(np.float64)
    inter = p @ g.T
    sp, sg = p.sum(1)[:, None], g.sum(1)[None, :]
    union = sp + sg - inter
    ious = np.divide(inter, union, out=np.ones_like(inter), where=union > 0)
    denom = sp + sg
    dices = np.divide(2 * inter, denom, out=np.ones_like(inter), where=denom > 0)
    return ious, dices


def best_match(pred_masks, gt_masks) -> MatchResult:
    """One-to-one assignment maximising total IoU; zero-overlap pairs count as unmatched."""
    ious, dices = _iou_matrix(pred_masks, gt_masks)
    result = MatchResult()
    matched_p, matched_g = set(), set()
    if ious.size:
        rows, cols = linear_sum_assignment(ious, maximize=True)
        for r, c in zip(rows, cols):
            if ious[r, c] > 0:
                result.pairs.append((int(r), int(c), float(ious[r, c]), float(dices[r, c])))
                matched_p.add(int(r))
                matched_g.add(int(c))
    result.unmatched_pred = [i for i in range(len(pred_masks)) if i not in matched_p]
    result.unmatched_gt = [j for j in range(len(gt_masks)) if j not in matched_g]
    return result


# ---------------------------------------------------------------------------
# dataset evaluation

def _read_predictions(pred_dir) -> dict:
    path = Path(pred_dir) / "predictions.json"
    if not path.exists():
        raise FileNotFoundError(f"no predictions.json in {pred_dir}")
    data = json.loads(path.read_text())
    return {s["id"]: s for s in data["samples"]}


def _pred_masks(pred_dir, record, mode, shape):
    root = Path(pred_dir)
    n = len(record["entry_ids"])
    if mode == "modal":
        index = np.array(Image.open(root / "pred_modal" / f"{record['id']}.png"))
        return index, [index == k + 1 for k in range(n)]
    masks = [np.array(Image.open(root / "pred_amodal" / f"{record['id']}_{k}.png")) != 0 for k in range(n)]
    return None, masks


def evaluate_dataset(pred_dir, gt_dir, mode: str = "modal") -> dict:
    """Per-image FG-ARI (modal mode) and Dice/IoU of optimally matched masks.

    Every ground-truth object contributes to mDice/mIoU; unmatched ones score 0.
    """
    if mode not in ("modal", "amodal"):
        raise ValueError(f"mode must be 'modal' or 'amodal', got {mode!r}")
    manifest = read_manifest(gt_dir)
    preds = _read_predictions(pred_dir)
    gt_ids = [s["id"] for s in manifest["samples"]]
    if set(gt_ids) != set(preds):
        missing = sorted(set(gt_ids) ^ set(preds))[:5]
        raise ValueError(f"prediction and ground-truth manifests do not match (e.g. {missing})")
    rows, dices, ious = [], [], []
    for entry in manifest["samples"]:
        gt_index, gt_amodal = read_sample_masks(gt_dir, entry)
        n_gt = entry["num_objects"]
        gt_masks = [gt_index == k + 1 for k in range(n_gt)] if mode == "modal" else gt_amodal
        pred_index, pred_masks = _pred_masks(pred_dir, preds[entry["id"]], mode, gt_index.shape)
        match = best_match(pred_masks, gt_masks)
        d = [p[3] for p in match.pairs] + [0.0] * len(match.unmatched_gt)
        i = [p[2] for p in match.pairs] + [0.0] * len(match.unmatched_gt)
        dices += d
        ious += i
        row = {
            "id": entry["id"],
            "n_gt": n_gt,
            "n_pred": len(pred_masks),
            "dice": float(np.mean(d)) if d else float("nan"),
            "iou": float(np.mean(i)) if i else float("nan"),
        }
        if mode == "modal":
            row["ari"] = fg_ari(pred_index, gt_index)
        rows.append(row)

    def stat(vals):
        vals = 100.0 * np.asarray(vals, dtype=np.float64)
        return (float(vals.mean()), float(vals.std())) if vals.size else (float("nan"), float("nan"))

    summary = {"mDice": stat(dices), "mIoU": stat(ious)}
    if mode == "modal":
        summary = {"ARI": stat([r["ari"] for r in rows]), **summary}
    return {"mode": mode, "rows": rows, "summary": summary}


def write_report(report: dict, path) -> None:
    """Per-image table followed by a ``metric,mean,std`` block (0-100 scale)."""
    mode = report["mode"]
    cols = ["id", "n_gt", "n_pred"] + (["ari"] if mode == "modal" else []) + ["dice", "iou"]
    with open(path, "w", newline="") as fh:
        fh.write(f"# mode={mode}; ARI is computed over ground-truth foreground pixels (FG-ARI)\n")
        fh.write("# mDice/mIoU average over all ground-truth objects; unmatched objects score 0\n")
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in report["rows"]:
            writer.writerow([r[c] if isinstance(r[c], str) else f"{r[c]:.6f}" if isinstance(r[c], float) else r[c]
                             for c in cols])
        fh.write("\n")
        writer.writerow(["metric", "mean", "std"])
        for name, (mean, std) in report["summary"].items():
            writer.writerow([name, f"{mean:.2f}", f"{std:.2f}"])
