"""Segmentation metrics: binary Jaccard and FBMS-style region P/R/F.

The multi-label protocol matches predicted clusters one-to-one against
ground-truth regions (background included) to maximize total intersection,
then scores precision/recall over all non-void pixels.  A ground-truth
object counts as extracted when its matched pair reaches F >= 0.75.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .flowio import LabelMap


class DimMismatch(ValueError):
    pass


EXTRACTED_F = 0.75


def _as_arrays(pred, gt):
    """Accept single LabelMaps or aligned sequences; return stacked arrays."""
    if isinstance(pred, LabelMap):
        pred, gt = [pred], [gt]
    if len(pred) != len(gt):
        raise DimMismatch(f"{len(pred)} predicted frames vs {len(gt)} gt frames")
    for p, g in zip(pred, gt):
        if (p.width, p.height) != (g.width, g.height):
            raise DimMismatch(
                f"pred {p.width}x{p.height} vs gt {g.width}x{g.height}"
            )
    return (
        np.concatenate([p.labels.ravel() for p in pred]),
        np.concatenate([g.labels.ravel() for g in gt]),
    )


def jaccard_binary(pred: LabelMap, gt: LabelMap, fg_label: int) -> float:
    """Intersection over union of the fg_label masks; 1 when both empty."""
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise DimMismatch(
            f"pred {pred.width}x{pred.height} vs gt {gt.width}x{gt.height}"
        )
    p = pred.labels == fg_label
    g = gt.labels == fg_label
    np_, ng = int(p.sum()), int(g.sum())
    if np_ == 0 and ng == 0:
        return 1.0
    inter = int((p & g).sum())
    return inter / (np_ + ng - inter)


def _best_assignment(inter: np.ndarray):
    """One-to-one assignment maximizing total intersection.

    Brute force with lexicographic tie-breaking for small label counts,
    Hungarian (scipy) beyond.
    """
    nc, ng = inter.shape
    if nc == 0 or ng == 0:
        return []
    if max(nc, ng) <= 8:
        best, best_total = None, -1
        if nc <= ng:
            for perm in itertools.permutations(range(ng), nc):
                total = sum(inter[i, perm[i]] for i in range(nc))
                if total > best_total:
                    best_total = total
                    best = [(i, perm[i]) for i in range(nc)]
        else:
            for perm in itertools.permutations(range(nc), ng):
                total = sum(inter[perm[j], j] for j in range(ng))
                if total > best_total:
                    best_total = total
                    best = [(perm[j], j) for j in range(ng)]
        return sorted(best)
    from scipy.optimize import linear_sum_assignment

    rows, cols = linear_sum_assignment(-inter)
    return sorted(zip(rows.tolist(), cols.tolist()))


@dataclass
class PRFResult:
    precision: float
    recall: float
    f_measure: float
    pair_f: dict          # gt label -> (matched pred label, pair F)
    extracted_objects: int
    background_label: int


def fbms_prf(pred, gt) -> PRFResult:
    """Region precision/recall/F with optimal cluster-to-region assignment.

    `pred` and `gt` are LabelMaps or aligned lists of LabelMaps; void (0)
    pixels are excluded from every count on both sides.
    """
    pv, gv = _as_arrays(pred, gt)
    mask = (pv > 0) & (gv > 0)
    clusters = np.unique(pv[pv > 0])
    regions = np.unique(gv[gv > 0])
    inter = np.zeros((len(clusters), len(regions)), dtype=np.int64)
    if mask.any():
        ci = np.searchsorted(clusters, pv[mask])
        gi = np.searchsorted(regions, gv[mask])
        np.add.at(inter, (ci, gi), 1)
    cluster_sizes = np.array([(pv == c).sum() for c in clusters], dtype=np.int64)
    region_sizes = np.array([(gv == r).sum() for r in regions], dtype=np.int64)

    matches = _best_assignment(inter)
    matched_total = sum(int(inter[i, j]) for i, j in matches)
    total_pred = int(cluster_sizes.sum())
    total_gt = int(region_sizes.sum())
    precision = matched_total / total_pred if total_pred else 0.0
    recall = matched_total / total_gt if total_gt else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    if len(regions):
        bg_idx = min(range(len(regions)), key=lambda j: (-region_sizes[j], regions[j]))
        background = int(regions[bg_idx])
    else:
        background = 0
    pair_f = {}
    extracted = 0
    for i, j in matches:
        pi = int(inter[i, j]) / cluster_sizes[i] if cluster_sizes[i] else 0.0
        ri = int(inter[i, j]) / region_sizes[j] if region_sizes[j] else 0.0
        fi = 2 * pi * ri / (pi + ri) if pi + ri else 0.0
        pair_f[int(regions[j])] = (int(clusters[i]), fi)
        if int(regions[j]) != background and fi >= EXTRACTED_F:
            extracted += 1
    return PRFResult(precision, recall, f, pair_f, extracted, background)


def sparse_density(frame_seeds: dict, gt_maps: dict) -> float:
    """Labeled seeds per annotated gt pixel, averaged over gt frames."""
    ratios = []
    for t in sorted(gt_maps):
        annotated = int((gt_maps[t].labels > 0).sum())
        if annotated == 0:
            continue
        sf = frame_seeds.get(t)
        ratios.append((len(sf.seeds) if sf else 0) / annotated)
    return float(np.mean(ratios)) if ratios else 0.0


@dataclass
class EvalReport:
    """Aggregated scores for one sequence."""

    frame_jaccard: list = field(default_factory=list)
    mean_jaccard: float = 0.0
    object_jaccard: dict = field(default_factory=dict)  # gt label -> mean IoU
    precision: float = 0.0
    recall: float = 0.0
    f_measure: float = 0.0
    extracted_objects: int = 0
    density: float | None = None

    def lines(self):
        out = [
            f"mean_jaccard={self.mean_jaccard:.6f}",
            f"precision={self.precision:.6f}",
            f"recall={self.recall:.6f}",
            f"f_measure={self.f_measure:.6f}",
            f"extracted_objects={self.extracted_objects}",
        ]
        for lab in sorted(self.object_jaccard):
            out.append(f"jaccard_obj_{lab}={self.object_jaccard[lab]:.6f}")
        if self.density is not None:
            out.append(f"density={self.density:.6f}")
        return out

    def text(self):
        return "\n".join(self.lines()) + "\n"


def evaluate_sequence(pred_maps, gt_maps) -> EvalReport:
    """Full report: FBMS P/R/F plus per-object Jaccard via the matching.

    Per-object Jaccard maps each non-background gt region to its matched
    cluster and averages the per-frame IoU over frames where either mask is
    non-empty.
    """
    prf = fbms_prf(pred_maps, gt_maps)
    report = EvalReport(
        precision=prf.precision,
        recall=prf.recall,
        f_measure=prf.f_measure,
        extracted_objects=prf.extracted_objects,
    )
    for gt_label, (pred_label, _) in sorted(prf.pair_f.items()):
        if gt_label == prf.background_label:
            continue
        per_frame = []
        for p, g in zip(pred_maps, gt_maps):
            has_p = bool((p.labels == pred_label).any())
            has_g = bool((g.labels == gt_label).any())
            if not has_p and not has_g:
                continue
            remap = LabelMap(p.width, p.height,
                             np.where(p.labels == pred_label, gt_label, 0))
            per_frame.append(jaccard_binary(remap, g, gt_label))
        if per_frame:
            report.object_jaccard[gt_label] = float(np.mean(per_frame))
    if report.object_jaccard:
        per_frame_all = []
        for p, g in zip(pred_maps, gt_maps):
            vals = []
            for gt_label, (pred_label, _) in prf.pair_f.items():
                if gt_label == prf.background_label:
                    continue
                remap = LabelMap(p.width, p.height,
                                 np.where(p.labels == pred_label, gt_label, 0))
                vals.append(jaccard_binary(remap, g, gt_label))
            if vals:
                per_frame_all.append(float(np.mean(vals)))
        report.frame_jaccard = per_frame_all
        report.mean_jaccard = float(np.mean(list(report.object_jaccard.values())))
    return report
