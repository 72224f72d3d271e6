"""Point-cloud metrics and the cross-section-count evaluation sweep.

Chamfer distance here is the sum of the two directed means of *squared*
nearest-neighbor distances; Hausdorff is the larger of the two directed
maxima of unsquared distances. Nearest neighbors run on a k-d tree.
"""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .curvygan import reconstruct
from .errors import CurvyError
from .geometry import sample_planes, slice_mesh
from .graphrep import build_graph
from .splitfit import CrossSectionSet, split_and_fit

__all__ = [
    "chamfer",
    "hausdorff",
    "ShapeSample",
    "EvalReport",
    "section_set_from_mesh",
    "sweep_cross_sections",
]


def _as_cloud(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise ValueError("point cloud must be a non-empty (n, 3) array")
    return pts


def chamfer(a, b):
    """mean_a min_b ||a-b||^2 + mean_b min_a ||a-b||^2."""
    a = _as_cloud(a)
    b = _as_cloud(b)
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(np.mean(d_ab ** 2) + np.mean(d_ba ** 2))


def hausdorff(a, b):
    """max of the two directed Hausdorff distances (unsquared)."""
    a = _as_cloud(a)
    b = _as_cloud(b)
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(max(d_ab.max(), d_ba.max()))


@dataclass
class ShapeSample:
    """One evaluation shape: its mesh, ground-truth cloud, and class label."""

    name: str
    class_name: str
    mesh: object
    cloud: np.ndarray

    def __post_init__(self):
        self.cloud = _as_cloud(self.cloud)


@dataclass
class EvalReport:
    """Results of a cross-section-count sweep.

    ``per_count[count]`` maps each class name to its mean Chamfer
    distance at that section count, plus the key ``"mean"`` for the mean
    of the class means. ``per_class`` and ``samples`` are taken at
    ``ref_count`` (10 when swept, otherwise the largest count).
    """

    counts: list
    ref_count: int
    per_count: dict
    per_class: dict
    samples: list
    notes: list = field(default_factory=list)

    def to_json(self):
        payload = {
            "counts": list(self.counts),
            "ref_count": self.ref_count,
            "per_count": {str(c): self.per_count[c] for c in self.counts},
            "per_class": self.per_class,
            "samples": self.samples,
            "notes": list(self.notes),
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_csv(self):
        """Wide table: one row per count, one column per class, then mean."""
        classes = sorted({cls for table in self.per_count.values()
                          for cls in table if cls != "mean"})
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["count"] + classes + ["mean"])
        for count in self.counts:
            table = self.per_count[count]
            row = [count]
            for cls in classes + ["mean"]:
                row.append(repr(table[cls]) if cls in table else "")
            writer.writerow(row)
        return buf.getvalue()


def section_set_from_mesh(mesh, count, k=8, strategy="axis", axis=2, seed=0):
    """Slice a mesh with ``count`` planes and fit every slice.

    Each plane contributes its longest contour; planes that miss the mesh
    are skipped. Raises :class:`CurvyError` if fewer than 2 sections
    survive.
    """
    sections = []
    for plane in sample_planes(mesh, count, strategy=strategy, axis=axis, seed=seed):
        contours = slice_mesh(mesh, plane)
        if not contours:
            continue
        longest = max(contours, key=lambda c: c.length)
        sections.append(split_and_fit(longest, k, plane=plane))
    if len(sections) < 2:
        raise CurvyError(f"only {len(sections)} usable cross-sections "
                         f"from {count} planes")
    return CrossSectionSet(sections)


def _derived_seed(*entropy):
    return int(np.random.SeedSequence(entropy=entropy).generate_state(1)[0])


def sweep_cross_sections(gen, ae, shapes, counts=(2, 5, 10, 15, 20, 25), k=8,
                         seed=0, strategy="axis", axis=2):
    """Reconstruct every shape at every section count and tabulate Chamfer.

    Returns an :class:`EvalReport`. Shapes whose slicing or fitting fails
    at some count are recorded in ``notes`` and excluded from that
    count's means.
    """
    shapes = list(shapes)
    counts = sorted(dict.fromkeys(int(c) for c in counts))
    if not shapes or not counts:
        raise ValueError("need at least one shape and one section count")
    ref_count = 10 if 10 in counts else max(counts)

    per_count = {}
    per_class = {}
    samples_out = []
    notes = []
    for count in counts:
        class_values = defaultdict(list)
        sample_rows = []
        for idx, shape in enumerate(shapes):
            try:
                css = section_set_from_mesh(
                    shape.mesh, count, k=k, strategy=strategy, axis=axis,
                    seed=_derived_seed(seed, count, idx, 1))
                graph = build_graph(css)
                recon = reconstruct(gen, ae, graph,
                                    seed=_derived_seed(seed, count, idx, 2))
            except CurvyError as exc:
                notes.append(f"count={count} shape={shape.name}: {exc}")
                continue
            cd = chamfer(recon, shape.cloud)
            class_values[shape.class_name].append(cd)
            sample_rows.append({
                "name": shape.name,
                "class": shape.class_name,
                "chamfer": cd,
                "hausdorff": hausdorff(recon, shape.cloud),
            })
        table = {cls: float(np.mean(vals)) for cls, vals in class_values.items()}
        if table:
            table["mean"] = float(np.mean(list(table.values())))
        per_count[count] = table
        if count == ref_count:
            per_class = {c: v for c, v in table.items() if c != "mean"}
            samples_out = sample_rows
    return EvalReport(counts=counts, ref_count=ref_count, per_count=per_count,
                      per_class=per_class, samples=samples_out, notes=notes)
