"""Shape and structure metrics for comparing edits against a target."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    EmptyListError,
    EmptySetError,
    NormalizationError,
    RenderInvalidError,
    SpecMismatchError,
)
from .kernel import GridSpec, TSDFGrid, render, surface_points
from .sequence import ConstructionSequence, edit_distance, sequence_tokens

DEFAULT_LAMBDA = 0.1
HISTOGRAM_BINS = 28


def iou(a: TSDFGrid, b: TSDFGrid) -> float:
    """Occupancy intersection over union; two empty shapes count as equal."""
    if a.spec != b.spec:
        raise SpecMismatchError("grids use different specs")
    occ_a, occ_b = a.occupancy(), b.occupancy()
    union = int((occ_a | occ_b).sum())
    if union == 0:
        return 1.0
    return int((occ_a & occ_b).sum()) / union


def chamfer(a, b) -> float:
    """Symmetric mean squared nearest-neighbor distance between point sets."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise EmptySetError("chamfer needs two nonempty point sets")
    d_ab = cKDTree(b).query(a)[0]
    d_ba = cKDTree(a).query(b)[0]
    return 0.5 * float(np.mean(d_ab**2)) + 0.5 * float(np.mean(d_ba**2))


def _check_distribution(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if (p < 0).any() or not math.isclose(float(p.sum()), 1.0, abs_tol=1e-9):
        raise NormalizationError("histogram must be non-negative and sum to 1")
    return p


def jsd(p, q) -> float:
    """Jensen-Shannon divergence in nats; symmetric, at most ln 2."""
    p = _check_distribution(p)
    q = _check_distribution(q)
    if p.shape != q.shape:
        raise NormalizationError("histograms must share a shape")
    m = (p + q) / 2
    # 0·log(0/m) terms contribute nothing
    kl_pm = float(np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1) / np.where(m > 0, m, 1)), 0.0)))
    kl_qm = float(np.sum(np.where(q > 0, q * np.log(np.where(q > 0, q, 1) / np.where(m > 0, m, 1)), 0.0)))
    return 0.5 * kl_pm + 0.5 * kl_qm


def occupancy_histogram(grids, bins: int = HISTOGRAM_BINS) -> np.ndarray:
    """Aggregate occupied-voxel centers of several grids into one normalized histogram.

    A fixed spatial binning makes the divergence comparable across grid
    resolutions.
    """
    edges = np.linspace(-0.5, 0.5, bins + 1)
    total = np.zeros((bins, bins, bins))
    for grid in grids:
        pts = grid.spec.points()[grid.occupancy().ravel()]
        if len(pts):
            hist, _ = np.histogramdd(pts, bins=(edges, edges, edges))
            total += hist
    mass = total.sum()
    if mass == 0:
        raise NormalizationError("no occupied voxels to histogram")
    return total / mass


def invalid_rate(invalid_flags) -> float:
    """Fraction of outcomes that failed to parse or render."""
    flags = list(invalid_flags)
    if not flags:
        raise EmptyListError("no outcomes to rate")
    return sum(bool(f) for f in flags) / len(flags)


def composite_objective(
    candidate: ConstructionSequence,
    target: TSDFGrid,
    original: ConstructionSequence,
    lam: float = DEFAULT_LAMBDA,
    spec: GridSpec | None = None,
) -> float:
    """Geometry discrepancy plus lam times normalized structural disturbance.

    The geometry term is the chamfer distance between surface samples of the
    candidate's rendering and of the target; a candidate that fails to render
    scores infinite rather than raising.
    """
    spec = spec or target.spec
    try:
        rendered = render(candidate, spec)
    except RenderInvalidError:
        return math.inf
    geometry = chamfer(surface_points(rendered), surface_points(target))
    if lam == 0.0:
        return geometry
    structure = edit_distance(candidate, original) / len(sequence_tokens(original))
    return geometry + lam * structure


@dataclass(frozen=True)
class MetricsReport:
    """Flat record of every metric for one candidate; absent fields stay None.

    An invalid candidate keeps only the structure fields: there is no shape
    to measure.
    """

    invalid: bool
    iou: float | None = None
    chamfer_mean: float | None = None
    jsd: float | None = None
    edit_distance: int | None = None
    objective: float | None = None

    def to_fields(self) -> list[tuple[str, object]]:
        out: list[tuple[str, object]] = [("invalid", self.invalid)]
        for key in ("iou", "chamfer_mean", "jsd", "edit_distance", "objective"):
            value = getattr(self, key)
            if value is not None:
                out.append((key, value))
        return out


def report_for(
    candidate: ConstructionSequence,
    target: TSDFGrid,
    original: ConstructionSequence | None = None,
    lam: float = DEFAULT_LAMBDA,
) -> MetricsReport:
    """Assemble the full report for a candidate against a target grid."""
    dist = edit_distance(candidate, original) if original is not None else None
    try:
        rendered = render(candidate, target.spec)
    except RenderInvalidError:
        objective = math.inf if original is not None else None
        return MetricsReport(invalid=True, edit_distance=dist, objective=objective)
    objective = (
        composite_objective(candidate, target, original, lam) if original is not None else None
    )
    return MetricsReport(
        invalid=False,
        iou=iou(rendered, target),
        chamfer_mean=chamfer(surface_points(rendered), surface_points(target)),
        jsd=jsd(occupancy_histogram([rendered]), occupancy_histogram([target])),
        edit_distance=dist,
        objective=objective,
    )
