"""Contour simplification, adaptive splitting, and parametric piece fitting.

A closed contour is split at its k sharpest direction changes, then each
arc is fit by a degree-5 polynomial in the normalized chord parameter
t in [0, 1]. All pieces are solved jointly: endpoint interpolation is
enforced exactly through KKT equality constraints, and tangent agreement
across junctions (scaled by each piece's chord span) enters as a tiny
quadratic penalty so that genuinely cornered data stays cornered.

The system is assembled in a shifted Legendre basis for conditioning and
converted to monomial coefficients afterwards; ``Piece.coeffs`` row r is
the coefficient of t**r.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as _leg
from numpy.polynomial import polynomial as _poly

from .errors import FitError
from .geometry import Contour, Plane

__all__ = [
    "Piece",
    "CrossSection",
    "CrossSectionSet",
    "SamplingConfig",
    "douglas_peucker",
    "turning_angles",
    "adaptive_split",
    "upsample_midpoints",
    "fit_cross_section",
    "split_and_fit",
    "eval_piece",
    "sample_cross_section",
    "max_fit_residual",
]

_DEGREE = 5
_NB = _DEGREE + 1
_JUNCTION_TOL = 1e-8


def _legendre_tables():
    """Endpoint values/derivatives and the Legendre-to-monomial map on [0, 1]."""
    val0 = np.empty(_NB)
    val1 = np.empty(_NB)
    der0 = np.empty(_NB)
    der1 = np.empty(_NB)
    mono = np.zeros((_NB, _NB))
    shift = np.array([-1.0, 2.0])  # u = 2 t - 1
    for r in range(_NB):
        unit = np.zeros(_NB)
        unit[r] = 1.0
        val0[r] = _leg.legval(-1.0, unit)
        val1[r] = _leg.legval(1.0, unit)
        dunit = _leg.legder(unit)
        der0[r] = 2.0 * _leg.legval(-1.0, dunit)
        der1[r] = 2.0 * _leg.legval(1.0, dunit)
        coeffs_u = _leg.leg2poly(unit)
        acc = np.array([coeffs_u[-1]])
        for j in range(len(coeffs_u) - 2, -1, -1):
            acc = _poly.polymul(acc, shift)
            acc[0] += coeffs_u[j]
        mono[: len(acc), r] = acc
    return val0, val1, der0, der1, mono


_VAL0, _VAL1, _DER0, _DER1, _LEG_TO_MONO = _legendre_tables()


def _endpoint_nullspace():
    """Orthonormal basis of coefficient vectors with f(0) = f(1) = 0.

    Legendre values at the interval ends alternate sign, so the nullspace
    of [value-at-0; value-at-1] splits into even rows summing to zero and
    odd rows summing to zero.
    """
    raw = np.array([
        [1.0, 0.0, -1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0, -1.0],
    ]).T
    q, _ = np.linalg.qr(raw)
    return q


def _curvature_gram():
    """Gram matrix of second derivatives over t in [0, 1] (chord parameter)."""
    gram = np.zeros((_NB, _NB))
    for i in range(_NB):
        unit_i = np.zeros(_NB)
        unit_i[i] = 1.0
        di = _leg.legder(unit_i, 2)
        for j in range(i, _NB):
            unit_j = np.zeros(_NB)
            unit_j[j] = 1.0
            dj = _leg.legder(unit_j, 2)
            prod = _leg.legmul(di, dj)
            integ = _leg.legint(prod)
            val = _leg.legval(1.0, integ) - _leg.legval(-1.0, integ)
            gram[i, j] = gram[j, i] = 8.0 * val
    return gram


_E_NULL = _endpoint_nullspace()
_CURV_GRAM = _curvature_gram()


@dataclass
class Piece:
    """One polynomial arc: (6, 3) coefficients, row r multiplies t**r."""

    coeffs: np.ndarray
    chord_span: float

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (_NB, 3):
            raise FitError(f"piece coefficients must be (6, 3), got {self.coeffs.shape}")
        self.chord_span = float(self.chord_span)
        if not (self.chord_span > 0.0 and math.isfinite(self.chord_span)):
            raise FitError("piece chord span must be positive and finite")


def eval_piece(piece, t):
    """Evaluate a piece at parameter(s) t in [0, 1] by Horner's scheme.

    Scalar t gives a (3,) point; an array of shape (m,) gives (m, 3).
    """
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("piece parameter outside [0, 1]")
    c = piece.coeffs
    res = np.broadcast_to(c[-1], arr.shape + (3,)).copy()
    for r in range(_DEGREE - 1, -1, -1):
        res = res * arr[..., None] + c[r]
    return res


@dataclass
class CrossSection:
    """A closed loop of pieces lying (approximately) in one plane."""

    pieces: list
    plane: Plane

    def __post_init__(self):
        if len(self.pieces) < 2:
            raise FitError("cross-section needs at least 2 pieces")
        ends = np.array([eval_piece(p, 1.0) for p in self.pieces])
        starts = np.array([eval_piece(p, 0.0) for p in self.pieces])
        gaps = np.linalg.norm(ends - np.roll(starts, -1, axis=0), axis=1)
        worst = float(gaps.max())
        if worst > _JUNCTION_TOL:
            raise FitError(f"cross-section junction gap {worst:.3e} exceeds {_JUNCTION_TOL:.0e}")

    @property
    def num_pieces(self):
        return len(self.pieces)


@dataclass
class CrossSectionSet:
    """All cross-sections of one shape; every section has the same piece count."""

    sections: list

    def __post_init__(self):
        if not self.sections:
            raise FitError("cross-section set is empty")
        counts = {s.num_pieces for s in self.sections}
        if len(counts) != 1:
            raise FitError(f"mismatched piece counts across sections: {sorted(counts)}")

    @property
    def num_sections(self):
        return len(self.sections)

    @property
    def pieces_per_section(self):
        return self.sections[0].num_pieces

    def tensor(self):
        """Stacked coefficients, shape (m, 6*k, 3)."""
        return np.stack([
            np.concatenate([p.coeffs for p in s.pieces], axis=0) for s in self.sections
        ])


@dataclass
class SamplingConfig:
    """Density for sampling fitted sections: rho points per unit arc length."""

    rho: float = 64.0


def _chord_distance(pts, a, b):
    """Perpendicular distance of pts to the line through a and b."""
    ab = b - a
    denom = float(ab @ ab)
    if denom <= 1e-300:
        return np.linalg.norm(pts - a, axis=1)
    t = (pts - a) @ ab / denom
    return np.linalg.norm(pts - a - t[:, None] * ab, axis=1)


def _dp_span(pts, eps, keep):
    stack = [(0, len(pts) - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        d = _chord_distance(pts[lo + 1:hi], pts[lo], pts[hi])
        j = int(np.argmax(d))
        if d[j] > eps:
            mid = lo + 1 + j
            keep[mid] = True
            stack.append((lo, mid))
            stack.append((mid, hi))


def douglas_peucker(points, eps, closed=False):
    """Douglas-Peucker simplification; returns kept indices, ascending.

    A point is kept when its perpendicular distance to the current chord
    exceeds eps. Closed input is anchored at the two mutually farthest
    points and both arcs are simplified independently; the anchors are
    always part of the result.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n < 2:
        raise ValueError("need at least 2 points")
    if eps < 0.0:
        raise ValueError("eps must be non-negative")
    if not closed:
        keep = np.zeros(n, dtype=bool)
        keep[0] = keep[-1] = True
        _dp_span(pts, eps, keep)
        return np.flatnonzero(keep)
    if n < 3:
        raise ValueError("closed polyline needs at least 3 points")
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    i, j = divmod(int(np.argmax(d2)), n)
    if i > j:
        i, j = j, i
    keep = np.zeros(n, dtype=bool)
    for arc in (np.arange(i, j + 1), np.r_[np.arange(j, n), np.arange(0, i + 1)]):
        sub_keep = np.zeros(len(arc), dtype=bool)
        sub_keep[0] = sub_keep[-1] = True
        _dp_span(pts[arc], eps, sub_keep)
        keep[arc[sub_keep]] = True
    return np.flatnonzero(keep)


def _newell_normal(pts):
    nxt = np.roll(pts, -1, axis=0)
    n = np.array([
        np.sum((pts[:, 1] - nxt[:, 1]) * (pts[:, 2] + nxt[:, 2])),
        np.sum((pts[:, 2] - nxt[:, 2]) * (pts[:, 0] + nxt[:, 0])),
        np.sum((pts[:, 0] - nxt[:, 0]) * (pts[:, 1] + nxt[:, 1])),
    ])
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    return n / norm


def turning_angles(points, normal=None):
    """Signed turning angle at every vertex of a closed polyline.

    The angle between the incoming and outgoing directions, signed by the
    polygon normal (Newell) or the supplied one, clamped to [-pi/2, +pi/2].
    """
    pts = np.asarray(points, dtype=np.float64)
    din = pts - np.roll(pts, 1, axis=0)
    dout = np.roll(pts, -1, axis=0) - pts
    cross = np.cross(din, dout)
    ang = np.arctan2(np.linalg.norm(cross, axis=1), np.einsum("ij,ij->i", din, dout))
    if normal is None:
        normal = _newell_normal(pts)
        if normal is None:
            normal = np.array([0.0, 0.0, 1.0])
    sign = np.sign(cross @ normal)
    sign[sign == 0.0] = 1.0
    return sign * np.minimum(ang, np.pi / 2.0)


def adaptive_split(contour, k):
    """Pick k split indices at the sharpest turns of a closed contour.

    Douglas-Peucker runs with eps halved from bbox-diagonal/10 until the
    kept set has more than k points (at most 41 rounds); if the schedule
    exhausts -- exactly collinear interiors are never kept at any positive
    eps -- every vertex becomes a candidate. Candidates are ranked by
    absolute turning angle, ties broken by the smaller index.
    """
    if k < 2:
        raise ValueError("need k >= 2 pieces")
    if not contour.closed:
        raise FitError("adaptive splitting requires a closed contour")
    pts = contour.points
    n = len(pts)
    if n < k + 1:
        raise FitError(f"contour too small for k={k}: only {n} distinct points")
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    if diag <= 0.0:
        raise FitError("degenerate contour with zero diagonal")
    kept = np.empty(0, dtype=int)
    for i in range(41):
        kept = douglas_peucker(pts, diag / 10.0 * 2.0 ** (-i), closed=True)
        if len(kept) > k or len(kept) == n:
            break
    if len(kept) <= k:
        kept = np.arange(n)
    angles = np.abs(turning_angles(pts))
    order = np.lexsort((kept, -angles[kept]))
    return np.sort(kept[order[:k]])


def upsample_midpoints(contour, min_points):
    """Insert edge midpoints (doubling) until the contour has >= min_points."""
    if not contour.closed:
        raise FitError("midpoint upsampling requires a closed contour")
    pts = contour.points
    if len(pts) >= min_points:
        return contour
    while len(pts) < min_points:
        mids = (pts + np.roll(pts, -1, axis=0)) / 2.0
        merged = np.empty((2 * len(pts), 3))
        merged[0::2] = pts
        merged[1::2] = mids
        pts = merged
    return Contour(pts, closed=True)


def _bestfit_plane(pts):
    normal = _newell_normal(pts)
    if normal is None:
        normal = np.array([0.0, 0.0, 1.0])
    return Plane(normal, float(normal @ pts.mean(axis=0)))


def _piece_cover(pts, splits):
    """Per piece: (covered indices, chord parameters t in [0,1], chord span)."""
    n = len(pts)
    k = len(splits)
    cover = []
    for j in range(k):
        a, b = splits[j], splits[(j + 1) % k]
        if b > a:
            idx = np.arange(a, b + 1)
        else:
            idx = np.r_[np.arange(a, n), np.arange(0, b + 1)]
        gaps = np.linalg.norm(np.diff(pts[idx], axis=0), axis=1)
        span = float(gaps.sum())
        if span <= 0.0:
            raise FitError("degenerate piece with zero chord span")
        t = np.concatenate([[0.0], np.cumsum(gaps)]) / span
        t[-1] = 1.0
        cover.append((idx, t, span))
    return cover


def _checked_splits(splits, n):
    splits = np.asarray(splits, dtype=np.int64).reshape(-1)
    if len(splits) < 2:
        raise FitError("need at least 2 split indices")
    if len(np.unique(splits)) != len(splits):
        raise FitError("split indices must be distinct")
    if splits.min() < 0 or splits.max() >= n:
        raise FitError("split index out of range")
    return np.sort(splits)


def fit_cross_section(contour, splits, degree=5, plane=None,
                      tangent_weight=1e-12, rcond=1e-8):
    """Fit degree-5 pieces between split vertices of a closed contour.

    Piece j is parameterized by normalized cumulative chord length over
    the vertices it covers (both split vertices included) and must pass
    through its split vertices exactly, so junctions close by
    construction. Subject to that, each piece minimizes its squared
    residual to the covered vertices; directions the data leaves free
    (pieces covering fewer than six independent parameters) are then
    resolved jointly by minimizing bending energy, with scaled tangent
    agreement across junctions -- f_j'(1)/span_j vs f_{j+1}'(0)/span_{j+1}
    -- added at the tiny ``tangent_weight`` so genuinely cornered data
    stays cornered. ``rcond`` is the relative singular-value cutoff that
    decides which directions count as data-determined.
    """
    if degree != _DEGREE:
        raise ValueError("only degree-5 pieces are supported")
    if not contour.closed:
        raise FitError("fitting requires a closed contour")
    pts = contour.points
    n = len(pts)
    splits = _checked_splits(splits, n)
    k = len(splits)
    piece_data = _piece_cover(pts, splits)

    # Stage 1: per piece, exact least squares with pinned endpoints.
    # f = line(endpoints) + N w, where columns of N vanish at t=0 and 1;
    # a truncated SVD keeps only data-determined directions of w.
    bases = []
    free = []
    for j, (idx, t, _) in enumerate(piece_data):
        p0 = pts[splits[j]]
        p1 = pts[splits[(j + 1) % k]]
        c_line = np.zeros((_NB, 3))
        c_line[0] = 0.5 * (p0 + p1)
        c_line[1] = 0.5 * (p1 - p0)
        vander = _leg.legvander(2.0 * t - 1.0, _DEGREE)
        design = vander @ _E_NULL
        target = pts[idx] - vander @ c_line
        u, s, vt = np.linalg.svd(design, full_matrices=True)
        rank = int(np.sum(s > rcond * s[0])) if s.size and s[0] > 0.0 else 0
        if rank:
            w = vt[:rank].T @ ((u[:, :rank].T @ target) / s[:rank, None])
        else:
            w = np.zeros((_E_NULL.shape[1], 3))
        bases.append(c_line + _E_NULL @ w)
        free.append(_E_NULL @ vt[rank:].T)

    dims = [f.shape[1] for f in free]
    total_free = sum(dims)
    if total_free:
        theta = _resolve_free_directions(bases, free, dims, piece_data,
                                         tangent_weight)
    else:
        theta = np.vstack(bases)
    if not np.all(np.isfinite(theta)):
        raise FitError("fitting system produced non-finite coefficients")

    pieces = []
    for j in range(k):
        mono = _LEG_TO_MONO @ theta[j * _NB:(j + 1) * _NB]
        pieces.append(Piece(mono, piece_data[j][2]))
    if plane is None:
        plane = _bestfit_plane(pts)
    return CrossSection(pieces, plane)


def _resolve_free_directions(bases, free, dims, piece_data, tangent_weight):
    """Stage 2: fill data-free directions by minimizing bending energy.

    Minimizes sum_j span_j^-3 * integral |f_j''|^2 dt plus the scaled
    junction-tangent penalty over the affine family theta = base + F z;
    both terms vanish on straight pieces, so exactly linear data stays
    exactly linear regardless of how underdetermined it is.
    """
    k = len(bases)
    cols = _NB * k
    base = np.vstack(bases)
    fmap = np.zeros((cols, sum(dims)))
    offset = 0
    for j, block in enumerate(free):
        fmap[j * _NB:(j + 1) * _NB, offset:offset + dims[j]] = block
        offset += dims[j]

    quad = np.zeros((cols, cols))
    for j in range(k):
        span = piece_data[j][2]
        quad[j * _NB:(j + 1) * _NB, j * _NB:(j + 1) * _NB] = _CURV_GRAM / span ** 3
    tang = np.zeros((k, cols))
    for j in range(k):
        jn = (j + 1) % k
        tang[j, j * _NB:(j + 1) * _NB] = _DER1 / piece_data[j][2]
        tang[j, jn * _NB:(jn + 1) * _NB] -= _DER0 / piece_data[jn][2]
    quad += tangent_weight * (tang.T @ tang)

    hess = fmap.T @ quad @ fmap
    grad = fmap.T @ (quad @ base)
    try:
        z = np.linalg.solve(hess, -grad)
    except np.linalg.LinAlgError as exc:
        raise FitError("unresolvable degeneracy in the fitting system") from exc
    return base + fmap @ z


def split_and_fit(contour, k, plane=None, **fit_kwargs):
    """Upsample if needed, split adaptively, and fit in one call."""
    c = contour
    if len(c.points) < k + 1:
        c = upsample_midpoints(c, k + 1)
    return fit_cross_section(c, adaptive_split(c, k), plane=plane, **fit_kwargs)


def max_fit_residual(contour, splits, section):
    """Largest distance between fitted pieces and the vertices they cover."""
    pts = contour.points
    splits = _checked_splits(splits, len(pts))
    worst = 0.0
    for piece, (idx, t, _) in zip(section.pieces, _piece_cover(pts, splits)):
        errs = np.linalg.norm(eval_piece(piece, t) - pts[idx], axis=1)
        worst = max(worst, float(errs.max()))
    return worst


def _piece_arclength(piece, segments=64):
    pts = eval_piece(piece, np.linspace(0.0, 1.0, segments + 1))
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def sample_cross_section(section, cfg=None):
    """Sample points along every piece, proportional to arc length.

    Each piece gets max(2, ceil(rho * arclength)) evenly spaced parameter
    values; arc length uses a 64-segment quadrature.
    """
    cfg = cfg or SamplingConfig()
    if cfg.rho <= 0.0:
        raise ValueError("sampling density rho must be positive")
    chunks = []
    for piece in section.pieces:
        count = max(2, math.ceil(cfg.rho * _piece_arclength(piece)))
        chunks.append(eval_piece(piece, np.linspace(0.0, 1.0, count)))
    return np.vstack(chunks)
