"""Zeros of the characteristic determinant in a rectangle.

Counting uses the argument principle along the rectangle boundary with
adaptive phase tracking.  Boxes are split into quadrants until each holds at
most one zero, then refined by Newton's method with the variational
derivative.  All boxes of one subdivision level are evaluated in one batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chardet import Lattice, char_det_batch, char_det_scaled
from .errors import BoundaryTooClose, IntegrationError, ValidationError
from .model import ProblemSpec

__all__ = [
    "Rect",
    "Eigenvalue",
    "EigenvalueSet",
    "count_zeros_rect",
    "find_eigenvalues",
    "find_eigenvalues_in_boxes",
    "PairingReport",
    "pair_with_lattice",
    "GapResult",
    "separation_gap",
]

GUARD_REL = 1e-8
CLUSTER_DIAG = 1e-6
DIP_RATIO = 0.5
_SPLIT_FRACTIONS = (0.5417, 0.4583, 0.5731, 0.4269, 0.6123, 0.3877)
_MAX_SAMPLES = 40_000


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValidationError("rectangle must have positive width and height")

    @classmethod
    def parse(cls, text: str) -> "Rect":
        parts = [float(v) for v in text.split(",")]
        if len(parts) != 4:
            raise ValidationError("rectangle must be given as x0,x1,y0,y1")
        return cls(*parts)

    @classmethod
    def around(cls, z: complex, r: float) -> "Rect":
        return cls(z.real - r, z.real + r, z.imag - r, z.imag + r)

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    @property
    def diag(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        return (self.x0 - slack <= z.real <= self.x1 + slack) and (self.y0 - slack <= z.imag <= self.y1 + slack)

    def dilate(self, f: float) -> "Rect":
        hx = 0.5 * (self.x1 - self.x0) * (1 + f)
        hy = 0.5 * (self.y1 - self.y0) * (1 + f)
        c = self.center
        return Rect(c.real - hx, c.real + hx, c.imag - hy, c.imag + hy)

    def split(self, fx: float, fy: float) -> list["Rect"]:
        xm = self.x0 + fx * (self.x1 - self.x0)
        ym = self.y0 + fy * (self.y1 - self.y0)
        return [
            Rect(self.x0, xm, self.y0, ym),
            Rect(xm, self.x1, self.y0, ym),
            Rect(self.x0, xm, ym, self.y1),
            Rect(xm, self.x1, ym, self.y1),
        ]

    def point(self, t: np.ndarray) -> np.ndarray:
        """Counter-clockwise boundary parametrization, ``t`` in [0, 4)."""
        corners = np.array([
            complex(self.x0, self.y0), complex(self.x1, self.y0),
            complex(self.x1, self.y1), complex(self.x0, self.y1),
        ])
        k = np.floor(t).astype(int) % 4
        s = t - np.floor(t)
        return corners[k] + s * (corners[(k + 1) % 4] - corners[k])

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.x1, self.y0, self.y1)


@dataclass
class _Contour:
    rect: Rect
    t: np.ndarray
    vals: np.ndarray


def _initial_params(p: ProblemSpec, r: Rect) -> np.ndarray:
    rate = float(np.sum(np.abs(p.B.diag)))
    ts = []
    for k, length in enumerate((r.x1 - r.x0, r.y1 - r.y0, r.x1 - r.x0, r.y1 - r.y0)):
        m = 8 + int(math.ceil(length * rate * 4 / math.pi))
        ts.append(k + np.arange(m) / m)
    return np.concatenate(ts)


def _wind_many(p: ProblemSpec, rects: list[Rect], guard_abs: bool) -> list[tuple[int | None, float, float]]:
    """Winding numbers for several rectangles.

    Returns per rectangle ``(count or None, min |Delta|, median |Delta|)``;
    ``None`` means the boundary passes too close to a zero.  ``guard_abs`` uses
    ``min |Delta| < 1e-8 (1 + median)``; otherwise the threshold is relative,
    ``1e-8 median``, which stays meaningful on tiny boxes where ``|Delta|`` is
    small everywhere.
    """
    rtol = p.solver.count_rtol
    contours = [_Contour(r, _initial_params(p, r), None) for r in rects]
    pts = np.concatenate([c.rect.point(c.t) for c in contours]) if contours else np.zeros(0)
    vals = char_det_batch(p, pts, rtol=rtol)[0] if pts.size else pts
    off = 0
    for c in contours:
        c.vals = vals[off: off + c.t.size]
        off += c.t.size

    done = [False] * len(contours)
    result: list = [None] * len(contours)
    while True:
        new_t = []
        for i, c in enumerate(contours):
            if done[i]:
                new_t.append(None)
                continue
            a = np.abs(c.vals)
            med = float(np.median(a))
            thr = GUARD_REL * ((1.0 + med) if guard_abs else med)
            if a.min() < thr or not np.all(np.isfinite(c.vals)) or c.t.size > _MAX_SAMPLES:
                done[i] = True
                result[i] = (None, float(a.min()), med)
                new_t.append(None)
                continue
            nxt = np.roll(c.vals, -1)
            dth = np.angle(nxt / c.vals)
            # a zero on or near the contour shows up as a dip in |Delta| even when
            # the phase does not jump (even multiplicity); refine around dips until
            # the spacing matches the distance to the zero or the guard fires
            prev_a, next_a = np.roll(a, 1), np.roll(a, -1)
            dip = (a <= np.minimum(prev_a, next_a)) & (a <= DIP_RATIO * np.maximum(prev_a, next_a))
            dip_iv = np.nonzero(dip | np.roll(dip, -1))[0]
            bad = np.union1d(np.nonzero(np.abs(dth) >= math.pi / 2)[0], dip_iv)
            if bad.size == 0:
                total = float(dth.sum()) / (2 * math.pi)
                k = round(total)
                if abs(total - k) > 1e-6:
                    bad = np.arange(c.t.size)
                else:
                    done[i] = True
                    result[i] = (int(k), float(a.min()), med)
                    new_t.append(None)
                    continue
            t_next = np.roll(c.t, -1)
            t_next = np.where(t_next <= c.t, t_next + 4.0, t_next)
            new_t.append(0.5 * (c.t[bad] + t_next[bad]) % 4.0)
        if all(done):
            break
        pts = np.concatenate([c.rect.point(nt) for c, nt in zip(contours, new_t) if nt is not None])
        vals = char_det_batch(p, pts, rtol=rtol)[0]
        off = 0
        for c, nt in zip(contours, new_t):
            if nt is None:
                continue
            nv = vals[off: off + nt.size]
            off += nt.size
            t = np.concatenate([c.t, nt])
            v = np.concatenate([c.vals, nv])
            order = np.argsort(t, kind="stable")
            c.t, c.vals = t[order], v[order]
    return result


def count_zeros_rect(p: ProblemSpec, rect: Rect) -> int:
    """Number of zeros of ``Delta`` inside ``rect`` (with multiplicity)."""
    count, mn, med = _wind_many(p, [rect], guard_abs=True)[0]
    if count is None:
        raise BoundaryTooClose(
            f"min |Delta| = {mn:.3e} on the boundary is below the guard {GUARD_REL:.0e}*(1+{med:.3e})")
    return count


@dataclass(frozen=True)
class Eigenvalue:
    lam: complex
    multiplicity: int
    refined: bool
    residual: float = float("nan")

    def to_json(self) -> dict:
        return {"re": self.lam.real, "im": self.lam.imag, "mult": self.multiplicity, "refined": self.refined}


@dataclass(frozen=True)
class EigenvalueSet:
    """Located zeros; multiplicities sum to ``count``, the winding number of the search region."""

    items: tuple[Eigenvalue, ...]
    search_rect: Rect | None
    guard: float
    count: int
    tol: float
    boxes_evaluated: int = 0

    @property
    def values(self) -> np.ndarray:
        return np.array([e.lam for e in self.items], dtype=complex)

    def __len__(self) -> int:
        return len(self.items)


def _newton_sweep(p, lam, boxes, alive, step_tol, rtol, max_iter, variational, res_tol=None):
    """Newton iterations in place on ``lam[alive]``.

    Returns the mask of converged members and, for each, the scaled residual
    ``|Delta| / h`` at the last point where ``Delta`` was evaluated (one step
    of size below ``step_tol |lambda|`` before the returned iterate).  With
    ``res_tol`` a member is only declared converged once that residual is
    below it as well.
    """
    conv = np.zeros(lam.size, dtype=bool)
    res = np.full(lam.size, np.inf)
    alive = alive.copy()
    for _ in range(max_iter):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        try:
            if variational:
                D, dD, h = char_det_scaled(p, lam[idx], derivative=True, rtol=rtol)
            else:
                D, dD, h = _fd_derivative(p, lam[idx], rtol)
        except IntegrationError:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            step = D / dD
        for k, i in enumerate(idx):
            s = step[k]
            box = boxes[i]
            if not np.isfinite(s):
                alive[i] = False
                continue
            if abs(s) > box.diag:
                s = s * box.diag / abs(s)
            lam[i] -= s
            if not box.contains(lam[i], slack=box.diag):
                alive[i] = False
                continue
            r = abs(D[k]) / h[k]
            if abs(s) <= step_tol * max(1.0, abs(lam[i])) and (res_tol is None or r <= res_tol):
                conv[i] = True
                res[i] = r
                alive[i] = False
    return conv, res


def _newton(p: ProblemSpec, starts: np.ndarray, boxes: list[Rect], tol: float, max_iter: int = 60,
            variational: bool = True):
    """Batched Newton iteration; returns ``(lams, ok, scaled residuals)``.

    A cheap sweep at the counting tolerance brings the iterates close, then a
    sweep at full accuracy finishes.  A member is accepted when the last step
    is below ``tol max(1, |lambda|)``, the scaled residual ``|Delta| / h`` is
    below ``tol`` and the root lies in its box.
    """
    lam = starts.astype(complex).copy()
    m = lam.size
    alive = np.ones(m, dtype=bool)
    coarse = max(p.solver.count_rtol, p.solver.rtol)
    near, _ = _newton_sweep(p, lam, boxes, alive, 1e-7, coarse, max_iter, variational)
    step_ok, res = _newton_sweep(p, lam, boxes, near, tol, None, 12, variational, res_tol=tol)
    ok = np.zeros(m, dtype=bool)
    for i in np.nonzero(step_ok)[0]:
        ok[i] = res[i] <= tol and boxes[i].contains(lam[i], slack=1e-12 * max(1.0, abs(lam[i])))
    return lam, ok, res


def _fd_derivative(p: ProblemSpec, lam: np.ndarray, rtol=None):
    """Central differences with ``h = 1e-6 max(1, |lambda|)``."""
    step = 1e-6 * np.maximum(1.0, np.abs(lam))
    D, _, h = char_det_scaled(p, lam, rtol=rtol)
    Dp = char_det_batch(p, lam + step, rtol=rtol)[0]
    Dm = char_det_batch(p, lam - step, rtol=rtol)[0]
    return D, (Dp - Dm) / (2 * step), h


def _count_children(p: ProblemSpec, parents: list[tuple[Rect, int]], attempt: list[int]):
    """Split each parent with its current fraction; ``None`` marks a failed split."""
    kids = []
    for (r, _), a in zip(parents, attempt):
        f = _SPLIT_FRACTIONS[a % len(_SPLIT_FRACTIONS)]
        g = _SPLIT_FRACTIONS[(a + 1) % len(_SPLIT_FRACTIONS)]
        kids.append(r.split(f, g))
    flat = [k for ks in kids for k in ks]
    res = _wind_many(p, flat, guard_abs=False)
    out = []
    for i, (r, cnt) in enumerate(parents):
        counts = [res[4 * i + j][0] for j in range(4)]
        if any(c is None for c in counts) or sum(counts) != cnt or any(c < 0 for c in counts):
            out.append(None)
        else:
            out.append(list(zip(kids[i], counts)))
    return out


def _solve_boxes(p: ProblemSpec, boxes: list[tuple[Rect, int]], tol: float, variational: bool = True):
    items: list[Eigenvalue] = []
    evaluated = len(boxes)
    active = [(r, c) for r, c in boxes if c > 0]
    while active:
        ones = [(r, c) for r, c in active if c == 1]
        split: list[tuple[Rect, int]] = []
        if ones:
            rects = [r for r, _ in ones]
            lam, ok, res = _newton(p, np.array([r.center for r in rects]), rects, tol, variational=variational)
            for k, r in enumerate(rects):
                if ok[k]:
                    items.append(Eigenvalue(complex(lam[k]), 1, True, float(res[k])))
                elif r.diag < CLUSTER_DIAG:
                    items.append(Eigenvalue(r.center, 1, False, float(res[k])))
                else:
                    split.append((r, 1))
        for r, c in active:
            if c >= 2:
                if r.diag < CLUSTER_DIAG:
                    items.append(Eigenvalue(r.center, c, False))
                else:
                    split.append((r, c))
        active = []
        attempt = [0] * len(split)
        pending = list(range(len(split)))
        while pending:
            got = _count_children(p, [split[i] for i in pending], [attempt[i] for i in pending])
            evaluated += 4 * len(pending)
            again = []
            for i, kids in zip(pending, got):
                if kids is None:
                    attempt[i] += 1
                    if attempt[i] >= 2 * len(_SPLIT_FRACTIONS):
                        r, c = split[i]
                        items.append(Eigenvalue(r.center, c, False))
                    else:
                        again.append(i)
                else:
                    active.extend((k, c) for k, c in kids if c > 0)
            pending = again
    items.sort(key=lambda e: (e.lam.real, e.lam.imag))
    return items, evaluated


def find_eigenvalues(p: ProblemSpec, rect: Rect, tol: float = 1e-10, variational: bool = True) -> EigenvalueSet:
    """All zeros of ``Delta`` in ``rect``.

    If a zero sits too close to the boundary the rectangle is dilated by 1%
    (up to three times) before giving up.
    """
    r = rect
    for attempt in range(4):
        count, mn, med = _wind_many(p, [r], guard_abs=True)[0]
        if count is not None:
            break
        if attempt == 3:
            raise BoundaryTooClose(
                f"min |Delta| = {mn:.3e} on the boundary is below the guard after 3 dilations")
        r = r.dilate(0.01)
    items, evaluated = _solve_boxes(p, [(r, count)], tol, variational)
    return EigenvalueSet(tuple(items), r, GUARD_REL * (1 + med), count, tol, evaluated + 1)


def find_eigenvalues_in_boxes(p: ProblemSpec, rects: list[Rect], tol: float = 1e-10) -> EigenvalueSet:
    """Zeros inside each of several disjoint boxes, counted in one batch."""
    res = _wind_many(p, rects, guard_abs=False)
    boxes = []
    for r, (c, mn, _) in zip(rects, res):
        if c is None:
            raise BoundaryTooClose(f"box {r.as_tuple()} has a zero on its boundary (min |Delta| {mn:.3e})")
        boxes.append((r, c))
    items, evaluated = _solve_boxes(p, boxes, tol)
    return EigenvalueSet(tuple(items), None, GUARD_REL, sum(c for _, c in boxes), tol, evaluated)


# --------------------------------------------------------------------------
# pairing with the unperturbed lattice


@dataclass(frozen=True)
class PairingReport:
    """Greedy nearest matching of eigenvalues to lattice points.

    For mid-range ``|n|`` the ``(n, j)`` labels are heuristic: the lattice
    describes the spectrum only asymptotically.
    """

    pairs: tuple[tuple[int, int, complex, complex, float], ...]
    unmatched_eigenvalues: tuple[complex, ...]
    unmatched_lattice: tuple[tuple[int, int, complex], ...]
    radius: float

    def max_residual(self, nmin: int, nmax: int) -> float:
        vals = [r for (n, _, _, _, r) in self.pairs if nmin <= abs(n) <= nmax]
        return max(vals) if vals else float("nan")

    def to_json(self) -> list[dict]:
        return [
            {"n": n, "j": j, "lattice": [l0.real, l0.imag], "eigenvalue": [lam.real, lam.imag], "residual": r}
            for (n, j, l0, lam, r) in self.pairs
        ]


def min_lattice_gap(lat: Lattice) -> float:
    pts = lat.points()
    if pts.size < 2:
        return float("inf")
    d = np.abs(pts[:, None] - pts[None, :])
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def pair_with_lattice(ev: EigenvalueSet, lat: Lattice, radius: float | None = None,
                      lattice_entries=None) -> PairingReport:
    """Match eigenvalues to lattice points, nearest first, within ``radius``.

    ``radius`` defaults to half the minimal lattice gap.  An eigenvalue of
    multiplicity ``m`` may absorb up to ``m`` lattice points.
    """
    entries = list(lat.entries if lattice_entries is None else lattice_entries)
    if radius is None:
        gap = min_lattice_gap(lat)
        radius = 0.5 * gap if gap > 0 and math.isfinite(gap) else 1.0
    cand = []
    for i, e in enumerate(ev.items):
        for k, (n, j, l0) in enumerate(entries):
            dist = abs(e.lam - l0)
            if dist <= radius:
                cand.append((dist, abs(n), i, k))
    cand.sort()
    cap = [e.multiplicity for e in ev.items]
    taken = set()
    pairs = []
    for dist, _, i, k in cand:
        if cap[i] == 0 or k in taken:
            continue
        cap[i] -= 1
        taken.add(k)
        n, j, l0 = entries[k]
        pairs.append((n, j, l0, ev.items[i].lam, float(dist)))
    pairs.sort(key=lambda t: (abs(t[0]), t[0], t[1]))
    unmatched_ev = tuple(ev.items[i].lam for i in range(len(ev.items)) if cap[i] > 0)
    unmatched_lat = tuple(entries[k] for k in range(len(entries)) if k not in taken)
    return PairingReport(tuple(pairs), unmatched_ev, unmatched_lat, float(radius))


@dataclass(frozen=True)
class GapResult:
    gap: float
    cluster: bool

    def __float__(self) -> float:
        return self.gap


def separation_gap(ev: EigenvalueSet) -> GapResult:
    """Minimal pairwise distance between located eigenvalues; 0 if a cluster is present."""
    if sum(e.multiplicity for e in ev.items) < 2:
        raise ValidationError("separation gap needs at least two eigenvalues")
    if any(e.multiplicity > 1 for e in ev.items):
        return GapResult(0.0, True)
    z = ev.values
    d = np.abs(z[:, None] - z[None, :])
    d[np.diag_indices_from(d)] = np.inf
    return GapResult(float(d.min()), False)
