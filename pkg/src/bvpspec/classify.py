"""Boundary-condition taxonomy and hypothesis-level verdicts.

Regularity is tested through the column-selected matrices ``T_{izB}(C, D)``,
one sample ``z`` per sector cut out by the lines ``Re(i b_j z) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chardet import separation_check
from .errors import InadmissibleZ, ValidationError
from .model import (
    BoundarySpec,
    ProblemSpec,
    WeightMatrix,
    compute_j_invariants,
    is_initial_value,
    match_quasi_periodic,
    match_special,
    transform_bc,
)
from .resolvent import rank_resolvent_diff

__all__ = [
    "t_matrix",
    "SectorDecomposition",
    "sector_decomposition",
    "regularity",
    "weak_regularity",
    "weak_regularity_search",
    "CanonicalForm",
    "canonical_form",
    "normality_verdict",
    "PeculiarVerdict",
    "peculiar_pair_verdict",
    "SimilarityVerdict",
    "similarity_verdict",
    "ClassificationReport",
    "classify",
]

DET_RTOL = 1e-10
UNIMODULAR_TOL = 1e-12
TRANSFORM_GROUP: tuple[tuple[str, ...], ...] = (
    (),
    ("swap_components",),
    ("reflect_interval",),
    ("swap_components", "reflect_interval"),
)


def t_matrix(a, C, D) -> np.ndarray:
    """Column ``k`` from ``C`` if ``Re a_k > 0``, else from ``D``."""
    a = np.asarray(a, dtype=complex)
    C = np.asarray(C, dtype=complex)
    D = np.asarray(D, dtype=complex)
    if np.any(np.abs(a.real) <= 1e-12 * np.abs(a)):
        raise InadmissibleZ("an entry of A is (nearly) purely imaginary")
    return np.where(a.real[None, :] > 0, C, D)


@dataclass(frozen=True)
class SectorDecomposition:
    rays: tuple[float, ...]
    sectors: tuple[tuple[float, float], ...]
    sample_points: tuple[complex, ...]


def sector_decomposition(B: WeightMatrix) -> SectorDecomposition:
    """Sectors between the rays ``arg z = -arg b_j (mod pi)``; samples at angular midpoints, radius 1."""
    two_pi = 2 * math.pi
    raw = []
    for b in B.entries:
        t = (-math.atan2(b.imag, b.real)) % two_pi
        raw += [t, (t + math.pi) % two_pi]
    raw.sort()
    rays: list[float] = []
    for t in raw:
        if not rays or t - rays[-1] > 1e-12:
            rays.append(t)
    if len(rays) > 1 and rays[0] + two_pi - rays[-1] <= 1e-12:
        rays.pop()
    sectors = []
    for i, t in enumerate(rays):
        u = rays[i + 1] if i + 1 < len(rays) else rays[0] + two_pi
        sectors.append((t, u))
    samples = tuple(complex(np.exp(1j * 0.5 * (a + b))) for a, b in sectors)
    return SectorDecomposition(tuple(rays), tuple(sectors), samples)


def _nonsingular(T: np.ndarray) -> bool:
    h = float(np.prod(np.linalg.norm(T, axis=0)))
    if h == 0.0:
        return False
    return abs(np.linalg.det(T)) > DET_RTOL * h


def _sector_status(B: WeightMatrix, bc: BoundarySpec, per_sector: int = 1):
    sd = sector_decomposition(B)
    out = []
    for (a, b), z in zip(sd.sectors, sd.sample_points):
        T = t_matrix(1j * z * B.diag, bc.C, bc.D)
        out.append(((a, b), _nonsingular(T)))
    return sd, out


def regularity(B: WeightMatrix, bc: BoundarySpec) -> bool:
    """``det T_{izB}(C, D) != 0`` for one sample ``z`` in every sector."""
    _, status = _sector_status(B, bc)
    return all(ok for _, ok in status)


def weak_regularity_search(B: WeightMatrix, bc: BoundarySpec, per_sector: int = 5) -> bool:
    """Look for three admissible ``z`` with nonsingular ``T`` whose triangle contains 0 strictly.

    Points on the unit circle admit such a triple iff their angles leave no
    gap of ``pi`` or more, so good sectors are sampled densely and the largest
    cyclic gap is checked.
    """
    sd, status = _sector_status(B, bc)
    angles = []
    for (a, b), _ in status:
        for k in range(per_sector):
            th = a + (k + 1) / (per_sector + 1) * (b - a)
            z = np.exp(1j * th)
            if _nonsingular(t_matrix(1j * z * B.diag, bc.C, bc.D)):
                angles.append(th % (2 * math.pi))
    if len(angles) < 3:
        return False
    angles.sort()
    gaps = np.diff(angles + [angles[0] + 2 * math.pi])
    return bool(gaps.max() < math.pi - 1e-12)


def weak_regularity(B: WeightMatrix, bc: BoundarySpec) -> bool:
    """Shortcut ``J14 J32 != 0 or J12 J34 != 0`` for ``n = 2``, ``b1/b2`` non-real; search otherwise."""
    if B.n == 2 and B.essential_non_dirac:
        J = compute_j_invariants(bc)
        s = sum(abs(v) for v in J.as_dict().values()) ** 2
        return abs(J.J14 * J.J32) > DET_RTOL * s or abs(J.J12 * J.J34) > DET_RTOL * s
    return weak_regularity_search(B, bc)


# --------------------------------------------------------------------------
# canonical forms


@dataclass(frozen=True)
class CanonicalForm:
    kind: str
    params: dict = field(default_factory=dict)
    transforms_used: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "params": {k: [v.real, v.imag] for k, v in self.params.items()},
            "transforms_used": list(self.transforms_used),
        }


def _apply_group(bc: BoundarySpec, ts: tuple[str, ...]) -> BoundarySpec:
    for t in ts:
        bc = transform_bc(bc, t)
    return bc


def canonical_form(bc: BoundarySpec, allow_transforms: bool = True) -> CanonicalForm:
    if bc.n != 2:
        raise ValidationError("canonical forms are defined for n = 2")
    if is_initial_value(bc):
        return CanonicalForm("initial_value")
    group = TRANSFORM_GROUP if allow_transforms else TRANSFORM_GROUP[:1]
    for ts in group:
        b = _apply_group(bc, ts)
        qp = match_quasi_periodic(b)
        if qp is not None:
            return CanonicalForm("quasi_periodic", {"d1": qp[0], "d2": qp[1]}, ts)
        sp = match_special(b)
        if sp is not None:
            return CanonicalForm("special", {"h1": sp[0], "h2": sp[1]}, ts)
    return CanonicalForm("other")


# --------------------------------------------------------------------------
# verdicts


def _unimodular(d: complex) -> bool:
    return abs(abs(d) - 1.0) <= UNIMODULAR_TOL


def _normal_const_q(p: ProblemSpec) -> complex | None:
    """``q`` if ``Q = (1/b1 - 1/b2) [[0, q], [conj q, 0]]`` with ``q != 0``."""
    Q12, Q21 = p.Q[0, 1], p.Q[1, 0]
    if not (Q12.is_constant and Q21.is_constant):
        return None
    b1, b2 = p.B.entries
    c = 1 / b1 - 1 / b2
    q = Q12.constant_value() / c
    if q == 0:
        return None
    if abs(Q21.constant_value() - c * q.conjugate()) > 1e-12 * abs(c * q):
        return None
    return q


def normality_verdict(p: ProblemSpec) -> str:
    """``normal``, ``normal_const_Q``, ``not_normal`` or ``unknown`` (outside the covered setting)."""
    if p.n != 2 or not p.B.essential_non_dirac:
        return "unknown"
    qp = match_quasi_periodic(p.bc)
    if p.Q.is_zero:
        if qp is not None and _unimodular(qp[0]) and _unimodular(qp[1]):
            return "normal"
        return "not_normal"
    if _normal_const_q(p) is not None and qp is not None:
        d1, d2 = qp
        if _unimodular(d1) and abs(d1 - d2) <= UNIMODULAR_TOL:
            return "normal_const_Q"
    return "not_normal"


@dataclass(frozen=True)
class PeculiarVerdict:
    is_peculiar: bool
    rank_one: bool
    reasons: tuple[str, ...]
    resolvent_rank: int
    transforms_used: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "is_peculiar": self.is_peculiar,
            "rank_one": self.rank_one,
            "reasons": list(self.reasons),
            "resolvent_rank": self.resolvent_rank,
            "transforms_used": list(self.transforms_used),
        }


def same_system(pA: ProblemSpec, pB: ProblemSpec) -> bool:
    return pA.B == pB.B and pA.Q == pB.Q


def peculiar_pair_verdict(pA: ProblemSpec, pB: ProblemSpec) -> PeculiarVerdict:
    """Normal quasi-periodic problem paired with a special one on the same system.

    Both members get the same transform from the group; the members may come
    in either order.
    """
    if pA.n != 2 or pB.n != 2:
        raise ValidationError("peculiar pairs are defined for n = 2")
    if not same_system(pA, pB):
        raise ValidationError("the two problems must share B and Q")
    if not pA.B.essential_non_dirac:
        raise ValidationError("b1/b2 must have nonzero imaginary part")
    rank = rank_resolvent_diff(pA.bc, pB.bc)
    reasons: list[str] = []
    q_zero = pA.Q.is_zero
    if not q_zero:
        reasons.append("Q is not identically zero")
    match = None
    for ts in TRANSFORM_GROUP:
        for first, second in ((pA.bc, pB.bc), (pB.bc, pA.bc)):
            qp = match_quasi_periodic(_apply_group(first, ts))
            sp = match_special(_apply_group(second, ts))
            if qp is not None and sp is not None:
                match = (ts, qp, sp)
                break
        if match:
            break
    if match is None:
        reasons.append("no shared transform brings the pair to (quasi-periodic, special)")
        return PeculiarVerdict(False, False, tuple(reasons), rank)
    ts, (d1, d2), (h1, h2) = match
    ok = q_zero
    if not (_unimodular(d1) and _unimodular(d2)):
        reasons.append(f"|d1|, |d2| = {abs(d1):.17g}, {abs(d2):.17g} are not both 1")
        ok = False
    if h1 * h2 == 0:
        reasons.append("h1 h2 = 0")
        ok = False
    cond = abs(h1 - d1 * h2) <= 1e-10 * (abs(h1) + abs(d1 * h2))
    if ok:
        reasons.append("Q = 0, unimodular quasi-periodic and special conditions with h1 h2 != 0")
        reasons.append("h1 = d1 h2" if cond else "h1 != d1 h2")
    return PeculiarVerdict(ok, bool(ok and cond), tuple(reasons), rank, ts)


@dataclass(frozen=True)
class SimilarityVerdict:
    verdict: str
    threshold: float | None
    note: str = "verdict from theoretical hypotheses, not a numerical proof"

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "threshold": self.threshold, "note": self.note}


def similarity_verdict(p: ProblemSpec, small_q_threshold: float | None = None) -> SimilarityVerdict:
    if p.n != 2:
        raise ValidationError("similarity verdicts are defined for n = 2")
    qp = match_quasi_periodic(p.bc)
    if qp is None:
        return SimilarityVerdict("none_established", small_q_threshold)
    if p.Q.is_entire:
        if small_q_threshold is not None and p.B.essential_non_dirac:
            if separation_check(p.B, *qp).separated and p.Q.sup_norm() < small_q_threshold:
                return SimilarityVerdict("normal_small_Q", small_q_threshold)
        return SimilarityVerdict("almost_normal", small_q_threshold)
    return SimilarityVerdict("riesz_with_parentheses", small_q_threshold)


@dataclass(frozen=True)
class ClassificationReport:
    regular: bool
    weakly_regular: bool
    canonical_form: CanonicalForm
    normality: str
    similarity: SimilarityVerdict

    def to_json(self) -> dict:
        cf = self.canonical_form.to_json()
        return {
            "regular": self.regular,
            "weakly_regular": self.weakly_regular,
            "canonical_form": cf["kind"],
            "parameters": cf["params"],
            "transforms_used": cf["transforms_used"],
            "normality": self.normality,
            "similarity": self.similarity.to_json(),
        }


def classify(p: ProblemSpec, small_q_threshold: float | None = None) -> ClassificationReport:
    if p.n != 2:
        raise ValidationError("classification report is defined for n = 2")
    reg = regularity(p.B, p.bc)
    weak = weak_regularity(p.B, p.bc)
    return ClassificationReport(
        reg,
        weak,
        canonical_form(p.bc),
        normality_verdict(p),
        similarity_verdict(p, small_q_threshold),
    )
