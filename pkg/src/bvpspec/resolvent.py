"""Resolvents of two-point problems and the rank of their differences.

For ``lambda`` in the resolvent set

    (R f)(x) = (K f)(x) - Phi(x) M (K f)(1),    M = (C + D Phi(1))^{-1} D,

so two problems sharing ``B`` and ``Q`` differ by ``Phi(x) (M - M~) (K f)(1)``
and the rank of the difference is that of ``M - M~``.  It equals
``rank [C D; C~ D~] - n`` independently of ``lambda``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chardet import _det_and_derivative, _liouville
from .errors import IdenticalOperators, NotInResolventSet, RepresentationUnavailable, ValidationError
from .integrate import (
    FundamentalSolution,
    QuadGrid,
    SampledFunction,
    apply_K,
    fundamental_matrix,
    psi_evaluator,
)
from .model import (
    BoundarySpec,
    ProblemSpec,
    _numerical_rank,
    compute_j_invariants,
    match_special,
    row_equivalent,
)

__all__ = [
    "m_matrix",
    "m_matrix_via_j",
    "rank_resolvent_diff",
    "one_dim_form",
    "one_dim_criterion",
    "RankOneData",
    "alpha_beta",
    "apply_resolvent",
    "apply_rank_one_diff",
    "kernel_rank",
]

RESOLVENT_RTOL = 1e-12
STACK_RTOL = 1e-10
KERNEL_RTOL = 1e-6
KERNEL_ZERO = 1e-10


def _check_resolvent_set(p: ProblemSpec, fs: FundamentalSolution) -> np.ndarray:
    U = p.bc.C + p.bc.D @ fs.phi_at_1
    h = np.prod(np.linalg.norm(p.bc.C, axis=1) + np.linalg.norm(p.bc.D @ fs.phi_at_1, axis=1))
    if abs(np.linalg.det(U)) <= RESOLVENT_RTOL * h:
        raise NotInResolventSet(f"lambda = {fs.lam} is (numerically) an eigenvalue")
    return U


def m_matrix(p: ProblemSpec, fs: FundamentalSolution) -> np.ndarray:
    """``M = (C + D Phi(1, lambda))^{-1} D``."""
    U = _check_resolvent_set(p, fs)
    return np.linalg.solve(U, p.bc.D)


def m_matrix_via_j(p: ProblemSpec, fs: FundamentalSolution) -> np.ndarray:
    """The same matrix written through the boundary minors (``n = 2``)."""
    if p.n != 2:
        raise ValidationError("explicit M needs n = 2")
    _check_resolvent_set(p, fs)
    J = compute_j_invariants(p.bc)
    (p11, p12), (p21, p22) = fs.phi_at_1
    delta = complex(_det_and_derivative(p.bc, fs.phi_at_1[None], None, *_liouville(p, fs.lam))[0][0])
    return np.array([
        [J.J32 + J.J34 * p22, J.J42 - J.J34 * p12],
        [J.J13 - J.J34 * p21, J.J14 + J.J34 * p11],
    ]) / delta


def rank_resolvent_diff(bcA: BoundarySpec, bcB: BoundarySpec) -> int:
    """``rank [C D; C~ D~] - n`` with singular values above ``1e-10 sigma_max`` counted."""
    if bcA.n != bcB.n:
        raise ValidationError("boundary specs of different size")
    stack = np.vstack([bcA.rows, bcB.rows])
    return _numerical_rank(stack, STACK_RTOL) - bcA.n


def one_dim_form(bcA: BoundarySpec, bcB: BoundarySpec) -> tuple[complex, float]:
    """The bilinear form in the minors of both specs, and its natural scale."""
    J, K = compute_j_invariants(bcA), compute_j_invariants(bcB)
    terms = [
        J.J12 * K.J34, K.J12 * J.J34,
        J.J13 * K.J42, K.J13 * J.J42,
        J.J14 * K.J(2, 3), K.J14 * J.J(2, 3),
    ]
    sJ = sum(abs(v) for v in J.as_dict().values())
    sK = sum(abs(v) for v in K.as_dict().values())
    return complex(sum(terms)), sJ * sK


def one_dim_criterion(bcA: BoundarySpec, bcB: BoundarySpec) -> bool:
    """Whether the resolvent difference of two distinct 2x2 problems has rank one."""
    if bcA.n != 2 or bcB.n != 2:
        raise ValidationError("criterion is stated for n = 2")
    if row_equivalent(bcA, bcB):
        raise IdenticalOperators("boundary conditions are row-equivalent")
    val, scale = one_dim_form(bcA, bcB)
    return abs(val) <= STACK_RTOL * scale


@dataclass(frozen=True)
class RankOneData:
    """``M - M~ = alpha beta^*`` at ``lam`` for a general problem and a special one."""

    lam: complex
    alpha: np.ndarray
    beta: np.ndarray
    gamma: complex
    delta: complex
    delta_special: complex

    def outer(self) -> np.ndarray:
        return np.outer(self.alpha, np.conj(self.beta))


def alpha_beta(pGeneral: ProblemSpec, pSpecial: ProblemSpec, lam: complex,
               fs: FundamentalSolution | None = None) -> RankOneData:
    """Rank-one factors of ``M_general - M_special``.

    ``pSpecial`` must carry boundary conditions row-equivalent to
    ``y1(0) = h1 y2(0)``, ``y1(1) = h2 y2(0)``.
    """
    hs = match_special(pSpecial.bc)
    if hs is None:
        raise ValidationError("second problem does not carry special boundary conditions")
    h1, h2 = hs
    if not one_dim_criterion(pGeneral.bc, pSpecial.bc):
        raise ValidationError("the resolvent difference is not one-dimensional")
    if fs is None:
        fs = fundamental_matrix(pGeneral, lam)
    _check_resolvent_set(pGeneral, fs)
    _check_resolvent_set(pSpecial, fs)
    J = compute_j_invariants(pGeneral.bc)
    (p11, p12), (p21, p22) = fs.phi_at_1
    delta = complex(_det_and_derivative(pGeneral.bc, fs.phi_at_1[None], None, *_liouville(pGeneral, fs.lam))[0][0])
    dsp = complex(-h2 + h1 * p11 + p12)
    gamma = complex(J.J14 + J.J34 * p11)
    scale = abs(J.J14) + abs(J.J34) * abs(p11)
    if abs(gamma) <= 1e-12 * max(scale, 1e-300):
        raise RepresentationUnavailable(f"gamma vanishes at lambda = {lam}")
    alpha = np.array([h1 - J.J34 * dsp / gamma, 1.0], dtype=complex)
    beta_bar = np.array([(J.J13 - J.J34 * p21) / delta - 1.0 / dsp, gamma / delta], dtype=complex)
    return RankOneData(complex(lam), alpha, np.conj(beta_bar), gamma, delta, dsp)


def apply_resolvent(p: ProblemSpec, lam: complex, f: SampledFunction,
                    fs: FundamentalSolution | None = None) -> SampledFunction:
    """``y = R(lambda) f``: the solution of the inhomogeneous problem with right side ``f``."""
    if fs is None:
        fs = fundamental_matrix(p, lam, grid=f.grid)
    M = m_matrix(p, fs)
    Kf = apply_K(p, fs, f)
    corr = fs.phi @ (M @ Kf.at_one())
    return SampledFunction(fs.grid, Kf.values - corr)


def apply_rank_one_diff(rd: RankOneData, psi: np.ndarray, fs: FundamentalSolution,
                        f: SampledFunction) -> SampledFunction:
    """``(R_special - R_general) f = (f, Psi^* beta) Phi alpha``."""
    kf1 = f.grid.integrate(np.einsum("ijk,ik->ij", psi, f.values))
    c = complex(np.conj(rd.beta) @ kf1)
    return SampledFunction(fs.grid, c * (fs.phi @ rd.alpha))


def kernel_matrix(pA: ProblemSpec, pB: ProblemSpec, lam: complex, panels: int = 8) -> tuple[np.ndarray, QuadGrid]:
    """Nystrom matrix of ``R_A(lambda) - R_B(lambda)`` on the Gauss nodes of ``panels`` panels.

    Column ``(j, b)`` is the difference applied to the discrete delta
    ``e_b / w_j`` at node ``t_j``; rows and columns carry ``sqrt(w)`` so that
    singular values approximate those of the integral operator.
    """
    grid = QuadGrid(panels, pA.Q.breakpoints())
    fs = fundamental_matrix(pA, lam, grid=grid)
    nodes = np.nonzero(grid.node_mask)[0]
    n = pA.n
    cols = []
    for j in nodes:
        for b in range(n):
            v = np.zeros((len(grid), n), dtype=complex)
            v[j, b] = 1.0 / grid.w[j]
            f = SampledFunction(grid, v)
            d = apply_resolvent(pA, lam, f, fs).values - apply_resolvent(pB, lam, f, fs).values
            cols.append(d[nodes].reshape(-1))
    Kmat = np.array(cols).T
    sw = np.repeat(np.sqrt(grid.w[nodes]), n)
    return sw[:, None] * Kmat * sw[None, :], grid


def kernel_rank(pA: ProblemSpec, pB: ProblemSpec, lam: complex, panels: int = 8,
                rtol: float = KERNEL_RTOL) -> int:
    """Numerical rank (``sigma > rtol sigma_1``) of the discretized resolvent difference."""
    Kmat, _ = kernel_matrix(pA, pB, lam, panels)
    s = np.linalg.svd(Kmat, compute_uv=False)
    # identical operators leave only rounding noise
    if s[0] <= KERNEL_ZERO:
        return 0
    return int(np.sum(s > rtol * s[0]))

