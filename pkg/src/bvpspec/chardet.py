"""Characteristic determinant ``Delta(lambda) = det(C + D Phi(1, lambda))`` and the unperturbed lattice."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .integrate import FundamentalSolution, phi_at_one
from .model import BoundarySpec, ProblemSpec, WeightMatrix, compute_j_invariants

__all__ = [
    "char_det",
    "char_det_batch",
    "char_det_via_j",
    "char_det_scaled",
    "delta0_closed",
    "GammaDecomposition",
    "gamma_of_d",
    "Lattice",
    "unperturbed_lattice",
    "special_lattice",
    "SeparationResult",
    "separation_check",
    "brute_force_collision",
]


def _liouville(p: ProblemSpec, lams) -> tuple[np.ndarray, np.ndarray]:
    """``det Phi(1) = exp(i tr(B) lambda)`` (Q has zero diagonal) and its ``lambda``-derivative."""
    tr = complex(np.sum(p.B.diag))
    e = np.exp(1j * tr * np.atleast_1d(np.asarray(lams, dtype=complex)))
    return e, 1j * tr * e


def _det_and_derivative(bc: BoundarySpec, phi: np.ndarray, dphi: np.ndarray | None,
                        det_phi: np.ndarray | None = None, ddet_phi: np.ndarray | None = None):
    """``det(C + D Phi)`` and its derivative over a batch of ``Phi``.

    For ``n = 2`` with ``det Phi`` supplied, the determinant is expanded by
    columns, ``det C + det[c1, (D Phi)_2] + det[(D Phi)_1, c2] + det D det Phi``.
    Every term is linear in ``Phi``, so nothing cancels when ``Phi`` is
    dominated by one exponentially large mode.
    """
    C, D = bc.C, bc.D
    DP = D[None] @ phi
    if C.shape[0] == 2 and det_phi is not None:
        def det2(c0, c1):
            return c0[..., 0] * c1[..., 1] - c0[..., 1] * c1[..., 0]

        det = (np.linalg.det(C) + det2(C[:, 0], DP[:, :, 1]) + det2(DP[:, :, 0], C[:, 1])
               + np.linalg.det(D) * det_phi)
        if dphi is None:
            return det, None
        dDP = D[None] @ dphi
        ddet = det2(C[:, 0], dDP[:, :, 1]) + det2(dDP[:, :, 0], C[:, 1]) + np.linalg.det(D) * ddet_phi
        return det, ddet
    U = C[None] + DP
    det = np.linalg.det(U)
    if dphi is None:
        return det, None
    dU = D[None] @ dphi
    n = U.shape[-1]
    # adjugate via the cofactor expansion, valid also for singular U
    adj = np.empty_like(U)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(U, j, axis=1), i, axis=2)
            adj[:, i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    # Jacobi: d det U = tr(adj(U) dU)
    ddet = np.einsum("mij,mji->m", adj, dU)
    return det, ddet


def char_det_batch(p: ProblemSpec, lams, derivative: bool = False, rtol: float | None = None):
    """``Delta`` (and ``Delta'`` if requested) at every ``lambda`` of the batch."""
    phi, dphi = phi_at_one(p, lams, derivative=derivative, rtol=rtol)
    return _det_and_derivative(p.bc, phi, dphi, *_liouville(p, lams))


def char_det_scaled(p: ProblemSpec, lams, derivative: bool = False, rtol: float | None = None):
    """``(Delta, Delta' or None, h)`` where ``h`` is the Hadamard bound of ``C + D Phi(1)``.

    ``h = prod_i ||row_i(C)|| + ||row_i(D Phi(1))||`` bounds ``|Delta|`` and sets the
    scale of its rounding error, which grows with ``Phi``.
    """
    phi, dphi = phi_at_one(p, lams, derivative=derivative, rtol=rtol)
    det, ddet = _det_and_derivative(p.bc, phi, dphi, *_liouville(p, lams))
    rc = np.linalg.norm(p.bc.C, axis=1)[None]
    rd = np.linalg.norm(p.bc.D[None] @ phi, axis=2)
    return det, ddet, np.prod(rc + rd, axis=1)


def char_det(p: ProblemSpec, lam: complex, derivative: bool = False):
    """``Delta(lambda)``; with ``derivative`` returns the pair ``(Delta, Delta')``."""
    d, dd = char_det_batch(p, [lam], derivative=derivative)
    if derivative:
        return complex(d[0]), complex(dd[0])
    return complex(d[0])


def char_det_via_j(p: ProblemSpec, fs: FundamentalSolution) -> complex:
    """Six-term expansion of ``Delta`` through the boundary minors and ``phi_jk(1)``."""
    if p.n != 2:
        raise ValidationError("the J-expansion is defined for n = 2")
    J = compute_j_invariants(p.bc)
    (p11, p12), (p21, p22) = fs.phi_at_1
    b1, b2 = p.B.entries
    # for zero-diagonal Q, det Phi(1) = exp(i (b1 + b2) lambda) by Liouville
    e = np.exp(1j * (b1 + b2) * fs.lam)
    return complex(
        J.J12 + J.J34 * e + J.J32 * p11 + J.J13 * p12 + J.J42 * p21 + J.J14 * p22
    )


def delta0_closed(B: WeightMatrix, d1: complex, d2: complex, lam):
    """``(d1 e^{i b1 lambda} - 1)(d2 e^{i b2 lambda} - 1)``; vectorized in ``lambda``."""
    b1, b2 = B.entries
    lam = np.asarray(lam, dtype=complex)
    return (d1 * np.exp(1j * b1 * lam) - 1) * (d2 * np.exp(1j * b2 * lam) - 1)


# --------------------------------------------------------------------------
# lattice

_SNAP = 1e-12


def _frac(x: float) -> float:
    """Fractional part in [0, 1), with values within 1e-12 of an integer snapped to 0."""
    r = x - math.floor(x)
    if r < _SNAP or 1.0 - r < _SNAP:
        return 0.0
    return r


@dataclass(frozen=True)
class GammaDecomposition:
    """``d = exp(-2 pi i (alpha + i beta))`` with ``alpha`` in [0, 1)."""

    alpha: float
    beta: float

    @property
    def gamma(self) -> complex:
        return complex(self.alpha, self.beta)

    def d(self) -> complex:
        return complex(np.exp(-2j * np.pi * self.gamma))

    @property
    def unimodular(self) -> bool:
        return self.beta == 0.0


def gamma_of_d(d: complex) -> GammaDecomposition:
    d = complex(d)
    if d == 0:
        raise ValidationError("d must be nonzero")
    alpha = _frac(-math.atan2(d.imag, d.real) / (2 * math.pi))
    # -2 pi i (i beta) = 2 pi beta, so |d| = exp(2 pi beta)
    beta = math.log(abs(d)) / (2 * math.pi)
    return GammaDecomposition(alpha, beta)


@dataclass(frozen=True)
class Lattice:
    """Zeros ``2 pi (gamma_j + n) / b_j`` of the unperturbed determinant, tagged by ``(n, j)``."""

    N: int
    entries: tuple[tuple[int, int, complex], ...]

    def points(self, j: int | None = None) -> np.ndarray:
        return np.array([lam for (_, jj, lam) in self.entries if j is None or jj == j], dtype=complex)

    def in_rect(self, rect) -> list[tuple[int, int, complex]]:
        x0, x1, y0, y1 = rect
        return [e for e in self.entries if x0 <= e[2].real <= x1 and y0 <= e[2].imag <= y1]


def unperturbed_lattice(B: WeightMatrix, d1: complex, d2: complex, N: int) -> Lattice:
    if B.n != 2 or 0 in B.entries:
        raise ValidationError("lattice needs n = 2 and nonzero weights")
    entries = []
    for j, (b, d) in enumerate(zip(B.entries, (d1, d2)), start=1):
        g = gamma_of_d(d).gamma
        for n in range(-N, N + 1):
            entries.append((n, j, complex(2 * np.pi * (g + n) / b)))
    return Lattice(N, tuple(entries))


def special_lattice(B: WeightMatrix, h1: complex, h2: complex, N: int) -> Lattice:
    """Zeros ``(2 pi n - i log(h2/h1)) / b1`` of ``-h2 + h1 e^{i b1 lambda}`` (special conditions, Q = 0)."""
    if h1 == 0 or h2 == 0:
        raise ValidationError("special lattice needs h1 h2 != 0")
    b1 = B.entries[0]
    g = -1j * np.log(complex(h2) / complex(h1))
    return Lattice(N, tuple((n, 1, complex((2 * np.pi * n + g) / b1)) for n in range(-N, N + 1)))


@dataclass(frozen=True)
class SeparationResult:
    separated: bool
    collision: tuple[int, int] | None = None
    rhs: tuple[float, float] = (0.0, 0.0)


def separation_check(B: WeightMatrix, d1: complex, d2: complex) -> SeparationResult:
    """Whether the two lattice families never meet.

    With ``c = b1/b2 = c1 + i c2`` the families collide iff both
    ``alpha1 = {(c1 beta1 - |c|^2 beta2)/c2}`` and ``alpha2 = {(beta1 - c1 beta2)/c2}``.
    A collision ``lambda0_{n,1} = lambda0_{m,2}`` is then returned as ``(n, m)``.
    """
    if B.n != 2 or not B.essential_non_dirac:
        raise ValidationError("separation check needs b1/b2 with nonzero imaginary part")
    c = B.ratio()
    c1, c2 = c.real, c.imag
    g1, g2 = gamma_of_d(d1), gamma_of_d(d2)
    x1 = (c1 * g1.beta - (c1 * c1 + c2 * c2) * g2.beta) / c2
    x2 = (g1.beta - c1 * g2.beta) / c2
    r1, r2 = _frac(x1), _frac(x2)
    cond1 = abs(g1.alpha - r1) > _SNAP and abs(abs(g1.alpha - r1) - 1) > _SNAP
    cond2 = abs(g2.alpha - r2) > _SNAP and abs(abs(g2.alpha - r2) - 1) > _SNAP
    if cond1 or cond2:
        return SeparationResult(True, None, (r1, r2))
    n = round(x1 - g1.alpha)
    m = round(x2 - g2.alpha)
    return SeparationResult(False, (int(n), int(m)), (r1, r2))


def brute_force_collision(B: WeightMatrix, d1: complex, d2: complex, N: int = 200, tol: float = 1e-9):
    """Search ``|n|, |m| <= N`` for ``lambda0_{n,1} = lambda0_{m,2}``; first hit or ``None``."""
    b1, b2 = B.entries
    g1, g2 = gamma_of_d(d1).gamma, gamma_of_d(d2).gamma
    ns = np.arange(-N, N + 1)
    l1 = 2 * np.pi * (g1 + ns) / b1
    l2 = 2 * np.pi * (g2 + ns) / b2
    diff = np.abs(l1[:, None] - l2[None, :])
    scale = np.maximum(1.0, np.abs(l1)[:, None])
    hit = np.argwhere(diff <= tol * scale)
    if hit.size == 0:
        return None
    i, k = hit[0]
    return int(ns[i]), int(ns[k])
