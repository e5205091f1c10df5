"""Adjoint problems, eigenfunctions and numerical (in)completeness certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chardet import special_lattice, unperturbed_lattice
from .errors import BVPError, ValidationError
from .integrate import FundamentalSolution, QuadGrid, SampledFunction, fundamental_matrices
from .model import (
    BoundarySpec,
    ProblemSpec,
    match_quasi_periodic,
    match_special,
)
from .spectrum import Rect, find_eigenvalues, find_eigenvalues_in_boxes

__all__ = [
    "adjoint_problem",
    "Eigenfunction",
    "eigenfunction",
    "EigenfunctionBundle",
    "build_bundle",
    "locate_eigenvalues",
    "second_component_residual",
    "DefectReport",
    "completeness_defect",
    "gram_matrix",
    "gram_condition",
    "eigen_residuals",
    "default_guesses",
    "bump",
]


def adjoint_problem(p: ProblemSpec) -> ProblemSpec:
    """Formal adjoint: weight ``B^*``, potential ``Q^*`` and the annihilating boundary conditions.

    Integration by parts gives ``(L y, z) - (y, L^* z) = Z^* G Y`` with
    ``Y = (y(0), y(1))``, ``G = diag(i B^{-1}, -i B^{-1})``.  The adjoint rows
    are ``N^* G^*`` for a basis ``N`` of the null space of ``(C D)``.
    """
    n = p.n
    _, _, vh = np.linalg.svd(p.bc.rows)
    N = vh[n:].conj().T
    binv_h = np.diag(1.0 / np.conj(p.B.diag))
    Gh = np.block([[-1j * binv_h, np.zeros((n, n))], [np.zeros((n, n)), 1j * binv_h]])
    rows = N.conj().T @ Gh
    return ProblemSpec(p.B.conj(), p.Q.adjoint(), BoundarySpec.from_rows(rows), p.solver)


@dataclass(frozen=True)
class Eigenfunction:
    lam: complex
    function: SampledFunction
    geometric_multiplicity: int
    basis: tuple[SampledFunction, ...] = ()


def _normalize(values: np.ndarray, grid: QuadGrid) -> np.ndarray:
    f = SampledFunction(grid, values)
    nrm = f.norm()
    if nrm == 0 or not math.isfinite(nrm):
        raise BVPError("eigenfunction has zero or non-finite norm")
    v = values / nrm
    # phase: largest-modulus sample, first in grid order, made real-positive
    k = int(np.argmax(np.abs(v)))
    z = v.flat[k]
    return v * (abs(z) / z)


def _eigenfunction_from(p: ProblemSpec, fs: FundamentalSolution, mult_rtol: float = 1e-8) -> Eigenfunction:
    U = p.bc.C + p.bc.D @ fs.phi_at_1
    _, s, vh = np.linalg.svd(U)
    null = np.nonzero(s <= mult_rtol * s[0])[0] if s[0] > 0 else np.arange(s.size)
    gm = max(1, int(null.size))
    v = vh[-1].conj()
    main = SampledFunction(fs.grid, _normalize(fs.phi @ v, fs.grid))
    basis: tuple[SampledFunction, ...] = ()
    if gm > 1:
        basis = tuple(SampledFunction(fs.grid, _normalize(fs.phi @ vh[k].conj(), fs.grid)) for k in range(s.size - gm, s.size))
    return Eigenfunction(fs.lam, main, gm, basis)


def eigenfunction(p: ProblemSpec, lam: complex, grid: QuadGrid | None = None) -> Eigenfunction:
    """``y = Phi(x) v`` with ``v`` the right null vector of ``C + D Phi(1)``, unit norm, fixed phase."""
    fs = fundamental_matrices(p, [lam], grid)[0]
    return _eigenfunction_from(p, fs)


@dataclass(frozen=True)
class EigenfunctionBundle:
    eigenvalues: tuple[complex, ...]
    functions: tuple[SampledFunction, ...]
    grid: QuadGrid
    multiplicities: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.functions)

    def matrix(self, N: int | None = None) -> np.ndarray:
        """Quadrature-weighted samples, one column per function."""
        fns = self.functions[: len(self.functions) if N is None else N]
        sw = np.sqrt(self.grid.w)[:, None]
        return np.column_stack([(sw * f.values).reshape(-1) for f in fns])


def build_bundle(p: ProblemSpec, lams, grid: QuadGrid | None = None) -> EigenfunctionBundle:
    grid = QuadGrid.for_problem(p) if grid is None else grid
    lams = [complex(l) for l in lams]
    efs = [_eigenfunction_from(p, fs) for fs in fundamental_matrices(p, lams, grid)]
    return EigenfunctionBundle(
        tuple(lams), tuple(e.function for e in efs), grid, tuple(e.geometric_multiplicity for e in efs))


def eigen_residuals(p: ProblemSpec, bundle: EigenfunctionBundle) -> tuple[np.ndarray, np.ndarray]:
    """Boundary residuals ``|C y(0) + D y(1)|`` and collocation residuals of the eigen-equation.

    The collocation residual is taken at the Gauss nodes and divided by
    ``max(1, |lambda|) sup |y|``.
    """
    g = bundle.grid
    Qx = np.array([p.Q.matrix(x) for x in g.x])
    bres, cres = [], []
    for lam, f in zip(bundle.eigenvalues, bundle.functions):
        y = f.values
        bres.append(float(np.linalg.norm(p.bc.C @ y[0] + p.bc.D @ y[-1])))
        r = -1j * g.derivative(y) / p.B.diag[None] + np.einsum("ijk,ik->ij", Qx, y) - lam * y
        cres.append(float(np.abs(r[g.node_mask]).max() / (max(1.0, abs(lam)) * np.abs(y).max())))
    return np.array(bres), np.array(cres)


def default_guesses(p: ProblemSpec, num: int) -> np.ndarray | None:
    """Eigenvalues of the same boundary conditions with ``Q = 0``, when known in closed form."""
    if p.n != 2:
        return None
    N = num + 2
    qp = match_quasi_periodic(p.bc)
    if qp is not None:
        return unperturbed_lattice(p.B, qp[0], qp[1], N).points()
    sp = match_special(p.bc)
    if sp is not None and sp[0] * sp[1] != 0:
        return special_lattice(p.B, sp[0], sp[1], N).points()
    return None


def locate_eigenvalues(p: ProblemSpec, num: int, guesses=None, tol: float = 1e-10) -> np.ndarray:
    """The ``num`` eigenvalues nearest to the origin, searched around ``guesses``.

    Guesses are tried in order of modulus with one small box each; if a box
    does not hold exactly one zero, the bounding rectangle of the guesses is
    searched instead.
    """
    if guesses is None:
        guesses = default_guesses(p, num)
    if guesses is None:
        raise ValidationError("no closed-form guesses for these boundary conditions; give a rectangle")
    g = np.unique(np.round(np.asarray(guesses, dtype=complex), 12))
    g = g[np.lexsort((g.imag, g.real, np.abs(g)))][:num]
    if g.size < 2:
        radius = 1.0
    else:
        d = np.abs(g[:, None] - g[None, :])
        d[np.diag_indices_from(d)] = np.inf
        radius = min(1.0, 0.45 * float(d.min()))
    rects = [Rect.around(complex(z), radius) for z in g]
    try:
        ev = find_eigenvalues_in_boxes(p, rects, tol)
        if len(ev.items) == g.size and all(e.multiplicity == 1 and e.refined for e in ev.items):
            lams = ev.values
            return lams[np.lexsort((lams.imag, lams.real, np.abs(lams)))]
    except BVPError:
        pass
    pad = 2 * radius
    big = Rect(g.real.min() - pad, g.real.max() + pad, g.imag.min() - pad, g.imag.max() + pad)
    ev = find_eigenvalues(p, big, tol)
    lams = np.array([e.lam for e in ev.items for _ in range(e.multiplicity)])
    lams = lams[np.lexsort((lams.imag, lams.real, np.abs(lams)))]
    return lams[:num]


def second_component_residual(bundle: EigenfunctionBundle, a: float) -> np.ndarray:
    """``sup_{x in [a, 1]} |f_2(x)|`` for every normalized member of the bundle."""
    mask = bundle.grid.x >= a
    return np.array([float(np.abs(f.values[mask, 1]).max()) for f in bundle.functions])


@dataclass(frozen=True)
class DefectReport:
    """Relative distance of ``w`` to the span of the first ``N`` bundle members."""

    test_function: str
    residual_by_N: tuple[tuple[int, float], ...]
    regularized: tuple[bool, ...]

    def to_json(self) -> dict:
        return {
            "test_function": self.test_function,
            "residual_by_N": [[n, r] for n, r in self.residual_by_N],
            "regularized": list(self.regularized),
        }


GRAM_COND_MAX = 1e12


def completeness_defect(bundle: EigenfunctionBundle, w: SampledFunction, N_list, test_id: str = "w") -> DefectReport:
    """``||w - P_N w|| / ||w||`` with ``P_N`` the projection on the first ``N`` members.

    The normal equations ``G c = A^* w`` are solved in the equivalent
    least-squares form; when ``cond(G) > 1e12`` a Tikhonov term
    ``1e-12 ||G||`` is added and the entry is marked as regularized.
    """
    if len(bundle) == 0:
        raise ValidationError("empty bundle")
    b = (np.sqrt(bundle.grid.w)[:, None] * w.values).reshape(-1)
    bn = float(np.linalg.norm(b))
    if bn == 0:
        raise ValidationError("test function is zero")
    out, reg = [], []
    for N in N_list:
        if not 1 <= N <= len(bundle):
            raise ValidationError(f"N = {N} outside 1..{len(bundle)}")
        A = bundle.matrix(N)
        s = np.linalg.svd(A, compute_uv=False)
        cond_g = (s[0] / s[-1]) ** 2 if s[-1] > 0 else math.inf
        if cond_g > GRAM_COND_MAX:
            tau = 1e-12 * s[0] ** 2
            Aa = np.vstack([A, math.sqrt(tau) * np.eye(N)])
            ba = np.concatenate([b, np.zeros(N)])
            c = np.linalg.lstsq(Aa, ba, rcond=None)[0]
            reg.append(True)
        else:
            c = np.linalg.lstsq(A, b, rcond=None)[0]
            reg.append(False)
        out.append((int(N), float(np.linalg.norm(b - A @ c) / bn)))
    return DefectReport(test_id, tuple(out), tuple(reg))


def gram_matrix(bundle: EigenfunctionBundle, N: int | None = None) -> np.ndarray:
    """``G[j, k] = (u_k, u_j)`` for the first ``N`` normalized members."""
    A = bundle.matrix(N)
    return A.conj().T @ A


def gram_condition(bundle: EigenfunctionBundle, N: int) -> float:
    """2-norm condition number of the Gram matrix; ``inf`` when numerically singular."""
    if not 1 <= N <= len(bundle):
        raise ValidationError(f"N = {N} outside 1..{len(bundle)}")
    s = np.linalg.svd(gram_matrix(bundle, N), compute_uv=False)
    if s[-1] <= 1e-15 * s[0]:
        return math.inf
    return float(s[0] / s[-1])


def bump(grid: QuadGrid, a: float, component: int = 1, n: int = 2) -> SampledFunction:
    """Unit-norm ``w`` with ``g(x) = exp(-1/(1 - t^2))`` on ``(a, 1)`` in one component, zero elsewhere.

    ``t`` maps ``(a, 1)`` affinely onto ``(-1, 1)``.
    """
    if not 0 <= a < 1:
        raise ValidationError("bump needs 0 <= a < 1")
    t = 2 * (grid.x - a) / (1 - a) - 1
    g = np.zeros_like(grid.x)
    inside = np.abs(t) < 1
    g[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    v = np.zeros((len(grid), n), dtype=complex)
    v[:, component] = g
    f = SampledFunction(grid, v)
    return f.scale(1.0 / f.norm())
