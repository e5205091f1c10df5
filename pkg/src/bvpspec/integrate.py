"""Fundamental matrix ``Phi(x, lambda)`` of ``Phi' = i B (lambda I - Q(x)) Phi``, ``Phi(0) = I``.

The integrator is a Dormand-Prince 5(4) pair vectorized over a batch of
spectral parameters: every member of the batch advances with the same step,
which is chosen from the worst local error in the batch.  The integration is
restarted at every breakpoint of a piecewise potential.

The variational system ``W' = i B (lambda - Q) W + i B Phi``, ``W(0) = 0``
gives ``dPhi/dlambda`` without finite differences.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import legendre as L

from .errors import IntegrationError, ValidationError
from .model import Expr, Potential, ProblemSpec

__all__ = [
    "CompiledPotential",
    "propagate",
    "phi_at_one",
    "QuadGrid",
    "SampledFunction",
    "FundamentalSolution",
    "fundamental_matrix",
    "fundamental_matrices",
    "apply_K",
    "psi_evaluator",
]

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
_A_NZ = [[(j, a) for j, a in enumerate(row) if a != 0.0] for row in _A]
_E_NZ = [(j, e) for j, e in enumerate(_E) if e != 0.0]


class CompiledPotential:
    """Piecewise-polynomial ``Q`` as coefficient arrays, one per smooth segment."""

    def __init__(self, Q: Potential):
        self.n = Q.n
        edges = [0.0, *Q.breakpoints(), 1.0]
        self.edges = np.array(edges)
        self.coeffs: list[np.ndarray] = []
        for a, b in zip(edges[:-1], edges[1:]):
            seg = Q.on_interval(a, b)
            polys = [[_coeffs_of(seg[j, k]) for k in range(self.n)] for j in range(self.n)]
            deg = max(len(c) for row in polys for c in row)
            arr = np.zeros((deg, self.n, self.n), dtype=complex)
            for j in range(self.n):
                for k in range(self.n):
                    c = polys[j][k]
                    arr[: len(c), j, k] = c
            self.coeffs.append(arr)
        self.is_zero = Q.is_zero

    def segments(self) -> list[tuple[float, float]]:
        return list(zip(self.edges[:-1], self.edges[1:]))

    def at(self, seg: int, x: float) -> np.ndarray:
        c = self.coeffs[seg]
        out = c[-1].copy()
        for k in range(len(c) - 2, -1, -1):
            out = out * x + c[k]
        return out


def _coeffs_of(e: Expr) -> np.ndarray:
    if e.kind == "zero":
        return np.zeros(1, dtype=complex)
    return np.asarray(e.coeffs, dtype=complex)


def _check_trust(p: ProblemSpec, lams: np.ndarray, trust: float) -> None:
    b = p.B.diag
    worst = float(np.max(np.abs(np.imag(np.outer(lams, b))))) if lams.size else 0.0
    if worst > trust:
        raise IntegrationError(
            f"max |Im(b_j lambda)| = {worst:.6g} exceeds the trust region {trust:.6g}")


def propagate(
    p: ProblemSpec,
    lams,
    out_x: Sequence[float] = (1.0,),
    derivative: bool = False,
    rtol: float | None = None,
    atol: float | None = None,
    fixed_steps: int | None = None,
    check_trust: bool = True,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Integrate ``Phi`` (and optionally ``dPhi/dlambda``) for a batch of ``lambda``.

    Returns arrays of shape ``(m, len(out_x), n, n)``; the second is ``None``
    unless ``derivative``.  ``out_x`` must be increasing in [0, 1].  With
    ``fixed_steps = N`` the step is ``1/N`` (clipped to land on output points
    and breakpoints) and no error control is done.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    out_x = np.asarray(out_x, dtype=float)
    if out_x.ndim != 1 or np.any(np.diff(out_x) < 0) or out_x[0] < 0 or out_x[-1] > 1:
        raise ValidationError("output points must be increasing within [0, 1]")
    s = p.solver
    rtol = s.rtol if rtol is None else rtol
    atol = s.atol if atol is None else atol
    if check_trust:
        _check_trust(p, lams, s.trust)

    n = p.n
    m = lams.size
    b = p.B.diag
    ib = (1j * b)[None, :, None]
    eye = np.eye(n)
    cq = CompiledPotential(p.Q)
    lam_eye = lams[:, None, None] * eye[None]
    zeroQ = cq.is_zero

    rows = 2 * n if derivative else n
    Y = np.zeros((m, rows, n), dtype=complex)
    Y[:, :n, :] = eye
    out = np.empty((m, out_x.size, rows, n), dtype=complex)

    def rhs(seg: int, x: float, Y: np.ndarray) -> np.ndarray:
        if zeroQ:
            A = ib * lam_eye
        else:
            A = ib * (lam_eye - cq.at(seg, x)[None])
        top = A @ Y[:, :n]
        if not derivative:
            return top
        bot = A @ Y[:, n:] + ib * Y[:, :n]
        return np.concatenate([top, bot], axis=1)

    # initial step from the oscillation scale
    qn = max((float(np.abs(c).sum(axis=0).max()) for c in cq.coeffs), default=0.0)
    scale = float(np.max(np.abs(b))) * (float(np.max(np.abs(lams))) + qn) + 1.0
    h = min(0.1, 0.2 / scale) if fixed_steps is None else 1.0 / fixed_steps

    oi = 0
    while oi < out_x.size and out_x[oi] <= 0.0:
        out[:, oi] = Y
        oi += 1
    steps = 0
    for seg, (a, bseg) in enumerate(cq.segments()):
        x = a
        K1 = None
        while x < bseg:
            target = min(bseg, out_x[oi]) if oi < out_x.size else bseg
            hs = min(h, target - x)
            landed = target - x - hs <= 1e-13
            if landed:
                hs = target - x
            if K1 is None:
                K1 = rhs(seg, x, Y)
            K = [K1]
            for i in range(1, 7):
                acc = Y.copy()
                for j, a_ij in _A_NZ[i]:
                    acc += (hs * a_ij) * K[j]
                K.append(rhs(seg, x + _C[i] * hs, acc))
            Ynew = acc  # FSAL: the last stage argument is the 5th-order solution
            steps += 1
            if steps > s.max_steps:
                raise IntegrationError("stiffness/overflow: step budget exhausted")
            if not np.all(np.isfinite(Ynew)):
                raise IntegrationError("stiffness/overflow: non-finite fundamental matrix")
            if fixed_steps is None:
                errv = (hs * _E_NZ[0][1]) * K[_E_NZ[0][0]]
                for j, e_j in _E_NZ[1:]:
                    errv += (hs * e_j) * K[j]
                err = _error_norm(errv, Y, Ynew, rtol, atol)
                if err > 1.0:
                    h = hs * max(0.2, 0.9 * err ** -0.2)
                    if h < 1e-13:
                        raise IntegrationError("stiffness/overflow: step size underflow")
                    continue
                fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                # a step shortened to hit an output point does not shrink h
                h = max(h, hs * fac) if hs < h else hs * fac
            Y = Ynew
            K1 = K[6]
            x = target if landed else x + hs
            while oi < out_x.size and out_x[oi] <= x:
                out[:, oi] = Y
                oi += 1
    while oi < out_x.size:
        out[:, oi] = Y
        oi += 1

    phi = out[:, :, :n, :]
    dphi = out[:, :, n:, :] if derivative else None
    return phi, dphi


def _error_norm(errv, Y, Ynew, rtol, atol) -> float:
    """Normwise error per batch member, worst over the batch."""
    m = Y.shape[0]
    mag = np.maximum(np.abs(Y).reshape(m, -1).max(axis=1), np.abs(Ynew).reshape(m, -1).max(axis=1))
    return float((np.abs(errv).reshape(m, -1).max(axis=1) / (atol + rtol * mag)).max())


def phi_at_one(p: ProblemSpec, lams, derivative: bool = False, rtol: float | None = None):
    """``Phi(1, lambda)`` for each ``lambda`` (shape ``(m, n, n)``) and optionally its derivative."""
    phi, dphi = propagate(p, lams, (1.0,), derivative=derivative, rtol=rtol)
    return phi[:, 0], (dphi[:, 0] if dphi is not None else None)


# --------------------------------------------------------------------------
# quadrature grid and sampled functions

_GL_X, _GL_W = L.leggauss(8)


def _cumulative_matrix() -> np.ndarray:
    """``S[i, j] = int_{-1}^{t_i} l_j(s) ds`` for the 8-point Legendre nodes."""
    V = L.legvander(_GL_X, 7)
    Vinv = np.linalg.inv(V)
    S = np.empty((8, 8))
    for j in range(8):
        c = Vinv[:, j]
        ci = L.legint(c, lbnd=-1.0)
        S[:, j] = L.legval(_GL_X, ci)
    return S


def _diff_matrix(t: np.ndarray) -> np.ndarray:
    """Barycentric differentiation matrix on nodes ``t``."""
    k = t.size
    w = np.array([1.0 / np.prod([t[i] - t[j] for j in range(k) if j != i]) for i in range(k)])
    Dm = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i != j:
                Dm[i, j] = (w[j] / w[i]) / (t[i] - t[j])
        Dm[i, i] = -Dm[i].sum()
    return Dm


_S8 = _cumulative_matrix()
_T10 = np.concatenate([[-1.0], _GL_X, [1.0]])
_D10 = _diff_matrix(_T10)


class QuadGrid:
    """Composite 8-point Gauss-Legendre grid on panels of [0, 1].

    Grid points are the panel edges plus the Gauss nodes of every panel, in
    increasing order.  Edge points carry zero quadrature weight; they hold the
    values at 0, 1 and the potential breakpoints.
    """

    def __init__(self, panels: int = 32, breakpoints: Sequence[float] = ()):
        edges = np.union1d(np.linspace(0.0, 1.0, panels + 1), np.asarray(breakpoints, dtype=float))
        edges = edges[np.concatenate([[True], np.diff(edges) > 1e-14])]
        edges[-1] = 1.0
        self.edges = edges
        npan = edges.size - 1
        self.npanels = npan
        x = np.empty(npan * 9 + 1)
        w = np.zeros_like(x)
        for k in range(npan):
            a, bb = edges[k], edges[k + 1]
            x[9 * k] = a
            x[9 * k + 1: 9 * k + 9] = 0.5 * (a + bb) + 0.5 * (bb - a) * _GL_X
            w[9 * k + 1: 9 * k + 9] = 0.5 * (bb - a) * _GL_W
        x[-1] = 1.0
        self.x = x
        self.w = w
        self.edge_index = np.arange(0, x.size, 9)
        self.node_mask = w > 0

    @classmethod
    def for_problem(cls, p: ProblemSpec, panels: int | None = None) -> "QuadGrid":
        return cls(p.solver.panels if panels is None else panels, p.Q.breakpoints())

    def __len__(self) -> int:
        return self.x.size

    def integrate(self, g: np.ndarray) -> np.ndarray:
        """``int_0^1 g`` along axis 0."""
        return np.tensordot(self.w, g, axes=(0, 0))

    def cumulative(self, g: np.ndarray) -> np.ndarray:
        """``int_0^{x_i} g`` at every grid point (axis 0 indexes the grid)."""
        g = np.asarray(g)
        out = np.zeros_like(g, dtype=complex)
        acc = np.zeros(g.shape[1:], dtype=complex)
        for k in range(self.npanels):
            half = 0.5 * (self.edges[k + 1] - self.edges[k])
            gn = g[9 * k + 1: 9 * k + 9]
            out[9 * k] = acc
            out[9 * k + 1: 9 * k + 9] = acc + half * np.tensordot(_S8, gn, axes=(1, 0))
            acc = acc + half * np.tensordot(_GL_W, gn, axes=(0, 0))
        out[-1] = acc
        return out

    def derivative(self, y: np.ndarray) -> np.ndarray:
        """Derivative at the Gauss nodes (edges get one-sided panel values)."""
        y = np.asarray(y)
        d = np.zeros_like(y, dtype=complex)
        for k in range(self.npanels):
            half = 0.5 * (self.edges[k + 1] - self.edges[k])
            blk = y[9 * k: 9 * k + 10]
            dk = np.tensordot(_D10, blk, axes=(1, 0)) / half
            d[9 * k: 9 * k + 9] = dk[:9]
            if k == self.npanels - 1:
                d[-1] = dk[9]
        return d


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """``C^n``-valued function sampled on a :class:`QuadGrid`; ``values`` has shape ``(len(grid), n)``."""

    grid: QuadGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != len(self.grid):
            raise ValidationError("sampled function does not match its grid")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: QuadGrid, fn) -> "SampledFunction":
        """``fn(x)`` returns one row per component, shape ``(n, len(x))``."""
        return cls(grid, np.asarray(fn(grid.x), dtype=complex).T)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def inner(self, other: "SampledFunction") -> complex:
        """``(self, other) = int <self, other>`` (linear in the first slot)."""
        return complex(self.grid.integrate(np.sum(self.values * np.conj(other.values), axis=1)))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self).real, 0.0)))

    def __add__(self, o: "SampledFunction") -> "SampledFunction":
        return SampledFunction(self.grid, self.values + o.values)

    def __sub__(self, o: "SampledFunction") -> "SampledFunction":
        return SampledFunction(self.grid, self.values - o.values)

    def scale(self, c: complex) -> "SampledFunction":
        return SampledFunction(self.grid, c * self.values)

    def at_zero(self) -> np.ndarray:
        return self.values[0]

    def at_one(self) -> np.ndarray:
        return self.values[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["x"] + [f"{p}(y{j + 1})" for j in range(self.n) for p in ("re", "im")]
        buf.write(",".join(cols) + "\n")
        for xi, row in zip(self.grid.x, self.values):
            parts = [format(float(xi), ".17g")]
            for v in row:
                parts += [format(float(v.real), ".17g"), format(float(v.imag), ".17g")]
            buf.write(",".join(parts) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, grid: QuadGrid) -> "SampledFunction":
        """Read ``x, re, im, ...`` rows and interpolate linearly onto ``grid``.

        Rows already on the grid are taken verbatim.
        """
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if lines and not _is_number(lines[0].split(",")[0]):
            lines = lines[1:]
        try:
            data = np.array([[float(v) for v in ln.split(",")] for ln in lines])
        except ValueError as exc:
            raise ValidationError(f"malformed CSV: {exc}") from exc
        if data.ndim != 2 or data.shape[1] < 3 or data.shape[1] % 2 == 0:
            raise ValidationError("CSV must have columns x, re(y1), im(y1), ...")
        xs = data[:, 0]
        vals = data[:, 1::2] + 1j * data[:, 2::2]
        if xs.size == len(grid) and np.allclose(xs, grid.x, atol=1e-15, rtol=0):
            return cls(grid, vals)
        out = np.column_stack([
            np.interp(grid.x, xs, vals[:, j].real) + 1j * np.interp(grid.x, xs, vals[:, j].imag)
            for j in range(vals.shape[1])
        ])
        return cls(grid, out)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


# --------------------------------------------------------------------------
# fundamental solution


@dataclass(frozen=True, eq=False)
class FundamentalSolution:
    """``Phi(x_i, lambda)`` on a quadrature grid, plus ``Phi(1)`` and optionally ``dPhi/dlambda(1)``."""

    lam: complex
    grid: QuadGrid
    phi: np.ndarray
    dphi_dlambda_at_1: np.ndarray | None = None

    @property
    def phi_at_1(self) -> np.ndarray:
        return self.phi[-1]

    @property
    def n(self) -> int:
        return self.phi.shape[1]

    def phi_inv(self) -> np.ndarray:
        return np.linalg.inv(self.phi)

    def apply(self, v) -> SampledFunction:
        """``x -> Phi(x) v`` as a sampled function."""
        return SampledFunction(self.grid, self.phi @ np.asarray(v, dtype=complex))


def fundamental_matrix(
    p: ProblemSpec, lam: complex, want_derivative: bool = False, grid: QuadGrid | None = None
) -> FundamentalSolution:
    grid = QuadGrid.for_problem(p) if grid is None else grid
    phi, dphi = propagate(p, [lam], grid.x, derivative=want_derivative)
    phi = phi[0]
    phi[0] = np.eye(p.n)
    if np.any(np.abs(np.linalg.det(phi)) == 0):
        raise IntegrationError("fundamental matrix became singular")
    return FundamentalSolution(complex(lam), grid, phi, dphi[0, -1] if dphi is not None else None)


def fundamental_matrices(p: ProblemSpec, lams, grid: QuadGrid | None = None) -> list[FundamentalSolution]:
    """:func:`fundamental_matrix` for a batch of ``lambda`` in one integration."""
    grid = QuadGrid.for_problem(p) if grid is None else grid
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    if lams.size == 0:
        return []
    phi, _ = propagate(p, lams, grid.x)
    phi[:, 0] = np.eye(p.n)
    return [FundamentalSolution(complex(l), grid, phi[k]) for k, l in enumerate(lams)]


def apply_K(p: ProblemSpec, fs: FundamentalSolution, f: SampledFunction) -> SampledFunction:
    """``(K f)(x) = Phi(x) int_0^x Phi^{-1}(t) i B f(t) dt``."""
    if f.grid is not fs.grid and not np.array_equal(f.grid.x, fs.grid.x):
        raise ValidationError("function and fundamental solution use different grids")
    g = np.einsum("ijk,ik->ij", fs.phi_inv(), 1j * p.B.diag[None, :] * f.values)
    cum = fs.grid.cumulative(g)
    return SampledFunction(fs.grid, np.einsum("ijk,ik->ij", fs.phi, cum))


def psi_evaluator(p: ProblemSpec, fs: FundamentalSolution) -> np.ndarray:
    """``Psi(x_i) = i Phi(1) Phi^{-1}(x_i) B`` on the grid, shape ``(len(grid), n, n)``."""
    return 1j * np.einsum("jk,ikl->ijl", fs.phi_at_1, fs.phi_inv()) * p.B.diag[None, None, :]
