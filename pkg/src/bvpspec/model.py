"""Domain types for first-order systems ``-i B^{-1} y' + Q(x) y = lambda y`` on [0, 1].

A problem is the triple (weight ``B``, potential ``Q``, boundary pair ``(C, D)``)
together with solver settings.  Everything here is an immutable value.

Boundary conditions are stored only as the matrices ``C`` and ``D`` of
``C y(0) + D y(1) = 0``.  For ``n = 2`` the coefficient rows ``a_{jk}`` are the rows
of the 2x4 block ``(C D)`` with column order ``(y1(0), y2(0), y1(1), y2(1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ValidationError

__all__ = [
    "Expr",
    "WeightMatrix",
    "Potential",
    "BoundarySpec",
    "BoundaryInvariants",
    "SolverSettings",
    "ProblemSpec",
    "Diagnostic",
    "compute_j_invariants",
    "apply_equivalence_transform",
    "validate",
    "row_equivalent",
    "quasi_periodic_bc",
    "special_bc",
    "match_quasi_periodic",
    "match_special",
    "is_initial_value",
    "TRANSFORMS",
]

TRANSFORMS = ("swap_components", "reflect_interval")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=complex)
    arr.setflags(write=False)
    return arr


def _check_finite(values: Iterable[complex], what: str) -> None:
    for v in values:
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise ValidationError(f"non-finite value in {what}")


# --------------------------------------------------------------------------
# potential expressions


@dataclass(frozen=True)
class Expr:
    """Scalar potential entry: zero, constant, polynomial or piecewise polynomial.

    Polynomial coefficients are in ascending powers of ``x``.  A piecewise
    expression carries strictly increasing ``breaks`` from 0 to 1 and one
    non-piecewise expression per interval ``[breaks[i], breaks[i+1])``.
    """

    kind: str
    coeffs: tuple[complex, ...] = ()
    breaks: tuple[float, ...] = ()
    pieces: tuple["Expr", ...] = ()

    def __post_init__(self):
        if self.kind not in ("zero", "const", "poly", "piecewise"):
            raise ValidationError(f"unknown expression kind {self.kind!r}")
        _check_finite(self.coeffs, "expression coefficients")
        if self.kind == "const" and len(self.coeffs) != 1:
            raise ValidationError("const expression needs exactly one value")
        if self.kind == "poly" and not self.coeffs:
            raise ValidationError("poly expression needs coefficients")
        if self.kind == "piecewise":
            if len(self.breaks) != len(self.pieces) + 1 or not self.pieces:
                raise ValidationError("piecewise: need len(breaks) == len(pieces) + 1")
            if any(pc.kind == "piecewise" for pc in self.pieces):
                raise ValidationError("piecewise pieces must not be piecewise")

    # constructors
    @classmethod
    def zero(cls) -> "Expr":
        return cls("zero")

    @classmethod
    def const(cls, value: complex) -> "Expr":
        return cls("const", (complex(value),))

    @classmethod
    def poly(cls, coeffs: Sequence[complex]) -> "Expr":
        return cls("poly", tuple(complex(c) for c in coeffs))

    @classmethod
    def piecewise(cls, breaks: Sequence[float], pieces: Sequence["Expr"]) -> "Expr":
        return cls("piecewise", breaks=tuple(float(b) for b in breaks), pieces=tuple(pieces))

    # queries
    @property
    def is_zero(self) -> bool:
        """Symbolic zero: only the ``zero`` kind counts."""
        return self.kind == "zero"

    @property
    def is_entire(self) -> bool:
        return self.kind in ("zero", "const", "poly")

    @property
    def is_constant(self) -> bool:
        return self.kind in ("zero", "const") or (
            self.kind == "poly" and all(c == 0 for c in self.coeffs[1:])
        )

    def constant_value(self) -> complex:
        if not self.is_constant:
            raise ValueError("expression is not constant")
        return 0j if self.kind == "zero" else self.coeffs[0]

    def breakpoints(self) -> tuple[float, ...]:
        return self.breaks[1:-1] if self.kind == "piecewise" else ()

    def breaks_ok(self) -> bool:
        if self.kind != "piecewise":
            return True
        b = np.asarray(self.breaks)
        return bool(b[0] == 0.0 and b[-1] == 1.0 and np.all(np.diff(b) > 0))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x, dtype=complex)
        if self.kind == "const":
            return np.full_like(x, self.coeffs[0], dtype=complex)
        if self.kind == "poly":
            return P.polyval(x, np.asarray(self.coeffs))
        idx = np.clip(np.searchsorted(self.breaks, x, side="right") - 1, 0, len(self.pieces) - 1)
        out = np.zeros_like(x, dtype=complex)
        for i, pc in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = pc(x[mask])
        return out

    def piece_on(self, a: float, b: float) -> "Expr":
        """The smooth expression governing the open interval ``(a, b)``."""
        if self.kind != "piecewise":
            return self
        mid = 0.5 * (a + b)
        i = int(np.clip(np.searchsorted(self.breaks, mid, side="right") - 1, 0, len(self.pieces) - 1))
        return self.pieces[i]

    def conj(self) -> "Expr":
        if self.kind == "piecewise":
            return replace(self, pieces=tuple(pc.conj() for pc in self.pieces))
        return replace(self, coeffs=tuple(c.conjugate() for c in self.coeffs))

    def scaled(self, s: complex) -> "Expr":
        if self.kind == "zero":
            return self
        if self.kind == "piecewise":
            return replace(self, pieces=tuple(pc.scaled(s) for pc in self.pieces))
        return replace(self, coeffs=tuple(s * c for c in self.coeffs))

    def reflect(self) -> "Expr":
        """Expression for ``x -> e(1 - x)``, breakpoints reflected."""
        if self.kind in ("zero", "const"):
            return self
        if self.kind == "poly":
            comp = np.zeros(1, dtype=complex)
            # Horner in the substituted variable 1 - x
            for a in reversed(self.coeffs):
                comp = P.polyadd(P.polymul(comp, [1.0, -1.0]), [a])
            return Expr.poly(tuple(complex(v) for v in np.atleast_1d(comp)))
        breaks = tuple(1.0 - b for b in reversed(self.breaks))
        return Expr.piecewise(breaks, [pc.reflect() for pc in reversed(self.pieces)])

    def sup_norm(self, samples: int = 2001) -> float:
        x = np.linspace(0.0, 1.0, samples)
        x = np.union1d(x, np.asarray(self.breakpoints(), dtype=float))
        vals = np.abs(self(x))
        if self.kind == "piecewise":
            # left limits at the breakpoints
            for b, pc in zip(self.breaks[1:-1], self.pieces[:-1]):
                vals = np.append(vals, abs(pc(np.array([b]))[0]))
        return float(vals.max())

    # serialization
    def to_json(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "const":
            return {"kind": "const", "data": _cjson(self.coeffs[0])}
        if self.kind == "poly":
            return {"kind": "poly", "data": [_cjson(c) for c in self.coeffs]}
        return {
            "kind": "piecewise",
            "data": {"breaks": list(self.breaks), "pieces": [pc.to_json() for pc in self.pieces]},
        }

    @classmethod
    def from_json(cls, obj) -> "Expr":
        if obj is None:
            return cls.zero()
        if isinstance(obj, (int, float, list)):
            return cls.const(_cparse(obj))
        kind = obj.get("kind")
        data = obj.get("data")
        if kind == "zero":
            return cls.zero()
        if kind == "const":
            return cls.const(_cparse(data))
        if kind == "poly":
            return cls.poly([_cparse(c) for c in data])
        if kind == "piecewise":
            return cls.piecewise(data["breaks"], [cls.from_json(pc) for pc in data["pieces"]])
        raise ValidationError(f"unknown expression kind {kind!r}")


def _cjson(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _cparse(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValidationError(f"complex value must be [re, im], got {v!r}")
        z = complex(float(v[0]), float(v[1]))
    else:
        z = complex(v)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValidationError("non-finite complex value")
    return z


# --------------------------------------------------------------------------
# weight, potential, boundary conditions


@dataclass(frozen=True)
class WeightMatrix:
    """Diagonal weight ``B = diag(b_1, ..., b_n)``."""

    entries: tuple[complex, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(complex(b) for b in self.entries))
        _check_finite(self.entries, "B")

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def diag(self) -> np.ndarray:
        return np.array(self.entries, dtype=complex)

    @property
    def essential_non_dirac(self) -> bool:
        """For n = 2: ``b1/b2`` has nonzero imaginary part."""
        if self.n != 2 or self.entries[1] == 0:
            return False
        r = self.entries[0] / self.entries[1]
        return abs(r.imag) > 1e-12 * abs(r)

    def ratio(self) -> complex:
        return self.entries[0] / self.entries[1]

    def negated(self) -> "WeightMatrix":
        return WeightMatrix(tuple(-b for b in self.entries))

    def conj(self) -> "WeightMatrix":
        return WeightMatrix(tuple(b.conjugate() for b in self.entries))

    def permuted(self, perm: Sequence[int]) -> "WeightMatrix":
        return WeightMatrix(tuple(self.entries[i] for i in perm))


@dataclass(frozen=True)
class Potential:
    """Matrix potential, one :class:`Expr` per entry."""

    entries: tuple[tuple[Expr, ...], ...]

    @classmethod
    def zero(cls, n: int = 2) -> "Potential":
        return cls(tuple(tuple(Expr.zero() for _ in range(n)) for _ in range(n)))

    @classmethod
    def offdiag(cls, q12: Expr, q21: Expr) -> "Potential":
        z = Expr.zero()
        return cls(((z, q12), (q21, z)))

    @property
    def n(self) -> int:
        return len(self.entries)

    def __getitem__(self, jk: tuple[int, int]) -> Expr:
        j, k = jk
        return self.entries[j][k]

    @property
    def is_zero(self) -> bool:
        return all(e.is_zero for row in self.entries for e in row)

    @property
    def is_entire(self) -> bool:
        return all(e.is_entire for row in self.entries for e in row)

    @property
    def is_constant(self) -> bool:
        return all(e.is_constant for row in self.entries for e in row)

    def breakpoints(self) -> tuple[float, ...]:
        pts: set[float] = set()
        for row in self.entries:
            for e in row:
                pts.update(e.breakpoints())
        return tuple(sorted(pts))

    def matrix(self, x: float) -> np.ndarray:
        n = self.n
        out = np.empty((n, n), dtype=complex)
        xs = np.array([x])
        for j in range(n):
            for k in range(n):
                out[j, k] = self.entries[j][k](xs)[0]
        return out

    def on_interval(self, a: float, b: float) -> "Potential":
        """Smooth restriction governing ``(a, b)``; no breakpoints inside."""
        return Potential(tuple(tuple(e.piece_on(a, b) for e in row) for row in self.entries))

    def sup_norm(self) -> float:
        """``max_{jk} ||Q_jk||_{C[0,1]}``."""
        return max(e.sup_norm() for row in self.entries for e in row)

    def adjoint(self) -> "Potential":
        n = self.n
        return Potential(tuple(tuple(self.entries[k][j].conj() for k in range(n)) for j in range(n)))

    def permuted(self, perm: Sequence[int]) -> "Potential":
        return Potential(tuple(tuple(self.entries[perm[j]][perm[k]] for k in range(self.n)) for j in range(self.n)))

    def reflected(self) -> "Potential":
        return Potential(tuple(tuple(e.reflect() for e in row) for row in self.entries))


@dataclass(frozen=True, eq=False)
class BoundarySpec:
    """``C y(0) + D y(1) = 0``."""

    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        C, D = _frozen(self.C), _frozen(self.D)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape != D.shape:
            raise ValidationError("C and D must be square matrices of equal size")
        _check_finite(C.ravel(), "C")
        _check_finite(D.ravel(), "D")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @classmethod
    def from_rows(cls, rows) -> "BoundarySpec":
        rows = np.asarray(rows, dtype=complex)
        n = rows.shape[0]
        if rows.shape != (n, 2 * n):
            raise ValidationError("boundary rows must form an n x 2n block")
        return cls(rows[:, :n], rows[:, n:])

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def rows(self) -> np.ndarray:
        """The ``n x 2n`` block ``(C D)``; for n = 2 these are the ``a_{jk}``."""
        return np.hstack([self.C, self.D])

    def rank(self, rtol: float = 1e-10) -> int:
        return _numerical_rank(self.rows, rtol)

    def permute_columns(self, perm: Sequence[int]) -> "BoundarySpec":
        return BoundarySpec.from_rows(self.rows[:, list(perm)])

    def normalized(self) -> "BoundarySpec":
        """Row-reduced representative (reduced row echelon form, partial pivoting)."""
        return BoundarySpec.from_rows(_rref(self.rows))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoundarySpec):
            return NotImplemented
        return np.array_equal(self.C, other.C) and np.array_equal(self.D, other.D)

    def __hash__(self):
        return hash((self.C.tobytes(), self.D.tobytes()))

    def __repr__(self) -> str:
        return f"BoundarySpec(rows={self.rows.tolist()!r})"


def quasi_periodic_bc(d1: complex, d2: complex) -> BoundarySpec:
    """``y1(0) - d1 y1(1) = 0``, ``y2(0) - d2 y2(1) = 0``."""
    return BoundarySpec.from_rows([[1, 0, -d1, 0], [0, 1, 0, -d2]])


def special_bc(h1: complex, h2: complex) -> BoundarySpec:
    """``y1(0) - h1 y2(0) = 0``, ``y1(1) - h2 y2(0) = 0``."""
    return BoundarySpec.from_rows([[1, -h1, 0, 0], [0, -h2, 1, 0]])


def match_quasi_periodic(bc: BoundarySpec, tol: float = 1e-12) -> tuple[complex, complex] | None:
    """``(d1, d2)`` if ``bc`` is row-equivalent to ``y_j(0) - d_j y_j(1) = 0`` with ``d1 d2 != 0``."""
    if bc.n != 2:
        return None
    scale = max(float(np.abs(bc.rows).max()), 1e-300)
    if abs(np.linalg.det(bc.C)) <= 1e-10 * scale * scale:
        return None
    Dp = np.linalg.solve(bc.C, bc.D)
    s2 = max(1.0, float(np.abs(Dp).max()))
    if abs(Dp[0, 1]) > tol * s2 or abs(Dp[1, 0]) > tol * s2:
        return None
    d1, d2 = complex(-Dp[0, 0]), complex(-Dp[1, 1])
    if abs(d1) <= tol * s2 or abs(d2) <= tol * s2:
        return None
    return d1, d2


def match_special(bc: BoundarySpec, tol: float = 1e-12) -> tuple[complex, complex] | None:
    """``(h1, h2)`` if ``bc`` is row-equivalent to ``y1(0) - h1 y2(0) = 0``, ``y1(1) - h2 y2(0) = 0``."""
    if bc.n != 2:
        return None
    a = bc.rows
    scale = max(float(np.abs(a).max()), 1e-300)
    if np.abs(a[:, 3]).max() > tol * scale:
        return None
    A13 = a[:, [0, 2]]
    if abs(np.linalg.det(A13)) <= 1e-10 * scale * scale:
        return None
    Mn = np.linalg.solve(A13, a)
    return complex(-Mn[0, 1]), complex(-Mn[1, 1])


def is_initial_value(bc: BoundarySpec, tol: float = 1e-12) -> bool:
    """``D = 0`` or ``C = 0`` (conditions at one endpoint only)."""
    scale = max(float(np.abs(bc.rows).max()), 1e-300)
    return bool(np.abs(bc.D).max() <= tol * scale or np.abs(bc.C).max() <= tol * scale)


def _numerical_rank(a: np.ndarray, rtol: float = 1e-10) -> int:
    s = np.linalg.svd(np.asarray(a, dtype=complex), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def _rref(rows: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    a = np.array(rows, dtype=complex)
    m, ncol = a.shape
    scale = max(np.abs(a).max(), 1e-300)
    r = 0
    for c in range(ncol):
        if r == m:
            break
        piv = r + int(np.argmax(np.abs(a[r:, c])))
        if abs(a[piv, c]) <= tol * scale:
            continue
        a[[r, piv]] = a[[piv, r]]
        a[r] /= a[r, c]
        for i in range(m):
            if i != r:
                a[i] -= a[i, c] * a[r]
        r += 1
    a[np.abs(a) <= tol * scale] = 0
    return a


def row_equivalent(a: BoundarySpec, b: BoundarySpec, rtol: float = 1e-10) -> bool:
    """Whether two maximal boundary specs define the same domain."""
    if a.n != b.n:
        return False
    return _numerical_rank(np.vstack([a.rows, b.rows]), rtol) == a.n == a.rank(rtol) == b.rank(rtol)


# --------------------------------------------------------------------------
# J-invariants


@dataclass(frozen=True)
class BoundaryInvariants:
    """The 2x2 minors ``J_jk = det A_jk`` of the 2x4 coefficient block."""

    J12: complex
    J13: complex
    J14: complex
    J32: complex
    J42: complex
    J34: complex

    def J(self, j: int, k: int) -> complex:
        """Minor for arbitrary 1-based ``j, k`` using antisymmetry."""
        if j == k:
            return 0j
        table = {
            (1, 2): self.J12, (1, 3): self.J13, (1, 4): self.J14,
            (3, 2): self.J32, (4, 2): self.J42, (3, 4): self.J34,
        }
        if (j, k) in table:
            return table[(j, k)]
        return -table[(k, j)]

    def as_dict(self) -> dict[str, complex]:
        return {k: getattr(self, k) for k in ("J12", "J13", "J14", "J32", "J42", "J34")}


def compute_j_invariants(bc: BoundarySpec) -> BoundaryInvariants:
    if bc.n != 2:
        raise ValidationError("J-invariants are defined for n = 2 only")
    a = bc.rows

    def minor(j: int, k: int) -> complex:
        return complex(a[0, j - 1] * a[1, k - 1] - a[0, k - 1] * a[1, j - 1])

    return BoundaryInvariants(
        J12=minor(1, 2), J13=minor(1, 3), J14=minor(1, 4),
        J32=minor(3, 2), J42=minor(4, 2), J34=minor(3, 4),
    )


# --------------------------------------------------------------------------
# problem


@dataclass(frozen=True)
class SolverSettings:
    """Numerical knobs shared by all modules.

    ``rtol``/``atol`` control the Runge-Kutta local error; ``count_rtol`` is the
    looser tolerance used when only the phase of the determinant matters.
    ``trust`` bounds ``max_j |Im(b_j lambda)|`` (exponential growth of the
    fundamental matrix).  ``panels`` is the number of uniform quadrature panels
    (8 Gauss-Legendre nodes each) merged with the potential breakpoints.
    """

    rtol: float = 1e-12
    atol: float = 1e-14
    count_rtol: float = 1e-9
    panels: int = 32
    trust: float = 50.0
    max_steps: int = 500_000

    def __post_init__(self):
        for name in ("rtol", "atol", "count_rtol", "trust"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"solver setting {name} must be positive")
        if self.panels < 1:
            raise ValidationError("solver setting panels must be >= 1")

    @classmethod
    def from_json(cls, obj: dict | None) -> "SolverSettings":
        obj = dict(obj or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown solver settings: {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass(frozen=True)
class ProblemSpec:
    B: WeightMatrix
    Q: Potential
    bc: BoundarySpec
    solver: SolverSettings = field(default_factory=SolverSettings)

    @property
    def n(self) -> int:
        return self.B.n

    def with_bc(self, bc: BoundarySpec) -> "ProblemSpec":
        return replace(self, bc=bc)

    def with_solver(self, **kw) -> "ProblemSpec":
        return replace(self, solver=replace(self.solver, **kw))

    @classmethod
    def build(cls, b, bc: BoundarySpec, Q: Potential | None = None, **solver) -> "ProblemSpec":
        """Convenience constructor: ``b`` is the sequence of diagonal weights."""
        B = WeightMatrix(tuple(b))
        return cls(B, Q if Q is not None else Potential.zero(B.n), bc, SolverSettings(**solver))

    # JSON
    @classmethod
    def from_json(cls, obj: dict) -> "ProblemSpec":
        try:
            n = int(obj["n"])
            B = WeightMatrix(tuple(_cparse(b) for b in obj["B"]))
            C = [[_cparse(v) for v in row] for row in obj["C"]]
            D = [[_cparse(v) for v in row] for row in obj["D"]]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed problem file: {exc}") from exc
        qobj = obj.get("Q") or {}
        if "entries" in qobj:
            Q = Potential(tuple(tuple(Expr.from_json(e) for e in row) for row in qobj["entries"]))
        elif n == 2:
            Q = Potential.offdiag(Expr.from_json(qobj.get("Q12")), Expr.from_json(qobj.get("Q21")))
        else:
            Q = Potential.zero(n)
        spec = cls(B, Q, BoundarySpec(C, D), SolverSettings.from_json(obj.get("solver")))
        if spec.B.n != n:
            raise ValidationError("field n disagrees with the size of B")
        return spec

    def to_json(self) -> dict:
        out = {
            "n": self.n,
            "B": [_cjson(b) for b in self.B.entries],
        }
        if self.n == 2 and all(self.Q[j, j].is_zero for j in range(2)):
            out["Q"] = {"Q12": self.Q[0, 1].to_json(), "Q21": self.Q[1, 0].to_json()}
        else:
            out["Q"] = {"entries": [[e.to_json() for e in row] for row in self.Q.entries]}
        out["C"] = [[_cjson(v) for v in row] for row in self.bc.C]
        out["D"] = [[_cjson(v) for v in row] for row in self.bc.D]
        out["solver"] = self.solver.to_json()
        return out


# --------------------------------------------------------------------------
# equivalence transforms and validation

_SWAP = (1, 0, 3, 2)
_REFLECT = (2, 3, 0, 1)


def transform_bc(bc: BoundarySpec, t: str) -> BoundarySpec:
    """Boundary part of :func:`apply_equivalence_transform`."""
    if bc.n != 2:
        raise ValidationError("equivalence transforms are defined for n = 2")
    if t == "swap_components":
        return bc.permute_columns(_SWAP)
    if t == "reflect_interval":
        return bc.permute_columns(_REFLECT)
    raise ValidationError(f"unknown transform {t!r}")


def apply_equivalence_transform(p: ProblemSpec, t: str) -> ProblemSpec:
    """Apply ``y -> (y2, y1)`` (``swap_components``) or ``y(x) -> y(1-x)``
    (``reflect_interval``) to the whole problem."""
    bc = transform_bc(p.bc, t)
    if t == "swap_components":
        return replace(p, B=p.B.permuted((1, 0)), Q=p.Q.permuted((1, 0)), bc=bc)
    return replace(p, B=p.B.negated(), Q=p.Q.reflected(), bc=bc)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def to_json(self) -> dict:
        return {"code": self.code, "message": self.message}


def validate(p: ProblemSpec) -> list[Diagnostic]:
    """All violated invariants of ``p``; an empty list means the problem is valid."""
    diags: list[Diagnostic] = []
    n = p.n
    if n < 1:
        diags.append(Diagnostic("dimension", "B must have at least one entry"))
        return diags
    if any(b == 0 for b in p.B.entries):
        diags.append(Diagnostic("singular weight", "every diagonal entry of B must be nonzero"))
    if p.Q.n != n or any(len(row) != n for row in p.Q.entries):
        diags.append(Diagnostic("dimension", "Q does not match the size of B"))
    if p.bc.n != n:
        diags.append(Diagnostic("dimension", "C, D do not match the size of B"))
    elif p.bc.rank() != n:
        diags.append(Diagnostic("maximality violated", f"rank(C D) = {p.bc.rank()} != n = {n}"))
    if p.Q.n == n:
        for row in p.Q.entries:
            for e in row:
                if not e.breaks_ok():
                    diags.append(Diagnostic(
                        "breakpoints", "piecewise breaks must increase strictly from 0 to 1"))
        if n == 2 and not (p.Q[0, 0].is_zero and p.Q[1, 1].is_zero):
            diags.append(Diagnostic("diagonal potential", "for n = 2 the diagonal of Q must be zero"))
    return diags


def ensure_valid(p: ProblemSpec) -> ProblemSpec:
    diags = validate(p)
    if diags:
        raise ValidationError("; ".join(d.code for d in diags), diagnostics=diags)
    return p
