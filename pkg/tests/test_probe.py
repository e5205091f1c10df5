import numpy as np
import pytest

from bvpspec.chardet import special_lattice
from bvpspec.errors import ValidationError
from bvpspec.integrate import QuadGrid
from bvpspec.model import Expr, Potential, ProblemSpec, quasi_periodic_bc, row_equivalent, special_bc
from bvpspec.probe import (
    EigenfunctionBundle,
    adjoint_problem,
    build_bundle,
    bump,
    completeness_defect,
    eigen_residuals,
    eigenfunction,
    gram_condition,
    gram_matrix,
    locate_eigenvalues,
    second_component_residual,
)
from bvpspec.spectrum import Rect, find_eigenvalues

H1, H2 = 0.8, -1.3
Q12_CUT = Expr.piecewise([0, 0.5, 1], [Expr.poly([0.4, -0.3j]), Expr.zero()])
Q21 = Expr.poly([0.2, 0.1, -0.3j])


@pytest.fixture(scope="module")
def special_problem():
    return ProblemSpec.build([1, -1 + 0.05j], special_bc(H1, H2), Potential.offdiag(Q12_CUT, Q21), trust=80)


@pytest.fixture(scope="module")
def adjoint_bundle(special_problem):
    pa = adjoint_problem(special_problem)
    g = np.conj(special_lattice(special_problem.B, H1, H2, 8).points())
    lams = locate_eigenvalues(pa, 12, guesses=g)
    return pa, build_bundle(pa, lams)


def test_adjoint_boundary_conditions_annihilate_the_form(special_problem):
    # Lagrange identity: boundary form vanishes for y in dom L, z in dom L*
    p = special_problem
    pa = adjoint_problem(p)
    n = p.n
    Binv = np.diag(1 / p.B.diag)
    G = np.block([[1j * Binv, np.zeros((n, n))], [np.zeros((n, n)), -1j * Binv]])
    _, _, vh = np.linalg.svd(p.bc.rows)
    Y = vh[n:].conj().T
    _, _, vh = np.linalg.svd(pa.bc.rows)
    Z = vh[n:].conj().T
    assert np.abs(Z.conj().T @ G @ Y).max() <= 1e-12
    assert pa.B.entries == tuple(np.conj(p.B.entries))


def test_adjoint_of_adjoint_is_the_problem(special_problem):
    pp = adjoint_problem(adjoint_problem(special_problem))
    assert row_equivalent(pp.bc, special_problem.bc)
    assert pp.B == special_problem.B


def test_adjoint_spectrum_is_conjugate():
    q = Potential.offdiag(Expr.const(0.3 + 0.1j), Expr.poly([0.2, 1j]))
    p = ProblemSpec.build([1, -1 + 0.3j], quasi_periodic_bc(1.3, np.exp(0.4j)), q)
    rect = Rect(-6, 6.3, -3, 3.1)
    ev = find_eigenvalues(p, rect)
    eva = find_eigenvalues(adjoint_problem(p), Rect(rect.x0, rect.x1, -rect.y1, -rect.y0))
    a = np.sort_complex(np.conj(ev.values))
    b = np.sort_complex(eva.values)
    assert a.size == b.size > 0
    assert np.abs(a[:, None] - b[None, :]).min(axis=1).max() <= 1e-8


def test_eigenfunction_residuals(adjoint_bundle):
    pa, bundle = adjoint_bundle
    bres, cres = eigen_residuals(pa, bundle)
    assert bres.max() <= 1e-8
    assert cres.max() <= 1e-6
    for f in bundle.functions:
        assert f.norm() == pytest.approx(1.0, abs=1e-12)


def test_phase_convention(anti):
    ef = eigenfunction(anti, np.pi)
    v = ef.function.values
    k = int(np.argmax(np.abs(v)))
    z = v.flat[k]
    assert abs(z.imag) <= 1e-14 and z.real > 0
    assert ef.geometric_multiplicity == 1


def test_geometric_multiplicity_two():
    # periodic, B = diag(1, i): lambda = 0 is a zero of both factors with two eigenvectors
    p = ProblemSpec.build([1, 1j], quasi_periodic_bc(1, 1))
    assert eigenfunction(p, 0.0).geometric_multiplicity == 2


def test_second_component_vanishes_for_adjoint(adjoint_bundle):
    _, bundle = adjoint_bundle
    assert second_component_residual(bundle, 0.5).max() <= 1e-7


def test_second_component_nonzero_for_direct(special_problem):
    lams = locate_eigenvalues(special_problem, 6)
    bundle = build_bundle(special_problem, lams)
    assert second_component_residual(bundle, 0.5).min() > 1e-2


def test_defect_of_bump_is_one(adjoint_bundle):
    _, bundle = adjoint_bundle
    w = bump(bundle.grid, 0.5)
    rep = completeness_defect(bundle, w, [1, 6, 12])
    for _, r in rep.residual_by_N:
        assert abs(r - 1) <= 1e-9


def test_defect_monotone_and_exact_on_members(adjoint_bundle):
    _, bundle = adjoint_bundle
    g = bundle.grid
    w = bump(g, 0.0, component=0)
    rep = completeness_defect(bundle, w, range(1, len(bundle) + 1))
    res = [r for _, r in rep.residual_by_N]
    assert all(b <= a + 1e-10 for a, b in zip(res, res[1:]))
    rep = completeness_defect(bundle, bundle.functions[0], [1, 3])
    assert max(r for _, r in rep.residual_by_N) <= 1e-12


def test_direct_bundle_defect_decreases(special_problem):
    lams = locate_eigenvalues(special_problem, 12)
    bundle = build_bundle(special_problem, lams)
    w = bump(bundle.grid, 0.5)
    res = [r for _, r in completeness_defect(bundle, w, [1, 6, 12]).residual_by_N]
    assert res[-1] < res[0]


def test_gram_orthonormal_for_antiperiodic(anti):
    lams = locate_eigenvalues(anti, 12)
    bundle = build_bundle(anti, lams)
    assert np.abs(gram_matrix(bundle) - np.eye(12)).max() <= 1e-10
    assert gram_condition(bundle, 12) == pytest.approx(1.0, abs=1e-8)


def test_duplicate_member_makes_gram_singular(anti):
    lams = locate_eigenvalues(anti, 3)
    b = build_bundle(anti, lams)
    dup = EigenfunctionBundle(b.eigenvalues + b.eigenvalues[:1], b.functions + b.functions[:1], b.grid,
                              b.multiplicities + b.multiplicities[:1])
    assert gram_condition(dup, 4) == np.inf
    w = bump(b.grid, 0.2)
    rep = completeness_defect(dup, w, [4])
    assert rep.regularized == (True,)


def test_bump_is_supported_and_normalized():
    g = QuadGrid(16)
    w = bump(g, 0.5)
    assert w.norm() == pytest.approx(1.0)
    assert np.all(w.values[g.x <= 0.5] == 0)
    assert np.all(w.values[:, 0] == 0)
    with pytest.raises(ValidationError):
        bump(g, 1.0)


def test_bundle_size_checks(anti):
    b = build_bundle(anti, [np.pi])
    with pytest.raises(ValidationError):
        gram_condition(b, 2)
    with pytest.raises(ValidationError):
        completeness_defect(b, bump(b.grid, 0.5), [2])
