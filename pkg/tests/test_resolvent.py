import numpy as np
import pytest

from bvpspec.chardet import char_det
from bvpspec.errors import IdenticalOperators, NotInResolventSet, RepresentationUnavailable, ValidationError
from bvpspec.integrate import SampledFunction, fundamental_matrix, psi_evaluator
from bvpspec.model import (
    BoundarySpec,
    Expr,
    Potential,
    ProblemSpec,
    compute_j_invariants,
    quasi_periodic_bc,
    special_bc,
)
from bvpspec.resolvent import (
    alpha_beta,
    apply_rank_one_diff,
    apply_resolvent,
    kernel_rank,
    m_matrix,
    m_matrix_via_j,
    one_dim_criterion,
    one_dim_form,
    rank_resolvent_diff,
)

from conftest import random_bc, random_potential

Q = Potential.offdiag(Expr.poly([0.3, -0.5j]), Expr.piecewise([0, 0.6, 1], [Expr.const(0.4), Expr.poly([1, 1])]))


def rhs(grid, seed):
    r = np.random.default_rng(seed)
    c = r.standard_normal((2, 4)) + 1j * r.standard_normal((2, 4))
    return SampledFunction(grid, np.stack([np.polynomial.polynomial.polyval(grid.x, c[k]) for k in range(2)], axis=1))


def test_m_matrix_two_routes(rng):
    for _ in range(3):
        p = ProblemSpec.build([1, -1 + 0.5j], random_bc(rng), Q)
        fs = fundamental_matrix(p, 1.5 - 0.7j)
        M = m_matrix(p, fs)
        assert np.abs(M - m_matrix_via_j(p, fs)).max() <= 1e-10 * (1 + np.abs(M).max())


def test_det_m_times_delta_is_j34(rng):
    p = ProblemSpec.build([1, 1j], random_bc(rng), Q)
    J34 = compute_j_invariants(p.bc).J34
    for lam in (0.3, -2 + 1j, 4j):
        fs = fundamental_matrix(p, lam)
        val = np.linalg.det(m_matrix(p, fs)) * char_det(p, lam)
        assert abs(val - J34) <= 1e-9 * (1 + abs(J34))


def test_resolvent_solves_the_boundary_value_problem():
    p = ProblemSpec.build([1, -1 + 0.2j], special_bc(0.7, 1.9), Q)
    lam = 0.9 + 0.4j
    fs = fundamental_matrix(p, lam)
    f = rhs(fs.grid, 1)
    y = apply_resolvent(p, lam, f, fs).values
    g = fs.grid
    Qx = np.array([p.Q.matrix(x) for x in g.x])
    res = -1j * g.derivative(y) / p.B.diag[None] + np.einsum("ijk,ik->ij", Qx, y) - lam * y - f.values
    assert np.abs(res[g.node_mask]).max() <= 1e-7 * np.abs(f.values).max()
    assert np.abs(p.bc.C @ y[0] + p.bc.D @ y[-1]).max() <= 1e-12 * np.abs(y).max()


def test_resolvent_rejects_eigenvalue(anti):
    with pytest.raises(NotInResolventSet):
        apply_resolvent(anti, np.pi, rhs(fundamental_matrix(anti, 0).grid, 0))


@pytest.mark.parametrize("other,rank", [
    (quasi_periodic_bc(-1, -1), 0),
    (quasi_periodic_bc(-1, 2), 1),
    (quasi_periodic_bc(3, 2), 2),
    (special_bc(0.5, -0.5), 1),
    (special_bc(0.5, 0.5), 2),
])
def test_rank_formula_against_kernel_svd(anti, other, rank):
    assert rank_resolvent_diff(anti.bc, other) == rank
    assert kernel_rank(anti, anti.with_bc(other), 0.4 + 0.3j) == rank


def test_one_dim_form_is_the_stacked_determinant(rng):
    for _ in range(5):
        a, b = random_bc(rng), random_bc(rng)
        val, _ = one_dim_form(a, b)
        assert val == pytest.approx(np.linalg.det(np.vstack([a.rows, b.rows])), rel=1e-10)


def test_one_dim_criterion():
    anti = quasi_periodic_bc(-1, -1)
    assert one_dim_criterion(anti, special_bc(2, -2))
    assert not one_dim_criterion(anti, special_bc(2, 2))
    same = BoundarySpec.from_rows(np.array([[2, 1], [0, 1]]) @ anti.rows)
    with pytest.raises(IdenticalOperators):
        one_dim_criterion(anti, same)


def _pair(d1, h1, h2, q=None):
    pg = ProblemSpec.build([1, -1 + 0.3j], quasi_periodic_bc(d1, -0.5), q)
    return pg, pg.with_bc(special_bc(h1, h2))


def test_rank_one_factorization():
    d1, h2 = 1.5j, 0.8
    pg, ps = _pair(d1, d1 * h2, h2, Q)
    for lam in (0.4 + 0.2j, -1.3, 2.2 - 0.5j):
        fs = fundamental_matrix(pg, lam)
        rd = alpha_beta(pg, ps, lam, fs)
        diff = m_matrix(pg, fs) - m_matrix(ps, fs)
        assert np.abs(diff - rd.outer()).max() <= 1e-10 * (1 + np.abs(diff).max())


def test_rank_one_action_matches_direct_difference():
    d1, h2 = -1, 0.6
    pg, ps = _pair(d1, d1 * h2, h2, Q)
    lam = 0.7 - 0.3j
    fs = fundamental_matrix(pg, lam)
    rd = alpha_beta(pg, ps, lam, fs)
    psi = psi_evaluator(pg, fs)
    for seed in range(3):
        f = rhs(fs.grid, seed)
        direct = apply_resolvent(ps, lam, f, fs).values - apply_resolvent(pg, lam, f, fs).values
        got = apply_rank_one_diff(rd, psi, fs, f).values
        assert np.abs(got - direct).max() <= 1e-9 * np.abs(direct).max()


def test_alpha_beta_requires_rank_one():
    pg, ps = _pair(2, 1, 1)
    with pytest.raises(ValidationError):
        alpha_beta(pg, ps, 0.3)


def test_gamma_zero_is_reported(rng):
    # Q = 0: gamma = J14 + J34 e^{i lambda} vanishes at e^{i lambda0} = -J14/J34,
    # where Delta = J12 + J32 e^{i lambda0} is generically nonzero
    rows = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
    pg = ProblemSpec.build([1, -1 + 0.3j], BoundarySpec.from_rows(rows))
    h2 = 0.8
    # the stacked determinant is affine in h1; solve for the rank-one partner
    f0, f1 = (np.linalg.det(np.vstack([rows, special_bc(h, h2).rows])) for h in (0.0, 1.0))
    h1 = -f0 / (f1 - f0)
    ps = pg.with_bc(special_bc(h1, h2))
    J = compute_j_invariants(pg.bc)
    lam0 = complex(-1j * np.log(-J.J14 / J.J34))
    assert abs(J.J12 + J.J32 * np.exp(1j * lam0)) > 1e-3
    with pytest.raises(RepresentationUnavailable):
        alpha_beta(pg, ps, lam0)
    alpha_beta(pg, ps, lam0 + 0.3)
