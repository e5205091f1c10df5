import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from bvpspec.errors import IntegrationError, ValidationError
from bvpspec.integrate import (
    QuadGrid,
    SampledFunction,
    apply_K,
    fundamental_matrix,
    phi_at_one,
    propagate,
    psi_evaluator,
)
from bvpspec.model import Expr, Potential, ProblemSpec, quasi_periodic_bc


def const_problem(b, q12, q21, **kw):
    return ProblemSpec.build(b, quasi_periodic_bc(-1, -1), Potential.offdiag(Expr.const(q12), Expr.const(q21)), **kw)


def expm_oracle(p, lam, x=1.0):
    B = np.diag(p.B.diag)
    Q = p.Q.matrix(0.0)
    return expm(x * 1j * B @ (lam * np.eye(p.n) - Q))


@pytest.mark.parametrize("lam", [0.0, 3.0 - 1j, -7.5 + 0.4j, 20.0])
def test_phi_matches_matrix_exponential(lam):
    p = const_problem([1, -1 + 0.3j], 0.7 - 0.2j, 1.1j)
    phi = phi_at_one(p, [lam])[0][0]
    ref = expm_oracle(p, lam)
    assert np.abs(phi - ref).max() <= 1e-10 * np.abs(ref).max()


def test_phi_at_interior_points():
    p = const_problem([2, 1j], 0.5, -0.3)
    xs = [0.1, 0.35, 0.9]
    phi, _ = propagate(p, [1.5 + 0.5j], xs)
    for k, x in enumerate(xs):
        ref = expm_oracle(p, 1.5 + 0.5j, x)
        assert np.abs(phi[0, k] - ref).max() <= 1e-10 * np.abs(ref).max()


def test_liouville_determinant_for_offdiagonal_q(rng):
    # det Phi(1) = exp(i (b1 + b2) lambda) because tr(i B Q) = 0
    q = Potential.offdiag(Expr.piecewise([0, 0.4, 1], [Expr.poly([1, -2j]), Expr.const(0.3)]), Expr.poly([0.2, 1]))
    p = ProblemSpec.build([1, -1 + 0.2j], quasi_periodic_bc(1, 1), q)
    lams = rng.uniform(-10, 10, 5) + 1j * rng.uniform(-2, 2, 5)
    phi, _ = phi_at_one(p, lams)
    ref = np.exp(1j * (1 - 1 + 0.2j) * lams)
    assert np.allclose(np.linalg.det(phi), ref, rtol=1e-10)


def test_variational_derivative_matches_central_difference():
    q = Potential.offdiag(Expr.poly([0.4, 1j]), Expr.piecewise([0, 0.5, 1], [Expr.const(1), Expr.zero()]))
    p = ProblemSpec.build([1, 1j], quasi_periodic_bc(-1, -1), q)
    lam, h = 2.0 + 0.3j, 1e-5
    _, dphi = phi_at_one(p, [lam], derivative=True)
    fd = (phi_at_one(p, [lam + h])[0][0] - phi_at_one(p, [lam - h])[0][0]) / (2 * h)
    assert np.abs(dphi[0] - fd).max() <= 1e-7 * np.abs(fd).max()


def test_batch_equals_single_calls():
    p = const_problem([1, 1j], 0.3, 0.4)
    lams = [0.5, -2 + 1j, 4j]
    batch, _ = phi_at_one(p, lams)
    for k, lam in enumerate(lams):
        single, _ = phi_at_one(p, [lam])
        assert np.allclose(batch[k], single[0], rtol=1e-10, atol=1e-12)


def test_fixed_step_order_is_about_five():
    p = const_problem([1, -1 + 0.3j], 0.7, 0.2j)
    lam = 6.0 + 0.5j
    ref = expm_oracle(p, lam)
    errs = []
    for N in (8, 16, 32):
        phi, _ = propagate(p, [lam], fixed_steps=N)
        errs.append(np.abs(phi[0, -1] - ref).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 4.5


def test_trust_region_violation():
    p = const_problem([1, 1j], 0.0, 0.0)
    with pytest.raises(IntegrationError):
        phi_at_one(p, [100j])


def test_output_points_must_increase():
    p = const_problem([1, 1j], 0.0, 0.0)
    with pytest.raises(ValidationError):
        propagate(p, [1.0], [0.5, 0.2])


# quadrature grid


@given(st.integers(0, 15))
def test_quadrature_exact_for_polynomials(k):
    g = QuadGrid(4)
    assert g.integrate(g.x ** k) == pytest.approx(1.0 / (k + 1), rel=1e-13)


def test_quadrature_respects_breakpoints():
    g = QuadGrid(4, breakpoints=[0.3])
    step = (g.x >= 0.3).astype(float)
    # the jump sits on a panel edge, which carries zero weight
    assert g.integrate(step) == pytest.approx(0.7, rel=1e-14)


def test_cumulative_integral_of_exponential():
    g = QuadGrid(8)
    f = np.exp(3j * g.x)
    ref = (np.exp(3j * g.x) - 1) / 3j
    assert np.abs(g.cumulative(f) - ref).max() <= 1e-13


def test_derivative_of_smooth_function():
    g = QuadGrid(16)
    y = np.sin(5 * g.x) + 1j * g.x ** 3
    ref = 5 * np.cos(5 * g.x) + 3j * g.x ** 2
    assert np.abs(g.derivative(y) - ref).max() <= 1e-8


def test_sampled_function_inner_product_and_csv():
    g = QuadGrid(6)
    f = SampledFunction.from_callable(g, lambda x: np.stack([np.ones_like(x), x * 1j], axis=0))
    assert f.norm() ** 2 == pytest.approx(1 + 1 / 3)
    assert f.inner(f) == pytest.approx(f.norm() ** 2)
    back = SampledFunction.from_csv(f.to_csv(), g)
    assert np.array_equal(back.values, f.values)


# K operator and Psi


def test_K_solves_variation_of_constants():
    q = Potential.offdiag(Expr.poly([0.5, 1j]), Expr.const(-0.4))
    p = ProblemSpec.build([1, 1j], quasi_periodic_bc(-1, -1), q)
    lam = 1.3 - 0.2j
    fs = fundamental_matrix(p, lam)
    f = SampledFunction.from_callable(fs.grid, lambda x: np.stack([np.cos(2 * x), x ** 2 + 1j], axis=0))
    y = apply_K(p, fs, f).values
    g = fs.grid
    Qx = np.array([p.Q.matrix(x) for x in g.x])
    # -i B^{-1} y' + Q y - lam y = f with y(0) = 0
    res = -1j * g.derivative(y) / p.B.diag[None] + np.einsum("ijk,ik->ij", Qx, y) - lam * y - f.values
    assert np.abs(res[g.node_mask]).max() <= 1e-7
    assert np.abs(y[0]).max() == 0


def test_psi_gives_K_at_one():
    p = const_problem([1, -1 + 0.1j], 0.2, 0.9)
    fs = fundamental_matrix(p, 0.7)
    f = SampledFunction.from_callable(fs.grid, lambda x: np.stack([np.exp(x), 1 - x], axis=0))
    psi = psi_evaluator(p, fs)
    via_psi = fs.grid.integrate(np.einsum("ijk,ik->ij", psi, f.values))
    assert np.allclose(via_psi, apply_K(p, fs, f).at_one(), rtol=1e-11, atol=1e-13)
