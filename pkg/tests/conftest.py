import numpy as np
import pytest
from hypothesis import settings, strategies as st

from bvpspec.model import BoundarySpec, Expr, Potential, ProblemSpec

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
cplx = st.builds(complex, finite, finite)
# exact zeros keep the structured (degenerate) cases; other parts stay well scaled
part = st.one_of(st.just(0.0), finite.filter(lambda v: abs(v) >= 1e-3))
entry = st.builds(complex, part, part)


@st.composite
def boundary_rows(draw, n=2):
    vals = draw(st.lists(entry, min_size=2 * n * n, max_size=2 * n * n))
    rows = np.array(vals, dtype=complex).reshape(n, 2 * n)
    return rows


@st.composite
def invertible(draw, n=2):
    vals = draw(st.lists(cplx, min_size=n * n, max_size=n * n))
    G = np.array(vals, dtype=complex).reshape(n, n) + 4 * np.eye(n)
    return G


def random_bc(rng, n=2) -> BoundarySpec:
    rows = rng.standard_normal((n, 2 * n)) + 1j * rng.standard_normal((n, 2 * n))
    return BoundarySpec.from_rows(rows)


def random_potential(rng, piecewise=False) -> Potential:
    def poly():
        return Expr.poly(list(0.5 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))))

    if piecewise:
        b = float(rng.uniform(0.2, 0.8))
        q12 = Expr.piecewise([0, b, 1], [poly(), Expr.const(complex(*rng.standard_normal(2)))])
    else:
        q12 = poly()
    return Potential.offdiag(q12, poly())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def anti():
    from bvpspec.model import quasi_periodic_bc
    return ProblemSpec.build([1, 1j], quasi_periodic_bc(-1, -1))
