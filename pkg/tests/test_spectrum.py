import numpy as np
import pytest

from bvpspec.chardet import char_det, unperturbed_lattice
from bvpspec.errors import BoundaryTooClose, ValidationError
from bvpspec.model import Expr, Potential, ProblemSpec, quasi_periodic_bc
from bvpspec.spectrum import (
    Rect,
    count_zeros_rect,
    find_eigenvalues,
    find_eigenvalues_in_boxes,
    pair_with_lattice,
    separation_gap,
)


def test_rect_parse_and_validation():
    r = Rect.parse("-1,2,-3,4")
    assert r.as_tuple() == (-1, 2, -3, 4)
    with pytest.raises(ValidationError):
        Rect.parse("1,0,0,1")
    with pytest.raises(ValidationError):
        Rect.parse("1,2,3")


def test_contour_is_counter_clockwise():
    r = Rect(0, 2, 0, 1)
    pts = r.point(np.array([0.0, 1.0, 2.0, 3.0]))
    assert np.allclose(pts, [0, 2, 2 + 1j, 1j])


def test_count_matches_lattice(anti):
    # zeros +-pi, +-3pi, +-pi i, +-3pi i
    assert count_zeros_rect(anti, Rect(-10, 10, -10, 10)) == 8
    assert count_zeros_rect(anti, Rect(0, 5, -1, 1)) == 1
    assert count_zeros_rect(anti, Rect(4, 5, 4, 5)) == 0


def test_guard_rejects_contour_through_a_zero(anti):
    with pytest.raises(BoundaryTooClose):
        count_zeros_rect(anti, Rect(np.pi, 5, -1, 1))


def test_find_antiperiodic_eigenvalues(anti):
    ev = find_eigenvalues(anti, Rect(-10, 10, -10, 10))
    ref = np.array([np.pi * s * k for s in (1, 1j) for k in (-3, -1, 1, 3)])
    assert len(ev) == 8 and ev.count == 8
    assert all(e.multiplicity == 1 and e.refined for e in ev.items)
    dist = np.abs(ev.values[:, None] - ref[None, :])
    assert dist.min(axis=1).max() <= 1e-9 and dist.min(axis=0).max() <= 1e-9


def test_refined_values_are_zeros(anti):
    ev = find_eigenvalues(anti, Rect(0.5, 4, -1, 1))
    lam = ev.items[0].lam
    assert abs(char_det(anti, lam)) <= 1e-9


def test_double_zero_reported_as_cluster():
    # periodic: lambda = 0 is a zero of both factors
    p = ProblemSpec.build([1, 1j], quasi_periodic_bc(1, 1))
    ev = find_eigenvalues(p, Rect(-1, 1.3, -1, 1.2))
    assert ev.count == 2
    assert len(ev.items) == 1 and ev.items[0].multiplicity == 2
    assert abs(ev.items[0].lam) <= 1e-5
    assert separation_gap(ev).cluster


def test_triangular_potential_keeps_lattice():
    q = Potential.offdiag(Expr.zero(), Expr.poly([0.3, -1, 0.5j, 2]))
    d1, d2 = np.exp(0.4j), 1.5
    p = ProblemSpec.build([1, 1j], quasi_periodic_bc(d1, d2), q)
    ev = find_eigenvalues(p, Rect(-7, 7, -7, 7))
    lat = unperturbed_lattice(p.B, d1, d2, 3)
    pts = np.array([e[2] for e in lat.in_rect((-7, 7, -7, 7))])
    assert len(ev) == pts.size
    for lam in ev.values:
        assert np.abs(pts - lam).min() <= 1e-8


def test_boxes_and_pairing():
    q = Potential.offdiag(Expr.const(0.2), Expr.const(0.1))
    d1, d2 = np.exp(0.7j), np.exp(-1.1j)
    p = ProblemSpec.build([1, -1 + 0.3j], quasi_periodic_bc(d1, d2), q)
    lat = unperturbed_lattice(p.B, d1, d2, 3)
    ents = [e for e in lat.entries if abs(e[0]) <= 3]
    pts = np.array([e[2] for e in ents])
    gaps = np.abs(pts[:, None] - pts[None, :]) + np.diag(np.full(pts.size, np.inf))
    r = 0.45 * gaps.min()
    ev = find_eigenvalues_in_boxes(p, [Rect.around(z, r) for z in pts])
    rep = pair_with_lattice(ev, lat, radius=r, lattice_entries=ents)
    assert len(rep.pairs) == len(ents)
    assert not rep.unmatched_eigenvalues and not rep.unmatched_lattice
    assert rep.max_residual(0, 3) < r
    assert separation_gap(ev).gap > 0


def test_search_is_deterministic(anti):
    a = find_eigenvalues(anti, Rect(-4, 4, -4, 4))
    b = find_eigenvalues(anti, Rect(-4, 4, -4, 4))
    assert np.array_equal(a.values, b.values)


def test_finite_difference_fallback_agrees(anti):
    a = find_eigenvalues(anti, Rect(-4, 4, -1, 1), variational=False)
    assert np.allclose(np.sort_complex(a.values), [-np.pi, np.pi], atol=1e-9)
