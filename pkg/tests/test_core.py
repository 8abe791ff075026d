"""Group arithmetic, gauge metric, and horizontal calculus checks.

The horizontal Hessian assembly is validated against a symbolic oracle that
applies the frame fields directly; the frame-ordering constant linking the
antisymmetric part to the t-derivative is derived symbolically once and
frozen below.
"""

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from heisvisc import core
from heisvisc.core import (
    Jet2,
    Point,
    dilate,
    dist,
    frame_matrix,
    gauge,
    gauge_ball_contains,
    group_inv,
    group_mul,
    heis_hessian,
    heis_hessian_sym,
    horizontal_gradient,
    j_matrix,
    left_difference,
)
from heisvisc.rng import stream

# Antisymmetric part of the horizontal Hessian equals this constant times
# (du/dt) J; derived by the symbolic oracle in test_commutator_constant.
FRAME_COMMUTATOR_CONSTANT = 4.0


def random_point(gen, n, scale=2.0):
    c = gen.uniform(-scale, scale, size=2 * n + 1)
    return Point.from_coords(c, n)


def symbolic_frames(n):
    xs = sp.symbols(f"x1:{n + 1}")
    ys = sp.symbols(f"y1:{n + 1}")
    t = sp.Symbol("t")

    def X(i):
        return lambda f: sp.diff(f, xs[i]) + 2 * ys[i] * sp.diff(f, t)

    def Y(i):
        return lambda f: sp.diff(f, ys[i]) - 2 * xs[i] * sp.diff(f, t)

    frames = [X(i) for i in range(n)] + [Y(i) for i in range(n)]
    return xs, ys, t, frames


def test_group_mul_example():
    a = Point([1.0], [0.0], 0.0)
    b = Point([0.0], [1.0], 0.0)
    np.testing.assert_allclose(group_mul(a, b).coords(), [1.0, 1.0, -2.0], atol=0)
    # and the twist flips sign when the factors swap
    np.testing.assert_allclose(group_mul(b, a).coords(), [1.0, 1.0, 2.0], atol=0)


def test_identity_and_inverse():
    gen = stream(7, 1)
    e = Point([0.0, 0.0], [0.0, 0.0], 0.0)
    for _ in range(50):
        p = random_point(gen, 2)
        np.testing.assert_allclose(group_mul(p, e).coords(), p.coords(), atol=0)
        np.testing.assert_allclose(group_mul(e, p).coords(), p.coords(), atol=0)
        np.testing.assert_allclose(
            group_mul(p, group_inv(p)).coords(), np.zeros(5), atol=1e-12
        )
        np.testing.assert_allclose(
            group_mul(group_inv(p), p).coords(), np.zeros(5), atol=1e-12
        )


def test_associativity_sampled():
    gen = stream(7, 2)
    for _ in range(200):
        a, b, c = (random_point(gen, 1) for _ in range(3))
        lhs = group_mul(group_mul(a, b), c).coords()
        rhs = group_mul(a, group_mul(b, c)).coords()
        np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(lhs).max()))


@given(
    st.lists(st.floats(-10, 10), min_size=9, max_size=9).map(np.asarray),
)
@settings(max_examples=200, deadline=None)
def test_group_axioms_property(flat):
    a = Point.from_coords(flat[:3], 1)
    b = Point.from_coords(flat[3:6], 1)
    c = Point.from_coords(flat[6:], 1)
    lhs = group_mul(group_mul(a, b), c).coords()
    rhs = group_mul(a, group_mul(b, c)).coords()
    scale = 1 + max(np.abs(lhs).max(), np.abs(rhs).max())
    assert np.abs(lhs - rhs).max() <= 1e-12 * scale
    back = group_mul(a, group_inv(a)).coords()
    assert np.abs(back).max() <= 1e-12 * (1 + np.abs(a.coords()).max() ** 2)


def test_gauge_examples():
    assert gauge(Point([0.0], [0.0], 4.0)) == pytest.approx(2.0, abs=1e-15)
    assert gauge(Point([1.0], [1.0], 0.0)) == pytest.approx(np.sqrt(2.0), rel=1e-15)
    assert gauge(Point([0.0, 0.0], [0.0, 0.0], -9.0)) == pytest.approx(3.0, rel=1e-15)


def test_gauge_dilation_homogeneity():
    gen = stream(7, 3)
    for _ in range(100):
        p = random_point(gen, 2)
        lam = float(gen.uniform(0.0, 3.0))
        assert gauge(dilate(lam, p)) == pytest.approx(
            lam * gauge(p), rel=1e-12, abs=1e-13
        )


def test_distance_left_invariance_and_symmetry():
    gen = stream(7, 4)
    for _ in range(100):
        a, b, g = (random_point(gen, 1) for _ in range(3))
        d0 = dist(a, b)
        assert dist(group_mul(g, a), group_mul(g, b)) == pytest.approx(d0, rel=1e-11, abs=1e-12)
        assert dist(b, a) == pytest.approx(d0, rel=1e-13)
        assert dist(a, a) == 0.0


def test_left_difference_matches_group_ops():
    gen = stream(7, 5)
    for n in (1, 2):
        for _ in range(50):
            a, b = random_point(gen, n), random_point(gen, n)
            direct = left_difference(b.coords(), a.coords(), n)
            via_mul = group_mul(group_inv(b), a).coords()
            np.testing.assert_allclose(direct, via_mul, atol=1e-13)


def test_gauge_ball_contains():
    center = Point([0.0], [0.0], 0.0)
    assert gauge_ball_contains(center, 2.0, Point([0.0], [0.0], 4.0))
    assert not gauge_ball_contains(center, 1.9, Point([0.0], [0.0], 4.0))
    with pytest.raises(ValueError):
        gauge_ball_contains(center, -1.0, center)


def test_point_validation():
    with pytest.raises(ValueError):
        Point([1.0, 2.0], [3.0], 0.0)
    with pytest.raises(ValueError):
        Point([np.inf], [0.0], 0.0)
    with pytest.raises(ValueError):
        group_mul(Point([1.0], [0.0], 0.0), Point([1.0, 0.0], [0.0, 0.0], 0.0))


def test_jet_validation():
    with pytest.raises(ValueError):
        Jet2(0.0, np.zeros(3), np.array([[0.0, 1.0, 0], [0, 0, 0], [0, 0, 0]]))
    near = np.eye(3) + 1e-14 * np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    j = Jet2(0.0, np.zeros(3), near)
    np.testing.assert_allclose(j.ehess, j.ehess.T, atol=0)


def test_commutator_constant():
    # symbolic derivation of the constant in (full - full^T) = c (du/dt) J
    xs, ys, t, frames = symbolic_frames(1)
    u = xs[0] ** 2 * ys[0] + ys[0] ** 2 * t + xs[0] * t + t**2 * ys[0]
    M = sp.Matrix(2, 2, lambda i, j: frames[j](frames[i](u)))
    A = sp.expand(M - M.T)
    c01 = sp.simplify(A[0, 1] / sp.diff(u, t))
    assert sp.simplify(c01 - FRAME_COMMUTATOR_CONSTANT) == 0
    # commutator of the frame fields themselves: [X, Y] u = -4 du/dt
    comm = sp.simplify(frames[0](frames[1](u)) - frames[1](frames[0](u)))
    assert sp.simplify(comm + 4 * sp.diff(u, t)) == 0


@pytest.mark.parametrize("n", [1, 2])
def test_heis_hessian_against_symbolic_oracle(n):
    xs, ys, t, frames = symbolic_frames(n)
    coords = list(xs) + list(ys) + [t]
    gen = stream(11, n)
    # random cubic polynomial: exercises both the chain rule and the frame twist
    monomials = [a * b * c for a in coords for b in coords for c in coords]
    monomials += [a * b for a in coords for b in coords] + coords
    weights = gen.uniform(-1, 1, size=len(monomials))
    u = sum(w * m for w, m in zip(weights, monomials))

    hess_sym_expr = sp.Matrix(2 * n, 2 * n, lambda i, j: frames[j](frames[i](u)))
    grad_expr = sp.Matrix([frames[i](u) for i in range(2 * n)])
    egrad_expr = sp.Matrix([sp.diff(u, v) for v in coords])
    ehess_expr = sp.Matrix(len(coords), len(coords), lambda i, j: sp.diff(u, coords[i], coords[j]))

    to_full = sp.lambdify(coords, hess_sym_expr, "numpy")
    to_grad = sp.lambdify(coords, grad_expr, "numpy")
    to_egrad = sp.lambdify(coords, egrad_expr, "numpy")
    to_ehess = sp.lambdify(coords, ehess_expr, "numpy")
    to_val = sp.lambdify(coords, u, "numpy")

    for _ in range(25):
        p = random_point(gen, n)
        args = list(p.coords())
        jet = Jet2(
            float(to_val(*args)),
            np.ravel(to_egrad(*args)).astype(float),
            np.asarray(to_ehess(*args), dtype=float),
        )
        full = heis_hessian(jet, p)
        oracle = np.asarray(to_full(*args), dtype=float)
        scale = 1 + np.abs(oracle).max()
        np.testing.assert_allclose(full, oracle, atol=1e-10 * scale)
        np.testing.assert_allclose(
            heis_hessian_sym(jet, p), 0.5 * (oracle + oracle.T), atol=1e-10 * scale
        )
        np.testing.assert_allclose(
            horizontal_gradient(jet, p), np.ravel(to_grad(*args)), atol=1e-10 * scale
        )
        # antisymmetric part carries exactly the frozen frame constant
        anti = full - full.T
        expected = FRAME_COMMUTATOR_CONSTANT * jet.egrad[2 * n] * j_matrix(n)
        np.testing.assert_allclose(anti, expected, atol=1e-10 * scale)


def test_heis_hessian_closed_forms():
    # u = t has Euclidean Hessian zero: only the frame twist survives
    p = Point([0.3], [-0.7], 0.2)
    jet = Jet2(p.t, np.array([0.0, 0.0, 1.0]), np.zeros((3, 3)))
    np.testing.assert_allclose(heis_hessian(jet, p), [[0.0, 2.0], [-2.0, 0.0]], atol=0)
    np.testing.assert_allclose(heis_hessian_sym(jet, p), np.zeros((2, 2)), atol=0)

    # u = |z|^2 + t^2: symmetrized part is 2(I + 4 (Jz)(Jz)^T)
    gen = stream(11, 9)
    for n in (1, 2):
        for _ in range(20):
            p = random_point(gen, n)
            c = p.coords()
            jet = Jet2(c @ c, 2.0 * c, 2.0 * np.eye(2 * n + 1))
            Jz = j_matrix(n) @ p.z
            expected = 2.0 * (np.eye(2 * n) + 4.0 * np.outer(Jz, Jz))
            np.testing.assert_allclose(heis_hessian_sym(jet, p), expected, atol=1e-12)


def test_frame_matrix_rows():
    p = Point([0.5, -1.0], [2.0, 0.25], 3.0)
    B = frame_matrix(p)
    assert B.shape == (4, 5)
    np.testing.assert_allclose(B[0], [1, 0, 0, 0, 2 * 2.0], atol=0)
    np.testing.assert_allclose(B[3], [0, 0, 0, 1, -2 * -1.0], atol=0)


def test_horizontal_gradient_linear_fields():
    p = Point([0.4], [-0.3], 1.0)
    # u = x1: X u = 1, Y u = 0
    jet = Jet2(p.x[0], np.array([1.0, 0.0, 0.0]), np.zeros((3, 3)))
    np.testing.assert_allclose(horizontal_gradient(jet, p), [1.0, 0.0], atol=0)
    # u = t: X u = 2 y1, Y u = -2 x1
    jet = Jet2(p.t, np.array([0.0, 0.0, 1.0]), np.zeros((3, 3)))
    np.testing.assert_allclose(horizontal_gradient(jet, p), [-0.6, -0.8], atol=1e-15)


def test_coords_roundtrip_and_dilate_group_compat():
    gen = stream(7, 8)
    for _ in range(50):
        p = random_point(gen, 2)
        q = Point.from_coords(p.coords(), 2)
        np.testing.assert_allclose(q.coords(), p.coords(), atol=0)
        # dilations are group homomorphisms
        a, b = random_point(gen, 2), random_point(gen, 2)
        lam = float(gen.uniform(0.1, 2.0))
        lhs = dilate(lam, group_mul(a, b)).coords()
        rhs = group_mul(dilate(lam, a), dilate(lam, b)).coords()
        np.testing.assert_allclose(lhs, rhs, atol=1e-11)
