"""Tests for the perturbation family, its margin certificate, and the
touching harness."""

import dataclasses
import json
import math

import numpy as np
import pytest
import sympy as sp

from heisvisc.comparison import (
    PerturbParams,
    admissible_region_mask,
    lemma35_margin,
    perturb_down,
    perturb_up,
    touching_harness,
)
from heisvisc.cones import ConeSpec
from heisvisc.fields import Domain, parse_field, sample
from heisvisc.operators import OperatorSpec, conformal_operator_spec
from heisvisc.rng import stream

BOX1 = np.array([[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]])

# constants found by parameter search; the gain inequality holds on
# [-1,1]^3 for |psi| <= 1/2 with margin to spare
ALPHA, BETA, M_BOUND = 0.1, 3.0, 0.5
MU0 = 0.45 / (BETA * math.exp(BETA * M_BOUND))


def good_params(mu=0.5 * MU0, k0=0.05, tau=1.0):
    return PerturbParams(
        mu=mu, mu0=MU0, alpha=ALPHA, beta=BETA, delta=0.5, K0=k0, tau=tau, M=M_BOUND
    )


# -- parameter validation ----------------------------------------------------


def test_params_accepts_valid_and_zero_mu():
    good_params()
    good_params(mu=0.0)


def test_params_rejects_mu_at_or_above_ceiling():
    with pytest.raises(ValueError):
        good_params(mu=MU0)
    with pytest.raises(ValueError):
        good_params(mu=-0.01)


def test_params_rejects_flat_or_steep_radial_shape():
    with pytest.raises(ValueError):
        dataclasses.replace(good_params(), alpha=1.0)
    with pytest.raises(ValueError):
        dataclasses.replace(good_params(), alpha=0.0)


def test_params_rejects_wide_region_slack():
    with pytest.raises(ValueError):
        dataclasses.replace(good_params(), delta=1.0)


def test_params_rejects_uncontrolled_damping():
    # mu0*beta*exp(beta*M) must stay at or below one half
    with pytest.raises(ValueError):
        PerturbParams(
            mu=0.1, mu0=0.2, alpha=0.5, beta=1.0, delta=0.5, K0=0.1, tau=1.0, M=2.0
        )


# -- the perturbation family -------------------------------------------------


def test_zero_mu_leaves_field_unchanged():
    psi = parse_field("0.3*x1*x1 - y1 + 0.2*t", 1)
    p = good_params(mu=0.0)
    up = perturb_up(psi, p)
    pts = Domain(BOX1).sample_points(stream(3), 50)
    np.testing.assert_array_equal(up(pts), psi(pts))


def test_zero_field_with_tau_two_gives_centered_bump():
    psi = parse_field("0.0", 1)
    p = good_params(tau=2.0)
    up = perturb_up(psi, p)
    pts = Domain(BOX1).sample_points(stream(4), 60)
    z_sq = np.square(pts[:, :2]).sum(axis=1)
    expected = p.mu * (np.exp(p.alpha * z_sq) - 1.0)
    np.testing.assert_allclose(up(pts), expected, rtol=1e-14, atol=1e-16)


def test_lowered_field_is_reflection_through_original():
    psi = parse_field("x1*y1 + 0.5*t", 1)
    p = good_params()
    up = perturb_up(psi, p)
    down = perturb_down(psi, p)
    pts = Domain(BOX1).sample_points(stream(5), 60)
    np.testing.assert_allclose(
        down(pts), 2.0 * psi(pts) - up(pts), rtol=1e-13, atol=1e-15
    )


def test_lowered_field_sits_below_where_bump_positive():
    psi = parse_field("x1", 1)
    p = good_params(tau=1.0)
    down = perturb_down(psi, p)
    pts = Domain(BOX1).sample_points(stream(6), 60)
    # exp(alpha|z|^2) >= 1 and exp(-beta x1) > 0, so the bump beats tau = 1
    assert np.all(down(pts) < psi(pts))


def test_raised_field_dominates_when_tau_small_enough():
    psi = parse_field("0.2*x1 - 0.1*y1", 1)
    p = good_params(tau=0.0)
    up = perturb_up(psi, p)
    pts = Domain(BOX1).sample_points(stream(7), 60)
    assert np.all(up(pts) > psi(pts))


def test_perturbed_jets_match_symbolic_oracle():
    p = good_params()
    psi = parse_field("0.4*x1*x1 - 0.3*y1*t", 1)
    up = perturb_up(psi, p)

    x1, y1, t = sp.symbols("x1 y1 t")
    base = sp.Rational(2, 5) * x1**2 - sp.Rational(3, 10) * y1 * t
    expr = base + p.mu * (
        sp.exp(p.alpha * (x1**2 + y1**2)) + sp.exp(-p.beta * base) - p.tau
    )
    syms = (x1, y1, t)
    at = np.array([0.4, -0.7, 0.3])
    subs = dict(zip(syms, at))

    jet = up.jet2(at)
    assert jet.value == pytest.approx(float(expr.subs(subs)), rel=1e-13)
    grad = [float(sp.diff(expr, v).subs(subs)) for v in syms]
    hess = [[float(sp.diff(expr, a, b).subs(subs)) for b in syms] for a in syms]
    np.testing.assert_allclose(jet.egrad, grad, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(jet.ehess, hess, rtol=1e-12, atol=1e-14)


# -- admissible region -------------------------------------------------------


def test_admissible_region_cuts_large_values():
    psi = parse_field("x1", 1)
    p = good_params()
    pts = Domain(BOX1).sample_points(stream(8), 200)
    mask = admissible_region_mask(psi, p, pts)
    np.testing.assert_array_equal(mask, np.abs(pts[:, 0]) <= p.M)


def test_admissible_region_cuts_deep_bump_deficit():
    # tau far above the bump's range pushes every node out of the region
    psi = parse_field("0.0", 1)
    p = good_params(tau=1e6)
    pts = Domain(BOX1).sample_points(stream(9), 50)
    assert not admissible_region_mask(psi, p, pts).any()


# -- margin certificate ------------------------------------------------------


@pytest.fixture(scope="module")
def margin_nodes():
    return Domain(BOX1).sample_points(stream(7), 400)


def test_margin_zero_mu_passes_exactly(margin_nodes):
    psi = parse_field("x1", 1)
    p = good_params(mu=0.0, k0=0.0)
    rep = lemma35_margin(psi, p, conformal_operator_spec(), Domain(BOX1), margin_nodes)
    assert rep.passed
    assert rep.min_margin == 0.0
    assert rep.max_margin == 0.0
    assert rep.k0_max is None


def test_margin_linear_field_yields_positive_coupling(margin_nodes):
    psi = parse_field("x1", 1)
    p = good_params()
    rep = lemma35_margin(psi, p, conformal_operator_spec(), Domain(BOX1), margin_nodes)
    assert rep.passed
    assert rep.min_margin > 0.0
    assert 0.35 < rep.k0_max < 0.45
    assert rep.node_count + rep.excluded_count == 400

    at_max = dataclasses.replace(p, K0=0.9 * rep.k0_max)
    assert lemma35_margin(
        psi, at_max, conformal_operator_spec(), Domain(BOX1), margin_nodes
    ).passed
    beyond = dataclasses.replace(p, K0=1.1 * rep.k0_max)
    assert not lemma35_margin(
        psi, beyond, conformal_operator_spec(), Domain(BOX1), margin_nodes
    ).passed


def test_margin_mirrored_for_lowered_field(margin_nodes):
    psi = parse_field("x1", 1)
    p = good_params()
    rep = lemma35_margin(
        psi, p, conformal_operator_spec(), Domain(BOX1), margin_nodes, mode="down"
    )
    assert rep.passed
    assert rep.min_margin > 0.0
    assert rep.k0_max > 0.35


def test_margin_polynomial_field(margin_nodes):
    psi = parse_field("0.2*x1*x1 - 0.15*y1 + 0.1*x1*t", 1)
    p = good_params()
    rep = lemma35_margin(psi, p, conformal_operator_spec(), Domain(BOX1), margin_nodes)
    assert rep.passed
    assert rep.k0_max > 0.1
    assert rep.excluded_count == 0


def test_margin_coupling_grows_as_mu_shrinks(margin_nodes):
    psi = parse_field("0.2*x1*x1 - 0.15*y1 + 0.1*x1*t", 1)
    spec = conformal_operator_spec()
    nodes = margin_nodes[:150]
    k0s = []
    for frac in (0.9, 0.45, 0.1):
        p = good_params(mu=frac * MU0)
        k0s.append(lemma35_margin(psi, p, spec, Domain(BOX1), nodes).k0_max)
    assert k0s[0] <= k0s[1] + 1e-12 <= k0s[2] + 2e-12


def test_margin_empty_region_is_an_error():
    psi = parse_field("x1", 1)
    p = good_params()
    far = np.array([[0.9, 0.0, 0.0], [0.95, 0.2, -0.1]])
    with pytest.raises(ValueError, match="admissible"):
        lemma35_margin(psi, p, conformal_operator_spec(), Domain(BOX1), far)


def test_margin_rejects_unknown_mode(margin_nodes):
    with pytest.raises(ValueError, match="mode"):
        lemma35_margin(
            parse_field("x1", 1),
            good_params(),
            conformal_operator_spec(),
            Domain(BOX1),
            margin_nodes,
            mode="sideways",
        )


# -- touching harness --------------------------------------------------------

TRACE = ConeSpec("trace")
ZERO_SPEC = OperatorSpec(alpha=0.0, beta=0.0, gamma=0.0)


def harness_grids(res=9):
    v = sample(parse_field("x1", 1), Domain(BOX1), (res, res, res))
    return v


def test_harness_separated_pair_is_consistent():
    v = harness_grids()
    w = v.copy()
    w.values += 1.0
    rep = touching_harness(w, v, ZERO_SPEC, TRACE)
    assert rep.verdict == "CONSISTENT"
    assert rep.touching_count == 0
    assert rep.components == []
    assert rep.boundary_gap == pytest.approx(1.0)
    assert rep.precondition_ok


def test_harness_identical_pair_touches_through_boundary():
    v = harness_grids()
    rep = touching_harness(v.copy(), v, ZERO_SPEC, TRACE)
    assert rep.verdict == "CONSISTENT"
    assert rep.touching_count == v.values.size
    assert len(rep.components) == 1
    assert rep.components[0].touches_boundary
    assert rep.boundary_gap == 0.0


def test_harness_interior_island_is_flagged():
    dom = Domain(BOX1)
    res = (9, 9, 9)
    v = sample(parse_field("0.0", 1), dom, res)
    w = sample(parse_field("x1*x1 + y1*y1 + t*t", 1), dom, res)
    rep = touching_harness(w, v, ZERO_SPEC, TRACE)
    assert rep.verdict == "VIOLATION"
    assert rep.touching_count == 1
    assert len(rep.components) == 1
    assert not rep.components[0].touches_boundary
    assert rep.boundary_gap > 0.0
    assert rep.precondition_ok


def test_harness_equal_boundary_data_touches_only_at_boundary():
    dom = Domain(BOX1)
    res = (9, 9, 9)
    v = sample(parse_field("x1", 1), dom, res)
    w = sample(
        parse_field("x1 + 0.3*(1.0 - x1*x1)*(1.0 - y1*y1)*(1.0 - t*t)", 1), dom, res
    )
    rep = touching_harness(w, v, ZERO_SPEC, TRACE)
    assert rep.verdict == "CONSISTENT"
    assert rep.precondition_ok
    # the contact set is exactly the boundary shell, one connected component
    assert rep.touching_count == 9**3 - 7**3
    assert len(rep.components) == 1
    assert rep.components[0].touches_boundary
    assert rep.boundary_gap == 0.0


def test_harness_verdict_survives_common_shift():
    dom = Domain(BOX1)
    res = (9, 9, 9)
    v = sample(parse_field("x1", 1), dom, res)
    w = sample(
        parse_field("x1 + 0.3*(1.0 - x1*x1)*(1.0 - y1*y1)*(1.0 - t*t)", 1), dom, res
    )
    base = touching_harness(w, v, ZERO_SPEC, TRACE)
    w2, v2 = w.copy(), v.copy()
    w2.values += 0.7
    v2.values += 0.7
    shifted = touching_harness(w2, v2, ZERO_SPEC, TRACE)
    assert shifted.verdict == base.verdict
    assert shifted.touching_count == base.touching_count
    assert shifted.boundary_gap == pytest.approx(base.boundary_gap, abs=1e-12)


def test_harness_reports_ordering_failure():
    v = harness_grids()
    w = v.copy()
    w.values -= 1.0
    rep = touching_harness(w, v, ZERO_SPEC, TRACE)
    assert not rep.precondition_ok
    assert rep.min_difference == pytest.approx(-1.0)


def test_harness_rejects_mismatched_grids():
    v = harness_grids(9)
    w = harness_grids(11)
    with pytest.raises(ValueError, match="lattice"):
        touching_harness(w, v, ZERO_SPEC, TRACE)


def test_harness_attaches_classifications():
    v = harness_grids()
    w = v.copy()
    w.values += 1.0
    rep = touching_harness(w, v, ZERO_SPEC, TRACE)
    assert sum(rep.sub_counts.values()) == v.values.size
    assert sum(rep.super_counts.values()) == v.values.size


def test_harness_json_schema():
    v = harness_grids()
    w = v.copy()
    w.values += 1.0
    payload = json.loads(touching_harness(w, v, ZERO_SPEC, TRACE).to_json())
    assert set(payload) == {"boundary_gap", "touching_count", "components", "verdict"}
    assert payload["verdict"] == "CONSISTENT"
    assert payload["touching_count"] == 0
    assert payload["components"] == []
