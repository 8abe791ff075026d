"""Strict perturbations and the ordered-pair touching harness.

Two ingredients of comparison arguments live here.  The first is a family
of explicit perturbations that push a candidate solution strictly up or
down while the operator moves by a controlled amount; ``lemma35_margin``
certifies that control numerically, node by node, and searches for the
largest admissible coupling constant.  The second is ``touching_harness``,
which takes an ordered pair of grid fields and reports whether their
contact set is confined to the boundary, the discrete shadow of a
comparison principle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import Point, horizontal_gradient
from .fields import AnalyticField, Const, exp_of, z_norm_sq
from .operators import eval_F
from .viscosity import classify_grid

__all__ = [
    "PerturbParams",
    "PerturbationReport",
    "TouchingComponent",
    "TouchingReport",
    "perturb_up",
    "perturb_down",
    "admissible_region_mask",
    "lemma35_margin",
    "touching_harness",
]


@dataclass(frozen=True)
class PerturbParams:
    """Constants steering the exponential perturbation family.

    ``mu`` is the actual perturbation size, ``mu0`` its admissible ceiling.
    ``alpha`` shapes the radial factor exp(alpha*|z|^2), ``beta`` the
    solution-dependent factor exp(-beta*psi), ``tau`` recenters the bump,
    and ``K0`` is the candidate coupling constant for the margin check.
    ``M`` bounds |psi| on the working region and ``delta`` widens the
    region where the bump is required to stay nonnegative.
    """

    mu: float
    mu0: float
    alpha: float
    beta: float
    delta: float
    K0: float
    tau: float
    M: float

    def __post_init__(self):
        for name in ("mu", "mu0", "alpha", "beta", "delta", "K0", "tau", "M"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0.0 <= self.mu < self.mu0:
            raise ValueError(f"need 0 <= mu < mu0, got mu={self.mu}, mu0={self.mu0}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"need 0 < alpha < 1, got {self.alpha}")
        if self.beta <= 0.0:
            raise ValueError(f"need beta > 0, got {self.beta}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"need 0 < delta < 1, got {self.delta}")
        if self.K0 < 0.0:
            raise ValueError(f"need K0 >= 0, got {self.K0}")
        if self.M <= 0.0:
            raise ValueError(f"need M > 0, got {self.M}")
        # exp(beta*M) dominates sup exp(-beta*psi) whenever |psi| <= M
        cap = self.mu0 * self.beta * math.exp(self.beta * self.M)
        if cap > 0.5:
            raise ValueError(
                f"mu0*beta*exp(beta*M) = {cap:.6g} exceeds 1/2; shrink mu0 or beta"
            )


def _bump_node(psi, p):
    # exp(alpha*|z|^2) + exp(-beta*psi) - tau as a syntax tree over psi's vars
    radial = exp_of(Const(p.alpha) * z_norm_sq(psi.n))
    damped = exp_of(Const(-p.beta) * psi.root)
    return radial + damped - Const(p.tau)


def perturb_up(psi, p):
    """psi + mu*(exp(alpha*|z|^2) + exp(-beta*psi) - tau) as an exact field."""
    root = psi.root + Const(p.mu) * _bump_node(psi, p)
    return AnalyticField(root, psi.n, psi.extra_vars)


def perturb_down(psi, p):
    """Mirror of :func:`perturb_up`: the bump is subtracted instead."""
    root = psi.root - Const(p.mu) * _bump_node(psi, p)
    return AnalyticField(root, psi.n, psi.extra_vars)


def admissible_region_mask(psi, p, nodes):
    """Boolean mask of nodes where the margin check applies.

    Keeps the nodes with |psi| <= M whose bump value sits above -delta;
    outside that region the perturbation family makes no promises.
    """
    nodes = np.asarray(nodes, dtype=float)
    vals = np.atleast_1d(np.asarray(psi(nodes), dtype=float))
    n = psi.n
    z_sq = np.square(nodes[..., : 2 * n]).sum(axis=-1)
    bump = np.exp(p.alpha * z_sq) + np.exp(-p.beta * vals) - p.tau
    return (np.abs(vals) <= p.M) & (bump >= -p.delta)


@dataclass
class PerturbationReport:
    """Outcome of the node-wise operator-control check.

    ``passed`` refers to the caller's K0; ``k0_max`` is the largest
    coupling constant that still passes (None when mu == 0 makes the
    margin independent of it).
    """

    mode: str
    mu: float
    k0: float
    passed: bool
    k0_max: float | None
    min_margin: float
    max_margin: float
    tol: float
    node_count: int
    excluded_count: int


def _margin_matrices(psi, p, spec, nodes, mode):
    """Per-node pencil (A, B): the margin at coupling c is lambda_min(A - mu*c*B)."""
    tilde = perturb_up(psi, p) if mode == "up" else perturb_down(psi, p)
    sign = 1.0 if mode == "up" else -1.0
    A = []
    B = []
    for coords in nodes:
        xi = Point.from_coords(coords)
        jet = psi.jet2(coords)
        jet_t = tilde.jet2(coords)
        weight = 1.0 - sign * p.mu * p.beta * math.exp(-p.beta * jet.value)
        base = sign * (eval_F(spec, jet_t, xi) - weight * eval_F(spec, jet, xi))
        g = horizontal_gradient(jet, xi)
        growth = 1.0 + float(np.dot(g, g)) ** (spec.m / 2.0)
        A.append(base)
        B.append(growth * np.eye(g.size) + np.outer(g, g))
    return np.array(A), np.array(B)


def lemma35_margin(psi, p, spec, domain, nodes, mode="up", tol=None):
    """Certify operator control for the perturbed field on sampled nodes.

    For ``mode="up"`` the check is that the operator of the raised field
    dominates (1 - mu*beta*exp(-beta*psi)) times the original operator up
    to the gradient-shaped correction mu*K0*((1+|grad_H psi|^m)I +
    grad_H psi x grad_H psi); ``mode="down"`` mirrors the inequality for
    the lowered field.  Nodes outside the admissible region are dropped;
    an empty remainder is an error, not a vacuous pass.  The largest
    passing coupling constant is located by doubling and bisection.
    """
    if mode not in ("up", "down"):
        raise ValueError(f"mode must be 'up' or 'down', got {mode!r}")
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim == 1:
        nodes = nodes[None, :]
    keep = admissible_region_mask(psi, p, nodes)
    excluded = int((~keep).sum())
    nodes = nodes[keep]
    if nodes.shape[0] == 0:
        raise ValueError("no nodes fall in the admissible region {|psi|<=M, bump>=-delta}")

    A, B = _margin_matrices(psi, p, spec, nodes, mode)
    if tol is None:
        tol = 1e-8 * (1.0 + float(np.abs(A).max(initial=0.0)))

    def min_margin(c):
        return float(np.linalg.eigvalsh(A - (p.mu * c) * B)[:, 0].min())

    base = min_margin(p.K0)
    passed = base >= -tol

    if p.mu == 0.0:
        k0_max = None
    elif min_margin(0.0) < -tol:
        k0_max = 0.0
    else:
        hi = 1.0
        while min_margin(hi) >= -tol:
            hi *= 2.0
            if hi > 1e12:
                break
        lo = 0.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if min_margin(mid) >= -tol:
                lo = mid
            else:
                hi = mid
        k0_max = lo

    margins = np.linalg.eigvalsh(A - (p.mu * p.K0) * B)[:, 0]
    return PerturbationReport(
        mode=mode,
        mu=p.mu,
        k0=p.K0,
        passed=bool(passed),
        k0_max=k0_max,
        min_margin=float(margins.min()),
        max_margin=float(margins.max()),
        tol=float(tol),
        node_count=int(nodes.shape[0]),
        excluded_count=excluded,
    )


@dataclass
class TouchingComponent:
    size: int
    touches_boundary: bool


@dataclass
class TouchingReport:
    """Where an ordered pair of grid fields meets, and whether that is legal.

    The verdict is CONSISTENT exactly when every connected component of
    the near-contact set {w - v <= touch_tol} reaches the boundary; an
    island of contact in the interior is the discrete signature of a
    comparison failure.  Classifications of the pair are attached for
    inspection but do not influence the verdict.
    """

    boundary_gap: float
    touch_tol: float
    touching_count: int
    components: list
    verdict: str
    precondition_ok: bool
    min_difference: float
    sub_counts: dict
    super_counts: dict

    def to_json(self):
        payload = {
            "boundary_gap": self.boundary_gap,
            "touching_count": self.touching_count,
            "components": [
                {"size": c.size, "touches_boundary": c.touches_boundary}
                for c in self.components
            ],
            "verdict": self.verdict,
        }
        return json.dumps(payload, sort_keys=True)


def touching_harness(w, v, spec, cone, touch_tol=None):
    """Compare supersolution candidate ``w`` against subsolution candidate ``v``.

    Both fields must share a lattice.  Requires w >= v nodewise (reported,
    not raised), measures the smallest boundary gap, labels the connected
    components of the near-contact set under face adjacency, and checks
    each component for boundary contact.
    """
    if w.n != v.n or w.res != v.res or not np.array_equal(w.box, v.box):
        raise ValueError("fields live on different lattices")
    diff = w.values - v.values
    min_diff = float(diff.min())
    sup = float(np.abs(diff).max())
    if touch_tol is None:
        touch_tol = 1e-9 * (1.0 + sup)

    boundary = w.boundary_mask()
    boundary_gap = float(diff[boundary].min())
    touching = diff <= touch_tol

    structure = ndimage.generate_binary_structure(diff.ndim, 1)
    labels, n_comp = ndimage.label(touching, structure=structure)
    components = []
    for lab in range(1, n_comp + 1):
        mask = labels == lab
        components.append(
            TouchingComponent(
                size=int(mask.sum()),
                touches_boundary=bool((mask & boundary).any()),
            )
        )

    verdict = (
        "CONSISTENT"
        if all(c.touches_boundary for c in components)
        else "VIOLATION"
    )

    sub = classify_grid(v, spec, cone, side="sub")
    sup_cls = classify_grid(w, spec, cone, side="super")
    return TouchingReport(
        boundary_gap=boundary_gap,
        touch_tol=float(touch_tol),
        touching_count=int(touching.sum()),
        components=components,
        verdict=verdict,
        precondition_ok=min_diff >= 0.0,
        min_difference=min_diff,
        sub_counts=dict(sub.counts),
        super_counts=dict(sup_cls.counts),
    )
