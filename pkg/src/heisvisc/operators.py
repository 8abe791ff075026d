"""The nonlinear operator family and its structural-condition checker.

The operators evaluated here have the form

    F[psi] = (symmetrized horizontal Hessian of psi) + L(xi, psi, horizontal gradient),

with the quadratic gradient family

    L(xi, s, p) = alpha(xi, s) p (x) p - gamma(xi, s) Jp (x) Jp - beta(xi, s) |p|^2 I,

where (x) is the outer product and J = [[0, I], [-I, 0]].  Coefficients may
be constants, analytic fields in (x, y, t, s), or plain callables of
(coords, s).  The conformal pair: ``eval_A_psi`` is F with alpha = gamma = 1,
beta = 1/2, and ``eval_A_u`` is the equivalent form in the substitution
u = exp(-(Q-2) psi / 2), Q = 2n + 2, satisfying A^u = e^{2 psi} A[psi].

``check_structural`` samples the growth, monotonicity, and sign conditions
under which the comparison machinery downstream is justified, reporting a
minimum margin and witness per condition.  Matrix inequalities are checked
as smallest-eigenvalue margins; required conditions depend on which sign
branch the coefficient structure satisfies.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import Point, heis_hessian_sym, horizontal_gradient, j_matrix
from .fields import AnalyticField, parse_field
from .rng import stream

__all__ = [
    "OperatorSpec",
    "StructuralBounds",
    "SamplePlan",
    "ConditionCheck",
    "StructuralReport",
    "apply_J",
    "eval_L",
    "eval_F",
    "eval_A_psi",
    "eval_A_u",
    "conformal_operator_spec",
    "check_structural",
    "spec_to_json",
    "spec_from_json",
]


def _is_coefficient(c):
    return isinstance(c, (int, float)) or isinstance(c, AnalyticField) or callable(c)


@dataclass(frozen=True)
class OperatorSpec:
    """Coefficients (alpha, beta, gamma) and gradient exponent m of the family."""

    alpha: object = 0.0
    beta: object = 0.0
    gamma: object = 0.0
    m: float = 2.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            c = getattr(self, name)
            if isinstance(c, (int, np.floating, np.integer)):
                object.__setattr__(self, name, float(c))
            elif not _is_coefficient(c):
                raise ValueError(f"{name} must be a constant, AnalyticField, or callable")
        m = float(self.m)
        if m < 0:
            raise ValueError("exponent m must be nonnegative")
        object.__setattr__(self, "m", m)

    @property
    def is_constant(self):
        return all(
            isinstance(getattr(self, c), float) for c in ("alpha", "beta", "gamma")
        )

    def constants(self):
        if not self.is_constant:
            raise ValueError("operator spec has non-constant coefficients")
        return self.alpha, self.beta, self.gamma


def conformal_operator_spec():
    """The distinguished spec alpha = gamma = 1, beta = 1/2, m = 2."""
    return OperatorSpec(alpha=1.0, beta=0.5, gamma=1.0, m=2.0)


def _coeff_value(c, coords, s):
    """Evaluate a coefficient at flat coords (broadcasting) and solution value s."""
    if isinstance(c, float):
        shape = np.broadcast_shapes(np.shape(coords)[:-1], np.shape(s))
        return np.broadcast_to(c, shape) if shape else c
    if isinstance(c, AnalyticField):
        if "s" in c.extra_vars:
            return c(coords, s=s)
        return c(coords)
    return c(coords, s)


def _coeff_xi_gradient(c, coords, s, step=1e-4):
    """Gradient of a coefficient in the 2n+1 spatial coordinates at one point.

    Exact for constants and analytic fields; central differences otherwise.
    """
    coords = np.asarray(coords, dtype=float)
    d = coords.shape[-1]
    if isinstance(c, float):
        return np.zeros(d)
    if isinstance(c, AnalyticField):
        extra = {"s": float(s)} if "s" in c.extra_vars else {}
        _, g, _ = c.jet_all(coords, **extra)
        return g[:d]
    h = step * (1.0 + np.abs(coords))
    out = np.zeros(d)
    for a in range(d):
        e = np.zeros(d)
        e[a] = h[a]
        out[a] = (c(coords + e, s) - c(coords - e, s)) / (2.0 * h[a])
    return out


def _coords_of(xi):
    return xi.coords() if isinstance(xi, Point) else np.asarray(xi, dtype=float)


def apply_J(p):
    """Rotate a horizontal vector by J: (p_x, p_y) -> (p_y, -p_x) blockwise."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] % 2 != 0:
        raise ValueError("horizontal vectors have even length 2n")
    n = p.shape[-1] // 2
    return np.concatenate([p[..., n:], -p[..., :n]], axis=-1)


def eval_L(spec, xi, s, p):
    """The gradient part alpha p(x)p - gamma Jp(x)Jp - beta |p|^2 I at one point."""
    coords = _coords_of(xi)
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] + 1 != coords.shape[0]:
        raise ValueError("p must be a horizontal vector of length 2n")
    a = float(_coeff_value(spec.alpha, coords, s))
    b = float(_coeff_value(spec.beta, coords, s))
    g = float(_coeff_value(spec.gamma, coords, s))
    Jp = apply_J(p)
    return (
        a * np.outer(p, p)
        - g * np.outer(Jp, Jp)
        - b * float(p @ p) * np.eye(p.shape[0])
    )


def eval_F(spec, jet, xi):
    """F[psi] at a point from the Euclidean jet of psi."""
    p = horizontal_gradient(jet, xi)
    return heis_hessian_sym(jet, xi) + eval_L(spec, xi, jet.value, p)


def eval_A_psi(jet, xi):
    """The distinguished conformally covariant operator applied to psi."""
    return eval_F(conformal_operator_spec(), jet, xi)


def eval_A_u(u_jet, xi, n=None):
    """The conformal operator in the u-variable; requires u > 0.

    Satisfies A^u = e^{2 psi} A[psi] for u = exp(-(Q-2) psi / 2), Q = 2n + 2.
    """
    if n is None:
        n = xi.n
    if u_jet.n != n or xi.n != n:
        raise ValueError("dimension mismatch between jet, point, and n")
    u = u_jet.value
    if u <= 0:
        raise ValueError("eval_A_u requires a positive function value")
    Q = 2 * n + 2
    q2 = Q - 2.0
    hess = heis_hessian_sym(u_jet, xi)
    g = horizontal_gradient(u_jet, xi)
    Jg = apply_J(g)
    pow_hess = u ** (-(Q + 2.0) / q2)
    pow_grad = u ** (-2.0 * Q / q2)
    return (
        -(2.0 / q2) * pow_hess * hess
        + (2.0 * Q / q2**2) * pow_grad * np.outer(g, g)
        - (4.0 / q2**2) * pow_grad * np.outer(Jg, Jg)
        - (2.0 / q2**2) * pow_grad * float(g @ g) * np.eye(2 * n)
    )


# -- batched evaluation helpers (shared by the classifier and solver) --------


def coeff_values_batch(spec, coords, s):
    """(alpha, beta, gamma) arrays at coords (N, 2n+1) and values s (N,)."""
    out = []
    for c in (spec.alpha, spec.beta, spec.gamma):
        v = _coeff_value(c, coords, s)
        out.append(np.broadcast_to(np.asarray(v, dtype=float), np.shape(s)))
    return tuple(out)


def L_batch(spec, coords, s, p):
    """eval_L over stacked samples: coords (N, 2n+1), s (N,), p (N, 2n)."""
    a, b, g = coeff_values_batch(spec, coords, s)
    Jp = apply_J(p)
    nn = p.shape[-1]
    pp = np.einsum("ni,nj->nij", p, p)
    JJ = np.einsum("ni,nj->nij", Jp, Jp)
    sq = np.einsum("ni,ni->n", p, p)
    return (
        a[:, None, None] * pp
        - g[:, None, None] * JJ
        - (b * sq)[:, None, None] * np.eye(nn)
    )


# -- structural condition checking -------------------------------------------


@dataclass(frozen=True)
class StructuralBounds:
    """Claimed constants for the growth/monotonicity/sign conditions."""

    R: float
    Lambda: float
    theta_bar: float
    C: float
    m: float
    beta0: float

    def __post_init__(self):
        for name in ("R", "Lambda", "theta_bar", "C", "beta0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.m < 0:
            raise ValueError("m must be nonnegative")


@dataclass(frozen=True)
class SamplePlan:
    """Seeded sampling plan covering (xi, s-pair, p-annulus, theta)."""

    seed: int
    count: int = 2000
    p_lo: float = 1e-3
    p_hi: float = 10.0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if not (0 < self.p_lo < self.p_hi):
            raise ValueError("need 0 < p_lo < p_hi")


@dataclass
class ConditionCheck:
    name: str
    margin: float
    tol: float
    passed: bool
    required: bool
    witness: dict | None = None

    def to_dict(self):
        return {
            "name": self.name,
            "margin": self.margin,
            "tol": self.tol,
            "passed": self.passed,
            "required": self.required,
            "witness": self.witness,
        }


@dataclass
class StructuralReport:
    samples: int
    branch: str
    conditions: list
    passed: bool

    def condition(self, name):
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {
            "samples": self.samples,
            "branch": self.branch,
            "passed": self.passed,
            "conditions": [c.to_dict() for c in self.conditions],
        }


def grad_p_L_batch(spec, coords, s, p):
    """Gradient of L in p as a (N, 2n, 2n, 2n) tensor, D[:, k] = dL/dp_k."""
    a, b, g = coeff_values_batch(spec, coords, s)
    nn = p.shape[-1]
    E = np.eye(nn)
    J = j_matrix(nn // 2)
    Jp = apply_J(p)
    term_a = np.einsum("ki,nj->nkij", E, p) + np.einsum("ni,kj->nkij", p, E)
    term_g = np.einsum("ik,nj->nkij", J, Jp) + np.einsum("ni,jk->nkij", Jp, J)
    term_b = np.einsum("nk,ij->nkij", p, E)
    return (
        a[:, None, None, None] * term_a
        - g[:, None, None, None] * term_g
        - 2.0 * b[:, None, None, None] * term_b
    )


def grad_xi_L_batch(spec, coords, s, p):
    """Gradient of L in the spatial coordinates, (N, 2n+1, 2n, 2n)."""
    N, d = coords.shape
    nn = p.shape[-1]
    Jp = apply_J(p)
    pp = np.einsum("ni,nj->nij", p, p)
    JJ = np.einsum("ni,nj->nij", Jp, Jp)
    sq = np.einsum("ni,ni->n", p, p)
    out = np.zeros((N, d, nn, nn))
    parts = (
        (spec.alpha, pp),
        (spec.gamma, -JJ),
        (spec.beta, -sq[:, None, None] * np.eye(nn)),
    )
    for c, mat in parts:
        if isinstance(c, float):
            continue
        grads = np.stack(
            [_coeff_xi_gradient(c, coords[i], s[i]) for i in range(N)]
        )
        out += np.einsum("na,nij->naij", grads, mat)
    return out


def _min_eig_batch(mats):
    return np.linalg.eigvalsh(mats)[..., 0]


def _witness(idx, coords, s1, s2, p, theta, margin):
    return {
        "xi": coords[idx].tolist(),
        "s": float(s1[idx]),
        "s_prime": float(s2[idx]),
        "p": p[idx].tolist(),
        "theta": float(theta[idx]),
        "margin": float(margin[idx]),
    }


def check_structural(spec, bounds, box, plan, tol_factor=1e-8):
    """Sample the structural conditions on a box and report margins.

    Conditions checked (matrix inequalities as smallest-eigenvalue margins,
    scalar inequalities as slacks; a sample passes when margin >= -tol with
    tol = tol_factor * (1 + magnitude scale)):

    - xi_gradient_bound:   |grad_xi L| <= C |p|^m
    - p_gradient_bound:    |grad_p L| <= C |p|
    - monotone_in_s:       L(s') - L(s) >= 0 for s <= s'
    - s_growth_bound:      L(s') - L(s) <= C (s' - s) |p|^m I
    - euler_excess_upper_bound:
        p.grad_p L - L + theta Lambda |grad_p L| I - theta I
            <= C p(x)p - (1/C) |p|^m I
    - euler_excess_lower_bound (mirror with >= and flipped theta signs)
    - coefficient_sign_structure: one of the three sign branches holds

    Which euler-excess side is required follows the sign branch: positive
    beta requires the upper bound, negative beta the lower, and the
    constant-coefficient gamma == 0 branch requires neither.
    """
    if box.n < 1:
        raise ValueError("box must have n >= 1")
    gen = stream(plan.seed, 101)
    N = plan.count
    d = 2 * box.n + 1
    nn = 2 * box.n
    C, m = bounds.C, bounds.m

    coords = box.sample_points(gen, N)
    s_pair = np.sort(gen.uniform(-bounds.R, bounds.R, size=(N, 2)), axis=1)
    s1, s2 = s_pair[:, 0], s_pair[:, 1]
    direction = gen.normal(size=(N, nn))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = np.exp(gen.uniform(np.log(plan.p_lo), np.log(plan.p_hi), size=N))
    p = direction * radius[:, None]
    theta = gen.uniform(0.0, bounds.theta_bar, size=N)

    pn = np.linalg.norm(p, axis=1)
    pm = pn**m
    eye = np.eye(nn)
    pp = np.einsum("ni,nj->nij", p, p)

    L1 = L_batch(spec, coords, s1, p)
    L2 = L_batch(spec, coords, s2, p)
    Dp = grad_p_L_batch(spec, coords, s1, p)
    Dxi = grad_xi_L_batch(spec, coords, s1, p)
    norm_Dp = np.sqrt(np.einsum("nkij->n", Dp**2))
    norm_Dxi = np.sqrt(np.einsum("naij->n", Dxi**2))
    pDp = np.einsum("nk,nkij->nij", p, Dp)

    conditions = []

    def add(name, margins, scales, required, witness_extra=None):
        tol = tol_factor * (1.0 + scales)
        ok = margins >= -tol
        idx = int(np.argmin(margins + tol))  # worst relative slack
        conditions.append(
            ConditionCheck(
                name=name,
                margin=float(margins[idx]),
                tol=float(tol[idx]),
                passed=bool(ok.all()),
                required=required,
                witness=None
                if ok.all()
                else _witness(idx, coords, s1, s2, p, theta, margins),
            )
        )

    # scalar growth bounds
    add("xi_gradient_bound", C * pm - norm_Dxi, pm + norm_Dxi, True)
    add("p_gradient_bound", C * pn - norm_Dp, pn + norm_Dp, True)

    # monotonicity and growth in s
    diff = L2 - L1
    diff_scale = np.abs(diff).reshape(N, -1).max(axis=1)
    add("monotone_in_s", _min_eig_batch(diff), diff_scale, True)
    upper = (C * (s2 - s1) * pm)[:, None, None] * eye - diff
    add(
        "s_growth_bound",
        _min_eig_batch(upper),
        diff_scale + C * (s2 - s1) * pm,
        True,
    )

    # sign branch
    a1, b1, g1 = coeff_values_batch(spec, coords, s1)
    a2, b2, g2 = coeff_values_batch(spec, coords, s2)
    balls = np.concatenate([b1, b2])
    galls = np.concatenate([g1, g2])
    branch_pos = min(balls.min() - bounds.beta0, galls.min())
    branch_neg = min(-balls.max() - bounds.beta0, -galls.max())
    const_ab = isinstance(spec.alpha, float) and isinstance(spec.beta, float)
    branch_zero = 0.0 if (const_ab and np.abs(galls).max() == 0.0) else -np.inf
    branches = {"positive": branch_pos, "negative": branch_neg, "constant": branch_zero}
    branch = max(branches, key=branches.get)
    add(
        "coefficient_sign_structure",
        np.array([branches[branch]]),
        np.array([np.abs(balls).max() + np.abs(galls).max()]),
        True,
    )

    # euler excess bounds; the required side follows the branch
    excess = pDp - L1
    theta_term = (theta * bounds.Lambda * norm_Dp)[:, None, None] * eye
    theta_eye = theta[:, None, None] * eye
    rhs_up = C * pp - (pm / C)[:, None, None] * eye
    up_scale = np.abs(rhs_up).reshape(N, -1).max(axis=1) + np.abs(excess).reshape(
        N, -1
    ).max(axis=1)
    add(
        "euler_excess_upper_bound",
        _min_eig_batch(rhs_up - (excess + theta_term - theta_eye)),
        up_scale,
        branch == "positive",
    )
    add(
        "euler_excess_lower_bound",
        _min_eig_batch((excess - theta_term + theta_eye) + rhs_up),
        up_scale,
        branch == "negative",
    )

    passed = all(c.passed for c in conditions if c.required)
    return StructuralReport(
        samples=N, branch=branch, conditions=conditions, passed=passed
    )


# -- JSON interchange ---------------------------------------------------------


def _coeff_to_json(c):
    if isinstance(c, float):
        return c
    if isinstance(c, AnalyticField):
        return c.source()
    raise ValueError("only constant or analytic coefficients serialize to JSON")


def spec_to_json(spec):
    return {
        "alpha": _coeff_to_json(spec.alpha),
        "beta": _coeff_to_json(spec.beta),
        "gamma": _coeff_to_json(spec.gamma),
        "m": spec.m,
    }


def spec_from_json(data, n):
    def parse_coeff(v):
        if isinstance(v, (int, float)):
            return float(v)
        if isinstance(v, str):
            return parse_field(v, n, extra_vars=("s",))
        raise ValueError(f"coefficient must be a number or expression, got {type(v)}")

    missing = {"alpha", "beta", "gamma"} - set(data)
    if missing:
        raise ValueError(f"operator spec missing fields: {sorted(missing)}")
    return OperatorSpec(
        alpha=parse_coeff(data["alpha"]),
        beta=parse_coeff(data["beta"]),
        gamma=parse_coeff(data["gamma"]),
        m=float(data.get("m", 2.0)),
    )
