"""Bracketed fixed-point solver between an ordered sub/supersolution pair.

Given grid fields v <= w that agree on the boundary, the solver relaxes
toward a field whose operator matrix sits on the admissible-set boundary
at every interior node, clamping each sweep to [v, w].  Iterating from v
ascends, from w descends; running both directions and comparing is the
numerical uniqueness check.  The semicontinuous envelopes are identities
on a finite lattice and exist to keep the pipeline total.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cones import ConeSpec, defining_value_batch, values_from_eigenvalues
from .fields import AnalyticField, Const, Domain, GridField, parse_field, sample
from .operators import (
    OperatorSpec,
    L_batch,
    SamplePlan,
    StructuralBounds,
    check_structural,
)
from .viscosity import _fd_arrays, _shifted

__all__ = [
    "DEFAULT_BOUNDS",
    "Problem",
    "SolveResult",
    "UniquenessReport",
    "usc_envelope",
    "lsc_envelope",
    "max_fields",
    "min_fields",
    "boundary_bump",
    "bracket_from_boundary",
    "solve",
    "uniqueness_gap",
]

# growth/sign constants satisfied by the constant-coefficient specs the
# solver accepts, on boxes of radius up to two
DEFAULT_BOUNDS = StructuralBounds(
    R=2.0, Lambda=1.0, theta_bar=0.04, C=6.0, m=2.0, beta0=0.25
)

_GATE_PLAN = SamplePlan(seed=2357, count=400)
_BOUNDARY_AGREE_TOL = 1e-10


def usc_envelope(g):
    """Upper semicontinuous envelope; the identity on a finite lattice."""
    return g.copy()


def lsc_envelope(g):
    """Lower semicontinuous envelope; the identity on a finite lattice."""
    return g.copy()


def _require_same_lattice(a, b):
    if a.n != b.n or a.res != b.res or not np.array_equal(a.box, b.box):
        raise ValueError("fields live on different lattices")


def _merged_mask(a, b):
    if a.jet_invalid is None and b.jet_invalid is None:
        return None
    out = np.zeros(a.res, dtype=bool)
    if a.jet_invalid is not None:
        out |= a.jet_invalid
    if b.jet_invalid is not None:
        out |= b.jet_invalid
    return out


def max_fields(a, b):
    """Nodewise maximum of two grid fields on a shared lattice."""
    _require_same_lattice(a, b)
    return GridField(a.n, a.box.copy(), np.maximum(a.values, b.values), _merged_mask(a, b))


def min_fields(a, b):
    """Nodewise minimum of two grid fields on a shared lattice."""
    _require_same_lattice(a, b)
    return GridField(a.n, a.box.copy(), np.minimum(a.values, b.values), _merged_mask(a, b))


def boundary_bump(domain):
    """Smooth field positive inside the box and zero on its whole boundary.

    Product over axes of 1 - s^2 with s the axis coordinate rescaled to
    [-1, 1]; handy for manufacturing ordered brackets around boundary data.
    """
    n = domain.n
    parts = []
    names = [f"x{i}" for i in range(1, n + 1)] + [f"y{i}" for i in range(1, n + 1)] + ["t"]
    for a, name in enumerate(names):
        lo, hi = (float(e) for e in domain.box[a])
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        parts.append(f"(1.0 - (({name} - {mid!r})/{half!r})^2)")
    return parse_field("*".join(parts), n)


def bracket_from_boundary(g, domain, res, scale):
    """Sampled pair (v, w) = g -/+ scale*bump, ordered and boundary-equal."""
    if scale <= 0.0:
        raise ValueError("bracket scale must be positive")
    bump = boundary_bump(domain)
    low = AnalyticField(g.root - Const(scale) * bump.root, g.n, g.extra_vars)
    high = AnalyticField(g.root + Const(scale) * bump.root, g.n, g.extra_vars)
    return sample(low, domain, res), sample(high, domain, res)


@dataclass
class Problem:
    """A solver instance: operator, admissible set, boundary data, bracket.

    Validated at construction: the bracket is ordered and agrees with the
    boundary data on the boundary ring, the coefficients are constant
    (the solver path does not handle coefficient fields), and the
    operator passes the structural gate for ``bounds``.
    """

    spec: OperatorSpec
    cone: ConeSpec
    boundary: AnalyticField
    sub: GridField
    sup: GridField
    bounds: StructuralBounds = DEFAULT_BOUNDS

    def __post_init__(self):
        _require_same_lattice(self.sub, self.sup)
        if not (self.sub.values <= self.sup.values).all():
            raise ValueError("lower bracket exceeds upper bracket at some node")
        bmask = self.sub.boundary_mask()
        gap = np.abs(self.sub.values[bmask] - self.sup.values[bmask]).max()
        if gap > _BOUNDARY_AGREE_TOL:
            raise ValueError(f"bracket fields differ by {gap:.3e} on the boundary")
        bdata = self.boundary(self.sub.coords_full()[bmask])
        data_gap = np.abs(bdata - self.sub.values[bmask]).max()
        if data_gap > _BOUNDARY_AGREE_TOL:
            raise ValueError(
                f"boundary data differs from the bracket by {data_gap:.3e} on the boundary"
            )
        if not self.spec.is_constant:
            raise ValueError("the solver path requires constant coefficients")
        report = check_structural(self.spec, self.bounds, self.domain, _GATE_PLAN)
        if not report.passed:
            failing = [c.name for c in report.conditions if c.required and not c.passed]
            raise ValueError(f"operator fails the structural gate: {failing}")

    @property
    def domain(self):
        return Domain(self.sub.box)

    @property
    def res(self):
        return self.sub.res


@dataclass
class SolveResult:
    u: GridField
    iterations: int
    residuals: np.ndarray
    converged: bool
    final_residual: float
    dt: float
    start: str


class _SweepKernel:
    """Cached interior geometry for repeated operator evaluations.

    The n = 1 case is unrolled into flat array arithmetic on the interior
    block; the general case goes through the batched frame contraction.
    Sweep cost dominates the solver, so the unrolled path matters.
    """

    def __init__(self, template, spec, cone):
        self.spec = spec
        self.cone = cone
        self.h = template.spacing
        d = template.values.ndim
        n = template.n
        self.n = n
        self.inner = tuple(slice(1, -1) for _ in range(d))
        coords = template.coords_full()[self.inner]
        self.int_shape = coords.shape[:-1]
        K = int(np.prod(self.int_shape))
        self.coords = coords.reshape(K, d)
        self.fast = n == 1 and spec.is_constant
        if self.fast:
            x = coords[..., 0]
            y = coords[..., 1]
            self.two_y = 2.0 * y
            self.two_x = 2.0 * x
            self.yy4 = 4.0 * y * y
            self.xx4 = 4.0 * x * x
            self.xy4 = 4.0 * x * y
        B = np.zeros((K, 2 * n, d))
        for i in range(n):
            B[:, i, i] = 1.0
            B[:, i, 2 * n] = 2.0 * self.coords[:, n + i]
            B[:, n + i, n + i] = 1.0
            B[:, n + i, 2 * n] = -2.0 * self.coords[:, i]
        self.B = B

    def _rho_band_n1(self, v):
        hx, hy, ht = self.h
        inner = self.inner
        mid = v[inner]
        Hxx = (_shifted(v, {0: 1}) - 2.0 * mid + _shifted(v, {0: -1})) / hx**2
        Hyy = (_shifted(v, {1: 1}) - 2.0 * mid + _shifted(v, {1: -1})) / hy**2
        Htt = (_shifted(v, {2: 1}) - 2.0 * mid + _shifted(v, {2: -1})) / ht**2
        Hxy = (
            _shifted(v, {0: 1, 1: 1})
            - _shifted(v, {0: 1, 1: -1})
            - _shifted(v, {0: -1, 1: 1})
            + _shifted(v, {0: -1, 1: -1})
        ) / (4.0 * hx * hy)
        Hxt = (
            _shifted(v, {0: 1, 2: 1})
            - _shifted(v, {0: 1, 2: -1})
            - _shifted(v, {0: -1, 2: 1})
            + _shifted(v, {0: -1, 2: -1})
        ) / (4.0 * hx * ht)
        Hyt = (
            _shifted(v, {1: 1, 2: 1})
            - _shifted(v, {1: 1, 2: -1})
            - _shifted(v, {1: -1, 2: 1})
            + _shifted(v, {1: -1, 2: -1})
        ) / (4.0 * hy * ht)

        F11 = Hxx + 2.0 * self.two_y * Hxt + self.yy4 * Htt
        F22 = Hyy - 2.0 * self.two_x * Hyt + self.xx4 * Htt
        F12 = Hxy + self.two_y * Hyt - self.two_x * Hxt - self.xy4 * Htt

        a, b, g = self.spec.constants()
        if a != 0.0 or b != 0.0 or g != 0.0:
            ux = (_shifted(v, {0: 1}) - _shifted(v, {0: -1})) / (2.0 * hx)
            uy = (_shifted(v, {1: 1}) - _shifted(v, {1: -1})) / (2.0 * hy)
            ut = (_shifted(v, {2: 1}) - _shifted(v, {2: -1})) / (2.0 * ht)
            px = ux + self.two_y * ut
            py = uy - self.two_x * ut
            px2 = px * px
            py2 = py * py
            norm = b * (px2 + py2)
            F11 = F11 + a * px2 - g * py2 - norm
            F22 = F22 + a * py2 - g * px2 - norm
            F12 = F12 + (a + g) * px * py

        if self.cone.family == "trace":
            rho = F11 + F22
        else:
            half_gap = 0.5 * (F11 - F22)
            r = np.sqrt(half_gap * half_gap + F12 * F12)
            m = 0.5 * (F11 + F22)
            lams = np.stack([m - r, m + r], axis=-1)
            rho = values_from_eigenvalues(self.cone, lams.reshape(-1, 2)).reshape(
                self.int_shape
            )
        frob = np.sqrt(F11 * F11 + F22 * F22 + 2.0 * F12 * F12)
        band = self.cone.tol * (1.0 + frob)
        return rho, band

    def rho_band(self, values):
        """Defining value of F and its boundary band on the interior block."""
        if self.fast:
            return self._rho_band_n1(values)
        mid, grad, hess = _fd_arrays(values, self.h)
        K, d = self.coords.shape
        grad = grad.reshape(K, d)
        hess = hess.reshape(K, d, d)
        hgrad = np.einsum("kid,kd->ki", self.B, grad)
        hhess = np.einsum("kid,kde,kje->kij", self.B, hess, self.B)
        F = hhess + L_batch(self.spec, self.coords, mid.reshape(K), hgrad)
        rho = defining_value_batch(self.cone, F).reshape(self.int_shape)
        frob = np.sqrt(np.einsum("kij,kij->k", F, F))
        band = (self.cone.tol * (1.0 + frob)).reshape(self.int_shape)
        return rho, band


def _auto_dt(problem):
    h_min = float(problem.sub.spacing.min())
    a, b, g = problem.spec.constants()
    coeff_scale = abs(a) + abs(b) + abs(g)
    return h_min**2 / (8.0 * problem.sub.n * (1.0 + coeff_scale))


def solve(problem, dt="auto", tol=1e-10, max_iter=60000, start="sub"):
    """Relax the bracket toward a field with F on the admissible boundary.

    Synchronous sweeps with double buffering: the interior update is
    clamp(psi + dt*rho, v, w), the boundary ring stays pinned.  Starting
    from the lower bracket the iterates ascend, from the upper they
    descend; a probe watches that direction and halves dt (down to a
    floor) when a sweep breaks it.  The residual is the largest amount by
    which |rho| exceeds the admissible-set boundary band among interior
    nodes the clamp left free; convergence also triggers on a drift-free
    sweep, where every node is held by the clamp or the pin.
    """
    if start not in ("sub", "super"):
        raise ValueError(f"start must be 'sub' or 'super', got {start!r}")
    if any(r < 3 for r in problem.res):
        raise ValueError("solving needs at least one interior node per axis")
    v = problem.sub.values
    w = problem.sup.values
    if np.array_equal(v, w):
        return SolveResult(
            u=problem.sub.copy(),
            iterations=0,
            residuals=np.empty(0),
            converged=True,
            final_residual=0.0,
            dt=0.0,
            start=start,
        )

    step = _auto_dt(problem) if dt == "auto" else float(dt)
    if step <= 0.0:
        raise ValueError("dt must be positive")
    floor = step * 2.0**-20
    ascending = start == "sub"

    kernel = _SweepKernel(problem.sub, problem.spec, problem.cone)
    inner = kernel.inner
    v_int = v[inner]
    w_int = w[inner]
    bmask = problem.sub.boundary_mask()

    while True:
        # one full attempt at the current step; a broken sweep direction
        # means instability has contaminated the state, so the attempt is
        # abandoned and restarted from the bracket at half the step
        cur = (v if ascending else w).copy()
        cur[bmask] = v[bmask]
        nxt = cur.copy()

        history = []
        converged = False
        broke = False
        resid = np.inf
        sweeps = 0
        for sweeps in range(1, max_iter + 1):
            rho, band = kernel.rho_band(cur)
            cur_int = cur[inner]
            slack = 1e-13 * (1.0 + float(np.abs(cur_int).max()))
            clamped = np.clip(cur_int + step * rho, v_int, w_int)
            drift = clamped - cur_int
            broke = drift.min() < -slack if ascending else drift.max() > slack
            if broke:
                break

            free = (cur_int + step * rho) == clamped
            excess = np.maximum(np.abs(rho) - band, 0.0)
            resid = float(excess[free].max()) if free.any() else 0.0
            history.append(resid)

            nxt[inner] = clamped
            cur, nxt = nxt, cur
            if resid < tol or not np.abs(drift).max() > 0.0:
                converged = True
                break

        if not broke:
            break
        step *= 0.5
        if step < floor:
            raise ArithmeticError(
                "time step collapsed below its floor without restoring "
                "monotone sweeps; the scheme is unstable on this problem"
            )

    u = GridField(problem.sub.n, problem.sub.box.copy(), cur)
    return SolveResult(
        u=u,
        iterations=sweeps,
        residuals=np.array(history),
        converged=converged,
        final_residual=resid,
        dt=step,
        start=start,
    )


@dataclass
class UniquenessReport:
    gap: float
    tol: float
    passed: bool
    ascent: SolveResult
    descent: SolveResult


def uniqueness_gap(problem, dt="auto", tol=1e-10, max_iter=60000, uniq_tol=None):
    """Solve from both ends of the bracket and measure their disagreement."""
    up = solve(problem, dt=dt, tol=tol, max_iter=max_iter, start="sub")
    down = solve(problem, dt=dt, tol=tol, max_iter=max_iter, start="super")
    if not (up.converged and down.converged):
        raise ArithmeticError(
            f"bracketed runs did not converge (ascent {up.converged}, "
            f"descent {down.converged})"
        )
    gap = float(np.abs(up.u.values - down.u.values).max())
    if uniq_tol is None:
        uniq_tol = 1e-6 * float(np.abs(problem.sup.values - problem.sub.values).max())
    return UniquenessReport(
        gap=gap, tol=float(uniq_tol), passed=gap <= uniq_tol, ascent=up, descent=down
    )
