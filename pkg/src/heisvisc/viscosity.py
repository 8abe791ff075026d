"""Grid classification of sub/supersolutions and the envelope-shift certificate.

A grid field is tested node by node: at every interior node with a full
finite-difference stencil (and no kink flag in a 3^d neighborhood) the
discrete second-order jet stands in for the touching test function, the
operator matrix F is assembled, and its position relative to the admissible
set decides the verdict.  Subsolutions need F in the closed set (Interior or
Boundary), supersolutions need the closed complement (Exterior or Boundary).

``key_lemma_certificate`` checks the quantitative version for envelope
regularizations: after shifting F by

    a * (dist(xi, xi_*) + (1/eps) d(xi, xi_*)^4) * |grad_H w_eps|^m

along the identity, the shifted matrix must land outside (inside, for the
sub side) the admissible set, where xi_* is the envelope's argmax witness.
The first summand of the shift uses the Euclidean distance by default; the
``distance_metric`` option switches it to the group gauge distance for
sensitivity studies.  The smallest sufficient ``a`` is found by bisection on
precomputed spectra (shifting by a multiple of the identity only translates
eigenvalues), with the one-cell boundary collar reported separately since
its stencils read envelope values contaminated by the grid edge.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .cones import (
    band_from_eigenvalues,
    codes_from_values,
    eigenvalues_batch,
    values_from_eigenvalues,
)
from .envelopes import gauge_quartic, lower_envelope, upper_envelope
from .operators import L_batch

__all__ = [
    "TAG_NAMES",
    "Classification",
    "classify_grid",
    "KeyLemmaReport",
    "key_lemma_certificate",
]

TAG_NAMES = (
    "SubOK",
    "SuperOK",
    "OnBoundary",
    "SubViolated",
    "SuperViolated",
    "Untestable",
)
_TAG_CODE = {name: i for i, name in enumerate(TAG_NAMES)}


def _shifted(v, offsets):
    sl = []
    for a in range(v.ndim):
        o = offsets.get(a, 0)
        sl.append(slice(1 + o, v.shape[a] - 1 + o or None))
    return v[tuple(sl)]


def _fd_arrays(v, h):
    """Central-difference value/gradient/Hessian blocks on the interior.

    Operates on a raw value tensor with per-axis spacing ``h``; returns
    arrays shaped like the interior block (index 1..r-2 per axis).
    """
    d = v.ndim
    inner = tuple(slice(1, -1) for _ in range(d))
    mid = v[inner]
    grad = np.empty(mid.shape + (d,))
    hess = np.empty(mid.shape + (d, d))
    for a in range(d):
        grad[..., a] = (_shifted(v, {a: 1}) - _shifted(v, {a: -1})) / (2.0 * h[a])
        hess[..., a, a] = (
            _shifted(v, {a: 1}) - 2.0 * mid + _shifted(v, {a: -1})
        ) / h[a] ** 2
        for b in range(a + 1, d):
            cross = (
                _shifted(v, {a: 1, b: 1})
                - _shifted(v, {a: 1, b: -1})
                - _shifted(v, {a: -1, b: 1})
                + _shifted(v, {a: -1, b: -1})
            ) / (4.0 * h[a] * h[b])
            hess[..., a, b] = cross
            hess[..., b, a] = cross
    return mid, grad, hess


def _fd_jets_interior(g):
    """Values, gradients, and Hessians at full-stencil nodes, plus coords.

    Central differences at the native spacing on the interior block
    (index 1..r-2 per axis); shapes (K,), (K, d), (K, d, d), (K, d).
    """
    v = g.values
    d = v.ndim
    if any(r < 3 for r in v.shape):
        return (np.empty(0), np.empty((0, d)), np.empty((0, d, d)), np.empty((0, d)))
    inner = tuple(slice(1, -1) for _ in range(d))
    mid, grad, hess = _fd_arrays(v, g.spacing)
    K = mid.size
    coords = g.coords_full()[inner].reshape(K, d)
    return mid.reshape(K), grad.reshape(K, d), hess.reshape(K, d, d), coords


def _horizontal_parts(coords, grad, hess, n):
    """Horizontal gradient and symmetrized horizontal Hessian, batched."""
    K, d = coords.shape
    B = np.zeros((K, 2 * n, d))
    for i in range(n):
        B[:, i, i] = 1.0
        B[:, i, 2 * n] = 2.0 * coords[:, n + i]
        B[:, n + i, n + i] = 1.0
        B[:, n + i, 2 * n] = -2.0 * coords[:, i]
    hgrad = np.einsum("kid,kd->ki", B, grad)
    hhess = np.einsum("kid,kde,kje->kij", B, hess, B)
    return hgrad, hhess


def _operator_matrices(g, spec):
    """F at every full-stencil interior node of the grid field."""
    vals, grad, hess, coords = _fd_jets_interior(g)
    n = g.n
    hgrad, hhess = _horizontal_parts(coords, grad, hess, n)
    F = hhess + L_batch(spec, coords, vals, hgrad)
    return F, hgrad, coords, vals


def _untestable_mask(g):
    """Boundary nodes plus anything whose 3^d jet cube straddles a kink."""
    mask = g.boundary_mask()
    if g.jet_invalid is not None and g.jet_invalid.any():
        near = ndimage.binary_dilation(
            g.jet_invalid, structure=np.ones((3,) * g.values.ndim, dtype=bool)
        )
        mask |= near
    return mask


@dataclass
class Classification:
    """Per-node verdicts for one grid field against one operator and set.

    ``tags`` holds int8 codes indexing TAG_NAMES; ``rho`` the defining value
    of F at each node (NaN where untestable).  ``worst`` maps each non-empty
    tag to its weakest witness: for the OK/OnBoundary tags the node closest
    to the set boundary, for the violated tags the deepest violation.
    """

    side: str
    tags: np.ndarray
    rho: np.ndarray
    counts: dict
    worst: dict

    def count(self, name):
        return self.counts.get(name, 0)

    @property
    def testable(self):
        return int(self.tags.size - self.count("Untestable"))

    def all_testable_are(self, *names):
        allowed = {_TAG_CODE[m] for m in names}
        codes = self.tags[self.tags != _TAG_CODE["Untestable"]]
        return bool(np.isin(codes, list(allowed)).all())


def classify_grid(g, spec, cone, side="both"):
    """Classify every node of a grid field; see the module docstring."""
    if side not in ("sub", "super", "both"):
        raise ValueError(f"side must be 'sub', 'super', or 'both', got {side!r}")
    res = g.res
    d = len(res)
    tags = np.full(res, _TAG_CODE["Untestable"], dtype=np.int8)
    rho_full = np.full(res, np.nan)
    untestable = _untestable_mask(g)

    F, _, _, _ = _operator_matrices(g, spec)
    if F.shape[0]:
        lams = eigenvalues_batch(F)
        rho = values_from_eigenvalues(cone, lams)
        band = band_from_eigenvalues(cone, lams)
        codes = codes_from_values(rho, band)
        inner_shape = tuple(r - 2 for r in res)
        inner = tuple(slice(1, -1) for _ in range(d))
        tag_inner = np.empty(inner_shape, dtype=np.int8)
        c = codes.reshape(inner_shape)
        tag_inner[c == 0] = _TAG_CODE["OnBoundary"]
        tag_inner[c == 1] = _TAG_CODE[
            "SubOK" if side != "super" else "SuperViolated"
        ]
        tag_inner[c == -1] = _TAG_CODE[
            "SuperOK" if side != "sub" else "SubViolated"
        ]
        tags[inner] = tag_inner
        rho_full[inner] = rho.reshape(inner_shape)
    tags[untestable] = _TAG_CODE["Untestable"]
    rho_full[untestable] = np.nan

    counts = {}
    for name, code in _TAG_CODE.items():
        k = int((tags == code).sum())
        if k:
            counts[name] = k
    worst = {}
    for name in TAG_NAMES[:-1]:
        code = _TAG_CODE[name]
        sel = tags == code
        if not sel.any():
            continue
        vals = np.where(sel, np.abs(rho_full), np.nan)
        if name in ("SubViolated", "SuperViolated"):
            i = np.nanargmax(vals)
        else:
            i = np.nanargmin(vals)
        node = np.unravel_index(int(i), res)
        worst[name] = {
            "node": tuple(int(k) for k in node),
            "rho": float(rho_full[node]),
        }
    return Classification(side=side, tags=tags, rho=rho_full, counts=counts, worst=worst)


# ---------------------------------------------------------------------------
# envelope-shift certificate


@dataclass
class KeyLemmaReport:
    mode: str
    eps: float
    a: float
    passed: bool               # given a certifies all non-collar testable nodes
    min_a: float | None        # smallest sufficient a found by bisection
    distance_metric: str
    testable: int
    excluded_bound: int        # nodes dropped by the |w_eps| + |w(xi_*)| <= M cut
    coverage: float            # passing fraction of all testable nodes at a
    failures: int
    collar_failures: int
    interior_failures: int
    worst: dict | None = None


def _collar_mask(res):
    """Testable nodes one cell away from the grid boundary."""
    d = len(res)
    inner_shape = tuple(r - 2 for r in res)
    mask = np.zeros(inner_shape, dtype=bool)
    for a in range(d):
        sl = [slice(None)] * d
        sl[a] = 0
        mask[tuple(sl)] = True
        sl[a] = -1
        mask[tuple(sl)] = True
    return mask.reshape(-1)


def key_lemma_certificate(w, eps, spec, cone, a, M, mode="super",
                          distance_metric="euclidean", max_a=1e6):
    """Certify the identity-shift bound for an envelope regularization.

    Builds the eps-envelope of ``w`` (lower for mode 'super', upper for
    'sub'), forms F at the testable nodes, and checks that shifting by the
    witness-distance term lands in the closed complement (resp. closure) of
    the admissible set.  Nodes where |w_eps(xi)| + |w(xi_*)| > M are
    excluded.  Alongside the verdict at the given ``a``, a bisection reports
    the smallest a for which all non-collar testable nodes pass.
    """
    if mode not in ("super", "sub"):
        raise ValueError(f"mode must be 'super' or 'sub', got {mode!r}")
    if distance_metric not in ("euclidean", "gauge"):
        raise ValueError("distance_metric must be 'euclidean' or 'gauge'")
    if eps <= 0 or a < 0 or M <= 0:
        raise ValueError("need eps > 0, a >= 0, M > 0")
    env = lower_envelope(w, eps) if mode == "super" else upper_envelope(w, eps)
    g = env.out
    n = g.n

    F, hgrad, coords, vals = _operator_matrices(g, spec)
    if F.shape[0] == 0:
        raise ValueError("grid has no full-stencil interior nodes")
    res = g.res
    inner = tuple(slice(1, -1) for _ in range(len(res)))

    src_coords = w.coords_full().reshape(-1, 2 * n + 1)
    src_vals = w.values.reshape(-1)
    wit = env.witness[inner].reshape(-1)
    wit_coords = src_coords[wit]
    d4 = gauge_quartic(coords, wit_coords, n)
    if distance_metric == "euclidean":
        dist = np.sqrt(np.square(coords - wit_coords).sum(axis=1))
    else:
        dist = d4**0.25
    shift0 = (dist + d4 / eps) * np.square(hgrad).sum(axis=1) ** (spec.m / 2.0)

    keep = (np.abs(vals) + np.abs(src_vals[wit])) <= M
    excluded = int((~keep).sum())
    if not keep.any():
        raise ValueError("the magnitude bound M excludes every testable node")

    lams = eigenvalues_batch(F)
    sign = -1.0 if mode == "super" else 1.0

    def codes_at(trial):
        shifted = lams + sign * (trial * shift0)[:, None]
        rho = values_from_eigenvalues(cone, shifted)
        band = band_from_eigenvalues(cone, shifted)
        return codes_from_values(rho, band)

    def passing(trial):
        c = codes_at(trial)
        ok = (c <= 0) if mode == "super" else (c >= 0)
        ok = ok | ~keep                      # excluded nodes do not count
        return ok

    collar = _collar_mask(res)
    body = ~collar & keep

    def holds(trial):
        return bool(passing(trial)[body].all()) if body.any() else True

    # bisection for the smallest sufficient a over the non-collar interior
    min_a = None
    if holds(0.0):
        min_a = 0.0
    else:
        hi = max(a, 1.0)
        while hi <= max_a and not holds(hi):
            hi *= 2.0
        if hi <= max_a:
            lo = 0.0
            for _ in range(60):
                midpoint = 0.5 * (lo + hi)
                if holds(midpoint):
                    hi = midpoint
                else:
                    lo = midpoint
            min_a = hi

    ok = passing(a)
    fails = ~ok & keep
    coverage = float((ok & keep).sum() / keep.sum())
    collar_fail = int((fails & collar).sum())
    interior_fail = int((fails & ~collar).sum())
    worst = None
    if fails.any():
        shifted = lams + sign * (a * shift0)[:, None]
        rho = values_from_eigenvalues(cone, shifted)
        depth = np.where(fails, rho if mode == "super" else -rho, -np.inf)
        i = int(np.argmax(depth))
        inner_shape = tuple(r - 2 for r in res)
        node = tuple(int(k) + 1 for k in np.unravel_index(i, inner_shape))
        worst = {
            "node": node,
            "rho": float(rho[i]),
            "shift": float(a * shift0[i]),
            "in_collar": bool(collar[i]),
        }
    return KeyLemmaReport(
        mode=mode,
        eps=float(eps),
        a=float(a),
        passed=interior_fail == 0,
        min_a=min_a,
        distance_metric=distance_metric,
        testable=int(keep.size),
        excluded_bound=excluded,
        coverage=coverage,
        failures=int(fails.sum()),
        collar_failures=collar_fail,
        interior_failures=interior_fail,
        worst=worst,
    )
