"""Sup/inf convolutions of grid fields with the quartic group-gauge kernel.

The upper envelope of a grid field v at parameter eps > 0 is

    v_up(xi) = max over all lattice nodes eta of  v(eta) - (1/eps) d(xi, eta)^4,

where d is the left-invariant gauge distance; the lower envelope mirrors it
with a min and +(1/eps) d^4.  The maximum runs over every node of the grid,
boundary included, by brute force in blocks; candidates outside the pruning
window d^4 <= eps * (max v - min v) are masked out first (they can never win,
so masking preserves exactness).  Ties break to the smallest flat node index.

The check_* functions verify the properties the regularization argument
rests on: monotonicity and pointwise squeezing in eps, one-sided curvature
bounds (semiconvexity for upper envelopes, semiconcavity for lower) with a
constant sampled from the kernel's own Hessian, optimality and reach of the
argmax witness, and stability of envelope values along convergent sequences.
"""

from dataclasses import dataclass

import numpy as np

from .fields import GridField

__all__ = [
    "EnvelopeResult",
    "upper_envelope",
    "lower_envelope",
    "envelope_at",
    "gauge_quartic",
    "check_monotone_convergence",
    "check_semiconvexity",
    "check_witness_bound",
    "check_stability",
]


def gauge_quartic(a, b, n):
    """Fourth power of the gauge distance between coordinate arrays.

    ``a`` and ``b`` broadcast against each other over leading axes; the last
    axis holds flat coordinates (x_1..x_n, y_1..y_n, t).  Written directly on
    the group-difference coordinates so no fourth root is ever taken.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dz = a[..., : 2 * n] - b[..., : 2 * n]
    zs = np.square(dz).sum(axis=-1)
    shear = 2.0 * (
        (a[..., n : 2 * n] * b[..., :n]).sum(axis=-1)
        - (a[..., :n] * b[..., n : 2 * n]).sum(axis=-1)
    )
    dt = a[..., 2 * n] - b[..., 2 * n]
    return zs * zs + np.square(dt + shear)


def _pair_parts(a, b, n):
    """(squared z-displacement, quartic gauge distance) for broadcast pairs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dz = a[..., : 2 * n] - b[..., : 2 * n]
    zs = np.square(dz).sum(axis=-1)
    shear = 2.0 * (
        (a[..., n : 2 * n] * b[..., :n]).sum(axis=-1)
        - (a[..., :n] * b[..., n : 2 * n]).sum(axis=-1)
    )
    dt = a[..., 2 * n] - b[..., 2 * n]
    return zs, zs * zs + np.square(dt + shear)


@dataclass
class EnvelopeResult:
    """Envelope output grid, argmax witness, and the defining parameters.

    ``witness`` maps each node to the flat (C-order) index of the node
    attaining its extremum.  ``source_min``/``source_max`` record the range
    of the input field; the property checks need them to reconstruct the
    pruning window without the source grid.
    """

    out: GridField
    witness: np.ndarray
    eps: float
    mode: str
    source_min: float
    source_max: float


def upper_envelope(v, eps, block=192):
    """Exact discrete sup-convolution over all grid nodes."""
    return _envelope(v, eps, "upper", block)


def lower_envelope(w, eps, block=192):
    """Exact discrete inf-convolution over all grid nodes."""
    return _envelope(w, eps, "lower", block)


def _envelope(v, eps, mode, block):
    eps = float(eps)
    if not (np.isfinite(eps) and eps > 0):
        raise ValueError(f"eps must be a positive real, got {eps}")
    if not np.all(np.isfinite(v.values)):
        raise ValueError("field values must be finite")
    coords = v.coords_full().reshape(-1, 2 * v.n + 1)
    vals = v.values.reshape(-1)
    N = vals.size
    vmin, vmax = float(vals.min()), float(vals.max())
    window = eps * (vmax - vmin)
    out = np.empty(N)
    wit = np.empty(N, dtype=np.int64)
    for start in range(0, N, block):
        stop = min(start + block, N)
        d4 = gauge_quartic(coords[start:stop, None, :], coords[None, :, :], v.n)
        if mode == "upper":
            scores = vals[None, :] - d4 / eps
            scores[d4 > window] = -np.inf
            idx = np.argmax(scores, axis=1)
        else:
            scores = vals[None, :] + d4 / eps
            scores[d4 > window] = np.inf
            idx = np.argmin(scores, axis=1)
        rows = np.arange(stop - start)
        out[start:stop] = scores[rows, idx]
        wit[start:stop] = idx
    field = GridField(n=v.n, box=v.box.copy(), values=out.reshape(v.res))
    return EnvelopeResult(
        out=field,
        witness=wit.reshape(v.res),
        eps=eps,
        mode=mode,
        source_min=vmin,
        source_max=vmax,
    )


def envelope_at(v, eps, xi, mode="upper"):
    """Envelope value and witness index at one (not necessarily grid) point."""
    eps = float(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    xi = np.asarray(xi, dtype=float)
    coords = v.coords_full().reshape(-1, 2 * v.n + 1)
    vals = v.values.reshape(-1)
    d4 = gauge_quartic(xi[None, :], coords, v.n)
    if mode == "upper":
        scores = vals - d4 / eps
        idx = int(np.argmax(scores))
    elif mode == "lower":
        scores = vals + d4 / eps
        idx = int(np.argmin(scores))
    else:
        raise ValueError(f"mode must be 'upper' or 'lower', got {mode!r}")
    return float(scores[idx]), idx


# ---------------------------------------------------------------------------
# property checks


@dataclass
class MonotoneReport:
    passed: bool
    mode: str
    eps_list: tuple
    deviations: tuple          # max |envelope - v| per eps
    ordering_ok: bool
    pointwise_violations: int
    deviation_violations: int
    witness: dict | None = None


def check_monotone_convergence(v, eps_list, mode="upper"):
    """Monotonicity in eps, nodewise and in sup-deviation.

    For decreasing eps the upper envelopes must decrease toward v (lower
    envelopes increase), and the sup-norm deviation from v must shrink.
    A wrongly ordered eps list fails with a witness instead of raising.
    """
    eps_list = tuple(float(e) for e in eps_list)
    if len(eps_list) < 2:
        raise ValueError("need at least two eps values")
    for i in range(len(eps_list) - 1):
        if not eps_list[i] > eps_list[i + 1] > 0:
            return MonotoneReport(
                passed=False,
                mode=mode,
                eps_list=eps_list,
                deviations=(),
                ordering_ok=False,
                pointwise_violations=0,
                deviation_violations=0,
                witness={"index": i, "eps": eps_list[i], "eps_next": eps_list[i + 1]},
            )
    outs = [_envelope(v, e, mode, 192).out.values for e in eps_list]
    deviations = tuple(float(np.abs(o - v.values).max()) for o in outs)
    point_bad = 0
    witness = None
    for i in range(len(outs) - 1):
        if mode == "upper":
            bad = outs[i + 1] > outs[i]
        else:
            bad = outs[i + 1] < outs[i]
        if bad.any():
            point_bad += int(bad.sum())
            if witness is None:
                node = np.unravel_index(int(np.argmax(bad)), v.res)
                witness = {
                    "node": tuple(int(k) for k in node),
                    "eps": eps_list[i],
                    "eps_next": eps_list[i + 1],
                    "value": float(outs[i][node]),
                    "value_next": float(outs[i + 1][node]),
                }
    dev_bad = sum(
        1 for i in range(len(deviations) - 1) if deviations[i + 1] > deviations[i]
    )
    return MonotoneReport(
        passed=(point_bad == 0 and dev_bad == 0),
        mode=mode,
        eps_list=eps_list,
        deviations=deviations,
        ordering_ok=True,
        pointwise_violations=point_bad,
        deviation_violations=dev_bad,
        witness=witness,
    )


def _interior_fd_hessians(g):
    """Euclidean FD Hessians at all full-stencil interior nodes, (K, d, d)."""
    v = g.values
    h = g.spacing
    d = v.ndim
    if any(r < 3 for r in v.shape):
        empty_shape = tuple(max(r - 2, 0) for r in v.shape)
        return np.empty((0, d, d)), empty_shape
    inner = tuple(slice(1, -1) for _ in range(d))

    def shifted(offsets):
        sl = []
        for a in range(d):
            o = offsets.get(a, 0)
            sl.append(slice(1 + o, v.shape[a] - 1 + o or None))
        return v[tuple(sl)]

    mid = v[inner]
    K = mid.size
    H = np.empty(mid.shape + (d, d))
    for a in range(d):
        H[..., a, a] = (shifted({a: 1}) - 2.0 * mid + shifted({a: -1})) / h[a] ** 2
        for b in range(a + 1, d):
            cross = (
                shifted({a: 1, b: 1})
                - shifted({a: 1, b: -1})
                - shifted({a: -1, b: 1})
                + shifted({a: -1, b: -1})
            ) / (4.0 * h[a] * h[b])
            H[..., a, b] = cross
            H[..., b, a] = cross
    return H.reshape(K, d, d), mid.shape


@dataclass
class SemiconvexReport:
    passed: bool
    mode: str
    eps: float
    kernel_constant: float     # sampled sup of the kernel Hessian norm, inflated
    bound: float               # kernel_constant / eps
    tol: float
    checked: int
    violations: int
    worst: float               # most extreme interior eigenvalue
    worst_node: tuple | None = None


def check_semiconvexity(r, block=192):
    """One-sided curvature bound for an envelope result.

    Upper envelopes are maxima of functions whose Euclidean Hessian is
    -(1/eps) times the kernel Hessian, so every FD Hessian eigenvalue on the
    grid must stay above -C/eps (below +C/eps for lower envelopes), where C
    bounds the kernel Hessian norm over node pairs inside the pruning
    window.  C is sampled pairwise and inflated by 10%.
    """
    g = r.out
    n = g.n
    coords = g.coords_full().reshape(-1, 2 * n + 1)
    N = coords.shape[0]
    window = r.eps * (r.source_max - r.source_min)
    # kernel Hessian norm bound at a pair (xi, eta): the z-block contributes
    # at most 12 |dz|^2 and the rank-one shear part 2 (1 + 4 |z_eta|^2)
    z_eta_sq = np.square(coords[:, : 2 * n]).sum(axis=1)
    best = 0.0
    for start in range(0, N, block):
        stop = min(start + block, N)
        zs, d4 = _pair_parts(coords[start:stop, None, :], coords[None, :, :], n)
        val = 12.0 * zs + 2.0 * (1.0 + 4.0 * z_eta_sq[None, :])
        val[d4 > window] = -np.inf
        best = max(best, float(val.max()))
    kernel_constant = 1.1 * best
    bound = kernel_constant / r.eps
    scale = max(abs(r.source_min), abs(r.source_max))
    tol = 1e-8 * (1.0 + scale)

    H, inner_shape = _interior_fd_hessians(g)
    if H.shape[0] == 0:
        return SemiconvexReport(
            passed=True, mode=r.mode, eps=r.eps, kernel_constant=kernel_constant,
            bound=bound, tol=tol, checked=0, violations=0, worst=0.0,
        )
    lams = np.linalg.eigvalsh(H)
    if r.mode == "upper":
        extreme = lams[:, 0]
        bad = extreme < -bound - tol
        worst_i = int(np.argmin(extreme))
    else:
        extreme = lams[:, -1]
        bad = extreme > bound + tol
        worst_i = int(np.argmax(extreme))
    node = tuple(int(k) + 1 for k in np.unravel_index(worst_i, inner_shape))
    return SemiconvexReport(
        passed=not bad.any(),
        mode=r.mode,
        eps=r.eps,
        kernel_constant=kernel_constant,
        bound=bound,
        tol=tol,
        checked=int(extreme.size),
        violations=int(bad.sum()),
        worst=float(extreme[worst_i]),
        worst_node=node,
    )


@dataclass
class WitnessReport:
    passed: bool
    mode: str
    eps: float
    checked: int
    identity_violations: int   # nodes where out != v[witness] -+ d^4/eps exactly
    reach_violations: int      # nodes where d^4 exceeds the oscillation budget
    max_reach_slack: float
    witness: dict | None = None


def check_witness_bound(r, v):
    """Optimality identity and reach bound for the argmax witness.

    At every node the output must equal the witness candidate's score
    bit-for-bit, and the witness must lie inside the gauge ball
    d^4 <= eps * (max v - v(xi)) for upper mode (mirrored for lower).
    """
    if r.out.res != v.res or not np.array_equal(r.out.box, v.box):
        raise ValueError("envelope result does not belong to this field")
    n = v.n
    coords = v.coords_full().reshape(-1, 2 * n + 1)
    vals = v.values.reshape(-1)
    wit = r.witness.reshape(-1)
    out = r.out.values.reshape(-1)
    d4 = gauge_quartic(coords, coords[wit], n)
    if r.mode == "upper":
        recomputed = vals[wit] - d4 / r.eps
        budget = r.eps * (r.source_max - vals)
    else:
        recomputed = vals[wit] + d4 / r.eps
        budget = r.eps * (vals - r.source_min)
    ident_bad = recomputed != out
    tol = 1e-9 * r.eps * (1.0 + (r.source_max - r.source_min))
    reach_slack = d4 - budget
    reach_bad = reach_slack > tol
    witness = None
    if ident_bad.any() or reach_bad.any():
        i = int(np.argmax(ident_bad | reach_bad))
        witness = {
            "node": tuple(int(k) for k in np.unravel_index(i, v.res)),
            "witness_node": int(wit[i]),
            "out": float(out[i]),
            "recomputed": float(recomputed[i]),
            "d4": float(d4[i]),
            "budget": float(budget[i]),
        }
    return WitnessReport(
        passed=not (ident_bad.any() or reach_bad.any()),
        mode=r.mode,
        eps=r.eps,
        checked=int(out.size),
        identity_violations=int(ident_bad.sum()),
        reach_violations=int(reach_bad.sum()),
        max_reach_slack=float(reach_slack.max()),
        witness=witness,
    )


@dataclass
class StabilityReport:
    passed: bool
    mode: str
    values: tuple              # envelope values along the sequence
    limit_value: float
    limit_node: tuple
    tail_start: int
    tol: float


def check_stability(v_sequence, xi_sequence, eps_sequence, mode="upper",
                    tol=None, tail_fraction=0.25):
    """Upper-limit bound of envelope values along a convergent sequence.

    Evaluates the j-th envelope at the j-th point and checks that the tail
    stays at or below (above, for lower mode) the field value at the grid
    node nearest the final point.  ``v_sequence`` may be a single grid field
    or one field per step.
    """
    eps_sequence = [float(e) for e in eps_sequence]
    xi_sequence = [np.asarray(x, dtype=float) for x in xi_sequence]
    if isinstance(v_sequence, GridField):
        fields = [v_sequence] * len(eps_sequence)
    else:
        fields = list(v_sequence)
    if not (len(fields) == len(xi_sequence) == len(eps_sequence)):
        raise ValueError("sequences must have equal length")
    if len(fields) < 2:
        raise ValueError("need at least two steps")
    values = tuple(
        envelope_at(f, e, x, mode)[0]
        for f, e, x in zip(fields, eps_sequence, xi_sequence)
    )
    limit_field = fields[-1]
    axes = limit_field.axes()
    node = tuple(
        int(np.argmin(np.abs(ax - c))) for ax, c in zip(axes, xi_sequence[-1])
    )
    limit_value = float(limit_field.values[node])
    if tol is None:
        tol = 1e-9 * (1.0 + np.abs(limit_field.values).max())
    tail_start = max(0, int(np.ceil(len(values) * (1.0 - tail_fraction))))
    tail = values[tail_start:]
    if mode == "upper":
        passed = max(tail) <= limit_value + tol
    else:
        passed = min(tail) >= limit_value - tol
    return StabilityReport(
        passed=bool(passed),
        mode=mode,
        values=values,
        limit_value=limit_value,
        limit_node=node,
        tail_start=tail_start,
        tol=float(tol),
    )
