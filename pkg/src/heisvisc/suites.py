"""Packaged verification suites behind the command-line `check` command.

Each suite bundles the module-level property checks into seeded, sampled
batches and returns a report that serializes to deterministic JSON: the
only inputs are (seed, count), every random draw comes from the counter
generator in :mod:`heisvisc.rng`, and no timing or host information is
recorded, so identical arguments give byte-identical reports.

Suites: core (group and gauge algebra), calculus (frame Hessian structure,
gauge-harmonic trace, conformal change of variables), cones (admissible-set
axioms plus the deliberate non-cone), envelopes (fixture property checks),
structural (coefficient growth/sign gate plus the violating coefficient),
lemma35 (perturbation margin certificates, both directions), keylemma
(envelope-shift certificate).  ``run_suite("all", ...)`` chains them.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .comparison import PerturbParams, lemma35_margin
from .cones import AxiomPlan, ConeSpec, check_axioms, shifted_trace_spec
from .core import Point, dilate, dist, gauge, group_inv, group_mul, heis_hessian, heis_hessian_sym, j_matrix
from .envelopes import (
    check_monotone_convergence,
    check_semiconvexity,
    check_witness_bound,
    lower_envelope,
    upper_envelope,
)
from .fields import AnalyticField, Const, Domain, GridField, exp_of, log_of, parse_field, sample, z_norm_sq
from .operators import (
    OperatorSpec,
    SamplePlan,
    StructuralBounds,
    check_structural,
    conformal_operator_spec,
    eval_A_psi,
    eval_A_u,
)
from .rng import stream
from .viscosity import key_lemma_certificate

__all__ = ["CheckOutcome", "SuiteReport", "SUITE_NAMES", "run_suite", "report_json"]

_BOX1 = np.array([[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]])

# per-check constants shared with the test suite
_PERTURB_ALPHA, _PERTURB_BETA, _PERTURB_M = 0.1, 3.0, 0.5
_PERTURB_MU0 = 0.45 / (_PERTURB_BETA * math.exp(_PERTURB_BETA * _PERTURB_M))


@dataclass
class CheckOutcome:
    """Result of one named check inside a suite."""

    name: str
    passed: bool
    checked: int
    error: float | None = None
    tol: float | None = None
    detail: dict | None = None

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "checked": int(self.checked),
            "error": None if self.error is None else float(self.error),
            "tol": None if self.tol is None else float(self.tol),
            "detail": self.detail,
        }


@dataclass
class SuiteReport:
    suite: str
    seed: int
    passed: bool
    checks: list = field(default_factory=list)

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {
            "suite": self.suite,
            "seed": int(self.seed),
            "passed": bool(self.passed),
            "checks": [c.to_dict() for c in self.checks],
        }


def _outcome(name, checked, error, tol, detail=None):
    return CheckOutcome(
        name=name, passed=bool(error <= tol), checked=checked,
        error=float(error), tol=float(tol), detail=detail,
    )


def _random_points(gen, n, count, half=2.0):
    return gen.uniform(-half, half, size=(count, 2 * n + 1))


def _random_polynomial(gen, n, degree=3, terms=8):
    names = [f"x{i+1}" for i in range(n)] + [f"y{i+1}" for i in range(n)] + ["t"]
    parts = ["%.6f" % gen.uniform(-1, 1)]
    for _ in range(terms):
        deg = int(gen.integers(1, degree + 1))
        mono = "*".join(gen.choice(names) for _ in range(deg))
        parts.append("%.6f*%s" % (gen.uniform(-1, 1), mono))
    return parse_field(" + ".join(parts), n)


# ---------------------------------------------------------------------------
# core: group and gauge algebra


def suite_core(seed, count=2000):
    checks = []
    per_n = {1: count - count // 2, 2: count // 2}

    worst = 0.0
    gen = stream(seed, stream_id=11)
    for n, cnt in per_n.items():
        for a, b, c in zip(*(map(Point.from_coords, _random_points(gen, n, cnt)) for _ in range(3))):
            lhs = group_mul(group_mul(a, b), c).coords()
            rhs = group_mul(a, group_mul(b, c)).coords()
            worst = max(worst, float(np.abs(lhs - rhs).max()))
    checks.append(_outcome("group_associative", count, worst, 1e-12))

    worst = 0.0
    gen = stream(seed, stream_id=12)
    for n, cnt in per_n.items():
        for p in map(Point.from_coords, _random_points(gen, n, cnt)):
            left = group_mul(group_inv(p), p).coords()
            right = group_mul(p, group_inv(p)).coords()
            worst = max(worst, float(np.abs(left).max()), float(np.abs(right).max()))
    checks.append(_outcome("group_inverse", count, worst, 1e-12))

    worst = 0.0
    gen = stream(seed, stream_id=13)
    for n, cnt in per_n.items():
        coords = _random_points(gen, n, cnt)
        lams = gen.uniform(0.1, 4.0, size=cnt)
        for row, lam in zip(coords, lams):
            p = Point.from_coords(row)
            err = abs(gauge(dilate(lam, p)) - lam * gauge(p))
            worst = max(worst, float(err) / max(1.0, lam * gauge(p)))
    checks.append(_outcome("gauge_dilation_homogeneous", count, worst, 1e-12))

    worst = 0.0
    gen = stream(seed, stream_id=14)
    for n, cnt in per_n.items():
        for a, b, z in zip(*(map(Point.from_coords, _random_points(gen, n, cnt)) for _ in range(3))):
            err = abs(dist(group_mul(z, a), group_mul(z, b)) - dist(a, b))
            worst = max(worst, float(err) / max(1.0, dist(a, b)))
    checks.append(_outcome("distance_left_invariant", count, worst, 1e-12))

    return SuiteReport("core", seed, all(c.passed for c in checks), checks)


# ---------------------------------------------------------------------------
# calculus: frame Hessian structure, harmonic trace, conformal relation


def _gauge_power_field(n, power):
    # gauge^power built as exp(power/4 * log(|z|^4 + t^2)); smooth away from 0
    zsq = z_norm_sq(n)
    t = parse_field("t", n).root
    quartic = zsq * zsq + t * t
    return AnalyticField(exp_of(Const(power / 4.0) * log_of(quartic)), n)


def suite_calculus(seed, count=100):
    checks = []

    # antisymmetric part of the frame Hessian is 4 * u_t * J
    worst = 0.0
    gen = stream(seed, stream_id=21)
    fields_per_n = {1: count - count // 3, 2: count // 3}
    for n, cnt in fields_per_n.items():
        J = j_matrix(n)
        for _ in range(cnt):
            f = _random_polynomial(gen, n)
            coords = gen.uniform(-1.5, 1.5, size=2 * n + 1)
            jet = f.jet2(coords)
            H = heis_hessian(jet, Point.from_coords(coords))
            resid = np.abs((H - H.T) - 4.0 * jet.egrad[-1] * J).max()
            worst = max(worst, float(resid) / (1.0 + abs(jet.egrad[-1])))
    checks.append(_outcome("hessian_commutator", count, worst, 1e-10))

    # trace of the symmetrized frame Hessian of gauge^(2-Q) vanishes (n=1)
    worst = 0.0
    gen = stream(seed, stream_id=22)
    harmonic = _gauge_power_field(1, -2.0)
    kept = 0
    pts = 10 * count
    while kept < pts:
        coords = gen.uniform(-2.0, 2.0, size=3)
        p = Point.from_coords(coords)
        if gauge(p) < 0.5:
            continue
        kept += 1
        tr = np.trace(heis_hessian_sym(harmonic.jet2(coords), p))
        worst = max(worst, float(abs(tr)))
    checks.append(_outcome("gauge_harmonic_trace", pts, worst, 1e-6))

    # conformal change of variables u = exp(-(Q-2) psi / 2)
    worst = 0.0
    gen = stream(seed, stream_id=23)
    for n in (1, 2):
        Q = 2 * n + 2
        for _ in range(count // 2):
            psi = _random_polynomial(gen, n, degree=2)
            u = parse_field(f"exp({-(Q - 2.0) / 2.0!r}*({psi.source()}))", n)
            coords = gen.uniform(-0.8, 0.8, size=2 * n + 1)
            pt = Point.from_coords(coords)
            psi_jet = psi.jet2(coords)
            lhs = eval_A_u(u.jet2(coords), pt)
            rhs = np.exp(2.0 * psi_jet.value) * eval_A_psi(psi_jet, pt)
            scale = 1.0 + float(np.abs(rhs).max())
            worst = max(worst, float(np.abs(lhs - rhs).max()) / scale)
    checks.append(_outcome("conformal_change_of_variables", 2 * (count // 2), worst, 1e-8))

    return SuiteReport("calculus", seed, all(c.passed for c in checks), checks)


# ---------------------------------------------------------------------------
# cones: admissible-set axioms and the deliberate non-cone


def _axiom_outcome(name, report):
    total = sum(c.checked for c in report.conditions)
    bad = sum(c.violations for c in report.conditions)
    witness = next((c.witness for c in report.conditions if c.witness), None)
    return CheckOutcome(
        name=name, passed=report.passed, checked=total, error=float(bad), tol=0.0,
        detail={"skipped": int(report.skipped), "witness": witness},
    )


def suite_cones(seed, count=1500, tamper=False):
    checks = []
    families = [
        ("trace", ConeSpec("trace")),
        ("posdef", ConeSpec("posdef")),
        ("sigma_1", ConeSpec("sigma_k", k=1)),
        ("sigma_2", ConeSpec("sigma_k", k=2)),
    ]
    if tamper:
        # deliberately breaks the scaling axiom: {tr M > 1} is not a cone
        families[0] = ("trace", shifted_trace_spec(2))
    for i, (name, cone) in enumerate(families):
        plan = AxiomPlan(seed=seed + 31 * (i + 1), count=count, dim=2)
        checks.append(_axiom_outcome(f"axioms_{name}", check_axioms(cone, plan)))

    # the shifted-trace family must FAIL the scaling axiom with a witness
    plan = AxiomPlan(seed=seed + 311, count=count, dim=2)
    rep = check_axioms(shifted_trace_spec(2), plan)
    shrink = rep.condition("scale_invariant_shrink")
    caught = (not rep.passed) and shrink.violations > 0 and shrink.witness is not None
    checks.append(
        CheckOutcome(
            name="non_cone_detected", passed=caught, checked=shrink.checked,
            error=0.0 if caught else 1.0, tol=0.0,
            detail={"witness": shrink.witness},
        )
    )
    return SuiteReport("cones", seed, all(c.passed for c in checks), checks)


# ---------------------------------------------------------------------------
# envelopes: fixture property checks


def _envelope_fixture_checks(tag, v, eps_list):
    checks = []
    for mode, build in (("upper", upper_envelope), ("lower", lower_envelope)):
        r = build(v, eps_list[1])
        wit = check_witness_bound(r, v)
        checks.append(
            CheckOutcome(
                name=f"{tag}_{mode}_witness_identity", passed=wit.passed,
                checked=int(v.values.size),
                error=float(wit.identity_violations + wit.reach_violations), tol=0.0,
            )
        )
        gap = r.out.values - v.values if mode == "upper" else v.values - r.out.values
        checks.append(_outcome(f"{tag}_{mode}_dominates_source", int(v.values.size),
                               float(max(0.0, -gap.min())), 0.0))
        semi = check_semiconvexity(r)
        checks.append(
            CheckOutcome(
                name=f"{tag}_{mode}_semiconvex_bound", passed=semi.passed,
                checked=int(semi.checked), error=float(semi.violations), tol=0.0,
            )
        )
        mono = check_monotone_convergence(v, eps_list, mode=mode)
        checks.append(
            CheckOutcome(
                name=f"{tag}_{mode}_eps_monotone", passed=mono.passed,
                checked=len(eps_list),
                error=float(mono.pointwise_violations + mono.deviation_violations),
                tol=0.0,
            )
        )
    return checks


def suite_envelopes(seed, count=None):
    del count  # fixture-driven; nothing to sample
    del seed
    eps_list = [1.0, 0.5, 0.25]
    constant = GridField(1, _BOX1.copy(), np.full((7, 7, 7), 0.75))
    spike_vals = np.zeros((9, 9, 9))
    spike_vals[4, 4, 4] = 1.0
    spike = GridField(1, _BOX1.copy(), spike_vals)
    checks = _envelope_fixture_checks("constant", constant, eps_list)
    checks += _envelope_fixture_checks("spike", spike, eps_list)
    return SuiteReport("envelopes", 0, all(c.passed for c in checks), checks)


# ---------------------------------------------------------------------------
# structural: coefficient growth/sign gate


_GATE_BOUNDS = StructuralBounds(R=2.0, Lambda=1.0, theta_bar=0.04, C=6.0, m=2.0, beta0=0.25)


def suite_structural(seed, count=2000):
    checks = []
    dom = Domain(_BOX1.copy())

    rep = check_structural(
        conformal_operator_spec(), _GATE_BOUNDS, dom, SamplePlan(seed=seed + 41, count=count)
    )
    bad = sum(1 for c in rep.conditions if c.required and not c.passed)
    checks.append(
        CheckOutcome(
            name="distinguished_spec_passes", passed=rep.passed, checked=int(rep.samples),
            error=float(bad), tol=0.0, detail={"branch": rep.branch},
        )
    )

    falling = OperatorSpec(
        alpha=parse_field("0.0 - s", 1, extra_vars=("s",)), beta=0.5, gamma=1.0
    )
    rep = check_structural(falling, _GATE_BOUNDS, dom, SamplePlan(seed=seed + 42, count=count))
    witness = next((c.witness for c in rep.conditions if not c.passed and c.witness), None)
    caught = (not rep.passed) and witness is not None
    failing = [c.name for c in rep.conditions if c.required and not c.passed]
    checks.append(
        CheckOutcome(
            name="falling_coefficient_detected", passed=caught, checked=int(rep.samples),
            error=0.0 if caught else 1.0, tol=0.0,
            detail={"failing_conditions": failing, "witness": witness},
        )
    )
    return SuiteReport("structural", seed, all(c.passed for c in checks), checks)


# ---------------------------------------------------------------------------
# lemma35: perturbation margin certificates


def _perturb_params(k0):
    return PerturbParams(
        mu=0.5 * _PERTURB_MU0, mu0=_PERTURB_MU0, alpha=_PERTURB_ALPHA,
        beta=_PERTURB_BETA, delta=0.5, K0=k0, tau=1.0, M=_PERTURB_M,
    )


def suite_lemma35(seed, count=400):
    checks = []
    spec = conformal_operator_spec()
    dom = Domain(_BOX1.copy())
    fixtures = [
        ("linear", parse_field("0.4*x1", 1)),
        ("polynomial", parse_field("0.2*x1*x1 - 0.15*y1 + 0.1*x1*t", 1)),
    ]
    for i, (tag, psi) in enumerate(fixtures):
        nodes = stream(seed, stream_id=51 + i).uniform(-1.0, 1.0, size=(count, 3))
        for mode in ("up", "down"):
            probe = lemma35_margin(psi, _perturb_params(0.0), spec, dom, nodes, mode=mode)
            k0 = probe.k0_max
            if k0 is None or k0 <= 0.0:
                checks.append(
                    CheckOutcome(
                        name=f"{tag}_{mode}_gain", passed=False,
                        checked=int(probe.node_count), error=1.0, tol=0.0,
                        detail={"k0_max": k0},
                    )
                )
                continue
            rep = lemma35_margin(
                psi, _perturb_params(0.5 * k0), spec, dom, nodes, mode=mode
            )
            checks.append(
                CheckOutcome(
                    name=f"{tag}_{mode}_gain",
                    passed=rep.passed and rep.min_margin >= -1e-8,
                    checked=int(rep.node_count),
                    error=float(max(0.0, -rep.min_margin)), tol=1e-8,
                    detail={"k0_max": float(k0), "k0_tested": float(0.5 * k0)},
                )
            )
    return SuiteReport("lemma35", seed, all(c.passed for c in checks), checks)


# ---------------------------------------------------------------------------
# keylemma: envelope-shift certificate


def suite_keylemma(seed, count=None):
    del count  # fixture-driven
    del seed
    checks = []
    dom = Domain(_BOX1.copy())
    w = sample(parse_field("0.0 - (x1*x1 + y1*y1 + t*t)", 1), dom, (13, 13, 13))
    for eps in (0.5, 0.25):
        rep = key_lemma_certificate(
            w, eps, OperatorSpec(0.0, 0.0, 0.0), ConeSpec("trace"), a=1000.0, M=10.0,
            mode="super",
        )
        ok = rep.passed and rep.interior_failures == 0 and rep.coverage >= 0.99
        checks.append(
            CheckOutcome(
                name=f"quadratic_super_eps_{eps}", passed=ok, checked=int(rep.testable),
                error=float(1.0 - rep.coverage), tol=0.01,
                detail={"min_a": rep.min_a, "collar_failures": int(rep.collar_failures)},
            )
        )
    v = sample(parse_field("x1*x1 + y1*y1 + t*t", 1), dom, (13, 13, 13))
    rep = key_lemma_certificate(
        v, 0.5, OperatorSpec(0.0, 0.0, 0.0), ConeSpec("trace"), a=1000.0, M=10.0, mode="sub"
    )
    ok = rep.passed and rep.interior_failures == 0 and rep.coverage >= 0.99
    checks.append(
        CheckOutcome(
            name="quadratic_sub_eps_0.5", passed=ok, checked=int(rep.testable),
            error=float(1.0 - rep.coverage), tol=0.01,
            detail={"min_a": rep.min_a, "collar_failures": int(rep.collar_failures)},
        )
    )
    return SuiteReport("keylemma", 0, all(c.passed for c in checks), checks)


# ---------------------------------------------------------------------------
# dispatch


_SUITES = {
    "core": suite_core,
    "calculus": suite_calculus,
    "cones": suite_cones,
    "envelopes": suite_envelopes,
    "structural": suite_structural,
    "lemma35": suite_lemma35,
    "keylemma": suite_keylemma,
}

SUITE_NAMES = tuple(_SUITES) + ("all",)


def run_suite(name, seed, count=None, tamper=False, pool=None):
    """Run one named suite (or "all") and return its report.

    ``count`` overrides the per-suite default sample count; ``tamper``
    swaps the deliberate non-cone into the cones suite so the run fails
    with a witness.  ``pool`` is an optional executor used by "all" to run
    the member suites concurrently (results are assembled in a fixed
    order, so the output does not depend on the schedule).
    """
    if name == "all":
        def run_one(member):
            return run_suite(member, seed, count=count, tamper=tamper)

        if pool is None:
            reports = [run_one(m) for m in _SUITES]
        else:
            reports = list(pool.map(run_one, _SUITES))
        return SuiteReport(
            suite="all", seed=seed, passed=all(r.passed for r in reports),
            checks=[c for r in reports for c in _prefixed(r)],
        )
    if name not in _SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of {sorted(SUITE_NAMES)}")
    fn = _SUITES[name]
    kwargs = {}
    if count is not None:
        kwargs["count"] = count
    if name == "cones":
        kwargs["tamper"] = tamper
    return fn(seed, **kwargs)


def _prefixed(report):
    out = []
    for c in report.checks:
        out.append(
            CheckOutcome(
                name=f"{report.suite}.{c.name}", passed=c.passed, checked=c.checked,
                error=c.error, tol=c.tol, detail=c.detail,
            )
        )
    return out


def report_json(report):
    """Deterministic JSON text for a suite report (sorted keys, LF, indent 2)."""
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
