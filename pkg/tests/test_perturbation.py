from __future__ import annotations

import json
import math

import numpy as np
import pytest
import scipy.linalg

from semiperturb.errors import (
    GuardViolation,
    HorizonExceeded,
    NonConvergence,
    NotInStateSpace,
    StepMismatch,
)
from semiperturb.functions import (
    BoundedMeasure,
    CompactInterval,
    PiecewiseFunction,
    tent,
)
from semiperturb.perturbation import (
    MAX_NEUMANN_TERMS,
    PerturbationOperator,
    VectorTrajectory,
    admissibility_check,
    comparison_check,
    escaping_bumps,
    favard_seminorm,
    generator_check,
    identity_check,
    matrix_probes,
    neumann_nodes,
    neumann_semigroup,
    perturbed_resolvent_check,
    translation_probes,
    varpar_residual,
    volterra_apply,
    volterra_norm_estimate,
    volterra_trajectory,
)
from semiperturb.semigroup import MatrixSystem, TranslationSystem, opnorm2
from semiperturb.transport import (
    TransportProblem,
    build_domain_function,
    build_rank_one,
    bump_function,
    canonical_profile,
    canonical_regularizer,
    make_system,
)


def diag_system():
    return MatrixSystem(np.diag([-1.0, -2.0]))


def coupled_op():
    return PerturbationOperator.matrix(np.array([[0.0, 0.1], [0.1, 0.0]]))


def delta_problem(weight=1):
    return TransportProblem(
        measure=BoundedMeasure.dirac(0, weight),
        profile=canonical_profile(),
        initial=tent(),
        regularizer=canonical_regularizer(),
    )


# exact antiderivative of the canonical profile, zero at -infinity
def profile_antiderivative(x):
    if x <= -1.0:
        return 0.0
    if x <= 0.0:
        return (x * x - 1.0) / 2.0
    if x <= 1.0:
        return -0.5 + 2.0 * x - x * x / 2.0
    return 1.0


# ---------------------------------------------------------------------------
# Volterra operator


def test_volterra_zero_operator_matrix():
    sys_m = diag_system()
    op = PerturbationOperator.matrix(np.zeros((2, 2)))
    F = VectorTrajectory.orbit(sys_m, np.array([1.0, -2.0]), 1.0, 1e-2)
    out = volterra_apply(sys_m, op, F, 1.0)
    assert np.all(out == 0.0)


def test_volterra_matrix_closed_form():
    # A = diag(-1,-2), B = 0.1 I, F(r) = e1 constant:
    # (V F)(1) = 0.1 * int_0^1 e^{-(1-r)} dr * e1 = 0.1 (1 - e^{-1}) e1
    sys_m = diag_system()
    op = PerturbationOperator.matrix(0.1 * np.eye(2))
    dt = 1e-3
    m = round(1.0 / dt)
    F = VectorTrajectory(sys_m, dt, np.tile([1.0, 0.0], (m + 1, 1)))
    out = volterra_apply(sys_m, op, F, 1.0)
    exact = 0.1 * (1.0 - math.exp(-1.0))
    assert exact == pytest.approx(0.06321205588285577, abs=1e-16)
    assert out[0] == pytest.approx(exact, abs=2e-8)
    assert abs(out[1]) < 1e-15


def test_volterra_matrix_trapezoid_order():
    sys_m = diag_system()
    op = PerturbationOperator.matrix(0.1 * np.eye(2))
    exact = 0.1 * (1.0 - math.exp(-1.0))
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        m = round(1.0 / dt)
        F = VectorTrajectory(sys_m, dt, np.tile([1.0, 0.0], (m + 1, 1)))
        errs.append(abs(volterra_apply(sys_m, op, F, 1.0)[0] - exact))
    assert errs[0] / errs[1] > 3.5
    assert errs[1] / errs[2] > 3.5


def test_volterra_rank_one_constant_probe_exact():
    # mu = delta_0, F constant 1: result(x) = int_x^{x+t} g = G(x+t) - G(x).
    # The integrand is piecewise linear with lattice-aligned kinks, so the
    # jump-aware trapezoid reproduces it to machine precision.
    prob = delta_problem()
    dx = 1e-2
    t = 0.5
    sys_t = make_system(prob, dx, t, t)
    op = build_rank_one(prob)
    m = sys_t.steps_of(t)
    ones = np.ones(sys_t.count)
    F = VectorTrajectory(sys_t, dx, np.tile(ones, (m + 1, 1)))
    out = volterra_apply(sys_t, op, F, t)
    xs = sys_t.nodes()
    mask = (xs >= -2.5) & (xs <= 2.5)
    want = np.array([profile_antiderivative(x + t) - profile_antiderivative(x)
                     for x in xs[mask]])
    assert np.max(np.abs(out.values[mask] - want)) < 1e-12


def test_volterra_linear_in_operator_and_trajectory():
    sys_m = diag_system()
    rng = np.random.default_rng(7)
    B1 = rng.standard_normal((2, 2)) * 0.1
    B2 = rng.standard_normal((2, 2)) * 0.1
    dt = 1e-2
    m = round(0.5 / dt)
    F = VectorTrajectory(sys_m, dt, rng.standard_normal((m + 1, 2)))
    G = VectorTrajectory(sys_m, dt, rng.standard_normal((m + 1, 2)))

    opsum = PerturbationOperator.matrix(B1 + 2.0 * B2)
    a = volterra_apply(sys_m, opsum, F, 0.5)
    b = (volterra_apply(sys_m, PerturbationOperator.matrix(B1), F, 0.5)
         + 2.0 * volterra_apply(sys_m, PerturbationOperator.matrix(B2), F, 0.5))
    assert np.max(np.abs(a - b)) < 1e-12 * max(1.0, np.max(np.abs(a)))

    FG = VectorTrajectory(sys_m, dt, F.nodes + G.nodes)
    op1 = PerturbationOperator.matrix(B1)
    c = volterra_apply(sys_m, op1, FG, 0.5)
    d = volterra_apply(sys_m, op1, F, 0.5) + volterra_apply(sys_m, op1, G, 0.5)
    assert np.max(np.abs(c - d)) < 1e-12 * max(1.0, np.max(np.abs(c)))


def test_volterra_rank_one_scales_with_measure_weight():
    dx = 1e-2
    t = 0.3
    base = delta_problem()
    scaled = delta_problem(weight=3)
    sys_t = make_system(base, dx, t, t)
    m = sys_t.steps_of(t)
    vals = sys_t.sample(tent()).values
    F = VectorTrajectory(sys_t, dx, np.tile(vals, (m + 1, 1)))
    out1 = volterra_apply(sys_t, build_rank_one(base), F, t)
    out3 = volterra_apply(sys_t, build_rank_one(scaled), F, t)
    assert np.max(np.abs(out3.values - 3.0 * out1.values)) < 1e-13


def test_volterra_off_lattice_time_rejected():
    sys_m = diag_system()
    op = coupled_op()
    F = VectorTrajectory.orbit(sys_m, np.array([1.0, 0.0]), 0.5, 1e-2)
    with pytest.raises(StepMismatch):
        volterra_apply(sys_m, op, F, 0.1234567)


# ---------------------------------------------------------------------------
# norm estimate


def test_norm_estimate_zero_operator():
    sys_m = diag_system()
    op = PerturbationOperator.matrix(np.zeros((2, 2)))
    probes = matrix_probes(sys_m, 0.5, 1e-2)
    assert volterra_norm_estimate(sys_m, op, 0.5, 1e-2, probes) == 0.0


def test_norm_estimate_rank_one_below_analytic_bound():
    prob = delta_problem()
    t0 = 0.2
    dx = 4e-3
    sys_t = make_system(prob, dx, t0, t0)
    op = build_rank_one(prob)
    assert op.analytic_volterra_bound(sys_t, t0) == pytest.approx(0.4)
    probes = translation_probes(sys_t, t0, dx)
    est = volterra_norm_estimate(sys_t, op, t0, dx, probes)
    assert 0.0 < est <= 0.4 + 1e-12


def test_norm_estimate_scales_linearly_in_matrix():
    sys_m = diag_system()
    probes = matrix_probes(sys_m, 0.5, 1e-2, seed=3)
    B = np.array([[0.0, 0.2], [0.1, 0.0]])
    e1 = volterra_norm_estimate(sys_m, PerturbationOperator.matrix(B),
                                0.5, 1e-2, probes)
    e3 = volterra_norm_estimate(sys_m, PerturbationOperator.matrix(3.0 * B),
                                0.5, 1e-2, probes)
    assert e3 == pytest.approx(3.0 * e1, rel=1e-10)


def test_norm_estimate_rejects_long_probe():
    sys_m = diag_system()
    op = coupled_op()
    long_probe = VectorTrajectory.orbit(sys_m, np.array([1.0, 0.0]), 1.0, 1e-2)
    with pytest.raises(HorizonExceeded):
        volterra_norm_estimate(sys_m, op, 0.5, 1e-2, [long_probe])


# ---------------------------------------------------------------------------
# Neumann series


def test_neumann_zero_perturbation_matrix():
    sys_m = diag_system()
    op = PerturbationOperator.matrix(np.zeros((2, 2)))
    x = np.array([0.3, -1.1])
    out = neumann_semigroup(sys_m, op, x, 0.7, 0.5, 1e-2)
    want = sys_m.propagator(0.7) @ x
    assert np.max(np.abs(out - want)) < 1e-13


def test_neumann_zero_measure_is_translation():
    prob = delta_problem(weight=0)
    dx = 1e-2
    sys_t = make_system(prob, dx, 0.4, 0.2)
    op = build_rank_one(prob)
    out = neumann_semigroup(sys_t, op, prob.initial, 0.4, 0.2, dx)
    want = sys_t.sample(tent().translate(0.4)).values
    xs = sys_t.nodes()
    mask = (xs >= -3.0) & (xs <= 3.0)
    assert np.max(np.abs(out.values[mask] - want[mask])) < 1e-13


def test_neumann_matrix_exponential_oracle():
    sys_m = diag_system()
    op = coupled_op()
    S = scipy.linalg.expm(sys_m.A + op.matrix_data)
    for x in (np.array([1.0, 0.0]), np.array([0.0, 1.0]),
              np.array([0.6, -0.8])):
        out = neumann_semigroup(sys_m, op, x, 1.0, 0.5, 1e-3)
        assert np.max(np.abs(out - S @ x)) < 1e-6


def test_neumann_matrix_multi_segment_split():
    # t = 1.3, t0 = 0.5 -> rest 0.3 plus two full segments
    sys_m = diag_system()
    op = coupled_op()
    x = np.array([0.5, 0.5])
    out, diag = neumann_semigroup(sys_m, op, x, 1.3, 0.5, 1e-3,
                                  diagnostics=True)
    want = scipy.linalg.expm(1.3 * (sys_m.A + op.matrix_data)) @ x
    assert np.max(np.abs(out - want)) < 1e-6
    assert diag.segments == 3


def test_neumann_semigroup_law_matrix():
    sys_m = diag_system()
    op = coupled_op()
    x = np.array([1.0, -1.0])
    dt = 1e-3
    both = neumann_semigroup(sys_m, op, x, 0.9, 0.5, dt)
    inner = neumann_semigroup(sys_m, op, x, 0.4, 0.5, dt)
    outer = neumann_semigroup(sys_m, op, inner, 0.5, 0.5, dt)
    assert np.max(np.abs(both - outer)) < 1e-6


def test_neumann_semigroup_law_transport():
    prob = delta_problem()
    dx = 2e-3
    t0 = 0.2
    sys_t = make_system(prob, dx, 0.5, t0)
    op = build_rank_one(prob)
    both = neumann_semigroup(sys_t, op, prob.initial, 0.5, t0, dx)
    inner = neumann_semigroup(sys_t, op, prob.initial, 0.3, t0, dx)
    outer = neumann_semigroup(sys_t, op, inner, 0.2, t0, dx)
    gap = (both - outer).seminorm(prob.window)
    assert gap < 1e-3


def test_truncation_ratio_below_norm_estimate():
    prob = delta_problem()
    dx = 2e-3
    t0 = 0.2
    sys_t = make_system(prob, dx, t0, t0)
    op = build_rank_one(prob)
    probes = translation_probes(sys_t, t0, dx)
    est = volterra_norm_estimate(sys_t, op, t0, dx, probes)
    _, diag = neumann_nodes(sys_t, op, sys_t.sample(prob.initial), t0,
                            [sys_t.steps_of(t0)], dx)
    # consecutive term-norm ratios after the first two terms
    tn = diag.term_norms
    ratios = [tn[i + 1] / tn[i] for i in range(2, len(tn) - 1)]
    assert ratios and max(ratios) <= est + 0.05


def test_neumann_guard_violation():
    prob = delta_problem()
    dx = 1e-2
    t0 = 0.6  # guard product 2 * 0.6 = 1.2
    sys_t = make_system(prob, dx, t0, t0)
    op = build_rank_one(prob)
    with pytest.raises(GuardViolation):
        neumann_semigroup(sys_t, op, prob.initial, t0, t0, dx)


def test_neumann_divergence_detected():
    sys_m = diag_system()
    op = PerturbationOperator.matrix(10.0 * np.eye(2))
    with pytest.raises(NonConvergence):
        neumann_semigroup(sys_m, op, np.array([1.0, 0.0]), 1.0, 1.0, 1e-2,
                          enforce_guard=False)


def test_neumann_term_cap_respected():
    sys_m = diag_system()
    op = coupled_op()
    _, diag = neumann_semigroup(sys_m, op, np.array([1.0, 1.0]), 0.5, 0.5,
                                1e-2, diagnostics=True)
    assert diag.terms_used <= MAX_NEUMANN_TERMS


# ---------------------------------------------------------------------------
# composition identity


def test_identity_order_zero_exact():
    sys_m = diag_system()
    op = coupled_op()
    r = identity_check(sys_m, op, 0, 0.2, 0.3, np.array([1.0, -0.5]), 1e-2)
    assert r < 1e-12

    prob = delta_problem()
    sys_t = make_system(prob, 1e-2, 0.5, 0.5)
    rt = identity_check(sys_t, build_rank_one(prob), 0, 0.2, 0.3,
                        prob.initial, 1e-2)
    assert rt < 1e-12


def test_identity_zero_perturbation_any_order():
    sys_m = diag_system()
    op = PerturbationOperator.matrix(np.zeros((2, 2)))
    for n in (1, 2, 3):
        assert identity_check(sys_m, op, n, 0.2, 0.2, np.array([1.0, 2.0]),
                              1e-2) < 1e-14


def test_identity_exact_on_lattice_times():
    # with s, t, s+t all on the time lattice the trapezoid split is exact,
    # so the discrete identity holds to rounding at any step
    sys_m = diag_system()
    op = coupled_op()
    x = np.array([1.0, 1.0])
    for n in (1, 2):
        assert identity_check(sys_m, op, n, 0.2, 0.3, x, 1e-2) < 1e-14


def test_identity_matrix_refinement_second_order():
    # off-lattice s and t probe the genuine quadrature error; keeping the
    # offsets at half a cell per level pins the error constant
    sys_m = diag_system()
    op = coupled_op()
    x = np.array([1.0, 1.0])
    for n in (1, 2):
        res = [identity_check(sys_m, op, n, 0.152 + 0.5 * dt,
                              0.252 + 0.5 * dt, x, dt)
               for dt in (4e-3, 2e-3, 1e-3)]
        assert res[0] / res[1] > 3.5
        assert res[1] / res[2] > 3.5


def test_identity_rank_one_small_residual():
    prob = delta_problem()
    dx = 2e-3
    sys_t = make_system(prob, dx, 0.2, 0.2)
    op = build_rank_one(prob)
    r = identity_check(sys_t, op, 1, 0.1, 0.1, prob.initial, dx)
    assert r < 1e-4


def test_identity_order_capped():
    sys_m = diag_system()
    with pytest.raises(ValueError):
        identity_check(sys_m, coupled_op(), 5, 0.1, 0.1,
                       np.array([1.0, 0.0]), 1e-2)


# ---------------------------------------------------------------------------
# variation of parameters


def test_varpar_zero_perturbation():
    sys_m = diag_system()
    op = PerturbationOperator.matrix(np.zeros((2, 2)))
    x = np.array([0.4, 0.9])
    r = varpar_residual(sys_m, op, lambda r_: sys_m.propagator(r_) @ x,
                        1.0, x, 1e-2)
    assert r < 1e-14


def test_varpar_matrix_oracle():
    sys_m = diag_system()
    op = coupled_op()
    x = np.array([1.0, 0.0])
    C = sys_m.A + op.matrix_data
    r = varpar_residual(sys_m, op, lambda r_: scipy.linalg.expm(r_ * C) @ x,
                        1.0, x, 1e-3)
    assert r < 1e-6


# ---------------------------------------------------------------------------
# admissibility


def test_admissibility_zero_operator():
    sys_m = diag_system()
    op = PerturbationOperator.matrix(np.zeros((2, 2)))
    probes = matrix_probes(sys_m, 0.5, 1e-2)
    rep = admissibility_check(sys_m, op, 0.5, 1e-2, probes)
    assert rep.admissible
    assert rep.smallness_observed == 0.0
    assert rep.volterra_norm_lower_bound == 0.0


def test_admissibility_rank_one_pass_then_fail():
    prob = delta_problem()
    dx = 4e-3
    reports = {}
    for t0 in (0.2, 0.3):
        sys_t = make_system(prob, dx, t0, t0)
        op = build_rank_one(prob)
        probes = translation_probes(sys_t, t0, dx)
        reports[t0] = admissibility_check(sys_t, op, t0, dx, probes)
    ok = reports[0.2]
    assert ok.admissible
    assert ok.smallness_analytic == pytest.approx(0.4)
    assert ok.smallness_observed <= 0.4 + 1e-12
    assert ok.lands_in_state_space
    assert ok.worst_reconstruction_residual <= 50 * dx
    assert ok.volterra_norm_lower_bound <= ok.smallness_analytic + 1e-12

    bad = reports[0.3]
    assert not bad.smallness_pass
    assert bad.smallness_analytic == pytest.approx(0.6)
    assert not bad.admissible


def test_admissibility_report_serializes():
    sys_m = diag_system()
    rep = admissibility_check(sys_m, coupled_op(), 0.5, 1e-2,
                              matrix_probes(sys_m, 0.5, 1e-2))
    d = rep.to_dict()
    assert set(d) >= {"lands_in_state_space", "seminorm_constant",
                      "smallness_observed", "smallness_analytic",
                      "volterra_norm_lower_bound", "admissible"}
    json.dumps(d)


# ---------------------------------------------------------------------------
# resolvent chain bound


def test_resolvent_zero_operator():
    sys_m = diag_system()
    op = PerturbationOperator.matrix(np.zeros((2, 2)))
    out = perturbed_resolvent_check(sys_m, op, [10.0], 0.5, 1e-2)
    row = out["rows"][0]
    assert row["observed"] == 0.0
    assert row["within"]


def test_resolvent_matrix_chain_bound():
    sys_m = diag_system()
    op = coupled_op()
    out = perturbed_resolvent_check(sys_m, op, [10.0, 20.0, 40.0], 0.5, 1e-3)
    assert out["all_within"]
    assert out["decreasing"]


def test_resolvent_rank_one_chain_bound():
    prob = delta_problem()
    dx = 4e-3
    sys_t = make_system(prob, dx, 0.2, 0.2)
    op = build_rank_one(prob)
    out = perturbed_resolvent_check(sys_t, op, [5.0, 10.0, 20.0], 0.2, dx)
    assert out["all_within"]
    assert out["decreasing"]


def test_resolvent_needs_lambda_above_growth():
    sys_m = diag_system()
    with pytest.raises(ValueError):
        perturbed_resolvent_check(sys_m, coupled_op(), [-2.0], 0.5, 1e-2)


# ---------------------------------------------------------------------------
# generator difference quotients


def test_generator_matrix_first_order():
    sys_m = diag_system()
    op = coupled_op()
    x = np.array([1.0, 1.0])
    out = generator_check(sys_m, op, x, [4e-2, 2e-2, 1e-2], 1e-3, t0=0.5)
    res = [out[h] for h in (4e-2, 2e-2, 1e-2)]
    assert res[0] > res[1] > res[2]
    # Taylor: residual ~ h/2 * ||(A+B)^2 x||
    C2 = np.linalg.matrix_power(sys_m.A + op.matrix_data, 2)
    assert res[2] <= 0.5 * 1e-2 * np.max(np.abs(C2 @ x)) * 1.5


def test_generator_smooth_function_zero_weight():
    prob = delta_problem(weight=0)
    dx = 2e-3
    sys_t = make_system(prob, dx, 0.2, 0.2)
    op = build_rank_one(prob)
    f = bump_function()
    out = generator_check(sys_t, op, f, [2e-2, 1e-2], dx, t0=0.2)
    assert out[2e-2] > out[1e-2]
    assert out[1e-2] <= 0.05


def test_generator_domain_function_quotients():
    prob = delta_problem()
    dx = 2e-3
    sys_t = make_system(prob, dx, 0.2, 0.2)
    op = build_rank_one(prob)
    f = build_domain_function(prob)
    out = generator_check(sys_t, op, f, [8e-3, 4e-3, 2e-3], dx, t0=0.2)
    vals = [out[h] for h in (8e-3, 4e-3, 2e-3)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[-1] <= 0.05


def test_generator_rejects_mismatched_kinks():
    # doubling the measure breaks the balance between the tent's kinks and
    # the pairing-weighted profile jumps
    prob = delta_problem(weight=2)
    dx = 2e-3
    sys_t = make_system(prob, dx, 0.2, 0.2)
    op = build_rank_one(prob)
    with pytest.raises(NotInStateSpace) as info:
        generator_check(sys_t, op, tent(), [1e-2], dx, t0=0.2)
    assert info.value.curvature is not None
    assert info.value.curvature > 0


# ---------------------------------------------------------------------------
# Favard quotients


def test_favard_constant_is_zero():
    prob = delta_problem()
    sys_t = make_system(prob, 1e-2, 0.2, 0.2)
    c = sys_t.make(np.ones(sys_t.count))
    assert favard_seminorm(sys_t, c, 1.0, [0.05, 0.1, 0.2]) == 0.0


def test_favard_tent_lipschitz_constant():
    prob = delta_problem()
    sys_t = make_system(prob, 1e-2, 0.2, 0.2)
    got = favard_seminorm(sys_t, tent(), 1.0, [0.05, 0.1, 0.2])
    assert got == pytest.approx(1.0, rel=1e-12)


def test_favard_half_alpha_scaling():
    prob = delta_problem()
    sys_t = make_system(prob, 1e-2, 0.2, 0.2)
    s_values = [0.04, 0.16, 0.36]
    got = favard_seminorm(sys_t, tent(), 0.5, s_values)
    # ||T(s) h - h|| = s for the tent, so the quotient is sqrt(s)
    assert got == pytest.approx(math.sqrt(max(s_values)), rel=1e-12)


def test_favard_matrix_system():
    sys_m = diag_system()
    x = np.array([1.0, 0.0])
    got = favard_seminorm(sys_m, x, 1.0, [0.01, 0.05, 0.1])
    # |e^{-s} - 1|/s -> 1 as s -> 0, decreasing in s
    assert got == pytest.approx((1.0 - math.exp(-0.01)) / 0.01, rel=1e-12)


# ---------------------------------------------------------------------------
# comparison constants


def test_comparison_zero_operator():
    sys_m = diag_system()
    op = PerturbationOperator.matrix(np.zeros((2, 2)))
    out = comparison_check(sys_m, op, [0.25, 0.5, 1.0])
    assert out["constant"] == 0.0
    assert all(r["constant"] == 0.0 for r in out["rows"])


def test_comparison_matrix_integral_bound():
    sys_m = diag_system()
    op = coupled_op()
    ts = [0.25, 0.5, 1.0]
    out = comparison_check(sys_m, op, ts)
    # ||S(t) - T(t)|| <= t ||B|| sup||T|| sup||S|| for contractive factors
    assert 0.0 < out["constant"] <= opnorm2(op.matrix_data) + 1e-6


def test_comparison_dyadic_stability_neutral_system():
    # a norm-preserving free semigroup keeps the short-time constant flat;
    # strictly decaying generators shrink it by e^{-t} and are the wrong
    # place to look for dyadic stability
    sys_m = MatrixSystem(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    op = coupled_op()
    ts = [1e-3 * 2 ** k for k in range(10)] + [1.0]
    out = comparison_check(sys_m, op, ts)
    assert out["stability_ratio"] <= 2.0
    assert out["constant"] == pytest.approx(opnorm2(op.matrix_data), rel=0.05)


# ---------------------------------------------------------------------------
# probe factories


def test_matrix_probes_deterministic():
    sys_m = diag_system()
    a = matrix_probes(sys_m, 0.5, 1e-2, seed=11)
    b = matrix_probes(sys_m, 0.5, 1e-2, seed=11)
    assert len(a) == len(b) == sys_m.dim + 3
    for p, q in zip(a, b):
        assert np.array_equal(p.nodes, q.nodes)


def test_escaping_bumps_lose_window_mass():
    prob = delta_problem()
    sys_t = make_system(prob, 1e-2, 1.0, 0.2)
    bumps = escaping_bumps(sys_t, n=4)
    sups = [b.sup_norm() for b in bumps]
    semis = [b.seminorm(prob.window) for b in bumps]
    assert all(abs(s - 1.0) < 1e-12 for s in sups)
    assert all(semis[i + 1] <= semis[i] + 1e-12 for i in range(len(semis) - 1))
    assert semis[-1] == 0.0
