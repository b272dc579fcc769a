"""Left translation on the line perturbed by a rank-one evaluation operator.

The perturbed generator acts as u' + (pairing of u with a bounded measure)
times a discontinuous profile; its domain consists of continuous functions
whose derivative kinks at the profile jumps are exactly the pairing value
times the jump gaps.  This module owns

* the independent oracle: an implicit-trapezoid solve of the scalar
  renewal equation for phi(tau) = pairing of the perturbed orbit, plus an
  exact reconstruction of the solution from phi;
* domain bookkeeping with exact rational arithmetic (membership residuals
  are identically zero, not merely small, for the canonical examples);
* constructors for the stock profiles and domain functions;
* ``run_perturbed``, the high-level driver wiring a grid system and a
  rank-one operator into the Neumann engine.

Oracle and engine share only low-level sampling primitives; the time
stepping (implicit fixed-point solve here, explicit truncated series
there) and the free-part handling are deliberately different routes.
"""

from __future__ import annotations

import dataclasses
from fractions import Fraction

import numpy as np

from .errors import DegenerateProfile, GuardViolation, StepSizeError
from .functions import (
    BoundedMeasure,
    CompactInterval,
    GridFunction,
    PiecewiseFunction,
    sample_sided,
    tent,
    three_jump_profile,
)
from .perturbation import (
    PerturbationOperator,
    SeriesDiagnostics,
    neumann_semigroup,
)
from .semigroup import TranslationSystem


# ---------------------------------------------------------------------------
# profiles and domain functions


CANONICAL_GAPS = (-1, 2, -1)


def canonical_gap_vector():
    """Recompute the stock profile's gaps from one-sided limits.

    Kept as a startup assertion: the hard-coded vector and the exact
    arithmetic must never drift apart.
    """
    gaps = tuple(hi - lo for _, lo, hi in three_jump_profile().jumps())
    if tuple(int(v) for v in gaps) != CANONICAL_GAPS:
        raise AssertionError(f"canonical gap vector drifted: {gaps}")
    return gaps


def canonical_profile() -> PiecewiseFunction:
    """The stock three-jump profile (gaps -1, 2, -1 at -1, 0, 1)."""
    canonical_gap_vector()
    return three_jump_profile()


def canonical_regularizer() -> PiecewiseFunction:
    """Tent function h with h - h' equal to the canonical profile, exactly."""
    return tent()


def sawtooth_profile() -> PiecewiseFunction:
    """Nine-jump sawtooth: unit teeth on (k, k+1], k = -5..3, then a half
    tooth decaying on (4, 5].

    Gaps are -1 at -4, ..., 3 and -0.5 at 4; no regularizer in closed
    piecewise-polynomial form is supplied, which exercises the engine
    paths that never touch regularized coordinates.
    """
    breaks = list(range(-5, 6))
    pieces = [[0]]
    for k in range(-5, 4):
        pieces.append([-k, 1])          # x - k on (k, k+1]
    pieces.append([Fraction(5, 2), Fraction(-1, 2)])  # (5 - x)/2 on (4, 5]
    pieces.append([0])
    return PiecewiseFunction(breaks, pieces)


def corner_profile(profile: PiecewiseFunction,
                   half_width=Fraction(1, 2)) -> PiecewiseFunction:
    """Piecewise-quadratic w whose derivative kink at each profile jump
    equals that jump's gap, and which is C^1 everywhere else.

    Built from one quadratic corner per jump: supported on
    [z - a, z + a], value a/2 at z, derivative +1 then -1.  Scaling by
    gap/2 makes the kink defect exactly the gap; all arithmetic stays
    rational when the profile is rational.
    """
    a = Fraction(half_width)
    total = None
    for z, lo, hi in profile.jumps():
        gap = hi - lo
        z = Fraction(z)
        c_l = z - a
        c_r = z + a
        inv = Fraction(1, 2) / a
        left = [c_l * c_l * inv, -2 * c_l * inv, inv]
        right = [c_r * c_r * inv, -2 * c_r * inv, inv]
        corner = PiecewiseFunction([c_l, z, c_r],
                                   [[0], left, right, [0]])
        piece = corner.scale(Fraction(gap) / 2)
        total = piece if total is None else total + piece
    if total is None:
        raise ValueError("profile has no jumps to match")
    return total


def bump_function(center=0, radius=1) -> PiecewiseFunction:
    """C^1 bump (1 - ((x-c)/r)^2)^2 on (c - r, c + r], rational arithmetic."""
    c = Fraction(center)
    r = Fraction(radius)
    base = PiecewiseFunction(
        [-r, r],
        [[0],
         [1, 0, Fraction(-2, 1) / (r * r), 0,
          Fraction(1, 1) / (r ** 4)],
         [0]])
    return base if c == 0 else base.translate(-c)


@dataclasses.dataclass
class DomainReport:
    """Exact bookkeeping for membership in the perturbed generator domain."""

    in_domain: bool
    pairing_value: object
    kink_residuals: list      # (location, residual) pairs, exact when rational
    continuity_defects: list  # (location, jump of f) pairs
    worst: float

    def to_dict(self) -> dict:
        return {
            "in_domain": self.in_domain,
            "pairing_value": float(self.pairing_value),
            "kink_residuals": [[float(z), float(r)]
                               for z, r in self.kink_residuals],
            "continuity_defects": [[float(z), float(r)]
                                   for z, r in self.continuity_defects],
            "worst": self.worst,
        }


def domain_check(f: PiecewiseFunction, problem: "TransportProblem",
                 tol=0) -> DomainReport:
    """Does f lie in the perturbed generator's domain?

    Needs f continuous and, at every point where either f' kinks or the
    profile jumps, kink defect of f' == pairing(f) * profile gap.  With
    rational inputs the residuals are exact; ``tol`` only matters for
    float data.
    """
    phi = problem.measure.pair(f)
    cont = [(z, hi - lo) for z, lo, hi in f.jumps()]
    gap_at = {z: hi - lo for z, lo, hi in problem.profile.jumps()}
    locations = {rec[0] for rec in f.derivative_jumps()}
    locations.update(gap_at.keys())
    resids = []
    for z in sorted(locations, key=float):
        defect = (f.one_sided_derivative(z, "left")
                  - f.one_sided_derivative(z, "right"))
        resids.append((z, defect - phi * gap_at.get(z, 0)))
    worst_list = [abs(float(r)) for _, r in resids] \
        + [abs(float(r)) for _, r in cont]
    worst = max(worst_list) if worst_list else 0.0
    ok = not cont and all(abs(r) <= tol for _, r in resids)
    return DomainReport(ok, phi, resids, cont, worst)


def build_domain_function(problem: "TransportProblem",
                          smooth_part: PiecewiseFunction | None = None,
                          corner_part: PiecewiseFunction | None = None,
                          ) -> PiecewiseFunction:
    """Smooth function plus scaled corners landing exactly in the domain.

    With w the corner profile (kink defects equal to the profile gaps)
    and f0 smooth, f = f0 + s w needs s = pairing(f0) + s * pairing(w),
    solvable unless pairing(w) == 1, which is reported as a degenerate
    profile rather than divided through.
    """
    f0 = smooth_part if smooth_part is not None else bump_function()
    w = corner_part if corner_part is not None \
        else corner_profile(problem.profile)
    pw = problem.measure.pair(w)
    denom = 1 - pw
    if denom == 0 or abs(float(denom)) < 1e-12:
        raise DegenerateProfile(
            "corner profile pairs to 1; the kink equation s = "
            "pairing(f0) + s * pairing(w) has no solution")
    s = problem.measure.pair(f0) / denom
    return f0 + w.scale(s)


# ---------------------------------------------------------------------------
# scalar renewal oracle


def kernel(measure: BoundedMeasure, profile: PiecewiseFunction,
           s, side: str = "left"):
    """Pairing of the shifted profile: the renewal kernel at lag s.

    Exact piecewise evaluation (rational in, rational out); ``side``
    selects the one-sided limit taken at profile jumps, with "mid" the
    jump midpoint that trapezoid stepping wants at interior lattice hits.
    """
    total = 0
    for loc, w in measure.atoms:
        x = loc + s
        if side == "mid":
            val = (profile.one_sided_limit(x, "left")
                   + profile.one_sided_limit(x, "right")) / 2
        else:
            val = profile.one_sided_limit(x, side)
        total = total + w * val
    if measure.density is not None:
        total = total + (measure.density * profile.translate(s)
                         ).definite_integral()
    return total


def _kernel_arrays(measure, profile, dt, m_steps):
    s = dt * np.arange(m_steps + 1)
    left = np.zeros(m_steps + 1)
    mid = np.zeros(m_steps + 1)
    right = np.zeros(m_steps + 1)
    for loc, w in measure.atoms:
        a_l, a_m, a_r = sample_sided(profile, float(loc) + s,
                                     snap_tol=1e-6 * dt)
        left += float(w) * a_l
        mid += float(w) * a_m
        right += float(w) * a_r
    if measure.density is not None:
        dens = np.array([
            float((measure.density * profile.translate(float(sq)))
                  .definite_integral())
            for sq in s])
        left += dens
        mid += dens
        right += dens
    return left, mid, right


def oracle_weights(measure: BoundedMeasure, profile: PiecewiseFunction,
                   u0: PiecewiseFunction, t: float, dt: float) -> np.ndarray:
    """Implicit-trapezoid solve of the scalar renewal equation.

    phi(tau) = pairing(u0 shifted by tau)
               + integral_0^tau phi(r) kernel(tau - r) dr
    on the lattice 0..t.  The diagonal factor 1 - dt * kernel_right(0)/2
    must stay positive; otherwise the step size is rejected.
    """
    m_steps = int(round(t / dt))
    if abs(t - m_steps * dt) > 1e-8 * max(dt, t):
        raise StepSizeError(f"t={t} is not a multiple of dt={dt}")
    k_left, k_mid, k_right = _kernel_arrays(measure, profile, dt, m_steps)
    diag = 1.0 - 0.5 * dt * k_right[0]
    if diag <= 0:
        raise StepSizeError(
            f"implicit diagonal {diag:.3e} <= 0 at dt={dt}; refine the step")
    free = np.empty(m_steps + 1)
    for m in range(m_steps + 1):
        free[m] = float(measure.pair(u0.translate(m * dt)))
    phi = np.empty(m_steps + 1)
    phi[0] = free[0]
    for m in range(1, m_steps + 1):
        acc = 0.5 * phi[0] * k_left[m]
        if m > 1:
            acc += float(np.dot(phi[1:m], k_mid[m - 1:0:-1]))
        phi[m] = (free[m] + dt * acc) / diag
    return phi


_GAUSS_NODES, _GAUSS_WTS = np.polynomial.legendre.leggauss(4)
_GAUSS_NODES = 0.5 * (_GAUSS_NODES + 1.0)
_GAUSS_WTS = 0.5 * _GAUSS_WTS


def _cell_moments(profile: PiecewiseFunction, origin: float, spacing: float,
                  n_cells: int):
    """First-order moments of the profile over every lattice cell.

    Returns (I0, I1) with I0[k] = integral over sigma in (0,1) of
    (1 - sigma) * profile(x_k + sigma h) and I1[k] the sigma-weighted
    twin.  Four-point Gauss per cell is exact for polynomial pieces up
    to degree 6; cells straddling an off-lattice breakpoint are redone
    with an exact split so the jump never sits inside a Gauss panel.
    """
    xs = origin + spacing * np.arange(n_cells)
    i0 = np.zeros(n_cells)
    i1 = np.zeros(n_cells)
    for sg, wg in zip(_GAUSS_NODES, _GAUSS_WTS):
        _, vals, _ = sample_sided(profile, xs + sg * spacing)
        i0 += wg * (1.0 - sg) * vals
        i1 += wg * sg * vals
    for b in profile.breakpoints:
        pos = (float(b) - origin) / spacing
        k = int(np.floor(pos))
        if abs(pos - round(pos)) <= 1e-6 or k < 0 or k >= n_cells:
            continue
        i0[k], i1[k] = _split_cell_moments(profile, origin + k * spacing,
                                           spacing)
    return i0, i1


def _split_cell_moments(profile, x0: float, spacing: float):
    cuts = [x0] + [float(b) for b in profile.breakpoints
                   if x0 < float(b) < x0 + spacing] + [x0 + spacing]
    m0 = m1 = 0.0
    for a, b in zip(cuts, cuts[1:]):
        frac = (b - a) / spacing
        for sg, wg in zip(_GAUSS_NODES, _GAUSS_WTS):
            x = a + sg * (b - a)
            sigma = (x - x0) / spacing
            _, v, _ = sample_sided(profile, np.array([x]))
            m0 += wg * frac * (1.0 - sigma) * v[0]
            m1 += wg * frac * sigma * v[0]
    return m0, m1


def oracle_solution(measure: BoundedMeasure, profile: PiecewiseFunction,
                    u0: PiecewiseFunction, system: TranslationSystem,
                    t: float, phi: np.ndarray | None = None) -> GridFunction:
    """Oracle value of the perturbed evolution at time t on the grid.

    Free part sampled exactly from the shifted initial profile.  The
    series part integrates the linear interpolant of the renewal weights
    against the exact profile, cell by cell, which is a second-order
    reconstruction with different plumbing (and a different error
    constant) than the engine's sampled trapezoid.
    """
    dt = system.spacing
    if phi is None:
        phi = oracle_weights(measure, profile, u0, t, dt)
    m = len(phi) - 1
    vals = system.sample(u0.translate(t)).values.copy()
    if m > 0:
        i0, i1 = _cell_moments(profile, system.origin, dt,
                               system.count + m - 1)
        newest = phi[m:0:-1]   # weight at the cell edge nearer to time t
        oldest = phi[m - 1::-1]
        vals += dt * (np.correlate(i0, newest, mode="valid")
                      + np.correlate(i1, oldest, mode="valid"))
    return system.make(vals)


def oracle_solve(problem: "TransportProblem", t: float, spacing: float,
                 system: TranslationSystem | None = None):
    """(renewal weights, grid solution) for the problem at time t."""
    if system is None:
        system = make_system(problem, spacing, t, 0.0)
    phi = oracle_weights(problem.measure, problem.profile, problem.initial,
                         t, spacing)
    u_t = oracle_solution(problem.measure, problem.profile, problem.initial,
                          system, t, phi=phi)
    return phi, u_t


# ---------------------------------------------------------------------------
# high-level driver


@dataclasses.dataclass
class TransportProblem:
    """Geometry plus data for a perturbed transport run."""

    measure: BoundedMeasure
    profile: PiecewiseFunction
    initial: PiecewiseFunction
    regularizer: PiecewiseFunction | None = None
    window: CompactInterval = CompactInterval(-3.0, 3.0)

    def guard_product(self, t0: float) -> float:
        return (self.measure.total_variation()
                * float(self.profile.sup_norm()) * t0)

    def jump_table(self):
        """(location, left limit, right limit) at every profile jump."""
        return self.profile.jumps()


def build_rank_one(problem: TransportProblem,
                   require_regularized: bool = True) -> PerturbationOperator:
    """Rank-one operator for the problem; by default insists on having a
    regularizer so the slow cross-check route stays available."""
    if require_regularized and problem.regularizer is None:
        raise ValueError(
            "problem has no regularizer; pass require_regularized=False "
            "to run fast-path only")
    return PerturbationOperator.rank_one(
        problem.measure, problem.profile,
        regularized_profile=problem.regularizer)


def make_system(problem: TransportProblem, spacing: float, t: float,
                t0: float) -> TranslationSystem:
    """Grid sized so the window stays clean for times up to t.

    Left translation pulls values in from the right, so the grid must
    extend ``t + t0`` beyond the window (and past the measure's support)
    on both sides; the origin is snapped to the spacing lattice so that
    lattice-rational atoms land exactly on nodes.
    """
    pts = [float(p) for p in problem.measure.support_points()]
    lo_pt = min([float(problem.window.lo)] + pts)
    hi_pt = max([float(problem.window.hi)] + pts)
    margin = t + t0 + 2 * spacing
    origin = np.floor((lo_pt - margin) / spacing) * spacing
    x_last = np.ceil((hi_pt + margin) / spacing) * spacing
    count = int(round((x_last - origin) / spacing)) + 1
    return TranslationSystem(origin, spacing, count, horizon=t + t0,
                             window=problem.window)


@dataclasses.dataclass
class TransportRun:
    state: GridFunction
    system: TranslationSystem
    operator: PerturbationOperator
    diagnostics: SeriesDiagnostics
    t: float
    t0: float


def run_perturbed(problem: TransportProblem, t: float, spacing: float,
                  t0: float, tol: float = 1e-9,
                  require_regularized: bool = False) -> TransportRun:
    """Drive the Neumann engine on the transport problem.

    Guards on total-variation * sup|profile| * t0 < 1, which certifies
    series convergence; the acceptance configurations sit at 0.4 and 0.6
    of that budget.
    """
    guard = problem.guard_product(t0)
    if guard >= 1.0:
        raise GuardViolation(
            f"guard product {guard:.3f} >= 1 at t0={t0}; shorten the horizon")
    system = make_system(problem, spacing, t, t0)
    op = build_rank_one(problem, require_regularized=require_regularized)
    state, diag = neumann_semigroup(system, op, problem.initial, t, t0,
                                    spacing, tol=tol, diagnostics=True)
    return TransportRun(state, system, op, diag, t, t0)


def engine_vs_oracle(problem: TransportProblem, t: float, spacing: float,
                     t0: float, tol: float = 1e-9) -> dict:
    """Window sup gap between the Neumann engine and the renewal oracle."""
    run = run_perturbed(problem, t, spacing, t0, tol=tol)
    oracle = oracle_solution(problem.measure, problem.profile,
                             problem.initial, run.system, t)
    gap = (run.state - oracle).seminorm(problem.window)
    return {
        "spacing": spacing,
        "gap": float(gap),
        "terms": run.diagnostics.terms_used,
        "segments": run.diagnostics.segments,
    }


def refinement_study(problem: TransportProblem, t: float, spacings,
                     t0: float, tol: float = 1e-11) -> dict:
    """Engine-oracle gaps across grid refinements plus observed orders."""
    rows = [engine_vs_oracle(problem, t, h, t0, tol=tol) for h in spacings]
    orders = []
    for a, b in zip(rows, rows[1:]):
        ratio = a["spacing"] / b["spacing"]
        if b["gap"] == 0:
            orders.append(float("inf"))
        else:
            orders.append(float(np.log(a["gap"] / b["gap"])
                                / np.log(ratio)))
    return {"rows": rows, "orders": orders}


def comparison_curve(problem: TransportProblem, t_values,
                     probes=None, n_steps: int = 128,
                     n_eval: int = 601) -> dict:
    """Short-time comparison constants sup|S(t)u - T(t)u| / t.

    Evaluated straight from the renewal weights on a fixed evaluation
    lattice inside the window, with a fresh time lattice per t, so dyadic
    t values need no common grid.
    """
    if probes is None:
        probes = [problem.initial]
    lo, hi = float(problem.window.lo), float(problem.window.hi)
    xs = np.linspace(lo, hi, n_eval)
    rows = []
    for t in t_values:
        if t <= 0:
            raise ValueError("comparison times must be positive")
        dt = t / n_steps
        worst = 0.0
        for u in probes:
            phi = oracle_weights(problem.measure, problem.profile, u, t, dt)
            m = len(phi) - 1
            acc = np.zeros(n_eval)
            for j in range(m + 1):
                _, g_m, _ = sample_sided(problem.profile,
                                         xs + (m - j) * dt,
                                         snap_tol=1e-9 * dt)
                w = 0.5 if j in (0, m) else 1.0
                acc += w * phi[j] * g_m
            worst = max(worst, float(np.max(np.abs(acc))) * dt)
        rows.append({"t": float(t), "constant": worst / t})
    consts = [r["constant"] for r in rows]
    top = max(consts)
    bot = min(c for c in consts if c > 0) if any(consts) else 0.0
    return {
        "rows": rows,
        "constant": top,
        "stability_ratio": (top / bot) if bot else float("inf"),
    }
