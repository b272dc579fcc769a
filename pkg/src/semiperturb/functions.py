"""Scalar function spaces used by the perturbation laboratory.

Two concrete representations:

* :class:`PiecewiseFunction` -- exact piecewise polynomials on half-open
  pieces ``(a, b]``, closed under add/scale/multiply/translate and with
  exact integration.  Coefficient arithmetic is scalar-generic: feed it
  floats for ordinary numerics or :class:`fractions.Fraction` throughout
  to get exact rational results (the domain checks rely on this).
* :class:`GridFunction` -- uniform-grid samples with a declared extension
  rule, the working representation for semigroup trajectories.

A :class:`BoundedMeasure` (finite atoms plus an optional compactly
supported piecewise-polynomial density) pairs against both.
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np


# ---------------------------------------------------------------------------
# polynomial helpers, ascending coefficients, scalar-generic


def poly_eval(coeffs, x):
    """Horner evaluation of ``sum(c[k] * x**k)``."""
    acc = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = acc * x + c
    return acc


def poly_derivative(coeffs):
    if len(coeffs) <= 1:
        return [0 * coeffs[0]] if coeffs else [0]
    return [k * c for k, c in enumerate(coeffs)][1:]


def poly_antiderivative(coeffs):
    # constant of integration zero; exact for Fraction inputs
    out = [0 * coeffs[0]]
    for k, c in enumerate(coeffs):
        out.append(c / (k + 1) if isinstance(c, Fraction) else c / (k + 1))
    return out


def poly_add(a, b):
    n = max(len(a), len(b))
    a = list(a) + [0] * (n - len(a))
    b = list(b) + [0] * (n - len(b))
    return [x + y for x, y in zip(a, b)]


def poly_scale(coeffs, s):
    return [s * c for c in coeffs]


def poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            out[i + j] = out[i + j] + ai * bj
    return out


def poly_shift(coeffs, s):
    """Coefficients of ``p(x + s)``; binomial expansion, exact on rationals."""
    n = len(coeffs)
    out = [0 * coeffs[0]] * n
    for k, c in enumerate(coeffs):
        if c == 0:
            continue
        for j in range(k + 1):
            out[j] = out[j] + c * comb(k, j) * s ** (k - j)
    return out


def _poly_extrema_candidates(coeffs, lo, hi):
    """Points in [lo, hi] where |p| can attain its max (floats only)."""
    pts = [float(lo), float(hi)]
    d = poly_derivative([float(c) for c in coeffs])
    if any(c != 0 for c in d) and len(d) > 1:
        roots = np.roots(list(reversed(d)))
        for r in roots:
            if abs(r.imag) < 1e-12 and lo < r.real < hi:
                pts.append(float(r.real))
    return pts


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompactInterval:
    """Closed bounded interval [lo, hi], the index set for seminorms."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval: [{self.lo}, {self.hi}]")

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    @property
    def length(self):
        return self.hi - self.lo


class PiecewiseFunction:
    """Piecewise polynomial with half-open pieces.

    ``breakpoints = [b_1 < ... < b_m]`` splits the line into
    ``(-inf, b_1], (b_1, b_2], ..., (b_m, inf)``; ``pieces[i]`` holds the
    ascending coefficients of the polynomial on piece ``i``.  Evaluation at
    a breakpoint uses the piece whose half-open interval contains it, i.e.
    the left piece, so ``eval`` returns left limits at discontinuities.
    The two unbounded pieces must be constants so the function is bounded.
    """

    def __init__(self, breakpoints, pieces):
        breakpoints = list(breakpoints)
        pieces = [list(p) for p in pieces]
        if len(pieces) != len(breakpoints) + 1:
            raise ValueError("need len(pieces) == len(breakpoints) + 1")
        if any(b2 <= b1 for b1, b2 in zip(breakpoints, breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if not pieces[0] or not pieces[-1]:
            raise ValueError("empty coefficient list")
        for p in (pieces[0], pieces[-1]):
            if any(c != 0 for c in p[1:]):
                raise ValueError("unbounded pieces must be constant")
        self.breakpoints = breakpoints
        self.pieces = pieces

    @classmethod
    def constant(cls, c):
        return cls([], [[c]])

    # -- evaluation ---------------------------------------------------

    def _piece_index(self, x, side="left"):
        if side == "left":
            return bisect_left(self.breakpoints, x)
        return bisect_right(self.breakpoints, x)

    def eval(self, x):
        """Value at x under the half-open convention (left limit at jumps)."""
        return poly_eval(self.pieces[self._piece_index(x)], x)

    def __call__(self, x):
        return self.eval(x)

    def one_sided_limit(self, x, side):
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        return poly_eval(self.pieces[self._piece_index(x, side)], x)

    def eval_mid(self, x):
        """Average of the one-sided limits; the quadrature sampling value."""
        lo = self.one_sided_limit(x, "left")
        hi = self.one_sided_limit(x, "right")
        return (lo + hi) / 2

    def one_sided_derivative(self, x, side):
        coeffs = self.pieces[self._piece_index(x, side)]
        return poly_eval(poly_derivative(coeffs), x)

    # -- calculus -----------------------------------------------------

    def derivative(self) -> "PiecewiseFunction":
        pieces = [poly_derivative(p) for p in self.pieces]
        return PiecewiseFunction(self.breakpoints, pieces)

    def definite_integral(self, a, b):
        """Exact integral over [a, b] (jumps are null sets, sides ignored)."""
        if b < a:
            return -self.definite_integral(b, a)
        total = 0
        cuts = [a] + [c for c in self.breakpoints if a < c < b] + [b]
        for lo, hi in zip(cuts, cuts[1:]):
            anti = poly_antiderivative(self.pieces[self._piece_index(hi)])
            total = total + poly_eval(anti, hi) - poly_eval(anti, lo)
        return total

    def integral_abs(self, a, b) -> float:
        """Integral of |f| over [a, b]; splits at sign changes (float)."""
        total = 0.0
        cuts = [a] + [c for c in self.breakpoints if a < c < b] + [b]
        for lo, hi in zip(cuts, cuts[1:]):
            coeffs = [float(c) for c in self.pieces[self._piece_index(hi)]]
            marks = [float(lo), float(hi)]
            if len(coeffs) > 1:
                for r in np.roots(list(reversed(coeffs))):
                    if abs(r.imag) < 1e-12 and lo < r.real < hi:
                        marks.append(float(r.real))
            marks.sort()
            anti = poly_antiderivative(coeffs)
            for u, v in zip(marks, marks[1:]):
                total += abs(poly_eval(anti, v) - poly_eval(anti, u))
        return total

    # -- algebra ------------------------------------------------------

    def _merged_with(self, other):
        cuts = sorted(set(self.breakpoints) | set(other.breakpoints))
        return cuts

    def _coeffs_on(self, cuts, j):
        # representative point of merged piece j: its right endpoint, or
        # anything beyond the last cut for the unbounded tail
        rep = cuts[j] if j < len(cuts) else (cuts[-1] + 1 if cuts else 0)
        return self.pieces[self._piece_index(rep)]

    def __add__(self, other):
        if not isinstance(other, PiecewiseFunction):
            return NotImplemented
        cuts = self._merged_with(other)
        pieces = [
            poly_add(self._coeffs_on(cuts, j), other._coeffs_on(cuts, j))
            for j in range(len(cuts) + 1)
        ]
        return PiecewiseFunction(cuts, pieces)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, s) -> "PiecewiseFunction":
        return PiecewiseFunction(self.breakpoints, [poly_scale(p, s) for p in self.pieces])

    def __mul__(self, other):
        if isinstance(other, PiecewiseFunction):
            cuts = self._merged_with(other)
            pieces = [
                poly_mul(self._coeffs_on(cuts, j), other._coeffs_on(cuts, j))
                for j in range(len(cuts) + 1)
            ]
            return PiecewiseFunction(cuts, pieces)
        return self.scale(other)

    __rmul__ = __mul__

    def translate(self, dx) -> "PiecewiseFunction":
        """The function x -> f(x + dx)."""
        cuts = [b - dx for b in self.breakpoints]
        pieces = [poly_shift(p, dx) for p in self.pieces]
        return PiecewiseFunction(cuts, pieces)

    # -- norms and jump structure ------------------------------------

    def sup_norm(self) -> float:
        """Exact sup of |f|: piece maxima plus one-sided limits at breaks."""
        best = 0.0
        m = len(self.breakpoints)
        for i, coeffs in enumerate(self.pieces):
            if i == 0 or i == m:
                best = max(best, abs(float(coeffs[0])))
                continue
            lo, hi = self.breakpoints[i - 1], self.breakpoints[i]
            for x in _poly_extrema_candidates(coeffs, lo, hi):
                best = max(best, abs(float(poly_eval([float(c) for c in coeffs], x))))
        return best

    def seminorm(self, K: CompactInterval) -> float:
        """sup of |f| over K (one-sided limits included where approached)."""
        best = 0.0
        m = len(self.breakpoints)
        for i, coeffs in enumerate(self.pieces):
            lo = -np.inf if i == 0 else float(self.breakpoints[i - 1])
            hi = np.inf if i == m else float(self.breakpoints[i])
            # half-open (lo, hi] meets [K.lo, K.hi] iff K.hi > lo and K.lo <= hi
            if not (K.hi > lo and K.lo <= hi):
                continue
            a, b = max(lo, K.lo), min(hi, K.hi)
            fl = [float(c) for c in coeffs]
            for x in _poly_extrema_candidates(fl, a, b):
                best = max(best, abs(float(poly_eval(fl, x))))
        return best

    def jumps(self):
        """(x, left_limit, right_limit) at every genuine discontinuity."""
        out = []
        for b in self.breakpoints:
            lo = self.one_sided_limit(b, "left")
            hi = self.one_sided_limit(b, "right")
            if lo != hi:
                out.append((b, lo, hi))
        return out

    def derivative_jumps(self):
        """(x, left_slope, right_slope) where the derivative jumps."""
        out = []
        for b in self.breakpoints:
            lo = self.one_sided_derivative(b, "left")
            hi = self.one_sided_derivative(b, "right")
            if lo != hi:
                out.append((b, lo, hi))
        return out

    def is_continuous(self) -> bool:
        return not self.jumps()

    def support_bounds(self):
        """Outermost breakpoints; beyond them the function is constant."""
        if not self.breakpoints:
            return (0.0, 0.0)
        return (self.breakpoints[0], self.breakpoints[-1])


# ---------------------------------------------------------------------------


class GridFunction:
    """Samples on the uniform grid ``origin + spacing * k``.

    ``extension`` says how values beyond the grid are read: ``"constant"``
    continues the edge values, ``"zero"`` reads 0.  Off-node evaluation is
    linear interpolation.
    """

    __slots__ = ("origin", "spacing", "values", "extension")

    def __init__(self, origin, spacing, values, extension="constant"):
        if spacing <= 0:
            raise ValueError("spacing must be positive")
        if extension not in ("constant", "zero"):
            raise ValueError(f"unknown extension rule: {extension!r}")
        self.origin = float(origin)
        self.spacing = float(spacing)
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 2:
            raise ValueError("values must be a 1-d array with >= 2 samples")
        self.extension = extension

    @property
    def count(self) -> int:
        return self.values.size

    @property
    def x_last(self) -> float:
        return self.origin + self.spacing * (self.count - 1)

    def nodes(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.count)

    def same_grid(self, other: "GridFunction") -> bool:
        return (
            self.count == other.count
            and abs(self.origin - other.origin) <= 1e-12 * max(1.0, abs(self.origin))
            and abs(self.spacing - other.spacing) <= 1e-12 * self.spacing
        )

    def _require_same_grid(self, other):
        if not self.same_grid(other):
            raise ValueError("grid mismatch")

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.origin, self.spacing, values, self.extension)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.nodes(), self.values)
        if self.extension == "zero":
            out = np.where((x < self.origin) | (x > self.x_last), 0.0, out)
        return out if out.ndim else float(out)

    def __call__(self, x):
        return self.eval(x)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def seminorm(self, K: CompactInterval) -> float:
        xs = self.nodes()
        mask = (xs >= K.lo) & (xs <= K.hi)
        cand = [abs(self.eval(K.lo)), abs(self.eval(K.hi))]
        if mask.any():
            cand.append(float(np.max(np.abs(self.values[mask]))))
        return max(cand)

    def __add__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        self._require_same_grid(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        self._require_same_grid(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, s):
        return self.with_values(self.values * float(s))

    __rmul__ = __mul__

    def to_csv(self, fh) -> None:
        """Write (x, value) rows; comma separated, '.' decimals, header."""
        close = False
        if isinstance(fh, (str, bytes)):
            fh = open(fh, "w")
            close = True
        try:
            fh.write("x,value\n")
            for x, v in zip(self.nodes(), self.values):
                fh.write(f"{x:.17g},{v:.17g}\n")
        finally:
            if close:
                fh.close()

    @classmethod
    def from_csv(cls, fh, extension="constant") -> "GridFunction":
        close = False
        if isinstance(fh, (str, bytes)):
            fh = open(fh)
            close = True
        try:
            header = fh.readline().strip()
            if header != "x,value":
                raise ValueError(f"bad header: {header!r}")
            xs, vs = [], []
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                a, b = line.split(",")
                xs.append(float(a))
                vs.append(float(b))
        finally:
            if close:
                fh.close()
        if len(xs) < 2:
            raise ValueError("need at least two samples")
        spacing = xs[1] - xs[0]
        steps = np.diff(xs)
        if np.max(np.abs(steps - spacing)) > 1e-9 * max(abs(spacing), 1.0):
            raise ValueError("non-uniform grid in CSV")
        return cls(xs[0], spacing, vs, extension)


def to_grid(f: PiecewiseFunction, origin, spacing, count, extension="constant") -> GridFunction:
    """Sample a piecewise function on a uniform grid (left-limit values)."""
    xs = float(origin) + float(spacing) * np.arange(count)
    vals = np.array([float(f.eval(float(x))) for x in xs])
    return GridFunction(origin, spacing, vals, extension)


# ---------------------------------------------------------------------------


class BoundedMeasure:
    """Finite signed measure: atoms plus an optional compact density.

    ``atoms`` is a sequence of ``(location, weight)`` pairs; ``density`` a
    PiecewiseFunction that must vanish on its unbounded pieces.  Pairing
    integrates exactly against piecewise polynomials and against the
    linear interpolant of grid functions.
    """

    def __init__(self, atoms=(), density: PiecewiseFunction | None = None):
        self.atoms = [(loc, w) for loc, w in atoms]
        if density is not None:
            if density.pieces[0][0] != 0 or density.pieces[-1][0] != 0:
                raise ValueError("density must have compact support")
        self.density = density
        self._weight_cache = {}

    @classmethod
    def dirac(cls, location, weight=1) -> "BoundedMeasure":
        return cls(atoms=[(location, weight)])

    def total_variation(self) -> float:
        tv = float(sum(abs(float(w)) for _, w in self.atoms))
        if self.density is not None:
            a, b = self.density.support_bounds()
            tv += self.density.integral_abs(a, b)
        return tv

    def pair(self, f):
        """Integral of f against the measure.

        Exact for PiecewiseFunction arguments (rational in, rational out);
        for GridFunction arguments the density is integrated exactly
        against the linear interpolant via precomputed node weights.
        """
        if isinstance(f, PiecewiseFunction):
            total = 0
            for loc, w in self.atoms:
                total = total + w * f.eval(loc)
            if self.density is not None:
                prod = self.density * f
                a, b = self.density.support_bounds()
                total = total + prod.definite_integral(a, b)
            return total
        if isinstance(f, GridFunction):
            total = 0.0
            for loc, w in self.atoms:
                total += float(w) * f.eval(float(loc))
            if self.density is not None:
                total += float(np.dot(self._density_weights(f), f.values))
                total += self._density_tails(f)
            return total
        raise TypeError(f"cannot pair with {type(f).__name__}")

    def _density_weights(self, f: GridFunction) -> np.ndarray:
        key = (f.origin, f.spacing, f.count)
        w = self._weight_cache.get(key)
        if w is None:
            w = _density_node_weights(self.density, f)
            self._weight_cache[key] = w
        return w

    def _density_tails(self, f: GridFunction) -> float:
        # density mass outside the grid hits the extension values
        d = self.density
        a, b = d.support_bounds()
        out = 0.0
        if a < f.origin:
            mass = float(d.definite_integral(a, min(b, f.origin)))
            out += mass * (f.values[0] if f.extension == "constant" else 0.0)
        if b > f.x_last:
            mass = float(d.definite_integral(max(a, f.x_last), b))
            out += mass * (f.values[-1] if f.extension == "constant" else 0.0)
        return out

    def support_points(self):
        pts = [float(loc) for loc, _ in self.atoms]
        if self.density is not None:
            pts.extend(float(b) for b in self.density.breakpoints)
        return pts


def _density_node_weights(density: PiecewiseFunction, f: GridFunction) -> np.ndarray:
    """W with integral(density * interp(f)) == dot(W, f.values), exact."""
    w = np.zeros(f.count)
    a, b = density.support_bounds()
    lo_i = max(0, int(np.floor((a - f.origin) / f.spacing)))
    hi_i = min(f.count - 1, int(np.ceil((b - f.origin) / f.spacing)))
    for i in range(lo_i, hi_i):
        x0 = f.origin + i * f.spacing
        x1 = x0 + f.spacing
        # hat contributions: (x1 - x)/dx toward node i, (x - x0)/dx toward i+1
        up = PiecewiseFunction([x0, x1], [[0], [-x0 / f.spacing, 1.0 / f.spacing], [0]])
        mass = float((density * up).definite_integral(x0, x1))
        cell = float(density.definite_integral(x0, x1))
        w[i + 1] += mass
        w[i] += cell - mass
    return w


def sample_sided(f: PiecewiseFunction, xs, snap_tol=0.0):
    """Vectorized (left, mid, right) limit samples of f at the points xs.

    Points within ``snap_tol`` of a breakpoint are treated as exact hits so
    that one-sided limits and the jump midpoint are taken there; this is
    what quadrature rules need when a discontinuity sits on (or within
    float rounding of) a sample lattice.  Away from breakpoints all three
    values coincide with ``f.eval``.
    """
    xs = np.asarray(xs, dtype=float)
    breaks = np.array([float(b) for b in f.breakpoints])
    xeff = xs.copy()
    if snap_tol > 0 and breaks.size:
        j = np.clip(np.searchsorted(breaks, xs), 0, breaks.size - 1)
        for cand in (j, np.maximum(j - 1, 0)):
            b = breaks[cand]
            hit = np.abs(xs - b) <= snap_tol
            xeff = np.where(hit, b, xeff)
    il = np.searchsorted(breaks, xeff, side="left")
    ir = np.searchsorted(breaks, xeff, side="right")
    left = np.empty_like(xeff)
    right = np.empty_like(xeff)
    for idx, out in ((il, left), (ir, right)):
        for piece in np.unique(idx):
            mask = idx == piece
            coeffs = [float(c) for c in f.pieces[piece]]
            out[mask] = np.polyval(list(reversed(coeffs)), xeff[mask])
    return left, 0.5 * (left + right), right


# ---------------------------------------------------------------------------
# stock profiles


def tent() -> PiecewiseFunction:
    """The unit tent: x+1 on (-1,0], 1-x on (0,1], zero outside."""
    return PiecewiseFunction([-1, 0, 1], [[0], [1, 1], [1, -1], [0]])


def three_jump_profile() -> PiecewiseFunction:
    """Discontinuous profile x on (-1,0], 2-x on (0,1], zero outside.

    Equals tent() minus its derivative piece-by-piece; jump gaps at
    (-1, 0, 1) are (-1, 2, -1).
    """
    return PiecewiseFunction([-1, 0, 1], [[0], [0, 1], [2, -1], [0]])


# ---------------------------------------------------------------------------
# JSON round trip


def piecewise_to_dict(f: PiecewiseFunction) -> dict:
    return {
        "breakpoints": [float(b) for b in f.breakpoints],
        "pieces": [[float(c) for c in p] for p in f.pieces],
    }


def piecewise_from_dict(d: dict) -> PiecewiseFunction:
    return PiecewiseFunction(d["breakpoints"], d["pieces"])


def measure_to_dict(mu: BoundedMeasure) -> dict:
    return {
        "atoms": [[float(loc), float(w)] for loc, w in mu.atoms],
        "density": None if mu.density is None else piecewise_to_dict(mu.density),
    }


def measure_from_dict(d: dict) -> BoundedMeasure:
    density = d.get("density")
    return BoundedMeasure(
        atoms=[(loc, w) for loc, w in d.get("atoms", [])],
        density=None if density is None else piecewise_from_dict(density),
    )


def dump_json(obj, fh) -> None:
    json.dump(obj, fh, indent=2, sort_keys=False)
