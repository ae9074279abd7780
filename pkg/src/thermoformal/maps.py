"""Circle maps as lifts with exact inverse-branch enumeration.

A map of the circle R/Z is represented by a lift ``F: R -> R`` with
``F(x+1) = F(x) + G`` for an integer degree ``G >= 1``, continuous and
strictly increasing on ``[0, 1]``.  Points live in ``[0, 1)``; all mod-1
reduction happens here and nowhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BranchInversionError, SchemaError

#: Bisection iterations used for branch inversion.  2^-60 < 1e-18, far below
#: the 1e-12 preimage tolerance; the fixed count keeps runs bitwise stable.
_BISECT_ITERS = 60

DEFAULT_CELL_WIDTH = 2.0 ** -20


def circle_dist(x, y):
    """Distance on R/Z: min(|x-y|, 1-|x-y|) after mod-1 reduction."""
    d = np.abs(np.mod(x, 1.0) - np.mod(y, 1.0))
    return np.minimum(d, 1.0 - d)


def wrap01(x):
    """Reduce to the fundamental domain [0, 1)."""
    return np.mod(x, 1.0)


@dataclass(frozen=True)
class MapSpec:
    """A degree-G local homeomorphism of the circle given by its lift.

    ``lift`` and ``derivative`` must accept numpy arrays.  ``alpha`` is the
    Hölder exponent of the map data; ``r`` the C^r degree (``math.inf`` for
    smooth builtins, 0 for Hölder-only maps without derivative data).
    """

    name: str
    degree: int
    lift: Callable[[np.ndarray], np.ndarray]
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    branch_count: int = 0
    alpha: float = 1.0
    r: float = math.inf
    json_kind: str = "builtin"
    json_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.degree < 1 or self.degree != int(self.degree):
            raise ValueError(f"degree must be a positive integer, got {self.degree}")
        if self.branch_count == 0:
            object.__setattr__(self, "branch_count", self.degree)
        g = float(np.asarray(self.lift(1.0)).ravel()[0]) - float(np.asarray(self.lift(0.0)).ravel()[0])
        if abs(g - self.degree) > 1e-9:
            raise ValueError(
                f"lift({self.name}) spans {g} over [0,1], expected degree {self.degree}"
            )

    def __call__(self, x):
        return map_eval(self, x)


def map_eval(m: MapSpec, x):
    """Forward evaluation f(x) = lift(x) mod 1 on [0, 1)."""
    return wrap01(m.lift(wrap01(np.asarray(x, dtype=float))))


def deriv_at(m: MapSpec, x):
    """f'(x) with the argument reduced to the fundamental domain."""
    if m.derivative is None:
        raise ValueError(f"map {m.name} has no derivative data")
    return m.derivative(wrap01(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class InverseBranchPoint:
    """One depth-n preimage y of x with its accumulated contraction factor.

    ``contraction`` is L_n(y): the product of depth-1 branch Lipschitz
    factors (1/f' for C^1 maps) along the orbit y, f(y), ..., f^{n-1}(y).
    """

    x: float
    branch_id: int
    depth: int
    y: float
    contraction: float


@dataclass(frozen=True)
class OrbitSample:
    start: float
    length: int
    birkhoff_value: float


def branch_preimages(m: MapSpec, x):
    """All depth-1 preimages of the points ``x``, ordered by slice index.

    Returns an array of shape (G, len(x)): row k holds the branch-k
    preimage of each point, where branch k solves lift(y) = x + ceil(c - x)
    + k with c = lift(0).  The ordering is increasing in y, which is the
    deterministic per-level slice order used for branch ids.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = m.degree
    c = float(np.asarray(m.lift(0.0)).ravel()[0])
    targets = x + np.ceil(c - x)
    out = np.empty((g, x.size), dtype=float)
    for k in range(g):
        out[k] = _invert_lift(m, targets + k)
    return out


def _invert_lift(m: MapSpec, t):
    """Solve lift(y) = t for y in [0, 1], vectorized, bisection + Newton.

    The lift is strictly increasing, so bisection is certified; a short
    Newton polish (when a derivative exists) lands at machine precision.
    """
    t = np.asarray(t, dtype=float)
    lo = np.zeros_like(t)
    hi = np.ones_like(t)
    flo = m.lift(lo)
    fhi = m.lift(hi)
    bad = (flo - 1e-9 > t) | (fhi + 1e-9 < t)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise BranchInversionError(
            f"target {t.flat[i]} outside lift range [{flo.flat[i]}, {fhi.flat[i]}] "
            f"for map {m.name}: lift violates monotone-degree invariants",
            slice_index=i,
            target=float(t.flat[i]),
        )
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        fm = m.lift(mid)
        left = fm < t
        lo = np.where(left, mid, lo)
        hi = np.where(left, hi, mid)
    y = 0.5 * (lo + hi)
    if m.derivative is not None:
        for _ in range(2):
            d = m.derivative(np.clip(y, 0.0, 1.0))
            step = np.where(d > 0, (m.lift(y) - t) / np.where(d > 0, d, 1.0), 0.0)
            y = np.clip(y - step, 0.0, 1.0)
    return y


def branch_lipschitz(m: MapSpec, y, cell_width=None):
    """Depth-1 branch Lipschitz factor at preimage y.

    1/f'(y) when the map is C^1; otherwise a symmetric difference quotient
    of the lift over the discretization cell (the cell stands in for the
    neighborhood U_x of the branch-domain bound).
    """
    y = np.asarray(y, dtype=float)
    if m.derivative is not None:
        return 1.0 / m.derivative(wrap01(y))
    h = 0.5 * (cell_width if cell_width is not None else DEFAULT_CELL_WIDTH)
    yy = wrap01(y)
    return (2.0 * h) / (m.lift(yy + h) - m.lift(yy - h))


def inverse_branches(m: MapSpec, x, depth, cell_width=None):
    """Enumerate all G^depth preimages of x with contraction factors.

    Branch ids are lexicographic in the per-level slice index: the first
    inversion level (applied to x itself) is the most significant digit of
    the base-G id.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    x0 = float(wrap01(np.asarray(x, dtype=float)))
    pts = np.array([x0])
    contr = np.array([1.0])
    ids = np.array([0], dtype=np.int64)
    g = m.degree
    for _ in range(depth):
        pre = branch_preimages(m, pts)          # (g, len(pts))
        fac = branch_lipschitz(m, pre, cell_width)
        pts = pre.T.reshape(-1)                 # parent-major, slice-minor
        contr = (contr[:, None] * fac.T).reshape(-1)
        ids = (ids[:, None] * g + np.arange(g)[None, :]).reshape(-1)
    return [
        InverseBranchPoint(x=x0, branch_id=int(i), depth=depth,
                           y=float(wrap01(p)), contraction=float(cval))
        for i, p, cval in zip(ids, pts, contr)
    ]


def birkhoff_sum(m: MapSpec, psi, x, n):
    """S_n(psi)(x) = sum_{j<n} psi(f^j x); x may be an array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = wrap01(np.asarray(x, dtype=float))
    total = np.zeros_like(x)
    for _ in range(n):
        total += psi(x)
        x = map_eval(m, x)
    if total.shape == ():
        return float(total)
    return total


def orbit_sample(m: MapSpec, psi, x, n) -> OrbitSample:
    """Birkhoff sum packaged with its orbit metadata."""
    return OrbitSample(start=float(wrap01(np.asarray(x, dtype=float))),
                       length=int(n),
                       birkhoff_value=float(birkhoff_sum(m, psi, x, n)))


def orbit_birkhoff_samples(m: MapSpec, x0, n, psi, rng=None, dither=2.0 ** -48):
    """Birkhoff sums S_n(psi) over a batch of orbits, with low-order dither.

    Each step adds ``dither * u`` (u uniform in [0,1)) before reduction.
    For binary-shift maps the float64 mantissa is exhausted after ~53
    iterations and orbits collapse onto dyadic points; the dither injects
    fresh low-order entropy at amplitude far below any observable scale.
    Pass ``dither=0`` to disable.  Deterministic given ``rng``.
    """
    x = wrap01(np.asarray(x0, dtype=float)).copy()
    total = np.zeros_like(x)
    use_dither = dither > 0 and rng is not None
    for _ in range(n):
        total += psi(x)
        x = m.lift(x)
        if use_dither:
            x += dither * rng.random(x.shape)
        x = wrap01(x)
    return total


def iterate_map(m: MapSpec, power):
    """MapSpec for f^power: composed lift, chain-rule derivative."""
    if power < 1:
        raise ValueError("power must be >= 1")
    if power == 1:
        return m

    def lift(x):
        y = np.asarray(x, dtype=float)
        for _ in range(power):
            y = m.lift(y)
        return y

    deriv = None
    if m.derivative is not None:
        def deriv(x):
            y = wrap01(np.asarray(x, dtype=float))
            d = np.ones_like(y)
            for _ in range(power):
                d = d * m.derivative(y)
                y = wrap01(m.lift(y))
            return d

    return MapSpec(
        name=f"{m.name}^{power}",
        degree=m.degree ** power,
        lift=lift,
        derivative=deriv,
        alpha=m.alpha,
        r=m.r,
        json_kind="iterate",
        json_params={"base": m.name, "power": power},
    )


# ---------------------------------------------------------------------------
# Builtin maps
# ---------------------------------------------------------------------------

def smooth_step(x):
    """C-infinity step: 0 for x<=0, 1 for x>=1, exp(-1/x)-weighted blend inside."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xs = np.where(inside, x, 0.5)
    a = np.exp(-1.0 / xs)
    b = np.exp(-1.0 / (1.0 - xs))
    out = np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, a / (a + b)))
    return out if out.shape else float(out)


def smooth_step_deriv(x):
    """Derivative of :func:`smooth_step`; zero outside (0, 1)."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xs = np.where(inside, x, 0.5)
    a = np.exp(-1.0 / xs)
    b = np.exp(-1.0 / (1.0 - xs))
    val = a * b * (1.0 / xs ** 2 + 1.0 / (1.0 - xs) ** 2) / (a + b) ** 2
    out = np.where(inside, val, 0.0)
    return out if out.shape else float(out)


def doubling_map():
    return MapSpec(
        name="doubling",
        degree=2,
        lift=lambda x: 2.0 * np.asarray(x, dtype=float),
        derivative=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
        json_params={"name": "doubling"},
    )


def rotation_map(theta=0.381966011250105):
    """Rigid rotation: degree-1 isometry, the negative control for (C)."""
    th = float(theta)
    return MapSpec(
        name="rotation",
        degree=1,
        lift=lambda x, t=th: np.asarray(x, dtype=float) + t,
        derivative=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        json_params={"name": "rotation", "theta": th},
    )


def mp_like_map():
    """Degree-2 map with a neutral fixed point at 0: lift(x) = x + step(x).

    f(0)=0, f'(0)=1, f'(x)>1 elsewhere; f' increases on [0,1/2] and
    decreases on [1/2,1], so min f' over [1/4,3/4] sits at the endpoints.
    """
    return MapSpec(
        name="mp_like",
        degree=2,
        lift=lambda x: _periodic_lift(x, lambda u: u + smooth_step(u), 2),
        derivative=lambda x: 1.0 + smooth_step_deriv(wrap01(np.asarray(x, dtype=float))),
        json_params={"name": "mp_like"},
    )


_BUMP_HALFWIDTH = 0.125


def _sink_bump(x):
    """Odd C-infinity bump: x near 0, vanishing outside |x| < 1/8."""
    x = np.asarray(x, dtype=float)
    u = np.abs(x) / _BUMP_HALFWIDTH
    return x * (1.0 - smooth_step(u))


def _sink_bump_deriv(x):
    x = np.asarray(x, dtype=float)
    u = np.abs(x) / _BUMP_HALFWIDTH
    return (1.0 - smooth_step(u)) - u * smooth_step_deriv(u)


def _periodic_lift(x, lift01, degree):
    """Extend a lift given on [0,1] periodically with the stated degree."""
    x = np.asarray(x, dtype=float)
    k = np.floor(x)
    return lift01(x - k) + degree * k


def derived_expanding_map(v):
    """Doubling map deformed near its fixed point 0 by a v-scaled bump.

    lift(x) = 2x - v*g(x mod_pm 1) with g odd, g'(0)=1, supported in
    [-1/8, 1/8] (cutoff by the same smooth step as the MP-like map).
    v=0 is exactly the doubling map; f'(0) = 2 - v, so v>1 turns the fixed
    point into a sink while the map stays expanding outside the bump.
    Requires v < 2 to keep the lift strictly increasing.
    """
    v = float(v)
    if not 0.0 <= v < 2.0:
        raise ValueError(f"derived_expanding requires 0 <= v < 2, got {v}")

    def lift(x, v=v):
        x = np.asarray(x, dtype=float)
        w = x - np.round(x)
        return 2.0 * x - v * _sink_bump(w)

    def deriv(x, v=v):
        x = np.asarray(x, dtype=float)
        w = x - np.round(x)
        return 2.0 - v * _sink_bump_deriv(w)

    return MapSpec(
        name=f"derived_expanding(v={v:g})",
        degree=2,
        lift=lift,
        derivative=deriv,
        json_params={"name": "derived_expanding", "v": v},
    )


def builtin_maps():
    """Catalog of the example maps, keyed by name."""
    return {
        "doubling": doubling_map,
        "rotation": rotation_map,
        "mp_like": mp_like_map,
        "derived_expanding": derived_expanding_map,
    }


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def map_to_json(m: MapSpec):
    if m.json_kind == "builtin":
        return {"name": m.json_params.get("name", m.name), "degree": m.degree,
                "kind": "builtin", "params": {k: val for k, val in m.json_params.items() if k != "name"}}
    return {"name": m.name, "degree": m.degree, "kind": m.json_kind,
            "params": dict(m.json_params)}


def map_from_json(obj):
    """Build a MapSpec from {name, degree?, kind, params}."""
    if not isinstance(obj, dict):
        raise SchemaError("map spec must be an object", "map")
    kind = obj.get("kind", "builtin")
    params = dict(obj.get("params", {}))
    if kind == "builtin":
        name = obj.get("name")
        catalog = builtin_maps()
        if name not in catalog:
            raise SchemaError(f"unknown builtin map {name!r}", "map.name")
        m = catalog[name](**params)
        if "degree" in obj and obj["degree"] != m.degree:
            raise SchemaError(f"declared degree {obj['degree']} != {m.degree}", "map.degree")
        return m
    if kind == "piecewise_poly":
        return piecewise_poly_map(obj.get("name", "piecewise_poly"),
                                  params.get("breakpoints"),
                                  params.get("coefficients"),
                                  int(obj.get("degree", 0)),
                                  holder_only=params.get("smoothness") == "holder")
    raise SchemaError(f"unknown map kind {kind!r}", "map.kind")


def piecewise_poly_map(name, breakpoints, coefficients, degree, holder_only=False):
    """Lift given as a piecewise polynomial on [0,1].

    ``breakpoints`` are the piece edges (first 0, last 1); piece p evaluates
    sum_k coefficients[p][k] * (x - breakpoints[p])^k.  Validated for
    continuity, strict increase on a sample grid, and exact degree span.
    ``holder_only`` drops the derivative, declaring the map as Hölder data
    only (certification then runs in center-value mode).
    """
    bp = np.asarray(breakpoints, dtype=float)
    if bp.ndim != 1 or bp.size < 2 or abs(bp[0]) > 1e-12 or abs(bp[-1] - 1.0) > 1e-12:
        raise SchemaError("breakpoints must run from 0 to 1", "map.params.breakpoints")
    if np.any(np.diff(bp) <= 0):
        raise SchemaError("breakpoints must be strictly increasing", "map.params.breakpoints")
    coefs = [np.asarray(c, dtype=float) for c in coefficients]
    if len(coefs) != bp.size - 1:
        raise SchemaError("need one coefficient row per piece", "map.params.coefficients")

    def lift01(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        p = np.clip(np.searchsorted(bp, u, side="right") - 1, 0, len(coefs) - 1)
        out = np.zeros_like(u)
        for i, c in enumerate(coefs):
            sel = p == i
            if np.any(sel):
                t = u[sel] - bp[i]
                out[sel] = np.polyval(c[::-1], t)
        return out

    def d01(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        p = np.clip(np.searchsorted(bp, u, side="right") - 1, 0, len(coefs) - 1)
        out = np.zeros_like(u)
        for i, c in enumerate(coefs):
            sel = p == i
            if np.any(sel):
                t = u[sel] - bp[i]
                dc = c[1:] * np.arange(1, len(c))
                out[sel] = np.polyval(dc[::-1], t) if dc.size else 0.0
        return out

    # continuity across pieces
    for i in range(1, len(coefs)):
        left = np.polyval(coefs[i - 1][::-1], bp[i] - bp[i - 1])
        right = coefs[i][0]
        if abs(left - right) > 1e-9:
            raise SchemaError(f"discontinuity at breakpoint {bp[i]}", "map.params.coefficients")
    grid = np.linspace(0.0, 1.0, 4097)
    if np.any(d01(grid) <= 0):
        raise SchemaError("piecewise lift must be strictly increasing", "map.params.coefficients")
    span = float((lift01(np.array(1.0)) - lift01(np.array(0.0))).ravel()[0])
    if degree == 0:
        degree = int(round(span))
    json_params = {"breakpoints": bp.tolist(),
                   "coefficients": [c.tolist() for c in coefs]}
    if holder_only:
        json_params["smoothness"] = "holder"
    return MapSpec(
        name=name,
        degree=degree,
        lift=lambda x: _periodic_lift(x, lift01, degree),
        derivative=None if holder_only else (
            lambda x: d01(wrap01(np.asarray(x, dtype=float)))),
        r=0 if holder_only else math.inf,
        json_kind="piecewise_poly",
        json_params=json_params,
    )
