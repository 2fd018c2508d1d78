"""Separation bodies of a polytope with respect to an atomic directional measure.

With mirrored atoms ``u_i`` of weight ``w_i`` the measure of hyperplanes
weakly separating ``K`` from ``x`` is the piecewise-linear convex function

    m(K, x) = 2 * sum_i w_i * max(<x, u_i> - h(K, u_i), 0),

and every quantity here (the minimum of ``m`` over a hyperplane, the
support function of the sublevel set ``{m <= delta}``, boundary points)
is an exact piecewise-linear optimisation over that function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .directional import DirectionalDistribution
from .errors import InvalidBodyError, SolverError
from .geometry import (
    GEOM_TOL,
    HPolytope,
    Hyperplane,
    VPolytope,
    convex_hull_2d,
    lp_support,
    support,
)
from .lp import linprog_max

__all__ = [
    "SeparationQuery",
    "PsiResult",
    "EllipseParams",
    "m_value",
    "psi_value",
    "membership",
    "support_sepbody",
    "boundary_ray",
    "boundary_sweep",
    "k_phi",
    "tangent_vertices",
    "ellipse_params",
    "sepbody_volume",
    "sepbody_mean_width",
]

MEMBERSHIP_TOL = 1e-12
TAU_TOL = 1e-9
PSI_TOL = 1e-10
RAY_TOL = 1e-10


class _Hinges:
    """Cached ``(a_i, b_i, c_i)`` with ``m(x) = sum c_i (a_i.x - b_i)_+``."""

    __slots__ = ("a", "b", "c", "stored", "h_neg")

    def __init__(self, K: VPolytope, phi: DirectionalDistribution):
        if K.dim != phi.dim:
            raise ValueError(f"body dimension {K.dim} != measure dimension {phi.dim}")
        U, W = phi.expanded()
        self.a = U
        self.b = support(K, U)
        self.c = 2.0 * W
        A = len(phi)
        self.stored = A
        self.h_neg = self.b[A:]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return float(self.c @ np.maximum(self.a @ X - self.b, 0.0))
        out = np.empty(len(X))
        step = max(1, 2_000_000 // max(1, len(self.b)))
        for s in range(0, len(X), step):
            Z = X[s:s + step] @ self.a.T - self.b
            np.maximum(Z, 0.0, out=Z)
            out[s:s + step] = Z @ self.c
        return out

    def cut(self, x: np.ndarray) -> tuple[np.ndarray, float, bytes]:
        """Linear piece of ``m`` active at ``x``: ``g.x - r`` with its active-set key."""
        act = self.a @ x - self.b > 0
        g = self.c[act] @ self.a[act]
        r = float(self.c[act] @ self.b[act])
        return g, r, np.packbits(act).tobytes()


@dataclass(frozen=True, eq=False)
class SeparationQuery:
    """A body, a directional measure and a level ``delta >= 0``."""

    K: VPolytope
    phi: DirectionalDistribution
    delta: float
    _hinges: _Hinges = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ValueError("delta must be a finite nonnegative number")
        self.K.require_body()
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "_hinges", _Hinges(self.K, self.phi))

    @property
    def dim(self) -> int:
        return self.K.dim


class PsiResult(NamedTuple):
    value: float
    minimizer: np.ndarray


class EllipseParams(NamedTuple):
    p: np.ndarray
    q: np.ndarray
    axis_sum: float


def _hinges(K, phi) -> _Hinges:
    return _Hinges(K, phi)


def m_value(K: VPolytope, phi: DirectionalDistribution, x) -> float | np.ndarray:
    """Measure of hyperplanes weakly separating ``K`` and ``x``.

    ``x`` may be a single point or an ``(N, d)`` array of points.
    """
    return _hinges(K, phi)(x)


def _psi_line(hg: _Hinges, u: np.ndarray, tau: float) -> PsiResult:
    x0 = tau * u
    v = np.array([-u[1], u[0]])
    alpha = hg.a @ v
    beta = hg.a @ x0 - hg.b
    c = hg.c
    moving = np.abs(alpha) > 1e-15
    al, be, cc = alpha[moving], beta[moving], c[moving]
    bps = -be / al
    order = np.argsort(bps, kind="stable")
    slope = float(cc[al < 0] @ al[al < 0]) + np.cumsum(cc[order] * np.abs(al[order]))
    k = int(np.searchsorted(slope, 0.0, side="left"))
    s_star = float(bps[order][min(k, len(order) - 1)])
    x = x0 + s_star * v
    return PsiResult(hg(x), x)


def _psi_lp(hg: _Hinges, u: np.ndarray, tau: float) -> PsiResult:
    A = hg.stored
    d = hg.a.shape[1]
    a = hg.a[:A]
    hp, hn = hg.b[:A], hg.b[A:]
    cpair = hg.c[:A]
    # variables (x, s); one slack per antipodal pair, at most one side is active
    I = np.eye(A)
    A_ub = np.block([[a, -I], [-a, -I], [np.zeros((A, d)), -I]])
    b_ub = np.concatenate([hp, hn, np.zeros(A)])
    A_eq = np.concatenate([u, np.zeros(A)])[None, :]
    obj = np.concatenate([np.zeros(d), -cpair])
    res = linprog_max(obj, A_ub, b_ub, A_eq, [tau])
    x = res.x[:d]
    x = x + (tau - u @ x) * u
    return PsiResult(hg(x), x)


def psi_value(H: Hyperplane, K: VPolytope, phi: DirectionalDistribution) -> PsiResult:
    """Minimum of ``m(K, .)`` over the hyperplane ``H`` and a point attaining it.

    In the plane the restriction of ``m`` to a line is a one-dimensional sum
    of hinge functions and is minimised exactly by a breakpoint scan; in
    higher dimensions the slack-variable linear program is solved by the
    dense simplex method.
    """
    hg = _hinges(K, phi)
    return _psi(hg, np.asarray(H.u, dtype=float), H.tau)


def _psi(hg: _Hinges, u: np.ndarray, tau: float) -> PsiResult:
    if hg.a.shape[1] == 2:
        return _psi_line(hg, u, tau)
    return _psi_lp(hg, u, tau)


def membership(q: SeparationQuery, x) -> bool | np.ndarray:
    """Whether ``x`` lies in the separation body ``{m <= delta}``."""
    vals = q._hinges(x)
    return vals <= q.delta + MEMBERSHIP_TOL


def k_phi(K: VPolytope, phi: DirectionalDistribution) -> HPolytope:
    """Intersection of the supporting halfspaces of ``K`` with normals among the atoms."""
    U, _ = phi.expanded()
    return HPolytope(U, support(K, U), bounded=True)


def _initial_cuts(hg: _Hinges, u: np.ndarray, delta: float):
    """Single-atom cuts for ``d`` independent atom pairs, which bound the master problem."""
    d = hg.a.shape[1]
    A = hg.stored
    score = -np.abs(hg.a[:A] @ u)
    chosen: list[int] = []
    for i in np.argsort(score, kind="stable"):
        trial = hg.a[chosen + [int(i)]]
        if np.linalg.matrix_rank(trial, tol=1e-8) == len(chosen) + 1:
            chosen.append(int(i))
            if len(chosen) == d:
                break
    rows, rhs = [], []
    for i in chosen:
        for j in (i, i + A):
            rows.append(hg.c[j] * hg.a[j])
            rhs.append(delta + hg.c[j] * hg.b[j])
    return rows, rhs


def _support_lp(q: SeparationQuery, u: np.ndarray, max_iter: int = 500) -> tuple[float, np.ndarray]:
    """Maximise ``<x, u>`` subject to ``m(x) <= delta`` by constraint generation.

    Projecting the slack variables out of the linear program leaves one
    inequality per linear piece of ``m``; pieces are added lazily at the
    current maximiser until it is feasible.  Each master problem is a small
    linear program in ``d`` variables.
    """
    hg = q._hinges
    delta = q.delta
    rows, rhs = _initial_cuts(hg, u, delta)
    seen: set[bytes] = set()
    feas_tol = 1e-13 * max(1.0, delta)
    for _ in range(max_iter):
        res = linprog_max(u, np.array(rows), np.array(rhs))
        x = res.x
        excess = hg(x) - delta
        if excess <= feas_tol:
            return float(u @ x), x
        g, r, key = hg.cut(x)
        if key in seen:
            if excess <= 1e-9 * max(1.0, delta):
                return float(u @ x), x
            raise SolverError("constraint generation stalled on a repeated piece")
        seen.add(key)
        rows.append(g)
        rhs.append(delta + r)
    raise SolverError("constraint generation did not converge")


def _support_bisection(q: SeparationQuery, u: np.ndarray, r_max: float | None = None) -> float:
    hg = q._hinges
    delta = q.delta
    nrm = float(np.linalg.norm(u))
    un = u / nrm
    lo = support(q.K, un)
    width = q.K.diameter() + 1.0
    if r_max is None:
        r_max = 1e6 * width
    hi = lo + width
    while _psi(hg, un, hi).value <= delta + MEMBERSHIP_TOL:
        width *= 2.0
        if width > r_max:
            raise SolverError("could not bracket the support value")
        hi = lo + width
    while hi - lo > TAU_TOL:
        mid = 0.5 * (lo + hi)
        val = _psi(hg, un, mid).value
        if abs(val - delta) <= PSI_TOL:
            lo = hi = mid
            break
        if val <= delta:
            lo = mid
        else:
            hi = mid
    return nrm * 0.5 * (lo + hi)


def support_sepbody(q: SeparationQuery, u, method: str = "lp") -> float:
    """Support function of the separation body in direction ``u``.

    ``method="lp"`` solves ``max <x,u>`` subject to ``m(x) <= delta`` (valid
    for every direction).  ``method="bisection"`` finds the largest ``tau``
    with ``psi(H(u, tau)) <= delta`` by bracketing and bisection; it is the
    independent cross-check for atom directions.  For ``delta == 0`` both
    reduce to the support function of the atom polytope ``K_phi``.
    """
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise ValueError("direction must be nonzero")
    if method == "bisection":
        return _support_bisection(q, u)
    if method != "lp":
        raise ValueError(f"unknown method {method!r}")
    if q.delta == 0.0:
        return lp_support(k_phi(q.K, q.phi), u)
    return _support_lp(q, u)[0]


def boundary_sweep(q: SeparationQuery, o_in, directions, tol: float = RAY_TOL) -> np.ndarray:
    """Boundary points of the separation body along rays from ``o_in``.

    For each unit direction ``v`` returns ``o_in + t v`` where ``t`` is the
    root of ``m(o_in + t v) = delta``, found by doubling then bisection and
    a final secant step; the returned point never lies outside the body.
    """
    if q.delta <= 0:
        raise ValueError("boundary rays need delta > 0")
    hg = q._hinges
    o = np.asarray(o_in, dtype=float)
    if hg(o) > MEMBERSHIP_TOL:
        raise ValueError("ray origin must satisfy m = 0")
    Vd = np.atleast_2d(np.asarray(directions, dtype=float))
    Vd = Vd / np.linalg.norm(Vd, axis=1)[:, None]
    n = len(Vd)
    delta = q.delta
    f = lambda t, idx: hg(o + t[:, None] * Vd[idx])  # noqa: E731

    lo = np.zeros(n)
    m_lo = np.zeros(n)
    hi = np.full(n, q.K.diameter() + 1.0)
    m_hi = f(hi, np.arange(n))
    for _ in range(200):
        grow = m_hi <= delta
        if not grow.any():
            break
        lo[grow], m_lo[grow] = hi[grow], m_hi[grow]
        hi[grow] *= 2.0
        m_hi[grow] = f(hi[grow], np.flatnonzero(grow))
    else:
        raise SolverError("ray never leaves the separation body")

    active = np.arange(n)
    for _ in range(400):
        done = (delta - m_lo[active] <= tol) | (hi[active] - lo[active] <= 1e-15 * hi[active])
        active = active[~done]
        if active.size == 0:
            break
        mid = 0.5 * (lo[active] + hi[active])
        vm = f(mid, active)
        below = vm <= delta
        ia, ib = active[below], active[~below]
        lo[ia], m_lo[ia] = mid[below], vm[below]
        hi[ib], m_hi[ib] = mid[~below], vm[~below]

    # m is piecewise linear along the ray, so a secant step is exact inside one piece
    denom = m_hi - m_lo
    ok = denom > 0
    ts = lo.copy()
    ts[ok] = lo[ok] + (delta - m_lo[ok]) * (hi[ok] - lo[ok]) / denom[ok]
    ms = f(ts, np.arange(n))
    better = ok & (ms <= delta + 1e-13) & (np.abs(ms - delta) < delta - m_lo) & (ts >= lo)
    t = np.where(better, ts, lo)
    t_final = np.where(f(t, np.arange(n)) <= delta + MEMBERSHIP_TOL, t, lo)
    return o + t_final[:, None] * Vd


def boundary_ray(q: SeparationQuery, o_in, v, tol: float = RAY_TOL) -> np.ndarray:
    """The point where the ray ``o_in + t v`` (``t > 0``) leaves the separation body."""
    return boundary_sweep(q, o_in, [v], tol)[0]


# ---------------------------------------------------------------- planar example

def _outside_2d(H: np.ndarray, x: np.ndarray) -> bool:
    E = np.roll(H, -1, axis=0) - H
    cr = E[:, 0] * (x[1] - H[:, 1]) - E[:, 1] * (x[0] - H[:, 0])
    return bool(cr.min() < -GEOM_TOL * max(1.0, float(np.abs(H).max())))


def tangent_vertices(K: VPolytope, x) -> tuple[np.ndarray, np.ndarray]:
    """Vertices touched by the two support lines of a planar polygon through ``x``.

    ``p`` has the polygon on the right of the ray ``x -> p`` and ``q`` on the
    left, so the boundary arc facing ``x`` runs counter-clockwise from ``p``
    to ``q``.  When ``x`` is collinear with an edge the vertex farther from
    ``x`` is used.
    """
    if K.dim != 2:
        raise ValueError("tangent_vertices is planar only")
    x = np.asarray(x, dtype=float)
    H = convex_hull_2d(K.vertices)
    if len(H) < 3 or not _outside_2d(H, x):
        raise InvalidBodyError("x must lie outside the polygon")
    D = H - x
    cr = D[:, None, 0] * D[None, :, 1] - D[:, None, 1] * D[None, :, 0]
    scale = float(np.abs(D).max()) ** 2
    eps = 1e-12 * scale
    dist = np.linalg.norm(D, axis=1)
    right = np.flatnonzero(np.all(cr <= eps, axis=1))
    left = np.flatnonzero(np.all(cr >= -eps, axis=1))
    p = H[right[np.argmax(dist[right])]]
    q = H[left[np.argmax(dist[left])]]
    return p, q


def _arc_length(H: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    ip = int(np.argmin(np.linalg.norm(H - p, axis=1)))
    iq = int(np.argmin(np.linalg.norm(H - q, axis=1)))
    n = len(H)
    total, k = 0.0, ip
    while k != iq:
        total += float(np.linalg.norm(H[(k + 1) % n] - H[k]))
        k = (k + 1) % n
    return total


def ellipse_params(K: VPolytope, x, delta: float, phi: DirectionalDistribution | None = None) -> EllipseParams:
    """Foci and axis sum of the ellipse carrying the boundary arc in the region of ``x``.

    Within one region the tangent vertices ``p, q`` are fixed and the
    perimeter of ``conv(K ∪ {y})`` is ``L(K) - arc(p, q) + |y-p| + |y-q|``;
    with the uniform measure ``m = (L(K^y) - L(K)) / pi``, so the level set
    ``m = delta`` is ``|y-p| + |y-q| = pi * delta + arc(p, q)``.
    """
    if phi is not None and phi.kind != "sigma":
        raise ValueError("the elliptic-arc structure needs a uniform (sigma) measure")
    p, q = tangent_vertices(K, x)
    H = convex_hull_2d(K.vertices)
    return EllipseParams(p, q, math.pi * delta + _arc_length(H, p, q))


# ---------------------------------------------------------------- functionals of the body

def sepbody_volume(q: SeparationQuery, *, n_rays: int = 4096, grid: int = 96) -> float:
    """Volume of the separation body.

    Planar bodies: shoelace area of the boundary polygon from a ray sweep
    about the centroid of ``K`` (inscribed, so a slight underestimate).
    Three-dimensional bodies: midpoint membership count on a grid over the
    bounding box.
    """
    o = q.K.centroid
    if q.dim == 2:
        if q.delta == 0:
            from .geometry import halfspace_intersection, volume

            box = 2 * (q.K.diameter() + 1.0)
            return volume(halfspace_intersection(k_phi(q.K, q.phi), box, o).polytope)
        ang = 2 * np.pi * np.arange(n_rays) / n_rays
        pts = boundary_sweep(q, o, np.column_stack([np.cos(ang), np.sin(ang)]))
        x, y = pts[:, 0], pts[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
    if q.dim != 3:
        raise ValueError("volume is implemented for d = 2 and d = 3")
    E = np.eye(3)
    hi = np.array([support_sepbody(q, e) for e in E])
    lo = -np.array([support_sepbody(q, -e) for e in E])
    axes = [lo[j] + (np.arange(grid) + 0.5) * (hi[j] - lo[j]) / grid for j in range(3)]
    cell = float(np.prod((hi - lo) / grid))
    count = 0
    for xv in axes[0]:
        Y, Z = np.meshgrid(axes[1], axes[2], indexing="ij")
        P = np.column_stack([np.full(Y.size, xv), Y.ravel(), Z.ravel()])
        count += int(np.count_nonzero(membership(q, P)))
    return count * cell


def sepbody_mean_width(q: SeparationQuery, quad: DirectionalDistribution) -> float:
    """``2 * sum_j w_j h(K[phi, delta], u_j)`` over the mirrored nodes of ``quad``."""
    U, W = quad.expanded()
    h = np.array([support_sepbody(q, u) for u in U])
    return 2.0 * float(W @ h)
