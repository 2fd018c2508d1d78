"""Finite-dimensional convex geometry on vertex and halfspace polytopes.

Bodies are stored as vertex sets (``VPolytope``); random cells are stored as
halfspace lists (``HPolytope``) and converted to vertex form by incremental
clipping of a window polytope.  Everything downstream of this module only
ever needs support-function evaluations, which are exact on vertex sets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateCellError, EmptyCellError, InvalidBodyError
from .lp import linprog_max

UNIT_TOL = 1e-12
GEOM_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _unit(u, what: str = "normal") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    nrm = np.linalg.norm(u)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ValueError(f"{what} must be a finite nonzero vector")
    return u / nrm


def canonical_sign(u: np.ndarray, tol: float = UNIT_TOL) -> float:
    """+1 if the first coordinate of ``u`` exceeding ``tol`` in size is positive."""
    for c in u:
        if abs(c) > tol:
            return 1.0 if c > 0 else -1.0
    return 1.0


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """``{x : <x, u> = tau}`` with a unit normal ``u``."""

    u: np.ndarray
    tau: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
            raise ValueError("hyperplane normal must have unit length")
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "tau", float(self.tau))

    @classmethod
    def through(cls, u, tau) -> "Hyperplane":
        """Build from a possibly non-unit normal, rescaling the offset."""
        u = np.asarray(u, dtype=float)
        nrm = np.linalg.norm(u)
        return cls(u / nrm, float(tau) / nrm)

    def canonical(self) -> "Hyperplane":
        s = canonical_sign(self.u)
        return Hyperplane(s * self.u, s * self.tau)

    def __eq__(self, other):
        if not isinstance(other, Hyperplane):
            return NotImplemented
        a, b = self.canonical(), other.canonical()
        return bool(np.allclose(a.u, b.u, atol=GEOM_TOL) and abs(a.tau - b.tau) <= GEOM_TOL)

    def __hash__(self):
        c = self.canonical()
        return hash((tuple(np.round(c.u, 9)), round(c.tau, 9)))


@dataclass(frozen=True, eq=False)
class Halfspace:
    """``{x : <x,u> <= tau}`` or ``{x : <x,u> >= tau}``."""

    u: np.ndarray
    tau: float
    orientation: str = "<="

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
            raise ValueError("halfspace normal must have unit length")
        if self.orientation not in ("<=", ">="):
            raise ValueError(f"orientation must be '<=' or '>=', got {self.orientation!r}")
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "tau", float(self.tau))

    def leq_form(self) -> tuple[np.ndarray, float]:
        """Return ``(a, b)`` with the halfspace equal to ``{x : <a,x> <= b}``."""
        if self.orientation == "<=":
            return np.asarray(self.u), self.tau
        return -np.asarray(self.u), -self.tau

    def contains(self, x, tol: float = GEOM_TOL) -> bool:
        a, b = self.leq_form()
        return float(np.dot(a, x)) <= b + tol


class VPolytope:
    """Convex hull of a finite, nonempty vertex set.

    ``faces`` is an optional list of vertex-index cycles (outward
    counter-clockwise) supplied by halfspace clipping in 3D; it only serves
    to speed up volume computations.
    """

    __slots__ = ("vertices", "faces")

    def __init__(self, vertices, faces: Sequence[Sequence[int]] | None = None):
        V = np.array(vertices, dtype=float)
        if V.ndim == 1:
            V = V[None, :]
        if V.ndim != 2 or V.shape[0] == 0:
            raise InvalidBodyError("a polytope needs at least one vertex")
        if V.shape[1] < 2:
            raise InvalidBodyError("ambient dimension must be at least 2")
        if not np.all(np.isfinite(V)):
            raise InvalidBodyError("vertex coordinates must be finite")
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "faces", None if faces is None else tuple(tuple(f) for f in faces))

    def __setattr__(self, name, value):
        raise AttributeError("VPolytope is immutable")

    def __reduce__(self):
        return (VPolytope, (self.vertices, self.faces))

    def __repr__(self):
        return f"VPolytope(dim={self.dim}, n_vertices={len(self.vertices)})"

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def centroid(self) -> np.ndarray:
        """Mean of the vertex set (an interior point of full-dimensional bodies)."""
        return self.vertices.mean(axis=0)

    def affine_rank(self, tol: float = GEOM_TOL) -> int:
        if len(self.vertices) == 1:
            return 0
        D = self.vertices - self.vertices[0]
        s = np.linalg.svd(D, compute_uv=False)
        scale = max(1.0, float(np.abs(self.vertices).max()))
        return int(np.sum(s > tol * scale))

    @property
    def is_full_dimensional(self) -> bool:
        return self.affine_rank() == self.dim

    def require_body(self) -> "VPolytope":
        """Return self, raising unless the interior is nonempty."""
        if not self.is_full_dimensional:
            raise InvalidBodyError("body must have interior points (affine hull = R^d)")
        return self

    def translate(self, t) -> "VPolytope":
        return VPolytope(self.vertices + np.asarray(t, dtype=float), self.faces)

    def scale(self, s: float) -> "VPolytope":
        return VPolytope(self.vertices * s, self.faces)

    def reflect(self) -> "VPolytope":
        return VPolytope(-self.vertices, self.faces)

    def diameter(self) -> float:
        V = self.vertices
        if len(V) > 2000:
            V = V[np.unique(np.argmax(V @ np.eye(self.dim), axis=0))]
        diff = V[:, None, :] - V[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())


class HPolytope:
    """Intersection of halfspaces, kept in the normal form ``A x <= b``.

    Rows of ``A`` are unit normals.  ``bounded`` records the outcome of a
    boundedness check (window halfspaces included) and is never inferred.
    """

    __slots__ = ("A", "b", "bounded")

    def __init__(self, A, b, bounded: bool = False):
        A = np.atleast_2d(np.array(A, dtype=float))
        b = np.array(b, dtype=float).ravel()
        if A.shape[0] == 0 or A.shape[0] != b.size:
            raise ValueError("an HPolytope needs matching, nonempty A and b")
        nrm = np.linalg.norm(A, axis=1)
        if np.any(nrm == 0):
            raise ValueError("halfspace normals must be nonzero")
        A, b = A / nrm[:, None], b / nrm
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "bounded", bool(bounded))

    def __setattr__(self, name, value):
        raise AttributeError("HPolytope is immutable")

    def __reduce__(self):
        return (HPolytope, (self.A, self.b, self.bounded))

    def __repr__(self):
        return f"HPolytope(dim={self.dim}, n_halfspaces={len(self.b)}, bounded={self.bounded})"

    @classmethod
    def from_halfspaces(cls, hs: Sequence[Halfspace], bounded: bool = False) -> "HPolytope":
        rows = [h.leq_form() for h in hs]
        return cls([r[0] for r in rows], [r[1] for r in rows], bounded)

    @property
    def halfspaces(self) -> tuple[Halfspace, ...]:
        return tuple(Halfspace(a, t) for a, t in zip(self.A, self.b))

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def contains(self, x, tol: float = GEOM_TOL) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        vals = x @ self.A.T - self.b
        inside = np.all(vals <= tol, axis=-1)
        return bool(inside) if x.ndim == 1 else inside

    def with_halfspaces(self, extra: Sequence[Halfspace], bounded: bool | None = None) -> "HPolytope":
        rows = [h.leq_form() for h in extra]
        A = np.vstack([self.A] + [r[0][None, :] for r in rows])
        b = np.concatenate([self.b, [r[1] for r in rows]])
        return HPolytope(A, b, self.bounded if bounded is None else bounded)


# ---------------------------------------------------------------- support

def support(K: VPolytope, u) -> float | np.ndarray:
    """Support function ``h(K, u) = max_v <v, u>``.

    ``u`` may be a single vector or an ``(m, d)`` stack of directions, in
    which case an array of ``m`` values is returned.  Directions need not be
    unit vectors; the function is positively homogeneous.
    """
    if not isinstance(K, VPolytope) or K.vertices.size == 0:
        raise InvalidBodyError("support requires a nonempty VPolytope")
    u = np.asarray(u, dtype=float)
    vals = K.vertices @ u.T
    if u.ndim == 1:
        return float(vals.max())
    return vals.max(axis=0)


def support_with_point(K: VPolytope, x, u) -> float | np.ndarray:
    """Support function of ``conv(K ∪ {x})``."""
    return np.maximum(support(K, u), np.asarray(u, dtype=float) @ np.asarray(x, dtype=float))


def separates(H: Hyperplane, K: VPolytope, x, strict: bool = False) -> bool:
    """Whether ``H`` (weakly, or strictly) separates ``K`` from the point ``x``."""
    u = np.asarray(H.u)
    xu = float(np.dot(x, u))
    hi = support(K, u)
    lo = -support(K, -u)
    if strict:
        return (xu > H.tau > hi) or (xu < H.tau < lo)
    return (xu >= H.tau >= hi) or (xu <= H.tau <= lo)


# ---------------------------------------------------------------- 2D hull

def convex_hull_2d(points) -> np.ndarray:
    """Counter-clockwise hull vertices (Andrew's monotone chain), collinear points dropped."""
    P = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(P) <= 2:
        return P
    pts = [tuple(p) for p in P]  # np.unique sorts lexicographically

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    scale = float(np.abs(P).max()) or 1.0
    eps = 1e-14 * scale * scale
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= eps:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= eps:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.array(hull if hull else pts[:1])


def hull_polytope(points) -> VPolytope:
    """Vertex-minimal polytope spanned by ``points`` (2D and 3D)."""
    P = np.asarray(points, dtype=float)
    if P.shape[1] == 2:
        return VPolytope(convex_hull_2d(P))
    from scipy.spatial import ConvexHull

    return VPolytope(P[ConvexHull(P).vertices])


def perimeter(P: VPolytope) -> float:
    """Perimeter of a planar polytope (twice the length for a segment)."""
    if P.dim != 2:
        raise ValueError("perimeter is only defined for d = 2")
    H = convex_hull_2d(P.vertices)
    if len(H) == 1:
        return 0.0
    return float(np.linalg.norm(np.roll(H, -1, axis=0) - H, axis=1).sum())


def _shoelace(H: np.ndarray) -> float:
    x, y = H[:, 0], H[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def volume(P: VPolytope) -> float:
    """Lebesgue measure for d in {2, 3}; zero for lower-dimensional polytopes."""
    if P.dim not in (2, 3):
        raise ValueError("volume is implemented for d = 2 and d = 3 only")
    if not P.is_full_dimensional:
        return 0.0
    if P.dim == 2:
        return abs(_shoelace(convex_hull_2d(P.vertices)))
    V = P.vertices
    if P.faces is not None:
        tris = [(f[0], f[k], f[k + 1]) for f in P.faces for k in range(1, len(f) - 1)]
    else:
        from scipy.spatial import ConvexHull

        tris = ConvexHull(V).simplices
    T = np.asarray(tris)
    c = V.mean(axis=0)
    a, b, d = V[T[:, 0]] - c, V[T[:, 1]] - c, V[T[:, 2]] - c
    return float(np.abs(np.einsum("ij,ij->i", a, np.cross(b, d))).sum() / 6.0)


def mean_width(P: VPolytope, quad) -> float:
    """``2 * sum_i w_i h(P, u_i)`` over the mirrored atoms of a sphere quadrature."""
    U, W = quad.expanded()
    return 2.0 * float(W @ support(P, U))


# ---------------------------------------------------------------- halfspace intersection

class Intersection(NamedTuple):
    polytope: VPolytope
    window_active: bool


def window_halfspaces(d: int, R: float, center=None, facets: int = 32) -> list[Halfspace]:
    """Facets of a polytope circumscribed about the ball ``B(center, R)``.

    In the plane this is a regular ``facets``-gon; in space it is the cube.
    """
    N, t = _window_arrays(d, R, center, facets)
    return [Halfspace(u, float(tau)) for u, tau in zip(N, t)]


def _window_arrays(d: int, R: float, center=None, facets: int = 32) -> tuple[np.ndarray, np.ndarray]:
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    if d == 2:
        ang = 2.0 * np.pi * np.arange(facets) / facets
        normals = np.column_stack([np.cos(ang), np.sin(ang)])
    elif d == 3:
        normals = np.vstack([np.eye(3), -np.eye(3)])
    else:
        raise ValueError("windows exist for d = 2 and d = 3 only")
    return normals, normals @ c + R


def _clip_polygon(V: np.ndarray, a: np.ndarray, b: float, eps: float) -> np.ndarray:
    s = V @ a - b
    if s.max() <= eps:
        return V
    if s.min() > -eps:
        return V[:0]
    Vn = np.roll(V, -1, axis=0)
    sn = np.roll(s, -1)
    inside = s <= eps
    cross = ((s < -eps) & (sn > eps)) | ((s > eps) & (sn < -eps))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(cross, s / (s - sn), 0.0)
    cand = np.stack([V, V + t[:, None] * (Vn - V)], axis=1)
    return cand[np.stack([inside, cross], axis=1)]


class _Polyhedron:
    """Vertex array plus outward counter-clockwise face cycles (3D clipping)."""

    def __init__(self, V: np.ndarray, faces: list[list[int]]):
        self.V = V
        self.faces = faces

    @classmethod
    def box(cls, lo, hi) -> "_Polyhedron":
        V = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        faces = [[0, 1, 3, 2], [4, 6, 7, 5], [0, 4, 5, 1], [2, 3, 7, 6], [0, 2, 6, 4], [1, 5, 7, 3]]
        return cls(V, faces)

    def clip(self, a: np.ndarray, b: float, eps: float) -> "_Polyhedron":
        V = self.V
        s = V @ a - b
        if s.max() <= eps:
            return self
        if s.min() > -eps:
            raise EmptyCellError("halfspace excludes the whole cell")
        new_pts: list[np.ndarray] = []
        edge_pt: dict[tuple[int, int], int] = {}
        nV = len(V)
        faces: list[list[int]] = []
        cap: set[int] = set(int(i) for i in np.flatnonzero(np.abs(s) <= eps))
        face_in_plane = False
        for f in self.faces:
            out: list[int] = []
            k = len(f)
            for idx in range(k):
                i, j = f[idx], f[(idx + 1) % k]
                si, sj = s[i], s[j]
                if si <= eps:
                    out.append(i)
                if (si < -eps and sj > eps) or (si > eps and sj < -eps):
                    key = (i, j) if i < j else (j, i)
                    if key not in edge_pt:
                        t = si / (si - sj)
                        new_pts.append(V[i] + t * (V[j] - V[i]))
                        edge_pt[key] = nV + len(new_pts) - 1
                    out.append(edge_pt[key])
            if len(out) >= 3:
                if all(v < nV and abs(s[v]) <= eps for v in out):
                    face_in_plane = True
                faces.append(out)
        cap.update(edge_pt.values())
        allV = np.vstack([V] + new_pts) if new_pts else V
        if len(cap) >= 3 and not face_in_plane:
            idx = np.array(sorted(cap))
            P = allV[idx]
            c = P.mean(axis=0)
            e1 = np.cross(a, [1.0, 0.0, 0.0])
            if np.linalg.norm(e1) < 0.5:
                e1 = np.cross(a, [0.0, 1.0, 0.0])
            e1 /= np.linalg.norm(e1)
            e2 = np.cross(a, e1)
            ang = np.arctan2((P - c) @ e2, (P - c) @ e1)
            faces.append([int(i) for i in idx[np.argsort(ang)]])
        used = sorted({v for f in faces for v in f})
        remap = {old: new for new, old in enumerate(used)}
        return _Polyhedron(allV[used], [[remap[v] for v in f] for f in faces])

    def check(self) -> None:
        n_e2 = sum(len(f) for f in self.faces)
        if n_e2 % 2 or len(self.V) - n_e2 // 2 + len(self.faces) != 2:
            raise DegenerateCellError("clipped polyhedron violates Euler's formula")


def halfspace_intersection(
    hs: Sequence[Halfspace] | HPolytope,
    R: float,
    center=None,
    *,
    dim: int | None = None,
    window_facets: int = 32,
) -> Intersection:
    """Vertex form of the intersection of ``hs`` with a window around ``B(center, R)``.

    The window (see :func:`window_halfspaces`) guarantees boundedness; the
    returned flag reports whether any window facet touches the result.

    Raises
    ------
    EmptyCellError
        If the intersection is empty.
    """
    if isinstance(hs, HPolytope):
        A, b = np.asarray(hs.A), np.asarray(hs.b)
    elif len(hs):
        rows = [h.leq_form() for h in hs]
        A = np.array([r[0] for r in rows])
        b = np.array([r[1] for r in rows])
    else:
        if dim is None:
            raise ValueError("dim is required when no halfspaces are given")
        A, b = np.zeros((0, dim)), np.zeros(0)
    d = A.shape[1] if A.size else dim
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    eps = GEOM_TOL * max(1.0, R + float(np.abs(c).max(initial=0.0)))

    Aw, bw = _window_arrays(d, R, c, window_facets)

    # process the most restrictive constraints first so later ones are mostly redundant
    order = np.argsort(b - A @ c, kind="stable")
    A, b = A[order], b[order]

    if d == 2:
        ang = 2.0 * np.pi * np.arange(window_facets) / window_facets
        ang += np.pi / window_facets
        rho = R / math.cos(math.pi / window_facets)
        V = c + rho * np.column_stack([np.cos(ang), np.sin(ang)])
        clip = lambda P, a, t: _clip_polygon(P, a, t, eps)  # noqa: E731
        verts = lambda P: P  # noqa: E731
        empty = lambda P: len(P) == 0  # noqa: E731
        P = V
    elif d == 3:
        P = _Polyhedron.box(c - R, c + R)
        clip = lambda P, a, t: P.clip(a, t, eps)  # noqa: E731
        verts = lambda P: P.V  # noqa: E731
        empty = lambda P: len(P.V) == 0  # noqa: E731
    else:
        raise ValueError("halfspace_intersection supports d = 2 and d = 3")

    remaining = np.arange(len(b))
    while remaining.size:
        viol = (verts(P) @ A[remaining].T - b[remaining]).max(axis=0)
        remaining = remaining[viol > eps]
        if remaining.size == 0:
            break
        k = remaining[0]
        P = clip(P, A[k], b[k])
        if empty(P):
            raise EmptyCellError("halfspace intersection is empty")
        remaining = remaining[1:]

    if d == 2:
        if len(P) == 0:
            raise EmptyCellError("halfspace intersection is empty")
        poly = VPolytope(_dedupe_cycle(P, eps))
    else:
        P.check()
        poly = VPolytope(P.V, P.faces)
    W = poly.vertices
    active = bool(np.any(np.abs(W @ Aw.T - bw) <= 10 * eps))
    return Intersection(poly, active)


def _dedupe_cycle(P: np.ndarray, eps: float) -> np.ndarray:
    keep = np.linalg.norm(P - np.roll(P, 1, axis=0), axis=1) > eps
    if not keep.any():
        return P[:1]
    return P[keep]


# ---------------------------------------------------------------- LP support

def lp_support(P: HPolytope, u) -> float:
    """``max <x, u>`` over ``P`` by the dense simplex method.

    Raises
    ------
    UnboundedDirectionError
        If ``P`` is unbounded in direction ``u``.
    EmptyCellError
        If ``P`` is empty.
    """
    u = np.asarray(u, dtype=float)
    return linprog_max(u, P.A, P.b).value
