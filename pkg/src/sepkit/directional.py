"""Even directional distributions on the unit sphere as finite atomic measures.

Only one representative ``u_i`` of every antipodal pair is stored, together
with the per-direction weight ``w_i``; the pair ``{u_i, -u_i}`` carries total
mass ``2 w_i``.  Evenness therefore holds by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AsymmetricBodyError, GreatSubsphereError, InvalidBodyError
from .geometry import VPolytope, canonical_sign, convex_hull_2d, support

__all__ = [
    "DirectionalDistribution",
    "make_discrete",
    "make_sigma",
    "make_axes",
    "make_facet_measure",
    "phi_functional",
    "sample_tilted_direction",
]

NORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DirectionalDistribution:
    """Finite even probability measure on ``S^{d-1}``.

    Attributes
    ----------
    atoms : ndarray, shape (A, d)
        One unit vector per antipodal pair.
    weights : ndarray, shape (A,)
        Mass of each of ``u_i`` and ``-u_i``; ``2 * weights.sum() == 1``.
    kind : str
        ``"discrete"``, ``"sigma"`` (quadrature of the uniform measure) or
        ``"facets"`` (normalised surface area measure of a body).
    order : int or None
        Requested quadrature order for ``kind == "sigma"``.
    """

    atoms: np.ndarray
    weights: np.ndarray
    kind: str = "discrete"
    order: int | None = None
    _U: np.ndarray = field(init=False, repr=False)
    _W: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        U = np.atleast_2d(np.array(self.atoms, dtype=float))
        w = np.array(self.weights, dtype=float).ravel()
        if U.shape[0] != w.size or U.shape[0] == 0:
            raise ValueError("atoms and weights must be nonempty and of equal length")
        if np.any(np.abs(np.linalg.norm(U, axis=1) - 1.0) > NORM_TOL):
            raise ValueError("atoms must be unit vectors")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(2.0 * w.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"mirrored weights sum to {2 * w.sum()!r}, not 1")
        if np.linalg.matrix_rank(U) < U.shape[1]:
            raise GreatSubsphereError("atoms are concentrated on a great subsphere")
        U.setflags(write=False)
        w.setflags(write=False)
        EU = np.vstack([U, -U])
        EW = np.concatenate([w, w])
        EU.setflags(write=False)
        EW.setflags(write=False)
        object.__setattr__(self, "atoms", U)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_U", EU)
        object.__setattr__(self, "_W", EW)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self) -> int:
        return self.atoms.shape[0]

    def expanded(self) -> tuple[np.ndarray, np.ndarray]:
        """All ``2A`` mirrored atoms and their weights (first ``A`` are the stored ones)."""
        return self._U, self._W

    def describe(self) -> str:
        if self.kind == "sigma":
            return f"sigma{self.dim}d:{self.order} ({len(self)} pairs)"
        return f"{self.kind}{self.dim}d ({len(self)} pairs)"

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "atoms": [{"u": u.tolist(), "w": float(w)} for u, w in zip(self.atoms, self.weights)],
        }
        if self.order is not None:
            out["order"] = self.order
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DirectionalDistribution":
        atoms = data["atoms"]
        return cls(
            np.array([a["u"] for a in atoms], dtype=float),
            np.array([a["w"] for a in atoms], dtype=float),
            kind=data.get("kind", "discrete"),
            order=data.get("order"),
        )


def _merge_pairs(dirs: np.ndarray, mass: np.ndarray, tol: float = 1e-9):
    """Merge directions that agree up to sign; returns canonical atoms and pair masses."""
    atoms: list[np.ndarray] = []
    masses: list[float] = []
    for u, m in zip(dirs, mass):
        u = canonical_sign(u) * u
        for k, a in enumerate(atoms):
            if np.abs(a - u).max() <= tol:
                masses[k] += m
                break
        else:
            atoms.append(u)
            masses.append(float(m))
    return np.array(atoms), np.array(masses)


def make_discrete(pairs) -> DirectionalDistribution:
    """Normalised, symmetrised atomic measure from ``(direction, weight)`` pairs.

    The mass given to ``u`` is shared equally between ``u`` and ``-u``;
    directions listed with both signs are merged.

    >>> phi = make_discrete([((1, 0), 1.0), ((0, 1), 1.0)])
    >>> phi.weights.tolist()
    [0.25, 0.25]
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("at least one atom is required")
    dirs = np.array([np.asarray(p[0], dtype=float) for p in pairs])
    mass = np.array([float(p[1]) for p in pairs])
    nrm = np.linalg.norm(dirs, axis=1)
    if np.any(nrm == 0) or not np.all(np.isfinite(nrm)):
        raise ValueError("directions must be finite and nonzero")
    if np.any(mass <= 0):
        raise ValueError("weights must be positive")
    atoms, pm = _merge_pairs(dirs / nrm[:, None], mass)
    if np.linalg.matrix_rank(atoms) < atoms.shape[1]:
        raise GreatSubsphereError(
            f"atoms span a subspace of rank {np.linalg.matrix_rank(atoms)} < {atoms.shape[1]}"
        )
    w = pm / pm.sum() / 2.0
    w = w / (2.0 * w.sum())
    return DirectionalDistribution(atoms, w, kind="discrete")


def make_axes(d: int) -> DirectionalDistribution:
    """Uniform measure on the ``2d`` coordinate directions ``±e_j``."""
    return make_discrete([(e, 1.0) for e in np.eye(d)])


def _sigma3_grid(order: int) -> tuple[np.ndarray, np.ndarray]:
    nz = max(1, int(round(np.sqrt(order / 2.0))))
    naz = 2 * nz
    z, wz = np.polynomial.legendre.leggauss(2 * nz)
    up = z > 0
    z, wz = z[up], wz[up]
    phi = 2.0 * np.pi * (np.arange(naz) + 0.5) / naz
    Z, P = np.meshgrid(z, phi, indexing="ij")
    r = np.sqrt(1.0 - Z ** 2)
    U = np.column_stack([(r * np.cos(P)).ravel(), (r * np.sin(P)).ravel(), Z.ravel()])
    W = np.repeat(wz / (2.0 * naz), naz)
    return U, W


def make_sigma(d: int, order: int) -> DirectionalDistribution:
    """Symmetric quadrature rule for the normalised spherical Lebesgue measure.

    ``d == 2``: ``order`` equally spaced angles on ``[0, pi)``, equal weights.
    ``d == 3``: product rule, Gauss-Legendre in the polar cosine times uniform
    azimuth on the upper hemisphere, mirrored.  ``n_z = round(sqrt(order/2))``
    polar nodes and ``2 n_z`` azimuths give ``2 n_z**2`` stored pairs, the
    closest such count to ``order``.
    """
    order = int(order)
    if order < 2 * d:
        raise ValueError(f"quadrature order must be at least {2 * d}, got {order}")
    if d == 2:
        ang = np.pi * np.arange(order) / order
        U = np.column_stack([np.cos(ang), np.sin(ang)])
        W = np.full(order, 1.0 / (2 * order))
    elif d == 3:
        U, W = _sigma3_grid(order)
        W = W / (2.0 * W.sum())
    else:
        raise ValueError("sigma quadratures are provided for d = 2 and d = 3")
    return DirectionalDistribution(U, W, kind="sigma", order=order)


def _is_centrally_symmetric(V: np.ndarray, tol: float = 1e-9) -> bool:
    c = V.mean(axis=0)
    refl = 2 * c - V
    dist = np.sqrt(((refl[:, None, :] - V[None, :, :]) ** 2).sum(-1)).min(axis=1)
    return bool(dist.max() <= tol * max(1.0, float(np.abs(V).max())))


def make_facet_measure(K: VPolytope) -> DirectionalDistribution:
    """Surface area measure of a centrally symmetric polytope, normalised."""
    K.require_body()
    if K.dim == 2:
        H = convex_hull_2d(K.vertices)
        if not _is_centrally_symmetric(H):
            raise AsymmetricBodyError("facet measures require a centrally symmetric body")
        E = np.roll(H, -1, axis=0) - H
        areas = np.linalg.norm(E, axis=1)
        normals = np.column_stack([E[:, 1], -E[:, 0]]) / areas[:, None]
    elif K.dim == 3:
        from scipy.spatial import ConvexHull

        hull = ConvexHull(K.vertices)
        if not _is_centrally_symmetric(K.vertices[hull.vertices]):
            raise AsymmetricBodyError("facet measures require a centrally symmetric body")
        tri = K.vertices[hull.simplices]
        tri_area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        tri_n = hull.equations[:, :3]
        normals, areas = [], []
        for n, a in zip(tri_n, tri_area):
            for k, m in enumerate(normals):
                if np.abs(m - n).max() <= 1e-9:
                    areas[k] += a
                    break
            else:
                normals.append(n)
                areas.append(a)
        normals, areas = np.array(normals), np.array(areas)
    else:
        raise InvalidBodyError("facet measures are provided for d = 2 and d = 3")
    atoms, pm = _merge_pairs(normals, areas)
    w = pm / pm.sum() / 2.0
    w = w / (2.0 * w.sum())
    return DirectionalDistribution(atoms, w, kind="facets")


def phi_functional(K: VPolytope, phi: DirectionalDistribution) -> float:
    """Integral of the support function of ``K`` against ``phi``."""
    U, W = phi.expanded()
    return float(W @ support(K, U))


def sample_tilted_direction(phi: DirectionalDistribution, tilt, rng: np.random.Generator, size=None):
    """Index of a stored atom drawn with probability proportional to ``w_i * tilt_i``."""
    tilt = np.asarray(tilt, dtype=float)
    if tilt.shape != phi.weights.shape or np.any(tilt < 0):
        raise ValueError("tilt must be a nonnegative array with one entry per stored atom")
    p = phi.weights * tilt
    total = p.sum()
    if not total > 0:
        raise ValueError("all tilted weights are zero")
    return rng.choice(len(p), size=size, p=p / total)
