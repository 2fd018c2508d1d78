"""Stationary Poisson hyperplane processes, K-cells and zero cells.

Only hyperplanes hitting a ball ``B(c, R)`` around an interior point of the
body are simulated.  A cell lying strictly inside that ball is exactly the
cell of the full process, because hyperplanes missing the ball cannot cut
it.  Cells that reach the window are extended by superposing an independent
shell of hyperplanes hitting ``B(c, 2R)`` but not ``B(c, R)``.

Every replication ``k`` draws from its own substream
``SeedSequence(seed, spawn_key=(k,))`` so results do not depend on the
order or process in which replications run.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from .directional import DirectionalDistribution, make_sigma, phi_functional
from .errors import BudgetExceededError, DegenerateCellError, ReplicationError, WindowError
from .geometry import (
    HPolytope,
    VPolytope,
    halfspace_intersection,
    lp_support,
    mean_width,
    support,
    volume,
    _window_arrays,
)
from .sepbody import SeparationQuery, support_sepbody

log = logging.getLogger(__name__)

__all__ = [
    "ProcessParams",
    "KCellSample",
    "EstimateWithCI",
    "FunctionalEstimates",
    "Integral313",
    "default_radius",
    "substream",
    "draw_hyperplanes",
    "hyperplane_counts",
    "sample_kcell",
    "sample_zero_cell",
    "estimate_functionals",
    "integral_313",
    "conditional_zero_cell",
]


@dataclass(frozen=True)
class ProcessParams:
    """Intensity ``n``, directional distribution, window radius and master seed.

    ``R=None`` selects :func:`default_radius` for the body in use.
    """

    n: int
    phi: DirectionalDistribution
    R: float | None = None
    seed: int = 0
    window_facets: int = 32
    max_doublings: int = 5

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("intensity n must be a positive integer")
        if self.R is not None and not self.R > 0:
            raise ValueError("window radius must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def default_radius(K: VPolytope, phi: DirectionalDistribution, n: int, center=None) -> float:
    """``4 * max_i max(h(K-c, u_i), h(K-c, -u_i)) + 8 / n``."""
    c = K.centroid if center is None else np.asarray(center, dtype=float)
    U, _ = phi.expanded()
    return 4.0 * max(0.0, float(support(K.translate(-c), U).max())) + 8.0 / n


def substream(seed: int, k: int, attempt: int = 0) -> np.random.Generator:
    """Independent generator for replication ``k`` (and retry ``attempt``)."""
    key = (k,) if attempt == 0 else (k, attempt)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True, eq=False)
class HyperplaneDraw:
    """Sampled hyperplanes as ``<a_j, x> <= b_j`` rows whose halfspace contains the body.

    ``atom`` is the stored atom index, ``sign`` is ``+1`` when ``a_j = u_atom``.
    ``offset`` is ``b_j`` measured from the window centre.
    """

    atom: np.ndarray
    sign: np.ndarray
    offset: np.ndarray
    A: np.ndarray
    b: np.ndarray

    @property
    def count(self) -> int:
        return int(self.atom.size)


def _draw(phi, h_pos, h_neg, r_in, r_out, n, center, rng) -> HyperplaneDraw:
    # one-sided tau ranges: (max(h_pos, r_in), r_out] and the mirror on the -u side
    lo_p = np.maximum(h_pos, r_in)
    lo_m = np.maximum(h_neg, r_in)
    len_p = np.maximum(r_out - lo_p, 0.0)
    len_m = np.maximum(r_out - lo_m, 0.0)
    tilt = len_p + len_m
    mass = 2.0 * phi.weights * tilt
    N = int(rng.poisson(n * mass.sum()))
    atom = rng.choice(len(mass), size=N, p=mass / mass.sum()) if N else np.zeros(0, dtype=int)
    t = rng.random(N) * tilt[atom]
    plus = t < len_p[atom]
    sign = np.where(plus, 1.0, -1.0)
    offset = np.where(plus, lo_p[atom] + t, lo_m[atom] + (t - len_p[atom]))
    A = sign[:, None] * phi.atoms[atom]
    b = offset + A @ center
    return HyperplaneDraw(atom, sign, offset, A, b)


def draw_hyperplanes(K: VPolytope, params: ProcessParams, rng: np.random.Generator,
                     R: float | None = None, center=None) -> HyperplaneDraw:
    """Poisson hyperplanes hitting ``B(center, R)`` and missing ``K``.

    The count is Poisson with mean ``2 n (R - Phi(K))`` (window centred at an
    interior point); each hyperplane picks a stored atom with probability
    proportional to ``w_i (2R - width(K, u_i))`` and an offset uniform on the
    two-sided range of offsets that hit the ball but miss ``K``.
    """
    c = K.centroid if center is None else np.asarray(center, dtype=float)
    R = params.R if R is None else R
    if R is None:
        R = default_radius(K, params.phi, params.n, c)
    Kc = K.translate(-c)
    h_pos = support(Kc, params.phi.atoms)
    h_neg = support(Kc, -params.phi.atoms)
    if max(h_pos.max(), h_neg.max()) >= R:
        raise ValueError("window radius must exceed the support of the body")
    return _draw(params.phi, h_pos, h_neg, 0.0, R, params.n, c, rng)


def hyperplane_counts(K: VPolytope, params: ProcessParams, n_samples: int) -> np.ndarray:
    """Number of initial-window hyperplanes drawn in replications ``0..n_samples-1``."""
    return np.array([draw_hyperplanes(K, params, substream(params.seed, k)).count
                     for k in range(n_samples)])


@dataclass(frozen=True, eq=False)
class KCellSample:
    """One realisation of a K-cell.

    ``A, b`` hold the generating halfspaces (every one contains ``K``).
    ``hit_window`` reports whether the first window was reached; such cells
    were regenerated ``doublings`` times before being accepted.
    """

    A: np.ndarray
    b: np.ndarray
    polytope: VPolytope
    center: np.ndarray
    R: float
    count: int
    hit_window: bool
    doublings: int
    window_facets: int = 32

    @property
    def cell(self) -> HPolytope:
        """Generating halfspaces plus the (inactive) window halfspaces."""
        Aw, bw = _window_rows(len(self.center), self.R, self.center, self.window_facets)
        return HPolytope(np.vstack([self.A.reshape(-1, Aw.shape[1]), Aw]), np.concatenate([self.b, bw]),
                         bounded=True)

    @property
    def facets(self) -> HPolytope:
        """Generating halfspaces that are tight at some vertex; same polytope as :attr:`cell`."""
        V = self.polytope.vertices
        if not len(self.b):
            return self.cell
        slack = (self.b[:, None] - self.A @ V.T).min(axis=1)
        scale = max(1.0, float(np.abs(V).max()))
        tight = slack <= 1e-7 * scale
        return HPolytope(self.A[tight], self.b[tight], bounded=True)

    def support(self, u) -> float:
        """``h(cell, u)`` by the simplex method on the facet halfspaces."""
        return lp_support(self.facets, u)


def _window_rows(d, R, c, facets):
    return _window_arrays(d, R, c, facets)


def _build_cell(K, params, rng, center) -> KCellSample:
    c = center
    R = params.R if params.R is not None else default_radius(K, params.phi, params.n, c)
    Kc = K.translate(-c)
    h_pos = support(Kc, params.phi.atoms)
    h_neg = support(Kc, -params.phi.atoms)
    if max(h_pos.max(), h_neg.max()) >= R:
        raise ValueError("window radius must exceed the support of the body")
    draw = _draw(params.phi, h_pos, h_neg, 0.0, R, params.n, c, rng)
    A, b, count = draw.A, draw.b, draw.count
    hit = False
    for dbl in range(params.max_doublings + 1):
        inter = halfspace_intersection(HPolytope(A, b) if len(b) else [], R, c,
                                       dim=K.dim, window_facets=params.window_facets)
        V = inter.polytope.vertices
        if not inter.window_active and np.linalg.norm(V - c, axis=1).max() < R:
            return KCellSample(A, b, inter.polytope, c, R, count, hit, dbl, params.window_facets)
        hit = True
        if dbl == params.max_doublings:
            break
        shell = _draw(params.phi, h_pos, h_neg, R, 2.0 * R, params.n, c, rng)
        A, b = np.vstack([A, shell.A]), np.concatenate([b, shell.b])
        count += shell.count
        R *= 2.0
    raise WindowError(f"cell still touches the window after {params.max_doublings} doublings")


def sample_kcell(K: VPolytope, params: ProcessParams, rng: np.random.Generator | int = 0) -> KCellSample:
    """Sample the K-cell; ``rng`` is a generator or a replication index into ``params.seed``."""
    K.require_body()
    if K.dim != params.phi.dim:
        raise ValueError("body and directional distribution dimensions differ")
    if isinstance(rng, (int, np.integer)):
        return _sample_rep(K, params, int(rng), K.centroid)
    return _build_cell(K, params, rng, K.centroid)


def sample_zero_cell(params: ProcessParams, rng: np.random.Generator | int = 0, dim: int | None = None) -> KCellSample:
    """The K-cell of the single point ``{o}``."""
    d = params.phi.dim if dim is None else dim
    o = VPolytope(np.zeros((1, d)))
    if isinstance(rng, (int, np.integer)):
        return _sample_rep(o, params, int(rng), np.zeros(d))
    return _build_cell(o, params, rng, np.zeros(d))


def _sample_rep(K, params, k, center, max_attempts: int = 5) -> KCellSample:
    for attempt in range(max_attempts):
        try:
            return _build_cell(K, params, substream(params.seed, k, attempt), center)
        except DegenerateCellError:
            log.warning("replication %d attempt %d: degenerate vertex enumeration, redrawing", k, attempt)
    raise DegenerateCellError(f"replication {k}: degenerate cell in {max_attempts} attempts")


# ---------------------------------------------------------------- estimation

_Z = {}


def _z(level: float) -> float:
    if level not in _Z:
        _Z[level] = NormalDist().inv_cdf(0.5 + level / 2.0)
    return _Z[level]


@dataclass(frozen=True)
class EstimateWithCI:
    mean: float
    n: int
    se: float
    level: float = 0.99

    @classmethod
    def from_samples(cls, x, level: float = 0.99) -> "EstimateWithCI":
        x = np.asarray(x, dtype=float)
        se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf
        return cls(float(x.mean()), int(x.size), se, level)

    @property
    def halfwidth(self) -> float:
        return _z(self.level) * self.se

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - self.halfwidth, self.mean + self.halfwidth

    def to_dict(self) -> dict:
        return {"mean": self.mean, "n": self.n, "se": self.se, "level": self.level,
                "ci": list(self.ci)}


@dataclass(frozen=True, eq=False)
class FunctionalEstimates:
    """Per-replication samples of ``h(Z, u)``, ``W(Z)``, ``V(Z)`` and their summaries."""

    probes: np.ndarray
    h: np.ndarray        # (N, P)
    W: np.ndarray        # (N,)
    V: np.ndarray        # (N,)
    counts: np.ndarray
    hit_window: np.ndarray
    level: float = 0.99
    quad_order: int | None = None

    @property
    def n_reps(self) -> int:
        return len(self.V)

    def Eh(self, j: int) -> EstimateWithCI:
        return EstimateWithCI.from_samples(self.h[:, j], self.level)

    @property
    def EW(self) -> EstimateWithCI:
        return EstimateWithCI.from_samples(self.W, self.level)

    @property
    def EV(self) -> EstimateWithCI:
        return EstimateWithCI.from_samples(self.V, self.level)

    def records(self) -> Iterable[dict]:
        """One JSON-ready record per replication."""
        keys = [",".join(f"{c:.6g}" for c in u) for u in self.probes]
        for k in range(self.n_reps):
            yield {
                "seed_index": k,
                "count": int(self.counts[k]),
                "hit_window": bool(self.hit_window[k]),
                "V": float(self.V[k]),
                "W": float(self.W[k]),
                "h": {key: float(v) for key, v in zip(keys, self.h[k])},
            }

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _default_quad(phi: DirectionalDistribution) -> DirectionalDistribution:
    if phi.kind == "sigma":
        return phi
    return make_sigma(phi.dim, 360 if phi.dim == 2 else 100)


def _functionals(cell: KCellSample, probes, quad):
    H = cell.facets
    h = [lp_support(H, u) for u in probes]
    return h, mean_width(cell.polytope, quad), volume(cell.polytope), cell.count, cell.hit_window


def _run_chunk(args):
    K, params, ks, probes, quad, zero = args
    out = []
    for k in ks:
        try:
            cell = _sample_rep(K, params, k, np.zeros(K.dim) if zero else K.centroid)
            out.append(_functionals(cell, probes, quad))
        except Exception as exc:  # abort with the replication index
            raise ReplicationError(k, exc) from exc
    return out


def estimate_functionals(
    K: VPolytope,
    params: ProcessParams,
    n_reps: int,
    probes: Sequence,
    *,
    quad: DirectionalDistribution | None = None,
    level: float = 0.99,
    workers: int = 1,
) -> FunctionalEstimates:
    """Monte Carlo estimates of ``E h(Z_K, u)``, ``E W(Z_K)`` and ``E V(Z_K)``.

    ``h`` is computed by the simplex method on the halfspace form, ``W`` by
    the sphere quadrature ``quad`` (default: ``params.phi`` if it is a sigma
    quadrature, otherwise order 360 in the plane and 100 in space) and ``V``
    on the vertex form.  Results are bit-identical for any ``workers``.
    """
    if n_reps < 100:
        raise ValueError("need at least 100 replications")
    zero = len(K.vertices) == 1
    if not zero:
        K.require_body()
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    quad = _default_quad(params.phi) if quad is None else quad
    idx = list(range(n_reps))
    if workers <= 1:
        rows = _run_chunk((K, params, idx, probes, quad, zero))
    else:
        size = math.ceil(n_reps / workers)
        chunks = [idx[i:i + size] for i in range(0, n_reps, size)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = ex.map(_run_chunk, [(K, params, ch, probes, quad, zero) for ch in chunks])
            rows = [r for part in parts for r in part]
    h = np.array([r[0] for r in rows]).reshape(n_reps, len(probes))
    return FunctionalEstimates(
        probes=probes,
        h=h,
        W=np.array([r[1] for r in rows]),
        V=np.array([r[2] for r in rows]),
        counts=np.array([r[3] for r in rows]),
        hit_window=np.array([r[4] for r in rows]),
        level=level,
        quad_order=quad.order,
    )


# ---------------------------------------------------------------- excess-volume integral

@dataclass(frozen=True)
class Integral313:
    """``int_{R^d \\ K} exp(-n m(K, x)) dx`` with its error estimate."""

    value: float
    error: float
    grid: int
    T: float
    tail_bound: float


def _grid_integral(q: SeparationQuery, lo, hi, N: int, n: int) -> float:
    d = len(lo)
    h = (hi - lo) / N
    axes = [lo[j] + (np.arange(N) + 0.5) * h[j] for j in range(d)]
    cell = float(np.prod(h))
    hg = q._hinges
    total = 0.0
    if d == 2:
        step = max(1, 4_000_000 // (N * max(1, len(hg.b))))
        for s in range(0, N, step):
            X, Y = np.meshgrid(axes[0][s:s + step], axes[1], indexing="ij")
            P = np.column_stack([X.ravel(), Y.ravel()])
            total += float(np.exp(-n * hg(P)).sum())
    else:
        Y, Z = np.meshgrid(axes[1], axes[2], indexing="ij")
        YZ = np.column_stack([Y.ravel(), Z.ravel()])
        for xv in axes[0]:
            P = np.column_stack([np.full(len(YZ), xv), YZ])
            total += float(np.exp(-n * hg(P)).sum())
    return total * cell


def integral_313(
    K: VPolytope,
    phi: DirectionalDistribution,
    n: int,
    *,
    T: float | None = None,
    start: int | None = None,
    max_grid: int | None = None,
    rtol: float = 1e-4,
) -> Integral313:
    """Excess volume ``E V(Z_K) - V(K)`` as a deterministic integral.

    Since ``m = 0`` on ``K`` the integrand over ``R^d \\ K`` equals the
    integral of ``exp(-n m)`` over a box containing ``K[phi, T]`` minus
    ``V(K)``.  The box integral uses the midpoint rule, doubling the grid
    until ``|I_2N - I_N|`` falls below ``rtol`` (relative) or the point
    budget is exhausted.  The integrand has kinks along hyperplanes, so the
    error constant changes with the grid alignment and the observed
    reduction per halving is between 2 and 4; the full difference is
    therefore reported as the error rather than the Richardson third.  Outside
    ``K[phi, T]`` the integrand is below ``exp(-n T)``.
    """
    d = K.dim
    if d not in (2, 3):
        raise ValueError("integral_313 supports d = 2 and d = 3")
    T = 20.0 / n if T is None else T
    q = SeparationQuery(K, phi, T)
    E = np.eye(d)
    hi = np.array([support_sepbody(q, e) for e in E])
    lo = -np.array([support_sepbody(q, -e) for e in E])
    atoms = 2 * len(phi)
    if start is None:
        start = 128 if d == 2 else 24
    if max_grid is None:
        budget = 3e9 if d == 2 else 2e9
        max_grid = start
        while (2 * max_grid) ** d * atoms <= budget:
            max_grid *= 2
    vk = volume(K)
    N = start
    prev = _grid_integral(q, lo, hi, N, n)
    err = math.inf
    while 2 * N <= max_grid:
        N *= 2
        cur = _grid_integral(q, lo, hi, N, n)
        err = abs(cur - prev)
        prev = cur
        if err <= rtol * max(abs(cur - vk), 1e-12):
            break
    box = float(np.prod(hi - lo))
    tail = math.exp(-n * T) * box
    return Integral313(prev - vk, err + tail, N, T, tail)


# ---------------------------------------------------------------- conditioning

@dataclass(frozen=True, eq=False)
class ConditionalSamples:
    samples: list
    draws: int
    accepted: int
    expected_rate: float


def conditional_zero_cell(K: VPolytope, params: ProcessParams, n_accept: int,
                          start_index: int = 0, max_draws: int | None = None) -> ConditionalSamples:
    """Zero cells conditioned on containing ``K``, by rejection.

    The window is centred at the origin with a radius covering ``K``; a draw
    is accepted when no hyperplane hits ``K``, which happens with
    probability ``exp(-2 n Phi(K))``.  At most ``max_draws`` draws are made
    (default ``100 * n_accept / exp(-2 n Phi(K))``).
    """
    K.require_body()
    d = K.dim
    o = np.zeros(d)
    hK = support(K, params.phi.atoms)
    hKn = support(K, -params.phi.atoms)
    if np.any(hK <= 0) or np.any(hKn <= 0):
        raise ValueError("the origin must be an interior point of K")
    rate = math.exp(-2.0 * params.n * phi_functional(K, params.phi))
    if rate < 1e-4:
        log.warning("acceptance probability %.3g is very small", rate)
    R = params.R if params.R is not None else default_radius(K, params.phi, params.n, o)
    zparams = ProcessParams(params.n, params.phi, R, params.seed, params.window_facets, params.max_doublings)
    point = VPolytope(o[None, :])
    budget = int(math.ceil(100 * n_accept / rate)) if max_draws is None else max_draws
    out: list[KCellSample] = []
    k = start_index
    draws = 0
    while len(out) < n_accept:
        if draws >= budget:
            raise BudgetExceededError(f"accepted {len(out)} of {n_accept} in {draws} draws")
        rng = substream(params.seed, k)
        draw = draw_hyperplanes(point, zparams, rng, R, o)
        hits = draw.b <= support(K, draw.A) if draw.count else np.zeros(0, dtype=bool)
        draws += 1
        if not hits.any():
            out.append(_complete_cell(draw, zparams, rng, o, d))
        k += 1
    return ConditionalSamples(out, draws, len(out), rate)


def _complete_cell(draw: HyperplaneDraw, params: ProcessParams, rng, c, d) -> KCellSample:
    """Build the zero cell from already-drawn initial hyperplanes, extending the window if needed."""
    R = params.R
    A, b, count = draw.A, draw.b, draw.count
    zero = np.zeros(len(params.phi))
    hit = False
    for dbl in range(params.max_doublings + 1):
        inter = halfspace_intersection(HPolytope(A, b) if len(b) else [], R, c, dim=d,
                                       window_facets=params.window_facets)
        V = inter.polytope.vertices
        if not inter.window_active and np.linalg.norm(V - c, axis=1).max() < R:
            return KCellSample(A, b, inter.polytope, c, R, count, hit, dbl, params.window_facets)
        hit = True
        if dbl == params.max_doublings:
            break
        shell = _draw(params.phi, zero, zero, R, 2.0 * R, params.n, c, rng)
        A, b = np.vstack([A, shell.A]), np.concatenate([b, shell.b])
        count += shell.count
        R *= 2.0
    raise WindowError(f"cell still touches the window after {params.max_doublings} doublings")
