"""Statistical checks of the K-cell inequalities and of the excess-volume identity.

Each check compares a Monte Carlo estimate with bounds computed
deterministically from the separation body at level ``1/n``, and returns a
:class:`TheoremReport`.  Verdicts follow one rule: *pass* when the whole
confidence interval respects every bound, *fail* when the whole interval
violates one, *inconclusive* otherwise.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .directional import DirectionalDistribution
from .geometry import VPolytope, mean_width, support, volume
from .poisson import (
    EstimateWithCI,
    FunctionalEstimates,
    ProcessParams,
    _default_quad,
    conditional_zero_cell,
    estimate_functionals,
    integral_313,
    sample_kcell,
)
from .sepbody import SeparationQuery, sepbody_mean_width, sepbody_volume, support_sepbody

__all__ = [
    "TheoremReport",
    "verdict",
    "simulate",
    "check_thm32",
    "check_thm33",
    "check_thm31",
    "check_eq313",
    "check_conditional",
    "run_suite",
    "LOWER",
    "UPPER",
]

LOWER = math.exp(-1.0)
UPPER = 1.0 + math.exp(-1.0)


@dataclass(frozen=True)
class TheoremReport:
    theorem: str
    body: dict
    phi: str
    n: int
    probes: list
    lower: float | None
    upper: float | None
    estimate: dict
    verdict: str
    ratio: float | None = None
    details: dict = field(default_factory=dict)
    runtime: float = 0.0

    def to_dict(self, timing: bool = False) -> dict:
        out = asdict(self)
        if not timing:
            out.pop("runtime")
        return out

    def to_json(self, timing: bool = False) -> str:
        """Canonical JSON; the runtime is left out unless asked for, so reruns are byte-identical."""
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2)


def verdict(ci: tuple[float, float], lower: float | None = None, upper: float | None = None) -> str:
    lo, hi = ci
    fail = (lower is not None and hi < lower) or (upper is not None and lo > upper)
    if fail:
        return "fail"
    ok = (lower is None or lo >= lower) and (upper is None or hi <= upper)
    return "pass" if ok else "inconclusive"


def _shift(est: EstimateWithCI, offset: float) -> EstimateWithCI:
    return EstimateWithCI(est.mean - offset, est.n, est.se, est.level)


def _est_dict(est: EstimateWithCI) -> dict:
    return est.to_dict()


def _body(K: VPolytope) -> dict:
    return {"vertices": K.vertices.tolist()}


def _as_atom(phi: DirectionalDistribution, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    U, _ = phi.expanded()
    k = int(np.argmin(np.linalg.norm(U - u, axis=1)))
    if np.linalg.norm(U[k] - u) > 1e-9:
        raise ValueError("probe direction must be an atom of the directional distribution")
    return U[k]


def simulate(K, phi, n, N_reps, probes, *, seed: int = 0, R: float | None = None,
             level: float = 0.99, workers: int = 1) -> FunctionalEstimates:
    """One shared simulation feeding several checks."""
    params = ProcessParams(n, phi, R, seed)
    return estimate_functionals(K, params, N_reps, probes, level=level, workers=workers)


def _ensure(est, K, phi, n, N_reps, probes, seed, R, level, workers):
    if est is not None:
        return est
    return simulate(K, phi, n, N_reps, probes, seed=seed, R=R, level=level, workers=workers)


def check_thm32(K: VPolytope, phi: DirectionalDistribution, n: int, u, N_reps: int = 10_000, *,
                seed: int = 0, R: float | None = None, level: float = 0.99, workers: int = 1,
                estimates: FunctionalEstimates | None = None,
                lower_factor: float = LOWER, upper_factor: float = UPPER) -> TheoremReport:
    """Support-function sandwich at an atom direction ``u``.

    With ``g = h(K[phi, 1/n], u) - h(K, u)`` asserts
    ``lower_factor * g <= E h(Z_K, u) - h(K, u) <= upper_factor * g``.
    The factors are parameters only so the harness can be fed a wrong
    bound and seen to fail.
    """
    t0 = time.perf_counter()
    u = _as_atom(phi, u)
    est = _ensure(estimates, K, phi, n, N_reps, [u], seed, R, level, workers)
    j = int(np.argmin(np.linalg.norm(est.probes - u, axis=1)))
    if np.linalg.norm(est.probes[j] - u) > 1e-9:
        raise ValueError("shared estimates do not contain this probe")
    hK = float(support(K, u))
    g = support_sepbody(SeparationQuery(K, phi, 1.0 / n), u) - hK
    excess = _shift(est.Eh(j), hK)
    lo, hi = lower_factor * g, upper_factor * g
    return TheoremReport(
        theorem="thm32",
        body=_body(K),
        phi=phi.describe(),
        n=n,
        probes=[u.tolist()],
        lower=lo,
        upper=hi,
        estimate=_est_dict(excess),
        verdict=verdict(excess.ci, lo, hi),
        ratio=excess.mean / g if g > 0 else None,
        details={"gap": g, "h_K": hK, "seed": seed, "reps": est.n_reps},
        runtime=time.perf_counter() - t0,
    )


def check_thm33(K: VPolytope, phi: DirectionalDistribution, n: int, N_reps: int = 10_000, *,
                seed: int = 0, R: float | None = None, level: float = 0.99, workers: int = 1,
                estimates: FunctionalEstimates | None = None,
                lower_factor: float = LOWER, upper_factor: float = UPPER) -> TheoremReport:
    """Mean-width sandwich with gap ``W(K[phi, 1/n]) - W(K)``.

    Both widths and the simulated ``W(Z_K)`` use the same sphere quadrature
    (``phi`` itself for sigma quadratures).
    """
    t0 = time.perf_counter()
    quad = _default_quad(phi)
    est = _ensure(estimates, K, phi, n, N_reps, [phi.atoms[0]], seed, R, level, workers)
    WK = mean_width(K, quad)
    g = sepbody_mean_width(SeparationQuery(K, phi, 1.0 / n), quad) - WK
    excess = _shift(est.EW, WK)
    lo, hi = lower_factor * g, upper_factor * g
    return TheoremReport(
        theorem="thm33",
        body=_body(K),
        phi=phi.describe(),
        n=n,
        probes=[],
        lower=lo,
        upper=hi,
        estimate=_est_dict(excess),
        verdict=verdict(excess.ci, lo, hi),
        ratio=excess.mean / g if g > 0 else None,
        details={"gap": g, "W_K": WK, "quad": quad.describe(), "seed": seed, "reps": est.n_reps},
        runtime=time.perf_counter() - t0,
    )


def check_thm31(K: VPolytope, phi: DirectionalDistribution, n: int, N_reps: int = 10_000, *,
                seed: int = 0, R: float | None = None, level: float = 0.99, workers: int = 1,
                estimates: FunctionalEstimates | None = None,
                lower_factor: float = LOWER) -> TheoremReport:
    """Volume lower bound ``lower_factor * (V(K[phi, 1/n]) - V(K)) <= E V(Z_K) - V(K)``; no upper bound."""
    t0 = time.perf_counter()
    est = _ensure(estimates, K, phi, n, N_reps, [phi.atoms[0]], seed, R, level, workers)
    VK = volume(K)
    g = sepbody_volume(SeparationQuery(K, phi, 1.0 / n)) - VK
    excess = _shift(est.EV, VK)
    lo = lower_factor * g
    return TheoremReport(
        theorem="thm31",
        body=_body(K),
        phi=phi.describe(),
        n=n,
        probes=[],
        lower=lo,
        upper=None,
        estimate=_est_dict(excess),
        verdict=verdict(excess.ci, lo, None),
        ratio=excess.mean / g if g > 0 else None,
        details={"gap": g, "V_K": VK, "seed": seed, "reps": est.n_reps},
        runtime=time.perf_counter() - t0,
    )


def check_eq313(K: VPolytope, phi: DirectionalDistribution, n: int, N_reps: int = 30_000, *,
                seed: int = 0, R: float | None = None, level: float = 0.99, workers: int = 1,
                estimates: FunctionalEstimates | None = None, offset: float = 0.0) -> TheoremReport:
    """Simulated ``E V(Z_K) - V(K)`` against the deterministic integral.

    Passes when ``|difference| <= 3 (MC standard error + quadrature error)``.
    ``offset`` is added to the integral (harness self-test only).
    """
    t0 = time.perf_counter()
    est = _ensure(estimates, K, phi, n, N_reps, [phi.atoms[0]], seed, R, level, workers)
    VK = volume(K)
    excess = _shift(est.EV, VK)
    integ = integral_313(K, phi, n)
    target = integ.value + offset
    tol = 3.0 * (excess.se + integ.error)
    diff = excess.mean - target
    return TheoremReport(
        theorem="eq313",
        body=_body(K),
        phi=phi.describe(),
        n=n,
        probes=[],
        lower=target - tol,
        upper=target + tol,
        estimate=_est_dict(excess),
        verdict="pass" if abs(diff) <= tol else "fail",
        ratio=excess.mean / target if target > 0 else None,
        details={"integral": integ.value, "quadrature_error": integ.error, "grid": integ.grid,
                 "difference": diff, "tolerance": tol, "seed": seed, "reps": est.n_reps},
        runtime=time.perf_counter() - t0,
    )


def _cell_stats(cells, u0, quad):
    h = np.array([c.support(u0) for c in cells])
    W = np.array([mean_width(c.polytope, quad) for c in cells])
    V = np.array([volume(c.polytope) for c in cells])
    return h, W, V


def check_conditional(K: VPolytope, phi: DirectionalDistribution, n: int, N_accept: int = 2000, *,
                      seed: int = 0, u0=None, direct_n: int | None = None,
                      alpha: float = 0.01) -> TheoremReport:
    """Zero cells conditioned on containing ``K`` versus directly sampled K-cells.

    Two-sample Kolmogorov-Smirnov tests on ``h(Z, u0)``, ``W(Z)`` and
    ``V(Z)``; passes when every p-value exceeds ``alpha``.  ``K`` must
    contain the origin in its interior.  ``direct_n`` changes the intensity
    of the direct sampler (harness self-test only).
    """
    t0 = time.perf_counter()
    quad = _default_quad(phi)
    u0 = phi.atoms[0] if u0 is None else np.asarray(u0, dtype=float)
    cond = conditional_zero_cell(K, ProcessParams(n, phi, None, seed), N_accept)
    # direct sampler on a disjoint seed so the two samples are independent
    dparams = ProcessParams(n if direct_n is None else direct_n, phi, None, (seed + 1) % 2 ** 64)
    direct = [sample_kcell(K, dparams, k) for k in range(N_accept)]
    a = _cell_stats(cond.samples, u0, quad)
    b = _cell_stats(direct, u0, quad)
    pvals = {name: float(stats.ks_2samp(x, y).pvalue) for name, x, y in zip("hWV", a, b)}
    ok = all(p > alpha for p in pvals.values())
    rate = cond.accepted / cond.draws
    return TheoremReport(
        theorem="conditional",
        body=_body(K),
        phi=phi.describe(),
        n=n,
        probes=[np.asarray(u0).tolist()],
        lower=alpha,
        upper=None,
        estimate={"acceptance_rate": rate, "expected_rate": cond.expected_rate, "draws": cond.draws},
        verdict="pass" if ok else "fail",
        details={"ks_pvalues": pvals, "seed": seed, "accepted": cond.accepted},
        runtime=time.perf_counter() - t0,
    )


def run_suite(K: VPolytope, phi: DirectionalDistribution, n: int, probes: Sequence, N_reps: int, *,
              seed: int = 0, R: float | None = None, level: float = 0.99,
              workers: int = 1) -> list[TheoremReport]:
    """Theorem checks sharing a single simulation: one support check per probe, then width and volume."""
    probes = [_as_atom(phi, u) for u in probes]
    est = simulate(K, phi, n, N_reps, probes, seed=seed, R=R, level=level, workers=workers)
    kw = dict(seed=seed, R=R, level=level, estimates=est)
    reports = [check_thm32(K, phi, n, u, N_reps, **kw) for u in probes]
    reports.append(check_thm33(K, phi, n, N_reps, **kw))
    reports.append(check_thm31(K, phi, n, N_reps, **kw))
    return reports
