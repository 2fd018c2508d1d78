import json
import math

import numpy as np
import pytest
from scipy import stats

from sepkit.directional import make_axes, make_sigma, phi_functional
from sepkit.errors import BudgetExceededError, WindowError
from sepkit.geometry import Hyperplane, VPolytope, mean_width, support, volume
from sepkit.poisson import (
    ProcessParams,
    conditional_zero_cell,
    default_radius,
    draw_hyperplanes,
    estimate_functionals,
    hyperplane_counts,
    integral_313,
    sample_kcell,
    sample_zero_cell,
    substream,
)
from sepkit.sepbody import psi_value

from conftest import CUBE, SQUARE, TRIANGLE

AXES = make_axes(2)


def _poisson_chi2(counts, mean):
    """Chi-square goodness of fit against Poisson(mean), pooling sparse tails."""
    kmax = counts.max()
    ks = np.arange(kmax + 1)
    probs = stats.poisson.pmf(ks, mean)
    probs[-1] += stats.poisson.sf(kmax, mean)
    obs = np.bincount(counts, minlength=kmax + 1).astype(float)
    exp = probs * len(counts)
    # merge bins from both ends until every expected count is at least 5
    bins_o, bins_e, acc_o, acc_e = [], [], 0.0, 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= 5:
            bins_o.append(acc_o)
            bins_e.append(acc_e)
            acc_o = acc_e = 0.0
    bins_o[-1] += acc_o
    bins_e[-1] += acc_e
    return stats.chisquare(bins_o, bins_e).pvalue


# ---------------------------------------------------------------- parameters

def test_params_validation():
    with pytest.raises(ValueError):
        ProcessParams(0, AXES)
    with pytest.raises(ValueError):
        ProcessParams(2, AXES, R=-1.0)
    with pytest.raises(ValueError):
        ProcessParams(2, AXES, seed=-3)


def test_window_must_cover_body(square):
    with pytest.raises(ValueError):
        sample_kcell(square, ProcessParams(2, AXES, R=0.5))


def test_default_radius(square):
    assert default_radius(square, AXES, 4) == pytest.approx(4 * 1 + 2)


def test_substreams_are_independent_of_order():
    a = substream(7, 3).random(5)
    substream(7, 1).random(100)
    assert np.array_equal(a, substream(7, 3).random(5))
    assert not np.array_equal(a, substream(7, 4).random(5))


# ---------------------------------------------------------------- hyperplane law

def test_counts_are_poisson(square):
    p = ProcessParams(3, make_sigma(2, 12), R=4.0, seed=1)
    c = hyperplane_counts(square, p, 20_000)
    mean = 2 * 3 * (4.0 - phi_functional(square, p.phi))
    assert abs(c.mean() - mean) < 3 * math.sqrt(mean / len(c))
    assert c.var() == pytest.approx(mean, rel=0.05)
    assert _poisson_chi2(c, mean) > 0.01


def test_zero_cell_counts():
    p = ProcessParams(2, AXES, R=3.0, seed=2)
    c = hyperplane_counts(VPolytope([[0.0, 0.0]]), p, 20_000)
    assert abs(c.mean() - 12.0) < 3 * math.sqrt(12.0 / len(c))


def test_window_band_counts_and_independence(square):
    """Counts in a direction band times an offset interval are Poisson with mean n * nu(band)."""
    phi = make_sigma(2, 12)
    n, R = 2, 5.0
    p = ProcessParams(n, phi, R=R, seed=4)
    band = np.arange(0, 4)
    I1, I2 = (1.5, 2.5), (3.0, 4.5)
    c1, c2 = [], []
    for k in range(20_000):
        dr = draw_hyperplanes(square, p, substream(p.seed, k))
        sel = np.isin(dr.atom, band) & (dr.sign > 0)
        c1.append(int(np.count_nonzero(sel & (dr.offset >= I1[0]) & (dr.offset < I1[1]))))
        c2.append(int(np.count_nonzero(sel & (dr.offset >= I2[0]) & (dr.offset < I2[1]))))
    c1, c2 = np.array(c1), np.array(c2)
    # offsets are measured from the window centre (the centroid, here the origin)
    h = support(square, phi.atoms[band])
    mass = lambda I: sum(2 * w * max(0.0, I[1] - max(I[0], hh)) for w, hh in zip(phi.weights[band], h))
    assert _poisson_chi2(c1, n * mass(I1)) > 0.01
    assert _poisson_chi2(c2, n * mass(I2)) > 0.01
    assert abs(np.corrcoef(c1, c2)[0, 1]) < 3 / math.sqrt(len(c1))


def test_drawn_hyperplanes_miss_the_body(triangle):
    p = ProcessParams(5, make_sigma(2, 60), seed=4)
    for k in range(200):
        dr = draw_hyperplanes(triangle, p, substream(4, k))
        assert np.all(dr.b >= support(triangle, dr.A))


# ---------------------------------------------------------------- cells

def test_cells_contain_the_body():
    rng = np.random.default_rng(0)
    for K, phi in ((VPolytope(TRIANGLE), make_sigma(2, 36)), (VPolytope(CUBE), make_sigma(3, 30))):
        p = ProcessParams(3, phi, seed=5)
        for k in range(30):
            cell = sample_kcell(K, p, k)
            for u in rng.normal(size=(20, K.dim)):
                assert cell.support(u) >= support(K, u) - 1e-9
                assert support(cell.polytope, u) == pytest.approx(cell.support(u), abs=1e-9)
            assert np.linalg.norm(cell.polytope.vertices - cell.center, axis=1).max() < cell.R


def test_zero_cell_contains_origin():
    p = ProcessParams(4, make_sigma(2, 36), seed=6)
    for k in range(50):
        cell = sample_zero_cell(p, k)
        assert np.all(cell.b >= 0)


def test_small_window_is_regenerated(square):
    p = ProcessParams(1, AXES, R=1.5, seed=7)
    cells = [sample_kcell(square, p, k) for k in range(200)]
    assert any(c.hit_window for c in cells)
    for c in cells:
        assert c.R == 1.5 * 2 ** c.doublings
        assert np.linalg.norm(c.polytope.vertices - c.center, axis=1).max() < c.R


def test_window_error_after_doublings(square):
    p = ProcessParams(1, AXES, R=1.5, seed=8, max_doublings=0)
    with pytest.raises(WindowError):
        for k in range(200):
            sample_kcell(square, p, k)


def test_sampling_is_deterministic(triangle):
    p = ProcessParams(3, make_sigma(2, 36), seed=9)
    a, b = sample_kcell(triangle, p, 17), sample_kcell(triangle, p, 17)
    assert np.array_equal(a.polytope.vertices, b.polytope.vertices)
    c = sample_kcell(triangle, p, np.random.default_rng(1))
    assert c.count >= 0


# ---------------------------------------------------------------- estimates

def test_square_axes_closed_form(square):
    # with axis directions the cell is a box with sides 1 + Exp(n/2) on each side
    n = 4
    est = estimate_functionals(square, ProcessParams(n, AXES, seed=10), 4000, [[1, 0]])
    assert abs(est.Eh(0).mean - (1 + 2 / n)) < 3 * est.Eh(0).se
    assert abs(est.EV.mean - 9.0) < 3 * est.EV.se


def test_cube_axes_closed_form(cube):
    n = 5
    est = estimate_functionals(cube, ProcessParams(n, make_axes(3), seed=11), 600, [[1, 0, 0]])
    assert abs(est.Eh(0).mean - (1 + 3 / n)) < 3 * est.Eh(0).se
    assert abs(est.EV.mean - (2 + 6 / n) ** 3) < 3 * est.EV.se


def test_estimates_reproducible_and_worker_independent(triangle):
    p = ProcessParams(2, make_sigma(2, 36), seed=12)
    a = estimate_functionals(triangle, p, 120, [[1, 0], [0, 1]])
    b = estimate_functionals(triangle, p, 120, [[1, 0], [0, 1]])
    c = estimate_functionals(triangle, p, 120, [[1, 0], [0, 1]], workers=2)
    for other in (b, c):
        assert np.array_equal(a.h, other.h) and np.array_equal(a.V, other.V) and np.array_equal(a.W, other.W)


def test_replication_count_minimum(square):
    with pytest.raises(ValueError):
        estimate_functionals(square, ProcessParams(2, AXES), 50, [[1, 0]])


def test_failing_replication_reports_index(square):
    with pytest.raises(RuntimeError, match="replication 0"):
        estimate_functionals(square, ProcessParams(2, AXES, R=0.5), 100, [[1, 0]])


def test_large_intensity_pins_cell_to_body():
    K = VPolytope(0.2 * SQUARE)
    phi = make_sigma(2, 60)
    lo = estimate_functionals(K, ProcessParams(20, phi, seed=13), 200, [[1, 0]])
    hi = estimate_functionals(K, ProcessParams(200, phi, seed=13), 200, [[1, 0]])
    # ten times the intensity at least halves every excess
    assert hi.Eh(0).mean - 0.2 < 0.5 * (lo.Eh(0).mean - 0.2)
    assert hi.EV.mean - volume(K) < 0.5 * (lo.EV.mean - volume(K))
    assert hi.EW.mean - mean_width(K, phi) < 0.5 * (lo.EW.mean - mean_width(K, phi))


def test_expected_volume_decreases_with_intensity(square):
    phi = make_sigma(2, 36)
    ests = [estimate_functionals(square, ProcessParams(n, phi, seed=14), 400, [[1, 0]]).EV for n in (1, 2, 4, 8)]
    for a, b in zip(ests, ests[1:]):
        assert a.mean > b.mean - 3 * math.hypot(a.se, b.se)


def test_zero_cell_width_decreases_with_intensity():
    phi = make_sigma(2, 36)
    o = VPolytope([[0.0, 0.0]])
    ests = [estimate_functionals(o, ProcessParams(n, phi, seed=15), 400, [[1, 0]]).EW for n in (1, 2, 4, 8)]
    assert all(a.mean > b.mean for a, b in zip(ests, ests[1:]))


def test_window_insensitivity(triangle):
    phi = make_sigma(2, 36)
    R0 = default_radius(triangle, phi, 2)
    a = estimate_functionals(triangle, ProcessParams(2, phi, R=R0, seed=16), 1500, [[1, 0]])
    b = estimate_functionals(triangle, ProcessParams(2, phi, R=2 * R0, seed=17), 1500, [[1, 0]])
    for x, y in ((a.EV, b.EV), (a.EW, b.EW), (a.Eh(0), b.Eh(0))):
        assert abs(x.mean - y.mean) < 3 * math.hypot(x.se, y.se)


def test_survival_lower_bound(square):
    phi = make_sigma(2, 36)
    n = 3
    u = phi.atoms[4]
    est = estimate_functionals(square, ProcessParams(n, phi, seed=18), 3000, [u])
    h = support(square, u)
    for t in h + np.array([0.05, 0.15, 0.3, 0.5, 0.8]):
        p_hat = (est.h[:, 0] >= t).mean()
        se = math.sqrt(max(p_hat * (1 - p_hat), 1e-12) / est.n_reps)
        bound = math.exp(-n * psi_value(Hyperplane(u, t), square, phi).value)
        assert p_hat >= bound - 3 * se


def test_sample_records(tmp_path, square):
    est = estimate_functionals(square, ProcessParams(2, AXES, seed=19), 100, [[1, 0]])
    path = tmp_path / "samples.jsonl"
    est.write_jsonl(path)
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(recs) == 100
    assert set(recs[0]) == {"seed_index", "count", "hit_window", "V", "W", "h"}
    assert recs[5]["seed_index"] == 5 and recs[5]["V"] == est.V[5]


# ---------------------------------------------------------------- excess-volume integral

def test_integral_square_axes_exact(square):
    # (2 + 2/n)^2 - 4 with n = 4
    res = integral_313(square, AXES, 4)
    assert abs(res.value - 5.0) <= max(res.error, 1e-3)


def test_integral_cube_axes_exact(cube):
    res = integral_313(cube, make_axes(3), 5)
    assert abs(res.value - (3.2 ** 3 - 8)) <= 3 * res.error


def test_integral_matches_point_sampling(triangle):
    phi = make_sigma(2, 36)
    n = 4
    res = integral_313(triangle, phi, n)
    rng = np.random.default_rng(20)
    lo, hi = np.array([-4.0, -4.5]), np.array([6.0, 5.5])
    X = rng.uniform(lo, hi, size=(400_000, 2))
    U, W = phi.expanded()
    hK = support(triangle, U)
    m = 2 * np.maximum(X @ U.T - hK, 0) @ W
    f = np.exp(-n * m) * np.prod(hi - lo)
    mc, se = f.mean() - volume(triangle), f.std() / math.sqrt(len(f))
    assert abs(res.value - mc) < 3 * (se + res.error)


def test_integral_decreases_with_intensity(triangle):
    phi = make_sigma(2, 36)
    vals = [integral_313(triangle, phi, n).value for n in (5, 10, 20)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_integral_translation_invariant(triangle):
    phi = make_sigma(2, 36)
    a = integral_313(triangle, phi, 5)
    b = integral_313(triangle.translate([0.3, 0.7]), phi, 5)
    assert b.value == pytest.approx(a.value, abs=1e-9)


def test_integral_matches_simulation(square):
    est = estimate_functionals(square, ProcessParams(4, make_sigma(2, 36), seed=21), 3000, [[1, 0]])
    res = integral_313(square, make_sigma(2, 36), 4)
    assert abs(est.EV.mean - 4.0 - res.value) < 3 * (est.EV.se + res.error)


# ---------------------------------------------------------------- conditioning

def test_conditional_acceptance_rate():
    K = VPolytope(0.5 * SQUARE)
    p = ProcessParams(2, AXES, seed=22)
    out = conditional_zero_cell(K, p, 400)
    rate = math.exp(-2 * 2 * phi_functional(K, AXES))
    p_hat = out.accepted / out.draws
    assert out.expected_rate == pytest.approx(rate)
    assert abs(p_hat - rate) < 3 * math.sqrt(rate * (1 - rate) / out.draws)
    for cell in out.samples:
        assert np.all(cell.b >= support(K, cell.A) - 1e-12)


def test_conditional_tiny_body_accepts_almost_always():
    K = VPolytope(1e-3 * SQUARE)
    out = conditional_zero_cell(K, ProcessParams(1, AXES, seed=23), 200)
    assert out.accepted / out.draws > 0.99


def test_conditional_budget():
    K = VPolytope(3 * SQUARE)
    with pytest.raises(BudgetExceededError):
        conditional_zero_cell(K, ProcessParams(2, AXES, seed=24), 5, max_draws=3)


def test_conditional_requires_interior_origin():
    with pytest.raises(ValueError):
        conditional_zero_cell(VPolytope(SQUARE + 2.0), ProcessParams(1, AXES), 5)


def test_conditional_matches_direct_sampling():
    K = VPolytope(0.1 * SQUARE)
    phi = make_sigma(2, 36)
    p = ProcessParams(2, phi, seed=25)
    cond = conditional_zero_cell(K, p, 800)
    direct = [sample_kcell(K, ProcessParams(2, phi, seed=26), k) for k in range(800)]
    u = phi.atoms[3]
    a = [c.support(u) for c in cond.samples]
    b = [c.support(u) for c in direct]
    assert stats.ks_2samp(a, b).pvalue > 0.01
    va = [volume(c.polytope) for c in cond.samples]
    vb = [volume(c.polytope) for c in direct]
    assert stats.ks_2samp(va, vb).pvalue > 0.01
