"""Acceptance suite: one group of tests per numbered criterion, with runtime budgets.

A per-criterion pass/fail summary is printed at the end of the pytest run.
"""
import math
import time

import numpy as np
import pytest

from charfol import diffusion as D
from charfol import foliation as F
from charfol import models as M
from charfol import operators as O
from charfol.artifacts import dump_json


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def leaf_into_point(sf, start, max_length=5.0, step=1e-3):
    target = sf.char_points_expected[-1]
    d = M.direction_towards(sf, start, target)
    return F.trace_leaf(sf.on_sheet(), sf.cs, start, d, step, F.StopRule(max_length=max_length))


# 1. closed-form drift along traced leaves -------------------------------------------

def _drift_cases():
    """(surface, start, distance from start to the point, drift as a function of that distance)."""
    out = []
    for a in (0.0, 0.25, 1.0):
        sf = M.paraboloid(a)
        out.append((sf, M.point_near(sf, 1.0, 0.4), math.sqrt(1 + 16 * a * a), lambda s: 2.0 / s))
    sf = M.spheroid(1.0, 1.0)

    def spheroid_b(s):
        th = M.spheroid_angle_at(1.0, 1.0, s)
        return 2.0 / math.tan(th) / math.sqrt(4.0 + math.cos(th) ** 2)

    out.append((sf, M.point_near(sf, 1.0, 0.4), M.spheroid_arclength(1.0, 1.0, 1.0), spheroid_b))
    for a in (0.25, 1.0):
        sf = M.hyperbolic_paraboloid(a)
        oy, ox = M.axis_bessel_orders(a)
        for start, order in (([1, 0, 0], ox), ([-1, 0, 0], ox), ([0, 1, 0], oy), ([0, -1, 0], oy)):
            out.append((sf, np.array(start, float), 1.0, lambda s, o=order: (o - 1.0) / s))
    sf = M.su2_sphere(1.0)
    out.append((sf, M.point_near(sf, 1.0, 0.4), 1.0, lambda s: 2.0 / math.tan(s)))
    sf = M.sl2_plane(1.0)
    out.append((sf, M.point_near(sf, 1.0, 0.4), 1.0, lambda s: 2.0 / math.tanh(s)))
    return out


@pytest.mark.criterion(1)
def test_criterion_1_closed_form_drift(record_property):
    def run():
        worst_point, worst_arc = 0.0, 0.0
        for sf, start, dist, law in _drift_cases():
            tr = leaf_into_point(sf, start)
            assert tr.terminated_by is F.Termination.NEAR_CHARACTERISTIC_POINT
            L = tr.s[-1]
            mid = (tr.s >= 0.1 * L) & (tr.s <= 0.9 * L)
            for s, p, b in zip(tr.s[mid], tr.points[mid], tr.b[mid]):
                worst_point = max(worst_point, abs(abs(b) - abs(sf.closed_form_b(p))))
                worst_arc = max(worst_arc, abs(abs(b) - abs(law(dist - s))))
        return worst_point, worst_arc

    (wp, wa), dt = timed(run)
    record_property("detail", f"max |b - closed form| {wp:.2e} by position, {wa:.2e} by arc length; {dt:.1f}s")
    assert wp <= 1e-5
    assert wa <= 1e-5
    assert dt < 30


# 2. trace identity -------------------------------------------------------------------

BUILT_IN = ([M.paraboloid(a) for a in (0.0, 0.25, 1.0, 3.0)]
            + [M.spheroid(1.0, 1.0), M.spheroid(2.0, 0.5)]
            + [M.hyperbolic_paraboloid(a) for a in (0.25, 0.5, 1.0)]
            + [M.su2_sphere(1.0), M.su2_sphere(0.5), M.sl2_plane(1.0)]
            + [M.canonical_exp_surface(kappa, 1.0) for kappa in (0.0, 4.0, -4.0)])


@pytest.mark.criterion(2)
def test_criterion_2_eigenvalue_sum(record_property):
    def run():
        worst, n = 0.0, 0
        for sf in BUILT_IN:
            pts = F.find_characteristic_points(sf.on_sheet(), sf.cs, F.default_seeds(sf.spec))
            assert pts, sf.name
            for p in pts:
                rep = F.classify(sf.spec, sf.cs, p)
                if rep.cls is F.PointClass.DEGENERATE:
                    continue
                worst = max(worst, abs(complex(sum(rep.eigenvalues)) - 1.0))
                n += 1
        return worst, n

    (worst, n), dt = timed(run)
    record_property("detail", f"{n} non-degenerate points, max |l1 + l2 - 1| {worst:.1e}; {dt:.1f}s")
    assert n >= 15
    assert worst <= 1e-8
    assert dt < 5


# 3. operator convergence -------------------------------------------------------------

@pytest.fixture(scope="module")
def convergence():
    def run():
        sf = M.paraboloid(1.0)
        center = M.point_near(sf, 1.0, 0.0)
        pts = O.sample_in_support(sf.spec, sf.cs, center, 0.5, 50, np.random.default_rng(0))
        return O.convergence_study(sf.spec, sf.cs, O.bump(center, 0.5), pts, O.default_eps_list())

    return timed(run)


@pytest.mark.criterion(3)
def test_criterion_3_order(convergence, record_property):
    rep, dt = convergence
    orders = rep.empirical_order
    record_property("detail", f"orders {' '.join(f'{q:.4f}' for q in orders)}; {dt:.1f}s")
    assert all(0.8 <= q <= 1.2 for q in orders)
    assert dt < 60


@pytest.mark.criterion(3)
def test_criterion_3_error_ratio(convergence, record_property):
    rep, _ = convergence
    ratio = rep.max_error_per_eps[-1] / rep.max_error_per_eps[0]
    record_property("detail", f"err(1e-5)/err(1e-1) = {ratio:.4e} (target <= 1e-4)")
    assert ratio <= 1e-4


# 4. curvature ------------------------------------------------------------------------

MODEL_SURFACES = [M.paraboloid(1.0), M.spheroid(1.0, 1.0), M.hyperbolic_paraboloid(1.0), M.su2_sphere(1.0),
                  M.sl2_plane(1.0)] + [M.canonical_exp_surface(kappa, 1.0) for kappa in (0.0, 4.0, -4.0)]


@pytest.fixture(scope="module")
def curvature():
    def run():
        eps = O.default_eps_list()
        rng = np.random.default_rng(4)
        out = {}
        for sf in MODEL_SURFACES:
            pts = [M.point_near(sf, rng.uniform(0.2, 1.2), rng.uniform(0, 2 * math.pi)) for _ in range(100)]
            out[f"{sf.name}{sf.params}"] = O.curvature_sweep(sf.on_sheet(), sf.cs, pts, eps)
        return out

    return timed(run)


@pytest.mark.criterion(4)
def test_criterion_4_riccati(curvature, record_property):
    sweeps, dt = curvature
    worst = max(abs(s.riccati_residual) for sw in sweeps.values() for s in sw)
    record_property("detail", f"max Riccati residual {worst:.2e} over {len(sweeps)} surfaces x 100 points; {dt:.1f}s")
    assert worst <= 1e-6
    assert dt < 60


@pytest.mark.criterion(4)
def test_criterion_4_monotone(curvature, record_property):
    sweeps, _ = curvature
    eps = O.default_eps_list()
    bad = {}
    for name, sw in sweeps.items():
        for s in sw:
            gaps = [abs(s.K_eps[e] - s.K0) for e in eps]
            if not all(g2 <= 1.05 * g1 for g1, g2 in zip(gaps, gaps[1:])):
                bad[name] = bad.get(name, 0) + 1
    record_property("detail", f"non-monotone points: {bad or 'none'}")
    assert not bad


# 5. expansion exponents -------------------------------------------------------------

def _expansion_cases():
    out = []
    for a in (0.25, 1.0, 3.0):
        sf = M.paraboloid(a)
        for psi in (0.0, 2.0, 4.0):
            out.append((f"focus a={a}", sf, M.spiral_leaf(a, psi, 0.3).array, 0.5))
    node = M.hyperbolic_paraboloid(0.25)
    saddle = M.hyperbolic_paraboloid(1.0)
    for sign in (1, -1):
        out.append(("node x", node, np.array([0.3 * sign, 0, 0]), 0.25))
        out.append(("node y", node, np.array([0, 0.3 * sign, 0]), 0.75))
        out.append(("saddle x", saddle, np.array([0.3 * sign, 0, 0]), -0.5))
        out.append(("saddle y", saddle, np.array([0, 0.3 * sign, 0]), 1.5))
    return out


@pytest.mark.criterion(5)
def test_criterion_5_expansion(record_property):
    def run():
        worst, labels = 0.0, []
        for label, sf, start, lam in _expansion_cases():
            rep = F.classify(sf.spec, sf.cs, sf.char_points_expected[-1])
            fit = F.expansion_check(rep, leaf_into_point(sf, start))
            err = abs(fit.lam - lam)
            worst = max(worst, err)
            if err > 0.02:
                labels.append(f"{label}: {fit.lam:.4f}")
        return worst, labels

    (worst, bad), dt = timed(run)
    record_property("detail", f"max |fitted - expected| {worst:.1e}; {dt:.1f}s")
    assert not bad, bad
    assert dt < 30


def test_focus_class_for_every_paraboloid():
    for a in (0.25, 1.0, 3.0):
        sf = M.paraboloid(a)
        assert F.classify(sf.spec, sf.cs, (0, 0, 0)).cls is F.PointClass.ELLIPTIC_FOCUS


# 6. accessibility ---------------------------------------------------------------------

ACCESS_CASES = [
    ("focus", M.paraboloid(1.0), "default", D.Verdict.INACCESSIBLE),
    ("node x", M.hyperbolic_paraboloid(0.25), "x-axis", D.Verdict.INACCESSIBLE),
    ("node y", M.hyperbolic_paraboloid(0.25), "y-axis", D.Verdict.INACCESSIBLE),
    ("node -x", M.hyperbolic_paraboloid(0.25), "-x-axis", D.Verdict.INACCESSIBLE),
    ("saddle x", M.hyperbolic_paraboloid(1.0), "x-axis", D.Verdict.ACCESSIBLE),
    ("saddle -x", M.hyperbolic_paraboloid(1.0), "-x-axis", D.Verdict.ACCESSIBLE),
    ("saddle y", M.hyperbolic_paraboloid(1.0), "y-axis", D.Verdict.ACCESSIBLE),
    ("saddle -y", M.hyperbolic_paraboloid(1.0), "-y-axis", D.Verdict.ACCESSIBLE),
]


def _leaf_diffusion(sf, leaf, length=1.5, step=1e-3):
    start, target = M.approach_leaf(sf, leaf, length)
    return D.approach_leaf_diffusion(sf.on_sheet(), sf.cs, start, M.direction_towards(sf, start, target),
                                     target, step, label=f"{sf.name}:{leaf}")


@pytest.mark.criterion(6)
def test_criterion_6_accessibility(record_property):
    def run():
        rows = []
        for label, sf, leaf, expected in ACCESS_CASES:
            al = _leaf_diffusion(sf, leaf)
            rep = D.classify_boundary(al.spec, "lower", al.report, al.eigen_index)
            rows.append((label, expected, rep))
        return rows

    rows, dt = timed(run)
    record_property("detail", "; ".join(f"{lab} {rep.verdict.value} q={rep.fitted_exponent_q:.3f}"
                                        for lab, _, rep in rows) + f"; {dt:.1f}s")
    for label, expected, rep in rows:
        assert rep.method is D.Method.BOTH, label
        assert rep.eigen_verdict is expected, label
        assert rep.numeric_verdict is expected, label
        assert not rep.disagreement, label
    assert dt < 10


# 7/8. Monte Carlo and reproducibility ---------------------------------------------------

SEED = 20261018


def _mc_setups():
    saddle = _leaf_diffusion(M.hyperbolic_paraboloid(1.0), "x-axis", length=10.0, step=5e-3).spec
    node = _leaf_diffusion(M.hyperbolic_paraboloid(0.25), "x-axis").spec
    cfg = dict(dt=1e-4, t_max=10.0, kill_radius=1e-3, master_seed=SEED)
    return {
        "bessel3": (D.reference_process("bessel3"), D.SimConfig(n_paths=10_000, s0=1.0, **cfg)),
        "saddle": (saddle, D.SimConfig(n_paths=10_000, s0=1.0, **cfg)),
        "node": (node, D.SimConfig(n_paths=10_000, s0=0.5 * node.domain[1], **cfg)),
        "legendre3": (D.reference_process("legendre3", 1.0),
                      D.SimConfig(n_paths=10_000, s0=math.pi / 2, **cfg)),
    }


def _run_mc(threads):
    return {name: (spec, cfg, D.simulate(spec, cfg, threads)) for name, (spec, cfg) in _mc_setups().items()}


@pytest.fixture(scope="module")
def monte_carlo():
    return timed(lambda: _run_mc(1))


@pytest.fixture(scope="module")
def legendre_oracle():
    spec = D.reference_process("legendre3", 1.0)
    cfg = D.SimConfig(dt=1e-5, t_max=10.0, n_paths=1000, kill_radius=1e-3, master_seed=SEED + 1,
                      s0=math.pi / 2)
    return timed(lambda: D.simulate(spec, cfg))


@pytest.mark.criterion(7)
def test_criterion_7_bessel3(monte_carlo, record_property):
    runs, _ = monte_carlo
    st = runs["bessel3"][2]
    lo, hi = st.wilson_ci_95
    record_property("detail", f"{st.n_hit}/{st.n_paths} hits, CI ({lo:.2e}, {hi:.2e})")
    assert lo <= 1e-3 <= hi


@pytest.mark.criterion(7)
def test_criterion_7_saddle_separatrix(monte_carlo, record_property):
    runs, _ = monte_carlo
    st = runs["saddle"][2]
    record_property("detail", f"hit fraction {st.hit_fraction:.4f}")
    assert st.hit_fraction >= 0.99


@pytest.mark.criterion(7)
def test_criterion_7_node_leaf(monte_carlo, record_property):
    runs, _ = monte_carlo
    st = runs["node"][2]
    record_property("detail", f"hit fraction {st.hit_fraction:.4f}")
    assert st.hit_fraction <= 0.01


@pytest.mark.criterion(7)
def test_criterion_7_legendre3(monte_carlo, legendre_oracle, record_property):
    runs, dt = monte_carlo
    oracle, dt_oracle = legendre_oracle
    st = runs["legendre3"][2]
    parts = []
    for side, k in (("lower", st.n_hit_lower), ("upper", st.n_hit_upper)):
        lo, hi = oracle.endpoint_ci(side)
        frac = k / st.n_paths
        parts.append((side, frac, lo, hi))
    record_property("detail", "; ".join(f"{s} {f:.2e} in ({lo:.2e}, {hi:.2e})" for s, f, lo, hi in parts)
                    + f"; MC {dt:.0f}s + oracle {dt_oracle:.0f}s")
    for side, frac, lo, hi in parts:
        assert lo <= frac <= hi, side
    assert dt + dt_oracle < 300


@pytest.mark.criterion(8)
def test_criterion_8_reproducible(monte_carlo, record_property):
    first, _ = monte_carlo
    second = _run_mc(4)
    same = []
    for name, (spec, cfg, st) in first.items():
        a = dump_json(st.report(spec, cfg, include_wall_time=False))
        b = dump_json(second[name][2].report(spec, cfg, include_wall_time=False))
        same.append(a == b)
    record_property("detail", f"{sum(same)}/{len(same)} reports identical across 1 and 4 threads")
    assert all(same)


# 9. model spaces ------------------------------------------------------------------------

@pytest.mark.criterion(9)
def test_criterion_9_model_space_drift(record_property):
    r = np.linspace(0.2, 1.2, 21)

    def run():
        worst = {}
        for kappa in (-4.0, 0.0, 4.0):
            model = M.model_space(kappa, 1.0)
            err = 0.0
            for theta in (0.0, 1.0, 2.5, 4.0):
                measured = M.exp_surface_drift_measured(model, theta, r)
                err = max(err, float(np.max(np.abs(measured - M.exp_surface_drift(kappa, 1.0, r)))))
            worst[kappa] = err
        return worst

    worst, dt = timed(run)
    record_property("detail", ", ".join(f"kappa={k:g}: {v:.1e}" for k, v in worst.items()) + f"; {dt:.1f}s")
    assert max(worst.values()) <= 1e-4
    assert dt < 60


def test_model_space_drift_forms():
    r = 0.7
    assert M.exp_surface_drift(0.0, 1.0, r) == pytest.approx(2 / r)
    assert M.exp_surface_drift(4.0, 1.0, r) == pytest.approx(2 / math.tan(r))
    assert M.exp_surface_drift(-4.0, 1.0, r) == pytest.approx(2 / math.tanh(r))
