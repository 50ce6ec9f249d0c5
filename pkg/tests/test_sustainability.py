import math

import numpy as np
import pytest

from hinterland.analysis import bracket_threshold, regime_classify
from hinterland.equilibrium import (
    ModelParams,
    fixed_point_solve,
    solve_knife_edge_system,
)
from hinterland.errors import SiteNotVacant
from hinterland.fields import Geography, amenity_from_function, trade_costs_from_metric
from hinterland.geometry import DistanceSystem, Site, build_grid
from hinterland.sustainability import (
    KNIFE_EDGE,
    STRONG_SPILLOVER,
    WEAK_SPILLOVER,
    enumerate_urban_systems,
    potential_weight,
    site_swap_experiment,
    sustainability_check,
)

EUCLID = DistanceSystem()

KNIFE = ModelParams(sigma=5.0, alpha=0.25, beta=-0.5, delta=2.0)
STRONG = ModelParams(sigma=5.0, alpha=0.3, beta=-0.5, delta=2.0)
WEAK = ModelParams(sigma=5.0, alpha=0.1, beta=-0.5, delta=2.0)


def geo_with_sites(site_specs, tau=0.5, n=64):
    grid = build_grid((0.0, 0.0, 1.0, 1.0), (n, n))
    sites = tuple(Site(i, pos, prod) for i, (pos, prod) in enumerate(site_specs))
    amen = amenity_from_function(grid, lambda x, y: np.ones_like(x))
    trade = trade_costs_from_metric(sites, EUCLID, tau=tau)
    return Geography(grid=grid, sites=sites, system=EUCLID, amenity=amen,
                     trade=trade)


THREE = (((0.15, 0.5), 1.0), ((0.85, 0.5), 1.0), ((0.5, 0.85), 1.0))


# ---------------------------------------------------------------------------
# potential weights

def test_potential_weight_sentinels_by_regime():
    geo = geo_with_sites(THREE)
    sol = fixed_point_solve(geo, STRONG, y_star=[0, 1])
    pw = potential_weight(sol, geo, STRONG, 2)
    assert pw.value == -math.inf
    assert pw.regime == STRONG_SPILLOVER
    assert not pw.is_finite

    sol = fixed_point_solve(geo, WEAK, y_star=[0, 1])
    pw = potential_weight(sol, geo, WEAK, 2)
    assert pw.value == math.inf
    assert pw.regime == WEAK_SPILLOVER


def test_potential_weight_rejects_active_site():
    geo = geo_with_sites(THREE)
    sol = fixed_point_solve(geo, KNIFE, y_star=[0, 1])
    with pytest.raises(SiteNotVacant):
        potential_weight(sol, geo, KNIFE, 0)
    with pytest.raises(ValueError):
        potential_weight(sol, geo, KNIFE, 99)


def test_potential_weight_regime_matches_classifier():
    geo = geo_with_sites(THREE)
    for params in (STRONG, WEAK, KNIFE):
        sol = fixed_point_solve(geo, params, y_star=[0, 1])
        pw = potential_weight(sol, geo, params, 2)
        regime = regime_classify(params).location_multiplicity
        expected = {"multiple": STRONG_SPILLOVER, "spread": WEAK_SPILLOVER,
                    "knife_edge": KNIFE_EDGE}[regime]
        assert pw.regime == expected
        assert pw.is_finite == (regime == "knife_edge")


def test_knife_edge_clone_reproduces_host_weight():
    # a vacant clone at an active site's exact position with equal
    # fundamentals must be offered exactly the host's equilibrium weight
    specs = (((0.3, 0.5), 1.0), ((0.7, 0.5), 1.1), ((0.3, 0.5), 1.0))
    geo = geo_with_sites(specs)
    sol = fixed_point_solve(geo, KNIFE, y_star=[0, 1])
    pw = potential_weight(sol, geo, KNIFE, 2)
    assert pw.regime == KNIFE_EDGE
    assert pw.value == pytest.approx(sol.weights[0], abs=1e-8)


def test_knife_edge_potential_weight_solves_global_system_row():
    # appending the vacant site's potential weight satisfies that site's
    # equation of the all-sites system evaluated at the restricted solution
    geo = geo_with_sites(THREE)
    sol = fixed_point_solve(geo, KNIFE, y_star=[0, 1])
    pw = potential_weight(sol, geo, KNIFE, 2)
    p = KNIFE
    st = (p.sigma - 1.0) / (2.0 * p.sigma - 1.0)
    g2 = 1.0 + p.sigma * p.alpha + (p.sigma - 1.0) * p.beta
    s = -(p.delta / p.beta) * st
    abar = geo.productivities
    total = 0.0
    for j in range(2):
        total += (geo.trade.values[2, j] ** (1.0 - p.sigma)
                  * abar[j] ** (st * p.sigma)
                  * sol.B[j] ** (-1.0 / p.beta)
                  * math.exp(s * g2 * sol.weights[j]))
    lhs = p.delta * st * p.sigma * pw.value
    rhs = (math.log(sol.welfare) / p.beta
           + st * (p.sigma - 1.0) * math.log(abar[2]) + math.log(total))
    assert abs(lhs - rhs) < 1e-6


# ---------------------------------------------------------------------------
# sustainability check

def test_strong_spillovers_lock_in_any_active_set():
    geo = geo_with_sites(THREE)
    sol = fixed_point_solve(geo, STRONG, y_star=[0, 1])
    report = sustainability_check(sol, geo, STRONG)
    assert report.verdict == "sustainable"
    assert report.vacant_ids == (2,)
    assert report.margins[2] == math.inf


def test_weak_spillovers_require_full_occupation():
    geo = geo_with_sites(THREE)
    sol = fixed_point_solve(geo, WEAK, y_star=[0, 1])
    assert sustainability_check(sol, geo, WEAK).verdict == "unsustainable"
    full = fixed_point_solve(geo, WEAK)
    report = sustainability_check(full, geo, WEAK)
    assert report.verdict == "sustainable"
    assert report.vacant_ids == ()


def test_knife_edge_weak_vacant_site_is_dominated():
    # low-productivity vacant site close to a host: the host's commuting
    # reach is strong nearby, so the deviation loses
    specs = (((0.3, 0.5), 1.0), ((0.7, 0.5), 1.0), ((0.35, 0.5), 0.5))
    geo = geo_with_sites(specs)
    sol = fixed_point_solve(geo, KNIFE, y_star=[0, 1])
    report = sustainability_check(sol, geo, KNIFE)
    assert report.verdict == "sustainable"
    assert report.regime == KNIFE_EDGE
    assert report.margins[2] > 0
    assert report.host_ids[2] in (0, 1)


def test_knife_edge_strong_vacant_site_attracts():
    # very productive vacant site adjacent to a host: deviation wins
    specs = (((0.3, 0.5), 1.0), ((0.7, 0.5), 1.0), ((0.45, 0.5), 3.0))
    geo = geo_with_sites(specs)
    sol = fixed_point_solve(geo, KNIFE, y_star=[0, 1])
    report = sustainability_check(sol, geo, KNIFE)
    assert report.verdict == "unsustainable"
    assert report.margins[2] < 0


def test_knife_edge_margin_equals_weight_gap():
    # the deviation margin is the potential-weight shortfall against the
    # host net of commuting distance, scaled by a fixed positive constant
    specs = (((0.3, 0.5), 1.0), ((0.7, 0.5), 1.0), ((0.5, 0.2), 0.8))
    geo = geo_with_sites(specs)
    sol = fixed_point_solve(geo, KNIFE, y_star=[0, 1])
    report = sustainability_check(sol, geo, KNIFE)
    pw = potential_weight(sol, geo, KNIFE, 2)
    host = report.host_ids[2]
    host_pos = list(sol.site_ids).index(host)
    d = math.hypot(0.5 - geo.sites[host].position[0],
                   0.2 - geo.sites[host].position[1])
    p = KNIFE
    st = (p.sigma - 1.0) / (2.0 * p.sigma - 1.0)
    scale = p.delta * st * p.sigma
    expected = -scale * (pw.value - sol.weights[host_pos] + d)
    assert report.margins[2] == pytest.approx(expected, rel=1e-10)


def test_knife_edge_flip_point_bisection():
    # productivity of the vacant site where the deviation margin crosses
    # zero, bracketed by bisection, agrees with direct margin evaluation;
    # the restricted solve ignores the vacant site's fundamentals, so one
    # solution serves every probe
    base = geo_with_sites(
        (((0.3, 0.5), 1.0), ((0.7, 0.5), 1.0), ((0.45, 0.5), 1.0)), n=48)
    sol = fixed_point_solve(base, KNIFE, y_star=[0, 1])

    def margin(prod):
        specs = (((0.3, 0.5), 1.0), ((0.7, 0.5), 1.0), ((0.45, 0.5), prod))
        geo = geo_with_sites(specs, n=48)
        return sustainability_check(sol, geo, KNIFE).margins[2]

    assert margin(0.2) > 0 > margin(1.0)
    flip = bracket_threshold(margin, 0.2, 1.0, tol=1e-4)
    assert abs(margin(flip)) < 1e-3
    assert margin(flip - 0.05) > 0 > margin(flip + 0.05)


def test_clone_margin_sits_on_boundary():
    specs = (((0.3, 0.5), 1.0), ((0.7, 0.5), 1.1), ((0.3, 0.5), 1.0))
    geo = geo_with_sites(specs)
    sol = fixed_point_solve(geo, KNIFE, y_star=[0, 1])
    report = sustainability_check(sol, geo, KNIFE)
    assert abs(report.margins[2]) < 1e-10
    assert report.verdict == "boundary"


# ---------------------------------------------------------------------------
# enumeration

def square_candidates(prod=1.0):
    return (((0.25, 0.25), prod), ((0.75, 0.25), prod),
            ((0.25, 0.75), prod), ((0.75, 0.75), prod))


def test_enumerate_pairs_exhibits_multiplicity():
    geo = geo_with_sites(square_candidates(), tau=0.3)
    p = ModelParams(sigma=5.0, alpha=0.3, beta=-0.5, delta=4.0)
    catalog = enumerate_urban_systems(geo, p, sizes=(2,), seed=1)
    assert catalog.strategy == "exhaustive"
    assert len(catalog.entries) >= 2
    active_sets = {frozenset(e.active_ids) for e in catalog.entries}
    assert len(active_sets) >= 2
    for e in catalog.entries:
        assert e.verdict == "sustainable"
        assert e.solution.residuals["weights"] < 1e-8


def test_enumerate_weak_spillovers_keeps_only_full_set():
    geo = geo_with_sites(THREE)
    catalog = enumerate_urban_systems(geo, WEAK, sizes=(2, 3), seed=0)
    assert all(len(e.active_ids) == 3 for e in catalog.entries)
    assert len(catalog.entries) == 1
    assert all(verdict == "unsustainable" for _, verdict in catalog.rejected)


def test_enumerate_singletons_under_strong_spillovers():
    geo = geo_with_sites(square_candidates(), tau=0.3)
    p = ModelParams(sigma=5.0, alpha=0.3, beta=-0.5, delta=4.0)
    catalog = enumerate_urban_systems(geo, p, sizes=(1,), seed=0)
    assert len(catalog.entries) == 4
    for e in catalog.entries:
        assert len(e.active_ids) == 1
        assert e.solution.labor.sum() == pytest.approx(1.0, rel=1e-10)


def test_enumerate_sampling_and_determinism():
    geo = geo_with_sites(square_candidates(), tau=0.3)
    p = ModelParams(sigma=5.0, alpha=0.3, beta=-0.5, delta=4.0)
    a = enumerate_urban_systems(geo, p, sizes=(1, 2), max_subsets=5, seed=42)
    b = enumerate_urban_systems(geo, p, sizes=(1, 2), max_subsets=5, seed=42)
    assert a.strategy == "sampled"
    assert [e.subset for e in a.entries] == [e.subset for e in b.entries]
    assert len(a.entries) <= 5


def test_enumerate_dedupes_identical_active_sets():
    # symmetric square at the knife edge: all-four solve from every size-4
    # subset is unique, so duplicates collapse
    geo = geo_with_sites(square_candidates(), tau=0.3)
    p = ModelParams(sigma=5.0, alpha=0.3, beta=-0.5, delta=4.0)
    catalog = enumerate_urban_systems(geo, p, sizes=(4, 4), seed=0)
    assert len(catalog.entries) == 1


# ---------------------------------------------------------------------------
# swap experiment

def test_identity_swap_is_noop():
    geo = geo_with_sites(THREE)
    report = site_swap_experiment(geo, STRONG, [0, 1], y_c=1, y_p=1)
    assert report.y_double_star == (0, 1)
    assert report.swap_distance == 0.0
    assert report.base_min_margin == report.swapped_min_margin


def test_small_offset_swap_keeps_margins_close():
    specs = (((0.2, 0.5), 1.0), ((0.8, 0.5), 1.0), ((0.81, 0.5), 1.0))
    geo = geo_with_sites(specs, tau=0.2)
    p = ModelParams(sigma=5.0, alpha=0.3, beta=-0.5, delta=6.0)
    report = site_swap_experiment(geo, p, [0, 1], y_c=1, y_p=2)
    assert report.base_converged and report.swapped_converged
    assert report.swap_distance == pytest.approx(0.01)
    assert report.productivity_ratio == pytest.approx(1.0)
    assert report.swapped_min_margin == pytest.approx(report.base_min_margin,
                                                      abs=0.25)


def test_swap_to_weak_far_site_fails_margins():
    specs = (((0.2, 0.5), 1.0), ((0.8, 0.5), 1.0), ((0.25, 0.55), 0.05))
    geo = geo_with_sites(specs, tau=0.2)
    p = ModelParams(sigma=5.0, alpha=0.3, beta=-0.5, delta=6.0)
    report = site_swap_experiment(geo, p, [0, 1], y_c=1, y_p=2)
    assert report.swapped_min_margin < 0
    assert report.swapped_min_margin < report.base_min_margin


def test_swap_validates_membership():
    geo = geo_with_sites(THREE)
    with pytest.raises(ValueError):
        site_swap_experiment(geo, STRONG, [0, 1], y_c=2, y_p=1)
    with pytest.raises(ValueError):
        site_swap_experiment(geo, STRONG, [0, 1], y_c=0, y_p=1)
