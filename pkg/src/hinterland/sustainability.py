"""Deviations toward vacant sites: potential weights and robustness checks.

A restricted-active-set equilibrium survives as a full spatial equilibrium
when no commuter group gains by defecting to a vacant site. Away from the
knife-edge spillover level the answer is parameter-determined; at the knife
edge it is a per-site inequality evaluated here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import logsumexp

from .analysis import KNIFE_EDGE_TOL, existence_margins
from .equilibrium import (
    EquilibriumSolution,
    ModelParams,
    SolverOptions,
    composite_params,
    fixed_point_solve,
    subset_geography,
)
from .errors import HinterlandError, SiteNotVacant
from .fields import Geography

STRONG_SPILLOVER = "strong_spillover"   # alpha above cutoff: deviations never pay
WEAK_SPILLOVER = "weak_spillover"       # alpha below cutoff: deviations always pay
KNIFE_EDGE = "knife_edge"

BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class PotentialWeight:
    """Weight a vacant site would offer an infinitesimal deviating group.

    Finite only at the knife edge; otherwise an infinite sentinel whose sign
    encodes the regime (``-inf`` when spillovers are strong enough that a
    deviation can never match incumbent real wages, ``+inf`` when any vacant
    site attracts).
    """

    value: float
    regime: str

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.value)


def _spillover_regime(params: ModelParams) -> str:
    cutoff = params.alpha_cutoff
    if abs(params.alpha - cutoff) <= KNIFE_EDGE_TOL:
        return KNIFE_EDGE
    return STRONG_SPILLOVER if params.alpha > cutoff else WEAK_SPILLOVER


def _geo_positions(geography: Geography):
    return {s.id: p for p, s in enumerate(geography.sites)}


def _active_positions(solution: EquilibriumSolution, geography: Geography):
    """Geography-frame indices and solution-frame indices of active sites."""
    pos = _geo_positions(geography)
    geo_idx, sol_idx = [], []
    for si, sid in enumerate(solution.site_ids):
        if sid in solution.active_ids:
            geo_idx.append(pos[sid])
            sol_idx.append(si)
    return np.array(geo_idx), np.array(sol_idx)


def _log_deviation_sum(solution: EquilibriumSolution, geography: Geography,
                       comp, q_geo_index: int) -> float:
    """log sum_j T_qj^(1-sigma) Abar_j^(st*sigma) B_j^(-1/beta) e^(s*g2*lam_j).

    The trade-access sum entering both the potential weight and the
    deviation inequality, taken over the solution's active sites.
    """
    geo_idx, sol_idx = _active_positions(solution, geography)
    sigma = comp.sigma
    st = comp.sigma_tilde
    beta = comp.effective.beta_eff
    s = comp.weight_scale
    T_row = geography.trade.values[q_geo_index, geo_idx]
    log_abar = np.log(geography.productivities[geo_idx])
    terms = ((1.0 - sigma) * np.log(T_row)
             + st * sigma * log_abar
             + (-1.0 / beta) * np.log(solution.B[sol_idx])
             + s * comp.gamma2 * solution.weights[sol_idx])
    return float(logsumexp(terms))


def potential_weight(solution: EquilibriumSolution, geography: Geography,
                     params: ModelParams, y_p: int) -> PotentialWeight:
    """Limit weight the vacant site ``y_p`` can sustain for a deviation."""
    if y_p in solution.active_ids:
        raise SiteNotVacant(f"site {y_p} is active in the solution")
    pos = _geo_positions(geography)
    if y_p not in pos:
        raise ValueError(f"unknown site id {y_p}")
    regime = _spillover_regime(params)
    if regime == STRONG_SPILLOVER:
        return PotentialWeight(value=-math.inf, regime=regime)
    if regime == WEAK_SPILLOVER:
        return PotentialWeight(value=math.inf, regime=regime)

    comp = composite_params(params, geography.productivities, geography.trade)
    st = comp.sigma_tilde
    sigma = comp.sigma
    beta = comp.effective.beta_eff
    p_geo = pos[y_p]
    log_sum = _log_deviation_sum(solution, geography, comp, p_geo)
    log_v_term = math.log(solution.welfare) / beta
    own = st * (sigma - 1.0) * math.log(geography.productivities[p_geo])
    lam_p = (log_v_term + own + log_sum) / (params.delta * st * sigma)
    return PotentialWeight(value=lam_p, regime=KNIFE_EDGE)


@dataclass(frozen=True)
class SustainabilityReport:
    """Three-valued robustness verdict with per-vacant-site margins.

    ``margins[site_id]`` is the gap by which the deviation inequality holds
    (positive = deviation unattractive); the verdict is "boundary" when some
    margin sits within BOUNDARY_TOL of zero and none is clearly violated.
    """

    verdict: str                 # "sustainable" | "unsustainable" | "boundary"
    regime: str
    margins: dict
    vacant_ids: tuple[int, ...]
    host_ids: dict


def sustainability_check(solution: EquilibriumSolution, geography: Geography,
                         params: ModelParams) -> SustainabilityReport:
    """Decide whether the restricted equilibrium survives vacant-site entry."""
    regime = _spillover_regime(params)
    pos = _geo_positions(geography)
    vacant = tuple(s.id for s in geography.sites
                   if s.id not in solution.active_ids)

    if regime == STRONG_SPILLOVER:
        return SustainabilityReport(
            verdict="sustainable", regime=regime,
            margins={v: math.inf for v in vacant}, vacant_ids=vacant,
            host_ids={})
    if regime == WEAK_SPILLOVER:
        verdict = "sustainable" if not vacant else "unsustainable"
        return SustainabilityReport(
            verdict=verdict, regime=regime,
            margins={v: -math.inf for v in vacant}, vacant_ids=vacant,
            host_ids={})

    comp = composite_params(params, geography.productivities, geography.trade)
    st = comp.sigma_tilde
    sigma = comp.sigma
    id_of_label = dict(enumerate(solution.site_ids))
    margins = {}
    hosts = {}
    for v in vacant:
        p_geo = pos[v]
        p_site = geography.sites[p_geo]
        iy, ix = geography.grid.cell_of(p_site.position)
        host_label = int(solution.tessellation.labels[iy, ix])
        host_id = id_of_label[host_label]
        hosts[v] = host_id
        host_geo = pos[host_id]
        host_site = geography.sites[host_geo]
        d_host = float(geography.system.distance(
            host_site, host_geo,
            np.array(p_site.position[0]), np.array(p_site.position[1])))
        log_S_p = _log_deviation_sum(solution, geography, comp, p_geo)
        log_S_i = _log_deviation_sum(solution, geography, comp, host_geo)
        lhs = (st * (sigma - 1.0)
               * math.log(geography.productivities[p_geo]
                          / geography.productivities[host_geo])
               + (log_S_p - log_S_i)
               + st * sigma * params.delta * d_host)
        margins[v] = -lhs

    if not margins:
        return SustainabilityReport(verdict="sustainable", regime=regime,
                                    margins={}, vacant_ids=(), host_ids={})
    worst = min(margins.values())
    if worst <= -BOUNDARY_TOL:
        verdict = "unsustainable"
    elif worst < BOUNDARY_TOL:
        verdict = "boundary"
    else:
        verdict = "sustainable"
    return SustainabilityReport(verdict=verdict, regime=regime,
                                margins=margins, vacant_ids=vacant,
                                host_ids=hosts)


# ---------------------------------------------------------------------------
# enumeration

@dataclass(frozen=True)
class CatalogEntry:
    subset: tuple[int, ...]
    active_ids: tuple[int, ...]
    solution: EquilibriumSolution
    verdict: str
    min_margin: float


@dataclass(frozen=True)
class EquilibriumCatalog:
    """Deduplicated sustainable equilibria found by subset enumeration."""

    entries: tuple[CatalogEntry, ...]
    rejected: tuple[tuple[tuple[int, ...], str], ...]   # (subset, verdict)
    failures: tuple[tuple[tuple[int, ...], str], ...]   # (subset, error)
    strategy: str
    seed: int
    sizes: tuple[int, ...]
    max_subsets: int


def _candidate_subsets(ids, sizes, max_subsets, seed):
    all_subsets = []
    for size in sorted(set(sizes)):
        if not 1 <= size <= len(ids):
            raise ValueError(f"subset size {size} out of range 1..{len(ids)}")
        all_subsets.extend(combinations(ids, size))
    if len(all_subsets) <= max_subsets:
        return all_subsets, "exhaustive"
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(all_subsets), size=max_subsets, replace=False)
    return [all_subsets[i] for i in sorted(pick)], "sampled"


def _is_duplicate(entry: CatalogEntry, kept: list, tol: float = 1e-6) -> bool:
    for other in kept:
        if set(other.active_ids) != set(entry.active_ids):
            continue
        order = [entry.solution.site_ids.index(sid)
                 for sid in other.solution.site_ids]
        a = entry.solution.weights[order]
        b = other.solution.weights
        if np.abs((a - a[0]) - (b - b[0])).max() < tol:
            return True
    return False


def enumerate_urban_systems(geography: Geography, params: ModelParams,
                            sizes=(2,), max_subsets: int = 256, seed: int = 0,
                            options: SolverOptions = SolverOptions()
                            ) -> EquilibriumCatalog:
    """Solve candidate active sets and keep the sustainable equilibria.

    Exhausts all subsets of the requested sizes up to ``max_subsets``, then
    falls back to seeded sampling; duplicates (same active set and weight
    differences within 1e-6) are dropped. Solver errors are recorded per
    subset, never fatal.
    """
    ids = tuple(s.id for s in geography.sites)
    subsets, strategy = _candidate_subsets(ids, sizes, max_subsets, seed)
    entries: list[CatalogEntry] = []
    rejected = []
    failures = []
    for subset in subsets:
        try:
            sol = fixed_point_solve(geography, params, y_star=subset,
                                    options=options)
            report = sustainability_check(sol, geography, params)
        except HinterlandError as e:
            failures.append((subset, f"{type(e).__name__}: {e}"))
            continue
        finite = [m for m in report.margins.values() if math.isfinite(m)]
        min_margin = min(finite) if finite else math.inf
        entry = CatalogEntry(subset=subset, active_ids=sol.active_ids,
                             solution=sol, verdict=report.verdict,
                             min_margin=min_margin)
        if report.verdict != "sustainable":
            rejected.append((subset, report.verdict))
            continue
        if not _is_duplicate(entry, entries):
            entries.append(entry)
    return EquilibriumCatalog(entries=tuple(entries), rejected=tuple(rejected),
                              failures=tuple(failures), strategy=strategy,
                              seed=seed, sizes=tuple(sorted(set(sizes))),
                              max_subsets=max_subsets)


# ---------------------------------------------------------------------------
# swap experiment

@dataclass(frozen=True)
class SwapReport:
    """Effect of replacing one active site with a nearby vacant one."""

    y_star: tuple[int, ...]
    y_double_star: tuple[int, ...]
    swap_distance: float
    productivity_ratio: float
    base_min_margin: float
    swapped_min_margin: float
    base_converged: bool
    swapped_converged: bool
    base_error: str
    swapped_error: str


def site_swap_experiment(geography: Geography, params: ModelParams, y_star,
                         y_c: int, y_p: int,
                         options: SolverOptions = SolverOptions()) -> SwapReport:
    """Rerun existence margins and the solver after swapping y_c for y_p."""
    y_star = tuple(y_star)
    if y_c not in y_star:
        raise ValueError(f"{y_c} is not in the active set {y_star}")
    if y_p != y_c and y_p in y_star:
        raise ValueError(f"{y_p} is already in the active set {y_star}")
    swapped = tuple(y_p if sid == y_c else sid for sid in y_star)

    pos = _geo_positions(geography)
    c_geo, p_geo = pos[y_c], pos[y_p]
    c_site = geography.sites[c_geo]
    p_site = geography.sites[p_geo]
    swap_distance = float(geography.system.distance(
        c_site, c_geo, np.array(p_site.position[0]), np.array(p_site.position[1])))
    ratio = float(geography.productivities[c_geo] / geography.productivities[p_geo])

    def run(subset):
        sub = subset_geography(geography, subset)
        margin = existence_margins(sub, params).min_margin
        try:
            fixed_point_solve(geography, params, y_star=subset, options=options)
            return margin, True, ""
        except HinterlandError as e:
            return margin, False, f"{type(e).__name__}: {e}"

    base_margin, base_ok, base_err = run(y_star)
    if swapped == y_star:
        swap_margin, swap_ok, swap_err = base_margin, base_ok, base_err
    else:
        swap_margin, swap_ok, swap_err = run(swapped)
    return SwapReport(
        y_star=y_star, y_double_star=swapped, swap_distance=swap_distance,
        productivity_ratio=ratio, base_min_margin=base_margin,
        swapped_min_margin=swap_margin, base_converged=base_ok,
        swapped_converged=swap_ok, base_error=base_err, swapped_error=swap_err)
